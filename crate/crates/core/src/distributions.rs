//! Coordinate laws for the independent entries `X_1, …, X_n`.
//!
//! Every supported kind carries the exact one-dimensional quantities the
//! bounds consume: the essential supremum `K` of the density, the
//! concentration function `L(X, t) = max_u P(|X − u| ≤ t)`, and a closed-form
//! characteristic function.

use std::f64::consts::{PI, SQRT_2};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use libm::erf;

use crate::error::{Error, Result};
use crate::numeric::{bisect, sinc};

/// Tolerance on probability and weight sums.
pub const SUM_TOLERANCE: f64 = 1e-12;

/// One atom of a discrete law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub value: f64,
    pub prob: f64,
}

/// A weighted component of a mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub weight: f64,
    pub dist: CoordinateDistribution,
}

/// The law of a single coordinate `X_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoordinateDistribution {
    /// Uniform on `[a, b]`.
    Uniform { a: f64, b: f64 },
    Gaussian { mean: f64, sd: f64 },
    Discrete { atoms: Vec<Atom> },
    /// Symmetric triangle on `[center − halfwidth, center + halfwidth]`,
    /// i.e. the sum of two independent uniforms of width `halfwidth`.
    Triangular { center: f64, halfwidth: f64 },
    Mixture { components: Vec<Component> },
}

/// Essential supremum of a coordinate density; `+∞` for laws with atoms.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct DensityBound(pub f64);

impl DensityBound {
    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }
}

/// Primitive pieces a law decomposes into.
#[derive(Debug, Clone, Copy)]
enum Leaf {
    Uniform(f64, f64),
    Gaussian(f64, f64),
    Triangular(f64, f64),
    Atom(f64),
}

impl Leaf {
    fn cdf(self, x: f64) -> f64 {
        match self {
            Leaf::Uniform(a, b) => ((x - a) / (b - a)).clamp(0.0, 1.0),
            Leaf::Gaussian(m, s) => 0.5 * (1.0 + erf((x - m) / (s * SQRT_2))),
            Leaf::Triangular(c, h) => {
                let z = (x - c) / h;
                if z <= -1.0 {
                    0.0
                } else if z <= 0.0 {
                    0.5 * (1.0 + z) * (1.0 + z)
                } else if z < 1.0 {
                    1.0 - 0.5 * (1.0 - z) * (1.0 - z)
                } else {
                    1.0
                }
            }
            Leaf::Atom(v) => {
                if x >= v {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// `P(X < x)`.
    fn cdf_left(self, x: f64) -> f64 {
        match self {
            Leaf::Atom(v) => {
                if x > v {
                    1.0
                } else {
                    0.0
                }
            }
            _ => self.cdf(x),
        }
    }

    /// Density of the absolutely continuous part.
    fn density(self, x: f64) -> f64 {
        match self {
            Leaf::Uniform(a, b) => {
                if x >= a && x <= b {
                    1.0 / (b - a)
                } else {
                    0.0
                }
            }
            Leaf::Gaussian(m, s) => {
                let z = (x - m) / s;
                (-0.5 * z * z).exp() / (s * (2.0 * PI).sqrt())
            }
            Leaf::Triangular(c, h) => ((1.0 - (x - c).abs() / h) / h).max(0.0),
            Leaf::Atom(_) => 0.0,
        }
    }

    fn breakpoints(self, out: &mut Vec<f64>) {
        match self {
            Leaf::Uniform(a, b) => out.extend([a, b]),
            Leaf::Triangular(c, h) => out.extend([c - h, c, c + h]),
            Leaf::Atom(v) => out.push(v),
            Leaf::Gaussian(m, s) => {
                // not breakpoints, only a subdivision that keeps each
                // sub-interval free of more than one stationary point of the window
                for k in -8..=8 {
                    out.push(m + k as f64 * s);
                }
            }
        }
    }
}

impl CoordinateDistribution {
    pub fn uniform(a: f64, b: f64) -> Result<Self> {
        let d = CoordinateDistribution::Uniform { a, b };
        d.validate()?;
        Ok(d)
    }

    /// Uniform on `[-1/2, 1/2]`.
    pub fn unit_uniform() -> Self {
        CoordinateDistribution::Uniform { a: -0.5, b: 0.5 }
    }

    pub fn gaussian(mean: f64, sd: f64) -> Result<Self> {
        let d = CoordinateDistribution::Gaussian { mean, sd };
        d.validate()?;
        Ok(d)
    }

    pub fn triangular(center: f64, halfwidth: f64) -> Result<Self> {
        let d = CoordinateDistribution::Triangular { center, halfwidth };
        d.validate()?;
        Ok(d)
    }

    /// Discrete law from `(value, prob)` pairs.
    pub fn discrete(pairs: &[(f64, f64)]) -> Result<Self> {
        let d = CoordinateDistribution::Discrete {
            atoms: pairs.iter().map(|&(value, prob)| Atom { value, prob }).collect(),
        };
        d.validate()?;
        Ok(d)
    }

    /// Symmetric ±1 law.
    pub fn rademacher() -> Self {
        CoordinateDistribution::Discrete {
            atoms: vec![Atom { value: -1.0, prob: 0.5 }, Atom { value: 1.0, prob: 0.5 }],
        }
    }

    pub fn mixture(parts: Vec<(f64, CoordinateDistribution)>) -> Result<Self> {
        let d = CoordinateDistribution::Mixture {
            components: parts.into_iter().map(|(weight, dist)| Component { weight, dist }).collect(),
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidDistribution(m));
        match self {
            CoordinateDistribution::Uniform { a, b } => {
                if !(a.is_finite() && b.is_finite()) || b <= a {
                    return bad(format!("uniform needs finite a < b, got [{a}, {b}]"));
                }
            }
            CoordinateDistribution::Gaussian { mean, sd } => {
                if !mean.is_finite() || !sd.is_finite() || *sd <= 0.0 {
                    return bad(format!("gaussian needs sd > 0, got {sd}"));
                }
            }
            CoordinateDistribution::Triangular { center, halfwidth } => {
                if !center.is_finite() || !halfwidth.is_finite() || *halfwidth <= 0.0 {
                    return bad(format!("triangular needs halfwidth > 0, got {halfwidth}"));
                }
            }
            CoordinateDistribution::Discrete { atoms } => {
                if atoms.is_empty() {
                    return bad("discrete law without atoms".into());
                }
                if atoms.iter().any(|a| !a.value.is_finite() || !(a.prob > 0.0)) {
                    return bad("discrete atoms need finite values and positive probabilities".into());
                }
                let total: f64 = atoms.iter().map(|a| a.prob).sum();
                if (total - 1.0).abs() > SUM_TOLERANCE {
                    return bad(format!("discrete probabilities sum to {total}"));
                }
            }
            CoordinateDistribution::Mixture { components } => {
                if components.is_empty() {
                    return bad("mixture without components".into());
                }
                if components.iter().any(|c| !(c.weight > 0.0)) {
                    return bad("mixture weights must be positive".into());
                }
                let total: f64 = components.iter().map(|c| c.weight).sum();
                if (total - 1.0).abs() > SUM_TOLERANCE {
                    return bad(format!("mixture weights sum to {total}"));
                }
                for c in components {
                    c.dist.validate()?;
                }
            }
        }
        Ok(())
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, CoordinateDistribution::Discrete { .. })
    }

    /// True when the law has no atoms.
    pub fn is_absolutely_continuous(&self) -> bool {
        match self {
            CoordinateDistribution::Discrete { .. } => false,
            CoordinateDistribution::Mixture { components } => {
                components.iter().all(|c| c.dist.is_absolutely_continuous())
            }
            _ => true,
        }
    }

    /// Atoms of a discrete law, `None` for every other kind.
    pub fn atoms(&self) -> Option<&[Atom]> {
        match self {
            CoordinateDistribution::Discrete { atoms } => Some(atoms),
            _ => None,
        }
    }

    /// Closed support interval for finitely supported kinds.
    pub fn support(&self) -> Option<(f64, f64)> {
        match self {
            CoordinateDistribution::Uniform { a, b } => Some((*a, *b)),
            CoordinateDistribution::Gaussian { .. } => None,
            CoordinateDistribution::Triangular { center, halfwidth } => {
                Some((center - halfwidth, center + halfwidth))
            }
            CoordinateDistribution::Discrete { atoms } => {
                let lo = atoms.iter().map(|a| a.value).fold(f64::INFINITY, f64::min);
                let hi = atoms.iter().map(|a| a.value).fold(f64::NEG_INFINITY, f64::max);
                Some((lo, hi))
            }
            CoordinateDistribution::Mixture { components } => {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for c in components {
                    let (l, h) = c.dist.support()?;
                    lo = lo.min(l);
                    hi = hi.max(h);
                }
                Some((lo, hi))
            }
        }
    }

    /// A point of maximal density (or maximal atom mass). Used as the default
    /// candidate center for Monte Carlo concentration estimates.
    pub fn mode(&self) -> f64 {
        match self {
            CoordinateDistribution::Uniform { a, b } => 0.5 * (a + b),
            CoordinateDistribution::Gaussian { mean, .. } => *mean,
            CoordinateDistribution::Triangular { center, .. } => *center,
            CoordinateDistribution::Discrete { atoms } => {
                atoms
                    .iter()
                    .fold((f64::NAN, f64::NEG_INFINITY), |best, a| {
                        if a.prob > best.1 {
                            (a.value, a.prob)
                        } else {
                            best
                        }
                    })
                    .0
            }
            CoordinateDistribution::Mixture { .. } => {
                let leaves = self.leaves();
                let mut best = (f64::NAN, f64::NEG_INFINITY);
                let atoms_present = leaves.iter().any(|(_, l)| matches!(l, Leaf::Atom(_)));
                for &(_, leaf) in &leaves {
                    let x = match leaf {
                        Leaf::Uniform(a, b) => 0.5 * (a + b),
                        Leaf::Gaussian(m, _) | Leaf::Triangular(m, _) | Leaf::Atom(m) => m,
                    };
                    let score = if atoms_present {
                        leaves
                            .iter()
                            .map(|(w, l)| w * (l.cdf(x) - l.cdf_left(x)))
                            .sum::<f64>()
                    } else {
                        leaves.iter().map(|(w, l)| w * l.density(x)).sum::<f64>()
                    };
                    if score > best.1 {
                        best = (x, score);
                    }
                }
                best.0
            }
        }
    }

    fn leaves(&self) -> Vec<(f64, Leaf)> {
        let mut out = Vec::new();
        self.collect_leaves(1.0, &mut out);
        out
    }

    fn collect_leaves(&self, w: f64, out: &mut Vec<(f64, Leaf)>) {
        match self {
            CoordinateDistribution::Uniform { a, b } => out.push((w, Leaf::Uniform(*a, *b))),
            CoordinateDistribution::Gaussian { mean, sd } => out.push((w, Leaf::Gaussian(*mean, *sd))),
            CoordinateDistribution::Triangular { center, halfwidth } => {
                out.push((w, Leaf::Triangular(*center, *halfwidth)))
            }
            CoordinateDistribution::Discrete { atoms } => {
                out.extend(atoms.iter().map(|a| (w * a.prob, Leaf::Atom(a.value))))
            }
            CoordinateDistribution::Mixture { components } => {
                for c in components {
                    c.dist.collect_leaves(w * c.weight, out);
                }
            }
        }
    }

    /// `P(X ≤ x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        self.leaves().iter().map(|(w, l)| w * l.cdf(x)).sum()
    }

    /// Essential supremum of the density. Mixtures report the weighted sum of
    /// their components' bounds, which is an upper bound.
    pub fn density_bound(&self) -> DensityBound {
        DensityBound(match self {
            CoordinateDistribution::Uniform { a, b } => 1.0 / (b - a),
            CoordinateDistribution::Gaussian { sd, .. } => 1.0 / (sd * (2.0 * PI).sqrt()),
            CoordinateDistribution::Triangular { halfwidth, .. } => 1.0 / halfwidth,
            CoordinateDistribution::Discrete { .. } => f64::INFINITY,
            CoordinateDistribution::Mixture { components } => components
                .iter()
                .map(|c| c.weight * c.dist.density_bound().0)
                .sum(),
        })
    }

    /// Exact concentration function `L(X, t) = max_u P(|X − u| ≤ t)`.
    pub fn concentration(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::NegativeRadius(t));
        }
        Ok(match self {
            CoordinateDistribution::Uniform { a, b } => (2.0 * t / (b - a)).min(1.0),
            CoordinateDistribution::Gaussian { sd, .. } => erf(t / (sd * SQRT_2)).min(1.0),
            CoordinateDistribution::Triangular { halfwidth, .. } => {
                if t >= *halfwidth {
                    1.0
                } else {
                    let r = 1.0 - t / halfwidth;
                    1.0 - r * r
                }
            }
            CoordinateDistribution::Discrete { atoms } => {
                let mut pts: Vec<(f64, f64)> = atoms.iter().map(|a| (a.value, a.prob)).collect();
                window_max(&mut pts, t)
            }
            CoordinateDistribution::Mixture { .. } => self.window_sweep(t),
        })
    }

    /// Breakpoint sweep of `g(u) = P(X ∈ [u − t, u + t])` for mixtures.
    ///
    /// Between consecutive candidates `b ± t` no atom or density breakpoint
    /// crosses the window edges, so `g` is smooth there and its interior
    /// maxima are zeros of `g'(u) = f(u + t) − f(u − t)`.
    fn window_sweep(&self, t: f64) -> f64 {
        let leaves = self.leaves();
        let mass = |u: f64| -> f64 {
            // atoms on a window edge are caught up to a rounding allowance
            let e = 1e-12 * (1.0 + u.abs() + t);
            leaves
                .iter()
                .map(|(w, l)| {
                    let e = if matches!(l, Leaf::Atom(_)) { e } else { 0.0 };
                    w * (l.cdf(u + t + e) - l.cdf_left(u - t - e))
                })
                .sum::<f64>()
                .min(1.0)
        };
        let slope = |u: f64| -> f64 {
            leaves
                .iter()
                .map(|(w, l)| w * (l.density(u + t) - l.density(u - t)))
                .sum::<f64>()
        };
        let mut bps = Vec::new();
        for (_, l) in &leaves {
            l.breakpoints(&mut bps);
        }
        let mut cand: Vec<f64> = bps.iter().flat_map(|&b| [b - t, b + t]).collect();
        cand.sort_by(f64::total_cmp);
        cand.dedup();

        let mut best = cand.iter().map(|&u| mass(u)).fold(0.0, f64::max);
        let has_density = leaves.iter().any(|(_, l)| !matches!(l, Leaf::Atom(_)));
        if has_density && t > 0.0 {
            const SUB: usize = 16;
            for w in cand.windows(2) {
                let (lo, hi) = (w[0], w[1]);
                if hi - lo <= 0.0 {
                    continue;
                }
                // sample strictly inside the piece; slope is continuous there
                let step = (hi - lo) / SUB as f64;
                let mut prev_u = lo + 1e-12 * step;
                let mut prev_s = slope(prev_u);
                for k in 1..=SUB {
                    let u = if k == SUB { hi - 1e-12 * step } else { lo + k as f64 * step };
                    let s = slope(u);
                    if prev_s > 0.0 && s <= 0.0 {
                        let root = bisect(&slope, prev_u, u);
                        best = best.max(mass(root));
                    }
                    prev_u = u;
                    prev_s = s;
                }
                best = best.max(mass(0.5 * (lo + hi)));
            }
        }
        best.min(1.0)
    }

    /// Closed-form characteristic function `φ_X(t) = E e^{itX}`.
    pub fn char_fn(&self, t: f64) -> Complex64 {
        match self {
            CoordinateDistribution::Uniform { a, b } => {
                Complex64::from_polar(sinc(0.5 * t * (b - a)), 0.5 * t * (a + b))
            }
            CoordinateDistribution::Gaussian { mean, sd } => {
                Complex64::from_polar((-0.5 * sd * sd * t * t).exp(), t * mean)
            }
            CoordinateDistribution::Triangular { center, halfwidth } => {
                let s = sinc(0.5 * t * halfwidth);
                Complex64::from_polar(s * s, t * center)
            }
            CoordinateDistribution::Discrete { atoms } => atoms
                .iter()
                .map(|a| Complex64::from_polar(a.prob, t * a.value))
                .sum(),
            CoordinateDistribution::Mixture { components } => components
                .iter()
                .map(|c| c.dist.char_fn(t) * c.weight)
                .sum(),
        }
    }

    /// Pointwise upper envelope of `|φ_X(t)|` for `t > 0` that decays
    /// integrably, when one is available (no atoms).
    pub fn char_envelope(&self, t: f64) -> Option<f64> {
        let t = t.abs();
        match self {
            CoordinateDistribution::Uniform { a, b } => Some((2.0 / (t * (b - a))).min(1.0)),
            CoordinateDistribution::Gaussian { sd, .. } => Some((-0.5 * sd * sd * t * t).exp()),
            CoordinateDistribution::Triangular { halfwidth, .. } => {
                let e = (2.0 / (t * halfwidth)).min(1.0);
                Some(e * e)
            }
            CoordinateDistribution::Discrete { .. } => None,
            CoordinateDistribution::Mixture { components } => {
                let mut total = 0.0;
                for c in components {
                    total += c.weight * c.dist.char_envelope(t)?;
                }
                Some(total.min(1.0))
            }
        }
    }

    /// One draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            CoordinateDistribution::Uniform { a, b } => a + (b - a) * rng.gen::<f64>(),
            CoordinateDistribution::Gaussian { mean, sd } => {
                let z: f64 = rng.sample(StandardNormal);
                mean + sd * z
            }
            CoordinateDistribution::Triangular { center, halfwidth } => {
                let u: f64 = rng.gen();
                let v: f64 = rng.gen();
                center + halfwidth * (u + v - 1.0)
            }
            CoordinateDistribution::Discrete { atoms } => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for a in atoms {
                    acc += a.prob;
                    if u < acc {
                        return a.value;
                    }
                }
                atoms[atoms.len() - 1].value
            }
            CoordinateDistribution::Mixture { components } => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for c in components {
                    acc += c.weight;
                    if u < acc {
                        return c.dist.sample(rng);
                    }
                }
                components[components.len() - 1].dist.sample(rng)
            }
        }
    }
}

/// `a ≤ b` up to a relative rounding allowance.
pub(crate) fn le_tol(a: f64, b: f64) -> bool {
    a <= b + 1e-12 * (1.0 + b.abs())
}

/// Maximal mass of a closed window of length `2t` over weighted points on the
/// line. Sorts `pts` in place.
pub(crate) fn window_max(pts: &mut [(f64, f64)], t: f64) -> f64 {
    pts.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut best = 0.0f64;
    let mut mass = 0.0;
    let mut j = 0;
    for i in 0..pts.len() {
        if i > 0 {
            mass -= pts[i - 1].1;
        }
        if j < i {
            j = i;
            mass = 0.0;
        }
        while j < pts.len() && le_tol(pts[j].0 - pts[i].0, 2.0 * t) {
            mass += pts[j].1;
            j += 1;
        }
        best = best.max(mass);
    }
    best.min(1.0)
}
