//! Super-level sets of `|φ_X|` and its non-increasing rearrangement.

use serde::{Deserialize, Serialize};

use crate::distributions::CoordinateDistribution;
use crate::error::{Error, Result};
use crate::numeric::bisect;

/// Level-set measures of `|φ_X|` on the half-line `[0, ∞)`.
///
/// `measures[k]` is the grid measure of `{τ ∈ [0, T_max] : |φ(τ)| > levels[k]}`
/// and `tails[k]` bounds the measure of the same set beyond `T_max`. Levels
/// are strictly decreasing, so both columns are non-decreasing in `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RearrangementProfile {
    pub levels: Vec<f64>,
    pub measures: Vec<f64>,
    pub tails: Vec<f64>,
    pub t_max: f64,
    pub step: f64,
}

/// Midpoint grid spacing: at most `1e-3 · T_max` and at most `1e-3`.
fn grid_step(t_max: f64) -> f64 {
    (1e-3 * t_max).min(1e-3)
}

/// End of the region beyond `t_max` where the decreasing envelope still
/// exceeds `s`; `t_max` when it never does.
fn envelope_reach(dist: &CoordinateDistribution, t_max: f64, s: f64) -> Result<f64> {
    let env = |t: f64| dist.char_envelope(t).expect("checked by caller");
    if env(t_max) <= s {
        return Ok(t_max);
    }
    let mut hi = 2.0 * t_max.max(1.0);
    while env(hi) > s {
        hi *= 2.0;
        if !hi.is_finite() || hi > 1e15 {
            return Err(Error::Unsupported(format!("characteristic function tail does not fall below {s}")));
        }
    }
    Ok(bisect(|t| env(t) - s, t_max, hi))
}

/// Measures `|φ_X|` above each level on a midpoint grid over `[0, T_max]`,
/// plus the envelope tail beyond `T_max`.
///
/// Requires a law without atoms (an integrably decaying `|φ|`).
pub fn rearrangement_profile(
    dist: &CoordinateDistribution,
    t_max: f64,
    levels: &[f64],
) -> Result<RearrangementProfile> {
    dist.validate()?;
    if dist.char_envelope(1.0).is_none() {
        return Err(Error::Unsupported("characteristic function does not decay (law has atoms)".into()));
    }
    if !(t_max > 0.0) || !t_max.is_finite() {
        return Err(Error::InvalidArgument(format!("T_max must be positive, got {t_max}")));
    }
    if levels.is_empty() || levels.iter().any(|s| !(*s > 0.0 && *s <= 1.0)) {
        return Err(Error::InvalidArgument("levels must be a nonempty grid in (0, 1]".into()));
    }
    let mut levels = levels.to_vec();
    levels.sort_by(|a, b| b.total_cmp(a));
    levels.dedup();

    let step = grid_step(t_max);
    let cells = (t_max / step).ceil() as usize;
    let step = t_max / cells as f64;
    let mut values: Vec<f64> = (0..cells).map(|k| dist.char_fn((k as f64 + 0.5) * step).norm()).collect();
    values.sort_by(|a, b| a.total_cmp(b));

    let mut measures = Vec::with_capacity(levels.len());
    let mut tails = Vec::with_capacity(levels.len());
    for &s in &levels {
        let above = values.len() - values.partition_point(|&v| v <= s);
        measures.push(above as f64 * step);
        tails.push(envelope_reach(dist, t_max, s)? - t_max);
    }
    Ok(RearrangementProfile { levels, measures, tails, t_max, step })
}

impl RearrangementProfile {
    /// Upper estimate of `λ{τ ≥ 0 : |φ(τ)| ≥ s}`, read at the largest grid
    /// level not above `s`; `None` if `s` is below the whole grid.
    pub fn half_line_measure(&self, s: f64) -> Option<f64> {
        let k = self.levels.iter().position(|&l| l <= s)?;
        Some(self.measures[k] + self.tails[k])
    }

    /// Same set on the whole line; `|φ|` is even.
    pub fn whole_line_measure(&self, s: f64) -> Option<f64> {
        self.half_line_measure(s).map(|m| 2.0 * m)
    }

    /// `|φ|*(t)` on the half-line: the smallest grid level whose super-level
    /// set has measure at most `t`. Rounds up to the grid; `1` if none does.
    pub fn half_line(&self, t: f64) -> f64 {
        let mut best = 1.0;
        for (k, &s) in self.levels.iter().enumerate() {
            if self.measures[k] + self.tails[k] <= t {
                best = s;
            } else {
                break;
            }
        }
        best
    }

    /// `|φ|*(t)` with `|φ|` rearranged over the whole line.
    pub fn whole_line(&self, t: f64) -> f64 {
        self.half_line(0.5 * t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid(k: usize) -> Vec<f64> {
        (1..=k).map(|i| i as f64 / k as f64).collect()
    }

    #[test]
    fn gaussian_profile_is_its_own_rearrangement() {
        let g = CoordinateDistribution::gaussian(0.0, 1.0).unwrap();
        let prof = rearrangement_profile(&g, 10.0, &grid(400)).unwrap();
        for t in [0.1f64, 0.5, 1.0, 1.7, 2.5, 3.0] {
            let exact = (-0.5 * t * t).exp();
            let got = prof.half_line(t);
            // grid level above the true value, within one level spacing plus grid error
            assert!(got >= exact - 1e-3 && got <= exact + 1.0 / 400.0 + 1e-2, "t={t}: {got} vs {exact}");
        }
    }

    #[test]
    fn uniform_rearrangement_obeys_decay() {
        let u = CoordinateDistribution::uniform(-0.5, 0.5).unwrap();
        let prof = rearrangement_profile(&u, 200.0 * PI, &grid(1000)).unwrap();
        for k in 0..50 {
            let t = 2.0 * PI + k as f64 * 2.0 * PI;
            assert!(prof.whole_line(t) <= (2.0 * PI / t).sqrt(), "t={t}");
            assert!(prof.half_line(t) <= (2.0 * PI / t).sqrt(), "t={t}");
        }
        let m = prof.whole_line_measure(0.75f64.sqrt()).unwrap();
        assert!(m <= 8.0 * PI / 3.0, "{m}");
    }

    #[test]
    fn laws_with_atoms_are_rejected() {
        let r = CoordinateDistribution::rademacher();
        assert!(matches!(rearrangement_profile(&r, 10.0, &grid(10)), Err(Error::Unsupported(_))));
    }

    #[test]
    fn measures_are_monotone_and_bounded() {
        let mix = CoordinateDistribution::mixture(vec![
            (0.5, CoordinateDistribution::uniform(-1.0, 1.0).unwrap()),
            (0.5, CoordinateDistribution::triangular(0.3, 1.0).unwrap()),
        ])
        .unwrap();
        let prof = rearrangement_profile(&mix, 50.0, &grid(200)).unwrap();
        for w in prof.measures.windows(2) {
            assert!(w[0] <= w[1]);
        }
        assert!(prof.measures.iter().all(|&m| m <= prof.t_max + 1e-12));
        assert!(prof.tails.iter().all(|&m| m >= 0.0));
    }

    #[test]
    fn unit_density_laws_satisfy_the_plancherel_bound() {
        let laws = [
            CoordinateDistribution::uniform(-0.5, 0.5).unwrap(),
            CoordinateDistribution::triangular(0.0, 1.0).unwrap(),
            CoordinateDistribution::gaussian(0.0, 1.0 / (2.0 * PI).sqrt()).unwrap(),
        ];
        for law in &laws {
            assert!((law.density_bound().value() - 1.0).abs() < 1e-12);
            let prof = rearrangement_profile(law, 100.0, &grid(500)).unwrap();
            assert!(prof.whole_line_measure(0.75f64.sqrt()).unwrap() <= 8.0 * PI / 3.0);
        }
    }
}
