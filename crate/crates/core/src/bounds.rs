//! Numeric right-hand sides of the small-ball inequalities.
//!
//! The absolute constants are never fixed: every evaluator takes a
//! [`ConstantsConfig`], and the values are clipped to `[0, 1]` because they
//! bound probabilities.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::ln_beta;
use crate::spectral::{ceil_robust, SpectralData};

/// The unspecified absolute constants, as explicit parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConstantsConfig {
    /// `C` of the projection bound `(C M p)^d`.
    pub c_proj: f64,
    /// `C` shared by both anisotropic branches and the ε-form.
    pub c_aniso: f64,
    /// `C` of the tensorization lemma.
    pub c_tensor: f64,
    /// `c` of the tensorization corollary; admissible when `c ≤ 1/(3 C_tensor)`.
    pub c_tensor_small: f64,
    /// `C₀` of the removal step.
    pub c0_removal: f64,
    /// `c` of the characteristic-function decay for small `t`.
    pub c_decay: f64,
}

impl Default for ConstantsConfig {
    fn default() -> Self {
        ConstantsConfig {
            c_proj: 10.0,
            c_aniso: 10.0,
            c_tensor: 3.0,
            c_tensor_small: 1.0 / 9.0,
            c0_removal: 9.0,
            c_decay: 0.01,
        }
    }
}

impl ConstantsConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |name: &str, v: f64| Err(Error::InvalidArgument(format!("constant {name} = {v} out of range")));
        for (name, v) in [
            ("c_proj", self.c_proj),
            ("c_aniso", self.c_aniso),
            ("c_tensor", self.c_tensor),
            ("c0_removal", self.c0_removal),
        ] {
            if !(v >= 1.0) || !v.is_finite() {
                return bad(name, v);
            }
        }
        if !(self.c_tensor_small > 0.0 && self.c_tensor_small <= 1.0) {
            return bad("c_tensor_small", self.c_tensor_small);
        }
        if !(self.c_decay > 0.0) || !self.c_decay.is_finite() {
            return bad("c_decay", self.c_decay);
        }
        Ok(())
    }

    /// Human-readable warnings for constant combinations the proofs do not
    /// license.
    pub fn flags(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.c_tensor_small > 1.0 / (3.0 * self.c_tensor) {
            out.push(format!(
                "c_tensor_small = {} exceeds 1/(3 c_tensor) = {}",
                self.c_tensor_small,
                1.0 / (3.0 * self.c_tensor)
            ));
        }
        if self.c0_removal < 1.0 / self.c_tensor_small {
            out.push(format!(
                "c0_removal = {} is below 1/c_tensor_small = {}",
                self.c0_removal,
                1.0 / self.c_tensor_small
            ));
        }
        out
    }
}

/// Which inequality produced a [`BoundReport`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Proj,
    AnisoAllDelta,
    AnisoSmallDelta,
    EpsForm,
    Smallball2,
    Tensorization,
}

/// Inputs echoed into a report; absent fields do not apply to the branch.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r0: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    /// Radius the bound applies to, when the branch fixes one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    /// The constant used.
    pub constant: f64,
}

/// An evaluated bound `min(1, base^exponent)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub value: f64,
    pub base: f64,
    pub exponent: f64,
    pub branch: Branch,
    pub inputs: BoundInputs,
}

fn capped_power(base: f64, exponent: usize) -> f64 {
    if base >= 1.0 {
        1.0
    } else {
        base.powi(exponent as i32).clamp(0.0, 1.0)
    }
}

fn report(base: f64, exponent: usize, branch: Branch, inputs: BoundInputs) -> BoundReport {
    BoundReport {
        value: capped_power(base, exponent),
        base,
        exponent: exponent as f64,
        branch,
        inputs,
    }
}

fn check_probability(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("p = {p} is not a probability")))
    }
}

fn check_scale(m: f64) -> Result<()> {
    if m >= 1.0 && m.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("M = {m} must be at least 1")))
    }
}

/// Projection bound `L(PX, M t √d) ≤ (C M p)^d`.
pub fn bound_proj(p: f64, d: usize, m: f64, k: &ConstantsConfig) -> Result<BoundReport> {
    check_probability(p)?;
    check_scale(m)?;
    let inputs = BoundInputs { p: Some(p), m: Some(m), d: Some(d), constant: k.c_proj, ..Default::default() };
    Ok(report(k.c_proj * m * p, d, Branch::Proj, inputs))
}

/// Both anisotropic branches, each `None` when unavailable:
/// (i) `(C M p / √δ)^r` for `δ > 0`, (ii) `(C M p)^{r₀}` for `δ < 0.4`.
pub fn aniso_branches(
    p: f64,
    s: &SpectralData,
    m: f64,
    k: &ConstantsConfig,
) -> Result<(Option<BoundReport>, Option<BoundReport>)> {
    check_probability(p)?;
    check_scale(m)?;
    let r = s.stable_rank()?;
    let delta = s.delta()?;
    let base_inputs = BoundInputs {
        p: Some(p),
        m: Some(m),
        r: Some(r),
        delta: Some(delta),
        constant: k.c_aniso,
        ..Default::default()
    };
    let all = (delta > 0.0).then(|| {
        report(k.c_aniso * m * p / delta.sqrt(), r, Branch::AnisoAllDelta, base_inputs.clone())
    });
    let small = match s.r_zero() {
        Ok(r0) => Some(report(
            k.c_aniso * m * p,
            r0,
            Branch::AnisoSmallDelta,
            BoundInputs { r0: Some(r0), ..base_inputs },
        )),
        Err(Error::BranchUnavailable { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok((all, small))
}

/// The smaller of the admissible anisotropic branches (ties go to the
/// small-δ branch).
pub fn bound_aniso(p: f64, s: &SpectralData, m: f64, k: &ConstantsConfig) -> Result<BoundReport> {
    match aniso_branches(p, s, m, k)? {
        (Some(a), Some(b)) => Ok(if a.value < b.value { a } else { b }),
        (Some(a), None) => Ok(a),
        (None, Some(b)) => Ok(b),
        (None, None) => unreachable!("δ = 0 always admits the small-δ branch"),
    }
}

/// ε-form `(C/√ε · M p)^{⌈(1−ε) r⌉}`.
pub fn bound_eps(p: f64, s: &SpectralData, m: f64, eps: f64, k: &ConstantsConfig) -> Result<BoundReport> {
    check_probability(p)?;
    check_scale(m)?;
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidArgument(format!("eps = {eps} must lie in (0, 1)")));
    }
    let r = s.stable_rank()?;
    let exponent = ceil_robust((1.0 - eps) * r as f64);
    let inputs = BoundInputs {
        p: Some(p),
        m: Some(m),
        eps: Some(eps),
        r: Some(r),
        delta: Some(s.delta()?),
        constant: k.c_aniso,
        ..Default::default()
    };
    Ok(report(k.c_aniso / eps.sqrt() * m * p, exponent, Branch::EpsForm, inputs))
}

/// Density form `L(AX, τ ‖A‖) ≤ (C K τ)^{r(A)}`; the radius `τ ‖A‖` is
/// recorded in the report.
pub fn bound_smallball2(density_bound: f64, tau: f64, s: &SpectralData, k: &ConstantsConfig) -> Result<BoundReport> {
    if !(density_bound > 0.0) || !density_bound.is_finite() {
        return Err(Error::InvalidArgument(format!("K = {density_bound} must be finite and positive")));
    }
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("tau = {tau} must be positive")));
    }
    let r = s.stable_rank()?;
    let inputs = BoundInputs {
        k: Some(density_bound),
        tau: Some(tau),
        r: Some(r),
        radius: Some(tau * s.operator_norm()),
        constant: k.c_aniso,
        ..Default::default()
    };
    Ok(report(k.c_aniso * density_bound * tau, r, Branch::Smallball2, inputs))
}

/// `C M₁ M₂ / √(p+1) · t^{p+1}` (not clipped).
pub fn bound_tensorization(m1: f64, m2: f64, p: f64, t: f64, k: &ConstantsConfig) -> f64 {
    k.c_tensor * m1 * m2 / (p + 1.0).sqrt() * t.powf(p + 1.0)
}

/// `max_p B(p/2 + 1, 1/2) · √(p+1)` over `grid` equispaced points of
/// `[0, p_max]`: the smallest constant admissible in the beta step of the
/// tensorization lemma on that range.
pub fn beta_constant_scan(p_max: f64, grid: usize) -> Result<f64> {
    if !(p_max > 0.0) || grid == 0 {
        return Err(Error::InvalidArgument("beta scan needs p_max > 0 and a nonempty grid".into()));
    }
    let step = if grid > 1 { p_max / (grid - 1) as f64 } else { 0.0 };
    Ok((0..grid)
        .map(|i| {
            let p = i as f64 * step;
            (ln_beta(0.5 * p + 1.0, 0.5) + 0.5 * (p + 1.0).ln()).exp()
        })
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Two-regime envelope of the decreasing rearrangement of `|φ_X|`:
/// `1 − c (t/K)²` below `2πK`, `√(2πK/t)` above; clipped to `[0, 1]`.
pub fn char_decay_envelope(density_bound: f64, t: f64, k: &ConstantsConfig) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("t = {t} must be positive")));
    }
    if !(density_bound > 0.0) {
        return Err(Error::InvalidArgument(format!("K = {density_bound} must be positive")));
    }
    let v = if t < 2.0 * PI * density_bound {
        1.0 - k.c_decay * (t / density_bound).powi(2)
    } else {
        (2.0 * PI * density_bound / t).sqrt()
    };
    Ok(v.clamp(0.0, 1.0))
}

/// Covering factor `(3M)^d` relating `L(Z, Mt)` to `L(Z, t)` in dimension `d`.
pub fn regularity_factor(m: f64, d: usize) -> Result<f64> {
    check_scale(m)?;
    Ok((3.0 * m).powi(d as i32))
}
