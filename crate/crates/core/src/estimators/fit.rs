//! Empirical calibration of the absolute constant of a small-ball bound.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::mc::{mc_concentration, mode_image};
use super::stream::RandomStream;
use crate::distributions::CoordinateDistribution;
use crate::error::{Error, Result};
use crate::oracles::{exact_small_ball_multi, DiscreteProductLaw};
use crate::spectral::{ceil_robust, svd_dense};

/// One corpus entry: the law `A X` at unit radius `t` with scale `M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitCase {
    pub matrix: DMatrix<f64>,
    pub coords: Vec<CoordinateDistribution>,
    pub t: f64,
    pub m: f64,
}

/// How the left-hand side `L(AX, radius)` is measured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Evaluator {
    Exact,
    /// Point estimate of the best candidate; `A · mode` when `centers` is
    /// `None`.
    MonteCarlo {
        samples: usize,
        stream: RandomStream,
        centers: Option<Vec<Vec<f64>>>,
    },
}

/// Which inequality is being fitted. Determines the radius and exponent:
///
/// | rule              | radius           | bound                       |
/// |-------------------|------------------|-----------------------------|
/// | `Proj`            | `M t √d`         | `(C M p)^d`                 |
/// | `AnisoAllDelta`   | `M t ‖A‖_HS`     | `(C M p / √δ)^r`            |
/// | `AnisoSmallDelta` | `M t ‖A‖_HS`     | `(C M p)^{r₀}`              |
/// | `Eps(ε)`          | `M t ‖A‖_HS`     | `(C M p / √ε)^{⌈(1−ε)r⌉}`   |
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExponentRule {
    Proj,
    AnisoAllDelta,
    AnisoSmallDelta,
    Eps(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseFit {
    pub p: f64,
    pub radius: f64,
    pub measured: f64,
    pub exponent: usize,
    /// Smallest constant this case admits.
    pub required: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub constant: f64,
    pub argmax: usize,
    pub cases: Vec<CaseFit>,
}

/// Smallest `C` with `L ≤ bound(C)` on every case, and the case attaining it.
pub fn fit_constant(corpus: &[FitCase], evaluator: &Evaluator, rule: ExponentRule) -> Result<FitResult> {
    if corpus.is_empty() {
        return Err(Error::InvalidArgument("fit corpus is empty".into()));
    }
    let cases = corpus
        .iter()
        .enumerate()
        .map(|(i, c)| fit_case(i, c, evaluator, rule))
        .collect::<Result<Vec<_>>>()?;
    let (argmax, best) = cases
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, c)| if c.required > acc.1 { (i, c.required) } else { acc });
    Ok(FitResult { constant: best, argmax, cases })
}

fn fit_case(index: usize, case: &FitCase, evaluator: &Evaluator, rule: ExponentRule) -> Result<CaseFit> {
    if !(case.t >= 0.0) {
        return Err(Error::NegativeRadius(case.t));
    }
    if !(case.m >= 1.0) {
        return Err(Error::InvalidArgument(format!("M = {} must be at least 1", case.m)));
    }
    let p = case
        .coords
        .iter()
        .map(|c| c.concentration(case.t))
        .try_fold(0.0f64, |acc, v| v.map(|v| acc.max(v)))?;
    let spec = svd_dense(&case.matrix);
    let d = spec.rank();
    if d == 0 {
        return Err(Error::ZeroMatrix);
    }
    let (radius, exponent, shrink) = match rule {
        ExponentRule::Proj => (case.m * case.t * (d as f64).sqrt(), d, 1.0),
        ExponentRule::AnisoAllDelta => {
            let delta = spec.delta()?;
            (case.m * case.t * spec.hs_norm(), spec.stable_rank()?, delta.sqrt())
        }
        ExponentRule::AnisoSmallDelta => (case.m * case.t * spec.hs_norm(), spec.r_zero()?, 1.0),
        ExponentRule::Eps(eps) => {
            if !(eps > 0.0 && eps < 1.0) {
                return Err(Error::InvalidArgument(format!("eps = {eps} must lie in (0, 1)")));
            }
            let r = spec.stable_rank()?;
            (case.m * case.t * spec.hs_norm(), ceil_robust((1.0 - eps) * r as f64), eps.sqrt())
        }
    };
    let measured = measure(case, radius, evaluator)?;
    let required = required_constant(measured, p, case.m, exponent, shrink)
        .ok_or_else(|| Error::Infeasible(format!("case {index}: p = 0 but measured L = {measured}")))?;
    Ok(CaseFit { p, radius, measured, exponent, required })
}

/// Smallest `C` with `measured ≤ (C M p / shrink)^exponent`; `None` when no
/// constant works (`p = 0 < measured`).
pub fn required_constant(measured: f64, p: f64, m: f64, exponent: usize, shrink: f64) -> Option<f64> {
    if measured <= 0.0 || shrink == 0.0 {
        Some(0.0)
    } else if p == 0.0 {
        None
    } else {
        Some(measured.powf(1.0 / exponent as f64) * shrink / (m * p))
    }
}

fn measure(case: &FitCase, radius: f64, evaluator: &Evaluator) -> Result<f64> {
    match evaluator {
        Evaluator::Exact => {
            let law = DiscreteProductLaw::new(&case.coords)?;
            Ok(exact_small_ball_multi(&law, &case.matrix, radius)?.probability)
        }
        Evaluator::MonteCarlo { samples, stream, centers } => {
            let cands = match centers {
                Some(c) => c.clone(),
                None => vec![mode_image(&case.matrix, &case.coords)?],
            };
            Ok(mc_concentration(&case.matrix, &case.coords, &cands, radius, *samples, *stream)?.estimate)
        }
    }
}
