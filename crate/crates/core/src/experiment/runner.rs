use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Mode, RadiusUnit, Theorem};
use crate::bounds::{aniso_branches, bound_eps, bound_proj, bound_smallball2, BoundReport, Branch};
use crate::distributions::CoordinateDistribution;
use crate::error::{Error, Result};
use crate::estimators::{
    concentration_on_batch, fit_constant, mode_image, required_constant, BinomialInterval, ConcentrationEstimate,
    Evaluator, ExponentRule, FitCase, FitResult, RandomStream, SampleBatch,
};
use crate::oracles::{exact_small_ball_1d, exact_small_ball_multi, DiscreteProductLaw, MULTI_BUDGET, SUM_BUDGET};
use crate::spectral::{svd, SpectralData};

/// Everything derived once from the config's matrix.
struct Setup {
    spec: SpectralData,
    dense: Option<DMatrix<f64>>,
    rank: usize,
    scale: f64,
    m: f64,
    convention: String,
}

/// Radius of one grid row: unit radius `t` and the Euclidean radius used.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusPair {
    pub t: f64,
    pub radius: f64,
}

impl Setup {
    fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let matrix = cfg.matrix()?;
        let spec = svd(matrix)?;
        let rank = spec.rank();
        if rank == 0 {
            return Err(Error::ZeroMatrix);
        }
        let dense = matrix.to_dmatrix()?;
        if let Some(a) = &dense {
            if !cfg.coordinates.is_empty() && a.ncols() != cfg.coordinates.len() {
                return Err(Error::DimensionMismatch { expected: a.ncols(), got: cfg.coordinates.len() });
            }
        }
        let m = cfg.m_factor;
        let (scale, convention) = match cfg.theorem {
            Theorem::Projection => {
                let s1 = spec.operator_norm();
                if spec.singular_values.iter().filter(|s| **s > 0.0).any(|s| (s - 1.0).abs() > 1e-9) || s1 == 0.0 {
                    return Err(Error::Config(
                        "projection radius convention needs an orthogonal projection (nonzero singular values all 1); \
                         use theorem = anisotropic for a general matrix"
                            .into(),
                    ));
                }
                let s = (rank as f64).sqrt();
                (s, format!("projection: radius = M·t·√d with M = {m}, d = {rank}, √d = {s}"))
            }
            Theorem::Anisotropic => {
                let s = spec.hs_norm();
                (s, format!("anisotropic: radius = M·t·‖A‖_HS with M = {m}, ‖A‖_HS = {s}"))
            }
        };
        Ok(Setup { spec, dense, rank, scale, m, convention })
    }

    fn dense(&self) -> Result<&DMatrix<f64>> {
        self.dense.as_ref().ok_or(Error::VectorsUnavailable)
    }

    fn radii(&self, cfg: &ExperimentConfig) -> Result<(Vec<RadiusPair>, String)> {
        let grid = cfg.radii()?;
        let unit = self.m * self.scale;
        let pairs = grid
            .values
            .iter()
            .map(|&v| match grid.unit {
                RadiusUnit::Scaled => RadiusPair { t: v, radius: v * unit },
                RadiusUnit::Absolute => RadiusPair { t: v / unit, radius: v },
            })
            .collect();
        let note = match grid.unit {
            RadiusUnit::Scaled => format!("{}; grid given as t, multiplied by {unit}", self.convention),
            RadiusUnit::Absolute => format!("{}; grid given as radii, divided by {unit} to get t", self.convention),
        };
        Ok((pairs, note))
    }

    /// Exact oracle usable: discrete law within budget, effective dimension
    /// ≤ 3. Single-row matrices get the larger sum budget unless `multi_only`.
    fn exact_feasible(&self, coords: &[CoordinateDistribution], multi_only: bool) -> bool {
        let Some(a) = &self.dense else { return false };
        let Ok(law) = DiscreteProductLaw::new(coords) else { return false };
        if a.nrows() == 1 && !multi_only {
            law.combinations() <= SUM_BUDGET
        } else {
            self.rank <= 3 && law.combinations() <= MULTI_BUDGET
        }
    }
}

fn max_concentration(coords: &[CoordinateDistribution], t: f64) -> Result<f64> {
    coords.iter().map(|c| c.concentration(t)).try_fold(0.0f64, |acc, v| v.map(|v| acc.max(v)))
}

/// Exact `L(AX, s)` with a maximising center when one is produced.
fn exact_value(a: &DMatrix<f64>, coords: &[CoordinateDistribution], s: f64) -> Result<(f64, Option<Vec<f64>>)> {
    let law = DiscreteProductLaw::new(coords)?;
    if a.nrows() == 1 {
        let w: Vec<f64> = a.row(0).iter().copied().collect();
        Ok((exact_small_ball_1d(&law, &w, s)?, None))
    } else {
        let opt = exact_small_ball_multi(&law, a, s)?;
        Ok((opt.probability, Some(opt.center)))
    }
}

fn candidates(cfg: &ExperimentConfig, a: &DMatrix<f64>) -> Result<Vec<Vec<f64>>> {
    match &cfg.estimator.centers {
        Some(c) if !c.is_empty() => Ok(c.clone()),
        Some(_) => Err(Error::EmptyCandidates),
        None => Ok(vec![mode_image(a, &cfg.coordinates)?]),
    }
}

fn stream(cfg: &ExperimentConfig) -> RandomStream {
    RandomStream::new(cfg.estimator.seed, cfg.estimator.stream)
}

// ---------------------------------------------------------------- analyze

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub r: usize,
    pub tail_energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeReport {
    pub singular_values: Vec<f64>,
    pub rank: usize,
    pub operator_norm: f64,
    pub hs_norm: f64,
    pub stable_rank: usize,
    pub stable_rank_ratio: f64,
    pub delta: f64,
    pub r0: Option<usize>,
    /// Why `r0` is absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r0_unavailable: Option<String>,
    pub tail_energies: Vec<TailRow>,
    /// Ranks of the dyadic spectral blocks; absent without singular vectors.
    pub dyadic_block_ranks: Option<Vec<usize>>,
}

pub fn run_analyze(cfg: &ExperimentConfig) -> Result<AnalyzeReport> {
    let spec = svd(cfg.matrix()?)?;
    let sr = spec.stable_rank_full()?;
    let (r0, r0_unavailable) = match spec.r_zero() {
        Ok(v) => (Some(v), None),
        Err(e @ Error::BranchUnavailable { .. }) => (None, Some(e.to_string())),
        Err(e) => return Err(e),
    };
    let rank = spec.rank();
    let dyadic_block_ranks = match spec.dyadic_projections(sr.floored) {
        Ok(blocks) => Some(blocks.iter().map(|b| b.dim()).collect()),
        Err(Error::VectorsUnavailable) => None,
        Err(e) => return Err(e),
    };
    Ok(AnalyzeReport {
        rank,
        operator_norm: spec.operator_norm(),
        hs_norm: spec.hs_norm(),
        stable_rank: sr.floored,
        stable_rank_ratio: sr.ratio,
        delta: spec.delta()?,
        r0,
        r0_unavailable,
        tail_energies: (0..=rank).map(|r| TailRow { r, tail_energy: spec.tail_energy(r) }).collect(),
        dyadic_block_ranks,
        singular_values: spec.singular_values,
    })
}

// ---------------------------------------------------------------- bound

/// All applicable right-hand sides at one radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundSet {
    /// Only under the projection convention.
    pub proj: Option<BoundReport>,
    pub aniso_all_delta: Option<BoundReport>,
    pub aniso_small_delta: Option<BoundReport>,
    pub eps: Vec<BoundReport>,
}

impl BoundSet {
    fn compute(cfg: &ExperimentConfig, setup: &Setup, p: f64) -> Result<Self> {
        let k = &cfg.constants;
        let proj = match cfg.theorem {
            Theorem::Projection => Some(bound_proj(p, setup.rank, setup.m, k)?),
            Theorem::Anisotropic => None,
        };
        let (aniso_all_delta, aniso_small_delta) = aniso_branches(p, &setup.spec, setup.m, k)?;
        let eps = cfg.eps.iter().map(|&e| bound_eps(p, &setup.spec, setup.m, e, k)).collect::<Result<_>>()?;
        Ok(BoundSet { proj, aniso_all_delta, aniso_small_delta, eps })
    }

    /// The smallest bound and its branch; ties keep the earlier branch in
    /// the order proj, small-δ, all-δ, ε-forms.
    pub fn tightest(&self) -> (f64, Branch) {
        self.proj
            .iter()
            .chain(&self.aniso_small_delta)
            .chain(&self.aniso_all_delta)
            .chain(&self.eps)
            .fold((f64::INFINITY, Branch::Proj), |acc, b| if b.value < acc.0 { (b.value, b.branch) } else { acc })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub t: f64,
    pub radius: f64,
    pub p: f64,
    pub bounds: BoundSet,
    /// `(C K τ)^r` at `τ = radius / ‖A‖` when every coordinate has a
    /// finite density bound.
    pub smallball2: Option<BoundReport>,
    pub tightest: f64,
    pub branch: Branch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRunReport {
    pub radius_convention: String,
    pub rows: Vec<BoundRow>,
}

pub fn run_bound(cfg: &ExperimentConfig) -> Result<BoundRunReport> {
    let setup = Setup::new(cfg)?;
    let (pairs, note) = setup.radii(cfg)?;
    let k_max = cfg.coordinates.iter().map(|c| c.density_bound().value()).fold(0.0, f64::max);
    let rows = pairs
        .iter()
        .map(|rp| {
            let p = max_concentration(&cfg.coordinates, rp.t)?;
            let bounds = BoundSet::compute(cfg, &setup, p)?;
            let smallball2 = if k_max.is_finite() {
                let tau = rp.radius / setup.spec.operator_norm();
                Some(bound_smallball2(k_max, tau, &setup.spec, &cfg.constants)?)
            } else {
                None
            };
            let (tightest, branch) = bounds.tightest();
            Ok(BoundRow { t: rp.t, radius: rp.radius, p, bounds, smallball2, tightest, branch })
        })
        .collect::<Result<_>>()?;
    Ok(BoundRunReport { radius_convention: note, rows })
}

// ---------------------------------------------------------------- estimate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub t: f64,
    pub estimate: ConcentrationEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub radius_convention: String,
    pub rows: Vec<EstimateRow>,
}

/// Monte Carlo lower estimates of `L(AX, radius)` over the candidate
/// centers, one shared sample batch for the whole grid.
pub fn run_estimate(cfg: &ExperimentConfig) -> Result<EstimateReport> {
    let setup = Setup::new(cfg)?;
    let (pairs, note) = setup.radii(cfg)?;
    let a = setup.dense()?;
    let cands = candidates(cfg, a)?;
    let batch = SampleBatch::draw(a, &cfg.coordinates, cfg.estimator.samples, stream(cfg))?;
    let rows = pairs
        .iter()
        .map(|rp| {
            Ok(EstimateRow { t: rp.t, estimate: concentration_on_batch(&batch, &cands, rp.radius, stream(cfg))? })
        })
        .collect::<Result<_>>()?;
    Ok(EstimateReport { radius_convention: note, rows })
}

// ---------------------------------------------------------------- exact

/// Radius (as written by `{}` formatting) → exact probability, in grid order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ExactReport(pub serde_json::Map<String, serde_json::Value>);

pub fn run_exact(cfg: &ExperimentConfig) -> Result<ExactReport> {
    let setup = Setup::new(cfg)?;
    let (pairs, _) = setup.radii(cfg)?;
    let a = setup.dense()?;
    let mut out = serde_json::Map::new();
    for rp in pairs {
        let (p, _) = exact_value(a, &cfg.coordinates, rp.radius)?;
        out.insert(format!("{}", rp.radius), serde_json::json!(p));
    }
    Ok(ExactReport(out))
}

// ---------------------------------------------------------------- verify

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Exact oracle value.
    Exact,
    /// Monte Carlo lower estimate; the row compares the interval's upper end.
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyRow {
    pub t: f64,
    pub radius: f64,
    pub p: f64,
    pub measured: f64,
    pub provenance: Provenance,
    pub interval: Option<BinomialInterval>,
    /// Winning center, when the evaluator produces one.
    pub center: Option<Vec<f64>>,
    /// The value held against the bound: exact value or interval upper end.
    pub compared: f64,
    pub bounds: BoundSet,
    pub bound: f64,
    pub branch: Branch,
    /// `bound − compared`.
    pub margin: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifySummary {
    pub all_pass: bool,
    pub worst_margin: f64,
    pub rule: ExponentRule,
    /// Smallest constant consistent with every row's measured value under
    /// `rule`; absent when none is (some row has `p = 0 < measured`).
    pub fitted_constant: Option<f64>,
    pub exact_rows: usize,
    pub monte_carlo_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub theorem: Theorem,
    pub m_factor: f64,
    pub radius_convention: String,
    pub rows: Vec<VerifyRow>,
    pub summary: VerifySummary,
}

/// Rule whose constant `run_verify` reports: the theorem's own, and for the
/// anisotropic theorem the small-δ branch whenever it exists.
fn default_rule(cfg: &ExperimentConfig, setup: &Setup) -> ExponentRule {
    match cfg.theorem {
        Theorem::Projection => ExponentRule::Proj,
        Theorem::Anisotropic if setup.spec.r_zero().is_ok() => ExponentRule::AnisoSmallDelta,
        Theorem::Anisotropic => ExponentRule::AnisoAllDelta,
    }
}

fn rule_shape(rule: ExponentRule, setup: &Setup) -> Result<(usize, f64)> {
    let s = &setup.spec;
    Ok(match rule {
        ExponentRule::Proj => (setup.rank, 1.0),
        ExponentRule::AnisoAllDelta => (s.stable_rank()?, s.delta()?.sqrt()),
        ExponentRule::AnisoSmallDelta => (s.r_zero()?, 1.0),
        ExponentRule::Eps(e) => (crate::spectral::ceil_robust((1.0 - e) * s.stable_rank()? as f64), e.sqrt()),
    })
}

pub fn run_verify(cfg: &ExperimentConfig) -> Result<VerifyReport> {
    let setup = Setup::new(cfg)?;
    let (pairs, note) = setup.radii(cfg)?;
    let a = setup.dense()?;
    let exact = setup.exact_feasible(&cfg.coordinates, false);
    let batch = if exact {
        None
    } else {
        Some((SampleBatch::draw(a, &cfg.coordinates, cfg.estimator.samples, stream(cfg))?, candidates(cfg, a)?))
    };

    let mut rows = Vec::with_capacity(pairs.len());
    for rp in &pairs {
        let p = max_concentration(&cfg.coordinates, rp.t)?;
        let bounds = BoundSet::compute(cfg, &setup, p)?;
        let (bound, branch) = bounds.tightest();
        let (measured, provenance, interval, center, compared) = match &batch {
            None => {
                let (v, c) = exact_value(a, &cfg.coordinates, rp.radius)?;
                (v, Provenance::Exact, None, c, v)
            }
            Some((b, cands)) => {
                let est = concentration_on_batch(b, cands, rp.radius, stream(cfg))?;
                (est.estimate, Provenance::MonteCarlo, Some(est.interval), Some(est.center), est.interval.upper)
            }
        };
        let pass = match provenance {
            Provenance::Exact => compared <= bound * (1.0 + 1e-12),
            Provenance::MonteCarlo => compared <= bound,
        };
        rows.push(VerifyRow {
            t: rp.t,
            radius: rp.radius,
            p,
            measured,
            provenance,
            interval,
            center,
            compared,
            bounds,
            bound,
            branch,
            margin: bound - compared,
            pass,
        });
    }

    let rule = cfg.fit.and_then(|f| f.rule).unwrap_or_else(|| default_rule(cfg, &setup));
    let (exponent, shrink) = rule_shape(rule, &setup)?;
    let fitted_constant = rows
        .iter()
        .map(|r| required_constant(r.measured, r.p, setup.m, exponent, shrink))
        .try_fold(0.0f64, |acc, c| c.map(|c| acc.max(c)));
    let summary = VerifySummary {
        all_pass: rows.iter().all(|r| r.pass),
        worst_margin: rows.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min),
        rule,
        fitted_constant,
        exact_rows: rows.iter().filter(|r| r.provenance == Provenance::Exact).count(),
        monte_carlo_rows: rows.iter().filter(|r| r.provenance == Provenance::MonteCarlo).count(),
    };
    Ok(VerifyReport { theorem: cfg.theorem, m_factor: cfg.m_factor, radius_convention: note, rows, summary })
}

// ---------------------------------------------------------------- fit-constant

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub rule: ExponentRule,
    pub evaluator: Evaluator,
    pub result: FitResult,
}

/// Fits the constant over the radius grid, one corpus case per `t`.
pub fn run_fit(cfg: &ExperimentConfig) -> Result<FitReport> {
    let setup = Setup::new(cfg)?;
    let (pairs, _) = setup.radii(cfg)?;
    let a = setup.dense()?;
    let rule = cfg.fit.and_then(|f| f.rule).unwrap_or_else(|| default_rule(cfg, &setup));
    let evaluator = if setup.exact_feasible(&cfg.coordinates, true) {
        Evaluator::Exact
    } else {
        Evaluator::MonteCarlo {
            samples: cfg.estimator.samples,
            stream: stream(cfg),
            centers: Some(candidates(cfg, a)?),
        }
    };
    let corpus: Vec<FitCase> = pairs
        .iter()
        .map(|rp| FitCase { matrix: a.clone(), coords: cfg.coordinates.clone(), t: rp.t, m: setup.m })
        .collect();
    let result = fit_constant(&corpus, &evaluator, rule)?;
    Ok(FitReport { rule, evaluator, result })
}

// ---------------------------------------------------------------- dispatch

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Report {
    Analyze(AnalyzeReport),
    Bound(BoundRunReport),
    Estimate(EstimateReport),
    Exact(ExactReport),
    Verify(VerifyReport),
    Fit(FitReport),
}

/// Validates `cfg` and runs its mode.
pub fn run(cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate()?;
    Ok(match cfg.mode()? {
        Mode::Analyze => Report::Analyze(run_analyze(cfg)?),
        Mode::Bound => Report::Bound(run_bound(cfg)?),
        Mode::Estimate => Report::Estimate(run_estimate(cfg)?),
        Mode::Exact => Report::Exact(run_exact(cfg)?),
        Mode::Verify => Report::Verify(run_verify(cfg)?),
        Mode::FitConstant => Report::Fit(run_fit(cfg)?),
    })
}
