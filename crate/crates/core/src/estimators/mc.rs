//! Sharded Monte Carlo small-ball and density estimation.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::interval::{clopper_pearson, BinomialInterval};
use super::stream::RandomStream;
use crate::distributions::CoordinateDistribution;
use crate::error::{Error, Result};
use crate::oracles::geometry::within;
use crate::spectral::{ball_volume, svd_dense};

/// Samples per shard; shard `k` always draws from `stream.substream(k)`.
pub const SHARD_SIZE: usize = 4096;
/// Smallest admissible sample count.
pub const MIN_SAMPLES: usize = 1000;
/// Two-sided miscoverage of every reported interval.
pub const ALPHA: f64 = 0.01;

/// Draws of `A X`, stored row-major.
#[derive(Debug, Clone)]
pub struct SampleBatch {
    dim: usize,
    points: Vec<f64>,
}

fn check_inputs(a: &DMatrix<f64>, coords: &[CoordinateDistribution], samples: usize) -> Result<()> {
    if a.ncols() != coords.len() {
        return Err(Error::DimensionMismatch { expected: a.ncols(), got: coords.len() });
    }
    if samples < MIN_SAMPLES {
        return Err(Error::InvalidArgument(format!("need at least {MIN_SAMPLES} samples, got {samples}")));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    coords.iter().try_for_each(|c| c.validate())
}

impl SampleBatch {
    /// `samples` independent draws of `A X`. Bitwise reproducible from
    /// `stream` regardless of the worker count.
    pub fn draw(
        a: &DMatrix<f64>,
        coords: &[CoordinateDistribution],
        samples: usize,
        stream: RandomStream,
    ) -> Result<Self> {
        check_inputs(a, coords, samples)?;
        let dim = a.nrows();
        let n = coords.len();
        let mut points = vec![0.0; samples * dim];
        points
            .par_chunks_mut(SHARD_SIZE * dim)
            .enumerate()
            .for_each(|(shard, chunk)| {
                let mut rng = stream.substream(shard as u64).rng();
                let mut x = vec![0.0; n];
                for out in chunk.chunks_mut(dim) {
                    for (xi, c) in x.iter_mut().zip(coords) {
                        *xi = c.sample(&mut rng);
                    }
                    for (r, o) in out.iter_mut().enumerate() {
                        *o = (0..n).map(|j| a[(r, j)] * x[j]).sum();
                    }
                }
            });
        Ok(SampleBatch { dim, points })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks(self.dim.max(1))
    }

    /// Number of draws in the closed ball `B(center, s)`.
    pub fn count_within(&self, center: &[f64], s: f64) -> u64 {
        self.points
            .par_chunks(SHARD_SIZE * self.dim.max(1))
            .map(|chunk| chunk.chunks(self.dim.max(1)).filter(|p| within(p, center, s)).count() as u64)
            .sum()
    }
}

/// Whether a Monte Carlo value estimates `P(‖Z − u‖ ≤ s)` at one given
/// center or, maximised over finitely many centers, only bounds `L(Z, s)`
/// from below.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateLabel {
    Point,
    Lower,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationEstimate {
    pub estimate: f64,
    /// Exact binomial interval at confidence 99%.
    pub interval: BinomialInterval,
    pub hits: u64,
    pub samples: usize,
    pub center: Vec<f64>,
    pub radius: f64,
    pub stream: RandomStream,
    pub label: EstimateLabel,
}

fn estimate_from_hits(
    hits: u64,
    samples: usize,
    center: Vec<f64>,
    radius: f64,
    stream: RandomStream,
    label: EstimateLabel,
) -> ConcentrationEstimate {
    ConcentrationEstimate {
        estimate: hits as f64 / samples as f64,
        interval: clopper_pearson(hits, samples as u64, ALPHA),
        hits,
        samples,
        center,
        radius,
        stream,
        label,
    }
}

fn check_radius(s: f64) -> Result<()> {
    if s >= 0.0 && s.is_finite() {
        Ok(())
    } else {
        Err(Error::NegativeRadius(s))
    }
}

fn check_center(a: &DMatrix<f64>, c: &[f64]) -> Result<()> {
    if c.len() != a.nrows() {
        return Err(Error::DimensionMismatch { expected: a.nrows(), got: c.len() });
    }
    Ok(())
}

/// Fraction of draws with `‖A X − center‖ ≤ s`.
pub fn mc_small_ball(
    a: &DMatrix<f64>,
    coords: &[CoordinateDistribution],
    center: &[f64],
    s: f64,
    samples: usize,
    stream: RandomStream,
) -> Result<ConcentrationEstimate> {
    check_radius(s)?;
    check_center(a, center)?;
    let batch = SampleBatch::draw(a, coords, samples, stream)?;
    let hits = batch.count_within(center, s);
    Ok(estimate_from_hits(hits, samples, center.to_vec(), s, stream, EstimateLabel::Point))
}

/// Best of [`mc_small_ball`] over `candidates` on one shared batch; a lower
/// estimate of `L(AX, s)`. Ties go to the earliest candidate.
pub fn mc_concentration(
    a: &DMatrix<f64>,
    coords: &[CoordinateDistribution],
    candidates: &[Vec<f64>],
    s: f64,
    samples: usize,
    stream: RandomStream,
) -> Result<ConcentrationEstimate> {
    let batch = SampleBatch::draw(a, coords, samples, stream)?;
    concentration_on_batch(&batch, candidates, s, stream)
}

/// [`mc_concentration`] on a batch the caller already holds.
pub fn concentration_on_batch(
    batch: &SampleBatch,
    candidates: &[Vec<f64>],
    s: f64,
    stream: RandomStream,
) -> Result<ConcentrationEstimate> {
    check_radius(s)?;
    if candidates.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    if let Some(c) = candidates.iter().find(|c| c.len() != batch.dim()) {
        return Err(Error::DimensionMismatch { expected: batch.dim(), got: c.len() });
    }
    let (best, hits) = candidates
        .iter()
        .map(|c| batch.count_within(c, s))
        .enumerate()
        .fold((0, 0u64), |acc, (i, h)| if h > acc.1 { (i, h) } else { acc });
    Ok(estimate_from_hits(hits, batch.len(), candidates[best].clone(), s, stream, EstimateLabel::Lower))
}

/// `A · (mode of each coordinate)`: the default candidate center.
pub fn mode_image(a: &DMatrix<f64>, coords: &[CoordinateDistribution]) -> Result<Vec<f64>> {
    if a.ncols() != coords.len() {
        return Err(Error::DimensionMismatch { expected: a.ncols(), got: coords.len() });
    }
    let modes: Vec<f64> = coords.iter().map(|c| c.mode()).collect();
    Ok((0..a.nrows()).map(|r| (0..a.ncols()).map(|j| a[(r, j)] * modes[j]).sum()).collect())
}

/// Density estimate at one radius of the schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityRow {
    pub radius: f64,
    pub hits: u64,
    pub density: f64,
    pub lower: f64,
    pub upper: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub value: f64,
    pub radius: f64,
    pub std_error: f64,
    /// False when no two neighbouring radii agreed; `value` is then the
    /// reading at the smallest radius.
    pub converged: bool,
    /// Intrinsic dimension `d = rank A` used for ball volumes.
    pub dim: usize,
    pub rows: Vec<DensityRow>,
}

/// Density of `A X` at `point` (which must lie in the range of `A`), read
/// off `P(‖AX − point‖ ≤ t) / |B_d(t)|` along a strictly decreasing radius
/// schedule.
///
/// Returns the reading at the smallest radius whose interval overlaps that
/// of the next larger radius.
pub fn mc_density_at(
    a: &DMatrix<f64>,
    coords: &[CoordinateDistribution],
    point: &[f64],
    schedule: &[f64],
    samples: usize,
    stream: RandomStream,
) -> Result<DensityEstimate> {
    check_center(a, point)?;
    if schedule.len() < 3 {
        return Err(Error::InvalidArgument("radius schedule needs at least 3 entries".into()));
    }
    if schedule.windows(2).any(|w| !(w[1] < w[0])) || schedule.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::InvalidArgument("radius schedule must be positive and strictly decreasing".into()));
    }

    // intrinsic coordinates: A = U Σ Vᵀ ↦ Σ Vᵀ, point ↦ Uᵀ point
    let sd = svd_dense(a);
    let d = sd.rank();
    if d == 0 {
        return Err(Error::ZeroMatrix);
    }
    let us = sd.left_vectors.as_ref().expect("dense svd has vectors");
    let vs = sd.right_vectors.as_ref().expect("dense svd has vectors");
    let reduced = DMatrix::from_fn(d, a.ncols(), |i, j| sd.singular_values[i] * vs[i][j]);
    let local: Vec<f64> = us.iter().map(|u| u.iter().zip(point).map(|(x, y)| x * y).sum()).collect();
    let residual_sq = point.iter().map(|x| x * x).sum::<f64>() - local.iter().map(|x| x * x).sum::<f64>();
    let scale = point.iter().map(|x| x * x).sum::<f64>().max(sd.operator_norm().powi(2));
    if residual_sq > 1e-12 * scale {
        return Err(Error::InvalidArgument("density point lies outside the range of A".into()));
    }

    let batch = SampleBatch::draw(&reduced, coords, samples, stream)?;
    let n = samples as f64;
    let rows: Vec<DensityRow> = schedule
        .iter()
        .map(|&t| {
            let hits = batch.count_within(&local, t);
            let vol = ball_volume(d, t);
            let p = hits as f64 / n;
            let ci = clopper_pearson(hits, samples as u64, ALPHA);
            DensityRow {
                radius: t,
                hits,
                density: p / vol,
                lower: ci.lower / vol,
                upper: ci.upper / vol,
                std_error: (p * (1.0 - p) / n).sqrt() / vol,
            }
        })
        .collect();

    let last = rows.len() - 1;
    if rows[last].hits == 0 {
        return Err(Error::ZeroHits { radius: rows[last].radius });
    }
    let overlaps = |x: &DensityRow, y: &DensityRow| x.lower <= y.upper && y.lower <= x.upper;
    let chosen = (1..=last).rev().find(|&k| overlaps(&rows[k], &rows[k - 1]));
    let k = chosen.unwrap_or(last);
    Ok(DensityEstimate {
        value: rows[k].density,
        radius: rows[k].radius,
        std_error: rows[k].std_error,
        converged: chosen.is_some(),
        dim: d,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::{candidate_centers, exact_small_ball_multi, DiscreteProductLaw};
    use crate::spectral::ProjectionSpec;
    use std::f64::consts::PI;

    fn unif() -> CoordinateDistribution {
        CoordinateDistribution::unit_uniform()
    }

    #[test]
    fn covering_ball_gives_one() {
        let est = mc_small_ball(&DMatrix::identity(2, 2), &[unif(), unif()], &[0.0, 0.0], 1.0, 5000, RandomStream::new(1, 0))
            .unwrap();
        assert_eq!(est.estimate, 1.0);
        assert_eq!(est.label, EstimateLabel::Point);
    }

    #[test]
    fn disk_inside_square_has_area_pi_over_four() {
        let est = mc_small_ball(&DMatrix::identity(2, 2), &[unif(), unif()], &[0.0, 0.0], 0.5, 200_000, RandomStream::new(2, 0))
            .unwrap();
        assert!(est.interval.lower <= PI / 4.0 && PI / 4.0 <= est.interval.upper, "{est:?}");
        assert!(est.interval.lower <= est.estimate && est.estimate <= est.interval.upper);
    }

    #[test]
    fn rejects_bad_inputs() {
        let id = DMatrix::identity(2, 2);
        let s = RandomStream::new(0, 0);
        assert!(matches!(mc_small_ball(&id, &[unif()], &[0.0, 0.0], 0.5, 5000, s), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(mc_small_ball(&id, &[unif(), unif()], &[0.0], 0.5, 5000, s), Err(Error::DimensionMismatch { .. })));
        assert!(mc_small_ball(&id, &[unif(), unif()], &[0.0, 0.0], 0.5, 10, s).is_err());
        assert!(matches!(mc_concentration(&id, &[unif(), unif()], &[], 0.5, 5000, s), Err(Error::EmptyCandidates)));
    }

    #[test]
    fn identical_inputs_give_identical_estimates_for_any_thread_count() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 0.3, -0.2, 0.0, 0.8, 0.5]);
        let coords = [unif(), CoordinateDistribution::gaussian(0.0, 1.0).unwrap(), CoordinateDistribution::rademacher()];
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| mc_small_ball(&a, &coords, &[0.1, 0.0], 0.7, 50_000, RandomStream::new(9, 4)).unwrap())
        };
        let one = run(1);
        assert_eq!(one, run(3));
        assert_eq!(one, run(8));
        let other = mc_small_ball(&a, &coords, &[0.1, 0.0], 0.7, 50_000, RandomStream::new(9, 5)).unwrap();
        assert_ne!(one.hits, other.hits);
    }

    #[test]
    fn monotone_in_radius_and_candidates_on_a_fixed_batch() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 0.3, -0.2, 0.0, 0.8, 0.5]);
        let coords = [unif(), unif(), CoordinateDistribution::triangular(0.0, 1.0).unwrap()];
        let stream = RandomStream::new(3, 0);
        let batch = SampleBatch::draw(&a, &coords, 20_000, stream).unwrap();
        let mut prev = 0;
        for s in [0.0, 0.05, 0.1, 0.3, 0.6, 1.2] {
            let h = batch.count_within(&[0.0, 0.0], s);
            assert!(h >= prev);
            prev = h;
        }
        let mut cands = vec![vec![0.4, 0.4]];
        let mut prev = 0.0;
        for extra in [[0.2, 0.1], [0.0, 0.0], [-0.5, 0.3]] {
            let est = concentration_on_batch(&batch, &cands, 0.2, stream).unwrap();
            assert!(est.estimate >= prev);
            assert_eq!(est.label, EstimateLabel::Lower);
            prev = est.estimate;
            cands.push(extra.to_vec());
        }
    }

    #[test]
    fn singleton_candidate_matches_point_estimate() {
        let a = DMatrix::from_row_slice(1, 2, &[0.6, 0.8]);
        let coords = [unif(), unif()];
        let stream = RandomStream::new(4, 1);
        let c = mode_image(&a, &coords).unwrap();
        let lower = mc_concentration(&a, &coords, &[c.clone()], 0.1, 10_000, stream).unwrap();
        let point = mc_small_ball(&a, &coords, &c, 0.1, 10_000, stream).unwrap();
        assert_eq!(lower.hits, point.hits);
    }

    #[test]
    fn full_candidate_set_tracks_the_exact_oracle() {
        let coords = vec![CoordinateDistribution::discrete(&[(-1.0, 0.3), (0.0, 0.3), (1.0, 0.4)]).unwrap(); 4];
        let law = DiscreteProductLaw::new(&coords).unwrap();
        let mut rng = RandomStream::new(6, 0).rng();
        let a = ProjectionSpec::random(4, 2, &mut rng).basis_matrix();
        let s = 0.6;
        let exact = exact_small_ball_multi(&law, &a, s).unwrap().probability;
        let cands = candidate_centers(&law, &a, s).unwrap();
        let est = mc_concentration(&a, &coords, &cands, s, 100_000, RandomStream::new(6, 1)).unwrap();
        assert!(est.interval.lower <= exact && exact <= est.interval.upper, "{exact} vs {est:?}");
    }

    #[test]
    fn density_examples() {
        let one = mc_density_at(&DMatrix::identity(1, 1), &[unif()], &[0.0], &[0.2, 0.1, 0.05], 200_000, RandomStream::new(1, 1))
            .unwrap();
        assert!((one.value - 1.0).abs() < 0.02, "{one:?}");
        assert!(one.converged);

        let h = 1.0 / 2f64.sqrt();
        let a = DMatrix::from_row_slice(1, 2, &[h, h]);
        let est = mc_density_at(&a, &[unif(), unif()], &[0.0], &[0.08, 0.04, 0.02, 0.01], 1_000_000, RandomStream::new(1, 2))
            .unwrap();
        assert!((est.value / 2f64.sqrt() - 1.0).abs() < 0.02, "{est:?}");

        let g = CoordinateDistribution::gaussian(0.0, 1.0).unwrap();
        let a = DMatrix::from_row_slice(1, 2, &[0.6, 0.8]);
        let est = mc_density_at(&a, &[g.clone(), g], &[0.0], &[0.2, 0.1, 0.05], 1_000_000, RandomStream::new(1, 3)).unwrap();
        let want = 1.0 / (2.0 * PI).sqrt();
        assert!((est.value / want - 1.0).abs() < 0.02, "{est:?}");
    }

    #[test]
    fn density_on_a_tall_rank_deficient_map_uses_intrinsic_dimension() {
        // A = (e1 + e2)/√2 ⊗ (1, 0): rank one inside R², density of X₁ at 0 is 1
        let h = 1.0 / 2f64.sqrt();
        let a = DMatrix::from_row_slice(2, 2, &[h, 0.0, h, 0.0]);
        let est = mc_density_at(&a, &[unif(), unif()], &[0.0, 0.0], &[0.2, 0.1, 0.05], 100_000, RandomStream::new(2, 2))
            .unwrap();
        assert_eq!(est.dim, 1);
        assert!((est.value - 1.0).abs() < 0.05);
        assert!(mc_density_at(&a, &[unif(), unif()], &[1.0, -1.0], &[0.2, 0.1, 0.05], 10_000, RandomStream::new(2, 2)).is_err());
    }

    #[test]
    fn density_schedule_is_validated() {
        let id = DMatrix::identity(1, 1);
        let s = RandomStream::new(0, 0);
        assert!(mc_density_at(&id, &[unif()], &[0.0], &[0.2, 0.1], 5000, s).is_err());
        assert!(mc_density_at(&id, &[unif()], &[0.0], &[0.1, 0.2, 0.05], 5000, s).is_err());
        assert!(matches!(
            mc_density_at(&id, &[unif()], &[5.0], &[0.3, 0.2, 0.1], 5000, s),
            Err(Error::ZeroHits { .. })
        ));
    }

    #[test]
    fn smoothing_moments_of_projected_cube() {
        let mut rng = RandomStream::new(12, 0).rng();
        for d in [2usize, 5] {
            let p = ProjectionSpec::random(12, d, &mut rng).basis_matrix();
            let batch = SampleBatch::draw(&p, &vec![unif(); 12], 50_000, RandomStream::new(12, d as u64)).unwrap();
            let sq: Vec<f64> = batch.iter().map(|x| x.iter().map(|v| v * v).sum()).collect();
            let n = sq.len() as f64;
            let mean = sq.iter().sum::<f64>() / n;
            let var = sq.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            assert!((mean - d as f64 / 12.0).abs() <= 3.0 * (var / n).sqrt());
            let inside = sq.iter().filter(|&&v| v <= d as f64).count() as f64 / n;
            assert!(inside >= 11.0 / 12.0);
        }
    }
}
