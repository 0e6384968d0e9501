//! Linear-algebraic quantities of the matrix `A`.
//!
//! Singular values below `1e-12 · s_1` are treated as zero, and singular
//! vectors are kept only for the nonzero singular values (no zero padding).

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative cutoff below which a singular value counts as zero.
pub const RANK_CUTOFF: f64 = 1e-12;

/// The matrix `A`, either as dense row-major entries or as an explicit
/// spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Dense(Vec<Vec<f64>>),
    Spectrum {
        singular_values: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        right_vectors: Option<Vec<Vec<f64>>>,
    },
}

impl MatrixSpec {
    pub fn from_dmatrix(m: &DMatrix<f64>) -> Self {
        MatrixSpec::Dense((0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect())
    }

    pub fn identity(n: usize) -> Self {
        MatrixSpec::from_dmatrix(&DMatrix::identity(n, n))
    }

    pub fn diagonal(d: &[f64]) -> Self {
        MatrixSpec::from_dmatrix(&DMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    /// Dense view; `None` for a bare spectrum without vectors.
    ///
    /// A spectrum with right vectors is realised as `Σ s_j e_j v_jᵀ`.
    pub fn to_dmatrix(&self) -> Result<Option<DMatrix<f64>>> {
        match self {
            MatrixSpec::Dense(rows) => {
                let m = rows.len();
                if m == 0 {
                    return Err(Error::InvalidArgument("matrix has no rows".into()));
                }
                let n = rows[0].len();
                if n == 0 || rows.iter().any(|r| r.len() != n) {
                    return Err(Error::InvalidArgument("matrix rows must be nonempty and of equal length".into()));
                }
                if rows.iter().flatten().any(|x| !x.is_finite()) {
                    return Err(Error::NonFinite);
                }
                Ok(Some(DMatrix::from_fn(m, n, |i, j| rows[i][j])))
            }
            MatrixSpec::Spectrum { singular_values, right_vectors: Some(vs) } => {
                let k = vs.len().min(singular_values.len());
                if k == 0 {
                    return Ok(None);
                }
                let n = vs[0].len();
                Ok(Some(DMatrix::from_fn(k, n, |i, j| singular_values[i] * vs[i][j])))
            }
            MatrixSpec::Spectrum { .. } => Ok(None),
        }
    }

    /// Hilbert–Schmidt norm.
    pub fn hs_norm(&self) -> Result<f64> {
        match self {
            MatrixSpec::Spectrum { singular_values, .. } => {
                Ok(singular_values.iter().map(|s| s * s).sum::<f64>().sqrt())
            }
            MatrixSpec::Dense(_) => Ok(self.to_dmatrix()?.map(|m| m.norm()).unwrap_or(0.0)),
        }
    }
}

/// Singular values (non-increasing) with the singular vectors of the nonzero
/// part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralData {
    pub singular_values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub right_vectors: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub left_vectors: Option<Vec<Vec<f64>>>,
}

/// Floored stable rank plus the raw ratio `‖A‖²_HS / ‖A‖²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StableRank {
    pub floored: usize,
    pub ratio: f64,
}

/// Singular value decomposition of `A`.
pub fn svd(a: &MatrixSpec) -> Result<SpectralData> {
    if let MatrixSpec::Spectrum { singular_values, right_vectors } = a {
        return SpectralData::from_spectrum(singular_values.clone(), right_vectors.clone());
    }
    let m = a.to_dmatrix()?.ok_or(Error::VectorsUnavailable)?;
    Ok(svd_dense(&m))
}

/// Thin factors `(U, σ, Vᵀ)` with `A = U diag(σ) Vᵀ`, unsorted.
type Factors = (DMatrix<f64>, DVector<f64>, DMatrix<f64>);

/// Full SVD, rejected unless it reconstructs `A` to `1e-10 · max(1, ‖A‖)`.
/// The vector-computing Golub–Kahan path occasionally returns a wrong
/// decomposition on rank-deficient input.
fn checked_svd(m: &DMatrix<f64>) -> Option<Factors> {
    let dec = m.clone().svd(true, true);
    let (u, vt) = (dec.u?, dec.v_t?);
    let s = dec.singular_values;
    let recon = &u * DMatrix::from_diagonal(&s) * &vt;
    let scale = m.abs().max().max(1.0);
    ((recon - m).abs().max() <= 1e-10 * scale).then_some((u, s, vt))
}

/// Right vectors from the eigenvectors of `AᵀA`; `σ_i = ‖A v_i‖` and
/// `u_i = A v_i / σ_i`. Singular values below `√ε · s_1` lose accuracy.
fn gram_svd(m: &DMatrix<f64>) -> Factors {
    let eig = (m.transpose() * m).symmetric_eigen();
    let v = eig.eigenvectors;
    let av = m * &v;
    let s = DVector::from_iterator(v.ncols(), av.column_iter().map(|c| c.norm()));
    let mut u = DMatrix::zeros(m.nrows(), v.ncols());
    for (j, c) in av.column_iter().enumerate() {
        if s[j] > 0.0 {
            u.set_column(j, &(c / s[j]));
        }
    }
    (u, s, v.transpose())
}

pub(crate) fn svd_dense(m: &DMatrix<f64>) -> SpectralData {
    let (u, values, vt) = checked_svd(m)
        .or_else(|| checked_svd(&m.transpose()).map(|(u, s, vt)| (vt.transpose(), s, u.transpose())))
        .unwrap_or_else(|| gram_svd(m));
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]));
    let s1 = order.first().map(|&i| values[i]).unwrap_or(0.0);
    let mut singular_values = Vec::with_capacity(order.len());
    let mut right = Vec::new();
    let mut left = Vec::new();
    for &i in &order {
        let s = values[i];
        if s > RANK_CUTOFF * s1 && s > 0.0 {
            singular_values.push(s);
            right.push(vt.row(i).iter().copied().collect());
            left.push(u.column(i).iter().copied().collect());
        } else {
            singular_values.push(0.0);
        }
    }
    // the Gram path yields `n` values; keep `min(rows, cols)` like the others
    singular_values.truncate(m.nrows().min(m.ncols()));
    SpectralData {
        singular_values,
        right_vectors: Some(right),
        left_vectors: Some(left),
    }
}

impl SpectralData {
    /// Spectrum given directly; values must be non-negative and non-increasing.
    pub fn from_spectrum(mut values: Vec<f64>, right_vectors: Option<Vec<Vec<f64>>>) -> Result<Self> {
        if values.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::InvalidArgument("singular values must be finite and non-negative".into()));
        }
        if values.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::InvalidArgument("singular values must be non-increasing".into()));
        }
        let s1 = values.first().copied().unwrap_or(0.0);
        for s in values.iter_mut() {
            if *s <= RANK_CUTOFF * s1 {
                *s = 0.0;
            }
        }
        let rank = values.iter().filter(|s| **s > 0.0).count();
        let right_vectors = match right_vectors {
            Some(vs) => {
                let n = vs.first().map(|v| v.len()).unwrap_or(0);
                if vs.iter().any(|v| v.len() != n) {
                    return Err(Error::InvalidArgument("right vectors must share one length".into()));
                }
                let vs: Vec<Vec<f64>> = vs.into_iter().take(rank).collect();
                check_orthonormal(&vs, 1e-10)?;
                Some(vs)
            }
            None => None,
        };
        Ok(SpectralData { singular_values: values, right_vectors, left_vectors: None })
    }

    /// Largest singular value (operator norm).
    pub fn operator_norm(&self) -> f64 {
        self.singular_values.first().copied().unwrap_or(0.0)
    }

    pub fn hs_norm(&self) -> f64 {
        self.tail_energy(0)
    }

    /// Number of nonzero singular values.
    pub fn rank(&self) -> usize {
        self.singular_values.iter().filter(|s| **s > 0.0).count()
    }

    fn nonzero(&self) -> Result<f64> {
        let s1 = self.operator_norm();
        if s1 > 0.0 {
            Ok(s1)
        } else {
            Err(Error::ZeroMatrix)
        }
    }

    /// `r(A) = ⌊‖A‖²_HS / ‖A‖²⌋` and the unfloored ratio.
    pub fn stable_rank_full(&self) -> Result<StableRank> {
        let s1 = self.nonzero()?;
        let ratio = self.singular_values.iter().map(|s| (s / s1) * (s / s1)).sum::<f64>();
        // absorb rounding so that d equal singular values give exactly d
        let floored = ((ratio * (1.0 + 1e-10)).floor() as usize).clamp(1, self.rank());
        Ok(StableRank { floored, ratio })
    }

    pub fn stable_rank(&self) -> Result<usize> {
        Ok(self.stable_rank_full()?.floored)
    }

    /// Fraction of the squared Hilbert–Schmidt norm beyond index `r(A)`.
    pub fn delta(&self) -> Result<f64> {
        let r = self.stable_rank()?;
        let total = self.tail_energy(0);
        let tail = self.tail_energy(r);
        Ok(((tail * tail) / (total * total)).clamp(0.0, 1.0))
    }

    /// `r₀(A) = ⌈(1 − 2δ(A)) r(A)⌉`, available when `δ(A) < 0.4`.
    pub fn r_zero(&self) -> Result<usize> {
        let r = self.stable_rank()?;
        let delta = self.delta()?;
        if delta >= 0.4 {
            return Err(Error::BranchUnavailable { delta });
        }
        if delta == 0.0 {
            return Ok(r);
        }
        Ok(ceil_robust((1.0 - 2.0 * delta) * r as f64))
    }

    /// `S_r(A) = (Σ_{j>r} s_j²)^{1/2}`.
    pub fn tail_energy(&self, r: usize) -> f64 {
        self.singular_values.iter().skip(r).map(|s| s * s).sum::<f64>().sqrt()
    }

    /// Spectral projections `P_0 = span{v_1..v_r}`,
    /// `P_l = span{v_{2^{l-1} r + 1} .. v_{2^l r}}`, the last block truncated at
    /// the number of available directions.
    pub fn dyadic_projections(&self, r: usize) -> Result<Vec<ProjectionSpec>> {
        let vs = self.right_vectors.as_ref().ok_or(Error::VectorsUnavailable)?;
        if r == 0 || r > vs.len() {
            return Err(Error::RankExceeded { requested: r, available: vs.len() });
        }
        let mut blocks = vec![ProjectionSpec::trusted(vs[..r].to_vec())];
        let mut start = r;
        let mut size = r;
        while start < vs.len() {
            let end = (start + size).min(vs.len());
            blocks.push(ProjectionSpec::trusted(vs[start..end].to_vec()));
            start = end;
            size *= 2;
        }
        Ok(blocks)
    }

    /// Projection onto the top `k` right singular vectors.
    pub fn leading_projection(&self, k: usize) -> Result<ProjectionSpec> {
        let vs = self.right_vectors.as_ref().ok_or(Error::VectorsUnavailable)?;
        if k == 0 || k > vs.len() {
            return Err(Error::RankExceeded { requested: k, available: vs.len() });
        }
        Ok(ProjectionSpec::trusted(vs[..k].to_vec()))
    }
}

/// `⌈x⌉` that ignores a rounding excess of at most `1e-9`.
pub(crate) fn ceil_robust(x: f64) -> usize {
    (x - 1e-9).ceil().max(0.0) as usize
}

/// Orthogonal projection given by an orthonormal basis of its range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionSpec {
    pub basis: Vec<Vec<f64>>,
    /// Ambient dimension `n`; needed when the basis is empty.
    pub ambient: usize,
}

fn check_orthonormal(vs: &[Vec<f64>], tol: f64) -> Result<()> {
    for (i, a) in vs.iter().enumerate() {
        for (j, b) in vs.iter().enumerate().skip(i) {
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let want = if i == j { 1.0 } else { 0.0 };
            if (dot - want).abs() > tol {
                return Err(Error::InvalidArgument(format!(
                    "basis not orthonormal: <v{i}, v{j}> = {dot}"
                )));
            }
        }
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Modified Gram–Schmidt; drops vectors whose residual norm is below `drop_tol`.
fn orthonormalize(vectors: &[Vec<f64>], drop_tol: f64) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for v in vectors {
        let mut w = v.clone();
        // two passes for stability
        for _ in 0..2 {
            for q in &out {
                let c = dot(&w, q);
                w.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
            }
        }
        let norm = dot(&w, &w).sqrt();
        if norm > drop_tol {
            w.iter_mut().for_each(|x| *x /= norm);
            out.push(w);
        }
    }
    out
}

impl ProjectionSpec {
    /// Validates orthonormality within `1e-10`.
    pub fn new(basis: Vec<Vec<f64>>, ambient: usize) -> Result<Self> {
        if basis.iter().any(|b| b.len() != ambient) {
            return Err(Error::DimensionMismatch {
                expected: ambient,
                got: basis.iter().map(|b| b.len()).find(|&l| l != ambient).unwrap_or(0),
            });
        }
        check_orthonormal(&basis, 1e-10)?;
        Ok(ProjectionSpec { basis, ambient })
    }

    fn trusted(basis: Vec<Vec<f64>>) -> Self {
        let ambient = basis.first().map(|b| b.len()).unwrap_or(0);
        ProjectionSpec { basis, ambient }
    }

    /// Projection onto the span of arbitrary vectors.
    pub fn from_span(vectors: &[Vec<f64>], ambient: usize) -> Result<Self> {
        if vectors.iter().any(|b| b.len() != ambient) {
            return Err(Error::InvalidArgument("spanning vectors must have the ambient length".into()));
        }
        let scale = vectors.iter().map(|v| dot(v, v).sqrt()).fold(0.0, f64::max);
        Ok(ProjectionSpec { basis: orthonormalize(vectors, 1e-10 * scale.max(1e-300)), ambient })
    }

    /// Projection onto `span{e_i : i ∈ indices}`.
    pub fn coordinate(ambient: usize, indices: &[usize]) -> Result<Self> {
        let basis = indices
            .iter()
            .map(|&i| {
                if i >= ambient {
                    return Err(Error::InvalidArgument(format!("coordinate {i} out of range")));
                }
                let mut e = vec![0.0; ambient];
                e[i] = 1.0;
                Ok(e)
            })
            .collect::<Result<Vec<_>>>()?;
        ProjectionSpec::new(basis, ambient)
    }

    /// Uniformly random `d`-dimensional subspace of `R^n` (Gaussian frame,
    /// orthonormalised).
    pub fn random<R: Rng + ?Sized>(ambient: usize, d: usize, rng: &mut R) -> Self {
        loop {
            let frame: Vec<Vec<f64>> = (0..d)
                .map(|_| (0..ambient).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
                .collect();
            let basis = orthonormalize(&frame, 1e-8);
            if basis.len() == d {
                return ProjectionSpec { basis, ambient };
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// `P` as an `n × n` matrix.
    pub fn matrix(&self) -> DMatrix<f64> {
        let n = self.ambient;
        let mut p = DMatrix::zeros(n, n);
        for b in &self.basis {
            let v = DVector::from_column_slice(b);
            p += &v * v.transpose();
        }
        p
    }

    /// The `d × n` matrix `R` with orthonormal rows and `P = RᵀR`; it
    /// preserves distances between points of the range of `P`.
    pub fn basis_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim(), self.ambient, |i, j| self.basis[i][j])
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.ambient];
        for b in &self.basis {
            let c = dot(b, x);
            out.iter_mut().zip(b).for_each(|(o, bi)| *o += c * bi);
        }
        out
    }

    /// `P e_i`.
    pub fn column(&self, i: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.ambient];
        for b in &self.basis {
            let c = b[i];
            out.iter_mut().zip(b).for_each(|(o, bi)| *o += c * bi);
        }
        out
    }

    /// `‖P e_j‖₂` for every coordinate `j`.
    pub fn column_norms(&self) -> Vec<f64> {
        (0..self.ambient)
            .map(|j| self.basis.iter().map(|b| b[j] * b[j]).sum::<f64>().sqrt())
            .collect()
    }

    /// The projection `Q` with `ker Q = span{ker P, P e_i}`: the range of `P`
    /// with the direction `P e_i` removed.
    pub fn removal(&self, i: usize) -> Result<ProjectionSpec> {
        if i >= self.ambient {
            return Err(Error::InvalidArgument(format!("coordinate {i} out of range")));
        }
        if self.dim() == 0 {
            return Err(Error::UndefinedRemoval { index: i });
        }
        let w = self.column(i);
        let norm = dot(&w, &w).sqrt();
        if norm <= 1e-12 {
            return Err(Error::UndefinedRemoval { index: i });
        }
        let mut span = vec![w.iter().map(|x| x / norm).collect::<Vec<f64>>()];
        span.extend(self.basis.iter().cloned());
        let mut basis = orthonormalize(&span, 1e-9);
        basis.remove(0);
        basis.truncate(self.dim() - 1);
        Ok(ProjectionSpec { basis, ambient: self.ambient })
    }

    /// Coefficients `a_j` with `P x = (Σ a_j x_j) P e_i + Q x`; `a_i = 1`.
    pub fn removal_coefficients(&self, i: usize) -> Result<Vec<f64>> {
        let w = self.column(i);
        let sq = dot(&w, &w);
        if sq.sqrt() <= 1e-12 {
            return Err(Error::UndefinedRemoval { index: i });
        }
        Ok(w.iter().map(|x| x / sq).collect())
    }
}

/// Volume of the Euclidean ball of radius `t` in `R^d`,
/// `π^{d/2} t^d / Γ(d/2 + 1)`.
pub fn ball_volume(d: usize, t: f64) -> f64 {
    // V_0 = 1, V_1 = 2, V_d = V_{d-2} · 2π / d for the unit ball
    let mut unit = if d % 2 == 0 { 1.0 } else { 2.0 };
    let mut k = if d % 2 == 0 { 2 } else { 3 };
    while k <= d {
        unit *= 2.0 * std::f64::consts::PI / k as f64;
        k += 2;
    }
    unit * t.powi(d as i32)
}
