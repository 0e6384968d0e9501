//! Exact small-ball probabilities for discrete product laws.

use std::collections::HashMap;
#[cfg(test)]
use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::geometry::{circumcenter, dist_sq, radius_slack, within};
use crate::distributions::{window_max, Atom, CoordinateDistribution};
use crate::error::{Error, Result};
use crate::spectral::svd_dense;

/// Atom-combination budget for one-dimensional sums.
pub const SUM_BUDGET: f64 = 2e6;
/// Atom-combination budget for the multi-dimensional oracle.
pub const MULTI_BUDGET: f64 = 1e5;

/// Independent discrete coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteProductLaw {
    coordinates: Vec<Vec<Atom>>,
}

impl DiscreteProductLaw {
    pub fn new(coords: &[CoordinateDistribution]) -> Result<Self> {
        let coordinates = coords
            .iter()
            .enumerate()
            .map(|(i, c)| {
                c.validate()?;
                c.atoms().map(|a| a.to_vec()).ok_or_else(|| {
                    Error::InvalidDistribution(format!("coordinate {i} is not discrete"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(DiscreteProductLaw { coordinates })
    }

    pub fn len(&self) -> usize {
        self.coordinates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coordinates.is_empty()
    }

    /// Number of atom combinations.
    pub fn combinations(&self) -> f64 {
        self.coordinates.iter().map(|c| c.len() as f64).product()
    }

    fn check_budget(&self, budget: f64) -> Result<()> {
        let atoms = self.combinations();
        if atoms > budget {
            Err(Error::BudgetExceeded { atoms, budget })
        } else {
            Ok(())
        }
    }

    /// Every image `M x` with its probability, as a flat point array of
    /// dimension `M.nrows()`.
    fn images(&self, map: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
        let dim = map.nrows();
        let count = self.combinations() as usize;
        let mut points = Vec::with_capacity(count * dim);
        let mut probs = Vec::with_capacity(count);
        let mut partial = vec![0.0; dim];
        self.descend(map, 0, &mut partial, 1.0, &mut points, &mut probs);
        (points, probs)
    }

    fn descend(
        &self,
        map: &DMatrix<f64>,
        j: usize,
        partial: &mut Vec<f64>,
        prob: f64,
        points: &mut Vec<f64>,
        probs: &mut Vec<f64>,
    ) {
        if j == self.coordinates.len() {
            points.extend_from_slice(partial);
            probs.push(prob);
            return;
        }
        for atom in &self.coordinates[j] {
            for (r, p) in partial.iter_mut().enumerate() {
                *p += map[(r, j)] * atom.value;
            }
            self.descend(map, j + 1, partial, prob * atom.prob, points, probs);
            for (r, p) in partial.iter_mut().enumerate() {
                *p -= map[(r, j)] * atom.value;
            }
        }
    }
}

/// Exact `max_u P(|Σ a_j X_j − u| ≤ s)`.
pub fn exact_small_ball_1d(law: &DiscreteProductLaw, weights: &[f64], s: f64) -> Result<f64> {
    if weights.len() != law.len() {
        return Err(Error::DimensionMismatch { expected: law.len(), got: weights.len() });
    }
    if !(s >= 0.0) {
        return Err(Error::NegativeRadius(s));
    }
    law.check_budget(SUM_BUDGET)?;
    let map = DMatrix::from_row_slice(1, weights.len(), weights);
    let (values, probs) = law.images(&map);
    let mut pts: Vec<(f64, f64)> = values.into_iter().zip(probs).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    // collapse sums equal up to 1e-12
    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
    for (v, p) in pts {
        match merged.last_mut() {
            Some(last) if (v - last.0).abs() <= 1e-12 * (1.0 + v.abs()) => last.1 += p,
            _ => merged.push((v, p)),
        }
    }
    Ok(window_max(&mut merged, s))
}

/// Result of the multi-dimensional oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmallBallOptimum {
    pub probability: f64,
    /// A maximising center, in the coordinates of `A`'s range.
    pub center: Vec<f64>,
}

/// `A` restricted to at most three effective dimensions: `map` sends `x` to
/// coordinates in which distances agree with those of `A x`, and `lift`
/// (when present) maps those coordinates back into `A`'s range.
struct ReducedMap {
    map: DMatrix<f64>,
    lift: Option<DMatrix<f64>>,
}

impl ReducedMap {
    fn new(a: &DMatrix<f64>) -> Result<Self> {
        if a.nrows() <= 3 {
            return Ok(ReducedMap { map: a.clone(), lift: None });
        }
        let sd = svd_dense(a);
        let rank = sd.rank();
        if rank > 3 {
            return Err(Error::DimensionTooLarge(rank));
        }
        let vs = sd.right_vectors.as_ref().expect("dense svd has vectors");
        let us = sd.left_vectors.as_ref().expect("dense svd has vectors");
        let map = DMatrix::from_fn(rank, a.ncols(), |i, j| sd.singular_values[i] * vs[i][j]);
        let lift = DMatrix::from_fn(a.nrows(), rank, |i, j| us[j][i]);
        Ok(ReducedMap { map, lift: Some(lift) })
    }

    fn lift(&self, c: &[f64]) -> Vec<f64> {
        match &self.lift {
            None => c.to_vec(),
            Some(l) => (0..l.nrows()).map(|i| (0..l.ncols()).map(|j| l[(i, j)] * c[j]).sum()).collect(),
        }
    }
}

/// Distinct image points with merged probabilities.
struct PointSet {
    dim: usize,
    coords: Vec<f64>,
    probs: Vec<f64>,
}

impl PointSet {
    fn build(law: &DiscreteProductLaw, map: &DMatrix<f64>) -> Self {
        let dim = map.nrows();
        let (coords, probs) = law.images(map);
        let mut index: HashMap<Vec<i64>, usize> = HashMap::new();
        let mut out = PointSet { dim, coords: Vec::new(), probs: Vec::new() };
        for (k, p) in probs.iter().enumerate() {
            let pt = &coords[k * dim..(k + 1) * dim];
            let key: Vec<i64> = pt.iter().map(|x| (x * 1e9).round() as i64).collect();
            match index.get(&key) {
                Some(&i) => out.probs[i] += p,
                None => {
                    index.insert(key, out.probs.len());
                    out.coords.extend_from_slice(pt);
                    out.probs.push(*p);
                }
            }
        }
        out
    }

    fn len(&self) -> usize {
        self.probs.len()
    }

    fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    /// For each point, the indices within `2s` (itself included).
    fn neighbours(&self, s: f64) -> Vec<Vec<usize>> {
        let reach = 2.0 * s + 2.0 * radius_slack(s);
        let reach_sq = reach * reach;
        (0..self.len())
            .into_par_iter()
            .map(|i| {
                let pi = self.point(i);
                (0..self.len()).filter(|&j| dist_sq(pi, self.point(j)) <= reach_sq).collect()
            })
            .collect()
    }
}

/// Visits the circumcenter of every affinely independent subset of at most
/// `dim + 1` points that contains `anchor`, draws its other members from
/// `pool`, keeps them pairwise within `2s`, and has circumradius at most `s`.
fn for_each_center<F: FnMut(&[f64])>(pts: &PointSet, anchor: usize, pool: &[usize], s: f64, mut visit: F) {
    let reach = 2.0 * s + 2.0 * radius_slack(s);
    let reach_sq = reach * reach;
    let mut chosen = vec![anchor];
    fn rec<F: FnMut(&[f64])>(
        pts: &PointSet,
        pool: &[usize],
        start: usize,
        chosen: &mut Vec<usize>,
        s: f64,
        reach_sq: f64,
        visit: &mut F,
    ) {
        let refs: Vec<&[f64]> = chosen.iter().map(|&i| pts.point(i)).collect();
        let Some(center) = circumcenter(&refs) else {
            // supersets of a dependent set are dependent
            return;
        };
        if within(&center, refs[0], s) {
            visit(&center);
        }
        if chosen.len() > pts.dim {
            return;
        }
        for k in start..pool.len() {
            let j = pool[k];
            let pj = pts.point(j);
            if chosen.iter().all(|&c| dist_sq(pts.point(c), pj) <= reach_sq) {
                chosen.push(j);
                rec(pts, pool, k + 1, chosen, s, reach_sq, visit);
                chosen.pop();
            }
        }
    }
    rec(pts, pool, 0, &mut chosen, s, reach_sq, &mut visit);
}

fn effective_map(a: &DMatrix<f64>, law: &DiscreteProductLaw, s: f64) -> Result<ReducedMap> {
    if a.ncols() != law.len() {
        return Err(Error::DimensionMismatch { expected: law.len(), got: a.ncols() });
    }
    if !(s >= 0.0) {
        return Err(Error::NegativeRadius(s));
    }
    law.check_budget(MULTI_BUDGET)?;
    ReducedMap::new(a)
}

/// Exact `L(AX, s) = max_u P(‖AX − u‖₂ ≤ s)` for a discrete product law and
/// `A` of effective dimension at most three.
///
/// Some optimal ball has an image point on its boundary, and in three
/// dimensions (when it covers two or more points) two of them. On a line
/// that leaves a window sweep; in the plane the centers through one point
/// form a circle, in space those through two points do, and every other
/// point covers an arc of that circle.
pub fn exact_small_ball_multi(law: &DiscreteProductLaw, a: &DMatrix<f64>, s: f64) -> Result<SmallBallOptimum> {
    let reduced = effective_map(a, law, s)?;
    let pts = PointSet::build(law, &reduced.map);
    let (probability, center) = match pts.dim {
        1 => line_sweep(&pts, s),
        _ if s == 0.0 => {
            let i = (0..pts.len()).fold(0, |b, i| if pts.probs[i] > pts.probs[b] { i } else { b });
            (pts.probs[i], pts.point(i).to_vec())
        }
        _ => branch_and_bound(&pts, s),
    };
    Ok(SmallBallOptimum { probability: probability.min(1.0), center: reduced.lift(&center) })
}

/// Windows `[x_i, x_i + 2s]` over the sorted points.
fn line_sweep(pts: &PointSet, s: f64) -> (f64, Vec<f64>) {
    let mut order: Vec<usize> = (0..pts.len()).collect();
    order.sort_by(|&i, &j| pts.coords[i].total_cmp(&pts.coords[j]));
    let xs: Vec<f64> = order.iter().map(|&i| pts.coords[i]).collect();
    let mut prefix = vec![0.0];
    for &i in &order {
        prefix.push(prefix.last().unwrap() + pts.probs[i]);
    }
    let reach = 2.0 * s + radius_slack(s);
    let (mut best, mut center) = (f64::NEG_INFINITY, 0.0);
    let mut j = 0;
    for i in 0..xs.len() {
        j = j.max(i);
        while j < xs.len() && xs[j] - xs[i] <= reach {
            j += 1;
        }
        let mass = prefix[j] - prefix[i];
        if mass > best + 1e-15 {
            best = mass;
            center = xs[i] + s;
        }
    }
    (best, vec![center])
}

/// Arcs `[start, end]` of a circle of centers, as sweep events.
#[derive(Default)]
struct ArcSweep {
    always: f64,
    wrapped: f64,
    events: Vec<(f64, bool, f64)>,
}

impl ArcSweep {
    /// Adds a point covered where `h cos(α − φ) ≥ k`.
    fn add(&mut self, w: f64, h: f64, phi: f64, k: f64) {
        use std::f64::consts::TAU;
        if h == 0.0 || k / h <= -1.0 {
            if k <= 0.0 {
                self.always += w;
            }
            return;
        }
        let cos_half = k / h;
        if cos_half > 1.0 {
            return;
        }
        let half = cos_half.acos();
        let (start, end) = ((phi - half).rem_euclid(TAU), (phi + half).rem_euclid(TAU));
        if start > end {
            self.wrapped += w;
        }
        self.events.push((start, false, w));
        self.events.push((end, true, -w));
    }

    /// Largest covered mass and an angle inside the best arc. The midpoint
    /// of the arc keeps the center off the slack boundary.
    fn best(mut self) -> (f64, f64) {
        use std::f64::consts::TAU;
        // opening events sort first at equal angles
        self.events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut current = self.always + self.wrapped;
        let (mut best, mut angle) = (current, self.events.first().map_or(0.0, |e| 0.5 * e.0));
        for (k, &(at, closing, w)) in self.events.iter().enumerate() {
            current += w;
            if !closing && current > best + 1e-15 {
                best = current;
                let next = self.events.get(k + 1).map_or(self.events[0].0 + TAU, |e| e.0);
                angle = 0.5 * (at + next);
            }
        }
        (best, angle)
    }
}

/// Centers `p + s(cos α, sin α)` around the anchor `p`.
fn plane_anchor(pts: &PointSet, i: usize, nbrs: &[usize], s: f64) -> (f64, Vec<f64>) {
    let r = s + radius_slack(s);
    let p = pts.point(i);
    let mut sweep = ArcSweep::default();
    for &j in nbrs {
        let q = pts.point(j);
        let (dx, dy) = (q[0] - p[0], q[1] - p[1]);
        let d_sq = dx * dx + dy * dy;
        // ‖c − q‖² = s² + d² − 2 s d cos(α − θ) ≤ r²
        sweep.add(pts.probs[j], 2.0 * s * d_sq.sqrt(), dy.atan2(dx), s * s + d_sq - r * r);
    }
    let (mass, angle) = sweep.best();
    (mass + pts.probs[i], vec![p[0] + s * angle.cos(), p[1] + s * angle.sin()])
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn unit3(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

/// Balls with `p` and `q` on the boundary: their centers
/// `m + ρ(cos α u + sin α v)` circle the midpoint `m` of `p q` in the
/// bisecting plane. `nbrs` must hold every point within `2s` of `p`.
fn pair_circle(pts: &PointSet, i: usize, j: usize, nbrs: &[usize], s: f64) -> (f64, Vec<f64>) {
    let r = s + radius_slack(s);
    let (p, q) = (pts.point(i), pts.point(j));
    let m = [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1]), 0.5 * (p[2] + q[2])];
    let axis = [q[0] - p[0], q[1] - p[1], q[2] - p[2]];
    let half_sq = 0.25 * (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]);
    let rho = (s * s - half_sq).max(0.0).sqrt();
    let n = unit3(axis);
    let helper = if n[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let u = unit3(cross(n, helper));
    let v = cross(n, u);
    let mut sweep = ArcSweep::default();
    for &k in nbrs {
        let x = pts.point(k);
        let e = [x[0] - m[0], x[1] - m[1], x[2] - m[2]];
        let (a, b) = (e[0] * u[0] + e[1] * u[1] + e[2] * u[2], e[0] * v[0] + e[1] * v[1] + e[2] * v[2]);
        let e_sq = e[0] * e[0] + e[1] * e[1] + e[2] * e[2];
        // ‖c − x‖² = ‖e‖² + ρ² − 2ρ (a cos α + b sin α) ≤ r²
        sweep.add(pts.probs[k], 2.0 * rho * a.hypot(b), b.atan2(a), e_sq + rho * rho - r * r);
    }
    let (mass, angle) = sweep.best();
    let (c, sn) = (rho * angle.cos(), rho * angle.sin());
    (mass + pts.probs[i], (0..3).map(|t| m[t] + c * u[t] + sn * v[t]).collect())
}

/// Points bucketed on a cubic grid, for mass and neighbour queries in a ball.
struct GridIndex {
    cell: f64,
    buckets: HashMap<Vec<i64>, (f64, Vec<usize>)>,
}

impl GridIndex {
    fn new(pts: &PointSet, cell: f64) -> Self {
        let mut buckets: HashMap<Vec<i64>, (f64, Vec<usize>)> = HashMap::new();
        for i in 0..pts.len() {
            let key: Vec<i64> = pts.point(i).iter().map(|x| (x / cell).floor() as i64).collect();
            let b = buckets.entry(key).or_default();
            b.0 += pts.probs[i];
            b.1.push(i);
        }
        GridIndex { cell, buckets }
    }

    /// Calls `whole(mass)` for buckets inside the closed ball and `each(i)`
    /// for points of buckets that straddle its boundary.
    fn visit(&self, c: &[f64], radius: f64, mut whole: impl FnMut(f64, &[usize]), mut each: impl FnMut(usize)) {
        let lo: Vec<i64> = c.iter().map(|x| ((x - radius) / self.cell).floor() as i64).collect();
        let hi: Vec<i64> = c.iter().map(|x| ((x + radius) / self.cell).floor() as i64).collect();
        let r_sq = radius * radius;
        let mut key = lo.clone();
        loop {
            if let Some((mass, members)) = self.buckets.get(&key) {
                let (mut near, mut far) = (0.0, 0.0);
                for (k, x) in key.iter().zip(c) {
                    let (a, b) = (*k as f64 * self.cell, (*k + 1) as f64 * self.cell);
                    let gap = (a - x).max(x - b).max(0.0);
                    let span = (x - a).abs().max((b - x).abs());
                    near += gap * gap;
                    far += span * span;
                }
                if far <= r_sq {
                    whole(*mass, members);
                } else if near <= r_sq {
                    members.iter().for_each(|&i| each(i));
                }
            }
            let mut axis = 0;
            loop {
                if axis == key.len() {
                    return;
                }
                if key[axis] < hi[axis] {
                    key[axis] += 1;
                    break;
                }
                key[axis] = lo[axis];
                axis += 1;
            }
        }
    }

    fn mass_within(&self, pts: &PointSet, c: &[f64], radius: f64) -> f64 {
        let r_sq = radius * radius;
        let mut total = 0.0;
        let mut partial = 0.0;
        self.visit(c, radius, |m, _| total += m, |i| {
            if dist_sq(c, pts.point(i)) <= r_sq {
                partial += pts.probs[i];
            }
        });
        total + partial
    }

    fn within(&self, pts: &PointSet, c: &[f64], radius: f64) -> Vec<usize> {
        let r_sq = radius * radius;
        let mut out = Vec::new();
        let mut inside = Vec::new();
        self.visit(c, radius, |_, members| inside.extend_from_slice(members), |i| {
            if dist_sq(c, pts.point(i)) <= r_sq {
                out.push(i);
            }
        });
        out.extend(inside);
        out.sort_unstable();
        out
    }
}

/// A cube of candidate centers with an upper bound on any ball centered in it.
struct CenterCell {
    upper: f64,
    mid: Vec<f64>,
    half: f64,
}

impl PartialEq for CenterCell {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == std::cmp::Ordering::Equal
    }
}
impl Eq for CenterCell {}
impl PartialOrd for CenterCell {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for CenterCell {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.upper.total_cmp(&other.upper).then_with(|| {
            other.mid.iter().zip(&self.mid).map(|(a, b)| a.total_cmp(b)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
        })
    }
}

/// Best-first branch and bound over cubes of centers. A cube with midpoint
/// `m` and half-diagonal `δ` is bounded by the mass within `s + δ` of `m`.
/// Cubes smaller than `s/1024` are settled exactly from the ring of points
/// at distance `s ± δ` of `m`: in the plane by a circle sweep around each of
/// them, in space by a circle sweep for each pair of them. Some optimal ball
/// centered in the cube has one (plane) or two (space) such points on its
/// boundary; a ball covering a single point is found by the initial pass.
fn branch_and_bound(pts: &PointSet, s: f64) -> (f64, Vec<f64>) {
    let dim = pts.dim;
    let r = s + radius_slack(s);
    let index = GridIndex::new(pts, s);
    let root_dim = (dim as f64).sqrt();
    let leaf = s / 1024.0;

    let mut best = (f64::NEG_INFINITY, Vec::new());
    for i in 0..pts.len() {
        let m = index.mass_within(pts, pts.point(i), r);
        if m > best.0 + 1e-15 {
            best = (m, pts.point(i).to_vec());
        }
    }
    let total: f64 = pts.probs.iter().sum();
    if best.0 >= total - 1e-12 {
        return best;
    }

    let (mut lo, mut hi) = (vec![f64::INFINITY; dim], vec![f64::NEG_INFINITY; dim]);
    for i in 0..pts.len() {
        for (k, x) in pts.point(i).iter().enumerate() {
            lo[k] = lo[k].min(*x);
            hi[k] = hi[k].max(*x);
        }
    }
    let half = (0..dim).map(|k| 0.5 * (hi[k] - lo[k])).fold(0.0, f64::max) + s;
    let mid: Vec<f64> = (0..dim).map(|k| 0.5 * (lo[k] + hi[k])).collect();
    let bound = |mid: &[f64], half: f64| index.mass_within(pts, mid, r + half * root_dim + 1e-12 * (1.0 + s));

    let mut heap = std::collections::BinaryHeap::new();
    heap.push(CenterCell { upper: bound(&mid, half), mid, half });
    // anchors (i, i) in the plane, boundary pairs (i, j) with i < j in space
    let mut settled: std::collections::HashSet<(usize, usize)> = std::collections::HashSet::new();
    while let Some(cell) = heap.pop() {
        if cell.upper <= best.0 + 1e-12 {
            break;
        }
        let here = index.mass_within(pts, &cell.mid, r);
        if here > best.0 + 1e-15 {
            best = (here, cell.mid.clone());
        }
        let delta = cell.half * root_dim;
        if delta <= leaf {
            let slack = delta + 1e-12 * (1.0 + s);
            let ring: Vec<usize> = index
                .within(pts, &cell.mid, r + slack)
                .into_iter()
                .filter(|&i| dist_sq(&cell.mid, pts.point(i)).sqrt() >= s - slack)
                .collect();
            let near = |i: usize| -> Vec<usize> {
                index.within(pts, pts.point(i), s + r).into_iter().filter(|&j| j != i).collect()
            };
            for (pos, &i) in ring.iter().enumerate() {
                let found = if dim == 2 {
                    if !settled.insert((i, i)) {
                        continue;
                    }
                    plane_anchor(pts, i, &near(i), s)
                } else {
                    let partners: Vec<usize> = ring[pos + 1..]
                        .iter()
                        .copied()
                        .filter(|&j| settled.insert((i, j)) && dist_sq(pts.point(i), pts.point(j)) <= (s + r) * (s + r))
                        .collect();
                    if partners.is_empty() {
                        continue;
                    }
                    let nbrs = near(i);
                    partners
                        .iter()
                        .map(|&j| pair_circle(pts, i, j, &nbrs, s))
                        .fold((f64::NEG_INFINITY, Vec::new()), |acc, x| if x.0 > acc.0 + 1e-15 { x } else { acc })
                };
                if found.0 > best.0 + 1e-15 {
                    best = found;
                }
            }
            continue;
        }
        let h = 0.5 * cell.half;
        for corner in 0..1usize << dim {
            let mid: Vec<f64> =
                (0..dim).map(|k| cell.mid[k] + if corner >> k & 1 == 1 { h } else { -h }).collect();
            let upper = bound(&mid, h);
            if upper > best.0 + 1e-12 {
                heap.push(CenterCell { upper, mid, half: h });
            }
        }
    }
    best
}

/// Larger mass wins; within `1e-12` the lower anchor index does.
#[cfg(test)]
fn prefer_earlier(a: (f64, usize, Vec<f64>), b: (f64, usize, Vec<f64>)) -> (f64, usize, Vec<f64>) {
    if b.0 > a.0 + 1e-12 || ((b.0 - a.0).abs() <= 1e-12 && b.1 < a.1) {
        b
    } else {
        a
    }
}

/// Reference optimum: an optimal ball can be shrunk to the minimum enclosing
/// ball of the images it covers, which is the circumscribed ball of at most
/// `d + 1` of them, so enumerating those circumcenters is exhaustive.
#[cfg(test)]
fn enumerate_circumcenters(pts: &PointSet, s: f64) -> (f64, Vec<f64>) {
    let nbrs = pts.neighbours(s);
    let reach_mass: Vec<f64> = nbrs.iter().map(|ns| ns.iter().map(|&j| pts.probs[j]).sum()).collect();
    let mut order: Vec<usize> = (0..pts.len()).collect();
    order.sort_by(|&i, &j| reach_mass[j].total_cmp(&reach_mass[i]).then(i.cmp(&j)));
    let mut rank = vec![0usize; pts.len()];
    for (pos, &i) in order.iter().enumerate() {
        rank[i] = pos;
    }
    let total: f64 = pts.probs.iter().sum();
    let best_bits = AtomicU64::new(0f64.to_bits());

    let per_anchor: Vec<(f64, usize, Vec<f64>)> = order
        .par_iter()
        .filter_map(|&anchor| {
            let best = f64::from_bits(best_bits.load(Ordering::Relaxed));
            if reach_mass[anchor] < best - 1e-12 || best >= total - 1e-12 {
                return None;
            }
            let pool: Vec<usize> = nbrs[anchor].iter().copied().filter(|&j| rank[j] > rank[anchor]).collect();
            let mut local = (f64::NEG_INFINITY, Vec::new());
            for_each_center(pts, anchor, &pool, s, |c| {
                let mass: f64 = nbrs[anchor]
                    .iter()
                    .filter(|&&j| within(c, pts.point(j), s))
                    .map(|&j| pts.probs[j])
                    .sum();
                if mass > local.0 {
                    local = (mass, c.to_vec());
                }
            });
            best_bits.fetch_max(local.0.max(0.0).to_bits(), Ordering::Relaxed);
            Some((local.0, rank[anchor], local.1))
        })
        .collect();

    let (probability, _, center) = per_anchor.into_iter().reduce(prefer_earlier).expect("at least one atom");
    (probability, center)
}

/// Circumcenters of every set of at most `d + 1` images whose circumball has
/// radius at most `s`, lifted into `A`'s range. The set contains an optimal
/// center; it is the full candidate set for Monte Carlo concentration
/// estimates.
pub fn candidate_centers(law: &DiscreteProductLaw, a: &DMatrix<f64>, s: f64) -> Result<Vec<Vec<f64>>> {
    let reduced = effective_map(a, law, s)?;
    let pts = PointSet::build(law, &reduced.map);
    let nbrs = pts.neighbours(s);
    let mut out = Vec::new();
    for anchor in 0..pts.len() {
        let pool: Vec<usize> = nbrs[anchor].iter().copied().filter(|&j| j > anchor).collect();
        for_each_center(&pts, anchor, &pool, s, |c| out.push(reduced.lift(c)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::RandomStream;
    use crate::spectral::ProjectionSpec;
    use proptest::prelude::*;
    use rand::Rng;

    fn rademacher_law(n: usize) -> DiscreteProductLaw {
        DiscreteProductLaw::new(&vec![CoordinateDistribution::rademacher(); n]).unwrap()
    }

    /// Brute-force oracle: best ball over a dense grid of centers. Only ever
    /// a lower bound, and exact when the optimum lies on the grid.
    fn grid_lower_bound(law: &DiscreteProductLaw, a: &DMatrix<f64>, s: f64, lo: f64, hi: f64, steps: usize) -> f64 {
        let (pts, probs) = law.images(a);
        let d = a.nrows();
        let mut best = 0.0f64;
        let grid: Vec<f64> = (0..=steps).map(|k| lo + (hi - lo) * k as f64 / steps as f64).collect();
        let mut idx = vec![0usize; d];
        loop {
            let c: Vec<f64> = idx.iter().map(|&k| grid[k]).collect();
            let m: f64 = probs
                .iter()
                .enumerate()
                .filter(|(k, _)| within(&c, &pts[k * d..(k + 1) * d], s))
                .map(|(_, p)| p)
                .sum();
            best = best.max(m);
            let mut pos = 0;
            loop {
                if pos == d {
                    return best;
                }
                idx[pos] += 1;
                if idx[pos] <= steps {
                    break;
                }
                idx[pos] = 0;
                pos += 1;
            }
        }
    }

    #[test]
    fn sum_examples() {
        let law = rademacher_law(2);
        let a = [1.0 / 2f64.sqrt(); 2];
        assert!((exact_small_ball_1d(&law, &a, 0.1).unwrap() - 0.5).abs() < 1e-15);
        let one = rademacher_law(1);
        assert_eq!(exact_small_ball_1d(&one, &[1.0], 1.0).unwrap(), 1.0);
        let skew = DiscreteProductLaw::new(&[
            CoordinateDistribution::discrete(&[(0.0, 0.7), (1.0, 0.3)]).unwrap(),
            CoordinateDistribution::discrete(&[(0.0, 0.6), (2.0, 0.4)]).unwrap(),
        ])
        .unwrap();
        // largest atom of the sum: P(0 + 0) = 0.42
        assert!((exact_small_ball_1d(&skew, &[1.0, 1.0], 0.0).unwrap() - 0.42).abs() < 1e-15);
    }

    #[test]
    fn multi_examples() {
        let law = rademacher_law(2);
        let id = DMatrix::identity(2, 2);
        let opt = exact_small_ball_multi(&law, &id, 1.0).unwrap();
        assert!((opt.probability - 0.5).abs() < 1e-15);
        assert_eq!(exact_small_ball_multi(&law, &id, 1.5).unwrap().probability, 1.0);
        assert_eq!(exact_small_ball_multi(&law, &id, 0.0).unwrap().probability, 0.25);
        assert!((exact_small_ball_multi(&law, &id, 0.999).unwrap().probability - 0.25).abs() < 1e-15);
    }

    #[test]
    fn rejects_out_of_scope_inputs() {
        let law = rademacher_law(4);
        assert!(matches!(
            exact_small_ball_multi(&law, &DMatrix::identity(4, 4), 1.0),
            Err(Error::DimensionTooLarge(4))
        ));
        let big = rademacher_law(17);
        assert!(matches!(
            exact_small_ball_multi(&big, &DMatrix::identity(3, 17), 1.0),
            Err(Error::BudgetExceeded { .. })
        ));
        assert!(DiscreteProductLaw::new(&[CoordinateDistribution::unit_uniform()]).is_err());
        assert!(matches!(
            exact_small_ball_1d(&law, &[1.0, 0.0], 1.0),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn rank_deficient_tall_matrix_is_reduced() {
        // 5 × 3 matrix of rank 2: distances of images are preserved by the reduction
        let law = DiscreteProductLaw::new(&[
            CoordinateDistribution::discrete(&[(0.0, 0.5), (1.0, 0.5)]).unwrap(),
            CoordinateDistribution::discrete(&[(0.0, 0.25), (1.0, 0.75)]).unwrap(),
            CoordinateDistribution::discrete(&[(-1.0, 0.5), (2.0, 0.5)]).unwrap(),
        ])
        .unwrap();
        let b = DMatrix::from_row_slice(2, 3, &[1.0, 0.5, 0.2, -0.3, 1.0, 0.4]);
        let lift = DMatrix::from_row_slice(5, 2, &[0.6, 0.0, 0.8, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        let tall = &lift * &b;
        for s in [0.0, 0.3, 0.7, 1.2] {
            let small = exact_small_ball_multi(&law, &b, s).unwrap();
            let big = exact_small_ball_multi(&law, &tall, s).unwrap();
            assert!((small.probability - big.probability).abs() < 1e-12, "s={s}");
            assert_eq!(big.center.len(), 5);
        }
    }

    #[test]
    fn reported_center_achieves_the_probability() {
        let mut rng = RandomStream::new(3, 3).rng();
        let law = DiscreteProductLaw::new(&[
            CoordinateDistribution::discrete(&[(0.0, 0.2), (1.0, 0.5), (3.0, 0.3)]).unwrap(),
            CoordinateDistribution::rademacher(),
            CoordinateDistribution::discrete(&[(0.0, 0.6), (1.5, 0.4)]).unwrap(),
            CoordinateDistribution::rademacher(),
        ])
        .unwrap();
        let a = DMatrix::from_fn(3, 4, |_, _| rng.gen_range(-1.0..1.0));
        let (pts, probs) = law.images(&a);
        for s in [0.2, 0.5, 1.0] {
            let opt = exact_small_ball_multi(&law, &a, s).unwrap();
            let m: f64 = probs
                .iter()
                .enumerate()
                .filter(|(k, _)| within(&opt.center, &pts[k * 3..(k + 1) * 3], s))
                .map(|(_, p)| p)
                .sum();
            assert!((m - opt.probability).abs() < 1e-12);
        }
    }

    #[test]
    fn dominates_grid_search_in_two_dimensions() {
        let mut rng = RandomStream::new(5, 1).rng();
        for trial in 0..6 {
            let n = 3 + trial % 3;
            let law = DiscreteProductLaw::new(&vec![
                CoordinateDistribution::discrete(&[(-1.0, 0.3), (0.0, 0.3), (1.0, 0.4)]).unwrap();
                n
            ])
            .unwrap();
            let p = ProjectionSpec::random(n, 2, &mut rng);
            let a = p.basis_matrix();
            for s in [0.3, 0.6, 1.0] {
                let exact = exact_small_ball_multi(&law, &a, s).unwrap().probability;
                let grid = grid_lower_bound(&law, &a, s, -2.5, 2.5, 200);
                assert!(exact >= grid - 1e-12, "trial {trial} s {s}: {exact} < {grid}");
                // a slightly larger ball around the grid optimum must catch up
                let grid_wide = grid_lower_bound(&law, &a, s + 0.04, -2.5, 2.5, 200);
                assert!(exact <= grid_wide + 1e-12, "trial {trial} s {s}: {exact} > {grid_wide}");
            }
        }
    }

    #[test]
    fn candidate_centers_contain_the_optimum() {
        let law = rademacher_law(4);
        let p = ProjectionSpec::coordinate(4, &[0, 2]).unwrap();
        let a = p.basis_matrix();
        let (pts, probs) = law.images(&a);
        let opt = exact_small_ball_multi(&law, &a, 1.0).unwrap();
        let best = candidate_centers(&law, &a, 1.0)
            .unwrap()
            .iter()
            .map(|c| {
                probs
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| within(c, &pts[k * 2..(k + 1) * 2], 1.0))
                    .map(|(_, p)| p)
                    .sum::<f64>()
            })
            .fold(0.0, f64::max);
        assert!((best - opt.probability).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn one_dimensional_views_agree(seed in 0u64..10_000, n in 1usize..7, s in 0.0..2.5f64) {
            let mut rng = RandomStream::new(seed, 2).rng();
            let law = DiscreteProductLaw::new(&(0..n).map(|_| {
                let k = rng.gen_range(1..4);
                let w: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..1.0)).collect();
                let tot: f64 = w.iter().sum();
                CoordinateDistribution::discrete(&(0..k).map(|i| (rng.gen_range(-2i32..3) as f64 * 0.5, w[i] / tot)).collect::<Vec<_>>()).unwrap()
            }).collect::<Vec<_>>()).unwrap();
            let dir = ProjectionSpec::random(n, 1, &mut rng);
            let a = dir.basis_matrix();
            let one = exact_small_ball_1d(&law, &dir.basis[0], s).unwrap();
            let multi = exact_small_ball_multi(&law, &a, s).unwrap().probability;
            prop_assert!((one - multi).abs() < 1e-12, "{} vs {}", one, multi);
        }

        #[test]
        fn sweeps_match_circumcenter_enumeration(seed in 0u64..10_000, n in 1usize..6, dim in 1usize..4,
                                                 lattice in any::<bool>(), s in 0.0..2.0f64) {
            let mut rng = RandomStream::new(seed, 5).rng();
            let law = DiscreteProductLaw::new(&(0..n).map(|_| {
                let k = rng.gen_range(1..4);
                let w: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..1.0)).collect();
                let tot: f64 = w.iter().sum();
                CoordinateDistribution::discrete(&(0..k).map(|i| (rng.gen_range(-2i32..3) as f64 * 0.5, w[i] / tot)).collect::<Vec<_>>()).unwrap()
            }).collect::<Vec<_>>()).unwrap();
            // lattice entries produce many ties and cocircular points
            let a = DMatrix::from_fn(dim, n, |_, _| {
                if lattice { rng.gen_range(-2i32..3) as f64 } else { rng.gen_range(-1.0..1.0) }
            });
            let s = if lattice { (s * 4.0).round() / 4.0 } else { s };
            let got = exact_small_ball_multi(&law, &a, s).unwrap();
            let pts = PointSet::build(&law, &a);
            let (want, _) = enumerate_circumcenters(&pts, s);
            prop_assert!((got.probability - want.min(1.0)).abs() < 1e-12, "{} vs {}", got.probability, want);
            let covered: f64 = (0..pts.len()).filter(|&j| within(&got.center, pts.point(j), s)).map(|j| pts.probs[j]).sum();
            prop_assert!((covered.min(1.0) - got.probability).abs() < 1e-9, "center covers {} not {}", covered, got.probability);
        }

        #[test]
        fn monotone_in_radius(seed in 0u64..10_000, s in 0.0..2.0f64, ds in 0.0..1.0f64) {
            let mut rng = RandomStream::new(seed, 4).rng();
            let law = rademacher_law(5);
            let a = ProjectionSpec::random(5, 2, &mut rng).basis_matrix();
            let lo = exact_small_ball_multi(&law, &a, s).unwrap().probability;
            let hi = exact_small_ball_multi(&law, &a, s + ds).unwrap().probability;
            prop_assert!(lo <= hi + 1e-12);
            prop_assert!(hi <= 1.0);
        }
    }
}
