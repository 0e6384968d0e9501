//! Small dense geometry for points in at most three dimensions.

/// Slack applied to every "inside the closed ball" test, shared by the exact
/// oracle and the Monte Carlo counters so both agree on boundary points.
pub fn radius_slack(s: f64) -> f64 {
    1e-9 * (1.0 + s)
}

#[inline]
pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `‖a − b‖ ≤ s` with [`radius_slack`].
#[inline]
pub fn within(a: &[f64], b: &[f64], s: f64) -> bool {
    let r = s + radius_slack(s);
    dist_sq(a, b) <= r * r
}

/// Center of the smallest sphere through `points` inside their affine hull
/// (the circumcenter), or `None` when the points are affinely dependent.
pub fn circumcenter(points: &[&[f64]]) -> Option<Vec<f64>> {
    let p0 = points[0];
    let k = points.len() - 1;
    if k == 0 {
        return Some(p0.to_vec());
    }
    let diffs: Vec<Vec<f64>> = points[1..]
        .iter()
        .map(|p| p.iter().zip(p0).map(|(a, b)| a - b).collect())
        .collect();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut g = vec![vec![0.0; k + 1]; k];
    let mut scale = 0.0f64;
    for i in 0..k {
        for j in 0..k {
            g[i][j] = dot(&diffs[i], &diffs[j]);
        }
        g[i][k] = 0.5 * g[i][i];
        scale = scale.max(g[i][i]);
    }
    let lambda = solve(&mut g, 1e-10 * scale.max(f64::MIN_POSITIVE))?;
    let mut c = p0.to_vec();
    for (l, d) in lambda.iter().zip(&diffs) {
        c.iter_mut().zip(d).for_each(|(ci, di)| *ci += l * di);
    }
    Some(c)
}

/// Gaussian elimination with partial pivoting on an augmented `k × (k+1)`
/// system; `None` when a pivot falls below `tiny`.
fn solve(a: &mut [Vec<f64>], tiny: f64) -> Option<Vec<f64>> {
    let k = a.len();
    for col in 0..k {
        let piv = (col..k).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() <= tiny {
            return None;
        }
        a.swap(col, piv);
        for row in col + 1..k {
            let f = a[row][col] / a[col][col];
            for c in col..=k {
                a[row][c] -= f * a[col][c];
            }
        }
    }
    let mut x = vec![0.0; k];
    for row in (0..k).rev() {
        let mut v = a[row][k];
        for c in row + 1..k {
            v -= a[row][c] * x[c];
        }
        x[row] = v / a[row][row];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circumcenter_of_right_triangle_is_hypotenuse_midpoint() {
        let pts: [&[f64]; 3] = [&[0.0, 0.0], &[2.0, 0.0], &[0.0, 2.0]];
        let c = circumcenter(&pts).unwrap();
        assert!((c[0] - 1.0).abs() < 1e-15 && (c[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn circumcenter_of_segment_in_3d() {
        let pts: [&[f64]; 2] = [&[1.0, 2.0, 3.0], &[3.0, 2.0, -1.0]];
        assert_eq!(circumcenter(&pts).unwrap(), vec![2.0, 2.0, 1.0]);
    }

    #[test]
    fn tetrahedron_center_is_equidistant() {
        let pts: [&[f64]; 4] = [&[0.0, 0.0, 0.0], &[1.0, 0.0, 0.0], &[0.2, 1.0, 0.0], &[0.1, 0.3, 0.9]];
        let c = circumcenter(&pts).unwrap();
        let r0 = dist_sq(&c, pts[0]);
        for p in &pts[1..] {
            assert!((dist_sq(&c, p) - r0).abs() < 1e-12);
        }
    }

    #[test]
    fn collinear_points_have_no_circumcenter() {
        let pts: [&[f64]; 3] = [&[0.0, 0.0], &[1.0, 1.0], &[2.0, 2.0]];
        assert!(circumcenter(&pts).is_none());
    }
}
