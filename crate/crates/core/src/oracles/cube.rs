//! Density at the origin of weighted sums of centred uniforms, i.e. the
//! normalised volume of a central section of a box.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::numeric::{adaptive_gl, sinc};

/// Absolute error allowance for the truncated Fourier tail.
const TAIL_TOL: f64 = 1e-10;

fn check_unit(a: &[f64]) -> Result<()> {
    let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(Error::NotUnitVector(norm));
    }
    Ok(())
}

/// Density at 0 of `Σ a_j U_j`, `U_j` uniform on `[−w_j/2, w_j/2]`.
///
/// With `α_j = |a_j| w_j` the value is `(1/π) ∫₀^∞ ∏ sinc(α_j τ/2) dτ`. One or
/// two active terms use the closed form `1 / max α_j`; more terms are
/// integrated on panels aligned with the zeros of the fastest factor, up to a
/// cutoff beyond which `∏ |sinc| ≤ ∏_{top k} 2/(α_j τ)` leaves at most `1e-10`.
pub fn cube_section_density(a: &[f64], widths: &[f64]) -> Result<f64> {
    if a.len() != widths.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), got: widths.len() });
    }
    check_unit(a)?;
    if let Some(w) = widths.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
        return Err(Error::InvalidArgument(format!("box width must be positive and finite, got {w}")));
    }
    let mut alpha: Vec<f64> = a
        .iter()
        .zip(widths)
        .map(|(x, w)| x.abs() * w)
        .filter(|&x| x > 0.0)
        .collect();
    alpha.sort_by(|x, y| y.total_cmp(x));
    match alpha.len() {
        0 => unreachable!("a unit vector has a nonzero entry"),
        1 | 2 => return Ok(1.0 / alpha[0]),
        _ => {}
    }

    // cutoff: best k of the tail bound (∏_{j<k} 2/α_j) τ^{1−k} / (π (k−1))
    let mut prod = 1.0;
    let mut cutoff = f64::INFINITY;
    for (idx, &al) in alpha.iter().enumerate() {
        prod *= 2.0 / al;
        let k = idx + 1;
        if k >= 2 {
            let t = (prod / (PI * (k - 1) as f64 * TAIL_TOL)).powf(1.0 / (k - 1) as f64);
            cutoff = cutoff.min(t);
        }
    }

    let integrand = |t: f64| alpha.iter().map(|&al| sinc(0.5 * al * t)).product::<f64>();
    let panel = 2.0 * PI / alpha[0];
    let panels = (cutoff / panel).ceil() as usize;
    let mut total = 0.0;
    for k in 0..panels {
        let lo = k as f64 * panel;
        let hi = ((k + 1) as f64 * panel).min(cutoff);
        total += adaptive_gl(&integrand, lo, hi, 1e-14);
    }
    Ok((total / PI).max(0.0))
}

/// Rogozin's extremal bound on the density of `Σ a_j X_j` when each `X_j`
/// has density at most `K_j`: the cube section with widths `1/K_j`.
pub fn rogozin_envelope(a: &[f64], density_bounds: &[f64]) -> Result<f64> {
    if let Some(k) = density_bounds.iter().find(|k| !k.is_finite() || !(**k > 0.0)) {
        return Err(Error::InvalidArgument(format!("density bound must be finite and positive, got {k}")));
    }
    let widths: Vec<f64> = density_bounds.iter().map(|k| 1.0 / k).collect();
    cube_section_density(a, &widths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::RandomStream;
    use proptest::prelude::*;
    use rand::Rng;

    /// Density of `Σ α_j W_j` (W_j uniform on [0,1]) at its midpoint, by the
    /// inclusion–exclusion formula for sums of uniforms.
    fn exact_center_density(alpha: &[f64]) -> f64 {
        let n = alpha.len();
        let x: f64 = alpha.iter().sum::<f64>() / 2.0;
        let mut acc = 0.0;
        for mask in 0u32..(1 << n) {
            let shift: f64 = (0..n).filter(|j| mask >> j & 1 == 1).map(|j| alpha[j]).sum();
            let sign = if mask.count_ones() % 2 == 0 { 1.0 } else { -1.0 };
            acc += sign * (x - shift).max(0.0).powi(n as i32 - 1);
        }
        let fact: f64 = (1..n).map(|k| k as f64).product();
        acc / (fact * alpha.iter().product::<f64>())
    }

    fn unit(v: Vec<f64>) -> Vec<f64> {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.into_iter().map(|x| x / n).collect()
    }

    #[test]
    fn examples() {
        assert_eq!(cube_section_density(&[1.0], &[1.0]).unwrap(), 1.0);
        let h = 1.0 / 2f64.sqrt();
        assert!((cube_section_density(&[h, h], &[1.0, 1.0]).unwrap() - 2f64.sqrt()).abs() < 1e-12);
        let s3 = 1.0 / 3f64.sqrt();
        let v = cube_section_density(&[s3; 3], &[1.0; 3]).unwrap();
        assert!(v > 1.0 && v < 2f64.sqrt());
        assert!((v - exact_center_density(&[s3; 3])).abs() < 1e-8, "{v}");
    }

    #[test]
    fn envelope_examples() {
        let h = 1.0 / 2f64.sqrt();
        assert!((rogozin_envelope(&[h, h], &[1.0, 1.0]).unwrap() - 2f64.sqrt()).abs() < 1e-12);
        assert!((rogozin_envelope(&[1.0, 0.0], &[4.0, 1.0]).unwrap() - 4.0).abs() < 1e-12);
        let a = unit(vec![0.3, 0.5, 0.2, 0.6]);
        let one = rogozin_envelope(&a, &[1.0; 4]).unwrap();
        let three = rogozin_envelope(&a, &[3.0; 4]).unwrap();
        assert!((three - 3.0 * one).abs() < 1e-8);
        assert!(rogozin_envelope(&a, &[1.0, f64::INFINITY, 1.0, 1.0]).is_err());
    }

    #[test]
    fn rejects_non_unit_vectors() {
        assert!(matches!(cube_section_density(&[1.0, 1.0], &[1.0, 1.0]), Err(Error::NotUnitVector(_))));
        assert!(cube_section_density(&[0.0], &[1.0]).is_err());
    }

    #[test]
    fn agrees_with_monte_carlo_convolution() {
        let s3 = 1.0 / 3f64.sqrt();
        let exact = cube_section_density(&[s3; 3], &[1.0; 3]).unwrap();
        let mut rng = RandomStream::new(11, 0).rng();
        let (n, h) = (1_000_000u32, 0.01);
        let hits = (0..n)
            .filter(|_| {
                let s: f64 = (0..3).map(|_| rng.gen::<f64>() - 0.5).sum::<f64>() * s3;
                s.abs() <= h
            })
            .count() as f64;
        let p = hits / n as f64;
        let est = p / (2.0 * h);
        let se = (p * (1.0 - p) / n as f64).sqrt() / (2.0 * h);
        assert!((est - exact).abs() < 3.0 * se + 1e-3, "{est} vs {exact} (se {se})");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn matches_inclusion_exclusion(raw in proptest::collection::vec(0.05..1.0f64, 3..7),
                                       widths in proptest::collection::vec(0.5..2.0f64, 7)) {
            let a = unit(raw);
            let w = &widths[..a.len()];
            let alpha: Vec<f64> = a.iter().zip(w).map(|(x, w)| x * w).collect();
            let got = cube_section_density(&a, w).unwrap();
            let want = exact_center_density(&alpha);
            prop_assert!((got - want).abs() < 1e-7 * (1.0 + want), "{} vs {}", got, want);
        }

        #[test]
        fn balls_bound_on_spread_vectors(raw in proptest::collection::vec(0.6..1.0f64, 5)) {
            let a = unit(raw);
            prop_assume!(a.iter().all(|x| x.abs() <= 0.5));
            prop_assert!(cube_section_density(&a, &[1.0; 5]).unwrap() <= 2f64.sqrt() + 1e-6);
        }
    }
}
