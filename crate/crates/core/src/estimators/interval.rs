use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

/// Two-sided exact binomial (Clopper–Pearson) interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinomialInterval {
    pub lower: f64,
    pub upper: f64,
}

/// Quantile of Beta(a, b) by bisection on the regularized incomplete beta.
fn beta_quantile(q: f64, a: f64, b: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if beta_reg(a, b, mid) < q {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Clopper–Pearson interval with confidence `1 − alpha` for `hits` successes
/// out of `trials`.
pub fn clopper_pearson(hits: u64, trials: u64, alpha: f64) -> BinomialInterval {
    assert!(trials > 0 && hits <= trials, "need 0 <= hits <= trials, trials > 0");
    let (k, n) = (hits as f64, trials as f64);
    let lower = if hits == 0 { 0.0 } else { beta_quantile(0.5 * alpha, k, n - k + 1.0) };
    let upper = if hits == trials { 1.0 } else { beta_quantile(1.0 - 0.5 * alpha, k + 1.0, n - k) };
    BinomialInterval { lower, upper }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::RandomStream;
    use rand::Rng;

    #[test]
    fn reference_values() {
        // scipy.stats.beta.ppf(0.025, 5, 16) and beta.ppf(0.975, 6, 15)
        let ci = clopper_pearson(5, 20, 0.05);
        assert!((ci.lower - 0.086_571_469_101).abs() < 1e-10);
        assert!((ci.upper - 0.491_045_871_708).abs() < 1e-10);
        // zero hits: upper = 1 - (α/2)^(1/n)
        let ci = clopper_pearson(0, 100, 0.01);
        assert_eq!(ci.lower, 0.0);
        assert!((ci.upper - (1.0 - 0.005f64.powf(0.01))).abs() < 1e-12);
        let ci = clopper_pearson(100, 100, 0.01);
        assert_eq!(ci.upper, 1.0);
        assert!((ci.lower - 0.005f64.powf(0.01)).abs() < 1e-12);
    }

    #[test]
    fn coverage_on_synthetic_replays() {
        let q = 0.013;
        let n = 2_000u64;
        let mut rng = RandomStream::new(99, 0).rng();
        let covered = (0..200)
            .filter(|_| {
                let hits = (0..n).filter(|_| rng.gen::<f64>() < q).count() as u64;
                let ci = clopper_pearson(hits, n, 0.01);
                ci.lower <= q && q <= ci.upper
            })
            .count();
        assert!(covered >= 190, "covered {covered}/200");
    }
}
