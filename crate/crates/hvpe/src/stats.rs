//! Small statistics toolbox: one-sample Kolmogorov-Smirnov test against the
//! standard normal, with asymptotic p-values.

use statrs::distribution::{ContinuousCDF, Normal};

/// Result of a one-sample KS test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    /// The KS statistic `D_n = sup_x |F_n(x) - Φ(x)|`.
    pub statistic: f64,
    /// Asymptotic p-value; `None` when the sample is too small (< 100)
    /// for the asymptotic Kolmogorov distribution to be trusted.
    pub p_value: Option<f64>,
    pub n: usize,
}

/// Survival function of the Kolmogorov distribution,
/// `Q(λ) = 2 Σ_{j≥1} (-1)^{j-1} exp(-2 j² λ²)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=100 {
        let term = (-2.0 * (j as f64) * (j as f64) * lambda * lambda).exp();
        sum += sign * term;
        sign = -sign;
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sided one-sample KS test of `sample` against N(0, 1).
pub fn ks_test_standard_normal(sample: &[f64]) -> KsResult {
    let n = sample.len();
    assert!(n >= 1, "empty sample");
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut xs = sample.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let nf = n as f64;
    let mut d = 0.0f64;
    for (i, &x) in xs.iter().enumerate() {
        let cdf = normal.cdf(x);
        d = d.max((i as f64 + 1.0) / nf - cdf);
        d = d.max(cdf - i as f64 / nf);
    }
    let p_value = if n >= 100 {
        Some(kolmogorov_sf(nf.sqrt() * d))
    } else {
        None
    };
    KsResult {
        statistic: d,
        p_value,
        n,
    }
}
