//! Exact binomial tests, multiple-testing corrections and small descriptive helpers.

mod binomial;
mod describe;
mod multitest;
mod qq;

pub use binomial::{
    binomial_pmf, binomial_quantile, binomial_two_sided, lower_tail, upper_tail, PMF_TIE_TOLERANCE,
};
pub use describe::{mean, pearson, quantile, std_dev, Summary};
pub use multitest::{correct_pvalues, harmonic, Corrected, Correction};
pub use qq::{qq_uniformity, QqResult};

/// Two-sided normal p-value for a z statistic.
pub fn normal_two_sided(z: f64) -> f64 {
    statrs::function::erf::erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0)
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    Normal::standard().inverse_cdf(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_helpers() {
        let p = normal_two_sided(1.959963984540054);
        assert!((p - 0.05).abs() < 1e-10, "{p}");
        assert!((normal_quantile(0.975) - 1.959963984540054).abs() < 1e-9);
        assert_eq!(normal_two_sided(0.0), 1.0);
    }
}
