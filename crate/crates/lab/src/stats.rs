use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Upper-tail probability of a χ² statistic with `dof` degrees of freedom.
pub fn chi2_p_value(statistic: f64, dof: usize) -> f64 {
    if dof == 0 {
        return if statistic > 0.0 { 0.0 } else { 1.0 };
    }
    ChiSquared::new(dof as f64)
        .map(|d| d.sf(statistic))
        .unwrap_or(f64::NAN)
}
