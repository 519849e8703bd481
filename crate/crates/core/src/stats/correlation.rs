//! Pearson correlation, its two-tailed significance, and Bonferroni
//! adjustment.

use statrs::function::beta::beta_reg;

/// Product-moment correlation of two equal-length vectors.
///
/// Returns `None` when the correlation is undefined: fewer than two
/// points, mismatched lengths, or a constant vector.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    if is_constant(x) || is_constant(y) {
        return None;
    }
    let n = x.len() as f64;
    let mean_x = x.iter().sum::<f64>() / n;
    let mean_y = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let dx = a - mean_x;
        let dy = b - mean_y;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    let r = sxy / (sxx * syy).sqrt();
    Some(r.clamp(-1.0, 1.0))
}

fn is_constant(v: &[f64]) -> bool {
    v.iter().all(|&a| a == v[0])
}

/// Two-tailed p-value for `r` over `n_instances` pairs, from the t statistic
/// with `n - 2` degrees of freedom. `None` below three instances.
pub fn pearson_p(r: f64, n_instances: usize) -> Option<f64> {
    if n_instances < 3 || !r.is_finite() || r.abs() > 1.0 {
        return None;
    }
    if r.abs() == 1.0 {
        return Some(0.0);
    }
    let df = (n_instances - 2) as f64;
    let t2 = r * r * df / (1.0 - r * r);
    // P(|T| > t) = I_{df/(df+t^2)}(df/2, 1/2)
    Some(beta_reg(df / 2.0, 0.5, df / (df + t2)).clamp(0.0, 1.0))
}

/// `min(1, p * m)`.
pub fn bonferroni_adjust(p: f64, m_hypotheses: usize) -> f64 {
    (p * m_hypotheses.max(1) as f64).min(1.0)
}

/// Per-test threshold equivalent to testing adjusted p against
/// `family_alpha`.
pub fn per_test_threshold(family_alpha: f64, m_hypotheses: usize) -> f64 {
    family_alpha / m_hypotheses.max(1) as f64
}
