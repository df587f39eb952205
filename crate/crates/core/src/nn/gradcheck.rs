//! Central finite-difference checks for analytic gradients.

/// Default step for 64-bit checks.
pub const STEP: f64 = 1e-5;

/// Numerical gradient of `f` at `x` by central differences.
pub fn central_difference<F>(mut f: F, x: &[f64], h: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest `|a - n| / max(|a|, |n|, floor)` over all coordinates. The
/// floor keeps coordinates whose true gradient is zero from dividing
/// rounding noise by itself.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    const FLOOR: f64 = 1e-6;
    assert_eq!(analytic.len(), numeric.len(), "gradient lengths differ");
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(FLOOR))
        .fold(0.0, f64::max)
}

/// Summary of one gradient check.
#[derive(Debug, Clone)]
pub struct GradReport {
    pub name: String,
    pub max_rel_err: f64,
    pub coords: usize,
}

impl GradReport {
    pub fn check(name: impl Into<String>, analytic: &[f64], numeric: &[f64]) -> Self {
        Self {
            name: name.into(),
            max_rel_err: max_relative_error(analytic, numeric),
            coords: analytic.len(),
        }
    }
}
