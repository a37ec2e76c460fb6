/// Analytic vs. central finite-difference gradients of one scalar function.
#[derive(Debug, Clone)]
pub struct GradReport {
    pub analytic_grad: Vec<f64>,
    pub numeric_grad: Vec<f64>,
    pub max_abs_rel_error: f64,
}

/// Relative errors below this magnitude of both gradients are measured
/// against the floor instead, so round-off on near-zero entries does not
/// dominate the report.
const REL_FLOOR: f64 = 1e-6;

/// Compares `analytic` against central differences of `f` around `params`.
pub fn check_gradient<F>(params: &[f64], analytic: &[f64], step: f64, mut f: F) -> GradReport
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(params.len(), analytic.len());
    let mut probe = params.to_vec();
    let mut numeric = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let orig = probe[i];
        probe[i] = orig + step;
        let up = f(&probe);
        probe[i] = orig - step;
        let down = f(&probe);
        probe[i] = orig;
        numeric.push((up - down) / (2.0 * step));
    }
    let max_abs_rel_error = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR))
        .fold(0.0, f64::max);
    GradReport {
        analytic_grad: analytic.to_vec(),
        numeric_grad: numeric,
        max_abs_rel_error,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic() {
        let p = [1.0, -2.0];
        let r = check_gradient(&p, &[2.0, -4.0], 1e-5, |q| q[0] * q[0] + q[1] * q[1]);
        assert!(r.max_abs_rel_error < 1e-8);
        let bad = check_gradient(&p, &[2.0, 4.0], 1e-5, |q| q[0] * q[0] + q[1] * q[1]);
        assert!(bad.max_abs_rel_error > 1.0);
    }
}
