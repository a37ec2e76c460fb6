use serde::{Deserialize, Serialize};

/// First/second moment estimates for one parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }
}

/// One bias-corrected adaptive moment step, in place.
pub fn adaptive_update(params: &mut [f64], grad: &[f64], state: &mut AdamState, lr: f64) {
    assert_eq!(params.len(), grad.len());
    assert_eq!(params.len(), state.m.len());
    state.t += 1;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(state.t.min(i32::MAX as u64) as i32);
    let c2 = 1.0 - b2.powi(state.t.min(i32::MAX as u64) as i32);
    let step = lr * c2.sqrt() / c1;
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grad)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        *p -= step * *m / (v.sqrt() + state.eps * c2.sqrt());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_noop() {
        let mut p = vec![1.0, -2.0];
        let mut s = AdamState::new(2);
        adaptive_update(&mut p, &[0.0, 0.0], &mut s, 0.1);
        assert_eq!(p, vec![1.0, -2.0]);
    }

    #[test]
    fn zero_lr_is_noop() {
        let mut p = vec![1.0, -2.0];
        let mut s = AdamState::new(2);
        adaptive_update(&mut p, &[3.0, -1.0], &mut s, 0.0);
        assert_eq!(p, vec![1.0, -2.0]);
    }

    #[test]
    fn quadratic_loss_decreases() {
        // f(x) = (x - 3)^2
        let mut x = vec![-4.0];
        let mut s = AdamState::new(1);
        let mut prev = f64::INFINITY;
        for _ in 0..100 {
            let loss = (x[0] - 3.0f64).powi(2);
            assert!(loss < prev);
            prev = loss;
            let g = 2.0 * (x[0] - 3.0);
            adaptive_update(&mut x, &[g], &mut s, 0.05);
        }
    }
}
