//! Adam with bias correction.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(param_count: usize) -> Self {
        Self {
            first_moment: vec![0.0; param_count],
            second_moment: vec![0.0; param_count],
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// One Adam update in place. Non-finite gradients are reported and the step
/// is skipped (state untouched).
pub fn adam_step(
    state: &mut AdamState,
    params: &mut [f64],
    grads: &[f64],
    lr: f64,
) -> Result<()> {
    if params.len() != state.first_moment.len() || grads.len() != params.len() {
        return Err(Error::shape(format!(
            "adam: params {}, grads {}, state {}",
            params.len(),
            grads.len(),
            state.first_moment.len()
        )));
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("gradient passed to adam_step".into()));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    let (b1, b2, eps) = (state.beta1, state.beta2, state.epsilon);
    for i in 0..params.len() {
        let g = grads[i];
        let m = b1 * state.first_moment[i] + (1.0 - b1) * g;
        let v = b2 * state.second_moment[i] + (1.0 - b2) * g * g;
        state.first_moment[i] = m;
        state.second_moment[i] = v;
        let m_hat = m / bc1;
        let v_hat = v / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut st = AdamState::new(3);
        let mut p = vec![1.0, -2.0, 0.5];
        adam_step(&mut st, &mut p, &[0.0; 3], 0.1).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn first_step_unit_gradient_moves_by_lr() {
        // m_hat = 1, v_hat = 1 after bias correction, so the update is
        // -lr / (1 + eps)
        let mut st = AdamState::new(1);
        let mut p = vec![0.0];
        adam_step(&mut st, &mut p, &[1.0], 0.1).unwrap();
        let want = -0.1 / (1.0 + 1e-8);
        assert!((p[0] - want).abs() < 1e-15, "{} vs {want}", p[0]);
    }

    #[test]
    fn deterministic_across_identical_calls() {
        let mut a = AdamState::new(4);
        let mut b = AdamState::new(4);
        let mut pa = vec![0.3, -0.1, 0.7, 0.0];
        let mut pb = pa.clone();
        let g = [0.5, -1.2, 0.01, 3.0];
        for _ in 0..10 {
            adam_step(&mut a, &mut pa, &g, 0.01).unwrap();
            adam_step(&mut b, &mut pb, &g, 0.01).unwrap();
        }
        assert_eq!(pa, pb);
        assert_eq!(a, b);
    }

    #[test]
    fn non_finite_gradient_skips_step() {
        let mut st = AdamState::new(2);
        let mut p = vec![1.0, 2.0];
        let err = adam_step(&mut st, &mut p, &[1.0, f64::NAN], 0.1);
        assert!(err.is_err());
        assert_eq!(p, vec![1.0, 2.0]);
        assert_eq!(st.step(), 0);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut st = AdamState::new(2);
        let mut p = vec![1.0, 2.0, 3.0];
        assert!(adam_step(&mut st, &mut p, &[0.1, 0.2, 0.3], 0.1).is_err());
    }
}
