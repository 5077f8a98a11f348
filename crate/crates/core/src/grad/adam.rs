//! Adam with per-field learning rates. Each parameter group keeps its own
//! moment vectors and step counter; groups frozen during a phase simply
//! never step, so their state stays untouched.

/// Shared Adam hyperparameters.
pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-15;

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub steps: u64,
}

impl AdamState {
    pub fn new(len: usize) -> AdamState {
        AdamState { m: vec![0.0; len], v: vec![0.0; len], steps: 0 }
    }

    /// One update over a flat parameter slice.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.steps += 1;
        let t = self.steps as f64;
        let bc1 = 1.0 - BETA1.powf(t);
        let bc2 = 1.0 - BETA2.powf(t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = BETA1 * self.m[i] + (1.0 - BETA1) * g;
            self.v[i] = BETA2 * self.v[i] + (1.0 - BETA2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + EPS);
        }
    }

    /// Round the moments to f32 grid (the persistence precision).
    pub fn snap_f32(&mut self) {
        for x in self.m.iter_mut().chain(self.v.iter_mut()) {
            *x = *x as f32 as f64;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        // With bias correction, step 1 moves by ~lr * sign(g).
        let mut st = AdamState::new(2);
        let mut p = vec![1.0, -2.0];
        st.step(&mut p, &[0.5, -0.25], 1e-2);
        assert_relative_eq!(p[0], 1.0 - 1e-2, max_relative = 1e-9);
        assert_relative_eq!(p[1], -2.0 + 1e-2, max_relative = 1e-9);
        assert_eq!(st.steps, 1);
    }

    #[test]
    fn zero_gradient_leaves_params_fixed() {
        let mut st = AdamState::new(1);
        let mut p = vec![3.0];
        for _ in 0..5 {
            st.step(&mut p, &[0.0], 1e-2);
        }
        assert_eq!(p[0], 3.0);
    }

    #[test]
    fn converges_on_a_quadratic() {
        let mut st = AdamState::new(1);
        let mut p = vec![4.0];
        for _ in 0..4000 {
            let g = 2.0 * (p[0] - 1.5);
            st.step(&mut p, &[g], 5e-3);
        }
        assert_relative_eq!(p[0], 1.5, epsilon = 1e-3);
    }

    #[test]
    fn matches_reference_two_steps() {
        // Hand-computed with beta1=0.9, beta2=0.999, eps=1e-15, lr=0.1,
        // g = [1.0, 1.0] twice, starting from 0.
        let mut st = AdamState::new(1);
        let mut p = vec![0.0];
        st.step(&mut p, &[1.0], 0.1);
        // Step 1: m_hat = 1, v_hat = 1 -> p = -0.1.
        assert_relative_eq!(p[0], -0.1, max_relative = 1e-12);
        st.step(&mut p, &[1.0], 0.1);
        // Step 2: m = 0.19, v = 0.001999, bc1 = 0.19, bc2 = 0.001999
        // -> m_hat = v_hat = 1 -> p = -0.2.
        assert_relative_eq!(p[0], -0.2, max_relative = 1e-9);
    }
}
