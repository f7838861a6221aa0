//! Adaptive-moment gradient descent, one state slot per parameter.

use crate::nets::Param;

pub struct Adam {
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step_count: u64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(learning_rate: f64, param_lens: &[usize]) -> Adam {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step_count: 0,
            first_moment: param_lens.iter().map(|&n| vec![0.0; n]).collect(),
            second_moment: param_lens.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// Apply one update. `grads[i]` pairs with `params[i]`; a missing gradient
    /// counts as zero (the parameter did not participate in the loss).
    pub fn step(&mut self, params: &mut [&mut Param], grads: &[Option<Vec<f64>>]) {
        assert_eq!(params.len(), self.first_moment.len(), "optimizer built for another net");
        assert_eq!(params.len(), grads.len());
        self.step_count += 1;
        let bias1 = 1.0 - self.beta1.powi(self.step_count as i32);
        let bias2 = 1.0 - self.beta2.powi(self.step_count as i32);
        for ((param, grad), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first_moment.iter_mut().zip(self.second_moment.iter_mut()))
        {
            let data = param.data_mut();
            for i in 0..data.len() {
                let g = grad.as_ref().map_or(0.0, |g| g[i]);
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                data[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}
