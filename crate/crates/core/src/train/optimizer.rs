//! Adam with bias-corrected moment estimates.

use crate::tensor::Value;
use crate::train::TrainError;

/// Holds per-parameter first and second moment estimates and applies the
/// bias-corrected update `p -= lr * m_hat / (sqrt(v_hat) + epsilon)`.
pub struct Adam {
    params: Vec<(String, Value)>,
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    steps: i32,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl Adam {
    /// Standard defaults: beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8.
    pub fn new(params: Vec<(String, Value)>, learning_rate: f64) -> Self {
        Adam::with_hyperparameters(params, learning_rate, 0.9, 0.999, 1e-8)
    }

    pub fn with_hyperparameters(
        params: Vec<(String, Value)>,
        learning_rate: f64,
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    ) -> Self {
        let first_moment = params.iter().map(|(_, p)| vec![0.0; p.numel()]).collect();
        let second_moment = params.iter().map(|(_, p)| vec![0.0; p.numel()]).collect();
        Adam {
            params,
            learning_rate,
            beta1,
            beta2,
            epsilon,
            steps: 0,
            first_moment,
            second_moment,
        }
    }

    pub fn zero_grads(&self) {
        for (_, p) in &self.params {
            p.zero_grad();
        }
    }

    /// One update from the gradients currently stored on the parameters.
    pub fn step(&mut self) -> Result<(), TrainError> {
        self.steps += 1;
        let correction1 = 1.0 - self.beta1.powi(self.steps);
        let correction2 = 1.0 - self.beta2.powi(self.steps);
        for (slot, (name, param)) in self.params.iter().enumerate() {
            let grad = param
                .grad()
                .ok_or_else(|| TrainError::MissingGradient(name.clone()))?;
            let m = &mut self.first_moment[slot];
            let v = &mut self.second_moment[slot];
            let mut data = param.data_mut();
            for i in 0..data.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * grad[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
                let m_hat = m[i] / correction1;
                let v_hat = v[i] / correction2;
                data[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}
