use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Adam optimizer state for a flat parameter vector. `step` descends along the
/// supplied gradient; callers maximizing an objective pass its negation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    step_count: u64,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub learning_rate: f64,
}

impl AdamState {
    pub fn new(param_count: usize, learning_rate: f64) -> Self {
        Self {
            step_count: 0,
            first_moment: vec![0.0; param_count],
            second_moment: vec![0.0; param_count],
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            learning_rate,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.second_moment
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.first_moment.len() || grads.len() != self.first_moment.len() {
            return Err(Error::invalid(format!(
                "adam tracks {} parameters but got {} parameters and {} gradients",
                self.first_moment.len(),
                params.len(),
                grads.len()
            )));
        }
        if let Some(index) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::Numeric {
                index,
                message: format!("non-finite gradient {}", grads[index]),
            });
        }

        self.step_count += 1;
        let t = self.step_count as i32;
        let bias1 = 1.0 - self.beta1.powi(t);
        let bias2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i];
            let m = self.beta1 * self.first_moment[i] + (1.0 - self.beta1) * g;
            let v = self.beta2 * self.second_moment[i] + (1.0 - self.beta2) * g * g;
            self.first_moment[i] = m;
            self.second_moment[i] = v;
            let m_hat = m / bias1;
            let v_hat = v / bias2;
            params[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut adam = AdamState::new(3, 0.1);
        let mut p = vec![1.0, -2.0, 0.5];
        for _ in 0..5 {
            adam.step(&mut p, &[0.0; 3]).unwrap();
        }
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
        assert!(adam.first_moment().iter().all(|&m| m == 0.0));
        assert_eq!(adam.step_count(), 5);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut adam = AdamState::new(1, 0.1);
        let mut p = vec![0.0];
        adam.step(&mut p, &[1.0]).unwrap();
        // m_hat = 1, v_hat = 1, so the step is lr / (1 + eps)
        assert!((p[0] + 0.1 / (1.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn repeated_gradient_moves_monotonically() {
        let mut adam = AdamState::new(1, 0.05);
        let mut p = vec![0.0];
        adam.step(&mut p, &[2.0]).unwrap();
        let first = p[0];
        adam.step(&mut p, &[2.0]).unwrap();
        assert!(first < 0.0 && p[0] < first);
    }

    #[test]
    fn shape_mismatch_and_non_finite_rejected() {
        let mut adam = AdamState::new(2, 0.1);
        let mut p = vec![0.0; 2];
        assert!(matches!(adam.step(&mut p, &[1.0]), Err(Error::InvalidInput(_))));
        match adam.step(&mut p, &[1.0, f64::NAN]) {
            Err(Error::Numeric { index, .. }) => assert_eq!(index, 1),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(adam.step_count(), 0);
    }
}
