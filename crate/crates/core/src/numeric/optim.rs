//! Adam with bias correction over named parameter sets.

use std::collections::BTreeMap;

use super::matrix::Matrix;
use super::NumericError;

/// Optimizer state: one pair of moment matrices per parameter, plus the step
/// counter used for bias correction. Parameters are keyed by name so the
/// update order is fixed (BTreeMap iterates lexicographically).
#[derive(Clone, Debug)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    moments: BTreeMap<String, (Matrix, Matrix)>,
}

impl AdamState {
    pub fn new(learning_rate: f64) -> Self {
        AdamState {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One Adam update. Parameters missing from `grads` are treated as having
    /// zero gradient (their moments still decay).
    pub fn step(
        &mut self,
        params: &mut BTreeMap<String, Matrix>,
        grads: &BTreeMap<String, Matrix>,
    ) -> Result<(), NumericError> {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (name, param) in params.iter_mut() {
            let (m, v) = self
                .moments
                .entry(name.clone())
                .or_insert_with(|| (Matrix::zeros(param.rows(), param.cols()), Matrix::zeros(param.rows(), param.cols())));
            if m.shape() != param.shape() {
                return Err(NumericError::ShapeMismatch(format!(
                    "adam moments for '{}': {:?} vs {:?}",
                    name,
                    m.shape(),
                    param.shape()
                )));
            }
            let zero;
            let g = match grads.get(name) {
                Some(g) => {
                    if g.shape() != param.shape() {
                        return Err(NumericError::ShapeMismatch(format!(
                            "gradient for '{}': {:?} vs {:?}",
                            name,
                            g.shape(),
                            param.shape()
                        )));
                    }
                    g
                }
                None => {
                    zero = Matrix::zeros(param.rows(), param.cols());
                    &zero
                }
            };
            for i in 0..param.data().len() {
                let gi = g.data()[i];
                let mi = self.beta1 * m.data()[i] + (1.0 - self.beta1) * gi;
                let vi = self.beta2 * v.data()[i] + (1.0 - self.beta2) * gi * gi;
                m.data_mut()[i] = mi;
                v.data_mut()[i] = vi;
                let m_hat = mi / bc1;
                let v_hat = vi / bc2;
                param.data_mut()[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params_of(m: Matrix) -> BTreeMap<String, Matrix> {
        let mut p = BTreeMap::new();
        p.insert("w".to_string(), m);
        p
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut params = params_of(Matrix::glorot(2, 2, 3));
        let before = params["w"].clone();
        let mut state = AdamState::new(0.1);
        let grads = BTreeMap::new();
        state.step(&mut params, &grads).unwrap();
        state.step(&mut params, &grads).unwrap();
        assert_eq!(params["w"], before);
        assert_eq!(state.step_count(), 2);
    }

    #[test]
    fn first_step_magnitude_is_learning_rate() {
        // With a constant gradient g, bias correction gives m_hat = g and
        // v_hat = g^2, so the first update is lr * g / (|g| + eps) ~ lr.
        let lr = 1e-3;
        let mut params = params_of(Matrix::zeros(1, 3));
        let mut grads = BTreeMap::new();
        grads.insert(
            "w".to_string(),
            Matrix::from_rows(&[vec![0.5, -2.0, 10.0]]).unwrap(),
        );
        let mut state = AdamState::new(lr);
        state.step(&mut params, &grads).unwrap();
        let expected = [-lr, lr, -lr];
        for (i, &e) in expected.iter().enumerate() {
            assert!(
                (params["w"].data()[i] - e).abs() < 1e-9,
                "component {}: {} vs {}",
                i,
                params["w"].data()[i],
                e
            );
        }
    }

    #[test]
    fn identical_runs_are_bit_identical() {
        let run = || {
            let mut params = params_of(Matrix::glorot(3, 3, 9));
            let mut state = AdamState::new(0.01);
            for step in 0..20 {
                let mut grads = BTreeMap::new();
                grads.insert("w".to_string(), Matrix::glorot(3, 3, 100 + step));
                state.step(&mut params, &grads).unwrap();
            }
            params["w"].data().to_vec()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn shape_mismatch_detected() {
        let mut params = params_of(Matrix::zeros(2, 2));
        let mut grads = BTreeMap::new();
        grads.insert("w".to_string(), Matrix::zeros(2, 3));
        let mut state = AdamState::new(0.1);
        assert!(matches!(
            state.step(&mut params, &grads),
            Err(NumericError::ShapeMismatch(_))
        ));
    }
}
