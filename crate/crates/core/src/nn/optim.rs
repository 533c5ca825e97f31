use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::mlp::ParamVector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum OptimizerKind {
    /// Plain gradient descent.
    Sgd,
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl OptimizerKind {
    pub const ADAM: OptimizerKind = OptimizerKind::Adam {
        beta1: 0.9,
        beta2: 0.999,
        epsilon: 1e-8,
    };
}

/// Moment accumulators for one parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimState {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub step_count: u64,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
}

impl OptimState {
    pub fn new(kind: OptimizerKind, len: usize, learning_rate: f64) -> Self {
        Self {
            kind,
            learning_rate,
            step_count: 0,
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
        }
    }

    pub fn adam(len: usize, learning_rate: f64) -> Self {
        Self::new(OptimizerKind::ADAM, len, learning_rate)
    }

    pub fn sgd(len: usize, learning_rate: f64) -> Self {
        Self::new(OptimizerKind::Sgd, len, learning_rate)
    }

    /// One descent step: parameters move against `grads`.
    pub fn step(&mut self, params: &mut ParamVector, grads: &ParamVector) -> Result<()> {
        let n = params.len();
        for (name, len) in [
            ("gradient", grads.len()),
            ("first moment", self.first_moment.len()),
            ("second moment", self.second_moment.len()),
        ] {
            if len != n {
                return Err(Error::Dimension {
                    layer: format!("optimizer {name}"),
                    expected: n,
                    actual: len,
                });
            }
        }
        if let Some(i) = grads.values.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!(
                "gradient component {i} ({})",
                grads.values[i]
            )));
        }

        self.step_count += 1;
        let lr = self.learning_rate;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.values.iter_mut().zip(&grads.values) {
                    *p -= lr * g;
                }
            }
            OptimizerKind::Adam {
                beta1,
                beta2,
                epsilon,
            } => {
                let t = self.step_count as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for (((p, &g), m), v) in params
                    .values
                    .iter_mut()
                    .zip(&grads.values)
                    .zip(&mut self.first_moment)
                    .zip(&mut self.second_moment)
                {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *p -= lr * m_hat / (v_hat.sqrt() + epsilon);
                }
            }
        }
        Ok(())
    }
}

pub fn optimizer_step(
    params: &mut ParamVector,
    grads: &ParamVector,
    state: &mut OptimState,
) -> Result<()> {
    state.step(params, grads)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        for mut st in [OptimState::sgd(3, 0.1), OptimState::adam(3, 0.1)] {
            let mut p = ParamVector {
                values: vec![1.0, -2.0, 0.5],
            };
            st.step(&mut p, &ParamVector::zeros(3)).unwrap();
            assert_eq!(p.values, vec![1.0, -2.0, 0.5]);
            assert_eq!(st.step_count, 1);
        }
    }

    #[test]
    fn plain_step_moves_by_learning_rate() {
        let mut st = OptimState::sgd(1, 0.001);
        let mut p = ParamVector { values: vec![0.0] };
        st.step(&mut p, &ParamVector { values: vec![1.0] }).unwrap();
        assert_eq!(p.values[0], -0.001);
    }

    fn descend_bowl(st: &mut OptimState) -> Vec<f64> {
        let mut p = ParamVector { values: vec![1.0] };
        (0..1000)
            .map(|_| {
                let g = ParamVector {
                    values: vec![2.0 * p.values[0]],
                };
                st.step(&mut p, &g).unwrap();
                p.values[0]
            })
            .collect()
    }

    #[test]
    fn quadratic_bowl_converges_monotonically() {
        // f(p) = p^2 from p = 1
        let path = descend_bowl(&mut OptimState::sgd(1, 0.01));
        assert!(path.windows(2).all(|w| w[1] * w[1] <= w[0] * w[0]));
        assert!(path.last().unwrap().abs() < 0.1);

        let path = descend_bowl(&mut OptimState::adam(1, 0.01));
        assert!(path.last().unwrap().abs() < 0.1);
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut st = OptimState::adam(2, 0.1);
        let mut p = ParamVector::zeros(2);
        let err = st
            .step(
                &mut p,
                &ParamVector {
                    values: vec![0.0, f64::NAN],
                },
            )
            .unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
        assert_eq!(st.step_count, 0);
    }
}
