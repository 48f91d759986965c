use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{Scalar, Tensor};

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment accumulators, one pair per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    first_moment: Vec<Tensor<T>>,
    second_moment: Vec<Tensor<T>>,
    step: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new<'a>(config: AdamConfig, params: impl IntoIterator<Item = &'a Tensor<T>>) -> Self {
        let shapes: Vec<Vec<usize>> = params.into_iter().map(|p| p.shape().to_vec()).collect();
        Self {
            config,
            first_moment: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            second_moment: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update applied in place.
    pub fn step(&mut self, params: &mut [&mut Tensor<T>], grads: &[Tensor<T>]) -> Result<()> {
        let cfg = self.config;
        if !(cfg.learning_rate >= 0.0 && cfg.learning_rate.is_finite()) {
            return Err(Error::Contract(format!(
                "learning rate must be finite and non-negative, got {}",
                cfg.learning_rate
            )));
        }
        if params.len() != grads.len() || params.len() != self.first_moment.len() {
            return Err(Error::Contract(format!(
                "adam: {} params, {} grads, {} moment slots",
                params.len(),
                grads.len(),
                self.first_moment.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() || p.shape() != self.first_moment[i].shape() {
                return Err(Error::Contract(format!(
                    "adam: slot {i} shapes param {:?}, grad {:?}, state {:?}",
                    p.shape(),
                    g.shape(),
                    self.first_moment[i].shape()
                )));
            }
        }

        self.step += 1;
        let t = self.step as i32;
        let b1 = T::lit(cfg.beta1);
        let b2 = T::lit(cfg.beta2);
        let lr = T::lit(cfg.learning_rate);
        let eps = T::lit(cfg.epsilon);
        let bias1 = T::one() - b1.powi(t);
        let bias2 = T::one() - b2.powi(t);

        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first_moment.iter_mut().zip(self.second_moment.iter_mut()))
        {
            let pd = p.data_mut();
            let (md, vd) = (m.data_mut(), v.data_mut());
            for (j, &gj) in g.data().iter().enumerate() {
                md[j] = b1 * md[j] + (T::one() - b1) * gj;
                vd[j] = b2 * vd[j] + (T::one() - b2) * gj * gj;
                let m_hat = md[j] / bias1;
                let v_hat = vd[j] / bias2;
                pd[j] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Free-function form of [`AdamState::step`].
pub fn adam_step<T: Scalar>(
    params: &mut [&mut Tensor<T>],
    grads: &[Tensor<T>],
    state: &mut AdamState<T>,
) -> Result<()> {
    state.step(params, grads)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_state(lr: f64) -> (Tensor<f64>, AdamState<f64>) {
        let p = Tensor::new(vec![1], vec![1.5]).unwrap();
        let cfg = AdamConfig {
            learning_rate: lr,
            ..AdamConfig::default()
        };
        let st = AdamState::new(cfg, [&p]);
        (p, st)
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let (mut p, mut st) = scalar_state(1e-3);
        let g = Tensor::new(vec![1], vec![0.0]).unwrap();
        adam_step(&mut [&mut p], &[g], &mut st).unwrap();
        assert_eq!(p.data(), &[1.5]);
        assert_eq!(st.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m̂ = g, v̂ = g², so the step is lr·g/(|g|+ε) ≈ lr·sign(g).
        let (mut p, mut st) = scalar_state(1e-3);
        let g = Tensor::new(vec![1], vec![-4.2]).unwrap();
        adam_step(&mut [&mut p], &[g], &mut st).unwrap();
        let expected = 1.5 + 1e-3 * 4.2 / (4.2 + 1e-8);
        assert!((p.data()[0] - expected).abs() < 1e-15);
        assert!((p.data()[0] - 1.5 - 1e-3).abs() < 1e-11);
    }

    #[test]
    fn two_steps_match_hand_computation() {
        let (mut p, mut st) = scalar_state(0.01);
        let g = 0.3_f64;
        for _ in 0..2 {
            let gt = Tensor::new(vec![1], vec![g]).unwrap();
            adam_step(&mut [&mut p], &[gt], &mut st).unwrap();
        }
        // hand-rolled
        let (b1, b2, eps, lr) = (0.9_f64, 0.999_f64, 1e-8, 0.01);
        let (mut m, mut v, mut x) = (0.0_f64, 0.0_f64, 1.5_f64);
        for t in 1..=2 {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            x -= lr * mh / (vh.sqrt() + eps);
        }
        assert!((p.data()[0] - x).abs() <= 1e-12);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let (mut p, mut st) = scalar_state(1e-3);
        let g = Tensor::new(vec![2], vec![0.0, 1.0]).unwrap();
        assert!(matches!(
            adam_step(&mut [&mut p], &[g], &mut st),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let (mut p, mut st) = scalar_state(0.0);
        let g = Tensor::new(vec![1], vec![3.0]).unwrap();
        adam_step(&mut [&mut p], &[g], &mut st).unwrap();
        assert_eq!(p.data(), &[1.5]);
    }
}
