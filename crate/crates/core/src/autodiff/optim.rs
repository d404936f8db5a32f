use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Cosine-decayed learning rate with heavy-ball momentum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdSchedule {
    pub base_lr: f64,
    pub total_epochs: usize,
    pub momentum: f64,
}

impl Default for SgdSchedule {
    fn default() -> Self {
        Self {
            base_lr: 0.01,
            total_epochs: 50,
            momentum: 0.9,
        }
    }
}

impl SgdSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.base_lr.is_nan() || self.base_lr <= 0.0 || self.total_epochs == 0 || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("invalid SGD schedule {self:?}")));
        }
        Ok(())
    }

    /// `base_lr * 0.5 * (1 + cos(pi * epoch / total_epochs))`, zero past the end.
    pub fn lr(&self, epoch: usize) -> f64 {
        let e = epoch.min(self.total_epochs) as f64;
        self.base_lr * 0.5 * (1.0 + (PI * e / self.total_epochs as f64).cos())
    }
}

#[derive(Debug, Clone)]
pub struct Sgd {
    pub schedule: SgdSchedule,
    velocity: Vec<Vec<f64>>,
}

impl Sgd {
    pub fn new(schedule: SgdSchedule) -> Result<Self> {
        schedule.validate()?;
        Ok(Self {
            schedule,
            velocity: Vec::new(),
        })
    }

    /// One update `v <- mu v + g; p <- p - lr(epoch) v` over every named
    /// parameter. Nothing is modified if any gradient is non-finite.
    pub fn step(&mut self, params: &mut [(String, &mut Tensor)], epoch: usize) -> Result<()> {
        for (name, p) in params.iter() {
            let grad = p
                .grad()
                .ok_or_else(|| Error::Config(format!("parameter `{name}` has no gradient")))?;
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteGradient(name.clone()));
            }
        }
        if self.velocity.len() != params.len() {
            self.velocity = params.iter().map(|(_, p)| vec![0.0; p.len()]).collect();
        }
        let lr = self.schedule.lr(epoch);
        let mu = self.schedule.momentum;
        for ((_, p), vel) in params.iter_mut().zip(&mut self.velocity) {
            if vel.len() != p.len() {
                return Err(Error::Shape {
                    op: "sgd_step",
                    left: p.shape().to_vec(),
                    right: vec![vel.len()],
                });
            }
            let grad = p.grad().expect("checked above").to_vec();
            for ((w, v), g) in p.values_mut().iter_mut().zip(vel.iter_mut()).zip(grad) {
                *v = mu * *v + g;
                *w -= lr * *v;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn param(v: f64, g: f64) -> Tensor {
        let mut t = Tensor::scalar(v).with_requires_grad();
        t.set_grad(vec![g]).unwrap();
        t
    }

    #[test]
    fn plain_step() {
        let mut sgd = Sgd::new(SgdSchedule {
            base_lr: 0.01,
            total_epochs: 10,
            momentum: 0.0,
        })
        .unwrap();
        let mut p = param(1.0, 1.0);
        sgd.step(&mut [("p".into(), &mut p)], 0).unwrap();
        assert!((p.values()[0] - 0.99).abs() < 1e-15);
    }

    #[test]
    fn endpoint_learning_rate_is_zero() {
        let s = SgdSchedule {
            base_lr: 0.01,
            total_epochs: 7,
            momentum: 0.0,
        };
        assert_eq!(s.lr(0), 0.01);
        assert!(s.lr(7).abs() < 1e-18);
        let mut sgd = Sgd::new(s).unwrap();
        let mut p = param(2.5, 3.0);
        sgd.step(&mut [("p".into(), &mut p)], 7).unwrap();
        assert!((p.values()[0] - 2.5).abs() < 1e-17);
    }

    #[test]
    fn momentum_matches_hand_unroll() {
        let s = SgdSchedule {
            base_lr: 0.1,
            total_epochs: 4,
            momentum: 0.9,
        };
        let mut sgd = Sgd::new(s).unwrap();
        let mut p = param(1.0, 0.5);
        sgd.step(&mut [("p".into(), &mut p)], 0).unwrap();
        p.set_grad(vec![-0.25]).unwrap();
        sgd.step(&mut [("p".into(), &mut p)], 1).unwrap();
        // v1 = 0.5, p1 = 1 - 0.1*0.5; v2 = 0.9*0.5 - 0.25 = 0.2, p2 = p1 - lr(1)*0.2
        let lr1 = 0.1 * 0.5 * (1.0 + (PI / 4.0).cos());
        let expected = 1.0 - 0.1 * 0.5 - lr1 * 0.2;
        assert!((p.values()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_names_parameter_and_leaves_values() {
        let mut sgd = Sgd::new(SgdSchedule::default()).unwrap();
        let mut a = param(1.0, 1.0);
        let mut b = param(2.0, f64::NAN);
        let err = sgd
            .step(&mut [("a".into(), &mut a), ("head.bias".into(), &mut b)], 0)
            .unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient(ref n) if n == "head.bias"));
        assert_eq!(a.values()[0], 1.0);
    }

    #[test]
    fn schedule_is_non_increasing() {
        let s = SgdSchedule {
            base_lr: 0.01,
            total_epochs: 50,
            momentum: 0.9,
        };
        for e in 0..50 {
            assert!(s.lr(e + 1) <= s.lr(e));
        }
    }
}
