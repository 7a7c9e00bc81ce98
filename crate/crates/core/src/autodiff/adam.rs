use serde::{Deserialize, Serialize};

use super::{AdError, Result};
use crate::numcore::Matrix;

/// Learning-rate multiplier as a function of the step index.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Schedule {
    Constant,
    /// Linear warmup, then half-cosine from the peak down to `floor × peak`
    /// at `total_steps`; held at the floor afterwards.
    Cosine {
        total_steps: u64,
        #[serde(default)]
        warmup_steps: u64,
        #[serde(default = "default_floor")]
        floor: f64,
    },
}

fn default_floor() -> f64 {
    0.1
}

impl Schedule {
    /// Multiplier for the `step`-th update (0-based).
    pub fn factor(&self, step: u64) -> f64 {
        match *self {
            Schedule::Constant => 1.0,
            Schedule::Cosine {
                total_steps,
                warmup_steps,
                floor,
            } => {
                if step < warmup_steps {
                    return (step + 1) as f64 / warmup_steps as f64;
                }
                let span = total_steps.saturating_sub(warmup_steps).max(1);
                let t = ((step - warmup_steps) as f64 / span as f64).min(1.0);
                floor + (1.0 - floor) * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub schedule: Schedule,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.1,
            schedule: Schedule::Constant,
        }
    }
}

/// AdamW with decoupled weight decay over a fixed list of parameter tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
    decay: Vec<bool>,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &[Matrix]) -> Self {
        let zeros = || params.iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect();
        Self {
            config,
            step: 0,
            first: zeros(),
            second: zeros(),
            decay: vec![true; params.len()],
        }
    }

    /// Per-tensor switch for weight decay (norm gains usually opt out).
    pub fn with_decay_mask(mut self, decay: Vec<bool>) -> Result<Self> {
        if decay.len() != self.first.len() {
            return Err(AdError::InvalidArgument(format!(
                "decay mask has {} entries for {} tensors",
                decay.len(),
                self.first.len()
            )));
        }
        self.decay = decay;
        Ok(self)
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn current_lr(&self) -> f64 {
        self.config.lr * self.config.schedule.factor(self.step)
    }

    /// One update. Tensors with `frozen[i]` set are left bit-identical, and so
    /// are their moments.
    pub fn step(&mut self, params: &mut [Matrix], grads: &[Matrix], frozen: &[bool]) -> Result<()> {
        let n = self.first.len();
        if params.len() != n || grads.len() != n || frozen.len() != n {
            return Err(AdError::InvalidArgument(format!(
                "optimizer tracks {n} tensors; got {} params, {} grads, {} mask entries",
                params.len(),
                grads.len(),
                frozen.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != self.first[i].shape() || g.shape() != p.shape() {
                return Err(AdError::Shape {
                    op: "adam_step",
                    left: p.shape(),
                    right: g.shape(),
                });
            }
        }
        let c = self.config;
        let lr = self.current_lr();
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        for i in 0..n {
            if frozen[i] {
                continue;
            }
            let wd = if self.decay[i] { c.weight_decay } else { 0.0 };
            let (m, v) = (self.first[i].data_mut(), self.second[i].data_mut());
            for (((p, g), m), v) in params[i].data_mut().iter_mut().zip(grads[i].data()).zip(m).zip(v) {
                *m = c.beta1 * *m + (1.0 - c.beta1) * g;
                *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
                let update = (*m / bc1) / ((*v / bc2).sqrt() + c.eps);
                *p -= lr * (update + wd * *p);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_schedule_ends_at_floor() {
        let s = Schedule::Cosine {
            total_steps: 100,
            warmup_steps: 0,
            floor: 0.1,
        };
        assert_eq!(s.factor(0), 1.0);
        assert!((s.factor(50) - 0.55).abs() < 1e-12);
        assert!((s.factor(100) - 0.1).abs() < 1e-12);
        assert!((s.factor(1000) - 0.1).abs() < 1e-12);
        let w = Schedule::Cosine {
            total_steps: 10,
            warmup_steps: 4,
            floor: 0.1,
        };
        assert_eq!(w.factor(0), 0.25);
        assert_eq!(w.factor(4), 1.0);
    }

    #[test]
    fn frozen_and_zero_gradient_leave_params_alone() {
        let p0 = vec![Matrix::filled(2, 2, 0.7), Matrix::filled(1, 3, -1.5)];
        let g = vec![Matrix::filled(2, 2, 3.0), Matrix::filled(1, 3, 2.0)];
        let mut p = p0.clone();
        let mut opt = AdamState::new(AdamConfig::default(), &p);
        opt.step(&mut p, &g, &[true, true]).unwrap();
        assert_eq!(p, p0);

        let cfg = AdamConfig {
            weight_decay: 0.0,
            ..AdamConfig::default()
        };
        let mut opt = AdamState::new(cfg, &p);
        let zero = vec![Matrix::zeros(2, 2), Matrix::zeros(1, 3)];
        opt.step(&mut p, &zero, &[false, false]).unwrap();
        assert_eq!(p, p0);
    }

    #[test]
    fn mismatched_inputs_rejected() {
        let mut p = vec![Matrix::zeros(2, 2)];
        let mut opt = AdamState::new(AdamConfig::default(), &p);
        assert!(opt.step(&mut p, &[Matrix::zeros(2, 3)], &[false]).is_err());
        assert!(opt.step(&mut p, &[], &[false]).is_err());
        assert!(AdamState::new(AdamConfig::default(), &p).with_decay_mask(vec![]).is_err());
    }
}
