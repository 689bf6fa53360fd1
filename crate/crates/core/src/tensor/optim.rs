use super::{Gradients, ParamStore, Result, Tensor, TensorError};

/// Learning-rate schedule applied on top of the base rate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Schedule {
    Constant,
    /// Linear ramp over the first `warmup_fraction` of `total_steps`, then
    /// linear decay to zero at `total_steps`.
    WarmupLinear {
        warmup_fraction: f64,
        total_steps: usize,
    },
}

impl Schedule {
    pub fn factor(&self, step: usize) -> f64 {
        match *self {
            Schedule::Constant => 1.0,
            Schedule::WarmupLinear {
                warmup_fraction,
                total_steps,
            } => {
                let progress = step as f64 / total_steps.max(1) as f64;
                if progress < warmup_fraction {
                    progress / warmup_fraction
                } else if warmup_fraction >= 1.0 {
                    1.0
                } else {
                    ((1.0 - progress) / (1.0 - warmup_fraction)).max(0.0)
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub schedule: Schedule,
    /// Global-norm gradient clipping threshold; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            schedule: Schedule::Constant,
            clip_norm: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub first_moment: Vec<Tensor>,
    pub second_moment: Vec<Tensor>,
    pub step: usize,
}

/// Bias-corrected Adam with an optional schedule and gradient clipping.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    pub state: OptimizerState,
}

impl Adam {
    pub fn new(config: AdamConfig, store: &ParamStore) -> Self {
        let zeros: Vec<Tensor> = store.ids().map(|id| Tensor::zeros(store.get(id).shape())).collect();
        Adam {
            config,
            state: OptimizerState {
                first_moment: zeros.clone(),
                second_moment: zeros,
                step: 0,
            },
        }
    }

    /// Effective learning rate for the next update.
    pub fn current_lr(&self) -> f64 {
        self.config.lr * self.config.schedule.factor(self.state.step + 1)
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients) -> Result<()> {
        for id in store.ids() {
            match grads.try_get(id) {
                Some(g) if g.shape() == store.get(id).shape() => {}
                _ => return Err(TensorError::MissingGradient(store.name(id).to_string())),
            }
        }
        if self.state.first_moment.len() != store.len() {
            return Err(TensorError::Invalid {
                op: "adam",
                detail: "optimizer state does not match parameter store".into(),
            });
        }
        let clip = match self.config.clip_norm {
            Some(max) => {
                let norm = grads.global_norm();
                if norm > max {
                    max / norm
                } else {
                    1.0
                }
            }
            None => 1.0,
        };
        self.state.step += 1;
        let t = self.state.step as i32;
        let AdamConfig { beta1, beta2, eps, .. } = self.config;
        let lr = self.config.lr * self.config.schedule.factor(self.state.step);
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for id in store.ids() {
            let g = grads.get(id).data();
            let m = self.state.first_moment[id.index()].data_mut();
            let v = self.state.second_moment[id.index()].data_mut();
            let p = store.get_mut(id).data_mut();
            for j in 0..p.len() {
                let gj = g[j] * clip;
                m[j] = beta1 * m[j] + (1.0 - beta1) * gj;
                v[j] = beta2 * v[j] + (1.0 - beta2) * gj * gj;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                p[j] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
