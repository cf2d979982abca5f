//! Rectified Adam.
//!
//! With `ρ∞ = 2/(1−β₂) − 1` and `ρ_t = ρ∞ − 2tβ₂ᵗ/(1−β₂ᵗ)`, a step applies the
//! variance-rectified adaptive update once `ρ_t > 4` and plain bias-corrected
//! momentum `lr·m̂_t` before that.

use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::TrainError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RAdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm clip; off when `None`.
    pub clip_grad_norm: Option<f64>,
}

impl Default for RAdamConfig {
    fn default() -> Self {
        RAdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_grad_norm: None,
        }
    }
}

/// First/second moments mirroring the parameter shapes, plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<S> {
    pub m: Vec<Vec<S>>,
    pub v: Vec<Vec<S>>,
    pub step: u64,
}

#[derive(Debug, Clone)]
pub struct RAdam<S> {
    pub config: RAdamConfig,
    pub state: OptimizerState<S>,
}

impl<S: Scalar> RAdam<S> {
    pub fn new<'a>(config: RAdamConfig, params: impl IntoIterator<Item = &'a Tensor<S>>) -> Self {
        let sizes: Vec<usize> = params.into_iter().map(|p| p.len()).collect();
        RAdam {
            config,
            state: OptimizerState {
                m: sizes.iter().map(|&n| vec![S::zero(); n]).collect(),
                v: sizes.iter().map(|&n| vec![S::zero(); n]).collect(),
                step: 0,
            },
        }
    }

    /// `ρ_t` for step `t ≥ 1`.
    pub fn rho(&self, t: u64) -> f64 {
        let b2 = self.config.beta2;
        let rho_inf = 2.0 / (1.0 - b2) - 1.0;
        let b2t = b2.powi(t as i32);
        rho_inf - 2.0 * t as f64 * b2t / (1.0 - b2t)
    }

    /// One update. `names` label parameters in diagnostics.
    pub fn step(
        &mut self,
        params: &mut [&mut Tensor<S>],
        grads: &[Tensor<S>],
        names: &[String],
    ) -> Result<(), TrainError> {
        if params.len() != self.state.m.len() || grads.len() != params.len() {
            return Err(TrainError::Config(format!(
                "optimizer tracks {} arrays, got {} parameters and {} gradients",
                self.state.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, g) in grads.iter().enumerate() {
            if g.len() != self.state.m[i].len() {
                return Err(TrainError::Config(format!(
                    "gradient {} has {} values, moment has {}",
                    names.get(i).map(String::as_str).unwrap_or("?"),
                    g.len(),
                    self.state.m[i].len()
                )));
            }
            if !g.all_finite() {
                return Err(TrainError::NonFiniteGradient {
                    param: names.get(i).cloned().unwrap_or_else(|| format!("#{i}")),
                });
            }
        }
        let clip = match self.config.clip_grad_norm {
            Some(max) => {
                let norm = grads
                    .iter()
                    .flat_map(|g| g.data())
                    .map(|v| v.to_f64_lossy().powi(2))
                    .sum::<f64>()
                    .sqrt();
                if norm > max { max / norm } else { 1.0 }
            }
            None => 1.0,
        };

        self.state.step += 1;
        let t = self.state.step;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(t as i32);
        let bc2 = 1.0 - c.beta2.powi(t as i32);
        let rho_inf = 2.0 / (1.0 - c.beta2) - 1.0;
        let rho_t = self.rho(t);
        let rectifier = (rho_t > 4.0).then(|| {
            ((rho_t - 4.0) * (rho_t - 2.0) * rho_inf / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t)).sqrt()
        });

        let (b1, b2) = (S::from_f64_lossy(c.beta1), S::from_f64_lossy(c.beta2));
        let (one_b1, one_b2) = (S::from_f64_lossy(1.0 - c.beta1), S::from_f64_lossy(1.0 - c.beta2));
        let lr_m = S::from_f64_lossy(c.lr / bc1);
        let clip = S::from_f64_lossy(clip);
        let eps = S::from_f64_lossy(c.eps);
        let sqrt_bc2 = S::from_f64_lossy(bc2.sqrt());
        let r = rectifier.map(S::from_f64_lossy);

        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.state.m[i], &mut self.state.v[i]);
            for (j, w) in p.data_mut().iter_mut().enumerate() {
                let gj = g.data()[j] * clip;
                m[j] = b1 * m[j] + one_b1 * gj;
                v[j] = b2 * v[j] + one_b2 * gj * gj;
                let update = match r {
                    Some(r) => lr_m * m[j] * r * sqrt_bc2 / (v[j].sqrt() + eps),
                    None => lr_m * m[j],
                };
                *w -= update;
            }
        }
        Ok(())
    }
}
