//! Learnable arrays of the network and their initialization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{ModelConfig, PositionalMode};
use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Standard deviation of the learnable positional matrix at init.
pub const POSITIONAL_INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<S> {
    /// Fused per-head projections, `d×d`; head `i` owns columns `i·D..(i+1)·D`.
    pub w_q: Tensor<S>,
    pub w_k: Tensor<S>,
    pub w_v: Tensor<S>,
    pub w_o: Tensor<S>,
    pub ffn_w1: Tensor<S>,
    pub ffn_b1: Tensor<S>,
    pub ffn_w2: Tensor<S>,
    pub ffn_b2: Tensor<S>,
    pub norm1_gamma: Tensor<S>,
    pub norm1_beta: Tensor<S>,
    pub norm2_gamma: Tensor<S>,
    pub norm2_beta: Tensor<S>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<S> {
    pub traffic_w: Tensor<S>,
    pub traffic_b: Tensor<S>,
    pub time_w: Option<Tensor<S>>,
    pub time_b: Option<Tensor<S>>,
    pub positional: Option<Tensor<S>>,
    pub layers: Vec<LayerParams<S>>,
    pub out_w: Tensor<S>,
    pub out_b: Tensor<S>,
}

fn glorot<S: Scalar>(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Tensor<S> {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::from_fn(&[fan_in, fan_out], |_| S::from_f64_lossy(rng.gen_range(-a..a)))
}

impl<S: Scalar> ModelParams<S> {
    /// Glorot-uniform weights, zero biases, unit gammas, `N(0, 0.02²)` positional matrix.
    pub fn init(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (n, t, k, d) = (
            config.n_sensors,
            config.input_steps,
            config.horizon,
            config.d_model,
        );
        let traffic_w = glorot(&mut rng, t, d);
        let (time_w, time_b) = if config.time_embedding {
            (Some(glorot(&mut rng, 3 * t, d)), Some(Tensor::zeros(&[d])))
        } else {
            (None, None)
        };
        let positional = if config.positional == PositionalMode::Learnable {
            Some(super::network::positional_embedding(
                PositionalMode::Learnable,
                n,
                d,
                &mut rng,
            ))
        } else {
            None
        };
        let layers = (0..config.layers)
            .map(|_| LayerParams {
                w_q: glorot(&mut rng, d, d),
                w_k: glorot(&mut rng, d, d),
                w_v: glorot(&mut rng, d, d),
                w_o: glorot(&mut rng, d, d),
                ffn_w1: glorot(&mut rng, d, 4 * d),
                ffn_b1: Tensor::zeros(&[4 * d]),
                ffn_w2: glorot(&mut rng, 4 * d, d),
                ffn_b2: Tensor::zeros(&[d]),
                norm1_gamma: Tensor::ones(&[d]),
                norm1_beta: Tensor::zeros(&[d]),
                norm2_gamma: Tensor::ones(&[d]),
                norm2_beta: Tensor::zeros(&[d]),
            })
            .collect();
        Ok(ModelParams {
            traffic_w,
            traffic_b: Tensor::zeros(&[d]),
            time_w,
            time_b,
            positional,
            layers,
            out_w: glorot(&mut rng, d, k),
            out_b: Tensor::zeros(&[k]),
        })
    }

    /// Every array paired with its stable name, in a fixed order.
    pub fn named(&self) -> Vec<(String, &Tensor<S>)> {
        let mut out: Vec<(String, &Tensor<S>)> = vec![
            ("traffic_embedding.weight".into(), &self.traffic_w),
            ("traffic_embedding.bias".into(), &self.traffic_b),
        ];
        if let (Some(w), Some(b)) = (&self.time_w, &self.time_b) {
            out.push(("time_embedding.weight".into(), w));
            out.push(("time_embedding.bias".into(), b));
        }
        if let Some(p) = &self.positional {
            out.push(("positional_embedding".into(), p));
        }
        for (l, lp) in self.layers.iter().enumerate() {
            for (name, t) in lp.fields() {
                out.push((format!("layer{l}.{name}"), t));
            }
        }
        out.push(("output.weight".into(), &self.out_w));
        out.push(("output.bias".into(), &self.out_b));
        out
    }

    /// Mutable views in the same order as [`ModelParams::named`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<S>> {
        let mut out: Vec<&mut Tensor<S>> = vec![&mut self.traffic_w, &mut self.traffic_b];
        if let (Some(w), Some(b)) = (&mut self.time_w, &mut self.time_b) {
            out.push(w);
            out.push(b);
        }
        if let Some(p) = &mut self.positional {
            out.push(p);
        }
        for lp in &mut self.layers {
            out.extend(lp.fields_mut());
        }
        out.push(&mut self.out_w);
        out.push(&mut self.out_b);
        out
    }

    pub fn count(&self) -> usize {
        self.named().iter().map(|(_, t)| t.len()).sum()
    }

    /// Replace every array from a list ordered like [`ModelParams::named`].
    pub fn assign(&mut self, values: &[Tensor<S>]) -> Result<()> {
        let mut slots = self.tensors_mut();
        if slots.len() != values.len() {
            return Err(TensorError::Contract(format!(
                "expected {} parameter arrays, got {}",
                slots.len(),
                values.len()
            )));
        }
        for (slot, v) in slots.iter_mut().zip(values) {
            if slot.shape() != v.shape() {
                return Err(TensorError::shape("assign", slot.shape(), v.shape()));
            }
            **slot = v.clone();
        }
        Ok(())
    }
}

impl<S: Scalar> LayerParams<S> {
    fn fields(&self) -> [(&'static str, &Tensor<S>); 12] {
        [
            ("attention.query", &self.w_q),
            ("attention.key", &self.w_k),
            ("attention.value", &self.w_v),
            ("attention.output", &self.w_o),
            ("ffn.w1", &self.ffn_w1),
            ("ffn.b1", &self.ffn_b1),
            ("ffn.w2", &self.ffn_w2),
            ("ffn.b2", &self.ffn_b2),
            ("norm1.gamma", &self.norm1_gamma),
            ("norm1.beta", &self.norm1_beta),
            ("norm2.gamma", &self.norm2_gamma),
            ("norm2.beta", &self.norm2_beta),
        ]
    }

    fn fields_mut(&mut self) -> [&mut Tensor<S>; 12] {
        [
            &mut self.w_q,
            &mut self.w_k,
            &mut self.w_v,
            &mut self.w_o,
            &mut self.ffn_w1,
            &mut self.ffn_b1,
            &mut self.ffn_w2,
            &mut self.ffn_b2,
            &mut self.norm1_gamma,
            &mut self.norm1_beta,
            &mut self.norm2_gamma,
            &mut self.norm2_beta,
        ]
    }
}

/// Sinusoidal table over sensor index: channel `2i` is `sin(p/10000^(2i/d))`, `2i+1` the cosine.
pub fn sinusoidal_table<S: Scalar>(n: usize, d: usize) -> Tensor<S> {
    Tensor::from_fn(&[n, d], |idx| {
        let (p, c) = (idx / d, idx % d);
        let pair = (c / 2) as f64;
        let angle = p as f64 / 10000f64.powf(2.0 * pair / d as f64);
        S::from_f64_lossy(if c % 2 == 0 { angle.sin() } else { angle.cos() })
    })
}
