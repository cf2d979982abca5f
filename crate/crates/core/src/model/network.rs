//! Forward pass: embeddings, post-norm encoder stack, output head, loss.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{ModelConfig, PositionalMode};
use super::params::{sinusoidal_table, LayerParams, ModelParams};
use crate::error::{Result, TensorError};
use crate::gradcheck::{finite_diff_check, GradCheckReport};
use crate::scalar::Scalar;
use crate::tape::{BatchNormState, NormMode, Tape, Var};
use crate::tensor::Tensor;

/// Tape handles for one encoder layer.
#[derive(Debug, Clone, Copy)]
pub struct LayerVars {
    pub w_q: Var,
    pub w_k: Var,
    pub w_v: Var,
    pub w_o: Var,
    pub ffn_w1: Var,
    pub ffn_b1: Var,
    pub ffn_w2: Var,
    pub ffn_b2: Var,
    pub norm1_gamma: Var,
    pub norm1_beta: Var,
    pub norm2_gamma: Var,
    pub norm2_beta: Var,
}

/// Tape handles for every parameter; `ordered` follows [`ModelParams::named`].
#[derive(Debug, Clone)]
pub struct ParamVars {
    pub ordered: Vec<Var>,
    pub traffic: (Var, Var),
    pub time: Option<(Var, Var)>,
    /// Learnable matrix, or the fixed table recorded as a constant.
    pub positional: Option<Var>,
    pub layers: Vec<LayerVars>,
    pub output: (Var, Var),
}

impl ParamVars {
    pub fn register<S: Scalar>(
        tape: &mut Tape<S>,
        params: &ModelParams<S>,
        fixed_positional: Option<&Tensor<S>>,
    ) -> Result<Self> {
        let mut ordered = Vec::new();
        let mut reg = |tape: &mut Tape<S>, t: &Tensor<S>| -> Result<Var> {
            let v = tape.param(t.clone())?;
            ordered.push(v);
            Ok(v)
        };
        let traffic = (reg(tape, &params.traffic_w)?, reg(tape, &params.traffic_b)?);
        let time = match (&params.time_w, &params.time_b) {
            (Some(w), Some(b)) => Some((reg(tape, w)?, reg(tape, b)?)),
            _ => None,
        };
        let positional = match (&params.positional, fixed_positional) {
            (Some(p), _) => Some(reg(tape, p)?),
            (None, Some(fixed)) => Some(tape.constant(fixed.clone())?),
            (None, None) => None,
        };
        let mut layers = Vec::with_capacity(params.layers.len());
        for lp in &params.layers {
            let LayerParams {
                w_q,
                w_k,
                w_v,
                w_o,
                ffn_w1,
                ffn_b1,
                ffn_w2,
                ffn_b2,
                norm1_gamma,
                norm1_beta,
                norm2_gamma,
                norm2_beta,
            } = lp;
            layers.push(LayerVars {
                w_q: reg(tape, w_q)?,
                w_k: reg(tape, w_k)?,
                w_v: reg(tape, w_v)?,
                w_o: reg(tape, w_o)?,
                ffn_w1: reg(tape, ffn_w1)?,
                ffn_b1: reg(tape, ffn_b1)?,
                ffn_w2: reg(tape, ffn_w2)?,
                ffn_b2: reg(tape, ffn_b2)?,
                norm1_gamma: reg(tape, norm1_gamma)?,
                norm1_beta: reg(tape, norm1_beta)?,
                norm2_gamma: reg(tape, norm2_gamma)?,
                norm2_beta: reg(tape, norm2_beta)?,
            });
        }
        let output = (reg(tape, &params.out_w)?, reg(tape, &params.out_b)?);
        Ok(ParamVars {
            ordered,
            traffic,
            time,
            positional,
            layers,
            output,
        })
    }
}

/// `S = X·Wˢ + bˢ`, one row per sensor token.
pub fn embed_traffic<S: Scalar>(tape: &mut Tape<S>, x: Var, w: Var, b: Var) -> Result<Var> {
    if tape.shape(x).len() != 2 || tape.shape(x)[1] != tape.shape(w)[0] {
        return Err(TensorError::shape("embed_traffic", tape.shape(x), tape.shape(w)));
    }
    tape.affine(x, w, b)
}

/// `TE = TF·Wᵗ + bᵗ`; `tf` rows must be `3T` wide.
pub fn build_time_embedding<S: Scalar>(
    tape: &mut Tape<S>,
    tf: Var,
    w: Var,
    b: Var,
    input_steps: usize,
) -> Result<Var> {
    let s = tape.shape(tf);
    if s.len() != 2 || s[1] != 3 * input_steps {
        return Err(TensorError::shape("build_time_embedding", s, &[3 * input_steps]));
    }
    tape.affine(tf, w, b)
}

/// Positional matrix for `mode`: zeros, the sinusoidal table, or a fresh `N(0, 0.02²)` draw.
pub fn positional_embedding<S: Scalar>(
    mode: PositionalMode,
    n: usize,
    d: usize,
    rng: &mut impl Rng,
) -> Tensor<S> {
    match mode {
        PositionalMode::None => Tensor::zeros(&[n, d]),
        PositionalMode::Fixed => sinusoidal_table(n, d),
        PositionalMode::Learnable => {
            let normal = rand_distr::Normal::new(0.0, super::params::POSITIONAL_INIT_STD)
                .expect("valid std");
            Tensor::from_fn(&[n, d], |_| {
                S::from_f64_lossy(rand_distr::Distribution::sample(&normal, rng))
            })
        }
    }
}

/// `E = S + TE + PE`. `pe` is `[N×d]` and repeats over each block of `N` rows.
pub fn compose_input<S: Scalar>(
    tape: &mut Tape<S>,
    s: Var,
    te: Option<Var>,
    pe: Option<Var>,
) -> Result<Var> {
    let mut e = s;
    if let Some(te) = te {
        e = tape.add(e, te)?;
    }
    if let Some(pe) = pe {
        e = tape.add_tiled(e, pe)?;
    }
    Ok(e)
}

/// `softmax(Q·Kᵀ/√D)·V` over `[G×N×D]` blocks. Returns the output and the weights.
pub fn scaled_dot_attention<S: Scalar>(
    tape: &mut Tape<S>,
    q: Var,
    k: Var,
    v: Var,
) -> Result<(Var, Var)> {
    let dh = *tape.shape(q).last().expect("rank-3 input");
    let scores = tape.batch_matmul(q, k, true)?;
    let scaled = tape.scale(scores, S::one() / S::from_usize_lossy(dh).sqrt())?;
    let weights = tape.softmax(scaled)?;
    let out = tape.batch_matmul(weights, v, false)?;
    Ok((out, weights))
}

/// Heads from sliced fused projections, concatenated, then projected by `W^O`.
pub fn multi_head_attention<S: Scalar>(
    tape: &mut Tape<S>,
    e: Var,
    layer: &LayerVars,
    batch: usize,
    seq: usize,
    heads: usize,
) -> Result<(Var, Var)> {
    let q = tape.matmul(e, layer.w_q)?;
    let k = tape.matmul(e, layer.w_k)?;
    let v = tape.matmul(e, layer.w_v)?;
    let q = tape.split_heads(q, batch, seq, heads)?;
    let k = tape.split_heads(k, batch, seq, heads)?;
    let v = tape.split_heads(v, batch, seq, heads)?;
    let (o, weights) = scaled_dot_attention(tape, q, k, v)?;
    let concat = tape.merge_heads(o, batch, seq, heads)?;
    Ok((tape.matmul(concat, layer.w_o)?, weights))
}

/// `GELU(x·W₁ + b₁)·W₂ + b₂`.
pub fn feed_forward<S: Scalar>(
    tape: &mut Tape<S>,
    x: Var,
    w1: Var,
    b1: Var,
    w2: Var,
    b2: Var,
) -> Result<Var> {
    let h = tape.affine(x, w1, b1)?;
    let h = tape.gelu(h)?;
    tape.affine(h, w2, b2)
}

/// Mean of `|Y − Ŷ|` over every entry.
pub fn mae_loss<S: Scalar>(tape: &mut Tape<S>, yhat: Var, y: Var) -> Result<Var> {
    tape.mean_abs_diff(yhat, y)
}

/// Inverted-dropout masks, only drawn when a rate is configured.
#[derive(Debug, Clone)]
pub struct Dropout {
    rate: f64,
    rng: ChaCha8Rng,
}

impl Dropout {
    pub fn new(rate: f64, seed: u64) -> Self {
        Dropout {
            rate,
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0xD80F_0D80),
        }
    }

    fn apply<S: Scalar>(&mut self, tape: &mut Tape<S>, x: Var, mode: NormMode) -> Result<Var> {
        if self.rate == 0.0 || mode == NormMode::Eval {
            return Ok(x);
        }
        let keep = 1.0 - self.rate;
        let scale = S::from_f64_lossy(1.0 / keep);
        let shape = tape.shape(x).to_vec();
        let mask = Tensor::from_fn(&shape, |_| {
            if self.rng.gen::<f64>() < keep {
                scale
            } else {
                S::zero()
            }
        });
        let m = tape.constant(mask)?;
        tape.mul(x, m)
    }
}

/// Post-norm layer: `a = BN₁(x + MHA(x))`, `y = BN₂(a + FFN(a))`.
#[allow(clippy::too_many_arguments)]
pub fn encoder_layer<S: Scalar>(
    tape: &mut Tape<S>,
    x: Var,
    layer: &LayerVars,
    norms: &mut [BatchNormState<S>; 2],
    batch: usize,
    seq: usize,
    heads: usize,
    mode: NormMode,
    dropout: &mut Dropout,
) -> Result<(Var, Var)> {
    let (attn, weights) = multi_head_attention(tape, x, layer, batch, seq, heads)?;
    let attn = dropout.apply(tape, attn, mode)?;
    let r1 = tape.add(x, attn)?;
    let a = tape.batch_norm(r1, layer.norm1_gamma, layer.norm1_beta, &mut norms[0], mode)?;
    let ff = feed_forward(tape, a, layer.ffn_w1, layer.ffn_b1, layer.ffn_w2, layer.ffn_b2)?;
    let ff = dropout.apply(tape, ff, mode)?;
    let r2 = tape.add(a, ff)?;
    let y = tape.batch_norm(r2, layer.norm2_gamma, layer.norm2_beta, &mut norms[1], mode)?;
    Ok((y, weights))
}

/// Handles produced by one recorded forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// `[B×N×K]`.
    pub yhat: Var,
    pub params: ParamVars,
    /// Per layer, `[B·h × N × N]` attention weights.
    pub attention: Vec<Var>,
}

/// The network with its parameters and batch-norm running statistics.
#[derive(Debug, Clone)]
pub struct Fptn<S> {
    config: ModelConfig,
    params: ModelParams<S>,
    norms: Vec<[BatchNormState<S>; 2]>,
    fixed_positional: Option<Tensor<S>>,
    dropout: Dropout,
}

impl<S: Scalar> Fptn<S> {
    pub fn new(config: ModelConfig) -> Result<Self> {
        let params = ModelParams::init(&config)?;
        let norms = (0..config.layers)
            .map(|_| [BatchNormState::default(), BatchNormState::default()])
            .collect();
        Self::from_parts(config, params, norms)
    }

    pub fn from_parts(
        config: ModelConfig,
        params: ModelParams<S>,
        norms: Vec<[BatchNormState<S>; 2]>,
    ) -> Result<Self> {
        config.validate()?;
        let reference = ModelParams::<S>::init(&config)?;
        let want: Vec<_> = reference.named().into_iter().map(|(n, t)| (n, t.shape().to_vec())).collect();
        let got: Vec<_> = params.named().into_iter().map(|(n, t)| (n, t.shape().to_vec())).collect();
        if want != got {
            return Err(TensorError::Contract(
                "parameter arrays do not match the model configuration".into(),
            ));
        }
        if norms.len() != config.layers {
            return Err(TensorError::Contract(format!(
                "{} normalization pairs for {} layers",
                norms.len(),
                config.layers
            )));
        }
        let fixed_positional = (config.positional == PositionalMode::Fixed)
            .then(|| sinusoidal_table(config.n_sensors, config.d_model));
        let dropout = Dropout::new(config.dropout, config.seed);
        Ok(Fptn {
            config,
            params,
            norms,
            fixed_positional,
            dropout,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ModelParams<S> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ModelParams<S> {
        &mut self.params
    }

    pub fn norms(&self) -> &[[BatchNormState<S>; 2]] {
        &self.norms
    }

    pub fn norms_mut(&mut self) -> &mut [[BatchNormState<S>; 2]] {
        &mut self.norms
    }

    /// Running mean 0 / variance 1 at every normalization site.
    pub fn set_unit_norm_stats(&mut self) {
        let d = self.config.d_model;
        for pair in &mut self.norms {
            *pair = [BatchNormState::unit(d), BatchNormState::unit(d)];
        }
    }

    fn check_input(&self, x: &Tensor<S>, tf: Option<&Tensor<S>>) -> Result<usize> {
        let c = &self.config;
        let xs = x.shape();
        if xs.len() != 3 || xs[1] != c.n_sensors || xs[2] != c.input_steps {
            return Err(TensorError::shape(
                "forward",
                xs,
                &[xs.first().copied().unwrap_or(0), c.n_sensors, c.input_steps],
            ));
        }
        let batch = xs[0];
        if c.time_embedding {
            let tf = tf.ok_or_else(|| {
                TensorError::Contract("time features are required when time embedding is on".into())
            })?;
            let want = [batch, c.n_sensors, c.time_feature_width()];
            if tf.shape() != want {
                return Err(TensorError::shape("forward", tf.shape(), &want));
            }
        }
        Ok(batch)
    }

    /// Record the full forward pass on `tape`.
    ///
    /// `x` is `[B×N×T]`, `tf` is `[B×N×3T]` (ignored when time embedding is off).
    pub fn forward(
        &mut self,
        tape: &mut Tape<S>,
        x: &Tensor<S>,
        tf: Option<&Tensor<S>>,
        mode: NormMode,
    ) -> Result<ForwardPass> {
        let batch = self.check_input(x, tf)?;
        let c = &self.config;
        let (n, t, d, k) = (c.n_sensors, c.input_steps, c.d_model, c.horizon);
        let pv = ParamVars::register(tape, &self.params, self.fixed_positional.as_ref())?;

        let xv = tape.constant(x.reshape(&[batch * n, t])?)?;
        let s = embed_traffic(tape, xv, pv.traffic.0, pv.traffic.1)?;
        let te = match (pv.time, tf) {
            (Some((w, b)), Some(tf)) => {
                let tfv = tape.constant(tf.reshape(&[batch * n, 3 * t])?)?;
                Some(build_time_embedding(tape, tfv, w, b, t)?)
            }
            _ => None,
        };
        let mut h = compose_input(tape, s, te, pv.positional)?;

        let mut attention = Vec::with_capacity(pv.layers.len());
        for (lv, norms) in pv.layers.iter().zip(self.norms.iter_mut()) {
            let (y, w) = encoder_layer(
                tape,
                h,
                lv,
                norms,
                batch,
                n,
                c.heads,
                mode,
                &mut self.dropout,
            )?;
            attention.push(w);
            h = y;
        }
        let out = tape.affine(h, pv.output.0, pv.output.1)?;
        let yhat = tape.reshape(out, &[batch, n, k])?;
        debug_assert_eq!(tape.shape(h), &[batch * n, d]);
        Ok(ForwardPass {
            yhat,
            params: pv,
            attention,
        })
    }

    /// Eval-mode forecast `[B×N×K]`; running statistics are left untouched.
    pub fn predict(&self, x: &Tensor<S>, tf: Option<&Tensor<S>>) -> Result<Tensor<S>> {
        let mut scratch = self.clone();
        let mut tape = Tape::new();
        let pass = scratch.forward(&mut tape, x, tf, NormMode::Eval)?;
        Ok(tape.value(pass.yhat).clone())
    }

    /// Loss value and gradients ordered like [`ModelParams::named`].
    pub fn loss_and_grads(
        &mut self,
        x: &Tensor<S>,
        tf: Option<&Tensor<S>>,
        y: &Tensor<S>,
        mode: NormMode,
    ) -> Result<(S, Vec<Tensor<S>>)> {
        let mut tape = Tape::new();
        let pass = self.forward(&mut tape, x, tf, mode)?;
        let yv = tape.constant(y.clone())?;
        let loss = mae_loss(&mut tape, pass.yhat, yv)?;
        let grads = tape.backward(loss)?;
        let value = tape.value(loss).data()[0];
        Ok((value, pass.params.ordered.iter().map(|&v| grads.get(v)).collect()))
    }

    /// MAE of one forward pass in `mode`, leaving `self` untouched.
    pub fn loss(&self, x: &Tensor<S>, tf: Option<&Tensor<S>>, y: &Tensor<S>, mode: NormMode) -> Result<S> {
        let mut scratch = self.clone();
        let mut tape = Tape::new();
        let pass = scratch.forward(&mut tape, x, tf, mode)?;
        let yhat = tape.value(pass.yhat);
        if yhat.shape() != y.shape() {
            return Err(TensorError::shape("loss", yhat.shape(), y.shape()));
        }
        let total: S = yhat
            .data()
            .iter()
            .zip(y.data())
            .map(|(&a, &b)| (a - b).abs())
            .sum();
        Ok(total / S::from_usize_lossy(y.len()))
    }

    /// Central-difference check of the MAE gradient for every parameter group.
    ///
    /// In train mode the loss depends on the batch statistics, which the
    /// check differentiates through; running statistics are never consulted.
    pub fn check_gradients(
        &self,
        x: &Tensor<S>,
        tf: Option<&Tensor<S>>,
        y: &Tensor<S>,
        mode: NormMode,
        step: f64,
        tolerance: f64,
    ) -> Result<GradCheckReport> {
        let mut probe = self.clone();
        let (_, analytic) = probe.loss_and_grads(x, tf, y, mode)?;
        self.check_gradients_against(x, tf, y, mode, &analytic, step, tolerance)
    }

    /// Like [`Fptn::check_gradients`] with caller-supplied analytic gradients.
    #[allow(clippy::too_many_arguments)]
    pub fn check_gradients_against(
        &self,
        x: &Tensor<S>,
        tf: Option<&Tensor<S>>,
        y: &Tensor<S>,
        mode: NormMode,
        analytic: &[Tensor<S>],
        step: f64,
        tolerance: f64,
    ) -> Result<GradCheckReport> {
        let named: Vec<(String, Tensor<S>)> = self
            .params
            .named()
            .into_iter()
            .map(|(n, t)| (n, t.clone()))
            .collect();
        let mut probe = self.clone();
        let loss = |values: &[Tensor<S>]| -> Result<S> {
            probe.params.assign(values)?;
            probe.loss(x, tf, y, mode)
        };
        finite_diff_check(loss, &named, analytic, step, tolerance)
    }
}
