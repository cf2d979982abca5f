//! Central-difference verification of analytic gradients.
//!
//! Numeric derivatives use the fourth-order central stencil
//! `(8(f(x+h) − f(x−h)) − (f(x+2h) − f(x−2h))) / 12h`, which keeps truncation
//! error far below round-off at `h ≈ 1e-5` in `f64`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, TensorError};
use crate::model::Fptn;
use crate::scalar::Scalar;
use crate::tape::RunningStats;
use crate::tensor::Tensor;

/// Inputs `x`, time features (when the model uses them) and targets `y` for one probe batch.
pub type ProbeBatch<S> = (Tensor<S>, Option<Tensor<S>>, Tensor<S>);

/// Seeded random batch for `model`, with random (positive-variance) running
/// statistics installed so eval-mode normalization is not the identity.
pub fn random_probe<S: Scalar>(model: &mut Fptn<S>, batch: usize, seed: u64) -> ProbeBatch<S> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = model.config().clone();
    let d = c.d_model;
    for pair in model.norms_mut() {
        for st in pair.iter_mut() {
            st.running = Some(RunningStats {
                mean: (0..d).map(|_| S::from_f64_lossy(rng.gen_range(-0.5..0.5))).collect(),
                var: (0..d).map(|_| S::from_f64_lossy(rng.gen_range(0.5..2.0))).collect(),
            });
        }
    }
    let mut draw = |shape: &[usize], lo: f64, hi: f64| {
        Tensor::from_fn(shape, |_| S::from_f64_lossy(rng.gen_range(lo..hi)))
    };
    let x = draw(&[batch, c.n_sensors, c.input_steps], -1.0, 1.0);
    let tf = c
        .time_embedding
        .then(|| draw(&[batch, c.n_sensors, c.time_feature_width()], 0.0, 1.0));
    let y = draw(&[batch, c.n_sensors, c.horizon], -1.0, 1.0);
    (x, tf, y)
}

/// Floor of the relative-error denominator. Gradients smaller than this are
/// compared absolutely, since round-off in the loss (~1e-11 after dividing by
/// the step) would otherwise dominate.
pub const REL_ERR_FLOOR: f64 = 1e-6;

/// `|a − n| / max(|a|, |n|, 1e-6)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupReport {
    pub name: String,
    pub coordinates: usize,
    pub max_rel_err: f64,
    /// Flat index of the worst coordinate with its analytic and numeric values.
    pub worst: (usize, f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub groups: Vec<GroupReport>,
    pub step: f64,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.groups.iter().map(|g| g.max_rel_err).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.groups.iter().all(|g| g.max_rel_err < self.tolerance)
    }

    pub fn failing(&self) -> impl Iterator<Item = &GroupReport> {
        self.groups.iter().filter(|g| g.max_rel_err >= self.tolerance)
    }
}

/// Compare `analytic` against central differences of `f` around `params`.
///
/// `f` is evaluated with one coordinate perturbed at a time; every other
/// coordinate keeps its value from `params`.
pub fn finite_diff_check<S, F>(
    mut f: F,
    params: &[(String, Tensor<S>)],
    analytic: &[Tensor<S>],
    step: f64,
    tolerance: f64,
) -> Result<GradCheckReport>
where
    S: Scalar,
    F: FnMut(&[Tensor<S>]) -> Result<S>,
{
    if step <= 0.0 {
        return Err(TensorError::Contract(format!("finite-difference step must be positive, got {step}")));
    }
    if params.len() != analytic.len() {
        return Err(TensorError::Contract(format!(
            "{} parameter groups but {} analytic gradients",
            params.len(),
            analytic.len()
        )));
    }
    let mut work: Vec<Tensor<S>> = params.iter().map(|(_, t)| t.clone()).collect();
    let h = S::from_f64_lossy(step);
    let mut groups = Vec::with_capacity(params.len());
    for (gi, ((name, p), a)) in params.iter().zip(analytic).enumerate() {
        if p.shape() != a.shape() {
            return Err(TensorError::shape("finite_diff_check", p.shape(), a.shape()));
        }
        let mut report = GroupReport {
            name: name.clone(),
            coordinates: p.len(),
            max_rel_err: 0.0,
            worst: (0, 0.0, 0.0),
        };
        for i in 0..p.len() {
            let orig = p.data()[i];
            let mut eval = |delta: S| -> Result<f64> {
                work[gi].data_mut()[i] = orig + delta;
                f(&work).map(|v| v.to_f64_lossy())
            };
            let near = eval(h)? - eval(-h)?;
            let far = eval(h + h)? - eval(-(h + h))?;
            work[gi].data_mut()[i] = orig;
            let numeric = (8.0 * near - far) / (12.0 * step);
            let an = a.data()[i].to_f64_lossy();
            let err = relative_error(an, numeric);
            if err > report.max_rel_err || i == 0 {
                report.max_rel_err = report.max_rel_err.max(err);
                report.worst = (i, an, numeric);
            }
        }
        groups.push(report);
    }
    Ok(GradCheckReport {
        groups,
        step,
        tolerance,
    })
}
