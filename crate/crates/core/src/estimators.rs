//! Drift estimators for the discrete update: exact gradient, mini-batch
//! stochastic gradient, and the variance-reduced (anchor + control variate)
//! variant. One batch is drawn per step and shared by all particles.

use crate::ensemble::{NoiseSource, ParticleEnsemble};
use crate::error::{MfldError, Result};
use crate::functionals::{full_drift, MeanFieldFunctional, Regularizer};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchMode {
    /// B i.i.d. uniform indices (online sampling).
    WithReplacement,
    /// A uniformly random B-subset, B <= n.
    WithoutReplacement,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    Full,
    Sgd,
    Svrg,
}

#[derive(Debug, Clone, Copy)]
pub struct EstimatorConfig {
    pub kind: EstimatorKind,
    pub batch_size: usize,
    /// Anchor refresh period m (svrg only).
    pub refresh_period: usize,
    pub batch_mode: BatchMode,
}

impl EstimatorConfig {
    pub fn full() -> Self {
        EstimatorConfig {
            kind: EstimatorKind::Full,
            batch_size: 0,
            refresh_period: 1,
            batch_mode: BatchMode::WithReplacement,
        }
    }

    pub fn sgd(batch_size: usize, mode: BatchMode) -> Self {
        EstimatorConfig {
            kind: EstimatorKind::Sgd,
            batch_size,
            refresh_period: 1,
            batch_mode: mode,
        }
    }

    pub fn svrg(batch_size: usize, refresh_period: usize) -> Self {
        EstimatorConfig {
            kind: EstimatorKind::Svrg,
            batch_size,
            refresh_period,
            // the anchor construction samples without duplication
            batch_mode: BatchMode::WithoutReplacement,
        }
    }

    pub fn validate(&self, model: &dyn MeanFieldFunctional) -> Result<()> {
        match self.kind {
            EstimatorKind::Full => Ok(()),
            EstimatorKind::Sgd | EstimatorKind::Svrg => {
                let n = model.n_data();
                if self.batch_size == 0 {
                    return Err(MfldError::Estimator("batch size must be >= 1".to_string()));
                }
                if n == 0 {
                    return Err(MfldError::Estimator(
                        "stochastic estimators need a per-datum decomposition".to_string(),
                    ));
                }
                if self.kind == EstimatorKind::Svrg {
                    if self.refresh_period == 0 {
                        return Err(MfldError::Estimator(
                            "refresh period must be >= 1".to_string(),
                        ));
                    }
                    if self.batch_size > n {
                        return Err(MfldError::Estimator(format!(
                            "svrg draws without duplication: B={} > n={n}",
                            self.batch_size
                        )));
                    }
                }
                if self.batch_mode == BatchMode::WithoutReplacement && self.batch_size > n {
                    return Err(MfldError::Estimator(format!(
                        "cannot draw {} of {n} without replacement",
                        self.batch_size
                    )));
                }
                Ok(())
            }
        }
    }
}

/// Draw the step-k batch. Deterministic given (source, k); outcomes are
/// i.i.d. uniform (with replacement) or a uniform B-subset (without).
pub fn draw_batch(
    source: &NoiseSource,
    k: u64,
    batch_size: usize,
    n_data: usize,
    mode: BatchMode,
) -> Result<Vec<usize>> {
    if batch_size == 0 || n_data == 0 {
        return Err(MfldError::Estimator(
            "draw_batch needs B >= 1 and n >= 1".to_string(),
        ));
    }
    match mode {
        BatchMode::WithReplacement => Ok((0..batch_size)
            .map(|t| source.uniform_index(k, t as u64, 0, n_data))
            .collect()),
        BatchMode::WithoutReplacement => {
            if batch_size > n_data {
                return Err(MfldError::Estimator(format!(
                    "cannot draw {batch_size} of {n_data} without replacement"
                )));
            }
            // partial Fisher-Yates: uniform over ordered B-tuples, hence
            // uniform over B-subsets
            let mut pool: Vec<usize> = (0..n_data).collect();
            for t in 0..batch_size {
                let j = t + source.uniform_index(k, t as u64, 1, n_data - t);
                pool.swap(t, j);
            }
            pool.truncate(batch_size);
            Ok(pool)
        }
    }
}

/// Mini-batch drift: (1/B) sum_{j in batch} per-datum gradient + grad r.
pub fn sgd_drift(
    model: &dyn MeanFieldFunctional,
    reg: &Regularizer,
    e: &ParticleEnsemble,
    i: usize,
    batch: &[usize],
) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(MfldError::Estimator("empty batch".to_string()));
    }
    let n = model.n_data();
    if batch.iter().any(|&j| j >= n) {
        return Err(MfldError::Estimator(format!("batch index out of range (n={n})")));
    }
    let x = e.row(i);
    let mut v = vec![0.0; model.dim()];
    let inv = 1.0 / batch.len() as f64;
    for &j in batch {
        linalg::axpy(&mut v, inv, &model.per_datum_grad(e, x, j));
    }
    linalg::axpy(&mut v, 2.0 * reg.weight(), x);
    ensure_finite(&v, e.step(), i, "sgd drift")?;
    Ok(v)
}

/// Anchor snapshot for the variance-reduced estimator: positions plus the
/// full first-variation gradients evaluated there. Per-datum anchor terms
/// are recomputed on demand for the sampled indices only, trading one extra
/// per-datum evaluation per index for O(Nd) instead of O(nNd) memory.
#[derive(Debug, Clone)]
pub struct SvrgState {
    anchor: ParticleEnsemble,
    /// Row-major N x d; U-part only (the regularizer is not variance-reduced).
    anchor_full_grads: Vec<f64>,
    anchor_step: usize,
}

impl SvrgState {
    pub fn refresh(model: &dyn MeanFieldFunctional, e: &ParticleEnsemble) -> Self {
        SvrgState {
            anchor: e.clone(),
            anchor_full_grads: model.grad_first_variation_all(e),
            anchor_step: e.step(),
        }
    }

    pub fn anchor(&self) -> &ParticleEnsemble {
        &self.anchor
    }

    pub fn anchor_step(&self) -> usize {
        self.anchor_step
    }

    pub fn anchor_full_grad(&self, i: usize) -> &[f64] {
        let d = self.anchor.dim();
        &self.anchor_full_grads[i * d..(i + 1) * d]
    }

    /// Row-major N x d matrix of U-gradients at the anchor.
    pub fn anchor_full_grads(&self) -> &[f64] {
        &self.anchor_full_grads
    }
}

/// Control-variate drift:
/// (1/B) sum_{j in batch} [ g_j(mu_k, X^i) - g_j(mu_anchor, anchor X^i) ]
/// + full U-gradient at the anchor + grad r(X^i).
///
/// Both the evaluation point and the empirical measure move to the anchor in
/// the subtracted term. Evaluated at the anchor itself this is exactly the
/// full drift for every batch.
pub fn svrg_drift(
    model: &dyn MeanFieldFunctional,
    reg: &Regularizer,
    e: &ParticleEnsemble,
    i: usize,
    batch: &[usize],
    state: &SvrgState,
) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(MfldError::Estimator("empty batch".to_string()));
    }
    if state.anchor.n_particles() != e.n_particles() || state.anchor.dim() != e.dim() {
        return Err(MfldError::Estimator("anchor shape does not match ensemble".to_string()));
    }
    if state.anchor_step > e.step() {
        return Err(MfldError::Estimator(format!(
            "anchor from step {} is ahead of ensemble step {}",
            state.anchor_step,
            e.step()
        )));
    }
    let n = model.n_data();
    if batch.iter().any(|&j| j >= n) {
        return Err(MfldError::Estimator(format!("batch index out of range (n={n})")));
    }
    let x = e.row(i);
    let ax = state.anchor.row(i);
    let mut v = vec![0.0; model.dim()];
    let inv = 1.0 / batch.len() as f64;
    for &j in batch {
        linalg::axpy(&mut v, inv, &model.per_datum_grad(e, x, j));
        linalg::axpy(&mut v, -inv, &model.per_datum_grad(&state.anchor, ax, j));
    }
    linalg::axpy(&mut v, 1.0, state.anchor_full_grad(i));
    linalg::axpy(&mut v, 2.0 * reg.weight(), x);
    ensure_finite(&v, e.step(), i, "svrg drift")?;
    Ok(v)
}

fn ensure_finite(v: &[f64], step: usize, particle: usize, what: &str) -> Result<()> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(MfldError::NonFinite { step, particle, context: Some(what.to_string()) });
    }
    Ok(())
}

/// Empirical mean of ||v - full_drift||^2 over `trials` independent batch
/// draws (probe stream, so the run's batch sequence is untouched). The full
/// estimator reports 0 without sampling.
#[allow(clippy::too_many_arguments)]
pub fn variance_probe(
    model: &dyn MeanFieldFunctional,
    reg: &Regularizer,
    e: &ParticleEnsemble,
    i: usize,
    config: &EstimatorConfig,
    svrg_state: Option<&SvrgState>,
    trials: usize,
    source: &NoiseSource,
) -> Result<f64> {
    if trials < 2 {
        return Err(MfldError::InvalidArgument("variance probe needs trials >= 2".to_string()));
    }
    if config.kind == EstimatorKind::Full {
        return Ok(0.0);
    }
    let reference = full_drift(model, reg, e, i)?;
    let n = model.n_data();
    let mut acc = 0.0;
    for t in 0..trials {
        let batch = draw_batch(source, t as u64, config.batch_size, n, config.batch_mode)?;
        let v = match config.kind {
            EstimatorKind::Sgd => sgd_drift(model, reg, e, i, &batch)?,
            EstimatorKind::Svrg => {
                let state = svrg_state.ok_or_else(|| {
                    MfldError::Estimator("svrg probe needs an anchor state".to_string())
                })?;
                svrg_drift(model, reg, e, i, &batch, state)?
            }
            EstimatorKind::Full => unreachable!(),
        };
        acc += v
            .iter()
            .zip(&reference)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
    }
    Ok(acc / trials as f64)
}
