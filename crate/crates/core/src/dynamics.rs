//! The discrete update loop:
//!   X_{k+1}^i = X_k^i - eta_k v_k^i + sqrt(2 lambda eta_k) xi_k^i.
//!
//! The update is synchronous: every drift is computed against the pre-step
//! ensemble, then all rows move at once. Per-particle work is data-parallel
//! with no shared mutable state; counter-based noise keeps the result
//! identical for any worker count.

use std::time::Instant;

use rayon::prelude::*;

use crate::diagnostics;
use crate::ensemble::{second_moment, NoiseSource, ParticleEnsemble, Stream};
use crate::error::{MfldError, Result};
use crate::estimators::{draw_batch, EstimatorConfig, EstimatorKind, SvrgState};
use crate::functionals::{MeanFieldFunctional, Regularizer};

#[derive(Debug, Clone)]
pub enum Schedule {
    Constant(f64),
    Sequence(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct DynamicsParams {
    /// Entropic temperature lambda > 0 (zero only in deterministic-flow mode).
    pub lambda: f64,
    pub schedule: Schedule,
    pub max_steps: usize,
    pub seed: u64,
    /// Allows lambda = 0 so tests can drive the noiseless gradient flow.
    pub deterministic_flow: bool,
}

impl DynamicsParams {
    pub fn validate(&self) -> Result<()> {
        if self.lambda < 0.0 || (self.lambda == 0.0 && !self.deterministic_flow) {
            return Err(MfldError::InvalidArgument(format!(
                "lambda must be > 0 (got {}); set deterministic_flow for lambda = 0",
                self.lambda
            )));
        }
        let ok = match &self.schedule {
            Schedule::Constant(eta) => *eta > 0.0,
            Schedule::Sequence(etas) => !etas.is_empty() && etas.iter().all(|e| *e > 0.0),
        };
        if !ok {
            return Err(MfldError::InvalidArgument(
                "step sizes must all be positive".to_string(),
            ));
        }
        Ok(())
    }
}

/// eta_k. Sequence mode errors once the schedule is exhausted.
pub fn schedule_eta(params: &DynamicsParams, k: usize) -> Result<f64> {
    match &params.schedule {
        Schedule::Constant(eta) => Ok(*eta),
        Schedule::Sequence(etas) => etas.get(k).copied().ok_or(MfldError::ScheduleExhausted {
            step: k,
            len: etas.len(),
        }),
    }
}

/// Step-size sanity flags (warnings, never errors: divergence experiments
/// must be able to run). `ratio_exceeded` checks eta > lambda1/(4 lambda2),
/// `contraction_exceeded` checks lambda * alpha * eta > 1/4 with the
/// diagnostics alpha lower bound.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EtaWarnings {
    pub ratio_exceeded: bool,
    pub contraction_exceeded: bool,
}

pub fn check_eta(
    eta: f64,
    lambda: f64,
    lambda1: f64,
    lambda2: f64,
    alpha_lower: f64,
) -> EtaWarnings {
    EtaWarnings {
        ratio_exceeded: lambda2 > 0.0 && eta > lambda1 / (4.0 * lambda2),
        contraction_exceeded: lambda * alpha_lower * eta > 0.25,
    }
}

/// Supplies v_k^i for the step loop: estimator configuration, the batch
/// stream, and the anchor state when variance reduction is on. The batch
/// stream is separate from the noise stream, so changing the estimator never
/// perturbs the Gaussian noise sequence.
#[derive(Debug, Clone)]
pub struct DriftSource {
    config: EstimatorConfig,
    batch_source: NoiseSource,
    svrg: Option<SvrgState>,
}

impl DriftSource {
    pub fn new(config: EstimatorConfig, seed: u64) -> Self {
        DriftSource {
            config,
            batch_source: NoiseSource::new(seed, Stream::Batch),
            svrg: None,
        }
    }

    pub fn config(&self) -> &EstimatorConfig {
        &self.config
    }

    pub fn svrg_state(&self) -> Option<&SvrgState> {
        self.svrg.as_ref()
    }

    /// Row-major N x d drift matrix for step k, all rows computed against the
    /// pre-step ensemble.
    pub fn drift_all(
        &mut self,
        model: &dyn MeanFieldFunctional,
        reg: &Regularizer,
        e: &ParticleEnsemble,
        k: usize,
    ) -> Result<Vec<f64>> {
        let d = e.dim();
        let two_a = 2.0 * reg.weight();
        let mut v = match self.config.kind {
            EstimatorKind::Full => model.grad_first_variation_all(e),
            EstimatorKind::Sgd => {
                let batch = draw_batch(
                    &self.batch_source,
                    k as u64,
                    self.config.batch_size,
                    model.n_data(),
                    self.config.batch_mode,
                )?;
                model.batch_mean_per_datum_grad_all(e, &batch)
            }
            EstimatorKind::Svrg => {
                let refresh_due = k.is_multiple_of(self.config.refresh_period) || self.svrg.is_none();
                if refresh_due {
                    self.svrg = Some(SvrgState::refresh(model, e));
                }
                let state = self.svrg.as_ref().unwrap();
                if k.is_multiple_of(self.config.refresh_period) {
                    // anchor step: the estimator is the exact gradient
                    let mut v = state.anchor_full_grads().to_vec();
                    add_reg(&mut v, e, two_a);
                    check_rows(&v, e, k, "svrg anchor drift")?;
                    return Ok(v);
                }
                let batch = draw_batch(
                    &self.batch_source,
                    k as u64,
                    self.config.batch_size,
                    model.n_data(),
                    self.config.batch_mode,
                )?;
                let mut v = model.batch_mean_per_datum_grad_all(e, &batch);
                let anchor_terms =
                    model.batch_mean_per_datum_grad_all(state.anchor(), &batch);
                v.par_chunks_mut(d).enumerate().for_each(|(i, row)| {
                    for (t, val) in row.iter_mut().enumerate() {
                        *val += state.anchor_full_grad(i)[t] - anchor_terms[i * d + t];
                    }
                });
                v
            }
        };
        add_reg(&mut v, e, two_a);
        check_rows(&v, e, k, "drift")?;
        Ok(v)
    }
}

fn add_reg(v: &mut [f64], e: &ParticleEnsemble, two_a: f64) {
    if two_a != 0.0 {
        for (val, x) in v.iter_mut().zip(e.positions()) {
            *val += two_a * x;
        }
    }
}

fn check_rows(v: &[f64], e: &ParticleEnsemble, k: usize, what: &str) -> Result<()> {
    if let Some(idx) = v.iter().position(|x| !x.is_finite()) {
        return Err(MfldError::NonFinite {
            step: k,
            particle: idx / e.dim(),
            context: Some(what.to_string()),
        });
    }
    Ok(())
}

/// One synchronous update. The input ensemble is untouched; the returned
/// ensemble carries step k+1. Any non-finite coordinate aborts with (k, i).
pub fn step(
    e: &ParticleEnsemble,
    model: &dyn MeanFieldFunctional,
    reg: &Regularizer,
    drift: &mut DriftSource,
    params: &DynamicsParams,
    k: usize,
) -> Result<ParticleEnsemble> {
    if e.step() != k {
        return Err(MfldError::InvalidArgument(format!(
            "ensemble is at step {}, expected {k}",
            e.step()
        )));
    }
    let eta = schedule_eta(params, k)?;
    let v = drift.drift_all(model, reg, e, k)?;
    let d = e.dim();
    let noise_scale = (2.0 * params.lambda * eta).sqrt();
    let noise = NoiseSource::new(params.seed, Stream::Langevin);
    let mut next = vec![0.0; e.n_particles() * d];
    next.par_chunks_mut(d).enumerate().for_each(|(i, row)| {
        let x = e.row(i);
        let vi = &v[i * d..(i + 1) * d];
        for j in 0..d {
            let xi = if noise_scale != 0.0 {
                noise.standard_normal(k as u64, i as u64, j as u64)
            } else {
                0.0
            };
            row[j] = x[j] - eta * vi[j] + noise_scale * xi;
        }
    });
    e.advanced(next)
}

/// One trace row. All diagnostics are computed against the logged ensemble;
/// optional fields stay `None` when their toggle is off or the estimate is
/// unavailable.
#[derive(Debug, Clone)]
pub struct TraceRecord {
    pub step: usize,
    pub wall_time: f64,
    /// F(mu_X) = U(mu_X) + mean_i r(X^i).
    pub energy: f64,
    pub entropy_estimate: Option<f64>,
    /// energy + lambda * entropy_estimate.
    pub objective_estimate: Option<f64>,
    /// (1/N) sum_i || full drift at X^i ||.
    pub mean_grad_norm: f64,
    pub second_moment: f64,
    pub sigma_v_probe: Option<f64>,
    /// Model-specific scalar (training loss, MMD value, ...).
    pub model_metric: f64,
}

/// Which optional diagnostics the trace carries.
#[derive(Debug, Clone, Copy)]
pub struct DiagnosticsSet {
    pub entropy: bool,
    pub sigma_v_probe: bool,
    pub probe_trials: usize,
    /// The probe averages over the first `probe_particles` particles.
    pub probe_particles: usize,
}

impl Default for DiagnosticsSet {
    fn default() -> Self {
        DiagnosticsSet {
            entropy: true,
            sigma_v_probe: false,
            probe_trials: 16,
            probe_particles: 4,
        }
    }
}

#[derive(Debug)]
pub struct RunOutput {
    pub trace: Vec<TraceRecord>,
    pub final_ensemble: ParticleEnsemble,
    pub eta_warnings: EtaWarnings,
}

/// Drive `max_steps` updates, logging a record at k = 0, log_every,
/// 2*log_every, ..., and always at the final step. The O(N^2) diagnostics run
/// only at logging points.
pub fn run(
    e0: ParticleEnsemble,
    model: &dyn MeanFieldFunctional,
    reg: &Regularizer,
    estimator: &EstimatorConfig,
    params: &DynamicsParams,
    log_every: usize,
    diag: &DiagnosticsSet,
) -> Result<RunOutput> {
    if log_every == 0 {
        return Err(MfldError::InvalidArgument("log_every must be >= 1".to_string()));
    }
    params.validate()?;
    estimator.validate(model)?;

    let inputs = model.assumption_inputs(reg);
    let alpha_lower = diagnostics::LsiBounds::compute(&inputs, params.lambda.max(1e-300), e0.dim())
        .map(|b| b.alpha_lower())
        .unwrap_or(0.0);
    let eta0 = schedule_eta(params, 0)?;
    let eta_warnings =
        check_eta(eta0, params.lambda, inputs.lambda1, inputs.lambda2, alpha_lower);

    let start = Instant::now();
    let mut drift = DriftSource::new(*estimator, params.seed);
    let mut trace = Vec::new();
    let mut e = e0;
    let k_max = params.max_steps;
    for k in 0..=k_max {
        if k % log_every == 0 || k == k_max {
            trace.push(record(&e, model, reg, params, &mut drift, diag, &start, k)?);
        }
        if k == k_max {
            break;
        }
        e = step(&e, model, reg, &mut drift, params, k)?;
    }
    Ok(RunOutput { trace, final_ensemble: e, eta_warnings })
}

#[allow(clippy::too_many_arguments)]
fn record(
    e: &ParticleEnsemble,
    model: &dyn MeanFieldFunctional,
    reg: &Regularizer,
    params: &DynamicsParams,
    drift: &mut DriftSource,
    diag: &DiagnosticsSet,
    start: &Instant,
    k: usize,
) -> Result<TraceRecord> {
    let sm = second_moment(e);
    let energy = model.u_value(e) + reg.weight() * sm;
    let grads = model.grad_first_variation_all(e);
    let d = e.dim();
    let two_a = 2.0 * reg.weight();
    let mean_grad_norm = (0..e.n_particles())
        .map(|i| {
            let x = e.row(i);
            let g = &grads[i * d..(i + 1) * d];
            g.iter()
                .zip(x)
                .map(|(gv, xv)| {
                    let t = gv + two_a * xv;
                    t * t
                })
                .sum::<f64>()
                .sqrt()
        })
        .sum::<f64>()
        / e.n_particles() as f64;

    let entropy_estimate = if diag.entropy && e.n_particles() >= e.dim() + 2 {
        Some(diagnostics::entropy_estimate(e)?)
    } else {
        None
    };
    let objective_estimate = entropy_estimate.map(|h| energy + params.lambda * h);

    // The anchored estimator has no state before its first step; that first
    // record simply leaves the probe empty.
    let probe_ready = drift.config().kind != EstimatorKind::Full
        && (drift.config().kind != EstimatorKind::Svrg || drift.svrg_state().is_some());
    let sigma_v_probe = if diag.sigma_v_probe && probe_ready {
        let src = NoiseSource::new(params.seed ^ k as u64, Stream::Probe);
        let m = diag.probe_particles.min(e.n_particles()).max(1);
        let mut acc = 0.0;
        for i in 0..m {
            acc += crate::estimators::variance_probe(
                model,
                reg,
                e,
                i,
                drift.config(),
                drift.svrg_state(),
                diag.probe_trials.max(2),
                &src,
            )?;
        }
        Some(acc / m as f64)
    } else {
        None
    };

    let rec = TraceRecord {
        step: k,
        wall_time: start.elapsed().as_secs_f64(),
        energy,
        entropy_estimate,
        objective_estimate,
        mean_grad_norm,
        second_moment: sm,
        sigma_v_probe,
        model_metric: model.metric(e),
    };
    let finite = rec.energy.is_finite()
        && rec.mean_grad_norm.is_finite()
        && rec.second_moment.is_finite()
        && rec.model_metric.is_finite()
        && rec.entropy_estimate.is_none_or(f64::is_finite)
        && rec.sigma_v_probe.is_none_or(f64::is_finite);
    if !finite {
        return Err(MfldError::NonFinite {
            step: k,
            particle: 0,
            context: Some("trace diagnostics".to_string()),
        });
    }
    Ok(rec)
}
