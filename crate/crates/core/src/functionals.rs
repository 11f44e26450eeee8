//! The contract every mean-field functional satisfies, the quadratic
//! regularizer, and a Monte-Carlo checker for the boundedness/smoothness
//! constants each model reports.

use crate::assignment;
use crate::ensemble::{NoiseSource, ParticleEnsemble, Stream};
use crate::error::{MfldError, Result};
use crate::linalg;

/// Isotropic quadratic regularizer r(x) = a * ||x||^2, a >= 0.
///
/// Its Hessian is 2a*I, so the strong-convexity window is
/// lambda1 = lambda2 = 2a with c_r = 0 and grad r(0) = 0.
#[derive(Debug, Clone, Copy)]
pub struct Regularizer {
    weight: f64,
}

impl Regularizer {
    pub fn new(weight: f64) -> Result<Self> {
        if !weight.is_finite() || weight < 0.0 {
            return Err(MfldError::InvalidArgument(format!(
                "regularizer weight must be >= 0, got {weight}"
            )));
        }
        Ok(Regularizer { weight })
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn lambda1(&self) -> f64 {
        2.0 * self.weight
    }

    pub fn lambda2(&self) -> f64 {
        2.0 * self.weight
    }

    pub fn c_r(&self) -> f64 {
        0.0
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.weight * linalg::norm_sq(x)
    }
}

/// grad r(x) = 2a * x.
pub fn reg_grad(reg: &Regularizer, x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| 2.0 * reg.weight * v).collect()
}

/// Boundedness and smoothness constants a model certifies for itself:
/// `r_bound` bounds the first-variation gradient norm, `lipschitz` its
/// (W2 + position) Lipschitz constant, `second_variation_growth` the growth
/// coefficient of the second variation. Each model documents the formula
/// producing these from its parameters; some are certified only on the
/// model's probe region.
#[derive(Debug, Clone, Copy)]
pub struct ModelConstants {
    pub r_bound: f64,
    pub lipschitz: f64,
    pub second_variation_growth: f64,
}

/// Inputs for the closed-form diagnostics. Linear models with a purely
/// quadratic potential fold that curvature into the regularizer here (the
/// bounds need lambda1 > 0 and a bounded remainder), so these can differ from
/// the raw `(2a, 2a)` pair and from `constants()`.
#[derive(Debug, Clone, Copy)]
pub struct AssumptionInputs {
    pub lambda1: f64,
    pub lambda2: f64,
    pub c_r: f64,
    /// Constants of the (possibly folded) full functional.
    pub full: ModelConstants,
    /// Constants of the per-datum losses, used by the estimator-variance
    /// formulas. Equal to `full` for models without a finite-sum structure.
    pub per_datum: ModelConstants,
    /// sup |dU/dmu| when the first variation itself is bounded; enables the
    /// bounded-case LSI lower bound.
    pub first_variation_sup: Option<f64>,
}

/// A weighted point cloud sum_i w_i * delta_{x_i}. Weights may be negative:
/// the finite-difference oracle evaluates U on signed mixtures.
#[derive(Debug, Clone, Copy)]
pub struct WeightedCloud<'a> {
    pub positions: &'a [f64],
    pub dim: usize,
    pub weights: &'a [f64],
}

impl<'a> WeightedCloud<'a> {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &'a [f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }
}

/// Contract implemented by every mean-field functional U(mu).
///
/// `first_variation` returns dU/dmu(mu_X)(x) without the zero-mean shift
/// (gradients are unaffected by constant shifts; the oracle subtracts the
/// mean explicitly where the shifted value is needed).
pub trait MeanFieldFunctional: Sync {
    fn name(&self) -> &'static str;

    /// Particle dimension d.
    fn dim(&self) -> usize;

    /// U(mu_X).
    fn u_value(&self, e: &ParticleEnsemble) -> f64;

    /// dU/dmu(mu_X)(x).
    fn first_variation(&self, e: &ParticleEnsemble, x: &[f64]) -> f64;

    /// grad_x dU/dmu(mu_X)(x).
    fn grad_first_variation(&self, e: &ParticleEnsemble, x: &[f64]) -> Vec<f64>;

    /// Number of per-datum losses in the finite-sum decomposition
    /// U = (1/n) sum_j l_j. Models without data report 1.
    fn n_data(&self) -> usize;

    /// grad_x dl_j/dmu(mu_X)(x). Averaging over j recovers
    /// `grad_first_variation` up to floating-point summation order.
    fn per_datum_grad(&self, e: &ParticleEnsemble, x: &[f64], j: usize) -> Vec<f64>;

    /// U on a weighted cloud; the hook the first-variation oracle needs.
    fn u_value_weighted(&self, cloud: &WeightedCloud) -> f64;

    fn constants(&self) -> ModelConstants;

    /// Radius of the region on which region-certified constants hold and on
    /// which `check_assumptions` samples.
    fn probe_radius(&self) -> f64 {
        10.0
    }

    fn assumption_inputs(&self, reg: &Regularizer) -> AssumptionInputs {
        AssumptionInputs {
            lambda1: reg.lambda1(),
            lambda2: reg.lambda2(),
            c_r: reg.c_r(),
            full: self.constants(),
            per_datum: self.constants(),
            first_variation_sup: None,
        }
    }

    /// Scalar for the trace's model_metric column (training loss, MMD value,
    /// ...). Defaults to U itself.
    fn metric(&self, e: &ParticleEnsemble) -> f64 {
        self.u_value(e)
    }

    /// Model-specific scalars for the run metadata (e.g. the constant data
    /// term the MMD objective omits).
    fn report_extras(&self) -> Vec<(&'static str, f64)> {
        Vec::new()
    }

    /// Row-major N x d matrix of first-variation gradients at every particle.
    /// Models override this when a shared per-step precomputation (e.g. the
    /// network predictions) makes the loop cheaper than N independent calls.
    fn grad_first_variation_all(&self, e: &ParticleEnsemble) -> Vec<f64> {
        let d = self.dim();
        let mut out = vec![0.0; e.n_particles() * d];
        use rayon::prelude::*;
        out.par_chunks_mut(d).enumerate().for_each(|(i, row)| {
            row.copy_from_slice(&self.grad_first_variation(e, e.row(i)));
        });
        out
    }

    /// Row-major N x d matrix of (1/|batch|) sum_{j in batch} per-datum
    /// gradients at every particle.
    fn batch_mean_per_datum_grad_all(&self, e: &ParticleEnsemble, batch: &[usize]) -> Vec<f64> {
        let d = self.dim();
        let inv = 1.0 / batch.len() as f64;
        let mut out = vec![0.0; e.n_particles() * d];
        use rayon::prelude::*;
        out.par_chunks_mut(d).enumerate().for_each(|(i, row)| {
            for &j in batch {
                linalg::axpy(row, inv, &self.per_datum_grad(e, e.row(i), j));
            }
        });
        out
    }
}

/// Full drift v^i = grad dU/dmu(mu_X)(X^i) + grad r(X^i).
pub fn full_drift(
    model: &dyn MeanFieldFunctional,
    reg: &Regularizer,
    e: &ParticleEnsemble,
    i: usize,
) -> Result<Vec<f64>> {
    if i >= e.n_particles() {
        return Err(MfldError::InvalidArgument(format!(
            "particle index {i} out of range (N={})",
            e.n_particles()
        )));
    }
    let x = e.row(i);
    let mut g = model.grad_first_variation(e, x);
    linalg::axpy(&mut g, 2.0 * reg.weight(), x);
    if g.iter().any(|v| !v.is_finite()) {
        return Err(MfldError::NonFinite {
            step: e.step(),
            particle: i,
            context: Some(format!("{} drift", model.name())),
        });
    }
    Ok(g)
}

/// Result of the sampled assumption probe. Non-fatal: callers record it in
/// run metadata and decide what to do with a non-conforming model.
#[derive(Debug, Clone)]
pub struct AssumptionReport {
    pub probes: usize,
    pub max_grad_norm: f64,
    pub grad_bound: f64,
    pub grad_bound_ok: bool,
    pub max_lipschitz_ratio: f64,
    pub lipschitz_bound: f64,
    pub lipschitz_ok: bool,
}

impl AssumptionReport {
    pub fn conforming(&self) -> bool {
        self.grad_bound_ok && self.lipschitz_ok
    }
}

/// Monte-Carlo probe of the model's certified constants: samples random
/// ensembles and query points inside the probe region, then checks
/// ||grad dU/dmu|| <= R*(1+1e-6) and empirical Lipschitz ratios
/// <= L*(1+1e-3). The sup over all measures is not computable; sampling
/// catches mis-set constants.
pub fn check_assumptions(model: &dyn MeanFieldFunctional, reg: &Regularizer) -> AssumptionReport {
    check_assumptions_with(model, reg, 1000, 0xA55E55)
}

pub fn check_assumptions_with(
    model: &dyn MeanFieldFunctional,
    reg: &Regularizer,
    probes: usize,
    seed: u64,
) -> AssumptionReport {
    let _ = reg; // the probe targets the U-part; r is checked analytically
    let d = model.dim();
    let rho = model.probe_radius();
    let src = NoiseSource::new(seed, Stream::Probe);
    let consts = model.constants();

    let sample_point = |k: u64, i: u64, scale: f64| -> Vec<f64> {
        let mut v: Vec<f64> = (0..d)
            .map(|j| scale * src.standard_normal(k, i, j as u64))
            .collect();
        let n = linalg::norm(&v);
        if n > rho {
            linalg::scale(&mut v, 0.999 * rho / n);
        }
        v
    };

    let mut max_grad: f64 = 0.0;
    let mut max_ratio: f64 = 0.0;

    for p in 0..probes {
        let pk = p as u64;
        let n_particles = 2 + (p % 8);
        let mut rows = Vec::with_capacity(n_particles * d);
        for i in 0..n_particles {
            rows.extend(sample_point(pk, i as u64, rho / 3.0));
        }
        let e = ParticleEnsemble::from_positions(rows.clone(), n_particles, d)
            .expect("probe ensemble");
        let x = sample_point(pk, 1000, rho / 3.0);
        let g = model.grad_first_variation(&e, &x);
        max_grad = max_grad.max(linalg::norm(&g));

        // Perturb both the ensemble and the query point, measure the
        // gradient change against W2 + ||dx||.
        let delta = 1e-3 * (1.0 + rho);
        let mut rows2 = rows.clone();
        for (idx, v) in rows2.iter_mut().enumerate() {
            *v += delta * src.standard_normal(pk, 2000 + (idx / d) as u64, (idx % d) as u64);
        }
        let e2 = ParticleEnsemble::from_positions(rows2.clone(), n_particles, d)
            .expect("probe ensemble");
        let x2: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(j, v)| v + delta * src.standard_normal(pk, 3000, j as u64))
            .collect();
        let g2 = model.grad_first_variation(&e2, &x2);
        let w2 = assignment::wasserstein2(&rows, &rows2, n_particles, d)
            .expect("probe transport");
        let denom = w2 + linalg::norm(&linalg::sub(&x, &x2));
        if denom > 1e-12 {
            let ratio = linalg::norm(&linalg::sub(&g, &g2)) / denom;
            max_ratio = max_ratio.max(ratio);
        }
    }

    let grad_bound = consts.r_bound * (1.0 + 1e-6);
    let lipschitz_bound = consts.lipschitz * (1.0 + 1e-3);
    AssumptionReport {
        probes,
        max_grad_norm: max_grad,
        grad_bound,
        grad_bound_ok: max_grad <= grad_bound,
        max_lipschitz_ratio: max_ratio,
        lipschitz_bound,
        lipschitz_ok: max_ratio <= lipschitz_bound,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::ParticleEnsemble;

    #[test]
    fn reg_grad_values() {
        let r = Regularizer::new(0.5).unwrap();
        assert_eq!(reg_grad(&r, &[1.0, -2.0]), vec![1.0, -2.0]);
        let r0 = Regularizer::new(0.0).unwrap();
        assert_eq!(reg_grad(&r0, &[3.0, 4.0]), vec![0.0, 0.0]);
        let r01 = Regularizer::new(0.1).unwrap();
        let g = reg_grad(&r01, &[3.0]);
        assert!((g[0] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn regularizer_constants() {
        let r = Regularizer::new(0.7).unwrap();
        assert_eq!(r.lambda1(), 1.4);
        assert_eq!(r.lambda2(), 1.4);
        assert_eq!(r.c_r(), 0.0);
        assert_eq!(reg_grad(&r, &[0.0, 0.0]), vec![0.0, 0.0]);
        assert!(Regularizer::new(-0.1).is_err());
    }

    struct ZeroModel {
        dim: usize,
    }

    impl MeanFieldFunctional for ZeroModel {
        fn name(&self) -> &'static str {
            "zero"
        }
        fn dim(&self) -> usize {
            self.dim
        }
        fn u_value(&self, _: &ParticleEnsemble) -> f64 {
            0.0
        }
        fn first_variation(&self, _: &ParticleEnsemble, _: &[f64]) -> f64 {
            0.0
        }
        fn grad_first_variation(&self, _: &ParticleEnsemble, _: &[f64]) -> Vec<f64> {
            vec![0.0; self.dim]
        }
        fn n_data(&self) -> usize {
            1
        }
        fn per_datum_grad(&self, _: &ParticleEnsemble, _: &[f64], _: usize) -> Vec<f64> {
            vec![0.0; self.dim]
        }
        fn u_value_weighted(&self, _: &WeightedCloud) -> f64 {
            0.0
        }
        fn constants(&self) -> ModelConstants {
            ModelConstants { r_bound: 0.0, lipschitz: 0.0, second_variation_growth: 0.0 }
        }
    }

    #[test]
    fn full_drift_reduces_to_regularizer_for_zero_model() {
        let m = ZeroModel { dim: 2 };
        let reg = Regularizer::new(0.5).unwrap();
        let e = ParticleEnsemble::from_positions(vec![1.0, 1.0], 1, 2).unwrap();
        let v = full_drift(&m, &reg, &e, 0).unwrap();
        assert_eq!(v, vec![1.0, 1.0]);
        assert!(full_drift(&m, &reg, &e, 1).is_err());
    }
}
