//! Kernel Stein discrepancy minimization against a target known through its
//! score function. The Stein kernel combines the score and an RBF base
//! kernel; the objective is the V-statistic double sum over particles.

use std::sync::Arc;

use crate::ensemble::ParticleEnsemble;
use crate::error::{MfldError, Result};
use crate::functionals::{
    AssumptionInputs, MeanFieldFunctional, ModelConstants, Regularizer, WeightedCloud,
};
use crate::linalg;

/// User-supplied score: grad log density and its (symmetric) Jacobian acting
/// on a vector. Accepted by the engine but excluded from the acceptance
/// presets.
pub trait ScoreFn: Send + Sync {
    fn score(&self, z: &[f64]) -> Vec<f64>;
    fn jacobian_vec(&self, z: &[f64], v: &[f64]) -> Vec<f64>;
}

/// Score of the target distribution, grad log mu*(z).
#[derive(Clone)]
pub enum Score {
    /// mu* = N(mean, tau^2 I): s(z) = -(z - mean)/tau^2.
    Gaussian { mean: Vec<f64>, tau2: f64 },
    /// Isotropic Gaussian mixture with analytic score.
    GaussianMixture { weights: Vec<f64>, means: Vec<Vec<f64>>, tau2s: Vec<f64> },
    Custom(Arc<dyn ScoreFn>),
}

impl std::fmt::Debug for Score {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Score::Gaussian { mean, tau2 } => {
                write!(f, "Gaussian {{ mean: {mean:?}, tau2: {tau2} }}")
            }
            Score::GaussianMixture { weights, .. } => {
                write!(f, "GaussianMixture {{ {} components }}", weights.len())
            }
            Score::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl Score {
    fn eval(&self, z: &[f64]) -> Vec<f64> {
        match self {
            Score::Gaussian { mean, tau2 } => {
                z.iter().zip(mean).map(|(v, m)| -(v - m) / tau2).collect()
            }
            Score::GaussianMixture { .. } => {
                let (w, s_i) = self.posterior(z);
                let mut s = vec![0.0; z.len()];
                for (wi, si) in w.iter().zip(&s_i) {
                    linalg::axpy(&mut s, *wi, si);
                }
                s
            }
            Score::Custom(f) => f.score(z),
        }
    }

    /// J_s(z) * v; J_s is the Hessian of log density, hence symmetric.
    fn jacobian_vec(&self, z: &[f64], v: &[f64]) -> Vec<f64> {
        match self {
            Score::Gaussian { tau2, .. } => v.iter().map(|x| -x / tau2).collect(),
            Score::GaussianMixture { tau2s, .. } => {
                let (w, s_i) = self.posterior(z);
                let mut s = vec![0.0; z.len()];
                for (wi, si) in w.iter().zip(&s_i) {
                    linalg::axpy(&mut s, *wi, si);
                }
                // J_s = sum_i w_i [ s_i (s_i - s)^T - I/tau_i^2 ]
                let mut out = vec![0.0; z.len()];
                for ((wi, si), t2) in w.iter().zip(&s_i).zip(tau2s) {
                    let dv = linalg::dot(&linalg::sub(si, &s), v);
                    for k in 0..z.len() {
                        out[k] += wi * (si[k] * dv - v[k] / t2);
                    }
                }
                out
            }
            Score::Custom(f) => f.jacobian_vec(z, v),
        }
    }

    /// Posterior component weights and per-component scores at z, computed in
    /// log space.
    fn posterior(&self, z: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        match self {
            Score::GaussianMixture { weights, means, tau2s } => {
                let d = z.len() as f64;
                let mut logs = Vec::with_capacity(weights.len());
                let mut scores = Vec::with_capacity(weights.len());
                for ((pi, m), t2) in weights.iter().zip(means).zip(tau2s) {
                    let dist2 = linalg::dist_sq(z, m);
                    logs.push(pi.ln() - dist2 / (2.0 * t2) - 0.5 * d * t2.ln());
                    scores.push(z.iter().zip(m).map(|(v, mv)| -(v - mv) / t2).collect());
                }
                let lmax = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut w: Vec<f64> = logs.iter().map(|l| (l - lmax).exp()).collect();
                let total: f64 = w.iter().sum();
                linalg::scale(&mut w, 1.0 / total);
                (w, scores)
            }
            _ => unreachable!("posterior only used for mixtures"),
        }
    }

    /// (sup ||s||, sup ||J_s||, sup ||grad J_s||) on ||z|| <= rho; analytic
    /// for the Gaussian, conservative assemblies for the mixture, and not
    /// available for custom scores.
    fn region_bounds(&self, rho: f64) -> Option<(f64, f64, f64)> {
        match self {
            Score::Gaussian { mean, tau2 } => {
                Some(((rho + linalg::norm(mean)) / tau2, 1.0 / tau2, 0.0))
            }
            Score::GaussianMixture { means, tau2s, .. } => {
                let s_max = means
                    .iter()
                    .zip(tau2s)
                    .map(|(m, t2)| (rho + linalg::norm(m)) / t2)
                    .fold(0.0, f64::max);
                let t_inv = tau2s.iter().map(|t2| 1.0 / t2).fold(0.0, f64::max);
                let j_max = 2.0 * s_max * s_max + t_inv;
                // product-rule assembly over w_i, s_i and s derivatives
                let m_max = 2.0 * s_max * (2.0 * s_max * s_max + t_inv)
                    + 2.0 * s_max * t_inv
                    + s_max * (t_inv + j_max);
                Some((s_max, j_max, m_max))
            }
            Score::Custom(_) => None,
        }
    }
}

/// max over t >= 0 of p(t) * exp(-t^2/2) on a refined grid.
fn radial_max(p: impl Fn(f64) -> f64) -> f64 {
    let mut best = 0.0f64;
    for i in 0..=6000 {
        let t = i as f64 * 1e-3;
        best = best.max(p(t) * (-t * t / 2.0).exp());
    }
    best
}

#[derive(Debug, Clone)]
pub struct KsdModel {
    score: Score,
    dim: usize,
    sigma2: f64,
    probe_radius: f64,
}

impl KsdModel {
    pub fn new(score: Score, dim: usize, sigma_k: f64) -> Result<Self> {
        if dim == 0 {
            return Err(MfldError::InvalidArgument("dimension must be >= 1".to_string()));
        }
        if !sigma_k.is_finite() || sigma_k <= 0.0 {
            return Err(MfldError::InvalidArgument(format!(
                "kernel bandwidth must be positive, got {sigma_k}"
            )));
        }
        match &score {
            Score::Gaussian { mean, tau2 } => {
                if mean.len() != dim || !tau2.is_finite() || *tau2 <= 0.0 {
                    return Err(MfldError::DimensionMismatch(
                        "gaussian score must match the dimension with tau2 > 0".to_string(),
                    ));
                }
            }
            Score::GaussianMixture { weights, means, tau2s } => {
                if weights.len() != means.len()
                    || weights.len() != tau2s.len()
                    || weights.is_empty()
                    || means.iter().any(|m| m.len() != dim)
                    || tau2s.iter().any(|t| !t.is_finite() || *t <= 0.0)
                    || weights.iter().any(|w| !w.is_finite() || *w <= 0.0)
                {
                    return Err(MfldError::DimensionMismatch(
                        "mixture score components are inconsistent".to_string(),
                    ));
                }
            }
            Score::Custom(_) => {}
        }
        Ok(KsdModel { score, dim, sigma2: sigma_k * sigma_k, probe_radius: 10.0 })
    }

    pub fn with_probe_radius(mut self, rho: f64) -> Self {
        self.probe_radius = rho;
        self
    }

    pub fn score(&self) -> &Score {
        &self.score
    }

    /// W(z, z') = s(z).s(z') k + s(z).grad_{z'} k + grad_z k.s(z')
    ///          + div_z div_{z'} k, with the RBF base kernel.
    pub fn stein_kernel(&self, z: &[f64], zp: &[f64]) -> f64 {
        let s2 = self.sigma2;
        let u = linalg::sub(z, zp);
        let t2 = linalg::norm_sq(&u);
        let k = (-t2 / (2.0 * s2)).exp();
        let s = self.score.eval(z);
        let sp = self.score.eval(zp);
        let a = linalg::dot(&s, &sp) + linalg::dot(&s, &u) / s2 - linalg::dot(&sp, &u) / s2
            + self.dim as f64 / s2
            - t2 / (s2 * s2);
        a * k
    }

    /// grad of W(z, z') in its first argument.
    pub fn stein_kernel_grad(&self, z: &[f64], zp: &[f64]) -> Vec<f64> {
        let s2 = self.sigma2;
        let u = linalg::sub(z, zp);
        let t2 = linalg::norm_sq(&u);
        let k = (-t2 / (2.0 * s2)).exp();
        let s = self.score.eval(z);
        let sp = self.score.eval(zp);
        let a = linalg::dot(&s, &sp) + linalg::dot(&s, &u) / s2 - linalg::dot(&sp, &u) / s2
            + self.dim as f64 / s2
            - t2 / (s2 * s2);
        // grad A = J_s (s' + u/s2) + s/s2 - s'/s2 - 2u/s2^2
        let mut arg: Vec<f64> = sp.iter().zip(&u).map(|(a, b)| a + b / s2).collect();
        let jv = self.score.jacobian_vec(z, &arg);
        for i in 0..self.dim {
            arg[i] = jv[i] + s[i] / s2 - sp[i] / s2 - 2.0 * u[i] / (s2 * s2);
        }
        // grad W = (grad A - A u / s2) k
        (0..self.dim).map(|i| (arg[i] - a * u[i] / s2) * k).collect()
    }
}

impl MeanFieldFunctional for KsdModel {
    fn name(&self) -> &'static str {
        "ksd"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn u_value(&self, e: &ParticleEnsemble) -> f64 {
        let n = e.n_particles() as f64;
        let mut acc = 0.0;
        for a in e.rows() {
            for b in e.rows() {
                acc += self.stein_kernel(a, b);
            }
        }
        acc / (n * n)
    }

    fn first_variation(&self, e: &ParticleEnsemble, x: &[f64]) -> f64 {
        let n = e.n_particles() as f64;
        2.0 * e.rows().map(|b| self.stein_kernel(x, b)).sum::<f64>() / n
    }

    fn grad_first_variation(&self, e: &ParticleEnsemble, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim];
        for b in e.rows() {
            linalg::axpy(&mut g, 1.0, &self.stein_kernel_grad(x, b));
        }
        linalg::scale(&mut g, 2.0 / e.n_particles() as f64);
        g
    }

    fn n_data(&self) -> usize {
        1
    }

    fn per_datum_grad(&self, e: &ParticleEnsemble, x: &[f64], _j: usize) -> Vec<f64> {
        self.grad_first_variation(e, x)
    }

    fn u_value_weighted(&self, cloud: &WeightedCloud) -> f64 {
        let m = cloud.len();
        let mut acc = 0.0;
        for i in 0..m {
            for j in 0..m {
                acc += cloud.weights[i]
                    * cloud.weights[j]
                    * self.stein_kernel(cloud.point(i), cloud.point(j));
            }
        }
        acc
    }

    fn constants(&self) -> ModelConstants {
        // Certified on the probe region only: the Stein kernel of a Gaussian
        // score with a translation-invariant base kernel is unbounded in a
        // joint translation, so no global R exists. The assembly below upper
        // bounds every product-rule term by its region sup.
        let rho = self.probe_radius;
        let (s_sup, j_sup, m_sup) = self.score.region_bounds(rho).unwrap_or((f64::INFINITY, f64::INFINITY, f64::INFINITY));
        let d = self.dim as f64;
        let sig = self.sigma2.sqrt();
        let k1 = (-0.5f64).exp() / sig;
        let k2 = 1.0 / self.sigma2;
        let c3 = radial_max(|t| t * t * t + 3.0 * t);
        let c4 = radial_max(|t| t * t * t * t + 6.0 * t * t + 3.0);
        let k3 = c3 / (sig * self.sigma2);
        let k4 = c4 / (self.sigma2 * self.sigma2);
        // divergence terms contract d entries of the derivative tensors
        let k3t = d * k3;
        let k4t = d * k4;

        let g1 = j_sup * s_sup + s_sup * s_sup * k1 + j_sup * k1 + 2.0 * s_sup * k2 + k3t;
        let h_zz = m_sup * s_sup
            + 2.0 * j_sup * s_sup * k1
            + s_sup * s_sup * k2
            + m_sup * k1
            + 2.0 * j_sup * k2
            + 2.0 * s_sup * k3
            + k4t;
        let h_zzp = j_sup * j_sup
            + 2.0 * j_sup * s_sup * k1
            + s_sup * s_sup * k2
            + 2.0 * j_sup * k2
            + 2.0 * s_sup * k3
            + k4t;
        let r = 2.0 * g1;
        let l = 2.0 * h_zz.max(h_zzp);
        let w_sup = 2.0 * (s_sup * s_sup + 2.0 * s_sup * k1 + (d + 1.0) * k2);
        let c_l = if l > 0.0 { w_sup / l } else { 0.0 };
        ModelConstants { r_bound: r, lipschitz: l, second_variation_growth: c_l }
    }

    fn probe_radius(&self) -> f64 {
        self.probe_radius
    }

    fn assumption_inputs(&self, reg: &Regularizer) -> AssumptionInputs {
        let consts = self.constants();
        AssumptionInputs {
            lambda1: reg.lambda1(),
            lambda2: reg.lambda2(),
            c_r: reg.c_r(),
            full: consts,
            per_datum: consts,
            first_variation_sup: None,
        }
    }
}
