//! Density fitting by minimizing the squared maximum mean discrepancy to an
//! observed sample, with a Gaussian RBF kernel. Particles are either Dirac
//! masses or centers of a Gaussian mixture; in the mixture case all kernel
//! integrals collapse to RBFs with inflated bandwidth and a matching
//! amplitude prefactor (verified against quadrature in the tests).
//!
//! The data-data double sum is constant in mu, so it is dropped from the
//! optimized objective and exposed separately via `data_self_term`; gradients
//! are unaffected.

use crate::ensemble::ParticleEnsemble;
use crate::error::{MfldError, Result};
use crate::functionals::{
    AssumptionInputs, MeanFieldFunctional, ModelConstants, Regularizer, WeightedCloud,
};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MmdParam {
    /// Fit the particle locations directly.
    Dirac,
    /// Fit a Gaussian mixture with component std `sigma_g` centered at the
    /// particles.
    GaussianMixture { sigma_g: f64 },
}

/// amp * exp(-||a-b||^2 / (2 bw2))
#[derive(Debug, Clone, Copy)]
struct SmoothedKernel {
    amp: f64,
    bw2: f64,
}

impl SmoothedKernel {
    fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        self.amp * (-linalg::dist_sq(a, b) / (2.0 * self.bw2)).exp()
    }

    /// grad wrt the first argument.
    fn grad_into(&self, a: &[f64], b: &[f64], weight: f64, out: &mut [f64]) {
        let k = self.eval(a, b);
        let c = -weight * k / self.bw2;
        for i in 0..a.len() {
            out[i] += c * (a[i] - b[i]);
        }
    }

    /// sup ||grad k|| = amp * e^{-1/2} / bw
    fn grad_sup(&self) -> f64 {
        self.amp * (-0.5f64).exp() / self.bw2.sqrt()
    }

    /// operator-norm bound on the Hessian
    fn hess_sup(&self) -> f64 {
        self.amp / self.bw2
    }
}

#[derive(Debug, Clone)]
pub struct MmdModel {
    /// Row-major n x d observed sample.
    data: Vec<f64>,
    n: usize,
    dim: usize,
    sigma_k: f64,
    param: MmdParam,
    kernel_pp: SmoothedKernel,
    kernel_pd: SmoothedKernel,
    data_self_term: f64,
}

impl MmdModel {
    pub fn new(data: Vec<f64>, dim: usize, sigma_k: f64, param: MmdParam) -> Result<Self> {
        if dim == 0 || data.is_empty() || !data.len().is_multiple_of(dim) {
            return Err(MfldError::DimensionMismatch(
                "mmd data must be a nonempty n x d matrix".to_string(),
            ));
        }
        if !sigma_k.is_finite() || sigma_k <= 0.0 {
            return Err(MfldError::InvalidArgument(format!(
                "kernel bandwidth must be positive, got {sigma_k}"
            )));
        }
        if let MmdParam::GaussianMixture { sigma_g } = param {
            if !sigma_g.is_finite() || sigma_g <= 0.0 {
                return Err(MfldError::InvalidArgument(format!(
                    "mixture component std must be positive, got {sigma_g}"
                )));
            }
        }
        let n = data.len() / dim;
        let s2 = sigma_k * sigma_k;
        let (kernel_pp, kernel_pd) = match param {
            MmdParam::Dirac => {
                let k = SmoothedKernel { amp: 1.0, bw2: s2 };
                (k, k)
            }
            MmdParam::GaussianMixture { sigma_g } => {
                let g2 = sigma_g * sigma_g;
                // One smoothing per mixture side: the particle-particle term
                // integrates two component densities, the particle-data term
                // one.
                let pp = SmoothedKernel {
                    amp: (s2 / (s2 + 2.0 * g2)).powf(dim as f64 / 2.0),
                    bw2: s2 + 2.0 * g2,
                };
                let pd = SmoothedKernel {
                    amp: (s2 / (s2 + g2)).powf(dim as f64 / 2.0),
                    bw2: s2 + g2,
                };
                (pp, pd)
            }
        };
        // constant-in-mu term of the full squared MMD, on the raw kernel
        let raw = SmoothedKernel { amp: 1.0, bw2: s2 };
        let mut dd = 0.0;
        for i in 0..n {
            for j in 0..n {
                dd += raw.eval(&data[i * dim..(i + 1) * dim], &data[j * dim..(j + 1) * dim]);
            }
        }
        let data_self_term = dd / (n as f64 * n as f64);
        Ok(MmdModel { data, n, dim, sigma_k, param, kernel_pp, kernel_pd, data_self_term })
    }

    pub fn n_samples(&self) -> usize {
        self.n
    }

    pub fn sigma_k(&self) -> f64 {
        self.sigma_k
    }

    pub fn param(&self) -> MmdParam {
        self.param
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    fn datum(&self, j: usize) -> &[f64] {
        &self.data[j * self.dim..(j + 1) * self.dim]
    }

    /// The mu-independent (1/n^2) sum k(z_i, z_j) omitted from `u_value`.
    /// Adding it back gives the full nonnegative squared discrepancy in the
    /// Dirac case.
    pub fn data_self_term(&self) -> f64 {
        self.data_self_term
    }
}

impl MeanFieldFunctional for MmdModel {
    fn name(&self) -> &'static str {
        "mmd"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn u_value(&self, e: &ParticleEnsemble) -> f64 {
        let n_p = e.n_particles() as f64;
        let mut pp = 0.0;
        for a in e.rows() {
            for b in e.rows() {
                pp += self.kernel_pp.eval(a, b);
            }
        }
        let mut pd = 0.0;
        for a in e.rows() {
            for j in 0..self.n {
                pd += self.kernel_pd.eval(a, self.datum(j));
            }
        }
        pp / (n_p * n_p) - 2.0 * pd / (n_p * self.n as f64)
    }

    fn first_variation(&self, e: &ParticleEnsemble, x: &[f64]) -> f64 {
        let n_p = e.n_particles() as f64;
        let pp: f64 = e.rows().map(|b| self.kernel_pp.eval(x, b)).sum();
        let pd: f64 = (0..self.n).map(|j| self.kernel_pd.eval(x, self.datum(j))).sum();
        2.0 * pp / n_p - 2.0 * pd / self.n as f64
    }

    fn grad_first_variation(&self, e: &ParticleEnsemble, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim];
        let w_pp = 2.0 / e.n_particles() as f64;
        for b in e.rows() {
            self.kernel_pp.grad_into(x, b, w_pp, &mut g);
        }
        let w_pd = -2.0 / self.n as f64;
        for j in 0..self.n {
            self.kernel_pd.grad_into(x, self.datum(j), w_pd, &mut g);
        }
        g
    }

    fn n_data(&self) -> usize {
        self.n
    }

    fn per_datum_grad(&self, e: &ParticleEnsemble, x: &[f64], j: usize) -> Vec<f64> {
        let mut g = vec![0.0; self.dim];
        let w_pp = 2.0 / e.n_particles() as f64;
        for b in e.rows() {
            self.kernel_pp.grad_into(x, b, w_pp, &mut g);
        }
        self.kernel_pd.grad_into(x, self.datum(j), -2.0, &mut g);
        g
    }

    fn u_value_weighted(&self, cloud: &WeightedCloud) -> f64 {
        let m = cloud.len();
        let mut pp = 0.0;
        for i in 0..m {
            for j in 0..m {
                pp += cloud.weights[i]
                    * cloud.weights[j]
                    * self.kernel_pp.eval(cloud.point(i), cloud.point(j));
            }
        }
        let mut pd = 0.0;
        for i in 0..m {
            let mut s = 0.0;
            for j in 0..self.n {
                s += self.kernel_pd.eval(cloud.point(i), self.datum(j));
            }
            pd += cloud.weights[i] * s / self.n as f64;
        }
        pp - 2.0 * pd
    }

    fn constants(&self) -> ModelConstants {
        let r = 2.0 * self.kernel_pp.grad_sup() + 2.0 * self.kernel_pd.grad_sup();
        let l = 2.0 * self.kernel_pp.hess_sup() + 2.0 * self.kernel_pd.hess_sup();
        // second variation is 2 k_pp(x, x'), bounded by 2 amp_pp
        let w_sup = 2.0 * self.kernel_pp.amp;
        let c_l = if w_sup <= l { 0.0 } else { w_sup / l };
        ModelConstants { r_bound: r, lipschitz: l, second_variation_growth: c_l }
    }

    fn assumption_inputs(&self, reg: &Regularizer) -> AssumptionInputs {
        let consts = self.constants();
        AssumptionInputs {
            lambda1: reg.lambda1(),
            lambda2: reg.lambda2(),
            c_r: reg.c_r(),
            full: consts,
            per_datum: consts,
            first_variation_sup: Some(2.0 * self.kernel_pp.amp + 2.0 * self.kernel_pd.amp),
        }
    }

    fn report_extras(&self) -> Vec<(&'static str, f64)> {
        vec![("mmd_data_self_term", self.data_self_term)]
    }
}
