//! Linear functional U(mu) = integral of V d(mu): the dynamics reduces to
//! standard gradient Langevin on V. Two analytic potential families are
//! supported; both keep every diagnostic constant closed-form.

use crate::ensemble::ParticleEnsemble;
use crate::error::{MfldError, Result};
use crate::functionals::{
    AssumptionInputs, MeanFieldFunctional, ModelConstants, Regularizer, WeightedCloud,
};
use crate::linalg;

#[derive(Debug, Clone)]
pub enum LinearPotential {
    /// V(x) = 1/2 sum_j diag_j x_j^2 + linear . x
    Quadratic { diag: Vec<f64>, linear: Vec<f64> },
    /// V(x) = (1/n) sum_j V_j(x) with V_j(x) = 1/2 scale_j ||x - center_j||^2.
    /// `centers` is row-major n x d.
    FiniteSumQuadratic { scales: Vec<f64>, centers: Vec<f64> },
}

#[derive(Debug, Clone)]
pub struct LinearModel {
    potential: LinearPotential,
    dim: usize,
    probe_radius: f64,
}

impl LinearModel {
    pub fn quadratic(diag: Vec<f64>, linear: Vec<f64>) -> Result<Self> {
        if diag.len() != linear.len() || diag.is_empty() {
            return Err(MfldError::DimensionMismatch(
                "quadratic potential needs matching nonempty diag and linear parts".to_string(),
            ));
        }
        if diag.iter().any(|v| *v < 0.0) {
            return Err(MfldError::InvalidArgument(
                "quadratic potential needs nonnegative curvature".to_string(),
            ));
        }
        let dim = diag.len();
        Ok(LinearModel {
            potential: LinearPotential::Quadratic { diag, linear },
            dim,
            probe_radius: 10.0,
        })
    }

    /// Isotropic V(x) = curvature/2 * ||x||^2.
    pub fn isotropic_quadratic(dim: usize, curvature: f64) -> Result<Self> {
        Self::quadratic(vec![curvature; dim], vec![0.0; dim])
    }

    pub fn finite_sum(scales: Vec<f64>, centers: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || scales.is_empty() || centers.len() != scales.len() * dim {
            return Err(MfldError::DimensionMismatch(format!(
                "finite-sum potential needs n x d centers matching {} scales",
                scales.len()
            )));
        }
        if scales.iter().any(|v| *v < 0.0) {
            return Err(MfldError::InvalidArgument(
                "finite-sum scales must be nonnegative".to_string(),
            ));
        }
        Ok(LinearModel {
            potential: LinearPotential::FiniteSumQuadratic { scales, centers },
            dim,
            probe_radius: 10.0,
        })
    }

    pub fn with_probe_radius(mut self, rho: f64) -> Self {
        self.probe_radius = rho;
        self
    }

    pub fn potential_value(&self, x: &[f64]) -> f64 {
        match &self.potential {
            LinearPotential::Quadratic { diag, linear } => {
                0.5 * x.iter().zip(diag).map(|(v, c)| c * v * v).sum::<f64>()
                    + linalg::dot(linear, x)
            }
            LinearPotential::FiniteSumQuadratic { scales, centers } => {
                let n = scales.len();
                let mut acc = 0.0;
                for (j, s) in scales.iter().enumerate() {
                    acc += 0.5 * s * linalg::dist_sq(x, &centers[j * self.dim..(j + 1) * self.dim]);
                }
                acc / n as f64
            }
        }
    }

    pub fn potential_grad(&self, x: &[f64]) -> Vec<f64> {
        match &self.potential {
            LinearPotential::Quadratic { diag, linear } => x
                .iter()
                .zip(diag)
                .zip(linear)
                .map(|((v, c), b)| c * v + b)
                .collect(),
            LinearPotential::FiniteSumQuadratic { scales, centers } => {
                let n = scales.len();
                let mut g = vec![0.0; self.dim];
                for (j, s) in scales.iter().enumerate() {
                    let c = &centers[j * self.dim..(j + 1) * self.dim];
                    for k in 0..self.dim {
                        g[k] += s * (x[k] - c[k]);
                    }
                }
                linalg::scale(&mut g, 1.0 / n as f64);
                g
            }
        }
    }

    fn mean_scale(&self) -> f64 {
        match &self.potential {
            LinearPotential::Quadratic { .. } => 0.0,
            LinearPotential::FiniteSumQuadratic { scales, .. } => {
                scales.iter().sum::<f64>() / scales.len() as f64
            }
        }
    }

    /// mean_j scale_j * center_j, the bounded part of the gradient once the
    /// mean quadratic is folded away.
    fn mean_scaled_center(&self) -> Vec<f64> {
        match &self.potential {
            LinearPotential::Quadratic { linear, .. } => linear.clone(),
            LinearPotential::FiniteSumQuadratic { scales, centers } => {
                let n = scales.len();
                let mut out = vec![0.0; self.dim];
                for (j, s) in scales.iter().enumerate() {
                    linalg::axpy(&mut out, s / n as f64, &centers[j * self.dim..(j + 1) * self.dim]);
                }
                out
            }
        }
    }
}

impl MeanFieldFunctional for LinearModel {
    fn name(&self) -> &'static str {
        "linear"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn u_value(&self, e: &ParticleEnsemble) -> f64 {
        e.rows().map(|r| self.potential_value(r)).sum::<f64>() / e.n_particles() as f64
    }

    fn first_variation(&self, _e: &ParticleEnsemble, x: &[f64]) -> f64 {
        // dU/dmu = V independently of mu.
        self.potential_value(x)
    }

    fn grad_first_variation(&self, _e: &ParticleEnsemble, x: &[f64]) -> Vec<f64> {
        self.potential_grad(x)
    }

    fn n_data(&self) -> usize {
        match &self.potential {
            LinearPotential::Quadratic { .. } => 1,
            LinearPotential::FiniteSumQuadratic { scales, .. } => scales.len(),
        }
    }

    fn per_datum_grad(&self, _e: &ParticleEnsemble, x: &[f64], j: usize) -> Vec<f64> {
        match &self.potential {
            LinearPotential::Quadratic { .. } => self.potential_grad(x),
            LinearPotential::FiniteSumQuadratic { scales, centers } => {
                let c = &centers[j * self.dim..(j + 1) * self.dim];
                x.iter().zip(c).map(|(v, cv)| scales[j] * (v - cv)).collect()
            }
        }
    }

    fn u_value_weighted(&self, cloud: &WeightedCloud) -> f64 {
        (0..cloud.len())
            .map(|i| cloud.weights[i] * self.potential_value(cloud.point(i)))
            .sum()
    }

    fn constants(&self) -> ModelConstants {
        // Region-certified: sup over ||x|| <= probe_radius of ||grad V||.
        let rho = self.probe_radius;
        match &self.potential {
            LinearPotential::Quadratic { diag, linear } => {
                let cmax = diag.iter().cloned().fold(0.0, f64::max);
                ModelConstants {
                    r_bound: cmax * rho + linalg::norm(linear),
                    lipschitz: cmax,
                    second_variation_growth: 0.0,
                }
            }
            LinearPotential::FiniteSumQuadratic { .. } => {
                let sbar = self.mean_scale();
                ModelConstants {
                    r_bound: sbar * rho + linalg::norm(&self.mean_scaled_center()),
                    lipschitz: sbar,
                    second_variation_growth: 0.0,
                }
            }
        }
    }

    fn probe_radius(&self) -> f64 {
        self.probe_radius
    }

    fn assumption_inputs(&self, reg: &Regularizer) -> AssumptionInputs {
        // The quadratic part of V is folded into the regularizer: the bounds
        // need lambda1 > 0 and a bounded remainder, and for these potentials
        // the drift splits exactly that way.
        let rho = self.probe_radius;
        let bounded_part = linalg::norm(&self.mean_scaled_center());
        match &self.potential {
            LinearPotential::Quadratic { diag, linear } => {
                let cmin = diag.iter().cloned().fold(f64::INFINITY, f64::min);
                let cmax = diag.iter().cloned().fold(0.0, f64::max);
                let full = ModelConstants {
                    r_bound: bounded_part,
                    lipschitz: 0.0,
                    second_variation_growth: 0.0,
                };
                AssumptionInputs {
                    lambda1: reg.lambda1() + cmin,
                    lambda2: reg.lambda2() + cmax,
                    c_r: 0.0,
                    full,
                    per_datum: full,
                    first_variation_sup: if linalg::norm_sq(linear) == 0.0 {
                        Some(0.0)
                    } else {
                        None
                    },
                }
            }
            LinearPotential::FiniteSumQuadratic { scales, centers } => {
                let sbar = self.mean_scale();
                let n = scales.len();
                // Remainder of datum j after folding: (s_j - sbar) x - s_j c_j.
                let mut r_datum = 0.0f64;
                let mut l_datum = 0.0f64;
                for (j, s) in scales.iter().enumerate() {
                    let c = &centers[j * self.dim..(j + 1) * self.dim];
                    r_datum = r_datum.max((s - sbar).abs() * rho + s * linalg::norm(c));
                    l_datum = l_datum.max(*s);
                }
                let _ = n;
                AssumptionInputs {
                    lambda1: reg.lambda1() + sbar,
                    lambda2: reg.lambda2() + sbar,
                    c_r: 0.0,
                    full: ModelConstants {
                        r_bound: bounded_part,
                        lipschitz: 0.0,
                        second_variation_growth: 0.0,
                    },
                    per_datum: ModelConstants {
                        r_bound: r_datum,
                        lipschitz: l_datum,
                        second_variation_growth: 0.0,
                    },
                    first_variation_sup: if bounded_part == 0.0 { Some(0.0) } else { None },
                }
            }
        }
    }
}
