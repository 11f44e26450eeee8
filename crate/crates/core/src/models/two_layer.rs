//! Two-layer network in the mean-field parameterization: the prediction is
//! the particle average f(z) = (1/N) sum_i h_{X^i}(z) and U is the empirical
//! risk over the training data.

use crate::ensemble::ParticleEnsemble;
use crate::error::{MfldError, Result};
use crate::functionals::{
    AssumptionInputs, MeanFieldFunctional, ModelConstants, Regularizer, WeightedCloud,
};
use crate::linalg;

/// sup |d/du sech^2(u)| = 4/(3*sqrt(3)), also sup |tanh''|.
const TANH_SECOND_DERIV_SUP: f64 = 0.769_800_358_919_501;

/// Derivative-clamp guarding against overflow in pathological losses; never
/// reached on the shipped presets.
const DLOSS_CLAMP: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Neuron {
    /// h_x(z) = tanh(x . z~), particle dim d = feature dim.
    TanhDot,
    /// h_x(z) = tanh(r) * tanh(w . z~) with x = (r, w); particle dim
    /// d = feature dim + 1.
    BoundedAmp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    /// l(f, y) = (f - y)^2
    Squared,
    /// l(f, y) = log(1 + exp(-y f))
    Logistic,
}

#[derive(Debug, Clone)]
pub struct TwoLayerNetModel {
    /// Row-major n x feat_dim, already bias-padded when requested.
    features: Vec<f64>,
    labels: Vec<f64>,
    feat_dim: usize,
    dim: usize,
    neuron: Neuron,
    loss: Loss,
}

impl TwoLayerNetModel {
    /// `data` is row-major n x z_dim. With `bias = true` every sample gets a
    /// trailing constant-1 coordinate.
    pub fn new(
        data: &[f64],
        z_dim: usize,
        labels: Vec<f64>,
        neuron: Neuron,
        loss: Loss,
        bias: bool,
    ) -> Result<Self> {
        if z_dim == 0 || labels.is_empty() || data.len() != labels.len() * z_dim {
            return Err(MfldError::DimensionMismatch(format!(
                "need n x {z_dim} data matching {} labels",
                labels.len()
            )));
        }
        let n = labels.len();
        let feat_dim = if bias { z_dim + 1 } else { z_dim };
        let mut features = Vec::with_capacity(n * feat_dim);
        for row in data.chunks_exact(z_dim) {
            features.extend_from_slice(row);
            if bias {
                features.push(1.0);
            }
        }
        let dim = match neuron {
            Neuron::TanhDot => feat_dim,
            Neuron::BoundedAmp => feat_dim + 1,
        };
        Ok(TwoLayerNetModel { features, labels, feat_dim, dim, neuron, loss })
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    fn feature(&self, j: usize) -> &[f64] {
        &self.features[j * self.feat_dim..(j + 1) * self.feat_dim]
    }

    fn neuron_value(&self, x: &[f64], feat: &[f64]) -> f64 {
        match self.neuron {
            Neuron::TanhDot => linalg::dot(x, feat).tanh(),
            Neuron::BoundedAmp => x[0].tanh() * linalg::dot(&x[1..], feat).tanh(),
        }
    }

    fn neuron_grad(&self, x: &[f64], feat: &[f64]) -> Vec<f64> {
        match self.neuron {
            Neuron::TanhDot => {
                let t = linalg::dot(x, feat).tanh();
                let sech2 = 1.0 - t * t;
                feat.iter().map(|z| sech2 * z).collect()
            }
            Neuron::BoundedAmp => {
                let tr = x[0].tanh();
                let tu = linalg::dot(&x[1..], feat).tanh();
                let mut g = Vec::with_capacity(self.dim);
                g.push((1.0 - tr * tr) * tu);
                let c = tr * (1.0 - tu * tu);
                g.extend(feat.iter().map(|z| c * z));
                g
            }
        }
    }

    fn loss_value(&self, f: f64, y: f64) -> f64 {
        match self.loss {
            Loss::Squared => (f - y) * (f - y),
            Loss::Logistic => {
                // log(1 + exp(t)) = max(t, 0) + log(1 + exp(-|t|))
                let t = -y * f;
                t.max(0.0) + (-t.abs()).exp().ln_1p()
            }
        }
    }

    fn loss_derivative(&self, f: f64, y: f64) -> f64 {
        let d = match self.loss {
            Loss::Squared => 2.0 * (f - y),
            Loss::Logistic => -y / (1.0 + (y * f).exp()),
        };
        d.clamp(-DLOSS_CLAMP, DLOSS_CLAMP)
    }

    /// f_{mu_X}(z) = (1/N) sum_i h_{X^i}(z). `z` is a raw sample; the bias
    /// coordinate is appended here when the model was built with one.
    pub fn predict(&self, e: &ParticleEnsemble, z: &[f64]) -> f64 {
        let feat = self.pad(z);
        e.rows().map(|x| self.neuron_value(x, &feat)).sum::<f64>() / e.n_particles() as f64
    }

    fn pad(&self, z: &[f64]) -> Vec<f64> {
        if z.len() == self.feat_dim {
            z.to_vec()
        } else {
            debug_assert_eq!(z.len() + 1, self.feat_dim);
            let mut f = z.to_vec();
            f.push(1.0);
            f
        }
    }

    /// Predictions on the training set under mu_X; the shared per-step
    /// precomputation behind the bulk gradient hooks.
    fn train_predictions(&self, e: &ParticleEnsemble) -> Vec<f64> {
        let n = self.n_samples();
        let inv = 1.0 / e.n_particles() as f64;
        let mut preds = vec![0.0; n];
        for x in e.rows() {
            for (j, p) in preds.iter_mut().enumerate() {
                *p += self.neuron_value(x, self.feature(j));
            }
        }
        linalg::scale(&mut preds, inv);
        preds
    }

    fn grad_at(&self, preds: &[f64], x: &[f64]) -> Vec<f64> {
        let n = self.n_samples() as f64;
        let mut g = vec![0.0; self.dim];
        for (j, (&p, &y)) in preds.iter().zip(&self.labels).enumerate() {
            let dl = self.loss_derivative(p, y);
            linalg::axpy(&mut g, dl / n, &self.neuron_grad(x, self.feature(j)));
        }
        g
    }

    fn bounds(&self) -> (f64, f64, f64, f64) {
        // (max feature norm, sup |dloss|, Lipschitz of dloss in f, sup ||hess h||)
        let feat_max = (0..self.n_samples())
            .map(|j| linalg::norm(self.feature(j)))
            .fold(0.0, f64::max);
        let y_max = self.labels.iter().map(|y| y.abs()).fold(0.0, f64::max);
        let (dloss_sup, dloss_lip) = match self.loss {
            // |f| <= sup|h| = 1 for both neuron families
            Loss::Squared => (2.0 * (1.0 + y_max), 2.0),
            Loss::Logistic => (y_max, y_max * y_max / 4.0),
        };
        let hess_sup = match self.neuron {
            Neuron::TanhDot => TANH_SECOND_DERIV_SUP * feat_max * feat_max,
            Neuron::BoundedAmp => {
                TANH_SECOND_DERIV_SUP * (1.0 + feat_max * feat_max) + feat_max
            }
        };
        (feat_max, dloss_sup, dloss_lip, hess_sup)
    }
}

impl MeanFieldFunctional for TwoLayerNetModel {
    fn name(&self) -> &'static str {
        "two_layer_net"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn u_value(&self, e: &ParticleEnsemble) -> f64 {
        let preds = self.train_predictions(e);
        preds
            .iter()
            .zip(&self.labels)
            .map(|(&p, &y)| self.loss_value(p, y))
            .sum::<f64>()
            / self.n_samples() as f64
    }

    fn first_variation(&self, e: &ParticleEnsemble, x: &[f64]) -> f64 {
        let preds = self.train_predictions(e);
        let n = self.n_samples() as f64;
        preds
            .iter()
            .zip(&self.labels)
            .enumerate()
            .map(|(j, (&p, &y))| {
                self.loss_derivative(p, y) * self.neuron_value(x, self.feature(j))
            })
            .sum::<f64>()
            / n
    }

    fn grad_first_variation(&self, e: &ParticleEnsemble, x: &[f64]) -> Vec<f64> {
        self.grad_at(&self.train_predictions(e), x)
    }

    fn n_data(&self) -> usize {
        self.n_samples()
    }

    fn per_datum_grad(&self, e: &ParticleEnsemble, x: &[f64], j: usize) -> Vec<f64> {
        let feat = self.feature(j);
        let inv = 1.0 / e.n_particles() as f64;
        let pred = e.rows().map(|p| self.neuron_value(p, feat)).sum::<f64>() * inv;
        let dl = self.loss_derivative(pred, self.labels[j]);
        let mut g = self.neuron_grad(x, feat);
        linalg::scale(&mut g, dl);
        g
    }

    fn u_value_weighted(&self, cloud: &WeightedCloud) -> f64 {
        let n = self.n_samples() as f64;
        let mut acc = 0.0;
        for (j, &y) in self.labels.iter().enumerate() {
            let feat = self.feature(j);
            let f: f64 = (0..cloud.len())
                .map(|i| cloud.weights[i] * self.neuron_value(cloud.point(i), feat))
                .sum();
            acc += self.loss_value(f, y);
        }
        acc / n
    }

    fn constants(&self) -> ModelConstants {
        let (feat_max, dloss_sup, dloss_lip, hess_sup) = self.bounds();
        let grad_h_sup = match self.neuron {
            Neuron::TanhDot => feat_max,
            Neuron::BoundedAmp => (1.0 + feat_max * feat_max).sqrt(),
        };
        // R = sup|dl| * sup||grad h||; L covers the measure direction through
        // the prediction (Lipschitz grad_h_sup in W2) and the parameter
        // direction through the neuron Hessian.
        let r = dloss_sup * grad_h_sup;
        let l = dloss_lip * grad_h_sup * grad_h_sup + dloss_sup * hess_sup;
        let c_l = if l >= dloss_lip || dloss_lip == 0.0 { 0.0 } else { dloss_lip / l };
        ModelConstants { r_bound: r, lipschitz: l, second_variation_growth: c_l }
    }

    fn assumption_inputs(&self, reg: &Regularizer) -> AssumptionInputs {
        let consts = self.constants();
        let (_, dloss_sup, _, _) = self.bounds();
        AssumptionInputs {
            lambda1: reg.lambda1(),
            lambda2: reg.lambda2(),
            c_r: reg.c_r(),
            full: consts,
            per_datum: consts,
            // |dU/dmu(x)| <= sup|dl| * sup|h| with sup|h| = 1.
            first_variation_sup: Some(dloss_sup),
        }
    }

    fn grad_first_variation_all(&self, e: &ParticleEnsemble) -> Vec<f64> {
        let preds = self.train_predictions(e);
        let d = self.dim;
        let mut out = vec![0.0; e.n_particles() * d];
        use rayon::prelude::*;
        out.par_chunks_mut(d).enumerate().for_each(|(i, row)| {
            row.copy_from_slice(&self.grad_at(&preds, e.row(i)));
        });
        out
    }

    fn batch_mean_per_datum_grad_all(&self, e: &ParticleEnsemble, batch: &[usize]) -> Vec<f64> {
        let preds = self.train_predictions(e);
        let d = self.dim;
        let inv = 1.0 / batch.len() as f64;
        let mut out = vec![0.0; e.n_particles() * d];
        use rayon::prelude::*;
        out.par_chunks_mut(d).enumerate().for_each(|(i, row)| {
            let x = e.row(i);
            for &j in batch {
                let dl = self.loss_derivative(preds[j], self.labels[j]);
                linalg::axpy(row, dl * inv, &self.neuron_grad(x, self.feature(j)));
            }
        });
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tanh_net(data: &[f64], z_dim: usize, labels: Vec<f64>) -> TwoLayerNetModel {
        TwoLayerNetModel::new(data, z_dim, labels, Neuron::TanhDot, Loss::Squared, false).unwrap()
    }

    #[test]
    fn predict_examples() {
        let m = tanh_net(&[1.0], 1, vec![0.0]);
        // all particles at zero
        let e = ParticleEnsemble::from_positions(vec![0.0, 0.0], 2, 1).unwrap();
        assert_eq!(m.predict(&e, &[1.0]), 0.0);
        // single particle at 1
        let e = ParticleEnsemble::from_positions(vec![1.0], 1, 1).unwrap();
        assert!((m.predict(&e, &[1.0]) - 1.0f64.tanh()).abs() < 1e-12);
        // odd symmetry
        let e = ParticleEnsemble::from_positions(vec![1.0, -1.0], 2, 1).unwrap();
        assert!(m.predict(&e, &[1.0]).abs() < 1e-15);
    }

    #[test]
    fn zero_residual_means_zero_gradient() {
        let m = tanh_net(&[1.0], 1, vec![1.0f64.tanh()]);
        let e = ParticleEnsemble::from_positions(vec![1.0], 1, 1).unwrap();
        let g = m.grad_first_variation(&e, &[0.3]);
        assert!(g[0].abs() < 1e-12);
    }

    #[test]
    fn hand_evaluated_single_datum_gradient() {
        // n=1, z=1, y=0, squared loss, one particle at 1:
        // residual derivative 2*tanh(1), neuron grad sech^2(1)*z.
        let m = tanh_net(&[1.0], 1, vec![0.0]);
        let e = ParticleEnsemble::from_positions(vec![1.0], 1, 1).unwrap();
        let g = m.grad_first_variation(&e, &[1.0]);
        let t = 1.0f64.tanh();
        let expect = 2.0 * t * (1.0 - t * t);
        assert!((g[0] - expect).abs() < 1e-12, "got {} want {expect}", g[0]);
    }

    #[test]
    fn per_datum_mean_recovers_full_gradient() {
        let data = [0.5, -1.0, 1.5, 0.25, -0.75, 2.0];
        let m = TwoLayerNetModel::new(
            &data,
            2,
            vec![1.0, -1.0, 0.5],
            Neuron::TanhDot,
            Loss::Squared,
            true,
        )
        .unwrap();
        let e = ParticleEnsemble::from_positions(vec![0.2, -0.4, 0.1, 0.9, 0.3, -0.6], 2, 3)
            .unwrap();
        let x = [0.5, 0.5, -0.2];
        let full = m.grad_first_variation(&e, &x);
        let mut mean = vec![0.0; 3];
        for j in 0..m.n_data() {
            linalg::axpy(&mut mean, 1.0 / 3.0, &m.per_datum_grad(&e, &x, j));
        }
        for k in 0..3 {
            assert!((full[k] - mean[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn bulk_gradients_match_per_particle_calls() {
        let data = [0.5, -1.0, 1.5, 0.25];
        let m = TwoLayerNetModel::new(
            &data,
            2,
            vec![1.0, -1.0],
            Neuron::BoundedAmp,
            Loss::Logistic,
            false,
        )
        .unwrap();
        let e = ParticleEnsemble::from_positions(
            vec![0.2, -0.4, 0.1, 0.9, 0.3, -0.6, 1.0, 0.0, -1.0],
            3,
            3,
        )
        .unwrap();
        let bulk = m.grad_first_variation_all(&e);
        for i in 0..3 {
            let one = m.grad_first_variation(&e, e.row(i));
            for k in 0..3 {
                assert!((bulk[i * 3 + k] - one[k]).abs() < 1e-14);
            }
        }
        let batch = [1usize, 1, 0];
        let bulk = m.batch_mean_per_datum_grad_all(&e, &batch);
        for i in 0..3 {
            let mut one = vec![0.0; 3];
            for &j in &batch {
                linalg::axpy(&mut one, 1.0 / 3.0, &m.per_datum_grad(&e, e.row(i), j));
            }
            for k in 0..3 {
                assert!((bulk[i * 3 + k] - one[k]).abs() < 1e-13);
            }
        }
    }
}
