//! Shared fixtures for the criterion benches.

use mfld_core::ensemble::{init_ensemble, InitSpec, ParticleEnsemble};
use mfld_core::models::{KsdModel, LinearModel, MmdModel, MmdParam, Score};

pub fn gaussian_cloud(n: usize, d: usize, seed: u64) -> ParticleEnsemble {
    init_ensemble(n, d, &InitSpec::Gaussian { mean: 0.0, std: 1.0 }, seed).unwrap()
}

pub fn quadratic_model(d: usize) -> LinearModel {
    LinearModel::isotropic_quadratic(d, 1.0).unwrap()
}

pub fn finite_sum_model(n_terms: usize, d: usize) -> LinearModel {
    let cloud = gaussian_cloud(n_terms, d, 99);
    let scales = (0..n_terms)
        .map(|j| 0.5 + j as f64 / (n_terms - 1).max(1) as f64)
        .collect();
    LinearModel::finite_sum(scales, cloud.positions().to_vec(), d).unwrap()
}

pub fn mmd_model(n_data: usize) -> MmdModel {
    let data = gaussian_cloud(n_data, 1, 7);
    MmdModel::new(data.positions().to_vec(), 1, 1.0, MmdParam::Dirac).unwrap()
}

pub fn ksd_model() -> KsdModel {
    KsdModel::new(Score::Gaussian { mean: vec![0.0], tau2: 1.0 }, 1, 1.0).unwrap()
}
