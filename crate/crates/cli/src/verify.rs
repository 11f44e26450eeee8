//! The user-runnable oracle suite behind `mfld verify`: every analytic path
//! that has an independent brute-force reference is checked against it and
//! one pass/fail line is printed per check.

use anyhow::{bail, Result};

use mfld_core::diagnostics;
use mfld_core::ensemble::{init_ensemble, InitSpec, NoiseSource, Stream};
use mfld_core::estimators::{sgd_drift, svrg_drift, BatchMode, SvrgState};
use mfld_core::functionals::{full_drift, MeanFieldFunctional, Regularizer};
use mfld_core::models::{
    KsdModel, LinearModel, Loss, MmdModel, MmdParam, Neuron, Score, TwoLayerNetModel,
};
use mfld_core::oracle::{enumerate_batches, exact_w2_enum, fd_first_variation, fd_grad, fd_step};
use mfld_core::ParticleEnsemble;

struct Check {
    name: &'static str,
    outcome: Result<String>,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn verify_models() -> Vec<(&'static str, Box<dyn MeanFieldFunctional>)> {
    let nn_data = [0.8, -0.5, -0.6, 1.1, 0.2, 0.4];
    vec![
        (
            "linear",
            Box::new(LinearModel::quadratic(vec![1.0, 0.5], vec![0.3, -0.2]).unwrap())
                as Box<dyn MeanFieldFunctional>,
        ),
        (
            "finite-sum",
            Box::new(
                LinearModel::finite_sum(vec![0.5, 1.5, 1.0], vec![0.4, -1.0, 0.9, 0.2, 0.0, 0.7], 2)
                    .unwrap(),
            ),
        ),
        (
            "two-layer",
            Box::new(
                TwoLayerNetModel::new(
                    &nn_data,
                    2,
                    vec![1.0, 0.0, 1.0],
                    Neuron::TanhDot,
                    Loss::Squared,
                    true,
                )
                .unwrap(),
            ),
        ),
        (
            "mmd",
            Box::new(
                MmdModel::new(vec![0.5, -1.2, 0.1, 1.9], 2, 0.9, MmdParam::Dirac).unwrap(),
            ),
        ),
        (
            "ksd",
            Box::new(
                KsdModel::new(Score::Gaussian { mean: vec![0.0, 0.0], tau2: 1.0 }, 2, 1.0)
                    .unwrap(),
            ),
        ),
    ]
}

fn gradient_check() -> Result<String> {
    let mut worst: f64 = 0.0;
    for (name, model) in verify_models() {
        let d = model.dim();
        for trial in 0..20u64 {
            let e = init_ensemble(4, d, &InitSpec::Gaussian { mean: 0.0, std: 0.8 }, 100 + trial)
                .map_err(|e| anyhow::anyhow!("{e}"))?;
            let src = NoiseSource::new(200 + trial, Stream::Probe);
            let x: Vec<f64> =
                (0..d).map(|j| 0.8 * src.standard_normal(0, 0, j as u64)).collect();
            let analytic = model.grad_first_variation(&e, &x);
            let fd = fd_grad(|p| model.first_variation(&e, p), &x, fd_step(norm(&x)));
            let err = analytic
                .iter()
                .zip(&fd)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
                / norm(&analytic).max(1.0);
            if err > 1e-6 {
                bail!("{name} trial {trial}: gradient error {err:.3e} > 1e-6");
            }
            worst = worst.max(err);

            let value = model.first_variation(&e, &x);
            let mean: f64 = (0..e.n_particles())
                .map(|i| model.first_variation(&e, e.row(i)))
                .sum::<f64>()
                / e.n_particles() as f64;
            let fv = fd_first_variation(model.as_ref(), &e, &x, 1e-5);
            let err = (fv - (value - mean)).abs() / (1.0 + (value - mean).abs());
            if err > 1e-5 {
                bail!("{name} trial {trial}: first-variation error {err:.3e} > 1e-5");
            }
            worst = worst.max(err);
        }
    }
    Ok(format!("max relative error {worst:.2e}"))
}

fn unbiasedness_check() -> Result<String> {
    let model =
        LinearModel::finite_sum(vec![0.5, 1.5, 1.0, 2.0, 0.75], vec![0.4, -1.0, 2.0, 0.0, 1.3], 1)
            .unwrap();
    let reg = Regularizer::new(0.1).unwrap();
    let anchor = ParticleEnsemble::from_positions(vec![0.3, -0.7], 2, 1).unwrap();
    let state = SvrgState::refresh(&model, &anchor);
    let mut moved = ParticleEnsemble::from_positions(vec![0.9, -1.4], 2, 1).unwrap();
    moved.set_step(1);
    let mut worst: f64 = 0.0;
    for b in 1..=3usize {
        for i in 0..2 {
            let full = full_drift(&model, &reg, &moved, i).map_err(|e| anyhow::anyhow!("{e}"))?;
            let mut mean_sgd = 0.0;
            for (batch, p) in enumerate_batches(5, b, BatchMode::WithReplacement).unwrap() {
                mean_sgd += p * sgd_drift(&model, &reg, &moved, i, &batch).unwrap()[0];
            }
            let mut mean_svrg = 0.0;
            for (batch, p) in enumerate_batches(5, b, BatchMode::WithoutReplacement).unwrap() {
                mean_svrg += p * svrg_drift(&model, &reg, &moved, i, &batch, &state).unwrap()[0];
            }
            for (label, mean) in [("sgd", mean_sgd), ("svrg", mean_svrg)] {
                let err = (mean - full[0]).abs() / full[0].abs().max(1e-9);
                if err > 1e-12 {
                    bail!("{label} B={b} i={i}: bias {err:.3e} > 1e-12");
                }
                worst = worst.max(err);
            }
        }
    }
    Ok(format!("max relative bias {worst:.2e}"))
}

fn transport_check() -> Result<String> {
    let src = NoiseSource::new(7, Stream::Probe);
    let mut worst: f64 = 0.0;
    for trial in 0..50u64 {
        let n = 2 + (src.word(trial, 0, 0) % 7) as usize;
        let d = 1 + (src.word(trial, 1, 0) % 3) as usize;
        let mk = |tag: u64| -> Vec<f64> {
            (0..n * d).map(|t| 2.0 * src.standard_normal(trial, 5 + tag, t as u64)).collect()
        };
        let a = mk(0);
        let b = mk(1);
        let fast = diagnostics::wasserstein2_small(&a, &b, n, d).map_err(|e| anyhow::anyhow!("{e}"))?;
        let slow = exact_w2_enum(&a, &b, n, d).map_err(|e| anyhow::anyhow!("{e}"))?;
        let err = (fast - slow).abs();
        if err > 1e-9 {
            bail!("trial {trial} (n={n}, d={d}): |{fast} - {slow}| = {err:.3e} > 1e-9");
        }
        worst = worst.max(err);
    }
    Ok(format!("max absolute gap {worst:.2e}"))
}

fn smoothing_check() -> Result<String> {
    // 1-d quadrature for the mixture-parameterization kernel closed forms.
    let sk = 0.9f64;
    let sg = 0.6f64;
    let s2 = sk * sk;
    let g2 = sg * sg;
    let gauss = |z: f64, c: f64| {
        (-(z - c) * (z - c) / (2.0 * g2)).exp() / (2.0 * std::f64::consts::PI * g2).sqrt()
    };
    let rbf = |a: f64, b: f64, bw2: f64| (-(a - b) * (a - b) / (2.0 * bw2)).exp();
    let simpson = |f: &dyn Fn(f64) -> f64, a: f64, b: f64, n: usize| -> f64 {
        let h = (b - a) / n as f64;
        let mut acc = f(a) + f(b);
        for i in 1..n {
            acc += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc * h / 3.0
    };
    let x = 0.4;
    let y = -0.3;
    let once = simpson(&|z| gauss(z, x) * rbf(z, y, s2), -8.0, 8.0, 4000);
    let once_closed = (s2 / (s2 + g2)).sqrt() * rbf(x, y, s2 + g2);
    let e1 = (once - once_closed).abs() / once_closed.abs();
    if e1 > 1e-8 {
        bail!("single smoothing off by {e1:.3e}");
    }
    let xp = -0.9;
    let twice = simpson(
        &|z| gauss(z, xp) * (s2 / (s2 + g2)).sqrt() * rbf(z, x, s2 + g2),
        -9.0,
        9.0,
        4000,
    );
    let twice_closed = (s2 / (s2 + 2.0 * g2)).sqrt() * rbf(xp, x, s2 + 2.0 * g2);
    let e2 = (twice - twice_closed).abs() / twice_closed.abs();
    if e2 > 1e-8 {
        bail!("double smoothing off by {e2:.3e}");
    }
    Ok(format!("quadrature gaps {e1:.2e}, {e2:.2e}"))
}

fn noise_check() -> Result<String> {
    let s = NoiseSource::new(2024, Stream::Langevin);
    let n = 200_000u64;
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for t in 0..n {
        let z = s.standard_normal(t, 0, 0);
        sum += z;
        sumsq += z * z;
    }
    let mean = sum / n as f64;
    let var = sumsq / n as f64 - mean * mean;
    let mean_tol = 3.0 / (n as f64).sqrt();
    let var_tol = 3.0 * (2.0 / n as f64).sqrt();
    if mean.abs() > mean_tol || (var - 1.0).abs() > var_tol {
        bail!("noise moments off: mean {mean:.4e}, var {var:.6}");
    }
    Ok(format!("mean {mean:.1e}, var-1 {:.1e}", var - 1.0))
}

/// Run the whole suite; returns the number of failures.
pub fn run_verify() -> usize {
    let checks = vec![
        Check { name: "gradient-vs-finite-differences", outcome: gradient_check() },
        Check { name: "estimator-unbiasedness-enumeration", outcome: unbiasedness_check() },
        Check { name: "transport-vs-permutation-oracle", outcome: transport_check() },
        Check { name: "mixture-kernel-smoothing-quadrature", outcome: smoothing_check() },
        Check { name: "counter-noise-moments", outcome: noise_check() },
    ];
    let mut failures = 0;
    for c in checks {
        match c.outcome {
            Ok(detail) => println!("PASS {} ({detail})", c.name),
            Err(e) => {
                failures += 1;
                println!("FAIL {}: {e}", c.name);
            }
        }
    }
    failures
}
