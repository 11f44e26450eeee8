//! Independent brute-force references: finite-difference first variations and
//! gradients, exhaustive batch enumeration, permutation-exact optimal
//! transport. These share no code with the analytic paths they check and are
//! shipped in the library so the CLI can expose a user-runnable `verify`
//! subcommand.

use crate::ensemble::ParticleEnsemble;
use crate::error::{MfldError, Result};
use crate::estimators::BatchMode;
use crate::functionals::{MeanFieldFunctional, WeightedCloud};
use crate::linalg;

/// Default central-difference step: h = 1e-5 * (1 + scale).
pub fn fd_step(scale: f64) -> f64 {
    1e-5 * (1.0 + scale)
}

/// Coordinatewise central differences of a scalar function.
pub fn fd_grad(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    let mut xp = x.to_vec();
    for j in 0..x.len() {
        let orig = x[j];
        xp[j] = orig + h;
        let fp = f(&xp);
        xp[j] = orig - h;
        let fm = f(&xp);
        xp[j] = orig;
        g[j] = (fp - fm) / (2.0 * h);
    }
    g
}

/// Central difference in epsilon at 0 of U((1-eps) mu_X + eps delta_x),
/// approximating the integral of dU/dmu against (delta_x - mu_X). Agrees
/// with the mean-subtracted analytic first variation.
pub fn fd_first_variation(
    model: &dyn MeanFieldFunctional,
    e: &ParticleEnsemble,
    x: &[f64],
    h: f64,
) -> f64 {
    let n = e.n_particles();
    let d = e.dim();
    let mut positions = Vec::with_capacity((n + 1) * d);
    positions.extend_from_slice(e.positions());
    positions.extend_from_slice(x);

    let u_at = |eps: f64| -> f64 {
        let mut weights = vec![(1.0 - eps) / n as f64; n];
        weights.push(eps);
        model.u_value_weighted(&WeightedCloud { positions: &positions, dim: d, weights: &weights })
    };
    (u_at(h) - u_at(-h)) / (2.0 * h)
}

fn binomial(n: usize, b: usize) -> f64 {
    let b = b.min(n - b);
    let mut c = 1.0f64;
    for t in 0..b {
        c = c * (n - t) as f64 / (t + 1) as f64;
    }
    c
}

/// Exhaustive list of batch outcomes with probabilities summing to 1.
/// With replacement: all n^B ordered tuples, each with probability n^-B.
/// Without replacement: all C(n, B) subsets, each with probability 1/C(n, B).
pub fn enumerate_batches(
    n: usize,
    batch_size: usize,
    mode: BatchMode,
) -> Result<Vec<(Vec<usize>, f64)>> {
    if n == 0 || batch_size == 0 {
        return Err(MfldError::InvalidArgument(
            "enumerate_batches needs n >= 1 and B >= 1".to_string(),
        ));
    }
    match mode {
        BatchMode::WithReplacement => {
            let count = (n as f64).powi(batch_size as i32);
            if count > 1e6 {
                return Err(MfldError::CombinatorialGuard(format!(
                    "n^B = {count:.0} exceeds 1e6"
                )));
            }
            let prob = 1.0 / count;
            let mut out = Vec::with_capacity(count as usize);
            let mut batch = vec![0usize; batch_size];
            loop {
                out.push((batch.clone(), prob));
                // odometer increment
                let mut pos = batch_size;
                loop {
                    if pos == 0 {
                        return Ok(out);
                    }
                    pos -= 1;
                    batch[pos] += 1;
                    if batch[pos] < n {
                        break;
                    }
                    batch[pos] = 0;
                }
            }
        }
        BatchMode::WithoutReplacement => {
            if batch_size > n {
                return Err(MfldError::Estimator(format!(
                    "cannot draw {batch_size} of {n} without replacement"
                )));
            }
            let count = binomial(n, batch_size);
            if count > 1e6 {
                return Err(MfldError::CombinatorialGuard(format!(
                    "C(n,B) = {count:.0} exceeds 1e6"
                )));
            }
            let prob = 1.0 / count;
            let mut out = Vec::with_capacity(count as usize);
            let mut subset: Vec<usize> = (0..batch_size).collect();
            loop {
                out.push((subset.clone(), prob));
                // next lexicographic B-subset of {0..n-1}
                let mut i = batch_size;
                loop {
                    if i == 0 {
                        return Ok(out);
                    }
                    i -= 1;
                    if subset[i] < n - (batch_size - i) {
                        subset[i] += 1;
                        for t in i + 1..batch_size {
                            subset[t] = subset[t - 1] + 1;
                        }
                        break;
                    }
                }
            }
        }
    }
}

/// Exact W2 by minimizing over all N! assignments. Oracle for the polynomial
/// solver; refuses N > 8.
pub fn exact_w2_enum(a: &[f64], b: &[f64], n: usize, d: usize) -> Result<f64> {
    if a.len() != n * d || b.len() != n * d {
        return Err(MfldError::DimensionMismatch(format!(
            "clouds must both be {n}x{d}"
        )));
    }
    if n > 8 {
        return Err(MfldError::CombinatorialGuard(format!(
            "permutation oracle limited to N <= 8, got {n}"
        )));
    }
    let cost = |perm: &[usize]| -> f64 {
        perm.iter()
            .enumerate()
            .map(|(i, &j)| linalg::dist_sq(&a[i * d..(i + 1) * d], &b[j * d..(j + 1) * d]))
            .sum()
    };
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = cost(&perm);
    // Heap's algorithm
    let mut c = vec![0usize; n];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            best = best.min(cost(&perm));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok((best / n as f64).max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fd_grad_on_quadratic_and_constant() {
        let g = fd_grad(|x| 0.5 * linalg::norm_sq(x), &[3.0], 1e-5);
        assert!((g[0] - 3.0).abs() < 1e-8);
        let g = fd_grad(|_| 4.2, &[1.0, 2.0], 1e-5);
        assert!(g.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn fd_grad_matches_analytic_rbf_gradient() {
        let sigma2 = 0.8;
        let z = [0.3, -0.7];
        let k = |x: &[f64]| (-linalg::dist_sq(x, &z) / (2.0 * sigma2)).exp();
        let x = [1.1, 0.4];
        let g = fd_grad(k, &x, fd_step(linalg::norm(&x)));
        let kv = k(&x);
        for j in 0..2 {
            let analytic = -((x[j] - z[j]) / sigma2) * kv;
            assert!((g[j] - analytic).abs() < 1e-6 * (1.0 + analytic.abs()));
        }
    }

    #[test]
    fn fd_first_variation_is_exact_for_linear_functionals() {
        // U linear in mu makes U((1-eps) mu + eps delta_x) affine in eps, so
        // the central difference recovers V(x) - mean V(X^i) to rounding.
        use crate::ensemble::ParticleEnsemble;
        use crate::models::LinearModel;
        let m = LinearModel::quadratic(vec![0.7, 1.3], vec![0.2, -0.4]).unwrap();
        let e = ParticleEnsemble::from_positions(vec![0.5, -1.0, 1.5, 0.25, 0.0, 2.0], 3, 2)
            .unwrap();
        let x = [0.9, -0.3];
        let expect = m.potential_value(&x)
            - (0..3).map(|i| m.potential_value(e.row(i))).sum::<f64>() / 3.0;
        let got = fd_first_variation(&m, &e, &x, 1e-5);
        assert!((got - expect).abs() < 1e-9, "got {got}, expect {expect}");
    }

    #[test]
    fn enumerate_without_replacement_small_cases() {
        let got = enumerate_batches(2, 1, BatchMode::WithoutReplacement).unwrap();
        assert_eq!(got, vec![(vec![0], 0.5), (vec![1], 0.5)]);

        let got = enumerate_batches(4, 2, BatchMode::WithoutReplacement).unwrap();
        assert_eq!(got.len(), 6);
        let total: f64 = got.iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn enumerate_with_replacement_is_ordered_tuples() {
        let got = enumerate_batches(2, 2, BatchMode::WithReplacement).unwrap();
        assert_eq!(got.len(), 4);
        assert!(got.iter().all(|(_, p)| (*p - 0.25).abs() < 1e-15));
        let total: f64 = got.iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn enumerate_guards_blowup() {
        assert!(enumerate_batches(100, 4, BatchMode::WithReplacement).is_err());
        assert!(enumerate_batches(3, 4, BatchMode::WithoutReplacement).is_err());
    }

    #[test]
    fn w2_enum_examples() {
        // identical clouds
        let a = [0.0, 1.0, 2.0];
        assert_eq!(exact_w2_enum(&a, &a, 3, 1).unwrap(), 0.0);
        // N=1: plain distance
        let w = exact_w2_enum(&[0.0, 0.0], &[3.0, 4.0], 1, 2).unwrap();
        assert!((w - 5.0).abs() < 1e-12);
        // {0,2} vs {1,3}: identity pairing costs (1+1)/2=1, swap (9+1)/2=5
        let w = exact_w2_enum(&[0.0, 2.0], &[1.0, 3.0], 2, 1).unwrap();
        assert!((w - 1.0).abs() < 1e-12);
        // guard
        assert!(exact_w2_enum(&[0.0; 9], &[0.0; 9], 9, 1).is_err());
    }
}
