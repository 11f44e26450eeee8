//! Closed-form constants and bounds for the convergence envelopes, plus
//! empirical measurement utilities (entropy, exact small-N transport,
//! prediction error, proximal Gibbs log-density).

use crate::assignment;
use crate::ensemble::{second_moment, ParticleEnsemble};
use crate::error::{MfldError, Result};
use crate::functionals::{AssumptionInputs, MeanFieldFunctional, Regularizer};
use crate::linalg;
use crate::models::TwoLayerNetModel;

const LN10: f64 = std::f64::consts::LN_10;

fn pos(v: f64) -> bool {
    v.is_finite() && v > 0.0
}

fn nonneg(v: f64) -> bool {
    v.is_finite() && v >= 0.0
}

/// Bounded-first-variation lower bound: alpha >= (lambda1/lambda) e^{-4R/lambda}.
/// Here R bounds |dU/dmu| itself.
pub fn lsi_bounded(lambda1: f64, lambda: f64, r_sup: f64) -> Result<f64> {
    if !pos(lambda1) || !pos(lambda) || !nonneg(r_sup) {
        return Err(MfldError::InvalidArgument(format!(
            "lsi_bounded needs lambda1, lambda > 0 and R >= 0 (got {lambda1}, {lambda}, {r_sup})"
        )));
    }
    Ok(lambda1 / lambda * (-4.0 * r_sup / lambda).exp())
}

fn lsi_bounded_log10(lambda1: f64, lambda: f64, r_sup: f64) -> f64 {
    (lambda1 / lambda).log10() - 4.0 * r_sup / lambda / LN10
}

/// Lipschitz-perturbation lower bound, the max of two expressions: a
/// Miclo-trick term
///   (lambda1 / 2 lambda) exp(-(4 R^2 / (lambda1 lambda)) sqrt(2 d / pi))
/// and a defective-log-Sobolev term
///   { 4 lambda / lambda1
///     + e^{R^2/(2 lambda1 lambda)} (R/lambda1 + sqrt(2 lambda/lambda1))^2
///       [2 + d + (d/2) log(lambda2/lambda1) + 4 R^2/(lambda1 lambda)] }^{-1}.
/// Here R bounds ||grad dU/dmu||.
pub fn lsi_lipschitz(lambda1: f64, lambda2: f64, lambda: f64, r: f64, d: usize) -> Result<f64> {
    if !pos(lambda1) || !pos(lambda) || !nonneg(r) || d == 0 {
        return Err(MfldError::InvalidArgument(format!(
            "lsi_lipschitz needs lambda1, lambda > 0, R >= 0, d >= 1 \
             (got {lambda1}, {lambda2}, {lambda}, {r}, {d})"
        )));
    }
    if lambda2 < lambda1 {
        return Err(MfldError::InvalidArgument(format!(
            "lsi_lipschitz needs lambda2 >= lambda1, got {lambda2} < {lambda1}"
        )));
    }
    let d = d as f64;
    let t1 = lambda1 / (2.0 * lambda)
        * (-(4.0 * r * r / (lambda1 * lambda)) * (2.0 * d / std::f64::consts::PI).sqrt()).exp();
    let bracket =
        2.0 + d + 0.5 * d * (lambda2 / lambda1).ln() + 4.0 * r * r / (lambda1 * lambda);
    let square = {
        let s = r / lambda1 + (2.0 * lambda / lambda1).sqrt();
        s * s
    };
    let denom = 4.0 * lambda / lambda1 + (r * r / (2.0 * lambda1 * lambda)).exp() * square * bracket;
    let t2 = if denom.is_finite() { 1.0 / denom } else { 0.0 };
    Ok(t1.max(t2))
}

fn lsi_lipschitz_log10(lambda1: f64, lambda2: f64, lambda: f64, r: f64, d: usize) -> f64 {
    let df = d as f64;
    let log_t1 = (lambda1 / (2.0 * lambda)).log10()
        - (4.0 * r * r / (lambda1 * lambda)) * (2.0 * df / std::f64::consts::PI).sqrt() / LN10;
    let bracket =
        2.0 + df + 0.5 * df * (lambda2 / lambda1).ln() + 4.0 * r * r / (lambda1 * lambda);
    let s = r / lambda1 + (2.0 * lambda / lambda1).sqrt();
    // log10 of the dominant part of the denominator; good whenever the
    // exponential dwarfs 4 lambda / lambda1, which is exactly the regime
    // where the linear value underflows.
    let log_denom_tail = r * r / (2.0 * lambda1 * lambda) / LN10 + (s * s * bracket).log10();
    let denom_lin = 4.0 * lambda / lambda1 + (r * r / (2.0 * lambda1 * lambda)).exp() * s * s * bracket;
    let log_t2 = if denom_lin.is_finite() { -denom_lin.log10() } else { -log_denom_tail };
    log_t1.max(log_t2)
}

/// Both LSI lower bounds for one model/regularizer configuration. The
/// bounded-case bound exists only when the model certifies a sup on the
/// first variation itself. Values can underflow to zero for extreme R/lambda;
/// the log10 fields stay informative there.
#[derive(Debug, Clone, Copy)]
pub struct LsiBounds {
    pub alpha_lipschitz: f64,
    pub alpha_bounded: Option<f64>,
    pub log10_alpha_lipschitz: f64,
    pub log10_alpha_bounded: Option<f64>,
}

impl LsiBounds {
    pub fn compute(inputs: &AssumptionInputs, lambda: f64, d: usize) -> Result<Self> {
        let alpha_lipschitz =
            lsi_lipschitz(inputs.lambda1, inputs.lambda2, lambda, inputs.full.r_bound, d)?;
        let log10_alpha_lipschitz =
            lsi_lipschitz_log10(inputs.lambda1, inputs.lambda2, lambda, inputs.full.r_bound, d);
        let (alpha_bounded, log10_alpha_bounded) = match inputs.first_variation_sup {
            Some(r_sup) => (
                Some(lsi_bounded(inputs.lambda1, lambda, r_sup)?),
                Some(lsi_bounded_log10(inputs.lambda1, lambda, r_sup)),
            ),
            None => (None, None),
        };
        Ok(LsiBounds {
            alpha_lipschitz,
            alpha_bounded,
            log10_alpha_lipschitz,
            log10_alpha_bounded,
        })
    }

    /// The conservative alpha used in every envelope: the larger of the two
    /// valid lower bounds.
    pub fn alpha_lower(&self) -> f64 {
        match self.alpha_bounded {
            Some(b) => self.alpha_lipschitz.max(b),
            None => self.alpha_lipschitz,
        }
    }
}

/// (lambda1/(4 lambda2) + 1/lambda1)(R^2 + lambda2 c_r), with the
/// lambda2 -> 0 limit taken explicitly.
fn quarter_bracket(lambda1: f64, lambda2: f64, c_r: f64, r: f64) -> f64 {
    if lambda2 == 0.0 {
        if r == 0.0 {
            lambda1 * c_r / 4.0
        } else {
            f64::INFINITY
        }
    } else {
        (lambda1 / (4.0 * lambda2) + 1.0 / lambda1) * (r * r + lambda2 * c_r)
    }
}

/// Uniform second-moment bound along the iterates: E||X_k||^2 bounded by
/// E||X_0||^2 + (2/lambda1)[(lambda1/(8 lambda2) + 1/(2 lambda1))
/// (R^2 + lambda2 c_r) + lambda d].
/// Callers are expected to keep eta <= lambda1/(4 lambda2) (warned elsewhere).
pub fn moment_bound(
    init_second_moment: f64,
    lambda1: f64,
    lambda2: f64,
    c_r: f64,
    r: f64,
    lambda: f64,
    d: usize,
) -> f64 {
    let bracket = if lambda2 == 0.0 {
        if r == 0.0 {
            lambda1 * c_r / 8.0
        } else {
            f64::INFINITY
        }
    } else {
        (lambda1 / (8.0 * lambda2) + 1.0 / (2.0 * lambda1)) * (r * r + lambda2 * c_r)
    };
    init_second_moment + 2.0 / lambda1 * (bracket + lambda * d as f64)
}

/// The closed-form constants of the fixed-step error envelope.
#[derive(Debug, Clone, Copy)]
pub struct TheoryConstants {
    pub rbar_sq: f64,
    pub lbar: f64,
    pub c1: f64,
    pub delta_eta: f64,
    /// Display only: depends on alpha (itself only lower-bounded) and the
    /// conservative c_L, so it never enters pass/fail logic.
    pub c_lambda: f64,
    pub alpha_lower: f64,
    pub moment_bound: f64,
    pub lambda: f64,
    pub eta: f64,
}

/// Assemble the envelope constants:
///   Rbar^2 = m0 + (1/l1)[(l1/(4 l2) + 1/l1)(R^2 + l2 c_r) + lambda d]
///   C1 = 8 [R^2 + l2 (c_r + Rbar^2) + d],   Lbar = L + l2,
///   delta_eta = C1 Lbar^2 (eta^2 + lambda eta),
///   C_lambda = 2 lambda L alpha (1 + 2 c_L Rbar^2) + 2 lambda^2 L^2 Rbar^2.
pub fn theory_constants(
    inputs: &AssumptionInputs,
    lambda: f64,
    eta: f64,
    d: usize,
    init_second_moment: f64,
) -> Result<TheoryConstants> {
    if !pos(inputs.lambda1) {
        return Err(MfldError::InvalidArgument(format!(
            "theory constants need lambda1 > 0, got {}",
            inputs.lambda1
        )));
    }
    let r = inputs.full.r_bound;
    let l = inputs.full.lipschitz;
    let c_l = inputs.full.second_variation_growth;
    let l1 = inputs.lambda1;
    let l2 = inputs.lambda2;
    let df = d as f64;

    let rbar_sq =
        init_second_moment + (quarter_bracket(l1, l2, inputs.c_r, r) + lambda * df) / l1;
    let c1 = 8.0 * (r * r + l2 * (inputs.c_r + rbar_sq) + df);
    let lbar = l + l2;
    let delta_eta = if lbar == 0.0 { 0.0 } else { c1 * lbar * lbar * (eta * eta + lambda * eta) };
    // Degenerate display-only configurations (lambda2 < lambda1) carry no
    // valid LSI bound; alpha = 0 marks the envelope as vacuous there.
    let alpha = LsiBounds::compute(inputs, lambda, d).map_or(0.0, |b| b.alpha_lower());
    let c_lambda = 2.0 * lambda * l * alpha * (1.0 + 2.0 * c_l * rbar_sq)
        + 2.0 * lambda * lambda * l * l * rbar_sq;
    let mb = moment_bound(init_second_moment, l1, l2, inputs.c_r, r, lambda, d);
    Ok(TheoryConstants {
        rbar_sq,
        lbar,
        c1,
        delta_eta,
        c_lambda,
        alpha_lower: alpha,
        moment_bound: mb,
        lambda,
        eta,
    })
}

impl TheoryConstants {
    /// Variance envelope for the mini-batch estimator without the extra
    /// smoothness assumption: Upsilon = (R^2/B) eta, with the per-datum R.
    pub fn upsilon_sgd(&self, per_datum_r: f64, batch_size: usize) -> f64 {
        per_datum_r * per_datum_r / batch_size as f64 * self.eta
    }

    /// Variance envelope for the anchored estimator:
    /// Upsilon = C1 Xi L^2 m eta^2 (eta + lambda), with the per-datum L.
    pub fn upsilon_svrg(&self, per_datum_l: f64, xi: f64, refresh_period: usize) -> f64 {
        self.c1
            * xi
            * per_datum_l
            * per_datum_l
            * refresh_period as f64
            * self.eta
            * self.eta
            * (self.eta + self.lambda)
    }

    /// Fixed-step objective-gap envelope after k steps:
    /// exp(-lambda alpha eta k / 2) Delta0 plus the discretization bias
    /// (4/(lambda alpha)) Lbar^2 C1 (lambda eta + eta^2), the variance term
    /// (4/(lambda alpha eta)) Upsilon, and 4 C_lambda / (lambda alpha N).
    /// Delta0 is user-supplied or trace-estimated; the bias and plateau terms
    /// are fully determined by the constants.
    pub fn theorem_rhs(&self, k: usize, delta0: f64, upsilon: f64, n_particles: usize) -> f64 {
        let la = self.lambda * self.alpha_lower;
        if la == 0.0 {
            return f64::INFINITY;
        }
        (-la * self.eta * k as f64 / 2.0).exp() * delta0
            + 4.0 / la * self.lbar * self.lbar * self.c1 * (self.lambda * self.eta + self.eta * self.eta)
            + 4.0 / (la * self.eta) * upsilon
            + 4.0 * self.c_lambda / (la * n_particles as f64)
    }
}

/// Finite-population variance factor of sampling B of n without replacement.
pub fn variance_factor_xi(n: usize, batch_size: usize) -> f64 {
    if n <= 1 {
        return 0.0;
    }
    (n - batch_size) as f64 / (batch_size as f64 * (n - 1) as f64)
}

fn ln_unit_ball_volume(d: usize) -> f64 {
    // ln V_d = (d/2) ln pi - ln Gamma(d/2 + 1), Gamma by recurrence from
    // Gamma(1) = 1 or Gamma(1/2) = sqrt(pi).
    let df = d as f64;
    let mut x;
    let mut lgamma;
    if d.is_multiple_of(2) {
        x = 1.0;
        lgamma = 0.0;
    } else {
        x = 0.5;
        lgamma = 0.5 * std::f64::consts::PI.ln();
    }
    while x < df / 2.0 + 1.0 - 0.25 {
        lgamma += x.ln();
        x += 1.0;
    }
    df / 2.0 * std::f64::consts::PI.ln() - lgamma
}

/// Nearest-neighbor (k=1) differential-entropy estimate of the particle
/// cloud:
///   H = H_{N-1} + ln V_d + (d/N) sum_i ln eps_i
/// with H_{N-1} the harmonic number (= psi(N) - psi(1)) and eps_i the
/// distance to the nearest neighbor. Duplicate points would give ln 0, so
/// distances are floored at 1e-12. Exact under scaling: H(cX) = H(X) + d ln c.
pub fn entropy_estimate(e: &ParticleEnsemble) -> Result<f64> {
    let n = e.n_particles();
    let d = e.dim();
    if n < d + 2 {
        return Err(MfldError::InvalidArgument(format!(
            "entropy estimate needs N >= d + 2, got N={n}, d={d}"
        )));
    }
    // parallel per-slot fill, then a serial sum: the reduction order (and so
    // the result bits) must not depend on the worker count
    use rayon::prelude::*;
    let mut per_particle = vec![0.0f64; n];
    per_particle.par_iter_mut().enumerate().for_each(|(i, out)| {
        let xi = e.row(i);
        let mut best = f64::INFINITY;
        for j in 0..n {
            if j != i {
                let dist = linalg::dist_sq(xi, e.row(j));
                if dist < best {
                    best = dist;
                }
            }
        }
        // floor squared distance at 1e-24, i.e. eps at 1e-12
        *out = 0.5 * best.max(1e-24).ln();
    });
    let log_eps: f64 = per_particle.iter().sum();
    let harmonic: f64 = (1..n).map(|k| 1.0 / k as f64).sum();
    Ok(harmonic + ln_unit_ball_volume(d) + d as f64 / n as f64 * log_eps)
}

/// Exact W2 between two equal-size empirical clouds via optimal assignment;
/// polynomial solver, capped at N = 512.
pub fn wasserstein2_small(a: &[f64], b: &[f64], n: usize, d: usize) -> Result<f64> {
    if n > 512 {
        return Err(MfldError::InvalidArgument(format!(
            "assignment solver capped at N = 512, got {n}"
        )));
    }
    assignment::wasserstein2(a, b, n, d)
}

/// Squared prediction gap (f_mu(z) - f_ref(z))^2 at one input.
pub fn prediction_error(
    model: &TwoLayerNetModel,
    e: &ParticleEnsemble,
    reference: &dyn Fn(&[f64]) -> f64,
    z: &[f64],
) -> f64 {
    let gap = model.predict(e, z) - reference(z);
    gap * gap
}

/// Mean of the squared prediction gap over a held-out grid (row-major
/// n_grid x z_dim).
pub fn mean_squared_prediction_gap(
    model: &TwoLayerNetModel,
    e: &ParticleEnsemble,
    reference: &dyn Fn(&[f64]) -> f64,
    grid: &[f64],
    z_dim: usize,
) -> f64 {
    let n = grid.len() / z_dim;
    (0..n)
        .map(|i| prediction_error(model, e, reference, &grid[i * z_dim..(i + 1) * z_dim]))
        .sum::<f64>()
        / n as f64
}

/// Unnormalized log-density of the proximal Gibbs measure:
/// -(dF/dmu(mu_X)(x)) / lambda = -(dU/dmu(x) + r(x)) / lambda.
pub fn proximal_gibbs_logdensity(
    model: &dyn MeanFieldFunctional,
    reg: &Regularizer,
    e: &ParticleEnsemble,
    lambda: f64,
    x: &[f64],
) -> Result<f64> {
    if !pos(lambda) {
        return Err(MfldError::InvalidArgument(format!(
            "proximal Gibbs needs lambda > 0, got {lambda}"
        )));
    }
    Ok(-(model.first_variation(e, x) + reg.value(x)) / lambda)
}

/// Convenience: run-time moment monitor threshold (bound * (1 + slack)).
pub fn moment_monitor_ok(e: &ParticleEnsemble, bound: f64, slack: f64) -> bool {
    second_moment(e) <= bound * (1.0 + slack)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{init_ensemble, InitSpec, NoiseSource, Stream};
    use crate::functionals::ModelConstants;

    fn inputs(l1: f64, l2: f64, r: f64, fv_sup: Option<f64>) -> AssumptionInputs {
        let c = ModelConstants { r_bound: r, lipschitz: 0.0, second_variation_growth: 0.0 };
        AssumptionInputs {
            lambda1: l1,
            lambda2: l2,
            c_r: 0.0,
            full: c,
            per_datum: c,
            first_variation_sup: fv_sup,
        }
    }

    #[test]
    fn lsi_bounded_known_values() {
        assert!((lsi_bounded(1.0, 1.0, 0.0).unwrap() - 1.0).abs() < 1e-12);
        assert!((lsi_bounded(1.0, 1.0, 1.0).unwrap() - (-4.0f64).exp()).abs() < 1e-12);
        assert!((lsi_bounded(2.0, 1.0, 0.0).unwrap() - 2.0).abs() < 1e-12);
        assert!(lsi_bounded(0.0, 1.0, 0.0).is_err());
        assert!(lsi_bounded(1.0, -1.0, 0.0).is_err());
    }

    #[test]
    fn lsi_lipschitz_hand_evaluated_case() {
        // (1,1,1,0,1): first term 1/2 e^0 = 0.5; second term
        // 1/(4 + e^0 (0 + sqrt(2))^2 [2 + 1 + 0 + 0]) = 1/10; max 0.5.
        let v = lsi_lipschitz(1.0, 1.0, 1.0, 0.0, 1).unwrap();
        assert!((v - 0.5).abs() < 1e-12, "got {v}");
        assert!(lsi_lipschitz(1.0, 0.5, 1.0, 0.0, 1).is_err());
    }

    #[test]
    fn lsi_bounds_monotone_in_r() {
        let mut prev_l = f64::INFINITY;
        let mut prev_b = f64::INFINITY;
        for i in 0..40 {
            let r = i as f64 * 0.5;
            let l = lsi_lipschitz(1.3, 2.0, 0.7, r, 3).unwrap();
            let b = lsi_bounded(1.3, 0.7, r).unwrap();
            assert!(l <= prev_l + 1e-15 && l >= 0.0);
            assert!(b <= prev_b + 1e-15 && b > 0.0 || b == 0.0);
            prev_l = l;
            prev_b = b;
        }
        // linear in lambda1
        let a = lsi_bounded(1.0, 0.9, 2.0).unwrap();
        let b = lsi_bounded(3.0, 0.9, 2.0).unwrap();
        assert!((b - 3.0 * a).abs() < 1e-12 * b.abs());
    }

    mod lsi_properties {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn bounds_nonnegative_and_nonincreasing_in_r(
                lambda1 in 0.05f64..5.0,
                gap in 0.0f64..5.0,
                lambda in 0.05f64..5.0,
                r in 0.0f64..8.0,
                dr in 0.01f64..4.0,
                d in 1usize..6,
            ) {
                let lambda2 = lambda1 + gap;
                let a = lsi_lipschitz(lambda1, lambda2, lambda, r, d).unwrap();
                let b = lsi_lipschitz(lambda1, lambda2, lambda, r + dr, d).unwrap();
                prop_assert!(a >= 0.0 && b >= 0.0);
                prop_assert!(b <= a * (1.0 + 1e-12) + 1e-300, "increased in R: {a} -> {b}");
                let ab = lsi_bounded(lambda1, lambda, r).unwrap();
                let bb = lsi_bounded(lambda1, lambda, r + dr).unwrap();
                prop_assert!(bb <= ab);
                // linear in lambda1
                let scaled = lsi_bounded(2.0 * lambda1, lambda, r).unwrap();
                prop_assert!((scaled - 2.0 * ab).abs() <= 1e-12 * scaled.abs());
            }
        }
    }

    #[test]
    fn moment_bound_plugins() {
        // (0, 1, 1, 0, 0, 1, 1) -> 0 + 2 [0 + 1] / 1 = 2
        assert!((moment_bound(0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1) - 2.0).abs() < 1e-12);
        // M + 2 lambda d / lambda1 structure with everything else zeroed
        let m = 3.7;
        let v = moment_bound(m, 2.0, 0.0, 0.0, 0.0, 0.5, 4);
        assert!((v - (m + 2.0 * 0.5 * 4.0 / 2.0)).abs() < 1e-12);
        // unbounded when R > 0 with no upper curvature
        assert!(moment_bound(0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1).is_infinite());
    }

    #[test]
    fn theory_constants_plugins() {
        // degenerate display-only case: L = 0, lambda2 = 0 gives delta_eta = 0
        let inp = inputs(1.0, 0.0, 0.0, Some(0.0));
        let tc = theory_constants(&inp, 1.0, 0.01, 1, 0.0).unwrap();
        assert_eq!(tc.delta_eta, 0.0);
        assert!((tc.moment_bound - 2.0).abs() < 1e-12);

        // delta_eta is linear in (eta^2 + lambda eta) at fixed C1 Lbar^2
        let inp = inputs(1.0, 1.0, 0.5, None);
        let a = theory_constants(&inp, 1.0, 0.01, 2, 1.0).unwrap();
        // eta' solves eta'^2 + eta' = 2 (0.01^2 + 0.01)
        let target = 2.0 * (0.01f64 * 0.01 + 0.01);
        let eta2 = (-1.0 + (1.0 + 4.0 * target).sqrt()) / 2.0;
        let b = theory_constants(&inp, 1.0, eta2, 2, 1.0).unwrap();
        assert!(
            ((b.delta_eta / a.delta_eta) - 2.0).abs() < 1e-12,
            "ratio {}",
            b.delta_eta / a.delta_eta
        );
    }

    #[test]
    fn envelope_is_nonincreasing_and_plateaus() {
        let inp = inputs(1.0, 1.0, 0.5, Some(0.5));
        let tc = theory_constants(&inp, 0.5, 0.01, 2, 1.0).unwrap();
        let upsilon = tc.upsilon_sgd(inp.per_datum.r_bound, 8);
        let mut prev = f64::INFINITY;
        let mut last = 0.0;
        for k in (0..=30).map(|t| t * 20_000) {
            let v = tc.theorem_rhs(k, 5.0, upsilon, 1000);
            assert!(v <= prev + 1e-12, "rhs increased at k={k}");
            prev = v;
            last = v;
        }
        let plateau = tc.theorem_rhs(usize::MAX / 2, 5.0, upsilon, 1000);
        assert!((last - plateau) / plateau < 0.01);
        assert!(plateau > 0.0);
    }

    #[test]
    fn xi_matches_definition() {
        assert_eq!(variance_factor_xi(4, 4), 0.0);
        let xi = variance_factor_xi(1024, 8);
        assert!((xi - (1016.0 / (8.0 * 1023.0))).abs() < 1e-15);
    }

    #[test]
    fn entropy_of_standard_gaussian() {
        let e = init_ensemble(10_000, 1, &InitSpec::Gaussian { mean: 0.0, std: 1.0 }, 42).unwrap();
        let h = entropy_estimate(&e).unwrap();
        let truth = 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln();
        assert!((h - truth).abs() < 0.1, "estimate {h}, truth {truth}");
    }

    #[test]
    fn entropy_scaling_law() {
        let e = init_ensemble(10_000, 2, &InitSpec::Gaussian { mean: 0.0, std: 1.0 }, 7).unwrap();
        let h = entropy_estimate(&e).unwrap();
        let c = 3.0f64;
        let scaled: Vec<f64> = e.positions().iter().map(|v| c * v).collect();
        let es = ParticleEnsemble::from_positions(scaled, 10_000, 2).unwrap();
        let hs = entropy_estimate(&es).unwrap();
        assert!((hs - h - 2.0 * c.ln()).abs() < 0.05, "h {h} hs {hs}");
    }

    #[test]
    fn entropy_of_uniform_is_near_zero() {
        let src = NoiseSource::new(13, Stream::Probe);
        let n = 10_000;
        let pts: Vec<f64> = (0..n).map(|i| src.uniform_open(i as u64, 0, 0)).collect();
        let e = ParticleEnsemble::from_positions(pts, n as usize, 1).unwrap();
        let h = entropy_estimate(&e).unwrap();
        assert!(h.abs() < 0.1, "estimate {h}");
    }

    #[test]
    fn entropy_requires_enough_particles() {
        let e = ParticleEnsemble::from_positions(vec![0.5; 9], 3, 3).unwrap();
        assert!(entropy_estimate(&e).is_err());
    }

    #[test]
    fn w2_examples() {
        let a = [0.0, 2.0];
        let b = [1.0, 3.0];
        assert!((wasserstein2_small(&a, &b, 2, 1).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(wasserstein2_small(&a, &a, 2, 1).unwrap(), 0.0);
        let w = wasserstein2_small(&[0.0, 0.0], &[3.0, 4.0], 1, 2).unwrap();
        assert!((w - 5.0).abs() < 1e-12);
        assert!(wasserstein2_small(&[0.0; 513], &[0.0; 513], 513, 1).is_err());
        assert!(wasserstein2_small(&[0.0; 4], &[0.0; 2], 2, 2).is_err());
    }

    #[test]
    fn prediction_error_examples() {
        use crate::models::{Loss, Neuron};
        let m = TwoLayerNetModel::new(&[1.0], 1, vec![0.0], Neuron::TanhDot, Loss::Squared, false)
            .unwrap();
        let e = ParticleEnsemble::from_positions(vec![1.0], 1, 1).unwrap();
        // reference = the model itself
        let self_ref = |z: &[f64]| m.predict(&e, z);
        assert_eq!(prediction_error(&m, &e, &self_ref, &[1.0]), 0.0);
        // constant-zero reference: gap is tanh(1)^2
        let zero = |_: &[f64]| 0.0;
        let t = 1.0f64.tanh();
        assert!((prediction_error(&m, &e, &zero, &[1.0]) - t * t).abs() < 1e-12);
        let grid = [1.0, 1.0, 1.0];
        let g = mean_squared_prediction_gap(&m, &e, &zero, &grid, 1);
        assert!((g - t * t).abs() < 1e-12);
    }

    #[test]
    fn proximal_gibbs_differences_and_scaling() {
        use crate::models::LinearModel;
        let m = LinearModel::isotropic_quadratic(1, 1.0).unwrap();
        let reg = Regularizer::new(0.0).unwrap();
        let e = ParticleEnsemble::from_positions(vec![0.0], 1, 1).unwrap();
        let f = |lambda: f64, x: f64| {
            proximal_gibbs_logdensity(&m, &reg, &e, lambda, &[x]).unwrap()
        };
        // differences reproduce -(V(x1) - V(x2))
        let d1 = f(1.0, 2.0) - f(1.0, 1.0);
        assert!((d1 - -(2.0f64.powi(2) / 2.0 - 0.5)).abs() < 1e-12);
        // lambda = 2 halves differences
        let d2 = f(2.0, 2.0) - f(2.0, 1.0);
        assert!((d2 - d1 / 2.0).abs() < 1e-12);
        assert!(proximal_gibbs_logdensity(&m, &reg, &e, 0.0, &[1.0]).is_err());
    }
}
