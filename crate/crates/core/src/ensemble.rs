//! Particle state and the deterministic noise source.
//!
//! The ensemble is a flat row-major N×d matrix (particle i = row i). Noise is
//! counter-based: every Gaussian draw is a pure function of
//! (seed, stream, step, particle, coordinate), so trajectories are
//! bit-identical regardless of thread count or iteration order.

use crate::error::{MfldError, Result};

/// Logical randomness streams. Keeping streams separate means e.g. switching
/// the gradient estimator never perturbs the Langevin noise sequence, which
/// enables coupled A/B comparisons at a fixed seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    /// Initial particle positions.
    Init,
    /// Langevin update noise xi_k^i.
    Langevin,
    /// Mini-batch index draws.
    Batch,
    /// Variance probes and assumption-check sampling.
    Probe,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Init => 0x11,
            Stream::Langevin => 0x22,
            Stream::Batch => 0x33,
            Stream::Probe => 0x44,
        }
    }
}

#[inline(always)]
fn mix64(mut z: u64) -> u64 {
    // splitmix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Counter-based random source: a pure function of (seed, stream, counters).
///
/// No mutable state. Distinct counter tuples give statistically independent
/// outputs; identical tuples give bit-identical outputs on every platform.
#[derive(Debug, Clone, Copy)]
pub struct NoiseSource {
    seed: u64,
    stream: Stream,
}

impl NoiseSource {
    pub fn new(seed: u64, stream: Stream) -> Self {
        NoiseSource { seed, stream }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Raw 64-bit word for counter tuple (k, i, j).
    #[inline]
    pub fn word(&self, k: u64, i: u64, j: u64) -> u64 {
        let mut h = mix64(self.seed ^ 0x9e3779b97f4a7c15);
        h = mix64(h ^ self.stream.tag());
        h = mix64(h ^ k);
        h = mix64(h ^ i);
        h = mix64(h ^ j);
        mix64(h)
    }

    /// Uniform in the open interval (0, 1).
    #[inline]
    pub fn uniform_open(&self, k: u64, i: u64, j: u64) -> f64 {
        // 53 mantissa bits, shifted off zero so ln() stays finite.
        ((self.word(k, i, j) >> 11) as f64 + 0.5) * (1.0 / 9007199254740992.0)
    }

    /// Uniform integer in [0, n). n up to ~2^53; modulo bias is negligible
    /// at the batch sizes used here.
    #[inline]
    pub fn uniform_index(&self, k: u64, i: u64, j: u64, n: usize) -> usize {
        debug_assert!(n > 0);
        (self.word(k, i, j) % n as u64) as usize
    }

    /// One standard normal draw for coordinate `j` of particle `i` at step `k`
    /// (Box–Muller on two counter words).
    #[inline]
    pub fn standard_normal(&self, k: u64, i: u64, j: u64) -> f64 {
        let u1 = self.uniform_open(k, i, 2 * j);
        let u2 = self.uniform_open(k, i, 2 * j + 1);
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

/// d independent standard Gaussians for particle `i` at step `k`.
pub fn gaussian_noise(source: &NoiseSource, k: u64, i: u64, d: usize) -> Vec<f64> {
    (0..d).map(|j| source.standard_normal(k, i, j as u64)).collect()
}

/// How to place the initial particles.
#[derive(Debug, Clone)]
pub enum InitSpec {
    /// i.i.d. isotropic Gaussian, every coordinate mean + std * N(0,1).
    Gaussian { mean: f64, std: f64 },
    /// Exact positions, row-major N×d.
    PointCloud { positions: Vec<f64>, dim: usize },
}

/// The particle state X_k = (X_k^i)_{i=1..N}: row-major N×d positions plus
/// the step counter. Mutation happens only through whole-state replacement
/// between steps; reads are safe from any thread.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    positions: Vec<f64>,
    n_particles: usize,
    dim: usize,
    step: usize,
}

impl ParticleEnsemble {
    pub fn from_positions(positions: Vec<f64>, n_particles: usize, dim: usize) -> Result<Self> {
        if n_particles == 0 || dim == 0 {
            return Err(MfldError::InvalidArgument(format!(
                "ensemble needs N >= 1 and d >= 1, got N={n_particles}, d={dim}"
            )));
        }
        if positions.len() != n_particles * dim {
            return Err(MfldError::DimensionMismatch(format!(
                "expected {} values ({}x{}), got {}",
                n_particles * dim,
                n_particles,
                dim,
                positions.len()
            )));
        }
        let e = ParticleEnsemble { positions, n_particles, dim, step: 0 };
        e.ensure_finite(0)?;
        Ok(e)
    }

    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn set_step(&mut self, step: usize) {
        self.step = step;
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.positions.chunks_exact(self.dim)
    }

    /// Replace the whole position matrix, advancing the step counter.
    /// Positions are validated; a NaN/Inf anywhere aborts with the offending
    /// particle index.
    pub fn advanced(&self, positions: Vec<f64>) -> Result<Self> {
        debug_assert_eq!(positions.len(), self.positions.len());
        let next = ParticleEnsemble {
            positions,
            n_particles: self.n_particles,
            dim: self.dim,
            step: self.step + 1,
        };
        next.ensure_finite(next.step)?;
        Ok(next)
    }

    fn ensure_finite(&self, step: usize) -> Result<()> {
        for (idx, v) in self.positions.iter().enumerate() {
            if !v.is_finite() {
                return Err(MfldError::NonFinite {
                    step,
                    particle: idx / self.dim,
                    context: Some("particle position".to_string()),
                });
            }
        }
        Ok(())
    }
}

/// Build the initial ensemble (step 0). Gaussian init draws from the `Init`
/// stream at k=0 so the Langevin stream is untouched.
pub fn init_ensemble(n: usize, d: usize, init: &InitSpec, seed: u64) -> Result<ParticleEnsemble> {
    if n == 0 || d == 0 {
        return Err(MfldError::InvalidArgument(format!(
            "init_ensemble needs N >= 1 and d >= 1, got N={n}, d={d}"
        )));
    }
    let positions = match init {
        InitSpec::Gaussian { mean, std } => {
            if *std < 0.0 {
                return Err(MfldError::InvalidArgument(format!(
                    "gaussian init needs std >= 0, got {std}"
                )));
            }
            let source = NoiseSource::new(seed, Stream::Init);
            let mut out = vec![0.0; n * d];
            for i in 0..n {
                for j in 0..d {
                    out[i * d + j] = mean + std * source.standard_normal(0, i as u64, j as u64);
                }
            }
            out
        }
        InitSpec::PointCloud { positions, dim } => {
            if *dim != d || positions.len() != n * d {
                return Err(MfldError::DimensionMismatch(format!(
                    "point cloud is {}x{}, requested {}x{}",
                    if *dim > 0 { positions.len() / dim } else { 0 },
                    dim,
                    n,
                    d
                )));
            }
            positions.clone()
        }
    };
    ParticleEnsemble::from_positions(positions, n, d)
}

/// (1/N) sum_i ||X^i||^2. Zero iff all particles sit at the origin.
pub fn second_moment(e: &ParticleEnsemble) -> f64 {
    let mut acc = 0.0;
    for row in e.rows() {
        acc += row.iter().map(|v| v * v).sum::<f64>();
    }
    acc / e.n_particles() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_variance_init_is_deterministic_point() {
        let e = init_ensemble(1, 1, &InitSpec::Gaussian { mean: 0.0, std: 0.0 }, 12345).unwrap();
        assert_eq!(e.positions(), &[0.0]);
        assert_eq!(e.step(), 0);
    }

    #[test]
    fn point_cloud_passthrough() {
        let m = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let e = init_ensemble(2, 3, &InitSpec::PointCloud { positions: m.clone(), dim: 3 }, 7)
            .unwrap();
        assert_eq!(e.positions(), m.as_slice());
    }

    #[test]
    fn point_cloud_shape_mismatch_rejected() {
        let m = vec![1.0, 2.0, 3.0];
        assert!(init_ensemble(2, 3, &InitSpec::PointCloud { positions: m, dim: 3 }, 7).is_err());
    }

    #[test]
    fn zero_sized_ensemble_rejected() {
        let init = InitSpec::Gaussian { mean: 0.0, std: 1.0 };
        assert!(init_ensemble(0, 1, &init, 1).is_err());
        assert!(init_ensemble(1, 0, &init, 1).is_err());
    }

    #[test]
    fn gaussian_init_moments_match_standard_normal() {
        // CLT tolerance: se(mean) = 1/sqrt(1e4) = 0.01, se(var) ~ 0.014;
        // 0.05 is > 3 standard errors for both.
        let n = 10_000;
        let e = init_ensemble(n, 1, &InitSpec::Gaussian { mean: 0.0, std: 1.0 }, 7).unwrap();
        let mean = e.positions().iter().sum::<f64>() / n as f64;
        let var = e.positions().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.05, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn noise_is_repeatable_and_streams_separate() {
        let s = NoiseSource::new(99, Stream::Langevin);
        let a = gaussian_noise(&s, 3, 5, 8);
        let b = gaussian_noise(&s, 3, 5, 8);
        assert_eq!(a, b);
        let c = gaussian_noise(&s, 3, 6, 8);
        assert_ne!(a, c);
        let d = gaussian_noise(&NoiseSource::new(99, Stream::Batch), 3, 5, 8);
        assert_ne!(a, d);
    }

    #[test]
    fn noise_moments_within_three_standard_errors() {
        let s = NoiseSource::new(2024, Stream::Langevin);
        let n = 1_000_000u64;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for t in 0..n {
            let z = s.standard_normal(t / 1000, t % 1000, 0);
            sum += z;
            sumsq += z * z;
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        // 3/sqrt(1e6) = 0.003; 3*sqrt(2/1e6) = 0.00424
        assert!(mean.abs() < 0.003, "mean {mean}");
        assert!((var - 1.0).abs() < 0.005, "var {var}");
    }

    #[test]
    fn gaussian_chi_squared_16_equiprobable_bins() {
        // Bin edges are the standard normal 16-quantiles, so each bin has
        // probability 1/16. Threshold 60.0 sits above the 1 - 1e-6 quantile
        // of chi^2 with 15 dof (~57.5 by Wilson-Hilferty).
        const EDGES: [f64; 15] = [
            -1.5341205443525459,
            -1.1503493803760079,
            -0.8871465590188758,
            -0.6744897501960817,
            -0.4887764111146694,
            -0.3186393639643751,
            -0.1573106846101707,
            0.0,
            0.1573106846101707,
            0.3186393639643751,
            0.4887764111146694,
            0.6744897501960817,
            0.8871465590188758,
            1.1503493803760079,
            1.5341205443525459,
        ];
        let s = NoiseSource::new(5, Stream::Probe);
        let n = 1_000_000u64;
        let mut counts = [0u64; 16];
        for t in 0..n {
            let z = s.standard_normal(t / 100, t % 100, 1);
            let bin = EDGES.partition_point(|e| *e < z);
            counts[bin] += 1;
        }
        let expected = n as f64 / 16.0;
        let chi2: f64 = counts.iter().map(|&c| {
            let d = c as f64 - expected;
            d * d / expected
        }).sum();
        assert!(chi2 < 60.0, "chi2 {chi2}, counts {counts:?}");
    }

    #[test]
    fn second_moment_hand_values() {
        let e = ParticleEnsemble::from_positions(vec![3.0, 4.0], 1, 2).unwrap();
        assert_eq!(second_moment(&e), 25.0);
        let e = ParticleEnsemble::from_positions(vec![1.0, 2.0, 3.0], 3, 1).unwrap();
        assert!((second_moment(&e) - 14.0 / 3.0).abs() < 1e-15);
        let e = ParticleEnsemble::from_positions(vec![0.0; 6], 3, 2).unwrap();
        assert_eq!(second_moment(&e), 0.0);
    }

    #[test]
    fn non_finite_positions_rejected_with_particle_index() {
        let err = ParticleEnsemble::from_positions(vec![0.0, 1.0, f64::NAN, 2.0], 2, 2)
            .unwrap_err();
        match err {
            MfldError::NonFinite { particle, .. } => assert_eq!(particle, 1),
            other => panic!("unexpected error {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn second_moment_permutation_invariant(
            rows in proptest::collection::vec(
                proptest::collection::vec(-10.0f64..10.0, 3), 1..12),
            perm_seed in 0u64..1000,
        ) {
            let n = rows.len();
            let flat: Vec<f64> = rows.iter().flatten().copied().collect();
            let e = ParticleEnsemble::from_positions(flat, n, 3).unwrap();

            // Fisher-Yates with a fixed little generator
            let mut order: Vec<usize> = (0..n).collect();
            let src = NoiseSource::new(perm_seed, Stream::Probe);
            for t in 0..n {
                let j = t + src.uniform_index(0, t as u64, 0, n - t);
                order.swap(t, j);
            }
            let permuted: Vec<f64> = order.iter().flat_map(|&i| rows[i].clone()).collect();
            let ep = ParticleEnsemble::from_positions(permuted, n, 3).unwrap();
            let a = second_moment(&e);
            let b = second_moment(&ep);
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }
}
