//! Random-number substreams and the exact Gamma/Beta samplers.
//!
//! Every independent unit of work (a threshold/strategy cell, an MCMC
//! chain, a bootstrap replicate, a simulation run) draws from its own
//! ChaCha8 stream whose seed is derived from the master seed and the
//! unit's integer coordinates with [`mix_seed`]. Results therefore do not
//! depend on scheduling or thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type DcaRng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a substream seed from a master seed and a coordinate path:
/// `h0 = splitmix64(master)`, `h_{k+1} = splitmix64(h_k ^ splitmix64(path[k] + k + 1))`.
pub fn mix_seed(master: u64, path: &[u64]) -> u64 {
    path.iter().enumerate().fold(splitmix64(master), |h, (k, &x)| {
        splitmix64(h ^ splitmix64(x.wrapping_add(k as u64 + 1)))
    })
}

pub fn substream(master: u64, path: &[u64]) -> DcaRng {
    DcaRng::seed_from_u64(mix_seed(master, path))
}

/// Uniform on (0, 1].
#[inline]
pub fn open_uniform<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

/// Natural log of a Gamma(shape, 1) variate.
///
/// Marsaglia-Tsang squeeze/rejection for shape >= 1; shapes below 1 use the
/// boost `G(a) = G(a + 1) * U^(1/a)`, kept on the log scale so very small
/// shapes do not underflow.
pub fn sample_log_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64) -> f64 {
    debug_assert!(shape > 0.0);
    if shape < 1.0 {
        let u = open_uniform(rng);
        return sample_log_gamma(rng, shape + 1.0) + u.ln() / shape;
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x: f64 = rng.sample(StandardNormal);
        let v = 1.0 + c * x;
        if v <= 0.0 {
            continue;
        }
        let v = v * v * v;
        let u = open_uniform(rng);
        let x2 = x * x;
        if u < 1.0 - 0.0331 * x2 * x2 || u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
            return d.ln() + v.ln();
        }
    }
}

/// Gamma(shape, 1) variate.
pub fn sample_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64) -> f64 {
    sample_log_gamma(rng, shape).exp()
}

/// Beta(alpha, beta) variate as `X / (X + Y)` with independent Gamma variates.
pub fn sample_beta<R: Rng + ?Sized>(rng: &mut R, alpha: f64, beta: f64) -> f64 {
    let lx = sample_log_gamma(rng, alpha);
    let ly = sample_log_gamma(rng, beta);
    1.0 / (1.0 + (ly - lx).exp())
}

/// Student-t variate with `df` degrees of freedom.
pub fn sample_student_t<R: Rng + ?Sized>(rng: &mut R, df: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    let chi2 = 2.0 * sample_gamma(rng, df / 2.0);
    z / (chi2 / df).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{mean, variance};

    #[test]
    fn mix_seed_separates_coordinates() {
        let a = mix_seed(7, &[0, 1]);
        let b = mix_seed(7, &[1, 0]);
        let c = mix_seed(8, &[0, 1]);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, mix_seed(7, &[0, 1]));
        assert_ne!(mix_seed(7, &[]), mix_seed(7, &[0]));
    }

    fn check_gamma(shape: f64) {
        let mut rng = substream(11, &[shape.to_bits()]);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| sample_gamma(&mut rng, shape)).collect();
        let m = mean(&xs);
        // mean = var = shape
        let se = (shape / n as f64).sqrt();
        assert!((m - shape).abs() < 5.0 * se, "shape {shape}: mean {m}");
        let v = variance(&xs);
        assert!((v / shape - 1.0).abs() < 0.1, "shape {shape}: variance {v}");
    }

    #[test]
    fn gamma_moments() {
        for shape in [0.05, 0.5, 1.0, 2.5, 30.0] {
            check_gamma(shape);
        }
    }

    #[test]
    fn beta_moments_including_small_shapes() {
        for (a, b) in [(1.0, 1.0), (4.95, 0.05), (0.05, 4.95), (37.0, 465.0), (0.5, 9.5)] {
            let mut rng = substream(3, &[1]);
            let n = 100_000;
            let xs: Vec<f64> = (0..n).map(|_| sample_beta(&mut rng, a, b)).collect();
            assert!(xs.iter().all(|x| (0.0..=1.0).contains(x)));
            let mu = a / (a + b);
            let var = a * b / ((a + b).powi(2) * (a + b + 1.0));
            let m = mean(&xs);
            assert!((m - mu).abs() < 5.0 * (var / n as f64).sqrt(), "Beta({a},{b}) mean {m}");
            assert!((variance(&xs) / var - 1.0).abs() < 0.05, "Beta({a},{b})");
        }
    }

    #[test]
    fn near_point_mass_beta() {
        let mut rng = substream(5, &[]);
        for _ in 0..1000 {
            let x = sample_beta(&mut rng, 1e9, 1.0);
            assert!(x > 1.0 - 1e-6);
        }
    }

    #[test]
    fn student_t_median_and_tail() {
        let mut rng = substream(9, &[]);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| sample_student_t(&mut rng, 5.0)).collect();
        // P(T_5 > 2.015) = 0.05
        let tail = xs.iter().filter(|&&x| x > 2.015048).count() as f64 / n as f64;
        assert!((tail - 0.05).abs() < 0.004);
        let pos = xs.iter().filter(|&&x| x > 0.0).count() as f64 / n as f64;
        assert!((pos - 0.5).abs() < 0.006);
    }
}
