//! Seeded samplers shared by the simulations and the verification suites.
//!
//! Every stream is a ChaCha8 generator keyed by `(seed, stream)`, so
//! independent parts of an experiment draw from disjoint streams no matter
//! in which order they run.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::stats::DataMatrix;

pub type SeededRng = ChaCha8Rng;

/// Generator for stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> SeededRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform on the open interval (0, 1).
pub fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Logistic variate with location 0 and scale `s` (variance `π²s²/3`).
pub fn logistic<R: Rng + ?Sized>(rng: &mut R, scale: f64) -> f64 {
    let u = open_unit(rng);
    scale * (u / (1.0 - u)).ln()
}

/// Logistic scale whose variance equals `variance`.
pub fn logistic_scale_for_variance(variance: f64) -> f64 {
    (3.0 * variance).sqrt() / std::f64::consts::PI
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// `n` points from the standard normal in `d` dimensions.
pub fn gaussian_points<R: Rng + ?Sized>(rng: &mut R, n: usize, d: usize) -> DataMatrix {
    let values = (0..n * d).map(|_| standard_normal(rng)).collect();
    DataMatrix::new(n, d, values).expect("finite samples")
}

/// `n` points with independent standard logistic coordinates.
pub fn logistic_points<R: Rng + ?Sized>(rng: &mut R, n: usize, d: usize) -> DataMatrix {
    let values = (0..n * d).map(|_| logistic(rng, 1.0)).collect();
    DataMatrix::new(n, d, values).expect("finite samples")
}

/// A point uniform in the `d`-ball of the given radius.
pub fn uniform_ball_point<R: Rng + ?Sized>(rng: &mut R, d: usize, radius: f64) -> Vec<f64> {
    loop {
        let dir: Vec<f64> = (0..d).map(|_| standard_normal(rng)).collect();
        let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let r = radius * open_unit(rng).powf(1.0 / d as f64);
        return dir.into_iter().map(|x| x / norm * r).collect();
    }
}

pub fn uniform_ball_points<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    d: usize,
    radius: f64,
) -> DataMatrix {
    let mut values = Vec::with_capacity(n * d);
    for _ in 0..n {
        values.extend(uniform_ball_point(rng, d, radius));
    }
    DataMatrix::new(n, d, values).expect("finite samples")
}

/// Haar-distributed orthogonal matrix (QR of a Gaussian matrix with the
/// sign of R's diagonal folded into Q).
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R, d: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| standard_normal(rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            for i in 0..d {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    q
}

/// A random well-conditioned linear map: rotation times axis scales in
/// `[0.5, 2]`.
pub fn random_linear_map<R: Rng + ?Sized>(rng: &mut R, d: usize) -> DMatrix<f64> {
    let rot = random_rotation(rng, d);
    let scales: Vec<f64> = (0..d).map(|_| rng.random_range(0.5..2.0)).collect();
    let mut m = rot;
    for j in 0..d {
        for i in 0..d {
            m[(i, j)] *= scales[j];
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::sample_moments;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map(|_| stream_rng(3, 1).random()).collect();
        let b: Vec<u64> = (0..4).map(|_| stream_rng(3, 1).random()).collect();
        assert_eq!(a, b);
        let x: u64 = stream_rng(3, 1).random();
        let y: u64 = stream_rng(3, 2).random();
        let z: u64 = stream_rng(4, 1).random();
        assert_ne!(x, y);
        assert_ne!(x, z);
    }

    #[test]
    fn logistic_scale_matches_variance() {
        let pi2 = std::f64::consts::PI.powi(2);
        assert!((logistic_scale_for_variance(12.0 * pi2) - 6.0).abs() < 1e-12);
        assert!((logistic_scale_for_variance(pi2 / 3.0) - 1.0).abs() < 1e-12);
        assert!((logistic_scale_for_variance(48.0 * pi2) - 12.0).abs() < 1e-12);
    }

    #[test]
    fn rotation_is_orthogonal() {
        let mut rng = stream_rng(9, 0);
        let q = random_rotation(&mut rng, 4);
        let eye = q.transpose() * &q;
        assert!((eye - DMatrix::<f64>::identity(4, 4)).amax() < 1e-12);
    }

    #[test]
    fn ball_points_stay_inside() {
        let mut rng = stream_rng(1, 0);
        let pts = uniform_ball_points(&mut rng, 1000, 3, 2.0);
        assert!(pts
            .rows()
            .all(|p| p.iter().map(|x| x * x).sum::<f64>() <= 4.0));
        let m = sample_moments(&pts).unwrap();
        assert!(m.mean.amax() < 0.2);
    }
}
