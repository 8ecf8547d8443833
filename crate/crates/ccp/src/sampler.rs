//! Seeded scenario sampling.
//!
//! Every sampler consumes a [`SeededStream`], a counter-based generator
//! addressed by `(seed, stream_id)`. Draws are bit-reproducible across runs
//! and platforms for a fixed address and draw order: normals come from a
//! Box-Muller transform with a held spare (no rejection step), so the number
//! of uniforms consumed by a draw sequence is deterministic. Parallel workers
//! get independent streams by varying `stream_id` under one seed.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::generating::GeneratingDistribution;
use crate::models::{ExponentialFamilyRates, GaussianFamily};

/// Reproducible random stream addressed by seed and stream id.
#[derive(Debug, Clone)]
pub struct SeededStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
    spare_normal: Option<f64>,
}

impl SeededStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        SeededStream {
            seed,
            stream_id,
            rng,
            spare_normal: None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform draw on [0, 1).
    pub fn next_uniform(&mut self) -> f64 {
        self.rng.gen()
    }

    /// Standard normal draw.
    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        // Box-Muller on (0, 1] x [0, 1); flipping the first uniform keeps
        // the logarithm away from zero without rejection.
        let u1 = 1.0 - self.next_uniform();
        let u2 = self.next_uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let phi = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(r * phi.sin());
        r * phi.cos()
    }

    fn next_normal_vector(&mut self, dim: usize) -> DVector<f64> {
        DVector::from_fn(dim, |_, _| self.next_normal())
    }
}

/// Draws `count` observations from `N(theta, Sigma)`, one per row.
pub fn sample_gaussian(
    theta: &DVector<f64>,
    family: &GaussianFamily,
    count: usize,
    stream: &mut SeededStream,
) -> Result<DMatrix<f64>> {
    if theta.len() != family.dim() {
        return Err(Error::DimensionMismatch {
            op: "sample_gaussian",
            expected: family.dim(),
            got: theta.len(),
        });
    }
    let dim = family.dim();
    let mut out = DMatrix::zeros(count, dim);
    for i in 0..count {
        let row = theta + family.factor() * stream.next_normal_vector(dim);
        out.row_mut(i).copy_from(&row.transpose());
    }
    Ok(out)
}

/// Uniform draw on the unit sphere surface in the given dimension.
pub fn sample_sphere_surface(dim: usize, stream: &mut SeededStream) -> Result<DVector<f64>> {
    if dim == 0 {
        return Err(Error::invalid(
            "sample_sphere_surface",
            "dimension must be positive",
        ));
    }
    loop {
        let raw = stream.next_normal_vector(dim);
        let norm = raw.norm();
        if norm > 1e-12 {
            return Ok(raw / norm);
        }
        // A numerically zero Gaussian vector cannot be normalized; redraw.
    }
}

/// Draws `count` observations from the generating distribution, one per row.
///
/// Mixture variants draw in two stages: first the perturbed center from the
/// mixing measure, then the observation around it. A blend consumes one
/// uniform per draw to pick the branch before any branch draws.
pub fn sample_generating(
    gen: &GeneratingDistribution,
    family: &GaussianFamily,
    count: usize,
    stream: &mut SeededStream,
) -> Result<DMatrix<f64>> {
    if gen.dim() != family.dim() {
        return Err(Error::DimensionMismatch {
            op: "sample_generating",
            expected: family.dim(),
            got: gen.dim(),
        });
    }
    let dim = family.dim();
    let mut out = DMatrix::zeros(count, dim);
    for i in 0..count {
        let row = draw_generating(gen, family, stream)?;
        out.row_mut(i).copy_from(&row.transpose());
    }
    Ok(out)
}

fn draw_generating(
    gen: &GeneratingDistribution,
    family: &GaussianFamily,
    stream: &mut SeededStream,
) -> Result<DVector<f64>> {
    let dim = family.dim();
    match gen {
        GeneratingDistribution::PointMass { theta } => {
            Ok(theta + family.factor() * stream.next_normal_vector(dim))
        }
        GeneratingDistribution::SphereMixture { theta, radius } => {
            let direction = sample_sphere_surface(dim, stream)?;
            let center = theta + family.factor() * direction * *radius;
            Ok(center + family.factor() * stream.next_normal_vector(dim))
        }
        GeneratingDistribution::GaussianMixture { theta, scale } => {
            let center =
                theta + family.factor() * stream.next_normal_vector(dim) * scale.sqrt();
            Ok(center + family.factor() * stream.next_normal_vector(dim))
        }
        GeneratingDistribution::Blend {
            weight,
            base,
            proposal,
        } => {
            if stream.next_uniform() < *weight {
                draw_generating(proposal, family, stream)
            } else {
                draw_generating(base, family, stream)
            }
        }
    }
}

/// Draws `count` vectors of independent exponentials by inverse CDF, one per
/// row.
pub fn sample_exponential(
    rates: &ExponentialFamilyRates,
    count: usize,
    stream: &mut SeededStream,
) -> Result<DMatrix<f64>> {
    let dim = rates.dim();
    let mut out = DMatrix::zeros(count, dim);
    for i in 0..count {
        for j in 0..dim {
            let u = stream.next_uniform();
            out[(i, j)] = -(1.0 - u).ln() / rates.rates()[j];
        }
    }
    Ok(out)
}

/// Empirical second-moment matrix `(1/m) sum xi xi^T` of `m` draws from
/// `N(theta, Sigma)`; positive semidefinite by construction.
pub fn sample_quadratic_scenario(
    theta: &DVector<f64>,
    family: &GaussianFamily,
    m: usize,
    stream: &mut SeededStream,
) -> Result<DMatrix<f64>> {
    if m == 0 {
        return Err(Error::invalid(
            "sample_quadratic_scenario",
            "draw count must be positive",
        ));
    }
    if theta.len() != family.dim() {
        return Err(Error::DimensionMismatch {
            op: "sample_quadratic_scenario",
            expected: family.dim(),
            got: theta.len(),
        });
    }
    let dim = family.dim();
    let mut acc = DMatrix::zeros(dim, dim);
    for _ in 0..m {
        let xi = theta + family.factor() * stream.next_normal_vector(dim);
        acc += &xi * xi.transpose();
    }
    Ok(acc / m as f64)
}

/// Reproducible well-conditioned covariance `A A^T + 0.1 I` with standard
/// normal `A`, drawn row by row from stream zero of the seed.
pub fn random_covariance(dim: usize, seed: u64) -> Result<GaussianFamily> {
    if dim == 0 {
        return Err(Error::invalid(
            "random_covariance",
            "dimension must be positive",
        ));
    }
    let mut stream = SeededStream::new(seed, 0);
    let mut a = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        for j in 0..dim {
            a[(i, j)] = stream.next_normal();
        }
    }
    let sigma = &a * a.transpose() + DMatrix::identity(dim, dim) * 0.1;
    GaussianFamily::new(sigma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn identity_family(dim: usize) -> GaussianFamily {
        GaussianFamily::identity(dim)
    }

    fn sample_covariance(data: &DMatrix<f64>) -> DMatrix<f64> {
        let n = data.nrows();
        let dim = data.ncols();
        let mean = data.row_mean();
        let mut acc = DMatrix::zeros(dim, dim);
        for i in 0..n {
            let centered = (data.row(i) - &mean).transpose();
            acc += &centered * centered.transpose();
        }
        acc / (n - 1) as f64
    }

    fn ks_two_sample_p(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        let (n, m) = (a.len(), b.len());
        let (mut i, mut j) = (0usize, 0usize);
        let mut d = 0.0f64;
        while i < n && j < m {
            let x = a[i].min(b[j]);
            while i < n && a[i] <= x {
                i += 1;
            }
            while j < m && b[j] <= x {
                j += 1;
            }
            d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
        }
        let ne = (n as f64 * m as f64) / (n + m) as f64;
        let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
        let mut p = 0.0;
        for k in 1..=100 {
            let kf = k as f64;
            let term = 2.0 * (-2.0 * kf * kf * lambda * lambda).exp();
            p += if k % 2 == 1 { term } else { -term };
        }
        p.clamp(0.0, 1.0)
    }

    #[test]
    fn streams_are_bit_reproducible() {
        let family = random_covariance(4, 7).unwrap();
        let theta = DVector::from_element(4, 0.3);
        let first =
            sample_gaussian(&theta, &family, 50, &mut SeededStream::new(42, 3)).unwrap();
        let second =
            sample_gaussian(&theta, &family, 50, &mut SeededStream::new(42, 3)).unwrap();
        assert_eq!(first, second);
        let other =
            sample_gaussian(&theta, &family, 50, &mut SeededStream::new(42, 4)).unwrap();
        assert_ne!(first, other);
    }

    #[test]
    fn gaussian_moments_match_the_family() {
        let family = random_covariance(3, 11).unwrap();
        let theta = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let mut stream = SeededStream::new(5, 0);
        let n = 1_000_000usize;
        let data = sample_gaussian(&theta, &family, n, &mut stream).unwrap();
        let mean = data.row_mean();
        for j in 0..3 {
            let sd = family.covariance()[(j, j)].sqrt();
            let band = 4.0 * sd / (n as f64).sqrt();
            assert!(
                (mean[j] - theta[j]).abs() < band,
                "coordinate {j}: {} vs {} (band {band})",
                mean[j],
                theta[j]
            );
        }
        let cov = sample_covariance(&data);
        let err = (&cov - family.covariance()).norm() / family.covariance().norm();
        assert!(err < 0.02, "covariance relative error {err}");
    }

    #[test]
    fn gaussian_mixture_inflates_variance() {
        let dim = 2;
        let family = identity_family(dim);
        let scale = 0.25;
        let gen =
            GeneratingDistribution::gaussian_mixture(DVector::zeros(dim), scale).unwrap();
        let mut stream = SeededStream::new(9, 1);
        let data = sample_generating(&gen, &family, 1_000_000, &mut stream).unwrap();
        let cov = sample_covariance(&data);
        assert_relative_eq!(cov[(0, 0)], 1.0 + scale, max_relative = 0.02);
        assert_relative_eq!(cov[(1, 1)], 1.0 + scale, max_relative = 0.02);
    }

    #[test]
    fn sphere_surface_draws_are_unit_norm() {
        let mut stream = SeededStream::new(3, 0);
        let dim = 5;
        let mut mean = DVector::zeros(dim);
        for _ in 0..1000 {
            let v = sample_sphere_surface(dim, &mut stream).unwrap();
            assert!((v.norm() - 1.0).abs() <= 1e-14);
            mean += v;
        }
        mean /= 1000.0;
        assert!(mean.norm() < 0.1, "directional bias {}", mean.norm());
    }

    #[test]
    fn pointmass_generating_matches_plain_gaussian() {
        let family = random_covariance(3, 2).unwrap();
        let theta = DVector::from_vec(vec![0.2, 0.4, -1.0]);
        let gen = GeneratingDistribution::point_mass(theta.clone());
        let via_generating =
            sample_generating(&gen, &family, 20, &mut SeededStream::new(8, 0)).unwrap();
        let direct = sample_gaussian(&theta, &family, 20, &mut SeededStream::new(8, 0)).unwrap();
        assert_eq!(via_generating, direct);
    }

    #[test]
    fn blend_zero_is_distributed_as_its_base() {
        let dim = 3;
        let family = identity_family(dim);
        let theta = DVector::zeros(dim);
        let base = GeneratingDistribution::point_mass(theta.clone());
        let proposal = GeneratingDistribution::sphere_mixture(theta.clone(), 2.0).unwrap();
        let blend = GeneratingDistribution::blend(0.0, base.clone(), proposal).unwrap();

        let a = sample_generating(&blend, &family, 4000, &mut SeededStream::new(17, 1)).unwrap();
        let b = sample_generating(&base, &family, 4000, &mut SeededStream::new(17, 2)).unwrap();
        let p = ks_two_sample_p(a.column(0).iter().copied().collect(),
                                b.column(0).iter().copied().collect());
        assert!(p > 0.001, "KS p-value {p}");
    }

    #[test]
    fn exponential_draws_match_their_rates() {
        let rates = ExponentialFamilyRates::new(DVector::from_vec(vec![1.0, 4.0])).unwrap();
        let mut stream = SeededStream::new(21, 0);
        let n = 200_000usize;
        let data = sample_exponential(&rates, n, &mut stream).unwrap();
        assert!(data.iter().all(|&x| x >= 0.0));
        let mean = data.row_mean();
        for j in 0..2 {
            let target = 1.0 / rates.rates()[j];
            let band = 4.0 * target / (n as f64).sqrt();
            assert!((mean[j] - target).abs() < band, "rate {j}: mean {}", mean[j]);
        }
    }

    #[test]
    fn quadratic_scenario_concentrates_on_second_moment() {
        let family = random_covariance(3, 13).unwrap();
        let theta = DVector::from_vec(vec![0.5, -0.25, 1.0]);
        let mut stream = SeededStream::new(29, 0);
        let xi = sample_quadratic_scenario(&theta, &family, 50_000, &mut stream).unwrap();
        assert!((&xi - xi.transpose()).norm() < 1e-12);
        let eigen = xi.clone().symmetric_eigen();
        assert!(eigen.eigenvalues.iter().all(|&l| l > -1e-10));
        let target = family.covariance() + &theta * theta.transpose();
        let err = (&xi - &target).norm() / target.norm();
        assert!(err < 0.05, "second moment relative error {err}");
    }

    #[test]
    fn random_covariance_is_deterministic_and_positive() {
        let a = random_covariance(6, 5).unwrap();
        let b = random_covariance(6, 5).unwrap();
        assert_eq!(a.covariance(), b.covariance());
        let c = random_covariance(6, 6).unwrap();
        assert_ne!(a.covariance(), c.covariance());
        for j in 0..6 {
            assert!(a.covariance()[(j, j)] >= 0.1);
        }
    }

    #[test]
    fn input_validation() {
        let family = identity_family(3);
        let theta = DVector::zeros(2);
        let mut stream = SeededStream::new(0, 0);
        assert!(sample_gaussian(&theta, &family, 5, &mut stream).is_err());
        assert!(sample_sphere_surface(0, &mut stream).is_err());
        assert!(sample_quadratic_scenario(&DVector::zeros(3), &family, 0, &mut stream).is_err());
        assert!(random_covariance(0, 1).is_err());
    }
}
