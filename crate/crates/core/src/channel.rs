//! UPA array responses, per-UT statistical CSI and Rician channel draws.
//!
//! After Doppler/delay compensation the channel of UT `k` is the rank-one
//! matrix `H_k = d_k g_k^H`. The satellite-side response `g_k` is
//! deterministic; the UT-side vector `d_k` is Rician:
//!
//! ```text
//! d_k = sqrt(kappa beta / (kappa + 1)) d_k0 + sqrt(beta / (kappa + 1)) Sigma^{1/2} w,
//! w ~ CN(0, I)
//! ```

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::SpaceAnglePair;
use crate::linalg::{hermitian_psd_sqrt, CMatrix, CVector};

/// Tolerance on unit-norm / unit-trace invariants of the statistics.
const NORM_TOL: f64 = 1e-9;
/// PSD tolerance for the scattering covariance.
const PSD_TOL: f64 = 1e-10;

/// Rectangular array of `nx x ny` elements with spacings given in wavelengths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpaGeometry {
    pub nx: usize,
    pub ny: usize,
    pub spacing_x_wl: f64,
    pub spacing_y_wl: f64,
}

impl UpaGeometry {
    pub fn new(nx: usize, ny: usize, spacing_x_wl: f64, spacing_y_wl: f64) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::Argument(format!(
                "array dimensions must be positive, got {nx} x {ny}"
            )));
        }
        if !(spacing_x_wl > 0.0 && spacing_y_wl > 0.0) {
            return Err(Error::Argument("antenna spacings must be positive".into()));
        }
        Ok(Self {
            nx,
            ny,
            spacing_x_wl,
            spacing_y_wl,
        })
    }

    /// One-wavelength spacing along both axes.
    pub fn wavelength_spaced(nx: usize, ny: usize) -> Result<Self> {
        Self::new(nx, ny, 1.0, 1.0)
    }

    pub fn num_elements(&self) -> usize {
        self.nx * self.ny
    }
}

/// ULA response `(1/sqrt(n)) exp(-j 2 pi spacing i phase_arg)`, `i = 0..n`.
pub fn ula_response(n: usize, spacing_wl: f64, phase_arg: f64) -> CVector {
    let amp = 1.0 / (n as f64).sqrt();
    CVector::from_iterator(
        n,
        (0..n).map(|i| {
            Complex64::from_polar(
                amp,
                -2.0 * std::f64::consts::PI * spacing_wl * i as f64 * phase_arg,
            )
        }),
    )
}

/// UPA response `a_nx(theta_x) (x) a_ny(theta_y)` in space-angle coordinates.
pub fn upa_response(geom: &UpaGeometry, p: SpaceAnglePair) -> CVector {
    let ax = ula_response(geom.nx, geom.spacing_x_wl, p.theta_x);
    let ay = ula_response(geom.ny, geom.spacing_y_wl, p.theta_y);
    ax.kronecker(&ay)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum SigmaModel {
    /// `I / N`.
    #[default]
    Uniform,
    /// Entries `rho^{|i-j|}`, normalized to unit trace.
    ExpCorr(f64),
}

pub fn build_sigma(model: SigmaModel, n: usize) -> Result<CMatrix> {
    if n == 0 {
        return Err(Error::Argument("covariance dimension must be positive".into()));
    }
    let inv_n = 1.0 / n as f64;
    match model {
        SigmaModel::Uniform => Ok(CMatrix::from_diagonal_element(
            n,
            n,
            Complex64::new(inv_n, 0.0),
        )),
        SigmaModel::ExpCorr(rho) => {
            if !(0.0..1.0).contains(&rho) {
                return Err(Error::Argument(format!(
                    "correlation coefficient must lie in [0, 1), got {rho}"
                )));
            }
            Ok(CMatrix::from_fn(n, n, |i, j| {
                let lag = i.abs_diff(j) as i32;
                Complex64::new(rho.powi(lag) * inv_n, 0.0)
            }))
        }
    }
}

/// The statistical CSI the upper-bound designs need: `beta_k`, `g_k`, `sigma_k^2`.
pub trait DesignCsi {
    fn beta(&self) -> f64;
    fn g(&self) -> &CVector;
    fn sigma2(&self) -> f64;
}

/// Per-UT statistical CSI. Immutable once built; the Hermitian square root of
/// the scattering covariance is computed at construction.
#[derive(Debug, Clone)]
pub struct UtChannelStats {
    beta: f64,
    kappa: f64,
    g: CVector,
    d0: CVector,
    sigma_cov: CMatrix,
    sigma_sqrt: CMatrix,
    sigma2: f64,
}

impl UtChannelStats {
    pub fn new(
        beta: f64,
        kappa: f64,
        g: CVector,
        d0: CVector,
        sigma_cov: CMatrix,
        sigma2: f64,
    ) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::Data(format!("beta must be positive, got {beta}")));
        }
        if !(kappa >= 0.0 && kappa.is_finite()) {
            return Err(Error::Data(format!(
                "Rician factor must be finite and nonnegative, got {kappa}"
            )));
        }
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::Data(format!(
                "noise power must be positive, got {sigma2}"
            )));
        }
        if (g.norm() - 1.0).abs() > NORM_TOL {
            return Err(Error::Data(format!("||g|| = {} is not 1", g.norm())));
        }
        if (d0.norm() - 1.0).abs() > NORM_TOL {
            return Err(Error::Data(format!("||d0|| = {} is not 1", d0.norm())));
        }
        let n = d0.len();
        if sigma_cov.nrows() != n || sigma_cov.ncols() != n {
            return Err(Error::Data(format!(
                "covariance is {}x{}, expected {n}x{n}",
                sigma_cov.nrows(),
                sigma_cov.ncols()
            )));
        }
        let tr = sigma_cov.trace();
        if (tr.re - 1.0).abs() > NORM_TOL || tr.im.abs() > NORM_TOL {
            return Err(Error::Data(format!("trace of covariance is {tr}, not 1")));
        }
        let sigma_sqrt = hermitian_psd_sqrt(&sigma_cov, PSD_TOL)?;
        Ok(Self {
            beta,
            kappa,
            g,
            d0,
            sigma_cov,
            sigma_sqrt,
            sigma2,
        })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn d0(&self) -> &CVector {
        &self.d0
    }

    pub fn sigma_cov(&self) -> &CMatrix {
        &self.sigma_cov
    }

    pub fn sigma_sqrt(&self) -> &CMatrix {
        &self.sigma_sqrt
    }

    pub fn num_antennas(&self) -> usize {
        self.g.len()
    }

    pub fn num_rx_antennas(&self) -> usize {
        self.d0.len()
    }

    /// Average power of the line-of-sight component, `kappa beta / (kappa + 1)`.
    pub fn los_power(&self) -> f64 {
        self.kappa * self.beta / (self.kappa + 1.0)
    }

    /// Average power of the scattered component, `beta / (kappa + 1)`.
    pub fn scatter_power(&self) -> f64 {
        self.beta / (self.kappa + 1.0)
    }

    /// One channel draw `d` from the given normal source.
    fn draw<R: rand::Rng>(&self, rng: &mut R) -> CVector {
        let n = self.d0.len();
        let half = std::f64::consts::FRAC_1_SQRT_2;
        let w = CVector::from_iterator(
            n,
            (0..n).map(|_| {
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                Complex64::new(re * half, im * half)
            }),
        );
        let los = self.los_power().sqrt();
        let scat = self.scatter_power().sqrt();
        let mut d = &self.sigma_sqrt * w;
        d.iter_mut()
            .zip(self.d0.iter())
            .for_each(|(x, l)| *x = *x * scat + *l * los);
        d
    }
}

impl DesignCsi for UtChannelStats {
    fn beta(&self) -> f64 {
        self.beta
    }

    fn g(&self) -> &CVector {
        &self.g
    }

    fn sigma2(&self) -> f64 {
        self.sigma2
    }
}

/// Monte-Carlo realizations of the UT-side vectors `d_k`, stored sample-major.
#[derive(Debug, Clone)]
pub struct ChannelBatch {
    draws: Vec<CVector>,
    gains: Vec<f64>,
    num_samples: usize,
    num_uts: usize,
    seed: u64,
}

impl ChannelBatch {
    /// Builds a batch from explicit draws, `draws[s][k]`.
    pub fn from_draws(draws: Vec<Vec<CVector>>, seed: u64) -> Result<Self> {
        let num_samples = draws.len();
        let num_uts = draws.first().map_or(0, |row| row.len());
        if draws.iter().any(|row| row.len() != num_uts) {
            return Err(Error::Argument("ragged channel batch".into()));
        }
        let flat: Vec<CVector> = draws.into_iter().flatten().collect();
        let gains = flat.iter().map(|d| d.norm_squared()).collect();
        Ok(Self {
            draws: flat,
            gains,
            num_samples,
            num_uts,
            seed,
        })
    }

    pub fn num_samples(&self) -> usize {
        self.num_samples
    }

    pub fn num_uts(&self) -> usize {
        self.num_uts
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn draw(&self, s: usize, k: usize) -> &CVector {
        &self.draws[s * self.num_uts + k]
    }

    /// `||d_k||^2` of sample `s`.
    pub fn gain(&self, s: usize, k: usize) -> f64 {
        self.gains[s * self.num_uts + k]
    }

    /// `||d||^2` of every UT in sample `s`.
    pub fn sample_gains(&self, s: usize) -> &[f64] {
        &self.gains[s * self.num_uts..(s + 1) * self.num_uts]
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent generator for the stream identified by `seed` and `tags`.
///
/// Streams depend only on their labels, never on the order in which they are
/// requested, so parallel consumers reproduce the sequential results.
pub fn substream(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    let mut h = splitmix64(seed);
    for &t in tags {
        h = splitmix64(h ^ splitmix64(t.wrapping_add(0x632B_E59B_D9B4_E019)));
    }
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        h = splitmix64(h);
        chunk.copy_from_slice(&h.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Draws `s` i.i.d. realizations of every UT's `d_k`.
///
/// Sample `(s, k)` comes from its own substream of `seed`, so the batch is
/// identical for any number of worker threads. The statistics were already
/// validated (including PSD-ness of `Sigma`) when they were constructed.
pub fn sample_channel(stats: &[UtChannelStats], s: usize, seed: u64) -> Result<ChannelBatch> {
    if s == 0 {
        return Err(Error::Argument("sample count must be positive".into()));
    }
    if stats.is_empty() {
        return Err(Error::Argument("no UTs".into()));
    }
    let draws: Vec<Vec<CVector>> = (0..s)
        .into_par_iter()
        .map(|si| {
            stats
                .iter()
                .enumerate()
                .map(|(k, st)| st.draw(&mut substream(seed, &[si as u64, k as u64])))
                .collect()
        })
        .collect();
    ChannelBatch::from_draws(draws, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn stats_for(kappa: f64, beta: f64, n: usize, model: SigmaModel) -> UtChannelStats {
        let g = upa_response(
            &UpaGeometry::wavelength_spaced(2, 2).unwrap(),
            SpaceAnglePair::new(0.1, -0.2).unwrap(),
        );
        let d0 = ula_response(n, 0.5, 0.3);
        UtChannelStats::new(beta, kappa, g, d0, build_sigma(model, n).unwrap(), 1e-2).unwrap()
    }

    #[test]
    fn ula_examples() {
        let v = ula_response(1, 1.0, 0.37);
        assert_eq!(v.len(), 1);
        assert!((v[0] - c(1.0, 0.0)).norm() < 1e-15);

        let v = ula_response(4, 1.0, 0.0);
        assert!(v.iter().all(|x| (x - c(0.5, 0.0)).norm() < 1e-15));

        let v = ula_response(2, 1.0, 0.5);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((v[0] - c(r, 0.0)).norm() < 1e-15);
        assert!((v[1] - c(-r, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn upa_examples() {
        let one = UpaGeometry::wavelength_spaced(1, 1).unwrap();
        let v = upa_response(&one, SpaceAnglePair::new(0.3, 0.2).unwrap());
        assert!((v[0] - c(1.0, 0.0)).norm() < 1e-15);

        let two = UpaGeometry::wavelength_spaced(2, 2).unwrap();
        let v = upa_response(&two, SpaceAnglePair::new(0.0, 0.0).unwrap());
        assert!(v.iter().all(|x| (x - c(0.5, 0.0)).norm() < 1e-15));

        let geom = UpaGeometry::wavelength_spaced(8, 8).unwrap();
        let mut rng = substream(5, &[]);
        for _ in 0..100 {
            let p = SpaceAnglePair::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5))
                .unwrap();
            assert!((upa_response(&geom, p).norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn upa_is_kronecker_of_ulas() {
        let geom = UpaGeometry::new(3, 2, 0.5, 1.0).unwrap();
        let p = SpaceAnglePair::new(0.21, -0.4).unwrap();
        let v = upa_response(&geom, p);
        let ax = ula_response(3, 0.5, 0.21);
        let ay = ula_response(2, 1.0, -0.4);
        for i in 0..3 {
            for j in 0..2 {
                assert!((v[i * 2 + j] - ax[i] * ay[j]).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn sigma_examples() {
        let u = build_sigma(SigmaModel::Uniform, 4).unwrap();
        assert_eq!(u, CMatrix::from_diagonal_element(4, 4, c(0.25, 0.0)));

        let e0 = build_sigma(SigmaModel::ExpCorr(0.0), 3).unwrap();
        assert!((e0 - CMatrix::from_diagonal_element(3, 3, c(1.0 / 3.0, 0.0))).norm() < 1e-15);

        let e = build_sigma(SigmaModel::ExpCorr(0.5), 2).unwrap();
        let want = CMatrix::from_row_slice(2, 2, &[c(0.5, 0.0), c(0.25, 0.0), c(0.25, 0.0), c(0.5, 0.0)]);
        assert!((e.clone() - want).norm() < 1e-15);
        assert_abs_diff_eq!(e.trace().re, 1.0, epsilon = 1e-15);

        assert!(matches!(
            build_sigma(SigmaModel::ExpCorr(1.0), 2),
            Err(Error::Argument(_))
        ));
        assert!(matches!(
            build_sigma(SigmaModel::ExpCorr(-0.1), 2),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn stats_reject_non_psd_covariance() {
        let g = ula_response(2, 1.0, 0.1);
        let d0 = ula_response(2, 1.0, 0.2);
        let bad = CMatrix::from_row_slice(2, 2, &[c(0.5, 0.0), c(0.9, 0.0), c(0.9, 0.0), c(0.5, 0.0)]);
        assert!(matches!(
            UtChannelStats::new(1.0, 1.0, g, d0, bad, 1.0),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn los_limit_draws_are_deterministic_part() {
        let st = stats_for(1e12, 2.5, 4, SigmaModel::Uniform);
        let batch = sample_channel(std::slice::from_ref(&st), 50, 9).unwrap();
        let want = st.d0() * Complex64::new(2.5f64.sqrt(), 0.0);
        for s in 0..50 {
            let d = batch.draw(s, 0);
            assert!((d - &want).norm() / want.norm() < 1e-4);
        }
    }

    #[test]
    fn average_power_matches_beta() {
        let beta = 3.0;
        let st = stats_for(1.0, beta, 4, SigmaModel::ExpCorr(0.6));
        let s = 100_000;
        let batch = sample_channel(std::slice::from_ref(&st), s, 21).unwrap();
        let gains: Vec<f64> = (0..s).map(|i| batch.gain(i, 0)).collect();
        let (mean, se) = crate::linalg::mean_and_stderr(&gains);
        assert!((mean / beta - 1.0).abs() < 0.01, "mean {mean}");
        assert!((mean - beta).abs() < 3.0 * se);
    }

    #[test]
    fn sample_mean_is_los_component() {
        let st = stats_for(1.0, 2.0, 3, SigmaModel::Uniform);
        let s = 40_000;
        let batch = sample_channel(std::slice::from_ref(&st), s, 77).unwrap();
        let los = st.d0() * Complex64::new(st.los_power().sqrt(), 0.0);
        // Each real/imag coordinate of the scattering part has variance
        // scatter_power * Sigma_ii / 2.
        let coord_sd = (st.scatter_power() / 3.0 / 2.0).sqrt() / (s as f64).sqrt();
        for i in 0..3 {
            let mean: Complex64 = (0..s).map(|j| batch.draw(j, 0)[i]).sum::<Complex64>() / s as f64;
            assert!((mean.re - los[i].re).abs() < 3.0 * coord_sd);
            assert!((mean.im - los[i].im).abs() < 3.0 * coord_sd);
        }
    }

    #[test]
    fn batches_identical_across_thread_counts() {
        let stats = vec![
            stats_for(1.0, 1.0, 4, SigmaModel::Uniform),
            stats_for(10.0, 2.0, 4, SigmaModel::ExpCorr(0.3)),
        ];
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| sample_channel(&stats, 64, 1234).unwrap());
        let b = four.install(|| sample_channel(&stats, 64, 1234).unwrap());
        for s in 0..64 {
            for k in 0..2 {
                assert_eq!(a.draw(s, k), b.draw(s, k));
            }
        }
        let c2 = sample_channel(&stats, 64, 1235).unwrap();
        assert_ne!(a.draw(0, 0), c2.draw(0, 0));
    }
}
