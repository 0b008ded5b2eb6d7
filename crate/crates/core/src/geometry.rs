//! Satellite/UT geometry and link budget.
//!
//! UT placement is described by space-angle pairs (direction cosines seen from
//! the satellite). From a pair we recover the nadir angle, the earth central
//! angle and slant distance, and then the free-space average channel power
//! and thermal noise power of the link.

use rand::Rng;

use crate::error::{Error, Result};
use crate::units::{db_to_linear, BOLTZMANN, SPEED_OF_LIGHT};

/// Slack on `theta_x^2 + theta_y^2 <= 1` to absorb rounding in the squares.
const UNIT_DISK_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrbitConfig {
    pub earth_radius_km: f64,
    pub altitude_km: f64,
}

impl OrbitConfig {
    pub fn new(earth_radius_km: f64, altitude_km: f64) -> Result<Self> {
        if !(earth_radius_km > 0.0 && earth_radius_km.is_finite()) {
            return Err(Error::Argument(format!(
                "earth radius must be positive, got {earth_radius_km}"
            )));
        }
        if !(altitude_km > 0.0 && altitude_km.is_finite()) {
            return Err(Error::Argument(format!(
                "altitude must be positive, got {altitude_km}"
            )));
        }
        Ok(Self {
            earth_radius_km,
            altitude_km,
        })
    }

    /// Orbit radius measured from the earth center.
    pub fn orbit_radius_km(&self) -> f64 {
        self.earth_radius_km + self.altitude_km
    }
}

/// RF parameters of the link. Element gains are stored on a linear scale;
/// use [`RfConfig::from_db`] to build one from decibel gains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RfConfig {
    pub carrier_freq_hz: f64,
    pub bandwidth_hz: f64,
    pub noise_temp_k: f64,
    pub sat_element_gain: f64,
    pub ut_element_gain: f64,
}

impl RfConfig {
    pub fn new(
        carrier_freq_hz: f64,
        bandwidth_hz: f64,
        noise_temp_k: f64,
        sat_element_gain: f64,
        ut_element_gain: f64,
    ) -> Result<Self> {
        let checks = [
            ("carrier frequency", carrier_freq_hz),
            ("bandwidth", bandwidth_hz),
            ("noise temperature", noise_temp_k),
            ("satellite element gain", sat_element_gain),
            ("UT element gain", ut_element_gain),
        ];
        for (name, v) in checks {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Argument(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(Self {
            carrier_freq_hz,
            bandwidth_hz,
            noise_temp_k,
            sat_element_gain,
            ut_element_gain,
        })
    }

    pub fn from_db(
        carrier_freq_hz: f64,
        bandwidth_hz: f64,
        noise_temp_k: f64,
        sat_gain_db: f64,
        ut_gain_db: f64,
    ) -> Result<Self> {
        Self::new(
            carrier_freq_hz,
            bandwidth_hz,
            noise_temp_k,
            db_to_linear(sat_gain_db),
            db_to_linear(ut_gain_db),
        )
    }

    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_freq_hz
    }
}

/// Direction cosines `(theta_x, theta_y)` of a UT as seen from the satellite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceAnglePair {
    pub theta_x: f64,
    pub theta_y: f64,
}

impl SpaceAnglePair {
    pub fn new(theta_x: f64, theta_y: f64) -> Result<Self> {
        let p = Self { theta_x, theta_y };
        if !(theta_x.is_finite() && theta_y.is_finite()) || p.radius_sq() > 1.0 + UNIT_DISK_SLACK
        {
            return Err(Error::Domain(format!(
                "space angle pair ({theta_x}, {theta_y}) lies outside the unit disk"
            )));
        }
        Ok(p)
    }

    fn radius_sq(&self) -> f64 {
        self.theta_x * self.theta_x + self.theta_y * self.theta_y
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkGeometry {
    pub nadir_angle_rad: f64,
    pub central_angle_rad: f64,
    pub slant_distance_km: f64,
}

/// Draws `count` pairs with both coordinates i.i.d. uniform on
/// `[-half_width, half_width]`.
pub fn sample_space_angles<R: Rng + ?Sized>(
    rng: &mut R,
    count: usize,
    half_width: f64,
) -> Result<Vec<SpaceAnglePair>> {
    if !(half_width > 0.0 && half_width <= std::f64::consts::FRAC_1_SQRT_2) {
        return Err(Error::Argument(format!(
            "half width must lie in (0, 1/sqrt(2)], got {half_width}"
        )));
    }
    Ok((0..count)
        .map(|_| SpaceAnglePair {
            theta_x: rng.random_range(-half_width..=half_width),
            theta_y: rng.random_range(-half_width..=half_width),
        })
        .collect())
}

pub fn nadir_angle(p: SpaceAnglePair) -> Result<f64> {
    let r2 = p.radius_sq();
    if !r2.is_finite() || r2 > 1.0 + UNIT_DISK_SLACK {
        return Err(Error::Domain(format!(
            "theta_x^2 + theta_y^2 = {r2} exceeds 1"
        )));
    }
    Ok((1.0 - r2).max(0.0).sqrt().acos())
}

/// Earth central angle and slant distance for a UT seen at `nadir` radians.
pub fn slant_distance(nadir: f64, orbit: &OrbitConfig) -> Result<LinkGeometry> {
    if !(0.0..=std::f64::consts::FRAC_PI_2).contains(&nadir) {
        return Err(Error::Argument(format!(
            "nadir angle must lie in [0, pi/2], got {nadir}"
        )));
    }
    let re = orbit.earth_radius_km;
    let rs = orbit.orbit_radius_km();
    let s = rs / re * nadir.sin();
    if s > 1.0 {
        return Err(Error::InfeasibleGeometry(format!(
            "nadir angle {nadir} rad is beyond the horizon (sin = {} > Re/Rs = {})",
            nadir.sin(),
            re / rs
        )));
    }
    let psi = s.asin() - nadir;
    // D^2 = Re^2 + Rs^2 - 2 Re Rs cos(psi), rewritten as
    // H^2 + 4 Re Rs sin^2(psi/2) so that psi = 0 yields H exactly.
    let half = (0.5 * psi).sin();
    let d = (orbit.altitude_km * orbit.altitude_km + 4.0 * re * rs * half * half).sqrt();
    Ok(LinkGeometry {
        nadir_angle_rad: nadir,
        central_angle_rad: psi,
        slant_distance_km: d,
    })
}

/// Free-space average channel power `G_sat G_ut N M wl^2 / (4 pi D)^2` with
/// wavelength and distance in the same unit.
pub fn free_space_channel_power(
    wavelength: f64,
    distance: f64,
    sat_element_gain: f64,
    ut_element_gain: f64,
    m_sat: usize,
    n_ut: usize,
) -> f64 {
    let spread = 4.0 * std::f64::consts::PI * distance;
    sat_element_gain * ut_element_gain * (n_ut as f64) * (m_sat as f64) * wavelength * wavelength
        / (spread * spread)
}

/// Average channel power (linear) of a UT at `distance_km`.
pub fn channel_power_beta(
    distance_km: f64,
    rf: &RfConfig,
    m_sat: usize,
    n_ut: usize,
) -> Result<f64> {
    if !(distance_km > 0.0 && distance_km.is_finite()) {
        return Err(Error::Argument(format!(
            "distance must be positive, got {distance_km}"
        )));
    }
    Ok(free_space_channel_power(
        rf.wavelength_m(),
        distance_km * 1e3,
        rf.sat_element_gain,
        rf.ut_element_gain,
        m_sat,
        n_ut,
    ))
}

/// Thermal noise power `k_B T B` in watts.
pub fn noise_power(rf: &RfConfig) -> f64 {
    BOLTZMANN * rf.noise_temp_k * rf.bandwidth_hz
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn table_orbit() -> OrbitConfig {
        OrbitConfig::new(6378.0, 1000.0).unwrap()
    }

    fn table_rf() -> RfConfig {
        RfConfig::from_db(2e9, 20e6, 300.0, 3.0, 3.0).unwrap()
    }

    #[test]
    fn sample_angles_empty_and_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        assert!(sample_space_angles(&mut rng, 0, 0.5).unwrap().is_empty());

        let a = sample_space_angles(&mut ChaCha8Rng::seed_from_u64(11), 4, 0.5).unwrap();
        let b = sample_space_angles(&mut ChaCha8Rng::seed_from_u64(11), 4, 0.5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sample_angles_centered() {
        let n = 200_000;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pairs = sample_space_angles(&mut rng, n, 0.5).unwrap();
        // U[-1/2, 1/2] has variance 1/12.
        let sigma_mean = (1.0f64 / 12.0 / n as f64).sqrt();
        let mx = pairs.iter().map(|p| p.theta_x).sum::<f64>() / n as f64;
        let my = pairs.iter().map(|p| p.theta_y).sum::<f64>() / n as f64;
        assert!(mx.abs() < 3.0 * sigma_mean, "mean x = {mx}");
        assert!(my.abs() < 3.0 * sigma_mean, "mean y = {my}");
        assert!(pairs
            .iter()
            .all(|p| p.theta_x.abs() <= 0.5 && p.theta_y.abs() <= 0.5));
    }

    #[test]
    fn sample_angles_rejects_bad_half_width() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            sample_space_angles(&mut rng, 3, 0.0),
            Err(Error::Argument(_))
        ));
        assert!(matches!(
            sample_space_angles(&mut rng, 3, 0.75),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn nadir_examples() {
        let at = |x, y| nadir_angle(SpaceAnglePair { theta_x: x, theta_y: y }).unwrap();
        assert_eq!(at(0.0, 0.0), 0.0);
        assert!((at(0.5, 0.5) - FRAC_PI_4).abs() < 1e-12);
        assert!((at(0.6, 0.8) - FRAC_PI_2).abs() < 1e-6);
        assert!(matches!(
            nadir_angle(SpaceAnglePair {
                theta_x: 0.8,
                theta_y: 0.8
            }),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn nadir_symmetries() {
        let base = nadir_angle(SpaceAnglePair {
            theta_x: 0.3,
            theta_y: -0.45,
        })
        .unwrap();
        for (x, y) in [(-0.3, -0.45), (0.3, 0.45), (-0.3, 0.45), (-0.45, 0.3), (0.45, -0.3)] {
            let v = nadir_angle(SpaceAnglePair { theta_x: x, theta_y: y }).unwrap();
            assert_eq!(v, base);
        }
    }

    #[test]
    fn slant_distance_examples() {
        let orbit = table_orbit();
        let g0 = slant_distance(0.0, &orbit).unwrap();
        assert_eq!(g0.slant_distance_km, 1000.0);
        assert_eq!(g0.central_angle_rad, 0.0);

        // 40-digit oracle: psi = 0.17248088662098057, D = 1548.0500485830354 km
        let g = slant_distance(FRAC_PI_4, &orbit).unwrap();
        assert!((g.central_angle_rad - 0.172_480_886_620_980_57).abs() < 1e-12);
        assert!((g.slant_distance_km - 1548.050_048_583_035_4).abs() < 1e-9);
        assert!(g.slant_distance_km >= orbit.altitude_km);

        assert!(matches!(
            slant_distance(80f64.to_radians(), &orbit),
            Err(Error::InfeasibleGeometry(_))
        ));
    }

    #[test]
    fn slant_distance_at_boresight_is_altitude_exactly() {
        for (re, h) in [(6378.0, 1000.0), (6371.137, 547.3), (1.0, 0.1)] {
            let orbit = OrbitConfig::new(re, h).unwrap();
            assert_eq!(slant_distance(0.0, &orbit).unwrap().slant_distance_km, h);
        }
    }

    #[test]
    fn beta_examples() {
        // Oracle (40 digits, G = 10^0.3 exactly): 5.220404466366694e-12
        let beta = channel_power_beta(1000.0, &table_rf(), 256, 36).unwrap();
        assert!((beta / 5.220_404_466_366_694e-12 - 1.0).abs() < 1e-12);
        // Rounding 3 dB to a factor of 2 gives the commonly quoted 5.25e-12.
        let rf2 = RfConfig::new(2e9, 20e6, 300.0, 2.0, 2.0).unwrap();
        let beta2 = channel_power_beta(1000.0, &rf2, 256, 36).unwrap();
        assert!((beta2 / 5.245_225_258_423_404e-12 - 1.0).abs() < 1e-12);

        let doubled = channel_power_beta(2000.0, &table_rf(), 256, 36).unwrap();
        assert!((doubled / beta - 0.25).abs() < 1e-15);

        let unit = free_space_channel_power(4.0 * std::f64::consts::PI, 1.0, 1.0, 1.0, 1, 1);
        assert!((unit - 1.0).abs() < 1e-15);
    }

    #[test]
    fn beta_times_distance_squared_is_constant() {
        let rf = table_rf();
        let c0 = channel_power_beta(1000.0, &rf, 64, 36).unwrap() * 1000.0f64.powi(2);
        for d in [1100.0, 1548.05, 2200.0, 3000.0] {
            let c = channel_power_beta(d, &rf, 64, 36).unwrap() * d * d;
            assert!((c / c0 - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn noise_examples() {
        let rf = table_rf();
        assert!((noise_power(&rf) / 8.28e-14 - 1.0).abs() < 1e-12);
        let hot = RfConfig {
            noise_temp_k: 600.0,
            ..rf
        };
        assert!((noise_power(&hot) / noise_power(&rf) - 2.0).abs() < 1e-15);
        let zero_bw = RfConfig {
            bandwidth_hz: 0.0,
            ..rf
        };
        assert_eq!(noise_power(&zero_bw), 0.0);
    }

    #[test]
    fn config_validation() {
        assert!(OrbitConfig::new(0.0, 1000.0).is_err());
        assert!(OrbitConfig::new(6378.0, -1.0).is_err());
        assert!(RfConfig::new(2e9, 0.0, 300.0, 1.0, 1.0).is_err());
        assert!((table_rf().wavelength_m() - 0.149_896_229).abs() < 1e-12);
    }
}
