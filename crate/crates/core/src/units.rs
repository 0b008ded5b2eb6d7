//! Physical constants and decibel conversions.

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Boltzmann constant as used for the noise floor, J/K.
pub const BOLTZMANN: f64 = 1.38e-23;

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// dBW to watts.
pub fn dbw_to_watts(dbw: f64) -> f64 {
    db_to_linear(dbw)
}
