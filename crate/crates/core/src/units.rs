//! Physical constants and the single place where dB <-> linear conversions live.

/// Speed of light used by the free-space loss model (m/s).
pub const SPEED_OF_LIGHT: f64 = 2.998e8;
/// Mean Earth radius for the slant-range geometry (m).
pub const EARTH_RADIUS_M: f64 = 6.371e6;

/// Power ratio in dB to linear scale (10·lg convention).
#[inline]
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Linear power ratio to dB (10·lg convention).
#[inline]
pub fn linear_to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

#[inline]
pub fn deg_to_rad(deg: f64) -> f64 {
    deg.to_radians()
}
