//! Probabilistic LoS/NLoS air-to-ground channel.

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, Error, Result};
use crate::geometry::Point;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Channel power gain at the 1 m reference distance (linear).
    pub gamma0: f64,
    /// Path-loss exponent.
    pub alpha: f64,
    /// Extra attenuation of the NLoS link, `0 < mu <= 1`.
    pub mu_nlos: f64,
    pub los_a: f64,
    pub los_b: f64,
    /// UAV altitude, metres.
    pub altitude: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self { gamma0: 1e-3, alpha: 2.3, mu_nlos: 0.2, los_a: 10.0, los_b: 0.6, altitude: 10.0 }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [("gamma0", self.gamma0), ("alpha", self.alpha), ("altitude", self.altitude)];
        for (key, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ConfigError::out_of_range(key, "must be positive"));
            }
        }
        if !(self.mu_nlos > 0.0 && self.mu_nlos <= 1.0) {
            return Err(ConfigError::out_of_range("mu_nlos", "must lie in (0, 1]"));
        }
        if !self.los_a.is_finite() || !self.los_b.is_finite() {
            return Err(ConfigError::out_of_range("los_a", "LoS constants must be finite"));
        }
        Ok(())
    }
}

pub fn distance_3d(uav: Point, dev: Point, altitude: f64) -> f64 {
    let dx = uav.x - dev.x;
    let dy = uav.y - dev.y;
    (dx * dx + dy * dy + altitude * altitude).sqrt()
}

/// Elevation angle in degrees, in `(0, 90]`.
pub fn elevation_angle_deg(altitude: f64, dist: f64) -> Result<f64> {
    if !(dist >= altitude) || altitude <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "distance {dist} m is shorter than altitude {altitude} m"
        )));
    }
    Ok((altitude / dist).min(1.0).asin().to_degrees())
}

pub fn los_probability(theta_deg: f64, params: &ChannelParams) -> f64 {
    let (a, b) = (params.los_a, params.los_b);
    1.0 / (1.0 + a * (-b * (theta_deg - a)).exp())
}

/// Expected channel power gain, averaging the LoS and NLoS branches by
/// their probabilities. Uplink and downlink share this value.
pub fn expected_channel_gain(uav: Point, dev: Point, params: &ChannelParams) -> f64 {
    let d = distance_3d(uav, dev, params.altitude);
    // d >= altitude by construction
    let theta = (params.altitude / d).min(1.0).asin().to_degrees();
    let p_los = los_probability(theta, params);
    (p_los + params.mu_nlos * (1.0 - p_los)) * params.gamma0 * d.powf(-params.alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const ORIGIN: Point = Point::new(0.0, 0.0);

    #[test]
    fn overhead_distance_is_altitude() {
        assert_eq!(distance_3d(ORIGIN, ORIGIN, 10.0), 10.0);
        assert!((distance_3d(Point::new(30.0, 40.0), ORIGIN, 1e-9) - 50.0).abs() < 1e-12);
    }

    #[test]
    fn elevation_angles() {
        assert_eq!(elevation_angle_deg(10.0, 10.0).unwrap(), 90.0);
        assert!((elevation_angle_deg(10.0, 20.0).unwrap() - 30.0).abs() < 1e-12);
        assert!((elevation_angle_deg(10.0, 10.0 * 2f64.sqrt()).unwrap() - 45.0).abs() < 1e-12);
        assert!(elevation_angle_deg(10.0, 9.0).is_err());
    }

    #[test]
    fn los_probability_reference_points() {
        let p = ChannelParams::default();
        assert!((los_probability(10.0, &p) - 1.0 / 11.0).abs() < 1e-15);
        let top = los_probability(90.0, &p);
        // 1 - 1.4e-20 is not representable; the value rounds to 1
        assert!(top <= 1.0 && 1.0 - top < 1e-15);
        let limit = 1.0 / (1.0 + 10.0 * (6.0f64).exp());
        assert!((los_probability(1e-12, &p) - limit).abs() < 1e-15);
    }

    #[test]
    fn overhead_gain() {
        let p = ChannelParams::default();
        let g = expected_channel_gain(ORIGIN, ORIGIN, &p);
        // 1e-3 * 10^-2.3, LoS probability ~1 overhead
        assert!((g - 5.011_872_336_272_725e-6).abs() / g < 1e-12, "{g}");
    }

    #[test]
    fn nlos_limit_is_mu_times_los() {
        // with b = 0 the LoS probability is 1/(1+a) regardless of angle; a huge a drives it to 0
        let p = ChannelParams { los_a: 1e300, los_b: 0.0, ..ChannelParams::default() };
        let g = expected_channel_gain(ORIGIN, ORIGIN, &p);
        let los = 1e-3 * 10f64.powf(-2.3);
        assert!((g / los - 0.2).abs() < 1e-12);
    }

    #[test]
    fn inverse_square_with_fixed_los() {
        let p = ChannelParams { alpha: 2.0, los_b: 0.0, altitude: 1e-9, ..ChannelParams::default() };
        let near = expected_channel_gain(ORIGIN, Point::new(10.0, 0.0), &p);
        let far = expected_channel_gain(ORIGIN, Point::new(20.0, 0.0), &p);
        assert!((near / far - 4.0).abs() < 1e-9);
    }

    #[test]
    fn los_probability_monotone_on_grid() {
        let p = ChannelParams::default();
        let mut prev = 0.0;
        for i in 1..=1000 {
            let v = los_probability(90.0 * i as f64 / 1000.0, &p);
            assert!(v > 0.0 && v <= 1.0);
            assert!(v >= prev);
            prev = v;
        }
    }

    proptest! {
        #[test]
        fn distance_matches_componentwise(ux in -500.0f64..500.0, uy in -500.0f64..500.0,
                                          dx in -500.0f64..500.0, dy in -500.0f64..500.0,
                                          h in 0.1f64..100.0) {
            let d = distance_3d(Point::new(ux, uy), Point::new(dx, dy), h);
            let oracle = ((ux - dx).powi(2) + (uy - dy).powi(2) + h.powi(2)).sqrt();
            prop_assert!((d - oracle).abs() <= 1e-12 * oracle);
            prop_assert!(d >= h);
        }

        #[test]
        fn gain_between_envelopes(x in 0.0f64..400.0, y in 0.0f64..400.0) {
            let p = ChannelParams::default();
            let d = distance_3d(ORIGIN, Point::new(x, y), p.altitude);
            let los = p.gamma0 * d.powf(-p.alpha);
            let g = expected_channel_gain(ORIGIN, Point::new(x, y), &p);
            prop_assert!(g <= los * (1.0 + 1e-12));
            prop_assert!(g >= p.mu_nlos * los * (1.0 - 1e-12));
        }

        #[test]
        fn gain_non_increasing_with_distance(r in 0.0f64..500.0, dr in 0.0f64..50.0) {
            let p = ChannelParams::default();
            let near = expected_channel_gain(ORIGIN, Point::new(r, 0.0), &p);
            let far = expected_channel_gain(ORIGIN, Point::new(r + dr, 0.0), &p);
            prop_assert!(far <= near);
        }
    }
}
