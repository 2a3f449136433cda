//! Rotary-wing propulsion power, RF energy harvesting and uplink rate.

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropulsionParams {
    /// Blade profile power in hover, W.
    pub p0: f64,
    /// Induced power in hover, W.
    pub p_induced: f64,
    /// Rotor blade tip speed, m/s.
    pub u_tip: f64,
    /// Mean rotor induced velocity in hover, m/s.
    pub v0: f64,
    /// Fuselage drag ratio.
    pub d0_drag: f64,
    /// Air density, kg/m^3.
    pub rho: f64,
    /// Rotor solidity.
    pub solidity: f64,
    /// Rotor disc area, m^2.
    pub disc_area: f64,
}

impl Default for PropulsionParams {
    fn default() -> Self {
        Self {
            p0: 79.86,
            p_induced: 88.63,
            u_tip: 120.0,
            v0: 4.03,
            d0_drag: 0.6,
            rho: 1.225,
            solidity: 0.05,
            disc_area: 0.503,
        }
    }
}

impl PropulsionParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let fields = [
            ("p0", self.p0),
            ("p_induced", self.p_induced),
            ("u_tip", self.u_tip),
            ("v0", self.v0),
            ("d0_drag", self.d0_drag),
            ("rho", self.rho),
            ("solidity", self.solidity),
            ("disc_area", self.disc_area),
        ];
        check_positive(&fields)
    }

    fn parasite_coefficient(&self) -> f64 {
        0.5 * self.d0_drag * self.rho * self.solidity * self.disc_area
    }
}

/// Non-linear (logistic) energy-harvesting circuit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EhParams {
    /// Saturation DC output power, W.
    pub p_limit: f64,
    /// Steepness, 1/W.
    pub c: f64,
    /// Turn-on threshold, W.
    pub d: f64,
}

impl Default for EhParams {
    fn default() -> Self {
        Self { p_limit: 9.079e-6, c: 47083.0, d: 2.9e-6 }
    }
}

impl EhParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        check_positive(&[("p_limit", self.p_limit), ("eh_c", self.c), ("eh_d", self.d)])
    }
}

/// Transmit powers, noise and bandwidth, all in SI units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadioParams {
    pub p_downlink: f64,
    pub p_uplink: f64,
    pub noise: f64,
    pub bandwidth: f64,
}

impl Default for RadioParams {
    fn default() -> Self {
        Self {
            p_downlink: dbm_to_watts(40.0),
            p_uplink: dbm_to_watts(-20.0),
            noise: dbm_to_watts(-90.0),
            bandwidth: 1e6,
        }
    }
}

impl RadioParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        check_positive(&[
            ("p_downlink", self.p_downlink),
            ("p_uplink", self.p_uplink),
            ("noise", self.noise),
            ("bandwidth", self.bandwidth),
        ])
    }
}

fn check_positive(fields: &[(&str, f64)]) -> Result<(), ConfigError> {
    for (key, v) in fields {
        if !(*v > 0.0 && v.is_finite()) {
            return Err(ConfigError::out_of_range(key, "must be positive and finite"));
        }
    }
    Ok(())
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) / 1000.0
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Propulsion power at horizontal speed `v`: blade profile, induced and
/// parasite terms. The parasite term is cubic in speed.
pub fn propulsion_power(v: f64, params: &PropulsionParams) -> Result<f64> {
    if !(v >= 0.0) || !v.is_finite() {
        return Err(Error::InvalidArgument(format!("speed must be a finite non-negative value, got {v}")));
    }
    Ok(propulsion_power_unchecked(v, params))
}

pub(crate) fn propulsion_power_unchecked(v: f64, params: &PropulsionParams) -> f64 {
    let v2 = v * v;
    let v04 = params.v0.powi(4);
    let blade = params.p0 * (1.0 + 3.0 * v2 / (params.u_tip * params.u_tip));
    let inner = (1.0 + v2 * v2 / (4.0 * v04)).sqrt() - v2 / (2.0 * params.v0 * params.v0);
    // inner is positive analytically; cancellation can push it a hair below zero at high speed
    let induced = params.p_induced * inner.max(0.0).sqrt();
    let parasite = params.parasite_coefficient() * v2 * v;
    blade + induced + parasite
}

/// Hover power `p0 + p_induced`.
pub fn hover_power(params: &PropulsionParams) -> f64 {
    params.p0 + params.p_induced
}

/// Speed in `[0, v_search_max]` minimizing propulsion power, by golden-section search.
pub fn maximum_endurance_velocity(params: &PropulsionParams, v_search_max: f64) -> f64 {
    const TOL: f64 = 1e-4;
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let f = |v: f64| propulsion_power_unchecked(v, params);
    let (mut lo, mut hi) = (0.0, v_search_max);
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > TOL {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    // the interval can close on an endpoint; prefer it if it is strictly better
    let mid = 0.5 * (lo + hi);
    [0.0, mid, v_search_max]
        .into_iter()
        .min_by(|a, b| f(*a).total_cmp(&f(*b)))
        .expect("non-empty candidate list")
}

/// Received RF power at a device: linear channel power gain times downlink power.
pub fn received_power(gain: f64, radio: &RadioParams) -> f64 {
    gain * radio.p_downlink
}

/// DC power delivered by the logistic harvesting circuit for input `p_r`.
/// Zero at zero input, saturating below `p_limit`.
pub fn harvested_power(p_r: f64, eh: &EhParams) -> f64 {
    let cd = eh.c * eh.d;
    let tail = (-eh.c * (p_r - eh.d)).exp();
    eh.p_limit * (cd.exp() - tail) / (cd.exp() * (1.0 + tail))
}

/// Shannon rate of the uplink, bits/s.
pub fn data_rate(gain: f64, radio: &RadioParams) -> f64 {
    radio.bandwidth * (1.0 + radio.p_uplink * gain / radio.noise).log2()
}

pub fn hover_time(upload_bits: f64, rate: f64) -> Result<f64> {
    if !(rate > 0.0) {
        return Err(Error::InvalidArgument(format!("upload rate must be positive, got {rate} bit/s")));
    }
    Ok(upload_bits / rate)
}
