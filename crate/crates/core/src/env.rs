//! Episodic fly-hover-communicate environment.
//!
//! Each step the UAV flies for one update interval with the commanded
//! velocity. When the current target device comes within the
//! data-collection radius the UAV hovers until the target's buffer is
//! uploaded, charging every other device inside the energy-harvesting
//! radius for the same duration.

use std::io::Write;

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::channel::{expected_channel_gain, ChannelParams};
use crate::error::{ConfigError, Error, Result};
use crate::geometry::Point;
use crate::power::{
    data_rate, harvested_power, hover_power, hover_time, propulsion_power, received_power, EhParams,
    PropulsionParams, RadioParams,
};
use crate::world::{World, WorldConfig};
use crate::SimRng;

/// Observation length.
pub const OBS_DIM: usize = 6;
/// Normalizer of the boundary-violation counter in observations.
pub const VIOLATION_SCALE: f64 = 10.0;

pub type Observation = [f64; OBS_DIM];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub world: WorldConfig,
    pub channel: ChannelParams,
    pub propulsion: PropulsionParams,
    pub eh: EhParams,
    pub radio: RadioParams,
    /// Mission period, seconds.
    pub mission_secs: f64,
    pub v_max: f64,
    /// Data-collection radius (horizontal), metres.
    pub d_dc: f64,
    /// Energy-harvesting radius (horizontal), metres.
    pub d_eh: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            world: WorldConfig::default(),
            channel: ChannelParams::default(),
            propulsion: PropulsionParams::default(),
            eh: EhParams::default(),
            radio: RadioParams::default(),
            mission_secs: 600.0,
            v_max: 20.0,
            d_dc: 10.0,
            d_eh: 30.0,
        }
    }
}

impl EnvConfig {
    /// Small scenario used for quick training runs: 10 devices (3 mobile)
    /// in a 100 m square with a 120 s mission.
    pub fn desk() -> Self {
        Self {
            world: WorldConfig { num_devices: 10, num_mobile: 3, area_side: 100.0, ..WorldConfig::default() },
            mission_secs: 120.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.world.validate()?;
        self.channel.validate()?;
        self.propulsion.validate()?;
        self.eh.validate()?;
        self.radio.validate()?;
        if !(self.mission_secs > 0.0 && self.mission_secs.is_finite()) {
            return Err(ConfigError::out_of_range("mission_secs", "must be positive"));
        }
        if !(self.v_max > 0.0 && self.v_max.is_finite()) {
            return Err(ConfigError::out_of_range("v_max", "must be positive"));
        }
        if !(self.d_dc > 0.0) {
            return Err(ConfigError::out_of_range("d_dc", "must be positive"));
        }
        if !(self.d_eh >= self.d_dc && self.d_eh.is_finite()) {
            return Err(ConfigError::out_of_range("d_eh", "must be at least d_dc"));
        }
        Ok(())
    }
}

/// Velocity command, m/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub vx: f64,
    pub vy: f64,
}

impl Action {
    pub const HOLD: Action = Action { vx: 0.0, vy: 0.0 };

    pub fn from_polar(speed: f64, heading: f64) -> Self {
        Self { vx: speed * heading.cos(), vy: speed * heading.sin() }
    }

    pub fn speed(&self) -> f64 {
        self.vx.hypot(self.vy)
    }

    /// Scales the command down so its norm does not exceed `v_max`.
    pub fn clipped(self, v_max: f64) -> Self {
        let s = self.speed();
        if s > v_max {
            let k = v_max / s;
            Self { vx: self.vx * k, vy: self.vy * k }
        } else {
            self
        }
    }
}

/// Per-step reward components: data collection (Mbit/s), energy harvest
/// (uJ plus charged-device count), energy consumption (negative W) and the
/// auxiliary shaping term.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardVector {
    pub r_dc: f64,
    pub r_eh: f64,
    pub r_ec: f64,
    pub r_aux: f64,
}

impl RewardVector {
    pub fn to_array(self) -> [f64; 4] {
        [self.r_dc, self.r_eh, self.r_ec, self.r_aux]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self { r_dc: a[0], r_eh: a[1], r_ec: a[2], r_aux: a[3] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlightRecord {
    pub speed: f64,
    /// Propulsion power drawn during the flight segment, W.
    pub power: f64,
    pub secs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoverRecord {
    pub target: usize,
    /// Uplink rate, bit/s.
    pub rate: f64,
    pub upload_bits: f64,
    pub secs: f64,
    /// Hover power, W.
    pub power: f64,
    /// Energy harvested by all charged devices, J.
    pub harvested: f64,
    pub charged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: RewardVector,
    pub done: bool,
    pub flight: FlightRecord,
    pub hover: Option<HoverRecord>,
}

/// Totals over an episode: summed hover rates (bit/s), harvested energy
/// (J), consumed energy (J) and hover count.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub r_sum: f64,
    pub e_harvest: f64,
    pub e_consume: f64,
    pub hovers: usize,
}

impl EpisodeMetrics {
    /// The objective triple (sum rate, harvested energy, negated consumption).
    pub fn objectives(&self) -> (f64, f64, f64) {
        (self.r_sum, self.e_harvest, -self.e_consume)
    }

    /// Mean uplink rate per hover, Mbit/s; 0 when the UAV never hovered.
    pub fn avg_rate_mbps(&self) -> f64 {
        if self.hovers == 0 {
            0.0
        } else {
            self.r_sum / self.hovers as f64 / 1e6
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub world: World,
    pub uav: Point,
    pub clock: f64,
    pub target: usize,
    /// Consecutive steps in which the commanded position left the area.
    pub n_f: u32,
    /// Devices that dropped data during the latest step.
    pub n_d: usize,
    pub steps: u64,
    pub metrics: EpisodeMetrics,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Env {
    config: EnvConfig,
    state: EnvState,
    rng: SimRng,
}

impl Env {
    pub fn reset(config: EnvConfig, seed: u64) -> Result<(Self, Observation)> {
        config.validate()?;
        let mut rng = SimRng::seed_from_u64(seed);
        let world = World::generate(config.world.clone(), &mut rng)?;
        let side = config.world.area_side;
        let uav = Point::new(rng.random_range(0.0..=side), rng.random_range(0.0..=side));
        let target = world.select_target();
        let state = EnvState {
            world,
            uav,
            clock: 0.0,
            target,
            n_f: 0,
            n_d: 0,
            steps: 0,
            metrics: EpisodeMetrics::default(),
        };
        let env = Self { config, state, rng };
        let obs = env.observe();
        Ok((env, obs))
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn is_done(&self) -> bool {
        self.state.clock >= self.config.mission_secs
    }

    /// Signed UAV-to-target offset, metres.
    pub fn target_offset(&self) -> (f64, f64) {
        let t = self.state.world.devices[self.state.target].pos;
        (t.x - self.state.uav.x, t.y - self.state.uav.y)
    }

    pub fn observe(&self) -> Observation {
        let side = self.config.world.area_side;
        let (dx, dy) = self.target_offset();
        [
            dx / side,
            dy / side,
            self.state.uav.x / side,
            self.state.uav.y / side,
            self.state.n_f as f64 / VIOLATION_SCALE,
            self.state.n_d as f64 / self.config.world.num_devices as f64,
        ]
    }

    pub fn step(&mut self, action: Action) -> Result<StepOutcome> {
        if self.is_done() {
            return Err(Error::EpisodeFinished);
        }
        if !action.vx.is_finite() || !action.vy.is_finite() {
            return Err(Error::non_finite("action", format!("step {}", self.state.steps)));
        }
        let side = self.config.world.area_side;
        let dt = self.config.world.dt;

        // flight
        let action = action.clipped(self.config.v_max);
        let commanded = Point::new(self.state.uav.x + action.vx * dt, self.state.uav.y + action.vy * dt);
        if commanded.inside_square(side) {
            self.state.n_f = 0;
        } else {
            self.state.n_f += 1;
        }
        self.state.uav = commanded.clamp_to_square(side);

        let mut dropped_any = vec![false; self.config.world.num_devices];
        self.advance_world(&mut dropped_any);

        let speed = action.speed();
        let flight_power = propulsion_power(speed, &self.config.propulsion)?;
        self.state.metrics.e_consume += flight_power * dt;
        self.state.clock += dt;
        let flight = FlightRecord { speed, power: flight_power, secs: dt };
        let mut reward = RewardVector { r_ec: -flight_power, ..RewardVector::default() };

        // hover
        let mut hover = None;
        let target_pos = self.state.world.devices[self.state.target].pos;
        if self.state.uav.distance(target_pos) <= self.config.d_dc {
            let rec = self.hover(&mut dropped_any)?;
            reward.r_dc = rec.rate / 1e6;
            reward.r_eh = rec.harvested * 1e6 + rec.charged as f64;
            reward.r_ec = -rec.power;
            hover = Some(rec);
        }

        self.state.n_d = dropped_any.iter().filter(|d| **d).count();
        let (dx, dy) = self.target_offset();
        reward.r_aux = -dx.abs() / side - dy.abs() / side - self.state.n_f as f64 - self.state.n_d as f64;
        self.state.steps += 1;

        Ok(StepOutcome { observation: self.observe(), reward, done: self.is_done(), flight, hover })
    }

    fn advance_world(&mut self, dropped_any: &mut [bool]) {
        let dropped = self.state.world.advance(&mut self.rng);
        for (flag, d) in dropped_any.iter_mut().zip(dropped) {
            *flag |= d > 0;
        }
    }

    fn hover(&mut self, dropped_any: &mut [bool]) -> Result<HoverRecord> {
        let cfg = &self.config;
        let target = self.state.target;
        let uav = self.state.uav;
        let world = &self.state.world;

        let gain = expected_channel_gain(uav, world.devices[target].pos, &cfg.channel);
        let rate = data_rate(gain, &cfg.radio);
        let upload_bits = world.upload_size(target);
        let secs = hover_time(upload_bits, rate)?;

        let mut harvested = 0.0;
        let mut charged = 0;
        for dev in world.devices.iter().filter(|d| d.id != target) {
            if uav.distance(dev.pos) <= cfg.d_eh {
                let g = expected_channel_gain(uav, dev.pos, &cfg.channel);
                harvested += harvested_power(received_power(g, &cfg.radio), &cfg.eh) * secs;
                charged += 1;
            }
        }
        let power = hover_power(&cfg.propulsion);

        self.state.world.devices[target].buffer = 0;
        self.state.metrics.r_sum += rate;
        self.state.metrics.e_harvest += harvested;
        self.state.metrics.e_consume += power * secs;
        self.state.metrics.hovers += 1;
        self.state.clock += secs;
        for _ in 0..secs.ceil() as u64 {
            self.advance_world(dropped_any);
        }
        self.state.target = self.state.world.select_target();

        Ok(HoverRecord { target, rate, upload_bits, secs, power, harvested, charged })
    }

    pub fn metrics(&self) -> EpisodeMetrics {
        self.state.metrics
    }

    /// Totals of a finished episode.
    pub fn episode_metrics(&self) -> Result<EpisodeMetrics> {
        if !self.is_done() {
            return Err(Error::InvalidArgument(format!(
                "episode still running at t = {} s of {} s",
                self.state.clock, self.config.mission_secs
            )));
        }
        Ok(self.state.metrics)
    }
}

/// Streams one CSV row per environment step.
pub struct TraceWriter<W: Write> {
    out: W,
}

impl<W: Write> TraceWriter<W> {
    pub const HEADER: &'static str = "step,clock,uav_x,uav_y,target,event,r_dc,r_eh,r_ec,r_aux";

    pub fn new(mut out: W) -> std::io::Result<Self> {
        writeln!(out, "{}", Self::HEADER)?;
        Ok(Self { out })
    }

    /// Records the state after `outcome`; `target` is the target that was served or chased.
    pub fn record(&mut self, env: &Env, target: usize, outcome: &StepOutcome) -> std::io::Result<()> {
        let s = env.state();
        let r = outcome.reward;
        let event = if outcome.hover.is_some() { "hover" } else { "fly" };
        writeln!(
            self.out,
            "{},{},{},{},{},{},{},{},{},{}",
            s.steps, s.clock, s.uav.x, s.uav.y, target, event, r.r_dc, r.r_eh, r.r_ec, r.r_aux
        )
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn desk() -> EnvConfig {
        EnvConfig::desk()
    }

    #[test]
    fn reset_is_deterministic() {
        let (_, a) = Env::reset(desk(), 9).unwrap();
        let (_, b) = Env::reset(desk(), 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 6);
        assert!(a.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn single_device_targets_itself() {
        let mut cfg = desk();
        cfg.world.num_devices = 1;
        cfg.world.num_mobile = 0;
        let (env, _) = Env::reset(cfg, 1).unwrap();
        assert_eq!(env.state().target, 0);
    }

    #[test]
    fn observation_layout() {
        let (mut env, _) = Env::reset(desk(), 3).unwrap();
        let t = env.state.target;
        env.state.uav = env.state.world.devices[t].pos;
        let obs = env.observe();
        assert_eq!(obs[0], 0.0);
        assert_eq!(obs[1], 0.0);
        assert_eq!(obs[2], env.state.uav.x / 100.0);
        assert_eq!(obs[4], 0.0);
        assert_eq!(obs[5], 0.0);

        env.state.uav = Point::new(0.0, 0.0);
        env.state.world.devices[t].pos = Point::new(100.0, 100.0);
        let obs = env.observe();
        assert_eq!((obs[0], obs[1]), (1.0, 1.0));
    }

    #[test]
    fn observation_denormalizes() {
        let (mut env, _) = Env::reset(desk(), 4).unwrap();
        env.state.n_f = 3;
        env.state.n_d = 2;
        let obs = env.observe();
        let side = 100.0;
        let (dx, dy) = env.target_offset();
        assert!((obs[0] * side - dx).abs() < 1e-12);
        assert!((obs[1] * side - dy).abs() < 1e-12);
        assert!((obs[2] * side - env.state.uav.x).abs() < 1e-12);
        assert!((obs[3] * side - env.state.uav.y).abs() < 1e-12);
        assert!((obs[4] * VIOLATION_SCALE - 3.0).abs() < 1e-12);
        assert!((obs[5] * 10.0 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn hold_far_from_target_costs_hover_power() {
        let (mut env, _) = Env::reset(desk(), 5).unwrap();
        let t = env.state.target;
        env.state.world.devices[t].pos = Point::new(0.0, 0.0);
        env.state.world.devices[t].mobile = false;
        env.state.uav = Point::new(90.0, 90.0);
        let out = env.step(Action::HOLD).unwrap();
        assert!(out.hover.is_none());
        assert_eq!(out.reward.r_dc, 0.0);
        assert_eq!(out.reward.r_eh, 0.0);
        assert!((out.reward.r_ec + 168.49).abs() < 1e-9);
        assert!(out.reward.r_aux < 0.0);
    }

    #[test]
    fn hover_when_adjacent() {
        let (mut env, _) = Env::reset(desk(), 6).unwrap();
        let t = env.state.target;
        env.state.world.devices[t].mobile = false;
        env.state.world.devices[t].buffer = 2500;
        env.state.uav = env.state.world.devices[t].pos;
        let out = env.step(Action::HOLD).unwrap();
        let h = out.hover.expect("hover record");
        assert_eq!(h.target, t);
        assert!((h.secs - h.upload_bits / h.rate).abs() < 1e-15);
        // the flight update adds arrivals before the upload starts
        assert!(h.upload_bits >= 5e6);
        assert!((out.reward.r_dc - h.rate / 1e6).abs() < 1e-12);
        assert!((out.reward.r_ec + 168.49).abs() < 1e-9);
        assert!(out.reward.r_eh >= h.charged as f64);
        assert_eq!(env.metrics().hovers, 1);
    }

    #[test]
    fn stepping_finished_episode_fails() {
        let mut cfg = desk();
        cfg.mission_secs = 2.0;
        let (mut env, _) = Env::reset(cfg, 0).unwrap();
        let mut done = false;
        while !done {
            done = env.step(Action::HOLD).unwrap().done;
        }
        assert!(matches!(env.step(Action::HOLD), Err(Error::EpisodeFinished)));
    }

    #[test]
    fn boundary_violations_count_consecutively() {
        let (mut env, _) = Env::reset(desk(), 8).unwrap();
        env.state.uav = Point::new(99.0, 50.0);
        env.step(Action { vx: 20.0, vy: 0.0 }).unwrap();
        assert_eq!(env.state.n_f, 1);
        assert_eq!(env.state.uav.x, 100.0);
        env.step(Action { vx: 20.0, vy: 0.0 }).unwrap();
        assert_eq!(env.state.n_f, 2);
        env.step(Action { vx: -5.0, vy: 0.0 }).unwrap();
        assert_eq!(env.state.n_f, 0);
    }

    #[test]
    fn action_norm_is_clipped() {
        let a = Action { vx: 30.0, vy: 40.0 }.clipped(20.0);
        assert!((a.speed() - 20.0).abs() < 1e-12);
        assert!((a.vx - 12.0).abs() < 1e-12);
    }

    #[test]
    fn null_policy_episode_energy() {
        let mut cfg = EnvConfig::default();
        // keep every device out of reach so no hover interrupts the flight clock
        cfg.d_dc = 1e-9;
        cfg.d_eh = 1e-9;
        let (mut env, _) = Env::reset(cfg, 10).unwrap();
        while !env.step(Action::HOLD).unwrap().done {}
        let m = env.episode_metrics().unwrap();
        assert!((m.e_consume - 600.0 * 168.49).abs() < 1e-6);
        assert_eq!(m.hovers, 0);
        assert_eq!((m.r_sum, m.e_harvest), (0.0, 0.0));
    }

    #[test]
    fn metrics_require_finished_episode() {
        let (env, _) = Env::reset(desk(), 0).unwrap();
        assert!(env.episode_metrics().is_err());
    }

    #[test]
    fn invalid_radii_rejected() {
        let mut cfg = desk();
        cfg.d_eh = 5.0;
        assert!(Env::reset(cfg, 0).is_err());
    }

    #[test]
    fn trace_rows() {
        let (mut env, _) = Env::reset(desk(), 2).unwrap();
        let mut tw = TraceWriter::new(Vec::new()).unwrap();
        for _ in 0..3 {
            let target = env.state().target;
            let out = env.step(Action { vx: 3.0, vy: -4.0 }).unwrap();
            tw.record(&env, target, &out).unwrap();
        }
        let text = String::from_utf8(tw.into_inner()).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "step,clock,uav_x,uav_y,target,event,r_dc,r_eh,r_ec,r_aux");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("1,1,"));
    }
}
