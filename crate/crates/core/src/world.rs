//! Ground devices: placement, Poisson data generation, buffer accounting,
//! random-walk mobility and upload-priority target selection.

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::geometry::Point;
use crate::SimRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub num_devices: usize,
    pub num_mobile: usize,
    /// Side of the square service area, metres.
    pub area_side: f64,
    /// Buffer capacity in packets.
    pub l_max: u64,
    /// Bits corresponding to a full buffer.
    pub q_bits: f64,
    /// Buffer update interval, seconds.
    pub dt: f64,
    /// Poisson expectations (packets/s) a device rate is drawn from.
    pub rate_choices: Vec<f64>,
    /// Maximum per-axis displacement of a mobile device per update, metres.
    pub mobility_step: f64,
    /// Number of candidate offsets per axis.
    pub mobility_grid: usize,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            num_devices: 100,
            num_mobile: 30,
            area_side: 400.0,
            l_max: 5000,
            q_bits: 10e6,
            dt: 1.0,
            rate_choices: vec![4.0, 8.0, 15.0, 20.0],
            mobility_step: 2.0,
            mobility_grid: 21,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, msg: &str| Err(ConfigError::out_of_range(key, msg));
        if self.num_devices == 0 {
            return bad("num_devices", "must be at least 1");
        }
        if self.num_mobile > self.num_devices {
            return bad("num_mobile", "must not exceed num_devices");
        }
        if !(self.area_side > 0.0 && self.area_side.is_finite()) {
            return bad("area_side", "must be positive");
        }
        if self.l_max == 0 {
            return bad("l_max", "must be positive");
        }
        if !(self.q_bits > 0.0 && self.q_bits.is_finite()) {
            return bad("q_bits", "must be positive");
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt", "must be positive");
        }
        if self.rate_choices.is_empty() {
            return bad("rate_choices", "must list at least one rate");
        }
        if self.rate_choices.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return bad("rate_choices", "rates must be positive");
        }
        if !(self.mobility_step >= 0.0 && self.mobility_step.is_finite()) {
            return bad("mobility_step", "must be non-negative");
        }
        if self.mobility_grid == 0 {
            return bad("mobility_grid", "must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceState {
    pub id: usize,
    pub pos: Point,
    /// Packets currently queued, `0..=l_max`.
    pub buffer: u64,
    /// Poisson expectation, packets per second.
    pub rate: f64,
    pub mobile: bool,
    /// Packets discarded during the most recent update interval.
    pub dropped_last_step: u64,
}

/// Outcome of adding one batch of arrivals to a buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Admission {
    pub buffer: u64,
    pub dropped: u64,
}

/// Adds `arrivals` packets to a buffer of capacity `l_max`, discarding the excess.
pub fn admit(buffer: u64, arrivals: u64, l_max: u64) -> Admission {
    let wanted = buffer.saturating_add(arrivals);
    if wanted > l_max {
        Admission { buffer: l_max, dropped: wanted - l_max }
    } else {
        Admission { buffer: wanted, dropped: 0 }
    }
}

/// Bits to upload for a device: `(buffer / l_max) * q_bits`.
pub fn upload_size(device: &DeviceState, config: &WorldConfig) -> f64 {
    device.buffer as f64 / config.l_max as f64 * config.q_bits
}

/// Upload priority `rate * buffer / l_max`.
pub fn upload_priority(device: &DeviceState, config: &WorldConfig) -> f64 {
    device.rate * device.buffer as f64 / config.l_max as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub devices: Vec<DeviceState>,
    pub config: WorldConfig,
}

impl World {
    pub fn generate(config: WorldConfig, rng: &mut SimRng) -> Result<Self, ConfigError> {
        config.validate()?;
        let side = config.area_side;
        let mut devices: Vec<DeviceState> = (0..config.num_devices)
            .map(|id| {
                let pos = Point::new(rng.random_range(0.0..=side), rng.random_range(0.0..=side));
                let rate = config.rate_choices[rng.random_range(0..config.rate_choices.len())];
                DeviceState { id, pos, buffer: 0, rate, mobile: false, dropped_last_step: 0 }
            })
            .collect();
        for i in index::sample(rng, config.num_devices, config.num_mobile) {
            devices[i].mobile = true;
        }
        Ok(Self { devices, config })
    }

    /// Adds one Poisson(rate * dt) batch of arrivals to every buffer.
    /// Returns the per-device dropped counts for this update.
    pub fn step_data_generation(&mut self, dt: f64, rng: &mut SimRng) -> Vec<u64> {
        let l_max = self.config.l_max;
        self.devices
            .iter_mut()
            .map(|dev| {
                let arrivals = sample_poisson(dev.rate * dt, rng);
                let adm = admit(dev.buffer, arrivals, l_max);
                dev.buffer = adm.buffer;
                dev.dropped_last_step = adm.dropped;
                adm.dropped
            })
            .collect()
    }

    /// Moves every mobile device by one offset drawn uniformly from the
    /// `grid x grid` lattice spanning `[-step, step]` on each axis, then
    /// clamps to the area.
    pub fn step_mobility(&mut self, rng: &mut SimRng) {
        let grid = self.config.mobility_grid;
        let step = self.config.mobility_step;
        let side = self.config.area_side;
        for dev in self.devices.iter_mut().filter(|d| d.mobile) {
            let dx = lattice_offset(rng.random_range(0..grid), grid, step);
            let dy = lattice_offset(rng.random_range(0..grid), grid, step);
            dev.pos = Point::new(dev.pos.x + dx, dev.pos.y + dy).clamp_to_square(side);
        }
    }

    /// One full update interval: arrivals followed by mobility.
    pub fn advance(&mut self, rng: &mut SimRng) -> Vec<u64> {
        let dropped = self.step_data_generation(self.config.dt, rng);
        self.step_mobility(rng);
        dropped
    }

    pub fn upload_priority(&self, id: usize) -> f64 {
        upload_priority(&self.devices[id], &self.config)
    }

    pub fn upload_size(&self, id: usize) -> f64 {
        upload_size(&self.devices[id], &self.config)
    }

    /// Device with the highest upload priority; ties go to the lowest id.
    pub fn select_target(&self) -> usize {
        let mut best = 0;
        let mut best_p = f64::NEG_INFINITY;
        for dev in &self.devices {
            let p = upload_priority(dev, &self.config);
            if p > best_p {
                best = dev.id;
                best_p = p;
            }
        }
        best
    }
}

fn lattice_offset(i: usize, grid: usize, step: f64) -> f64 {
    if grid == 1 {
        0.0
    } else {
        -step + 2.0 * step * i as f64 / (grid - 1) as f64
    }
}

fn sample_poisson(mean: f64, rng: &mut SimRng) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    // rate * dt is positive and finite once the config has been validated
    let dist = Poisson::new(mean).expect("finite positive Poisson mean");
    dist.sample(rng) as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn full_config() -> WorldConfig {
        WorldConfig::default()
    }

    fn single(buffer: u64, rate: f64) -> DeviceState {
        DeviceState { id: 0, pos: Point::new(0.0, 0.0), buffer, rate, mobile: false, dropped_last_step: 0 }
    }

    #[test]
    fn generates_full_world() {
        let mut rng = SimRng::seed_from_u64(7);
        let w = World::generate(full_config(), &mut rng).unwrap();
        assert_eq!(w.devices.len(), 100);
        assert_eq!(w.devices.iter().filter(|d| d.mobile).count(), 30);
        for d in &w.devices {
            assert!(d.pos.x >= 0.0 && d.pos.x <= 400.0 && d.pos.y >= 0.0 && d.pos.y <= 400.0);
            assert!([4.0, 8.0, 15.0, 20.0].contains(&d.rate));
            assert_eq!(d.buffer, 0);
        }
    }

    #[test]
    fn degenerate_single_device() {
        let cfg = WorldConfig { num_devices: 1, num_mobile: 0, ..full_config() };
        let w = World::generate(cfg, &mut SimRng::seed_from_u64(1)).unwrap();
        assert_eq!(w.devices.len(), 1);
        assert!(!w.devices[0].mobile);
        assert_eq!(w.devices[0].buffer, 0);
        assert_eq!(w.select_target(), 0);
    }

    #[test]
    fn same_seed_same_world() {
        let a = World::generate(full_config(), &mut SimRng::seed_from_u64(42)).unwrap();
        let b = World::generate(full_config(), &mut SimRng::seed_from_u64(42)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_invalid_config() {
        let mut rng = SimRng::seed_from_u64(0);
        for cfg in [
            WorldConfig { area_side: 0.0, ..full_config() },
            WorldConfig { num_mobile: 101, ..full_config() },
            WorldConfig { dt: -1.0, ..full_config() },
            WorldConfig { l_max: 0, ..full_config() },
            WorldConfig { q_bits: 0.0, ..full_config() },
        ] {
            assert!(World::generate(cfg, &mut rng).is_err());
        }
    }

    #[test]
    fn admission_arithmetic() {
        assert_eq!(admit(100, 8, 5000), Admission { buffer: 108, dropped: 0 });
        assert_eq!(admit(4995, 12, 5000), Admission { buffer: 5000, dropped: 7 });
        assert_eq!(admit(5000, 0, 5000), Admission { buffer: 5000, dropped: 0 });
    }

    #[test]
    fn poisson_sampler_mean() {
        let mut rng = SimRng::seed_from_u64(3);
        let n = 1_000_000;
        let sum: u64 = (0..n).map(|_| sample_poisson(8.0, &mut rng)).sum();
        let mean = sum as f64 / n as f64;
        assert!((mean - 8.0).abs() / 8.0 < 0.01, "mean {mean}");
    }

    #[test]
    fn upload_size_and_priority() {
        let cfg = full_config();
        assert_eq!(upload_size(&single(2500, 4.0), &cfg), 5e6);
        assert_eq!(upload_size(&single(0, 4.0), &cfg), 0.0);
        assert_eq!(upload_size(&single(5000, 4.0), &cfg), 10e6);
        assert_eq!(upload_priority(&single(2500, 20.0), &cfg), 10.0);
        assert_eq!(upload_priority(&single(0, 20.0), &cfg), 0.0);
        let full_slow = upload_priority(&single(5000, 4.0), &cfg);
        let tenth_fast = upload_priority(&single(500, 20.0), &cfg);
        assert_eq!((full_slow, tenth_fast), (4.0, 2.0));
    }

    #[test]
    fn tie_breaks_to_lowest_id() {
        let cfg = WorldConfig { num_devices: 3, num_mobile: 0, ..full_config() };
        let mut w = World::generate(cfg, &mut SimRng::seed_from_u64(0)).unwrap();
        // priorities 10, 10, 4
        for (d, (rate, buf)) in w.devices.iter_mut().zip([(20.0, 2500), (10.0, 5000), (4.0, 5000)]) {
            d.rate = rate;
            d.buffer = buf;
        }
        assert_eq!(w.select_target(), 0);
    }

    #[test]
    fn mobility_clamps_at_corner() {
        let cfg = WorldConfig { num_devices: 1, num_mobile: 1, mobility_grid: 1, ..full_config() };
        let mut w = World::generate(cfg, &mut SimRng::seed_from_u64(0)).unwrap();
        // a one-point lattice is the zero offset; use a 2-point lattice to force +-step
        w.config.mobility_grid = 2;
        w.config.mobility_step = 50.0;
        let mut rng = SimRng::seed_from_u64(9);
        for _ in 0..50 {
            w.devices[0].pos = Point::new(400.0, 0.0);
            w.step_mobility(&mut rng);
            let p = w.devices[0].pos;
            assert!(p.x == 350.0 || p.x == 400.0, "{p:?}");
            assert!(p.y == 0.0 || p.y == 50.0, "{p:?}");
        }
    }

    #[test]
    fn stationary_world_does_not_move() {
        let cfg = WorldConfig { num_mobile: 0, ..full_config() };
        let mut w = World::generate(cfg, &mut SimRng::seed_from_u64(5)).unwrap();
        let before = w.clone();
        let mut rng = SimRng::seed_from_u64(6);
        for _ in 0..10 {
            w.step_mobility(&mut rng);
        }
        assert_eq!(w, before);
    }

    #[test]
    fn random_walk_is_unbiased() {
        let cfg = WorldConfig { num_devices: 1, num_mobile: 1, area_side: 1e9, ..full_config() };
        let mut w = World::generate(cfg, &mut SimRng::seed_from_u64(0)).unwrap();
        w.devices[0].pos = Point::new(5e8, 5e8);
        let mut rng = SimRng::seed_from_u64(11);
        let n = 10_000;
        let (mut sx, mut sy) = (0.0, 0.0);
        let mut prev = w.devices[0].pos;
        for _ in 0..n {
            w.step_mobility(&mut rng);
            let p = w.devices[0].pos;
            sx += p.x - prev.x;
            sy += p.y - prev.y;
            prev = p;
        }
        // per-step variance of a uniform 21-point lattice on [-2, 2]
        let var: f64 = (0..21).map(|i| lattice_offset(i, 21, 2.0).powi(2)).sum::<f64>() / 21.0;
        let sigma_mean = (var / n as f64).sqrt();
        assert!((sx / n as f64).abs() < 3.0 * sigma_mean);
        assert!((sy / n as f64).abs() < 3.0 * sigma_mean);
    }

    #[test]
    fn select_target_matches_exhaustive_scan() {
        let cfg = WorldConfig { num_devices: 50, num_mobile: 10, ..full_config() };
        let mut rng = SimRng::seed_from_u64(77);
        let mut w = World::generate(cfg, &mut rng).unwrap();
        for _ in 0..30 {
            for d in w.devices.iter_mut() {
                d.buffer = rng.random_range(0..=5000);
            }
            let scores: Vec<f64> = (0..50).map(|i| w.devices[i].rate * w.devices[i].buffer as f64 / 5000.0).collect();
            let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let expected = scores.iter().position(|s| *s == max).unwrap();
            assert_eq!(w.select_target(), expected);
        }
    }

    proptest::proptest! {
        #[test]
        fn buffers_stay_bounded_and_accounted(
            seed in 0u64..1000,
            l_max in 1u64..200,
            steps in 1usize..60,
        ) {
            let cfg = WorldConfig { num_devices: 4, num_mobile: 1, l_max, ..full_config() };
            let mut rng = SimRng::seed_from_u64(seed);
            let mut w = World::generate(cfg, &mut rng).unwrap();
            let mut dropped_total = vec![0u64; 4];
            for _ in 0..steps {
                let dropped = w.advance(&mut rng);
                for (t, d) in dropped_total.iter_mut().zip(&dropped) { *t += d; }
                for d in &w.devices { proptest::prop_assert!(d.buffer <= l_max); }
            }
            // arrivals are only observable through buffer + dropped
            for (d, dropped) in w.devices.iter().zip(&dropped_total) {
                proptest::prop_assert!(*dropped == 0 || d.buffer == l_max);
            }
        }

        #[test]
        fn admission_conserves_packets(buf in 0u64..=5000, arrivals in 0u64..10_000) {
            let adm = admit(buf, arrivals, 5000);
            proptest::prop_assert!(adm.buffer <= 5000);
            proptest::prop_assert_eq!(adm.dropped, buf + arrivals - adm.buffer);
        }

        #[test]
        fn priority_monotone_in_buffer(buf in 0u64..4999, rate_idx in 0usize..4) {
            let cfg = full_config();
            let rate = cfg.rate_choices[rate_idx];
            proptest::prop_assert!(upload_priority(&single(buf + 1, rate), &cfg) > upload_priority(&single(buf, rate), &cfg));
        }

        #[test]
        fn priority_monotone_in_rate(buf in 1u64..=5000, r in 0.1f64..50.0) {
            let cfg = full_config();
            proptest::prop_assert!(upload_priority(&single(buf, r * 1.01), &cfg) > upload_priority(&single(buf, r), &cfg));
        }
    }
}
