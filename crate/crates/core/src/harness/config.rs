//! Flat `key = value` run configuration.
//!
//! Lines starting with `#` and anything after a `#` are ignored. Unknown keys
//! are errors. Keys not given take their defaults; `scenario = desk` swaps in
//! the small desk-scale defaults before the other keys are applied. Some
//! quantities can be written in one of two units (for example `p_downlink`
//! in watts or `p_downlink_dbm`); giving both is an error.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use crate::ddpg::{Hyper, WeightVector};
use crate::env::EnvConfig;
use crate::error::ConfigError;
use crate::power::{db_to_linear, dbm_to_watts};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    /// 100 devices on a 400 m square, 600 s missions, 1600 episodes.
    Full,
    /// 10 devices on a 100 m square, 120 s missions, 300 episodes, small networks.
    Desk,
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub env: EnvConfig,
    pub hyper: Hyper,
    pub weights: WeightVector,
    pub seed: u64,
    pub eval_episodes: usize,
    pub checkpoint_every: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::for_scenario(Scenario::Full)
    }
}

/// Accepted keys and the quantity each one sets. Keys sharing a quantity are
/// alternative spellings of it.
const KEYS: &[(&str, &str)] = &[
    ("scenario", "scenario"),
    ("seed", "seed"),
    ("eval_episodes", "eval_episodes"),
    ("checkpoint_every", "checkpoint_every"),
    ("preset", "weights"),
    ("w_dc", "w_dc"),
    ("w_eh", "w_eh"),
    ("w_ec", "w_ec"),
    ("num_devices", "num_devices"),
    ("num_mobile", "num_mobile"),
    ("area_side", "area_side"),
    ("l_max", "l_max"),
    ("q_bits", "q_bits"),
    ("dt", "dt"),
    ("rate_choices", "rate_choices"),
    ("mobility_step", "mobility_step"),
    ("mobility_grid", "mobility_grid"),
    ("gamma0", "gamma0"),
    ("gamma0_db", "gamma0"),
    ("alpha", "alpha"),
    ("mu_nlos", "mu_nlos"),
    ("los_a", "los_a"),
    ("los_b", "los_b"),
    ("altitude", "altitude"),
    ("p0", "p0"),
    ("p_induced", "p_induced"),
    ("u_tip", "u_tip"),
    ("v0", "v0"),
    ("d0_drag", "d0_drag"),
    ("rho", "rho"),
    ("solidity", "solidity"),
    ("disc_area", "disc_area"),
    ("p_limit", "p_limit"),
    ("p_limit_uw", "p_limit"),
    ("eh_c", "eh_c"),
    ("eh_d", "eh_d"),
    ("eh_d_uw", "eh_d"),
    ("p_downlink", "p_downlink"),
    ("p_downlink_dbm", "p_downlink"),
    ("p_uplink", "p_uplink"),
    ("p_uplink_dbm", "p_uplink"),
    ("noise", "noise"),
    ("noise_dbm", "noise"),
    ("bandwidth", "bandwidth"),
    ("mission_secs", "mission_secs"),
    ("v_max", "v_max"),
    ("d_dc", "d_dc"),
    ("d_eh", "d_eh"),
    ("episodes", "episodes"),
    ("gamma", "gamma"),
    ("tau", "tau"),
    ("lr_actor", "lr_actor"),
    ("lr_critic", "lr_critic"),
    ("replay_capacity", "replay_capacity"),
    ("batch_size", "batch_size"),
    ("sigma2", "sigma2"),
    ("eps_start", "eps_start"),
    ("eps_decay", "eps_decay"),
    ("eps_floor", "eps_floor"),
    ("actor_hidden", "actor_hidden"),
    ("critic_hidden", "critic_hidden"),
    ("reward_scale", "reward_scale"),
    ("normalize_rewards", "normalize_rewards"),
];

struct Entry<'a> {
    line: usize,
    key: &'a str,
    value: &'a str,
}

impl Entry<'_> {
    fn bad(&self) -> ConfigError {
        ConfigError::Unparsable { line: self.line, key: self.key.to_owned(), value: self.value.to_owned() }
    }

    fn f64(&self) -> Result<f64, ConfigError> {
        self.value.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| self.bad())
    }

    fn u64(&self) -> Result<u64, ConfigError> {
        self.value.parse().map_err(|_| self.bad())
    }

    fn usize(&self) -> Result<usize, ConfigError> {
        self.value.parse().map_err(|_| self.bad())
    }

    fn bool(&self) -> Result<bool, ConfigError> {
        self.value.parse().map_err(|_| self.bad())
    }

    fn list<T: std::str::FromStr>(&self) -> Result<Vec<T>, ConfigError> {
        if self.value.trim().is_empty() {
            return Ok(Vec::new());
        }
        self.value.split(',').map(|s| s.trim().parse().map_err(|_| self.bad())).collect()
    }
}

impl RunConfig {
    pub fn for_scenario(scenario: Scenario) -> Self {
        let (env, hyper) = match scenario {
            Scenario::Full => (EnvConfig::default(), Hyper::default()),
            Scenario::Desk => (EnvConfig::desk(), Hyper::desk()),
        };
        Self { env, hyper, weights: WeightVector::sodr(), seed: 1, eval_episodes: 10, checkpoint_every: 100 }
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.to_owned(), source })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = Vec::new();
        let mut seen: HashSet<&str> = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .filter(|(k, _)| !k.is_empty())
                .ok_or_else(|| ConfigError::Syntax { line, text: raw.trim().to_owned() })?;
            let quantity = KEYS
                .iter()
                .find(|(k, _)| *k == key)
                .map(|(_, q)| *q)
                .ok_or_else(|| ConfigError::UnknownKey { line, key: key.to_owned() })?;
            if !seen.insert(quantity) {
                return Err(ConfigError::DuplicateKey { line, key: key.to_owned() });
            }
            entries.push(Entry { line, key, value });
        }
        if seen.contains("weights") {
            if let Some(e) = entries.iter().find(|e| e.key.starts_with("w_")) {
                return Err(ConfigError::DuplicateKey { line: e.line, key: e.key.to_owned() });
            }
        }

        let scenario = match entries.iter().find(|e| e.key == "scenario") {
            None => Scenario::Full,
            Some(e) => match e.value.to_ascii_lowercase().as_str() {
                "full" => Scenario::Full,
                "desk" => Scenario::Desk,
                _ => return Err(e.bad()),
            },
        };
        let mut cfg = Self::for_scenario(scenario);
        for e in &entries {
            cfg.apply(e)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, e: &Entry) -> Result<(), ConfigError> {
        let env = &mut self.env;
        let h = &mut self.hyper;
        match e.key {
            "scenario" => {}
            "seed" => self.seed = e.u64()?,
            "eval_episodes" => self.eval_episodes = e.usize()?,
            "checkpoint_every" => self.checkpoint_every = e.usize()?,
            "preset" => self.weights = WeightVector::preset(e.value).ok_or_else(|| e.bad())?,
            "w_dc" => self.weights.w_dc = e.f64()?,
            "w_eh" => self.weights.w_eh = e.f64()?,
            "w_ec" => self.weights.w_ec = e.f64()?,
            "num_devices" => env.world.num_devices = e.usize()?,
            "num_mobile" => env.world.num_mobile = e.usize()?,
            "area_side" => env.world.area_side = e.f64()?,
            "l_max" => env.world.l_max = e.u64()?,
            "q_bits" => env.world.q_bits = e.f64()?,
            "dt" => env.world.dt = e.f64()?,
            "rate_choices" => env.world.rate_choices = e.list()?,
            "mobility_step" => env.world.mobility_step = e.f64()?,
            "mobility_grid" => env.world.mobility_grid = e.usize()?,
            "gamma0" => env.channel.gamma0 = e.f64()?,
            "gamma0_db" => env.channel.gamma0 = db_to_linear(e.f64()?),
            "alpha" => env.channel.alpha = e.f64()?,
            "mu_nlos" => env.channel.mu_nlos = e.f64()?,
            "los_a" => env.channel.los_a = e.f64()?,
            "los_b" => env.channel.los_b = e.f64()?,
            "altitude" => env.channel.altitude = e.f64()?,
            "p0" => env.propulsion.p0 = e.f64()?,
            "p_induced" => env.propulsion.p_induced = e.f64()?,
            "u_tip" => env.propulsion.u_tip = e.f64()?,
            "v0" => env.propulsion.v0 = e.f64()?,
            "d0_drag" => env.propulsion.d0_drag = e.f64()?,
            "rho" => env.propulsion.rho = e.f64()?,
            "solidity" => env.propulsion.solidity = e.f64()?,
            "disc_area" => env.propulsion.disc_area = e.f64()?,
            "p_limit" => env.eh.p_limit = e.f64()?,
            "p_limit_uw" => env.eh.p_limit = e.f64()? * 1e-6,
            "eh_c" => env.eh.c = e.f64()?,
            "eh_d" => env.eh.d = e.f64()?,
            "eh_d_uw" => env.eh.d = e.f64()? * 1e-6,
            "p_downlink" => env.radio.p_downlink = e.f64()?,
            "p_downlink_dbm" => env.radio.p_downlink = dbm_to_watts(e.f64()?),
            "p_uplink" => env.radio.p_uplink = e.f64()?,
            "p_uplink_dbm" => env.radio.p_uplink = dbm_to_watts(e.f64()?),
            "noise" => env.radio.noise = e.f64()?,
            "noise_dbm" => env.radio.noise = dbm_to_watts(e.f64()?),
            "bandwidth" => env.radio.bandwidth = e.f64()?,
            "mission_secs" => env.mission_secs = e.f64()?,
            "v_max" => env.v_max = e.f64()?,
            "d_dc" => env.d_dc = e.f64()?,
            "d_eh" => env.d_eh = e.f64()?,
            "episodes" => h.episodes = e.usize()?,
            "gamma" => h.gamma = e.f64()?,
            "tau" => h.tau = e.f64()?,
            "lr_actor" => h.lr_actor = e.f64()?,
            "lr_critic" => h.lr_critic = e.f64()?,
            "replay_capacity" => h.replay_capacity = e.usize()?,
            "batch_size" => h.batch_size = e.usize()?,
            "sigma2" => h.sigma2 = e.f64()?,
            "eps_start" => h.eps_start = e.f64()?,
            "eps_decay" => h.eps_decay = e.f64()?,
            "eps_floor" => h.eps_floor = e.f64()?,
            "actor_hidden" => h.actor_hidden = e.list()?,
            "critic_hidden" => h.critic_hidden = e.list()?,
            "reward_scale" => h.reward_scale = e.f64()?,
            "normalize_rewards" => h.normalize_rewards = e.bool()?,
            other => unreachable!("key `{other}` listed but not handled"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.env.validate()?;
        self.hyper.validate()?;
        WeightVector::new(self.weights.w_dc, self.weights.w_eh, self.weights.w_ec)?;
        if self.eval_episodes == 0 {
            return Err(ConfigError::out_of_range("eval_episodes", "must be at least 1"));
        }
        if self.checkpoint_every == 0 {
            return Err(ConfigError::out_of_range("checkpoint_every", "must be at least 1"));
        }
        Ok(())
    }

    /// Fully resolved configuration in SI units. Floats are written in their
    /// shortest round-trip form, so `parse(to_manifest())` gives back `self`.
    pub fn to_manifest(&self) -> String {
        let list = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ");
        let ints = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
        let (env, h, w) = (&self.env, &self.hyper, &self.weights);
        let mut s = String::from("# resolved run configuration\n");
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("seed", self.seed.to_string());
        put("eval_episodes", self.eval_episodes.to_string());
        put("checkpoint_every", self.checkpoint_every.to_string());
        put("w_dc", format!("{:?}", w.w_dc));
        put("w_eh", format!("{:?}", w.w_eh));
        put("w_ec", format!("{:?}", w.w_ec));
        put("num_devices", env.world.num_devices.to_string());
        put("num_mobile", env.world.num_mobile.to_string());
        put("area_side", format!("{:?}", env.world.area_side));
        put("l_max", env.world.l_max.to_string());
        put("q_bits", format!("{:?}", env.world.q_bits));
        put("dt", format!("{:?}", env.world.dt));
        put("rate_choices", list(&env.world.rate_choices));
        put("mobility_step", format!("{:?}", env.world.mobility_step));
        put("mobility_grid", env.world.mobility_grid.to_string());
        put("gamma0", format!("{:?}", env.channel.gamma0));
        put("alpha", format!("{:?}", env.channel.alpha));
        put("mu_nlos", format!("{:?}", env.channel.mu_nlos));
        put("los_a", format!("{:?}", env.channel.los_a));
        put("los_b", format!("{:?}", env.channel.los_b));
        put("altitude", format!("{:?}", env.channel.altitude));
        put("p0", format!("{:?}", env.propulsion.p0));
        put("p_induced", format!("{:?}", env.propulsion.p_induced));
        put("u_tip", format!("{:?}", env.propulsion.u_tip));
        put("v0", format!("{:?}", env.propulsion.v0));
        put("d0_drag", format!("{:?}", env.propulsion.d0_drag));
        put("rho", format!("{:?}", env.propulsion.rho));
        put("solidity", format!("{:?}", env.propulsion.solidity));
        put("disc_area", format!("{:?}", env.propulsion.disc_area));
        put("p_limit", format!("{:?}", env.eh.p_limit));
        put("eh_c", format!("{:?}", env.eh.c));
        put("eh_d", format!("{:?}", env.eh.d));
        put("p_downlink", format!("{:?}", env.radio.p_downlink));
        put("p_uplink", format!("{:?}", env.radio.p_uplink));
        put("noise", format!("{:?}", env.radio.noise));
        put("bandwidth", format!("{:?}", env.radio.bandwidth));
        put("mission_secs", format!("{:?}", env.mission_secs));
        put("v_max", format!("{:?}", env.v_max));
        put("d_dc", format!("{:?}", env.d_dc));
        put("d_eh", format!("{:?}", env.d_eh));
        put("episodes", h.episodes.to_string());
        put("gamma", format!("{:?}", h.gamma));
        put("tau", format!("{:?}", h.tau));
        put("lr_actor", format!("{:?}", h.lr_actor));
        put("lr_critic", format!("{:?}", h.lr_critic));
        put("replay_capacity", h.replay_capacity.to_string());
        put("batch_size", h.batch_size.to_string());
        put("sigma2", format!("{:?}", h.sigma2));
        put("eps_start", format!("{:?}", h.eps_start));
        put("eps_decay", format!("{:?}", h.eps_decay));
        put("eps_floor", format!("{:?}", h.eps_floor));
        put("actor_hidden", ints(&h.actor_hidden));
        put("critic_hidden", ints(&h.critic_hidden));
        put("reward_scale", format!("{:?}", h.reward_scale));
        put("normalize_rewards", h.normalize_rewards.to_string());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = RunConfig::parse("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        let e = &cfg.env;
        assert_eq!(e.radio.bandwidth, 1e6);
        assert!((e.radio.noise - 1e-12).abs() < 1e-24);
        assert!((e.channel.gamma0 - 1e-3).abs() < 1e-15);
        assert_eq!((e.channel.mu_nlos, e.channel.alpha, e.channel.los_a, e.channel.los_b), (0.2, 2.3, 10.0, 0.6));
        assert_eq!((e.propulsion.p0, e.propulsion.p_induced, e.propulsion.u_tip), (79.86, 88.63, 120.0));
        assert_eq!((e.propulsion.v0, e.propulsion.d0_drag, e.propulsion.rho, e.propulsion.disc_area), (4.03, 0.6, 1.225, 0.503));
        assert_eq!((e.eh.p_limit, e.eh.c, e.eh.d), (9.079e-6, 47083.0, 2.9e-6));
        assert_eq!((cfg.hyper.lr_actor, cfg.hyper.lr_critic, cfg.hyper.episodes), (1e-3, 1e-3, 1600));
        assert_eq!((e.world.num_devices, e.world.area_side, e.mission_secs, e.channel.altitude), (100, 400.0, 600.0, 10.0));
        assert_eq!((e.v_max, e.d_dc, e.d_eh), (20.0, 10.0, 30.0));
        assert_eq!(e.radio.p_downlink, 10.0);
        assert!((e.radio.p_uplink - 1e-5).abs() < 1e-18);
        assert_eq!((e.world.l_max, e.world.q_bits), (5000, 10e6));
    }

    #[test]
    fn single_override() {
        let cfg = RunConfig::parse("v_max = 10  # slower\n").unwrap();
        let mut expect = RunConfig::default();
        expect.env.v_max = 10.0;
        assert_eq!(cfg, expect);
    }

    #[test]
    fn dbm_keys_convert() {
        let cfg = RunConfig::parse("p_downlink_dbm = 40\nnoise_dbm = -90\ngamma0_db = -30").unwrap();
        assert_eq!(cfg.env.radio.p_downlink, 10.0);
        let cfg = RunConfig::parse("p_limit_uw = 9.079").unwrap();
        assert!((cfg.env.eh.p_limit - 9.079e-6).abs() < 1e-18);
    }

    #[test]
    fn desk_scenario() {
        let cfg = RunConfig::parse("# small\nscenario = desk\nseed = 4\n").unwrap();
        assert_eq!(cfg.env, EnvConfig::desk());
        assert_eq!(cfg.hyper, Hyper::desk());
        assert_eq!(cfg.seed, 4);
    }

    #[test]
    fn weights_from_preset_or_keys() {
        assert_eq!(RunConfig::parse("preset = soec").unwrap().weights, WeightVector::soec());
        let w = RunConfig::parse("w_dc = 3\nw_ec = 0.5").unwrap().weights;
        assert_eq!((w.w_dc, w.w_eh, w.w_ec, w.w_aux), (3.0, 1.0, 0.5, 1.0));
    }

    #[test]
    fn lists() {
        let cfg = RunConfig::parse("actor_hidden = 32, 16\nrate_choices = 1,2.5").unwrap();
        assert_eq!(cfg.hyper.actor_hidden, vec![32, 16]);
        assert_eq!(cfg.env.world.rate_choices, vec![1.0, 2.5]);
    }

    #[test]
    fn manifest_round_trips() {
        for text in ["", "scenario = desk\npreset = soec\nseed = 77", "gamma0_db = -31.7\nnoise_dbm = -93.3\nv_max = 13.7"] {
            let cfg = RunConfig::parse(text).unwrap();
            assert_eq!(RunConfig::parse(&cfg.to_manifest()).unwrap(), cfg);
        }
    }

    #[test]
    fn errors_name_the_key() {
        let cases = [
            ("bogus = 1", "bogus"),
            ("v_max = fast", "v_max"),
            ("v_max = 1\nv_max = 2", "v_max"),
            ("p_downlink = 10\np_downlink_dbm = 40", "p_downlink_dbm"),
            ("preset = sodr\nw_dc = 1", "w_dc"),
            ("v_max = -1", "v_max"),
            ("gamma = 2", "gamma"),
            ("preset = best", "preset"),
        ];
        for (text, key) in cases {
            let err = RunConfig::parse(text).unwrap_err();
            assert!(err.to_string().contains(key), "`{text}` gave `{err}`");
        }
        assert!(matches!(RunConfig::parse("just words").unwrap_err(), ConfigError::Syntax { line: 1, .. }));
        assert!(matches!(RunConfig::parse("bogus = 1").unwrap_err(), ConfigError::UnknownKey { .. }));
        assert!(matches!(RunConfig::parse("v_max=1\nv_max=1").unwrap_err(), ConfigError::DuplicateKey { line: 2, .. }));
        assert!(matches!(RunConfig::parse("v_max = x").unwrap_err(), ConfigError::Unparsable { .. }));
        assert!(matches!(RunConfig::parse("v_max = 0").unwrap_err(), ConfigError::OutOfRange { .. }));
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = RunConfig::load(Path::new("/nonexistent/run.cfg")).unwrap_err();
        assert!(matches!(err, ConfigError::Io { .. }));
    }
}
