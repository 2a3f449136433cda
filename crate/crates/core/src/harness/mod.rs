//! Run orchestration: training with checkpoints, evaluation, physics
//! curves, preset sweeps and the gradient self-check.

mod config;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rayon::prelude::*;

pub use config::{RunConfig, Scenario};

use crate::channel::los_probability;
use crate::ddpg::{evaluate, EpisodeLog, EvalReport, Trainer, WeightVector, ACTION_DIM};
use crate::env::OBS_DIM;
use crate::error::{Error, Result};
use crate::nn::{gradient_check, random_check_case, Mlp};
use crate::power::{harvested_power, propulsion_power};
use crate::SimRng;

pub const MANIFEST_FILE: &str = "manifest.cfg";
pub const LOG_FILE: &str = "training_log.csv";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const ACTOR_FILE: &str = "actor.txt";
pub const CRITIC_FILE: &str = "critic.txt";
pub const TRAINER_FILE: &str = "trainer.json";
pub const EVAL_FILE: &str = "eval.csv";
pub const COMPARISON_FILE: &str = "comparison.csv";
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 2;
    pub const CONFIG: i32 = 3;
    pub const RUNTIME: i32 = 4;
    pub const PARTIAL_SWEEP: i32 = 5;
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => exit::CONFIG,
        _ => exit::RUNTIME,
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Continue from the newest checkpoint in the output directory.
    pub resume: bool,
    /// Stop after this many episodes in this invocation.
    pub stop_after: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    /// Episodes completed in total, including any resumed ones.
    pub episodes: usize,
    pub checkpoints: Vec<PathBuf>,
    pub last_log: Option<EpisodeLog>,
}

fn checkpoint_path(out: &Path, episode: usize) -> PathBuf {
    out.join(CHECKPOINT_DIR).join(format!("ep{episode:06}"))
}

/// Newest checkpoint directory that holds a trainer snapshot.
pub fn latest_checkpoint(out: &Path) -> Option<(usize, PathBuf)> {
    let entries = fs::read_dir(out.join(CHECKPOINT_DIR)).ok()?;
    entries
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().to_string_lossy().into_owned();
            let ep: usize = name.strip_prefix("ep")?.parse().ok()?;
            e.path().join(TRAINER_FILE).is_file().then(|| (ep, e.path()))
        })
        .max_by_key(|(ep, _)| *ep)
}

fn write_checkpoint(trainer: &Trainer, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    trainer.agent.actor.save(&dir.join(ACTOR_FILE))?;
    trainer.agent.critic.save(&dir.join(CRITIC_FILE))?;
    write_file(&dir.join(TRAINER_FILE), &trainer.to_json()?)
}

fn load_trainer(dir: &Path) -> Result<Trainer> {
    let path = dir.join(TRAINER_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    Trainer::from_json(&text).map_err(|reason| Error::Checkpoint { path: path.display().to_string(), reason })
}

/// Keeps the header and the rows of episodes `1..=episodes`.
fn truncate_log(path: &Path, episodes: usize) -> Result<String> {
    let text = fs::read_to_string(path).unwrap_or_default();
    let mut kept = format!("{}\n", EpisodeLog::CSV_HEADER);
    for line in text.lines().skip(1) {
        match line.split(',').next().and_then(|s| s.parse::<usize>().ok()) {
            Some(ep) if ep <= episodes => {
                kept.push_str(line);
                kept.push('\n');
            }
            _ => break,
        }
    }
    Ok(kept)
}

/// Trains one policy into `out`: a manifest of the resolved configuration,
/// a per-episode log, checkpoints every `checkpoint_every` episodes and at
/// the end, and the final actor/critic at the top of `out`.
pub fn cmd_train(run: &RunConfig, out: &Path, opts: &TrainOptions) -> Result<TrainSummary> {
    run.validate()?;
    create_dir(out)?;
    let log_path = out.join(LOG_FILE);

    let (mut trainer, log_prefix) = match latest_checkpoint(out).filter(|_| opts.resume) {
        Some((ep, dir)) => {
            let mut t = load_trainer(&dir)?;
            let mut expect = run.hyper.clone();
            expect.episodes = t.hyper.episodes;
            if t.env_config != run.env || t.hyper != expect || t.weights != run.weights {
                return Err(Error::Checkpoint {
                    path: dir.display().to_string(),
                    reason: "checkpoint was written with a different configuration".into(),
                });
            }
            t.hyper.episodes = run.hyper.episodes;
            log::info!("resuming from {} (episode {ep})", dir.display());
            (t, truncate_log(&log_path, ep)?)
        }
        None => (
            Trainer::new(run.env.clone(), run.hyper.clone(), run.weights, run.seed)?,
            format!("{}\n", EpisodeLog::CSV_HEADER),
        ),
    };
    write_file(&out.join(MANIFEST_FILE), &run.to_manifest())?;

    let file = File::create(&log_path).map_err(|e| Error::io(format!("creating {}", log_path.display()), e))?;
    let mut log = BufWriter::new(file);
    let io = |e| Error::io(format!("writing {}", log_path.display()), e);
    log.write_all(log_prefix.as_bytes()).map_err(io)?;

    let mut checkpoints = Vec::new();
    let mut last_log = None;
    let mut ran = 0;
    while !trainer.is_finished() && opts.stop_after.is_none_or(|n| ran < n) {
        let entry = trainer.run_episode()?;
        ran += 1;
        writeln!(log, "{}", entry.csv_row()).map_err(io)?;
        log.flush().map_err(io)?;
        let ep = trainer.episode;
        if ep % run.checkpoint_every == 0 || trainer.is_finished() {
            let dir = checkpoint_path(out, ep);
            write_checkpoint(&trainer, &dir)?;
            log::info!("episode {ep}: return {:.1}, checkpoint {}", entry.ret, dir.display());
            checkpoints.push(dir);
        } else {
            log::debug!("episode {ep}: return {:.1}", entry.ret);
        }
        last_log = Some(entry);
    }
    if trainer.is_finished() {
        trainer.agent.actor.save(&out.join(ACTOR_FILE))?;
        trainer.agent.critic.save(&out.join(CRITIC_FILE))?;
    }
    Ok(TrainSummary { episodes: trainer.episode, checkpoints, last_log })
}

/// Layer sizes an actor built from `run` has.
pub fn expected_actor_sizes(run: &RunConfig) -> Vec<usize> {
    std::iter::once(OBS_DIM).chain(run.hyper.actor_hidden.iter().copied()).chain([ACTION_DIM]).collect()
}

/// Noise-free evaluation of a saved actor.
pub fn cmd_eval(checkpoint: &Path, run: &RunConfig, episodes: usize) -> Result<EvalReport> {
    run.validate()?;
    if episodes == 0 {
        return Err(Error::InvalidArgument("evaluation needs at least one episode".into()));
    }
    let actor = Mlp::load(checkpoint)?;
    let expect = expected_actor_sizes(run);
    if actor.sizes() != expect {
        return Err(Error::Shape(format!(
            "checkpoint {} has layer sizes {:?} but the configuration's actor has {:?}",
            checkpoint.display(),
            actor.sizes(),
            expect
        )));
    }
    evaluate(&actor, &run.env, episodes, run.seed)
}

pub const PROPULSION_CURVE: &str = "propulsion_power.csv";
pub const HARVEST_CURVE: &str = "harvested_power.csv";
pub const LOS_CURVE: &str = "los_probability.csv";

/// Propulsion power over speed, harvester response over received power and
/// LoS probability over elevation, one CSV each.
pub fn cmd_curves(run: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    run.validate()?;
    create_dir(out)?;
    let env = &run.env;

    let mut p = String::from("speed_mps,power_w\n");
    for i in 0..=200 {
        let v = i as f64 / 10.0;
        p.push_str(&format!("{v},{}\n", propulsion_power(v, &env.propulsion)?));
    }
    let mut h = String::from("received_uw,harvested_uw\n");
    for i in 0..=1000 {
        let pr = i as f64 / 10.0;
        h.push_str(&format!("{pr},{}\n", harvested_power(pr * 1e-6, &env.eh) * 1e6));
    }
    let mut l = String::from("elevation_deg,los_probability\n");
    for i in 1..=900 {
        let theta = i as f64 / 10.0;
        l.push_str(&format!("{theta},{}\n", los_probability(theta, &env.channel)));
    }
    let mut paths = Vec::new();
    for (name, body) in [(PROPULSION_CURVE, p), (HARVEST_CURVE, h), (LOS_CURVE, l)] {
        let path = out.join(name);
        write_file(&path, &body)?;
        paths.push(path);
    }
    Ok(paths)
}

/// One design of a sweep: a name and its weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub name: String,
    pub weights: WeightVector,
}

impl Design {
    pub fn preset(name: &str) -> Result<Self> {
        let weights = WeightVector::preset(name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown preset `{name}`; expected sodr or soec")))?;
        Ok(Self { name: name.to_ascii_lowercase(), weights })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub design: String,
    pub seed: u64,
    pub outcome: std::result::Result<EvalReport, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
}

impl SweepOutcome {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.outcome.is_err()).count()
    }
}

pub const COMPARISON_HEADER: &str = "design,seed,avg_rate_mbps,avg_power_w,harvested_uJ,hovers,status";

fn csv_quote(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\"").replace('\n', " "))
}

/// Per-run rows, then one `mean` row per design over its successful runs.
pub fn comparison_csv(outcome: &SweepOutcome, designs: &[Design]) -> String {
    let mut s = format!("{COMPARISON_HEADER}\n");
    for r in &outcome.rows {
        match &r.outcome {
            Ok(e) => s.push_str(&format!(
                "{},{},{},{},{},{},ok\n",
                r.design, r.seed, e.avg_rate_mbps.mean, e.avg_power_w.mean, e.harvested_uj.mean, e.hovers.mean
            )),
            Err(msg) => s.push_str(&format!("{},{},,,,,{}\n", r.design, r.seed, csv_quote(&format!("failed: {msg}")))),
        }
    }
    for d in designs {
        let ok: Vec<&EvalReport> =
            outcome.rows.iter().filter(|r| r.design == d.name).filter_map(|r| r.outcome.as_ref().ok()).collect();
        if ok.is_empty() {
            continue;
        }
        let n = ok.len() as f64;
        let mean = |f: fn(&EvalReport) -> f64| ok.iter().map(|e| f(e)).sum::<f64>() / n;
        s.push_str(&format!(
            "{},mean,{},{},{},{},ok\n",
            d.name,
            mean(|e| e.avg_rate_mbps.mean),
            mean(|e| e.avg_power_w.mean),
            mean(|e| e.harvested_uj.mean),
            mean(|e| e.hovers.mean)
        ));
    }
    s
}

fn sweep_one(run: &RunConfig, design: &Design, seed: u64, out: &Path) -> Result<EvalReport> {
    let mut cfg = run.clone();
    cfg.weights = design.weights;
    cfg.seed = seed;
    let dir = out.join(format!("{}_seed{seed}", design.name));
    cmd_train(&cfg, &dir, &TrainOptions::default())?;
    let report = cmd_eval(&dir.join(ACTOR_FILE), &cfg, cfg.eval_episodes)?;
    write_file(&dir.join(EVAL_FILE), &report.to_csv())?;
    Ok(report)
}

/// Trains and evaluates every (design, seed) pair on `jobs` worker threads
/// and writes `comparison.csv`. A failed run is recorded and the sweep goes on.
pub fn cmd_sweep(run: &RunConfig, designs: &[Design], seeds: &[u64], out: &Path, jobs: usize) -> Result<SweepOutcome> {
    run.validate()?;
    if designs.is_empty() || seeds.is_empty() {
        return Err(Error::InvalidArgument("sweep needs at least one design and one seed".into()));
    }
    create_dir(out)?;
    let grid: Vec<(&Design, u64)> = designs.iter().flat_map(|d| seeds.iter().map(move |s| (d, *s))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))?;
    let rows: Vec<SweepRow> = pool.install(|| {
        grid.par_iter()
            .map(|(d, seed)| {
                let outcome = sweep_one(run, d, *seed, out).map_err(|e| e.to_string());
                if let Err(msg) = &outcome {
                    log::warn!("{} seed {seed} failed: {msg}", d.name);
                }
                SweepRow { design: d.name.clone(), seed: *seed, outcome }
            })
            .collect()
    });
    let outcome = SweepOutcome { rows };
    write_file(&out.join(COMPARISON_FILE), &comparison_csv(&outcome, designs))?;
    Ok(outcome)
}

/// Finite-difference check of backpropagation on `cases` random networks.
/// Returns the per-case maximum relative error.
pub fn cmd_gradcheck(cases: usize, seed: u64) -> Result<Vec<f64>> {
    let mut rng = SimRng::seed_from_u64(seed);
    let mut errors = Vec::with_capacity(cases);
    for _ in 0..cases {
        let (mut mlp, input, weights) = random_check_case(&mut rng)?;
        errors.push(gradient_check(&mut mlp, &input, &weights, 1e-5)?);
    }
    Ok(errors)
}

/// Parses `1..5` (inclusive) or `1,3,7`.
pub fn parse_seeds(text: &str) -> std::result::Result<Vec<u64>, String> {
    let text = text.trim();
    if let Some((a, b)) = text.split_once("..") {
        let b = b.strip_prefix('=').unwrap_or(b);
        let lo: u64 = a.trim().parse().map_err(|_| format!("bad seed range `{text}`"))?;
        let hi: u64 = b.trim().parse().map_err(|_| format!("bad seed range `{text}`"))?;
        if lo > hi {
            return Err(format!("empty seed range `{text}`"));
        }
        return Ok((lo..=hi).collect());
    }
    text.split(',').map(|s| s.trim().parse().map_err(|_| format!("bad seed `{s}`"))).collect()
}
