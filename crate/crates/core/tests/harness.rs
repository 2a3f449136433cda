use std::fs;
use std::path::Path;

use skyharvest::ddpg::{stationary_actor, EpisodeLog, EvalReport};
use skyharvest::harness::{
    self, cmd_curves, cmd_eval, cmd_sweep, cmd_train, Design, RunConfig, TrainOptions, ACTOR_FILE, COMPARISON_FILE,
    COMPARISON_HEADER, HARVEST_CURVE, LOG_FILE, LOS_CURVE, MANIFEST_FILE, PROPULSION_CURVE,
};
use skyharvest::Error;

const TINY: &str = "scenario = desk
episodes = 10
mission_secs = 40
replay_capacity = 120
batch_size = 16
actor_hidden = 16
critic_hidden = 16
checkpoint_every = 5
eval_episodes = 2
seed = 3
";

fn tiny() -> RunConfig {
    RunConfig::parse(TINY).unwrap()
}

fn read(p: &Path) -> String {
    fs::read_to_string(p).unwrap()
}

#[test]
fn train_writes_log_checkpoints_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let summary = cmd_train(&tiny(), dir.path(), &TrainOptions::default()).unwrap();
    assert_eq!(summary.episodes, 10);
    assert_eq!(summary.checkpoints.len(), 2);
    let log = read(&dir.path().join(LOG_FILE));
    assert_eq!(log.lines().next().unwrap(), "episode,return,r_sum_mbit,e_harvest_uJ,e_consume_J,critic_loss,actor_obj,epsilon");
    assert_eq!(log.lines().count(), 11);
    for (i, line) in log.lines().skip(1).enumerate() {
        assert!(line.starts_with(&format!("{},", i + 1)));
        assert_eq!(line.split(',').count(), 8);
    }
    for ep in ["ep000005", "ep000010"] {
        let cp = dir.path().join("checkpoints").join(ep);
        for f in ["actor.txt", "critic.txt", "trainer.json"] {
            assert!(cp.join(f).is_file(), "{ep}/{f}");
        }
    }
    assert!(dir.path().join(ACTOR_FILE).is_file());
    let manifest = RunConfig::load(&dir.path().join(MANIFEST_FILE)).unwrap();
    assert_eq!(manifest, tiny());
}

#[test]
fn rerun_from_manifest_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    cmd_train(&tiny(), a.path(), &TrainOptions::default()).unwrap();
    let again = RunConfig::load(&a.path().join(MANIFEST_FILE)).unwrap();
    cmd_train(&again, b.path(), &TrainOptions::default()).unwrap();
    assert_eq!(read(&a.path().join(LOG_FILE)), read(&b.path().join(LOG_FILE)));
    assert_eq!(read(&a.path().join(ACTOR_FILE)), read(&b.path().join(ACTOR_FILE)));
}

#[test]
fn resumed_run_matches_uninterrupted_run() {
    let full = tempfile::tempdir().unwrap();
    cmd_train(&tiny(), full.path(), &TrainOptions::default()).unwrap();

    let part = tempfile::tempdir().unwrap();
    let first = cmd_train(&tiny(), part.path(), &TrainOptions { resume: false, stop_after: Some(7) }).unwrap();
    assert_eq!(first.episodes, 7);
    assert_eq!(read(&part.path().join(LOG_FILE)).lines().count(), 8);
    assert!(!part.path().join(ACTOR_FILE).exists());

    let rest = cmd_train(&tiny(), part.path(), &TrainOptions { resume: true, stop_after: None }).unwrap();
    assert_eq!(rest.episodes, 10);
    assert_eq!(rest.last_log.as_ref().map(|l| l.episode), Some(10));
    assert_eq!(read(&full.path().join(LOG_FILE)), read(&part.path().join(LOG_FILE)));
    assert_eq!(read(&full.path().join(ACTOR_FILE)), read(&part.path().join(ACTOR_FILE)));
}

#[test]
fn resume_rejects_changed_configuration() {
    let dir = tempfile::tempdir().unwrap();
    cmd_train(&tiny(), dir.path(), &TrainOptions { resume: false, stop_after: Some(5) }).unwrap();
    let mut other = tiny();
    other.hyper.tau = 0.01;
    let err = cmd_train(&other, dir.path(), &TrainOptions { resume: true, stop_after: None }).unwrap_err();
    assert!(matches!(err, Error::Checkpoint { .. }), "{err}");
}

#[test]
fn resume_can_extend_episode_count() {
    let dir = tempfile::tempdir().unwrap();
    cmd_train(&tiny(), dir.path(), &TrainOptions::default()).unwrap();
    let mut longer = tiny();
    longer.hyper.episodes = 12;
    let s = cmd_train(&longer, dir.path(), &TrainOptions { resume: true, stop_after: None }).unwrap();
    assert_eq!(s.episodes, 12);
    assert_eq!(read(&dir.path().join(LOG_FILE)).lines().count(), 13);
}

#[test]
fn unwritable_output_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let err = cmd_train(&tiny(), &blocker.join("out"), &TrainOptions::default()).unwrap_err();
    assert!(matches!(err, Error::Io { .. }));
}

fn save_stationary(cfg: &RunConfig, dir: &Path) -> std::path::PathBuf {
    let path = dir.join("still.txt");
    stationary_actor(&cfg.hyper.actor_hidden).unwrap().save(&path).unwrap();
    path
}

#[test]
fn eval_of_stationary_actor_reports_hover_power() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny();
    let path = save_stationary(&cfg, dir.path());
    let report = cmd_eval(&path, &cfg, 3).unwrap();
    assert!((report.avg_power_w.mean - 168.49).abs() < 1e-9);
    let csv = report.to_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), EvalReport::CSV_HEADER);
    assert_eq!(EvalReport::CSV_HEADER, "episode,avg_rate_mbps,avg_power_w,harvested_uJ,hovers");
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(str::to_owned).collect()).collect();
    assert_eq!(rows.len(), 5);
    assert_eq!(rows[3][0], "mean");
    assert_eq!(rows[4][0], "std");
    for col in 1..5 {
        let mean = rows[..3].iter().map(|r| r[col].parse::<f64>().unwrap()).sum::<f64>() / 3.0;
        assert!((rows[3][col].parse::<f64>().unwrap() - mean).abs() < 1e-9 * mean.abs().max(1.0));
    }
}

#[test]
fn eval_rejects_zero_episodes_and_mismatched_topology() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny();
    let path = save_stationary(&cfg, dir.path());
    assert!(matches!(cmd_eval(&path, &cfg, 0), Err(Error::InvalidArgument(_))));
    let mut other = cfg.clone();
    other.hyper.actor_hidden = vec![32, 32];
    let err = cmd_eval(&path, &other, 1).unwrap_err();
    assert!(matches!(err, Error::Shape(_)));
    assert!(err.to_string().contains("[6, 16, 2]"), "{err}");
    assert!(cmd_eval(&dir.path().join("missing.txt"), &cfg, 1).is_err());
}

#[test]
fn curves_have_expected_shape() {
    let dir = tempfile::tempdir().unwrap();
    cmd_curves(&RunConfig::default(), dir.path()).unwrap();

    let p = read(&dir.path().join(PROPULSION_CURVE));
    let rows: Vec<(f64, f64)> = p.lines().skip(1).map(parse_pair).collect();
    assert_eq!(p.lines().next().unwrap(), "speed_mps,power_w");
    assert_eq!(rows.len(), 201);
    assert_eq!(rows[0], (0.0, 168.49));
    assert_eq!(rows[200].0, 20.0);

    let h = read(&dir.path().join(HARVEST_CURVE));
    assert_eq!(h.lines().next().unwrap(), "received_uw,harvested_uw");
    let rows: Vec<(f64, f64)> = h.lines().skip(1).map(parse_pair).collect();
    assert_eq!(rows[0], (0.0, 0.0));
    assert!(rows.windows(2).all(|w| w[1].1 >= w[0].1));
    let last = rows.last().unwrap();
    assert_eq!(last.0, 100.0);
    assert!(last.1 <= 9.079 && last.1 > 0.97 * 9.079, "{}", last.1);
    let n = rows.len();
    assert!(rows[n - 1].1 - rows[n - 2].1 < rows[n - 101].1 - rows[n - 102].1);

    let l = read(&dir.path().join(LOS_CURVE));
    assert_eq!(l.lines().next().unwrap(), "elevation_deg,los_probability");
    let rows: Vec<(f64, f64)> = l.lines().skip(1).map(parse_pair).collect();
    assert_eq!(rows.len(), 900);
    assert!(rows[0].0 > 0.0 && rows[899].0 == 90.0);
    assert!(rows.windows(2).all(|w| w[1].1 >= w[0].1));
    assert!(rows[899].1 > rows[0].1);
}

fn parse_pair(line: &str) -> (f64, f64) {
    let (a, b) = line.split_once(',').unwrap();
    (a.parse().unwrap(), b.parse().unwrap())
}

fn presets() -> Vec<Design> {
    vec![Design::preset("sodr").unwrap(), Design::preset("SOEC").unwrap()]
}

#[test]
fn preset_names_map_to_weights() {
    let d = presets();
    assert_eq!((d[0].weights.w_dc, d[0].weights.w_ec), (100.0, 1.0));
    assert_eq!((d[1].weights.w_dc, d[1].weights.w_ec), (1.0, 100.0));
    assert!(Design::preset("balanced").is_err());
}

#[test]
fn sweep_table_and_parallel_equivalence() {
    let mut cfg = tiny();
    cfg.hyper.episodes = 3;
    let serial = tempfile::tempdir().unwrap();
    let parallel = tempfile::tempdir().unwrap();
    let a = cmd_sweep(&cfg, &presets(), &[1, 2], serial.path(), 1).unwrap();
    let b = cmd_sweep(&cfg, &presets(), &[1, 2], parallel.path(), 3).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.failures(), 0);
    let table = read(&serial.path().join(COMPARISON_FILE));
    assert_eq!(table, read(&parallel.path().join(COMPARISON_FILE)));
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], COMPARISON_HEADER);
    assert_eq!(COMPARISON_HEADER, "design,seed,avg_rate_mbps,avg_power_w,harvested_uJ,hovers,status");
    assert_eq!(lines.len(), 1 + 4 + 2);
    assert!(lines[1].starts_with("sodr,1,") && lines[4].starts_with("soec,2,"));
    assert!(lines[5].starts_with("sodr,mean,") && lines[6].starts_with("soec,mean,"));
    for run in ["sodr_seed1", "soec_seed2"] {
        assert!(serial.path().join(run).join("eval.csv").is_file());
        assert_eq!(read(&serial.path().join(run).join(LOG_FILE)), read(&parallel.path().join(run).join(LOG_FILE)));
    }
}

#[test]
fn sweep_with_single_pair_per_design() {
    let mut cfg = tiny();
    cfg.hyper.episodes = 2;
    let dir = tempfile::tempdir().unwrap();
    let out = cmd_sweep(&cfg, &presets(), &[4], dir.path(), 1).unwrap();
    assert_eq!(out.rows.len(), 2);
}

#[test]
fn sweep_continues_past_failures() {
    let mut cfg = tiny();
    cfg.hyper.episodes = 2;
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("sodr_seed1"), "not a directory").unwrap();
    let out = cmd_sweep(&cfg, &presets(), &[1], dir.path(), 1).unwrap();
    assert_eq!(out.failures(), 1);
    assert!(out.rows[1].outcome.is_ok());
    let table = read(&dir.path().join(COMPARISON_FILE));
    assert!(table.lines().nth(1).unwrap().starts_with("sodr,1,,,,,\"failed:"));
    assert!(table.contains("soec,mean,"));
}

#[test]
fn empty_sweep_grid_rejected() {
    let dir = tempfile::tempdir().unwrap();
    assert!(cmd_sweep(&tiny(), &[], &[1], dir.path(), 1).is_err());
    assert!(cmd_sweep(&tiny(), &presets(), &[], dir.path(), 1).is_err());
}

#[test]
fn training_log_header_is_stable() {
    assert_eq!(EpisodeLog::CSV_HEADER, "episode,return,r_sum_mbit,e_harvest_uJ,e_consume_J,critic_loss,actor_obj,epsilon");
}

#[test]
fn gradcheck_suite() {
    let errs = harness::cmd_gradcheck(20, 0).unwrap();
    assert_eq!(errs.len(), 20);
    assert!(errs.iter().all(|e| *e < harness::GRADCHECK_TOLERANCE));
}
