//! Parameter sweeps: many seeded trials per point, written as a CSV table
//! and a JSON summary.
//!
//! Configs are TOML. Every key except `n` has a default:
//!
//! ```toml
//! protocol = "deterministic"  # randomized | randomized-random-ids | ssync
//! n = [20000, 40000]          # one size or a list
//! ids = ["100", "101", "111"] # fixed IDs, or
//! id_length = [3, 6]          # random IDs of each length (l for random-ids)
//! adversary = ["RED", "SED"]  # names or full tables
//! trials = 5
//! seed = 1
//!
//! [randomized]
//! phase_stretch = 8
//!
//! [ssync]
//! f_bound = 2
//!
//! [output]
//! csv = "results.csv"
//! ```

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversary::{AdversaryConfig, AdversaryKind};
use crate::error::{ConfigError, ExperimentError};
use crate::protocol::random::{assign_random_ids, RandomizedParams};
use crate::sim::{derive_seed, FailureClass, Protocol, RobotSetup, RunResult, RunSpec};
use crate::ssync::{SchedulePolicy, SsyncParams, SsyncSpec};
use crate::trace::{record_to_file, run_traced, TracedSpec};
use crate::types::IdBits;

/// Header of the results table, in column order.
pub const CSV_COLUMNS: [&str; 13] = [
    "n",
    "k",
    "adversary",
    "seed",
    "rounds_coverage",
    "rounds_termination",
    "stage1",
    "stage2",
    "stage3",
    "stage4",
    "success",
    "failure_class",
    "steps",
];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProtocolKind {
    #[default]
    Deterministic,
    Randomized,
    RandomizedRandomIds,
    Ssync,
}

#[derive(Clone, Debug, PartialEq, Eq, Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T> From<OneOrMany<T>> for Vec<T> {
    fn from(v: OneOrMany<T>) -> Self {
        match v {
            OneOrMany::One(x) => vec![x],
            OneOrMany::Many(xs) => xs,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Deserialize)]
#[serde(untagged)]
enum AdversaryEntry {
    Name(String),
    Full(AdversaryConfig),
}

fn one_or_many<'de, D, T>(d: D) -> Result<Vec<T>, D::Error>
where
    D: serde::Deserializer<'de>,
    T: Deserialize<'de>,
{
    OneOrMany::<T>::deserialize(d).map(Vec::from)
}

fn adversaries<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Vec<AdversaryConfig>, D::Error> {
    OneOrMany::<AdversaryEntry>::deserialize(d).and_then(|v| {
        Vec::from(v)
            .into_iter()
            .map(|e| match e {
                AdversaryEntry::Name(s) => s
                    .parse::<AdversaryKind>()
                    .map(AdversaryConfig::new)
                    .map_err(serde::de::Error::custom),
                AdversaryEntry::Full(c) => Ok(c),
            })
            .collect()
    })
}

fn default_adversaries() -> Vec<AdversaryConfig> {
    vec![AdversaryConfig::new(AdversaryKind::Red)]
}

fn default_trials() -> usize {
    1
}

fn default_ssync() -> SsyncParams {
    SsyncParams::new(2, SchedulePolicy::AdversarialBounded)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Relative paths below are resolved against this directory, which
    /// itself defaults to the caller's output directory.
    pub dir: Option<PathBuf>,
    pub csv: PathBuf,
    pub summary: PathBuf,
    /// Write a trace for every trial (failed trials always get one).
    pub trace: bool,
    pub trace_dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: None,
            csv: "results.csv".into(),
            summary: "summary.json".into(),
            trace: false,
            trace_dir: "traces".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub protocol: ProtocolKind,
    #[serde(deserialize_with = "one_or_many")]
    pub n: Vec<usize>,
    #[serde(default)]
    pub ids: Option<Vec<IdBits>>,
    #[serde(default, deserialize_with = "opt_one_or_many")]
    pub id_length: Option<Vec<u8>>,
    #[serde(default = "default_adversaries", deserialize_with = "adversaries")]
    pub adversary: Vec<AdversaryConfig>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    /// Defaults to on for the deterministic and semi-synchronous protocols,
    /// off for the randomized ones.
    #[serde(default)]
    pub crossing_detection: Option<bool>,
    /// Place robots independently (possibly sharing nodes) instead of on
    /// distinct nodes.
    #[serde(default)]
    pub colocated_start: bool,
    #[serde(default)]
    pub max_rounds: Option<u64>,
    #[serde(default)]
    pub randomized: RandomizedParams,
    #[serde(default = "default_ssync")]
    pub ssync: SsyncParams,
    #[serde(default)]
    pub output: OutputConfig,
}

fn opt_one_or_many<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Option<Vec<u8>>, D::Error> {
    one_or_many(d).map(Some)
}

/// How the IDs of one parameter point are chosen.
#[derive(Clone, Debug, PartialEq, Eq)]
enum IdPlan {
    Fixed(Vec<IdBits>),
    /// Three distinct uniformly random IDs of this length.
    Distinct(u8),
    /// Independent uniform IDs of this length; collisions possible.
    Independent(u8),
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ExperimentError> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn crossing_detection(&self) -> bool {
        self.crossing_detection.unwrap_or(matches!(
            self.protocol,
            ProtocolKind::Deterministic | ProtocolKind::Ssync
        ))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.n.is_empty() {
            return invalid("n must list at least one ring size".into());
        }
        if let Some(&n) = self.n.iter().find(|&&n| n < 3) {
            return invalid(format!("ring size {n} below 3"));
        }
        if self.trials == 0 {
            return invalid("trials must be at least 1".into());
        }
        if self.adversary.is_empty() {
            return invalid("no adversary given".into());
        }
        if self.ids.is_some() && self.id_length.is_some() {
            return invalid("give either ids or id_length, not both".into());
        }
        if let Some(ids) = &self.ids {
            if ids.len() != 3 {
                return invalid(format!("{} ids given, need 3", ids.len()));
            }
            if self.protocol == ProtocolKind::RandomizedRandomIds {
                return invalid("randomized-random-ids draws its own ids; use id_length".into());
            }
        }
        if let Some(lengths) = &self.id_length {
            if let Some(&l) = lengths.iter().find(|&&l| !(2..=63).contains(&l)) {
                return invalid(format!("id length {l} outside 2..=63"));
            }
        }
        match self.protocol {
            ProtocolKind::Deterministic => {
                if !self.crossing_detection() {
                    return invalid("the deterministic protocol needs crossing detection".into());
                }
                if let Some(ids) = &self.ids {
                    if ids[0] == ids[1] || ids[0] == ids[2] || ids[1] == ids[2] {
                        return invalid("the deterministic protocol needs distinct ids".into());
                    }
                }
            }
            ProtocolKind::Ssync => {
                if !self.crossing_detection() {
                    return invalid(
                        "the semi-synchronous protocol needs crossing detection".into(),
                    );
                }
                if self.ssync.f_bound == 0 {
                    return invalid("f_bound must be at least 1".into());
                }
            }
            ProtocolKind::Randomized | ProtocolKind::RandomizedRandomIds => {
                if self.randomized.phase_stretch == 0 {
                    return invalid("phase_stretch must be at least 1".into());
                }
            }
        }
        if self
            .adversary
            .iter()
            .any(|a| a.kind == AdversaryKind::Exhaustive && self.n.iter().any(|&n| n > 8))
        {
            return invalid("the exhaustive adversary is limited to n <= 8".into());
        }
        Ok(())
    }

    fn id_plans(&self) -> Vec<IdPlan> {
        let default_ids = || {
            ["100", "101", "111"]
                .map(|s| s.parse().expect("valid id"))
                .to_vec()
        };
        match (&self.ids, &self.id_length, self.protocol) {
            (_, Some(ls), ProtocolKind::RandomizedRandomIds) => {
                ls.iter().map(|&l| IdPlan::Independent(l)).collect()
            }
            (_, None, ProtocolKind::RandomizedRandomIds) => vec![IdPlan::Independent(2)],
            (_, Some(ls), _) => ls.iter().map(|&l| IdPlan::Distinct(l)).collect(),
            (Some(ids), None, _) => vec![IdPlan::Fixed(ids.clone())],
            (None, None, _) => vec![IdPlan::Fixed(default_ids())],
        }
    }
}

/// One trial to run.
#[derive(Clone, Debug)]
struct Job {
    point: usize,
    spec: TracedSpec,
}

/// Builds the run spec of trial `trial` at one parameter point.
fn trial_spec(
    cfg: &ExperimentConfig,
    n: usize,
    ids: &IdPlan,
    adversary: &AdversaryConfig,
    trial: usize,
) -> Result<TracedSpec, ConfigError> {
    let seed = cfg.seed.wrapping_add(trial as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 3));
    let positions: Vec<usize> = if cfg.colocated_start {
        (0..3).map(|_| rng.gen_range(0..n)).collect()
    } else {
        sample(&mut rng, n, 3).into_vec()
    };
    let chirality: Vec<bool> = (0..3).map(|_| rng.gen()).collect();
    let ids: Vec<IdBits> = match ids {
        IdPlan::Fixed(ids) => ids.clone(),
        IdPlan::Distinct(k) => sample(&mut rng, 1usize << k, 3)
            .into_iter()
            .map(|v| IdBits::new(v as u64, *k))
            .collect::<Result<_, _>>()?,
        IdPlan::Independent(l) => assign_random_ids(3, *l, &mut rng)?,
    };
    let robots: Vec<RobotSetup> = (0..3)
        .map(|i| RobotSetup {
            id: ids[i],
            left_is_cw: chirality[i],
            position: positions[i],
        })
        .collect();
    Ok(match cfg.protocol {
        ProtocolKind::Ssync => TracedSpec::Ssync(SsyncSpec {
            n,
            robots,
            adversary: adversary.clone(),
            params: cfg.ssync,
            seed,
            max_rounds: cfg.max_rounds,
        }),
        kind => TracedSpec::Fsync(RunSpec {
            n,
            robots,
            adversary: adversary.clone(),
            protocol: match kind {
                ProtocolKind::Deterministic => Protocol::Deterministic,
                _ => Protocol::Randomized(cfg.randomized),
            },
            crossing_detection: cfg.crossing_detection(),
            seed,
            max_rounds: cfg.max_rounds,
        }),
    })
}

/// Mean and maximum of one column over the runs that have a value.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Stat {
    pub count: usize,
    pub mean: Option<f64>,
    pub max: Option<u64>,
}

impl Stat {
    fn of(values: impl Iterator<Item = u64>) -> Stat {
        let values: Vec<u64> = values.collect();
        if values.is_empty() {
            return Stat::default();
        }
        Stat {
            count: values.len(),
            mean: Some(values.iter().map(|&v| v as f64).sum::<f64>() / values.len() as f64),
            max: values.iter().copied().max(),
        }
    }
}

/// Aggregates of one parameter point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PointSummary {
    pub protocol: ProtocolKind,
    pub n: usize,
    /// ID length of the point (fixed IDs: their length).
    pub k: usize,
    pub adversary: String,
    pub trials: usize,
    pub successes: usize,
    pub success_fraction: f64,
    pub rounds_coverage: Stat,
    /// Over terminated runs.
    pub rounds_termination: Stat,
    pub stages: [Stat; 4],
    pub steps: Stat,
    pub failure_classes: BTreeMap<String, usize>,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub results: Vec<RunResult>,
    pub summary: Vec<PointSummary>,
    pub traces: Vec<PathBuf>,
}

/// Runs every trial of `cfg` in parallel. Results come back in a fixed
/// order (point by point, trials in order) whatever the thread count.
///
/// With `trace_dir`, traces are written for failed trials, and for all
/// trials when the config asks for them.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    trace_dir: Option<&Path>,
) -> Result<ExperimentOutcome, ExperimentError> {
    cfg.validate()?;
    let mut points = Vec::new();
    let mut jobs = Vec::new();
    for &n in &cfg.n {
        for plan in cfg.id_plans() {
            for adversary in &cfg.adversary {
                let point = points.len();
                let k = match &plan {
                    IdPlan::Fixed(ids) => ids.iter().map(|i| i.len()).max().unwrap_or(0),
                    IdPlan::Distinct(k) | IdPlan::Independent(k) => *k as usize,
                };
                points.push((n, k, adversary.kind.to_string()));
                for trial in 0..cfg.trials {
                    jobs.push(Job {
                        point,
                        spec: trial_spec(cfg, n, &plan, adversary, trial)?,
                    });
                }
            }
        }
    }
    if let Some(dir) = trace_dir {
        std::fs::create_dir_all(dir)?;
    }
    let outputs: Vec<Result<(RunResult, Option<PathBuf>), ExperimentError>> = jobs
        .par_iter()
        .map(|job| {
            let path = trace_dir.map(|dir| dir.join(trace_name(job)));
            match path {
                Some(path) if cfg.output.trace => {
                    Ok((record_to_file(&job.spec, &path)?, Some(path)))
                }
                _ => {
                    let result = run_traced(&job.spec, |_| {})?;
                    let failed =
                        !result.success && result.failure_class != Some(FailureClass::IdCollision);
                    match path {
                        Some(path) if failed => {
                            record_to_file(&job.spec, &path)?;
                            Ok((result, Some(path)))
                        }
                        _ => Ok((result, None)),
                    }
                }
            }
        })
        .collect();
    let mut results = Vec::with_capacity(outputs.len());
    let mut traces = Vec::new();
    for output in outputs {
        let (result, trace) = output?;
        results.push(result);
        traces.extend(trace);
    }
    let summary = points
        .iter()
        .enumerate()
        .map(|(p, (n, k, adversary))| {
            let runs: Vec<&RunResult> = jobs
                .iter()
                .zip(&results)
                .filter(|(j, _)| j.point == p)
                .map(|(_, r)| r)
                .collect();
            summarize(cfg.protocol, *n, *k, adversary, &runs)
        })
        .collect();
    Ok(ExperimentOutcome {
        results,
        summary,
        traces,
    })
}

fn trace_name(job: &Job) -> String {
    let (n, robots, adversary, seed) = match &job.spec {
        TracedSpec::Fsync(s) => (s.n, &s.robots, &s.adversary, s.seed),
        TracedSpec::Ssync(s) => (s.n, &s.robots, &s.adversary, s.seed),
    };
    let k = robots.iter().map(|r| r.id.len()).max().unwrap_or(0);
    format!(
        "p{}-{}-n{n}-k{k}-seed{seed}.jsonl",
        job.point, adversary.kind
    )
}

fn summarize(
    protocol: ProtocolKind,
    n: usize,
    k: usize,
    adversary: &str,
    runs: &[&RunResult],
) -> PointSummary {
    let successes = runs.iter().filter(|r| r.success).count();
    let mut failure_classes = BTreeMap::new();
    for r in runs {
        if let Some(c) = r.failure_class {
            *failure_classes.entry(c.to_string()).or_insert(0) += 1;
        }
    }
    PointSummary {
        protocol,
        n,
        k,
        adversary: adversary.to_string(),
        trials: runs.len(),
        successes,
        success_fraction: successes as f64 / runs.len().max(1) as f64,
        rounds_coverage: Stat::of(runs.iter().filter_map(|r| r.rounds_coverage)),
        rounds_termination: Stat::of(runs.iter().filter_map(|r| r.rounds_termination)),
        stages: [0, 1, 2, 3].map(|i| Stat::of(runs.iter().map(|r| r.stages[i]))),
        steps: Stat::of(runs.iter().map(|r| r.steps)),
        failure_classes,
    }
}

/// Writes the results table.
pub fn write_csv<W: Write>(results: &[RunResult], out: W) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    let opt = |v: Option<u64>| v.map(|v| v.to_string()).unwrap_or_default();
    for r in results {
        w.write_record([
            r.n.to_string(),
            r.k.to_string(),
            r.adversary.clone(),
            r.seed.to_string(),
            opt(r.rounds_coverage),
            opt(r.rounds_termination),
            r.stages[0].to_string(),
            r.stages[1].to_string(),
            r.stages[2].to_string(),
            r.stages[3].to_string(),
            r.success.to_string(),
            r.failure_class.map(|c| c.to_string()).unwrap_or_default(),
            r.steps.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the JSON summary.
pub fn write_summary<W: Write>(
    summary: &[PointSummary],
    mut out: W,
) -> Result<(), ExperimentError> {
    serde_json::to_writer_pretty(&mut out, summary)?;
    out.write_all(b"\n")?;
    Ok(())
}

/// Paths the outputs of `cfg` go to, given the default output directory.
pub fn output_paths(cfg: &ExperimentConfig, default_dir: &Path) -> (PathBuf, PathBuf, PathBuf) {
    let dir = cfg
        .output
        .dir
        .clone()
        .unwrap_or_else(|| default_dir.to_path_buf());
    (
        dir.join(&cfg.output.csv),
        dir.join(&cfg.output.summary),
        dir.join(&cfg.output.trace_dir),
    )
}

/// Runs `cfg` and writes the CSV, the summary and any traces below
/// `default_dir` (unless the config names its own directory).
pub fn run_and_write(
    cfg: &ExperimentConfig,
    default_dir: &Path,
) -> Result<ExperimentOutcome, ExperimentError> {
    let (csv_path, summary_path, trace_dir) = output_paths(cfg, default_dir);
    let outcome = run_experiment(cfg, Some(&trace_dir))?;
    for path in [&csv_path, &summary_path] {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
    }
    write_csv(&outcome.results, std::fs::File::create(&csv_path)?)?;
    write_summary(&outcome.summary, std::fs::File::create(&summary_path)?)?;
    if outcome.traces.is_empty() {
        // only keep the directory if something was written to it
        let _ = std::fs::remove_dir(&trace_dir);
    }
    Ok(outcome)
}
