//! The fully synchronous round loop.
//!
//! Each round: robots read last round's events and decide, the adversary
//! picks the missing edges, robots move, meetings are detected.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adversary::{Adversary, AdversaryConfig, AdversaryView};
use crate::error::{ConfigError, SimError};
use crate::protocol::random::{random_movement_gate, RandomizedParams, TerminationMode};
use crate::protocol::{decide_all, global_stage, RobotState, Rules};
use crate::ring::{
    advance_round_in_place, assemble_events, coverage_complete, RingState, RoundEvents,
    RoundOutcome,
};
use crate::types::{Action, Frame, IdBits, Mark, RobotId};

/// Initial conditions of one robot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RobotSetup {
    pub id: IdBits,
    /// Whether the robot's left is the ring's clockwise direction.
    pub left_is_cw: bool,
    pub position: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Protocol {
    Deterministic,
    Randomized(RandomizedParams),
}

impl Protocol {
    pub fn rules(&self) -> Rules {
        match self {
            Protocol::Deterministic => Rules::deterministic(),
            Protocol::Randomized(p) => p.rules(),
        }
    }

    fn partial(&self) -> bool {
        matches!(self, Protocol::Randomized(p) if p.mode == TerminationMode::Partial)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailureClass {
    NotTerminated,
    CoverageIncomplete,
    IdCollision,
    DirectionSplit,
    ThirdRobotNotInformed,
    /// A deterministic run broke one of the stage bounds.
    StageBound,
}

impl FailureClass {
    pub fn as_str(self) -> &'static str {
        match self {
            FailureClass::NotTerminated => "not-terminated",
            FailureClass::CoverageIncomplete => "coverage-incomplete",
            FailureClass::IdCollision => "id-collision",
            FailureClass::DirectionSplit => "direction-split",
            FailureClass::ThirdRobotNotInformed => "third-robot-not-informed",
            FailureClass::StageBound => "stage-bound",
        }
    }
}

impl std::fmt::Display for FailureClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Everything needed to reproduce one run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSpec {
    pub n: usize,
    pub robots: Vec<RobotSetup>,
    pub adversary: AdversaryConfig,
    pub protocol: Protocol,
    pub crossing_detection: bool,
    pub seed: u64,
    /// Safety cap; defaults to a protocol-dependent multiple of the bound.
    pub max_rounds: Option<u64>,
}

impl RunSpec {
    pub fn k(&self) -> usize {
        self.robots.iter().map(|r| r.id.len()).max().unwrap_or(0)
    }

    pub fn ids_distinct(&self) -> bool {
        let mut ids: Vec<IdBits> = self.robots.iter().map(|r| r.id).collect();
        ids.sort_unstable();
        ids.windows(2).all(|w| w[0] != w[1])
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n < 3 {
            return Err(ConfigError::Invalid(format!(
                "ring size {} below 3",
                self.n
            )));
        }
        if self.robots.len() != 3 {
            return Err(ConfigError::Invalid(format!(
                "{} robots, need 3",
                self.robots.len()
            )));
        }
        if let Some(r) = self.robots.iter().find(|r| r.position >= self.n) {
            return Err(ConfigError::Invalid(format!(
                "robot placed on node {} of {}",
                r.position, self.n
            )));
        }
        if self.protocol == Protocol::Deterministic {
            if !self.crossing_detection {
                return Err(ConfigError::Invalid(
                    "the deterministic protocol needs crossing detection".into(),
                ));
            }
            if !self.ids_distinct() {
                return Err(ConfigError::Invalid(
                    "the deterministic protocol needs distinct IDs".into(),
                ));
            }
        }
        Ok(())
    }

    /// Worst-case round bound of the deterministic protocol.
    pub fn round_bound(&self) -> u64 {
        let n = self.n as u64;
        stage_bounds(n, self.k()).iter().sum()
    }

    pub fn effective_max_rounds(&self) -> u64 {
        if let Some(m) = self.max_rounds {
            return m;
        }
        let n = self.n as u64;
        match self.protocol {
            Protocol::Deterministic => self.round_bound().saturating_mul(2).saturating_add(16),
            Protocol::Randomized(p) => {
                let log = (self.n as f64).log2().ceil() as u64;
                let explore = self
                    .round_bound()
                    .saturating_mul(p.phase_stretch.max(1) * 4);
                explore.saturating_add(p.term_factor.saturating_mul(64 * n * (log + 3)))
            }
        }
    }
}

/// Per-stage round bounds `[n + n 2^k, n, 4n, n]`.
pub fn stage_bounds(n: u64, k: usize) -> [u64; 4] {
    let pow = 1u64.checked_shl(k as u32).unwrap_or(u64::MAX);
    [n.saturating_add(n.saturating_mul(pow)), n, 4 * n, n]
}

/// Outcome of one run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunResult {
    pub n: usize,
    pub k: usize,
    pub adversary: String,
    pub seed: u64,
    pub rounds_coverage: Option<u64>,
    /// Round of the last required termination (all robots, or two in
    /// partial mode).
    pub rounds_termination: Option<u64>,
    pub rounds_first_termination: Option<u64>,
    /// Rounds spent in stages 1 to 4.
    pub stages: [u64; 4],
    pub success: bool,
    pub failure_class: Option<FailureClass>,
    /// Successful moves summed over robots.
    pub steps: u64,
    pub sizes: Vec<Option<u64>>,
    pub terminated: usize,
    pub ids: Vec<IdBits>,
    pub violations: Vec<String>,
}

impl RunResult {
    pub(crate) fn collision(spec: &RunSpec) -> Self {
        RunResult {
            n: spec.n,
            k: spec.k(),
            adversary: spec.adversary.kind.to_string(),
            seed: spec.seed,
            rounds_coverage: None,
            rounds_termination: None,
            rounds_first_termination: None,
            stages: [0; 4],
            success: false,
            failure_class: Some(FailureClass::IdCollision),
            steps: 0,
            sizes: vec![None; spec.robots.len()],
            terminated: 0,
            ids: spec.robots.iter().map(|r| r.id).collect(),
            violations: Vec::new(),
        }
    }
}

/// One robot in a trace record.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RobotRecord {
    pub position: usize,
    pub mark: Mark,
    pub stage: u8,
    pub action: Action,
    pub moved: bool,
    pub state: RobotState,
}

/// Everything that happened in one round.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u64,
    pub removed: Vec<usize>,
    pub robots: Vec<RobotRecord>,
    /// Semi-synchronous runs only: who was awake.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub awake: Option<Vec<bool>>,
    /// Semi-synchronous runs only: robots carried over an edge while asleep.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub passive_moves: Option<Vec<RobotId>>,
}

/// Events for robots that start a run already sharing nodes.
pub fn initial_events(
    ring: &RingState,
    robots: &[RobotState],
    crossing_detection: bool,
) -> Vec<RoundEvents> {
    let r = robots.len();
    let snapshots: Vec<_> = robots.iter().map(RobotState::public).collect();
    let outcome = RoundOutcome {
        moved: vec![false; r],
        crossings: Vec::new(),
    };
    assemble_events(
        ring,
        &outcome,
        &snapshots,
        &vec![0; r],
        &vec![false; r],
        crossing_detection,
    )
}

/// A run in progress.
pub struct Simulation {
    spec: RunSpec,
    rules: Rules,
    ring: RingState,
    robots: Vec<RobotState>,
    events: Vec<RoundEvents>,
    adversary: Box<dyn Adversary>,
    coins: Vec<ChaCha8Rng>,
    stages: [u64; 4],
    steps: u64,
    rounds_coverage: Option<u64>,
    first_termination: Option<u64>,
    finished_at: Option<u64>,
    max_rounds: u64,
}

/// Seed of an independent stream derived from a run seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Simulation {
    pub fn new(spec: RunSpec) -> Result<Self, SimError> {
        let ring = Self::initial_ring(&spec)?;
        let adversary = spec.adversary.build(&ring, derive_seed(spec.seed, 1))?;
        Self::with_adversary(spec, adversary)
    }

    fn initial_ring(spec: &RunSpec) -> Result<RingState, SimError> {
        spec.validate()?;
        Ok(RingState::new(
            spec.n,
            spec.robots.iter().map(|r| r.position).collect(),
            spec.adversary.edges_removed_per_round,
        )?)
    }

    /// A run against a hand-built adversary; `spec.adversary` only supplies
    /// the removal cap and the label.
    pub fn with_adversary(spec: RunSpec, adversary: Box<dyn Adversary>) -> Result<Self, SimError> {
        let ring = Self::initial_ring(&spec)?;
        let robots: Vec<RobotState> = spec
            .robots
            .iter()
            .map(|r| RobotState::new(r.id, Frame::new(r.left_is_cw)))
            .collect();
        let coins = (0..robots.len())
            .map(|i| ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, 100 + i as u64)))
            .collect();
        let events = initial_events(&ring, &robots, spec.crossing_detection);
        let rounds_coverage = coverage_complete(&ring).then_some(0);
        Ok(Simulation {
            rules: spec.protocol.rules(),
            max_rounds: spec.effective_max_rounds(),
            spec,
            ring,
            robots,
            events,
            adversary,
            coins,
            stages: [0; 4],
            steps: 0,
            rounds_coverage,
            first_termination: None,
            finished_at: None,
        })
    }

    pub fn ring(&self) -> &RingState {
        &self.ring
    }

    pub fn robots(&self) -> &[RobotState] {
        &self.robots
    }

    pub fn spec(&self) -> &RunSpec {
        &self.spec
    }

    pub fn is_finished(&self) -> bool {
        self.finished_at.is_some() || self.ring.round() >= self.max_rounds
    }

    fn required_terminations(&self) -> usize {
        if self.spec.protocol.partial() {
            2
        } else {
            self.robots.len()
        }
    }

    /// Plays one round. Returns `None` once the run is over.
    pub fn step(&mut self) -> Result<Option<RoundRecord>, SimError> {
        if self.is_finished() {
            return Ok(None);
        }
        let round = self.ring.round();
        let (robots, mut actions) = decide_all(&self.robots, &self.events, &self.rules)?;
        if let Protocol::Randomized(_) = self.spec.protocol {
            for (a, coin) in actions.iter_mut().zip(&mut self.coins) {
                *a = random_movement_gate(*a, coin);
            }
        }
        self.robots = robots;
        let terminated = self.robots.iter().filter(|r| r.terminated).count();
        if terminated > 0 && self.first_termination.is_none() {
            self.first_termination = Some(round);
        }
        if terminated >= self.required_terminations() {
            self.finished_at = Some(round);
            return Ok(None);
        }
        let stage = global_stage(&self.robots).min(4);
        self.stages[usize::from(stage) - 1] += 1;

        let intents: Vec<_> = self
            .robots
            .iter()
            .zip(&actions)
            .enumerate()
            .map(|(i, (r, a))| r.intent(i, *a))
            .collect();
        let removed = self.adversary.choose(&AdversaryView {
            ring: &self.ring,
            intents: &intents,
            robots: &self.robots,
        });
        self.events = advance_round_in_place(
            &mut self.ring,
            &intents,
            &removed,
            self.spec.crossing_detection,
        )?;
        self.steps += self.events.iter().filter(|e| e.move_succeeded).count() as u64;
        if self.rounds_coverage.is_none() && coverage_complete(&self.ring) {
            self.rounds_coverage = Some(self.ring.round());
        }
        let records = self
            .robots
            .iter()
            .zip(&actions)
            .zip(&self.events)
            .enumerate()
            .map(|(i, ((r, a), e))| RobotRecord {
                position: self.ring.position(i),
                mark: r.mark,
                stage: r.stage,
                action: *a,
                moved: e.move_succeeded,
                state: r.clone(),
            })
            .collect();
        Ok(Some(RoundRecord {
            round,
            removed,
            robots: records,
            awake: None,
            passive_moves: None,
        }))
    }

    /// Plays the run to the end, handing every round to `sink`.
    pub fn run_with(mut self, mut sink: impl FnMut(&RoundRecord)) -> Result<RunResult, SimError> {
        while let Some(record) = self.step()? {
            sink(&record);
        }
        Ok(self.result())
    }

    pub fn result(&self) -> RunResult {
        let spec = &self.spec;
        let terminated = self.robots.iter().filter(|r| r.terminated).count();
        let covered = coverage_complete(&self.ring);
        let mut violations = Vec::new();
        if spec.protocol == Protocol::Deterministic {
            let n = spec.n as u64;
            let bounds = stage_bounds(n, spec.k());
            for (s, (&took, &bound)) in self.stages.iter().zip(&bounds).enumerate() {
                if took > bound {
                    violations.push(format!("stage {} took {took} rounds, bound {bound}", s + 1));
                }
            }
            let total: u64 = self.stages.iter().sum();
            if total > spec.round_bound() {
                violations.push(format!("{total} rounds, bound {}", spec.round_bound()));
            }
            for r in &self.robots {
                if let Some(size) = r.size.filter(|&s| s != n) {
                    violations.push(format!(
                        "robot {} computed size {size} on a ring of {n}",
                        r.id
                    ));
                }
            }
        }
        let failure_class = if self.finished_at.is_none() {
            if terminated >= 2 && !spec.protocol.partial() {
                Some(FailureClass::ThirdRobotNotInformed)
            } else {
                Some(FailureClass::NotTerminated)
            }
        } else if !covered {
            Some(FailureClass::CoverageIncomplete)
        } else if !violations.is_empty() {
            Some(FailureClass::StageBound)
        } else {
            None
        };
        RunResult {
            n: spec.n,
            k: spec.k(),
            adversary: spec.adversary.kind.to_string(),
            seed: spec.seed,
            rounds_coverage: self.rounds_coverage,
            rounds_termination: self.finished_at,
            rounds_first_termination: self.first_termination,
            stages: self.stages,
            success: failure_class.is_none(),
            failure_class,
            steps: self.steps,
            sizes: self.robots.iter().map(|r| r.size).collect(),
            terminated,
            ids: spec.robots.iter().map(|r| r.id).collect(),
            violations,
        }
    }
}

/// Runs `spec` to completion. Randomized runs with colliding IDs are not
/// simulated and fail with [`FailureClass::IdCollision`].
pub fn run(spec: RunSpec) -> Result<RunResult, SimError> {
    if matches!(spec.protocol, Protocol::Randomized(_)) && !spec.ids_distinct() {
        spec.validate()?;
        return Ok(RunResult::collision(&spec));
    }
    Simulation::new(spec)?.run_with(|_| {})
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::AdversaryKind;

    fn spec(n: usize, positions: [usize; 3], kind: AdversaryKind, seed: u64) -> RunSpec {
        let ids = ["100", "101", "111"];
        RunSpec {
            n,
            robots: (0..3)
                .map(|i| RobotSetup {
                    id: ids[i].parse().unwrap(),
                    left_is_cw: i != 1,
                    position: positions[i],
                })
                .collect(),
            adversary: AdversaryConfig::new(kind),
            protocol: Protocol::Deterministic,
            crossing_detection: true,
            seed,
            max_rounds: None,
        }
    }

    #[test]
    fn bounds() {
        assert_eq!(stage_bounds(10, 3), [90, 10, 40, 10]);
        assert_eq!(
            spec(10, [0, 3, 6], AdversaryKind::Red, 0).round_bound(),
            150
        );
        assert_eq!(stage_bounds(10, 80)[0], u64::MAX);
    }

    #[test]
    fn deterministic_runs_succeed_within_bounds() {
        for kind in AdversaryKind::EXPERIMENTAL {
            for seed in 0..20 {
                let result = run(spec(16, [0, 5, 11], kind, seed)).unwrap();
                assert!(result.success, "{kind} seed {seed}: {result:?}");
                assert!(result.sizes.iter().flatten().all(|&s| s == 16));
                assert_eq!(result.terminated, 3);
                let bounds = stage_bounds(16, 3);
                assert!(result.stages.iter().zip(&bounds).all(|(s, b)| s <= b));
            }
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let a = run(spec(20, [1, 7, 13], AdversaryKind::Rrb, 42)).unwrap();
        let b = run(spec(20, [1, 7, 13], AdversaryKind::Rrb, 42)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn colocated_start_skips_stage_one() {
        let result = run(spec(12, [4, 4, 9], AdversaryKind::Red, 3)).unwrap();
        assert!(result.success);
        assert_eq!(result.stages[0], 0);
    }

    #[test]
    fn validation() {
        let mut s = spec(10, [0, 3, 6], AdversaryKind::Red, 0);
        s.crossing_detection = false;
        assert!(run(s).is_err());
        let mut s = spec(10, [0, 3, 6], AdversaryKind::Red, 0);
        s.robots[1].id = s.robots[0].id;
        assert!(run(s).is_err());
        assert!(run(spec(2, [0, 1, 1], AdversaryKind::Red, 0)).is_err());
        assert!(run(spec(10, [0, 3, 10], AdversaryKind::Red, 0)).is_err());
    }

    #[test]
    fn randomized_collision_short_circuits() {
        let mut s = spec(10, [0, 3, 6], AdversaryKind::Red, 0);
        s.protocol = Protocol::Randomized(RandomizedParams::default());
        s.robots[2].id = s.robots[0].id;
        let result = run(s).unwrap();
        assert_eq!(result.failure_class, Some(FailureClass::IdCollision));
        assert_eq!(result.steps, 0);
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, 1), derive_seed(1, 2));
        assert_ne!(derive_seed(1, 1), derive_seed(2, 1));
    }
}
