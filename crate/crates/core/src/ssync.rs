//! Semi-synchronous rounds with passive transport.
//!
//! Only some robots are awake in a round. A robot whose move was blocked
//! keeps its move armed while it sleeps and is carried over the edge the
//! first time the edge is present again. Meetings that involve a sleeper are
//! buffered and delivered when it wakes up; its public state (including the
//! blocked flag) stays readable by awake robots in the meantime.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adversary::{Adversary, AdversaryConfig, AdversaryKind, AdversaryView};
use crate::error::{ConfigError, EngineError, ProtocolError, SimError};
use crate::protocol::{transition, Countdown, RobotState, Rules};
use crate::ring::{
    assemble_events, coverage_complete, Intent, RingState, RoundEvents, RoundOutcome,
};
use crate::sim::{derive_seed, FailureClass, RobotRecord, RobotSetup, RoundRecord, RunResult};
use crate::types::{Action, Frame, GlobalDir, LocalDir, PublicState, RobotId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchedulePolicy {
    /// Every robot sleeps the full `f` rounds between activations, with
    /// random phase offsets.
    #[default]
    AdversarialBounded,
    /// Each robot wakes with probability 1/2, and always after `f` rounds
    /// asleep.
    Random,
}

/// Decides who is awake each round.
pub struct ActivationSchedule {
    policy: SchedulePolicy,
    f: u64,
    offsets: Vec<u64>,
    slept: Vec<u64>,
    rng: ChaCha8Rng,
}

impl ActivationSchedule {
    pub fn new(
        policy: SchedulePolicy,
        f: u64,
        robots: usize,
        seed: u64,
    ) -> Result<Self, ConfigError> {
        if f == 0 {
            return Err(ConfigError::Invalid("f_bound must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let offsets = (0..robots).map(|_| rng.gen_range(0..=f)).collect();
        Ok(ActivationSchedule {
            policy,
            f,
            offsets,
            slept: vec![0; robots],
            rng,
        })
    }

    pub fn f(&self) -> u64 {
        self.f
    }

    /// Awake set for `round`. Halted robots count as awake.
    pub fn awake(&mut self, round: u64, halted: &[bool]) -> Vec<bool> {
        let awake: Vec<bool> = (0..self.slept.len())
            .map(|i| {
                if halted[i] || self.slept[i] >= self.f {
                    return true;
                }
                match self.policy {
                    SchedulePolicy::AdversarialBounded => {
                        (round + self.offsets[i]).is_multiple_of(self.f + 1)
                    }
                    SchedulePolicy::Random => self.rng.gen(),
                }
            })
            .collect();
        for (s, &a) in self.slept.iter_mut().zip(&awake) {
            *s = if a { 0 } else { *s + 1 };
        }
        awake
    }
}

/// A blocked move that a sleeping robot still carries out.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingMove {
    pub robot: RobotId,
    pub edge: usize,
    pub dir: GlobalDir,
    /// Round in which the move was issued.
    pub armed_at: u64,
    action: LocalDir,
    frame: Frame,
}

/// Ground truth of a semi-synchronous run.
#[derive(Clone, Debug)]
pub struct SsyncState {
    pub ring: RingState,
    pub pending: Vec<Option<PendingMove>>,
    /// Public states as of each robot's last activation.
    snapshots: Vec<PublicState>,
    /// Moves made since each snapshot.
    moved_since: Vec<u64>,
    slept: Vec<u64>,
    f: u64,
    buffered: Vec<RoundEvents>,
}

impl SsyncState {
    pub fn new(ring: RingState, robots: &[RobotState], f: u64) -> Self {
        let r = robots.len();
        let snapshots: Vec<PublicState> = robots.iter().map(RobotState::public).collect();
        let outcome = RoundOutcome {
            moved: vec![false; r],
            crossings: Vec::new(),
        };
        let buffered = assemble_events(
            &ring,
            &outcome,
            &snapshots,
            &vec![0; r],
            &vec![false; r],
            true,
        );
        SsyncState {
            ring,
            pending: vec![None; r],
            snapshots,
            moved_since: vec![0; r],
            slept: vec![0; r],
            f,
            buffered,
        }
    }

    /// Hands over and clears the events buffered for `robot`.
    pub fn take_events(&mut self, robot: RobotId) -> RoundEvents {
        std::mem::take(&mut self.buffered[robot])
    }

    /// True when a meeting or crossing is waiting for `robot`.
    pub fn has_meeting(&self, robot: RobotId) -> bool {
        let ev = &self.buffered[robot];
        !ev.colocated_with.is_empty() || !ev.crossed_with.is_empty()
    }

    /// Publishes the memory of a robot that updated without issuing a move
    /// (a sleeper that took part in a meeting, or a robot that halted). An
    /// armed move survives only if it still goes in the direction `heading`.
    pub fn refresh(&mut self, robot: RobotId, public: PublicState, heading: Option<GlobalDir>) {
        self.snapshots[robot] = public;
        self.moved_since[robot] = 0;
        if self.pending[robot]
            .as_ref()
            .is_some_and(|p| Some(p.dir) != heading)
        {
            self.pending[robot] = None;
        }
    }

    pub fn blocked(&self, robot: RobotId) -> bool {
        self.pending[robot].is_some()
    }

    /// The moves that will execute this round unless their edge is removed.
    pub fn effective_intents(&self, intents: &[Intent]) -> Vec<Intent> {
        let mut all: Vec<Intent> = intents.to_vec();
        for p in self.pending.iter().flatten() {
            if !intents.iter().any(|i| i.robot == p.robot) {
                all.push(Intent {
                    robot: p.robot,
                    action: Action::Move(p.action),
                    frame: p.frame,
                    public: self.snapshots[p.robot].clone(),
                });
            }
        }
        all.sort_by_key(|i| i.robot);
        all
    }
}

fn merge(into: &mut RoundEvents, ev: RoundEvents) {
    into.move_succeeded |= ev.move_succeeded;
    into.self_blocked = ev.self_blocked;
    into.colocated_with.extend(ev.colocated_with);
    into.crossed_with.extend(ev.crossed_with);
    into.relayed.extend(ev.relayed);
    for j in ev.group {
        if !into.group.contains(&j) {
            into.group.push(j);
        }
    }
}

/// One semi-synchronous round. `intents` come from the awake robots only;
/// halted robots need not send one.
pub fn ssync_advance_round(
    state: &mut SsyncState,
    awake: &[bool],
    intents: &[Intent],
    removed: &[usize],
) -> Result<(), EngineError> {
    let robots = state.ring.robots();
    crate::ring::check_removed(&state.ring, removed)?;
    let mut seen = vec![false; robots];
    for intent in intents {
        let r = intent.robot;
        if r >= robots {
            return Err(EngineError::UnknownRobot(r));
        }
        if seen[r] {
            return Err(EngineError::DuplicateIntent(r));
        }
        if !awake[r] {
            return Err(EngineError::SleepingIntent(r));
        }
        seen[r] = true;
    }
    for r in 0..robots {
        let halted = state.snapshots[r].terminated;
        if awake[r] && !seen[r] && !halted {
            return Err(EngineError::MissingIntent(r));
        }
        if awake[r] || halted {
            state.slept[r] = 0;
        } else {
            state.slept[r] += 1;
            if state.slept[r] > state.f {
                return Err(EngineError::FairnessViolated {
                    robot: r,
                    slept: state.slept[r],
                    f: state.f,
                });
            }
        }
    }

    let round = state.ring.round();
    let mut travel: Vec<Option<(usize, GlobalDir)>> = vec![None; robots];
    for intent in intents {
        let r = intent.robot;
        state.pending[r] = None;
        state.snapshots[r] = intent.public.clone();
        state.moved_since[r] = 0;
        if let Action::Move(d) = intent.action {
            let dir = intent.frame.to_global(d);
            let (edge, _) = state.ring.step_from(state.ring.position(r), dir);
            if removed.contains(&edge) {
                state.pending[r] = Some(PendingMove {
                    robot: r,
                    edge,
                    dir,
                    armed_at: round,
                    action: d,
                    frame: intent.frame,
                });
            } else {
                travel[r] = Some((edge, dir));
            }
        }
    }
    for r in 0..robots {
        if let Some(p) = &state.pending[r] {
            if !awake[r] && !removed.contains(&p.edge) {
                travel[r] = Some((p.edge, p.dir));
                state.pending[r] = None;
            }
        }
    }
    let mut crossings = Vec::new();
    for i in 0..robots {
        for j in i + 1..robots {
            if let (Some((ei, di)), Some((ej, dj))) = (travel[i], travel[j]) {
                if ei == ej && di != dj {
                    crossings.push((i, j));
                }
            }
        }
    }
    let mut moved = vec![false; robots];
    for r in 0..robots {
        if let Some((_, dir)) = travel[r] {
            let (_, dest) = state.ring.step_from(state.ring.position(r), dir);
            state.ring.set_position(r, dest);
            state.moved_since[r] += 1;
            moved[r] = true;
        }
    }
    state.ring.set_missing(removed);
    state.ring.tick();

    let blocked: Vec<bool> = (0..robots).map(|r| state.blocked(r)).collect();
    let outcome = RoundOutcome { moved, crossings };
    let events = assemble_events(
        &state.ring,
        &outcome,
        &state.snapshots,
        &state.moved_since,
        &blocked,
        true,
    );
    for (r, ev) in events.into_iter().enumerate() {
        merge(&mut state.buffered[r], ev);
    }
    Ok(())
}

/// Rules of the semi-synchronous protocol: a coin fixes the initial
/// direction, C needs both endpoints seen blocked, detection halts at once.
pub fn ssync_rules() -> Rules {
    Rules {
        phase_stretch: 1,
        crossing_size_correction: true,
        countdown: Countdown::Exact,
        partial_termination: true,
        require_blocked: true,
        first_leg_void: true,
        coin_stage1: true,
    }
}

/// One activation of a robot. The first activation flips the coin that
/// fixes the direction walked until the robot is marked.
pub fn ssync_decide<R: Rng + ?Sized>(
    rs: &RobotState,
    ev: &RoundEvents,
    rng: &mut R,
) -> Result<(RobotState, Action), ProtocolError> {
    let mut s = rs.clone();
    if s.fixed_dir.is_none() {
        s.fixed_dir = Some(if rng.gen::<bool>() {
            LocalDir::Right
        } else {
            LocalDir::Left
        });
    }
    transition(&s, ev, &ssync_rules())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SsyncParams {
    pub f_bound: u64,
    #[serde(default)]
    pub schedule_policy: SchedulePolicy,
    /// A run that makes more than `step_budget * f * n` moves without
    /// halting is stopped and counted as a failure.
    #[serde(default = "default_step_budget")]
    pub step_budget: u64,
}

fn default_step_budget() -> u64 {
    20
}

impl SsyncParams {
    pub fn new(f_bound: u64, schedule_policy: SchedulePolicy) -> Self {
        SsyncParams {
            f_bound,
            schedule_policy,
            step_budget: default_step_budget(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SsyncSpec {
    pub n: usize,
    pub robots: Vec<RobotSetup>,
    pub adversary: AdversaryConfig,
    pub params: SsyncParams,
    pub seed: u64,
    pub max_rounds: Option<u64>,
}

impl SsyncSpec {
    pub fn effective_max_rounds(&self) -> u64 {
        self.max_rounds
            .unwrap_or(200 * self.params.f_bound.max(1) * self.n as u64 + 1000)
    }
}

/// Runs the semi-synchronous protocol until some robot halts (plus up to
/// `f + 1` rounds for its partner to notice) or the round cap.
///
/// Every detection is checked against the engine's coverage; a detection
/// before full coverage is recorded as a violation.
pub fn run_ssync(spec: &SsyncSpec) -> Result<RunResult, SimError> {
    run_ssync_with(spec, |_| {})
}

/// [`run_ssync`], handing every round to `sink`.
pub fn run_ssync_with(
    spec: &SsyncSpec,
    mut sink: impl FnMut(&RoundRecord),
) -> Result<RunResult, SimError> {
    if spec.robots.len() != 3 || spec.n < 3 {
        return Err(
            ConfigError::Invalid("semi-synchronous runs need 3 robots and n >= 3".into()).into(),
        );
    }
    if spec.adversary.kind == AdversaryKind::Exhaustive {
        return Err(
            ConfigError::Invalid("the exhaustive adversary is synchronous only".into()).into(),
        );
    }
    let f = spec.params.f_bound;
    let ring = RingState::new(
        spec.n,
        spec.robots.iter().map(|r| r.position).collect(),
        spec.adversary.edges_removed_per_round,
    )?;
    let mut robots: Vec<RobotState> = spec
        .robots
        .iter()
        .map(|r| RobotState::new(r.id, Frame::new(r.left_is_cw)))
        .collect();
    let mut adversary: Box<dyn Adversary> =
        spec.adversary.build(&ring, derive_seed(spec.seed, 1))?;
    let mut schedule = ActivationSchedule::new(
        spec.params.schedule_policy,
        f,
        robots.len(),
        derive_seed(spec.seed, 2),
    )?;
    let mut coins: Vec<ChaCha8Rng> = (0..robots.len())
        .map(|i| ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, 100 + i as u64)))
        .collect();
    let mut state = SsyncState::new(ring, &robots, f);
    let max_rounds = spec.effective_max_rounds();
    let budget = spec.params.step_budget * f * spec.n as u64;
    let mut first_termination = None;
    let mut rounds_coverage = coverage_complete(&state.ring).then_some(0);
    let mut steps = 0u64;
    let mut violations = Vec::new();
    let mut stages = [0u64; 4];
    let mut coin_dirs: Vec<Option<GlobalDir>> = vec![None; robots.len()];

    while state.ring.round() < max_rounds {
        let round = state.ring.round();
        let halted: Vec<bool> = robots.iter().map(|r| r.terminated).collect();
        let terminated = halted.iter().filter(|&&h| h).count();
        if terminated >= 2
            || first_termination.is_some_and(|t| round > t + f + 1)
            || (first_termination.is_none() && steps > budget)
        {
            break;
        }
        let awake = schedule.awake(round, &halted);
        let mut intents = Vec::new();
        let mut actions = vec![Action::Stay; robots.len()];
        for i in 0..robots.len() {
            if robots[i].terminated || !(awake[i] || state.has_meeting(i)) {
                continue;
            }
            let ev = state.take_events(i);
            let fresh = robots[i].fixed_dir.is_none();
            let (next, action) = ssync_decide(&robots[i], &ev, &mut coins[i])?;
            if fresh {
                coin_dirs[i] = next.fixed_dir.map(|d| robots[i].frame.to_global(d));
            }
            if next.size.is_some() && robots[i].size.is_none() && !coverage_complete(&state.ring) {
                violations.push(format!(
                    "round {round}: robot {} detected completion with {} of {} nodes visited",
                    next.id,
                    state.ring.visited_count(),
                    spec.n
                ));
            }
            robots[i] = next;
            actions[i] = action;
            if awake[i] && !robots[i].terminated {
                intents.push(robots[i].intent(i, action));
            } else {
                let heading = match action {
                    Action::Move(d) if !robots[i].terminated => Some(robots[i].frame.to_global(d)),
                    _ => None,
                };
                state.refresh(i, robots[i].public(), heading);
            }
        }
        if first_termination.is_none() && robots.iter().any(|r| r.terminated) {
            first_termination = Some(round);
        }
        let stage = crate::protocol::global_stage(&robots).min(4);
        stages[usize::from(stage) - 1] += 1;
        let effective = state.effective_intents(&intents);
        let removed = adversary.choose(&AdversaryView {
            ring: &state.ring,
            intents: &effective,
            robots: &robots,
        });
        let awake_or_halted: Vec<bool> = awake
            .iter()
            .zip(&robots)
            .map(|(&a, r)| a && !r.terminated)
            .collect();
        let positions: Vec<usize> = (0..robots.len()).map(|r| state.ring.position(r)).collect();
        ssync_advance_round(&mut state, &awake_or_halted, &intents, &removed)?;
        let moved: Vec<bool> = (0..robots.len())
            .map(|r| state.ring.position(r) != positions[r])
            .collect();
        steps += moved.iter().filter(|&&m| m).count() as u64;
        if rounds_coverage.is_none() && coverage_complete(&state.ring) {
            rounds_coverage = Some(state.ring.round());
        }
        sink(&RoundRecord {
            round,
            removed,
            robots: robots
                .iter()
                .enumerate()
                .map(|(i, r)| RobotRecord {
                    position: state.ring.position(i),
                    mark: r.mark,
                    stage: r.stage,
                    action: if awake_or_halted[i] {
                        actions[i]
                    } else {
                        Action::Stay
                    },
                    moved: moved[i],
                    state: r.clone(),
                })
                .collect(),
            passive_moves: Some(
                (0..robots.len())
                    .filter(|&i| moved[i] && !awake_or_halted[i])
                    .collect(),
            ),
            awake: Some(awake_or_halted),
        });
    }

    let terminated = robots.iter().filter(|r| r.terminated).count();
    let coins_agree =
        coin_dirs.iter().all(Option::is_some) && coin_dirs.windows(2).all(|w| w[0] == w[1]);
    let failure_class = if first_termination.is_none() {
        if coins_agree {
            Some(FailureClass::DirectionSplit)
        } else {
            Some(FailureClass::NotTerminated)
        }
    } else if !violations.is_empty() || !coverage_complete(&state.ring) {
        Some(FailureClass::CoverageIncomplete)
    } else {
        None
    };
    Ok(RunResult {
        n: spec.n,
        k: spec.robots.iter().map(|r| r.id.len()).max().unwrap_or(0),
        adversary: spec.adversary.kind.to_string(),
        seed: spec.seed,
        rounds_coverage,
        rounds_termination: first_termination,
        rounds_first_termination: first_termination,
        stages,
        success: failure_class.is_none(),
        failure_class,
        steps,
        sizes: robots.iter().map(|r| r.size).collect(),
        terminated,
        ids: spec.robots.iter().map(|r| r.id).collect(),
        violations,
    })
}
