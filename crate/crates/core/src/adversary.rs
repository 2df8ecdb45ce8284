//! Edge-removal strategies.
//!
//! An adversary sees everything: positions, every robot's memory and the
//! intents of the current round. It answers with the edges missing this
//! round, at most `edges_removed_per_round` of them.

use std::fmt;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::protocol::RobotState;
use crate::ring::{Intent, RingState};
use crate::search::{ExplorationGame, Search};
use crate::types::{Action, RobotId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AdversaryKind {
    /// A uniformly random edge every round.
    #[serde(rename = "RED")]
    Red,
    /// One edge missing for the whole run.
    #[serde(rename = "SED")]
    Sed,
    /// Blocks a uniformly random robot every round.
    #[serde(rename = "RRB")]
    Rrb,
    /// Blocks one robot for the whole run.
    #[serde(rename = "SRB")]
    Srb,
    /// Keeps two tracked robots apart.
    NeverMeet,
    /// Keeps one robot inside a two-node strip.
    Trap,
    /// Plays the worst case found by exhaustive search.
    Exhaustive,
    None,
}

impl AdversaryKind {
    pub const EXPERIMENTAL: [AdversaryKind; 4] = [
        AdversaryKind::Red,
        AdversaryKind::Sed,
        AdversaryKind::Rrb,
        AdversaryKind::Srb,
    ];
}

impl fmt::Display for AdversaryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            AdversaryKind::Red => "RED",
            AdversaryKind::Sed => "SED",
            AdversaryKind::Rrb => "RRB",
            AdversaryKind::Srb => "SRB",
            AdversaryKind::NeverMeet => "NeverMeet",
            AdversaryKind::Trap => "Trap",
            AdversaryKind::Exhaustive => "Exhaustive",
            AdversaryKind::None => "None",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for AdversaryKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let kind = match s.to_ascii_lowercase().as_str() {
            "red" => AdversaryKind::Red,
            "sed" => AdversaryKind::Sed,
            "rrb" => AdversaryKind::Rrb,
            "srb" => AdversaryKind::Srb,
            "nevermeet" | "never-meet" => AdversaryKind::NeverMeet,
            "trap" => AdversaryKind::Trap,
            "exhaustive" => AdversaryKind::Exhaustive,
            "none" => AdversaryKind::None,
            _ => return Err(ConfigError::Invalid(format!("unknown adversary `{s}`"))),
        };
        Ok(kind)
    }
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversaryConfig {
    pub kind: AdversaryKind,
    #[serde(default = "one")]
    pub edges_removed_per_round: usize,
    /// Overrides the seed derived from the run seed.
    #[serde(default)]
    pub seed: Option<u64>,
    /// Robot for SRB and Trap, edge for SED. Drawn at random when absent.
    #[serde(default)]
    pub target: Option<usize>,
    /// Tracked pair for NeverMeet; robots 0 and 1 by default.
    #[serde(default)]
    pub tracked: Option<(RobotId, RobotId)>,
    /// Trap strip `(u, u + 1)`; defaults to the target's node and its
    /// clockwise neighbour.
    #[serde(default)]
    pub strip: Option<usize>,
}

impl AdversaryConfig {
    pub fn new(kind: AdversaryKind) -> Self {
        AdversaryConfig {
            kind,
            edges_removed_per_round: 1,
            seed: None,
            target: None,
            tracked: None,
            strip: None,
        }
    }

    pub fn with_target(mut self, target: usize) -> Self {
        self.target = Some(target);
        self
    }

    /// Instantiates the strategy for a run on `ring`.
    pub fn build(&self, ring: &RingState, seed: u64) -> Result<Box<dyn Adversary>, ConfigError> {
        let n = ring.n();
        let robots = ring.robots();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed.unwrap_or(seed));
        let cap = self.edges_removed_per_round;
        let robot_target = |rng: &mut ChaCha8Rng| match self.target {
            Some(r) if r >= robots => Err(ConfigError::UnknownTarget(r)),
            Some(r) => Ok(r),
            None => Ok(rng.gen_range(0..robots)),
        };
        let adversary: Box<dyn Adversary> = match self.kind {
            AdversaryKind::Red => Box::new(RandomEdge { rng, cap }),
            AdversaryKind::Sed => {
                let edge = match self.target {
                    Some(e) if e >= n => {
                        return Err(ConfigError::Invalid(format!(
                            "SED edge {e} outside ring of size {n}"
                        )))
                    }
                    Some(e) => e,
                    None => rng.gen_range(0..n),
                };
                Box::new(StaticEdge { edge, cap })
            }
            AdversaryKind::Rrb => Box::new(RandomRobot { rng, cap }),
            AdversaryKind::Srb => {
                let robot = robot_target(&mut rng)?;
                Box::new(StaticRobot { robot, cap })
            }
            AdversaryKind::NeverMeet => {
                let (a, b) = self.tracked.unwrap_or((0, 1));
                for r in [a, b] {
                    if r >= robots {
                        return Err(ConfigError::UnknownTarget(r));
                    }
                }
                if a == b {
                    return Err(ConfigError::Invalid(
                        "NeverMeet needs two distinct robots".into(),
                    ));
                }
                Box::new(NeverMeet { a, b, cap })
            }
            AdversaryKind::Trap => {
                let robot = robot_target(&mut rng)?;
                let u = self.strip.unwrap_or_else(|| ring.position(robot));
                if u >= n {
                    return Err(ConfigError::Invalid(format!(
                        "strip node {u} outside ring of size {n}"
                    )));
                }
                let trap = Trap { robot, u, cap };
                trap.check(ring)?;
                Box::new(trap)
            }
            AdversaryKind::Exhaustive => Box::new(Exhaustive { search: None, cap }),
            AdversaryKind::None => Box::new(NoRemoval),
        };
        Ok(adversary)
    }
}

/// Everything an adversary may look at before choosing.
pub struct AdversaryView<'a> {
    pub ring: &'a RingState,
    /// Moves that will execute unless blocked. In the semi-synchronous model
    /// these include the pending moves of sleeping robots.
    pub intents: &'a [Intent],
    pub robots: &'a [RobotState],
}

pub trait Adversary: Send {
    /// Edges missing this round.
    fn choose(&mut self, view: &AdversaryView<'_>) -> Vec<usize>;
}

/// Edges the given robots would traverse.
fn intended_edge(view: &AdversaryView<'_>, robot: RobotId) -> Option<usize> {
    view.intents
        .iter()
        .find(|i| i.robot == robot)
        .and_then(|i| view.ring.target_edge(i))
}

pub struct RandomEdge {
    rng: ChaCha8Rng,
    cap: usize,
}

impl Adversary for RandomEdge {
    fn choose(&mut self, view: &AdversaryView<'_>) -> Vec<usize> {
        let n = view.ring.n();
        match self.cap {
            0 => Vec::new(),
            1 => vec![self.rng.gen_range(0..n)],
            t => sample(&mut self.rng, n, t.min(n)).into_vec(),
        }
    }
}

pub struct StaticEdge {
    edge: usize,
    cap: usize,
}

impl StaticEdge {
    pub fn edge(&self) -> usize {
        self.edge
    }
}

impl Adversary for StaticEdge {
    fn choose(&mut self, _view: &AdversaryView<'_>) -> Vec<usize> {
        if self.cap == 0 {
            Vec::new()
        } else {
            vec![self.edge]
        }
    }
}

pub struct RandomRobot {
    rng: ChaCha8Rng,
    cap: usize,
}

impl Adversary for RandomRobot {
    fn choose(&mut self, view: &AdversaryView<'_>) -> Vec<usize> {
        let live: Vec<RobotId> = (0..view.robots.len())
            .filter(|&r| !view.robots[r].terminated)
            .collect();
        if live.is_empty() || self.cap == 0 {
            return Vec::new();
        }
        let robot = live[self.rng.gen_range(0..live.len())];
        intended_edge(view, robot).into_iter().collect()
    }
}

pub struct StaticRobot {
    robot: RobotId,
    cap: usize,
}

impl Adversary for StaticRobot {
    fn choose(&mut self, view: &AdversaryView<'_>) -> Vec<usize> {
        if self.cap == 0 {
            return Vec::new();
        }
        intended_edge(view, self.robot).into_iter().collect()
    }
}

pub struct NeverMeet {
    a: RobotId,
    b: RobotId,
    cap: usize,
}

impl NeverMeet {
    /// Whether the tracked robots would meet if `removed` were missing.
    fn meets(&self, view: &AdversaryView<'_>, removed: Option<usize>) -> bool {
        let ring = view.ring;
        let next = |r: RobotId| -> (usize, Option<usize>) {
            let pos = ring.position(r);
            match view.intents.iter().find(|i| i.robot == r) {
                Some(intent) if matches!(intent.action, Action::Move(_)) => {
                    let Action::Move(d) = intent.action else {
                        unreachable!()
                    };
                    let (edge, dest) = ring.step_from(pos, intent.frame.to_global(d));
                    if Some(edge) == removed {
                        (pos, None)
                    } else {
                        (dest, Some(edge))
                    }
                }
                _ => (pos, None),
            }
        };
        let (pa, ea) = next(self.a);
        let (pb, eb) = next(self.b);
        let crossed = ea.is_some() && ea == eb;
        pa == pb || crossed
    }

    /// The strategy for the current round.
    pub fn edges(&self, view: &AdversaryView<'_>) -> Vec<usize> {
        if self.cap == 0 {
            return Vec::new();
        }
        let ring = view.ring;
        let (pa, pb) = (ring.position(self.a), ring.position(self.b));
        let mut candidates = Vec::new();
        if ring.distance(pa, pb) == 1 {
            let between = if (pa + 1) % ring.n() == pb { pa } else { pb };
            candidates.push(Some(between));
        }
        candidates.push(None);
        candidates.extend(intended_edge(view, self.a).map(Some));
        candidates.extend(intended_edge(view, self.b).map(Some));
        let pick = candidates
            .iter()
            .copied()
            .find(|&c| !self.meets(view, c))
            .unwrap_or(candidates[0]);
        pick.into_iter().collect()
    }
}

impl Adversary for NeverMeet {
    fn choose(&mut self, view: &AdversaryView<'_>) -> Vec<usize> {
        self.edges(view)
    }
}

pub struct Trap {
    robot: RobotId,
    u: usize,
    cap: usize,
}

impl Trap {
    fn strip(&self, n: usize) -> (usize, usize) {
        (self.u, (self.u + 1) % n)
    }

    fn check(&self, ring: &RingState) -> Result<(), ConfigError> {
        let (u, v) = self.strip(ring.n());
        let node = ring.position(self.robot);
        if node != u && node != v {
            return Err(ConfigError::TrapOutsideStrip {
                robot: self.robot,
                node,
                u,
                v,
            });
        }
        Ok(())
    }

    /// The strategy for the current round.
    pub fn edges(&self, view: &AdversaryView<'_>) -> Vec<usize> {
        if self.cap == 0 {
            return Vec::new();
        }
        // the strip edge is e_u
        match intended_edge(view, self.robot) {
            Some(edge) if edge != self.u => vec![edge],
            _ => Vec::new(),
        }
    }
}

impl Adversary for Trap {
    fn choose(&mut self, view: &AdversaryView<'_>) -> Vec<usize> {
        self.edges(view)
    }
}

/// Plays the removal maximising the remaining rounds of the deterministic
/// protocol. Only sensible on small rings.
pub struct Exhaustive {
    search: Option<Search<ExplorationGame>>,
    cap: usize,
}

impl Adversary for Exhaustive {
    fn choose(&mut self, view: &AdversaryView<'_>) -> Vec<usize> {
        if self.cap == 0 {
            return Vec::new();
        }
        let search = self.search.get_or_insert_with(|| {
            let k = view.robots.iter().map(|r| r.id.len()).max().unwrap_or(1);
            let n = view.ring.n() as u64;
            let horizon = 7 * n + n.saturating_mul(1u64 << k.min(40));
            Search::new(ExplorationGame::deterministic(), horizon)
        });
        let actions: Vec<Action> = view.intents.iter().map(|i| i.action).collect();
        let node = ExplorationGame::node(view.ring, view.robots, &actions);
        search.best_choice(&node, view.ring.round())
    }
}

pub struct NoRemoval;

impl Adversary for NoRemoval {
    fn choose(&mut self, _view: &AdversaryView<'_>) -> Vec<usize> {
        Vec::new()
    }
}

/// Replays a fixed removal plan, then removes nothing.
///
/// With `relative` set, edge `e` of round `t` means edge `e` counted from
/// robot 0's node, which is how [`Search::witness`] reports removals.
pub struct Scripted {
    plan: Vec<Vec<usize>>,
    relative: bool,
}

impl Scripted {
    pub fn new(plan: Vec<Vec<usize>>) -> Self {
        Scripted {
            plan,
            relative: false,
        }
    }

    pub fn relative(plan: Vec<Vec<usize>>) -> Self {
        Scripted {
            plan,
            relative: true,
        }
    }
}

impl Adversary for Scripted {
    fn choose(&mut self, view: &AdversaryView<'_>) -> Vec<usize> {
        let round = view.ring.round() as usize;
        let Some(edges) = self.plan.get(round) else {
            return Vec::new();
        };
        let n = view.ring.n();
        let shift = if self.relative {
            view.ring.position(0)
        } else {
            0
        };
        edges.iter().map(|e| (e + shift) % n).collect()
    }
}
