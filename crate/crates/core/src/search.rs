//! Exhaustive worst-case search over adversary choices.
//!
//! The adversary picks the removed edge every round; the robots are
//! deterministic, so the game tree only branches on the adversary. Values
//! are memoised on the canonical configuration (rotation by robot 0), which
//! is sound because nodes are anonymous.

use std::collections::{HashMap, HashSet};
use std::hash::Hash;

use crate::error::SimError;
use crate::protocol::{decide_all, global_stage, RobotState, Rules};
use crate::ring::{advance_round_in_place, coverage_complete, RingState};
use crate::sim::{initial_events, RobotSetup};
use crate::types::{Action, Frame, GlobalDir};

/// A two-player game where only the adversary chooses.
pub trait Game {
    type Node: Clone + Eq + Hash;

    /// Removal sets worth trying at `node`; never empty.
    fn choices(&self, node: &Self::Node) -> Vec<Vec<usize>>;
    fn advance(&self, node: &Self::Node, removed: &[usize]) -> Result<Self::Node, String>;
    /// `Some` once the game is over: `Ok` for a correct finish.
    fn finished(&self, node: &Self::Node) -> Option<Result<(), String>>;
    /// Stage of the round played from `node`, in `1..=4`.
    fn stage(&self, node: &Self::Node) -> u8;
}

/// Worst remaining rounds from a node, in total and per stage.
///
/// Each per-stage figure is maximised separately, so they need not come
/// from the same adversary strategy.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Worst {
    pub total: u64,
    pub stages: [u64; 4],
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Eval {
    Done(Worst),
    /// Some adversary strategy breaks the protocol: wrong finish, a
    /// protocol error, an endless loop or a run past the horizon.
    Violation(String),
}

impl Eval {
    fn rank(&self) -> (bool, u64) {
        match self {
            Eval::Violation(_) => (true, u64::MAX),
            Eval::Done(w) => (false, w.total),
        }
    }
}

pub struct Search<G: Game> {
    game: G,
    horizon: u64,
    memo: HashMap<G::Node, Eval>,
    on_stack: HashSet<G::Node>,
}

impl<G: Game> Search<G> {
    pub fn new(game: G, horizon: u64) -> Self {
        Search {
            game,
            horizon,
            memo: HashMap::new(),
            on_stack: HashSet::new(),
        }
    }

    pub fn game(&self) -> &G {
        &self.game
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    /// Configurations evaluated so far.
    pub fn explored(&self) -> usize {
        self.memo.len()
    }

    /// Worst outcome from `node`, reached after `depth` rounds.
    pub fn evaluate(&mut self, node: &G::Node, depth: u64) -> Eval {
        if let Some(done) = self.game.finished(node) {
            return match done {
                Ok(()) => Eval::Done(Worst::default()),
                Err(e) => Eval::Violation(e),
            };
        }
        if let Some(v) = self.memo.get(node) {
            return v.clone();
        }
        if depth >= self.horizon {
            return Eval::Violation(format!("still running after {} rounds", self.horizon));
        }
        if self.on_stack.contains(node) {
            return Eval::Violation("adversary can loop forever".to_string());
        }
        self.on_stack.insert(node.clone());
        let stage = self.game.stage(node);
        let mut best: Option<Worst> = None;
        let mut violation = None;
        for removed in self.game.choices(node) {
            let child = match self.game.advance(node, &removed) {
                Ok(c) => c,
                Err(e) => {
                    violation = Some(e);
                    break;
                }
            };
            match self.evaluate(&child, depth + 1) {
                Eval::Violation(e) => {
                    violation = Some(e);
                    break;
                }
                Eval::Done(w) => {
                    let b = best.get_or_insert(Worst::default());
                    b.total = b.total.max(w.total + 1);
                    for (s, (acc, x)) in b.stages.iter_mut().zip(w.stages).enumerate() {
                        let own = u64::from(usize::from(stage) == s + 1);
                        *acc = (*acc).max(x + own);
                    }
                }
            }
        }
        self.on_stack.remove(node);
        let eval = match violation {
            Some(e) => Eval::Violation(e),
            None => Eval::Done(best.expect("choices are never empty")),
        };
        self.memo.insert(node.clone(), eval.clone());
        eval
    }

    /// The removal that maximises the remaining rounds.
    pub fn best_choice(&mut self, node: &G::Node, depth: u64) -> Vec<usize> {
        let mut best: Option<((bool, u64), Vec<usize>)> = None;
        for removed in self.game.choices(node) {
            let rank = match self.game.advance(node, &removed) {
                Ok(child) => self.evaluate(&child, depth + 1).rank(),
                Err(_) => (true, u64::MAX),
            };
            if best.as_ref().is_none_or(|(r, _)| rank > *r) {
                best = Some((rank, removed));
            }
        }
        best.map(|(_, r)| r).unwrap_or_default()
    }

    /// The worst-case sequence of removals from `root`.
    pub fn witness(&mut self, root: &G::Node) -> Vec<Vec<usize>> {
        let mut node = root.clone();
        let mut trace = Vec::new();
        for depth in 0..self.horizon {
            if self.game.finished(&node).is_some() {
                break;
            }
            let removed = self.best_choice(&node, depth);
            match self.game.advance(&node, &removed) {
                Ok(next) => node = next,
                Err(_) => {
                    trace.push(removed);
                    break;
                }
            }
            trace.push(removed);
        }
        trace
    }
}

/// A configuration of the exploration protocol right after the robots
/// decided.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ExplorationNode {
    ring: RingState,
    robots: Vec<RobotState>,
    actions: Vec<Action>,
}

impl ExplorationNode {
    pub fn robots(&self) -> &[RobotState] {
        &self.robots
    }

    pub fn ring(&self) -> &RingState {
        &self.ring
    }
}

/// The exploration protocol against a single-edge adversary.
#[derive(Clone, Debug)]
pub struct ExplorationGame {
    rules: Rules,
}

impl ExplorationGame {
    pub fn deterministic() -> Self {
        ExplorationGame {
            rules: Rules::deterministic(),
        }
    }

    pub fn node(ring: &RingState, robots: &[RobotState], actions: &[Action]) -> ExplorationNode {
        let mut ring = ring.clone();
        ring.canonicalize();
        ExplorationNode {
            ring,
            robots: robots.iter().map(RobotState::behavioural).collect(),
            actions: actions.to_vec(),
        }
    }

    /// The configuration after the first decisions of a run.
    pub fn root(&self, n: usize, setups: &[RobotSetup]) -> Result<ExplorationNode, SimError> {
        let ring = RingState::new(n, setups.iter().map(|s| s.position).collect(), 1)?;
        let robots: Vec<RobotState> = setups
            .iter()
            .map(|s| RobotState::new(s.id, Frame::new(s.left_is_cw)))
            .collect();
        let events = initial_events(&ring, &robots, true);
        let (robots, actions) = decide_all(&robots, &events, &self.rules)?;
        Ok(Self::node(&ring, &robots, &actions))
    }

    fn intents(node: &ExplorationNode) -> Vec<crate::ring::Intent> {
        node.robots
            .iter()
            .zip(&node.actions)
            .enumerate()
            .map(|(i, (r, a))| r.intent(i, *a))
            .collect()
    }
}

impl Game for ExplorationGame {
    type Node = ExplorationNode;

    fn choices(&self, node: &ExplorationNode) -> Vec<Vec<usize>> {
        let mut edges: Vec<usize> = Self::intents(node)
            .iter()
            .filter_map(|i| node.ring.target_edge(i))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        std::iter::once(Vec::new())
            .chain(edges.into_iter().map(|e| vec![e]))
            .collect()
    }

    fn advance(
        &self,
        node: &ExplorationNode,
        removed: &[usize],
    ) -> Result<ExplorationNode, String> {
        let mut ring = node.ring.clone();
        let intents = Self::intents(node);
        let events = advance_round_in_place(&mut ring, &intents, removed, true)
            .map_err(|e| e.to_string())?;
        let (robots, actions) =
            decide_all(&node.robots, &events, &self.rules).map_err(|e| e.to_string())?;
        Ok(Self::node(&ring, &robots, &actions))
    }

    fn finished(&self, node: &ExplorationNode) -> Option<Result<(), String>> {
        if !node.robots.iter().all(|r| r.terminated) {
            return None;
        }
        if !coverage_complete(&node.ring) {
            return Some(Err(format!(
                "terminated with {} of {} nodes visited",
                node.ring.visited_count(),
                node.ring.n()
            )));
        }
        let n = node.ring.n() as u64;
        if let Some(r) = node.robots.iter().find(|r| r.size.is_some_and(|s| s != n)) {
            return Some(Err(format!(
                "robot {} computed size {:?} on a ring of {n}",
                r.id, r.size
            )));
        }
        Some(Ok(()))
    }

    fn stage(&self, node: &ExplorationNode) -> u8 {
        global_stage(&node.robots).min(4)
    }
}

/// What ends a [`MeetingGame`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeetingGoal {
    /// Any two robots share a node or cross.
    AnyPair,
    /// Robot 0 or robot 1 reaches robot 2.
    ReachThird,
}

/// Robots walking in fixed directions (or standing still).
#[derive(Clone, Debug)]
pub struct MeetingGame {
    n: usize,
    dirs: Vec<Option<GlobalDir>>,
    goal: MeetingGoal,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MeetingNode {
    positions: Vec<usize>,
    met: bool,
}

impl MeetingGame {
    pub fn new(n: usize, dirs: Vec<Option<GlobalDir>>, goal: MeetingGoal) -> Self {
        MeetingGame { n, dirs, goal }
    }

    pub fn root(&self, positions: &[usize]) -> MeetingNode {
        let mut node = MeetingNode {
            positions: positions.to_vec(),
            met: false,
        };
        node.met = self.pairs().any(|(i, j)| positions[i] == positions[j]);
        self.canonical(node)
    }

    fn canonical(&self, mut node: MeetingNode) -> MeetingNode {
        let shift = node.positions[0];
        for p in &mut node.positions {
            *p = (*p + self.n - shift) % self.n;
        }
        node
    }

    fn pairs(&self) -> Box<dyn Iterator<Item = (usize, usize)> + '_> {
        let r = self.dirs.len();
        match self.goal {
            MeetingGoal::AnyPair => {
                Box::new((0..r).flat_map(move |i| (i + 1..r).map(move |j| (i, j))))
            }
            MeetingGoal::ReachThird => Box::new([(0, 2), (1, 2)].into_iter()),
        }
    }

    fn step(&self, node: usize, dir: GlobalDir) -> (usize, usize) {
        match dir {
            GlobalDir::Cw => (node, (node + 1) % self.n),
            GlobalDir::Ccw => {
                let prev = (node + self.n - 1) % self.n;
                (prev, prev)
            }
        }
    }
}

impl Game for MeetingGame {
    type Node = MeetingNode;

    fn choices(&self, node: &MeetingNode) -> Vec<Vec<usize>> {
        let mut edges: Vec<usize> = self
            .dirs
            .iter()
            .zip(&node.positions)
            .filter_map(|(d, &p)| d.map(|d| self.step(p, d).0))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        std::iter::once(Vec::new())
            .chain(edges.into_iter().map(|e| vec![e]))
            .collect()
    }

    fn advance(&self, node: &MeetingNode, removed: &[usize]) -> Result<MeetingNode, String> {
        let mut positions = node.positions.clone();
        let mut edges = vec![None; positions.len()];
        for (i, d) in self.dirs.iter().enumerate() {
            if let Some(d) = d {
                let (edge, dest) = self.step(positions[i], *d);
                if !removed.contains(&edge) {
                    positions[i] = dest;
                    edges[i] = Some((edge, *d));
                }
            }
        }
        let met = self.pairs().any(|(i, j)| {
            let crossed = matches!((edges[i], edges[j]), (Some((ei, di)), Some((ej, dj))) if ei == ej && di != dj);
            positions[i] == positions[j] || crossed
        });
        Ok(self.canonical(MeetingNode { positions, met }))
    }

    fn finished(&self, node: &MeetingNode) -> Option<Result<(), String>> {
        node.met.then_some(Ok(()))
    }

    fn stage(&self, _node: &MeetingNode) -> u8 {
        1
    }
}
