//! Ground truth of the dynamic ring and the synchronous round.
//!
//! A round has three sub-steps: robots decide, the adversary removes edges,
//! robots move over the edges that are still present. Edge `e_j` joins node
//! `j` and node `(j + 1) mod n`. Node and edge indices never leave this layer:
//! protocols only see [`RoundEvents`].

use serde::{Deserialize, Serialize};

use crate::error::EngineError;
use crate::types::{Action, Frame, GlobalDir, PublicState, RobotId};

/// A robot's decision for the current round.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Intent {
    pub robot: RobotId,
    pub action: Action,
    /// Frame used to translate `action` to a ring direction.
    pub frame: Frame,
    pub public: PublicState,
}

/// The state of the simulated world.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RingState {
    n: usize,
    edge_cap: usize,
    missing_edges: Vec<usize>,
    positions: Vec<usize>,
    round: u64,
    visited: Vec<bool>,
    visited_count: usize,
}

impl RingState {
    pub fn new(n: usize, positions: Vec<usize>, edge_cap: usize) -> Result<Self, EngineError> {
        let mut visited = vec![false; n];
        let mut visited_count = 0;
        if n < 3 {
            return Err(EngineError::EdgeOutOfRange { edge: 0, n });
        }
        for &p in &positions {
            if p >= n {
                return Err(EngineError::EdgeOutOfRange { edge: p, n });
            }
            if !visited[p] {
                visited[p] = true;
                visited_count += 1;
            }
        }
        Ok(RingState {
            n,
            edge_cap,
            missing_edges: Vec::new(),
            positions,
            round: 0,
            visited,
            visited_count,
        })
    }

    /// Rebuilds a state from its parts, marking every node in `visited` as seen.
    pub fn from_parts(
        n: usize,
        positions: Vec<usize>,
        edge_cap: usize,
        round: u64,
        visited: impl IntoIterator<Item = usize>,
    ) -> Result<Self, EngineError> {
        let mut state = RingState::new(n, positions, edge_cap)?;
        state.round = round;
        for v in visited {
            if v >= n {
                return Err(EngineError::EdgeOutOfRange { edge: v, n });
            }
            state.mark_visited(v);
        }
        Ok(state)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edge_cap(&self) -> usize {
        self.edge_cap
    }

    pub fn missing_edges(&self) -> &[usize] {
        &self.missing_edges
    }

    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    pub fn position(&self, robot: RobotId) -> usize {
        self.positions[robot]
    }

    pub fn robots(&self) -> usize {
        self.positions.len()
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn visited(&self) -> &[bool] {
        &self.visited
    }

    pub fn visited_count(&self) -> usize {
        self.visited_count
    }

    fn mark_visited(&mut self, node: usize) {
        if !self.visited[node] {
            self.visited[node] = true;
            self.visited_count += 1;
        }
    }

    /// Rotates the ring so robot 0 sits on node 0 and forgets the round
    /// number and missing edges. Nodes are anonymous, so protocols cannot
    /// tell the difference.
    pub(crate) fn canonicalize(&mut self) {
        let shift = self.positions.first().copied().unwrap_or(0);
        for p in &mut self.positions {
            *p = (*p + self.n - shift) % self.n;
        }
        self.visited.rotate_left(shift);
        self.missing_edges.clear();
        self.round = 0;
    }

    pub(crate) fn set_position(&mut self, robot: RobotId, node: usize) {
        self.positions[robot] = node;
        self.mark_visited(node);
    }

    pub(crate) fn set_missing(&mut self, removed: &[usize]) {
        self.missing_edges.clear();
        self.missing_edges.extend_from_slice(removed);
        self.missing_edges.sort_unstable();
    }

    pub(crate) fn tick(&mut self) {
        self.round += 1;
    }

    /// Edge and destination reached from `node` in direction `dir`.
    pub fn step_from(&self, node: usize, dir: GlobalDir) -> (usize, usize) {
        match dir {
            GlobalDir::Cw => (node, (node + 1) % self.n),
            GlobalDir::Ccw => {
                let prev = (node + self.n - 1) % self.n;
                (prev, prev)
            }
        }
    }

    /// The edge a robot would traverse if it executed `intent`.
    pub fn target_edge(&self, intent: &Intent) -> Option<usize> {
        match intent.action {
            Action::Move(d) => {
                let node = self.positions[intent.robot];
                Some(self.step_from(node, intent.frame.to_global(d)).0)
            }
            Action::Stay => None,
        }
    }

    /// Shortest hop distance between two nodes.
    pub fn distance(&self, a: usize, b: usize) -> usize {
        let d = (a + self.n - b) % self.n;
        d.min(self.n - d)
    }
}

/// Raw movement results of one round.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RoundOutcome {
    pub moved: Vec<bool>,
    /// Pairs `(i, j)`, `i < j`, that traversed the same edge in opposite directions.
    pub crossings: Vec<(RobotId, RobotId)>,
}

/// A peer's snapshot as delivered to an observer.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PeerView {
    pub state: PublicState,
    /// Successful moves the peer made after the snapshot was taken.
    pub moved: u64,
}

impl PeerView {
    /// The peer's step counter including moves made after the snapshot.
    pub fn steps(&self) -> u64 {
        self.state.step + self.moved
    }
}

/// What a robot learns about the round that just ended.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RoundEvents {
    pub move_succeeded: bool,
    /// The robot is still waiting on a removed edge it tried to cross.
    pub self_blocked: bool,
    /// Robots ending the round on the same node.
    pub colocated_with: Vec<PeerView>,
    /// Robots that traversed the same edge in the opposite direction.
    pub crossed_with: Vec<PeerView>,
    /// Robots met only through another participant of the same meeting.
    pub relayed: Vec<PeerView>,
    /// Engine indices of the whole meeting, for the simulator's second
    /// exchange. Protocols never read it.
    #[serde(skip)]
    pub(crate) group: Vec<RobotId>,
}

impl RoundEvents {
    pub fn is_quiet(&self) -> bool {
        self.colocated_with.is_empty() && self.crossed_with.is_empty()
    }

    /// Direct meetings paired with whether they happened on an edge.
    pub fn direct(&self) -> impl Iterator<Item = (&PeerView, bool)> {
        self.colocated_with
            .iter()
            .map(|p| (p, false))
            .chain(self.crossed_with.iter().map(|p| (p, true)))
    }
}

fn check_intents(state: &RingState, intents: &[Intent]) -> Result<(), EngineError> {
    let mut seen = vec![false; state.robots()];
    for intent in intents {
        let slot = seen
            .get_mut(intent.robot)
            .ok_or(EngineError::UnknownRobot(intent.robot))?;
        if *slot {
            return Err(EngineError::DuplicateIntent(intent.robot));
        }
        *slot = true;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(EngineError::MissingIntent(missing));
    }
    Ok(())
}

pub(crate) fn check_removed(state: &RingState, removed: &[usize]) -> Result<(), EngineError> {
    if removed.len() > state.edge_cap {
        return Err(EngineError::TooManyRemoved {
            removed: removed.len(),
            cap: state.edge_cap,
        });
    }
    if let Some(&edge) = removed.iter().find(|&&e| e >= state.n) {
        return Err(EngineError::EdgeOutOfRange { edge, n: state.n });
    }
    Ok(())
}

/// Executes the movement sub-step and reports who moved and who crossed.
pub fn resolve_moves(
    state: &RingState,
    intents: &[Intent],
    removed: &[usize],
) -> Result<(RingState, RoundOutcome), EngineError> {
    let mut next = state.clone();
    let outcome = apply_moves(&mut next, intents, removed)?;
    Ok((next, outcome))
}

/// In-place form of [`resolve_moves`]; `state` is untouched on error.
pub fn apply_moves(
    state: &mut RingState,
    intents: &[Intent],
    removed: &[usize],
) -> Result<RoundOutcome, EngineError> {
    check_intents(state, intents)?;
    check_removed(state, removed)?;
    let robots = state.robots();
    let mut moved = vec![false; robots];
    // (edge, global direction) per successful mover
    let mut travel: Vec<Option<(usize, GlobalDir)>> = vec![None; robots];
    for intent in intents {
        if let Action::Move(d) = intent.action {
            let dir = intent.frame.to_global(d);
            let (edge, _) = state.step_from(state.positions[intent.robot], dir);
            if !removed.contains(&edge) {
                moved[intent.robot] = true;
                travel[intent.robot] = Some((edge, dir));
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
    for (p, t) in travel.iter().enumerate() {
        if let Some((_, dir)) = t {
            let (_, dest) = state.step_from(state.positions[p], *dir);
            state.positions[p] = dest;
            state.mark_visited(dest);
        }
    }
    state.missing_edges.clear();
    state.missing_edges.extend_from_slice(removed);
    state.missing_edges.sort_unstable();
    state.round += 1;
    Ok(RoundOutcome { moved, crossings })
}

/// Groups robots by node: for each robot, the other robots on its node.
pub fn detect_meetings(state: &RingState) -> Vec<Vec<RobotId>> {
    let pos = state.positions();
    (0..pos.len())
        .map(|i| {
            (0..pos.len())
                .filter(|&j| j != i && pos[j] == pos[i])
                .collect()
        })
        .collect()
}

/// Builds each robot's [`RoundEvents`] from a finished round.
///
/// `moved_since` gives, per robot, the moves made after its snapshot was
/// taken; for the synchronous engine that is the round's own move.
/// `blocked` is the ground-truth blocked-intent flag, overlaid on snapshots.
pub fn assemble_events(
    state: &RingState,
    outcome: &RoundOutcome,
    snapshots: &[PublicState],
    moved_since: &[u64],
    blocked: &[bool],
    crossing_detection: bool,
) -> Vec<RoundEvents> {
    let robots = state.robots();
    let coloc = detect_meetings(state);
    let crossings: &[(RobotId, RobotId)] = if crossing_detection {
        &outcome.crossings
    } else {
        &[]
    };

    // connected components over co-location and crossing links
    let mut group: Vec<usize> = (0..robots).collect();
    fn root(group: &mut [usize], mut x: usize) -> usize {
        while group[x] != x {
            group[x] = group[group[x]];
            x = group[x];
        }
        x
    }
    let link = |a: usize, b: usize, group: &mut Vec<usize>| {
        let (ra, rb) = (root(group, a), root(group, b));
        if ra != rb {
            group[ra] = rb;
        }
    };
    for (i, others) in coloc.iter().enumerate() {
        for &j in others {
            link(i, j, &mut group);
        }
    }
    for &(i, j) in crossings {
        link(i, j, &mut group);
    }

    let view = |j: usize| {
        let mut state = snapshots[j].clone();
        state.blocked = blocked[j];
        PeerView {
            state,
            moved: moved_since[j],
        }
    };
    (0..robots)
        .map(|i| {
            let mut ev = RoundEvents {
                move_succeeded: outcome.moved.get(i).copied().unwrap_or(false),
                self_blocked: blocked[i],
                ..Default::default()
            };
            let ri = root(&mut group, i);
            for j in 0..robots {
                if j == i || root(&mut group, j) != ri {
                    continue;
                }
                ev.group.push(j);
                if coloc[i].contains(&j) {
                    ev.colocated_with.push(view(j));
                } else if crossings.contains(&(i.min(j), i.max(j))) {
                    ev.crossed_with.push(view(j));
                } else {
                    ev.relayed.push(view(j));
                }
            }
            ev
        })
        .collect()
}

/// One synchronous round: movement over the edges not in `removed`, then
/// meeting and crossing detection.
pub fn advance_round(
    state: &RingState,
    intents: &[Intent],
    removed: &[usize],
    crossing_detection: bool,
) -> Result<(RingState, Vec<RoundEvents>), EngineError> {
    let mut next = state.clone();
    let events = advance_round_in_place(&mut next, intents, removed, crossing_detection)?;
    Ok((next, events))
}

/// [`advance_round`] without copying the state; used by long simulations.
pub fn advance_round_in_place(
    state: &mut RingState,
    intents: &[Intent],
    removed: &[usize],
    crossing_detection: bool,
) -> Result<Vec<RoundEvents>, EngineError> {
    let outcome = apply_moves(state, intents, removed)?;
    let robots = state.robots();
    let mut snapshots = vec![None; robots];
    let mut blocked = vec![false; robots];
    for intent in intents {
        snapshots[intent.robot] = Some(intent.public.clone());
        blocked[intent.robot] =
            matches!(intent.action, Action::Move(_)) && !outcome.moved[intent.robot];
    }
    let snapshots: Vec<PublicState> = snapshots.into_iter().map(|s| s.expect("checked")).collect();
    let moved: Vec<u64> = outcome.moved.iter().map(|&m| u64::from(m)).collect();
    Ok(assemble_events(
        state,
        &outcome,
        &snapshots,
        &moved,
        &blocked,
        crossing_detection,
    ))
}

/// True once every node has been visited by some robot.
pub fn coverage_complete(state: &RingState) -> bool {
    state.visited_count == state.n
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{IdBits, LocalDir, Mark};

    pub(crate) fn snapshot(id: &str) -> PublicState {
        PublicState {
            id: id.parse::<IdBits>().unwrap(),
            mark: Mark::Nil,
            stage: 1,
            step: 0,
            size: None,
            terminating: false,
            terminated: false,
            frame: Frame::new(true),
            dir: LocalDir::Left,
            zigzag: Default::default(),
            blocked: false,
        }
    }

    fn cw_intent(robot: RobotId, id: &str) -> Intent {
        Intent {
            robot,
            action: Action::Move(LocalDir::Left),
            frame: Frame::new(true),
            public: snapshot(id),
        }
    }

    fn ccw_intent(robot: RobotId, id: &str) -> Intent {
        Intent {
            robot,
            action: Action::Move(LocalDir::Right),
            frame: Frame::new(true),
            public: snapshot(id),
        }
    }

    #[test]
    fn unobstructed_move() {
        let state = RingState::new(5, vec![0], 1).unwrap();
        let (next, ev) = advance_round(&state, &[cw_intent(0, "1")], &[], true).unwrap();
        assert_eq!(next.position(0), 1);
        assert!(ev[0].move_succeeded);
        assert_eq!(next.round(), 1);
        assert!(next.visited()[1]);
    }

    #[test]
    fn blocked_move_waits() {
        let state = RingState::new(5, vec![0], 1).unwrap();
        let (next, ev) = advance_round(&state, &[cw_intent(0, "1")], &[0], true).unwrap();
        assert_eq!(next.position(0), 0);
        assert!(!ev[0].move_succeeded);
        assert_eq!(next.missing_edges(), &[0]);
    }

    #[test]
    fn ccw_wraps_around() {
        let state = RingState::new(5, vec![0], 1).unwrap();
        let (next, _) = advance_round(&state, &[ccw_intent(0, "1")], &[], true).unwrap();
        assert_eq!(next.position(0), 4);
        let (next, _) = advance_round(&state, &[ccw_intent(0, "1")], &[4], true).unwrap();
        assert_eq!(next.position(0), 0);
    }

    #[test]
    fn swap_is_a_symmetric_crossing() {
        let state = RingState::new(4, vec![2, 3], 1).unwrap();
        let intents = [cw_intent(0, "10"), ccw_intent(1, "01")];
        let (next, ev) = advance_round(&state, &intents, &[], true).unwrap();
        assert_eq!(next.positions(), &[3, 2]);
        assert_eq!(ev[0].crossed_with.len(), 1);
        assert_eq!(ev[0].crossed_with[0].state.id.to_string(), "01");
        assert_eq!(ev[1].crossed_with[0].state.id.to_string(), "10");
        assert!(ev[0].colocated_with.is_empty());

        let (_, ev) = advance_round(&state, &intents, &[], false).unwrap();
        assert!(ev[0].crossed_with.is_empty() && ev[1].crossed_with.is_empty());
    }

    #[test]
    fn both_blocked_on_same_edge() {
        let state = RingState::new(6, vec![2, 3, 0], 1).unwrap();
        let intents = [
            cw_intent(0, "100"),
            ccw_intent(1, "101"),
            cw_intent(2, "111"),
        ];
        let (next, ev) = advance_round(&state, &intents, &[2], true).unwrap();
        assert_eq!(next.positions(), &[2, 3, 1]);
        assert!(!ev[0].move_succeeded && !ev[1].move_succeeded && ev[2].move_succeeded);
    }

    #[test]
    fn meetings_group_by_node() {
        let state = RingState::new(5, vec![4, 4, 0], 1).unwrap();
        assert_eq!(detect_meetings(&state), vec![vec![1], vec![0], vec![]]);
        let state = RingState::new(5, vec![1, 1, 1], 1).unwrap();
        assert!(detect_meetings(&state).iter().all(|m| m.len() == 2));
        let state = RingState::new(5, vec![0, 1, 2], 1).unwrap();
        assert!(detect_meetings(&state).iter().all(Vec::is_empty));
    }

    #[test]
    fn crossing_plus_colocation_relays() {
        // r0 at 1 moves cw onto 2, r1 at 2 moves ccw onto 1, r2 at 0 moves cw onto 1
        let state = RingState::new(6, vec![1, 2, 0], 1).unwrap();
        let intents = [
            cw_intent(0, "100"),
            ccw_intent(1, "101"),
            cw_intent(2, "111"),
        ];
        let (next, ev) = advance_round(&state, &intents, &[], true).unwrap();
        assert_eq!(next.positions(), &[2, 1, 1]);
        assert_eq!(ev[0].crossed_with.len(), 1);
        assert_eq!(ev[0].relayed.len(), 1);
        assert_eq!(ev[1].crossed_with.len(), 1);
        assert_eq!(ev[1].colocated_with.len(), 1);
        assert_eq!(ev[2].colocated_with.len(), 1);
        assert_eq!(ev[2].relayed.len(), 1);
    }

    #[test]
    fn rejects_malformed_intents() {
        let state = RingState::new(5, vec![0, 1], 1).unwrap();
        let err = advance_round(&state, &[cw_intent(0, "1"), cw_intent(0, "1")], &[], true);
        assert_eq!(err.unwrap_err(), EngineError::DuplicateIntent(0));
        let err = advance_round(&state, &[cw_intent(0, "1"), cw_intent(7, "1")], &[], true);
        assert_eq!(err.unwrap_err(), EngineError::UnknownRobot(7));
        let err = advance_round(&state, &[cw_intent(0, "1")], &[], true);
        assert_eq!(err.unwrap_err(), EngineError::MissingIntent(1));
        let ok = [cw_intent(0, "1"), cw_intent(1, "1")];
        let err = advance_round(&state, &ok, &[0, 1], true);
        assert_eq!(
            err.unwrap_err(),
            EngineError::TooManyRemoved { removed: 2, cap: 1 }
        );
        let err = advance_round(&state, &ok, &[5], true);
        assert_eq!(
            err.unwrap_err(),
            EngineError::EdgeOutOfRange { edge: 5, n: 5 }
        );
    }

    #[test]
    fn coverage_tracks_visits() {
        let state = RingState::from_parts(3, vec![0], 1, 0, [0, 1, 2]).unwrap();
        assert!(coverage_complete(&state));
        let state = RingState::from_parts(3, vec![0], 1, 0, [0, 2]).unwrap();
        assert!(!coverage_complete(&state));
    }
}
