//! The three-robot exploration state machine.
//!
//! All protocol variants share one transition function, [`transition`],
//! parameterised by [`Rules`]. Each variant module fixes the rules:
//! [`fsync`] for the deterministic protocol, [`random`] for the coin-gated
//! protocol without crossing detection. The semi-synchronous variant lives in
//! [`crate::ssync`].
//!
//! A round for one robot is: fold in last round's move result, react to the
//! meetings of last round (termination signals, then marking, then counters),
//! then choose a move.

pub mod fsync;
pub mod random;

use serde::{Deserialize, Serialize};

use crate::error::ProtocolError;
use crate::ring::{Intent, PeerView, RoundEvents};
use crate::types::{Action, Frame, IdBits, LocalDir, Mark, PublicState, RobotId, ZigZag};

/// One robot's full protocol memory.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RobotState {
    pub id: IdBits,
    pub mark: Mark,
    /// 1..=4; non-decreasing.
    pub stage: u8,
    /// Stage 1 phase index.
    pub phase: u32,
    /// Rounds consumed in the current phase.
    pub tstep: u64,
    /// Successful moves since the last reset.
    pub step: u64,
    pub size: Option<u64>,
    pub zigzag: ZigZag,
    /// Termination countdown.
    pub ttime: u64,
    pub dir: LocalDir,
    pub frame: Frame,
    /// Direction fixed by a coin instead of ID bits (semi-synchronous variant).
    pub fixed_dir: Option<LocalDir>,
    pub peer_id: Option<IdBits>,
    pub terminated: bool,
}

impl RobotState {
    pub fn new(id: IdBits, frame: Frame) -> Self {
        RobotState {
            id,
            mark: Mark::Nil,
            stage: 1,
            phase: 0,
            tstep: 0,
            step: 0,
            size: None,
            zigzag: ZigZag::default(),
            ttime: 0,
            dir: LocalDir::Left,
            frame,
            fixed_dir: None,
            peer_id: None,
            terminated: false,
        }
    }

    /// A copy with the fields that can no longer influence any robot reset:
    /// unmarked robots' move counters, marked robots' phase counters and
    /// everything but the mark, size and position of a halted robot.
    /// Two configurations equal after this normalisation behave the same.
    pub fn behavioural(&self) -> RobotState {
        let mut s = self.clone();
        s.peer_id = None;
        if s.mark.is_nil() {
            s.step = 0;
        } else {
            s.phase = 0;
            s.tstep = 0;
        }
        if s.terminated {
            s = RobotState {
                id: s.id,
                mark: s.mark,
                size: s.size,
                frame: s.frame,
                terminated: true,
                ..RobotState::new(s.id, s.frame)
            };
        }
        s
    }

    pub fn public(&self) -> PublicState {
        PublicState {
            id: self.id,
            mark: self.mark,
            stage: self.stage,
            step: self.step,
            size: self.size,
            terminating: self.stage == 4 && !self.terminated,
            terminated: self.terminated,
            frame: self.frame,
            dir: self.dir,
            zigzag: self.zigzag,
            blocked: false,
        }
    }

    /// Packages a decision for the engine.
    pub fn intent(&self, robot: RobotId, action: Action) -> Intent {
        Intent {
            robot,
            action,
            frame: self.frame,
            public: self.public(),
        }
    }
}

/// Countdown length once a robot knows the ring size (or a bound on it).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Countdown {
    /// Exactly the size.
    Exact,
    /// `ceil(factor * N * log2 N)`.
    LogScaled { factor: u64 },
}

impl Countdown {
    pub fn rounds(self, size: u64) -> u64 {
        match self {
            Countdown::Exact => size,
            Countdown::LogScaled { factor } => {
                let n = size as f64;
                let log = if size <= 1 { 0.0 } else { n.log2() };
                (factor as f64 * n * log).ceil() as u64
            }
        }
    }
}

/// Knobs that distinguish the protocol variants.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rules {
    /// Phase `i` lasts `phase_stretch * 2^i` rounds.
    pub phase_stretch: u64,
    /// A re-meeting on an edge overcounts the ring by one.
    pub crossing_size_correction: bool,
    pub countdown: Countdown,
    /// Stop at exploration detection instead of running the countdown.
    pub partial_termination: bool,
    /// C also needs both A and B seen blocked before declaring completion.
    pub require_blocked: bool,
    /// C's first leg never counts.
    pub first_leg_void: bool,
    /// Stage 1 walks a fixed coin-chosen direction instead of ID bits.
    pub coin_stage1: bool,
}

impl Rules {
    pub fn deterministic() -> Self {
        Rules {
            phase_stretch: 1,
            crossing_size_correction: true,
            countdown: Countdown::Exact,
            partial_termination: false,
            require_blocked: false,
            first_leg_void: false,
            coin_stage1: false,
        }
    }
}

/// Direction in the robot's own frame for Stage 1 phase `phase`.
pub fn stage1_direction(id: IdBits, phase: u64) -> LocalDir {
    let k = id.len() as u64;
    if id.bit((phase % k) as usize) {
        LocalDir::Right
    } else {
        LocalDir::Left
    }
}

fn direct_peers(ev: &RoundEvents) -> impl Iterator<Item = (&PeerView, bool)> {
    ev.direct()
}

fn check_corruption(s: &RobotState, ev: &RoundEvents) -> Result<(), ProtocolError> {
    for mark in [Mark::A, Mark::B, Mark::C] {
        let count = usize::from(s.mark == mark)
            + direct_peers(ev)
                .filter(|(p, _)| p.state.mark == mark)
                .count();
        if count > 1 {
            return Err(ProtocolError::Corruption(format!(
                "{count} robots marked {mark} in one meeting"
            )));
        }
    }
    Ok(())
}

/// Advances one robot by one round.
pub fn transition(
    rs: &RobotState,
    ev: &RoundEvents,
    rules: &Rules,
) -> Result<(RobotState, Action), ProtocolError> {
    if rs.terminated {
        return Err(ProtocolError::Terminated);
    }
    let mut s = rs.clone();
    if ev.move_succeeded {
        s.step += 1;
    }
    check_corruption(&s, ev)?;

    if s.stage == 4 {
        return Ok(termination_round(s, ev));
    }
    if direct_peers(ev).any(|(p, _)| p.state.terminating || p.state.terminated) {
        s.terminated = true;
        return Ok((s, Action::Stay));
    }
    match s.mark {
        Mark::Nil => nil_round(s, ev, rules),
        Mark::A | Mark::B => Ok(ab_round(s, ev, rules)),
        Mark::C => Ok(c_round(s, ev, rules)),
    }
}

fn nil_round(
    mut s: RobotState,
    ev: &RoundEvents,
    rules: &Rules,
) -> Result<(RobotState, Action), ProtocolError> {
    let met_marked = direct_peers(ev)
        .filter(|(p, _)| !p.state.mark.is_nil())
        .min_by_key(|(p, _)| p.state.mark);
    if let Some((peer, crossed)) = met_marked {
        if peer.state.mark == Mark::C {
            return Err(ProtocolError::Corruption(
                "unmarked robot met C".to_string(),
            ));
        }
        // with both A and B in the meeting the first leg does not start at
        // the robot C turns away from
        let both = [Mark::A, Mark::B].iter().all(|&m| {
            direct_peers(ev)
                .map(|(p, _)| p)
                .chain(ev.relayed.iter())
                .any(|p| p.state.mark == m)
        });
        become_c(&mut s, peer, crossed, !rules.first_leg_void && !both);
        let dir = s.dir;
        return Ok((s, Action::Move(dir)));
    }

    let group_nil = direct_peers(ev)
        .map(|(p, _)| p)
        .chain(ev.relayed.iter())
        .all(|p| p.state.mark.is_nil());
    if !ev.is_quiet() && group_nil {
        if let Some(marked) = first_meeting(&s, ev, rules) {
            let dir = marked.dir;
            return Ok((marked, Action::Move(dir)));
        }
    }

    let dir = match (rules.coin_stage1, s.fixed_dir) {
        (true, Some(d)) => d,
        _ => stage1_direction(s.id, u64::from(s.phase)),
    };
    s.dir = dir;
    s.tstep += 1;
    let phase_len = 1u64
        .checked_shl(s.phase)
        .map_or(u64::MAX, |len| len.saturating_mul(rules.phase_stretch));
    if s.tstep >= phase_len {
        s.phase += 1;
        s.tstep = 0;
    }
    Ok((s, Action::Move(dir)))
}

pub(crate) fn become_c(s: &mut RobotState, met: &PeerView, crossed: bool, leg_counts: bool) {
    s.mark = Mark::C;
    s.stage = 3;
    s.frame = met.state.frame;
    s.peer_id = Some(met.state.id);
    // met A: walk towards B, i.e. B's direction; met B: walk towards A
    let (heading, dir) = if met.state.mark == Mark::A {
        (Mark::B, LocalDir::Right)
    } else {
        (Mark::A, LocalDir::Left)
    };
    s.dir = dir;
    // after a crossing C already stands one step past the robot it met
    s.step = u64::from(crossed);
    s.zigzag = ZigZag::towards(heading, leg_counts);
}

/// Role assignment at the first meeting among unmarked robots.
///
/// Returns `None` when the meeting cannot break symmetry (equal IDs).
pub(crate) fn first_meeting(s: &RobotState, ev: &RoundEvents, rules: &Rules) -> Option<RobotState> {
    #[derive(Clone, Copy)]
    struct Member {
        id: IdBits,
        frame: Frame,
        // false: on this robot's node; true: on the adjacent node
        far: bool,
    }
    let mut members = vec![Member {
        id: s.id,
        frame: s.frame,
        far: false,
    }];
    for p in &ev.colocated_with {
        members.push(Member {
            id: p.state.id,
            frame: p.state.frame,
            far: false,
        });
    }
    for p in ev.crossed_with.iter().chain(ev.relayed.iter()) {
        members.push(Member {
            id: p.state.id,
            frame: p.state.frame,
            far: true,
        });
    }
    let mut ids: Vec<IdBits> = members.iter().map(|m| m.id).collect();
    ids.sort_unstable();
    ids.dedup();
    if ids.len() != members.len() {
        return None;
    }
    members.sort_by_key(|m| std::cmp::Reverse(m.id));
    let (a, b) = (members[0], members[1]);

    // Direction, in this robot's frame, from its node to the adjacent one.
    // A crossing participant came from the far node; otherwise the lone
    // robot on the far node crossed away from here.
    let near_to_far = if ev.crossed_with.is_empty() {
        ev.relayed
            .first()
            .map(|p| s.frame.translate(p.state.dir, p.state.frame))
    } else {
        Some(s.dir.reversed())
    };
    let frame = match near_to_far {
        Some(d) if a.far != b.far => {
            // A walks away from B
            let away = if a.far { d } else { d.reversed() };
            s.frame.with_left(away)
        }
        _ => a.frame,
    };
    let split = a.far != b.far;

    let mut next = s.clone();
    next.frame = frame;
    next.step = 0;
    if s.id == a.id {
        next.mark = Mark::A;
        next.stage = 2;
        next.dir = LocalDir::Left;
        next.peer_id = Some(b.id);
    } else if s.id == b.id {
        next.mark = Mark::B;
        next.stage = 2;
        next.dir = LocalDir::Right;
        next.peer_id = Some(a.id);
        // B starts one step along its way when the meeting left them apart
        next.step = u64::from(split);
    } else {
        next.mark = Mark::C;
        next.stage = 3;
        next.dir = LocalDir::Right;
        next.peer_id = Some(b.id);
        next.zigzag = ZigZag::towards(Mark::B, false);
    }
    let _ = rules;
    Some(next)
}

fn ab_round(mut s: RobotState, ev: &RoundEvents, rules: &Rules) -> (RobotState, Action) {
    let partner = s.mark.opposite();
    for (p, crossed) in direct_peers(ev) {
        if p.state.mark != partner {
            continue;
        }
        let sum = s.step + p.steps();
        if sum > 0 {
            let size = if crossed && rules.crossing_size_correction {
                sum - 1
            } else {
                sum
            };
            return enter_termination(s, size, rules);
        }
    }
    for (p, _) in direct_peers(ev) {
        if p.state.mark == Mark::C {
            if let Some(size) = zigzag_completion(p, s.mark, ev.self_blocked, rules) {
                return enter_termination(s, size, rules);
            }
        }
    }
    if direct_peers(ev).any(|(p, _)| matches!(p.state.mark, Mark::Nil | Mark::C)) {
        s.stage = s.stage.max(3);
    }
    let dir = s.dir;
    (s, Action::Move(dir))
}

/// The size C announces to `me` if C's arrival closes the zig-zag.
pub(crate) fn zigzag_completion(
    c: &PeerView,
    me: Mark,
    me_blocked: bool,
    rules: &Rules,
) -> Option<u64> {
    let steps = c.steps();
    if c.state.zigzag.heading != Some(me) || steps == 0 {
        return None;
    }
    let mut z = c.state.zigzag;
    z.close_leg(steps, me_blocked, rules.require_blocked)
        .then_some(steps + 1)
}

fn c_round(mut s: RobotState, ev: &RoundEvents, rules: &Rules) -> (RobotState, Action) {
    let target = s.zigzag.heading;
    let reached = direct_peers(ev).find(|(p, _)| Some(p.state.mark) == target);
    if let Some((peer, _)) = reached {
        if s.step > 0 {
            let closed = s
                .zigzag
                .close_leg(s.step, peer.state.blocked, rules.require_blocked);
            s.dir = s.dir.reversed();
            if closed {
                let size = s.step + 1;
                return enter_termination(s, size, rules);
            }
            s.step = 0;
        } else if let Some(t) = target {
            // still on the target's node since marking: turn, no leg yet
            s.zigzag.heading = Some(t.opposite());
            s.zigzag.leg_counts = true;
            s.dir = s.dir.reversed();
        }
    }
    let dir = s.dir;
    (s, Action::Move(dir))
}

fn enter_termination(mut s: RobotState, size: u64, rules: &Rules) -> (RobotState, Action) {
    s.size = Some(size);
    if rules.partial_termination {
        s.terminated = true;
        return (s, Action::Stay);
    }
    s.stage = 4;
    s.ttime = rules.countdown.rounds(size);
    countdown_move(s)
}

fn countdown_move(mut s: RobotState) -> (RobotState, Action) {
    if s.ttime == 0 {
        s.terminated = true;
        return (s, Action::Stay);
    }
    s.ttime -= 1;
    let dir = s.dir;
    (s, Action::Move(dir))
}

fn termination_round(mut s: RobotState, ev: &RoundEvents) -> (RobotState, Action) {
    // informing an uninformed robot ends the countdown for both
    if direct_peers(ev).any(|(p, _)| !p.state.terminating && !p.state.terminated) {
        s.terminated = true;
        return (s, Action::Stay);
    }
    countdown_move(s)
}

/// Runs one round of `rules` for every robot. Terminated robots stay put.
///
/// After the individual decisions, a robot sharing a meeting with a robot
/// that detected completion this round learns it before moving on and
/// halts. Without this second exchange a third robot standing next to the
/// detection could walk away in step with a terminator and outlast its
/// countdown.
pub fn decide_all(
    robots: &[RobotState],
    events: &[RoundEvents],
    rules: &Rules,
) -> Result<(Vec<RobotState>, Vec<Action>), ProtocolError> {
    let mut next = Vec::with_capacity(robots.len());
    let mut actions = Vec::with_capacity(robots.len());
    for (rs, ev) in robots.iter().zip(events) {
        if rs.terminated {
            next.push(rs.clone());
            actions.push(Action::Stay);
        } else {
            let (s, a) = transition(rs, ev, rules)?;
            next.push(s);
            actions.push(a);
        }
    }
    let detected: Vec<bool> = robots
        .iter()
        .zip(&next)
        .map(|(before, after)| before.stage < 4 && after.size.is_some() && !before.terminated)
        .collect();
    for (i, ev) in events.iter().enumerate() {
        let informed = ev.group.iter().any(|&j| detected[j]);
        let s = &mut next[i];
        if informed && !s.terminated && s.stage < 4 && s.size.is_none() {
            s.terminated = true;
            actions[i] = Action::Stay;
        }
    }
    Ok((next, actions))
}

/// Robots' collective progress through the four stages.
///
/// 1 while nobody is marked, 2 once A and B exist, 3 once C exists, 4 once
/// some robot detected completion, 5 when everybody terminated.
pub fn global_stage(robots: &[RobotState]) -> u8 {
    if robots.iter().all(|r| r.terminated) {
        5
    } else if robots.iter().any(|r| r.stage == 4 || r.terminated) {
        4
    } else if robots.iter().any(|r| r.mark == Mark::C) {
        3
    } else if robots.iter().any(|r| !r.mark.is_nil()) {
        2
    } else {
        1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn robot(id: &str) -> RobotState {
        RobotState::new(id.parse().unwrap(), Frame::new(true))
    }

    fn marked(id: &str, mark: Mark, step: u64) -> RobotState {
        let mut r = robot(id);
        r.mark = mark;
        r.stage = if mark == Mark::C { 3 } else { 2 };
        r.step = step;
        r.dir = if mark == Mark::A {
            LocalDir::Left
        } else {
            LocalDir::Right
        };
        r
    }

    fn view(r: &RobotState, moved: u64) -> PeerView {
        PeerView {
            state: r.public(),
            moved,
        }
    }

    fn meeting(peers: &[PeerView]) -> RoundEvents {
        RoundEvents {
            colocated_with: peers.to_vec(),
            ..Default::default()
        }
    }

    fn crossing(peers: &[PeerView]) -> RoundEvents {
        RoundEvents {
            crossed_with: peers.to_vec(),
            ..Default::default()
        }
    }

    fn det() -> Rules {
        Rules::deterministic()
    }

    #[test]
    fn stage1_bit_rule() {
        assert_eq!(stage1_direction("100".parse().unwrap(), 0), LocalDir::Left);
        for i in 0..7 {
            assert_eq!(stage1_direction("000".parse().unwrap(), i), LocalDir::Left);
        }
        assert_eq!(stage1_direction("101".parse().unwrap(), 5), LocalDir::Right);
    }

    #[test]
    fn stage1_round_without_meeting() {
        let r = robot("100");
        let (next, action) = transition(&r, &RoundEvents::default(), &det()).unwrap();
        assert_eq!(action, Action::Move(LocalDir::Left));
        // phase 0 lasts one round
        assert_eq!((next.phase, next.tstep), (1, 0));
        let (next, action) = transition(&next, &RoundEvents::default(), &det()).unwrap();
        assert_eq!(action, Action::Move(LocalDir::Left));
        assert_eq!((next.phase, next.tstep), (1, 1));
    }

    #[test]
    fn larger_id_becomes_a() {
        let (big, small) = (robot("111"), robot("100"));
        let (a, action) = transition(&big, &meeting(&[view(&small, 0)]), &det()).unwrap();
        assert_eq!((a.mark, a.stage, a.step), (Mark::A, 2, 0));
        assert_eq!(action, Action::Move(LocalDir::Left));
        let (b, _) = transition(&small, &meeting(&[view(&big, 0)]), &det()).unwrap();
        assert_eq!(b.mark, Mark::B);
        assert_eq!(a.frame, b.frame);
    }

    #[test]
    fn smallest_of_three_becomes_c() {
        let rs = [robot("111"), robot("101"), robot("100")];
        let marks: Vec<Mark> = (0..3)
            .map(|i| {
                let peers: Vec<PeerView> = (0..3)
                    .filter(|&j| j != i)
                    .map(|j| view(&rs[j], 0))
                    .collect();
                transition(&rs[i], &meeting(&peers), &det()).unwrap().0.mark
            })
            .collect();
        assert_eq!(marks, [Mark::A, Mark::B, Mark::C]);
    }

    #[test]
    fn node_meeting_sums_steps() {
        let a = marked("111", Mark::A, 4);
        let b = marked("100", Mark::B, 4);
        // B's snapshot is from before its last move
        let (next, _) = transition(&a, &meeting(&[view(&b, 1)]), &det()).unwrap();
        assert_eq!(next.size, Some(9));
        assert_eq!(next.stage, 4);
    }

    #[test]
    fn crossing_sums_steps_minus_one() {
        let a = marked("111", Mark::A, 4);
        let b = marked("100", Mark::B, 4);
        let ev = RoundEvents {
            move_succeeded: true,
            ..crossing(&[view(&b, 1)])
        };
        let (next, _) = transition(&a, &ev, &det()).unwrap();
        assert_eq!(next.size, Some(9));
    }

    #[test]
    fn meeting_a_terminator_halts() {
        let a = marked("111", Mark::A, 3);
        let mut t = marked("101", Mark::C, 0);
        t.stage = 4;
        t.size = Some(8);
        let (next, action) = transition(&a, &meeting(&[view(&t, 0)]), &det()).unwrap();
        assert!(next.terminated);
        assert_eq!(action, Action::Stay);
    }

    #[test]
    fn c_records_first_leg_and_turns() {
        let mut c = marked("100", Mark::C, 7);
        c.zigzag = ZigZag::towards(Mark::B, true);
        let b = marked("101", Mark::B, 2);
        let (next, _) = transition(&c, &meeting(&[view(&b, 0)]), &det()).unwrap();
        assert_eq!(next.zigzag.a_to_b, Some(7));
        assert_eq!(next.zigzag.heading, Some(Mark::A));
        assert_eq!(next.step, 0);
        assert_eq!(next.dir, c.dir.reversed());
    }

    #[test]
    fn c_detects_equal_legs() {
        let mut c = marked("100", Mark::C, 7);
        c.zigzag = ZigZag {
            heading: Some(Mark::A),
            a_to_b: Some(7),
            leg_counts: true,
            ..Default::default()
        };
        let a = marked("111", Mark::A, 2);
        let (next, _) = transition(&c, &meeting(&[view(&a, 0)]), &det()).unwrap();
        assert_eq!(next.size, Some(8));
        assert_eq!(next.stage, 4);
        // A reads the same snapshot and reaches the same verdict
        let (a_next, _) = transition(&a, &meeting(&[view(&c, 0)]), &det()).unwrap();
        assert_eq!(a_next.size, Some(8));
    }

    #[test]
    fn countdown_runs_out() {
        let mut r = marked("111", Mark::A, 0);
        r.stage = 4;
        r.size = Some(5);
        r.ttime = 1;
        let (next, action) = transition(&r, &RoundEvents::default(), &det()).unwrap();
        assert!(!next.terminated);
        assert!(matches!(action, Action::Move(_)));
        let (next, action) = transition(&next, &RoundEvents::default(), &det()).unwrap();
        assert!(next.terminated);
        assert_eq!(action, Action::Stay);
    }

    #[test]
    fn terminator_informs_unmarked_robot() {
        let mut t = marked("111", Mark::A, 0);
        t.stage = 4;
        t.size = Some(9);
        t.ttime = 5;
        let third = robot("100");
        let (t_next, _) = transition(&t, &meeting(&[view(&third, 0)]), &det()).unwrap();
        let (third_next, _) = transition(&third, &meeting(&[view(&t, 0)]), &det()).unwrap();
        assert!(t_next.terminated && third_next.terminated);
    }

    #[test]
    fn terminated_robot_cannot_decide() {
        let mut r = robot("1");
        r.terminated = true;
        assert_eq!(
            transition(&r, &RoundEvents::default(), &det()),
            Err(ProtocolError::Terminated)
        );
    }

    #[test]
    fn two_a_robots_are_corruption() {
        let a = marked("111", Mark::A, 0);
        let other = marked("101", Mark::A, 0);
        assert!(matches!(
            transition(&a, &meeting(&[view(&other, 0)]), &det()),
            Err(ProtocolError::Corruption(_))
        ));
    }

    #[test]
    fn partial_mode_halts_at_detection() {
        let rules = Rules {
            partial_termination: true,
            ..det()
        };
        let a = marked("111", Mark::A, 3);
        let b = marked("100", Mark::B, 3);
        let (next, action) = transition(&a, &meeting(&[view(&b, 0)]), &rules).unwrap();
        assert!(next.terminated);
        assert_eq!(next.size, Some(6));
        assert_eq!(action, Action::Stay);
    }

    #[test]
    fn log_scaled_countdown() {
        let expected = (16.0 * 12.0 * 12f64.log2()).ceil() as u64;
        assert_eq!(Countdown::LogScaled { factor: 16 }.rounds(12), expected);
        assert_eq!(Countdown::Exact.rounds(12), 12);
    }

    #[test]
    fn global_stage_tracks_marks() {
        let mut rs = vec![robot("1"), robot("10"), robot("11")];
        assert_eq!(global_stage(&rs), 1);
        rs[0].mark = Mark::A;
        assert_eq!(global_stage(&rs), 2);
        rs[1].mark = Mark::C;
        assert_eq!(global_stage(&rs), 3);
        rs[2].stage = 4;
        assert_eq!(global_stage(&rs), 4);
        rs.iter_mut().for_each(|r| r.terminated = true);
        assert_eq!(global_stage(&rs), 5);
    }
}
