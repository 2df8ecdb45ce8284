//! The deterministic protocol for fully synchronous rounds with edge
//! crossing detection.
//!
//! The per-stage entry points are thin views over [`transition`] that check
//! the stage precondition; [`decide`] is the dispatcher the simulator uses.

use crate::error::ProtocolError;
use crate::ring::RoundEvents;
use crate::types::{Action, Mark};

use super::{first_meeting, transition, RobotState, Rules};

pub use super::stage1_direction;

/// One round of the deterministic protocol.
pub fn decide(rs: &RobotState, ev: &RoundEvents) -> Result<(RobotState, Action), ProtocolError> {
    transition(rs, ev, &Rules::deterministic())
}

/// Marking at a first meeting. Returns the robot unchanged when nothing
/// can be decided (no other robot present, or equal IDs).
pub fn handle_first_meeting(rs: &RobotState, ev: &RoundEvents) -> RobotState {
    let rules = Rules::deterministic();
    if !rs.mark.is_nil() || ev.is_quiet() {
        return rs.clone();
    }
    if let Some((peer, crossed)) = ev
        .direct()
        .filter(|(p, _)| matches!(p.state.mark, Mark::A | Mark::B))
        .min_by_key(|(p, _)| p.state.mark)
    {
        let mut next = rs.clone();
        let both = [Mark::A, Mark::B].iter().all(|&m| {
            ev.direct()
                .map(|(p, _)| p)
                .chain(&ev.relayed)
                .any(|p| p.state.mark == m)
        });
        super::become_c(&mut next, peer, crossed, !rules.first_leg_void && !both);
        return next;
    }
    first_meeting(rs, ev, &rules).unwrap_or_else(|| rs.clone())
}

fn require(ok: bool, what: &str) -> Result<(), ProtocolError> {
    if ok {
        Ok(())
    } else {
        Err(ProtocolError::Corruption(format!("precondition: {what}")))
    }
}

/// A round of robot A or B in stage 2 or 3.
pub fn be_robot_ab_step(
    rs: &RobotState,
    ev: &RoundEvents,
) -> Result<(RobotState, Action), ProtocolError> {
    require(
        matches!(rs.mark, Mark::A | Mark::B) && matches!(rs.stage, 2 | 3),
        "robot A or B in stage 2 or 3",
    )?;
    decide(rs, ev)
}

/// A round of robot C.
pub fn be_robot_c_step(
    rs: &RobotState,
    ev: &RoundEvents,
) -> Result<(RobotState, Action), ProtocolError> {
    require(rs.mark == Mark::C && rs.stage == 3, "robot C in stage 3")?;
    decide(rs, ev)
}

/// A countdown round.
pub fn start_termination_step(
    rs: &RobotState,
    ev: &RoundEvents,
) -> Result<(RobotState, Action), ProtocolError> {
    require(rs.stage == 4, "robot in stage 4")?;
    decide(rs, ev)
}
