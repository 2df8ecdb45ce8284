//! The randomized protocol for rings without edge crossing detection.
//!
//! Movement is gated by a fair coin so two robots walking towards each other
//! eventually land on the same node instead of jumping over each other.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::ProtocolError;
use crate::ring::RoundEvents;
use crate::types::{Action, IdBits};

use super::{transition, Countdown, RobotState, Rules};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TerminationMode {
    /// Every robot halts knowing exploration is over.
    #[default]
    Explicit,
    /// The detecting robots halt immediately; the third may keep walking.
    Partial,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RandomizedParams {
    pub phase_stretch: u64,
    /// Countdown is `ceil(term_factor * N * log2 N)` for a size bound `N`.
    pub term_factor: u64,
    pub mode: TerminationMode,
}

impl Default for RandomizedParams {
    fn default() -> Self {
        RandomizedParams {
            phase_stretch: 8,
            term_factor: 16,
            mode: TerminationMode::Explicit,
        }
    }
}

impl RandomizedParams {
    pub fn rules(&self) -> Rules {
        Rules {
            phase_stretch: self.phase_stretch.max(1),
            crossing_size_correction: false,
            countdown: Countdown::LogScaled {
                factor: self.term_factor,
            },
            partial_termination: self.mode == TerminationMode::Partial,
            // A gated robot may stand still by choice, so equal legs alone
            // prove nothing
            require_blocked: true,
            first_leg_void: false,
            coin_stage1: false,
        }
    }
}

/// Keeps a move with probability 1/2. Always consumes one coin.
pub fn random_movement_gate<R: Rng + ?Sized>(action: Action, rng: &mut R) -> Action {
    let heads: bool = rng.gen();
    match action {
        Action::Move(dir) if heads => Action::Move(dir),
        _ => Action::Stay,
    }
}

/// One round of the randomized protocol: the deterministic transition with
/// stretched phases and a size bound, followed by the movement gate.
pub fn modified_decide<R: Rng + ?Sized>(
    rs: &RobotState,
    ev: &RoundEvents,
    params: &RandomizedParams,
    rng: &mut R,
) -> Result<(RobotState, Action), ProtocolError> {
    let (next, action) = transition(rs, ev, &params.rules())?;
    let action = random_movement_gate(action, rng);
    Ok((next, action))
}

/// Three independent uniform IDs from `[1, 2^l]`, stored as `value - 1` in
/// `l` bits. Duplicates are possible.
pub fn assign_random_ids<R: Rng + ?Sized>(
    count: usize,
    l: u8,
    rng: &mut R,
) -> Result<Vec<IdBits>, crate::error::ConfigError> {
    if !(2..=63).contains(&l) {
        return Err(crate::error::ConfigError::Invalid(format!(
            "id length l = {l} outside 2..=63"
        )));
    }
    (0..count)
        .map(|_| {
            let v: u64 = rng.gen_range(1..=(1u64 << l));
            IdBits::new(v - 1, l)
        })
        .collect()
}

/// Chance that `count` uniform draws from `2^l` values are pairwise distinct.
pub fn distinct_probability(count: u32, l: u8) -> f64 {
    let m = (1u64 << l) as f64;
    (0..count).map(|i| 1.0 - f64::from(i) / m).product()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Frame, LocalDir};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const DRAWS: u32 = 100_000;

    #[test]
    fn gate_keeps_half_of_moves() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let stays = (0..DRAWS)
            .filter(|_| {
                random_movement_gate(Action::Move(LocalDir::Left), &mut rng) == Action::Stay
            })
            .count();
        assert!((stays as f64 / f64::from(DRAWS) - 0.5).abs() < 0.01);
        for _ in 0..100 {
            assert_eq!(random_movement_gate(Action::Stay, &mut rng), Action::Stay);
        }
    }

    #[test]
    fn one_of_two_moves_half_the_time() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mv = Action::Move(LocalDir::Right);
        let single = (0..DRAWS)
            .filter(|_| {
                let a = random_movement_gate(mv, &mut rng);
                let b = random_movement_gate(mv, &mut rng);
                (a == mv) != (b == mv)
            })
            .count();
        assert!((single as f64 / f64::from(DRAWS) - 0.5).abs() < 0.01);
    }

    #[test]
    fn stretched_phase_length() {
        let params = RandomizedParams::default();
        let mut rs = RobotState::new("101".parse().unwrap(), Frame::new(true));
        rs.phase = 4;
        let rules = params.rules();
        let mut rounds = 0;
        while rs.phase == 4 {
            rs = transition(&rs, &RoundEvents::default(), &rules).unwrap().0;
            rounds += 1;
        }
        assert_eq!(rounds, 8 * 16);
    }

    #[test]
    fn id_collision_probability() {
        assert!(1.0 - distinct_probability(3, 20) <= 3.0 / f64::from(1u32 << 20));
        assert!((distinct_probability(3, 2) - 0.375).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let distinct = (0..DRAWS)
            .filter(|_| {
                let ids = assign_random_ids(3, 2, &mut rng).unwrap();
                ids[0] != ids[1] && ids[1] != ids[2] && ids[0] != ids[2]
            })
            .count();
        assert!((distinct as f64 / f64::from(DRAWS) - 0.375).abs() < 0.01);
    }

    #[test]
    fn ids_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            for id in assign_random_ids(3, 5, &mut rng).unwrap() {
                assert_eq!(id.len(), 5);
                assert!(id.value() < 32);
            }
        }
        assert!(assign_random_ids(3, 1, &mut rng).is_err());
        assert!(assign_random_ids(3, 64, &mut rng).is_err());
    }

    #[test]
    fn partial_mode_rules() {
        let params = RandomizedParams {
            mode: TerminationMode::Partial,
            ..Default::default()
        };
        let rules = params.rules();
        assert!(rules.partial_termination && rules.require_blocked);
        assert!(!rules.crossing_size_correction);
    }
}
