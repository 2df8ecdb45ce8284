//! Certification of the deterministic protocol's bounds on small rings by
//! exhaustive search over every adversary strategy.

use std::fmt;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::ConfigError;
use crate::protocol::stage1_direction;
use crate::search::{Eval, ExplorationGame, MeetingGame, MeetingGoal, Search, Worst};
use crate::sim::{stage_bounds, RobotSetup};
use crate::types::{Frame, GlobalDir, IdBits};

/// Outcome of one certified property.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{verdict} {}: {}", self.name, self.detail)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Worst case over all configurations of one ring size and ID length.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ExhaustiveSummary {
    pub n: usize,
    pub k: usize,
    pub configurations: usize,
    pub worst_total: u64,
    pub worst_stages: [u64; 4],
    pub violations: Vec<String>,
    pub explored: usize,
}

/// Every root of the exhaustive search for ring size `n` and ID length `k`:
/// distinct ID triples, chirality assignments up to mirroring and distinct
/// placements up to rotation.
pub fn exhaustive_roots(n: usize, k: u8) -> Vec<Vec<RobotSetup>> {
    let m = 1u64 << k;
    let mut roots = Vec::new();
    for a in 0..m {
        for b in a + 1..m {
            for c in b + 1..m {
                let ids = [a, b, c];
                for chirality in (0..8u8).filter(|c| c & 1 == 1) {
                    for p1 in 1..n {
                        for p2 in (1..n).filter(|&p| p != p1) {
                            let pos = [0, p1, p2];
                            roots.push(
                                (0..3)
                                    .map(|i| RobotSetup {
                                        id: IdBits::new(ids[i], k).expect("id fits"),
                                        left_is_cw: chirality >> i & 1 == 1,
                                        position: pos[i],
                                    })
                                    .collect(),
                            );
                        }
                    }
                }
            }
        }
    }
    roots
}

/// Minimax over all single-edge adversaries for every root of `(n, k)`.
pub fn exhaustive_worst_case(n: usize, k: u8) -> ExhaustiveSummary {
    let horizon = (7 * n + n * (1 << k)) as u64;
    let roots = exhaustive_roots(n, k);
    // roots sharing an ID triple share most of their game tree
    let per_triple = 4 * (n - 1) * (n - 2);
    let parts: Vec<ExhaustiveSummary> = roots
        .par_chunks(per_triple)
        .map(|chunk| {
            let mut search = Search::new(ExplorationGame::deterministic(), horizon + 1);
            let mut part = ExhaustiveSummary {
                n,
                k: k as usize,
                ..Default::default()
            };
            for setups in chunk {
                part.configurations += 1;
                let outcome = search
                    .game()
                    .root(n, setups)
                    .map_err(|e| e.to_string())
                    .map(|root| search.evaluate(&root, 0));
                match outcome {
                    Ok(Eval::Done(w)) if w.total <= horizon => merge_worst(&mut part, w),
                    Ok(Eval::Done(w)) => part.violations.push(format!(
                        "{}: {} rounds exceed {horizon}",
                        describe(setups),
                        w.total
                    )),
                    Ok(Eval::Violation(e)) | Err(e) => {
                        part.violations.push(format!("{}: {e}", describe(setups)))
                    }
                }
            }
            part.explored = search.explored();
            part
        })
        .collect();
    let mut total = ExhaustiveSummary {
        n,
        k: k as usize,
        ..Default::default()
    };
    for part in parts {
        total.configurations += part.configurations;
        total.explored += part.explored;
        total.violations.extend(part.violations);
        merge_worst(
            &mut total,
            Worst {
                total: part.worst_total,
                stages: part.worst_stages,
            },
        );
    }
    total
}

fn merge_worst(into: &mut ExhaustiveSummary, w: Worst) {
    into.worst_total = into.worst_total.max(w.total);
    for (a, b) in into.worst_stages.iter_mut().zip(w.stages) {
        *a = (*a).max(b);
    }
}

fn describe(setups: &[RobotSetup]) -> String {
    let parts: Vec<String> = setups
        .iter()
        .map(|s| {
            format!(
                "{}@{}{}",
                s.id,
                s.position,
                if s.left_is_cw { "" } else { "~" }
            )
        })
        .collect();
    parts.join(" ")
}

/// Worst number of rounds until two robots meet, over placements and
/// adversaries, when robots 0 and 1 walk in opposite directions and robot 2
/// follows `third` (standing still when `None`).
pub fn worst_meeting(n: usize, third: Option<GlobalDir>, goal: MeetingGoal) -> Result<u64, String> {
    let game = MeetingGame::new(
        n,
        vec![Some(GlobalDir::Cw), Some(GlobalDir::Ccw), third],
        goal,
    );
    let mut search = Search::new(game, 4 * n as u64);
    let mut worst = 0;
    for p1 in 0..n {
        for p2 in 0..n {
            let positions = [0, p1, p2];
            let distinct = p1 != 0 && p2 != 0 && p1 != p2;
            if goal == MeetingGoal::AnyPair && !distinct {
                continue;
            }
            match search.evaluate(&search.game().root(&positions), 0) {
                Eval::Done(w) => worst = worst.max(w.total),
                Eval::Violation(e) => return Err(format!("placement {positions:?}: {e}")),
            }
        }
    }
    Ok(worst)
}

/// Searches every distinct ID triple of length `k` under every chirality
/// assignment for a Stage 1 phase in `[0, k-1]` where the robots do not all
/// walk the same way. Returns the configurations without one.
pub fn opposing_phase_counterexamples(k: u8) -> Vec<String> {
    let m = 1u64 << k;
    let mut bad = Vec::new();
    for a in 0..m {
        for b in a + 1..m {
            for c in b + 1..m {
                let ids = [a, b, c].map(|v| IdBits::new(v, k).expect("id fits"));
                for chirality in 0..8u8 {
                    let frames: Vec<Frame> = (0..3)
                        .map(|i| Frame::new(chirality >> i & 1 == 1))
                        .collect();
                    let found = (0..u64::from(k)).any(|phase| {
                        let dirs: Vec<GlobalDir> = (0..3)
                            .map(|i| frames[i].to_global(stage1_direction(ids[i], phase)))
                            .collect();
                        dirs.iter().any(|&d| d != dirs[0])
                    });
                    if !found {
                        bad.push(format!(
                            "{} {} {} chirality {chirality:03b}",
                            ids[0], ids[1], ids[2]
                        ));
                    }
                }
            }
        }
    }
    bad
}

/// Runs every certification up to ring size `max_n` and ID length `max_k`.
pub fn verify_lemmas(max_n: usize, max_k: u8) -> Result<VerifyReport, ConfigError> {
    if !(3..=8).contains(&max_n) {
        return Err(ConfigError::Invalid(format!("max_n {max_n} outside 3..=8")));
    }
    if !(2..=5).contains(&max_k) {
        return Err(ConfigError::Invalid(format!("max_k {max_k} outside 2..=5")));
    }
    let mut report = VerifyReport::default();

    for n in 3..=max_n {
        for k in 2..=max_k {
            let s = exhaustive_worst_case(n, k);
            let bound = (7 * n + n * (1 << k)) as u64;
            let mut detail = format!(
                "n={n} k={k}: {} configurations, worst {} rounds (bound {bound})",
                s.configurations, s.worst_total
            );
            if let Some(v) = s.violations.first() {
                detail.push_str(&format!(", {} violations, first: {v}", s.violations.len()));
            }
            report.checks.push(Check {
                name: "termination bound".into(),
                passed: s.violations.is_empty() && s.worst_total <= bound,
                detail,
            });
            let bounds = stage_bounds(n as u64, k as usize);
            let over: Vec<String> = (0..4)
                .filter(|&i| s.worst_stages[i] > bounds[i])
                .map(|i| {
                    format!(
                        "stage {} worst {} > {}",
                        i + 1,
                        s.worst_stages[i],
                        bounds[i]
                    )
                })
                .collect();
            report.checks.push(Check {
                name: "stage bounds".into(),
                passed: over.is_empty(),
                detail: format!(
                    "n={n} k={k}: worst per stage {:?}, bounds {bounds:?}{}",
                    s.worst_stages,
                    if over.is_empty() {
                        String::new()
                    } else {
                        format!(": {}", over.join(", "))
                    }
                ),
            });
        }
    }

    for n in 3..=max_n {
        let mut worst = 0;
        let mut error = None;
        // the third robot walks too, as every robot does in Stage 1
        for third in [Some(GlobalDir::Cw), Some(GlobalDir::Ccw)] {
            match worst_meeting(n, third, MeetingGoal::AnyPair) {
                Ok(w) => worst = worst.max(w),
                Err(e) => error = Some(e),
            }
        }
        let bound = n as u64 - 2;
        report.checks.push(Check {
            name: "opposite movers meet".into(),
            passed: error.is_none() && worst <= bound,
            detail: match error {
                Some(e) => format!("n={n}: {e}"),
                None => format!("n={n}: worst {worst} rounds (bound {bound})"),
            },
        });
    }

    for k in 2..=max_k.max(5) {
        let bad = opposing_phase_counterexamples(k);
        report.checks.push(Check {
            name: "opposing phase".into(),
            passed: bad.is_empty(),
            detail: match bad.first() {
                Some(b) => format!("k={k}: {} counterexamples, first {b}", bad.len()),
                None => format!(
                    "k={k}: every ID triple and chirality has an opposing phase in [0, {}]",
                    k - 1
                ),
            },
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn opposing_phase_always_exists() {
        for k in 2..=5 {
            assert!(opposing_phase_counterexamples(k).is_empty());
        }
    }

    #[test]
    fn smallest_ring_meets_in_one_round() {
        for third in [Some(GlobalDir::Cw), Some(GlobalDir::Ccw)] {
            assert_eq!(worst_meeting(3, third, MeetingGoal::AnyPair), Ok(1));
        }
    }

    #[test]
    fn standing_third_robot_can_be_avoided_forever() {
        // the two walkers face each other across the edge that stays removed
        for n in 3..=6 {
            assert!(worst_meeting(n, None, MeetingGoal::AnyPair).is_err());
        }
    }

    #[test]
    fn exhaustive_smallest_ring() {
        let s = exhaustive_worst_case(3, 2);
        assert!(s.violations.is_empty(), "{:?}", s.violations);
        assert!(s.worst_total <= 7 * 3 + 3 * 4);
        assert_eq!(s.configurations, 4 * 4 * 2);
    }
}
