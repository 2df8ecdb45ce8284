//! Acceptance checks. Prints one PASS or FAIL line per criterion and exits
//! non-zero if any failed.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use dynring::experiment::PointSummary;
use dynring::protocol::random::assign_random_ids;
use dynring::ring::advance_round_in_place;
use dynring::search::MeetingGoal;
use dynring::sim::stage_bounds;
use dynring::trace::{record, replay, replay_file};
use dynring::verify::{exhaustive_worst_case, opposing_phase_counterexamples, worst_meeting};
use dynring::{
    run_experiment, Action, AdversaryConfig, AdversaryKind, ExperimentConfig, FailureClass, Frame,
    GlobalDir, IdBits, Intent, LocalDir, Protocol, RandomizedParams, RingState, RobotSetup,
    RobotState, RunResult, RunSpec, SchedulePolicy, SsyncParams, SsyncSpec, TerminationMode,
    TracedSpec,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Report {
    failed: usize,
}

impl Report {
    fn check(&mut self, name: &str, passed: bool, detail: String) {
        println!("{} {name}: {detail}", if passed { "PASS" } else { "FAIL" });
        if !passed {
            self.failed += 1;
        }
    }
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(&configs().join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn mean_rounds(p: &PointSummary) -> f64 {
    p.rounds_termination.mean.unwrap_or(f64::INFINITY)
}

fn exhaustive(report: &mut Report) {
    let start = Instant::now();
    let mut lines = Vec::new();
    let mut passed = true;
    for n in 3..=6 {
        for k in 2..=3u8 {
            let s = exhaustive_worst_case(n, k);
            let bound = (7 * n + n * (1 << k)) as u64;
            let stages = stage_bounds(n as u64, k as usize);
            let ok = s.violations.is_empty()
                && s.worst_total <= bound
                && s.worst_stages.iter().zip(&stages).all(|(w, b)| w <= b);
            passed &= ok;
            lines.push(format!("n={n} k={k} worst {}/{bound}", s.worst_total));
            if let Some(v) = s.violations.first() {
                lines.push(format!("violation: {v}"));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report.check(
        "exhaustive termination bound (n <= 6, k <= 3)",
        passed && secs < 600.0,
        format!("{}; {secs:.1} s", lines.join(", ")),
    );
}

fn figure(report: &mut Report, name: &str, file: &str, strict: &[&str]) {
    let start = Instant::now();
    let outcome = run_experiment(&load(file), None).expect("experiment runs");
    let mut worst = (0.0f64, String::new());
    let mut passed = true;
    for p in &outcome.summary {
        let ratio = mean_rounds(p) / p.n as f64;
        let limit = if strict.contains(&p.adversary.as_str()) {
            3.0
        } else {
            5.0
        };
        passed &= ratio < limit && p.successes == p.trials;
        if ratio > worst.0 {
            worst = (ratio, format!("{} n={} k={}", p.adversary, p.n, p.k));
        }
    }
    let strict_worst = outcome
        .summary
        .iter()
        .filter(|p| strict.contains(&p.adversary.as_str()))
        .map(|p| mean_rounds(p) / p.n as f64)
        .fold(0.0, f64::max);
    let mut detail = format!(
        "{} points, worst mean {:.2}n ({})",
        outcome.summary.len(),
        worst.0,
        worst.1
    );
    if !strict.is_empty() {
        detail.push_str(&format!(
            ", worst {} mean {strict_worst:.2}n",
            strict.join("/")
        ));
    }
    detail.push_str(&format!("; {:.1} s", start.elapsed().as_secs_f64()));
    report.check(name, passed, detail);
}

fn meeting(report: &mut Report) {
    let mut lines = Vec::new();
    let mut passed = true;
    for n in 3..=8 {
        let mut worst = 0;
        for third in [Some(GlobalDir::Cw), Some(GlobalDir::Ccw)] {
            match worst_meeting(n, third, MeetingGoal::AnyPair) {
                Ok(w) => worst = worst.max(w),
                Err(e) => {
                    passed = false;
                    lines.push(format!("n={n}: {e}"));
                }
            }
        }
        passed &= worst <= n as u64 - 2;
        lines.push(format!("n={n} worst {worst}"));
    }
    report.check(
        "opposite movers meet within n - 2 rounds (n <= 8)",
        passed,
        lines.join(", "),
    );
}

fn opposing_phase(report: &mut Report) {
    let bad: Vec<String> = (2..=5).flat_map(opposing_phase_counterexamples).collect();
    report.check(
        "opposing phase in [0, k - 1] (k <= 5)",
        bad.is_empty(),
        match bad.first() {
            Some(b) => format!("{} counterexamples, first {b}", bad.len()),
            None => "every ID triple and chirality assignment".into(),
        },
    );
}

fn never_meet(report: &mut Report) {
    let trials = 20;
    let mut failures = Vec::new();
    let robots: Vec<RobotState> = (0..3)
        .map(|i| RobotState::new(IdBits::new(i, 2).unwrap(), Frame::new(true)))
        .collect();
    for n in [10usize, 50, 200] {
        for trial in 0..trials {
            let mut rng = ChaCha8Rng::seed_from_u64(trial);
            let mut positions: Vec<usize> = Vec::new();
            while positions.len() < 3 {
                let p = rng.gen_range(0..n);
                if !positions.contains(&p) {
                    positions.push(p);
                }
            }
            let mut ring = RingState::new(n, positions, 1).unwrap();
            let mut adversary = AdversaryConfig::new(AdversaryKind::NeverMeet)
                .build(&ring, trial)
                .unwrap();
            for round in 0..10 * n {
                let third = match rng.gen_range(0..3) {
                    0 => Action::Stay,
                    1 => Action::Move(LocalDir::Left),
                    _ => Action::Move(LocalDir::Right),
                };
                let actions = [
                    Action::Move(LocalDir::Left),
                    Action::Move(LocalDir::Right),
                    third,
                ];
                let intents: Vec<Intent> =
                    (0..3).map(|i| robots[i].intent(i, actions[i])).collect();
                let removed = adversary.choose(&dynring::AdversaryView {
                    ring: &ring,
                    intents: &intents,
                    robots: &robots,
                });
                let events = advance_round_in_place(&mut ring, &intents, &removed, true).unwrap();
                let crossed = events[0]
                    .crossed_with
                    .iter()
                    .any(|p| p.state.id == robots[1].id);
                if ring.position(0) == ring.position(1) || crossed {
                    failures.push(format!("n={n} trial {trial} round {round}"));
                    break;
                }
            }
        }
    }
    report.check(
        "tracked robots never meet under NeverMeet (n in {10, 50, 200}, 10n rounds)",
        failures.is_empty(),
        match failures.first() {
            Some(f) => format!("{} trials met, first {f}", failures.len()),
            None => format!("{} trials per ring size", trials),
        },
    );
}

fn randomized(report: &mut Report) {
    let mut cfg = load("randomized.toml");
    cfg.randomized = RandomizedParams::default();
    let outcome = run_experiment(&cfg, None).expect("experiment runs");
    let n = 128.0f64;
    let limit = 50.0 * n * n.log2();
    let mut passed = true;
    let mut lines = Vec::new();
    for p in &outcome.summary {
        let ok_classes = p
            .failure_classes
            .keys()
            .all(|c| c == FailureClass::ThirdRobotNotInformed.as_str());
        let mean = mean_rounds(p);
        passed &= p.success_fraction >= 0.95 && ok_classes && mean <= limit;
        lines.push(format!(
            "{} {}/{} mean {:.0} rounds ({:.1}n)",
            p.adversary,
            p.successes,
            p.trials,
            mean,
            mean / n
        ));
    }
    let covered = outcome
        .results
        .iter()
        .filter(|r| r.success)
        .all(|r| r.rounds_coverage.is_some());
    report.check(
        "randomized explicit termination (n = 128, RED and SED)",
        passed && covered,
        format!("{}; limit {limit:.0}", lines.join(", ")),
    );
}

fn partial(report: &mut Report) {
    let mut cfg = load("randomized.toml");
    cfg.randomized = RandomizedParams {
        mode: TerminationMode::Partial,
        ..Default::default()
    };
    let outcome = run_experiment(&cfg, None).expect("experiment runs");
    let mut passed = true;
    let mut lines = Vec::new();
    for p in &outcome.summary {
        let mean = mean_rounds(p);
        passed &= p.success_fraction >= 0.99 && mean <= 20.0 * p.n as f64;
        lines.push(format!(
            "{} {}/{} mean {:.1}n",
            p.adversary,
            p.successes,
            p.trials,
            mean / p.n as f64
        ));
    }
    report.check("partial termination (n = 128)", passed, lines.join(", "));
}

fn random_ids(report: &mut Report) {
    let draws = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let distinct = (0..draws)
        .filter(|_| {
            let ids = assign_random_ids(3, 2, &mut rng).unwrap();
            ids[0] != ids[1] && ids[1] != ids[2] && ids[0] != ids[2]
        })
        .count() as f64
        / draws as f64;
    report.check(
        "random IDs distinct (l = 2, 10^5 draws)",
        (distinct - 0.375).abs() <= 0.02,
        format!("{distinct:.4} vs 0.375"),
    );

    let cfg = load("random-ids.toml");
    let n = cfg.n[0] as f64;
    let outcome = run_experiment(&cfg, None).expect("experiment runs");
    let trials = outcome.results.len() as f64;
    let success = outcome.results.iter().filter(|r| r.success).count() as f64 / trials;
    let collisions = outcome
        .results
        .iter()
        .filter(|r| r.failure_class == Some(FailureClass::IdCollision))
        .count() as f64;
    let observed = 1.0 - collisions / trials;
    let expected = (1.0 - 1.0 / n) * observed;
    report.check(
        "random IDs end to end (l = 2, n = 128)",
        (success - expected).abs() <= 0.05,
        format!(
            "success {success:.3} vs expected {expected:.3} (distinct {observed:.3}, {} trials)",
            trials
        ),
    );
}

fn ssync(report: &mut Report) {
    let mut passed = true;
    let mut lines = Vec::new();
    for f in [2u64, 8] {
        let mut cfg = load("ssync.toml");
        cfg.ssync = SsyncParams::new(f, SchedulePolicy::AdversarialBounded);
        let outcome = run_experiment(&cfg, None).expect("experiment runs");
        let false_fires: usize = outcome.results.iter().map(|r| r.violations.len()).sum();
        for p in &outcome.summary {
            let runs: Vec<&RunResult> = outcome
                .results
                .iter()
                .filter(|r| r.adversary == p.adversary && r.success)
                .collect();
            let max_steps = runs.iter().map(|r| r.steps).max().unwrap_or(0);
            let budget = 20 * f * p.n as u64;
            passed &= p.success_fraction >= 0.70 && max_steps <= budget;
            lines.push(format!(
                "f={f} {} {}/{} max steps {:.2}fn",
                p.adversary,
                p.successes,
                p.trials,
                max_steps as f64 / (f * p.n as u64) as f64
            ));
        }
        passed &= false_fires == 0;
        lines.push(format!("f={f} false detections {false_fires}"));
    }
    report.check(
        "semi-synchronous (n = 64, adversarial-bounded)",
        passed,
        lines.join(", "),
    );
}

fn determinism(report: &mut Report) {
    let robots = |ids: [&str; 3]| -> Vec<RobotSetup> {
        ids.iter()
            .zip([(true, 0), (false, 17), (true, 40)])
            .map(|(id, (left_is_cw, position))| RobotSetup {
                id: id.parse().unwrap(),
                left_is_cw,
                position,
            })
            .collect()
    };
    let specs = [
        TracedSpec::Fsync(RunSpec {
            n: 64,
            robots: robots(["100", "101", "111"]),
            adversary: AdversaryConfig::new(AdversaryKind::Rrb),
            protocol: Protocol::Deterministic,
            crossing_detection: true,
            seed: 11,
            max_rounds: None,
        }),
        TracedSpec::Fsync(RunSpec {
            n: 64,
            robots: robots(["100", "101", "111"]),
            adversary: AdversaryConfig::new(AdversaryKind::Red),
            protocol: Protocol::Randomized(RandomizedParams::default()),
            crossing_detection: false,
            seed: 12,
            max_rounds: None,
        }),
        TracedSpec::Ssync(SsyncSpec {
            n: 64,
            robots: robots(["100", "101", "111"]),
            adversary: AdversaryConfig::new(AdversaryKind::Sed),
            params: SsyncParams::new(3, SchedulePolicy::Random),
            seed: 13,
            max_rounds: None,
        }),
    ];
    let mut problems = Vec::new();
    for (i, spec) in specs.iter().enumerate() {
        let (mut first, mut second) = (Vec::new(), Vec::new());
        let a = record(spec, &mut first).unwrap();
        let b = record(spec, &mut second).unwrap();
        if first != second || a != b {
            problems.push(format!("run {i} differs between recordings"));
        }
        match replay(first.as_slice()) {
            Ok(r) if r == a => {}
            Ok(_) => problems.push(format!("run {i}: replay result differs")),
            Err(e) => problems.push(format!("run {i}: {e}")),
        }
    }
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    for name in ["n8-sed", "n8-nevermeet", "n8-rrb"] {
        if let Err(e) = replay_file(&golden.join(format!("{name}.jsonl"))) {
            problems.push(format!("{name}: {e}"));
        }
    }
    report.check(
        "determinism and golden traces",
        problems.is_empty(),
        if problems.is_empty() {
            "3 seeded runs replay identically, 3 golden traces replay".into()
        } else {
            problems.join("; ")
        },
    );
}

fn main() -> ExitCode {
    let mut report = Report { failed: 0 };
    exhaustive(&mut report);
    figure(
        &mut report,
        "rounds against ring size",
        "fig3.toml",
        &["RED", "RRB"],
    );
    figure(&mut report, "rounds against ID length", "fig4.toml", &[]);
    meeting(&mut report);
    opposing_phase(&mut report);
    never_meet(&mut report);
    randomized(&mut report);
    partial(&mut report);
    random_ids(&mut report);
    ssync(&mut report);
    determinism(&mut report);
    if report.failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{} acceptance criteria failed", report.failed);
        ExitCode::FAILURE
    }
}
