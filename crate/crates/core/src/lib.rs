//! Simulator and protocol library for exploring dynamic rings with three
//! mobile robots.

pub mod adversary;
pub mod error;
pub mod experiment;
pub mod protocol;
pub mod ring;
pub mod search;
pub mod sim;
pub mod ssync;
pub mod trace;
pub mod types;
pub mod verify;

pub use adversary::{Adversary, AdversaryConfig, AdversaryKind, AdversaryView};
pub use error::{ConfigError, EngineError, ExperimentError, ProtocolError, SimError, TraceError};
pub use experiment::{run_experiment, ExperimentConfig, ProtocolKind, CSV_COLUMNS};
pub use protocol::random::{RandomizedParams, TerminationMode};
pub use protocol::{Countdown, RobotState, Rules};
pub use ring::{Intent, PeerView, RingState, RoundEvents, RoundOutcome};
pub use sim::{run, FailureClass, Protocol, RobotSetup, RunResult, RunSpec, Simulation};
pub use ssync::{run_ssync, SchedulePolicy, SsyncParams, SsyncSpec};
pub use trace::{replay_file, TracedSpec};
pub use types::{Action, Frame, GlobalDir, IdBits, LocalDir, Mark, PublicState, RobotId, ZigZag};
