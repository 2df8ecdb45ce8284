//! Vocabulary shared by the engine, the protocols and the adversaries.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// Index of a robot inside one simulation. Never visible to the protocols.
pub type RobotId = usize;

/// A direction expressed in some robot's private frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LocalDir {
    Left,
    Right,
}

impl LocalDir {
    pub fn reversed(self) -> Self {
        match self {
            LocalDir::Left => LocalDir::Right,
            LocalDir::Right => LocalDir::Left,
        }
    }
}

/// A direction on the ring itself. Clockwise goes from node `j` to `j + 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GlobalDir {
    Cw,
    Ccw,
}

impl GlobalDir {
    pub fn reversed(self) -> Self {
        match self {
            GlobalDir::Cw => GlobalDir::Ccw,
            GlobalDir::Ccw => GlobalDir::Cw,
        }
    }
}

/// A robot's private orientation.
///
/// Protocols may flip a frame or translate directions between two frames
/// (robots that meet can compare their notions of left), but they cannot
/// recover the global orientation from it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Frame {
    left_is_cw: bool,
}

impl Frame {
    pub fn new(left_is_clockwise: bool) -> Self {
        Frame {
            left_is_cw: left_is_clockwise,
        }
    }

    pub fn flipped(self) -> Self {
        Frame {
            left_is_cw: !self.left_is_cw,
        }
    }

    /// Re-expresses `dir`, given in frame `from`, in this frame.
    pub fn translate(self, dir: LocalDir, from: Frame) -> LocalDir {
        if self == from {
            dir
        } else {
            dir.reversed()
        }
    }

    /// The frame whose left is `dir` of this frame.
    pub fn with_left(self, dir: LocalDir) -> Frame {
        match dir {
            LocalDir::Left => self,
            LocalDir::Right => self.flipped(),
        }
    }

    pub(crate) fn to_global(self, dir: LocalDir) -> GlobalDir {
        match (dir, self.left_is_cw) {
            (LocalDir::Left, true) | (LocalDir::Right, false) => GlobalDir::Cw,
            _ => GlobalDir::Ccw,
        }
    }
}

/// What a robot does in a round.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Move(LocalDir),
    Stay,
}

/// Role a robot takes after its first meeting.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
pub enum Mark {
    #[default]
    Nil,
    A,
    B,
    C,
}

impl Mark {
    pub fn is_nil(self) -> bool {
        self == Mark::Nil
    }

    /// The partner of a fixed-direction robot.
    pub fn opposite(self) -> Mark {
        match self {
            Mark::A => Mark::B,
            Mark::B => Mark::A,
            other => other,
        }
    }
}

impl fmt::Display for Mark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Mark::Nil => "NIL",
            Mark::A => "A",
            Mark::B => "B",
            Mark::C => "C",
        };
        f.write_str(s)
    }
}

/// A `k`-bit robot identifier `b_{k-1} ... b_0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct IdBits {
    value: u64,
    len: u8,
}

impl IdBits {
    pub fn new(value: u64, len: u8) -> Result<Self, ConfigError> {
        if len == 0 || len > 63 {
            return Err(ConfigError::Invalid(format!(
                "id length {len} outside 1..=63"
            )));
        }
        if value >> len != 0 {
            return Err(ConfigError::Invalid(format!(
                "id value {value} does not fit in {len} bits"
            )));
        }
        Ok(IdBits { value, len })
    }

    pub fn value(self) -> u64 {
        self.value
    }

    pub fn len(self) -> usize {
        self.len as usize
    }

    pub fn is_empty(self) -> bool {
        self.len == 0
    }

    /// Bit `b_i`.
    pub fn bit(self, i: usize) -> bool {
        (self.value >> i) & 1 == 1
    }
}

impl PartialOrd for IdBits {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for IdBits {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.value, self.len).cmp(&(other.value, other.len))
    }
}

impl fmt::Display for IdBits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:0width$b}", self.value, width = self.len as usize)
    }
}

impl FromStr for IdBits {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() || !s.bytes().all(|b| b == b'0' || b == b'1') {
            return Err(ConfigError::Invalid(format!(
                "id `{s}` is not a bit string"
            )));
        }
        let len = u8::try_from(s.len())
            .map_err(|_| ConfigError::Invalid(format!("id `{s}` too long")))?;
        let value = u64::from_str_radix(s, 2)
            .map_err(|_| ConfigError::Invalid(format!("id `{s}` too long")))?;
        IdBits::new(value, len)
    }
}

impl Serialize for IdBits {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for IdBits {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The part of a robot's memory other robots can read when they meet it.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PublicState {
    pub id: IdBits,
    pub mark: Mark,
    pub stage: u8,
    /// Successful moves counted before the round this snapshot was taken in.
    pub step: u64,
    pub size: Option<u64>,
    /// Running the termination countdown.
    pub terminating: bool,
    pub terminated: bool,
    pub frame: Frame,
    /// Direction of the move attempted in the snapshot's round.
    pub dir: LocalDir,
    pub zigzag: ZigZag,
    /// Last awake intent was a move over a removed edge that has not executed yet.
    pub blocked: bool,
}

/// Robot C's shuttle bookkeeping between A and B.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ZigZag {
    /// The marked robot C is walking towards.
    pub heading: Option<Mark>,
    pub a_to_b: Option<u64>,
    pub b_to_a: Option<u64>,
    pub seen_blocked_a: bool,
    pub seen_blocked_b: bool,
    /// False while the current leg did not start at the opposite robot's node.
    pub leg_counts: bool,
}

impl ZigZag {
    pub fn towards(heading: Mark, leg_counts: bool) -> Self {
        ZigZag {
            heading: Some(heading),
            leg_counts,
            ..Default::default()
        }
    }

    /// Records a leg of `steps` that ended at the heading target and turns
    /// around. Returns true when the last two legs have equal length (and,
    /// if `require_blocked`, both endpoints were seen blocked).
    pub fn close_leg(&mut self, steps: u64, target_blocked: bool, require_blocked: bool) -> bool {
        let Some(heading) = self.heading else {
            return false;
        };
        if self.leg_counts {
            match heading {
                Mark::B => {
                    self.a_to_b = Some(steps);
                    self.seen_blocked_b = target_blocked;
                }
                _ => {
                    self.b_to_a = Some(steps);
                    self.seen_blocked_a = target_blocked;
                }
            }
            let closed = self.a_to_b.is_some()
                && self.a_to_b == self.b_to_a
                && (!require_blocked || (self.seen_blocked_a && self.seen_blocked_b));
            if closed {
                return true;
            }
        }
        self.leg_counts = true;
        self.heading = Some(heading.opposite());
        false
    }
}
