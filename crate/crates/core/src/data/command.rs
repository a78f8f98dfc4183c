use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};

/// Discrete longitudinal command derived from the acceleration over a
/// fixed interval.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SpeedCommand {
    Accelerate,
    Decelerate,
    Maintain,
}

impl SpeedCommand {
    pub const ALL: [SpeedCommand; 3] = [SpeedCommand::Accelerate, SpeedCommand::Decelerate, SpeedCommand::Maintain];

    pub fn index(self) -> usize {
        match self {
            SpeedCommand::Accelerate => 0,
            SpeedCommand::Decelerate => 1,
            SpeedCommand::Maintain => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn one_hot(self) -> [f64; 3] {
        let mut v = [0.0; 3];
        v[self.index()] = 1.0;
        v
    }

    /// Class with the largest logit; ties go to the lower index.
    pub fn argmax(logits: &[f64; 3]) -> Self {
        let mut best = 0;
        for i in 1..3 {
            if logits[i] > logits[best] {
                best = i;
            }
        }
        Self::ALL[best]
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SpeedCommand::Accelerate => "accelerate",
            SpeedCommand::Decelerate => "decelerate",
            SpeedCommand::Maintain => "maintain",
        }
    }
}

impl fmt::Display for SpeedCommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SpeedCommand {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::invalid("speed_command", alloc::format!("unknown command `{s}`")))
    }
}
