use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Motion-quality failure categories used by human annotators, each costing
/// a fixed number of points per observed instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ManualCategory {
    InsufficientMotion,
    ExcessiveMotion,
    SubjectDistortion,
    LocalDetailDistortion,
    PhysicsViolation,
    InteractionViolation,
    UnnaturalMovement,
}

impl ManualCategory {
    pub const ALL: [ManualCategory; 7] = [
        Self::InsufficientMotion,
        Self::ExcessiveMotion,
        Self::SubjectDistortion,
        Self::LocalDetailDistortion,
        Self::PhysicsViolation,
        Self::InteractionViolation,
        Self::UnnaturalMovement,
    ];

    pub fn points(self) -> u32 {
        match self {
            Self::InsufficientMotion => 1,
            Self::ExcessiveMotion => 2,
            Self::SubjectDistortion => 3,
            Self::LocalDetailDistortion => 1,
            Self::PhysicsViolation => 3,
            Self::InteractionViolation => 2,
            Self::UnnaturalMovement => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::InsufficientMotion => "insufficient-motion",
            Self::ExcessiveMotion => "excessive-motion",
            Self::SubjectDistortion => "subject-distortion",
            Self::LocalDetailDistortion => "local-detail-distortion",
            Self::PhysicsViolation => "physics-violation",
            Self::InteractionViolation => "interaction-violation",
            Self::UnnaturalMovement => "unnatural-movement",
        }
    }
}

impl fmt::Display for ManualCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ManualCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::domain(format!("unknown annotation category `{s}`")))
    }
}

/// Total penalty points for a set of `(category, instance count)` marks.
/// Lower is better.
pub fn manual_score(marks: &[(ManualCategory, u32)]) -> u32 {
    marks.iter().map(|&(c, n)| c.points() * n).sum()
}
