use std::fmt;

use serde::{Deserialize, Serialize};

/// Number of veracity classes.
pub const N_CLASSES: usize = 3;

/// Three-way veracity label shared by every dataset after remapping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Veracity {
    Supported = 0,
    Refuted = 1,
    Nei = 2,
}

impl Veracity {
    pub const ALL: [Veracity; N_CLASSES] = [Veracity::Supported, Veracity::Refuted, Veracity::Nei];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    /// Column heading used in report tables.
    pub fn heading(self) -> &'static str {
        match self {
            Veracity::Supported => "Support",
            Veracity::Refuted => "Refute",
            Veracity::Nei => "NEI",
        }
    }
}

impl TryFrom<u8> for Veracity {
    type Error = u8;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        Self::from_index(value as usize).ok_or(value)
    }
}

impl fmt::Display for Veracity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Veracity::Supported => "supported",
            Veracity::Refuted => "refuted",
            Veracity::Nei => "not enough info",
        };
        f.write_str(s)
    }
}
