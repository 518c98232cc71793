use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Origin category of a volume of water.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Surface,
    Groundwater,
    Desalination,
    Recycling,
    Transfer,
}

impl SourceKind {
    pub const ALL: [SourceKind; 5] = [
        SourceKind::Surface,
        SourceKind::Groundwater,
        SourceKind::Desalination,
        SourceKind::Recycling,
        SourceKind::Transfer,
    ];

    /// Deterministic preference among equal-cost sources, most preferred first.
    pub const PREFERENCE: [SourceKind; 5] = [
        SourceKind::Surface,
        SourceKind::Recycling,
        SourceKind::Transfer,
        SourceKind::Groundwater,
        SourceKind::Desalination,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn preference_rank(self) -> usize {
        Self::PREFERENCE
            .iter()
            .position(|&k| k == self)
            .expect("every kind ranked")
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SourceKind::Surface => "surface",
            SourceKind::Groundwater => "groundwater",
            SourceKind::Desalination => "desalination",
            SourceKind::Recycling => "recycling",
            SourceKind::Transfer => "transfer",
        }
    }
}

impl fmt::Display for SourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SourceKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SourceKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown source kind `{s}`"))
    }
}
