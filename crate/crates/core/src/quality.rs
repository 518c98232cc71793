use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::demand::{DemandKind, DemandUnit};
use crate::source::SourceKind;

/// Which source kinds each demand kind may draw from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QualityMatrix {
    pub rows: BTreeMap<DemandKind, BTreeSet<SourceKind>>,
}

impl Default for QualityMatrix {
    /// Urban units are restricted to conventional water; everything else may
    /// use all five kinds.
    fn default() -> Self {
        let all: BTreeSet<SourceKind> = SourceKind::ALL.into_iter().collect();
        let urban: BTreeSet<SourceKind> = [SourceKind::Surface, SourceKind::Groundwater, SourceKind::Transfer]
            .into_iter()
            .collect();
        let rows = DemandKind::ALL
            .into_iter()
            .map(|k| (k, if k == DemandKind::UDU { urban.clone() } else { all.clone() }))
            .collect();
        QualityMatrix { rows }
    }
}

impl QualityMatrix {
    pub fn empty() -> Self {
        QualityMatrix { rows: BTreeMap::new() }
    }

    pub fn with_row(mut self, kind: DemandKind, kinds: impl IntoIterator<Item = SourceKind>) -> Self {
        self.rows.insert(kind, kinds.into_iter().collect());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("quality matrix has no row for demand kind {0}")]
pub struct UnknownDemandKind(pub DemandKind);

/// Source kinds `unit` may use: its own override if present, otherwise the
/// ruleset row for its kind.
pub fn allowed_sources(
    unit: &DemandUnit,
    ruleset: &QualityMatrix,
) -> Result<BTreeSet<SourceKind>, UnknownDemandKind> {
    if let Some(own) = &unit.allowed_kinds {
        return Ok(own.clone());
    }
    ruleset
        .rows
        .get(&unit.kind)
        .cloned()
        .ok_or(UnknownDemandKind(unit.kind))
}
