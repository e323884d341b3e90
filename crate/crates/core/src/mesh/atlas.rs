use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Label id reserved for unknown / medial-wall vertices.
pub const UNKNOWN_LABEL: u32 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hemisphere {
    Left,
    Right,
}

impl fmt::Display for Hemisphere {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Hemisphere::Left => "left",
            Hemisphere::Right => "right",
        })
    }
}

impl FromStr for Hemisphere {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "left" | "lh" => Ok(Hemisphere::Left),
            "right" | "rh" => Ok(Hemisphere::Right),
            other => Err(Error::Config(format!("unknown hemisphere '{other}'"))),
        }
    }
}

/// Per-vertex ROI labels with a name table.
#[derive(Debug, Clone, PartialEq)]
pub struct AtlasLabels {
    labels: Vec<u32>,
    names: BTreeMap<u32, String>,
    hemisphere: Hemisphere,
}

impl AtlasLabels {
    /// Label ids missing from `names` get the synthesized name `roi_<id>`.
    pub fn new(labels: Vec<u32>, mut names: BTreeMap<u32, String>, hemisphere: Hemisphere) -> Result<Self> {
        for &l in &labels {
            names.entry(l).or_insert_with(|| default_name(l));
        }
        Ok(Self {
            labels,
            names,
            hemisphere,
        })
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn names(&self) -> &BTreeMap<u32, String> {
        &self.names
    }

    pub fn hemisphere(&self) -> Hemisphere {
        self.hemisphere
    }

    pub fn vertex_count(&self) -> usize {
        self.labels.len()
    }

    pub fn name(&self, id: u32) -> String {
        self.names.get(&id).cloned().unwrap_or_else(|| default_name(id))
    }

    /// Labeled ROI ids present on the mesh, ascending, excluding unknown.
    pub fn roi_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.labels.iter().copied().filter(|&l| l != UNKNOWN_LABEL).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Vertex indices carrying `id`, ascending.
    pub fn vertices_of(&self, id: u32) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(v, &l)| (l == id).then_some(v))
            .collect()
    }
}

pub(crate) fn default_name(id: u32) -> String {
    if id == UNKNOWN_LABEL {
        "unknown".to_string()
    } else {
        format!("roi_{id}")
    }
}
