//! Dataset manifest (JSON), subject loading and Euler-number QC.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};

use super::atlas_csv::read_atlas_csv;
use super::freesurfer::read_fs_curv;
use super::smmn::read_subject;
use crate::conv::FeatureMap;
use crate::error::{Error, Result};
use crate::mesh::{icosphere_vertex_count, AtlasLabels, Hemisphere};
use crate::net::{ContextVector, SubjectRecord};

/// Largest allowed distance from the cohort median Euler number.
pub const EULER_QC_THRESHOLD: f64 = 25.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    /// One SMMN file holding every channel, or one curv file per channel.
    pub features: Vec<PathBuf>,
    pub age: f64,
    pub sex: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    pub split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub euler: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    #[serde(default)]
    pub seed: u64,
    /// Icosphere order of every feature file.
    pub order: u32,
    pub hemisphere: Hemisphere,
    #[serde(default)]
    pub channels: Vec<String>,
    pub atlas: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atlas_names: Option<PathBuf>,
    pub subjects: Vec<ManifestEntry>,
    /// Directory relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::new();
        for e in &self.subjects {
            if !ids.insert(e.id.as_str()) {
                return Err(Error::Invariant(format!("duplicate subject id '{}'", e.id)));
            }
            if e.features.is_empty() {
                return Err(Error::Invariant(format!("subject '{}' lists no feature files", e.id)));
            }
        }
        Ok(())
    }

    /// Checks that every referenced file exists.
    pub fn check_files(&self) -> Result<()> {
        let files = self
            .subjects
            .iter()
            .flat_map(|e| &e.features)
            .chain(self.atlas.as_ref())
            .chain(self.atlas_names.as_ref());
        for f in files {
            let p = self.resolve(f);
            if !p.is_file() {
                return Err(Error::io(
                    &p,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "referenced file does not exist"),
                ));
            }
        }
        Ok(())
    }

    pub fn entries(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.subjects.iter().filter(move |e| e.split == split)
    }

    pub fn load_atlas(&self) -> Result<AtlasLabels> {
        let atlas = self
            .atlas
            .as_ref()
            .ok_or_else(|| Error::Usage("manifest names no atlas".into()))?;
        let names = self.atlas_names.as_ref().map(|p| self.resolve(p));
        read_atlas_csv(
            self.resolve(atlas),
            icosphere_vertex_count(self.order),
            names.as_deref(),
            self.hemisphere,
        )
    }

    /// Reads the feature files of one entry.
    pub fn load_subject(&self, entry: &ManifestEntry) -> Result<SubjectRecord> {
        let v = icosphere_vertex_count(self.order);
        let features = if entry.features.len() == 1 && is_smmn(&entry.features[0]) {
            let path = self.resolve(&entry.features[0]);
            let s = read_subject(&path)?;
            if s.features.level() != self.order {
                return Err(Error::Shape(format!(
                    "{}: order {} but manifest order is {}",
                    path.display(),
                    s.features.level(),
                    self.order
                )));
            }
            s.features
        } else {
            let mut channels = Vec::with_capacity(entry.features.len());
            for f in &entry.features {
                let path = self.resolve(f);
                let values = read_fs_curv(&path)?;
                if values.len() != v {
                    return Err(Error::Shape(format!(
                        "{}: {} values, order-{} icosphere has {v}",
                        path.display(),
                        values.len(),
                        self.order
                    )));
                }
                channels.push(values.into_iter().map(f64::from).collect());
            }
            FeatureMap::from_channels(&channels, self.order)?
        };
        if !self.channels.is_empty() && features.channels() != self.channels.len() {
            return Err(Error::Shape(format!(
                "subject '{}' has {} channels, manifest lists {}",
                entry.id,
                features.channels(),
                self.channels.len()
            )));
        }
        Ok(SubjectRecord {
            id: entry.id.clone(),
            hemisphere: self.hemisphere,
            features,
            context: ContextVector {
                age: entry.age,
                sex: entry.sex,
            },
            group: entry.group.clone(),
        })
    }

    /// Loads the entries selected by `filter`, in manifest order.
    pub fn load_subjects(&self, filter: impl Fn(&ManifestEntry) -> bool) -> Result<Vec<SubjectRecord>> {
        self.subjects
            .iter()
            .filter(|e| filter(e))
            .map(|e| self.load_subject(e))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn is_smmn(p: &Path) -> bool {
    p.extension().is_some_and(|e| e.eq_ignore_ascii_case("smmn"))
}

/// Reads a manifest, validates it and checks its files exist.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut m: DatasetManifest =
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line() as u64, e.to_string()))?;
    m.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    m.validate()?;
    m.check_files()?;
    Ok(m)
}

pub fn write_manifest(path: impl AsRef<Path>, manifest: &DatasetManifest) -> Result<()> {
    let path = path.as_ref();
    super::bytes::write_file(path, (manifest.to_json()? + "\n").as_bytes())
}

/// Drops subjects whose Euler number is more than 25 from the cohort
/// median. If any subject lacks the metric the manifest is returned
/// unchanged with a warning. Returns the filtered manifest and the excluded
/// ids.
pub fn qc_filter(manifest: &DatasetManifest) -> (DatasetManifest, Vec<String>) {
    let eulers: Option<Vec<f64>> = manifest.subjects.iter().map(|e| e.euler).collect();
    let Some(mut eulers) = eulers.filter(|e| !e.is_empty()) else {
        warn!("Euler numbers missing, skipping QC");
        return (manifest.clone(), Vec::new());
    };
    eulers.sort_by(f64::total_cmp);
    let n = eulers.len();
    let median = if n % 2 == 1 {
        eulers[n / 2]
    } else {
        0.5 * (eulers[n / 2 - 1] + eulers[n / 2])
    };
    let mut out = manifest.clone();
    let mut excluded = Vec::new();
    out.subjects.retain(|e| {
        let keep = (e.euler.unwrap() - median).abs() <= EULER_QC_THRESHOLD;
        if !keep {
            excluded.push(e.id.clone());
        }
        keep
    });
    (out, excluded)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest(eulers: &[Option<f64>]) -> DatasetManifest {
        DatasetManifest {
            seed: 0,
            order: 1,
            hemisphere: Hemisphere::Left,
            channels: vec![],
            atlas: None,
            atlas_names: None,
            subjects: eulers
                .iter()
                .enumerate()
                .map(|(i, &euler)| ManifestEntry {
                    id: format!("s{i}"),
                    features: vec![PathBuf::from(format!("s{i}.smmn"))],
                    age: 60.0,
                    sex: 1.0,
                    group: None,
                    split: Split::Train,
                    euler,
                })
                .collect(),
            base_dir: PathBuf::new(),
        }
    }

    #[test]
    fn qc_examples() {
        let m = manifest(&[Some(-20.0); 4]);
        assert_eq!(qc_filter(&m).0, m);
        let (f, excluded) = qc_filter(&manifest(&[Some(-10.0), Some(-12.0), Some(-100.0)]));
        assert_eq!(excluded, vec!["s2"]);
        assert_eq!(f.subjects.len(), 2);
        let m = manifest(&[Some(-10.0), None, Some(-100.0)]);
        let (f, excluded) = qc_filter(&m);
        assert_eq!(f, m);
        assert!(excluded.is_empty());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let mut m = manifest(&[None, None]);
        m.subjects[1].id = "s0".into();
        assert!(matches!(m.validate(), Err(Error::Invariant(_))));
    }

    #[test]
    fn missing_files_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let m = manifest(&[None]);
        let path = dir.path().join("manifest.json");
        write_manifest(&path, &m).unwrap();
        assert!(matches!(load_manifest(&path), Err(Error::Io { .. })));
    }
}
