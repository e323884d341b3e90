//! Synthetic cohorts: smooth random spherical-harmonic fields with an age
//! effect and vertex noise on the icosphere, plus an additive bump on one
//! ROI for patients.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::atlas_csv::write_atlas_csv;
use super::bytes::write_file;
use super::manifest::{write_manifest, DatasetManifest, ManifestEntry, Split};
use super::smmn::write_subject;
use crate::conv::FeatureMap;
use crate::error::{Error, Result};
use crate::mesh::{icosphere, AtlasLabels, Hemisphere, TriMesh, Vec3, UNKNOWN_LABEL};
use crate::net::{ContextVector, SubjectRecord};
use crate::spharm::filter_basis;

pub const CONTROL: &str = "control";
pub const PATIENT: &str = "patient";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub order: u32,
    pub hemisphere: Hemisphere,
    pub n_train: usize,
    pub n_val: usize,
    /// Test-split controls.
    pub n_controls: usize,
    pub n_patients: usize,
    pub age_min: f64,
    pub age_max: f64,
    /// Probability of sex = +1.
    pub sex_balance: f64,
    pub field_degree: usize,
    /// Per-vertex std of the subject-specific smooth field.
    pub field_scale: f64,
    /// Per-vertex std of the shared template field.
    pub template_scale: f64,
    pub feature_names: Vec<String>,
    pub template_mean: Vec<f64>,
    /// Feature change per standard deviation of age, per channel.
    pub age_slope: Vec<f64>,
    pub noise_std: f64,
    pub n_rois: usize,
    pub target_roi: u32,
    /// Bump height in units of the control per-vertex std.
    pub amplitude: f64,
    pub affected_fraction: f64,
    pub seed: u64,
    /// Seed of the shared template field; `seed` when absent. Fixing it
    /// draws new subjects around the same template.
    pub template_seed: Option<u64>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            order: 3,
            hemisphere: Hemisphere::Left,
            n_train: 200,
            n_val: 100,
            n_controls: 50,
            n_patients: 50,
            age_min: 55.0,
            age_max: 85.0,
            sex_balance: 0.5,
            field_degree: 3,
            field_scale: 1.0,
            template_scale: 1.0,
            feature_names: vec!["thickness".into()],
            template_mean: vec![2.5],
            age_slope: vec![-0.3],
            noise_std: 0.1,
            n_rois: 16,
            target_roi: 5,
            amplitude: 5.0,
            affected_fraction: 1.0,
            seed: 0,
            template_seed: None,
        }
    }
}

impl SynthConfig {
    pub fn channels(&self) -> usize {
        self.feature_names.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.order > 6 {
            return bad(format!("synthetic order {} exceeds 6", self.order));
        }
        if self.amplitude.is_nan() || self.amplitude < 0.0 {
            return bad(format!("amplitude {} must be >= 0", self.amplitude));
        }
        if self.age_min.partial_cmp(&self.age_max) != Some(std::cmp::Ordering::Less) {
            return bad("age_min must be below age_max".into());
        }
        if !(0.0..=1.0).contains(&self.sex_balance) || !(0.0..=1.0).contains(&self.affected_fraction) {
            return bad("sex_balance and affected_fraction must lie in [0, 1]".into());
        }
        if self.field_degree > 8 {
            return bad(format!("field_degree {} exceeds 8", self.field_degree));
        }
        if !(self.field_scale >= 0.0 && self.template_scale >= 0.0 && self.noise_std >= 0.0) {
            return bad("field_scale, template_scale and noise_std must be >= 0".into());
        }
        let c = self.channels();
        if c == 0 || self.age_slope.len() != c || self.template_mean.len() != c {
            return bad(format!(
                "feature_names, template_mean and age_slope need one entry per channel (got {}, {}, {})",
                c,
                self.template_mean.len(),
                self.age_slope.len()
            ));
        }
        if self.n_rois == 0 {
            return bad("n_rois must be positive".into());
        }
        if self.target_roi == UNKNOWN_LABEL || self.target_roi as usize > self.n_rois {
            return bad(format!(
                "target ROI {} is not in the atlas (labels 1..={})",
                self.target_roi, self.n_rois
            ));
        }
        Ok(())
    }

    /// Population std of a control feature at any vertex: the field, age and
    /// noise terms are independent and the field variance is uniform over
    /// the sphere.
    pub fn control_sigma(&self) -> Vec<f64> {
        self.age_slope
            .iter()
            .map(|s| (self.field_scale.powi(2) + s * s + self.noise_std.powi(2)).sqrt())
            .collect()
    }

    fn age_z(&self, age: f64) -> f64 {
        let mid = 0.5 * (self.age_min + self.age_max);
        let sd = (self.age_max - self.age_min) / 12f64.sqrt();
        (age - mid) / sd
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSubject {
    pub record: SubjectRecord,
    pub split: Split,
    pub euler: f64,
    /// True when the bump was added.
    pub bumped: bool,
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub config: SynthConfig,
    pub mesh: TriMesh,
    pub atlas: AtlasLabels,
    pub sigma: Vec<f64>,
    pub subjects: Vec<SynthSubject>,
}

impl SynthDataset {
    pub fn records(&self, split: Split, group: Option<&str>) -> Vec<SubjectRecord> {
        self.subjects
            .iter()
            .filter(|s| s.split == split && group.is_none_or(|g| s.record.group.as_deref() == Some(g)))
            .map(|s| s.record.clone())
            .collect()
    }
}

/// `n` nearly uniform directions on the sphere (golden-angle spiral from
/// the north pole).
pub fn fibonacci_sphere(n: usize) -> Vec<Vec3> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let a = golden * i as f64;
            [r * a.cos(), r * a.sin(), z]
        })
        .collect()
}

/// Voronoi parcellation of `mesh` around `n_rois + 1` spiral seeds. The cell
/// of the first seed (at the north pole) stands in for the medial wall and
/// gets label 0; the others are ROIs 1..=n_rois.
pub fn synthetic_atlas(mesh: &TriMesh, n_rois: usize, hemisphere: Hemisphere) -> Result<AtlasLabels> {
    let seeds = fibonacci_sphere(n_rois + 1);
    let labels = mesh
        .vertices()
        .iter()
        .map(|v| {
            let mut best = 0;
            let mut best_dot = f64::NEG_INFINITY;
            for (i, s) in seeds.iter().enumerate() {
                let d = v[0] * s[0] + v[1] * s[1] + v[2] * s[2];
                if d > best_dot {
                    best_dot = d;
                    best = i;
                }
            }
            best as u32
        })
        .collect();
    let mut names = BTreeMap::new();
    names.insert(UNKNOWN_LABEL, "medial_wall".to_string());
    for id in 1..=n_rois as u32 {
        names.insert(id, format!("region_{id:02}"));
    }
    AtlasLabels::new(labels, names, hemisphere)
}

/// Basis matrix `[vertex][k]` of real harmonics up to `degree` and a per-k
/// coefficient std that gives every vertex field variance `scale²`.
fn sh_design(mesh: &TriMesh, degree: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let basis = mesh
        .vertices()
        .iter()
        .map(|p| {
            let theta = p[2].clamp(-1.0, 1.0).acos();
            let phi = p[1].atan2(p[0]);
            filter_basis(degree, theta, phi)
        })
        .collect();
    let k = (degree + 1) * (degree + 1);
    let four_pi = 4.0 * std::f64::consts::PI;
    let coef_std = (0..k)
        .map(|i| {
            let l = (i as f64).sqrt().floor();
            (four_pi / ((degree as f64 + 1.0) * (2.0 * l + 1.0))).sqrt()
        })
        .collect();
    (basis, coef_std)
}

fn random_field(basis: &[Vec<f64>], coef_std: &[f64], scale: f64, rng: &mut impl Rng) -> Vec<f64> {
    let coeffs: Vec<f64> = coef_std
        .iter()
        .map(|s| scale * s * rng.sample::<f64, _>(rand_distr::StandardNormal))
        .collect();
    basis
        .iter()
        .map(|b| b.iter().zip(&coeffs).map(|(x, c)| x * c).sum())
        .collect()
}

struct Plan {
    id: String,
    split: Split,
    group: &'static str,
    bumped: bool,
}

fn plan(cfg: &SynthConfig) -> Vec<Plan> {
    let mut out = Vec::new();
    let mut push = |prefix: &str, n: usize, split, group, bumped: &dyn Fn(usize) -> bool| {
        for i in 0..n {
            out.push(Plan {
                id: format!("{prefix}-{:04}", i + 1),
                split,
                group,
                bumped: bumped(i),
            });
        }
    };
    let affected = (cfg.affected_fraction * cfg.n_patients as f64).round() as usize;
    push("train", cfg.n_train, Split::Train, CONTROL, &|_| false);
    push("val", cfg.n_val, Split::Val, CONTROL, &|_| false);
    push("ctl", cfg.n_controls, Split::Test, CONTROL, &|_| false);
    push("pat", cfg.n_patients, Split::Test, PATIENT, &|i| i < affected);
    out
}

/// Generates a cohort in memory. Each subject draws from its own ChaCha8
/// stream, so the result does not depend on thread scheduling. Values are
/// rounded to f32 so they match what [`synth_generate`] writes.
pub fn synth_dataset(cfg: &SynthConfig) -> Result<SynthDataset> {
    cfg.validate()?;
    let mesh = icosphere(cfg.order)?;
    let atlas = synthetic_atlas(&mesh, cfg.n_rois, cfg.hemisphere)?;
    let roi = atlas.vertices_of(cfg.target_roi);
    if roi.is_empty() {
        return Err(Error::Config(format!(
            "target ROI {} has no vertices at order {}",
            cfg.target_roi, cfg.order
        )));
    }
    let (basis, coef_std) = sh_design(&mesh, cfg.field_degree);
    let c = cfg.channels();
    let v = mesh.vertex_count();
    let mut template_rng = ChaCha8Rng::seed_from_u64(cfg.template_seed.unwrap_or(cfg.seed));
    let template: Vec<Vec<f64>> = (0..c)
        .map(|ch| {
            let f = random_field(&basis, &coef_std, cfg.template_scale, &mut template_rng);
            f.into_iter().map(|x| x + cfg.template_mean[ch]).collect()
        })
        .collect();
    let sigma = cfg.control_sigma();
    let noise = Normal::new(0.0, cfg.noise_std).map_err(|e| Error::Config(e.to_string()))?;
    let euler_dist = Normal::<f64>::new(-20.0, 5.0).expect("valid normal");
    let subjects = plan(cfg)
        .into_par_iter()
        .enumerate()
        .map(|(i, p)| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64 + 1);
            let age = rng.random_range(cfg.age_min..cfg.age_max);
            let sex = if rng.random_bool(cfg.sex_balance) { 1.0 } else { -1.0 };
            let euler = euler_dist.sample(&mut rng).round();
            let z = cfg.age_z(age);
            let mut values = vec![0.0; c * v];
            for ch in 0..c {
                let field = random_field(&basis, &coef_std, cfg.field_scale, &mut rng);
                for vi in 0..v {
                    let x = template[ch][vi] + field[vi] + cfg.age_slope[ch] * z + noise.sample(&mut rng);
                    values[vi * c + ch] = x;
                }
                if p.bumped {
                    for &vi in &roi {
                        values[vi * c + ch] += cfg.amplitude * sigma[ch];
                    }
                }
            }
            for x in &mut values {
                *x = *x as f32 as f64;
            }
            Ok(SynthSubject {
                record: SubjectRecord {
                    id: p.id,
                    hemisphere: cfg.hemisphere,
                    features: FeatureMap::from_vertex_major(c, v, cfg.order, values)?,
                    context: ContextVector { age, sex },
                    group: Some(p.group.to_string()),
                },
                split: p.split,
                euler,
                bumped: p.bumped,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SynthDataset {
        config: cfg.clone(),
        mesh,
        atlas,
        sigma,
        subjects,
    })
}

/// Ground truth written next to a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    pub target_roi: u32,
    pub amplitude: f64,
    pub sigma: Vec<f64>,
    pub bumped: Vec<String>,
}

/// Writes a cohort under `out_dir`: `atlas.csv`, `atlas_names.csv`,
/// `subjects/<id>.smmn`, `truth.json` and `manifest.json`.
pub fn synth_generate(cfg: &SynthConfig, out_dir: impl AsRef<Path>) -> Result<DatasetManifest> {
    let out_dir = out_dir.as_ref();
    let data = synth_dataset(cfg)?;
    let mut atlas_buf = Vec::new();
    let mut names_buf = Vec::new();
    write_atlas_csv(&data.atlas, &mut atlas_buf, Some(&mut names_buf))?;
    write_file(&out_dir.join("atlas.csv"), &atlas_buf)?;
    write_file(&out_dir.join("atlas_names.csv"), &names_buf)?;
    data.subjects
        .par_iter()
        .map(|s| {
            write_subject(
                out_dir.join(subject_path(&s.record.id)),
                &cfg.feature_names,
                &s.record.features,
            )
        })
        .collect::<Result<()>>()?;
    let truth = SynthTruth {
        target_roi: cfg.target_roi,
        amplitude: cfg.amplitude,
        sigma: data.sigma.clone(),
        bumped: data
            .subjects
            .iter()
            .filter(|s| s.bumped)
            .map(|s| s.record.id.clone())
            .collect(),
    };
    write_file(
        &out_dir.join("truth.json"),
        (serde_json::to_string_pretty(&truth)? + "\n").as_bytes(),
    )?;
    let manifest = DatasetManifest {
        seed: cfg.seed,
        order: cfg.order,
        hemisphere: cfg.hemisphere,
        channels: cfg.feature_names.clone(),
        atlas: Some(PathBuf::from("atlas.csv")),
        atlas_names: Some(PathBuf::from("atlas_names.csv")),
        subjects: data
            .subjects
            .iter()
            .map(|s| ManifestEntry {
                id: s.record.id.clone(),
                features: vec![subject_path(&s.record.id)],
                age: s.record.context.age,
                sex: s.record.context.sex,
                group: s.record.group.clone(),
                split: s.split,
                euler: Some(s.euler),
            })
            .collect(),
        base_dir: out_dir.to_path_buf(),
    };
    write_manifest(out_dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

fn subject_path(id: &str) -> PathBuf {
    PathBuf::from("subjects").join(format!("{id}.smmn"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atlas_covers_every_roi() {
        for order in 2..=4 {
            let mesh = icosphere(order).unwrap();
            let a = synthetic_atlas(&mesh, 16, Hemisphere::Left).unwrap();
            assert_eq!(a.roi_ids(), (1..=16).collect::<Vec<u32>>());
            assert!(!a.vertices_of(UNKNOWN_LABEL).is_empty());
        }
    }

    #[test]
    fn missing_target_roi_is_config_error() {
        let cfg = SynthConfig {
            target_roi: 17,
            ..Default::default()
        };
        assert!(matches!(synth_dataset(&cfg), Err(Error::Config(_))));
        let cfg = SynthConfig {
            amplitude: -1.0,
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn field_variance_matches_scale() {
        // average over vertices of Σ_k (coef_std_k · basis_k)² equals 1
        let mesh = icosphere(3).unwrap();
        let (basis, std) = sh_design(&mesh, 3);
        for b in basis.iter().step_by(37) {
            let var: f64 = b.iter().zip(&std).map(|(x, s)| (x * s).powi(2)).sum();
            assert!((var - 1.0).abs() < 1e-9, "{var}");
        }
    }
}
