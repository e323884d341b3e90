//! ROI-masked anomaly scoring: each atlas region is masked with the learned
//! token, reconstructed from the visible cortex plus the subject context, and
//! scored by its mean ℓ1 residual.

use std::collections::BTreeSet;
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conv::FeatureMap;
use crate::error::{Error, Result};
use crate::mesh::{AtlasLabels, Hemisphere, UNKNOWN_LABEL};
use crate::net::{apply_mask, MmnModel, SubjectRecord};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DetectOptions {
    /// Report residuals in the original feature units instead of z-scores.
    pub raw_space: bool,
}

/// Reconstruction of one masked ROI.
#[derive(Debug, Clone, PartialEq)]
pub struct RoiDetection {
    pub roi_id: u32,
    /// ROI vertices, ascending.
    pub vertices: Vec<usize>,
    /// Per-channel score `(1/|R|) Σ_{v∈R} |x̂_c(v) − x_c(v)|`.
    pub scores: Vec<f64>,
    /// Normalized-space reconstruction at the ROI vertices, vertex-major.
    pub reconstruction: Vec<f64>,
}

impl RoiDetection {
    /// Channel-summed score.
    pub fn total(&self) -> f64 {
        self.scores.iter().sum()
    }
}

/// One row of an anomaly report: fixed CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub subject_id: String,
    pub hemisphere: Hemisphere,
    pub channel: usize,
    pub roi_id: u32,
    pub roi_name: String,
    pub n_vertices: usize,
    /// Empty when the ROI has no vertices on this mesh.
    pub score: Option<f64>,
}

/// Per-ROI, per-channel scores of one subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyReport {
    pub subject_id: String,
    pub hemisphere: Hemisphere,
    pub channels: usize,
    /// Sorted by ROI id, then channel.
    pub rows: Vec<ScoreRow>,
}

impl AnomalyReport {
    pub fn score(&self, roi_id: u32, channel: usize) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.roi_id == roi_id && r.channel == channel)
            .and_then(|r| r.score)
    }
}

fn check_subject(model: &MmnModel, subject: &SubjectRecord, atlas: &AtlasLabels) -> Result<()> {
    let cfg = model.config();
    if subject.features.level() != cfg.input_order || subject.features.vertices() != model.input_vertices() {
        return Err(Error::Shape(format!(
            "subject {} has {} vertices at order {}, model expects {} at order {}",
            subject.id,
            subject.features.vertices(),
            subject.features.level(),
            model.input_vertices(),
            cfg.input_order
        )));
    }
    if atlas.vertex_count() != subject.features.vertices() {
        return Err(Error::Shape(format!(
            "atlas has {} vertices, subject {} has {}",
            atlas.vertex_count(),
            subject.id,
            subject.features.vertices()
        )));
    }
    Ok(())
}

/// Masks the vertices of `roi_id`, reconstructs them and scores the
/// residual. `Ok(None)` when the ROI has no vertices.
pub fn detect_roi(
    model: &MmnModel,
    subject: &SubjectRecord,
    atlas: &AtlasLabels,
    roi_id: u32,
    opts: DetectOptions,
) -> Result<Option<RoiDetection>> {
    check_subject(model, subject, atlas)?;
    let x = model.stats().normalize(&subject.features)?;
    detect_normalized(model, &x, subject, atlas, roi_id, opts)
}

fn detect_normalized(
    model: &MmnModel,
    x: &FeatureMap,
    subject: &SubjectRecord,
    atlas: &AtlasLabels,
    roi_id: u32,
    opts: DetectOptions,
) -> Result<Option<RoiDetection>> {
    let vertices = atlas.vertices_of(roi_id);
    if vertices.is_empty() {
        return Ok(None);
    }
    let xm = apply_mask(x, &vertices, model.mask_token())?;
    let x_hat = model.forward(&xm, &subject.context)?;
    let c = x.channels();
    let mut scores = vec![0.0; c];
    let mut reconstruction = Vec::with_capacity(vertices.len() * c);
    for &v in &vertices {
        for ch in 0..c {
            let r = x_hat.get(ch, v);
            reconstruction.push(r);
            scores[ch] += (r - x.get(ch, v)).abs();
        }
    }
    for (ch, s) in scores.iter_mut().enumerate() {
        *s /= vertices.len() as f64;
        if opts.raw_space {
            *s *= model.stats().std[ch];
        }
    }
    Ok(Some(RoiDetection {
        roi_id,
        vertices,
        scores,
        reconstruction,
    }))
}

/// ROI ids scored for an atlas: every labeled or named id except unknown.
pub fn scored_rois(atlas: &AtlasLabels) -> Vec<u32> {
    let ids: BTreeSet<u32> = atlas
        .roi_ids()
        .into_iter()
        .chain(atlas.names().keys().copied())
        .filter(|&id| id != UNKNOWN_LABEL)
        .collect();
    ids.into_iter().collect()
}

/// Scores every ROI of `atlas` (one forward pass each).
pub fn detect_all(model: &MmnModel, subject: &SubjectRecord, atlas: &AtlasLabels) -> Result<AnomalyReport> {
    detect_all_with(model, subject, atlas, DetectOptions::default())
}

pub fn detect_all_with(
    model: &MmnModel,
    subject: &SubjectRecord,
    atlas: &AtlasLabels,
    opts: DetectOptions,
) -> Result<AnomalyReport> {
    check_subject(model, subject, atlas)?;
    let x = model.stats().normalize(&subject.features)?;
    let rois = scored_rois(atlas);
    let detections: Vec<Option<RoiDetection>> = rois
        .par_iter()
        .map(|&roi| detect_normalized(model, &x, subject, atlas, roi, opts))
        .collect::<Result<_>>()?;
    let c = x.channels();
    let mut rows = Vec::with_capacity(rois.len() * c);
    for (&roi, det) in rois.iter().zip(&detections) {
        for ch in 0..c {
            rows.push(ScoreRow {
                subject_id: subject.id.clone(),
                hemisphere: atlas.hemisphere(),
                channel: ch,
                roi_id: roi,
                roi_name: atlas.name(roi),
                n_vertices: det.as_ref().map_or(0, |d| d.vertices.len()),
                score: det.as_ref().map(|d| d.scores[ch]),
            });
        }
    }
    Ok(AnomalyReport {
        subject_id: subject.id.clone(),
        hemisphere: atlas.hemisphere(),
        channels: c,
        rows,
    })
}

/// Dense subject × ROI × channel score array; missing entries are NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    pub hemisphere: Hemisphere,
    pub subject_ids: Vec<String>,
    pub roi_ids: Vec<u32>,
    pub channels: usize,
    values: Vec<f64>,
}

impl ScoreMatrix {
    pub fn get(&self, subject: usize, roi: usize, channel: usize) -> f64 {
        self.values[(subject * self.roi_ids.len() + roi) * self.channels + channel]
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.subject_ids.len(), self.roi_ids.len(), self.channels)
    }
}

/// Scores of a cohort plus the subjects that could not be scored.
#[derive(Debug)]
pub struct CohortScores {
    pub matrix: ScoreMatrix,
    pub reports: Vec<AnomalyReport>,
    pub failures: Vec<(String, Error)>,
}

impl CohortScores {
    pub fn rows(&self) -> Vec<ScoreRow> {
        self.reports.iter().flat_map(|r| r.rows.iter().cloned()).collect()
    }
}

/// Runs [`detect_all`] for each subject. Rows keep the input order; subjects
/// that fail (e.g. level mismatch) are reported in `failures`.
pub fn cohort_scores(model: &MmnModel, subjects: &[SubjectRecord], atlas: &AtlasLabels) -> CohortScores {
    cohort_scores_with(model, subjects, atlas, DetectOptions::default())
}

pub fn cohort_scores_with(
    model: &MmnModel,
    subjects: &[SubjectRecord],
    atlas: &AtlasLabels,
    opts: DetectOptions,
) -> CohortScores {
    let results: Vec<Result<AnomalyReport>> = subjects
        .par_iter()
        .map(|s| detect_all_with(model, s, atlas, opts))
        .collect();
    let rois = scored_rois(atlas);
    let channels = model.config().in_channels;
    let mut reports = Vec::new();
    let mut failures = Vec::new();
    for (s, r) in subjects.iter().zip(results) {
        match r {
            Ok(rep) => reports.push(rep),
            Err(e) => failures.push((s.id.clone(), e)),
        }
    }
    let mut values = Vec::with_capacity(reports.len() * rois.len() * channels);
    for rep in &reports {
        for row in &rep.rows {
            values.push(row.score.unwrap_or(f64::NAN));
        }
    }
    CohortScores {
        matrix: ScoreMatrix {
            hemisphere: atlas.hemisphere(),
            subject_ids: reports.iter().map(|r| r.subject_id.clone()).collect(),
            roi_ids: rois,
            channels,
            values,
        },
        reports,
        failures,
    }
}

pub fn write_scores_csv(rows: &[ScoreRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record([
            "subject_id",
            "hemisphere",
            "channel",
            "roi_id",
            "roi_name",
            "n_vertices",
            "score",
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_scores_csv(input: impl Read) -> Result<Vec<ScoreRow>> {
    let mut r = csv::Reader::from_reader(input);
    let rows = r.deserialize().collect::<std::result::Result<Vec<ScoreRow>, _>>()?;
    Ok(rows)
}

pub fn write_reports_json(reports: &[AnomalyReport], out: impl Write) -> Result<()> {
    serde_json::to_writer_pretty(out, reports)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_with_missing() {
        let rows = vec![
            ScoreRow {
                subject_id: "s1".into(),
                hemisphere: Hemisphere::Left,
                channel: 0,
                roi_id: 3,
                roi_name: "roi_3".into(),
                n_vertices: 12,
                score: Some(0.25),
            },
            ScoreRow {
                subject_id: "s1".into(),
                hemisphere: Hemisphere::Left,
                channel: 0,
                roi_id: 4,
                roi_name: "gap".into(),
                n_vertices: 0,
                score: None,
            },
        ];
        let mut buf = Vec::new();
        write_scores_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("subject_id,hemisphere,channel,roi_id,roi_name,n_vertices,score\n"));
        assert!(text.contains("s1,left,0,4,gap,0,\n"));
        assert_eq!(read_scores_csv(&buf[..]).unwrap(), rows);
    }
}
