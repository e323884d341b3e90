use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{anova_oneway, bh_correct};
use crate::anomaly::ScoreRow;
use crate::error::{Error, Result};
use crate::mesh::Hemisphere;

/// ANOVA result for one (hemisphere, channel, ROI). Statistic fields are
/// empty when a group had fewer than two usable scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub hemisphere: Hemisphere,
    pub channel: usize,
    pub roi_id: u32,
    pub roi_name: String,
    #[serde(rename = "nA")]
    pub n_a: usize,
    #[serde(rename = "nB")]
    pub n_b: usize,
    #[serde(rename = "F")]
    pub f: Option<f64>,
    pub p: Option<f64>,
    pub q: Option<f64>,
    pub eta2: Option<f64>,
    pub rejected: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectReport {
    /// Every (hemisphere, channel, ROI), ordered by that key.
    pub all: Vec<GroupStats>,
    /// Entries with `q < alpha`, largest η² first.
    pub filtered: Vec<GroupStats>,
}

type Key = (Hemisphere, usize, u32);

/// One ANOVA per (hemisphere, channel, ROI) between score sets `a` and `b`,
/// BH-corrected within each channel over all ROIs and hemispheres.
pub fn effect_report(a: &[ScoreRow], b: &[ScoreRow], alpha: f64) -> Result<EffectReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha {alpha} outside (0, 1)")));
    }
    let mut groups: BTreeMap<Key, (String, Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (rows, side) in [(a, 0), (b, 1)] {
        for r in rows {
            let entry = groups
                .entry((r.hemisphere, r.channel, r.roi_id))
                .or_insert_with(|| (r.roi_name.clone(), Vec::new(), Vec::new()));
            if let Some(s) = r.score.filter(|s| s.is_finite()) {
                if side == 0 {
                    entry.1.push(s);
                } else {
                    entry.2.push(s);
                }
            }
        }
    }
    let mut all = Vec::with_capacity(groups.len());
    for ((hemisphere, channel, roi_id), (roi_name, ga, gb)) in &groups {
        let tested = if ga.len() >= 2 && gb.len() >= 2 {
            Some(anova_oneway(ga, gb)?)
        } else {
            None
        };
        all.push(GroupStats {
            hemisphere: *hemisphere,
            channel: *channel,
            roi_id: *roi_id,
            roi_name: roi_name.clone(),
            n_a: ga.len(),
            n_b: gb.len(),
            f: tested.map(|t| t.f),
            p: tested.map(|t| t.p),
            q: None,
            eta2: tested.map(|t| t.eta2),
            rejected: false,
        });
    }
    let channels: BTreeSet<usize> = all.iter().map(|s| s.channel).collect();
    for ch in channels {
        let family: Vec<usize> = (0..all.len())
            .filter(|&i| all[i].channel == ch && all[i].p.is_some())
            .collect();
        let p: Vec<f64> = family.iter().map(|&i| all[i].p.unwrap()).collect();
        let (q, reject) = bh_correct(&p, alpha)?;
        for (k, &i) in family.iter().enumerate() {
            all[i].q = Some(q[k]);
            all[i].rejected = reject[k];
        }
    }
    let filtered = filter_effects(&all, alpha);
    Ok(EffectReport { all, filtered })
}

/// Rows with `q < alpha`, largest η² first (ties by hemisphere, channel,
/// ROI).
pub fn filter_effects(all: &[GroupStats], alpha: f64) -> Vec<GroupStats> {
    let mut filtered: Vec<GroupStats> = all.iter().filter(|s| s.q.is_some_and(|q| q < alpha)).cloned().collect();
    filtered.sort_by(|x, y| {
        y.eta2
            .unwrap_or(0.0)
            .total_cmp(&x.eta2.unwrap_or(0.0))
            .then((x.hemisphere, x.channel, x.roi_id).cmp(&(y.hemisphere, y.channel, y.roi_id)))
    });
    filtered
}

pub fn read_stats_csv(input: impl Read) -> Result<Vec<GroupStats>> {
    let mut r = csv::Reader::from_reader(input);
    let rows = r.deserialize().collect::<std::result::Result<Vec<GroupStats>, _>>()?;
    Ok(rows)
}

/// Writes the stats table (fixed column order) as CSV.
pub fn write_stats_csv(rows: &[GroupStats], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record([
            "hemisphere",
            "channel",
            "roi_id",
            "roi_name",
            "nA",
            "nB",
            "F",
            "p",
            "q",
            "eta2",
            "rejected",
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Horizontal bar chart of η² for the given rows.
pub fn write_stats_svg(rows: &[GroupStats], mut out: impl Write) -> Result<()> {
    const BAR_H: usize = 22;
    const LABEL_W: usize = 220;
    const PLOT_W: usize = 400;
    let height = 50 + BAR_H * rows.len().max(1);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{height}" font-family="sans-serif" font-size="12">"#,
        LABEL_W + PLOT_W + 80
    );
    let _ = writeln!(
        s,
        r#"<text x="10" y="20" font-size="14">eta squared (q &lt; 0.05)</text>"#
    );
    if rows.is_empty() {
        let _ = writeln!(s, r#"<text x="10" y="45">no regions pass the threshold</text>"#);
    }
    for (i, r) in rows.iter().enumerate() {
        let y = 35 + i * BAR_H;
        let eta = r.eta2.unwrap_or(0.0).clamp(0.0, 1.0);
        let label = format!("{} {} ch{}", r.hemisphere, escape(&r.roi_name), r.channel);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{label}</text>"#,
            LABEL_W - 6,
            y + 15
        );
        let _ = writeln!(
            s,
            r##"<rect x="{LABEL_W}" y="{}" width="{:.1}" height="{}" fill="#4a78b5"/>"##,
            y + 3,
            eta * PLOT_W as f64,
            BAR_H - 6
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{}">{eta:.3}</text>"#,
            LABEL_W as f64 + eta * PLOT_W as f64 + 4.0,
            y + 15
        );
    }
    s.push_str("</svg>\n");
    out.write_all(s.as_bytes()).map_err(|e| Error::io("<svg output>", e))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(subject_prefix: &str, n: usize, roi_scores: &[(u32, Hemisphere, fn(usize) -> f64)]) -> Vec<ScoreRow> {
        let mut out = Vec::new();
        for s in 0..n {
            for &(roi, hemi, f) in roi_scores {
                out.push(ScoreRow {
                    subject_id: format!("{subject_prefix}{s}"),
                    hemisphere: hemi,
                    channel: 0,
                    roi_id: roi,
                    roi_name: format!("roi_{roi}"),
                    n_vertices: 10,
                    score: Some(f(s)),
                });
            }
        }
        out
    }

    fn base(s: usize) -> f64 {
        ((s * 7919) % 101) as f64 / 100.0
    }

    fn shifted(s: usize) -> f64 {
        base(s) + 2.0
    }

    #[test]
    fn identical_groups_give_empty_report() {
        let spec = [
            (1, Hemisphere::Left, base as fn(usize) -> f64),
            (2, Hemisphere::Right, base),
        ];
        let a = rows("a", 10, &spec);
        let b = rows("b", 10, &spec);
        let r = effect_report(&a, &b, 0.05).unwrap();
        assert_eq!(r.all.len(), 2);
        assert!(r.filtered.is_empty());
    }

    #[test]
    fn perturbed_roi_is_found() {
        let a = rows(
            "a",
            12,
            &[
                (1, Hemisphere::Left, base),
                (2, Hemisphere::Left, base),
                (3, Hemisphere::Left, base),
            ],
        );
        let b = rows(
            "b",
            12,
            &[
                (1, Hemisphere::Left, base),
                (2, Hemisphere::Left, shifted),
                (3, Hemisphere::Left, base),
            ],
        );
        let r = effect_report(&a, &b, 0.05).unwrap();
        assert_eq!(r.all.len(), 3);
        assert_eq!(r.filtered.len(), 1);
        assert_eq!(r.filtered[0].roi_id, 2);
        assert!(r.filtered[0].rejected);
        let mut buf = Vec::new();
        write_stats_csv(&r.all, &mut buf).unwrap();
        assert_eq!(read_stats_csv(&buf[..]).unwrap(), r.all);
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("hemisphere,channel,roi_id,roi_name,nA,nB,F,p,q,eta2,rejected\n"));
        let mut svg = Vec::new();
        write_stats_svg(&r.filtered, &mut svg).unwrap();
        assert!(String::from_utf8(svg).unwrap().contains("<rect"));
    }

    #[test]
    fn small_groups_are_untested() {
        let a = rows("a", 1, &[(1, Hemisphere::Left, base)]);
        let b = rows("b", 5, &[(1, Hemisphere::Left, base)]);
        let r = effect_report(&a, &b, 0.05).unwrap();
        assert_eq!(r.all[0].p, None);
        assert_eq!(r.all[0].q, None);
        assert!(!r.all[0].rejected);
    }
}
