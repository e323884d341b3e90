//! Group comparison of anomaly scores: two-group one-way ANOVA with η²,
//! F-distribution p-values, Benjamini-Hochberg correction, and the filtered
//! effect report.

mod dist;
mod report;

pub use dist::{f_cdf, f_sf, ln_gamma};
pub use report::{
    effect_report, filter_effects, read_stats_csv, write_stats_csv, write_stats_svg, EffectReport, GroupStats,
};

use crate::error::{Error, Result};

/// Result of a one-way ANOVA.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anova {
    pub f: f64,
    pub p: f64,
    pub eta2: f64,
}

/// Two-group one-way ANOVA. Zero within-group variance gives `F = ∞, p = 0,
/// η² = 1` when the means differ and `F = 0, p = 1, η² = 0` otherwise.
pub fn anova_oneway(a: &[f64], b: &[f64]) -> Result<Anova> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Domain(format!(
            "each group needs at least 2 values, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(Error::Domain("ANOVA input contains non-finite values".into()));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (ma, mb) = (mean(a), mean(b));
    let n = (a.len() + b.len()) as f64;
    let grand = (ma * a.len() as f64 + mb * b.len() as f64) / n;
    let ss_between = a.len() as f64 * (ma - grand).powi(2) + b.len() as f64 * (mb - grand).powi(2);
    let ss_within = a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() + b.iter().map(|x| (x - mb).powi(2)).sum::<f64>();
    let df_b = 1.0;
    let df_w = n - 2.0;
    let ss_total = ss_between + ss_within;
    // relative guard against round-off in the sums of squares
    let scale = a.iter().chain(b).map(|x| x * x).sum::<f64>().max(f64::MIN_POSITIVE);
    let tiny = 1e-28 * scale;
    if ss_within <= tiny {
        return Ok(if ss_between <= tiny {
            Anova {
                f: 0.0,
                p: 1.0,
                eta2: 0.0,
            }
        } else {
            Anova {
                f: f64::INFINITY,
                p: 0.0,
                eta2: 1.0,
            }
        });
    }
    let f = (ss_between / df_b) / (ss_within / df_w);
    Ok(Anova {
        f,
        p: f_sf(f, df_b, df_w)?,
        eta2: ss_between / ss_total,
    })
}

/// Benjamini-Hochberg adjusted p-values in input order, with rejection flags
/// `q ≤ alpha`.
pub fn bh_correct(pvalues: &[f64], alpha: f64) -> Result<(Vec<f64>, Vec<bool>)> {
    if let Some(p) = pvalues.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Domain(format!("p-value {p} outside [0, 1]")));
    }
    let m = pvalues.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| pvalues[i].total_cmp(&pvalues[j]).then(i.cmp(&j)));
    let mut q = vec![0.0; m];
    let mut running = 1.0f64;
    for rank in (0..m).rev() {
        let i = order[rank];
        running = running.min(pvalues[i] * m as f64 / (rank + 1) as f64);
        q[i] = running.min(1.0);
    }
    let reject = q.iter().map(|&x| x <= alpha).collect();
    Ok((q, reject))
}

/// Area under the ROC curve for scores where `positives` should rank high
/// (Mann-Whitney statistic, ties count one half).
pub fn auroc(positives: &[f64], negatives: &[f64]) -> Result<f64> {
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::Domain("AUROC needs both classes".into()));
    }
    let mut wins = 0.0;
    for &p in positives {
        for &n in negatives {
            if p > n {
                wins += 1.0;
            } else if p == n {
                wins += 0.5;
            }
        }
    }
    Ok(wins / (positives.len() * negatives.len()) as f64)
}
