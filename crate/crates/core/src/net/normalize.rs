use log::warn;
use serde::{Deserialize, Serialize};

use super::{ContextVector, SubjectRecord, CONTEXT_DIM};
use crate::conv::FeatureMap;
use crate::error::{Error, Result};

const MIN_STD: f64 = 1e-12;

/// Per-channel feature z-scoring plus the age z-scoring of the context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub age_mean: f64,
    pub age_std: f64,
}

impl InputStats {
    pub fn identity(channels: usize) -> Self {
        Self {
            mean: vec![0.0; channels],
            std: vec![1.0; channels],
            age_mean: 0.0,
            age_std: 1.0,
        }
    }

    /// Fits the statistics over every vertex of every subject.
    pub fn fit(subjects: &[SubjectRecord]) -> Result<Self> {
        let first = subjects
            .first()
            .ok_or_else(|| Error::Usage("cannot fit normalization on an empty dataset".into()))?;
        let c = first.features.channels();
        let mut sum = vec![0.0; c];
        let mut count = 0usize;
        for s in subjects {
            if s.features.channels() != c {
                return Err(Error::Shape(format!(
                    "subject {} has {} channels, expected {c}",
                    s.id,
                    s.features.channels()
                )));
            }
            for v in 0..s.features.vertices() {
                for (acc, x) in sum.iter_mut().zip(s.features.vertex(v)) {
                    *acc += x;
                }
            }
            count += s.features.vertices();
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
        let mut sq = vec![0.0; c];
        for s in subjects {
            for v in 0..s.features.vertices() {
                for ((acc, x), m) in sq.iter_mut().zip(s.features.vertex(v)).zip(&mean) {
                    *acc += (x - m) * (x - m);
                }
            }
        }
        let std = sq
            .iter()
            .enumerate()
            .map(|(ch, s)| {
                let sd = (s / count as f64).sqrt();
                if sd < MIN_STD {
                    warn!("channel {ch} has zero variance; using std = 1");
                    1.0
                } else {
                    sd
                }
            })
            .collect();
        let n = subjects.len() as f64;
        let age_mean = subjects.iter().map(|s| s.context.age).sum::<f64>() / n;
        let age_var = subjects.iter().map(|s| (s.context.age - age_mean).powi(2)).sum::<f64>() / n;
        let age_std = if age_var.sqrt() < MIN_STD { 1.0 } else { age_var.sqrt() };
        Ok(Self {
            mean,
            std,
            age_mean,
            age_std,
        })
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    pub fn normalize(&self, x: &FeatureMap) -> Result<FeatureMap> {
        self.check(x)?;
        let mut out = x.clone();
        let c = self.channels();
        for (i, val) in out.values_mut().iter_mut().enumerate() {
            *val = (*val - self.mean[i % c]) / self.std[i % c];
        }
        Ok(out)
    }

    pub fn denormalize(&self, x: &FeatureMap) -> Result<FeatureMap> {
        self.check(x)?;
        let mut out = x.clone();
        let c = self.channels();
        for (i, val) in out.values_mut().iter_mut().enumerate() {
            *val = *val * self.std[i % c] + self.mean[i % c];
        }
        Ok(out)
    }

    /// Network-side context features: `[z(age), sex]`.
    pub fn context_features(&self, ctx: &ContextVector) -> Result<[f64; CONTEXT_DIM]> {
        if !ctx.age.is_finite() || !ctx.sex.is_finite() {
            return Err(Error::Domain("context values must be finite".into()));
        }
        Ok([(ctx.age - self.age_mean) / self.age_std, ctx.sex])
    }

    fn check(&self, x: &FeatureMap) -> Result<()> {
        if x.channels() != self.channels() {
            return Err(Error::Shape(format!(
                "normalization has {} channels, features have {}",
                self.channels(),
                x.channels()
            )));
        }
        Ok(())
    }
}

/// Fits [`InputStats`] on `subjects` and returns them with the z-scored
/// feature maps.
pub fn normalize_features(subjects: &[SubjectRecord]) -> Result<(InputStats, Vec<FeatureMap>)> {
    let stats = InputStats::fit(subjects)?;
    let maps = subjects
        .iter()
        .map(|s| stats.normalize(&s.features))
        .collect::<Result<Vec<_>>>()?;
    Ok((stats, maps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Hemisphere;

    fn subject(id: &str, ch0: Vec<f64>, ch1: Vec<f64>, age: f64) -> SubjectRecord {
        SubjectRecord {
            id: id.into(),
            hemisphere: Hemisphere::Left,
            features: FeatureMap::from_channels(&[ch0, ch1], 0).unwrap(),
            context: ContextVector { age, sex: 1.0 },
            group: None,
        }
    }

    #[test]
    fn constant_channel_clamps_std() {
        let s = [subject("a", vec![4.0; 3], vec![1.0, 2.0, 3.0], 60.0)];
        let (stats, maps) = normalize_features(&s).unwrap();
        assert_eq!(stats.std[0], 1.0);
        assert!(maps[0].channel(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn round_trip() {
        let s = [
            subject("a", vec![4.0, -1.0, 2.5], vec![1.0, 2.0, 3.0], 60.0),
            subject("b", vec![0.3, 9.0, 2.0], vec![-1.0, 0.0, 7.0], 70.0),
        ];
        let (stats, maps) = normalize_features(&s).unwrap();
        for (m, subj) in maps.iter().zip(&s) {
            let back = stats.denormalize(m).unwrap();
            for (a, b) in back.values().iter().zip(subj.features.values()) {
                assert!((a - b).abs() < 1e-9);
            }
        }
        let z = stats.context_features(&s[1].context).unwrap();
        assert!((z[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stats_come_from_train_split_only() {
        let train = [
            subject("a", vec![1.0, 2.0, 3.0], vec![0.0, 0.0, 1.0], 50.0),
            subject("b", vec![5.0, 6.0, 7.0], vec![1.0, 1.0, 1.0], 80.0),
        ];
        let val = subject("c", vec![100.0, 200.0, 300.0], vec![-5.0, 5.0, 0.0], 20.0);
        let stats = InputStats::fit(&train).unwrap();
        // independent recomputation over the six training values of channel 0
        let vals = [1.0, 2.0, 3.0, 5.0, 6.0, 7.0];
        let mean = vals.iter().sum::<f64>() / 6.0;
        let std = (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 6.0).sqrt();
        assert!((stats.mean[0] - mean).abs() < 1e-12);
        assert!((stats.std[0] - std).abs() < 1e-12);
        let zv = stats.normalize(&val.features).unwrap();
        assert!((zv.get(0, 0) - (100.0 - mean) / std).abs() < 1e-12);
    }

    #[test]
    fn empty_dataset() {
        assert!(matches!(InputStats::fit(&[]), Err(Error::Usage(_))));
    }
}
