use rand::Rng;

use crate::conv::FeatureMap;
use crate::error::{Error, Result};

/// Sorted set of masked vertex indices.
pub type MaskSet = Vec<usize>;

/// Draws `round(fraction·V)` distinct vertices (at least one) uniformly
/// without replacement.
pub fn sample_mask(vertices: usize, fraction: f64, rng: &mut impl Rng) -> Result<MaskSet> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!("mask fraction {fraction} outside (0, 1)")));
    }
    if vertices == 0 {
        return Err(Error::Usage("cannot mask an empty vertex set".into()));
    }
    let n = ((fraction * vertices as f64).round() as usize).clamp(1, vertices);
    let mut idx = rand::seq::index::sample(rng, vertices, n).into_vec();
    idx.sort_unstable();
    Ok(idx)
}

/// Replaces the masked vertices' feature vectors by `token`.
pub fn apply_mask(x: &FeatureMap, mask: &[usize], token: &[f64]) -> Result<FeatureMap> {
    if token.len() != x.channels() {
        return Err(Error::Shape(format!(
            "mask token has {} entries, features have {} channels",
            token.len(),
            x.channels()
        )));
    }
    let mut out = x.clone();
    for &v in mask {
        if v >= x.vertices() {
            return Err(Error::Usage(format!(
                "mask index {v} out of range for {} vertices",
                x.vertices()
            )));
        }
        out.vertex_mut(v).copy_from_slice(token);
    }
    Ok(out)
}

/// Channel-summed ℓ1 residual averaged over the masked vertices.
pub fn loss_l1(x_hat: &FeatureMap, x: &FeatureMap, mask: &[usize]) -> Result<f64> {
    check_pair(x_hat, x)?;
    if mask.is_empty() {
        return Err(Error::Usage("ℓ1 loss over an empty mask".into()));
    }
    let mut total = 0.0;
    for &v in mask {
        if v >= x.vertices() {
            return Err(Error::Usage(format!(
                "mask index {v} out of range for {} vertices",
                x.vertices()
            )));
        }
        total += x_hat
            .vertex(v)
            .iter()
            .zip(x.vertex(v))
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>();
    }
    Ok(total / mask.len() as f64)
}

/// Subgradient of [`loss_l1`] w.r.t. `x_hat`; zero at exact agreement.
pub fn loss_l1_grad(x_hat: &FeatureMap, x: &FeatureMap, mask: &[usize]) -> Result<FeatureMap> {
    check_pair(x_hat, x)?;
    if mask.is_empty() {
        return Err(Error::Usage("ℓ1 loss over an empty mask".into()));
    }
    let w = 1.0 / mask.len() as f64;
    let mut grad = FeatureMap::zeros(x.channels(), x.vertices(), x.level());
    for &v in mask {
        let (a, b) = (x_hat.vertex(v), x.vertex(v));
        for (g, (p, q)) in grad.vertex_mut(v).iter_mut().zip(a.iter().zip(b)) {
            let d = p - q;
            *g = if d > 0.0 {
                w
            } else if d < 0.0 {
                -w
            } else {
                0.0
            };
        }
    }
    Ok(grad)
}

fn check_pair(a: &FeatureMap, b: &FeatureMap) -> Result<()> {
    if a.channels() != b.channels() || a.vertices() != b.vertices() {
        return Err(Error::Shape(format!(
            "reconstruction is {}x{}, target is {}x{}",
            a.channels(),
            a.vertices(),
            b.channels(),
            b.vertices()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn half_of_42() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = sample_mask(42, 0.5, &mut rng).unwrap();
        assert_eq!(m.len(), 21);
        assert!(m.windows(2).all(|w| w[0] < w[1]));
        assert!(m.iter().all(|&v| v < 42));
    }

    #[test]
    fn tiny_fraction_keeps_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(sample_mask(42, 1e-6, &mut rng).unwrap().len(), 1);
    }

    #[test]
    fn seeded_masks_repeat() {
        let a = sample_mask(642, 0.5, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = sample_mask(642, 0.5, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bad_fraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(sample_mask(42, 0.0, &mut rng).is_err());
        assert!(sample_mask(42, 1.0, &mut rng).is_err());
    }

    fn ramp() -> FeatureMap {
        FeatureMap::from_vertex_major(2, 5, 0, (0..10).map(|i| i as f64 + 1.0).collect()).unwrap()
    }

    #[test]
    fn mask_application() {
        let x = ramp();
        assert_eq!(apply_mask(&x, &[], &[9.0, 9.0]).unwrap(), x);
        let full = apply_mask(&x, &[0, 1, 2, 3, 4], &[7.0, -1.0]).unwrap();
        assert!((0..5).all(|v| full.vertex(v) == [7.0, -1.0]));
        let one = apply_mask(&x, &[3], &[0.0, 0.0]).unwrap();
        for v in 0..5 {
            if v == 3 {
                assert_eq!(one.vertex(v), &[0.0, 0.0]);
            } else {
                assert_eq!(one.vertex(v), x.vertex(v));
            }
        }
        assert!(apply_mask(&x, &[5], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn l1_examples() {
        let x = ramp();
        assert_eq!(loss_l1(&x, &x, &[0, 2]).unwrap(), 0.0);
        let a = FeatureMap::from_vertex_major(1, 3, 0, vec![2.0, 0.0, 0.0]).unwrap();
        let b = FeatureMap::from_vertex_major(1, 3, 0, vec![5.0, 0.0, 0.0]).unwrap();
        assert_eq!(loss_l1(&a, &b, &[0]).unwrap(), 3.0);
        // channel-summed deviations 1 and 3
        let a = FeatureMap::from_vertex_major(2, 2, 0, vec![0.5, 0.5, 1.0, 2.0]).unwrap();
        let b = FeatureMap::zeros(2, 2, 0);
        assert_eq!(loss_l1(&a, &b, &[0, 1]).unwrap(), 2.0);
        assert!(matches!(loss_l1(&a, &b, &[]), Err(Error::Usage(_))));
    }

    proptest! {
        #[test]
        fn mask_size_and_range(v in 1usize..700, frac in 0.01f64..0.99, seed in 0u64..100) {
            let m = sample_mask(v, frac, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let expected = ((frac * v as f64).round() as usize).max(1);
            prop_assert_eq!(m.len(), expected);
            prop_assert!(m.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(m.iter().all(|&i| i < v));
        }
    }
}
