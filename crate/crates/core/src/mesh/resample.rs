use super::grid::FacetGrid;
use super::{det3, dot, norm, normalize, sub, AtlasLabels, TriMesh, Vec3};
use crate::error::{Error, Result};

const CONTAINMENT_SLACK: f64 = 1e-12;
const WEIGHT_SNAP: f64 = 1e-11;
// weights this close count as equal when picking a label
const LABEL_TIE: f64 = 1e-9;

/// Precomputed source facet and barycentric weights for every destination
/// vertex. Reusable across channels and label maps.
#[derive(Debug, Clone, PartialEq)]
pub struct BarycentricMap {
    src_vertices: usize,
    entries: Vec<([usize; 3], [f64; 3])>,
}

/// Barycentric weights of direction `d` in the spherical triangle `(a, b, c)`
/// under central projection. All three are non-negative when `d` lies inside.
fn raw_weights(a: Vec3, b: Vec3, c: Vec3, d: Vec3) -> [f64; 3] {
    [det3(d, b, c), det3(a, d, c), det3(a, b, d)]
}

fn finish_weights(raw: [f64; 3]) -> [f64; 3] {
    let mut w = raw.map(|x| x.max(0.0));
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return [1.0 / 3.0; 3];
    }
    for x in w.iter_mut() {
        if *x < WEIGHT_SNAP * total {
            *x = 0.0;
        }
    }
    let total: f64 = w.iter().sum();
    w.map(|x| x / total)
}

impl BarycentricMap {
    pub fn build(src: &TriMesh, dst: &TriMesh) -> Self {
        let grid = FacetGrid::new(src);
        let entries = dst
            .vertices()
            .iter()
            .map(|&p| {
                let d = normalize(p);
                let f = locate(src, &grid, d);
                let tri = src.facets()[f];
                let [a, b, c] = tri.map(|i| src.vertex(i));
                (tri, finish_weights(raw_weights(a, b, c, d)))
            })
            .collect();
        Self {
            src_vertices: src.vertex_count(),
            entries,
        }
    }

    pub fn dst_count(&self) -> usize {
        self.entries.len()
    }

    /// Source vertex indices and weights for destination vertex `v`.
    pub fn weights(&self, v: usize) -> ([usize; 3], [f64; 3]) {
        self.entries[v]
    }

    pub fn apply(&self, values: &[f64]) -> Result<Vec<f64>> {
        if values.len() != self.src_vertices {
            return Err(Error::Shape(format!(
                "{} values for a source mesh with {} vertices",
                values.len(),
                self.src_vertices
            )));
        }
        Ok(self
            .entries
            .iter()
            .map(|(tri, w)| {
                let mut acc = 0.0;
                for k in 0..3 {
                    if w[k] != 0.0 {
                        acc += w[k] * values[tri[k]];
                    }
                }
                acc
            })
            .collect())
    }

    /// Label of the source vertex with the largest weight; ties (within 1e-9)
    /// go to the lowest source vertex index.
    pub fn apply_labels(&self, labels: &[u32]) -> Result<Vec<u32>> {
        if labels.len() != self.src_vertices {
            return Err(Error::Shape(format!(
                "{} labels for a source mesh with {} vertices",
                labels.len(),
                self.src_vertices
            )));
        }
        Ok(self
            .entries
            .iter()
            .map(|(tri, w)| {
                let mut best = 0;
                for k in 1..3 {
                    let tie = (w[k] - w[best]).abs() <= LABEL_TIE;
                    if (!tie && w[k] > w[best]) || (tie && tri[k] < tri[best]) {
                        best = k;
                    }
                }
                labels[tri[best]]
            })
            .collect())
    }
}

fn contains(src: &TriMesh, f: usize, d: Vec3) -> bool {
    let [a, b, c] = src.facets()[f].map(|i| src.vertex(i));
    if dot(src.facet_centroid(f), d) <= 0.0 {
        return false;
    }
    raw_weights(a, b, c, d).iter().all(|&w| w >= -CONTAINMENT_SLACK)
}

/// Facet whose spherical triangle contains `d`; lowest facet index among
/// several (edge or vertex coincidence). Falls back to the nearest centroid.
fn locate(src: &TriMesh, grid: &FacetGrid, d: Vec3) -> usize {
    let candidates = grid.candidates(d);
    if let Some(f) = candidates.iter().copied().filter(|&f| contains(src, f, d)).min() {
        return f;
    }
    let pool: Box<dyn Iterator<Item = usize>> = if candidates.is_empty() {
        Box::new(0..src.facet_count())
    } else {
        Box::new(candidates.iter().copied())
    };
    pool.min_by(|&x, &y| {
        let dx = norm(sub(normalize(src.facet_centroid(x)), d));
        let dy = norm(sub(normalize(src.facet_centroid(y)), d));
        dx.total_cmp(&dy).then(x.cmp(&y))
    })
    .expect("source mesh has facets")
}

/// Barycentric resampling of per-vertex values from `src` onto the vertices
/// of `dst`.
pub fn resample_barycentric(src: &TriMesh, src_values: &[f64], dst: &TriMesh) -> Result<Vec<f64>> {
    BarycentricMap::build(src, dst).apply(src_values)
}

/// Nearest-by-weight label transfer onto `dst`.
pub fn resample_labels(src: &TriMesh, src_labels: &AtlasLabels, dst: &TriMesh) -> Result<AtlasLabels> {
    let labels = BarycentricMap::build(src, dst).apply_labels(src_labels.labels())?;
    AtlasLabels::new(labels, src_labels.names().clone(), src_labels.hemisphere())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{add, icosphere, scale, Hemisphere};
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    #[test]
    fn self_resampling_is_identity() {
        let m = icosphere(3).unwrap();
        let x: Vec<f64> = (0..m.vertex_count()).map(|i| (i as f64 * 0.37).sin()).collect();
        let y = resample_barycentric(&m, &x, &m).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn coincident_vertices_copy_values() {
        let src = icosphere(2).unwrap();
        let dst = icosphere(1).unwrap();
        let x: Vec<f64> = (0..src.vertex_count()).map(|i| i as f64 * 1.5 - 7.0).collect();
        let y = resample_barycentric(&src, &x, &dst).unwrap();
        assert_eq!(&x[..42], &y[..]);
    }

    #[test]
    fn edge_midpoint_gives_mean() {
        let src = icosphere(1).unwrap();
        let dst = icosphere(2).unwrap();
        let x: Vec<f64> = (0..src.vertex_count()).map(|i| (i * i) as f64).collect();
        let y = resample_barycentric(&src, &x, &dst).unwrap();
        for (rank, &(a, b)) in src.edges().iter().enumerate() {
            let expected = 0.5 * (x[a] + x[b]);
            assert!((y[42 + rank] - expected).abs() < 1e-9 * expected.abs().max(1.0));
        }
    }

    #[test]
    fn constant_field_preserved() {
        let src = icosphere(3).unwrap();
        let dst = icosphere(2)
            .unwrap()
            .rotated(&[[0.0, 1.0, 0.0], [-0.6, 0.0, 0.8], [0.8, 0.0, 0.6]]);
        let y = resample_barycentric(&src, &vec![2.5; src.vertex_count()], &dst).unwrap();
        for v in y {
            assert!((v - 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn weights_nonnegative_and_normalized() {
        let src = icosphere(2).unwrap();
        let dst = icosphere(3)
            .unwrap()
            .rotated(&[[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
        let map = BarycentricMap::build(&src, &dst);
        for v in 0..map.dst_count() {
            let (_, w) = map.weights(v);
            assert!(w.iter().all(|&x| x >= 0.0));
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn wrong_length_is_shape_error() {
        let m = icosphere(1).unwrap();
        assert!(matches!(resample_barycentric(&m, &[1.0; 3], &m), Err(Error::Shape(_))));
    }

    #[test]
    fn label_majority_weight() {
        // one spherical triangle with a query point at weights (0.5, 0.3, 0.2)
        let a = normalize([1.0, 0.0, 0.1]);
        let b = normalize([0.0, 1.0, 0.1]);
        let c = normalize([0.0, 0.0, 1.0]);
        // central projection preserves planar barycentric ratios
        let p = add(add(scale(a, 0.5), scale(b, 0.3)), scale(c, 0.2));
        let d = normalize(p);
        let back = normalize([-1.0, -1.0, -1.0]);
        let src = TriMesh::new(vec![a, b, c, back], vec![[0, 1, 2], [0, 3, 1], [1, 3, 2], [0, 2, 3]]).unwrap();
        let dst = TriMesh::new(vec![d, a, b], vec![]).unwrap();
        let map = BarycentricMap::build(&src, &dst);
        let (tri, w) = map.weights(0);
        assert_eq!(tri, [0, 1, 2]);
        assert!((w[0] - 0.5).abs() < 1e-12 && (w[1] - 0.3).abs() < 1e-12 && (w[2] - 0.2).abs() < 1e-12);
        let atlas = AtlasLabels::new(vec![5, 5, 9, 0], BTreeMap::new(), Hemisphere::Left).unwrap();
        let out = resample_labels(&src, &atlas, &dst).unwrap();
        assert_eq!(out.labels()[0], 5);
    }

    #[test]
    fn labels_single_region_and_ties() {
        let src = icosphere(1).unwrap();
        let dst = icosphere(2).unwrap();
        let atlas = AtlasLabels::new(vec![3; 42], BTreeMap::new(), Hemisphere::Right).unwrap();
        let out = resample_labels(&src, &atlas, &dst).unwrap();
        assert!(out.labels().iter().all(|&l| l == 3));
        // midpoints take the label of the lower endpoint
        let labels: Vec<u32> = (0..42).collect();
        let atlas = AtlasLabels::new(labels, BTreeMap::new(), Hemisphere::Left).unwrap();
        let out = resample_labels(&src, &atlas, &dst).unwrap();
        for (rank, &(a, _)) in src.edges().iter().enumerate() {
            assert_eq!(out.labels()[42 + rank], a as u32);
        }
        assert_eq!(&out.labels()[..42], atlas.labels());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn resampling_is_linear(seed in 0u64..1000, alpha in -3.0f64..3.0, beta in -3.0f64..3.0) {
            let src = icosphere(2).unwrap();
            let dst = icosphere(3).unwrap().rotated(&[[0.6, 0.0, 0.8], [0.0, 1.0, 0.0], [-0.8, 0.0, 0.6]]);
            let map = BarycentricMap::build(&src, &dst);
            let n = src.vertex_count();
            let x: Vec<f64> = (0..n).map(|i| ((i as u64 * 31 + seed) as f64).sin()).collect();
            let y: Vec<f64> = (0..n).map(|i| ((i as u64 * 17 + seed * 7) as f64).cos()).collect();
            let z: Vec<f64> = x.iter().zip(&y).map(|(a, b)| alpha * a + beta * b).collect();
            let rx = map.apply(&x).unwrap();
            let ry = map.apply(&y).unwrap();
            let rz = map.apply(&z).unwrap();
            for i in 0..rz.len() {
                prop_assert!((rz[i] - (alpha * rx[i] + beta * ry[i])).abs() < 1e-9);
            }
        }
    }
}
