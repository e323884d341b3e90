use std::collections::HashMap;

use super::{dot, norm, normalize, sub, TriMesh, Vec3};

type CellKey = (i32, i32, i32);

/// Uniform hashed grid over 3D space; only occupied cells are stored.
#[derive(Debug)]
struct Cells {
    size: f64,
    map: HashMap<CellKey, Vec<usize>>,
}

impl Cells {
    fn new(size: f64) -> Self {
        Self {
            size,
            map: HashMap::new(),
        }
    }

    fn key(&self, p: Vec3) -> CellKey {
        (
            (p[0] / self.size).floor() as i32,
            (p[1] / self.size).floor() as i32,
            (p[2] / self.size).floor() as i32,
        )
    }

    fn insert_box(&mut self, lo: Vec3, hi: Vec3, id: usize) {
        let a = self.key(lo);
        let b = self.key(hi);
        for i in a.0..=b.0 {
            for j in a.1..=b.1 {
                for k in a.2..=b.2 {
                    self.map.entry((i, j, k)).or_default().push(id);
                }
            }
        }
    }
}

/// Exact nearest-point queries over a fixed point set.
#[derive(Debug)]
pub(crate) struct PointGrid<'a> {
    points: &'a [Vec3],
    cells: Cells,
}

impl<'a> PointGrid<'a> {
    pub fn new(points: &'a [Vec3]) -> Self {
        // ~2 points per cell on a unit sphere
        let n = points.len().max(1) as f64;
        let size = (4.0 * std::f64::consts::PI * 2.0 / n).sqrt().clamp(1e-3, 1.0);
        let mut cells = Cells::new(size);
        for (i, &p) in points.iter().enumerate() {
            cells.insert_box(p, p, i);
        }
        Self { points, cells }
    }

    /// Index of the nearest point by Euclidean distance. Distances equal up to
    /// a relative 1e-9 count as ties and resolve to the lowest index.
    pub fn nearest(&self, q: Vec3) -> usize {
        let c = self.cells.key(q);
        let mut best: Option<(f64, usize)> = None;
        let mut candidates: Vec<(f64, usize)> = Vec::new();
        let mut r: i32 = 0;
        loop {
            for i in -r..=r {
                for j in -r..=r {
                    for k in -r..=r {
                        if i.abs().max(j.abs()).max(k.abs()) != r {
                            continue;
                        }
                        if let Some(ids) = self.cells.map.get(&(c.0 + i, c.1 + j, c.2 + k)) {
                            for &id in ids {
                                let d = sub(self.points[id], q);
                                let d2 = dot(d, d);
                                candidates.push((d2, id));
                                if best.is_none_or(|(b, _)| d2 < b) {
                                    best = Some((d2, id));
                                }
                            }
                        }
                    }
                }
            }
            if let Some((b, _)) = best {
                // unseen points lie at least r * size away
                let reach = r as f64 * self.cells.size;
                if reach * reach > b * (1.0 + 1e-9) + 1e-300 {
                    break;
                }
            }
            r += 1;
            if r > 4096 {
                break;
            }
        }
        let (b, _) = best.expect("point grid is empty");
        let tol = b * (1.0 + 1e-9) + 1e-300;
        candidates
            .into_iter()
            .filter(|&(d2, _)| d2 <= tol)
            .map(|(_, id)| id)
            .min()
            .expect("nearest candidate")
    }
}

/// Candidate facets for spherical point location. Each facet is registered
/// in every cell overlapping the bounding box of the smallest spherical cap
/// (around its normalized centroid) that contains its three vertices, so a
/// query direction inside the spherical triangle always finds it.
#[derive(Debug)]
pub(crate) struct FacetGrid {
    cells: Cells,
}

impl FacetGrid {
    pub fn new(mesh: &TriMesh) -> Self {
        let caps: Vec<(Vec3, f64)> = (0..mesh.facet_count())
            .map(|f| {
                let c = mesh.facet_centroid(f);
                let c = if norm(c) > 0.0 { normalize(c) } else { [0.0, 0.0, 1.0] };
                let r = mesh.facets()[f]
                    .iter()
                    .map(|&v| {
                        let p = mesh.vertex(v);
                        norm(sub(normalize(p), c))
                    })
                    .fold(0.0, f64::max);
                (c, r)
            })
            .collect();
        let mean_r = caps.iter().map(|&(_, r)| r).sum::<f64>() / caps.len().max(1) as f64;
        let size = (2.0 * mean_r).clamp(1e-3, 1.0);
        let mut cells = Cells::new(size);
        for (f, &(c, r)) in caps.iter().enumerate() {
            let r = r * (1.0 + 1e-6) + 1e-9;
            cells.insert_box([c[0] - r, c[1] - r, c[2] - r], [c[0] + r, c[1] + r, c[2] + r], f);
        }
        Self { cells }
    }

    pub fn candidates(&self, q: Vec3) -> &[usize] {
        self.cells.map.get(&self.cells.key(q)).map(Vec::as_slice).unwrap_or(&[])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn nearest_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<Vec3> = (0..500)
            .map(|_| {
                normalize([
                    rng.random::<f64>() - 0.5,
                    rng.random::<f64>() - 0.5,
                    rng.random::<f64>() - 0.5,
                ])
            })
            .collect();
        let grid = PointGrid::new(&pts);
        for _ in 0..200 {
            let q = normalize([
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
            ]);
            let brute = (0..pts.len())
                .min_by(|&a, &b| {
                    let da = dot(sub(pts[a], q), sub(pts[a], q));
                    let db = dot(sub(pts[b], q), sub(pts[b], q));
                    da.partial_cmp(&db).unwrap()
                })
                .unwrap();
            assert_eq!(grid.nearest(q), brute);
        }
    }
}
