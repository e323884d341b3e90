use std::f64::consts::TAU;

use super::{cross, dot, norm, normalize, scale, sub, TriMesh, Vec3};
use crate::error::{Error, Result};

/// Polar and azimuthal angle of a facet normal seen from one of its vertices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FacetAngles {
    /// Angle between facet normal and vertex direction, in `[0, π]`.
    pub theta: f64,
    /// Azimuth of the normal's tangent projection, in `[0, 2π)`.
    pub phi: f64,
}

/// Reference axes for the per-vertex tangent frame. `north` is projected onto
/// the tangent plane to give the first frame axis; `fallback` is used instead
/// when the vertex lies within 1e-6 of `±north`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalFrame {
    pub north: Vec3,
    pub fallback: Vec3,
}

impl Default for LocalFrame {
    fn default() -> Self {
        Self {
            north: [0.0, 0.0, 1.0],
            fallback: [1.0, 0.0, 0.0],
        }
    }
}

impl LocalFrame {
    /// Orthonormal tangent basis `(e1, e2)` at unit direction `v`, with `e2 = v × e1`.
    pub fn tangent_basis(&self, v: Vec3) -> (Vec3, Vec3) {
        let near_pole = (1.0 - dot(self.north, v).abs()) < 1e-6;
        let axis = if near_pole { self.fallback } else { self.north };
        let e1 = normalize(sub(axis, scale(v, dot(axis, v))));
        let e2 = cross(v, e1);
        (e1, e2)
    }
}

/// `(θ_f, φ_f)` for facet `f` at vertex `v` in the default global frame
/// (north = +z, fallback = +x).
pub fn facet_geometry(mesh: &TriMesh, v: usize, f: usize) -> Result<FacetAngles> {
    facet_geometry_in_frame(mesh, v, f, &LocalFrame::default())
}

pub fn facet_geometry_in_frame(mesh: &TriMesh, v: usize, f: usize, frame: &LocalFrame) -> Result<FacetAngles> {
    if !mesh.facets()[f].contains(&v) {
        return Err(Error::Usage(format!("facet {f} is not incident to vertex {v}")));
    }
    let n = mesh.facet_normal(f);
    let len = norm(n);
    if len < 1e-15 {
        return Err(Error::Invariant(format!("facet {f} is degenerate (zero area)")));
    }
    let n = scale(n, 1.0 / len);
    let p = mesh.vertex(v);
    let d = normalize(p);
    let theta = dot(n, d).clamp(-1.0, 1.0).acos();
    let (e1, e2) = frame.tangent_basis(d);
    let t = sub(n, scale(d, dot(n, d)));
    let mut phi = dot(t, e2).atan2(dot(t, e1));
    if phi < 0.0 {
        phi += TAU;
    }
    if phi >= TAU {
        phi -= TAU;
    }
    Ok(FacetAngles { theta, phi })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::icosphere;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rotation(rng: &mut impl Rng) -> [[f64; 3]; 3] {
        // random unit quaternion
        let mut q = [0.0f64; 4];
        loop {
            for x in q.iter_mut() {
                *x = rng.random::<f64>() * 2.0 - 1.0;
            }
            let n = q.iter().map(|x| x * x).sum::<f64>();
            if n > 1e-3 && n < 1.0 {
                let s = n.sqrt();
                q.iter_mut().for_each(|x| *x /= s);
                break;
            }
        }
        let [w, x, y, z] = q;
        [
            [
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
            ],
            [
                2.0 * (x * y + w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - w * x),
            ],
            [
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                1.0 - 2.0 * (x * x + y * y),
            ],
        ]
    }

    fn mat_vec(r: &[[f64; 3]; 3], v: Vec3) -> Vec3 {
        [dot(r[0], v), dot(r[1], v), dot(r[2], v)]
    }

    #[test]
    fn aligned_normal_gives_zero_theta() {
        // a tiny facet tangent to the sphere at +y
        let v = vec![[0.0, 1.0, 0.0], [0.0, 1.0, -1.0], [1.0, 1.0, 0.0]];
        let m = TriMesh::new(v, vec![[0, 2, 1]]).unwrap();
        let a = facet_geometry(&m, 0, 0).unwrap();
        assert!(a.theta.abs() < 1e-12);
    }

    #[test]
    fn icosahedron_vertex_fans_share_theta() {
        let m = icosphere(0).unwrap();
        for v in 0..12 {
            let thetas: Vec<f64> = m
                .incident_facets(v)
                .iter()
                .map(|&f| facet_geometry(&m, v, f).unwrap().theta)
                .collect();
            assert_eq!(thetas.len(), 5);
            for t in &thetas {
                assert!((t - thetas[0]).abs() < 1e-9);
                assert!((0.0..=std::f64::consts::PI).contains(t));
            }
        }
    }

    /// Brute-force fan order around `v`: start at the lowest incident facet
    /// and step to the facet sharing the edge `(v, next)` in the winding.
    fn fan_order(m: &TriMesh, v: usize) -> Vec<usize> {
        let fan = m.incident_facets(v);
        let mut order = vec![fan[0]];
        while order.len() < fan.len() {
            let f = m.facets()[*order.last().unwrap()];
            let slot = f.iter().position(|&x| x == v).unwrap();
            let prev = f[(slot + 2) % 3];
            // next facet counter-clockwise around v contains the directed edge (v, prev)
            let next = fan
                .iter()
                .copied()
                .find(|&g| {
                    let h = m.facets()[g];
                    let s = h.iter().position(|&x| x == v).unwrap();
                    h[(s + 1) % 3] == prev
                })
                .unwrap();
            order.push(next);
        }
        order
    }

    #[test]
    fn azimuths_follow_winding() {
        let m = icosphere(0).unwrap();
        for v in 0..12 {
            let fan = fan_order(&m, v);
            let phis: Vec<f64> = fan.iter().map(|&f| facet_geometry(&m, v, f).unwrap().phi).collect();
            let mut sorted: Vec<(f64, usize)> = phis.iter().copied().zip(fan.iter().copied()).collect();
            sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            for w in sorted.windows(2) {
                assert!(w[1].0 - w[0].0 > 1e-3, "azimuths not distinct");
            }
            // sorted-by-phi sequence is a cyclic rotation of the fan order
            let start = fan.iter().position(|&f| f == sorted[0].1).unwrap();
            for (i, &(_, f)) in sorted.iter().enumerate() {
                assert_eq!(fan[(start + i) % fan.len()], f);
            }
        }
    }

    #[test]
    fn rotation_invariance_with_corotated_frame() {
        let m = icosphere(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..3 {
            let r = rotation(&mut rng);
            let rm = m.rotated(&r);
            let base = LocalFrame::default();
            let frame = LocalFrame {
                north: mat_vec(&r, base.north),
                fallback: mat_vec(&r, base.fallback),
            };
            for v in 0..m.vertex_count() {
                for &f in m.incident_facets(v) {
                    let a = facet_geometry_in_frame(&m, v, f, &base).unwrap();
                    let b = facet_geometry_in_frame(&rm, v, f, &frame).unwrap();
                    assert!((a.theta - b.theta).abs() < 1e-7);
                    let dphi = (a.phi - b.phi).abs();
                    assert!(dphi.min(TAU - dphi) < 1e-7);
                }
            }
        }
    }

    #[test]
    fn non_incident_facet_is_usage_error() {
        let m = icosphere(0).unwrap();
        let f = (0..20).find(|&f| !m.facets()[f].contains(&0)).unwrap();
        assert!(matches!(facet_geometry(&m, 0, f), Err(Error::Usage(_))));
    }

    #[test]
    fn degenerate_facet_is_invariant_error() {
        let v = vec![[1.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        let m = TriMesh::new(v, vec![[0, 1, 2]]).unwrap();
        assert!(matches!(facet_geometry(&m, 0, 0), Err(Error::Invariant(_))));
    }
}
