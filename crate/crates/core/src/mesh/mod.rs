//! Spherical triangle meshes, the icosphere hierarchy and resampling between
//! tessellations.

mod atlas;
mod geometry;
mod grid;
mod icosphere;
mod resample;

use std::collections::HashMap;

pub use atlas::{AtlasLabels, Hemisphere, UNKNOWN_LABEL};
pub use geometry::{facet_geometry, facet_geometry_in_frame, FacetAngles, LocalFrame};
pub use icosphere::{
    build_hierarchy, icosphere, icosphere_vertex_count, subdivide, IcosphereHierarchy, VertexCluster,
    MAX_ICOSPHERE_ORDER,
};
pub use resample::{resample_barycentric, resample_labels, BarycentricMap};

use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];

#[inline]
pub(crate) fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub(crate) fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub(crate) fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub(crate) fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub(crate) fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub(crate) fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub(crate) fn normalize(a: Vec3) -> Vec3 {
    scale(a, 1.0 / norm(a))
}

/// Scalar triple product `a · (b × c)`.
#[inline]
pub(crate) fn det3(a: Vec3, b: Vec3, c: Vec3) -> f64 {
    dot(a, cross(b, c))
}

/// Triangle mesh with vertex → incident-facet adjacency.
///
/// Facets keep the vertex order they were created with; the convolution
/// operators assign distinct filter angles to the three slots, so that order
/// is part of the mesh identity.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    vertices: Vec<Vec3>,
    facets: Vec<[usize; 3]>,
    // CSR: facets incident to vertex v are incident[offsets[v]..offsets[v+1]], ascending.
    incident_offsets: Vec<usize>,
    incident: Vec<usize>,
}

impl TriMesh {
    /// Builds a mesh, checking only that facet indices are in range and
    /// facets are non-degenerate in their indices.
    pub fn new(vertices: Vec<Vec3>, facets: Vec<[usize; 3]>) -> Result<Self> {
        let nv = vertices.len();
        for (fi, f) in facets.iter().enumerate() {
            if f.iter().any(|&i| i >= nv) {
                return Err(Error::Invariant(format!(
                    "facet {fi} references vertex out of range ({f:?}, {nv} vertices)"
                )));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::Invariant(format!("facet {fi} repeats a vertex: {f:?}")));
            }
        }
        let mut counts = vec![0usize; nv + 1];
        for f in &facets {
            for &v in f {
                counts[v + 1] += 1;
            }
        }
        for i in 0..nv {
            counts[i + 1] += counts[i];
        }
        let offsets = counts;
        let mut fill = offsets.clone();
        let mut incident = vec![0usize; offsets[nv]];
        for (fi, f) in facets.iter().enumerate() {
            for &v in f {
                incident[fill[v]] = fi;
                fill[v] += 1;
            }
        }
        Ok(Self {
            vertices,
            facets,
            incident_offsets: offsets,
            incident,
        })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn facets(&self) -> &[[usize; 3]] {
        &self.facets
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn facet_count(&self) -> usize {
        self.facets.len()
    }

    pub fn vertex(&self, v: usize) -> Vec3 {
        self.vertices[v]
    }

    /// Facets incident to `v`, ascending by facet index.
    pub fn incident_facets(&self, v: usize) -> &[usize] {
        &self.incident[self.incident_offsets[v]..self.incident_offsets[v + 1]]
    }

    /// Undirected edges as `(min, max)` pairs, sorted ascending.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut edges: Vec<(usize, usize)> = self
            .facets
            .iter()
            .flat_map(|f| {
                [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])]
                    .into_iter()
                    .map(|(a, b)| (a.min(b), a.max(b)))
            })
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges
    }

    /// Map from undirected edge to the facets sharing it.
    pub fn edge_facets(&self) -> HashMap<(usize, usize), Vec<usize>> {
        let mut map: HashMap<(usize, usize), Vec<usize>> = HashMap::with_capacity(self.facets.len() * 3 / 2);
        for (fi, f) in self.facets.iter().enumerate() {
            for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                map.entry((a.min(b), a.max(b))).or_default().push(fi);
            }
        }
        map
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.vertex_count() as i64 - self.edges().len() as i64 + self.facet_count() as i64
    }

    pub fn facet_centroid(&self, f: usize) -> Vec3 {
        let [a, b, c] = self.facets[f].map(|i| self.vertices[i]);
        scale(add(add(a, b), c), 1.0 / 3.0)
    }

    /// Unnormalized facet normal following the stored winding.
    pub fn facet_normal(&self, f: usize) -> Vec3 {
        let [a, b, c] = self.facets[f].map(|i| self.vertices[i]);
        cross(sub(b, a), sub(c, a))
    }

    /// Checks every spherical-mesh invariant: unit-norm vertices, closed
    /// oriented 2-manifold, Euler characteristic 2 and outward winding.
    pub fn check_sphere_invariants(&self) -> Result<()> {
        for (i, v) in self.vertices.iter().enumerate() {
            let n = norm(*v);
            if (n - 1.0).abs() > 1e-9 {
                return Err(Error::Invariant(format!("vertex {i} has norm {n}, expected 1")));
            }
        }
        self.check_closed_manifold()?;
        let chi = self.euler_characteristic();
        if chi != 2 {
            return Err(Error::Invariant(format!("Euler characteristic {chi}, expected 2")));
        }
        for f in 0..self.facet_count() {
            if dot(self.facet_normal(f), self.facet_centroid(f)) <= 0.0 {
                return Err(Error::Invariant(format!("facet {f} is wound inward")));
            }
        }
        Ok(())
    }

    /// Every undirected edge is shared by exactly two facets that traverse it
    /// in opposite directions.
    pub fn check_closed_manifold(&self) -> Result<()> {
        let mut directed: HashMap<(usize, usize), usize> = HashMap::with_capacity(self.facets.len() * 3);
        for f in &self.facets {
            for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                *directed.entry((a, b)).or_default() += 1;
            }
        }
        for (&(a, b), &count) in &directed {
            if count != 1 {
                return Err(Error::Invariant(format!(
                    "directed edge ({a},{b}) used by {count} facets"
                )));
            }
            if !directed.contains_key(&(b, a)) {
                return Err(Error::Invariant(format!("edge ({a},{b}) is a boundary edge")));
            }
        }
        Ok(())
    }

    /// Applies a rotation matrix (row-major) to every vertex.
    pub fn rotated(&self, r: &[[f64; 3]; 3]) -> TriMesh {
        let vertices = self
            .vertices
            .iter()
            .map(|v| [dot(r[0], *v), dot(r[1], *v), dot(r[2], *v)])
            .collect();
        TriMesh {
            vertices,
            ..self.clone()
        }
    }

    /// Relabels vertices so that old vertex `i` becomes `perm[i]`. Facet
    /// order and in-facet slot order are kept.
    pub fn permuted(&self, perm: &[usize]) -> Result<TriMesh> {
        let n = self.vertex_count();
        if perm.len() != n {
            return Err(Error::Shape(format!("permutation length {} != {n}", perm.len())));
        }
        let mut vertices = vec![[0.0; 3]; n];
        let mut seen = vec![false; n];
        for (old, &new) in perm.iter().enumerate() {
            if new >= n || seen[new] {
                return Err(Error::Usage("not a permutation".into()));
            }
            seen[new] = true;
            vertices[new] = self.vertices[old];
        }
        let facets = self.facets.iter().map(|f| f.map(|i| perm[i])).collect();
        TriMesh::new(vertices, facets)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tetrahedron() -> TriMesh {
        let s = 1.0 / 3f64.sqrt();
        let v = vec![[s, s, s], [s, -s, -s], [-s, s, -s], [-s, -s, s]];
        let f = vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]];
        TriMesh::new(v, f).unwrap()
    }

    #[test]
    fn tetrahedron_is_valid_sphere() {
        let m = tetrahedron();
        m.check_sphere_invariants().unwrap();
        assert_eq!(m.edges().len(), 6);
        assert_eq!(m.incident_facets(0), &[0, 1, 2]);
    }

    #[test]
    fn out_of_range_index_rejected() {
        let err = TriMesh::new(vec![[1.0, 0.0, 0.0]], vec![[0, 1, 2]]).unwrap_err();
        assert!(matches!(err, Error::Invariant(_)));
    }

    #[test]
    fn inverted_winding_detected() {
        let m = tetrahedron();
        let facets = m.facets().iter().map(|f| [f[0], f[2], f[1]]).collect();
        let flipped = TriMesh::new(m.vertices().to_vec(), facets).unwrap();
        assert!(flipped.check_sphere_invariants().is_err());
    }

    #[test]
    fn open_mesh_is_not_manifold() {
        let m = tetrahedron();
        let open = TriMesh::new(m.vertices().to_vec(), m.facets()[..3].to_vec()).unwrap();
        assert!(open.check_closed_manifold().is_err());
    }

    #[test]
    fn permutation_relabels_facets() {
        let m = tetrahedron();
        let p = m.permuted(&[3, 2, 1, 0]).unwrap();
        assert_eq!(p.facets()[0], [3, 2, 1]);
        assert_eq!(p.vertex(3), m.vertex(0));
        p.check_sphere_invariants().unwrap();
    }
}
