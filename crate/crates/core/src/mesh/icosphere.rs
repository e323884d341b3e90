use std::collections::HashMap;

use super::grid::PointGrid;
use super::{add, normalize, TriMesh};
use crate::error::{Error, Result};

/// Resource guard for icosphere construction (order 8 has 655362 vertices).
pub const MAX_ICOSPHERE_ORDER: u32 = 8;

/// Vertex count of the order-`k` icosphere, `10·4^k + 2`.
pub fn icosphere_vertex_count(order: u32) -> usize {
    10 * 4usize.pow(order) + 2
}

fn icosahedron() -> TriMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let raw = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    let vertices = raw.iter().map(|&v| normalize(v)).collect();
    let facets = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    TriMesh::new(vertices, facets).expect("icosahedron is well formed")
}

/// Canonical icosphere of the given order. The first `10·4^(k−1)+2` vertices
/// of order `k` are the order-`(k−1)` vertices; edge midpoints follow in
/// ascending `(min, max)` edge order.
pub fn icosphere(order: u32) -> Result<TriMesh> {
    if order > MAX_ICOSPHERE_ORDER {
        return Err(Error::Config(format!(
            "icosphere order {order} exceeds the limit of {MAX_ICOSPHERE_ORDER}"
        )));
    }
    let mut mesh = icosahedron();
    for _ in 0..order {
        mesh = subdivide_unchecked(&mesh);
    }
    Ok(mesh)
}

/// Splits every facet 1→4 through edge midpoints projected to the unit
/// sphere. Input must be a closed oriented manifold.
pub fn subdivide(mesh: &TriMesh) -> Result<TriMesh> {
    mesh.check_closed_manifold()?;
    Ok(subdivide_unchecked(mesh))
}

fn subdivide_unchecked(mesh: &TriMesh) -> TriMesh {
    let nv = mesh.vertex_count();
    let edges = mesh.edges();
    let mut midpoint: HashMap<(usize, usize), usize> = HashMap::with_capacity(edges.len());
    let mut vertices = mesh.vertices().to_vec();
    vertices.reserve(edges.len());
    for (rank, &(a, b)) in edges.iter().enumerate() {
        midpoint.insert((a, b), nv + rank);
        vertices.push(normalize(add(mesh.vertex(a), mesh.vertex(b))));
    }
    let mid = |a: usize, b: usize| midpoint[&(a.min(b), a.max(b))];
    let mut facets = Vec::with_capacity(mesh.facet_count() * 4);
    for &[a, b, c] in mesh.facets() {
        let ab = mid(a, b);
        let bc = mid(b, c);
        let ca = mid(c, a);
        facets.push([a, ab, ca]);
        facets.push([b, bc, ab]);
        facets.push([c, ca, bc]);
        facets.push([ab, bc, ca]);
    }
    TriMesh::new(vertices, facets).expect("subdivision preserves index validity")
}

/// Assignment of fine-level vertices to coarse-level clusters (VCluster).
#[derive(Debug, Clone, PartialEq)]
pub struct VertexCluster {
    fine_to_coarse: Vec<usize>,
    member_offsets: Vec<usize>,
    members: Vec<usize>,
}

impl VertexCluster {
    /// Builds the inverse map; `coarse_count` fixes the number of clusters.
    pub fn from_assignment(fine_to_coarse: Vec<usize>, coarse_count: usize) -> Result<Self> {
        let mut counts = vec![0usize; coarse_count + 1];
        for (v, &c) in fine_to_coarse.iter().enumerate() {
            if c >= coarse_count {
                return Err(Error::Invariant(format!(
                    "fine vertex {v} maps to cluster {c} >= {coarse_count}"
                )));
            }
            counts[c + 1] += 1;
        }
        for i in 0..coarse_count {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut members = vec![0; fine_to_coarse.len()];
        // ascending fine index within each cluster
        for (v, &c) in fine_to_coarse.iter().enumerate() {
            members[fill[c]] = v;
            fill[c] += 1;
        }
        Ok(Self {
            fine_to_coarse,
            member_offsets: counts,
            members,
        })
    }

    pub fn fine_count(&self) -> usize {
        self.fine_to_coarse.len()
    }

    pub fn coarse_count(&self) -> usize {
        self.member_offsets.len() - 1
    }

    pub fn cluster_of(&self, fine: usize) -> usize {
        self.fine_to_coarse[fine]
    }

    pub fn assignment(&self) -> &[usize] {
        &self.fine_to_coarse
    }

    /// Members of cluster `c`, ascending.
    pub fn members(&self, c: usize) -> &[usize] {
        &self.members[self.member_offsets[c]..self.member_offsets[c + 1]]
    }

    /// Nearest-coarse-vertex clustering; ties go to the lowest coarse index.
    pub fn nearest(fine: &TriMesh, coarse: &TriMesh) -> Self {
        let grid = PointGrid::new(coarse.vertices());
        let map = fine.vertices().iter().map(|&p| grid.nearest(p)).collect();
        Self::from_assignment(map, coarse.vertex_count()).expect("nearest indices are in range")
    }
}

/// Icosphere meshes of orders `0..=max_order` plus the clustering between
/// each adjacent pair.
#[derive(Debug, Clone)]
pub struct IcosphereHierarchy {
    levels: Vec<TriMesh>,
    // clusters[k-1] maps level k to level k-1
    clusters: Vec<VertexCluster>,
}

/// Builds the hierarchy for orders `0..=max_order`.
pub fn build_hierarchy(max_order: u32) -> Result<IcosphereHierarchy> {
    IcosphereHierarchy::new(max_order)
}

impl IcosphereHierarchy {
    pub fn new(max_order: u32) -> Result<Self> {
        if max_order < 1 {
            return Err(Error::Config("hierarchy needs max_order >= 1".into()));
        }
        if max_order > MAX_ICOSPHERE_ORDER {
            return Err(Error::Config(format!(
                "icosphere order {max_order} exceeds the limit of {MAX_ICOSPHERE_ORDER}"
            )));
        }
        let mut levels = vec![icosahedron()];
        for _ in 0..max_order {
            let next = subdivide_unchecked(levels.last().unwrap());
            levels.push(next);
        }
        let clusters = levels
            .windows(2)
            .map(|w| VertexCluster::nearest(&w[1], &w[0]))
            .collect();
        Ok(Self { levels, clusters })
    }

    /// Replaces the finest level by `mesh` (typically a vertex relabeling of
    /// it) and recomputes the finest clustering.
    pub fn with_finest(&self, mesh: TriMesh) -> Result<Self> {
        let top = self.max_order() as usize;
        if mesh.vertex_count() != self.levels[top].vertex_count() {
            return Err(Error::Shape(format!(
                "replacement mesh has {} vertices, level {top} has {}",
                mesh.vertex_count(),
                self.levels[top].vertex_count()
            )));
        }
        let mut out = self.clone();
        out.clusters[top - 1] = VertexCluster::nearest(&mesh, &out.levels[top - 1]);
        out.levels[top] = mesh;
        Ok(out)
    }

    pub fn max_order(&self) -> u32 {
        (self.levels.len() - 1) as u32
    }

    pub fn level(&self, order: u32) -> &TriMesh {
        &self.levels[order as usize]
    }

    /// Clustering of order-`fine_order` vertices onto order `fine_order − 1`.
    pub fn cluster(&self, fine_order: u32) -> &VertexCluster {
        assert!(fine_order >= 1, "order 0 has no coarser level");
        &self.clusters[fine_order as usize - 1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{dot, sub};

    #[test]
    fn icosahedron_counts() {
        let m = icosphere(0).unwrap();
        assert_eq!(m.vertex_count(), 12);
        assert_eq!(m.facet_count(), 20);
        assert_eq!(m.edges().len(), 30);
        m.check_sphere_invariants().unwrap();
    }

    #[test]
    fn order_two_has_162_vertices() {
        assert_eq!(icosphere(2).unwrap().vertex_count(), 162);
        assert_eq!(icosphere_vertex_count(2), 162);
        let twice = subdivide(&subdivide(&icosphere(0).unwrap()).unwrap()).unwrap();
        assert_eq!(twice.vertex_count(), 162);
        assert_eq!(twice, icosphere(2).unwrap());
    }

    #[test]
    fn subdivide_icosahedron() {
        let s = subdivide(&icosphere(0).unwrap()).unwrap();
        assert_eq!(s.vertex_count(), 42);
        assert_eq!(s.facet_count(), 80);
        s.check_sphere_invariants().unwrap();
    }

    #[test]
    fn subdivide_rejects_open_mesh() {
        let m = icosphere(0).unwrap();
        let open = TriMesh::new(m.vertices().to_vec(), m.facets()[1..].to_vec()).unwrap();
        assert!(matches!(subdivide(&open), Err(Error::Invariant(_))));
    }

    #[test]
    fn order_guard() {
        assert!(matches!(icosphere(9), Err(Error::Config(_))));
        assert!(matches!(build_hierarchy(0), Err(Error::Config(_))));
    }

    #[test]
    fn vertex_prefix_is_coarser_level() {
        let a = icosphere(2).unwrap();
        let b = icosphere(3).unwrap();
        assert_eq!(&b.vertices()[..a.vertex_count()], a.vertices());
        // first midpoint belongs to the smallest edge
        let (i, j) = a.edges()[0];
        let m = normalize(add(a.vertex(i), a.vertex(j)));
        assert_eq!(b.vertex(a.vertex_count()), m);
    }

    #[test]
    fn hierarchy_clusters() {
        let h = build_hierarchy(2).unwrap();
        let c = h.cluster(1);
        assert_eq!(c.cluster_of(0), 0);
        for v in 0..12 {
            assert_eq!(c.cluster_of(v), v);
        }
        let mut used = c.assignment().to_vec();
        used.sort_unstable();
        used.dedup();
        assert_eq!(used.len(), 12);
        for k in 0..12 {
            assert!(!c.members(k).is_empty());
        }
        assert_eq!(h.cluster(2).coarse_count(), 42);
        assert_eq!(h.cluster(2).fine_count(), 162);
    }

    #[test]
    fn midpoint_tie_goes_to_lower_endpoint() {
        let h = build_hierarchy(1).unwrap();
        let coarse = h.level(0);
        let fine = h.level(1);
        for (rank, &(a, b)) in coarse.edges().iter().enumerate() {
            let v = 12 + rank;
            let da = dot(
                sub(fine.vertex(v), coarse.vertex(a)),
                sub(fine.vertex(v), coarse.vertex(a)),
            );
            let db = dot(
                sub(fine.vertex(v), coarse.vertex(b)),
                sub(fine.vertex(v), coarse.vertex(b)),
            );
            assert!((da - db).abs() < 1e-14, "edge ({a},{b}) not a tie: {da} vs {db}");
            assert_eq!(h.cluster(1).cluster_of(v), a.min(b));
        }
    }

    #[test]
    fn hierarchy_is_deterministic() {
        let a = build_hierarchy(3).unwrap();
        let b = build_hierarchy(3).unwrap();
        for k in 1..=3 {
            assert_eq!(a.cluster(k), b.cluster(k));
        }
    }

    #[test]
    fn members_inverse_of_assignment() {
        let h = build_hierarchy(3).unwrap();
        let c = h.cluster(3);
        for k in 0..c.coarse_count() {
            for &v in c.members(k) {
                assert_eq!(c.cluster_of(v), k);
            }
        }
        let total: usize = (0..c.coarse_count()).map(|k| c.members(k).len()).sum();
        assert_eq!(total, c.fine_count());
    }
}
