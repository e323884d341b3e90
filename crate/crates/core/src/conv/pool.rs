use super::FeatureMap;
use crate::error::{Error, Result};
use crate::mesh::VertexCluster;

/// Argmax record of a pooling pass.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolContext {
    fine_vertices: usize,
    fine_level: u32,
    // argmax[cluster * C + c] = fine vertex holding the maximum
    argmax: Vec<usize>,
}

impl PoolContext {
    pub fn argmax(&self, cluster: usize, channel: usize, channels: usize) -> usize {
        self.argmax[cluster * channels + channel]
    }
}

/// Per-cluster, per-channel maximum. Ties resolve to the lowest fine vertex.
pub fn pool_max(x: &FeatureMap, cluster: &VertexCluster) -> Result<(FeatureMap, PoolContext)> {
    if x.vertices() != cluster.fine_count() {
        return Err(Error::Shape(format!(
            "pooling expects {} fine vertices, got {}",
            cluster.fine_count(),
            x.vertices()
        )));
    }
    if x.level() == 0 {
        return Err(Error::Shape("cannot pool below level 0".into()));
    }
    let c = x.channels();
    let nc = cluster.coarse_count();
    let mut out = FeatureMap::zeros(c, nc, x.level() - 1);
    let mut argmax = vec![0usize; nc * c];
    for k in 0..nc {
        let members = cluster.members(k);
        if members.is_empty() {
            return Err(Error::Invariant(format!("cluster {k} is empty")));
        }
        for ch in 0..c {
            // members are ascending, so strict > keeps the lowest index on ties
            let mut best = members[0];
            let mut best_val = x.get(ch, best);
            for &v in &members[1..] {
                let val = x.get(ch, v);
                if val > best_val {
                    best = v;
                    best_val = val;
                }
            }
            out.set(ch, k, best_val);
            argmax[k * c + ch] = best;
        }
    }
    Ok((
        out,
        PoolContext {
            fine_vertices: x.vertices(),
            fine_level: x.level(),
            argmax,
        },
    ))
}

/// Routes each coarse gradient to the recorded argmax vertex.
pub fn backward_pool_max(ctx: &PoolContext, grad_out: &FeatureMap) -> Result<FeatureMap> {
    let c = grad_out.channels();
    if grad_out.vertices() * c != ctx.argmax.len() {
        return Err(Error::Usage("pool backward called with a mismatched context".into()));
    }
    let mut grad = FeatureMap::zeros(c, ctx.fine_vertices, ctx.fine_level);
    for k in 0..grad_out.vertices() {
        for ch in 0..c {
            let v = ctx.argmax[k * c + ch];
            let g = grad.get(ch, v) + grad_out.get(ch, k);
            grad.set(ch, v, g);
        }
    }
    Ok(grad)
}

/// Broadcasts each cluster value to all of its members.
pub fn unpool(x: &FeatureMap, cluster: &VertexCluster) -> Result<FeatureMap> {
    if x.vertices() != cluster.coarse_count() {
        return Err(Error::Shape(format!(
            "unpooling expects {} coarse vertices, got {}",
            cluster.coarse_count(),
            x.vertices()
        )));
    }
    let c = x.channels();
    let mut out = FeatureMap::zeros(c, cluster.fine_count(), x.level() + 1);
    for v in 0..cluster.fine_count() {
        out.vertex_mut(v).copy_from_slice(x.vertex(cluster.cluster_of(v)));
    }
    Ok(out)
}

/// Sums fine gradients over cluster members (ascending member order).
pub fn backward_unpool(cluster: &VertexCluster, grad_out: &FeatureMap) -> Result<FeatureMap> {
    if grad_out.vertices() != cluster.fine_count() || grad_out.level() == 0 {
        return Err(Error::Shape(format!(
            "unpool gradient has {} vertices, cluster map has {} fine vertices",
            grad_out.vertices(),
            cluster.fine_count()
        )));
    }
    let c = grad_out.channels();
    let mut grad = FeatureMap::zeros(c, cluster.coarse_count(), grad_out.level() - 1);
    for k in 0..cluster.coarse_count() {
        let dst = grad.vertex_mut(k);
        for &v in cluster.members(k) {
            for (d, s) in dst.iter_mut().zip(grad_out.vertex(v)) {
                *d += s;
            }
        }
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_hierarchy;
    use proptest::prelude::*;

    fn toy_cluster() -> VertexCluster {
        // clusters {0, 1}, {2}
        VertexCluster::from_assignment(vec![0, 0, 1], 2).unwrap()
    }

    #[test]
    fn max_of_cluster() {
        let c = VertexCluster::from_assignment(vec![0, 0, 0], 1).unwrap();
        let x = FeatureMap::from_vertex_major(1, 3, 1, vec![1.0, -2.0, 3.0]).unwrap();
        let (y, ctx) = pool_max(&x, &c).unwrap();
        assert_eq!(y.values(), &[3.0]);
        assert_eq!(ctx.argmax(0, 0, 1), 2);
        assert_eq!(y.level(), 0);
    }

    #[test]
    fn singleton_cluster_is_identity() {
        let c = VertexCluster::from_assignment(vec![0, 1, 2], 3).unwrap();
        let x = FeatureMap::from_vertex_major(2, 3, 1, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let (y, _) = pool_max(&x, &c).unwrap();
        assert_eq!(y.values(), x.values());
    }

    #[test]
    fn constant_field_argmax_is_lowest_member() {
        let h = build_hierarchy(2).unwrap();
        let cl = h.cluster(2);
        let x = FeatureMap::from_vertex_major(1, 162, 2, vec![0.75; 162]).unwrap();
        let (y, ctx) = pool_max(&x, cl).unwrap();
        assert!(y.values().iter().all(|&v| v == 0.75));
        for k in 0..42 {
            assert_eq!(ctx.argmax(k, 0, 1), cl.members(k)[0]);
        }
    }

    #[test]
    fn unpool_broadcasts() {
        let x = FeatureMap::from_vertex_major(1, 2, 0, vec![5.0, -1.0]).unwrap();
        let y = unpool(&x, &toy_cluster()).unwrap();
        assert_eq!(y.values(), &[5.0, 5.0, -1.0]);
        assert_eq!(y.level(), 1);
    }

    #[test]
    fn level_mismatch() {
        let x = FeatureMap::zeros(1, 4, 1);
        assert!(matches!(pool_max(&x, &toy_cluster()), Err(Error::Shape(_))));
        assert!(matches!(unpool(&x, &toy_cluster()), Err(Error::Shape(_))));
    }

    #[test]
    fn pool_gradient_goes_to_argmax_only() {
        let x = FeatureMap::from_vertex_major(1, 3, 1, vec![0.5, 2.0, 1.0]).unwrap();
        let (_, ctx) = pool_max(&x, &toy_cluster()).unwrap();
        let g = FeatureMap::from_vertex_major(1, 2, 0, vec![3.0, 4.0]).unwrap();
        let gx = backward_pool_max(&ctx, &g).unwrap();
        assert_eq!(gx.values(), &[0.0, 3.0, 4.0]);
    }

    #[test]
    fn unpool_gradient_sums_members() {
        let g = FeatureMap::from_vertex_major(1, 3, 1, vec![1.0, 2.0, 4.0]).unwrap();
        let gc = backward_unpool(&toy_cluster(), &g).unwrap();
        assert_eq!(gc.values(), &[3.0, 4.0]);
    }

    #[test]
    fn unpool_of_pool_on_cluster_constant_field() {
        let h = build_hierarchy(2).unwrap();
        let cl = h.cluster(2);
        let coarse: Vec<f64> = (0..42).map(|k| (k as f64).sin()).collect();
        let fine: Vec<f64> = (0..162).map(|v| coarse[cl.cluster_of(v)]).collect();
        let x = FeatureMap::from_vertex_major(1, 162, 2, fine).unwrap();
        let (p, _) = pool_max(&x, cl).unwrap();
        assert_eq!(unpool(&p, cl).unwrap(), x);
    }

    proptest! {
        #[test]
        fn pool_of_unpool_is_identity(vals in proptest::collection::vec(-10.0f64..10.0, 42 * 2)) {
            let h = build_hierarchy(2).unwrap();
            let cl = h.cluster(2);
            let x = FeatureMap::from_vertex_major(2, 42, 1, vals).unwrap();
            let (y, _) = pool_max(&unpool(&x, cl).unwrap(), cl).unwrap();
            prop_assert_eq!(y, x);
        }
    }
}
