//! Independent oracles shared by the integration suites.
#![allow(dead_code)]

use std::collections::BTreeSet;

use mmn_core::conv::{FacetFeatureMap, FeatureMap, VERTEX2FACET_ANGLES};
use mmn_core::mesh::{build_hierarchy, facet_geometry, IcosphereHierarchy, TriMesh};
use mmn_core::net::{sample_mask, MmnModel, ModelConfig, ParamKind};
use mmn_core::spharm::{filter_eval, FilterBank};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_map(rng: &mut impl Rng, c: usize, v: usize, level: u32) -> FeatureMap {
    let vals = (0..c * v).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
    FeatureMap::from_vertex_major(c, v, level, vals).unwrap()
}

pub fn random_facets(rng: &mut impl Rng, c: usize, f: usize) -> FacetFeatureMap {
    let vals = (0..c * f).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
    FacetFeatureMap::from_facet_major(c, f, vals).unwrap()
}

/// Double loop over facets and their three vertex slots.
pub fn brute_v2f(mesh: &TriMesh, x: &FeatureMap, bank: &FilterBank) -> Vec<f64> {
    let (cin, cout) = (bank.in_channels(), bank.out_channels());
    let mats: Vec<Vec<f64>> = VERTEX2FACET_ANGLES
        .iter()
        .map(|&(t, p)| filter_eval(bank, t, p))
        .collect();
    let mut out = vec![0.0; mesh.facet_count() * cout];
    for (f, tri) in mesh.facets().iter().enumerate() {
        for o in 0..cout {
            let mut acc = 0.0;
            for (j, &v) in tri.iter().enumerate() {
                for i in 0..cin {
                    acc += mats[j][o * cin + i] * x.get(i, v);
                }
            }
            out[f * cout + o] = acc;
        }
    }
    out
}

/// Double loop over vertices and their incident facets, with the facet
/// angles recomputed from the mesh each time.
pub fn brute_f2v(mesh: &TriMesh, g: &FacetFeatureMap, bank: &FilterBank) -> Vec<f64> {
    let (cin, cout) = (bank.in_channels(), bank.out_channels());
    let mut out = vec![0.0; mesh.vertex_count() * cout];
    for v in 0..mesh.vertex_count() {
        let fan = mesh.incident_facets(v);
        for &f in fan {
            let a = facet_geometry(mesh, v, f).unwrap();
            let m = filter_eval(bank, a.theta, a.phi);
            for o in 0..cout {
                for i in 0..cin {
                    out[v * cout + o] += m[o * cin + i] * g.get(i, f) / fan.len() as f64;
                }
            }
        }
    }
    out
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Central differences of `loss` w.r.t. `params[i]`.
pub fn fd(params: &mut [f64], i: usize, h: f64, mut loss: impl FnMut(&[f64]) -> f64) -> f64 {
    let orig = params[i];
    params[i] = orig + h;
    let up = loss(params);
    params[i] = orig - h;
    let down = loss(params);
    params[i] = orig;
    (up - down) / (2.0 * h)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Small two-channel model with biases and token moved off zero so every
/// parameter class carries gradient.
pub fn tiny_model(order: u32, channels: Vec<usize>, seed: u64) -> (MmnModel, IcosphereHierarchy) {
    let h = build_hierarchy(order).unwrap();
    let cfg = ModelConfig {
        input_order: order,
        in_channels: 2,
        channels,
        degree: 2,
    };
    let mut model = MmnModel::new(cfg, &h, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
    let kinds: Vec<ParamKind> = model.parameters().iter().map(|(k, _)| *k).collect();
    for (k, p) in kinds.iter().zip(model.parameters_mut()) {
        if matches!(k, ParamKind::Bias | ParamKind::MaskToken) {
            p.iter_mut().for_each(|x| *x = rng.random::<f64>() * 0.4 - 0.2);
        }
    }
    (model, h)
}

pub struct GradientCheck {
    pub checked: usize,
    pub max_rel: f64,
    pub worst: String,
    pub classes: BTreeSet<String>,
}

/// Compares the masked-ℓ1 gradient of every parameter class with central
/// differences (every scalar of small tensors, every 7th SH coefficient).
pub fn check_model_gradients(model: &MmnModel, seed: u64) -> GradientCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nv = model.input_vertices();
    let x = random_map(&mut rng, model.config().in_channels, nv, model.config().input_order);
    let ctx = [0.7, -1.0];
    let mask = sample_mask(nv, 0.5, &mut rng).unwrap();
    let (_, grads) = model.loss_and_gradients(&x, &ctx, &mask).unwrap();
    let params: Vec<(ParamKind, Vec<f64>)> = model.parameters().iter().map(|(k, p)| (*k, p.to_vec())).collect();
    let h = 1e-5;
    let mut out = GradientCheck {
        checked: 0,
        max_rel: 0.0,
        worst: String::new(),
        classes: BTreeSet::new(),
    };
    for (t, (kind, values)) in params.iter().enumerate() {
        let step = if *kind == ParamKind::Sh { 7 } else { 1 };
        for i in (0..values.len()).step_by(step) {
            let mut probe = model.clone();
            probe.parameters_mut()[t][i] = values[i] + h;
            let up = probe.masked_loss(&x, &ctx, &mask).unwrap();
            probe.parameters_mut()[t][i] = values[i] - h;
            let down = probe.masked_loss(&x, &ctx, &mask).unwrap();
            let num = (up - down) / (2.0 * h);
            let ana = grads.0[t][i];
            // floor keeps central-difference roundoff (~1e-11) out of near-zero entries
            let rel = (num - ana).abs() / num.abs().max(ana.abs()).max(1e-5);
            if rel > out.max_rel {
                out.max_rel = rel;
                out.worst = format!("{kind:?} tensor {t} index {i}: numeric {num} analytic {ana}");
            }
            out.checked += 1;
            out.classes.insert(format!("{kind:?}"));
        }
    }
    out
}

/// Exact permutation p-value of the two-group F statistic: the fraction of
/// all relabelings into groups of the original sizes whose F is at least
/// the observed one.
pub fn permutation_p(a: &[f64], b: &[f64]) -> f64 {
    let all: Vec<f64> = a.iter().chain(b).copied().collect();
    let n = all.len();
    let k = a.len();
    assert!(n <= 20, "exact enumeration only for small samples");
    let f_of = |mask: u32| {
        let (mut ga, mut gb) = (Vec::with_capacity(k), Vec::with_capacity(n - k));
        for (i, &x) in all.iter().enumerate() {
            if mask >> i & 1 == 1 {
                ga.push(x);
            } else {
                gb.push(x);
            }
        }
        f_statistic(&ga, &gb)
    };
    let observed = f_of((1u32 << k) - 1);
    let (mut hits, mut total) = (0u64, 0u64);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize == k {
            total += 1;
            if f_of(mask) >= observed * (1.0 - 1e-12) {
                hits += 1;
            }
        }
    }
    hits as f64 / total as f64
}

/// Textbook F = MS_between / MS_within for two groups.
pub fn f_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (ma, mb) = (mean(a), mean(b));
    let n = (a.len() + b.len()) as f64;
    let g = (a.iter().sum::<f64>() + b.iter().sum::<f64>()) / n;
    let ssb = a.len() as f64 * (ma - g).powi(2) + b.len() as f64 * (mb - g).powi(2);
    let ssw: f64 = a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() + b.iter().map(|x| (x - mb).powi(2)).sum::<f64>();
    ssb / (ssw / (n - 2.0))
}
