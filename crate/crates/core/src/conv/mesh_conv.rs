use std::f64::consts::FRAC_PI_2;

use super::{matmul, FacetFeatureMap, FeatureMap};
use crate::error::{Error, Result};
use crate::mesh::{facet_geometry_in_frame, LocalFrame, TriMesh};
use crate::spharm::{basis_len, filter_basis, filter_basis_into, FilterBank};

/// Fixed `(θ, φ)` at which the filter is sampled for the three vertex slots
/// of a facet in the vertex→facet convolution.
pub const VERTEX2FACET_ANGLES: [(f64, f64); 3] = [(FRAC_PI_2, 0.0), (FRAC_PI_2, FRAC_PI_2), (0.0, 0.0)];

/// Mesh connectivity plus every filter-basis vector the convolutions need,
/// precomputed for one harmonic degree.
#[derive(Debug, Clone)]
pub struct ConvGeometry {
    level: u32,
    degree: usize,
    vertex_count: usize,
    facets: Vec<[usize; 3]>,
    // vertex -> incident facets (CSR, ascending facet index)
    inc_offsets: Vec<usize>,
    inc_facets: Vec<usize>,
    // basis at (θ_f, φ_f) for each incidence, row-major nnz × K
    inc_basis: Vec<f64>,
    inv_degree: Vec<f64>,
    v2f_basis: [Vec<f64>; 3],
}

impl ConvGeometry {
    pub fn new(mesh: &TriMesh, level: u32, degree: usize) -> Result<Self> {
        Self::with_frame(mesh, level, degree, &LocalFrame::default())
    }

    pub fn with_frame(mesh: &TriMesh, level: u32, degree: usize, frame: &LocalFrame) -> Result<Self> {
        let k = basis_len(degree);
        let nv = mesh.vertex_count();
        let mut inc_offsets = Vec::with_capacity(nv + 1);
        let mut inc_facets = Vec::with_capacity(mesh.facet_count() * 3);
        let mut inc_basis = Vec::with_capacity(mesh.facet_count() * 3 * k);
        let mut inv_degree = Vec::with_capacity(nv);
        let mut buf = vec![0.0; k];
        inc_offsets.push(0);
        for v in 0..nv {
            let fan = mesh.incident_facets(v);
            for &f in fan {
                let a = facet_geometry_in_frame(mesh, v, f, frame)?;
                filter_basis_into(degree, a.theta, a.phi, &mut buf);
                inc_facets.push(f);
                inc_basis.extend_from_slice(&buf);
            }
            inv_degree.push(if fan.is_empty() { 0.0 } else { 1.0 / fan.len() as f64 });
            inc_offsets.push(inc_facets.len());
        }
        let v2f_basis = VERTEX2FACET_ANGLES.map(|(t, p)| filter_basis(degree, t, p));
        Ok(Self {
            level,
            degree,
            vertex_count: nv,
            facets: mesh.facets().to_vec(),
            inc_offsets,
            inc_facets,
            inc_basis,
            inv_degree,
            v2f_basis,
        })
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn facet_count(&self) -> usize {
        self.facets.len()
    }

    fn check_bank(&self, bank: &FilterBank) -> Result<()> {
        if bank.degree() != self.degree {
            return Err(Error::Shape(format!(
                "filter degree {} but geometry was built for degree {}",
                bank.degree(),
                self.degree
            )));
        }
        Ok(())
    }

    fn check_vertices(&self, x: &FeatureMap) -> Result<()> {
        if x.vertices() != self.vertex_count || x.level() != self.level {
            return Err(Error::Shape(format!(
                "feature map has {} vertices at level {}, mesh has {} at level {}",
                x.vertices(),
                x.level(),
                self.vertex_count,
                self.level
            )));
        }
        Ok(())
    }
}

/// `[M_1 | M_2 | M_3]`, the three slot filter matrices side by side (`out × 3·in`).
fn slot_matrices(geom: &ConvGeometry, bank: &FilterBank) -> Vec<f64> {
    let (cin, cout) = (bank.in_channels(), bank.out_channels());
    let mut cat = vec![0.0; cout * 3 * cin];
    for (j, basis) in geom.v2f_basis.iter().enumerate() {
        let m = bank.matrix_from_basis(basis);
        for o in 0..cout {
            cat[o * 3 * cin + j * cin..o * 3 * cin + (j + 1) * cin].copy_from_slice(&m[o * cin..(o + 1) * cin]);
        }
    }
    cat
}

/// Per-facet gather `[h_1 | h_2 | h_3]` (`F × 3·in`).
fn gather_slots(geom: &ConvGeometry, x: &FeatureMap) -> Vec<f64> {
    let cin = x.channels();
    let mut g = vec![0.0; geom.facets.len() * 3 * cin];
    for (f, tri) in geom.facets.iter().enumerate() {
        for (j, &v) in tri.iter().enumerate() {
            let dst = f * 3 * cin + j * cin;
            g[dst..dst + cin].copy_from_slice(x.vertex(v));
        }
    }
    g
}

/// `g_f = F(π/2,0)·h_1 + F(π/2,π/2)·h_2 + F(0,0)·h_3` for every facet, with
/// `h_1..h_3` in stored facet order.
pub fn vertex2facet(geom: &ConvGeometry, x: &FeatureMap, bank: &FilterBank) -> Result<FacetFeatureMap> {
    geom.check_vertices(x)?;
    geom.check_bank(bank)?;
    if bank.in_channels() != x.channels() {
        return Err(Error::Shape(format!(
            "filter expects {} input channels, features have {}",
            bank.in_channels(),
            x.channels()
        )));
    }
    let (cin, cout) = (bank.in_channels(), bank.out_channels());
    let gathered = gather_slots(geom, x);
    let cat = slot_matrices(geom, bank);
    let out = matmul(&gathered, false, &cat, true, geom.facets.len(), 3 * cin, cout);
    FacetFeatureMap::from_facet_major(cout, geom.facets.len(), out)
}

/// Gradients of [`vertex2facet`] w.r.t. its input features and coefficients.
pub fn backward_vertex2facet(
    geom: &ConvGeometry,
    x: &FeatureMap,
    bank: &FilterBank,
    grad_out: &FacetFeatureMap,
) -> Result<(FeatureMap, Vec<f64>)> {
    geom.check_vertices(x)?;
    let (cin, cout) = (bank.in_channels(), bank.out_channels());
    if grad_out.facets() != geom.facets.len() || grad_out.channels() != cout || x.channels() != cin {
        return Err(Error::Usage(
            "vertex2facet backward called with a mismatched context".into(),
        ));
    }
    let nf = geom.facets.len();
    let gathered = gather_slots(geom, x);
    let cat = slot_matrices(geom, bank);
    // d[M_1|M_2|M_3] = grad_outᵀ · gathered
    let grad_cat = matmul(grad_out.values(), true, &gathered, false, cout, nf, 3 * cin);
    let k = bank.basis_len();
    let mut grad_coeff = vec![0.0; cout * cin * k];
    for o in 0..cout {
        for i in 0..cin {
            let dst = &mut grad_coeff[(o * cin + i) * k..(o * cin + i + 1) * k];
            for (j, basis) in geom.v2f_basis.iter().enumerate() {
                let gm = grad_cat[o * 3 * cin + j * cin + i];
                for (d, b) in dst.iter_mut().zip(basis) {
                    *d += gm * b;
                }
            }
        }
    }
    let grad_gathered = matmul(grad_out.values(), false, &cat, false, nf, cout, 3 * cin);
    let mut grad_x = FeatureMap::zeros(cin, geom.vertex_count, geom.level);
    for (f, tri) in geom.facets.iter().enumerate() {
        for (j, &v) in tri.iter().enumerate() {
            let src = &grad_gathered[f * 3 * cin + j * cin..f * 3 * cin + (j + 1) * cin];
            for (d, s) in grad_x.vertex_mut(v).iter_mut().zip(src) {
                *d += s;
            }
        }
    }
    Ok((grad_x, grad_coeff))
}

/// Saved state of a facet→vertex forward pass: the basis-weighted facet
/// averages `A[v, (i, k)]`, from which output and coefficient gradient are
/// single matrix products.
#[derive(Debug, Clone)]
pub struct Facet2VertexContext {
    in_channels: usize,
    averages: Vec<f64>,
}

/// `g_v = (1/|N(v)|) Σ_{f∈N(v)} F(θ_f, φ_f)·h_f` for every vertex.
pub fn facet2vertex(geom: &ConvGeometry, g: &FacetFeatureMap, bank: &FilterBank) -> Result<FeatureMap> {
    facet2vertex_with_context(geom, g, bank).map(|(out, _)| out)
}

pub fn facet2vertex_with_context(
    geom: &ConvGeometry,
    g: &FacetFeatureMap,
    bank: &FilterBank,
) -> Result<(FeatureMap, Facet2VertexContext)> {
    geom.check_bank(bank)?;
    if g.facets() != geom.facets.len() {
        return Err(Error::Shape(format!(
            "facet map has {} facets, mesh has {}",
            g.facets(),
            geom.facets.len()
        )));
    }
    if bank.in_channels() != g.channels() {
        return Err(Error::Shape(format!(
            "filter expects {} input channels, facet features have {}",
            bank.in_channels(),
            g.channels()
        )));
    }
    let (cin, cout, k) = (bank.in_channels(), bank.out_channels(), bank.basis_len());
    let nv = geom.vertex_count;
    let width = cin * k;
    let mut averages = vec![0.0; nv * width];
    for v in 0..nv {
        let row = &mut averages[v * width..(v + 1) * width];
        let w = geom.inv_degree[v];
        for idx in geom.inc_offsets[v]..geom.inc_offsets[v + 1] {
            let f = geom.inc_facets[idx];
            let basis = &geom.inc_basis[idx * k..(idx + 1) * k];
            for (i, &h) in g.facet(f).iter().enumerate() {
                let s = w * h;
                for (r, b) in row[i * k..(i + 1) * k].iter_mut().zip(basis) {
                    *r += s * b;
                }
            }
        }
    }
    let out = matmul(&averages, false, bank.coefficients(), true, nv, width, cout);
    let out = FeatureMap::from_vertex_major(cout, nv, geom.level, out)?;
    Ok((
        out,
        Facet2VertexContext {
            in_channels: cin,
            averages,
        },
    ))
}

/// Gradients of [`facet2vertex`] w.r.t. facet features and coefficients.
pub fn backward_facet2vertex(
    geom: &ConvGeometry,
    ctx: &Facet2VertexContext,
    bank: &FilterBank,
    grad_out: &FeatureMap,
) -> Result<(FacetFeatureMap, Vec<f64>)> {
    let (cin, cout, k) = (bank.in_channels(), bank.out_channels(), bank.basis_len());
    let nv = geom.vertex_count;
    let width = cin * k;
    if ctx.in_channels != cin
        || ctx.averages.len() != nv * width
        || grad_out.channels() != cout
        || grad_out.vertices() != nv
    {
        return Err(Error::Usage(
            "facet2vertex backward called with a mismatched context".into(),
        ));
    }
    let grad_coeff = matmul(grad_out.values(), true, &ctx.averages, false, cout, nv, width);
    let grad_avg = matmul(grad_out.values(), false, bank.coefficients(), false, nv, cout, width);
    let mut grad_g = FacetFeatureMap::zeros(cin, geom.facets.len());
    for v in 0..nv {
        let row = &grad_avg[v * width..(v + 1) * width];
        let w = geom.inv_degree[v];
        for idx in geom.inc_offsets[v]..geom.inc_offsets[v + 1] {
            let f = geom.inc_facets[idx];
            let basis = &geom.inc_basis[idx * k..(idx + 1) * k];
            let dst = &mut grad_g.values_mut()[f * cin..(f + 1) * cin];
            for (i, d) in dst.iter_mut().enumerate() {
                let dot: f64 = row[i * k..(i + 1) * k].iter().zip(basis).map(|(a, b)| a * b).sum();
                *d += w * dot;
            }
        }
    }
    Ok((grad_g, grad_coeff))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Activation {
    /// Leaky rectifier with slope 0.01 on the negative side.
    LeakyRelu,
    Identity,
}

impl Activation {
    const SLOPE: f64 = 0.01;

    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::LeakyRelu if x < 0.0 => Self::SLOPE * x,
            _ => x,
        }
    }

    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::LeakyRelu if pre < 0.0 => Self::SLOPE,
            _ => 1.0,
        }
    }
}

/// Composite vertex→facet→vertex block followed by a per-channel bias and an
/// activation.
pub fn vertex2vertex(
    geom: &ConvGeometry,
    x: &FeatureMap,
    bank_vf: &FilterBank,
    bank_fv: &FilterBank,
    bias: &[f64],
    activation: Activation,
) -> Result<FeatureMap> {
    if bank_vf.out_channels() != bank_fv.in_channels() {
        return Err(Error::Shape(format!(
            "vertex2facet produces {} channels, facet2vertex expects {}",
            bank_vf.out_channels(),
            bank_fv.in_channels()
        )));
    }
    if bias.len() != bank_fv.out_channels() {
        return Err(Error::Shape(format!(
            "bias has {} entries for {} output channels",
            bias.len(),
            bank_fv.out_channels()
        )));
    }
    let g = vertex2facet(geom, x, bank_vf)?;
    let mut out = facet2vertex(geom, &g, bank_fv)?;
    let c = out.channels();
    for (i, val) in out.values_mut().iter_mut().enumerate() {
        *val = activation.apply(*val + bias[i % c]);
    }
    Ok(out)
}

/// Learnable vertex2vertex block.
#[derive(Debug, Clone, PartialEq)]
pub struct V2VConv {
    pub vf: FilterBank,
    pub fv: FilterBank,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

/// Saved forward state of a [`V2VConv`].
#[derive(Debug, Clone)]
pub struct V2VContext {
    input: FeatureMap,
    f2v: Facet2VertexContext,
    pre_activation: FeatureMap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct V2VGrads {
    pub vf: Vec<f64>,
    pub fv: Vec<f64>,
    pub bias: Vec<f64>,
}

impl V2VConv {
    pub fn in_channels(&self) -> usize {
        self.vf.in_channels()
    }

    pub fn out_channels(&self) -> usize {
        self.fv.out_channels()
    }

    pub fn forward(&self, geom: &ConvGeometry, x: &FeatureMap) -> Result<(FeatureMap, V2VContext)> {
        let g = vertex2facet(geom, x, &self.vf)?;
        let (mut pre, f2v) = facet2vertex_with_context(geom, &g, &self.fv)?;
        let c = pre.channels();
        for (i, val) in pre.values_mut().iter_mut().enumerate() {
            *val += self.bias[i % c];
        }
        let mut out = pre.clone();
        for val in out.values_mut() {
            *val = self.activation.apply(*val);
        }
        Ok((
            out,
            V2VContext {
                input: x.clone(),
                f2v,
                pre_activation: pre,
            },
        ))
    }

    pub fn backward(
        &self,
        geom: &ConvGeometry,
        ctx: &V2VContext,
        grad_out: &FeatureMap,
    ) -> Result<(FeatureMap, V2VGrads)> {
        if grad_out.values().len() != ctx.pre_activation.values().len() {
            return Err(Error::Usage(
                "vertex2vertex backward called with a mismatched context".into(),
            ));
        }
        let c = grad_out.channels();
        let mut grad_pre = grad_out.clone();
        let mut grad_bias = vec![0.0; c];
        for (i, (g, &p)) in grad_pre
            .values_mut()
            .iter_mut()
            .zip(ctx.pre_activation.values())
            .enumerate()
        {
            *g *= self.activation.derivative(p);
            grad_bias[i % c] += *g;
        }
        let (grad_g, grad_fv) = backward_facet2vertex(geom, &ctx.f2v, &self.fv, &grad_pre)?;
        let (grad_x, grad_vf) = backward_vertex2facet(geom, &ctx.input, &self.vf, &grad_g)?;
        Ok((
            grad_x,
            V2VGrads {
                vf: grad_vf,
                fv: grad_fv,
                bias: grad_bias,
            },
        ))
    }
}
