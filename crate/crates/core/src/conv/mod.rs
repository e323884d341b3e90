//! Mesh convolutions (vertex→facet, facet→vertex and their composite),
//! cluster max-pooling / broadcast unpooling, and the matching reverse-mode
//! gradients.
//!
//! Feature maps are stored vertex-major: the `C` channel values of a vertex
//! are contiguous.

mod mesh_conv;
mod pool;

use ndarray::linalg::general_mat_mul;
use ndarray::ArrayView2;
use ndarray::ArrayViewMut2;

pub use mesh_conv::{
    backward_facet2vertex, backward_vertex2facet, facet2vertex, facet2vertex_with_context, vertex2facet, vertex2vertex,
    Activation, ConvGeometry, Facet2VertexContext, V2VContext, V2VConv, V2VGrads, VERTEX2FACET_ANGLES,
};
pub use pool::{backward_pool_max, backward_unpool, pool_max, unpool, PoolContext};

use crate::error::{Error, Result};

/// Per-vertex features, `C × V`, tagged with the icosphere order they live on.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    channels: usize,
    vertices: usize,
    level: u32,
    values: Vec<f64>,
}

impl FeatureMap {
    pub fn zeros(channels: usize, vertices: usize, level: u32) -> Self {
        Self {
            channels,
            vertices,
            level,
            values: vec![0.0; channels * vertices],
        }
    }

    /// From vertex-major values (`values[v * channels + c]`).
    pub fn from_vertex_major(channels: usize, vertices: usize, level: u32, values: Vec<f64>) -> Result<Self> {
        if values.len() != channels * vertices {
            return Err(Error::Shape(format!(
                "{} values for {channels} channels x {vertices} vertices",
                values.len()
            )));
        }
        Ok(Self {
            channels,
            vertices,
            level,
            values,
        })
    }

    /// From one array per channel.
    pub fn from_channels(channels: &[Vec<f64>], level: u32) -> Result<Self> {
        let c = channels.len();
        let v = channels.first().map_or(0, Vec::len);
        if channels.iter().any(|ch| ch.len() != v) {
            return Err(Error::Shape("channels have different vertex counts".into()));
        }
        let mut values = vec![0.0; c * v];
        for (ci, ch) in channels.iter().enumerate() {
            for (vi, &x) in ch.iter().enumerate() {
                values[vi * c + ci] = x;
            }
        }
        Ok(Self {
            channels: c,
            vertices: v,
            level,
            values,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn vertices(&self) -> usize {
        self.vertices
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn get(&self, c: usize, v: usize) -> f64 {
        self.values[v * self.channels + c]
    }

    pub fn set(&mut self, c: usize, v: usize, x: f64) {
        self.values[v * self.channels + c] = x;
    }

    /// All channel values at vertex `v`.
    pub fn vertex(&self, v: usize) -> &[f64] {
        &self.values[v * self.channels..(v + 1) * self.channels]
    }

    pub fn vertex_mut(&mut self, v: usize) -> &mut [f64] {
        &mut self.values[v * self.channels..(v + 1) * self.channels]
    }

    pub fn channel(&self, c: usize) -> Vec<f64> {
        (0..self.vertices).map(|v| self.get(c, v)).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|x| x.is_finite())
    }

    /// Inner product over all entries.
    pub fn dot(&self, other: &FeatureMap) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }
}

/// Per-facet features, `C × F`, facet-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FacetFeatureMap {
    channels: usize,
    facets: usize,
    values: Vec<f64>,
}

impl FacetFeatureMap {
    pub fn zeros(channels: usize, facets: usize) -> Self {
        Self {
            channels,
            facets,
            values: vec![0.0; channels * facets],
        }
    }

    pub fn from_facet_major(channels: usize, facets: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != channels * facets {
            return Err(Error::Shape(format!(
                "{} values for {channels} channels x {facets} facets",
                values.len()
            )));
        }
        Ok(Self {
            channels,
            facets,
            values,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn facets(&self) -> usize {
        self.facets
    }

    pub fn get(&self, c: usize, f: usize) -> f64 {
        self.values[f * self.channels + c]
    }

    pub fn facet(&self, f: usize) -> &[f64] {
        &self.values[f * self.channels..(f + 1) * self.channels]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn dot(&self, other: &FacetFeatureMap) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }
}

/// `out[m×n] = op(a) · op(b)` for row-major slices; `op` transposes when the
/// flag is set. Shapes are the post-transpose shapes.
pub(crate) fn matmul(a: &[f64], ta: bool, b: &[f64], tb: bool, m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    matmul_into(a, ta, b, tb, m, k, n, &mut out, 0.0);
    out
}

/// `out = op(a)·op(b) + beta·out`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn matmul_into(
    a: &[f64],
    ta: bool,
    b: &[f64],
    tb: bool,
    m: usize,
    k: usize,
    n: usize,
    out: &mut [f64],
    beta: f64,
) {
    let av = if ta {
        ArrayView2::from_shape((k, m), a).expect("lhs shape").reversed_axes()
    } else {
        ArrayView2::from_shape((m, k), a).expect("lhs shape")
    };
    let bv = if tb {
        ArrayView2::from_shape((n, k), b).expect("rhs shape").reversed_axes()
    } else {
        ArrayView2::from_shape((k, n), b).expect("rhs shape")
    };
    let mut ov = ArrayViewMut2::from_shape((m, n), out).expect("out shape");
    general_mat_mul(1.0, &av, &bv, beta, &mut ov);
}
