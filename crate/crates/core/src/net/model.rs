use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::mask::{apply_mask, loss_l1, loss_l1_grad};
use super::normalize::InputStats;
use super::{ContextVector, CONTEXT_DIM};
use crate::conv::{
    backward_pool_max, backward_unpool, matmul, pool_max, unpool, Activation, ConvGeometry, FeatureMap, PoolContext,
    V2VContext, V2VConv,
};
use crate::error::{Error, Result};
use crate::mesh::{IcosphereHierarchy, VertexCluster};
use crate::spharm::{basis_len, FilterBank, MAX_DEGREE};

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Icosphere order of the input features.
    pub input_order: u32,
    pub in_channels: usize,
    /// Encoder width per level; the level count is `channels.len()`.
    pub channels: Vec<usize>,
    /// Spherical-harmonics degree of every filter.
    pub degree: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_order: 3,
            in_channels: 1,
            channels: vec![16, 32],
            degree: 3,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() {
            return Err(Error::Config("at least one encoder level is required".into()));
        }
        if self.channels.contains(&0) || self.in_channels == 0 {
            return Err(Error::Config("channel widths must be positive".into()));
        }
        if self.channels.len() as u32 > self.input_order {
            return Err(Error::Config(format!(
                "{} pooling levels need input order >= {}, got {}",
                self.channels.len(),
                self.channels.len(),
                self.input_order
            )));
        }
        if self.input_order > 6 {
            return Err(Error::Config(format!("input order {} exceeds 6", self.input_order)));
        }
        if self.degree > MAX_DEGREE {
            return Err(Error::Config(format!("degree {} exceeds {MAX_DEGREE}", self.degree)));
        }
        Ok(())
    }

    pub fn levels(&self) -> usize {
        self.channels.len()
    }

    /// Icosphere order of the bottleneck.
    pub fn bottleneck_order(&self) -> u32 {
        self.input_order - self.channels.len() as u32
    }

    /// Input and output width of the two blocks at each encoder level.
    fn encoder_widths(&self) -> Vec<[(usize, usize); 2]> {
        (0..self.levels())
            .map(|i| {
                let cin = if i == 0 { self.in_channels } else { self.channels[i - 1] };
                let c = self.channels[i];
                [(cin, c), (c, c)]
            })
            .collect()
    }

    /// Decoder block widths in application order (deepest level first).
    fn decoder_widths(&self) -> Vec<[(usize, usize); 2]> {
        (0..self.levels())
            .rev()
            .map(|j| {
                let c = self.channels[j];
                let cout = if j == 0 { self.in_channels } else { self.channels[j - 1] };
                [(c, c), (c, cout)]
            })
            .collect()
    }
}

/// Convolution geometry of every level plus the pooling clusters, shared
/// between models built on the same mesh hierarchy.
#[derive(Debug)]
pub struct Topology {
    input_order: u32,
    // geometry[k] for orders bottleneck+1 ..= input_order, indexed by order
    geometry: Vec<Option<ConvGeometry>>,
    clusters: Vec<Option<VertexCluster>>,
}

impl Topology {
    pub fn new(config: &ModelConfig, hierarchy: &IcosphereHierarchy) -> Result<Self> {
        config.validate()?;
        if hierarchy.max_order() < config.input_order {
            return Err(Error::Config(format!(
                "hierarchy reaches order {}, model needs {}",
                hierarchy.max_order(),
                config.input_order
            )));
        }
        let top = config.input_order as usize;
        let mut geometry: Vec<Option<ConvGeometry>> = (0..=top).map(|_| None).collect();
        let mut clusters: Vec<Option<VertexCluster>> = (0..=top).map(|_| None).collect();
        for k in config.bottleneck_order() + 1..=config.input_order {
            geometry[k as usize] = Some(ConvGeometry::new(hierarchy.level(k), k, config.degree)?);
            clusters[k as usize] = Some(hierarchy.cluster(k).clone());
        }
        Ok(Self {
            input_order: config.input_order,
            geometry,
            clusters,
        })
    }

    fn geometry(&self, order: u32) -> &ConvGeometry {
        self.geometry[order as usize]
            .as_ref()
            .expect("order within model range")
    }

    fn cluster(&self, order: u32) -> &VertexCluster {
        self.clusters[order as usize]
            .as_ref()
            .expect("order within model range")
    }

    pub fn input_vertices(&self) -> usize {
        self.geometry(self.input_order).vertex_count()
    }
}

/// Learnable parameter classes, for per-class gradient checks and weight
/// decay selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Sh,
    Bias,
    MaskToken,
    ContextProjection,
}

/// One gradient array per parameter tensor, in [`MmnModel::parameters`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<Vec<f64>>);

impl Gradients {
    pub fn zeros_like(model: &MmnModel) -> Self {
        Self(model.parameters().iter().map(|(_, p)| vec![0.0; p.len()]).collect())
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for x in self.0.iter_mut().flatten() {
            *x *= s;
        }
    }
}

/// Masked mesh network: hourglass encoder/decoder of vertex2vertex blocks
/// with a phenotype context injected at the bottleneck.
#[derive(Debug, Clone)]
pub struct MmnModel {
    config: ModelConfig,
    topology: Arc<Topology>,
    encoder: Vec<[V2VConv; 2]>,
    decoder: Vec<[V2VConv; 2]>,
    mask_token: Vec<f64>,
    // (D + V_C) × D row-major; rows D.. carry the context
    context_proj: Vec<f64>,
    stats: InputStats,
}

/// Saved activations of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    encoder: Vec<([V2VContext; 2], PoolContext)>,
    bottleneck_in: FeatureMap,
    context: [f64; CONTEXT_DIM],
    decoder: Vec<[V2VContext; 2]>,
}

fn block(degree: usize, cin: usize, cout: usize, activation: Activation, rng: &mut impl Rng) -> Result<V2VConv> {
    // variance-preserving scales given Σ_k Y_k² = K/4π at any angle
    let s = basis_len(degree) as f64 / (4.0 * std::f64::consts::PI);
    let std_vf = (1.0 / (3.0 * cin as f64 * s)).sqrt();
    let gain = if activation == Activation::LeakyRelu { 2.0 } else { 1.0 };
    let std_fv = (gain / (cout as f64 * s)).sqrt();
    Ok(V2VConv {
        vf: FilterBank::random(degree, cin, cout, std_vf, rng)?,
        fv: FilterBank::random(degree, cout, cout, std_fv, rng)?,
        bias: vec![0.0; cout],
        activation,
    })
}

impl MmnModel {
    /// Initializes from stream 2 of a ChaCha8 generator, which the training
    /// loop leaves unused.
    pub fn seeded(config: ModelConfig, seed: u64) -> Result<Self> {
        let hierarchy = crate::mesh::build_hierarchy(config.input_order)?;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(2);
        Self::new(config, &hierarchy, &mut rng)
    }

    pub fn new(config: ModelConfig, hierarchy: &IcosphereHierarchy, rng: &mut impl Rng) -> Result<Self> {
        let topology = Arc::new(Topology::new(&config, hierarchy)?);
        let d = hierarchy.level(config.bottleneck_order()).vertex_count();
        let mut encoder = Vec::new();
        for [(a, b), (c, e)] in config.encoder_widths() {
            encoder.push([
                block(config.degree, a, b, Activation::LeakyRelu, rng)?,
                block(config.degree, c, e, Activation::LeakyRelu, rng)?,
            ]);
        }
        let mut decoder = Vec::new();
        let last = config.levels() - 1;
        for (s, [(a, b), (c, e)]) in config.decoder_widths().into_iter().enumerate() {
            let act = if s == last {
                Activation::Identity
            } else {
                Activation::LeakyRelu
            };
            decoder.push([
                block(config.degree, a, b, Activation::LeakyRelu, rng)?,
                block(config.degree, c, e, act, rng)?,
            ]);
        }
        let mut context_proj = vec![0.0; (d + CONTEXT_DIM) * d];
        for i in 0..d {
            context_proj[i * d + i] = 1.0;
        }
        let normal = Normal::new(0.0, 0.1).expect("valid std");
        for x in context_proj[d * d..].iter_mut() {
            *x = normal.sample(rng);
        }
        Ok(Self {
            mask_token: vec![0.0; config.in_channels],
            stats: InputStats::identity(config.in_channels),
            config,
            topology,
            encoder,
            decoder,
            context_proj,
        })
    }

    /// Rebuilds a model from serialized parameter arrays (see [`Self::parameters`]).
    pub fn from_parts(
        config: ModelConfig,
        hierarchy: &IcosphereHierarchy,
        params: &[Vec<f64>],
        stats: InputStats,
    ) -> Result<Self> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut model = Self::new(config, hierarchy, &mut rng)?;
        model.set_parameters(params)?;
        if stats.channels() != model.config.in_channels {
            return Err(Error::Shape(
                "normalization stats do not match the input channels".into(),
            ));
        }
        model.stats = stats;
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn stats(&self) -> &InputStats {
        &self.stats
    }

    pub fn set_stats(&mut self, stats: InputStats) -> Result<()> {
        if stats.channels() != self.config.in_channels {
            return Err(Error::Shape(format!(
                "stats for {} channels, model has {}",
                stats.channels(),
                self.config.in_channels
            )));
        }
        self.stats = stats;
        Ok(())
    }

    pub fn mask_token(&self) -> &[f64] {
        &self.mask_token
    }

    pub fn input_vertices(&self) -> usize {
        self.topology.input_vertices()
    }

    /// Same parameters on a different mesh hierarchy of equal shape (used to
    /// check covariance under vertex relabeling).
    pub fn with_hierarchy(&self, hierarchy: &IcosphereHierarchy) -> Result<Self> {
        let mut out = self.clone();
        out.topology = Arc::new(Topology::new(&self.config, hierarchy)?);
        Ok(out)
    }

    /// Every learnable tensor in declaration order: encoder levels (per
    /// block: vertex→facet coefficients, facet→vertex coefficients, bias),
    /// decoder levels in application order, mask token, context projection.
    pub fn parameters(&self) -> Vec<(ParamKind, &[f64])> {
        let mut out: Vec<(ParamKind, &[f64])> = Vec::new();
        for conv in self.encoder.iter().chain(&self.decoder).flatten() {
            out.push((ParamKind::Sh, conv.vf.coefficients()));
            out.push((ParamKind::Sh, conv.fv.coefficients()));
            out.push((ParamKind::Bias, &conv.bias));
        }
        out.push((ParamKind::MaskToken, &self.mask_token));
        out.push((ParamKind::ContextProjection, &self.context_proj));
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for conv in self.encoder.iter_mut().chain(self.decoder.iter_mut()).flatten() {
            out.push(conv.vf.coefficients_mut());
            out.push(conv.fv.coefficients_mut());
            out.push(&mut conv.bias);
        }
        out.push(&mut self.mask_token);
        out.push(&mut self.context_proj);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|(_, p)| p.len()).sum()
    }

    pub fn set_parameters(&mut self, params: &[Vec<f64>]) -> Result<()> {
        let mut slots = self.parameters_mut();
        if slots.len() != params.len() {
            return Err(Error::Shape(format!(
                "model has {} parameter tensors, got {}",
                slots.len(),
                params.len()
            )));
        }
        for (i, (dst, src)) in slots.iter_mut().zip(params).enumerate() {
            if dst.len() != src.len() {
                return Err(Error::Shape(format!(
                    "parameter tensor {i} has {} values, got {}",
                    dst.len(),
                    src.len()
                )));
            }
            dst.copy_from_slice(src);
        }
        Ok(())
    }

    fn check_input(&self, x: &FeatureMap) -> Result<()> {
        if x.level() != self.config.input_order
            || x.vertices() != self.input_vertices()
            || x.channels() != self.config.in_channels
        {
            return Err(Error::Shape(format!(
                "model expects {} channels x {} vertices at order {}, got {} x {} at order {}",
                self.config.in_channels,
                self.input_vertices(),
                self.config.input_order,
                x.channels(),
                x.vertices(),
                x.level()
            )));
        }
        Ok(())
    }

    /// Reconstruction of a masked, normalized input given a subject context.
    pub fn forward(&self, x_masked: &FeatureMap, ctx: &ContextVector) -> Result<FeatureMap> {
        let c = self.stats.context_features(ctx)?;
        self.forward_features(x_masked, &c).map(|(out, _)| out)
    }

    /// Forward pass on already-normalized context features, keeping every
    /// activation needed by [`Self::backward`].
    pub fn forward_features(&self, x: &FeatureMap, ctx: &[f64; CONTEXT_DIM]) -> Result<(FeatureMap, ForwardTrace)> {
        self.check_input(x)?;
        let top = self.config.input_order;
        let mut h = x.clone();
        let mut enc = Vec::with_capacity(self.encoder.len());
        for (i, [a, b]) in self.encoder.iter().enumerate() {
            let order = top - i as u32;
            let geom = self.topology.geometry(order);
            let (h1, c1) = a.forward(geom, &h)?;
            let (h2, c2) = b.forward(geom, &h1)?;
            let (hp, pc) = pool_max(&h2, self.topology.cluster(order))?;
            enc.push(([c1, c2], pc));
            h = hp;
        }
        let bottleneck_in = h;
        h = self.bottleneck(&bottleneck_in, ctx);
        let mut dec = Vec::with_capacity(self.decoder.len());
        let bottom = self.config.bottleneck_order();
        for (s, [a, b]) in self.decoder.iter().enumerate() {
            let order = bottom + 1 + s as u32;
            let geom = self.topology.geometry(order);
            let hu = unpool(&h, self.topology.cluster(order))?;
            let (h1, c1) = a.forward(geom, &hu)?;
            let (h2, c2) = b.forward(geom, &h1)?;
            dec.push([c1, c2]);
            h = h2;
        }
        Ok((
            h,
            ForwardTrace {
                encoder: enc,
                bottleneck_in,
                context: *ctx,
                decoder: dec,
            },
        ))
    }

    /// `Z'ᵀ = [Z | 1⊗ctx]ᵀ·P` in vertex-major layout: each bottleneck vertex
    /// mixes all bottleneck vertices plus a context term shared by every channel.
    fn bottleneck(&self, z: &FeatureMap, ctx: &[f64; CONTEXT_DIM]) -> FeatureMap {
        let d = z.vertices();
        let c = z.channels();
        let p = &self.context_proj;
        let mixed = matmul(&p[..d * d], true, z.values(), false, d, d, c);
        let mut out = FeatureMap::from_vertex_major(c, d, z.level(), mixed).expect("bottleneck shape");
        for v in 0..d {
            let shift: f64 = (0..CONTEXT_DIM).map(|j| p[(d + j) * d + v] * ctx[j]).sum();
            for x in out.vertex_mut(v) {
                *x += shift;
            }
        }
        out
    }

    /// Reverse-mode pass. Returns parameter gradients (in
    /// [`Self::parameters`] order, mask token entry left at zero) and the
    /// gradient w.r.t. the network input.
    pub fn backward(&self, trace: &ForwardTrace, grad_out: &FeatureMap) -> Result<(Gradients, FeatureMap)> {
        if trace.encoder.len() != self.encoder.len() || trace.decoder.len() != self.decoder.len() {
            return Err(Error::Usage(
                "backward called with a trace from a different model".into(),
            ));
        }
        let mut grads = Gradients::zeros_like(self);
        let n_enc = self.encoder.len() * 2;
        let slot = |block: usize| block * 3;
        let bottom = self.config.bottleneck_order();
        let mut g = grad_out.clone();
        for (s, ([a, b], [c1, c2])) in self.decoder.iter().zip(&trace.decoder).enumerate().rev() {
            let order = bottom + 1 + s as u32;
            let geom = self.topology.geometry(order);
            let (g1, gb) = b.backward(geom, c2, &g)?;
            let (g0, ga) = a.backward(geom, c1, &g1)?;
            store(&mut grads, slot(n_enc + 2 * s + 1), gb);
            store(&mut grads, slot(n_enc + 2 * s), ga);
            g = backward_unpool(self.topology.cluster(order), &g0)?;
        }
        g = self.backward_bottleneck(trace, &g, &mut grads);
        let top = self.config.input_order;
        for (i, ([a, b], ([c1, c2], pc))) in self.encoder.iter().zip(&trace.encoder).enumerate().rev() {
            let order = top - i as u32;
            let geom = self.topology.geometry(order);
            let gp = backward_pool_max(pc, &g)?;
            let (g1, gb) = b.backward(geom, c2, &gp)?;
            let (g0, ga) = a.backward(geom, c1, &g1)?;
            store(&mut grads, slot(2 * i + 1), gb);
            store(&mut grads, slot(2 * i), ga);
            g = g0;
        }
        Ok((grads, g))
    }

    fn backward_bottleneck(&self, trace: &ForwardTrace, g: &FeatureMap, grads: &mut Gradients) -> FeatureMap {
        let z = &trace.bottleneck_in;
        let d = z.vertices();
        let c = z.channels();
        let p = &self.context_proj;
        let gz = matmul(&p[..d * d], false, g.values(), false, d, d, c);
        let gp = grads.0.last_mut().expect("context projection slot");
        let top = matmul(z.values(), false, g.values(), true, d, c, d);
        gp[..d * d].copy_from_slice(&top);
        for v in 0..d {
            let s: f64 = g.vertex(v).iter().sum();
            for j in 0..CONTEXT_DIM {
                gp[(d + j) * d + v] = trace.context[j] * s;
            }
        }
        FeatureMap::from_vertex_major(c, d, z.level(), gz).expect("bottleneck shape")
    }

    /// Masks `x` (normalized) with the learned token, reconstructs, and
    /// returns the masked ℓ1 loss with gradients for every parameter
    /// including the mask token.
    pub fn loss_and_gradients(
        &self,
        x: &FeatureMap,
        ctx: &[f64; CONTEXT_DIM],
        mask: &[usize],
    ) -> Result<(f64, Gradients)> {
        let xm = apply_mask(x, mask, &self.mask_token)?;
        let (x_hat, trace) = self.forward_features(&xm, ctx)?;
        let loss = loss_l1(&x_hat, x, mask)?;
        let g_out = loss_l1_grad(&x_hat, x, mask)?;
        let (mut grads, g_in) = self.backward(&trace, &g_out)?;
        let token_slot = grads.0.len() - 2;
        let gt = &mut grads.0[token_slot];
        for &v in mask {
            for (t, x) in gt.iter_mut().zip(g_in.vertex(v)) {
                *t += x;
            }
        }
        Ok((loss, grads))
    }

    /// Masked ℓ1 loss without gradients.
    pub fn masked_loss(&self, x: &FeatureMap, ctx: &[f64; CONTEXT_DIM], mask: &[usize]) -> Result<f64> {
        let xm = apply_mask(x, mask, &self.mask_token)?;
        let (x_hat, _) = self.forward_features(&xm, ctx)?;
        loss_l1(&x_hat, x, mask)
    }
}

fn store(grads: &mut Gradients, start: usize, g: crate::conv::V2VGrads) {
    grads.0[start] = g.vf;
    grads.0[start + 1] = g.fv;
    grads.0[start + 2] = g.bias;
}
