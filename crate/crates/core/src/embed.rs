//! Variational graph autoencoder with a normalized inner-product decoder.
//!
//! Two graph-convolution layers over the symmetrically normalized adjacency
//! (with self-loops) share a ReLU hidden layer; two linear heads produce
//! per-node posterior means and log-variances. Training minimizes the binary
//! cross-entropy of the cosine-sigmoid edge scores, optionally plus a
//! standard-normal prior KL, with hand-derived gradients and an inline Adam.
//! Each unordered node pair contributes once to the loss; the diagonal is
//! excluded.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::graph::{Graph, GraphError};
use crate::seed::fnv1a64;

/// Norm floor used in the cosine so near-zero rows stay finite.
const NORM_CLAMP: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("training requires at least 2 nodes")]
    TooFewNodes,
    #[error("invalid encoder config: {0}")]
    InvalidConfig(String),
    #[error("non-finite loss at epoch {epoch}; reduce the learning rate")]
    NonFiniteLoss { epoch: usize },
    #[error("embedding row {0} has zero norm")]
    ZeroNormRow(usize),
    #[error("embedding contains non-finite entries")]
    NonFiniteEmbedding,
    #[error("decoder threshold {0} must lie strictly inside (0, 1)")]
    InvalidThreshold(f64),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// How the reconstruction loss treats non-edges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NegativeSampling {
    /// All N(N-1)/2 pairs every epoch.
    DenseFull,
    /// All positive edges plus `ratio` sampled non-edges per positive,
    /// redrawn each epoch.
    Sampled { ratio: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    pub latent_dim: usize,
    pub hidden_dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Weight on the standard-normal prior KL; zero keeps the pure
    /// reconstruction loss.
    pub prior_kl_weight: f64,
    pub negative_sampling: NegativeSampling,
}

/// Hidden width rule: twice the feature count, capped at 256.
pub fn default_hidden_dim(n_features: usize) -> usize {
    (2 * n_features).clamp(1, 256)
}

impl EncoderConfig {
    /// Defaults matched to the experiments: 200 epochs, Adam at 0.01, hidden
    /// width twice the feature count.
    pub fn for_graph(graph: &Graph, latent_dim: usize, seed: u64) -> Self {
        let f = graph.features().map_or(graph.n_nodes(), |m| m.ncols());
        Self {
            latent_dim,
            hidden_dim: default_hidden_dim(f),
            epochs: 200,
            learning_rate: 0.01,
            seed,
            prior_kl_weight: 0.0,
            negative_sampling: NegativeSampling::DenseFull,
        }
    }

    pub fn validate(&self) -> Result<(), EmbedError> {
        if self.latent_dim == 0 {
            return Err(EmbedError::InvalidConfig("latent_dim must be >= 1".into()));
        }
        if self.hidden_dim == 0 {
            return Err(EmbedError::InvalidConfig("hidden_dim must be >= 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(EmbedError::InvalidConfig(format!(
                "learning_rate {} must be finite and nonnegative",
                self.learning_rate
            )));
        }
        if !(self.prior_kl_weight >= 0.0 && self.prior_kl_weight.is_finite()) {
            return Err(EmbedError::InvalidConfig(
                "prior_kl_weight must be finite and nonnegative".into(),
            ));
        }
        if let NegativeSampling::Sampled { ratio } = self.negative_sampling {
            if !(ratio > 0.0 && ratio.is_finite()) {
                return Err(EmbedError::InvalidConfig(format!(
                    "negative sampling ratio {ratio} must be positive"
                )));
            }
        }
        Ok(())
    }

    /// Stable fingerprint of the hyperparameters, used for cache keys and
    /// embedding provenance.
    pub fn fingerprint(&self) -> u64 {
        let canon = format!(
            "latent={};hidden={};epochs={};lr={:?};seed={};beta={:?};neg={:?}",
            self.latent_dim,
            self.hidden_dim,
            self.epochs,
            self.learning_rate,
            self.seed,
            self.prior_kl_weight,
            self.negative_sampling
        );
        fnv1a64(canon.as_bytes())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Provenance {
    pub config_hash: u64,
    pub seed: u64,
}

/// Per-node latent vectors (posterior means after training).
#[derive(Debug, Clone, PartialEq)]
pub struct LatentEmbedding {
    vectors: DMatrix<f64>,
    provenance: Provenance,
}

impl LatentEmbedding {
    pub fn new(vectors: DMatrix<f64>, provenance: Provenance) -> Result<Self, EmbedError> {
        if !vectors.iter().all(|v| v.is_finite()) {
            return Err(EmbedError::NonFiniteEmbedding);
        }
        Ok(Self {
            vectors,
            provenance,
        })
    }

    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn n_points(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn latent_dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainedDecoder {
    edge_threshold: f64,
}

impl TrainedDecoder {
    pub fn new(edge_threshold: f64) -> Result<Self, EmbedError> {
        if !(edge_threshold > 0.0 && edge_threshold < 1.0) {
            return Err(EmbedError::InvalidThreshold(edge_threshold));
        }
        Ok(Self { edge_threshold })
    }

    pub fn edge_threshold(&self) -> f64 {
        self.edge_threshold
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub embedding: LatentEmbedding,
    pub decoder: TrainedDecoder,
    pub loss_trace: Vec<f64>,
}

/// Symmetrically normalized adjacency with self-loops, stored as weighted
/// neighbor lists so propagation costs O(|E| + N) per column.
struct NormAdj {
    rows: Vec<Vec<(usize, f64)>>,
}

impl NormAdj {
    fn from_graph(graph: &Graph) -> Self {
        let n = graph.n_nodes();
        let mut deg_tilde = vec![1.0f64; n];
        for (u, v) in graph.edges() {
            deg_tilde[u] += 1.0;
            deg_tilde[v] += 1.0;
        }
        let inv_sqrt: Vec<f64> = deg_tilde.iter().map(|d| 1.0 / d.sqrt()).collect();
        let mut rows: Vec<Vec<(usize, f64)>> = (0..n)
            .map(|i| vec![(i, inv_sqrt[i] * inv_sqrt[i])])
            .collect();
        for (u, v) in graph.edges() {
            let w = inv_sqrt[u] * inv_sqrt[v];
            rows[u].push((v, w));
            rows[v].push((u, w));
        }
        for row in &mut rows {
            row.sort_unstable_by_key(|&(j, _)| j);
        }
        Self { rows }
    }

    fn propagate(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.rows.len();
        let c = m.ncols();
        let mut out = DMatrix::zeros(n, c);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, w) in row {
                for t in 0..c {
                    out[(i, t)] += w * m[(j, t)];
                }
            }
        }
        out
    }
}

/// Dense edge-membership bits for O(1) lookups in the dense loss.
struct AdjBits {
    n: usize,
    bits: Vec<bool>,
}

impl AdjBits {
    fn from_graph(graph: &Graph) -> Self {
        let n = graph.n_nodes();
        let mut bits = vec![false; n * n];
        for (u, v) in graph.edges() {
            bits[u * n + v] = true;
            bits[v * n + u] = true;
        }
        Self { n, bits }
    }

    fn has(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.n + j]
    }
}

#[derive(Clone)]
struct Params {
    w0: DMatrix<f64>,
    w1m: DMatrix<f64>,
    w1s: DMatrix<f64>,
}

impl Params {
    fn glorot(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let a = (6.0 / (rows + cols) as f64).sqrt();
        DMatrix::from_fn(rows, cols, |_, _| rng.random::<f64>() * 2.0 * a - a)
    }

    fn init(f: usize, h: usize, d: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            w0: Self::glorot(f, h, rng),
            w1m: Self::glorot(h, d, rng),
            w1s: Self::glorot(h, d, rng),
        }
    }
}

struct Forward {
    z0: DMatrix<f64>,
    q: DMatrix<f64>,
    mu: DMatrix<f64>,
    lv: DMatrix<f64>,
    v: DMatrix<f64>,
}

fn forward(params: &Params, p: &DMatrix<f64>, na: &NormAdj, noise: Option<&DMatrix<f64>>) -> Forward {
    let z0 = p * &params.w0;
    let h = z0.map(|v| v.max(0.0));
    let q = na.propagate(&h);
    let mu = &q * &params.w1m;
    let lv = &q * &params.w1s;
    let v = match noise {
        Some(e) => &mu + e.component_mul(&lv.map(|x| (0.5 * x).exp())),
        None => mu.clone(),
    };
    Forward { z0, q, mu, lv, v }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn row_norms(v: &DMatrix<f64>) -> Vec<f64> {
    (0..v.nrows()).map(|i| v.row(i).norm()).collect()
}

/// Reconstruction loss over the given pair set and its gradient with respect
/// to the latent rows.
fn decoder_loss_and_grad_v(
    v: &DMatrix<f64>,
    adj: &AdjBits,
    sampled: Option<&[(usize, usize, f64)]>,
) -> (f64, DMatrix<f64>) {
    let n = v.nrows();
    let d = v.ncols();
    let norms = row_norms(v);
    let clamped: Vec<f64> = norms.iter().map(|&x| x.max(NORM_CLAMP)).collect();
    let mut loss = 0.0;
    let mut g_v = DMatrix::zeros(n, d);
    let mut acc = |i: usize, j: usize, e: f64| {
        let mut dot = 0.0;
        for t in 0..d {
            dot += v[(i, t)] * v[(j, t)];
        }
        let c = dot / (clamped[i] * clamped[j]);
        let s = sigmoid(c);
        loss -= e * s.ln() + (1.0 - e) * (1.0 - s).ln();
        let gc = s - e;
        for t in 0..d {
            let mut gi = v[(j, t)] / (clamped[i] * clamped[j]);
            let mut gj = v[(i, t)] / (clamped[i] * clamped[j]);
            if norms[i] > NORM_CLAMP {
                gi -= c * v[(i, t)] / (clamped[i] * clamped[i]);
            }
            if norms[j] > NORM_CLAMP {
                gj -= c * v[(j, t)] / (clamped[j] * clamped[j]);
            }
            g_v[(i, t)] += gc * gi;
            g_v[(j, t)] += gc * gj;
        }
    };
    match sampled {
        None => {
            for i in 0..n {
                for j in (i + 1)..n {
                    acc(i, j, if adj.has(i, j) { 1.0 } else { 0.0 });
                }
            }
        }
        Some(pairs) => {
            for &(i, j, e) in pairs {
                acc(i, j, e);
            }
        }
    }
    (loss, g_v)
}

struct Grads {
    w0: DMatrix<f64>,
    w1m: DMatrix<f64>,
    w1s: DMatrix<f64>,
}

fn loss_and_gradients(
    params: &Params,
    fwd: &Forward,
    p: &DMatrix<f64>,
    na: &NormAdj,
    adj: &AdjBits,
    sampled: Option<&[(usize, usize, f64)]>,
    noise: Option<&DMatrix<f64>>,
    beta: f64,
) -> (f64, Grads) {
    let (mut loss, g_v) = decoder_loss_and_grad_v(&fwd.v, adj, sampled);
    let mut g_mu = g_v.clone();
    let mut g_lv = match noise {
        Some(e) => {
            let s = fwd.lv.map(|x| (0.5 * x).exp());
            g_v.component_mul(e).component_mul(&s) * 0.5
        }
        None => DMatrix::zeros(g_v.nrows(), g_v.ncols()),
    };
    if beta > 0.0 {
        let mut kl = 0.0;
        for i in 0..fwd.mu.nrows() {
            for t in 0..fwd.mu.ncols() {
                let m = fwd.mu[(i, t)];
                let l = fwd.lv[(i, t)];
                kl += 0.5 * (l.exp() + m * m - 1.0 - l);
                g_mu[(i, t)] += beta * m;
                g_lv[(i, t)] += beta * 0.5 * (l.exp() - 1.0);
            }
        }
        loss += beta * kl;
    }
    let g_w1m = fwd.q.transpose() * &g_mu;
    let g_w1s = fwd.q.transpose() * &g_lv;
    let g_q = &g_mu * params.w1m.transpose() + &g_lv * params.w1s.transpose();
    let g_h = na.propagate(&g_q);
    let g_z0 = g_h.zip_map(&fwd.z0, |g, z| if z > 0.0 { g } else { 0.0 });
    let g_w0 = p.transpose() * g_z0;
    (
        loss,
        Grads {
            w0: g_w0,
            w1m: g_w1m,
            w1s: g_w1s,
        },
    )
}

struct Adam {
    m: DMatrix<f64>,
    v: DMatrix<f64>,
}

impl Adam {
    fn new(rows: usize, cols: usize) -> Self {
        Self {
            m: DMatrix::zeros(rows, cols),
            v: DMatrix::zeros(rows, cols),
        }
    }

    fn update(&mut self, param: &mut DMatrix<f64>, grad: &DMatrix<f64>, lr: f64, t: usize) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        let t = t as i32;
        for i in 0..param.nrows() {
            for j in 0..param.ncols() {
                let g = grad[(i, j)];
                self.m[(i, j)] = B1 * self.m[(i, j)] + (1.0 - B1) * g;
                self.v[(i, j)] = B2 * self.v[(i, j)] + (1.0 - B2) * g * g;
                let m_hat = self.m[(i, j)] / (1.0 - B1.powi(t));
                let v_hat = self.v[(i, j)] / (1.0 - B2.powi(t));
                param[(i, j)] -= lr * m_hat / (v_hat.sqrt() + EPS);
            }
        }
    }
}

fn standard_normal_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = StandardNormal.sample(rng);
        }
    }
    m
}

fn sample_pairs(
    positives: &[(usize, usize)],
    ratio: f64,
    n: usize,
    adj: &AdjBits,
    rng: &mut ChaCha8Rng,
) -> Vec<(usize, usize, f64)> {
    let mut pairs: Vec<(usize, usize, f64)> =
        positives.iter().map(|&(i, j)| (i, j, 1.0)).collect();
    let target = (positives.len() as f64 * ratio).round() as usize;
    let mut added = 0;
    let mut guard = 0usize;
    let guard_max = 100 * target + 100;
    while added < target && guard < guard_max {
        guard += 1;
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        if i == j || adj.has(i, j) {
            continue;
        }
        pairs.push((i.min(j), i.max(j), 0.0));
        added += 1;
    }
    pairs
}

/// Trains the autoencoder and returns the posterior-mean embedding, the
/// decoder threshold (mean edge score over existing edges), and the
/// per-epoch loss trace. Fully deterministic for a fixed seed.
pub fn train_vgae(graph: &Graph, config: &EncoderConfig) -> Result<TrainOutput, EmbedError> {
    config.validate()?;
    let n = graph.n_nodes();
    if n < 2 {
        return Err(EmbedError::TooFewNodes);
    }
    let x = graph.features_or_identity();
    let na = NormAdj::from_graph(graph);
    let adj = AdjBits::from_graph(graph);
    let p = na.propagate(&x);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = Params::init(x.ncols(), config.hidden_dim, config.latent_dim, &mut rng);
    let positives: Vec<(usize, usize)> = graph.edges().collect();

    let mut adam_w0 = Adam::new(params.w0.nrows(), params.w0.ncols());
    let mut adam_w1m = Adam::new(params.w1m.nrows(), params.w1m.ncols());
    let mut adam_w1s = Adam::new(params.w1s.nrows(), params.w1s.ncols());
    let mut trace = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let noise = standard_normal_matrix(n, config.latent_dim, &mut rng);
        let sampled = match config.negative_sampling {
            NegativeSampling::DenseFull => None,
            NegativeSampling::Sampled { ratio } => {
                Some(sample_pairs(&positives, ratio, n, &adj, &mut rng))
            }
        };
        let fwd = forward(&params, &p, &na, Some(&noise));
        let (loss, grads) = loss_and_gradients(
            &params,
            &fwd,
            &p,
            &na,
            &adj,
            sampled.as_deref(),
            Some(&noise),
            config.prior_kl_weight,
        );
        if !loss.is_finite() {
            return Err(EmbedError::NonFiniteLoss { epoch });
        }
        let t = epoch + 1;
        adam_w0.update(&mut params.w0, &grads.w0, config.learning_rate, t);
        adam_w1m.update(&mut params.w1m, &grads.w1m, config.learning_rate, t);
        adam_w1s.update(&mut params.w1s, &grads.w1s, config.learning_rate, t);
        trace.push(loss);
    }

    let fwd = forward(&params, &p, &na, None);
    let embedding = LatentEmbedding::new(
        fwd.mu.clone(),
        Provenance {
            config_hash: config.fingerprint(),
            seed: config.seed,
        },
    )?;
    let threshold = if positives.is_empty() {
        0.5
    } else {
        let norms: Vec<f64> = row_norms(&fwd.mu).iter().map(|&x| x.max(NORM_CLAMP)).collect();
        let mut sum = 0.0;
        for &(i, j) in &positives {
            let mut dot = 0.0;
            for t in 0..fwd.mu.ncols() {
                dot += fwd.mu[(i, t)] * fwd.mu[(j, t)];
            }
            sum += sigmoid(dot / (norms[i] * norms[j]));
        }
        sum / positives.len() as f64
    };
    Ok(TrainOutput {
        embedding,
        decoder: TrainedDecoder::new(threshold)?,
        loss_trace: trace,
    })
}

/// Symmetric matrix of edge scores sigma(cos(v_i, v_j)). Entries lie in
/// [1/(1+e), 1/(1+e^{-1})] because the cosine is bounded by one.
pub fn decode_scores(embedding: &LatentEmbedding) -> Result<DMatrix<f64>, EmbedError> {
    let v = embedding.vectors();
    let n = v.nrows();
    let norms = row_norms(v);
    for (i, &norm) in norms.iter().enumerate() {
        if norm == 0.0 {
            return Err(EmbedError::ZeroNormRow(i));
        }
    }
    let clamped: Vec<f64> = norms.iter().map(|&x| x.max(NORM_CLAMP)).collect();
    let mut scores = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let mut dot = 0.0;
            for t in 0..v.ncols() {
                dot += v[(i, t)] * v[(j, t)];
            }
            let s = sigmoid(dot / (clamped[i] * clamped[j]));
            scores[(i, j)] = s;
            scores[(j, i)] = s;
        }
    }
    Ok(scores)
}

/// How decoded edges are assembled.
pub enum DecodeMode<'a> {
    /// Threshold every pair.
    AllPairs,
    /// Keep the original edge set verbatim; threshold only pairs touching a
    /// node beyond the original graph.
    PreserveOriginal(&'a Graph),
}

/// Thresholds the score matrix into a graph. The decoded graph carries the
/// latent coordinates as node features.
pub fn decode_graph(
    embedding: &LatentEmbedding,
    decoder: &TrainedDecoder,
    mode: DecodeMode,
) -> Result<Graph, EmbedError> {
    let scores = decode_scores(embedding)?;
    let n = scores.nrows();
    let thr = decoder.edge_threshold();
    let mut edges = Vec::new();
    match mode {
        DecodeMode::AllPairs => {
            for i in 0..n {
                for j in (i + 1)..n {
                    if scores[(i, j)] >= thr {
                        edges.push((i, j));
                    }
                }
            }
        }
        DecodeMode::PreserveOriginal(orig) => {
            let n0 = orig.n_nodes();
            if n0 > n {
                return Err(EmbedError::InvalidConfig(format!(
                    "original graph has {n0} nodes but the embedding has {n}"
                )));
            }
            edges.extend(orig.edges());
            for i in 0..n {
                for j in (i + 1).max(n0)..n {
                    if scores[(i, j)] >= thr {
                        edges.push((i, j));
                    }
                }
            }
        }
    }
    Ok(Graph::new(
        n,
        Some(embedding.vectors().clone()),
        edges,
        None,
    )?)
}

/// Compares the analytic parameter gradients against central finite
/// differences on a frozen forward pass (noise and any sampled pairs drawn
/// once). Returns the maximum relative error over all parameters.
pub fn gradient_check(graph: &Graph, config: &EncoderConfig, epsilon: f64) -> Result<f64, EmbedError> {
    config.validate()?;
    let n = graph.n_nodes();
    if n < 2 {
        return Err(EmbedError::TooFewNodes);
    }
    let x = graph.features_or_identity();
    let na = NormAdj::from_graph(graph);
    let adj = AdjBits::from_graph(graph);
    let p = na.propagate(&x);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let params = Params::init(x.ncols(), config.hidden_dim, config.latent_dim, &mut rng);
    let noise = standard_normal_matrix(n, config.latent_dim, &mut rng);
    let positives: Vec<(usize, usize)> = graph.edges().collect();
    let sampled = match config.negative_sampling {
        NegativeSampling::DenseFull => None,
        NegativeSampling::Sampled { ratio } => {
            Some(sample_pairs(&positives, ratio, n, &adj, &mut rng))
        }
    };
    Ok(max_grad_relative_error(
        &params,
        &p,
        &na,
        &adj,
        sampled.as_deref(),
        &noise,
        config.prior_kl_weight,
        epsilon,
    ))
}

#[allow(clippy::too_many_arguments)]
fn max_grad_relative_error(
    params: &Params,
    p: &DMatrix<f64>,
    na: &NormAdj,
    adj: &AdjBits,
    sampled: Option<&[(usize, usize, f64)]>,
    noise: &DMatrix<f64>,
    beta: f64,
    epsilon: f64,
) -> f64 {
    let fwd = forward(params, p, na, Some(noise));
    let (_, grads) = loss_and_gradients(params, &fwd, p, na, adj, sampled, Some(noise), beta);
    let eval = |params: &Params| -> f64 {
        let fwd = forward(params, p, na, Some(noise));
        let (loss, _) = loss_and_gradients(params, &fwd, p, na, adj, sampled, Some(noise), beta);
        loss
    };
    let mut max_err = 0.0f64;
    let mut check = |which: usize, analytic: &DMatrix<f64>| {
        for i in 0..analytic.nrows() {
            for j in 0..analytic.ncols() {
                let mut plus = params.clone();
                let mut minus = params.clone();
                match which {
                    0 => {
                        plus.w0[(i, j)] += epsilon;
                        minus.w0[(i, j)] -= epsilon;
                    }
                    1 => {
                        plus.w1m[(i, j)] += epsilon;
                        minus.w1m[(i, j)] -= epsilon;
                    }
                    _ => {
                        plus.w1s[(i, j)] += epsilon;
                        minus.w1s[(i, j)] -= epsilon;
                    }
                }
                let numeric = (eval(&plus) - eval(&minus)) / (2.0 * epsilon);
                let a = analytic[(i, j)];
                let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
                max_err = max_err.max(err);
            }
        }
    };
    check(0, &grads.w0);
    check(1, &grads.w1m);
    check(2, &grads.w1s);
    max_err
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_sbm, SbmSpec};
    use approx::assert_relative_eq;

    fn embedding_from(rows: &[&[f64]]) -> LatentEmbedding {
        let d = rows[0].len();
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        LatentEmbedding::new(
            DMatrix::from_row_slice(rows.len(), d, &flat),
            Provenance {
                config_hash: 0,
                seed: 0,
            },
        )
        .unwrap()
    }

    fn two_triangles() -> Graph {
        Graph::from_edges(6, [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)]).unwrap()
    }

    #[test]
    fn decode_scores_trivial_cosines() {
        let emb = embedding_from(&[&[1.0, 0.0], &[0.0, 1.0], &[-1.0, 0.0]]);
        let s = decode_scores(&emb).unwrap();
        assert_relative_eq!(s[(0, 1)], 0.5, epsilon = 1e-12);
        assert_relative_eq!(s[(0, 0)], 1.0 / (1.0 + (-1.0f64).exp()), epsilon = 1e-12);
        assert_relative_eq!(s[(0, 2)], 1.0 / (1.0 + 1.0f64.exp()), epsilon = 1e-12);
    }

    #[test]
    fn decode_scores_symmetric_and_bounded() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let v = DMatrix::from_fn(12, 3, |_, _| rng.random::<f64>() * 4.0 - 2.0);
        let emb = LatentEmbedding::new(v, Provenance { config_hash: 0, seed: 0 }).unwrap();
        let s = decode_scores(&emb).unwrap();
        for i in 0..12 {
            for j in 0..12 {
                assert_eq!(s[(i, j)], s[(j, i)]);
                assert!(s[(i, j)] >= 0.2689 && s[(i, j)] <= 0.7312);
            }
        }
    }

    #[test]
    fn decode_scores_reports_zero_row() {
        let emb = embedding_from(&[&[1.0, 0.0], &[0.0, 0.0]]);
        assert!(matches!(decode_scores(&emb), Err(EmbedError::ZeroNormRow(1))));
    }

    #[test]
    fn decode_graph_threshold_extremes() {
        let emb = embedding_from(&[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]]);
        let high = TrainedDecoder::new(0.74).unwrap();
        let g = decode_graph(&emb, &high, DecodeMode::AllPairs).unwrap();
        assert_eq!(g.n_edges(), 0);
        let low = TrainedDecoder::new(0.2).unwrap();
        let g = decode_graph(&emb, &low, DecodeMode::AllPairs).unwrap();
        assert_eq!(g.n_edges(), 3);
    }

    #[test]
    fn zero_epochs_is_a_deterministic_untrained_forward_pass() {
        let g = two_triangles();
        let mut config = EncoderConfig::for_graph(&g, 2, 7);
        config.epochs = 0;
        let a = train_vgae(&g, &config).unwrap();
        let b = train_vgae(&g, &config).unwrap();
        assert_eq!(a.embedding.vectors(), b.embedding.vectors());
        assert!(a.loss_trace.is_empty());
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_unchanged() {
        let g = two_triangles();
        let mut config = EncoderConfig::for_graph(&g, 2, 7);
        config.epochs = 0;
        let untrained = train_vgae(&g, &config).unwrap();
        config.epochs = 5;
        config.learning_rate = 0.0;
        let frozen = train_vgae(&g, &config).unwrap();
        assert_eq!(untrained.embedding.vectors(), frozen.embedding.vectors());
    }

    #[test]
    fn training_is_bitwise_deterministic() {
        let g = two_triangles();
        let config = EncoderConfig::for_graph(&g, 2, 3);
        let a = train_vgae(&g, &config).unwrap();
        let b = train_vgae(&g, &config).unwrap();
        assert_eq!(a.loss_trace, b.loss_trace);
        assert_eq!(a.embedding.vectors(), b.embedding.vectors());
        assert_eq!(a.decoder.edge_threshold(), b.decoder.edge_threshold());
    }

    #[test]
    fn two_triangles_separate_in_latent_space() {
        let g = two_triangles();
        let config = EncoderConfig::for_graph(&g, 2, 11);
        let out = train_vgae(&g, &config).unwrap();
        let s = decode_scores(&out.embedding).unwrap();
        let mut min_intra = f64::INFINITY;
        let mut max_cross = f64::NEG_INFINITY;
        for i in 0..6 {
            for j in (i + 1)..6 {
                let same = (i < 3) == (j < 3);
                if same {
                    min_intra = min_intra.min(s[(i, j)]);
                } else {
                    max_cross = max_cross.max(s[(i, j)]);
                }
            }
        }
        assert!(
            min_intra > max_cross,
            "intra {min_intra} should exceed cross {max_cross}"
        );
        // Mean-edge-score threshold recovers most intra-community edges.
        let decoded = decode_graph(&out.embedding, &out.decoder, DecodeMode::AllPairs).unwrap();
        let recovered = g.edges().filter(|&(u, v)| decoded.has_edge(u, v)).count();
        assert!(
            recovered as f64 >= 0.8 * g.n_edges() as f64,
            "recovered {recovered} of {}",
            g.n_edges()
        );
    }

    #[test]
    fn sbm_training_reduces_loss_and_beats_chance() {
        let g = generate_sbm(&SbmSpec {
            n_communities: 2,
            size_range: (15, 15),
            intra_p: 0.5,
            inter_p: 0.02,
            seed: 5,
        })
        .unwrap();
        // Hold out every tenth edge for an AUC check.
        let all_edges: Vec<(usize, usize)> = g.edges().collect();
        let held_out: Vec<(usize, usize)> = all_edges.iter().copied().step_by(10).collect();
        let kept: Vec<(usize, usize)> = all_edges
            .iter()
            .copied()
            .filter(|e| !held_out.contains(e))
            .collect();
        let mut train_graph = Graph::new(g.n_nodes(), None, kept, None).unwrap();
        train_graph.set_features(g.features().unwrap().clone()).unwrap();
        let config = EncoderConfig::for_graph(&train_graph, 4, 13);
        let out = train_vgae(&train_graph, &config).unwrap();
        assert!(out.loss_trace.last().unwrap() < out.loss_trace.first().unwrap());
        let s = decode_scores(&out.embedding).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut wins = 0.0;
        let mut total = 0.0;
        for &(i, j) in &held_out {
            for _ in 0..20 {
                let a = rng.random_range(0..g.n_nodes());
                let b = rng.random_range(0..g.n_nodes());
                if a == b || g.has_edge(a, b) {
                    continue;
                }
                total += 1.0;
                if s[(i, j)] > s[(a, b)] {
                    wins += 1.0;
                } else if s[(i, j)] == s[(a, b)] {
                    wins += 0.5;
                }
            }
        }
        let auc = wins / total;
        assert!(auc > 0.5, "held-out AUC {auc}");
    }

    #[test]
    fn gradient_check_on_path_fixture() {
        let g = Graph::from_edges(4, [(0, 1), (1, 2), (2, 3)]).unwrap();
        let mut config = EncoderConfig::for_graph(&g, 2, 1);
        config.hidden_dim = 3;
        let err = gradient_check(&g, &config, 1e-5).unwrap();
        assert!(err < 1e-4, "max relative gradient error {err}");
        // Coarse steps suffer truncation error.
        let coarse = gradient_check(&g, &config, 1e-2).unwrap();
        assert!(coarse > err, "coarse {coarse} vs fine {err}");
    }

    #[test]
    fn zero_weights_give_matching_finite_gradients() {
        let g = Graph::from_edges(4, [(0, 1), (1, 2), (2, 3)]).unwrap();
        let x = g.features_or_identity();
        let na = NormAdj::from_graph(&g);
        let adj = AdjBits::from_graph(&g);
        let p = na.propagate(&x);
        let params = Params {
            w0: DMatrix::zeros(4, 3),
            w1m: DMatrix::zeros(3, 2),
            w1s: DMatrix::zeros(3, 2),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let noise = standard_normal_matrix(4, 2, &mut rng);
        let err = max_grad_relative_error(&params, &p, &na, &adj, None, &noise, 0.0, 1e-5);
        assert!(err < 1e-6, "zero-init gradient mismatch {err}");
    }

    #[test]
    fn zero_degree_graph_still_trains() {
        let g = Graph::from_edges(3, []).unwrap();
        let mut config = EncoderConfig::for_graph(&g, 2, 0);
        config.epochs = 3;
        let out = train_vgae(&g, &config).unwrap();
        assert_eq!(out.decoder.edge_threshold(), 0.5);
        assert_eq!(out.loss_trace.len(), 3);
    }
}
