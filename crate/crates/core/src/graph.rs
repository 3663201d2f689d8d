//! Undirected graph representation and synthetic generators.
//!
//! Edges are kept as a sorted set of `(min, max)` pairs, so the adjacency is
//! symmetric by construction and duplicate insertions collapse. Node features
//! are an optional dense `N x F` matrix; weighted input adjacency is
//! binarized before anything downstream sees it.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::stats;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("self-loop at node {0}")]
    SelfLoop(usize),
    #[error("edge ({0}, {1}) references a node outside [0, {2})")]
    EndpointOutOfRange(usize, usize, usize),
    #[error("feature matrix has {rows} rows for {n_nodes} nodes")]
    FeatureRowMismatch { rows: usize, n_nodes: usize },
    #[error("feature matrix must have at least one column")]
    EmptyFeatures,
    #[error("label vector has {len} entries for {n_nodes} nodes")]
    LabelLenMismatch { len: usize, n_nodes: usize },
    #[error("operation requires a nonempty graph")]
    EmptyGraph,
    #[error("invalid SBM spec: {0}")]
    InvalidSbmSpec(String),
    #[error("edge probability {0} is outside [0, 1]")]
    InvalidProbability(f64),
    #[error("eigensolver did not converge on the normalized Laplacian")]
    EigenNonConvergence,
}

/// An undirected graph with optional node features and labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n_nodes: usize,
    features: Option<DMatrix<f64>>,
    edges: BTreeSet<(usize, usize)>,
    node_labels: Option<Vec<usize>>,
}

impl Graph {
    /// Builds a graph, normalizing each pair to `(min, max)` and rejecting
    /// self-loops and out-of-range endpoints.
    pub fn new(
        n_nodes: usize,
        features: Option<DMatrix<f64>>,
        edges: impl IntoIterator<Item = (usize, usize)>,
        node_labels: Option<Vec<usize>>,
    ) -> Result<Self, GraphError> {
        if let Some(f) = &features {
            if f.nrows() != n_nodes {
                return Err(GraphError::FeatureRowMismatch {
                    rows: f.nrows(),
                    n_nodes,
                });
            }
            if f.ncols() == 0 {
                return Err(GraphError::EmptyFeatures);
            }
        }
        if let Some(l) = &node_labels {
            if l.len() != n_nodes {
                return Err(GraphError::LabelLenMismatch {
                    len: l.len(),
                    n_nodes,
                });
            }
        }
        let mut set = BTreeSet::new();
        for (u, v) in edges {
            if u == v {
                return Err(GraphError::SelfLoop(u));
            }
            if u >= n_nodes || v >= n_nodes {
                return Err(GraphError::EndpointOutOfRange(u, v, n_nodes));
            }
            set.insert((u.min(v), u.max(v)));
        }
        Ok(Self {
            n_nodes,
            features,
            edges: set,
            node_labels,
        })
    }

    pub fn from_edges(
        n_nodes: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, GraphError> {
        Self::new(n_nodes, None, edges, None)
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Edges as `(u, v)` with `u < v`, in sorted order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u != v && self.edges.contains(&(u.min(v), u.max(v)))
    }

    pub fn features(&self) -> Option<&DMatrix<f64>> {
        self.features.as_ref()
    }

    /// Node features, or the identity matrix when none were supplied.
    pub fn features_or_identity(&self) -> DMatrix<f64> {
        match &self.features {
            Some(f) => f.clone(),
            None => DMatrix::identity(self.n_nodes, self.n_nodes),
        }
    }

    pub fn node_labels(&self) -> Option<&[usize]> {
        self.node_labels.as_deref()
    }

    pub fn set_features(&mut self, features: DMatrix<f64>) -> Result<(), GraphError> {
        if features.nrows() != self.n_nodes {
            return Err(GraphError::FeatureRowMismatch {
                rows: features.nrows(),
                n_nodes: self.n_nodes,
            });
        }
        if features.ncols() == 0 {
            return Err(GraphError::EmptyFeatures);
        }
        self.features = Some(features);
        Ok(())
    }

    /// Sorted neighbor lists.
    pub fn adjacency_list(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n_nodes];
        for &(u, v) in &self.edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    pub fn adjacency_dense(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n_nodes, self.n_nodes);
        for &(u, v) in &self.edges {
            a[(u, v)] = 1.0;
            a[(v, u)] = 1.0;
        }
        a
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0usize; self.n_nodes];
        for &(u, v) in &self.edges {
            deg[u] += 1;
            deg[v] += 1;
        }
        deg
    }

    /// Edge density |E| / C(N, 2); zero for graphs with fewer than two nodes.
    pub fn density(&self) -> f64 {
        if self.n_nodes < 2 {
            return 0.0;
        }
        let pairs = self.n_nodes * (self.n_nodes - 1) / 2;
        self.edges.len() as f64 / pairs as f64
    }
}

/// Parameters of a planted-partition graph.
#[derive(Debug, Clone, PartialEq)]
pub struct SbmSpec {
    pub n_communities: usize,
    /// Inclusive range community sizes are drawn from.
    pub size_range: (usize, usize),
    pub intra_p: f64,
    pub inter_p: f64,
    pub seed: u64,
}

impl SbmSpec {
    pub fn validate(&self) -> Result<(), GraphError> {
        if self.n_communities == 0 {
            return Err(GraphError::InvalidSbmSpec(
                "need at least one community".into(),
            ));
        }
        let (lo, hi) = self.size_range;
        if lo == 0 || lo > hi {
            return Err(GraphError::InvalidSbmSpec(format!(
                "size range [{lo}, {hi}] is empty or contains zero"
            )));
        }
        for p in [self.intra_p, self.inter_p] {
            if !(0.0..=1.0).contains(&p) {
                return Err(GraphError::InvalidProbability(p));
            }
        }
        if self.inter_p >= self.intra_p {
            return Err(GraphError::InvalidSbmSpec(format!(
                "inter_p {} must be strictly below intra_p {}",
                self.inter_p, self.intra_p
            )));
        }
        Ok(())
    }
}

/// Generates a stochastic block model graph with planted communities.
///
/// Block labels become node labels; node features are the coordinates of the
/// two normalized-Laplacian eigenvectors with smallest nonzero eigenvalues
/// (standard spectral features), computed on the realized graph.
pub fn generate_sbm(spec: &SbmSpec) -> Result<Graph, GraphError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (lo, hi) = spec.size_range;
    let sizes: Vec<usize> = (0..spec.n_communities)
        .map(|_| rng.random_range(lo..=hi))
        .collect();
    let n: usize = sizes.iter().sum();
    let mut labels = Vec::with_capacity(n);
    for (block, &s) in sizes.iter().enumerate() {
        labels.extend(std::iter::repeat(block).take(s));
    }
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let p = if labels[i] == labels[j] {
                spec.intra_p
            } else {
                spec.inter_p
            };
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    let mut graph = Graph::new(n, None, edges, Some(labels))?;
    let features = stats::spectral_features(&graph, 2)?;
    graph.set_features(features)?;
    Ok(graph)
}

/// Erdős–Rényi G(n, p) baseline generator.
pub fn erdos_renyi(n: usize, p: f64, seed: u64) -> Result<Graph, GraphError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(GraphError::InvalidProbability(p));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    Graph::from_edges(n, edges)
}
