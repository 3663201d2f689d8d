//! Structural graph statistics: degree histogram, clustering coefficients,
//! normalized Laplacian spectrum, and 4-node graphlet membership counts.

use nalgebra::DMatrix;

use crate::graph::{Graph, GraphError};

/// Number of connected 4-node graphlet types.
pub const GRAPHLET4_TYPES: usize = 6;

/// Connected four-node graphlets, identified up to isomorphism.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Graphlet4 {
    Path,
    Star,
    Cycle,
    Paw,
    Diamond,
    Clique,
}

impl Graphlet4 {
    pub fn index(self) -> usize {
        match self {
            Graphlet4::Path => 0,
            Graphlet4::Star => 1,
            Graphlet4::Cycle => 2,
            Graphlet4::Paw => 3,
            Graphlet4::Diamond => 4,
            Graphlet4::Clique => 5,
        }
    }

    /// Classifies a connected 4-node induced subgraph from its edge count and
    /// maximum internal degree.
    fn classify(edge_count: usize, max_degree: usize) -> Self {
        match (edge_count, max_degree) {
            (3, 2) => Graphlet4::Path,
            (3, 3) => Graphlet4::Star,
            (4, 2) => Graphlet4::Cycle,
            (4, 3) => Graphlet4::Paw,
            (5, _) => Graphlet4::Diamond,
            (6, _) => Graphlet4::Clique,
            _ => unreachable!("not a connected 4-node subgraph: {edge_count} edges"),
        }
    }
}

fn require_nonempty(graph: &Graph) -> Result<(), GraphError> {
    if graph.n_nodes() == 0 {
        Err(GraphError::EmptyGraph)
    } else {
        Ok(())
    }
}

/// `hist[d]` = number of nodes with degree `d`.
pub fn degree_histogram(graph: &Graph) -> Result<Vec<usize>, GraphError> {
    require_nonempty(graph)?;
    let degrees = graph.degrees();
    let max = degrees.iter().copied().max().unwrap_or(0);
    let mut hist = vec![0usize; max + 1];
    for d in degrees {
        hist[d] += 1;
    }
    Ok(hist)
}

/// Per-node clustering coefficient 2T / (d (d - 1)), zero for degree < 2.
pub fn clustering_coefficients(graph: &Graph) -> Result<Vec<f64>, GraphError> {
    require_nonempty(graph)?;
    let adj = graph.adjacency_list();
    let mut out = vec![0.0; graph.n_nodes()];
    for (i, neigh) in adj.iter().enumerate() {
        let d = neigh.len();
        if d < 2 {
            continue;
        }
        let mut triangles = 0usize;
        for a in 0..neigh.len() {
            for b in (a + 1)..neigh.len() {
                if graph.has_edge(neigh[a], neigh[b]) {
                    triangles += 1;
                }
            }
        }
        out[i] = 2.0 * triangles as f64 / (d * (d - 1)) as f64;
    }
    Ok(out)
}

/// Normalized Laplacian I - D^{-1/2} A D^{-1/2}; isolated nodes get a zero
/// row and diagonal entry.
pub fn normalized_laplacian(graph: &Graph) -> DMatrix<f64> {
    let n = graph.n_nodes();
    let degrees = graph.degrees();
    let inv_sqrt: Vec<f64> = degrees
        .iter()
        .map(|&d| if d > 0 { 1.0 / (d as f64).sqrt() } else { 0.0 })
        .collect();
    let mut l = DMatrix::zeros(n, n);
    for i in 0..n {
        if degrees[i] > 0 {
            l[(i, i)] = 1.0;
        }
    }
    for (u, v) in graph.edges() {
        let w = -inv_sqrt[u] * inv_sqrt[v];
        l[(u, v)] = w;
        l[(v, u)] = w;
    }
    l
}

/// Eigenvalues of the normalized Laplacian, sorted ascending. All values lie
/// in [0, 2] up to roundoff.
pub fn laplacian_spectrum(graph: &Graph) -> Result<Vec<f64>, GraphError> {
    require_nonempty(graph)?;
    let l = normalized_laplacian(graph);
    let eig = l
        .try_symmetric_eigen(f64::EPSILON, 0)
        .ok_or(GraphError::EigenNonConvergence)?;
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(vals)
}

/// Node coordinates in the `dim` normalized-Laplacian eigenvectors with
/// smallest nonzero eigenvalues. When fewer nontrivial eigenpairs exist the
/// remaining columns are filled from the smallest (trivial) ones. Columns
/// are scaled to unit root-mean-square so feature magnitudes stay O(1)
/// regardless of graph size.
pub fn spectral_features(graph: &Graph, dim: usize) -> Result<DMatrix<f64>, GraphError> {
    require_nonempty(graph)?;
    let n = graph.n_nodes();
    let l = normalized_laplacian(graph);
    let eig = l
        .try_symmetric_eigen(f64::EPSILON, 0)
        .ok_or(GraphError::EigenNonConvergence)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let mut picked: Vec<usize> = order
        .iter()
        .copied()
        .filter(|&i| eig.eigenvalues[i] > 1e-8)
        .take(dim)
        .collect();
    for &i in &order {
        if picked.len() >= dim {
            break;
        }
        if !picked.contains(&i) {
            picked.push(i);
        }
    }
    let mut features = DMatrix::zeros(n, dim);
    for (col, &i) in picked.iter().enumerate() {
        features.set_column(col, &eig.eigenvectors.column(i));
    }
    features *= (n as f64).sqrt();
    Ok(features)
}

/// Per-node membership counts in connected 4-node induced subgraphs, by
/// graphlet type. Enumeration is ESU over exclusive neighborhoods, so each
/// subgraph is visited exactly once.
pub fn orbit4_counts(graph: &Graph) -> Result<Vec<[u64; GRAPHLET4_TYPES]>, GraphError> {
    require_nonempty(graph)?;
    let n = graph.n_nodes();
    let adj = graph.adjacency_list();
    let mut counts = vec![[0u64; GRAPHLET4_TYPES]; n];

    let record = |sub: &[usize], counts: &mut Vec<[u64; GRAPHLET4_TYPES]>| {
        let mut deg = [0usize; 4];
        let mut edges = 0usize;
        for a in 0..4 {
            for b in (a + 1)..4 {
                if graph.has_edge(sub[a], sub[b]) {
                    edges += 1;
                    deg[a] += 1;
                    deg[b] += 1;
                }
            }
        }
        let ty = Graphlet4::classify(edges, deg.iter().copied().max().unwrap());
        for &node in sub {
            counts[node][ty.index()] += 1;
        }
    };

    // ESU: extend only with vertices above the root that are exclusive
    // neighbors of the newly added vertex.
    fn extend(
        sub: &mut Vec<usize>,
        ext: Vec<usize>,
        root: usize,
        adj: &[Vec<usize>],
        record: &mut dyn FnMut(&[usize]),
    ) {
        if sub.len() == 4 {
            record(sub);
            return;
        }
        let mut ext = ext;
        while let Some(w) = ext.pop() {
            let mut next_ext = ext.clone();
            for &u in &adj[w] {
                if u <= root || sub.contains(&u) || u == w {
                    continue;
                }
                let neighbor_of_sub = sub.iter().any(|&s| adj[s].binary_search(&u).is_ok());
                if !neighbor_of_sub && !next_ext.contains(&u) {
                    next_ext.push(u);
                }
            }
            sub.push(w);
            extend(sub, next_ext, root, adj, record);
            sub.pop();
        }
    }

    let mut cb = |sub: &[usize]| record(sub, &mut counts);
    for root in 0..n {
        let ext: Vec<usize> = adj[root].iter().copied().filter(|&u| u > root).collect();
        let mut sub = vec![root];
        extend(&mut sub, ext, root, &adj, &mut cb);
    }
    Ok(counts)
}
