//! Decomposed NML code lengths and joint model selection over cluster-count
//! and embedding-dimension grids.
//!
//! The total code length splits into the Gaussian data term given hard
//! assignments and the categorical term for the assignments themselves. The
//! categorical normalizer is exact (Kontkanen-style linear recurrence); the
//! Gaussian complexity term uses the asymptotic stochastic complexity
//! `(m/2) log(n / 2 pi)` with `m = D + D(D+1)/2` free parameters per
//! component, isolated in [`gaussian_complexity`] so an exact restricted-
//! domain normalizer can be swapped in.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

use crate::gmm::{self, Assignment, EmFit, EmOptions, GmmError, GmmModel};
use crate::linalg;
use crate::seed::derive_seed;

#[derive(Debug, Error)]
pub enum MdlError {
    #[error("label {label} out of range for k = {k}")]
    LabelOutOfRange { label: usize, k: usize },
    #[error("selection grid is empty or contains zero candidates")]
    InvalidGrid,
    #[error("no embedding provided for candidate dimension {0}")]
    MissingEmbedding(usize),
    #[error("embedding for dimension {d} has {cols} columns")]
    DimensionMismatch { d: usize, cols: usize },
    #[error("every grid cell failed; first error: {0}")]
    AllCellsFailed(String),
    #[error(transparent)]
    Gmm(#[from] GmmError),
}

/// Code lengths in nats for one (k, d) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeLengthReport {
    pub k: usize,
    pub d: usize,
    /// L_NML(v | z; k)
    pub l_data_given_z: f64,
    /// L_NML(z; k)
    pub l_z: f64,
    /// Sum of the two terms.
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionGrid {
    pub k_candidates: Vec<usize>,
    pub d_candidates: Vec<usize>,
}

impl SelectionGrid {
    pub fn new(
        k_candidates: impl IntoIterator<Item = usize>,
        d_candidates: impl IntoIterator<Item = usize>,
    ) -> Result<Self, MdlError> {
        let mut ks: Vec<usize> = k_candidates.into_iter().collect();
        let mut ds: Vec<usize> = d_candidates.into_iter().collect();
        ks.sort_unstable();
        ks.dedup();
        ds.sort_unstable();
        ds.dedup();
        if ks.is_empty() || ds.is_empty() || ks[0] == 0 || ds[0] == 0 {
            return Err(MdlError::InvalidGrid);
        }
        Ok(Self {
            k_candidates: ks,
            d_candidates: ds,
        })
    }
}

/// Log of the exact multinomial NML normalizer C_k(n).
///
/// C_1(n) = 1, C_2(n) by direct summation in log space, and
/// C_{k+1}(n) = C_k(n) + n/(k-1) * C_{k-1}(n) for the rest; O(n + k) time.
pub fn multinomial_complexity_log(n: usize, k: usize) -> f64 {
    assert!(k >= 1, "k must be at least 1");
    if k == 1 || n == 0 {
        return 0.0;
    }
    let nf = n as f64;
    // log C_2(n): sum over h of binom(n, h) (h/n)^h ((n-h)/n)^(n-h).
    let mut log_c2 = f64::NEG_INFINITY;
    let mut log_binom = 0.0f64; // log binom(n, 0)
    for h in 0..=n {
        let hf = h as f64;
        let rest = (n - h) as f64;
        let mut term = log_binom;
        if h > 0 {
            term += hf * (hf / nf).ln();
        }
        if h < n {
            term += rest * (rest / nf).ln();
        }
        log_c2 = log_add_exp(log_c2, term);
        if h < n {
            log_binom += (nf - hf).ln() - (hf + 1.0).ln();
        }
    }
    if k == 2 {
        return log_c2;
    }
    let mut prev = 0.0f64; // log C_1
    let mut curr = log_c2; // log C_2
    for j in 2..k {
        // C_{j+1}(n) = C_j(n) + n/(j-1) * C_{j-1}(n)
        let next = log_add_exp(curr, nf.ln() - ((j - 1) as f64).ln() + prev);
        prev = curr;
        curr = next;
    }
    curr
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// NML code length of a label sequence under a k-category multinomial.
pub fn nml_categorical(labels: &[usize], k: usize) -> Result<f64, MdlError> {
    let mut counts = vec![0usize; k];
    for &z in labels {
        if z >= k {
            return Err(MdlError::LabelOutOfRange { label: z, k });
        }
        counts[z] += 1;
    }
    let n = labels.len() as f64;
    let mut nll = 0.0;
    for &c in &counts {
        if c > 0 {
            let cf = c as f64;
            nll -= cf * (cf / n).ln();
        }
    }
    Ok(nll + multinomial_complexity_log(labels.len(), k))
}

/// Asymptotic per-component stochastic complexity for a Gaussian cluster:
/// `(m/2) log(n / 2 pi) + (1/2) log det I(theta_hat)`, where the Fisher
/// determinant at the estimate is `det(Sigma)^-(D+2)` for a full covariance
/// and `prod sigma_j^-6` componentwise for a diagonal one (constants
/// dropped). Without the Fisher term, near-singular covariances of tiny
/// clusters would be rewarded rather than priced, and cluster-count
/// selection degenerates into carving off clumps.
pub fn gaussian_complexity(n: usize, dim: usize, diagonal: bool, log_det_sigma: f64) -> f64 {
    let m = if diagonal {
        2 * dim
    } else {
        dim + dim * (dim + 1) / 2
    } as f64;
    let fisher = if diagonal {
        -1.5 * log_det_sigma
    } else {
        -0.5 * (dim as f64 + 2.0) * log_det_sigma
    };
    0.5 * m * (n as f64 / (2.0 * std::f64::consts::PI)).ln() + fisher
}

/// NML code length of the points given hard assignments: per-cluster Gaussian
/// maximum likelihood plus the complexity term. Clusters smaller than D + 2
/// fall back to a diagonal covariance.
pub fn nml_gaussian_conditional(
    points: &DMatrix<f64>,
    labels: &[usize],
    k: usize,
    cov_ridge: f64,
) -> Result<f64, MdlError> {
    let n = points.nrows();
    let d = points.ncols();
    assert_eq!(labels.len(), n, "one label per point");
    for &z in labels {
        if z >= k {
            return Err(MdlError::LabelOutOfRange { label: z, k });
        }
    }
    let ln_2pi = (2.0 * std::f64::consts::PI).ln();
    let mut total = 0.0;
    for c in 0..k {
        let members: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
        let nc = members.len();
        if nc == 0 {
            continue;
        }
        let mut mean = DVector::zeros(d);
        for &i in &members {
            mean += DVector::from_iterator(d, points.row(i).iter().copied());
        }
        mean /= nc as f64;
        let diagonal = nc < d + 2;
        let (nll, log_det) = if diagonal {
            log::debug!("cluster {c} has {nc} points; using diagonal covariance for its code length");
            let mut vars = DVector::zeros(d);
            for &i in &members {
                let diff = DVector::from_iterator(d, points.row(i).iter().copied()) - &mean;
                for j in 0..d {
                    vars[j] += diff[j] * diff[j];
                }
            }
            vars /= nc as f64;
            let logdet: f64 = (0..d).map(|j| (vars[j] + cov_ridge).ln()).sum();
            let mut nll = 0.0;
            for &i in &members {
                let diff = DVector::from_iterator(d, points.row(i).iter().copied()) - &mean;
                let mut quad = 0.0;
                for j in 0..d {
                    quad += diff[j] * diff[j] / (vars[j] + cov_ridge);
                }
                nll += 0.5 * (d as f64 * ln_2pi + logdet + quad);
            }
            (nll, logdet)
        } else {
            let mut cov = DMatrix::zeros(d, d);
            for &i in &members {
                let diff = DVector::from_iterator(d, points.row(i).iter().copied()) - &mean;
                cov += &diff * diff.transpose();
            }
            cov /= nc as f64;
            cov = linalg::symmetrize(&cov);
            for j in 0..d {
                cov[(j, j)] += cov_ridge;
            }
            let chol = linalg::spd_cholesky(&cov).ok_or(GmmError::NotSpd(c))?;
            let logdet = linalg::cholesky_log_det(&chol);
            let mut nll = 0.0;
            for &i in &members {
                let diff = DVector::from_iterator(d, points.row(i).iter().copied()) - &mean;
                let quad = diff.dot(&chol.solve(&diff));
                nll += 0.5 * (d as f64 * ln_2pi + logdet + quad);
            }
            (nll, logdet)
        };
        total += nll + gaussian_complexity(nc, d, diagonal, log_det);
    }
    Ok(total)
}

/// One grid cell of a selection run.
#[derive(Debug, Clone)]
pub enum CellResult {
    Computed(CodeLengthReport),
    Failed(String),
}

impl CellResult {
    pub fn total(&self) -> f64 {
        match self {
            CellResult::Computed(r) => r.total,
            CellResult::Failed(_) => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SelectionOutcome {
    pub k: usize,
    pub d: usize,
    pub model: GmmModel,
    pub assignment: Assignment,
    /// Every (k, d) cell in scan order, including failed ones.
    pub table: Vec<(usize, usize, CellResult)>,
}

fn dnml_cell(
    points: &DMatrix<f64>,
    k: usize,
    d: usize,
    seed: u64,
    em: &EmOptions,
) -> Result<(CodeLengthReport, EmFit), MdlError> {
    let fit = gmm::fit_em(points, k, seed, em)?;
    let l_data = nml_gaussian_conditional(points, fit.assignment.labels(), k, em.cov_ridge)?;
    let l_z = nml_categorical(fit.assignment.labels(), k)?;
    Ok((
        CodeLengthReport {
            k,
            d,
            l_data_given_z: l_data,
            l_z,
            total: l_data + l_z,
        },
        fit,
    ))
}

/// Scans the (k, d) grid, fitting one mixture per cell, and returns the cell
/// with the smallest total code length. Ties break toward smaller k, then
/// smaller d. Failed cells are kept in the table with infinite total.
pub fn select_model(
    embeddings_by_dim: &BTreeMap<usize, DMatrix<f64>>,
    grid: &SelectionGrid,
    seed: u64,
    em: &EmOptions,
) -> Result<SelectionOutcome, MdlError> {
    for &d in &grid.d_candidates {
        let m = embeddings_by_dim
            .get(&d)
            .ok_or(MdlError::MissingEmbedding(d))?;
        if m.ncols() != d {
            return Err(MdlError::DimensionMismatch { d, cols: m.ncols() });
        }
    }
    let cells: Vec<(usize, usize)> = grid
        .k_candidates
        .iter()
        .flat_map(|&k| grid.d_candidates.iter().map(move |&d| (k, d)))
        .collect();
    let results: Vec<(usize, usize, Result<(CodeLengthReport, EmFit), MdlError>)> = cells
        .par_iter()
        .map(|&(k, d)| {
            let points = &embeddings_by_dim[&d];
            let cell_seed = derive_seed(seed, (k as u64) << 32 | d as u64);
            (k, d, dnml_cell(points, k, d, cell_seed, em))
        })
        .collect();

    let mut table = Vec::with_capacity(results.len());
    let mut best: Option<(f64, usize, usize, EmFit)> = None;
    let mut first_err = None;
    for (k, d, res) in results {
        match res {
            Ok((report, fit)) => {
                let total = report.total;
                table.push((k, d, CellResult::Computed(report)));
                if best.as_ref().map_or(true, |(t, _, _, _)| total < *t) {
                    best = Some((total, k, d, fit));
                }
            }
            Err(e) => {
                let msg = e.to_string();
                if first_err.is_none() {
                    first_err = Some(msg.clone());
                }
                table.push((k, d, CellResult::Failed(msg)));
            }
        }
    }
    match best {
        Some((_, k, d, fit)) => Ok(SelectionOutcome {
            k,
            d,
            model: fit.model,
            assignment: fit.assignment,
            table,
        }),
        None => Err(MdlError::AllCellsFailed(
            first_err.unwrap_or_else(|| "empty grid".into()),
        )),
    }
}

#[derive(Debug, Clone)]
pub struct KEstimate {
    pub k_est: usize,
    pub table: Vec<(usize, CellResult)>,
}

/// [`select_model`] restricted to a single fixed dimension: scans only the
/// cluster-count candidates over the given points.
pub fn estimate_k(
    points: &DMatrix<f64>,
    k_candidates: &[usize],
    seed: u64,
    em: &EmOptions,
) -> Result<KEstimate, MdlError> {
    if k_candidates.is_empty() || k_candidates.contains(&0) {
        return Err(MdlError::InvalidGrid);
    }
    let mut ks = k_candidates.to_vec();
    ks.sort_unstable();
    ks.dedup();
    let d = points.ncols();
    let results: Vec<(usize, Result<(CodeLengthReport, EmFit), MdlError>)> = ks
        .par_iter()
        .map(|&k| {
            let cell_seed = derive_seed(seed, (k as u64) << 32 | d as u64);
            (k, dnml_cell(points, k, d, cell_seed, em))
        })
        .collect();
    let mut table = Vec::with_capacity(results.len());
    let mut best: Option<(f64, usize)> = None;
    let mut first_err = None;
    for (k, res) in results {
        match res {
            Ok((report, _)) => {
                let total = report.total;
                table.push((k, CellResult::Computed(report)));
                if best.as_ref().map_or(true, |(t, _)| total < *t) {
                    best = Some((total, k));
                }
            }
            Err(e) => {
                let msg = e.to_string();
                if first_err.is_none() {
                    first_err = Some(msg.clone());
                }
                table.push((k, CellResult::Failed(msg)));
            }
        }
    }
    match best {
        Some((_, k_est)) => Ok(KEstimate { k_est, table }),
        None => Err(MdlError::AllCellsFailed(
            first_err.unwrap_or_else(|| "empty candidate set".into()),
        )),
    }
}
