//! Full-covariance Gaussian mixture models over latent points: EM fitting
//! with k-means++ restarts, stable log-density evaluation, and seeded
//! sampling.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::linalg;
use crate::seed::derive_seed;

/// Ridge added to covariance diagonals in every M-step, keeping the fitted
/// matrices safely positive definite.
pub const DEFAULT_COV_RIDGE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum GmmError {
    #[error("invalid mixture weights: {0}")]
    InvalidWeights(String),
    #[error("component arrays disagree: {0}")]
    ComponentMismatch(String),
    #[error("covariance of component {0} is not symmetric")]
    NotSymmetric(usize),
    #[error("covariance of component {0} is not positive definite")]
    NotSpd(usize),
    #[error("need more points than components: n = {n}, k = {k}")]
    TooFewPoints { n: usize, k: usize },
    #[error("k must be at least 1")]
    InvalidK,
    #[error("points matrix is empty")]
    EmptyPoints,
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// A Gaussian mixture with full covariances. Cholesky factors are cached at
/// construction so density evaluation never re-factorizes.
#[derive(Debug, Clone)]
pub struct GmmModel {
    weights: Vec<f64>,
    means: Vec<DVector<f64>>,
    covariances: Vec<DMatrix<f64>>,
    chols: Vec<Cholesky<f64, Dyn>>,
    log_dets: Vec<f64>,
    dim: usize,
}

impl GmmModel {
    /// Validates and builds a mixture. Weights must be nonnegative and sum to
    /// one within 1e-12; covariances must be symmetric and positive definite.
    pub fn new(
        weights: Vec<f64>,
        means: Vec<DVector<f64>>,
        covariances: Vec<DMatrix<f64>>,
    ) -> Result<Self, GmmError> {
        let k = weights.len();
        if k == 0 {
            return Err(GmmError::InvalidK);
        }
        if means.len() != k || covariances.len() != k {
            return Err(GmmError::ComponentMismatch(format!(
                "{} weights, {} means, {} covariances",
                k,
                means.len(),
                covariances.len()
            )));
        }
        let sum: f64 = weights.iter().sum();
        if weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(GmmError::InvalidWeights("negative or non-finite".into()));
        }
        if (sum - 1.0).abs() > 1e-12 {
            return Err(GmmError::InvalidWeights(format!("sum to {sum}")));
        }
        let dim = means[0].len();
        if dim == 0 {
            return Err(GmmError::ComponentMismatch("zero-dimensional mean".into()));
        }
        let mut chols = Vec::with_capacity(k);
        let mut log_dets = Vec::with_capacity(k);
        for (idx, (mu, sigma)) in means.iter().zip(&covariances).enumerate() {
            if mu.len() != dim || sigma.nrows() != dim || sigma.ncols() != dim {
                return Err(GmmError::ComponentMismatch(format!(
                    "component {idx} has inconsistent dimensions"
                )));
            }
            let scale = sigma.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            if !linalg::is_symmetric(sigma, 1e-12 * scale.max(1.0)) {
                return Err(GmmError::NotSymmetric(idx));
            }
            let chol = Cholesky::new(sigma.clone()).ok_or(GmmError::NotSpd(idx))?;
            log_dets.push(linalg::cholesky_log_det(&chol));
            chols.push(chol);
        }
        Ok(Self {
            weights,
            means,
            covariances,
            chols,
            log_dets,
            dim,
        })
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[DVector<f64>] {
        &self.means
    }

    pub fn covariances(&self) -> &[DMatrix<f64>] {
        &self.covariances
    }

    pub fn component(&self, k: usize) -> (&DVector<f64>, &DMatrix<f64>) {
        (&self.means[k], &self.covariances[k])
    }

    /// Log-density of a single component at `point` (without the weight).
    pub fn component_log_pdf(&self, k: usize, point: &DVector<f64>) -> f64 {
        debug_assert_eq!(point.len(), self.dim);
        let diff = point - &self.means[k];
        let solved = self.chols[k].solve(&diff);
        let quad = diff.dot(&solved);
        -0.5 * (self.dim as f64 * (2.0 * std::f64::consts::PI).ln() + self.log_dets[k] + quad)
    }

    /// log p(point) via a log-sum-exp over the weighted components.
    pub fn log_density(&self, point: &DVector<f64>) -> f64 {
        assert_eq!(point.len(), self.dim, "point dimension mismatch");
        let mut terms = Vec::with_capacity(self.weights.len());
        for (k, &w) in self.weights.iter().enumerate() {
            if w > 0.0 {
                terms.push(w.ln() + self.component_log_pdf(k, point));
            }
        }
        log_sum_exp(&terms)
    }
}

pub(crate) fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Hard assignment with the soft responsibilities it was derived from.
#[derive(Debug, Clone)]
pub struct Assignment {
    labels: Vec<usize>,
    responsibilities: DMatrix<f64>,
}

impl Assignment {
    pub fn new(responsibilities: DMatrix<f64>) -> Result<Self, GmmError> {
        let mut labels = Vec::with_capacity(responsibilities.nrows());
        for i in 0..responsibilities.nrows() {
            let row = responsibilities.row(i);
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(GmmError::InvalidWeights(format!(
                    "responsibility row {i} sums to {sum}"
                )));
            }
            labels.push(argmax_lowest(row.iter().copied()));
        }
        Ok(Self {
            labels,
            responsibilities,
        })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn responsibilities(&self) -> &DMatrix<f64> {
        &self.responsibilities
    }
}

/// Argmax with ties broken toward the smaller index.
fn argmax_lowest(values: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, v) in values.enumerate() {
        if v > best_val {
            best_val = v;
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct EmOptions {
    pub max_iter: usize,
    /// Relative log-likelihood gain below which EM stops.
    pub tol: f64,
    pub n_restarts: usize,
    pub cov_ridge: f64,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            tol: 1e-6,
            n_restarts: 5,
            cov_ridge: DEFAULT_COV_RIDGE,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EmFit {
    pub model: GmmModel,
    pub assignment: Assignment,
    pub loglik_trace: Vec<f64>,
}

/// Fits a k-component mixture by EM. Each restart seeds k-means++ from a
/// derived stream; the restart with the best final log-likelihood wins.
pub fn fit_em(
    points: &DMatrix<f64>,
    k: usize,
    seed: u64,
    opts: &EmOptions,
) -> Result<EmFit, GmmError> {
    let n = points.nrows();
    let d = points.ncols();
    if k == 0 {
        return Err(GmmError::InvalidK);
    }
    if n == 0 || d == 0 {
        return Err(GmmError::EmptyPoints);
    }
    if n <= k {
        return Err(GmmError::TooFewPoints { n, k });
    }
    let mut best: Option<EmFit> = None;
    for restart in 0..opts.n_restarts.max(1) {
        let fit = run_em(points, k, derive_seed(seed, restart as u64), opts)?;
        let better = match &best {
            None => true,
            Some(b) => {
                fit.loglik_trace.last().copied().unwrap_or(f64::NEG_INFINITY)
                    > b.loglik_trace.last().copied().unwrap_or(f64::NEG_INFINITY)
            }
        };
        if better {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}

struct MixtureParams {
    weights: Vec<f64>,
    means: Vec<DVector<f64>>,
    covariances: Vec<DMatrix<f64>>,
}

fn run_em(
    points: &DMatrix<f64>,
    k: usize,
    seed: u64,
    opts: &EmOptions,
) -> Result<EmFit, GmmError> {
    let n = points.nrows();
    let d = points.ncols();
    let global_cov = sample_covariance(points, opts.cov_ridge);
    let mut params = kmeanspp_init(points, k, seed, opts.cov_ridge, &global_cov);

    let mut trace: Vec<f64> = Vec::new();
    let mut resp = DMatrix::zeros(n, k);
    let mut prev_ll = f64::NEG_INFINITY;
    let mut row_lse = vec![0.0f64; n];

    for _iter in 0..opts.max_iter.max(1) {
        // E-step.
        let model = GmmModel::new(
            params.weights.clone(),
            params.means.clone(),
            params.covariances.clone(),
        )?;
        let mut loglik = 0.0;
        for i in 0..n {
            let x = DVector::from_iterator(d, points.row(i).iter().copied());
            let mut terms = Vec::with_capacity(k);
            for (c, &w) in model.weights().iter().enumerate() {
                let lw = if w > 0.0 { w.ln() } else { f64::NEG_INFINITY };
                terms.push(lw + model.component_log_pdf(c, &x));
            }
            let lse = log_sum_exp(&terms);
            row_lse[i] = lse;
            let mut row_sum = 0.0;
            for c in 0..k {
                let r = (terms[c] - lse).exp();
                resp[(i, c)] = r;
                row_sum += r;
            }
            for c in 0..k {
                resp[(i, c)] /= row_sum;
            }
            loglik += lse;
        }
        if !loglik.is_finite() {
            return Err(GmmError::NonFinite(format!("log-likelihood {loglik}")));
        }
        trace.push(loglik);
        let gain = loglik - prev_ll;
        if !trace.is_empty() && prev_ll.is_finite() && gain < opts.tol * loglik.abs().max(1.0) {
            break;
        }
        prev_ll = loglik;

        // M-step.
        let mut nk = vec![0.0f64; k];
        for c in 0..k {
            nk[c] = resp.column(c).iter().sum();
        }
        for c in 0..k {
            if nk[c] < 1e-8 {
                // Re-seed the collapsed component at the point the current
                // mixture explains worst.
                let worst = argmax_lowest(row_lse.iter().map(|&v| -v));
                log::warn!("EM component {c} collapsed; re-seeding at point {worst}");
                params.means[c] = DVector::from_iterator(d, points.row(worst).iter().copied());
                params.covariances[c] = global_cov.clone();
                params.weights[c] = 1.0 / n as f64;
                continue;
            }
            let mut mean = DVector::zeros(d);
            for i in 0..n {
                let x = DVector::from_iterator(d, points.row(i).iter().copied());
                mean += x * resp[(i, c)];
            }
            mean /= nk[c];
            let mut cov = DMatrix::zeros(d, d);
            for i in 0..n {
                let x = DVector::from_iterator(d, points.row(i).iter().copied());
                let diff = &x - &mean;
                cov += (&diff * diff.transpose()) * resp[(i, c)];
            }
            cov /= nk[c];
            cov = linalg::symmetrize(&cov);
            for j in 0..d {
                cov[(j, j)] += opts.cov_ridge;
            }
            params.weights[c] = nk[c] / n as f64;
            params.means[c] = mean;
            params.covariances[c] = cov;
        }
        let wsum: f64 = params.weights.iter().sum();
        for w in &mut params.weights {
            *w /= wsum;
        }
    }

    let model = GmmModel::new(params.weights, params.means, params.covariances)?;
    let assignment = Assignment::new(resp)?;
    Ok(EmFit {
        model,
        assignment,
        loglik_trace: trace,
    })
}

fn sample_covariance(points: &DMatrix<f64>, ridge: f64) -> DMatrix<f64> {
    let n = points.nrows();
    let d = points.ncols();
    let mut mean = DVector::zeros(d);
    for i in 0..n {
        mean += DVector::from_iterator(d, points.row(i).iter().copied());
    }
    mean /= n as f64;
    let mut cov = DMatrix::zeros(d, d);
    for i in 0..n {
        let diff = DVector::from_iterator(d, points.row(i).iter().copied()) - &mean;
        cov += &diff * diff.transpose();
    }
    cov /= n as f64;
    cov = linalg::symmetrize(&cov);
    for j in 0..d {
        cov[(j, j)] += ridge;
    }
    cov
}

fn kmeanspp_init(
    points: &DMatrix<f64>,
    k: usize,
    seed: u64,
    ridge: f64,
    global_cov: &DMatrix<f64>,
) -> MixtureParams {
    let n = points.nrows();
    let d = points.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers: Vec<usize> = vec![rng.random_range(0..n)];
    let mut dist2 = vec![f64::INFINITY; n];
    while centers.len() < k {
        let last = *centers.last().unwrap();
        for i in 0..n {
            let diff = points.row(i) - points.row(last);
            dist2[i] = dist2[i].min(diff.norm_squared());
        }
        let total: f64 = dist2.iter().sum();
        let next = if total > 0.0 {
            let r = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &w) in dist2.iter().enumerate() {
                acc += w;
                if acc >= r {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.push(next);
    }

    // Hard-assign to nearest center and estimate per-cluster moments.
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); k];
    for i in 0..n {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (c, &ci) in centers.iter().enumerate() {
            let diff = points.row(i) - points.row(ci);
            let dsq = diff.norm_squared();
            if dsq < best_d {
                best_d = dsq;
                best = c;
            }
        }
        groups[best].push(i);
    }
    let mut weights = Vec::with_capacity(k);
    let mut means = Vec::with_capacity(k);
    let mut covariances = Vec::with_capacity(k);
    for (c, group) in groups.iter().enumerate() {
        if group.is_empty() {
            weights.push(1.0 / n as f64);
            means.push(DVector::from_iterator(
                d,
                points.row(centers[c]).iter().copied(),
            ));
            covariances.push(global_cov.clone());
            continue;
        }
        let mut mean = DVector::zeros(d);
        for &i in group {
            mean += DVector::from_iterator(d, points.row(i).iter().copied());
        }
        mean /= group.len() as f64;
        let mut cov = DMatrix::zeros(d, d);
        for &i in group {
            let diff = DVector::from_iterator(d, points.row(i).iter().copied()) - &mean;
            cov += &diff * diff.transpose();
        }
        cov /= group.len() as f64;
        cov = linalg::symmetrize(&cov);
        for j in 0..d {
            cov[(j, j)] += ridge;
        }
        weights.push(group.len() as f64 / n as f64);
        means.push(mean);
        covariances.push(cov);
    }
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    MixtureParams {
        weights,
        means,
        covariances,
    }
}

/// Draws `m` samples from a single Gaussian via its Cholesky factor, falling
/// back to an eigendecomposition square root when the factorization fails.
pub fn sample_gaussian(
    mu: &DVector<f64>,
    sigma: &DMatrix<f64>,
    m: usize,
    seed: u64,
) -> Result<DMatrix<f64>, GmmError> {
    let d = mu.len();
    if sigma.nrows() != d || sigma.ncols() != d {
        return Err(GmmError::DimensionMismatch {
            expected: d,
            got: sigma.nrows(),
        });
    }
    let factor = gaussian_factor(sigma)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = DMatrix::zeros(m, d);
    for i in 0..m {
        let z = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
        let x = mu + &factor * z;
        out.row_mut(i).copy_from(&x.transpose());
    }
    Ok(out)
}

fn gaussian_factor(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>, GmmError> {
    match Cholesky::new(sigma.clone()) {
        Some(c) => Ok(c.l().clone_owned()),
        None => {
            log::warn!("covariance is near-singular; sampling via eigendecomposition");
            let (vals, vecs) = linalg::sym_eigen(sigma)
                .map_err(|_| GmmError::NonFinite("eigendecomposition failed".into()))?;
            let sqrt = DVector::from_iterator(vals.len(), vals.iter().map(|v| v.max(0.0).sqrt()));
            Ok(&vecs * DMatrix::from_diagonal(&sqrt))
        }
    }
}

/// Draws `m` samples from the mixture: component by the weight vector, then
/// a Gaussian draw from the same RNG stream.
pub fn sample_mixture(model: &GmmModel, m: usize, seed: u64) -> Result<DMatrix<f64>, GmmError> {
    let d = model.dim();
    let factors: Vec<DMatrix<f64>> = model
        .covariances()
        .iter()
        .map(gaussian_factor)
        .collect::<Result<_, _>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = DMatrix::zeros(m, d);
    for i in 0..m {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut comp = model.n_components() - 1;
        for (c, &w) in model.weights().iter().enumerate() {
            acc += w;
            if u < acc {
                comp = c;
                break;
            }
        }
        let z = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
        let x = &model.means()[comp] + &factors[comp] * z;
        out.row_mut(i).copy_from(&x.transpose());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn blob_points(center: &[f64], n: usize, seed: u64) -> DMatrix<f64> {
        let mu = DVector::from_row_slice(center);
        let sigma = DMatrix::identity(center.len(), center.len());
        sample_gaussian(&mu, &sigma, n, seed).unwrap()
    }

    #[test]
    fn recovers_two_separated_blobs() {
        let a = blob_points(&[5.0, 0.0], 200, 1);
        let b = blob_points(&[-5.0, 0.0], 200, 2);
        let mut points = DMatrix::zeros(400, 2);
        points.view_mut((0, 0), (200, 2)).copy_from(&a);
        points.view_mut((200, 0), (200, 2)).copy_from(&b);
        let fit = fit_em(&points, 2, 3, &EmOptions::default()).unwrap();
        let mut means: Vec<f64> = fit.model.means().iter().map(|m| m[0]).collect();
        means.sort_by(|x, y| x.partial_cmp(y).unwrap());
        assert!((means[0] + 5.0).abs() < 0.3, "mean {}", means[0]);
        assert!((means[1] - 5.0).abs() < 0.3, "mean {}", means[1]);
        for w in fit.model.weights() {
            assert!((w - 0.5).abs() < 0.05);
        }
    }

    #[test]
    fn k1_is_exact_closed_form() {
        let points = DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 2.0, 0.0, 0.0, 2.0, 2.0, 2.0]);
        let fit = fit_em(&points, 1, 0, &EmOptions::default()).unwrap();
        let mean = &fit.model.means()[0];
        assert_relative_eq!(mean[0], 1.0);
        assert_relative_eq!(mean[1], 1.0);
        // Biased sample covariance of the four corners is I, plus the ridge.
        let cov = &fit.model.covariances()[0];
        assert_relative_eq!(cov[(0, 0)], 1.0 + DEFAULT_COV_RIDGE);
        assert_relative_eq!(cov[(1, 1)], 1.0 + DEFAULT_COV_RIDGE);
        assert_relative_eq!(cov[(0, 1)], 0.0);
    }

    #[test]
    fn duplicated_points_hit_the_ridge_floor() {
        let points = DMatrix::zeros(5, 2);
        let fit = fit_em(&points, 1, 0, &EmOptions::default()).unwrap();
        let cov = &fit.model.covariances()[0];
        for i in 0..2 {
            for j in 0..2 {
                let expected = if i == j { DEFAULT_COV_RIDGE } else { 0.0 };
                assert_eq!(cov[(i, j)], expected);
            }
        }
    }

    #[test]
    fn rejects_too_few_points() {
        let points = DMatrix::zeros(3, 2);
        assert!(matches!(
            fit_em(&points, 3, 0, &EmOptions::default()),
            Err(GmmError::TooFewPoints { n: 3, k: 3 })
        ));
    }

    #[test]
    fn loglik_trace_is_nondecreasing_and_deterministic() {
        let a = blob_points(&[3.0, 1.0], 80, 4);
        let b = blob_points(&[-2.0, -1.0], 80, 5);
        let mut points = DMatrix::zeros(160, 2);
        points.view_mut((0, 0), (80, 2)).copy_from(&a);
        points.view_mut((80, 0), (80, 2)).copy_from(&b);
        let fit1 = fit_em(&points, 2, 9, &EmOptions::default()).unwrap();
        let fit2 = fit_em(&points, 2, 9, &EmOptions::default()).unwrap();
        assert_eq!(fit1.loglik_trace, fit2.loglik_trace);
        for w in fit1.loglik_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-8, "trace decreased: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn responsibilities_are_row_stochastic_with_argmax_labels() {
        let a = blob_points(&[4.0], 50, 6);
        let b = blob_points(&[-4.0], 50, 7);
        let mut points = DMatrix::zeros(100, 1);
        points.view_mut((0, 0), (50, 1)).copy_from(&a);
        points.view_mut((50, 0), (50, 1)).copy_from(&b);
        let fit = fit_em(&points, 2, 11, &EmOptions::default()).unwrap();
        let resp = fit.assignment.responsibilities();
        for i in 0..resp.nrows() {
            let sum: f64 = resp.row(i).iter().sum();
            assert!((sum - 1.0).abs() <= 1e-12);
            let argmax = argmax_lowest(resp.row(i).iter().copied());
            assert_eq!(fit.assignment.labels()[i], argmax);
        }
    }

    #[test]
    fn log_density_matches_standard_normal_at_mode() {
        let model = GmmModel::new(
            vec![1.0],
            vec![DVector::zeros(1)],
            vec![DMatrix::identity(1, 1)],
        )
        .unwrap();
        let v = model.log_density(&DVector::zeros(1));
        assert_relative_eq!(v, -(2.0 * std::f64::consts::PI).ln() / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn log_density_symmetric_midpoint_matches_single_component() {
        let model = GmmModel::new(
            vec![0.5, 0.5],
            vec![DVector::from_row_slice(&[-2.0]), DVector::from_row_slice(&[2.0])],
            vec![DMatrix::identity(1, 1), DMatrix::identity(1, 1)],
        )
        .unwrap();
        let at_mid = model.log_density(&DVector::zeros(1));
        // Equals the density of a single unit Gaussian evaluated at offset 2.
        let single = GmmModel::new(
            vec![1.0],
            vec![DVector::zeros(1)],
            vec![DMatrix::identity(1, 1)],
        )
        .unwrap();
        let expected = single.log_density(&DVector::from_row_slice(&[2.0]));
        assert_relative_eq!(at_mid, expected, epsilon = 1e-12);
    }

    #[test]
    fn log_density_matches_naive_summation() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let model = GmmModel::new(
            vec![0.2, 0.5, 0.3],
            vec![
                DVector::from_row_slice(&[0.0, 0.0]),
                DVector::from_row_slice(&[3.0, 1.0]),
                DVector::from_row_slice(&[-2.0, 2.0]),
            ],
            vec![
                DMatrix::identity(2, 2),
                DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]),
                DMatrix::from_row_slice(2, 2, &[1.5, -0.2, -0.2, 0.5]),
            ],
        )
        .unwrap();
        for _ in 0..1000 {
            let x = DVector::from_fn(2, |_, _| rng.random::<f64>() * 8.0 - 4.0);
            let naive: f64 = (0..3)
                .map(|k| model.weights()[k] * model.component_log_pdf(k, &x).exp())
                .sum();
            assert_relative_eq!(model.log_density(&x), naive.ln(), epsilon = 1e-10);
        }
    }

    #[test]
    fn sampling_moments_and_determinism() {
        let mu = DVector::zeros(2);
        let sigma = DMatrix::identity(2, 2);
        let s = sample_gaussian(&mu, &sigma, 20_000, 13).unwrap();
        let mean = s.row_mean();
        assert!(mean.iter().all(|m| m.abs() < 0.05));
        let mut cov = DMatrix::zeros(2, 2);
        for i in 0..s.nrows() {
            let diff = s.row(i) - &mean;
            cov += diff.transpose() * diff;
        }
        cov /= s.nrows() as f64;
        assert!((cov - DMatrix::identity(2, 2)).norm() < 0.05);
        let again = sample_gaussian(&mu, &sigma, 20_000, 13).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn anisotropic_variance_ratio() {
        let mu = DVector::zeros(2);
        let sigma = DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 1.0]);
        let s = sample_gaussian(&mu, &sigma, 20_000, 17).unwrap();
        let var = |col: usize| {
            let m: f64 = s.column(col).iter().sum::<f64>() / s.nrows() as f64;
            s.column(col).iter().map(|v| (v - m) * (v - m)).sum::<f64>() / s.nrows() as f64
        };
        let ratio = var(0) / var(1);
        assert!((ratio - 4.0).abs() / 4.0 < 0.15, "ratio {ratio}");
    }
}
