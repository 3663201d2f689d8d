//! KL divergence machinery: the closed-form Gaussian KL, Gaussian
//! cross-entropy and entropy, a variational upper bound between Gaussian
//! mixtures built from auxiliary couplings phi/psi with weight-marginal
//! constraints, and a Monte-Carlo KL estimator used as a test oracle.
//!
//! Everything goes through Cholesky solves in log space; no routine forms an
//! explicit inverse.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::gmm::{self, GmmModel};
use crate::linalg;

#[derive(Debug, Error)]
pub enum DivergenceError {
    #[error("{which} is not symmetric positive definite")]
    NotSpd { which: &'static str },
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("expected {expected} components, got {got}")]
    ComponentCountMismatch { expected: usize, got: usize },
    #[error("bound evaluated to {0}, below the -1e-9 floor")]
    NegativeBound(f64),
    #[error(transparent)]
    Gmm(#[from] gmm::GmmError),
}

fn check_dims(
    mu_a: &DVector<f64>,
    sigma_a: &DMatrix<f64>,
    mu_b: &DVector<f64>,
    sigma_b: &DMatrix<f64>,
) -> Result<usize, DivergenceError> {
    let d = mu_a.len();
    if mu_b.len() != d {
        return Err(DivergenceError::DimensionMismatch(d, mu_b.len()));
    }
    if sigma_a.nrows() != d || sigma_a.ncols() != d {
        return Err(DivergenceError::DimensionMismatch(d, sigma_a.nrows()));
    }
    if sigma_b.nrows() != d || sigma_b.ncols() != d {
        return Err(DivergenceError::DimensionMismatch(d, sigma_b.nrows()));
    }
    Ok(d)
}

/// KL(N_a || N_b) in nats:
/// (1/2) [ tr(Σ_b^{-1} Σ_a) + Δᵀ Σ_b^{-1} Δ - D + log(|Σ_b| / |Σ_a|) ]
/// with Δ = μ_b - μ_a.
pub fn kl_gaussian(
    mu_a: &DVector<f64>,
    sigma_a: &DMatrix<f64>,
    mu_b: &DVector<f64>,
    sigma_b: &DMatrix<f64>,
) -> Result<f64, DivergenceError> {
    let d = check_dims(mu_a, sigma_a, mu_b, sigma_b)?;
    let chol_a = linalg::spd_cholesky(sigma_a).ok_or(DivergenceError::NotSpd {
        which: "first covariance",
    })?;
    let chol_b = linalg::spd_cholesky(sigma_b).ok_or(DivergenceError::NotSpd {
        which: "second covariance",
    })?;
    let log_det_a = linalg::cholesky_log_det(&chol_a);
    let log_det_b = linalg::cholesky_log_det(&chol_b);
    let trace = chol_b.solve(sigma_a).trace();
    let delta = mu_b - mu_a;
    let quad = delta.dot(&chol_b.solve(&delta));
    Ok(0.5 * (trace + quad - d as f64 + log_det_b - log_det_a))
}

/// Cross-entropy -∫ N_a log N_b in nats:
/// (1/2) [ D log 2π + log|Σ_b| + tr(Σ_b^{-1} Σ_a) + Δᵀ Σ_b^{-1} Δ ].
pub fn gaussian_cross_entropy(
    mu_a: &DVector<f64>,
    sigma_a: &DMatrix<f64>,
    mu_b: &DVector<f64>,
    sigma_b: &DMatrix<f64>,
) -> Result<f64, DivergenceError> {
    let d = check_dims(mu_a, sigma_a, mu_b, sigma_b)?;
    linalg::spd_cholesky(sigma_a).ok_or(DivergenceError::NotSpd {
        which: "first covariance",
    })?;
    let chol_b = linalg::spd_cholesky(sigma_b).ok_or(DivergenceError::NotSpd {
        which: "second covariance",
    })?;
    let log_det_b = linalg::cholesky_log_det(&chol_b);
    let trace = chol_b.solve(sigma_a).trace();
    let delta = mu_b - mu_a;
    let quad = delta.dot(&chol_b.solve(&delta));
    Ok(0.5 * (d as f64 * (2.0 * std::f64::consts::PI).ln() + log_det_b + trace + quad))
}

/// Differential entropy of N(μ, Σ) in nats.
pub fn gaussian_entropy(sigma: &DMatrix<f64>) -> Result<f64, DivergenceError> {
    let chol = linalg::spd_cholesky(sigma).ok_or(DivergenceError::NotSpd {
        which: "covariance",
    })?;
    let d = sigma.nrows() as f64;
    Ok(0.5 * (d * (2.0 * std::f64::consts::PI).ln() + d + linalg::cholesky_log_det(&chol)))
}

/// Auxiliary couplings and the bound value they certify.
///
/// `phi` is K x (K+1) with row k summing to w_k; `psi` is K x (K+1) with
/// column k' summing to w'_{k'}.
#[derive(Debug, Clone)]
pub struct BoundState {
    pub phi: DMatrix<f64>,
    pub psi: DMatrix<f64>,
    pub bound_value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Bound value after each full sweep.
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct BoundOptions {
    /// Convergence threshold on the largest entry change per sweep.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for BoundOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 200,
        }
    }
}

/// Variational upper bound on KL(p_orig || p_new) for mixtures with K and
/// K+1 components.
///
/// Alternates the two fixed-point updates (psi from phi, then phi from psi)
/// from the outer-product initialization phi = w wᵀ' until the largest entry
/// change drops below tolerance. The bound evaluates to
/// Σ φ_{k'|k} [ log φ_{k'|k} - log ψ_{k|k'} + KL(N_k || N_{k'}) ].
pub fn variational_bound(
    p_orig: &GmmModel,
    p_new: &GmmModel,
    init: Option<&BoundState>,
    opts: &BoundOptions,
) -> Result<BoundState, DivergenceError> {
    let k_orig = p_orig.n_components();
    let k_new = p_new.n_components();
    if k_new != k_orig + 1 {
        return Err(DivergenceError::ComponentCountMismatch {
            expected: k_orig + 1,
            got: k_new,
        });
    }
    if p_orig.dim() != p_new.dim() {
        return Err(DivergenceError::DimensionMismatch(p_orig.dim(), p_new.dim()));
    }
    let w = p_orig.weights();
    let w_new = p_new.weights();

    // Pairwise KL between original components and new-mixture components.
    let mut kl = DMatrix::zeros(k_orig, k_new);
    for k in 0..k_orig {
        let (mu_k, sig_k) = p_orig.component(k);
        for kp in 0..k_new {
            let (mu_kp, sig_kp) = p_new.component(kp);
            kl[(k, kp)] = kl_gaussian(mu_k, sig_k, mu_kp, sig_kp)?;
        }
    }

    let mut phi = match init {
        Some(state) if state.phi.nrows() == k_orig && state.phi.ncols() == k_new => {
            state.phi.clone()
        }
        _ => DMatrix::from_fn(k_orig, k_new, |k, kp| w[k] * w_new[kp]),
    };
    let mut psi = DMatrix::zeros(k_orig, k_new);

    let evaluate = |phi: &DMatrix<f64>, psi: &DMatrix<f64>| -> f64 {
        let mut total = 0.0;
        for k in 0..k_orig {
            for kp in 0..k_new {
                let p = phi[(k, kp)];
                if p > 0.0 {
                    total += p * (p.ln() - psi[(k, kp)].ln() + kl[(k, kp)]);
                }
            }
        }
        total
    };

    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for iter in 0..opts.max_iter.max(1) {
        let phi_prev = phi.clone();
        let psi_prev = psi.clone();
        // psi_{k|k'} = w'_{k'} phi_{k'|k} / Σ_l phi_{k'|l}
        for kp in 0..k_new {
            let col_sum: f64 = (0..k_orig).map(|k| phi[(k, kp)]).sum();
            for k in 0..k_orig {
                psi[(k, kp)] = if col_sum > 0.0 {
                    w_new[kp] * phi[(k, kp)] / col_sum
                } else {
                    0.0
                };
            }
        }
        // phi_{k'|k} = w_k psi_{k|k'} e^{-KL(k,k')} / Σ_l psi_{k|l} e^{-KL(k,l)}
        for k in 0..k_orig {
            let mut denom = 0.0;
            for kp in 0..k_new {
                denom += psi[(k, kp)] * (-kl[(k, kp)]).exp();
            }
            if denom > 0.0 {
                for kp in 0..k_new {
                    phi[(k, kp)] = w[k] * psi[(k, kp)] * (-kl[(k, kp)]).exp() / denom;
                }
            } else {
                // Degenerate row (all mass annihilated); keep the previous
                // coupling so the marginal constraint stays intact.
                for kp in 0..k_new {
                    phi[(k, kp)] = phi_prev[(k, kp)];
                }
            }
        }
        iterations = iter + 1;
        trace.push(evaluate(&phi, &psi));
        let delta = (&phi - &phi_prev)
            .iter()
            .chain((&psi - &psi_prev).iter())
            .fold(0.0f64, |m, v| m.max(v.abs()));
        if delta < opts.tol {
            converged = true;
            break;
        }
    }
    let bound_value = *trace.last().expect("at least one sweep");
    if bound_value < -1e-9 {
        return Err(DivergenceError::NegativeBound(bound_value));
    }
    Ok(BoundState {
        phi,
        psi,
        bound_value,
        iterations,
        converged,
        trace,
    })
}

/// Monte-Carlo estimate of KL(p || q) with its standard error, from
/// `n_samples` draws of p.
pub fn mc_kl_oracle(
    p: &GmmModel,
    q: &GmmModel,
    n_samples: usize,
    seed: u64,
) -> Result<(f64, f64), DivergenceError> {
    if p.dim() != q.dim() {
        return Err(DivergenceError::DimensionMismatch(p.dim(), q.dim()));
    }
    let samples = gmm::sample_mixture(p, n_samples, seed)?;
    let n = samples.nrows();
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for i in 0..n {
        let x = DVector::from_iterator(p.dim(), samples.row(i).iter().copied());
        let t = p.log_density(&x) - q.log_density(&x);
        sum += t;
        sum_sq += t * t;
    }
    let mean = sum / n as f64;
    let var = (sum_sq / n as f64 - mean * mean).max(0.0) * n as f64 / (n as f64 - 1.0);
    Ok((mean, (var / n as f64).sqrt()))
}

/// Minimum over existing components k of KL(N_k || N(μ_new, Σ_new)), with the
/// minimizing index. Ties break toward the smaller index.
pub fn min_pairwise_novelty(
    model: &GmmModel,
    mu_new: &DVector<f64>,
    sigma_new: &DMatrix<f64>,
) -> Result<(f64, usize), DivergenceError> {
    let mut best = f64::INFINITY;
    let mut best_k = 0;
    for k in 0..model.n_components() {
        let (mu_k, sig_k) = model.component(k);
        let d = kl_gaussian(mu_k, sig_k, mu_new, sigma_new)?;
        if d < best {
            best = d;
            best_k = k;
        }
    }
    Ok((best, best_k))
}
