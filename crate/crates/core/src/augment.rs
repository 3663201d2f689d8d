//! Community augmentation: place one additional mixture component by
//! alternating a novelty ascent (gradient step on the mean, von Neumann
//! mirror step on the covariance) with a reliability descent (exponential
//! gradient on the augmented weights), then sample new latent points, re-check
//! the selected cluster count, and decode the augmented graph.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::divergence::{
    min_pairwise_novelty, variational_bound, BoundOptions, BoundState, DivergenceError,
};
use crate::embed::{decode_graph, DecodeMode, EmbedError, LatentEmbedding, TrainedDecoder};
use crate::gmm::{self, EmOptions, GmmError, GmmModel};
use crate::graph::{Graph, GraphError};
use crate::linalg::{self, LinalgError};
use crate::mdl::{self, MdlError};
use crate::seed::derive_seed;

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("invalid augment config: {0}")]
    InvalidConfig(String),
    #[error("model has a single component; supply delta1 explicitly instead of a D_max multiple")]
    NeedExplicitDelta1,
    #[error("update produced non-finite values even after 10 step halvings")]
    NonFiniteStep,
    #[error("new covariance is not symmetric positive definite")]
    NotSpd,
    #[error("K_est never reached K+1 = {expected}; attempts returned {attempts:?}")]
    ResampleExhausted {
        expected: usize,
        attempts: Vec<usize>,
    },
    #[error("embedding dimension {emb} does not match model dimension {model}")]
    DimensionMismatch { emb: usize, model: usize },
    #[error(transparent)]
    Divergence(#[from] DivergenceError),
    #[error(transparent)]
    Gmm(#[from] GmmError),
    #[error(transparent)]
    Mdl(#[from] MdlError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Reliability threshold: a literal value or a multiple of the maximum
/// pairwise KL between existing clusters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    Absolute(f64),
    DmaxMultiple(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitComponent {
    /// Copy a seeded-random existing component, with a small mean jitter to
    /// escape the stationary point at an exact copy.
    RandomExisting,
    Explicit {
        mu: DVector<f64>,
        sigma: DMatrix<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeModeKind {
    AllPairs,
    PreserveOriginal,
}

#[derive(Debug, Clone)]
pub struct AugmentConfig {
    /// Novelty threshold delta_0.
    pub delta0: f64,
    /// Reliability threshold delta_1.
    pub delta1: Threshold,
    /// Learning rate of the update steps.
    pub eta: f64,
    /// Number of latent points sampled from the new component.
    pub m_new_nodes: usize,
    pub max_outer_iter: usize,
    pub max_resample: usize,
    pub init_component: InitComponent,
    /// Cluster-count candidates for the K_est re-check.
    pub k_candidates: Vec<usize>,
    pub seed: u64,
    pub decode_mode: DecodeModeKind,
    pub bound_options: BoundOptions,
    pub em: EmOptions,
}

impl AugmentConfig {
    /// The experimental setting: delta_0 = 5, delta_1 = D_max, eta = 0.01,
    /// M = 5.
    pub fn paper_defaults(k_candidates: Vec<usize>, seed: u64) -> Self {
        Self {
            delta0: 5.0,
            delta1: Threshold::DmaxMultiple(1.0),
            eta: 0.01,
            m_new_nodes: 5,
            max_outer_iter: 5000,
            max_resample: 20,
            init_component: InitComponent::RandomExisting,
            k_candidates,
            seed,
            decode_mode: DecodeModeKind::AllPairs,
            bound_options: BoundOptions::default(),
            em: EmOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<(), AugmentError> {
        if !(self.delta0 >= 0.0) {
            return Err(AugmentError::InvalidConfig("delta0 must be >= 0".into()));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(AugmentError::InvalidConfig("eta must be positive".into()));
        }
        if self.m_new_nodes == 0 {
            return Err(AugmentError::InvalidConfig(
                "m_new_nodes must be >= 1".into(),
            ));
        }
        if self.max_outer_iter == 0 {
            return Err(AugmentError::InvalidConfig(
                "max_outer_iter must be >= 1".into(),
            ));
        }
        if self.k_candidates.is_empty() || self.k_candidates.contains(&0) {
            return Err(AugmentError::InvalidConfig(
                "k_candidates must be nonempty and positive".into(),
            ));
        }
        if let Threshold::Absolute(v) = self.delta1 {
            if v.is_nan() || v < 0.0 {
                return Err(AugmentError::InvalidConfig(format!(
                    "delta1 {v} must be nonnegative"
                )));
            }
        }
        Ok(())
    }
}

/// The evolving new-component parameters with convergence diagnostics.
#[derive(Debug, Clone)]
pub struct AugmentState {
    pub mu_new: DVector<f64>,
    pub sigma_new: DMatrix<f64>,
    /// Augmented weight vector of length K+1.
    pub weights_new: Vec<f64>,
    pub novelty_min: f64,
    pub reliability_bound: f64,
    pub novelty_converged: bool,
    pub reliability_converged: bool,
    /// Update iterations applied (one novelty step plus one reliability step
    /// each).
    pub iterations: usize,
    pub novelty_trace: Vec<f64>,
    pub bound_trace: Vec<f64>,
    pub delta1_resolved: f64,
    /// Index of the existing component the initialization copied, when the
    /// random initializer was used.
    pub init_component_index: Option<usize>,
    /// Spectral bounds of the covariance trust region.
    pub sigma_eig_floor: f64,
    pub sigma_eig_ceil: f64,
}

impl AugmentState {
    pub fn converged(&self) -> bool {
        self.novelty_converged && self.reliability_converged
    }
}

/// Maximum KL divergence over ordered pairs of existing components.
pub fn compute_dmax(model: &GmmModel) -> Result<f64, AugmentError> {
    let k = model.n_components();
    if k < 2 {
        return Err(AugmentError::NeedExplicitDelta1);
    }
    let mut max = 0.0f64;
    for a in 0..k {
        for b in 0..k {
            if a == b {
                continue;
            }
            let (mu_a, sig_a) = model.component(a);
            let (mu_b, sig_b) = model.component(b);
            max = max.max(crate::divergence::kl_gaussian(mu_a, sig_a, mu_b, sig_b)?);
        }
    }
    Ok(max)
}

pub fn resolve_delta1(model: &GmmModel, delta1: &Threshold) -> Result<f64, AugmentError> {
    match delta1 {
        Threshold::Absolute(v) => Ok(*v),
        Threshold::DmaxMultiple(c) => Ok(c * compute_dmax(model)?),
    }
}

/// Spectral trust region of the covariance mirror step: eigenvalues of the
/// new component's covariance may move at most this factor away from the
/// initial component's spectrum in either direction. Without the projection,
/// shrinking the covariance is itself an ascent direction of every pairwise
/// KL, and the novelty threshold can be met by collapse instead of mean
/// separation (which the K_est re-check then rejects).
const SIGMA_TRUST_FACTOR: f64 = 4.0;

/// One ascent step on the novelty objective: the KL from the nearest existing
/// component to the new one. The mean moves along the analytic gradient; the
/// covariance takes a von Neumann mirror step, exp(log Sigma + eta grad),
/// which stays SPD by construction. Non-finite results trigger step halving.
pub fn novelty_step(
    state: &mut AugmentState,
    model: &GmmModel,
    eta: f64,
) -> Result<(), AugmentError> {
    let d = model.dim();
    let (_, k_star) = min_pairwise_novelty(model, &state.mu_new, &state.sigma_new)?;
    let (mu_k, sig_k) = model.component(k_star);
    let chol = linalg::spd_cholesky(&state.sigma_new).ok_or(AugmentError::NotSpd)?;
    let delta = &state.mu_new - mu_k;
    let grad_mu = chol.solve(&delta);
    // grad_Sigma of KL(N_k* || N_new) = (1/2)(S^{-1} - S^{-1}(dd' + Sigma_k*)S^{-1}).
    let a = &delta * delta.transpose() + sig_k;
    let sinv_a = chol.solve(&a);
    let sinv_a_sinv = chol.solve(&sinv_a.transpose()).transpose();
    let sigma_inv = chol.solve(&DMatrix::identity(d, d));
    let grad_sigma = linalg::symmetrize(&((sigma_inv - sinv_a_sinv) * 0.5));
    let log_sigma = linalg::spd_log(&state.sigma_new)?;

    let mut step = eta;
    for attempt in 0..=10 {
        let mu_try = &state.mu_new + &grad_mu * step;
        let sigma_try = linalg::sym_exp_clamped(
            &(&log_sigma + &grad_sigma * step),
            state.sigma_eig_floor,
            state.sigma_eig_ceil,
        )?;
        let finite =
            mu_try.iter().all(|v| v.is_finite()) && sigma_try.iter().all(|v| v.is_finite());
        if finite {
            state.mu_new = mu_try;
            state.sigma_new = sigma_try;
            let (nov, _) = min_pairwise_novelty(model, &state.mu_new, &state.sigma_new)?;
            state.novelty_min = nov;
            return Ok(());
        }
        if attempt == 10 {
            break;
        }
        step *= 0.5;
        log::warn!("novelty step produced non-finite values; halving eta to {step}");
    }
    Err(AugmentError::NonFiniteStep)
}

/// One exponential-gradient descent step on the augmented weights, holding
/// the couplings fixed. The gradient of the bound in w'_{k'} is
/// -(sum_k phi_{k'|k}) / w'_{k'}; the multiplicative update is evaluated in
/// log space and renormalized, so the weights stay strictly positive.
pub fn reliability_step(
    state: &mut AugmentState,
    bound: &BoundState,
    eta: f64,
) -> Result<(), AugmentError> {
    let k_new = state.weights_new.len();
    if bound.phi.ncols() != k_new {
        return Err(AugmentError::InvalidConfig(format!(
            "bound has {} columns for {} weights",
            bound.phi.ncols(),
            k_new
        )));
    }
    let mut log_w: Vec<f64> = Vec::with_capacity(k_new);
    for (kp, &w) in state.weights_new.iter().enumerate() {
        let phi_col: f64 = bound.phi.column(kp).iter().sum();
        let g = -phi_col / w;
        log_w.push(w.ln() - eta * g);
    }
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut weights: Vec<f64> = log_w.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= sum;
    }
    // Exact renormalization so downstream simplex checks hold to 1e-12.
    let correction: f64 = 1.0 - weights.iter().sum::<f64>();
    weights[0] += correction;
    state.weights_new = weights;
    Ok(())
}

fn build_augmented_mixture(model: &GmmModel, state: &AugmentState) -> Result<GmmModel, GmmError> {
    let mut means: Vec<DVector<f64>> = model.means().to_vec();
    let mut covs: Vec<DMatrix<f64>> = model.covariances().to_vec();
    means.push(state.mu_new.clone());
    covs.push(state.sigma_new.clone());
    GmmModel::new(state.weights_new.clone(), means, covs)
}

/// Runs the alternating optimization until the novelty minimum reaches
/// delta_0 and the reliability bound drops below delta_1, or the iteration
/// budget is exhausted (the returned state carries per-condition flags; it is
/// not an error).
pub fn place_new_component(
    model: &GmmModel,
    config: &AugmentConfig,
) -> Result<AugmentState, AugmentError> {
    config.validate()?;
    let k = model.n_components();
    let d = model.dim();
    let delta1 = resolve_delta1(model, &config.delta1)?;

    let mut init_index = None;
    let (mu_new, sigma_new) = match &config.init_component {
        InitComponent::Explicit { mu, sigma } => {
            if mu.len() != d || sigma.nrows() != d || sigma.ncols() != d {
                return Err(AugmentError::DimensionMismatch {
                    emb: mu.len(),
                    model: d,
                });
            }
            linalg::spd_cholesky(sigma).ok_or(AugmentError::NotSpd)?;
            (mu.clone(), sigma.clone())
        }
        InitComponent::RandomExisting => {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 0));
            let idx = rng.random_range(0..k);
            init_index = Some(idx);
            let (mu_k, sig_k) = model.component(idx);
            // An exact copy is a stationary point of the novelty objective;
            // jitter the mean at 1% of the component's mean standard
            // deviation to break the symmetry.
            let scale = 0.01 * (sig_k.diagonal().mean()).sqrt();
            let jitter = DVector::from_fn(d, |_, _| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * scale
            });
            (mu_k + jitter, sig_k.clone())
        }
    };

    let mut weights_new: Vec<f64> = model
        .weights()
        .iter()
        .map(|w| w * k as f64 / (k + 1) as f64)
        .collect();
    weights_new.push(1.0 / (k + 1) as f64);
    let correction: f64 = 1.0 - weights_new.iter().sum::<f64>();
    weights_new[0] += correction;

    let (eig_min, eig_max) = {
        let (vals, _) = linalg::sym_eigen(&sigma_new)?;
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo.max(1e-12), hi.max(1e-12))
    };

    let mut state = AugmentState {
        mu_new,
        sigma_new,
        weights_new,
        novelty_min: f64::NAN,
        reliability_bound: f64::NAN,
        novelty_converged: false,
        reliability_converged: false,
        iterations: 0,
        novelty_trace: Vec::new(),
        bound_trace: Vec::new(),
        delta1_resolved: delta1,
        init_component_index: init_index,
        sigma_eig_floor: eig_min / SIGMA_TRUST_FACTOR,
        sigma_eig_ceil: eig_max * SIGMA_TRUST_FACTOR,
    };

    let mut prev_bound: Option<BoundState> = None;
    loop {
        let p_new = build_augmented_mixture(model, &state)?;
        let bound = variational_bound(model, &p_new, prev_bound.as_ref(), &config.bound_options)?;
        let (novelty, _) = min_pairwise_novelty(model, &state.mu_new, &state.sigma_new)?;
        state.novelty_min = novelty;
        state.reliability_bound = bound.bound_value;
        state.novelty_trace.push(novelty);
        state.bound_trace.push(bound.bound_value);
        state.novelty_converged = novelty >= config.delta0;
        state.reliability_converged = bound.bound_value <= delta1;
        if state.converged() || state.iterations >= config.max_outer_iter {
            break;
        }
        novelty_step(&mut state, model, config.eta)?;
        reliability_step(&mut state, &bound, config.eta)?;
        state.iterations += 1;
        prev_bound = Some(bound);
    }
    Ok(state)
}

/// Result of a successful augmentation: the decoded graph, the accepted
/// cluster-count estimate, the sampled latent points, and the K_est value of
/// every attempt (the accepted one last).
#[derive(Debug, Clone)]
pub struct AugmentOutcome {
    pub graph: Graph,
    pub k_est: usize,
    pub new_points: DMatrix<f64>,
    pub attempts: Vec<usize>,
}

/// Samples M points from the new component, re-checks that MDL selects K+1
/// clusters on the concatenated points (redrawing with a fresh seed up to
/// `max_resample` times), and decodes the augmented point set into a graph.
pub fn augment_graph(
    graph: &Graph,
    embedding: &LatentEmbedding,
    decoder: &TrainedDecoder,
    model: &GmmModel,
    state: &AugmentState,
    config: &AugmentConfig,
) -> Result<AugmentOutcome, AugmentError> {
    let d = model.dim();
    if embedding.latent_dim() != d {
        return Err(AugmentError::DimensionMismatch {
            emb: embedding.latent_dim(),
            model: d,
        });
    }
    let k = model.n_components();
    let n = embedding.n_points();
    let m = config.m_new_nodes;
    let mut attempts = Vec::new();
    for attempt in 0..config.max_resample.max(1) {
        let sample_seed = derive_seed(config.seed, 1000 + attempt as u64);
        let new_points = gmm::sample_gaussian(&state.mu_new, &state.sigma_new, m, sample_seed)?;
        let mut combined = DMatrix::zeros(n + m, d);
        combined.view_mut((0, 0), (n, d)).copy_from(embedding.vectors());
        combined.view_mut((n, 0), (m, d)).copy_from(&new_points);
        let est = mdl::estimate_k(
            &combined,
            &config.k_candidates,
            derive_seed(config.seed, 2000 + attempt as u64),
            &config.em,
        )?;
        attempts.push(est.k_est);
        if est.k_est != k + 1 {
            log::info!(
                "resample {attempt}: K_est = {} != {} , redrawing",
                est.k_est,
                k + 1
            );
            continue;
        }
        let augmented = LatentEmbedding::new(combined, embedding.provenance())?;
        let mode = match config.decode_mode {
            DecodeModeKind::AllPairs => DecodeMode::AllPairs,
            DecodeModeKind::PreserveOriginal => DecodeMode::PreserveOriginal(graph),
        };
        let decoded = decode_graph(&augmented, decoder, mode)?;
        return Ok(AugmentOutcome {
            graph: decoded,
            k_est: est.k_est,
            new_points,
            attempts,
        });
    }
    Err(AugmentError::ResampleExhausted {
        expected: k + 1,
        attempts,
    })
}
