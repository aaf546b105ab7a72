//! Structured variational E-step.
//!
//! The posterior over `(X, S)` is approximated by a product of an HMM over
//! `S` with per-step soft evidence `q_t` and a linear-Gaussian chain over
//! `X` with deterministic inputs `u_t`. The two sets of variational
//! parameters are coupled by the fixed-point equations
//!
//! ```text
//! u_t      = D <s_t>
//! ln q_t(i) = d_i' Q^-1 (<x_t> - A <x_{t-1}> - d_i / 2),   <x_{-1}> = 0
//! ```
//!
//! and each half-update is an exact coordinate ascent step on the
//! free-energy bound `E_Q[ln P] + H(Q)`, so the bound never decreases.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::hmm::{self, HmmPosterior};
use crate::lds::{self, SmootherResult};
use crate::linalg::{self, xlogy};
use crate::model::{ModelParams, SequenceData};
use crate::scalar::Scalar;
use crate::stats::{expected_log_joint, SufficientStats};

/// Relative bound change used as the default stopping threshold.
pub const DEFAULT_TOL: f64 = 1e-3;
pub const DEFAULT_MAX_ITER: usize = 100;

/// Variational parameters `{q_t, u_t}` and the iteration record.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalState<T: Scalar = f64> {
    /// `ln q_t`, unnormalized, as fed to the discrete chain in the last sweep.
    pub log_q: Vec<DVector<T>>,
    /// Inputs fed to the continuous chain in the last sweep.
    pub u: Vec<DVector<T>>,
    /// Smoothed `<x_t>` after the last sweep; warm-starts the next E-step.
    pub x_mean: Vec<DVector<T>>,
    pub iterations: usize,
    /// Free-energy bound after each sweep.
    pub bound_trace: Vec<T>,
    /// `(ln q, u)` used in each sweep, in order.
    pub history: Vec<(Vec<DVector<T>>, Vec<DVector<T>>)>,
    pub converged: bool,
}

impl<T: Scalar> VariationalState<T> {
    pub fn bound(&self) -> T {
        *self.bound_trace.last().expect("at least one sweep")
    }
}

/// Posterior moments under the factorized approximation.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorStats<T: Scalar = f64> {
    pub x_mean: Vec<DVector<T>>,
    /// `<x_t x_t'>`
    pub x_second_moment: Vec<DMatrix<T>>,
    /// `<x_t x_{t-1}'>` for `t = 1..T`.
    pub x_cross_moment: Vec<DMatrix<T>>,
    pub s_mean: Vec<DVector<T>>,
    /// `<s_t s_{t-1}'>` for `t = 1..T`.
    pub s_pair_mean: Vec<DMatrix<T>>,
    pub bound: T,
}

impl<T: Scalar> PosteriorStats<T> {
    pub fn from_posteriors(sm: &SmootherResult<T>, hmm: &HmmPosterior<T>, bound: T) -> Self {
        let len = sm.len();
        Self {
            x_mean: sm.means.clone(),
            x_second_moment: (0..len).map(|t| sm.second_moment(t)).collect(),
            x_cross_moment: (1..len).map(|t| sm.cross_moment(t)).collect(),
            s_mean: hmm.gammas.clone(),
            s_pair_mean: hmm.xis.clone(),
            bound,
        }
    }
}

/// Where the fixed-point iteration starts.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Init<T: Scalar = f64> {
    /// `<x>` from a smoothing pass with the prior-mean input `u_t = D pi0`.
    #[default]
    PriorInput,
    /// Start from given soft evidence; the first sweep skips the `q` update.
    LogQ(Vec<DVector<T>>),
    /// Start from given state means, e.g. the previous E-step's.
    StateMeans(Vec<DVector<T>>),
}

impl<T: Scalar> Init<T> {
    /// Flat soft evidence: the first sweep sees the discrete prior alone.
    pub fn flat(len: usize, num_states: usize) -> Self {
        Init::LogQ(vec![DVector::zeros(num_states); len])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EStepOptions<T: Scalar = f64> {
    /// Threshold on `|dB| / (1 + |B|)` between consecutive sweeps.
    pub tol: T,
    pub max_iter: usize,
}

impl<T: Scalar> Default for EStepOptions<T> {
    fn default() -> Self {
        Self {
            tol: T::lit(DEFAULT_TOL),
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

/// `u_t = D <s_t>`
pub fn compute_u<T: Scalar>(d: &DMatrix<T>, s_mean: &[DVector<T>]) -> Vec<DVector<T>> {
    s_mean.iter().map(|g| d * g).collect()
}

/// Precomputed `Q^-1 d_i` and `d_i' Q^-1 d_i / 2` for the soft-evidence update.
struct EvidenceMap<T: Scalar> {
    weights: DMatrix<T>,
    offsets: DVector<T>,
}

impl<T: Scalar> EvidenceMap<T> {
    fn new(params: &ModelParams<T>) -> Result<Self> {
        let q_inv = linalg::regularized_spd_inverse(&params.q, "Q^-1 in soft-evidence update")?;
        let weights = &q_inv * &params.d;
        let offsets = DVector::from_fn(params.num_states(), |i, _| {
            params.d.column(i).dot(&weights.column(i)) * T::lit(0.5)
        });
        Ok(Self { weights, offsets })
    }

    fn log_q(&self, a: &DMatrix<T>, x_mean: &[DVector<T>]) -> Vec<DVector<T>> {
        (0..x_mean.len())
            .map(|t| {
                let delta = if t == 0 {
                    x_mean[0].clone()
                } else {
                    &x_mean[t] - a * &x_mean[t - 1]
                };
                self.weights.tr_mul(&delta) - &self.offsets
            })
            .collect()
    }
}

/// `ln q_t(i) = d_i' Q^-1 (<x_t> - A <x_{t-1}> - d_i / 2)` with `<x_{-1}> = 0`.
pub fn compute_log_q<T: Scalar>(params: &ModelParams<T>, x_mean: &[DVector<T>]) -> Result<Vec<DVector<T>>> {
    let n = params.state_dim();
    if let Some(t) = x_mean.iter().position(|x| x.len() != n) {
        return Err(Error::dims(format!("x_mean[{t}]"), n, x_mean[t].len()));
    }
    Ok(EvidenceMap::new(params)?.log_q(&params.a, x_mean))
}

/// Entropy of the discrete chain by the chain rule,
/// `H(s_0) + sum_t H(s_t | s_{t-1})`.
pub fn hmm_entropy<T: Scalar>(post: &HmmPosterior<T>) -> T {
    let mut h = -post.gammas[0].iter().fold(T::zero(), |acc, &g| acc + xlogy(g, g));
    for (t, xi) in post.xis.iter().enumerate() {
        let prev = &post.gammas[t];
        for j in 0..xi.ncols() {
            if prev[j] <= T::zero() {
                continue;
            }
            for i in 0..xi.nrows() {
                h -= xlogy(xi[(i, j)], xi[(i, j)] / prev[j]);
            }
        }
    }
    h
}

/// Free-energy lower bound `E_Q[-H(X,S,Y)] + H(Q_x) + H(Q_s)` on `ln p(Y)`
/// for the factorized posterior given by the two sub-chain posteriors.
pub fn free_energy_bound<T: Scalar>(
    params: &ModelParams<T>,
    y: &SequenceData<T>,
    smoother: &SmootherResult<T>,
    hmm: &HmmPosterior<T>,
) -> Result<T> {
    if smoother.len() != y.len() || hmm.gammas.len() != y.len() {
        return Err(Error::dims("sub-chain posteriors", y.len(), smoother.len()));
    }
    let post = PosteriorStats::from_posteriors(smoother, hmm, T::zero());
    let stats = SufficientStats::from_posterior(&post, y)?;
    let energy = expected_log_joint(params, &stats)?;
    Ok(energy + lds::posterior_entropy(smoother)? + hmm_entropy(hmm))
}

/// Runs the fixed-point iteration
/// `q <- <x>`, `<s> <- q`, `u <- <s>`, `<x> <- (y, u)` until the relative
/// bound change drops below `opts.tol` or `opts.max_iter` sweeps have run.
///
/// With a single discrete state the soft evidence cannot change anything, so
/// the first sweep is already the fixed point.
pub fn e_step<T: Scalar>(
    params: &ModelParams<T>,
    y: &SequenceData<T>,
    init: &Init<T>,
    opts: EStepOptions<T>,
) -> Result<(VariationalState<T>, PosteriorStats<T>)> {
    params.validate()?;
    y.check_against(params)?;
    if !(opts.tol > T::zero()) {
        return Err(Error::InvalidArgument("tolerance must be > 0".into()));
    }
    if opts.max_iter == 0 {
        return Err(Error::InvalidArgument("max_iter must be >= 1".into()));
    }
    let len = y.len();
    let n = params.state_dim();
    let s = params.num_states();
    let evidence = EvidenceMap::new(params)?;

    let mut x_mean;
    let mut pending_log_q = None;
    match init {
        Init::PriorInput => {
            let u0 = &params.d * &params.pi0;
            x_mean = lds::rts_smooth(params, y, &vec![u0; len])?.means;
        }
        Init::StateMeans(m) => {
            if m.len() != len {
                return Err(Error::dims("initial state means", len, m.len()));
            }
            if let Some(t) = m.iter().position(|x| x.len() != n) {
                return Err(Error::dims(format!("initial state means[{t}]"), n, m[t].len()));
            }
            x_mean = m.clone();
        }
        Init::LogQ(lq) => {
            if lq.len() != len {
                return Err(Error::dims("initial log q", len, lq.len()));
            }
            if let Some(t) = lq.iter().position(|v| v.len() != s) {
                return Err(Error::dims(format!("initial log q[{t}]"), s, lq[t].len()));
            }
            x_mean = Vec::new();
            pending_log_q = Some(lq.clone());
        }
    }

    let mut state = VariationalState {
        log_q: Vec::new(),
        u: Vec::new(),
        x_mean: Vec::new(),
        iterations: 0,
        bound_trace: Vec::new(),
        history: Vec::new(),
        converged: false,
    };
    let mut last = None;
    for iter in 1..=opts.max_iter {
        let log_q = match pending_log_q.take() {
            Some(lq) => lq,
            None => evidence.log_q(&params.a, &x_mean),
        };
        let hmm_post = hmm::forward_backward(&params.pi, &params.pi0, &log_q)?;
        let u = compute_u(&params.d, &hmm_post.gammas);
        let smoother = lds::rts_smooth(params, y, &u)?;
        let bound = free_energy_bound(params, y, &smoother, &hmm_post)?;
        x_mean = smoother.means.clone();

        let prev = state.bound_trace.last().copied();
        state.bound_trace.push(bound);
        state.history.push((log_q.clone(), u.clone()));
        state.iterations = iter;
        state.log_q = log_q;
        state.u = u;
        if let Some(p) = prev {
            if p > bound + T::lit(1e-9) * (T::one() + bound.abs()) {
                log::debug!("bound decreased from {p} to {bound} at sweep {iter}");
            }
        }
        last = Some((smoother, hmm_post));

        let settled = match prev {
            _ if s == 1 => true,
            Some(p) => (bound - p).abs() / (T::one() + bound.abs()) < opts.tol,
            None => false,
        };
        if settled {
            state.converged = true;
            break;
        }
    }
    let (smoother, hmm_post) = last.expect("at least one sweep ran");
    state.x_mean = x_mean;
    let stats = PosteriorStats::from_posteriors(&smoother, &hmm_post, state.bound());
    Ok((state, stats))
}
