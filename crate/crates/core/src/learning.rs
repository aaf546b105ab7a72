//! M-step updates and the generalized-EM driver.
//!
//! The transition matrix `A` and the input levels `D` appear in each other's
//! closed-form updates. Both are the blocks of one least-squares problem:
//! regress `x_t` on the stacked regressor `z_t = [x_{t-1}; s_t]` (with
//! `x_{-1} = 0`), which we solve jointly. `Q` and `R` are then the expected
//! residual covariances at the new coefficients.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{self, symmetrize};
use crate::model::{ModelParams, SequenceData};
use crate::scalar::Scalar;
use crate::stats::SufficientStats;
use crate::variational::{self, EStepOptions, Init};

/// Eigenvalue floor applied to updated `Q` and `R`.
pub const DEFAULT_COVARIANCE_FLOOR: f64 = 1e-10;
/// Bound decreases larger than this are reported as diagnostics.
pub const MONOTONICITY_SLACK: f64 = 1e-6;

/// Which parameters the M-step may change.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UpdateMask {
    pub a: bool,
    pub c: bool,
    pub d: bool,
    pub q: bool,
    pub r: bool,
    pub pi: bool,
    pub pi0: bool,
}

impl Default for UpdateMask {
    fn default() -> Self {
        Self::all()
    }
}

impl UpdateMask {
    pub fn all() -> Self {
        Self {
            a: true,
            c: true,
            d: true,
            q: true,
            r: true,
            pi: true,
            pi0: true,
        }
    }

    /// Parses a comma-separated list of parameter names to freeze, e.g. `"A,C"`.
    pub fn freezing(list: &str) -> Result<Self> {
        let mut mask = Self::all();
        for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match name {
                "A" => mask.a = false,
                "C" => mask.c = false,
                "D" => mask.d = false,
                "Q" => mask.q = false,
                "R" => mask.r = false,
                "Pi" => mask.pi = false,
                "pi0" => mask.pi0 = false,
                other => return Err(Error::InvalidArgument(format!("unknown parameter `{other}`"))),
            }
        }
        Ok(mask)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig<T: Scalar = f64> {
    pub e_tol: T,
    pub e_max_iter: usize,
    /// Relative change of the total bound that ends training.
    pub em_tol: T,
    pub max_em_iter: usize,
    pub update_mask: UpdateMask,
    pub covariance_floor: T,
    /// Known input matrix `B` (`N x K`). When set, every input level is kept
    /// in its column span, `d_i = B e_i`, as when inputs act on only some
    /// state coordinates.
    pub input_matrix: Option<DMatrix<T>>,
}

impl<T: Scalar> Default for TrainConfig<T> {
    fn default() -> Self {
        Self {
            e_tol: T::lit(variational::DEFAULT_TOL),
            e_max_iter: variational::DEFAULT_MAX_ITER,
            em_tol: T::lit(1e-5),
            max_em_iter: 50,
            update_mask: UpdateMask::all(),
            covariance_floor: T::lit(DEFAULT_COVARIANCE_FLOOR),
            input_matrix: None,
        }
    }
}

impl<T: Scalar> TrainConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.e_tol > T::zero()) || !(self.em_tol > T::zero()) {
            return Err(Error::InvalidArgument("tolerances must be > 0".into()));
        }
        if self.max_em_iter == 0 || self.e_max_iter == 0 {
            return Err(Error::InvalidArgument("iteration caps must be >= 1".into()));
        }
        if !(self.covariance_floor > T::zero()) {
            return Err(Error::InvalidArgument("covariance floor must be > 0".into()));
        }
        Ok(())
    }

    pub fn e_step_options(&self) -> EStepOptions<T> {
        EStepOptions {
            tol: self.e_tol,
            max_iter: self.e_max_iter,
        }
    }
}

/// Non-fatal events raised while learning.
#[derive(Debug, Clone, PartialEq)]
pub enum Diagnostic<T: Scalar = f64> {
    /// A discrete state had no expected visits; its column of `Pi` (or its
    /// input level) was left unchanged.
    UnvisitedState { parameter: &'static str, state: usize },
    /// An updated covariance had eigenvalues below the floor.
    CovarianceClipped { parameter: &'static str },
    /// The total bound fell between consecutive EM iterations.
    BoundDecrease { iteration: usize, amount: T },
}

/// `A` maximizing the objective with the input levels held at `d`.
fn regress_a<T: Scalar>(stats: &SufficientStats<T>, d: &DMatrix<T>) -> Result<DMatrix<T>> {
    let rhs = &stats.cur_prev - d * stats.prev_s.transpose();
    let chol = symmetrize(&stats.prev_prev)
        .cholesky()
        .ok_or_else(|| Error::RankDeficient { parameter: "A".into() })?;
    Ok(chol.solve(&rhs.transpose()).transpose())
}

fn visited<T: Scalar>(mass: T, total_steps: usize) -> bool {
    mass > T::lit(1e-12) * T::from_usize(total_steps.max(1)).unwrap()
}

/// One M-step. Masked parameters are copied from `current`; every update
/// reads only `stats` and parameters fixed before the step began, apart from
/// `Q` and `R`, which are the residual covariances at the new coefficients.
///
/// With a known input matrix the input levels are a weighted least-squares
/// fit under the current `Q`, made after `A` is updated with the current
/// levels. Each of those conditional updates raises the objective.
pub fn m_step<T: Scalar>(
    stats: &SufficientStats<T>,
    current: &ModelParams<T>,
    cfg: &TrainConfig<T>,
) -> Result<(ModelParams<T>, Vec<Diagnostic<T>>)> {
    let mask = &cfg.update_mask;
    let covariance_floor = cfg.covariance_floor;
    let n = current.state_dim();
    let s = current.num_states();
    if stats.state_dim() != n || stats.num_states() != s || stats.obs_dim() != current.obs_dim() {
        return Err(Error::dims(
            "sufficient statistics",
            format!("N={n} M={} S={s}", current.obs_dim()),
            format!("N={} M={} S={}", stats.state_dim(), stats.obs_dim(), stats.num_states()),
        ));
    }
    if stats.num_sequences == 0 {
        return Err(Error::InvalidArgument("statistics from at least one sequence are required".into()));
    }
    let mut next = current.clone();
    let mut diags = Vec::new();
    let steps = T::from_usize(stats.num_steps).unwrap();

    let active: Vec<usize> = (0..s).filter(|&i| visited(stats.s[i], stats.num_steps)).collect();
    if mask.d {
        for i in (0..s).filter(|i| !active.contains(i)) {
            diags.push(Diagnostic::UnvisitedState { parameter: "D", state: i });
        }
    }

    match (mask.a, mask.d) {
        (a_free, true) if cfg.input_matrix.is_some() => {
            let b = cfg.input_matrix.as_ref().expect("guarded");
            if b.nrows() != n {
                return Err(Error::dims("input matrix rows", n, b.nrows()));
            }
            if a_free {
                next.a = regress_a(stats, &current.d)?;
            }
            let w = linalg::regularized_spd_inverse(&current.q, "Q^-1")?;
            let btw = b.transpose() * &w;
            let chol = symmetrize(&(&btw * b))
                .cholesky()
                .ok_or_else(|| Error::RankDeficient { parameter: "D".into() })?;
            let num = &stats.x_s - &next.a * &stats.prev_s;
            for &i in &active {
                let e = chol.solve(&(&btw * num.column(i))) / stats.s[i];
                next.d.set_column(i, &(b * e));
            }
        }
        (true, true) => {
            let k = active.len();
            // Normal equations of x_t ~ [A D_active] [x_{t-1}; s_t(active)].
            let mut szz = DMatrix::zeros(n + k, n + k);
            szz.view_mut((0, 0), (n, n)).copy_from(&stats.prev_prev);
            let mut sxz = DMatrix::zeros(n, n + k);
            sxz.view_mut((0, 0), (n, n)).copy_from(&stats.cur_prev);
            for (col, &i) in active.iter().enumerate() {
                for r in 0..n {
                    szz[(r, n + col)] = stats.prev_s[(r, i)];
                    szz[(n + col, r)] = stats.prev_s[(r, i)];
                    sxz[(r, n + col)] = stats.x_s[(r, i)];
                }
                szz[(n + col, n + col)] = stats.s[i];
            }
            let chol = symmetrize(&szz)
                .cholesky()
                .ok_or_else(|| Error::RankDeficient { parameter: "A, D".into() })?;
            let w = chol.solve(&sxz.transpose()).transpose();
            next.a = w.columns(0, n).into_owned();
            for (col, &i) in active.iter().enumerate() {
                next.d.set_column(i, &w.column(n + col));
            }
        }
        (true, false) => next.a = regress_a(stats, &current.d)?,
        (false, true) => {
            let num = &stats.x_s - &current.a * &stats.prev_s;
            for &i in &active {
                next.d.set_column(i, &(num.column(i) / stats.s[i]));
            }
        }
        (false, false) => {}
    }

    if mask.q {
        let resid = stats.dynamics_residual(&next.a, &next.d) / steps;
        let (q, clipped) = linalg::clip_eigenvalues(&resid, covariance_floor);
        if clipped {
            log::debug!("Q update clipped at eigenvalue floor {covariance_floor:e}");
            diags.push(Diagnostic::CovarianceClipped { parameter: "Q" });
        }
        next.q = q;
    }

    if mask.c {
        let chol = symmetrize(&stats.xx)
            .cholesky()
            .ok_or_else(|| Error::RankDeficient { parameter: "C".into() })?;
        next.c = chol.solve(&stats.yx.transpose()).transpose();
    }

    if mask.r {
        let resid = stats.observation_residual(&next.c) / steps;
        let (r, clipped) = linalg::clip_eigenvalues(&resid, covariance_floor);
        if clipped {
            log::debug!("R update clipped at eigenvalue floor {covariance_floor:e}");
            diags.push(Diagnostic::CovarianceClipped { parameter: "R" });
        }
        next.r = r;
    }

    if mask.pi {
        for j in 0..s {
            let col_mass = stats.transitions.column(j).sum();
            if visited(col_mass, stats.num_steps) {
                let col = stats.transitions.column(j) / col_mass;
                next.pi.set_column(j, &col);
            } else if stats.num_steps > stats.num_sequences {
                diags.push(Diagnostic::UnvisitedState { parameter: "Pi", state: j });
            }
        }
    }

    if mask.pi0 {
        let total = stats.s_initial.sum();
        next.pi0 = &stats.s_initial / total;
    }

    Ok((next, diags))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmResult<T: Scalar = f64> {
    pub params: ModelParams<T>,
    /// Total bound over all sequences after each E-step.
    pub bound_history: Vec<T>,
    /// E-step sweeps per sequence, for every EM iteration.
    pub e_step_iterations: Vec<Vec<usize>>,
    pub converged: bool,
    pub diagnostics: Vec<Diagnostic<T>>,
}

/// Runs the E-step on every sequence and sums the statistics.
pub fn accumulate_e_step<T: Scalar>(
    params: &ModelParams<T>,
    sequences: &[SequenceData<T>],
    inits: &[Init<T>],
    opts: EStepOptions<T>,
) -> Result<(SufficientStats<T>, T, Vec<variational::VariationalState<T>>)> {
    let results: Vec<_> = sequences
        .par_iter()
        .zip(inits.par_iter())
        .map(|(y, init)| -> Result<_> {
            let (state, post) = variational::e_step(params, y, init, opts)?;
            let stats = SufficientStats::from_posterior(&post, y)?;
            Ok((state, stats))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = SufficientStats::zeros(params.state_dim(), params.obs_dim(), params.num_states());
    let mut bound = T::zero();
    let mut states = Vec::with_capacity(results.len());
    for (state, stats) in results {
        total = total.merge(&stats);
        bound += state.bound();
        states.push(state);
    }
    Ok((total, bound, states))
}

/// Generalized EM: structured variational E-step, closed-form M-step.
///
/// Each E-step is warm-started from the previous one's state means, which
/// keeps the total bound non-decreasing across iterations.
pub fn em_train<T: Scalar>(
    sequences: &[SequenceData<T>],
    init: &ModelParams<T>,
    cfg: &TrainConfig<T>,
) -> Result<EmResult<T>> {
    if sequences.is_empty() {
        return Err(Error::InvalidArgument("training needs at least one sequence".into()));
    }
    init.validate()?;
    cfg.validate()?;
    for y in sequences {
        y.check_against(init)?;
    }

    let mut params = init.clone();
    let mut inits = vec![Init::PriorInput; sequences.len()];
    let mut out = EmResult {
        params: init.clone(),
        bound_history: Vec::new(),
        e_step_iterations: Vec::new(),
        converged: false,
        diagnostics: Vec::new(),
    };
    for iteration in 0..cfg.max_em_iter {
        let (stats, bound, states) = accumulate_e_step(&params, sequences, &inits, cfg.e_step_options())?;
        out.e_step_iterations.push(states.iter().map(|s| s.iterations).collect());
        if let Some(&prev) = out.bound_history.last() {
            if prev - bound > T::lit(MONOTONICITY_SLACK) {
                log::warn!("EM bound decreased by {} at iteration {iteration}", prev - bound);
                out.diagnostics.push(Diagnostic::BoundDecrease {
                    iteration,
                    amount: prev - bound,
                });
            }
        }
        log::info!("EM iteration {iteration}: bound {bound}");
        let prev = out.bound_history.last().copied();
        out.bound_history.push(bound);
        if let Some(p) = prev {
            if (bound - p).abs() / (T::one() + bound.abs()) < cfg.em_tol {
                out.converged = true;
                break;
            }
        }
        let (next, diags) = m_step(&stats, &params, cfg)?;
        out.diagnostics.extend(diags);
        params = next;
        inits = states.into_iter().map(|s| Init::StateMeans(s.x_mean)).collect();
    }
    out.params = params;
    Ok(out)
}

/// Column-normalized transition counts along hard state paths.
pub fn empirical_transitions<T: Scalar>(paths: &[Vec<usize>], num_states: usize) -> DMatrix<T> {
    let mut counts = DMatrix::<T>::zeros(num_states, num_states);
    for path in paths {
        for w in path.windows(2) {
            counts[(w[1], w[0])] += T::one();
        }
    }
    for j in 0..num_states {
        let sum = counts.column(j).sum();
        if sum > T::zero() {
            let col = counts.column(j) / sum;
            counts.set_column(j, &col);
        }
    }
    counts
}

/// Fraction of time steps spent in each state along hard paths.
pub fn occupancy<T: Scalar>(paths: &[Vec<usize>], num_states: usize) -> DVector<T> {
    let mut v = DVector::<T>::zeros(num_states);
    let mut total = 0usize;
    for path in paths {
        for &s in path {
            v[s] += T::one();
            total += 1;
        }
    }
    v / T::from_usize(total.max(1)).unwrap()
}
