//! Greedy truncated Viterbi: a single forward pass that keeps one discrete
//! path, extending it at each step with the state of least partial cost.
//!
//! The arc cost of choosing state `i` after state `j` is the squared
//! innovation of the Kalman filter under input `d_i`, normalized by its
//! variance, plus a transition cost. Path-independent log-determinant
//! constants are left out.

use nalgebra::{DMatrix, DVector};

use crate::baselines::exact::enumerate_paths;
use crate::error::{Error, Result};
use crate::lds::{self, FilterStep};
use crate::model::{ModelParams, SequenceData};
use crate::scalar::Scalar;

/// Transition part of the arc cost.
#[derive(Debug, Clone, PartialEq)]
pub struct ArcCosts<T: Scalar = f64> {
    /// Cost of starting in each state.
    pub initial: DVector<T>,
    /// Entry `(i, j)` is the cost of moving from `j` to `i`.
    pub transition: DMatrix<T>,
}

impl<T: Scalar> ArcCosts<T> {
    /// `-ln pi0` and `-ln Pi`; forbidden moves cost `+inf`.
    pub fn neg_log(params: &ModelParams<T>) -> Self {
        let nl = |p: T| if p > T::zero() { -p.ln() } else { T::INFINITY };
        Self {
            initial: params.pi0.map(nl),
            transition: params.pi.map(nl),
        }
    }

    /// Small-`eps` costs for `Pi = 1/2 + eps` on the diagonal and `1/2 - eps`
    /// off it, measured relative to the uniform chain: staying costs `-eps`,
    /// switching `+eps`, and every start is free.
    pub fn linearized(num_states: usize, eps: T) -> Self {
        Self {
            initial: DVector::zeros(num_states),
            transition: DMatrix::from_fn(num_states, num_states, |i, j| if i == j { -eps } else { eps }),
        }
    }

    fn check(&self, s: usize) -> Result<()> {
        if self.initial.len() != s {
            return Err(Error::dims("initial arc costs", s, self.initial.len()));
        }
        if self.transition.nrows() != s || self.transition.ncols() != s {
            return Err(Error::dims(
                "transition arc costs",
                format!("{s}x{s}"),
                format!("{}x{}", self.transition.nrows(), self.transition.ncols()),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreedyResult<T: Scalar = f64> {
    pub path: Vec<usize>,
    pub total_cost: T,
    /// Cost of each arc along the path.
    pub step_costs: Vec<T>,
    /// `u_t = d_{s_t}` along the path.
    pub inputs: Vec<DVector<T>>,
}

/// `e' S^-1 e` for an innovation and its covariance.
fn innovation_cost<T: Scalar>(step: &FilterStep<T>) -> Result<T> {
    let chol = step
        .innovation_var
        .clone()
        .cholesky()
        .ok_or_else(|| Error::singular("innovation covariance"))?;
    Ok(step.innovation.dot(&chol.solve(&step.innovation)))
}

fn check_model<T: Scalar>(params: &ModelParams<T>, y: &SequenceData<T>, costs: &ArcCosts<T>) -> Result<()> {
    params.validate_for_filtering()?;
    y.check_against(params)?;
    costs.check(params.num_states())
}

/// Greedy pass with `-ln` probabilities as transition costs.
pub fn greedy_truncated_viterbi<T: Scalar>(params: &ModelParams<T>, y: &SequenceData<T>) -> Result<GreedyResult<T>> {
    greedy_with_costs(params, y, &ArcCosts::neg_log(params))
}

/// Greedy pass with explicit transition costs. Ties go to the lower state
/// index.
pub fn greedy_with_costs<T: Scalar>(
    params: &ModelParams<T>,
    y: &SequenceData<T>,
    costs: &ArcCosts<T>,
) -> Result<GreedyResult<T>> {
    check_model(params, y, costs)?;
    let mut out = GreedyResult {
        path: Vec::with_capacity(y.len()),
        total_cost: T::zero(),
        step_costs: Vec::with_capacity(y.len()),
        inputs: Vec::with_capacity(y.len()),
    };
    let mut current: Option<FilterStep<T>> = None;
    for t in 0..y.len() {
        let mut best: Option<(T, usize, FilterStep<T>)> = None;
        for i in 0..params.num_states() {
            let arc = match out.path.last() {
                None => costs.initial[i],
                Some(&j) => costs.transition[(i, j)],
            };
            let prev = current.as_ref().map(|s| (&s.filtered_mean, &s.filtered_cov));
            let step = lds::filter_step(params, prev, &params.input(i), &y.observations[t], t)?;
            let cost = innovation_cost(&step)? + arc;
            if best.as_ref().is_none_or(|(c, _, _)| cost < *c) {
                best = Some((cost, i, step));
            }
        }
        let (cost, i, step) = best.expect("at least one discrete state");
        out.path.push(i);
        out.step_costs.push(cost);
        out.total_cost += cost;
        out.inputs.push(params.input(i));
        current = Some(step);
    }
    Ok(out)
}

/// Total arc cost of a fixed discrete path.
pub fn path_cost<T: Scalar>(
    params: &ModelParams<T>,
    y: &SequenceData<T>,
    path: &[usize],
    costs: &ArcCosts<T>,
) -> Result<T> {
    check_model(params, y, costs)?;
    if path.len() != y.len() {
        return Err(Error::dims("path", y.len(), path.len()));
    }
    if let Some(&bad) = path.iter().find(|&&i| i >= params.num_states()) {
        return Err(Error::InvalidArgument(format!("state {bad} out of range")));
    }
    let mut total = T::zero();
    let mut current: Option<FilterStep<T>> = None;
    for (t, &i) in path.iter().enumerate() {
        let prev = current.as_ref().map(|s| (&s.filtered_mean, &s.filtered_cov));
        let step = lds::filter_step(params, prev, &params.input(i), &y.observations[t], t)?;
        total += innovation_cost(&step)?;
        total += if t == 0 { costs.initial[i] } else { costs.transition[(i, path[t - 1])] };
        current = Some(step);
    }
    Ok(total)
}

/// Cost of every discrete path, in lexicographic path order.
pub fn trellis_table<T: Scalar>(
    params: &ModelParams<T>,
    y: &SequenceData<T>,
    costs: &ArcCosts<T>,
    cap: usize,
) -> Result<Vec<(Vec<usize>, T)>> {
    enumerate_paths(params.num_states(), y.len(), cap)?
        .into_iter()
        .map(|p| path_cost(params, y, &p, costs).map(|c| (p, c)))
        .collect()
}
