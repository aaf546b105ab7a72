//! Exact inference in the linear-Gaussian chain with known inputs.
//!
//! The inputs `u_t` enter additively: `x_0 ~ N(u_0, Q)` and
//! `x_t = A x_{t-1} + u_t + N(0, Q)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, symmetrize};
use crate::model::{ModelParams, SequenceData};
use crate::scalar::Scalar;

/// Forward pass output.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterResult<T: Scalar = f64> {
    /// `x_{t|t}`
    pub filtered_means: Vec<DVector<T>>,
    pub filtered_covs: Vec<DMatrix<T>>,
    /// `x_{t|t-1}`; at `t = 0` this is the prior `(u_0, Q)`.
    pub predicted_means: Vec<DVector<T>>,
    pub predicted_covs: Vec<DMatrix<T>>,
    pub innovations: Vec<DVector<T>>,
    pub innovation_vars: Vec<DMatrix<T>>,
    /// `ln p(Y | U)`.
    pub log_likelihood: T,
}

/// Forward-backward output: smoothed marginals plus everything the filter
/// produced.
#[derive(Debug, Clone, PartialEq)]
pub struct SmootherResult<T: Scalar = f64> {
    /// `<x_t>`
    pub means: Vec<DVector<T>>,
    /// `Cov(x_t | Y)`
    pub covs: Vec<DMatrix<T>>,
    /// `Cov(x_t, x_{t-1} | Y)` for `t = 1..T`.
    pub cross_covs: Vec<DMatrix<T>>,
    /// Smoother gains `J_t` for `t = 0..T-1`.
    pub gains: Vec<DMatrix<T>>,
    pub filter: FilterResult<T>,
}

impl<T: Scalar> SmootherResult<T> {
    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    pub fn log_likelihood(&self) -> T {
        self.filter.log_likelihood
    }

    /// `<x_t x_t'>`
    pub fn second_moment(&self, t: usize) -> DMatrix<T> {
        &self.covs[t] + &self.means[t] * self.means[t].transpose()
    }

    /// `<x_t x_{t-1}'>` for `t >= 1`.
    pub fn cross_moment(&self, t: usize) -> DMatrix<T> {
        &self.cross_covs[t - 1] + &self.means[t] * self.means[t - 1].transpose()
    }
}

fn check_inputs<T: Scalar>(params: &ModelParams<T>, y: &SequenceData<T>, u: &[DVector<T>]) -> Result<()> {
    y.check_against(params)?;
    if u.len() != y.len() {
        return Err(Error::dims("u", y.len(), u.len()));
    }
    let n = params.state_dim();
    if let Some(t) = u.iter().position(|v| v.len() != n) {
        return Err(Error::dims(format!("u[{t}]"), n, u[t].len()));
    }
    Ok(())
}

/// One predict/update cycle of the filter.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterStep<T: Scalar = f64> {
    pub predicted_mean: DVector<T>,
    pub predicted_cov: DMatrix<T>,
    pub filtered_mean: DVector<T>,
    pub filtered_cov: DMatrix<T>,
    pub innovation: DVector<T>,
    pub innovation_var: DMatrix<T>,
    /// `ln N(innovation; 0, innovation_var)`
    pub log_density: T,
}

/// Advances the filter by one step. `prev` is the previous filtered
/// `(mean, cov)`, or `None` at `t = 0` where the prior is `(u, Q)`.
pub fn filter_step<T: Scalar>(
    params: &ModelParams<T>,
    prev: Option<(&DVector<T>, &DMatrix<T>)>,
    u: &DVector<T>,
    y: &DVector<T>,
    t: usize,
) -> Result<FilterStep<T>> {
    let n = params.state_dim();
    let c = &params.c;
    let (m_pred, p_pred) = match prev {
        None => (u.clone(), symmetrize(&params.q)),
        Some((m, p)) => (
            &params.a * m + u,
            symmetrize(&(&params.a * p * params.a.transpose() + &params.q)),
        ),
    };
    let innovation = y - c * &m_pred;
    let s = symmetrize(&(c * &p_pred * c.transpose() + &params.r));
    let chol = s
        .clone()
        .cholesky()
        .ok_or_else(|| Error::singular(format!("innovation covariance at step {t}")))?;
    // K = P C' S^-1
    let gain = chol.solve(&(c * &p_pred)).transpose();
    let m_filt = &m_pred + &gain * &innovation;
    let i_kc = DMatrix::<T>::identity(n, n) - &gain * c;
    let p_filt = symmetrize(&(&i_kc * &p_pred * i_kc.transpose() + &gain * &params.r * gain.transpose()));
    let log_density = linalg::gaussian_log_density(&innovation, &s, "innovation density")?;
    Ok(FilterStep {
        predicted_mean: m_pred,
        predicted_cov: p_pred,
        filtered_mean: m_filt,
        filtered_cov: p_filt,
        innovation,
        innovation_var: s,
        log_density,
    })
}

/// Kalman filter with additive inputs. Covariance updates use the Joseph
/// form and are re-symmetrized every step.
pub fn kalman_filter<T: Scalar>(
    params: &ModelParams<T>,
    y: &SequenceData<T>,
    u: &[DVector<T>],
) -> Result<FilterResult<T>> {
    check_inputs(params, y, u)?;
    let len = y.len();
    let mut out = FilterResult {
        filtered_means: Vec::with_capacity(len),
        filtered_covs: Vec::with_capacity(len),
        predicted_means: Vec::with_capacity(len),
        predicted_covs: Vec::with_capacity(len),
        innovations: Vec::with_capacity(len),
        innovation_vars: Vec::with_capacity(len),
        log_likelihood: T::zero(),
    };

    for (t, (ut, yt)) in u.iter().zip(&y.observations).enumerate() {
        let prev = (t > 0).then(|| (&out.filtered_means[t - 1], &out.filtered_covs[t - 1]));
        let step = filter_step(params, prev, ut, yt, t)?;
        out.log_likelihood += step.log_density;
        out.filtered_means.push(step.filtered_mean);
        out.filtered_covs.push(step.filtered_cov);
        out.predicted_means.push(step.predicted_mean);
        out.predicted_covs.push(step.predicted_cov);
        out.innovations.push(step.innovation);
        out.innovation_vars.push(step.innovation_var);
    }
    Ok(out)
}

/// Rauch-Tung-Striebel smoother on top of [`kalman_filter`].
///
/// Lag-one cross-covariances come from the gain recursion
/// `Cov(x_t, x_{t-1} | Y) = P_{t|T} J_{t-1}'`.
pub fn rts_smooth<T: Scalar>(
    params: &ModelParams<T>,
    y: &SequenceData<T>,
    u: &[DVector<T>],
) -> Result<SmootherResult<T>> {
    let filter = kalman_filter(params, y, u)?;
    Ok(smooth_filtered(params, filter))
}

/// Backward pass over an existing forward pass.
pub fn smooth_filtered<T: Scalar>(params: &ModelParams<T>, filter: FilterResult<T>) -> SmootherResult<T> {
    let len = filter.filtered_means.len();
    let mut means = filter.filtered_means.clone();
    let mut covs = filter.filtered_covs.clone();
    let mut gains = Vec::with_capacity(len.saturating_sub(1));
    for t in (0..len.saturating_sub(1)).rev() {
        // J_t = P_{t|t} A' P_{t+1|t}^-1, solved as P_{t+1|t} J_t' = A P_{t|t}
        let rhs = &params.a * &filter.filtered_covs[t];
        let gain = linalg::psd_solve(&filter.predicted_covs[t + 1], &rhs).transpose();
        means[t] = &filter.filtered_means[t] + &gain * (&means[t + 1] - &filter.predicted_means[t + 1]);
        covs[t] = symmetrize(
            &(&filter.filtered_covs[t] + &gain * (&covs[t + 1] - &filter.predicted_covs[t + 1]) * gain.transpose()),
        );
        gains.push(gain);
    }
    gains.reverse();
    let cross_covs = (1..len).map(|t| &covs[t] * gains[t - 1].transpose()).collect();
    SmootherResult {
        means,
        covs,
        cross_covs,
        gains,
        filter,
    }
}

/// Entropy of the smoothed Gaussian chain, by the chain rule
/// `H = H(x_{T-1}) + sum_t H(x_t | x_{t+1})` with conditional covariances
/// `P_{t|t} - J_t P_{t+1|t} J_t'`.
pub fn posterior_entropy<T: Scalar>(sm: &SmootherResult<T>) -> Result<T> {
    let len = sm.len();
    let n = sm.means[0].len();
    let const_term = T::from_usize(n).unwrap() * (T::two_pi().ln() + T::one());
    let half = T::lit(0.5);
    let mut h = half * (const_term + linalg::log_det_spd(&sm.covs[len - 1], "final smoothed covariance")?);
    for t in 0..len - 1 {
        let j = &sm.gains[t];
        let cond = &sm.filter.filtered_covs[t] - j * &sm.filter.predicted_covs[t + 1] * j.transpose();
        h += half * (const_term + linalg::log_det_spd(&cond, "backward conditional covariance")?);
    }
    Ok(h)
}
