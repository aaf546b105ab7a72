//! Expected sufficient statistics under the factorized posterior, summed over
//! time steps and sequences, and the expected complete-data log-likelihood
//! they determine.
//!
//! Under the factorized posterior every cross term between the continuous
//! and discrete chains factors, e.g. `<x_t s_t'> = <x_t><s_t>'`, and
//! `<s_t s_t'> = diag(<s_t>)` because `s_t` is one-hot.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, xlogy};
use crate::model::{ModelParams, SequenceData};
use crate::scalar::Scalar;
use crate::variational::PosteriorStats;

#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStats<T: Scalar = f64> {
    pub num_sequences: usize,
    pub num_steps: usize,
    /// `sum_t <x_t x_t'>`, t = 0..T
    pub xx: DMatrix<T>,
    /// `sum_t <x_{t-1} x_{t-1}'>`, t = 1..T
    pub prev_prev: DMatrix<T>,
    /// `sum_t <x_t x_{t-1}'>`, t = 1..T
    pub cur_prev: DMatrix<T>,
    /// `sum_t <x_t><s_t>'`, t = 0..T
    pub x_s: DMatrix<T>,
    /// `sum_t <x_{t-1}><s_t>'`, t = 1..T
    pub prev_s: DMatrix<T>,
    /// `sum_t <s_t>`, t = 0..T (the diagonal of `sum_t <s_t s_t'>`)
    pub s: DVector<T>,
    /// `sum_t <s_{t-1}>`, t = 1..T
    pub s_prev: DVector<T>,
    /// `sum_t <s_t s_{t-1}'>`, t = 1..T
    pub transitions: DMatrix<T>,
    /// `sum over sequences of <s_0>`
    pub s_initial: DVector<T>,
    /// `sum_t y_t y_t'`
    pub yy: DMatrix<T>,
    /// `sum_t y_t <x_t>'`
    pub yx: DMatrix<T>,
}

impl<T: Scalar> SufficientStats<T> {
    pub fn zeros(state_dim: usize, obs_dim: usize, num_states: usize) -> Self {
        let (n, m, s) = (state_dim, obs_dim, num_states);
        Self {
            num_sequences: 0,
            num_steps: 0,
            xx: DMatrix::zeros(n, n),
            prev_prev: DMatrix::zeros(n, n),
            cur_prev: DMatrix::zeros(n, n),
            x_s: DMatrix::zeros(n, s),
            prev_s: DMatrix::zeros(n, s),
            s: DVector::zeros(s),
            s_prev: DVector::zeros(s),
            transitions: DMatrix::zeros(s, s),
            s_initial: DVector::zeros(s),
            yy: DMatrix::zeros(m, m),
            yx: DMatrix::zeros(m, n),
        }
    }

    pub fn state_dim(&self) -> usize {
        self.xx.nrows()
    }

    pub fn obs_dim(&self) -> usize {
        self.yy.nrows()
    }

    pub fn num_states(&self) -> usize {
        self.s.len()
    }

    pub fn from_posterior(post: &PosteriorStats<T>, y: &SequenceData<T>) -> Result<Self> {
        let n = post.x_mean.first().map_or(0, |v| v.len());
        let s = post.s_mean.first().map_or(0, |v| v.len());
        let mut out = Self::zeros(n, y.obs_dim(), s);
        out.add_sequence(post, y)?;
        Ok(out)
    }

    pub fn add_sequence(&mut self, post: &PosteriorStats<T>, y: &SequenceData<T>) -> Result<()> {
        let len = y.len();
        if post.x_mean.len() != len || post.s_mean.len() != len {
            return Err(Error::dims("posterior statistics", len, post.x_mean.len()));
        }
        if post.x_cross_moment.len() + 1 != len || post.s_pair_mean.len() + 1 != len {
            return Err(Error::dims("pairwise statistics", len - 1, post.x_cross_moment.len()));
        }
        self.num_sequences += 1;
        self.num_steps += len;
        for t in 0..len {
            let x = &post.x_mean[t];
            let g = &post.s_mean[t];
            let yt = &y.observations[t];
            self.xx += &post.x_second_moment[t];
            self.x_s += x * g.transpose();
            self.s += g;
            self.yy += yt * yt.transpose();
            self.yx += yt * x.transpose();
            if t > 0 {
                self.prev_prev += &post.x_second_moment[t - 1];
                self.cur_prev += &post.x_cross_moment[t - 1];
                self.prev_s += &post.x_mean[t - 1] * g.transpose();
                self.s_prev += &post.s_mean[t - 1];
                self.transitions += &post.s_pair_mean[t - 1];
            }
        }
        self.s_initial += &post.s_mean[0];
        Ok(())
    }

    /// Associative merge, used to reduce per-sequence statistics.
    pub fn merge(mut self, other: &Self) -> Self {
        self.num_sequences += other.num_sequences;
        self.num_steps += other.num_steps;
        self.xx += &other.xx;
        self.prev_prev += &other.prev_prev;
        self.cur_prev += &other.cur_prev;
        self.x_s += &other.x_s;
        self.prev_s += &other.prev_s;
        self.s += &other.s;
        self.s_prev += &other.s_prev;
        self.transitions += &other.transitions;
        self.s_initial += &other.s_initial;
        self.yy += &other.yy;
        self.yx += &other.yx;
        self
    }

    /// `sum_t E[(x_t - A x_{t-1} - D s_t)(x_t - A x_{t-1} - D s_t)']`, with
    /// `x_{-1} = 0`.
    pub fn dynamics_residual(&self, a: &DMatrix<T>, d: &DMatrix<T>) -> DMatrix<T> {
        let at = a.transpose();
        let dt = d.transpose();
        let a_cp = a * self.cur_prev.transpose();
        let d_xs = d * self.x_s.transpose();
        let a_ps_d = a * &self.prev_s * &dt;
        &self.xx - &a_cp - a_cp.transpose() + a * &self.prev_prev * &at - &d_xs - d_xs.transpose()
            + &a_ps_d
            + a_ps_d.transpose()
            + d * DMatrix::from_diagonal(&self.s) * &dt
    }

    /// `sum_t E[(y_t - C x_t)(y_t - C x_t)']`.
    pub fn observation_residual(&self, c: &DMatrix<T>) -> DMatrix<T> {
        let cxy = c * self.yx.transpose();
        &self.yy - &cxy - cxy.transpose() + c * &self.xx * c.transpose()
    }
}

/// `E_Q[ln P(X, S, Y | params)]` for the posterior summarized by `stats`.
/// This is the objective the M-step maximizes.
pub fn expected_log_joint<T: Scalar>(params: &ModelParams<T>, stats: &SufficientStats<T>) -> Result<T> {
    let n = params.state_dim();
    let m = params.obs_dim();
    if stats.state_dim() != n || stats.obs_dim() != m || stats.num_states() != params.num_states() {
        return Err(Error::dims(
            "sufficient statistics",
            format!("N={n} M={m} S={}", params.num_states()),
            format!("N={} M={} S={}", stats.state_dim(), stats.obs_dim(), stats.num_states()),
        ));
    }
    let q_inv = linalg::regularized_spd_inverse(&params.q, "Q^-1")?;
    let r_inv = linalg::spd_inverse(&params.r, "R^-1")?;
    let log_det_q = linalg::log_det_spd(&params.q, "log|Q|")?;
    let log_det_r = linalg::log_det_spd(&params.r, "log|R|")?;
    let half = T::lit(0.5);
    let steps = T::from_usize(stats.num_steps).unwrap();

    let dyn_term = (&q_inv * stats.dynamics_residual(&params.a, &params.d)).trace();
    let obs_term = (&r_inv * stats.observation_residual(&params.c)).trace();
    let mut ll = -half * (dyn_term + obs_term)
        - half * steps * (log_det_q + log_det_r + T::from_usize(n + m).unwrap() * T::two_pi().ln());

    let s = params.num_states();
    for i in 0..s {
        ll += xlogy(stats.s_initial[i], params.pi0[i]);
        for j in 0..s {
            ll += xlogy(stats.transitions[(i, j)], params.pi[(i, j)]);
        }
    }
    Ok(ll)
}
