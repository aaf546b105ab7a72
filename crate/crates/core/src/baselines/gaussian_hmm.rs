//! HMM with Gaussian emissions whose mean depends on the state and whose
//! covariance is shared by all states. The decoupled baseline fits one to
//! input sequences estimated by differentiation.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::hmm::{self, HmmPosterior};
use crate::linalg::{self, symmetrize};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianHmm<T: Scalar = f64> {
    /// Column-stochastic, `(i, j) = Pr(next = i | current = j)`.
    pub pi: DMatrix<T>,
    pub pi0: DVector<T>,
    /// Column `i` is the emission mean of state `i`.
    pub means: DMatrix<T>,
    pub cov: DMatrix<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult<T: Scalar = f64> {
    pub model: GaussianHmm<T>,
    /// Total log-likelihood before each re-estimation.
    pub log_likelihood_history: Vec<T>,
}

impl<T: Scalar> GaussianHmm<T> {
    pub fn num_states(&self) -> usize {
        self.pi0.len()
    }

    pub fn obs_dim(&self) -> usize {
        self.means.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.num_states();
        if self.pi.shape() != (s, s) {
            return Err(Error::dims("Pi", format!("{s}x{s}"), format!("{:?}", self.pi.shape())));
        }
        if self.means.ncols() != s {
            return Err(Error::dims("means", s, self.means.ncols()));
        }
        let m = self.obs_dim();
        if self.cov.shape() != (m, m) {
            return Err(Error::dims("cov", format!("{m}x{m}"), format!("{:?}", self.cov.shape())));
        }
        linalg::check_spd(&self.cov, "cov")
    }

    /// `ln N(o_t; mean_i, cov)` for every step and state.
    pub fn log_evidence(&self, obs: &[DVector<T>]) -> Result<Vec<DVector<T>>> {
        let chol = symmetrize(&self.cov)
            .cholesky()
            .ok_or_else(|| Error::NonPositiveDefinite {
                field: "cov".into(),
                detail: "Cholesky factorization failed".into(),
            })?;
        let m = T::from_usize(self.obs_dim()).unwrap();
        let log_det = linalg::log_det_spd(&self.cov, "cov")?;
        let half = T::lit(0.5);
        let constant = -half * (m * T::two_pi().ln() + log_det);
        obs.iter()
            .enumerate()
            .map(|(t, o)| {
                if o.len() != self.obs_dim() {
                    return Err(Error::dims(format!("observation[{t}]"), self.obs_dim(), o.len()));
                }
                Ok(DVector::from_fn(self.num_states(), |i, _| {
                    let r = o - self.means.column(i);
                    constant - half * r.dot(&chol.solve(&r))
                }))
            })
            .collect()
    }

    pub fn posterior(&self, obs: &[DVector<T>]) -> Result<HmmPosterior<T>> {
        hmm::forward_backward(&self.pi, &self.pi0, &self.log_evidence(obs)?)
    }

    pub fn log_likelihood(&self, obs: &[DVector<T>]) -> Result<T> {
        Ok(self.posterior(obs)?.log_evidence)
    }

    /// Baum-Welch from `init`. Zero entries of `Pi` stay zero, so a
    /// left-to-right structure is preserved. States without expected
    /// visits keep their previous mean and transition column.
    pub fn fit(
        sequences: &[Vec<DVector<T>>],
        init: &Self,
        max_iter: usize,
        tol: T,
        cov_floor: T,
    ) -> Result<FitResult<T>> {
        init.validate()?;
        if sequences.is_empty() {
            return Err(Error::InvalidArgument("fitting needs at least one sequence".into()));
        }
        let s = init.num_states();
        let m = init.obs_dim();
        let mut model = init.clone();
        let mut history = Vec::new();
        for _ in 0..max_iter {
            let mut total = T::zero();
            let mut occupancy = DVector::<T>::zeros(s);
            let mut weighted = DMatrix::<T>::zeros(m, s);
            let mut scatter = DMatrix::<T>::zeros(m, m);
            let mut transitions = DMatrix::<T>::zeros(s, s);
            let mut initial = DVector::<T>::zeros(s);
            let mut steps = 0usize;
            let posts: Vec<_> = sequences.iter().map(|obs| model.posterior(obs)).collect::<Result<_>>()?;
            for (obs, post) in sequences.iter().zip(&posts) {
                total += post.log_evidence;
                initial += &post.gammas[0];
                for (o, g) in obs.iter().zip(&post.gammas) {
                    occupancy += g;
                    weighted += o * g.transpose();
                    scatter += o * o.transpose();
                    steps += 1;
                }
                for xi in &post.xis {
                    transitions += xi;
                }
            }
            let prev = history.last().copied();
            history.push(total);
            if let Some(p) = prev {
                if (total - p).abs() / (T::one() + total.abs()) < tol {
                    break;
                }
            }

            let floor = T::lit(1e-12) * T::from_usize(steps).unwrap();
            for i in 0..s {
                if occupancy[i] > floor {
                    model.means.set_column(i, &(weighted.column(i) / occupancy[i]));
                }
                let col_mass = transitions.column(i).sum();
                if col_mass > floor {
                    model.pi.set_column(i, &(transitions.column(i) / col_mass));
                }
            }
            // sum_t sum_i g_ti (o_t - mu_i)(o_t - mu_i)'
            let mut cov = scatter;
            for i in 0..s {
                let mu = model.means.column(i);
                let w = weighted.column(i);
                cov += -(w * mu.transpose()) - (mu * w.transpose()) + (mu * mu.transpose()) * occupancy[i];
            }
            cov /= T::from_usize(steps).unwrap();
            model.cov = linalg::clip_eigenvalues(&cov, cov_floor).0;
            model.pi0 = &initial / initial.sum();
        }
        Ok(FitResult {
            model,
            log_likelihood_history: history,
        })
    }
}
