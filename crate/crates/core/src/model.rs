//! Mixed-state model: a discrete Markov chain whose outputs drive a linear
//! dynamic system.
//!
//! ```text
//! s_0 ~ pi0,           s_t | s_{t-1} ~ Pi[:, s_{t-1}]
//! u_t = d_{s_t} + r_t,  r_t ~ N(0, Q)
//! x_0 = u_0,           x_t = A x_{t-1} + u_t
//! y_t = C x_t + w_t,   w_t ~ N(0, R)
//! ```
//!
//! The input matrix is the identity and the physical state noise is folded
//! into `r_t`, so `Q` is both the input noise and the `x_0` prior covariance.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{self, check_spd};
use crate::scalar::Scalar;

/// Tolerance on column sums of `Pi` and on the sum of `pi0`.
pub const STOCHASTIC_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T: Scalar = f64> {
    /// State transition, N x N.
    pub a: DMatrix<T>,
    /// Observation matrix, M x N.
    pub c: DMatrix<T>,
    /// Discrete-state input levels, N x S; column `i` is `d_i`.
    pub d: DMatrix<T>,
    /// Input noise covariance (and `x_0` prior covariance), N x N.
    pub q: DMatrix<T>,
    /// Measurement noise covariance, M x M.
    pub r: DMatrix<T>,
    /// Column-stochastic transition matrix: `pi[(i, j)] = Pr(s_{t+1} = i | s_t = j)`.
    pub pi: DMatrix<T>,
    /// Initial discrete-state distribution.
    pub pi0: DVector<T>,
}

impl<T: Scalar> ModelParams<T> {
    /// Builds and validates a model.
    pub fn new(
        a: DMatrix<T>,
        c: DMatrix<T>,
        d: DMatrix<T>,
        q: DMatrix<T>,
        r: DMatrix<T>,
        pi: DMatrix<T>,
        pi0: DVector<T>,
    ) -> Result<Self> {
        let m = Self { a, c, d, q, r, pi, pi0 };
        m.validate()?;
        Ok(m)
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn obs_dim(&self) -> usize {
        self.c.nrows()
    }

    pub fn num_states(&self) -> usize {
        self.pi0.len()
    }

    /// Input level `d_i` of discrete state `i`.
    pub fn input(&self, i: usize) -> DVector<T> {
        self.d.column(i).into_owned()
    }

    /// Full check: shapes, stochasticity and strictly positive definite `Q`, `R`.
    pub fn validate(&self) -> Result<()> {
        self.validate_structure()?;
        check_spd(&self.q, "Q")?;
        check_spd(&self.r, "R")
    }

    /// Like [`validate`](Self::validate) but only requires `Q` to be positive
    /// semi-definite. Filtering, greedy decoding and path enumeration work with
    /// noiseless dynamics; everything that inverts `Q` does not.
    pub fn validate_for_filtering(&self) -> Result<()> {
        self.validate_structure()?;
        check_spd(&self.r, "R")?;
        let scale = linalg::max_abs(&self.q).max(T::one());
        if linalg::max_abs(&(&self.q - self.q.transpose())) > T::lit(linalg::SYMMETRY_TOL) * scale {
            return Err(Error::NonPositiveDefinite {
                field: "Q".into(),
                detail: "not symmetric".into(),
            });
        }
        let min = self
            .q
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .fold(T::INFINITY, |acc, &v| acc.min(v));
        if min < -T::lit(linalg::SYMMETRY_TOL) * scale {
            return Err(Error::NonPositiveDefinite {
                field: "Q".into(),
                detail: format!("smallest eigenvalue {min:e}"),
            });
        }
        Ok(())
    }

    fn validate_structure(&self) -> Result<()> {
        let n = self.a.nrows();
        let m = self.c.nrows();
        let s = self.pi0.len();
        if n == 0 {
            return Err(Error::dims("A", "at least 1 row", 0));
        }
        if m == 0 {
            return Err(Error::dims("C", "at least 1 row", 0));
        }
        if s == 0 {
            return Err(Error::dims("pi0", "at least 1 entry", 0));
        }
        let shape = |name: &str, mat: &DMatrix<T>, rows: usize, cols: usize| {
            if mat.nrows() != rows || mat.ncols() != cols {
                Err(Error::dims(
                    name,
                    format!("{rows}x{cols}"),
                    format!("{}x{}", mat.nrows(), mat.ncols()),
                ))
            } else {
                Ok(())
            }
        };
        shape("A", &self.a, n, n)?;
        shape("C", &self.c, m, n)?;
        shape("D", &self.d, n, s)?;
        shape("Q", &self.q, n, n)?;
        shape("R", &self.r, m, m)?;
        shape("Pi", &self.pi, s, s)?;
        for (name, mat) in [("A", &self.a), ("C", &self.c), ("D", &self.d)] {
            if mat.iter().any(|v| !v.is_finite_value()) {
                return Err(Error::InvalidArgument(format!("`{name}` has a non-finite entry")));
            }
        }
        let tol = T::lit(STOCHASTIC_TOL);
        if self.pi.iter().any(|&p| !(p >= T::zero()) || !p.is_finite_value()) {
            return Err(Error::NonStochastic {
                field: "Pi".into(),
                detail: "entries must be finite and non-negative".into(),
            });
        }
        for j in 0..s {
            let sum = self.pi.column(j).sum();
            if (sum - T::one()).abs() > tol {
                return Err(Error::NonStochastic {
                    field: "Pi".into(),
                    detail: format!("column {j} sums to {sum}"),
                });
            }
        }
        if self.pi0.iter().any(|&p| !(p >= T::zero()) || !p.is_finite_value()) {
            return Err(Error::NonStochastic {
                field: "pi0".into(),
                detail: "entries must be finite and non-negative".into(),
            });
        }
        let sum = self.pi0.sum();
        if (sum - T::one()).abs() > tol {
            return Err(Error::NonStochastic {
                field: "pi0".into(),
                detail: format!("sums to {sum}"),
            });
        }
        Ok(())
    }

    /// Elementwise `ln Pi`, with `-inf` for forbidden transitions.
    pub fn log_pi(&self) -> DMatrix<T> {
        self.pi.map(|p| if p > T::zero() { p.ln() } else { T::NEG_INFINITY })
    }

    pub fn log_pi0(&self) -> DVector<T> {
        self.pi0.map(|p| if p > T::zero() { p.ln() } else { T::NEG_INFINITY })
    }
}

/// One observed sequence `y_0 .. y_{T-1}`, optionally with the latents that
/// generated it.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceData<T: Scalar = f64> {
    pub observations: Vec<DVector<T>>,
    pub true_states: Option<Vec<usize>>,
    pub true_x: Option<Vec<DVector<T>>>,
}

impl<T: Scalar> SequenceData<T> {
    pub fn new(observations: Vec<DVector<T>>) -> Result<Self> {
        let seq = Self {
            observations,
            true_states: None,
            true_x: None,
        };
        seq.check()?;
        Ok(seq)
    }

    pub fn with_states(mut self, states: Vec<usize>) -> Result<Self> {
        if states.len() != self.len() {
            return Err(Error::dims("true_states", self.len(), states.len()));
        }
        self.true_states = Some(states);
        Ok(self)
    }

    /// Convenience for scalar observations.
    pub fn from_scalars(values: &[T]) -> Result<Self> {
        Self::new(values.iter().map(|&v| DVector::from_element(1, v)).collect())
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn obs_dim(&self) -> usize {
        self.observations.first().map_or(0, |y| y.len())
    }

    fn check(&self) -> Result<()> {
        if self.observations.is_empty() {
            return Err(Error::InvalidArgument("sequence must have T >= 1".into()));
        }
        let m = self.obs_dim();
        if m == 0 {
            return Err(Error::dims("observations", "dimension >= 1", 0));
        }
        for (t, y) in self.observations.iter().enumerate() {
            if y.len() != m {
                return Err(Error::dims(format!("observations[{t}]"), m, y.len()));
            }
        }
        Ok(())
    }

    /// Checks the sequence against a model's observation dimension.
    pub fn check_against(&self, params: &ModelParams<T>) -> Result<()> {
        self.check()?;
        if self.obs_dim() != params.obs_dim() {
            return Err(Error::dims("observations", params.obs_dim(), self.obs_dim()));
        }
        Ok(())
    }
}

/// Latent trajectory drawn by [`sample`].
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSample<T: Scalar = f64> {
    pub discrete_path: Vec<usize>,
    pub continuous_path: Vec<DVector<T>>,
    /// The drawn inputs `u_t = d_{s_t} + r_t`.
    pub inputs: Vec<DVector<T>>,
}

/// Ancestral sample of length `len`, deterministic in `seed`.
pub fn sample<T: Scalar>(
    params: &ModelParams<T>,
    len: usize,
    seed: u64,
) -> Result<(SequenceData<T>, LatentSample<T>)> {
    params.validate()?;
    if len == 0 {
        return Err(Error::InvalidArgument("sample length must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let path = sample_discrete_path(params, len, &mut rng);
    sample_given_path(params, &path, &mut rng)
}

/// Draws `s_0 .. s_{len-1}` from the discrete chain.
pub fn sample_discrete_path<T: Scalar, R: Rng + ?Sized>(
    params: &ModelParams<T>,
    len: usize,
    rng: &mut R,
) -> Vec<usize> {
    let mut path = Vec::with_capacity(len);
    let mut s = categorical(params.pi0.iter().copied(), rng);
    path.push(s);
    for _ in 1..len {
        s = categorical(params.pi.column(s).iter().copied(), rng);
        path.push(s);
    }
    path
}

/// Draws the continuous chain and the observations for a fixed discrete path.
pub fn sample_given_path<T: Scalar, R: Rng + ?Sized>(
    params: &ModelParams<T>,
    path: &[usize],
    rng: &mut R,
) -> Result<(SequenceData<T>, LatentSample<T>)> {
    let n = params.state_dim();
    let m = params.obs_dim();
    let lq = cholesky_factor(&params.q, "Q")?;
    let lr = cholesky_factor(&params.r, "R")?;

    let mut xs = Vec::with_capacity(path.len());
    let mut us = Vec::with_capacity(path.len());
    let mut ys = Vec::with_capacity(path.len());
    let mut prev: Option<DVector<T>> = None;
    for &s in path {
        if s >= params.num_states() {
            return Err(Error::InvalidArgument(format!("state {s} out of range")));
        }
        let u = params.input(s) + &lq * standard_normal(n, rng);
        let x = match &prev {
            None => u.clone(),
            Some(p) => &params.a * p + &u,
        };
        let y = &params.c * &x + &lr * standard_normal(m, rng);
        prev = Some(x.clone());
        xs.push(x);
        us.push(u);
        ys.push(y);
    }
    let data = SequenceData {
        observations: ys,
        true_states: Some(path.to_vec()),
        true_x: Some(xs.clone()),
    };
    let latent = LatentSample {
        discrete_path: path.to_vec(),
        continuous_path: xs,
        inputs: us,
    };
    Ok((data, latent))
}

fn cholesky_factor<T: Scalar>(m: &DMatrix<T>, name: &str) -> Result<DMatrix<T>> {
    linalg::symmetrize(m)
        .cholesky()
        .map(|c| c.unpack())
        .ok_or_else(|| Error::NonPositiveDefinite {
            field: name.into(),
            detail: "Cholesky factorization failed".into(),
        })
}

pub(crate) fn standard_normal<T: Scalar, R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DVector<T> {
    DVector::from_fn(dim, |_, _| T::lit(rng.sample::<f64, _>(StandardNormal)))
}

pub(crate) fn categorical<T: Scalar, R: Rng + ?Sized>(
    probs: impl Iterator<Item = T>,
    rng: &mut R,
) -> usize {
    let probs: Vec<f64> = probs.map(|p| p.as_f64()).collect();
    let total: f64 = probs.iter().sum();
    let mut draw = rng.random::<f64>() * total;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        last = i;
        if draw < p {
            return i;
        }
        draw -= p;
    }
    last
}

/// Joint Hamiltonian `H(X, S, Y) = -ln p(X, S, Y)`.
///
/// Lower energy means higher joint probability. A configuration that uses a
/// zero-probability transition or initial state has energy `+inf`.
pub fn joint_energy<T: Scalar>(
    params: &ModelParams<T>,
    x: &[DVector<T>],
    s: &[usize],
    y: &SequenceData<T>,
) -> Result<T> {
    y.check_against(params)?;
    let len = y.len();
    if x.len() != len {
        return Err(Error::dims("x", len, x.len()));
    }
    if s.len() != len {
        return Err(Error::dims("s", len, s.len()));
    }
    let n = params.state_dim();
    let m = params.obs_dim();
    if let Some(bad) = x.iter().position(|v| v.len() != n) {
        return Err(Error::dims(format!("x[{bad}]"), n, x[bad].len()));
    }
    if let Some(&bad) = s.iter().find(|&&i| i >= params.num_states()) {
        return Err(Error::InvalidArgument(format!("state {bad} out of range")));
    }
    let q_inv = linalg::spd_inverse(&params.q, "Q^-1 in joint energy")?;
    let r_inv = linalg::spd_inverse(&params.r, "R^-1 in joint energy")?;
    let log_det_q = linalg::log_det_spd(&params.q, "log|Q|")?;
    let log_det_r = linalg::log_det_spd(&params.r, "log|R|")?;

    let half = T::lit(0.5);
    let tf = T::from_usize(len).unwrap();
    let ln2pi = T::two_pi().ln();
    let mut h = half * tf * (log_det_q + log_det_r)
        + half * tf * T::from_usize(n + m).unwrap() * ln2pi;

    for t in 0..len {
        let pred = if t == 0 {
            params.input(s[0])
        } else {
            &params.a * &x[t - 1] + params.input(s[t])
        };
        let e = &x[t] - pred;
        h += half * e.dot(&(&q_inv * &e));
        let w = &y.observations[t] - &params.c * &x[t];
        h += half * w.dot(&(&r_inv * &w));
    }

    let p0 = params.pi0[s[0]];
    if p0 <= T::zero() {
        return Ok(T::INFINITY);
    }
    h -= p0.ln();
    for t in 1..len {
        let p = params.pi[(s[t], s[t - 1])];
        if p <= T::zero() {
            return Ok(T::INFINITY);
        }
        h -= p.ln();
    }
    Ok(h)
}
