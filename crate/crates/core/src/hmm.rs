//! Exact inference in the discrete chain under per-step soft evidence.
//!
//! Evidence is supplied as unnormalized log-weights `e_t(i)`; the chain's
//! joint is `pi0(s_0) prod Pi(s_t, s_{t-1}) prod exp(e_t(s_t))`. Weights are
//! only exponentiated after subtracting the per-step maximum.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct HmmPosterior<T: Scalar = f64> {
    /// `<s_t>`
    pub gammas: Vec<DVector<T>>,
    /// `<s_t s_{t-1}'>` for `t = 1..T`; entry `(i, j)` is
    /// `Pr(s_t = i, s_{t-1} = j)`.
    pub xis: Vec<DMatrix<T>>,
    /// Log normalizer of the evidence-weighted chain.
    pub log_evidence: T,
}

fn check<T: Scalar>(pi: &DMatrix<T>, pi0: &DVector<T>, evidence: &[DVector<T>]) -> Result<()> {
    let s = pi0.len();
    if pi.nrows() != s || pi.ncols() != s {
        return Err(Error::dims("Pi", format!("{s}x{s}"), format!("{}x{}", pi.nrows(), pi.ncols())));
    }
    if evidence.is_empty() {
        return Err(Error::InvalidArgument("evidence must cover T >= 1 steps".into()));
    }
    for (t, e) in evidence.iter().enumerate() {
        if e.len() != s {
            return Err(Error::dims(format!("evidence[{t}]"), s, e.len()));
        }
        if e.iter().any(|&v| !(v.is_finite_value() || v == T::NEG_INFINITY)) {
            return Err(Error::InvalidArgument(format!(
                "evidence at step {t} must be finite or -inf"
            )));
        }
    }
    Ok(())
}

fn ln<T: Scalar>(p: T) -> T {
    if p > T::zero() {
        p.ln()
    } else {
        T::NEG_INFINITY
    }
}

fn log_sum_exp<T: Scalar>(v: impl Iterator<Item = T> + Clone) -> T {
    let max = v.clone().fold(T::NEG_INFINITY, |acc, x| acc.max(x));
    if max == T::NEG_INFINITY {
        return max;
    }
    max + v.map(|x| (x - max).exp()).fold(T::zero(), |acc, x| acc + x).ln()
}

/// Forward-backward in the log domain, so structural zeros in `Pi` and
/// evidence gaps of thousands of nats cannot underflow the messages.
pub fn forward_backward<T: Scalar>(
    pi: &DMatrix<T>,
    pi0: &DVector<T>,
    log_evidence_per_step: &[DVector<T>],
) -> Result<HmmPosterior<T>> {
    check(pi, pi0, log_evidence_per_step)?;
    let len = log_evidence_per_step.len();
    let s = pi0.len();
    let log_pi = pi.map(ln);

    let mut log_alphas: Vec<DVector<T>> = Vec::with_capacity(len);
    let mut log_scales = Vec::with_capacity(len);
    for (t, e) in log_evidence_per_step.iter().enumerate() {
        let prior = match t {
            0 => pi0.map(ln),
            _ => {
                let prev = &log_alphas[t - 1];
                DVector::from_fn(s, |i, _| log_sum_exp((0..s).map(|j| log_pi[(i, j)] + prev[j])))
            }
        };
        let joint = prior + e;
        let c = log_sum_exp(joint.iter().copied());
        if c == T::NEG_INFINITY {
            return Err(Error::ZeroProbability { step: t });
        }
        log_alphas.push(joint.add_scalar(-c));
        log_scales.push(c);
    }
    let log_evidence = log_scales.iter().fold(T::zero(), |acc, &c| acc + c);

    let mut log_betas = vec![DVector::zeros(s); len];
    for t in (0..len - 1).rev() {
        let msg = &log_betas[t + 1] + &log_evidence_per_step[t + 1];
        log_betas[t] = DVector::from_fn(s, |j, _| {
            log_sum_exp((0..s).map(|i| log_pi[(i, j)] + msg[i])) - log_scales[t + 1]
        });
    }

    let normalize_exp = |v: DVector<T>| {
        let z = log_sum_exp(v.iter().copied());
        v.map(|x| (x - z).exp())
    };
    let gammas = (0..len)
        .map(|t| normalize_exp(&log_alphas[t] + &log_betas[t]))
        .collect();
    let xis = (1..len)
        .map(|t| {
            let col = &log_evidence_per_step[t] + &log_betas[t];
            let flat = DMatrix::from_fn(s, s, |i, j| col[i] + log_pi[(i, j)] + log_alphas[t - 1][j]);
            let z = log_sum_exp(flat.iter().copied());
            flat.map(|x| (x - z).exp())
        })
        .collect();

    Ok(HmmPosterior {
        gammas,
        xis,
        log_evidence,
    })
}

/// Most probable state path and its log score. Ties go to the lower state
/// index, both when choosing a predecessor and at the final step.
pub fn viterbi<T: Scalar>(
    pi: &DMatrix<T>,
    pi0: &DVector<T>,
    log_evidence_per_step: &[DVector<T>],
) -> Result<(Vec<usize>, T)> {
    check(pi, pi0, log_evidence_per_step)?;
    let len = log_evidence_per_step.len();
    let s = pi0.len();
    let log = ln::<T>;

    let mut delta: DVector<T> = DVector::from_fn(s, |i, _| log(pi0[i]) + log_evidence_per_step[0][i]);
    let mut back = Vec::with_capacity(len.saturating_sub(1));
    if delta.iter().all(|&v| v == T::NEG_INFINITY) {
        return Err(Error::ZeroProbability { step: 0 });
    }
    for (t, e) in log_evidence_per_step.iter().enumerate().skip(1) {
        let mut next = DVector::from_element(s, T::NEG_INFINITY);
        let mut arg = vec![0usize; s];
        for i in 0..s {
            let mut best = T::NEG_INFINITY;
            let mut best_j = 0;
            for j in 0..s {
                let v = delta[j] + log(pi[(i, j)]);
                if v > best {
                    best = v;
                    best_j = j;
                }
            }
            next[i] = best + e[i];
            arg[i] = best_j;
        }
        if next.iter().all(|&v| v == T::NEG_INFINITY) {
            return Err(Error::ZeroProbability { step: t });
        }
        delta = next;
        back.push(arg);
    }

    let mut last = 0;
    for i in 1..s {
        if delta[i] > delta[last] {
            last = i;
        }
    }
    let score = delta[last];
    let mut path = vec![last; len];
    for t in (1..len).rev() {
        path[t - 1] = back[t - 1][path[t]];
    }
    Ok((path, score))
}
