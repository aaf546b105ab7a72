//! Exact posterior by enumerating every discrete path. Given a path the
//! model is a linear-Gaussian chain, so each path's evidence is one Kalman
//! pass; the posterior over `x_t` is the resulting Gaussian mixture.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lds;
use crate::linalg::log_sum_exp;
use crate::model::{ModelParams, SequenceData};
use crate::scalar::Scalar;

/// Largest number of paths enumerated unless the caller asks for more.
pub const DEFAULT_PATH_CAP: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct ExactPosterior<T: Scalar = f64> {
    /// All `S^T` paths in lexicographic order.
    pub paths: Vec<Vec<usize>>,
    /// `ln p(path, Y)`
    pub log_joint: Vec<T>,
    /// `p(path | Y)`; sums to one.
    pub weights: Vec<T>,
    /// `ln p(Y)`
    pub log_evidence: T,
    /// `Pr(s_t = i | Y)`
    pub s_mean: Vec<DVector<T>>,
    /// `E[x_t | Y]`
    pub x_mean: Vec<DVector<T>>,
    /// Most probable path; ties go to the lexicographically first.
    pub map_path: Vec<usize>,
}

/// Every sequence over `0..num_states` of the given length, lexicographic.
pub fn enumerate_paths(num_states: usize, len: usize, cap: usize) -> Result<Vec<Vec<usize>>> {
    let count = u32::try_from(len)
        .ok()
        .and_then(|l| (num_states as u128).checked_pow(l))
        .unwrap_or(u128::MAX);
    if count > cap as u128 {
        return Err(Error::CapacityExceeded { paths: count, cap });
    }
    let mut out = Vec::with_capacity(count as usize);
    let mut path = vec![0usize; len];
    for _ in 0..count {
        out.push(path.clone());
        for k in (0..len).rev() {
            path[k] += 1;
            if path[k] < num_states {
                break;
            }
            path[k] = 0;
        }
    }
    Ok(out)
}

fn log_prior<T: Scalar>(params: &ModelParams<T>, path: &[usize]) -> T {
    let ln = |p: T| if p > T::zero() { p.ln() } else { T::NEG_INFINITY };
    let mut lp = ln(params.pi0[path[0]]);
    for w in path.windows(2) {
        lp += ln(params.pi[(w[1], w[0])]);
    }
    lp
}

pub fn exact_posterior<T: Scalar>(params: &ModelParams<T>, y: &SequenceData<T>) -> Result<ExactPosterior<T>> {
    exact_posterior_with_cap(params, y, DEFAULT_PATH_CAP)
}

pub fn exact_posterior_with_cap<T: Scalar>(
    params: &ModelParams<T>,
    y: &SequenceData<T>,
    cap: usize,
) -> Result<ExactPosterior<T>> {
    params.validate_for_filtering()?;
    y.check_against(params)?;
    let len = y.len();
    let n = params.state_dim();
    let s = params.num_states();
    let paths = enumerate_paths(s, len, cap)?;

    let per_path: Vec<(T, Vec<DVector<T>>)> = paths
        .par_iter()
        .map(|path| -> Result<_> {
            let prior = log_prior(params, path);
            if prior == T::NEG_INFINITY {
                return Ok((prior, Vec::new()));
            }
            let u: Vec<_> = path.iter().map(|&i| params.input(i)).collect();
            let sm = lds::rts_smooth(params, y, &u)?;
            Ok((prior + sm.log_likelihood(), sm.means))
        })
        .collect::<Result<_>>()?;

    let log_joint: Vec<T> = per_path.iter().map(|(l, _)| *l).collect();
    let log_evidence = log_sum_exp(log_joint.iter().copied());
    if log_evidence == T::NEG_INFINITY {
        return Err(Error::ZeroProbability { step: 0 });
    }
    let weights: Vec<T> = log_joint.iter().map(|&l| (l - log_evidence).exp()).collect();

    let mut s_mean = vec![DVector::zeros(s); len];
    let mut x_mean = vec![DVector::zeros(n); len];
    let mut map = 0;
    for (k, (path, (_, means))) in paths.iter().zip(&per_path).enumerate() {
        if log_joint[k] > log_joint[map] {
            map = k;
        }
        let w = weights[k];
        if w == T::zero() {
            continue;
        }
        for t in 0..len {
            s_mean[t][path[t]] += w;
            x_mean[t] += &means[t] * w;
        }
    }
    Ok(ExactPosterior {
        map_path: paths[map].clone(),
        paths,
        log_joint,
        weights,
        log_evidence,
        s_mean,
        x_mean,
    })
}
