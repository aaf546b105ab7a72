//! Independent reference computations shared by the integration suites.
//!
//! Everything here works from the model definition directly: dense joint
//! Gaussians built from the stacked linear equations, and brute-force sums
//! over discrete paths. None of it calls the recursive algorithms it checks.

#![allow(dead_code, clippy::needless_range_loop)]

use mixeddyn::model::{ModelParams, SequenceData};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub fn random_spd<R: Rng>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let b = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &b * b.transpose() + DMatrix::identity(n, n) * 0.3
}

pub fn random_distribution<R: Rng>(s: usize, rng: &mut R) -> DVector<f64> {
    let v = DVector::from_fn(s, |_, _| rng.random_range(0.05..1.0));
    let sum = v.sum();
    v / sum
}

pub fn random_stochastic<R: Rng>(s: usize, rng: &mut R) -> DMatrix<f64> {
    let mut pi = DMatrix::zeros(s, s);
    for j in 0..s {
        pi.set_column(j, &random_distribution(s, rng));
    }
    pi
}

pub fn random_model<R: Rng>(n: usize, m: usize, s: usize, rng: &mut R) -> ModelParams {
    ModelParams::new(
        DMatrix::from_fn(n, n, |_, _| rng.random_range(-0.9..0.9) / n as f64),
        DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.5..1.5)),
        DMatrix::from_fn(n, s, |_, _| rng.random_range(-2.0..2.0)),
        random_spd(n, rng),
        random_spd(m, rng),
        random_stochastic(s, rng),
        random_distribution(s, rng),
    )
    .unwrap()
}

/// Every path over `s` states of length `len`, lexicographic.
pub fn all_paths(s: usize, len: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..s).map(move |i| {
                    let mut q = p.clone();
                    q.push(i);
                    q
                })
            })
            .collect();
    }
    out
}

/// Mean and covariance of the stacked states `[x_0; ...; x_{T-1}]` and of the
/// stacked observations, for inputs `u_t` plus `N(0, Q)` noise.
pub struct DenseGaussian {
    pub x_mean: DVector<f64>,
    pub x_cov: DMatrix<f64>,
    pub y_mean: DVector<f64>,
    pub y_cov: DMatrix<f64>,
    /// `Cov(X, Y)`
    pub xy_cov: DMatrix<f64>,
}

pub fn dense_gaussian(params: &ModelParams, u: &[DVector<f64>]) -> DenseGaussian {
    let n = params.state_dim();
    let m = params.obs_dim();
    let len = u.len();
    // x_t = sum_{k <= t} A^{t-k} (u_k + w_k)
    let mut powers = vec![DMatrix::identity(n, n)];
    for k in 1..len {
        let next = &params.a * &powers[k - 1];
        powers.push(next);
    }
    let mut l = DMatrix::zeros(n * len, n * len);
    for t in 0..len {
        for k in 0..=t {
            l.view_mut((t * n, k * n), (n, n)).copy_from(&powers[t - k]);
        }
    }
    let mut u_stack = DVector::zeros(n * len);
    let mut noise = DMatrix::zeros(n * len, n * len);
    let mut c_big = DMatrix::zeros(m * len, n * len);
    let mut r_big = DMatrix::zeros(m * len, m * len);
    for t in 0..len {
        u_stack.rows_mut(t * n, n).copy_from(&u[t]);
        noise.view_mut((t * n, t * n), (n, n)).copy_from(&params.q);
        c_big.view_mut((t * m, t * n), (m, n)).copy_from(&params.c);
        r_big.view_mut((t * m, t * m), (m, m)).copy_from(&params.r);
    }
    let x_mean = &l * u_stack;
    let x_cov = &l * noise * l.transpose();
    let y_mean = &c_big * &x_mean;
    let y_cov = &c_big * &x_cov * c_big.transpose() + r_big;
    let xy_cov = &x_cov * c_big.transpose();
    DenseGaussian {
        x_mean,
        x_cov,
        y_mean,
        y_cov,
        xy_cov,
    }
}

pub fn stack(rows: &[DVector<f64>]) -> DVector<f64> {
    let dim = rows[0].len();
    let mut out = DVector::zeros(dim * rows.len());
    for (t, r) in rows.iter().enumerate() {
        out.rows_mut(t * dim, dim).copy_from(r);
    }
    out
}

pub fn log_normal(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let d = x.len() as f64;
    let r = x - mean;
    let inv = cov.clone().try_inverse().expect("invertible covariance");
    let det = cov.determinant();
    -0.5 * (d * (2.0 * std::f64::consts::PI).ln() + det.ln() + r.dot(&(inv * &r)))
}

/// Posterior of the stacked states given the observations.
pub struct DenseConditional {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub log_likelihood: f64,
}

pub fn condition(params: &ModelParams, y: &SequenceData, u: &[DVector<f64>]) -> DenseConditional {
    let g = dense_gaussian(params, u);
    let obs = stack(&y.observations);
    let inv = g.y_cov.clone().try_inverse().expect("invertible observation covariance");
    let gain = &g.xy_cov * inv;
    DenseConditional {
        mean: &g.x_mean + &gain * (&obs - &g.y_mean),
        cov: &g.x_cov - &gain * g.xy_cov.transpose(),
        log_likelihood: log_normal(&obs, &g.y_mean, &g.y_cov),
    }
}

/// `ln Pr(S)` of one discrete path.
pub fn log_path_prior(params: &ModelParams, path: &[usize]) -> f64 {
    let mut lp = params.pi0[path[0]].ln();
    for w in path.windows(2) {
        lp += params.pi[(w[1], w[0])].ln();
    }
    lp
}

pub fn path_inputs(params: &ModelParams, path: &[usize]) -> Vec<DVector<f64>> {
    path.iter().map(|&i| params.d.column(i).into_owned()).collect()
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `ln p(Y)` by summing dense path likelihoods over every discrete path.
pub fn brute_force_log_evidence(params: &ModelParams, y: &SequenceData) -> f64 {
    let terms: Vec<f64> = all_paths(params.num_states(), y.len())
        .iter()
        .map(|p| log_path_prior(params, p) + condition(params, y, &path_inputs(params, p)).log_likelihood)
        .collect();
    log_sum_exp(&terms)
}

/// Marginals, pair marginals, log normalizer and best path score of an
/// evidence-weighted chain, by enumeration.
pub struct ChainOracle {
    pub gammas: Vec<DVector<f64>>,
    pub xis: Vec<DMatrix<f64>>,
    pub log_evidence: f64,
    pub best_score: f64,
    pub best_paths: Vec<Vec<usize>>,
}

pub fn enumerate_chain(pi: &DMatrix<f64>, pi0: &DVector<f64>, evidence: &[DVector<f64>]) -> ChainOracle {
    let s = pi0.len();
    let len = evidence.len();
    let paths = all_paths(s, len);
    let scores: Vec<f64> = paths
        .iter()
        .map(|p| {
            let mut v = pi0[p[0]].ln() + evidence[0][p[0]];
            for t in 1..len {
                v += pi[(p[t], p[t - 1])].ln() + evidence[t][p[t]];
            }
            v
        })
        .collect();
    let log_evidence = log_sum_exp(&scores);
    let mut gammas = vec![DVector::zeros(s); len];
    let mut xis = vec![DMatrix::zeros(s, s); len.saturating_sub(1)];
    for (p, sc) in paths.iter().zip(&scores) {
        let w = (sc - log_evidence).exp();
        for t in 0..len {
            gammas[t][p[t]] += w;
            if t > 0 {
                xis[t - 1][(p[t], p[t - 1])] += w;
            }
        }
    }
    let best_score = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let best_paths = paths
        .iter()
        .zip(&scores)
        .filter(|(_, sc)| (**sc - best_score).abs() < 1e-12)
        .map(|(p, _)| p.clone())
        .collect();
    ChainOracle {
        gammas,
        xis,
        log_evidence,
        best_score,
        best_paths,
    }
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).abs().max()
}

pub fn median(values: &[usize]) -> f64 {
    let mut v = values.to_vec();
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2] as f64
    } else {
        (v[n / 2 - 1] + v[n / 2]) as f64 / 2.0
    }
}
