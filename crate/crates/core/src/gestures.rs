//! Synthetic planar gestures and the classification protocol run on them.
//!
//! A gesture is a point mass pushed by piecewise-constant accelerations, one
//! per discrete state of a left-to-right chain. The coupled classifier fits
//! one mixed-state model per class; the decoupled baseline differentiates
//! positions twice and fits a Gaussian HMM to the result.

use std::sync::Mutex;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::baselines::gaussian_hmm::GaussianHmm;
use crate::baselines::gradient::gradient_input_estimate;
use crate::error::{Error, Result};
use crate::io::derive_seed;
use crate::learning::{em_train, TrainConfig, UpdateMask};
use crate::model::{self, standard_normal, ModelParams, SequenceData};
use crate::scalar::Scalar;
use crate::variational::{self, Init};

pub const DEFAULT_DT: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct GestureSpec<T: Scalar = f64> {
    pub class_name: String,
    pub num_hmm_states: usize,
    /// Planar acceleration target of each state.
    pub stroke_accelerations: Vec<[T; 2]>,
    /// Mean number of steps spent in each state.
    pub dwell: T,
    pub dt: T,
}

impl<T: Scalar> GestureSpec<T> {
    pub fn validate(&self) -> Result<()> {
        if self.num_hmm_states == 0 {
            return Err(Error::InvalidArgument(format!("{}: needs at least one state", self.class_name)));
        }
        if self.stroke_accelerations.len() != self.num_hmm_states {
            return Err(Error::dims(
                format!("{} stroke accelerations", self.class_name),
                self.num_hmm_states,
                self.stroke_accelerations.len(),
            ));
        }
        if !(self.dt > T::zero()) || !(self.dwell >= T::one()) {
            return Err(Error::InvalidArgument(format!("{}: need dt > 0 and dwell >= 1", self.class_name)));
        }
        Ok(())
    }

    /// The generating model of this class.
    pub fn model(&self, q_scale: T, r_scale: T) -> Result<ModelParams<T>> {
        self.validate()?;
        let mut m = point_mass_model(self.dt, q_scale, r_scale, self.num_hmm_states)?;
        for (i, acc) in self.stroke_accelerations.iter().enumerate() {
            m.d[(2, i)] = acc[0] * self.dt;
            m.d[(3, i)] = acc[1] * self.dt;
        }
        m.pi = left_to_right(self.num_hmm_states, T::one() - T::one() / self.dwell);
        Ok(m)
    }
}

/// Accelerate along `angle`, then brake, for each stroke angle (degrees).
fn strokes(angles: &[f64], magnitude: f64) -> Vec<[f64; 2]> {
    angles
        .iter()
        .flat_map(|&deg| {
            let (s, c) = deg.to_radians().sin_cos();
            [[magnitude * c, magnitude * s], [-magnitude * c, -magnitude * s]]
        })
        .collect()
}

/// Four classes loosely imitating arrow, erase, circle and wiggle symbols.
/// State counts follow two states per stroke for arrow and erase.
pub fn default_specs() -> Vec<GestureSpec> {
    let spec = |name: &str, acc: Vec<[f64; 2]>| GestureSpec {
        class_name: name.to_string(),
        num_hmm_states: acc.len(),
        stroke_accelerations: acc,
        dwell: 5.0,
        dt: DEFAULT_DT,
    };
    vec![
        spec("arrow", strokes(&[0.0, 150.0, 330.0, 210.0], 4.0)),
        spec("erase", strokes(&[0.0, 195.0, 15.0], 4.0)),
        spec("circle", vec![[4.0, 0.0], [-2.0, 4.0], [-4.0, -2.0], [2.0, -4.0]]),
        spec(
            "wiggle",
            vec![[3.0, 3.0], [0.0, -6.0], [0.0, 6.0], [0.0, -6.0], [0.0, 6.0], [-3.0, -3.0]],
        ),
    ]
}

/// Self-loop with probability `stay`, otherwise advance; the last state is
/// absorbing.
pub fn left_to_right<T: Scalar>(num_states: usize, stay: T) -> DMatrix<T> {
    let mut pi = DMatrix::zeros(num_states, num_states);
    for j in 0..num_states {
        if j + 1 < num_states {
            pi[(j, j)] = stay;
            pi[(j + 1, j)] = T::one() - stay;
        } else {
            pi[(j, j)] = T::one();
        }
    }
    pi
}

/// Constant-velocity point mass with state `[px, py, vx, vy]`, observed
/// positions, zero input levels, isotropic noise and a left-to-right chain
/// starting in state 0.
pub fn point_mass_model<T: Scalar>(dt: T, q_scale: T, r_scale: T, num_states: usize) -> Result<ModelParams<T>> {
    if !(dt > T::zero()) || !(q_scale > T::zero()) || !(r_scale > T::zero()) || num_states == 0 {
        return Err(Error::InvalidArgument("need dt, q_scale, r_scale > 0 and S >= 1".into()));
    }
    let mut a = DMatrix::identity(4, 4);
    a[(0, 2)] = dt;
    a[(1, 3)] = dt;
    let mut c = DMatrix::zeros(2, 4);
    c[(0, 0)] = T::one();
    c[(1, 1)] = T::one();
    let mut pi0 = DVector::zeros(num_states);
    pi0[0] = T::one();
    ModelParams::new(
        a,
        c,
        DMatrix::zeros(4, num_states),
        DMatrix::identity(4, 4) * q_scale,
        DMatrix::identity(2, 2) * r_scale,
        left_to_right(num_states, T::lit(0.5)),
        pi0,
    )
}

/// How trajectories were put into a common frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Alignment {
    /// Rotated so the first stroke points along `+x`, then scaled into the
    /// unit square with the aspect ratio kept.
    FirstStroke,
}

impl Alignment {
    pub fn name(self) -> &'static str {
        match self {
            Alignment::FirstStroke => "first-stroke",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example<T: Scalar = f64> {
    pub class: usize,
    pub fold: usize,
    /// Normalized positions without added noise.
    pub clean: SequenceData<T>,
    /// `clean` plus the dataset's observation noise.
    pub observed: SequenceData<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T: Scalar = f64> {
    pub class_names: Vec<String>,
    pub examples: Vec<Example<T>>,
    pub folds: usize,
    pub noise_sd: T,
    pub alignment: Alignment,
}

impl<T: Scalar> Dataset<T> {
    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for e in &self.examples {
            counts[e.class] += 1;
        }
        counts
    }
}

/// Fold of the `index`-th example of a class with `count` examples: equal
/// consecutive blocks, the remainder going to the last fold.
pub fn fold_of(index: usize, count: usize, folds: usize) -> usize {
    let size = (count / folds).max(1);
    (index / size).min(folds - 1)
}

/// Rotates so the first clear displacement points along `+x` and scales into
/// `[0, 1] x [0, 1]`.
pub fn normalize_positions<T: Scalar>(points: &[DVector<T>]) -> Vec<DVector<T>> {
    let origin = points[0].clone();
    let reach = points.iter().map(|p| (p - &origin).norm()).fold(T::zero(), |a, b| a.max(b));
    let heading = points
        .iter()
        .map(|p| p - &origin)
        .find(|d| d.norm() > T::lit(0.1) * reach)
        .unwrap_or_else(|| DVector::from_vec(vec![T::one(), T::zero()]));
    let angle = heading[1].atan2(heading[0]);
    let (s, c) = (-angle).sin_cos();
    let rotated: Vec<DVector<T>> = points
        .iter()
        .map(|p| {
            let d = p - &origin;
            DVector::from_vec(vec![c * d[0] - s * d[1], s * d[0] + c * d[1]])
        })
        .collect();
    let lo = |k: usize| rotated.iter().map(|p| p[k]).fold(T::INFINITY, |a, b| a.min(b));
    let hi = |k: usize| rotated.iter().map(|p| p[k]).fold(T::NEG_INFINITY, |a, b| a.max(b));
    let (min_x, min_y) = (lo(0), lo(1));
    let extent = (hi(0) - min_x).max(hi(1) - min_y);
    let scale = if extent > T::zero() { T::one() / extent } else { T::one() };
    rotated
        .into_iter()
        .map(|p| DVector::from_vec(vec![(p[0] - min_x) * scale, (p[1] - min_y) * scale]))
        .collect()
}

/// Noise of the generating models, before normalization.
pub const GENERATING_Q_SCALE: f64 = 1e-4;

/// Bounds of the uniform state duration with mean `dwell`: roughly half to
/// one and a half times the mean.
pub fn duration_range<T: Scalar>(dwell: T) -> (usize, usize) {
    let mean = dwell.as_f64();
    let lo = ((mean / 2.0).floor() as usize).max(1);
    let hi = ((2.0 * mean).round() as usize).saturating_sub(lo).max(lo);
    (lo, hi)
}

/// Draws `per_class` trajectories per spec. Each state lasts a uniformly
/// drawn number of steps in [`duration_range`]. Deterministic in `seed`.
pub fn generate_dataset<T: Scalar>(
    specs: &[GestureSpec<T>],
    per_class: usize,
    noise_sd: T,
    folds: usize,
    seed: u64,
) -> Result<Dataset<T>> {
    if per_class == 0 {
        return Err(Error::InvalidArgument("per_class must be >= 1".into()));
    }
    if folds < 2 || per_class < folds {
        return Err(Error::InvalidArgument(format!(
            "need 2 <= folds <= per_class, got folds = {folds}, per_class = {per_class}"
        )));
    }
    if !(noise_sd >= T::zero()) {
        return Err(Error::InvalidArgument("noise_sd must be >= 0".into()));
    }
    let models = specs
        .iter()
        .map(|s| s.model(T::lit(GENERATING_Q_SCALE), T::lit(GENERATING_Q_SCALE)))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, usize)> = (0..specs.len()).flat_map(|c| (0..per_class).map(move |k| (c, k))).collect();
    let examples = jobs
        .par_iter()
        .map(|&(class, k)| -> Result<Example<T>> {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, (class * per_class + k) as u64));
            let spec = &specs[class];
            let (lo, hi) = duration_range(spec.dwell);
            let mut path = Vec::new();
            for state in 0..spec.num_hmm_states {
                let steps = rng.random_range(lo..=hi);
                path.extend(std::iter::repeat_n(state, steps));
            }
            let (_, latent) = model::sample_given_path(&models[class], &path, &mut rng)?;
            let positions: Vec<DVector<T>> = latent.continuous_path.iter().map(|x| x.rows(0, 2).into_owned()).collect();
            let clean = normalize_positions(&positions);
            let observed = clean.iter().map(|p| p + standard_normal::<T, _>(2, &mut rng) * noise_sd).collect();
            Ok(Example {
                class,
                fold: fold_of(k, per_class, folds),
                clean: SequenceData::new(clean)?.with_states(path.clone())?,
                observed: SequenceData::new(observed)?.with_states(path)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        class_names: specs.iter().map(|s| s.class_name.clone()).collect(),
        examples,
        folds,
        noise_sd,
        alignment: Alignment::FirstStroke,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassModel<T: Scalar = f64> {
    pub name: String,
    pub params: ModelParams<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification<T: Scalar = f64> {
    pub predicted: usize,
    /// Free-energy bound under each class model.
    pub bounds: Vec<T>,
    /// E-step sweeps under each class model.
    pub iterations: Vec<usize>,
}

/// Index of the highest score; equal scores go to the lexicographically
/// smallest name.
pub fn argmax_by_name<T: Scalar>(scores: &[T], names: &[&str]) -> usize {
    let mut best = 0;
    for k in 1..scores.len() {
        if scores[k] > scores[best] || (scores[k] == scores[best] && names[k] < names[best]) {
            best = k;
        }
    }
    best
}

/// Runs the E-step under every class model, each started from flat discrete
/// evidence, and picks the largest bound.
pub fn classify<T: Scalar>(
    models: &[ClassModel<T>],
    y: &SequenceData<T>,
    cfg: &TrainConfig<T>,
) -> Result<Classification<T>> {
    if models.is_empty() {
        return Err(Error::InvalidArgument("classification needs at least one model".into()));
    }
    let mut bounds = Vec::with_capacity(models.len());
    let mut iterations = Vec::with_capacity(models.len());
    for m in models {
        let (state, _) = variational::e_step(&m.params, y, &Init::flat(y.len(), m.params.num_states()), cfg.e_step_options())?;
        bounds.push(state.bound());
        iterations.push(state.iterations);
    }
    let names: Vec<&str> = models.iter().map(|m| m.name.as_str()).collect();
    Ok(Classification {
        predicted: argmax_by_name(&bounds, &names),
        bounds,
        iterations,
    })
}

/// A classifier's answer for one example.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prediction {
    pub class: usize,
    /// Inference iterations spent, if the classifier is iterative.
    pub iterations: Vec<usize>,
}

impl Prediction {
    pub fn label(class: usize) -> Self {
        Self {
            class,
            iterations: Vec::new(),
        }
    }
}

/// Rotation estimate of classification error.
#[derive(Debug, Clone, PartialEq)]
pub struct CvReport<T: Scalar = f64> {
    pub class_names: Vec<String>,
    /// Misclassified fraction of each class's held-out examples.
    pub per_class_error: Vec<T>,
    /// Binomial variance `p (1 - p) / n` of each per-class estimate.
    pub per_class_variance: Vec<T>,
    pub overall_error: T,
    pub overall_variance: T,
    /// Row is the true class, column the predicted one.
    pub confusion: Vec<Vec<usize>>,
    /// Error rate of each held-out fold.
    pub fold_errors: Vec<T>,
    /// Iterations reported by the classifier, over all held-out examples.
    pub iterations: Vec<usize>,
}

fn binomial<T: Scalar>(errors: usize, n: usize) -> (T, T) {
    if n == 0 {
        return (T::zero(), T::zero());
    }
    let n_t = T::from_usize(n).unwrap();
    let p = T::from_usize(errors).unwrap() / n_t;
    (p, p * (T::one() - p) / n_t)
}

/// Trains on all folds but one and classifies the held-out fold, rotating
/// through every fold. `trainer(class, examples)` fits one class;
/// `classifier(models, example)` labels one example.
pub fn cross_validate<T, M, Tr, Cl>(dataset: &Dataset<T>, trainer: Tr, classifier: Cl) -> Result<CvReport<T>>
where
    T: Scalar,
    M: Send + Sync,
    Tr: Fn(usize, &[&Example<T>]) -> Result<M> + Sync,
    Cl: Fn(&[M], &Example<T>) -> Result<Prediction> + Sync,
{
    let k = dataset.num_classes();
    let folds = dataset.folds;
    if folds < 2 {
        return Err(Error::InvalidArgument("need at least 2 folds".into()));
    }
    if let Some(c) = dataset.class_counts().iter().position(|&n| n == 0) {
        return Err(Error::EmptyClass(dataset.class_names[c].clone()));
    }
    let per_fold = (0..folds)
        .into_par_iter()
        .map(|fold| -> Result<Vec<(usize, Prediction)>> {
            let models = (0..k)
                .into_par_iter()
                .map(|class| {
                    let train: Vec<&Example<T>> = dataset
                        .examples
                        .iter()
                        .filter(|e| e.class == class && e.fold != fold)
                        .collect();
                    if train.is_empty() {
                        return Err(Error::EmptyClass(dataset.class_names[class].clone()));
                    }
                    trainer(class, &train)
                })
                .collect::<Result<Vec<M>>>()?;
            dataset
                .examples
                .par_iter()
                .filter(|e| e.fold == fold)
                .map(|e| classifier(&models, e).map(|p| (e.class, p)))
                .collect()
        })
        .collect::<Result<Vec<_>>>()?;

    let mut confusion = vec![vec![0usize; k]; k];
    let mut fold_errors = Vec::with_capacity(folds);
    let mut iterations = Vec::new();
    for results in &per_fold {
        let mut wrong = 0;
        for (truth, pred) in results {
            if pred.class >= k {
                return Err(Error::InvalidArgument(format!("predicted class {} out of range", pred.class)));
            }
            confusion[*truth][pred.class] += 1;
            wrong += usize::from(*truth != pred.class);
            iterations.extend_from_slice(&pred.iterations);
        }
        fold_errors.push(binomial::<T>(wrong, results.len()).0);
    }
    let mut per_class_error = Vec::with_capacity(k);
    let mut per_class_variance = Vec::with_capacity(k);
    let (mut wrong, mut total) = (0, 0);
    for (c, row) in confusion.iter().enumerate() {
        let n: usize = row.iter().sum();
        let e = n - row[c];
        let (p, v) = binomial(e, n);
        per_class_error.push(p);
        per_class_variance.push(v);
        wrong += e;
        total += n;
    }
    let (overall_error, overall_variance) = binomial(wrong, total);
    Ok(CvReport {
        class_names: dataset.class_names.clone(),
        per_class_error,
        per_class_variance,
        overall_error,
        overall_variance,
        confusion,
        fold_errors,
        iterations,
    })
}

/// Splits each sequence into `num_states` equal consecutive segments.
fn uniform_segments(len: usize, num_states: usize) -> Vec<usize> {
    (0..len).map(|t| (t * num_states / len).min(num_states - 1)).collect()
}

/// Mean of the gradient-estimated accelerations within each uniform segment,
/// and the mean squared deviation from those means.
fn segment_accelerations<T: Scalar>(
    sequences: &[&SequenceData<T>],
    num_states: usize,
    dt: T,
) -> Result<(Vec<DVector<T>>, Vec<Vec<DVector<T>>>, T)> {
    let inputs = sequences
        .iter()
        .map(|y| gradient_input_estimate(&y.observations, dt))
        .collect::<Result<Vec<_>>>()?;
    let m = sequences[0].obs_dim();
    let mut sums = vec![DVector::<T>::zeros(m); num_states];
    let mut counts = vec![0usize; num_states];
    for u in &inputs {
        for (t, s) in uniform_segments(u.len(), num_states).into_iter().enumerate() {
            sums[s] += &u[t];
            counts[s] += 1;
        }
    }
    let means: Vec<DVector<T>> = sums
        .into_iter()
        .zip(&counts)
        .map(|(s, &n)| s / T::from_usize(n.max(1)).unwrap())
        .collect();
    let mut spread = T::zero();
    let mut total = 0usize;
    for u in &inputs {
        for (t, s) in uniform_segments(u.len(), num_states).into_iter().enumerate() {
            spread += (&u[t] - &means[s]).norm_squared();
            total += m;
        }
    }
    Ok((means, inputs, spread / T::from_usize(total).unwrap()))
}

fn mean_len<T: Scalar>(sequences: &[&SequenceData<T>]) -> T {
    T::from_usize(sequences.iter().map(|y| y.len()).sum::<usize>()).unwrap()
        / T::from_usize(sequences.len()).unwrap()
}

/// Starting point for the coupled model of one class, taken from a fitted
/// decoupled model: its emission means become the input levels (scaled by
/// `dt` into velocity increments) and its transition structure is reused.
/// The state noise starts at the emission spread, the measurement noise at
/// `r_init`.
pub fn initial_mixed_model<T: Scalar>(hmm: &GaussianHmm<T>, dt: T, r_init: T) -> Result<ModelParams<T>> {
    let s = hmm.num_states();
    let spread = hmm.cov.trace() / T::from_usize(hmm.obs_dim()).unwrap();
    let q = (spread * dt * dt).max(T::lit(1e-8));
    let mut m = point_mass_model(dt, q, r_init, s)?;
    for i in 0..s {
        m.d[(2, i)] = hmm.means[(0, i)] * dt;
        m.d[(3, i)] = hmm.means[(1, i)] * dt;
    }
    m.pi = hmm.pi.clone();
    m.pi0 = hmm.pi0.clone();
    m.validate()?;
    Ok(m)
}

/// Starting point for the decoupled baseline of one class.
pub fn initial_gradient_hmm<T: Scalar>(
    sequences: &[&SequenceData<T>],
    num_states: usize,
    dt: T,
) -> Result<(GaussianHmm<T>, Vec<Vec<DVector<T>>>)> {
    if sequences.is_empty() {
        return Err(Error::InvalidArgument("need at least one training sequence".into()));
    }
    let (means, inputs, spread) = segment_accelerations(sequences, num_states, dt)?;
    let m = sequences[0].obs_dim();
    let dwell = (mean_len(sequences) / T::from_usize(num_states).unwrap()).max(T::lit(1.5));
    let mut pi0 = DVector::zeros(num_states);
    pi0[0] = T::one();
    let hmm = GaussianHmm {
        pi: left_to_right(num_states, T::one() - T::one() / dwell),
        pi0,
        means: DMatrix::from_fn(m, num_states, |r, c| means[c][r]),
        cov: DMatrix::identity(m, m) * spread.max(T::lit(1e-8)),
    };
    Ok((hmm, inputs))
}

/// Inputs of the point-mass model drive the velocity coordinates only.
pub fn velocity_input_matrix<T: Scalar>() -> DMatrix<T> {
    let mut b = DMatrix::zeros(4, 2);
    b[(2, 0)] = T::one();
    b[(3, 1)] = T::one();
    b
}

/// Positions measured from the first one, so that the coupled model does
/// not have to explain where a gesture starts.
pub fn relative_to_start<T: Scalar>(y: &SequenceData<T>) -> SequenceData<T> {
    let origin = y.observations.first().cloned().unwrap_or_else(|| DVector::zeros(0));
    SequenceData {
        observations: y.observations.iter().map(|o| o - &origin).collect(),
        true_states: y.true_states.clone(),
        true_x: None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkConfig<T: Scalar = f64> {
    pub per_class: usize,
    pub noise_sd: T,
    pub folds: usize,
    pub seed: u64,
    /// Fit models to the noise-free trajectories rather than the observed
    /// ones. Testing is always on the observed sequences.
    pub train_on_clean: bool,
    /// E-step and EM settings of the coupled classifier. `A` and `C` are
    /// known and frozen, and inputs act on velocities only.
    pub train: TrainConfig<T>,
    pub hmm_max_iter: usize,
    pub hmm_tol: T,
}

impl<T: Scalar> Default for BenchmarkConfig<T> {
    fn default() -> Self {
        Self {
            per_class: 50,
            noise_sd: T::lit(0.01),
            folds: 4,
            seed: 0,
            train_on_clean: false,
            train: TrainConfig {
                max_em_iter: 30,
                em_tol: T::lit(1e-5),
                update_mask: UpdateMask::freezing("A,C").expect("valid names"),
                // Positions live in the unit square; finer than 1% of it is
                // below any plausible pointing resolution.
                covariance_floor: T::lit(1e-4),
                input_matrix: Some(velocity_input_matrix()),
                ..TrainConfig::default()
            },
            hmm_max_iter: 100,
            hmm_tol: T::lit(1e-6),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkResult<T: Scalar = f64> {
    pub mixed: CvReport<T>,
    pub gradient: CvReport<T>,
    /// EM bound history of every coupled model fit, ordered by held-out
    /// fold and then class. Keyed by class index.
    pub bound_histories: Vec<(usize, Vec<T>)>,
}

fn training_sequence<T: Scalar>(e: &Example<T>, clean: bool) -> &SequenceData<T> {
    if clean {
        &e.clean
    } else {
        &e.observed
    }
}

/// Baum-Welch fit of the decoupled model to one class's sequences.
pub fn fit_gradient_hmm<T: Scalar>(
    sequences: &[&SequenceData<T>],
    spec: &GestureSpec<T>,
    cfg: &BenchmarkConfig<T>,
) -> Result<GaussianHmm<T>> {
    let (init, inputs) = initial_gradient_hmm(sequences, spec.num_hmm_states, spec.dt)?;
    Ok(GaussianHmm::fit(&inputs, &init, cfg.hmm_max_iter, cfg.hmm_tol, cfg.train.covariance_floor)?.model)
}

/// Runs both classifiers through the same rotation on one dataset.
pub fn run_benchmark<T: Scalar>(
    specs: &[GestureSpec<T>],
    dataset: &Dataset<T>,
    cfg: &BenchmarkConfig<T>,
) -> Result<BenchmarkResult<T>> {
    if specs.len() != dataset.num_classes() {
        return Err(Error::dims("gesture specs", dataset.num_classes(), specs.len()));
    }
    let names: Vec<&str> = dataset.class_names.iter().map(String::as_str).collect();
    let histories = Mutex::new(Vec::new());

    let mixed = cross_validate(
        dataset,
        |class, examples| {
            let seqs: Vec<&SequenceData<T>> = examples.iter().map(|e| training_sequence(e, cfg.train_on_clean)).collect();
            let hmm = fit_gradient_hmm(&seqs, &specs[class], cfg)?;
            let init = initial_mixed_model(&hmm, specs[class].dt, T::lit(1e-4))?;
            let owned: Vec<SequenceData<T>> = seqs.into_iter().map(relative_to_start).collect();
            let fit = em_train(&owned, &init, &cfg.train)?;
            let held_out = (0..dataset.folds).find(|&f| examples.iter().all(|e| e.fold != f));
            histories.lock().expect("history lock").push((held_out, class, fit.bound_history));
            Ok(ClassModel {
                name: dataset.class_names[class].clone(),
                params: fit.params,
            })
        },
        |models, e| {
            let c = classify(models, &relative_to_start(&e.observed), &cfg.train)?;
            Ok(Prediction {
                class: c.predicted,
                iterations: c.iterations,
            })
        },
    )?;

    let gradient = cross_validate(
        dataset,
        |class, examples| {
            let seqs: Vec<&SequenceData<T>> = examples.iter().map(|e| training_sequence(e, cfg.train_on_clean)).collect();
            let hmm = fit_gradient_hmm(&seqs, &specs[class], cfg)?;
            Ok((hmm, specs[class].dt))
        },
        |models, e| {
            let scores = models
                .iter()
                .map(|(hmm, dt)| hmm.log_likelihood(&gradient_input_estimate(&e.observed.observations, *dt)?))
                .collect::<Result<Vec<T>>>()?;
            Ok(Prediction::label(argmax_by_name(&scores, &names)))
        },
    )?;

    let mut histories = histories.into_inner().expect("history lock");
    histories.sort_by_key(|&(fold, class, _)| (fold, class));
    Ok(BenchmarkResult {
        mixed,
        gradient,
        bound_histories: histories.into_iter().map(|(_, class, h)| (class, h)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn point_mass_discretization() {
        let m = point_mass_model(0.1, 1.0, 1.0, 3).unwrap();
        let mut want = DMatrix::identity(4, 4);
        want[(0, 2)] = 0.1;
        want[(1, 3)] = 0.1;
        assert_eq!(m.a, want);
        assert_eq!(m.c.columns(0, 2), DMatrix::<f64>::identity(2, 2));
        assert_eq!(m.c.columns(2, 2), DMatrix::<f64>::zeros(2, 2));
        assert_eq!(m.pi0, DVector::from_vec(vec![1.0, 0.0, 0.0]));
    }

    #[test]
    fn unforced_point_mass_stays_put() {
        let m = point_mass_model(0.1, 1e-12, 1e-12, 1).unwrap();
        let (y, _) = model::sample(&m, 20, 3).unwrap();
        assert!(y.observations.iter().all(|p| p.amax() < 1e-4));
    }

    #[test]
    fn constant_acceleration_integrates_linearly() {
        let spec = GestureSpec {
            class_name: "push".into(),
            num_hmm_states: 1,
            stroke_accelerations: vec![[2.0, -1.0]],
            dwell: 5.0,
            dt: 0.1,
        };
        let m = spec.model(1e-12, 1e-12).unwrap();
        let (_, latent) = model::sample(&m, 30, 1).unwrap();
        for (t, x) in latent.continuous_path.iter().enumerate() {
            let steps = (t + 1) as f64;
            assert!((x[2] - 2.0 * 0.1 * steps).abs() < 1e-4);
            assert!((x[3] + 0.1 * steps).abs() < 1e-4);
        }
    }

    #[test]
    fn left_to_right_has_no_backward_moves() {
        let pi: DMatrix<f64> = left_to_right(4, 0.7);
        for i in 0..4 {
            for j in 0..4 {
                if i < j || i > j + 1 {
                    assert_eq!(pi[(i, j)], 0.0);
                }
            }
            assert_relative_eq!(pi.column(i).sum(), 1.0);
        }
    }

    #[test]
    fn folds_are_blocks_with_remainder_last() {
        let f: Vec<usize> = (0..10).map(|k| fold_of(k, 10, 4)).collect();
        assert_eq!(f, vec![0, 0, 1, 1, 2, 2, 3, 3, 3, 3]);
    }

    #[test]
    fn normalization_fits_the_unit_square() {
        let pts: Vec<DVector<f64>> = (0..10)
            .map(|t| DVector::from_vec(vec![-3.0 * t as f64, 5.0 + 0.5 * (t * t) as f64]))
            .collect();
        let n = normalize_positions(&pts);
        assert!(n.iter().all(|p| p.iter().all(|&v| (-1e-12..=1.0 + 1e-12).contains(&v))));
        let extent = n.iter().map(|p| p[0]).fold(0.0, f64::max).max(n.iter().map(|p| p[1]).fold(0.0, f64::max));
        assert_relative_eq!(extent, 1.0, epsilon = 1e-12);
        // The first point beyond a tenth of the reach is t = 2; it lies
        // along +x from the start after rotation.
        assert!(n[2][0] > n[0][0]);
        assert_relative_eq!(n[2][1], n[0][1], epsilon = 1e-12);
    }

    #[test]
    fn ties_go_to_the_smaller_name() {
        assert_eq!(argmax_by_name(&[1.0, 1.0, 0.5], &["b", "a", "c"]), 1);
        assert_eq!(argmax_by_name(&[1.0, 2.0], &["b", "a"]), 1);
        assert_eq!(argmax_by_name(&[3.0], &["z"]), 0);
    }

    #[test]
    fn default_specs_are_valid() {
        let specs = default_specs();
        let states: Vec<usize> = specs.iter().map(|s| s.num_hmm_states).collect();
        assert_eq!(states, vec![8, 6, 4, 6]);
        for s in &specs {
            s.validate().unwrap();
        }
    }
}
