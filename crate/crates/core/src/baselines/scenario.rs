//! A three-step scalar problem on which the greedy pass goes wrong.
//!
//! `A = C = 1`, inputs `D = [-1, +1]`, `Q = k R`, and the observations
//! `{0, 0, -5}` were produced by the input sequence `{-1, -1, -1}`. With
//! `k = 0` and unit measurement variance every arc cost is an integer.

use nalgebra::{DMatrix, DVector};

use crate::baselines::greedy::ArcCosts;
use crate::error::{Error, Result};
use crate::model::{ModelParams, SequenceData};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoLevelScenario<T: Scalar = f64> {
    /// State-noise to measurement-noise ratio.
    pub k: T,
    /// Measurement variance.
    pub r: T,
    /// Bias of the transition matrix toward staying.
    pub eps: T,
}

impl<T: Scalar> TwoLevelScenario<T> {
    pub fn new(k: T, r: T, eps: T) -> Result<Self> {
        if !(k >= T::zero()) || !(r > T::zero()) || !(eps >= T::zero()) {
            return Err(Error::InvalidArgument("need k >= 0, R > 0 and eps >= 0".into()));
        }
        Ok(Self { k, r, eps })
    }

    /// Unit measurement variance without state noise (integer costs),
    /// `R = 0.5` otherwise.
    pub fn default_r(k: T) -> T {
        if k == T::zero() {
            T::one()
        } else {
            T::lit(0.5)
        }
    }

    pub fn observations() -> SequenceData<T> {
        SequenceData::from_scalars(&[T::zero(), T::zero(), T::lit(-5.0)]).expect("three scalars")
    }

    /// State `0` emits `-1`, state `1` emits `+1`.
    pub fn generating_path() -> Vec<usize> {
        vec![0, 0, 0]
    }

    pub fn input_levels() -> [T; 2] {
        [-T::one(), T::one()]
    }

    fn build(&self, pi: DMatrix<T>) -> ModelParams<T> {
        let [lo, hi] = Self::input_levels();
        ModelParams {
            a: DMatrix::from_element(1, 1, T::one()),
            c: DMatrix::from_element(1, 1, T::one()),
            d: DMatrix::from_row_slice(1, 2, &[lo, hi]),
            q: DMatrix::from_element(1, 1, self.k * self.r),
            r: DMatrix::from_element(1, 1, self.r),
            pi,
            pi0: DVector::from_element(2, T::lit(0.5)),
        }
    }

    /// The model with `Pi = [[1/2 + eps, 1/2 - eps], [1/2 - eps, 1/2 + eps]]`.
    /// Needs `eps <= 1/2`; with `k = 0` it is only fit for filtering.
    pub fn model(&self) -> Result<ModelParams<T>> {
        let half = T::lit(0.5);
        if self.eps > half {
            return Err(Error::InvalidArgument(format!(
                "eps = {} does not give a stochastic transition matrix",
                self.eps
            )));
        }
        let pi = DMatrix::from_row_slice(2, 2, &[half + self.eps, half - self.eps, half - self.eps, half + self.eps]);
        let m = self.build(pi);
        m.validate_for_filtering()?;
        Ok(m)
    }

    /// Linear-Gaussian part only; transition preferences come from
    /// [`Self::arc_costs`], so any `eps` is allowed.
    pub fn filter_model(&self) -> ModelParams<T> {
        self.build(DMatrix::from_element(2, 2, T::lit(0.5)))
    }

    pub fn arc_costs(&self) -> ArcCosts<T> {
        ArcCosts::linearized(2, self.eps)
    }
}
