//! Mixed-state dynamic Bayesian networks: a hidden Markov model whose
//! outputs drive a linear dynamic system.
//!
//! The crate provides exact inference in each sub-chain ([`lds`], [`hmm`]),
//! the structured variational E-step that couples them ([`variational`]),
//! generalized-EM learning ([`learning`]), exact and greedy reference
//! decoders ([`baselines`]), a synthetic gesture benchmark ([`gestures`]) and
//! text serialization ([`io`]).
//!
//! All numerics are generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix the scalar to `f64` or `f32`.

// `!(x > 0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::type_complexity)]

pub mod baselines;
pub mod error;
pub mod gestures;
pub mod hmm;
pub mod io;
pub mod learning;
pub mod lds;
pub mod linalg;
pub mod model;
pub mod scalar;
pub mod stats;
pub mod variational;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type ModelParamsF64 = model::ModelParams<f64>;
pub type ModelParamsF32 = model::ModelParams<f32>;
pub type SequenceDataF64 = model::SequenceData<f64>;
pub type SequenceDataF32 = model::SequenceData<f32>;
pub type SmootherResultF64 = lds::SmootherResult<f64>;
pub type SmootherResultF32 = lds::SmootherResult<f32>;
pub type HmmPosteriorF64 = hmm::HmmPosterior<f64>;
pub type HmmPosteriorF32 = hmm::HmmPosterior<f32>;
pub type VariationalStateF64 = variational::VariationalState<f64>;
pub type VariationalStateF32 = variational::VariationalState<f32>;
pub type PosteriorStatsF64 = variational::PosteriorStats<f64>;
pub type PosteriorStatsF32 = variational::PosteriorStats<f32>;
