//! Reference decoders and classifiers the variational method is compared
//! against: the greedy truncated Viterbi pass, brute-force enumeration of
//! discrete paths, and the decoupled gradient-input HMM.

pub mod exact;
pub mod gaussian_hmm;
pub mod gradient;
pub mod greedy;
pub mod scenario;

pub use exact::{exact_posterior, exact_posterior_with_cap, ExactPosterior, DEFAULT_PATH_CAP};
pub use gaussian_hmm::GaussianHmm;
pub use gradient::{gradient, gradient_input_estimate};
pub use greedy::{greedy_truncated_viterbi, greedy_with_costs, path_cost, trellis_table, ArcCosts, GreedyResult};
pub use scenario::TwoLevelScenario;
