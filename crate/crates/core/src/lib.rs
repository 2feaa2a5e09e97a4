//! Quality-diversity optimization over generic dissimilarity spaces.
//!
//! The toolkit discretizes an arbitrary space (anything with a symmetric,
//! nondegenerate pairwise dissimilarity) into cells via diverse landmarks,
//! then runs a Go-Explore loop that balances exploration and exploitation
//! using magnitude weightings of finite metric spaces. The number of
//! expeditions per epoch is sized with coupon-collector bounds, local probes
//! are screened with a linear RBF surrogate and Pareto domination, and runs
//! are scored with (weighted) quality-diversity metrics.
//!
//! Module map:
//!
//! * [`magnitude`] — similarity matrices, weightings, magnitude, diversity,
//!   scale cutoffs.
//! * [`discretize`] — diverse landmark generation and the rank-K cell hash.
//! * [`coupon`] — expected partial coupon-collection times and bounds.
//! * [`surrogate`] — linear radial-basis-function interpolation.
//! * [`engine`] — the full Go-Explore loop and a pure-exploration baseline.
//! * [`problems`] — built-in objectives, dissimilarities, and generators.
//! * [`metrics`] — post-hoc QD / weighted-QD scoring of run histories.

pub mod coupon;
pub mod discretize;
pub mod engine;
mod lapack;
pub mod magnitude;
pub mod metrics;
pub mod problems;
pub mod surrogate;

pub use discretize::{CellId, LandmarkSet};
pub use engine::{Algorithm, EngineConfig, HistoryEntry, RunOutput};
pub use problems::Problem;

/// Square root of machine epsilon, the relative tolerance used by the
/// bisection cutoffs and symmetry checks throughout the crate.
#[inline]
pub(crate) fn sqrt_eps() -> f64 {
    f64::EPSILON.sqrt()
}
