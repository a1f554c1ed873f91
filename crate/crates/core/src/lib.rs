//! Wind-tree billiards: exact counting constants, square-tiled surfaces and
//! billiard dynamics.
//!
//! The crate splits into largely independent layers:
//!
//! - [`exactmath`]: big rationals and the `coeff / pi^2` value type every
//!   counting constant lives in.
//! - [`identities`]: brute-force vs closed-form evaluation of the
//!   hypergeometric binomial sums the constants reduce to.
//! - [`sv_constants`]: configuration counts, lifting multipliers and the
//!   assembled quadratic-growth constants `c(m)`, `c_area(m)` and the
//!   diffusion rate `delta(m)`.
//! - [`surface`]: obstacle tables and the four-copy square-tiled translation
//!   surface with its deck group.
//! - [`cylinders`]: per-direction cylinder decompositions, good/bad/non-closing
//!   classification and the counting functions.
//! - [`dynamics`]: exact and floating-point billiard flow in the infinite
//!   periodic table (closure oracle, diffusion, recurrence).

pub mod cylinders;
pub mod dynamics;
pub mod exactmath;
pub mod identities;
pub mod surface;
pub mod sv_constants;

/// Cap the global worker pool; call once before any parallel sweep.
pub fn build_thread_pool(threads: usize) -> Result<(), rayon::ThreadPoolBuildError> {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()
}
