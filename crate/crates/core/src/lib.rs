//! Bayesian spatially varying coefficient (SVC) regression.
//!
//! The response at location `s` is modelled as
//! `Y(s) = sum_r X_r(s) w_r(s) + eps(s)`, where each coefficient surface
//! `w_r` has a squared-exponential Gaussian process prior and
//! `eps ~ N(0, tausq)`. Posterior draws come from a Gibbs sampler that
//! represents each surface by its values at `m` knots (a subset Gaussian
//! process) and tunes the range-parameter proposals with robust adaptive
//! Metropolis.
//!
//! Modules, bottom up:
//! - [`covkernel`]: distances, kernel matrices, Cholesky, MVN primitives
//! - [`ram`]: bounded random-walk proposals and RAM adaptation
//! - [`knots`]: knot selection
//! - [`gibbs`]: the sampler
//! - [`dataio`]: CSV ingestion, sample persistence, summaries, prediction
//! - [`simlab`]: synthetic data, error metrics, timing

pub mod covkernel;
pub mod dataio;
pub mod error;
pub mod gibbs;
pub mod knots;
pub mod ram;
pub mod simlab;

pub use covkernel::{CholFactor, CoordMatrix, CorrMatrix, SqDistMatrix};
pub use dataio::{Dataset, SummaryTable};
pub use error::{Result, SvcError};
pub use gibbs::{ChainState, InvGamma, PosteriorSamples, PriorSpec, RunConfig, StartValues};
pub use knots::KnotSet;
pub use ram::{BoundedParam, RamState};
pub use simlab::{MetricsReport, SimDesign, TimingReport};
