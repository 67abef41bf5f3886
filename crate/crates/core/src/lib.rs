//! Link-level simulator for grant-free machine-type uplink access.
//!
//! The receiver jointly estimates channels, detects device activity and
//! decodes LDPC-coded data by bilinear generalized approximate message
//! passing (GAMP) on the factor graph of `Y = H X + W`, with dynamic
//! message scheduling (activity-based and residual-based policies) that
//! refreshes only a subset of device nodes per iteration.
//!
//! Crate layout:
//!
//! - [`config`]: scenario dimensions, priors and receiver knobs.
//! - [`scenario`]: synchronous/asynchronous frame, channel and noise generation.
//! - [`ldpc`]: rate-1/2 LDPC construction, encoding, log-domain sum-product decoding.
//! - [`denoisers`]: scalar posterior computations shared by the receiver and
//!   the state-evolution recursion.
//! - [`engine`]: the iterative receiver itself.
//! - [`scheduling`]: update-set policies (full, activity, residual, oracle).
//! - [`baselines`]: parallel full-update and oracle-activity reference receivers.
//! - [`se`]: scalar state-evolution recursion predicting per-iteration MSE.
//! - [`metrics`]: NMSE, frame/activity error rates and the per-iteration
//!   operation-count model.
//! - [`harness`]: Monte Carlo experiment runner and CSV emission.

pub mod baselines;
pub mod config;
pub mod denoisers;
pub mod engine;
pub mod harness;
pub mod ldpc;
pub mod metrics;
pub mod quadrature;
pub mod scenario;
pub mod scheduling;
pub mod se;

mod error;

pub use error::Error;

/// Dense complex matrix used for channels, transmit frames, observations
/// and all per-edge mean arrays.
pub type ComplexMat = ndarray::Array2<num_complex::Complex64>;

/// Dense real matrix used for variance and probability arrays.
pub type RealMat = ndarray::Array2<f64>;

pub type Result<T> = std::result::Result<T, Error>;
