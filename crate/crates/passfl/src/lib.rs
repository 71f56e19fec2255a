//! Joint pinching-antenna placement and client-sampling optimization for
//! straggler-limited synchronous federated learning.
//!
//! A pinching antenna activated at position `x` along a waveguide reshapes
//! every client's uplink latency. Synchronous rounds sample `K` clients with
//! replacement from a distribution `q` and wait for the slowest draw, so the
//! expected round time `f(q, x)` is a maximum order statistic; non-IID data
//! enter through a convergence factor `g(q)`. This crate minimizes the
//! wall-clock objective `J(q, x) = f(q, x) g(q)`:
//!
//! - [`geometry`]: link geometry, SNR, latency `t_i(x)` and its derivative;
//! - [`order_stats`]: the exact straggler functional, its gradient, Hessian,
//!   straggler pmf, and a Monte Carlo oracle;
//! - [`convergence`]: the round-complexity constants and `g(q)`;
//! - [`participation`]: the inner simplex problem, KKT diagnostics, latency
//!   classes, the scalar two-class solver, and the collapse threshold;
//! - [`placement`]: breakpoint enumeration and the global breakpoint-and-root
//!   placement search;
//! - [`scenario`]: scenario files and seeded scenario generation;
//! - [`sim`]: round simulation and the experiment suites.

pub mod convergence;
pub mod error;
pub mod geometry;
pub mod order_stats;
pub mod participation;
pub mod placement;
pub mod rng;
pub mod scenario;
pub mod sim;

pub use error::{Error, Result};
