//! Monte-Carlo machinery for lower bounds on FDR/FNR tradeoffs in
//! multiple testing.
//!
//! A testing problem is a pair `(P_n, f)`: a base vector `W ~ P_n` and a
//! non-decreasing transform `f` applied to the signal coordinates, so the
//! observed statistics are `X_i = W_i` for nulls and `X_i = f(W_i)` for
//! signals. Five concrete families are implemented ([`model`]): iid
//! Gaussian location, iid half-normal scale, a doubly-spiked dependent
//! Gaussian, a grouped (signal-coupled) Gaussian, and the Lehmann
//! p-value alternative.
//!
//! On top of the models sit:
//!
//! * [`orderstats`] — order-statistic extraction, Monte-Carlo expected
//!   order statistics, the `sqrt(2 log(n/k))` Gaussian asymptotic, the
//!   Gordon half-normal upper bound, and the concentration radius
//!   `sqrt(2 log(2/eps))`.
//! * [`proxies`] — the derandomized discovery proxies `k-*`, `k+*`, the
//!   false-discovery proxies `l-*`, `l+*`, the four FDP*/FNP* ratios,
//!   and the constant `c0(eps)` that turns them into FDR/FNR lower
//!   bounds valid for every (alpha, beta)-controlled top-K procedure.
//! * [`procedures`] — top-K rules, Benjamini-Hochberg, Monte-Carlo
//!   FDR/FNR estimation, and the discovery-band probability check.
//! * [`bounds`] — closed-form feasibility predicates and signal-strength
//!   lower bounds for the five model families.
//! * [`frontier`] — the end-to-end experiment: FDR grid, lower-bound FNR
//!   curve by proxy inversion, BH tradeoff curve, and the constrained
//!   least-squares calibration constant.
//!
//! All stochastic entry points take an explicit `master_seed`; replicate
//! `r` draws from a substream derived deterministically from
//! `(master_seed, r)`, so results are byte-identical across thread
//! counts.

pub mod bounds;
pub mod error;
pub mod frontier;
pub mod model;
pub mod orderstats;
pub mod procedures;
pub mod proxies;
pub mod rng;

pub use error::{Error, Result};
pub use model::{ModelSpec, SampleBatch, SignalLayout};
