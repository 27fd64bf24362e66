//! Pricing laboratory for participating life-insurance policies with a
//! surrender option (PPSO).
//!
//! The contract credits a guaranteed minimum rate to the policy reserve,
//! shares portfolio returns above a target buffer ratio, pays a bonus on
//! surrender or maturity when the holder's portfolio share outperforms the
//! reserve, and terminates early if the portfolio falls below the reserve.
//! After a change of numeraire the whole problem collapses to an optimal
//! stopping problem for the one-dimensional bonus distribution rate
//! `X = ln(A/R)`, absorbed at zero.
//!
//! Modules:
//! - [`model`]: contract mechanics and every closed-form quantity
//!   (payoff, drift, generator, fee-case classification).
//! - [`engine`]: recombining binomial tree rooted at `x_alpha` for headline
//!   prices, plus a rectangular-grid backward induction that values every
//!   `(t, x)` node for boundary mapping.
//! - [`boundary`]: extraction of the optimal surrender boundary `c(x)`, the
//!   time-parametrised boundaries `b1`, `b2`, `b3`, and validation of their
//!   predicted geometry.
//! - [`montecarlo`]: reproducible path simulation under both measures,
//!   strategy evaluation against extracted boundaries, and pathwise
//!   flow-inequality checks.

pub mod boundary;
pub mod engine;
pub mod model;
pub mod montecarlo;

use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A contract or market parameter violates its admissible range.
    #[error("parameter `{name}` violates invariant: {constraint}")]
    InvalidParameter {
        name: &'static str,
        constraint: String,
    },
    /// An operation was called outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),
    /// A lattice specification is inconsistent or under-resolved.
    #[error("lattice spec error: {0}")]
    Spec(String),
    /// A numerical routine failed to converge or bracket.
    #[error("numerical error: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
