//! Q-curvature of even-dimensional Riemannian metrics (n = 2, 4, 6).
//!
//! The engine evaluates curvature data through truncated multivariate
//! Taylor arithmetic ("jets"), assembles the Q-curvature both from the
//! holographic volume-coefficient formula and from the direct curvature
//! expressions, and verifies at machine precision the identity web that
//! relates them: Pfaffian/σ_k identities in the conformally flat case,
//! divergence structure of the adjoint expansion operators, and global
//! conformal invariants on tori.

#![forbid(unsafe_code)]

pub mod cli;
pub mod curvature;
pub mod error;
pub mod expr;
pub mod holographic;
pub mod jets;
pub mod models;
pub mod quadrature;
pub mod report;
pub mod tensor;
pub mod tolerances;
pub mod verify;

pub use error::{Error, Result};
