//! Optimality criteria for probabilistic numerical methods.
//!
//! The crate scores experiments (choices of information about an unknown
//! state) under several criteria and compares the resulting optimal sets:
//!
//! - Bayes risk of a decision rule and the Bayes-decision-theoretic (BDT)
//!   criterion, see [`decision`] and [`criteria::bdt_criterion`];
//! - the alphabet criteria (A, c, E, D) of a Gaussian posterior covariance;
//! - the expected Kullback-Leibler information gain;
//! - the BPN criterion, the prior expectation of the loss between the true
//!   state and an independent posterior draw.
//!
//! Three case studies are built on top: Wiener-measure quadrature
//! ([`quadrature`]), a finite-state engine with the counterexample in which
//! the BPN and BDT optimal sets differ ([`discrete`]), and sequential design
//! of Laplacian observations for an elliptic PDE on the unit square
//! ([`pde`]).

// `!(x > 0.0)` is the NaN-rejecting form used throughout for validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod criteria;
pub mod decision;
pub mod discrete;
mod error;
pub mod estimate;
pub mod gaussian;
pub mod linalg;
pub mod pde;
pub mod quadrature;
pub mod rng;

pub use error::{Error, Result};
