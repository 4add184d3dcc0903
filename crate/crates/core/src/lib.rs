//! Desk-scale laboratory for the adversarial game between a reasoning-step
//! generator and a step-correctness detector.
//!
//! The crate provides:
//! - exact payoff/utility computation for the finite general-sum game
//!   ([`game`]),
//! - KL/entropy-regularized utilities with closed-form Gibbs best
//!   responses and a best-response equilibrium solver ([`regularization`]),
//! - projected first-order game dynamics (GDA, optimistic GDA,
//!   extra-gradient) with convergence diagnostics ([`dynamics`]),
//! - sampled PPO-style tabular training with alternation and replay
//!   ([`rl`]),
//! - a rule-based step-correctness oracle over token sequences and a mini
//!   expression grammar ([`oracle`]),
//! - a configuration-driven CLI (the `prmlab` binary) binding everything
//!   into reproducible experiments.

pub mod config;
pub mod dynamics;
pub mod error;
pub mod game;
pub mod io;
pub mod oracle;
pub mod regularization;
pub mod rl;

pub use error::{Error, Result};
