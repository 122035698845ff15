//! Simulation and learning toolkit for open quantum system dynamics.
//!
//! The crate has two halves. The physics half generates ground-truth
//! trajectories of small open quantum systems by integrating master
//! equations in GKSL form, including a driven two-level system with a
//! time-dependent decay rate and a two-qubit model whose reduced dynamics
//! show environment back-action. The learning half trains a stacked GRU
//! network either to predict the state sequence directly or to emit the
//! operators of a master equation (recurrent Lindblad operators plus a
//! Lamb-shift correction) whose one-step integration residual is minimized
//! against the data.
//!
//! Modules:
//! - [`linalg`]: dense complex matrices, Hermitian eigensolver, matrix
//!   exponential. Everything here is sized for dimensions ≤ 16.
//! - [`dynamics`]: density matrices, Lindblad models, RK4 ground truth,
//!   partial trace, trace distance, random state sampling.
//! - [`neural`]: from-scratch two-layer GRU with a linear head,
//!   backpropagation through time, Adam.
//! - [`qrn`]: complex-matrix encoding, density post-processing, the
//!   network-parameterized Liouvillian, training costs, rollouts.
//! - [`experiments`]: end-to-end experiment runners with desk-scale
//!   defaults.
//! - [`io`]: text dataset and checkpoint formats with exact round-trips.
//! - [`cli`]: the generate/train/predict/evaluate subcommands behind the
//!   `qrn` binary.

#![allow(clippy::needless_range_loop)]

pub mod cli;
pub mod dynamics;
pub mod experiments;
pub mod io;
pub mod linalg;
pub mod neural;
pub mod qrn;
