//! Certification and synthesis for linear parameter-varying systems whose
//! scheduling parameters are piecewise constant and jump at Poisson times.
//!
//! The crate is organised bottom-up:
//!
//! - [`polyalg`]: polynomial and polynomial-matrix algebra with exact box
//!   integration;
//! - [`sosprog`]: sum-of-squares programs over polynomial matrix unknowns,
//!   compiled to block-diagonal semidefinite programs;
//! - [`sdpsolve`]: the SDP model, a dense homogeneous self-dual interior
//!   point solver and SDPA sparse file I/O;
//! - [`analysis`]: mean-square stability, L2-gain and state-feedback
//!   synthesis programs, controller extraction and grid validation;
//! - [`simulate`]: Monte Carlo simulation of the jump process;
//! - [`cli`]: problem files, reports and the command implementations behind
//!   the `lpvjump` binary.

pub mod analysis;
pub mod cli;
pub mod polyalg;
pub mod sdpsolve;
pub mod simulate;
pub mod sosprog;
