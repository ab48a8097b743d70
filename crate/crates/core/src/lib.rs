//! Altitude-robust single-image super-resolution for drone imagery.
//!
//! The crate covers the whole experiment flow on synthetic multi-altitude
//! data: scene simulation ([`skysim`]), LR/HR registration ([`register`]) and
//! color correction ([`colorfix`]), quality metrics ([`quality`]), a residual
//! CNN with altitude-aware layers ([`srnet`]) built on a small reverse-mode
//! autodiff core ([`numcore`]), one-shot first-order MAML ([`metalearn`]) and
//! the orchestration used by the `altisr` CLI ([`harness`]).

pub mod colorfix;
pub mod error;
pub mod harness;
pub mod imageops;
pub mod metalearn;
pub mod numcore;
pub mod par;
pub mod quality;
pub mod register;
pub mod rng;
pub mod skysim;
pub mod srnet;

pub use error::{Error, Result};
pub use imageops::{ColorSpace, Image, Scale};
pub use numcore::{AdamState, ParamSet, Tape, Tensor, Var};
