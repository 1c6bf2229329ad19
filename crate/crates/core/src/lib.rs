//! Reduced-order locomotion planning and whole-body control for a planar biped.
//!
//! The crate is organized in three layers:
//!
//! - Reduced-order models (ROM): [`rom`] holds the linear-inverted-pendulum
//!   family (flows, impact maps, step-to-step maps), [`planner`] the
//!   foot-placement laws and gain synthesis, and [`rom_sim`] a closed-loop
//!   hybrid simulator at the ROM level.
//! - Full-model machinery: [`rigid_body`] implements planar floating-base
//!   dynamics (CRBA, RNEA, Jacobians), [`contact`] the holonomic contact
//!   stacks, wrench map, and friction feasibility, and [`outputs`] the output
//!   embedding that turns discrete planner results into task references.
//! - Controllers and simulation: [`wbc`] provides four interchangeable
//!   whole-body controllers backed by a dense QP solver, and [`hybrid_sim`]
//!   runs the full planner + embedding + controller pipeline on the planar
//!   biped.

pub mod contact;
pub mod hybrid_sim;
pub mod outputs;
pub mod planar;
pub mod planner;
pub mod rigid_body;
pub mod rom;
pub mod rom_sim;
pub mod selftest;
pub mod wbc;

mod error;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
