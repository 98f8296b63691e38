//! Adversarial k-independent hash distributions, baseline hash families and
//! an instrumented linear-probing table.

pub mod adv_lp;
pub mod adv_minwise;
pub mod error;
pub mod families;
pub mod harness;
pub mod indep_verify;
pub mod ms_attack;
pub mod probing;
pub mod rational;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
