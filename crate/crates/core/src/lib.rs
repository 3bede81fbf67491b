//! Learning-based LQR control of unknown continuous-time LTI plants under a
//! two-phase adversary (eavesdropping, then covert attack).
//!
//! The designer learns the optimal gain from exploration data with off-policy
//! policy iteration. Optionally the exploration is camouflaged by a bounded,
//! state-dependent coupling that the designer measures and compensates for,
//! while an eavesdropper fitting a model to the same data is misled. The
//! model-based Newton–Kleinman solve in [`numerics`] is the ground truth for
//! every learned gain.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adversary;
pub mod benchmark;
pub mod data;
pub mod detector;
pub mod error;
pub mod learner;
pub mod numerics;
pub mod plant;
pub mod plots;
pub mod scenario;
mod textfmt;

pub use error::{Error, Result};
pub use textfmt::{read_matrix_file, write_matrix_file};
