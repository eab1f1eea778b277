//! Roweis discriminant subspaces for 3D skeletal action recognition.
//!
//! The crate is organised as a pipeline:
//!
//! * [`skeleton`] normalises raw joint frames (hip translation, shoulder
//!   alignment, scale removal, joint selection) and vectorises them.
//! * [`rda`] learns a pose-discriminating subspace from the pencil of the two
//!   Roweis matrices; [`geigen`] is the dense symmetric-definite solver behind it.
//! * [`pose`] recognises per-frame poses by nearest projected class mean and
//!   filters transition frames with a windowed rule.
//! * [`hmm`] trains one discrete HMM per action and classifies pose sequences.
//! * [`dataset`] reads the line-delimited interchange format, generates
//!   synthetic data and builds leave-one-person-out folds.
//! * [`pipeline`] ties the pieces into train / evaluate / sweep / embedding runs.
//!
//! Independent units of work (folds, sweep points, per-action HMMs) are run
//! through [`exec`], which uses rayon when the `parallel` feature is on.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod error;
pub mod exec;
pub mod geigen;
pub mod hmm;
pub mod pipeline;
pub mod pose;
pub mod rda;
pub mod skeleton;

pub use error::{Error, ErrorKind, Result};

/// Version stamped into every serialized document.
pub const SCHEMA_VERSION: u32 = 1;
