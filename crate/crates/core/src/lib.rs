// NaN-rejecting `!(x > 0.0)` checks and index loops over small fixed arrays are deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod dynamics;
pub mod error;
pub mod eval;
pub mod field;
pub mod geometry;
pub mod optim;
pub mod pipeline;
pub mod ply;
pub mod scenes;
pub mod render;
pub mod segmentation;

pub use error::{Error, ErrorKind, Result};
