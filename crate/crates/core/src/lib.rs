//! Full counting statistics of work for driven open quantum systems, computed
//! by contracting a compressed influence-functional process tensor along a
//! generalized-time contour.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod cli;
pub mod contour;
pub mod counting;
pub mod error;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod pt;
pub mod quadrature;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
