#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod error;
pub mod experiment;
pub mod field;
pub mod filter;
pub mod grid;
pub mod master;
pub mod operator;
pub mod output;
pub mod quadrature;
pub mod sde;
pub mod slh;

pub use error::{Error, Result};
