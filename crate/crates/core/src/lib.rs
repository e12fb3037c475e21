// `!(x > 0.0)` is used on purpose so that NaN is rejected with the bad values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checks;
pub mod cli;
pub mod config;
pub mod delay;
pub mod error;
pub mod history;
pub mod invariance;
pub mod models;
pub mod oracle;
pub mod profile;
pub mod quadrature;
pub mod rhs;
pub mod spectral;
pub mod state;
pub mod stepper;
