// `!(x > 0.0)` is used on purpose so NaN lands in the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod closed_form;
pub mod error;
pub mod hermitian;
pub mod iba;
pub mod io;
pub mod multiuser;
pub mod oracle;
pub mod problem;
pub mod solve;
pub mod solver;
pub mod waterfill;
