//! Numerical laboratory for the Lavrentiev phenomenon.
//!
//! Modules, bottom up: [`quadrature`], [`lagrangian`], [`convex`],
//! [`balance`], [`mesh`], [`scheme`], [`gap`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod balance;
pub mod convex;
pub mod gap;
pub mod lagrangian;
mod lp;
pub mod mesh;
pub mod quadrature;
pub mod scheme;

pub use balance::{BalanceReport, Condition, ConditionSpec, Verdict};
pub use lagrangian::{Domain, Lagrangian, Structure};
pub use mesh::{Mesh1D, PLFunction};
