//! Numerical model of exponential ultradistribution semigroups generated by
//! matrices: weight sequences and ultrapolynomials, Gevrey test functions,
//! regularized Bromwich semigroups `S_n(t)`, the fractional Cauchy problem
//! via Wright subordination, and the semigroup axiom checks.

// negated comparisons reject NaN on purpose; reference constants keep all quoted digits
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub(crate) mod dd;
pub mod error;
pub mod fractional;
pub mod gevrey;
pub mod io;
pub mod operator;
pub mod quad;
pub mod semigroup;
pub mod special;
pub mod testfn;
pub mod udsg;

pub use error::{Error, Result};
pub use fractional::{mittag_leffler, ml_matrix, solve_acp_alpha, wright, FracParams};
pub use gevrey::{gevrey_sequence, WeightSequence};
pub use operator::{CMatrix, CVector, MatrixOperator, ResolventOracle};
pub use semigroup::{solve_acp, AcpOptions, BromwichQuadrature, Trajectory};
pub use testfn::{gevrey_bump, TestFunction};
pub use udsg::{fujiwara_probe, Branch, MatrixUdsg, ProbeConfig, ProbeReport};
