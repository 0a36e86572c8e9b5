//! Inhomogeneous Bernoulli bond percolation on Z^d where the edges of an
//! s-dimensional sublattice H carry their own parameter.

pub mod clusters;
pub mod estimators;
pub mod field;
pub mod gmrenorm;
pub mod lattice;
pub mod oracle;
