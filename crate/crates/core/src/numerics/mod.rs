//! Numerical building blocks shared by the rate model and its oracles.

pub mod quadrature;
pub mod roots;
pub mod special;
