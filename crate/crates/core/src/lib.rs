//! Embedded multilevel Monte Carlo for elliptic problems on random domains.

pub mod agfem;
pub mod executor;
pub mod geometry;
pub mod mesh;
pub mod mlmc;
pub mod stochastics;
