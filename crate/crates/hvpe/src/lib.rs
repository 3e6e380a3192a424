//! Spectral Galerkin toolkit for the hyperviscous stochastic primitive
//! equations in vorticity form: sine-basis field algebra, Gaussian
//! invariant-measure sampling, the truncated nonlinearity, second-chaos
//! generator calculus, stochastic time stepping, and scaling analysis.

pub mod analysis;
pub mod chaos;
pub mod config;
pub mod dynamics;
pub mod measure;
pub mod nonlinearity;
pub mod rng;
pub mod spectral;
pub mod stats;
