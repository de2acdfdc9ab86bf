//! Jet groups, Riemannian and affine groupoid structures, their curvature
//! obstructions, and Killing-field integration.

pub mod algebroid;
pub mod cli;
pub mod curvature;
pub mod expr;
pub mod geom;
pub mod integrator;
pub mod jet;
pub mod metrics;
pub mod sample;
pub mod tensor;
