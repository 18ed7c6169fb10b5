//! Infinite backward convolution products of probability measures on finite
//! groups and on the circle, the solutions of `η_k = ξ_k η_{k-1}` they
//! govern, and statistical checks on sampled solutions.

pub mod corpus;
pub mod group;
pub mod limit;
pub mod measure;
pub mod report;
pub mod solution;
pub mod spec;
pub mod stats;
pub mod torus;
