pub mod analysis;
pub mod config;
pub mod ensemble;
pub mod equilibrium;
pub mod error;
pub mod linalg;
pub mod matrix_model;
pub mod measure;
pub mod quadrature;
pub mod reference;
pub mod sampler;
