//! Distances between measures, the small-`n` quadrature oracle and the
//! large-deviation probe.

pub mod ldp;
pub mod metrics;
pub mod oracle;

pub use ldp::{ldp_probe, LdpOptions, LdpReport, LdpRow};
pub use metrics::{
    bounded_lipschitz, ks_distance, sup_cdf_distance, wasserstein1, BlEstimate, MeasurePair,
};
pub use oracle::{
    partition_scaling, quadrature_oracle, quadrature_oracle_with, Event, EventProbability, OracleOptions,
    OracleResult, Statistic,
};
