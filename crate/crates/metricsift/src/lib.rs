//! Metric subset selection for microservice observability.
//!
//! Given historical metric time series, execution traces, and the service
//! DAG of an application, this crate identifies an approximately minimal
//! subset of metrics per microservice that still carries most of the
//! information in the full metric space. Selection is greedy over entropy
//! with mutual-information redundancy pruning, made topology-aware by
//! propagating pivot sets down the DAG and scaling the redundancy
//! threshold by inverse path probability, and driven by an AIMD search
//! over the threshold that logs the size/coverage trade-off of every
//! iteration.

pub mod aimd;
pub mod infotheory;
pub mod ingest;
pub mod model;
pub mod oracle;
pub mod selection;
pub mod synthgen;
pub mod topology;
