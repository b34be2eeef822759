//! Congestion-aware flow routing for software-defined data-center fabrics.
//!
//! The crate builds capacitated switch topologies, enumerates bounded-hop
//! simple paths, generates flow workloads, and routes them to keep the
//! maximum link utilization low with a genetic search. ECMP and an exhaustive
//! branch-and-bound solver serve as baselines, and a fluid-flow model scores
//! any routing by throughput and loss.

pub mod ecmp;
pub mod exact;
pub mod experiment;
pub mod fluidsim;
pub mod ga;
pub mod routing;
pub mod topology;
pub mod traffic;
pub mod xpath;
