//! Zeroth-order, Byzantine-edge-resilient distributed online convex optimization.
//!
//! Agents on a time-varying directed graph exchange estimates and push-sum
//! weights. Each receiver bounds what it accepts by the coordinatewise range of
//! values that arrived over trusted edges, mixes the accepted values with
//! push-sum weights, estimates its local gradient from 2d function-value
//! queries, and takes a projected step.
//!
//! Module map:
//!
//! * [`graph`]: trust-labelled snapshots, schedules, connectivity checks and
//!   transition-matrix contraction.
//! * [`protocol`]: safety thresholds, resilient filtering, out-degree feedback,
//!   weight update and mixing.
//! * [`oracle`]: value-only losses, central differences, projections and
//!   exact minimizers.
//! * [`agent`]: the per-agent round.
//! * [`adversary`]: payload corruption on adversarial edges.
//! * [`metrics`]: dynamic regret, disagreement and bound sequences.
//! * [`sim`]: configuration, the round loop, traces, reports and invariant suites.

// `!(v > 0.0)` is used on purpose to reject NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adversary;
pub mod agent;
pub mod graph;
pub mod linalg;
pub mod metrics;
pub mod oracle;
pub mod protocol;
pub mod rng;
pub mod sim;

/// Zero-based agent index. Files and the CLI use one-based ids.
pub type AgentId = usize;
