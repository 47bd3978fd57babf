//! Collaborative content caching for backhaul-connected base stations.
//!
//! The crate models a cellular network of `K` cache-capable base stations
//! plus an always-available Internet node, and provides:
//!
//! * [`instance`] — problem instances: topologies, min-cost-path UA matrices,
//!   per-station caching costs, content sizes, validation and on-disk formats.
//! * [`online`] — the reactive caching engine: a potential-function rule that
//!   opens caches as requests arrive, with proof diagnostics (credits,
//!   invariant probes, work counters).
//! * [`offline`] — exact offline baselines: the collaborative optimum by
//!   per-content cache-set enumeration, the non-collaborative closed form,
//!   plan verification, and a set-cover reduction with an exhaustive solver.
//! * [`workload`] — Zipf demand generation with independent per-station
//!   rankings, request-stream interleaving, and estimation-error models.
//! * [`adversary`] — the lower-bound tree construction and its phased
//!   request sequence.
//! * [`harness`] — experiment orchestration: scheme comparisons, savings
//!   CDFs, competitive-ratio reports, CSV outputs.
//!
//! All cost arithmetic is generic over the scalar type via [`Scalar`]
//! (any `num-traits` float works); the `*64`/`*32` aliases below pin the
//! two builtin precisions. Station indices are 0-based throughout; index
//! `K` (one past the last station) denotes the Internet node.

pub mod adversary;
pub mod error;
pub mod harness;
pub mod instance;
pub mod offline;
pub mod online;
pub mod scalar;
pub mod workload;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Double-precision problem instance (the working precision of the CLI).
pub type Instance64 = instance::Instance<f64>;
/// Single-precision problem instance.
pub type Instance32 = instance::Instance<f32>;
/// Double-precision topology.
pub type Topology64 = instance::Topology<f64>;
/// Single-precision topology.
pub type Topology32 = instance::Topology<f32>;
/// Double-precision per-content online state.
pub type ContentCacheState64 = online::ContentCacheState<f64>;
/// Double-precision request decision.
pub type Decision64 = online::Decision<f64>;
/// Double-precision cost ledger.
pub type CostLedger64 = online::CostLedger<f64>;
/// Double-precision adversary tree parameters.
pub type AdversaryTree64 = adversary::AdversaryTree<f64>;
