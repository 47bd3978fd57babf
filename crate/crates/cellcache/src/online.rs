//! The reactive caching engine: per-content potential maintenance, the
//! cache-opening rule, request assignment, and proof diagnostics.
//!
//! Each content runs its own independent state. A request at station `i`
//! for a cached-locally content is served free and leaves the state
//! untouched. Otherwise the request joins the processed multiset, every
//! node's potential grows by the improvement `[d(W,v) - d(k,v)]^+` that
//! node would have offered, and the station maximizing `p(k) - f_k` opens a
//! cache when that margin is strictly positive (potentials are then rebuilt
//! from scratch against the enlarged cache set). The request is finally
//! assigned to the UA-nearest open node.
//!
//! The processed multiset is compressed to per-station counts: the
//! improvement term is identical for all requests arriving at the same
//! station, so counts reproduce an explicit request list bit for bit while
//! keeping state O(K).

use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::scalar::{from_count, pos, tolerance_at, Scalar};
use crate::workload::RequestStream;
use serde::Serialize;
use std::fmt;
use std::io::Write;

/// How a single request was satisfied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecisionKind {
    /// The arrival station already caches the content; zero cost, no state
    /// change, and the request never enters the processed multiset.
    LocalHit,
    /// Served from an already-open node.
    Fetch,
    /// The request pushed some station's potential past its caching cost:
    /// a cache opened there, then the request was served.
    OpenAndFetch,
}

impl fmt::Display for DecisionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DecisionKind::LocalHit => write!(f, "local-hit"),
            DecisionKind::Fetch => write!(f, "fetch"),
            DecisionKind::OpenAndFetch => write!(f, "open-and-fetch"),
        }
    }
}

/// Outcome of processing one request (unit content size; the ledger applies
/// the size multiplier).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision<T> {
    pub kind: DecisionKind,
    /// Node the request was served from.
    pub source: usize,
    /// Station whose cache this request opened, if any.
    pub opened: Option<usize>,
    /// UA cost of the assignment: `ua[station][source]`.
    pub ua_cost_delta: T,
    /// Caching fee paid by this request: `f_w` when `opened`, else zero.
    pub caching_cost_delta: T,
}

/// Work counters backing the complexity assertions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WorkCounters {
    /// Requests seen, including local hits.
    pub requests: u64,
    /// Requests that entered the processed multiset.
    pub non_hit_requests: u64,
    /// Scalar `p(k) += [..]^+` updates; exactly `K+1` per non-hit request.
    pub potential_update_ops: u64,
    /// Full from-scratch potential rebuilds; at most `K` per content.
    pub recomputes: u64,
}

/// Online state for one content.
#[derive(Debug, Clone, PartialEq)]
pub struct ContentCacheState<T> {
    /// Content this state belongs to.
    pub content: usize,
    /// `open[k]` for `k in 0..=K`; the Internet entry is always true.
    open: Vec<bool>,
    /// Per-station count of processed (non-hit) requests: the compressed
    /// request multiset.
    counts: Vec<u64>,
    /// Potentials `p(k)`, length `K+1`; the Internet entry stays zero.
    potentials: Vec<T>,
    /// Stations opened by this content, in opening order.
    opened_order: Vec<usize>,
    /// Running `sum of f_w` over opened stations.
    opened_cost: T,
    /// Running sum of request credits.
    credit_sum: T,
    pub counters: WorkCounters,
}

impl<T: Scalar> ContentCacheState<T> {
    /// Fresh state: only the Internet is open, all potentials zero.
    pub fn new(instance: &Instance<T>, content: usize) -> Result<Self> {
        if content >= instance.num_contents() {
            return Err(Error::InvalidContent {
                content,
                num_contents: instance.num_contents(),
            });
        }
        let k = instance.num_stations;
        let mut open = vec![false; k + 1];
        open[k] = true;
        Ok(ContentCacheState {
            content,
            open,
            counts: vec![0; k],
            potentials: vec![T::zero(); k + 1],
            opened_order: Vec::new(),
            opened_cost: T::zero(),
            credit_sum: T::zero(),
            counters: WorkCounters::default(),
        })
    }

    pub fn is_open(&self, node: usize) -> bool {
        self.open[node]
    }

    /// Open cache set, ascending, always ending with the Internet index.
    pub fn open_set(&self) -> Vec<usize> {
        (0..self.open.len()).filter(|&k| self.open[k]).collect()
    }

    /// Stations opened by the engine, in opening order.
    pub fn opened_stations(&self) -> &[usize] {
        &self.opened_order
    }

    pub fn potentials(&self) -> &[T] {
        &self.potentials
    }

    /// Compressed processed multiset: non-hit request count per station.
    pub fn request_counts(&self) -> &[u64] {
        &self.counts
    }

    /// Number of processed (non-hit) requests, the `n` of the competitive
    /// bound.
    pub fn processed_requests(&self) -> u64 {
        self.counters.non_hit_requests
    }

    /// Total caching fees paid so far.
    pub fn opened_cost(&self) -> T {
        self.opened_cost
    }

    /// Accumulated credit of all processed requests.
    pub fn credit_sum(&self) -> T {
        self.credit_sum
    }

    /// `d(W, v)` for a request at `station`, with the lowest-index
    /// achiever.
    fn nearest_open(&self, ua_row: &[T]) -> (T, usize) {
        let mut best = T::infinity();
        let mut node = self.open.len() - 1;
        for (k, &is_open) in self.open.iter().enumerate() {
            if is_open && ua_row[k] < best {
                best = ua_row[k];
                node = k;
            }
        }
        (best, node)
    }

    /// `d(W, v)` from the caller's side, used by credit and probes.
    pub fn distance_to_open(&self, instance: &Instance<T>, station: usize) -> T {
        self.nearest_open(&instance.ua[station]).0
    }

    /// Rebuilds every potential from the compressed multiset against the
    /// current open set.
    fn recompute_potentials(&mut self, instance: &Instance<T>) {
        let k = instance.num_stations;
        let nearest: Vec<T> = (0..k)
            .map(|i| self.nearest_open(&instance.ua[i]).0)
            .collect();
        for node in 0..=k {
            let mut acc = T::zero();
            for i in 0..k {
                if self.counts[i] > 0 {
                    acc += from_count::<T>(self.counts[i]) * pos(nearest[i] - instance.ua[i][node]);
                }
            }
            self.potentials[node] = acc;
        }
        self.counters.recomputes += 1;
    }
}

/// Processes one request for `state.content` arriving at `station`,
/// mutating the state and reporting the decision.
pub fn process_request<T: Scalar>(
    state: &mut ContentCacheState<T>,
    instance: &Instance<T>,
    station: usize,
) -> Result<Decision<T>> {
    let k = instance.num_stations;
    if station >= k {
        return Err(Error::InvalidStation {
            station,
            num_stations: k,
        });
    }
    state.counters.requests += 1;

    if state.open[station] {
        return Ok(Decision {
            kind: DecisionKind::LocalHit,
            source: station,
            opened: None,
            ua_cost_delta: T::zero(),
            caching_cost_delta: T::zero(),
        });
    }

    state.counts[station] += 1;
    state.counters.non_hit_requests += 1;
    let ua_row = &instance.ua[station];
    let (d_w, _) = state.nearest_open(ua_row);

    // Candidate to open: the finite-cost station maximizing the post-update
    // margin p(k) - f_k, lowest index on ties. Evaluated against the same
    // floating-point sums the update below will store.
    let content = state.content;
    let mut best: Option<(usize, T, T)> = None; // (station, margin, pre-update potential)
    for cand in 0..k {
        let f = instance.caching_cost[cand][content];
        if !f.is_finite() {
            continue;
        }
        let margin = (state.potentials[cand] + pos(d_w - ua_row[cand])) - f;
        if best.is_none_or(|(_, m, _)| margin > m) {
            best = Some((cand, margin, state.potentials[cand]));
        }
    }

    for node in 0..=k {
        state.potentials[node] += pos(d_w - ua_row[node]);
        state.counters.potential_update_ops += 1;
    }

    let mut opened = None;
    let mut caching_cost_delta = T::zero();
    let credit = match best {
        Some((w, margin, p_before)) if margin > T::zero() => {
            let f_w = instance.caching_cost[w][content];
            state.open[w] = true;
            state.opened_order.push(w);
            state.opened_cost += f_w;
            opened = Some(w);
            caching_cost_delta = f_w;
            state.recompute_potentials(instance);
            f_w - p_before + ua_row[w]
        }
        _ => d_w,
    };
    state.credit_sum += credit;

    let (ua_cost_delta, source) = state.nearest_open(ua_row);
    Ok(Decision {
        kind: if opened.is_some() {
            DecisionKind::OpenAndFetch
        } else {
            DecisionKind::Fetch
        },
        source,
        opened,
        ua_cost_delta,
        caching_cost_delta,
    })
}

/// Credit of a processed request: the analysis charge that upper-bounds
/// total caching spend. `state_before` must be the state the decision was
/// produced from (potentials prior to the update); local hits carry no
/// credit.
pub fn credit<T: Scalar>(
    state_before: &ContentCacheState<T>,
    instance: &Instance<T>,
    station: usize,
    decision: &Decision<T>,
) -> Option<T> {
    match decision.kind {
        DecisionKind::LocalHit => None,
        DecisionKind::Fetch => Some(state_before.distance_to_open(instance, station)),
        DecisionKind::OpenAndFetch => {
            let w = decision
                .opened
                .expect("open decision carries the opened station");
            let f_w = instance.caching_cost[w][state_before.content];
            Some(f_w - state_before.potentials()[w] + instance.ua[station][w])
        }
    }
}

/// One failed runtime invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum ProbeViolation<T> {
    /// `p(k)` exceeds the caching cost (tolerance 1e-9).
    PotentialExceedsCost {
        k: usize,
        potential: T,
        cost: T,
    },
    /// The Internet potential drifted off zero.
    InternetPotentialNonzero {
        potential: T,
    },
    /// Incrementally maintained potential disagrees with a from-scratch
    /// recomputation over the compressed multiset.
    PotentialMismatch {
        k: usize,
        stored: T,
        recomputed: T,
    },
    NegativePotential {
        k: usize,
        potential: T,
    },
    /// Total caching spend exceeds the accumulated credit.
    CreditBoundViolated {
        opened_cost: T,
        credit_sum: T,
    },
}

impl<T: fmt::Display> fmt::Display for ProbeViolation<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProbeViolation::PotentialExceedsCost { k, potential, cost } => {
                write!(f, "p({k}) = {potential} exceeds caching cost {cost}")
            }
            ProbeViolation::InternetPotentialNonzero { potential } => {
                write!(f, "internet potential is {potential}, expected 0")
            }
            ProbeViolation::PotentialMismatch {
                k,
                stored,
                recomputed,
            } => {
                write!(
                    f,
                    "p({k}) = {stored} but from-scratch recomputation gives {recomputed}"
                )
            }
            ProbeViolation::NegativePotential { k, potential } => {
                write!(f, "p({k}) = {potential} is negative")
            }
            ProbeViolation::CreditBoundViolated {
                opened_cost,
                credit_sum,
            } => {
                write!(
                    f,
                    "caching spend {opened_cost} exceeds total credit {credit_sum}"
                )
            }
        }
    }
}

/// Outcome of [`probe_invariants`]; empty means every check passed.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport<T> {
    pub violations: Vec<ProbeViolation<T>>,
}

impl<T> ProbeReport<T> {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks the proof invariants against the live state: the potential/cost
/// bound, the zero Internet potential, agreement of incremental potentials
/// with a from-scratch recomputation, nonnegativity, and the credit bound
/// over the accumulated credit trace. Reports, never fails.
pub fn probe_invariants<T: Scalar>(
    state: &ContentCacheState<T>,
    instance: &Instance<T>,
) -> ProbeReport<T> {
    let mut violations = Vec::new();
    let k = instance.num_stations;
    let j = state.content;

    for cand in 0..k {
        let f = instance.caching_cost[cand][j];
        if f.is_finite() && state.potentials[cand] > f + tolerance_at(f) {
            violations.push(ProbeViolation::PotentialExceedsCost {
                k: cand,
                potential: state.potentials[cand],
                cost: f,
            });
        }
    }
    if state.potentials[k] != T::zero() {
        violations.push(ProbeViolation::InternetPotentialNonzero {
            potential: state.potentials[k],
        });
    }

    // Independent from-scratch recomputation over the compressed multiset.
    let nearest: Vec<T> = (0..k)
        .map(|i| state.distance_to_open(instance, i))
        .collect();
    for node in 0..=k {
        let mut recomputed = T::zero();
        for i in 0..k {
            if state.counts[i] > 0 {
                recomputed +=
                    from_count::<T>(state.counts[i]) * pos(nearest[i] - instance.ua[i][node]);
            }
        }
        let stored = state.potentials[node];
        if (stored - recomputed).abs() > tolerance_at(stored.abs().max(recomputed.abs())) {
            violations.push(ProbeViolation::PotentialMismatch {
                k: node,
                stored,
                recomputed,
            });
        }
        if stored < T::zero() {
            violations.push(ProbeViolation::NegativePotential {
                k: node,
                potential: stored,
            });
        }
    }

    if state.opened_cost > state.credit_sum + tolerance_at(state.credit_sum) {
        violations.push(ProbeViolation::CreditBoundViolated {
            opened_cost: state.opened_cost,
            credit_sum: state.credit_sum,
        });
    }

    ProbeReport { violations }
}

/// Separated caching and UA cost accumulators, per content.
#[derive(Debug, Clone, PartialEq)]
pub struct CostLedger<T> {
    pub per_content_ua: Vec<T>,
    pub per_content_caching: Vec<T>,
    sizes: Vec<T>,
}

impl<T: Scalar> CostLedger<T> {
    pub fn new(instance: &Instance<T>) -> Self {
        let m = instance.num_contents();
        CostLedger {
            per_content_ua: vec![T::zero(); m],
            per_content_caching: vec![T::zero(); m],
            sizes: instance.content_sizes.clone(),
        }
    }

    fn add(&mut self, content: usize, decision: &Decision<T>) {
        self.per_content_ua[content] += decision.ua_cost_delta;
        self.per_content_caching[content] += decision.caching_cost_delta;
    }

    /// Size-scaled cost of one content.
    pub fn content_total(&self, content: usize) -> T {
        self.sizes[content] * (self.per_content_ua[content] + self.per_content_caching[content])
    }

    /// `sum_j s_j * (ua_j + caching_j)`.
    pub fn total(&self) -> T {
        (0..self.sizes.len()).map(|j| self.content_total(j)).sum()
    }

    /// Size-scaled UA spend across contents.
    pub fn total_ua(&self) -> T {
        (0..self.sizes.len())
            .map(|j| self.sizes[j] * self.per_content_ua[j])
            .sum()
    }

    /// Size-scaled caching spend across contents.
    pub fn total_caching(&self) -> T {
        (0..self.sizes.len())
            .map(|j| self.sizes[j] * self.per_content_caching[j])
            .sum()
    }

    /// Rebuilds a ledger by replaying a decision trace; used to cross-check
    /// that accumulated totals equal the trace replay exactly.
    pub fn from_trace(trace: &DecisionTrace<T>, instance: &Instance<T>) -> Self {
        let mut ledger = CostLedger::new(instance);
        for row in &trace.rows {
            ledger.per_content_ua[row.content] += row.ua_delta;
            ledger.per_content_caching[row.content] += row.caching_delta;
        }
        ledger
    }
}

/// One row of the decision trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow<T> {
    pub event_index: usize,
    pub content: usize,
    pub station: usize,
    pub kind: DecisionKind,
    pub source: usize,
    pub opened: Option<usize>,
    pub ua_delta: T,
    pub caching_delta: T,
}

/// Every decision of a run, in stream order.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTrace<T> {
    pub rows: Vec<TraceRow<T>>,
}

impl<T> Default for DecisionTrace<T> {
    fn default() -> Self {
        DecisionTrace { rows: Vec::new() }
    }
}

impl<T: Scalar + Serialize> DecisionTrace<T> {
    /// CSV export: `event_index,content,station,kind,source,opened,ua_delta,caching_delta`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for row in &self.rows {
            w.serialize(row).map_err(csv_to_io)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_to_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Everything a full online run produces.
#[derive(Debug, Clone)]
pub struct RunOutcome<T> {
    pub ledger: CostLedger<T>,
    pub trace: DecisionTrace<T>,
    pub states: Vec<ContentCacheState<T>>,
}

/// Runs the full stream, each content against its own independent state.
pub fn run_stream<T: Scalar>(
    instance: &Instance<T>,
    stream: &RequestStream,
) -> Result<RunOutcome<T>> {
    run_stream_observed(instance, stream, |_, _, _| {})
}

/// [`run_stream`] with a per-event observer (event index, decision, state
/// after the event); the invariant sweeps probe through this hook.
pub fn run_stream_observed<T, F>(
    instance: &Instance<T>,
    stream: &RequestStream,
    mut observe: F,
) -> Result<RunOutcome<T>>
where
    T: Scalar,
    F: FnMut(usize, &Decision<T>, &ContentCacheState<T>),
{
    let m = instance.num_contents();
    let mut states = (0..m)
        .map(|j| ContentCacheState::new(instance, j))
        .collect::<Result<Vec<_>>>()?;
    let mut ledger = CostLedger::new(instance);
    let mut trace = DecisionTrace::default();

    for (index, event) in stream.events.iter().enumerate() {
        if event.content >= m {
            return Err(Error::InvalidContent {
                content: event.content,
                num_contents: m,
            }
            .at_event(index));
        }
        let state = &mut states[event.content];
        let decision =
            process_request(state, instance, event.station).map_err(|e| e.at_event(index))?;
        ledger.add(event.content, &decision);
        trace.rows.push(TraceRow {
            event_index: index,
            content: event.content,
            station: event.station,
            kind: decision.kind,
            source: decision.source,
            opened: decision.opened,
            ua_delta: decision.ua_cost_delta,
            caching_delta: decision.caching_cost_delta,
        });
        observe(index, &decision, &states[event.content]);
    }

    Ok(RunOutcome {
        ledger,
        trace,
        states,
    })
}
