//! Exact offline baselines.
//!
//! With unlimited cache capacity the placement problem decomposes per
//! content, and given a cache set every request is served by its UA-nearest
//! open node. The collaborative optimum therefore reduces to, per content,
//! a minimum over cache subsets — small enough to enumerate exactly at desk
//! scale. Stations that are indistinguishable for a content (same caching
//! cost, same UA column over the demanded stations) are collapsed to their
//! lowest-index representative before enumerating; this is exactness- and
//! tie-break-preserving, and it is what keeps highly symmetric instances
//! (the adversary trees) enumerable.

use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::scalar::{from_count, from_f64, Scalar};
use crate::workload::DemandMatrix;
use rayon::prelude::*;
use std::fmt;
use std::io::Write;

/// Cap on the per-content subset enumeration, counted after equivalence
/// merging. Overridable via [`offline_collaborative_exact_with_limit`].
pub const DEFAULT_ENUMERATION_LIMIT: usize = 20;

/// A concrete placement and assignment: which stations cache each content,
/// and which node serves each demanded (station, content) pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OfflinePlan {
    pub num_stations: usize,
    pub num_contents: usize,
    /// Per content, the ascending list of caching stations.
    pub cached: Vec<Vec<usize>>,
    /// `source[i][j]`: serving node for (station `i`, content `j`); `None`
    /// where no assignment exists.
    pub source: Vec<Vec<Option<usize>>>,
}

impl OfflinePlan {
    pub fn empty(num_stations: usize, num_contents: usize) -> Self {
        OfflinePlan {
            num_stations,
            num_contents,
            cached: vec![Vec::new(); num_contents],
            source: vec![vec![None; num_contents]; num_stations],
        }
    }

    pub fn caches(&self, content: usize) -> &[usize] {
        &self.cached[content]
    }

    pub fn source(&self, station: usize, content: usize) -> Option<usize> {
        self.source[station][content]
    }

    /// CSV export: `content,cached_set,station,source` with the cache set
    /// semicolon-joined and repeated per assignment row.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["content", "cached_set", "station", "source"])
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
        for j in 0..self.num_contents {
            let set = self.cached[j]
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join(";");
            let mut wrote_any = false;
            for i in 0..self.num_stations {
                if let Some(src) = self.source[i][j] {
                    w.write_record(&[j.to_string(), set.clone(), i.to_string(), src.to_string()])
                        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
                    wrote_any = true;
                }
            }
            if !wrote_any && !self.cached[j].is_empty() {
                w.write_record(&[j.to_string(), set, String::new(), String::new()])
                    .map_err(|e| Error::Io(std::io::Error::other(e)))?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Objective value of a plan, split by term.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanCost<T> {
    /// `sum_j s_j * sum_{k cached} f_kj`.
    pub caching: T,
    /// `sum_j s_j * sum_i gamma_ij * ua[i][source]`.
    pub ua: T,
    /// Size-scaled per-content totals.
    pub per_content: Vec<T>,
    pub total: T,
}

/// Evaluates the objective for a plan as-is (no feasibility judgement;
/// pairs without a source contribute nothing).
pub fn plan_cost<T: Scalar>(
    instance: &Instance<T>,
    demands: &DemandMatrix,
    plan: &OfflinePlan,
) -> PlanCost<T> {
    let m = instance.num_contents();
    let mut caching_total = T::zero();
    let mut ua_total = T::zero();
    let mut per_content = Vec::with_capacity(m);
    let mut total = T::zero();
    for j in 0..m {
        let mut caching_j = T::zero();
        for &k in &plan.cached[j] {
            caching_j += instance.caching_cost[k][j];
        }
        let mut ua_j = T::zero();
        for i in 0..instance.num_stations {
            let gamma = demands.gamma[i][j];
            if gamma == 0 {
                continue;
            }
            if let Some(src) = plan.source[i][j] {
                ua_j += from_count::<T>(gamma) * instance.ua[i][src];
            }
        }
        let s = instance.content_sizes[j];
        caching_total += s * caching_j;
        ua_total += s * ua_j;
        let content = s * (caching_j + ua_j);
        per_content.push(content);
        total += content;
    }
    PlanCost {
        caching: caching_total,
        ua: ua_total,
        per_content,
        total,
    }
}

/// UA-nearest node among `set` and the Internet, lowest index on ties
/// (stations precede the Internet).
fn nearest_source<T: Scalar>(instance: &Instance<T>, station: usize, set: &[usize]) -> usize {
    let net = instance.internet();
    let mut best = T::infinity();
    let mut node = net;
    for &w in set.iter().chain(std::iter::once(&net)) {
        let d = instance.ua[station][w];
        if d < best {
            best = d;
            node = w;
        }
    }
    node
}

fn check_demand_dims<T: Scalar>(instance: &Instance<T>, demands: &DemandMatrix) -> Result<()> {
    if demands.num_stations != instance.num_stations
        || demands.num_contents != instance.num_contents()
    {
        return Err(Error::DimensionMismatch(format!(
            "demand matrix is {}x{} but the instance has {} stations and {} contents",
            demands.num_stations,
            demands.num_contents,
            instance.num_stations,
            instance.num_contents()
        )));
    }
    Ok(())
}

/// Collaborative optimum by exact per-content subset enumeration: for each
/// content, minimize `sum_{k in S} f_kj + sum_i gamma_ij min_{k in S+net}
/// ua[i][k]` over all subsets `S` of finite-cost stations (lexicographically
/// smallest subset on cost ties), then assign each demanded station to its
/// UA-nearest node. Returns the plan and the size-scaled global optimum.
pub fn offline_collaborative_exact<T: Scalar>(
    instance: &Instance<T>,
    demands: &DemandMatrix,
) -> Result<(OfflinePlan, T)> {
    offline_collaborative_exact_with_limit(instance, demands, DEFAULT_ENUMERATION_LIMIT)
}

/// [`offline_collaborative_exact`] with an explicit enumeration limit.
pub fn offline_collaborative_exact_with_limit<T: Scalar>(
    instance: &Instance<T>,
    demands: &DemandMatrix,
    limit: usize,
) -> Result<(OfflinePlan, T)> {
    check_demand_dims(instance, demands)?;
    let k = instance.num_stations;
    let m = instance.num_contents();

    let per_content: Vec<(Vec<usize>, Vec<Option<usize>>)> = (0..m)
        .into_par_iter()
        .map(|j| solve_content(instance, demands, j, limit))
        .collect::<Result<Vec<_>>>()?;

    let mut plan = OfflinePlan::empty(k, m);
    for (j, (subset, sources)) in per_content.into_iter().enumerate() {
        plan.cached[j] = subset;
        for i in 0..k {
            plan.source[i][j] = sources[i];
        }
    }
    let cost = plan_cost(instance, demands, &plan);
    Ok((plan, cost.total))
}

fn solve_content<T: Scalar>(
    instance: &Instance<T>,
    demands: &DemandMatrix,
    j: usize,
    limit: usize,
) -> Result<(Vec<usize>, Vec<Option<usize>>)> {
    let k = instance.num_stations;
    let net = instance.internet();
    let demanded: Vec<usize> = (0..k).filter(|&i| demands.gamma[i][j] > 0).collect();
    let mut sources = vec![None; k];
    if demanded.is_empty() {
        return Ok((Vec::new(), sources));
    }
    let gamma_t: Vec<T> = demanded
        .iter()
        .map(|&i| from_count::<T>(demands.gamma[i][j]))
        .collect();

    // Finite-cost candidates, collapsed to one representative per
    // (caching cost, UA column over demanded stations) class.
    let mut reps: Vec<usize> = Vec::new();
    'candidates: for c in 0..k {
        if !instance.caching_cost[c][j].is_finite() {
            continue;
        }
        for &r in &reps {
            if instance.caching_cost[r][j] == instance.caching_cost[c][j]
                && demanded
                    .iter()
                    .all(|&i| instance.ua[i][r] == instance.ua[i][c])
            {
                continue 'candidates;
            }
        }
        reps.push(c);
    }
    // 63 is the hard ceiling of the u64 subset mask, whatever the caller
    // passed as limit.
    let limit = limit.min(63);
    if reps.len() > limit {
        return Err(Error::EnumerationLimitExceeded {
            candidates: reps.len(),
            limit,
        });
    }

    let mut best_cost = T::infinity();
    let mut best_subset: Vec<usize> = Vec::new();
    for mask in 0..(1u64 << reps.len()) {
        let mut caching_sum = T::zero();
        for (b, &r) in reps.iter().enumerate() {
            if mask & (1 << b) != 0 {
                caching_sum += instance.caching_cost[r][j];
            }
        }
        let mut ua_sum = T::zero();
        for (idx, &i) in demanded.iter().enumerate() {
            let mut d_min = instance.ua[i][net];
            for (b, &r) in reps.iter().enumerate() {
                if mask & (1 << b) != 0 && instance.ua[i][r] < d_min {
                    d_min = instance.ua[i][r];
                }
            }
            ua_sum += gamma_t[idx] * d_min;
        }
        let cost = caching_sum + ua_sum;
        let better = if cost < best_cost {
            true
        } else if cost == best_cost {
            let subset = mask_to_subset(mask, &reps);
            subset < best_subset
        } else {
            false
        };
        if better {
            best_cost = cost;
            best_subset = mask_to_subset(mask, &reps);
        }
    }

    for &i in &demanded {
        sources[i] = Some(nearest_source(instance, i, &best_subset));
    }
    Ok((best_subset, sources))
}

fn mask_to_subset(mask: u64, reps: &[usize]) -> Vec<usize> {
    reps.iter()
        .enumerate()
        .filter(|(b, _)| mask & (1 << b) != 0)
        .map(|(_, &r)| r)
        .collect()
}

/// Non-collaborative optimum in closed form: each demanded pair
/// independently caches locally iff `f_ij <= gamma_ij * ua[i][net]`
/// (cache on ties, Internet when the caching cost is infinite).
pub fn offline_noncollaborative<T: Scalar>(
    instance: &Instance<T>,
    demands: &DemandMatrix,
) -> Result<(OfflinePlan, T)> {
    check_demand_dims(instance, demands)?;
    let k = instance.num_stations;
    let m = instance.num_contents();
    let net = instance.internet();
    let mut plan = OfflinePlan::empty(k, m);
    for j in 0..m {
        for i in 0..k {
            let gamma = demands.gamma[i][j];
            if gamma == 0 {
                continue;
            }
            let f = instance.caching_cost[i][j];
            let internet_total = from_count::<T>(gamma) * instance.ua[i][net];
            if f.is_finite() && f <= internet_total {
                plan.cached[j].push(i);
                plan.source[i][j] = Some(i);
            } else {
                plan.source[i][j] = Some(net);
            }
        }
    }
    let cost = plan_cost(instance, demands, &plan);
    Ok((plan, cost.total))
}

/// One feasibility defect of a plan.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PlanViolation {
    /// Pair (i, j) is assigned to a station that does not cache content j.
    AssignmentToUncached {
        station: usize,
        content: usize,
        source: usize,
    },
    /// Pair (i, j) has positive demand but no serving node.
    MissingAssignment {
        station: usize,
        content: usize,
    },
    /// Content j is cached at a station whose caching cost is infinite.
    CachedAtInfiniteCost {
        station: usize,
        content: usize,
    },
    SourceOutOfRange {
        station: usize,
        content: usize,
        source: usize,
    },
    CachedUnknownStation {
        station: usize,
        content: usize,
    },
    Shape(String),
}

impl fmt::Display for PlanViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlanViolation::AssignmentToUncached { station, content, source } => write!(
                f,
                "pair ({station},{content}) retrieves from station {source}, which does not cache content {content}"
            ),
            PlanViolation::MissingAssignment { station, content } => write!(
                f,
                "pair ({station},{content}) has demand but no serving node"
            ),
            PlanViolation::CachedAtInfiniteCost { station, content } => write!(
                f,
                "content {content} cached at station {station} whose caching cost is infinite"
            ),
            PlanViolation::SourceOutOfRange { station, content, source } => write!(
                f,
                "pair ({station},{content}) names source {source} outside the node range"
            ),
            PlanViolation::CachedUnknownStation { station, content } => write!(
                f,
                "content {content} cached at unknown station {station}"
            ),
            PlanViolation::Shape(msg) => write!(f, "{msg}"),
        }
    }
}

/// Feasibility findings plus the split objective of the plan.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanReport<T> {
    pub violations: Vec<PlanViolation>,
    pub cost: PlanCost<T>,
}

impl<T> PlanReport<T> {
    pub fn feasible(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks a plan against the placement/assignment constraints and evaluates
/// its objective. Infeasibility is reported, never raised, and the cost of
/// the plan as given is always computed.
pub fn verify_plan<T: Scalar>(
    instance: &Instance<T>,
    demands: &DemandMatrix,
    plan: &OfflinePlan,
) -> (T, PlanReport<T>) {
    let mut violations = Vec::new();
    let k = instance.num_stations;
    let m = instance.num_contents();
    let net = instance.internet();

    if plan.num_stations != k || plan.num_contents != m {
        violations.push(PlanViolation::Shape(format!(
            "plan is {}x{} but the instance has {k} stations and {m} contents",
            plan.num_stations, plan.num_contents
        )));
        let cost = plan_cost(instance, demands, plan);
        let total = cost.total;
        return (total, PlanReport { violations, cost });
    }
    if demands.num_stations != k || demands.num_contents != m {
        violations.push(PlanViolation::Shape(
            "demand matrix shape disagrees with the instance".to_string(),
        ));
    }

    for j in 0..m {
        for &cache in &plan.cached[j] {
            if cache >= k {
                violations.push(PlanViolation::CachedUnknownStation {
                    station: cache,
                    content: j,
                });
            } else if !instance.caching_cost[cache][j].is_finite() {
                violations.push(PlanViolation::CachedAtInfiniteCost {
                    station: cache,
                    content: j,
                });
            }
        }
    }

    for i in 0..k.min(demands.num_stations) {
        for j in 0..m.min(demands.num_contents) {
            let demanded = demands.gamma[i][j] > 0;
            match plan.source[i][j] {
                None if demanded => {
                    violations.push(PlanViolation::MissingAssignment {
                        station: i,
                        content: j,
                    });
                }
                Some(src) if src > net => {
                    violations.push(PlanViolation::SourceOutOfRange {
                        station: i,
                        content: j,
                        source: src,
                    });
                }
                Some(src) if src != net && plan.cached[j].binary_search(&src).is_err() => {
                    violations.push(PlanViolation::AssignmentToUncached {
                        station: i,
                        content: j,
                        source: src,
                    });
                }
                _ => {}
            }
        }
    }

    let cost = plan_cost(instance, demands, plan);
    let total = cost.total;
    (total, PlanReport { violations, cost })
}

/// Completes a plan's assignments against a (possibly different) demand
/// matrix: placements stay fixed, demanded pairs without a source get one.
/// Collaborative plans route to the UA-nearest cached node or the Internet;
/// non-collaborative plans serve locally if cached, else from the Internet.
/// This is how placements optimized on estimated demands are costed against
/// the actual ones.
pub fn complete_assignments<T: Scalar>(
    instance: &Instance<T>,
    demands: &DemandMatrix,
    plan: &OfflinePlan,
    collaborative: bool,
) -> OfflinePlan {
    let mut completed = plan.clone();
    let net = instance.internet();
    for i in 0..plan.num_stations {
        for j in 0..plan.num_contents {
            if demands.gamma[i][j] == 0 || completed.source[i][j].is_some() {
                continue;
            }
            let src = if collaborative {
                nearest_source(instance, i, &plan.cached[j])
            } else if plan.cached[j].binary_search(&i).is_ok() {
                i
            } else {
                net
            };
            completed.source[i][j] = Some(src);
        }
    }
    completed
}

/// Builds the one-content caching instance of a set-cover input: one
/// uncacheable requester station per element (unit demand), one cache
/// station per subset (cost `a_l`), requester-to-cache UA of 0 when covered
/// and `2 a_l` otherwise, and a large finite sentinel (`4 sum a`) on every
/// other route so it is never optimal. The UA matrix is not a path metric;
/// the instance is flagged accordingly.
pub fn set_cover_to_instance<T: Scalar>(
    num_elements: usize,
    subsets: &[Vec<usize>],
    costs: &[T],
) -> Result<(Instance<T>, DemandMatrix)> {
    if subsets.len() != costs.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} subsets but {} costs",
            subsets.len(),
            costs.len()
        )));
    }
    for (l, subset) in subsets.iter().enumerate() {
        if subset.is_empty() {
            return Err(Error::InvalidInput(format!("subset {l} is empty")));
        }
        if let Some(&e) = subset.iter().find(|&&e| e >= num_elements) {
            return Err(Error::InvalidInput(format!(
                "subset {l} names element {e} outside the universe of {num_elements}"
            )));
        }
    }
    if let Some((l, &c)) = costs
        .iter()
        .enumerate()
        .find(|(_, &c)| !(c > T::zero()) || !c.is_finite())
    {
        return Err(Error::InvalidInput(format!(
            "subset {l} has cost {c}, expected positive"
        )));
    }
    let mut covered = vec![false; num_elements];
    for subset in subsets {
        for &e in subset {
            covered[e] = true;
        }
    }
    if let Some(element) = covered.iter().position(|&c| !c) {
        return Err(Error::UncoveredElement { element });
    }

    let l = subsets.len();
    let k = num_elements + l;
    let total_cost: T = costs.iter().copied().sum();
    let sentinel = from_f64::<T>(4.0) * total_cost;
    let two = from_f64::<T>(2.0);

    let mut ua = vec![vec![sentinel; k + 1]; k];
    for (i, row) in ua.iter_mut().enumerate() {
        row[i] = T::zero();
    }
    for (idx, subset) in subsets.iter().enumerate() {
        let cache = num_elements + idx;
        let in_subset: Vec<bool> = {
            let mut v = vec![false; num_elements];
            for &e in subset {
                v[e] = true;
            }
            v
        };
        for (e, &inside) in in_subset.iter().enumerate() {
            let cost = if inside { T::zero() } else { two * costs[idx] };
            ua[e][cache] = cost;
            ua[cache][e] = cost;
        }
    }

    let mut caching_cost = vec![vec![T::infinity()]; num_elements];
    caching_cost.extend(costs.iter().map(|&c| vec![c]));

    let mut instance = Instance::new(ua, caching_cost, vec![T::one()])?;
    instance.ua_is_metric = false;

    let mut gamma = vec![vec![1u64]; num_elements];
    gamma.extend(vec![vec![0u64]; l]);
    let demands = DemandMatrix::new(gamma)?;

    Ok((instance, demands))
}

/// Exhaustive minimum-cost set cover over all `2^L` subset collections.
pub fn set_cover_exact<T: Scalar>(
    num_elements: usize,
    subsets: &[Vec<usize>],
    costs: &[T],
) -> Result<T> {
    if subsets.len() != costs.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} subsets but {} costs",
            subsets.len(),
            costs.len()
        )));
    }
    if num_elements == 0 {
        return Ok(T::zero());
    }
    if num_elements > 63 {
        return Err(Error::InvalidInput(format!(
            "universe of {num_elements} elements exceeds the 63-element bound"
        )));
    }
    let l = subsets.len();
    if l > DEFAULT_ENUMERATION_LIMIT {
        return Err(Error::EnumerationLimitExceeded {
            candidates: l,
            limit: DEFAULT_ENUMERATION_LIMIT,
        });
    }
    let universe: u64 = (1u64 << num_elements) - 1;
    let masks: Vec<u64> = subsets
        .iter()
        .map(|subset| subset.iter().fold(0u64, |acc, &e| acc | (1 << e)))
        .collect();
    if masks.iter().fold(0, |acc, &m| acc | m) != universe {
        return Err(Error::NoCover);
    }

    let mut best = T::infinity();
    for collection in 0..(1u64 << l) {
        let mut covered = 0u64;
        let mut cost = T::zero();
        for (b, &mask) in masks.iter().enumerate() {
            if collection & (1 << b) != 0 {
                covered |= mask;
                cost += costs[b];
            }
        }
        if covered == universe && cost < best {
            best = cost;
        }
    }
    Ok(best)
}
