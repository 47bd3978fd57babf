//! Problem instances: station topologies, min-cost-path UA matrices,
//! caching costs, content sizes, validation and the on-disk format.
//!
//! An [`Instance`] is the immutable world the algorithms act on. Stations
//! are indexed `0..K`; index `K` is the Internet node. `ua[i][k]` is the
//! per-request, per-unit-size user-attrition cost of station `i` retrieving
//! from node `k`; `caching_cost[k][j]` is the per-unit-size fee for placing
//! content `j` at station `k`, with `+inf` as the "never cache here"
//! sentinel (encoded as the literal token `inf` on disk).

use crate::error::{Error, Result};
use crate::scalar::{from_f64, tolerance, Scalar};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use std::fmt;
use std::path::Path;

/// How the Internet column `T_i^K` of the UA matrix is produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InternetCost<T> {
    /// Multiple of the (post-closure) topology diameter, identical across
    /// stations. The default is a factor of 2.
    DiameterFactor(T),
    /// Fixed constant, identical across stations.
    Uniform(T),
    /// Explicit per-station costs.
    PerStation(Vec<T>),
}

impl<T: Scalar> Default for InternetCost<T> {
    fn default() -> Self {
        InternetCost::DiameterFactor(from_f64(2.0))
    }
}

/// An undirected backhaul link `(i, k, cost)`.
pub type Edge<T> = (usize, usize, T);

/// Station placement and backhaul links, prior to the metric closure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology<T> {
    /// Station coordinates in km, inside the `area_side` square.
    pub positions: Vec<[T; 2]>,
    /// Links between stations closer than `link_threshold`.
    pub edges: Vec<Edge<T>>,
    /// Extra links added to reconnect a disconnected placement.
    pub bridged: Vec<Edge<T>>,
    /// Policy for the Internet UA column.
    pub internet: InternetCost<T>,
    pub area_side: T,
    pub link_threshold: T,
    pub cost_scale: T,
    pub seed: Option<u64>,
}

impl<T: Scalar> Topology<T> {
    /// Builds the link set for fixed positions: one edge per pair strictly
    /// closer than `link_threshold`, edge cost = Euclidean distance times
    /// `cost_scale`. Disconnected placements are repaired by greedily adding
    /// the shortest bridging edge between components; repairs are kept in
    /// [`Topology::bridged`] rather than `edges`.
    pub fn from_positions(positions: Vec<[T; 2]>, link_threshold: T, cost_scale: T) -> Self {
        let n = positions.len();
        let dist = |a: usize, b: usize| -> T {
            let dx = positions[a][0] - positions[b][0];
            let dy = positions[a][1] - positions[b][1];
            (dx * dx + dy * dy).sqrt()
        };

        let mut edges = Vec::new();
        let mut dsu = DisjointSet::new(n);
        for i in 0..n {
            for k in (i + 1)..n {
                let d = dist(i, k);
                if d < link_threshold {
                    edges.push((i, k, d * cost_scale));
                    dsu.union(i, k);
                }
            }
        }

        let mut bridged = Vec::new();
        while dsu.components() > 1 {
            let mut best: Option<(T, usize, usize)> = None;
            for i in 0..n {
                for k in (i + 1)..n {
                    if dsu.find(i) == dsu.find(k) {
                        continue;
                    }
                    let d = dist(i, k);
                    if best.is_none_or(|(bd, _, _)| d < bd) {
                        best = Some((d, i, k));
                    }
                }
            }
            let (d, i, k) = best.expect("disconnected graph must have a cross-component pair");
            bridged.push((i, k, d * cost_scale));
            dsu.union(i, k);
        }

        Topology {
            positions,
            edges,
            bridged,
            internet: InternetCost::default(),
            area_side: T::zero(),
            link_threshold,
            cost_scale,
            seed: None,
        }
    }

    pub fn with_internet(mut self, internet: InternetCost<T>) -> Self {
        self.internet = internet;
        self
    }

    pub fn num_stations(&self) -> usize {
        self.positions.len()
    }

    /// True when connectivity repair had to add links.
    pub fn was_repaired(&self) -> bool {
        !self.bridged.is_empty()
    }

    fn all_edges(&self) -> impl Iterator<Item = &Edge<T>> {
        self.edges.iter().chain(self.bridged.iter())
    }
}

/// Draws `num_stations` positions uniformly at random in the
/// `area_side * area_side` square and links every pair strictly closer than
/// `link_threshold` (edge cost = Euclidean distance). Disconnected draws are
/// repaired and flagged via [`Topology::bridged`].
pub fn build_topology<T: Scalar>(
    num_stations: usize,
    area_side: T,
    link_threshold: T,
    seed: u64,
) -> Topology<T> {
    build_topology_scaled(num_stations, area_side, link_threshold, T::one(), seed)
}

/// [`build_topology`] with an explicit edge-cost scale factor (cost =
/// Euclidean distance times `cost_scale`).
pub fn build_topology_scaled<T: Scalar>(
    num_stations: usize,
    area_side: T,
    link_threshold: T,
    cost_scale: T,
    seed: u64,
) -> Topology<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = area_side.to_f64().expect("area side must be finite");
    let positions: Vec<[T; 2]> = (0..num_stations)
        .map(|_| {
            let x: f64 = rng.gen::<f64>() * side;
            let y: f64 = rng.gen::<f64>() * side;
            [from_f64(x), from_f64(y)]
        })
        .collect();
    let mut topo = Topology::from_positions(positions, link_threshold, cost_scale);
    topo.area_side = area_side;
    topo.seed = Some(seed);
    topo
}

/// In-place Floyd-Warshall closure of a square cost matrix
/// (`inf` = no path yet).
pub fn metric_closure<T: Scalar>(matrix: &mut [Vec<T>]) {
    let n = matrix.len();
    for via in 0..n {
        for i in 0..n {
            let d_iv = matrix[i][via];
            for k in 0..n {
                let cand = d_iv + matrix[via][k];
                if cand < matrix[i][k] {
                    matrix[i][k] = cand;
                }
            }
        }
    }
}

/// Computes the full `K x (K+1)` UA matrix of a topology: min-cost paths
/// over the link set, zero diagonal, and the Internet column resolved from
/// the topology's [`InternetCost`] policy.
pub fn all_pairs_ua<T: Scalar>(topology: &Topology<T>) -> Result<Vec<Vec<T>>> {
    let k = topology.num_stations();
    let mut d = vec![vec![T::infinity(); k]; k];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = T::zero();
    }
    for &(a, b, cost) in topology.all_edges() {
        if cost < d[a][b] {
            d[a][b] = cost;
            d[b][a] = cost;
        }
    }
    metric_closure(&mut d);

    let mut diameter = T::zero();
    for i in 0..k {
        for j in 0..k {
            if !d[i][j].is_finite() {
                return Err(Error::DisconnectedTopology { a: i, b: j });
            }
            if d[i][j] > diameter {
                diameter = d[i][j];
            }
        }
    }

    let internet: Vec<T> = match &topology.internet {
        InternetCost::DiameterFactor(f) => vec![*f * diameter; k],
        InternetCost::Uniform(c) => vec![*c; k],
        InternetCost::PerStation(v) => {
            if v.len() != k {
                return Err(Error::DimensionMismatch(format!(
                    "per-station internet cost has {} entries for {} stations",
                    v.len(),
                    k
                )));
            }
            v.clone()
        }
    };

    Ok(d.into_iter()
        .zip(internet)
        .map(|(mut row, net)| {
            row.push(net);
            row
        })
        .collect())
}

/// Generation record kept alongside an instance so downstream runs stay
/// reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceProvenance<T> {
    pub seed: Option<u64>,
    pub area_side: T,
    pub link_threshold: T,
    pub positions: Vec<[T; 2]>,
    pub edges: Vec<Edge<T>>,
    pub bridged: Vec<Edge<T>>,
}

/// A complete problem instance. Immutable after construction; share it
/// freely across workers.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance<T> {
    /// K. Stations are `0..K`; the Internet is index `K`.
    pub num_stations: usize,
    /// `K x (K+1)`: `ua[i][k]` = cost per request per unit size of serving
    /// station `i` from node `k`.
    pub ua: Vec<Vec<T>>,
    /// `K x M`: `caching_cost[k][j]`, `+inf` meaning content `j` can never
    /// be cached at station `k`.
    pub caching_cost: Vec<Vec<T>>,
    /// Content sizes in MB, length M.
    pub content_sizes: Vec<T>,
    /// False for constructed matrices (e.g. the set-cover reduction) whose
    /// UA costs are not min-cost-path distances; the triangle-inequality
    /// check is skipped for those and the validation report says so.
    pub ua_is_metric: bool,
    pub provenance: Option<InstanceProvenance<T>>,
}

impl<T: Scalar> Instance<T> {
    /// Assembles an instance from raw matrices, checking shapes only
    /// (value invariants are the job of [`validate_instance`]).
    pub fn new(ua: Vec<Vec<T>>, caching_cost: Vec<Vec<T>>, content_sizes: Vec<T>) -> Result<Self> {
        let k = ua.len();
        for (i, row) in ua.iter().enumerate() {
            if row.len() != k + 1 {
                return Err(Error::DimensionMismatch(format!(
                    "ua row {i} has {} columns, expected {}",
                    row.len(),
                    k + 1
                )));
            }
        }
        if caching_cost.len() != k {
            return Err(Error::DimensionMismatch(format!(
                "caching_cost has {} rows for {k} stations",
                caching_cost.len()
            )));
        }
        let m = content_sizes.len();
        for (i, row) in caching_cost.iter().enumerate() {
            if row.len() != m {
                return Err(Error::DimensionMismatch(format!(
                    "caching_cost row {i} has {} columns for {m} contents",
                    row.len()
                )));
            }
        }
        Ok(Instance {
            num_stations: k,
            ua,
            caching_cost,
            content_sizes,
            ua_is_metric: true,
            provenance: None,
        })
    }

    /// Builds the UA matrix from a topology and attaches its provenance.
    pub fn from_topology(
        topology: &Topology<T>,
        caching_cost: Vec<Vec<T>>,
        content_sizes: Vec<T>,
    ) -> Result<Self> {
        let ua = all_pairs_ua(topology)?;
        let mut inst = Instance::new(ua, caching_cost, content_sizes)?;
        inst.provenance = Some(InstanceProvenance {
            seed: topology.seed,
            area_side: topology.area_side,
            link_threshold: topology.link_threshold,
            positions: topology.positions.clone(),
            edges: topology.edges.clone(),
            bridged: topology.bridged.clone(),
        });
        Ok(inst)
    }

    pub fn num_contents(&self) -> usize {
        self.content_sizes.len()
    }

    /// Index of the Internet node.
    pub fn internet(&self) -> usize {
        self.num_stations
    }
}

/// One violated instance invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation<T> {
    NegativeUa {
        i: usize,
        k: usize,
        value: T,
    },
    NonFiniteUa {
        i: usize,
        k: usize,
        value: T,
    },
    NonzeroDiagonal {
        i: usize,
        value: T,
    },
    TriangleViolation {
        i: usize,
        k: usize,
        via: usize,
        direct: T,
        detour: T,
    },
    NegativeCachingCost {
        k: usize,
        j: usize,
        value: T,
    },
    NonFiniteCachingCost {
        k: usize,
        j: usize,
        value: T,
    },
    NonPositiveSize {
        j: usize,
        value: T,
    },
}

impl<T: fmt::Display> fmt::Display for Violation<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NegativeUa { i, k, value } => {
                write!(f, "ua[{i}][{k}] = {value} is negative")
            }
            Violation::NonFiniteUa { i, k, value } => {
                write!(f, "ua[{i}][{k}] = {value} is not finite")
            }
            Violation::NonzeroDiagonal { i, value } => {
                write!(f, "ua[{i}][{i}] = {value}, local service must cost 0")
            }
            Violation::TriangleViolation { i, k, via, direct, detour } => write!(
                f,
                "triangle inequality violated: ua[{i}][{k}] = {direct} > ua[{i}][{via}] + ua[{via}][{k}] = {detour}"
            ),
            Violation::NegativeCachingCost { k, j, value } => {
                write!(f, "caching_cost[{k}][{j}] = {value} is negative")
            }
            Violation::NonFiniteCachingCost { k, j, value } => write!(
                f,
                "caching_cost[{k}][{j}] = {value} is neither finite nor the inf sentinel"
            ),
            Violation::NonPositiveSize { j, value } => {
                write!(f, "content_sizes[{j}] = {value} must be positive")
            }
        }
    }
}

/// Outcome of [`validate_instance`]; empty means valid.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport<T> {
    pub violations: Vec<Violation<T>>,
    /// True when the triangle-inequality check was skipped because the
    /// instance declares a non-metric UA matrix.
    pub triangle_skipped: bool,
}

impl<T: Scalar> ValidationReport<T> {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl<T: Scalar> fmt::Display for ValidationReport<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_valid() {
            write!(f, "instance is valid")?;
        } else {
            writeln!(f, "{} violation(s):", self.violations.len())?;
            for v in &self.violations {
                writeln!(f, "  - {v}")?;
            }
        }
        if self.triangle_skipped {
            write!(
                f,
                " (triangle-inequality check skipped: non-metric UA matrix)"
            )?;
        }
        Ok(())
    }
}

/// Checks every value invariant and reports all violations; never fails.
/// Triangle violations are tested at absolute tolerance 1e-9 over station
/// triples (the Internet column is an independent parameter and exempt).
pub fn validate_instance<T: Scalar>(instance: &Instance<T>) -> ValidationReport<T> {
    let mut violations = Vec::new();
    let k = instance.num_stations;
    let tol = tolerance::<T>();

    for (i, row) in instance.ua.iter().enumerate() {
        for (kk, &v) in row.iter().enumerate() {
            if !v.is_finite() {
                violations.push(Violation::NonFiniteUa { i, k: kk, value: v });
            } else if v < T::zero() {
                violations.push(Violation::NegativeUa { i, k: kk, value: v });
            }
        }
        if row[i] != T::zero() {
            violations.push(Violation::NonzeroDiagonal { i, value: row[i] });
        }
    }

    if instance.ua_is_metric {
        for i in 0..k {
            for kk in 0..k {
                let direct = instance.ua[i][kk];
                for via in 0..k {
                    let detour = instance.ua[i][via] + instance.ua[via][kk];
                    if direct > detour + tol {
                        violations.push(Violation::TriangleViolation {
                            i,
                            k: kk,
                            via,
                            direct,
                            detour,
                        });
                    }
                }
            }
        }
    }

    for (kk, row) in instance.caching_cost.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if v.is_nan() || v == T::neg_infinity() {
                violations.push(Violation::NonFiniteCachingCost { k: kk, j, value: v });
            } else if v < T::zero() {
                violations.push(Violation::NegativeCachingCost { k: kk, j, value: v });
            }
        }
    }

    for (j, &s) in instance.content_sizes.iter().enumerate() {
        if !(s > T::zero()) || !s.is_finite() {
            violations.push(Violation::NonPositiveSize { j, value: s });
        }
    }

    ValidationReport {
        violations,
        triangle_skipped: !instance.ua_is_metric,
    }
}

const INSTANCE_SCHEMA: &str = "cellcache/instance";
const INSTANCE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: serde::Deserialize<'de>"))]
struct InstanceDoc<T> {
    schema: String,
    version: u32,
    num_stations: usize,
    content_sizes: Vec<T>,
    ua: Vec<Vec<T>>,
    caching_cost: Vec<Vec<T>>,
    #[serde(default = "default_true")]
    ua_is_metric: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<InstanceProvenance<T>>,
}

fn default_true() -> bool {
    true
}

fn schema_err(path: &Path, message: impl fmt::Display) -> Error {
    Error::Schema {
        path: path.display().to_string(),
        message: message.to_string(),
    }
}

/// Writes the instance as a versioned TOML document. `+inf` caching costs
/// round-trip as the literal token `inf`.
pub fn save_instance<T: Scalar + Serialize>(instance: &Instance<T>, path: &Path) -> Result<()> {
    let doc = InstanceDoc {
        schema: INSTANCE_SCHEMA.to_string(),
        version: INSTANCE_VERSION,
        num_stations: instance.num_stations,
        content_sizes: instance.content_sizes.clone(),
        ua: instance.ua.clone(),
        caching_cost: instance.caching_cost.clone(),
        ua_is_metric: instance.ua_is_metric,
        provenance: instance.provenance.clone(),
    };
    let text = toml::to_string(&doc).map_err(|e| schema_err(path, e))?;
    std::fs::write(path, text)?;
    Ok(())
}

/// Loads an instance document, checking the schema header and shapes.
/// Parse failures surface the TOML diagnostics (offending field, line/column).
pub fn load_instance<T: Scalar + DeserializeOwned>(path: &Path) -> Result<Instance<T>> {
    let text = std::fs::read_to_string(path)?;
    let doc: InstanceDoc<T> = toml::from_str(&text).map_err(|e| schema_err(path, e))?;
    if doc.schema != INSTANCE_SCHEMA {
        return Err(schema_err(
            path,
            format!("schema is {:?}, expected {INSTANCE_SCHEMA:?}", doc.schema),
        ));
    }
    if doc.version != INSTANCE_VERSION {
        return Err(schema_err(
            path,
            format!(
                "version {} unsupported (expected {INSTANCE_VERSION})",
                doc.version
            ),
        ));
    }
    if doc.ua.len() != doc.num_stations {
        return Err(schema_err(
            path,
            format!(
                "ua has {} rows but num_stations is {}",
                doc.ua.len(),
                doc.num_stations
            ),
        ));
    }
    let mut instance = Instance::new(doc.ua, doc.caching_cost, doc.content_sizes)
        .map_err(|e| schema_err(path, e))?;
    instance.ua_is_metric = doc.ua_is_metric;
    instance.provenance = doc.provenance;
    Ok(instance)
}

struct DisjointSet {
    parent: Vec<usize>,
    components: usize,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n).collect(),
            components: n.max(1),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra != rb {
            self.parent[ra] = rb;
            self.components -= 1;
        }
    }

    fn components(&self) -> usize {
        self.components
    }
}
