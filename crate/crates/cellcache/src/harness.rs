//! Experiment orchestration: runs the three caching schemes over seeded
//! parameter sweeps, costs placement plans against the actual demands, and
//! emits CSV tables, savings CDFs and competitive-ratio reports.
//!
//! The whole pipeline is a pure function of the configuration: every random
//! draw comes from a seed derived with [`sub_seed`], runs execute in
//! parallel and are written in run order, so reruns produce byte-identical
//! outputs.

use crate::error::{Error, Result};
use crate::instance::{build_topology, validate_instance, Instance, InternetCost};
use crate::offline::{
    complete_assignments, offline_collaborative_exact, offline_noncollaborative, plan_cost,
    verify_plan,
};
use crate::online::run_stream;
use crate::scalar::{from_f64, tolerance, Scalar};
use crate::workload::{
    demands_to_stream, gen_demands, perturb_uniform, shuffle_ranks, DemandMatrix, StreamPolicy,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::Write;
use std::path::Path;

/// Instance-side sweep parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InstanceParams {
    pub num_stations: usize,
    pub area_side: f64,
    pub link_threshold: f64,
    /// Internet cost as a multiple of the topology diameter; ignored when
    /// `internet_cost_constant` is set.
    pub internet_cost_factor: f64,
    pub internet_cost_constant: Option<f64>,
    /// Caching costs are drawn per (station, content) uniformly from
    /// `mean * [1 - spread, 1 + spread]`.
    pub caching_cost_mean: f64,
    pub caching_cost_spread: f64,
}

impl Default for InstanceParams {
    fn default() -> Self {
        InstanceParams {
            num_stations: 10,
            area_side: 50.0,
            link_threshold: 15.0,
            internet_cost_factor: 4.0,
            internet_cost_constant: None,
            caching_cost_mean: 600.0,
            caching_cost_spread: 0.5,
        }
    }
}

/// Workload-side sweep parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadParams {
    pub num_contents: usize,
    /// Content sizes are drawn uniformly from the integer range
    /// `size_min..=size_max` (MB).
    pub size_min: u32,
    pub size_max: u32,
    pub zeta: f64,
    pub users_per_station: f64,
    pub stream_policy: StreamPolicy,
}

impl Default for WorkloadParams {
    fn default() -> Self {
        WorkloadParams {
            num_contents: 20,
            size_min: 10,
            size_max: 20,
            zeta: 1.1,
            users_per_station: 100.0,
            stream_policy: StreamPolicy::RandomInterleave,
        }
    }
}

/// Popularity-estimation error applied to the demands the offline schemes
/// optimize on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ErrorModel {
    #[default]
    None,
    /// Estimated demands drawn uniformly from `[(1-margin)g, (1+margin)g]`.
    Uniform { margin: f64 },
    /// Per-station content rankings re-drawn independently.
    RankShuffle,
}

impl std::str::FromStr for ErrorModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "none" {
            return Ok(ErrorModel::None);
        }
        if s == "rank-shuffle" {
            return Ok(ErrorModel::RankShuffle);
        }
        if let Some(margin) = s.strip_prefix("uniform:") {
            let margin: f64 = margin
                .parse()
                .map_err(|_| Error::InvalidInput(format!("bad uniform margin in {s:?}")))?;
            return Ok(ErrorModel::Uniform { margin });
        }
        Err(Error::InvalidInput(format!(
            "unknown error model {s:?} (expected none, uniform:<margin> or rank-shuffle)"
        )))
    }
}

/// The three caching schemes under comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Online,
    OfflineCollab,
    Noncollab,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Online, Scheme::OfflineCollab, Scheme::Noncollab];
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scheme::Online => write!(f, "online"),
            Scheme::OfflineCollab => write!(f, "offline-collab"),
            Scheme::Noncollab => write!(f, "noncollab"),
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "online" => Ok(Scheme::Online),
            "offline-collab" => Ok(Scheme::OfflineCollab),
            "noncollab" => Ok(Scheme::Noncollab),
            other => Err(Error::InvalidInput(format!(
                "unknown scheme {other:?} (expected online, offline-collab or noncollab)"
            ))),
        }
    }
}

/// Full experiment configuration; the resolved copy is echoed into the
/// output manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub runs: usize,
    pub base_seed: u64,
    pub schemes: Vec<Scheme>,
    pub instance: InstanceParams,
    pub workload: WorkloadParams,
    pub error_model: ErrorModel,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "experiment".to_string(),
            runs: 20,
            base_seed: 1,
            schemes: Scheme::ALL.to_vec(),
            instance: InstanceParams::default(),
            workload: WorkloadParams::default(),
            error_model: ErrorModel::None,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let config: ExperimentConfig = toml::from_str(&text).map_err(|e| Error::Schema {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        if config.runs == 0 {
            return Err(Error::InvalidInput("runs must be at least 1".into()));
        }
        Ok(config)
    }

    fn has(&self, scheme: Scheme) -> bool {
        self.schemes.contains(&scheme)
    }
}

const TAG_INSTANCE: u64 = 1;
const TAG_TOPOLOGY: u64 = 2;
const TAG_CACHING: u64 = 3;
const TAG_SIZES: u64 = 4;
const TAG_DEMANDS: u64 = 5;
const TAG_ERROR: u64 = 6;
const TAG_STREAM: u64 = 7;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable derivation of per-run, per-purpose seeds from the base seed.
pub fn sub_seed(base: u64, run: u64, tag: u64) -> u64 {
    splitmix64(splitmix64(base ^ splitmix64(run)) ^ tag)
}

/// Draws a full instance for one run: random topology, uniform caching
/// costs around the configured mean, integer content sizes in the
/// configured range.
pub fn generate_instance<T: Scalar>(
    instance: &InstanceParams,
    workload: &WorkloadParams,
    seed: u64,
) -> Result<Instance<T>> {
    let internet = match instance.internet_cost_constant {
        Some(c) => InternetCost::Uniform(from_f64(c)),
        None => InternetCost::DiameterFactor(from_f64(instance.internet_cost_factor)),
    };
    let topology = build_topology::<T>(
        instance.num_stations,
        from_f64(instance.area_side),
        from_f64(instance.link_threshold),
        sub_seed(seed, 0, TAG_TOPOLOGY),
    )
    .with_internet(internet);

    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, 0, TAG_CACHING));
    let mean = instance.caching_cost_mean;
    let spread = instance.caching_cost_spread;
    let caching_cost: Vec<Vec<T>> = (0..instance.num_stations)
        .map(|_| {
            (0..workload.num_contents)
                .map(|_| {
                    let lo = mean * (1.0 - spread);
                    let hi = mean * (1.0 + spread);
                    from_f64(lo + rng.gen::<f64>() * (hi - lo))
                })
                .collect()
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, 0, TAG_SIZES));
    let content_sizes: Vec<T> = (0..workload.num_contents)
        .map(|_| from_f64(rng.gen_range(workload.size_min..=workload.size_max) as f64))
        .collect();

    let inst = Instance::from_topology(&topology, caching_cost, content_sizes)?;
    let report = validate_instance(&inst);
    if !report.is_valid() {
        return Err(Error::Validation(report.to_string()));
    }
    Ok(inst)
}

/// Split cost of one scheme on one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeCost<T> {
    pub caching: T,
    pub ua: T,
    pub total: T,
}

/// Per-content contribution to a competitive report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContentCompetitive<T> {
    pub content: usize,
    /// Processed (non-hit) requests for this content.
    pub n: u64,
    pub online_cost: T,
    pub offline_cost: T,
    pub bound_tight: T,
    pub bound_conservative: T,
    pub within_tight: bool,
    pub within_conservative: bool,
}

/// Measured online/offline ratio against both candidate bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct CompetitiveReport<T> {
    pub online_cost: T,
    pub offline_cost: T,
    pub ratio: T,
    /// Largest per-content processed-request count, the `n` the aggregated
    /// bounds are evaluated at.
    pub n_max: u64,
    pub bound_tight: T,
    pub bound_conservative: T,
    pub within_tight: bool,
    pub within_conservative: bool,
    pub per_content: Vec<ContentCompetitive<T>>,
}

impl<T: Scalar> CompetitiveReport<T> {
    /// True when any conservative bound is violated; flagged runs are
    /// implementation defects.
    pub fn defect(&self) -> bool {
        !self.within_conservative || self.per_content.iter().any(|c| !c.within_conservative)
    }
}

/// `4 ln(n+1) + 2`.
pub fn tight_bound<T: Scalar>(n: u64) -> T {
    from_f64::<T>(4.0 * ((n + 1) as f64).ln() + 2.0)
}

/// `4 ln(n+1) + 6`, the bound the harmonic-sum argument actually certifies.
pub fn conservative_bound<T: Scalar>(n: u64) -> T {
    from_f64::<T>(4.0 * ((n + 1) as f64).ln() + 6.0)
}

/// Aggregate competitive report from scheme totals and the per-content
/// processed-request counts. The offline cost must be positive.
pub fn competitive_ratio_report<T: Scalar>(
    online_cost: T,
    offline_cost: T,
    n_per_content: &[u64],
) -> Result<CompetitiveReport<T>> {
    if !(offline_cost > T::zero()) {
        return Err(Error::InvalidInput(format!(
            "offline cost {offline_cost} must be positive"
        )));
    }
    let n_max = n_per_content.iter().copied().max().unwrap_or(0);
    let tol = tolerance::<T>();
    let bound_tight = tight_bound::<T>(n_max);
    let bound_conservative = conservative_bound::<T>(n_max);
    Ok(CompetitiveReport {
        online_cost,
        offline_cost,
        ratio: online_cost / offline_cost,
        n_max,
        bound_tight,
        bound_conservative,
        within_tight: online_cost <= bound_tight * offline_cost + tol,
        within_conservative: online_cost <= bound_conservative * offline_cost + tol,
        per_content: Vec::new(),
    })
}

/// Competitive report with per-content resolution; contents with zero
/// offline cost are held to (online <= tolerance).
pub fn competitive_report_detailed<T: Scalar>(
    online_per_content: &[T],
    offline_per_content: &[T],
    n_per_content: &[u64],
) -> Result<CompetitiveReport<T>> {
    if online_per_content.len() != offline_per_content.len()
        || online_per_content.len() != n_per_content.len()
    {
        return Err(Error::DimensionMismatch(
            "per-content vectors disagree in length".to_string(),
        ));
    }
    let tol = tolerance::<T>();
    let mut per_content = Vec::with_capacity(n_per_content.len());
    for (j, ((&online, &offline), &n)) in online_per_content
        .iter()
        .zip(offline_per_content)
        .zip(n_per_content)
        .enumerate()
    {
        let bound_tight = tight_bound::<T>(n);
        let bound_conservative = conservative_bound::<T>(n);
        let (within_tight, within_conservative) = if offline > T::zero() {
            (
                online <= bound_tight * offline + tol,
                online <= bound_conservative * offline + tol,
            )
        } else {
            let ok = online <= tol;
            (ok, ok)
        };
        per_content.push(ContentCompetitive {
            content: j,
            n,
            online_cost: online,
            offline_cost: offline,
            bound_tight,
            bound_conservative,
            within_tight,
            within_conservative,
        });
    }
    let online_total: T = online_per_content.iter().copied().sum();
    let offline_total: T = offline_per_content.iter().copied().sum();
    let n_max = n_per_content.iter().copied().max().unwrap_or(0);
    let bound_tight = tight_bound::<T>(n_max);
    let bound_conservative = conservative_bound::<T>(n_max);
    let (ratio, within_tight, within_conservative) = if offline_total > T::zero() {
        (
            online_total / offline_total,
            online_total <= bound_tight * offline_total + tol,
            online_total <= bound_conservative * offline_total + tol,
        )
    } else {
        let ok = online_total <= tol;
        (T::one(), ok, ok)
    };
    Ok(CompetitiveReport {
        online_cost: online_total,
        offline_cost: offline_total,
        ratio,
        n_max,
        bound_tight,
        bound_conservative,
        within_tight,
        within_conservative,
        per_content,
    })
}

/// Per-run savings of a scheme against a positive baseline, as empirical
/// CDF points `(savings percent, cumulative fraction)`.
pub fn cost_savings_cdf<T: Scalar>(
    costs_scheme: &[T],
    costs_baseline: &[T],
) -> Result<Vec<(T, f64)>> {
    if costs_scheme.len() != costs_baseline.len() || costs_scheme.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "scheme has {} runs, baseline {}",
            costs_scheme.len(),
            costs_baseline.len()
        )));
    }
    let hundred = from_f64::<T>(100.0);
    let mut savings = Vec::with_capacity(costs_scheme.len());
    for (index, (&s, &b)) in costs_scheme.iter().zip(costs_baseline).enumerate() {
        if !(b > T::zero()) {
            return Err(Error::ZeroBaseline { index });
        }
        savings.push((T::one() - s / b) * hundred);
    }
    savings.sort_by(|a, b| a.partial_cmp(b).expect("savings are finite"));
    let n = savings.len() as f64;
    Ok(savings
        .into_iter()
        .enumerate()
        .map(|(i, r)| (r, (i + 1) as f64 / n))
        .collect())
}

/// Everything measured in one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord<T> {
    pub run: usize,
    pub online: Option<SchemeCost<T>>,
    pub offline_collab: Option<SchemeCost<T>>,
    pub noncollab: Option<SchemeCost<T>>,
    /// Online vs the exact optimum on the actual demands (present whenever
    /// the online scheme ran).
    pub competitive: Option<CompetitiveReport<T>>,
}

impl<T> RunRecord<T> {
    pub fn cost(&self, scheme: Scheme) -> Option<&SchemeCost<T>> {
        match scheme {
            Scheme::Online => self.online.as_ref(),
            Scheme::OfflineCollab => self.offline_collab.as_ref(),
            Scheme::Noncollab => self.noncollab.as_ref(),
        }
    }
}

/// Results of a full experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResults<T> {
    pub config: ExperimentConfig,
    pub runs: Vec<RunRecord<T>>,
}

impl<T: Scalar> ExperimentResults<T> {
    pub fn totals(&self, scheme: Scheme) -> Vec<T> {
        self.runs
            .iter()
            .filter_map(|r| r.cost(scheme).map(|c| c.total))
            .collect()
    }

    pub fn mean_total(&self, scheme: Scheme) -> Option<T> {
        let totals = self.totals(scheme);
        if totals.is_empty() {
            return None;
        }
        let n = from_f64::<T>(totals.len() as f64);
        Some(totals.into_iter().sum::<T>() / n)
    }

    /// Fraction of runs where the online scheme strictly beats the offline
    /// collaborative scheme (interesting under estimation error).
    pub fn fraction_online_beats_offline(&self) -> Option<f64> {
        let mut total = 0usize;
        let mut wins = 0usize;
        for run in &self.runs {
            if let (Some(online), Some(offline)) = (&run.online, &run.offline_collab) {
                total += 1;
                if online.total < offline.total {
                    wins += 1;
                }
            }
        }
        (total > 0).then(|| wins as f64 / total as f64)
    }

    pub fn any_defect(&self) -> bool {
        self.runs
            .iter()
            .any(|r| r.competitive.as_ref().is_some_and(|c| c.defect()))
    }
}

/// Runs every configured scheme over `config.runs` seeded runs. Offline
/// schemes optimize on the estimated demands (when an error model is set)
/// and are costed against the actual demands; the online scheme always
/// consumes the actual request stream.
pub fn run_experiment<T: Scalar>(config: &ExperimentConfig) -> Result<ExperimentResults<T>> {
    let (results, error) = run_experiment_partial(config);
    match error {
        Some(e) => Err(e),
        None => Ok(results),
    }
}

/// Like [`run_experiment`], but on failure returns the completed run prefix
/// alongside the first error, so callers can flush partial results.
pub fn run_experiment_partial<T: Scalar>(
    config: &ExperimentConfig,
) -> (ExperimentResults<T>, Option<Error>) {
    let outcomes: Vec<Result<RunRecord<T>>> = (0..config.runs)
        .into_par_iter()
        .map(|run| execute_run::<T>(config, run))
        .collect();
    let mut runs = Vec::new();
    let mut error = if config.runs == 0 {
        Some(Error::InvalidInput("runs must be at least 1".into()))
    } else {
        None
    };
    for (run, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(record) if error.is_none() => runs.push(record),
            Ok(_) => {}
            Err(e) if error.is_none() => error = Some(e.at_run(run)),
            Err(_) => {}
        }
    }
    (
        ExperimentResults {
            config: config.clone(),
            runs,
        },
        error,
    )
}

/// One point of a cost-vs-parameter curve: the swept value and the mean
/// total per scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint<T> {
    pub value: f64,
    pub online: Option<T>,
    pub offline_collab: Option<T>,
    pub noncollab: Option<T>,
}

/// Sweepable experiment parameters for cost-vs-parameter curves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Stations,
    Zeta,
    CachingCostMean,
    UsersPerStation,
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SweepParam::Stations => write!(f, "stations"),
            SweepParam::Zeta => write!(f, "zeta"),
            SweepParam::CachingCostMean => write!(f, "caching-cost-mean"),
            SweepParam::UsersPerStation => write!(f, "users"),
        }
    }
}

impl std::str::FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stations" => Ok(SweepParam::Stations),
            "zeta" => Ok(SweepParam::Zeta),
            "caching-cost-mean" => Ok(SweepParam::CachingCostMean),
            "users" => Ok(SweepParam::UsersPerStation),
            other => Err(Error::InvalidInput(format!(
                "unknown sweep parameter {other:?} (expected stations, zeta, caching-cost-mean or users)"
            ))),
        }
    }
}

/// Repeats the experiment at each value of the swept parameter and reports
/// the mean total per scheme, the data behind cost-vs-parameter curves.
pub fn sweep_experiment<T: Scalar>(
    config: &ExperimentConfig,
    param: SweepParam,
    values: &[f64],
) -> Result<Vec<CurvePoint<T>>> {
    if values.is_empty() {
        return Err(Error::InvalidInput("sweep needs at least one value".into()));
    }
    let mut points = Vec::with_capacity(values.len());
    for &value in values {
        let mut point_config = config.clone();
        match param {
            SweepParam::Stations => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(Error::InvalidInput(format!(
                        "station count {value} must be a positive integer"
                    )));
                }
                point_config.instance.num_stations = value as usize;
            }
            SweepParam::Zeta => point_config.workload.zeta = value,
            SweepParam::CachingCostMean => point_config.instance.caching_cost_mean = value,
            SweepParam::UsersPerStation => point_config.workload.users_per_station = value,
        }
        let results = run_experiment::<T>(&point_config)?;
        points.push(CurvePoint {
            value,
            online: results.mean_total(Scheme::Online),
            offline_collab: results.mean_total(Scheme::OfflineCollab),
            noncollab: results.mean_total(Scheme::Noncollab),
        });
    }
    Ok(points)
}

/// Writes a curve as gnuplot-friendly CSV:
/// `value,online,offline_collab,noncollab` (empty cell when a scheme did
/// not run).
pub fn write_curve<T: Scalar>(points: &[CurvePoint<T>], path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "value,online,offline_collab,noncollab")?;
    let cell = |v: &Option<T>| v.map(|x| x.to_string()).unwrap_or_default();
    for p in points {
        writeln!(
            w,
            "{},{},{},{}",
            p.value,
            cell(&p.online),
            cell(&p.offline_collab),
            cell(&p.noncollab)
        )?;
    }
    w.flush()?;
    Ok(())
}

fn execute_run<T: Scalar>(config: &ExperimentConfig, run: usize) -> Result<RunRecord<T>> {
    let base = config.base_seed;
    let run_u = run as u64;
    let instance = generate_instance::<T>(
        &config.instance,
        &config.workload,
        sub_seed(base, run_u, TAG_INSTANCE),
    )?;
    let actual = gen_demands(
        config.instance.num_stations,
        config.workload.num_contents,
        config.workload.users_per_station,
        config.workload.zeta,
        sub_seed(base, run_u, TAG_DEMANDS),
    );
    let estimated = match config.error_model {
        ErrorModel::None => None,
        ErrorModel::Uniform { margin } => Some(perturb_uniform(
            &actual,
            margin,
            sub_seed(base, run_u, TAG_ERROR),
        )?),
        ErrorModel::RankShuffle => Some(shuffle_ranks(&actual, sub_seed(base, run_u, TAG_ERROR))?),
    };
    let optimize_on: &DemandMatrix = estimated.as_ref().unwrap_or(&actual);

    let mut record = RunRecord {
        run,
        online: None,
        offline_collab: None,
        noncollab: None,
        competitive: None,
    };

    if config.has(Scheme::Online) {
        let stream = demands_to_stream(
            &actual,
            sub_seed(base, run_u, TAG_STREAM),
            config.workload.stream_policy,
        );
        let outcome = run_stream(&instance, &stream)?;
        record.online = Some(SchemeCost {
            caching: outcome.ledger.total_caching(),
            ua: outcome.ledger.total_ua(),
            total: outcome.ledger.total(),
        });

        // Competitive accounting always compares against the exact optimum
        // on the actual demands, regardless of the error model.
        let (true_plan, _) = offline_collaborative_exact(&instance, &actual)?;
        let opt_cost = plan_cost(&instance, &actual, &true_plan);
        let online_per_content: Vec<T> = (0..instance.num_contents())
            .map(|j| outcome.ledger.content_total(j))
            .collect();
        let n_per_content: Vec<u64> = outcome
            .states
            .iter()
            .map(|s| s.processed_requests())
            .collect();
        record.competitive = Some(competitive_report_detailed(
            &online_per_content,
            &opt_cost.per_content,
            &n_per_content,
        )?);
    }

    if config.has(Scheme::OfflineCollab) {
        let (plan, _) = offline_collaborative_exact(&instance, optimize_on)?;
        let completed = complete_assignments(&instance, &actual, &plan, true);
        let (_, report) = verify_plan(&instance, &actual, &completed);
        if !report.feasible() {
            return Err(Error::Validation(format!(
                "completed collaborative plan infeasible: {:?}",
                report.violations
            )));
        }
        record.offline_collab = Some(SchemeCost {
            caching: report.cost.caching,
            ua: report.cost.ua,
            total: report.cost.total,
        });
    }

    if config.has(Scheme::Noncollab) {
        let (plan, _) = offline_noncollaborative(&instance, optimize_on)?;
        let completed = complete_assignments(&instance, &actual, &plan, false);
        let (_, report) = verify_plan(&instance, &actual, &completed);
        if !report.feasible() {
            return Err(Error::Validation(format!(
                "completed non-collaborative plan infeasible: {:?}",
                report.violations
            )));
        }
        record.noncollab = Some(SchemeCost {
            caching: report.cost.caching,
            ua: report.cost.ua,
            total: report.cost.total,
        });
    }

    Ok(record)
}

const MANIFEST_SCHEMA: &str = "cellcache/experiment-manifest";

#[derive(Serialize, Deserialize)]
struct ManifestDoc {
    schema: String,
    version: u32,
    config: ExperimentConfig,
}

/// Writes the full output set of an experiment into `out_dir`:
/// `manifest.toml`, `results.csv`, `competitive.csv`, `summary.csv` and the
/// savings-CDF tables for every scheme pair that ran.
pub fn write_outputs<T: Scalar>(results: &ExperimentResults<T>, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;

    let manifest = ManifestDoc {
        schema: MANIFEST_SCHEMA.to_string(),
        version: 1,
        config: results.config.clone(),
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::Schema {
        path: out_dir.join("manifest.toml").display().to_string(),
        message: e.to_string(),
    })?;
    std::fs::write(out_dir.join("manifest.toml"), text)?;

    let mut w = std::io::BufWriter::new(std::fs::File::create(out_dir.join("results.csv"))?);
    writeln!(w, "run,scheme,caching_cost,ua_cost,total_cost")?;
    for record in &results.runs {
        for scheme in Scheme::ALL {
            if let Some(cost) = record.cost(scheme) {
                writeln!(
                    w,
                    "{},{},{},{},{}",
                    record.run, scheme, cost.caching, cost.ua, cost.total
                )?;
            }
        }
    }
    w.flush()?;

    let mut w = std::io::BufWriter::new(std::fs::File::create(out_dir.join("competitive.csv"))?);
    writeln!(
        w,
        "run,content,n,online_cost,offline_cost,bound_tight,bound_conservative,within_tight,within_conservative"
    )?;
    for record in &results.runs {
        if let Some(report) = &record.competitive {
            writeln!(
                w,
                "{},all,{},{},{},{},{},{},{}",
                record.run,
                report.n_max,
                report.online_cost,
                report.offline_cost,
                report.bound_tight,
                report.bound_conservative,
                report.within_tight,
                report.within_conservative
            )?;
            for c in &report.per_content {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{},{}",
                    record.run,
                    c.content,
                    c.n,
                    c.online_cost,
                    c.offline_cost,
                    c.bound_tight,
                    c.bound_conservative,
                    c.within_tight,
                    c.within_conservative
                )?;
            }
        }
    }
    w.flush()?;

    write_summary_and_cdfs(results, out_dir)?;
    Ok(())
}

fn write_summary_and_cdfs<T: Scalar>(results: &ExperimentResults<T>, out_dir: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(out_dir.join("summary.csv"))?);
    writeln!(w, "metric,value")?;
    writeln!(w, "runs,{}", results.runs.len())?;
    for scheme in Scheme::ALL {
        if let Some(mean) = results.mean_total(scheme) {
            writeln!(w, "mean_total_{scheme},{mean}")?;
        }
    }
    if let (Some(non), Some(col)) = (
        results.mean_total(Scheme::Noncollab),
        results.mean_total(Scheme::OfflineCollab),
    ) {
        writeln!(w, "ratio_noncollab_over_offline_collab,{}", non / col)?;
    }
    if let Some(frac) = results.fraction_online_beats_offline() {
        writeln!(w, "fraction_online_beats_offline_collab,{frac}")?;
    }
    let defects = results
        .runs
        .iter()
        .filter(|r| r.competitive.as_ref().is_some_and(|c| c.defect()))
        .count();
    writeln!(w, "competitive_defect_runs,{defects}")?;
    w.flush()?;

    if results.runs.is_empty() {
        return Ok(());
    }
    let pairs = [
        (Scheme::OfflineCollab, "cdf_offline_collab_vs_noncollab.csv"),
        (Scheme::Online, "cdf_online_vs_noncollab.csv"),
    ];
    for (scheme, file) in pairs {
        let scheme_costs = results.totals(scheme);
        let baseline = results.totals(Scheme::Noncollab);
        if scheme_costs.len() == results.runs.len() && baseline.len() == results.runs.len() {
            write_cdf(
                &cost_savings_cdf(&scheme_costs, &baseline)?,
                &out_dir.join(file),
            )?;
        }
    }
    let online = results.totals(Scheme::Online);
    let offline = results.totals(Scheme::OfflineCollab);
    if online.len() == results.runs.len() && offline.len() == results.runs.len() {
        write_cdf(
            &cost_savings_cdf(&online, &offline)?,
            &out_dir.join("cdf_online_vs_offline_collab.csv"),
        )?;
    }
    Ok(())
}

fn write_cdf<T: Scalar>(points: &[(T, f64)], path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "savings_pct,cum_fraction")?;
    for (savings, fraction) in points {
        writeln!(w, "{savings},{fraction}")?;
    }
    w.flush()?;
    Ok(())
}

/// One parsed row of a `results.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultsRow {
    pub run: usize,
    pub scheme: Scheme,
    pub caching: f64,
    pub ua: f64,
    pub total: f64,
}

/// Reads a `results.csv` produced by [`write_outputs`].
pub fn read_results_csv(path: &Path) -> Result<Vec<ResultsRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Schema {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Schema {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let field = |i: usize| -> Result<&str> {
            record.get(i).ok_or_else(|| Error::Schema {
                path: path.display().to_string(),
                message: format!("missing column {i}"),
            })
        };
        let parse_f = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::Schema {
                path: path.display().to_string(),
                message: format!("bad number {s:?}"),
            })
        };
        rows.push(ResultsRow {
            run: field(0)?.parse().map_err(|_| Error::Schema {
                path: path.display().to_string(),
                message: "bad run index".to_string(),
            })?,
            scheme: field(1)?.parse()?,
            caching: parse_f(field(2)?)?,
            ua: parse_f(field(3)?)?,
            total: parse_f(field(4)?)?,
        });
    }
    Ok(rows)
}

/// Recomputes summary and CDF tables from a parsed `results.csv`; the
/// `report` CLI subcommand is a thin wrapper over this.
pub fn write_report_from_rows(rows: &[ResultsRow], out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let mut runs: Vec<usize> = rows.iter().map(|r| r.run).collect();
    runs.sort_unstable();
    runs.dedup();
    let results = ExperimentResults::<f64> {
        config: ExperimentConfig::default(),
        runs: runs
            .iter()
            .map(|&run| RunRecord {
                run,
                online: scheme_cost_for(rows, run, Scheme::Online),
                offline_collab: scheme_cost_for(rows, run, Scheme::OfflineCollab),
                noncollab: scheme_cost_for(rows, run, Scheme::Noncollab),
                competitive: None,
            })
            .collect(),
    };
    write_summary_and_cdfs(&results, out_dir)
}

fn scheme_cost_for(rows: &[ResultsRow], run: usize, scheme: Scheme) -> Option<SchemeCost<f64>> {
    rows.iter()
        .find(|r| r.run == run && r.scheme == scheme)
        .map(|r| SchemeCost {
            caching: r.caching,
            ua: r.ua,
            total: r.total,
        })
}
