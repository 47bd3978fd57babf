//! Demand and request-stream generation: Zipf popularity with independent
//! per-station rankings, stream interleaving policies, and the two
//! estimation-error models (uniform margin, rank shuffle).
//!
//! Everything here is a pure function of its parameters and a seed.

use crate::error::{Error, Result};
use crate::scalar::{from_f64, Scalar};
use rand::distributions::{Distribution, Uniform};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Poisson;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::Write;
use std::path::Path;

/// How the per-station user count `N_i` is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum UserModel {
    /// `N_i = users_per_station` exactly.
    #[default]
    Fixed,
    /// `N_i ~ Poisson(users_per_station)`.
    Poisson,
}

/// Generation record that makes rank-shuffle re-estimation possible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandProvenance {
    pub seed: u64,
    pub zeta: f64,
    pub users_per_station: f64,
    pub user_model: UserModel,
    /// Realized `N_i` per station.
    pub realized_users: Vec<f64>,
    /// `rank_of[i][j]` = popularity rank (0 = most popular) of content `j`
    /// at station `i`.
    pub rank_of: Vec<Vec<usize>>,
}

/// Request counts per (station, content).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandMatrix {
    pub num_stations: usize,
    pub num_contents: usize,
    /// `gamma[i][j]` = number of requests for content `j` at station `i`.
    pub gamma: Vec<Vec<u64>>,
    pub provenance: Option<DemandProvenance>,
}

impl DemandMatrix {
    pub fn new(gamma: Vec<Vec<u64>>) -> Result<Self> {
        let num_stations = gamma.len();
        let num_contents = gamma.first().map_or(0, Vec::len);
        for (i, row) in gamma.iter().enumerate() {
            if row.len() != num_contents {
                return Err(Error::DimensionMismatch(format!(
                    "gamma row {i} has {} entries, expected {num_contents}",
                    row.len()
                )));
            }
        }
        Ok(DemandMatrix {
            num_stations,
            num_contents,
            gamma,
            provenance: None,
        })
    }

    pub fn get(&self, station: usize, content: usize) -> u64 {
        self.gamma[station][content]
    }

    pub fn total_requests(&self) -> u64 {
        self.gamma.iter().flatten().sum()
    }

    /// Total demand of one content across stations.
    pub fn content_requests(&self, content: usize) -> u64 {
        self.gamma.iter().map(|row| row[content]).sum()
    }
}

/// One request event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub station: usize,
    pub content: usize,
}

/// Order in which the demand multiset is revealed to the online algorithm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum StreamPolicy {
    /// Uniformly random permutation of the full event multiset.
    #[default]
    RandomInterleave,
    /// Cycle through stations, one pending event each per round.
    RoundRobin,
    /// All events of content 0, then content 1, and so on.
    GroupedByContent,
}

impl fmt::Display for StreamPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StreamPolicy::RandomInterleave => write!(f, "random-interleave"),
            StreamPolicy::RoundRobin => write!(f, "round-robin"),
            StreamPolicy::GroupedByContent => write!(f, "grouped-by-content"),
        }
    }
}

impl std::str::FromStr for StreamPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random-interleave" => Ok(StreamPolicy::RandomInterleave),
            "round-robin" => Ok(StreamPolicy::RoundRobin),
            "grouped-by-content" => Ok(StreamPolicy::GroupedByContent),
            other => Err(Error::InvalidInput(format!(
                "unknown stream policy {other:?} (expected random-interleave, round-robin or grouped-by-content)"
            ))),
        }
    }
}

/// Ordered request sequence; the event multiset always equals the demand
/// matrix it was generated from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestStream {
    pub events: Vec<Event>,
    pub seed: Option<u64>,
    pub policy: Option<StreamPolicy>,
}

impl RequestStream {
    pub fn from_events(events: Vec<Event>) -> Self {
        RequestStream {
            events,
            seed: None,
            policy: None,
        }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Event counts per (station, content), for conservation checks.
    pub fn counts(&self, num_stations: usize, num_contents: usize) -> Vec<Vec<u64>> {
        let mut counts = vec![vec![0u64; num_contents]; num_stations];
        for e in &self.events {
            counts[e.station][e.content] += 1;
        }
        counts
    }

    /// CSV export: `index,station,content`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["index", "station", "content"])
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
        for (i, e) in self.events.iter().enumerate() {
            w.write_record(&[i.to_string(), e.station.to_string(), e.content.to_string()])
                .map_err(|e| Error::Io(std::io::Error::other(e)))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Zipf popularity vector: entry `j` is `(1/(j+1)^zeta) / sum_m 1/m^zeta`
/// (ranks are 0-based here). Sums to 1, nonincreasing in rank.
pub fn zipf_popularity<T: Scalar>(num_contents: usize, zeta: T) -> Vec<T> {
    let weights: Vec<T> = (1..=num_contents)
        .map(|rank| from_f64::<T>(rank as f64).powf(-zeta))
        .collect();
    let norm: T = weights.iter().copied().sum();
    weights.into_iter().map(|w| w / norm).collect()
}

/// Draws demands: each station gets an independent uniform ranking of the
/// contents and `gamma[i][j] = round(N_i * zipf[rank_i(j)])`.
pub fn gen_demands(
    num_stations: usize,
    num_contents: usize,
    users_per_station: f64,
    zeta: f64,
    seed: u64,
) -> DemandMatrix {
    gen_demands_with(
        num_stations,
        num_contents,
        users_per_station,
        zeta,
        UserModel::Fixed,
        seed,
    )
}

/// [`gen_demands`] with an explicit user-count model.
pub fn gen_demands_with(
    num_stations: usize,
    num_contents: usize,
    users_per_station: f64,
    zeta: f64,
    user_model: UserModel,
    seed: u64,
) -> DemandMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let popularity = zipf_popularity::<f64>(num_contents, zeta);

    let mut gamma = Vec::with_capacity(num_stations);
    let mut realized_users = Vec::with_capacity(num_stations);
    let mut rank_of = Vec::with_capacity(num_stations);
    for _ in 0..num_stations {
        let users = match user_model {
            UserModel::Fixed => users_per_station,
            UserModel::Poisson => sample_poisson(&mut rng, users_per_station),
        };
        let mut ranks: Vec<usize> = (0..num_contents).collect();
        ranks.shuffle(&mut rng);
        let row: Vec<u64> = ranks
            .iter()
            .map(|&rank| (users * popularity[rank]).round().max(0.0) as u64)
            .collect();
        gamma.push(row);
        realized_users.push(users);
        rank_of.push(ranks);
    }

    DemandMatrix {
        num_stations,
        num_contents,
        gamma,
        provenance: Some(DemandProvenance {
            seed,
            zeta,
            users_per_station,
            user_model,
            realized_users,
            rank_of,
        }),
    }
}

fn sample_poisson(rng: &mut ChaCha8Rng, mean: f64) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    let dist = Poisson::new(mean).expect("positive finite mean");
    dist.sample(rng)
}

/// Orders the demand multiset into a request stream. Every policy emits
/// exactly `gamma[i][j]` events per pair.
pub fn demands_to_stream(demands: &DemandMatrix, seed: u64, policy: StreamPolicy) -> RequestStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let events = match policy {
        StreamPolicy::RandomInterleave => {
            let mut events = canonical_events(demands);
            events.shuffle(&mut rng);
            events
        }
        StreamPolicy::RoundRobin => {
            let mut queues: Vec<std::collections::VecDeque<Event>> = (0..demands.num_stations)
                .map(|i| {
                    (0..demands.num_contents)
                        .flat_map(|j| {
                            std::iter::repeat_n(
                                Event {
                                    station: i,
                                    content: j,
                                },
                                demands.gamma[i][j] as usize,
                            )
                        })
                        .collect()
                })
                .collect();
            let mut events = Vec::new();
            let mut pending = true;
            while pending {
                pending = false;
                for queue in &mut queues {
                    if let Some(e) = queue.pop_front() {
                        events.push(e);
                        pending = true;
                    }
                }
            }
            events
        }
        StreamPolicy::GroupedByContent => {
            let mut events = Vec::new();
            for j in 0..demands.num_contents {
                for i in 0..demands.num_stations {
                    for _ in 0..demands.gamma[i][j] {
                        events.push(Event {
                            station: i,
                            content: j,
                        });
                    }
                }
            }
            events
        }
    };
    RequestStream {
        events,
        seed: Some(seed),
        policy: Some(policy),
    }
}

fn canonical_events(demands: &DemandMatrix) -> Vec<Event> {
    let mut events = Vec::with_capacity(demands.total_requests() as usize);
    for i in 0..demands.num_stations {
        for j in 0..demands.num_contents {
            for _ in 0..demands.gamma[i][j] {
                events.push(Event {
                    station: i,
                    content: j,
                });
            }
        }
    }
    events
}

/// Uniform estimation error: each positive entry is redrawn uniformly from
/// `[(1-margin) gamma, (1+margin) gamma]` and rounded; zeros stay zero.
pub fn perturb_uniform(demands: &DemandMatrix, margin: f64, seed: u64) -> Result<DemandMatrix> {
    if !(0.0..=1.0).contains(&margin) {
        return Err(Error::InvalidInput(format!(
            "margin {margin} outside [0, 1]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gamma = demands
        .gamma
        .iter()
        .map(|row| {
            row.iter()
                .map(|&g| {
                    if g == 0 {
                        0
                    } else {
                        let g = g as f64;
                        let dist = Uniform::new_inclusive((1.0 - margin) * g, (1.0 + margin) * g);
                        dist.sample(&mut rng).round().max(0.0) as u64
                    }
                })
                .collect()
        })
        .collect();
    Ok(DemandMatrix {
        num_stations: demands.num_stations,
        num_contents: demands.num_contents,
        gamma,
        provenance: None,
    })
}

/// Rank-estimation error: regenerates the demands with fresh independent
/// per-station rankings, keeping each station's realized user count and the
/// Zipf exponent. Requires generation provenance.
pub fn shuffle_ranks(demands: &DemandMatrix, seed: u64) -> Result<DemandMatrix> {
    let prov = demands
        .provenance
        .as_ref()
        .ok_or(Error::MissingProvenance)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let popularity = zipf_popularity::<f64>(demands.num_contents, prov.zeta);

    let mut gamma = Vec::with_capacity(demands.num_stations);
    let mut rank_of = Vec::with_capacity(demands.num_stations);
    for i in 0..demands.num_stations {
        let mut ranks: Vec<usize> = (0..demands.num_contents).collect();
        ranks.shuffle(&mut rng);
        let users = prov.realized_users[i];
        let row: Vec<u64> = ranks
            .iter()
            .map(|&rank| (users * popularity[rank]).round().max(0.0) as u64)
            .collect();
        gamma.push(row);
        rank_of.push(ranks);
    }

    Ok(DemandMatrix {
        num_stations: demands.num_stations,
        num_contents: demands.num_contents,
        gamma,
        provenance: Some(DemandProvenance {
            seed,
            zeta: prov.zeta,
            users_per_station: prov.users_per_station,
            user_model: prov.user_model,
            realized_users: prov.realized_users.clone(),
            rank_of,
        }),
    })
}

const DEMANDS_SCHEMA: &str = "cellcache/demands";
const STREAM_SCHEMA: &str = "cellcache/stream";
const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DemandsDoc {
    schema: String,
    version: u32,
    num_stations: usize,
    num_contents: usize,
    gamma: Vec<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<DemandProvenance>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StreamDoc {
    schema: String,
    version: u32,
    events: Vec<(usize, usize)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    policy: Option<StreamPolicy>,
}

fn schema_err(path: &Path, message: impl fmt::Display) -> Error {
    Error::Schema {
        path: path.display().to_string(),
        message: message.to_string(),
    }
}

pub fn save_demands(demands: &DemandMatrix, path: &Path) -> Result<()> {
    let doc = DemandsDoc {
        schema: DEMANDS_SCHEMA.to_string(),
        version: FORMAT_VERSION,
        num_stations: demands.num_stations,
        num_contents: demands.num_contents,
        gamma: demands.gamma.clone(),
        provenance: demands.provenance.clone(),
    };
    let text = toml::to_string(&doc).map_err(|e| schema_err(path, e))?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_demands(path: &Path) -> Result<DemandMatrix> {
    let text = std::fs::read_to_string(path)?;
    let doc: DemandsDoc = toml::from_str(&text).map_err(|e| schema_err(path, e))?;
    if doc.schema != DEMANDS_SCHEMA {
        return Err(schema_err(
            path,
            format!("schema is {:?}, expected {DEMANDS_SCHEMA:?}", doc.schema),
        ));
    }
    let mut demands = DemandMatrix::new(doc.gamma).map_err(|e| schema_err(path, e))?;
    if demands.num_stations != doc.num_stations || demands.num_contents != doc.num_contents {
        return Err(schema_err(path, "gamma shape disagrees with the header"));
    }
    demands.provenance = doc.provenance;
    Ok(demands)
}

pub fn save_stream(stream: &RequestStream, path: &Path) -> Result<()> {
    let doc = StreamDoc {
        schema: STREAM_SCHEMA.to_string(),
        version: FORMAT_VERSION,
        events: stream
            .events
            .iter()
            .map(|e| (e.station, e.content))
            .collect(),
        seed: stream.seed,
        policy: stream.policy,
    };
    let text = toml::to_string(&doc).map_err(|e| schema_err(path, e))?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_stream(path: &Path) -> Result<RequestStream> {
    let text = std::fs::read_to_string(path)?;
    let doc: StreamDoc = toml::from_str(&text).map_err(|e| schema_err(path, e))?;
    if doc.schema != STREAM_SCHEMA {
        return Err(schema_err(
            path,
            format!("schema is {:?}, expected {STREAM_SCHEMA:?}", doc.schema),
        ));
    }
    Ok(RequestStream {
        events: doc
            .events
            .into_iter()
            .map(|(station, content)| Event { station, content })
            .collect(),
        seed: doc.seed,
        policy: doc.policy,
    })
}
