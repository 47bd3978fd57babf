//! Lower-bound construction: a complete binary tree of base stations with
//! geometrically decaying edge costs, uncacheable interior vertices, and a
//! phased random-walk request sequence that descends the tree.
//!
//! The construction is an empirical probe. Runs measure how the
//! online/offline cost ratio grows with the tree height; they do not
//! certify the asymptotic bound.

use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::scalar::{from_f64, Scalar};
use crate::workload::{Event, RequestStream};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Hard cap on tree stations (height 11).
pub const MAX_TREE_STATIONS: usize = 4095;

/// Parameters of the adversary tree. Vertices are indexed in level order
/// (root 0, children of `v` at `2v+1` and `2v+2`); the edge from a
/// depth-`h` vertex to its child costs `root_edge_cost / decay^h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdversaryTree<T> {
    /// Height H: edges on a root-to-leaf path.
    pub height: usize,
    /// Cost decay factor m per level, > 1.
    pub decay: T,
    /// Cost D of a root-to-child edge.
    pub root_edge_cost: T,
    /// Caching cost f of every leaf (interior vertices are uncacheable).
    pub leaf_caching_cost: T,
}

impl<T: Scalar> AdversaryTree<T> {
    pub fn new(height: usize, decay: T, root_edge_cost: T, leaf_caching_cost: T) -> Result<Self> {
        if height < 1 {
            return Err(Error::InvalidInput("tree height must be at least 1".into()));
        }
        if !(decay > T::one()) {
            return Err(Error::InvalidInput(format!(
                "decay factor {decay} must exceed 1"
            )));
        }
        if !(root_edge_cost > T::zero()) || !(leaf_caching_cost > T::zero()) {
            return Err(Error::InvalidInput(
                "edge and caching costs must be positive".into(),
            ));
        }
        let stations = (1usize << (height + 1)) - 1;
        if stations > MAX_TREE_STATIONS {
            return Err(Error::SizeLimit {
                stations,
                limit: MAX_TREE_STATIONS,
            });
        }
        Ok(AdversaryTree {
            height,
            decay,
            root_edge_cost,
            leaf_caching_cost,
        })
    }

    /// The canonical hard parametrization: decay m = H, leaf cost f = H * D.
    pub fn canonical_parameters(height: usize, root_edge_cost: T) -> Result<Self> {
        let h = from_f64::<T>(height as f64);
        AdversaryTree::new(height, h, root_edge_cost, h * root_edge_cost)
    }

    pub fn num_stations(&self) -> usize {
        (1 << (self.height + 1)) - 1
    }

    pub fn is_leaf(&self, vertex: usize) -> bool {
        self.depth(vertex) == self.height
    }

    pub fn depth(&self, vertex: usize) -> usize {
        (usize::BITS - 1 - (vertex + 1).leading_zeros()) as usize
    }

    /// Cost of the edge from a depth-`d` vertex to its children.
    pub fn edge_cost(&self, depth: usize) -> T {
        self.root_edge_cost / self.decay.powi(depth as i32)
    }

    /// Tree-path UA between two vertices: climb the deeper one first, then
    /// both, summing edge costs along the way.
    pub fn path_cost(&self, u: usize, v: usize) -> T {
        let mut a = u;
        let mut b = v;
        let mut cost = T::zero();
        while self.depth(a) > self.depth(b) {
            cost += self.edge_cost(self.depth(a) - 1);
            a = (a - 1) / 2;
        }
        while self.depth(b) > self.depth(a) {
            cost += self.edge_cost(self.depth(b) - 1);
            b = (b - 1) / 2;
        }
        while a != b {
            let d = self.depth(a) - 1;
            cost += self.edge_cost(d);
            cost += self.edge_cost(d);
            a = (a - 1) / 2;
            b = (b - 1) / 2;
        }
        cost
    }

    /// Root-to-leaf path cost.
    pub fn descent_cost(&self) -> T {
        (0..self.height).map(|d| self.edge_cost(d)).sum()
    }

    /// Materializes the tree as a caching instance: UA = tree-path costs,
    /// infinite caching cost off the leaves, one unit-size content, and an
    /// Internet column strictly above any tree path plus the leaf cost so
    /// the Internet is never used.
    pub fn build_instance(&self) -> Instance<T> {
        let k = self.num_stations();
        let two = from_f64::<T>(2.0);
        let sentinel = two * self.descent_cost() + self.leaf_caching_cost + self.root_edge_cost;
        let mut ua = vec![vec![T::zero(); k + 1]; k];
        for u in 0..k {
            for v in (u + 1)..k {
                let c = self.path_cost(u, v);
                ua[u][v] = c;
                ua[v][u] = c;
            }
            ua[u][k] = sentinel;
        }
        let caching_cost = (0..k)
            .map(|v| {
                if self.is_leaf(v) {
                    vec![self.leaf_caching_cost]
                } else {
                    vec![T::infinity()]
                }
            })
            .collect();
        Instance::new(ua, caching_cost, vec![T::one()])
            .expect("tree matrices are square by construction")
    }

    /// Phase sizes: one root request, then `round(m^(h+1))` (at least 1)
    /// requests per descent step.
    pub fn phase_sizes(&self) -> Vec<u64> {
        (0..=self.height)
            .map(|h| {
                if h == 0 {
                    1
                } else {
                    let raw = self.decay.powi(h as i32).to_f64().unwrap_or(1.0).round();
                    raw.max(1.0) as u64
                }
            })
            .collect()
    }
}

/// Generates the phased request sequence: phase 0 hits the root; after each
/// phase the walk steps to a uniformly random child, and phase `h` issues
/// `round(m^h)` requests there. Returns the stream and the realized path
/// `z_0..z_H`.
pub fn gen_adversary_stream<T: Scalar>(
    tree: &AdversaryTree<T>,
    seed: u64,
) -> (RequestStream, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sizes = tree.phase_sizes();
    let mut path = vec![0usize];
    let mut events = Vec::new();
    let mut vertex = 0usize;
    for (h, &count) in sizes.iter().enumerate() {
        if h > 0 {
            vertex = 2 * vertex + 1 + rng.gen_range(0..2usize);
            path.push(vertex);
        }
        for _ in 0..count {
            events.push(Event {
                station: vertex,
                content: 0,
            });
        }
    }
    let mut stream = RequestStream::from_events(events);
    stream.seed = Some(seed);
    (stream, path)
}

/// Height for a request budget `n >= 16`: `H = floor(ln n / ln ln n)`,
/// asserting the budget inequality `H^(H+1) / (H-1) <= n`.
pub fn h_for_n(n: u64) -> Result<usize> {
    if n < 16 {
        return Err(Error::InvalidInput(format!(
            "request budget n = {n} must be at least 16"
        )));
    }
    let ln_n = (n as f64).ln();
    let height = (ln_n / ln_n.ln()).floor() as usize;
    let lhs = (height as f64).powi(height as i32 + 1) / (height as f64 - 1.0);
    if !(lhs <= n as f64) {
        return Err(Error::BudgetViolated { n, height, lhs });
    }
    Ok(height)
}
