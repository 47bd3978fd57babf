//! Oracle properties: dominance, verification consistency, equivalence with
//! a fully redundant brute force, and the set-cover reduction.

use cellcache::harness::{generate_instance, InstanceParams, WorkloadParams};
use cellcache::instance::{load_instance, save_instance, Instance};
use cellcache::offline::{
    offline_collaborative_exact, offline_noncollaborative, plan_cost, set_cover_exact,
    set_cover_to_instance, verify_plan,
};
use cellcache::workload::DemandMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_instance(seed: u64, stations: usize, contents: usize) -> Instance<f64> {
    let instance_params = InstanceParams {
        num_stations: stations,
        caching_cost_mean: 120.0,
        internet_cost_factor: 3.0,
        ..InstanceParams::default()
    };
    let workload_params = WorkloadParams {
        num_contents: contents,
        size_min: 1,
        size_max: 4,
        ..WorkloadParams::default()
    };
    let mut inst = generate_instance(&instance_params, &workload_params, seed).unwrap();
    // Sprinkle uncacheable stations.
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xfeed);
    for row in inst.caching_cost.iter_mut() {
        for v in row.iter_mut() {
            if rng.gen::<f64>() < 0.15 {
                *v = f64::INFINITY;
            }
        }
    }
    inst
}

fn sparse_demands(
    seed: u64,
    stations: usize,
    contents: usize,
    max_demanded: usize,
) -> DemandMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gamma = vec![vec![0u64; contents]; stations];
    for column in 0..contents {
        let demanded = rng.gen_range(0..=max_demanded.min(stations));
        for _ in 0..demanded {
            let i = rng.gen_range(0..stations);
            gamma[i][column] = rng.gen_range(1..9);
        }
    }
    DemandMatrix::new(gamma).unwrap()
}

/// Fully redundant optimum: enumerate every (subset, complete assignment)
/// pair without the nearest-source shortcut or any candidate merging.
fn brute_force_optimum(inst: &Instance<f64>, demands: &DemandMatrix) -> f64 {
    let k = inst.num_stations;
    let net = inst.internet();
    let mut total = 0.0;
    for j in 0..inst.num_contents() {
        let demanded: Vec<usize> = (0..k).filter(|&i| demands.gamma[i][j] > 0).collect();
        if demanded.is_empty() {
            continue;
        }
        let finite: Vec<usize> = (0..k)
            .filter(|&s| inst.caching_cost[s][j].is_finite())
            .collect();
        let mut best = f64::INFINITY;
        for mask in 0u64..(1 << finite.len()) {
            let subset: Vec<usize> = finite
                .iter()
                .enumerate()
                .filter(|(b, _)| mask & (1 << b) != 0)
                .map(|(_, &s)| s)
                .collect();
            let caching: f64 = subset.iter().map(|&s| inst.caching_cost[s][j]).sum();
            let nodes: Vec<usize> = subset.iter().copied().chain([net]).collect();
            assign_rec(
                inst, demands, j, &demanded, &nodes, 0, 0.0, caching, &mut best,
            );
        }
        total += inst.content_sizes[j] * best;
    }
    total
}

#[allow(clippy::too_many_arguments)]
fn assign_rec(
    inst: &Instance<f64>,
    demands: &DemandMatrix,
    content: usize,
    demanded: &[usize],
    nodes: &[usize],
    idx: usize,
    ua_acc: f64,
    caching: f64,
    best: &mut f64,
) {
    if idx == demanded.len() {
        let cost = caching + ua_acc;
        if cost < *best {
            *best = cost;
        }
        return;
    }
    let i = demanded[idx];
    let gamma = demands.gamma[i][content] as f64;
    for &node in nodes {
        assign_rec(
            inst,
            demands,
            content,
            demanded,
            nodes,
            idx + 1,
            ua_acc + gamma * inst.ua[i][node],
            caching,
            best,
        );
    }
}

fn internet_only_cost(inst: &Instance<f64>, demands: &DemandMatrix) -> f64 {
    let net = inst.internet();
    let mut total = 0.0;
    for j in 0..inst.num_contents() {
        let mut ua = 0.0;
        for i in 0..inst.num_stations {
            ua += demands.gamma[i][j] as f64 * inst.ua[i][net];
        }
        total += inst.content_sizes[j] * ua;
    }
    total
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn exact_oracle_matches_redundant_brute_force(
        seed in any::<u64>(),
        stations in 2usize..7,
        contents in 1usize..3,
    ) {
        let inst = random_instance(seed, stations, contents);
        let demands = sparse_demands(seed ^ 0x11, stations, contents, 3);
        let (_, cost) = offline_collaborative_exact(&inst, &demands).unwrap();
        let brute = brute_force_optimum(&inst, &demands);
        prop_assert!((cost - brute).abs() <= 1e-9, "oracle {cost} vs brute force {brute}");
    }

    #[test]
    fn collaborative_optimum_dominates_the_alternatives(
        seed in any::<u64>(),
        stations in 2usize..8,
        contents in 1usize..4,
    ) {
        let inst = random_instance(seed, stations, contents);
        let demands = sparse_demands(seed ^ 0x22, stations, contents, stations);
        let (plan, collab) = offline_collaborative_exact(&inst, &demands).unwrap();
        let (_, noncollab) = offline_noncollaborative(&inst, &demands).unwrap();
        prop_assert!(collab <= noncollab + 1e-9);
        prop_assert!(collab <= internet_only_cost(&inst, &demands) + 1e-9);

        let (verified, report) = verify_plan(&inst, &demands, &plan);
        prop_assert!(report.feasible(), "{:?}", report.violations);
        prop_assert!((verified - collab).abs() <= 1e-9);
    }

    #[test]
    fn raising_a_caching_cost_never_lowers_the_optimum(
        seed in any::<u64>(),
        stations in 2usize..6,
        bump in 1.0f64..500.0,
    ) {
        let mut inst = random_instance(seed, stations, 1);
        let demands = sparse_demands(seed ^ 0x33, stations, 1, stations);
        let (_, before) = offline_collaborative_exact(&inst, &demands).unwrap();
        let station = (seed as usize) % stations;
        if inst.caching_cost[station][0].is_finite() {
            inst.caching_cost[station][0] += bump;
        }
        let (_, after) = offline_collaborative_exact(&inst, &demands).unwrap();
        prop_assert!(after + 1e-9 >= before);
    }

    #[test]
    fn reduced_set_cover_instances_preserve_the_optimum(
        seed in any::<u64>(),
        elements in 1usize..6,
        subsets in 1usize..6,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut family: Vec<Vec<usize>> = (0..subsets)
            .map(|_| {
                let mut s: Vec<usize> = (0..elements).filter(|_| rng.gen::<f64>() < 0.5).collect();
                if s.is_empty() {
                    s.push(rng.gen_range(0..elements));
                }
                s
            })
            .collect();
        // Patch coverage: attach each uncovered element to a random subset.
        for e in 0..elements {
            if !family.iter().any(|s| s.contains(&e)) {
                let idx = rng.gen_range(0..family.len());
                family[idx].push(e);
            }
        }
        // Costs within a factor-2 band keep the reduction optimum-exact.
        let costs: Vec<f64> = (0..subsets).map(|_| 1.0 + rng.gen::<f64>()).collect();

        let expected = set_cover_exact(elements, &family, &costs).unwrap();
        let (inst, demands) = set_cover_to_instance(elements, &family, &costs).unwrap();
        let (_, got) = offline_collaborative_exact(&inst, &demands).unwrap();
        prop_assert_eq!(got, expected);
    }

    #[test]
    fn instances_round_trip_through_the_file_format(
        seed in any::<u64>(),
        stations in 1usize..6,
        contents in 1usize..4,
    ) {
        let inst = random_instance(seed, stations, contents);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("instance.toml");
        save_instance(&inst, &path).unwrap();
        let loaded: Instance<f64> = load_instance(&path).unwrap();
        prop_assert_eq!(inst, loaded);
    }
}

#[test]
fn per_content_costs_sum_to_the_total() {
    let inst = random_instance(7, 5, 3);
    let demands = sparse_demands(8, 5, 3, 5);
    let (plan, total) = offline_collaborative_exact(&inst, &demands).unwrap();
    let cost = plan_cost(&inst, &demands, &plan);
    let sum: f64 = cost.per_content.iter().sum();
    assert_eq!(sum, cost.total);
    assert_eq!(total, cost.total);
    assert!((cost.caching + cost.ua - cost.total).abs() <= 1e-9);
}
