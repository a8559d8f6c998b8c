//! Acceptance suite: one test per criterion, each printing a PASS/FAIL
//! line (run with `--nocapture` to see them; `--test-threads=1` keeps the
//! timing-based reports clean).
//!
//! Criteria 9 and 10 are hardware-dependent trend checks: they print a
//! REPORT line instead of failing the build.

mod common;

use std::time::Instant;

use influence::budgetmax::{
    brute_force_optimum, enumerate_densities, blocking_bound_report, maximize_uniform,
    AllocationProblem, Objective, SketchObjective,
};
use influence::constraints::{
    ConstraintSystem, GroundElement, GroundSet, LaminarGroup, LaminarMatroid, Matroid,
    PartitionMatroid,
};
use influence::continest::{
    build_bundle_with, estimate_influence, estimate_size, BundleConfig,
};
use influence::lll::{build_lists, draw_labels};
use influence::netmodel::{
    assign_random_laws, generate_kronecker, DiffusionNetwork, LawKind, NodeId,
};
use influence::oracle::{analytic_chain_influence, ns_estimate, SourceSet};
use influence::rngs::{domain, stream_rng};
use rand::seq::SliceRandom;
use rand::Rng;

use common::ExactProblem;

fn max_out_degree_node(net: &DiffusionNetwork) -> NodeId {
    (0..net.num_nodes() as NodeId)
        .max_by_key(|&v| (net.out_degree(v), std::cmp::Reverse(v)))
        .expect("nonempty network")
}

fn core_periphery_fixture(seed: u64) -> DiffusionNetwork {
    let mut gen_rng = stream_rng(seed, domain::KRONECKER, 0);
    let el = generate_kronecker(&[[0.9, 0.5], [0.5, 0.3]], 10, &mut gen_rng).unwrap();
    let mut law_rng = stream_rng(seed, domain::LAWS, 0);
    assign_random_laws(&el, LawKind::Weibull, (0.1, 10.0), &mut law_rng).unwrap()
}

#[test]
fn c01_estimator_accuracy_against_naive_sampling() {
    let started = Instant::now();
    let net = core_periphery_fixture(42);
    let hub = max_out_degree_node(&net);
    let sources = SourceSet::from([hub]);

    let mut config = BundleConfig::new(10_000, 5, 71);
    config.targets = Some(vec![hub]);
    let bundle = build_bundle_with(&net, &config).unwrap();

    let mut worst: f64 = 0.0;
    let mut detail = String::new();
    for &t in &[1.0, 5.0, 10.0] {
        let oracle = ns_estimate(&net, &sources, t, 100_000, 72).unwrap();
        let est = estimate_influence(&bundle, &sources, t).unwrap();
        let rel = (est.value - oracle.value).abs() / oracle.value;
        worst = worst.max(rel);
        detail.push_str(&format!(
            " T={t}: sketch {:.3} vs ns {:.3} (rel {:.4});",
            est.value, oracle.value, rel
        ));
    }
    let ok = worst <= 0.03;
    println!(
        "ACCEPTANCE 01 estimator-accuracy: {} worst rel err {:.4} on {} nodes / {} edges;{} elapsed {:.1}s",
        if ok { "PASS" } else { "FAIL" },
        worst,
        net.num_nodes(),
        net.num_edges(),
        detail,
        started.elapsed().as_secs_f64()
    );
    assert!(ok, "relative error {worst} exceeds 0.03");
}

#[test]
fn c02_size_estimator_is_unbiased() {
    let m = 5;
    let draws = 100_000;
    let mut all_ok = true;
    let mut detail = String::new();
    for (case, &size) in [1usize, 7, 50].iter().enumerate() {
        let mut rng = stream_rng(2, 0xC2, case as u64);
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..draws {
            let mins: Vec<f64> = (0..m)
                .map(|_| {
                    (0..size)
                        .map(|_| {
                            let u: f64 = rng.gen();
                            -(1.0 - u).ln()
                        })
                        .fold(f64::INFINITY, f64::min)
                })
                .collect();
            let est = estimate_size(&mins).unwrap();
            sum += est;
            sumsq += est * est;
        }
        let mean = sum / draws as f64;
        let var = (sumsq - draws as f64 * mean * mean) / (draws as f64 - 1.0);
        let stderr = (var / draws as f64).sqrt();
        let ok = (mean - size as f64).abs() <= 3.0 * stderr;
        all_ok &= ok;
        detail.push_str(&format!(" size {size}: mean {mean:.3} (3se {:.3});", 3.0 * stderr));
    }
    println!(
        "ACCEPTANCE 02 size-estimator-unbiased: {}{}",
        if all_ok { "PASS" } else { "FAIL" },
        detail
    );
    assert!(all_ok);
}

#[test]
fn c03_sketch_queries_equal_brute_force() {
    let mut mismatches = 0usize;
    let mut queries = 0usize;
    for g in 0..100u64 {
        let mut rng = common::rng(3, g);
        let n = rng.gen_range(2..=8usize);
        let p = rng.gen_range(0.1..0.6);
        let net = common::random_digraph(n, p, &mut rng);
        let sample = net.sample_edge_times(&mut rng);
        let labels = draw_labels(n, &mut rng).unwrap();
        let layer = build_lists(&net, &sample, &labels).unwrap();
        for s in 0..n as NodeId {
            for _ in 0..20 {
                let t = rng.gen_range(0.0..3.0);
                let got = layer.list(s).query(t).unwrap();
                let want = common::brute_min_label(&net, sample.times(), labels.labels(), s, t);
                queries += 1;
                if got != want {
                    mismatches += 1;
                }
            }
        }
    }
    println!(
        "ACCEPTANCE 03 sketch-vs-brute-force: {} {mismatches} mismatches over {queries} exact queries",
        if mismatches == 0 { "PASS" } else { "FAIL" }
    );
    assert_eq!(mismatches, 0);
}

#[test]
fn c04_exponential_chains_match_closed_form() {
    let chains: [&[f64]; 3] = [&[1.3], &[1.0, 2.0], &[0.8, 0.8]];
    let t = 1.0;
    let mut all_ok = true;
    let mut detail = String::new();
    for (i, rates) in chains.iter().enumerate() {
        let edges: Vec<(NodeId, NodeId, _)> = rates
            .iter()
            .enumerate()
            .map(|(k, &r)| {
                (
                    k as NodeId,
                    (k + 1) as NodeId,
                    influence::netmodel::TransmissionLaw::exponential(r).unwrap(),
                )
            })
            .collect();
        let net = DiffusionNetwork::new(rates.len() + 1, edges).unwrap();
        let bundle = influence::continest::build_bundle(&net, 10_000, 5, 80 + i as u64).unwrap();
        let est = estimate_influence(&bundle, &SourceSet::from([0]), t).unwrap();
        let truth = analytic_chain_influence(rates, t).unwrap();
        let ok = (est.value - truth).abs() <= 3.0 * est.stderr;
        all_ok &= ok;
        detail.push_str(&format!(
            " chain {rates:?}: est {:.4} truth {truth:.4} (3se {:.4});",
            est.value,
            3.0 * est.stderr
        ));
    }
    println!(
        "ACCEPTANCE 04 analytic-chains: {}{}",
        if all_ok { "PASS" } else { "FAIL" },
        detail
    );
    assert!(all_ok);
}

fn uniform_bound_check<O: Objective>(problem: &AllocationProblem<O>) -> (bool, bool) {
    let greedy = maximize_uniform(problem).unwrap();
    let brute = brute_force_optimum(problem).unwrap();
    let delta = problem.delta();
    let bound_ok = greedy.value >= (1.0 - 2.0 * delta) / 3.0 * brute.value - 1e-9;
    let blocking = blocking_bound_report(problem, &greedy, &brute).unwrap();
    (bound_ok, blocking.prefix_bound_holds)
}

#[test]
fn c05_uniform_cost_approximation_bound() {
    let started = Instant::now();
    let mut violations = 0;
    for i in 0..200u64 {
        let (ok, _) = match common::random_uniform_instance(505, i, 0.1) {
            ExactProblem::Modular(p) => uniform_bound_check(&p),
            ExactProblem::Coverage(p) => uniform_bound_check(&p),
        };
        if !ok {
            violations += 1;
        }
    }
    println!(
        "ACCEPTANCE 05 uniform-cost-bound: {} {violations} violations over 200 instances ({:.1}s)",
        if violations == 0 { "PASS" } else { "FAIL" },
        started.elapsed().as_secs_f64()
    );
    assert_eq!(violations, 0);
}

fn knapsack_bound_check<O: Objective>(problem: &AllocationProblem<O>) -> bool {
    let alloc = enumerate_densities(problem).unwrap();
    let brute = brute_force_optimum(problem).unwrap();
    let delta = problem.delta();
    let k = problem.ground().num_products as f64;
    // the guarantee is existential over the grid: some run beats the bound
    // implied by its own count of active rows
    alloc.grid.iter().any(|gp| {
        gp.value >= gp.k_a.max(1) as f64 / ((2.0 * k + 2.0) * (1.0 + 3.0 * delta)) * brute.value - 1e-9
    })
}

#[test]
fn c06_knapsack_approximation_bound() {
    let started = Instant::now();
    let mut violations = 0;
    for i in 0..200u64 {
        let ok = match common::random_knapsack_instance(606, i, 0.1) {
            ExactProblem::Modular(p) => knapsack_bound_check(&p),
            ExactProblem::Coverage(p) => knapsack_bound_check(&p),
        };
        if !ok {
            violations += 1;
        }
    }
    println!(
        "ACCEPTANCE 06 knapsack-bound: {} {violations} violations over 200 instances ({:.1}s)",
        if violations == 0 { "PASS" } else { "FAIL" },
        started.elapsed().as_secs_f64()
    );
    assert_eq!(violations, 0);
}

#[test]
fn c07_blocking_prefix_bound() {
    let mut violations = 0;
    for i in 0..200u64 {
        let (_, blocking_ok) = match common::random_uniform_instance(505, i, 0.1) {
            ExactProblem::Modular(p) => uniform_bound_check(&p),
            ExactProblem::Coverage(p) => uniform_bound_check(&p),
        };
        if !blocking_ok {
            violations += 1;
        }
    }
    println!(
        "ACCEPTANCE 07 blocking-prefix-bound: {} {violations} violations over 200 instrumented runs",
        if violations == 0 { "PASS" } else { "FAIL" }
    );
    assert_eq!(violations, 0);
}

#[test]
fn c08_matroid_axioms_exhaustive() {
    let mut violations = 0usize;
    for inst in 0..50u64 {
        let mut rng = common::rng(8, inst);
        let ground = GroundSet::new(2, 4).unwrap();
        let matroid = if inst % 2 == 0 {
            let caps: Vec<u32> = (0..4).map(|_| rng.gen_range(0..3)).collect();
            Matroid::Partition(PartitionMatroid::user_columns(ground, &caps).unwrap())
        } else {
            Matroid::Laminar(
                LaminarMatroid::new(
                    4,
                    vec![
                        LaminarGroup {
                            users: vec![0, 1, 2, 3],
                            cap: rng.gen_range(1..5),
                        },
                        LaminarGroup {
                            users: vec![0, 1],
                            cap: rng.gen_range(0..3),
                        },
                        LaminarGroup {
                            users: vec![2, 3],
                            cap: rng.gen_range(0..3),
                        },
                    ],
                )
                .unwrap(),
            )
        };
        let n = ground.size();
        let indep: Vec<bool> = (0..1u32 << n)
            .map(|mask| {
                let set: Vec<GroundElement> = (0..n)
                    .filter(|i| mask >> i & 1 == 1)
                    .map(|i| ground.element(i))
                    .collect();
                matroid.is_independent(ground, &set).unwrap()
            })
            .collect();
        if !indep[0] {
            violations += 1; // non-emptiness
        }
        for mask in 0u32..1 << n {
            if !indep[mask as usize] {
                continue;
            }
            for i in 0..n {
                if mask >> i & 1 == 1 && !indep[(mask & !(1 << i)) as usize] {
                    violations += 1; // heredity
                }
            }
            for other in 0u32..1 << n {
                if !indep[other as usize] || other.count_ones() <= mask.count_ones() {
                    continue;
                }
                let exchange = (0..n)
                    .any(|i| other >> i & 1 == 1 && mask >> i & 1 == 0 && indep[(mask | 1 << i) as usize]);
                if !exchange {
                    violations += 1;
                }
            }
        }
    }
    println!(
        "ACCEPTANCE 08 matroid-axioms: {} {violations} violations over 50 exhaustive instances",
        if violations == 0 { "PASS" } else { "FAIL" }
    );
    assert_eq!(violations, 0);
}

#[test]
fn c09_delta_tradeoff_report() {
    let started = Instant::now();
    let num_products = 8;
    let power = 14;
    let num_targets = 128;

    let mut nets = Vec::new();
    for i in 0..num_products {
        let mut gen_rng = stream_rng(900 + i as u64, domain::KRONECKER, 0);
        let el = generate_kronecker(&[[0.9, 0.5], [0.5, 0.3]], power, &mut gen_rng).unwrap();
        let mut law_rng = stream_rng(900 + i as u64, domain::LAWS, 0);
        nets.push(assign_random_laws(&el, LawKind::Weibull, (0.1, 10.0), &mut law_rng).unwrap());
    }
    let mut pick_rng = stream_rng(9, 0xC9, 0);
    let mut all_nodes: Vec<NodeId> = (0..nets[0].num_nodes() as NodeId).collect();
    all_nodes.shuffle(&mut pick_rng);
    let mut targets: Vec<NodeId> = all_nodes[..num_targets].to_vec();
    targets.sort_unstable();

    let bundles: Vec<_> = nets
        .iter()
        .enumerate()
        .map(|(i, net)| {
            let mut config = BundleConfig::new(96, 5, 910 + i as u64);
            config.targets = Some(targets.clone());
            config.horizon_hint = Some(5.0);
            build_bundle_with(net, &config).unwrap()
        })
        .collect();
    let build_elapsed = started.elapsed().as_secs_f64();

    let run = |delta: f64| {
        let objective = SketchObjective::new(
            &bundles,
            vec![1.0; num_products],
            vec![5.0; num_products],
            &targets,
        )
        .unwrap();
        let ground = objective.ground();
        let sys = ConstraintSystem::uniform(ground, &vec![2u32; num_targets], &vec![8u32; num_products])
            .unwrap();
        let problem = AllocationProblem::new(objective, sys, delta).unwrap();
        let t0 = Instant::now();
        let alloc = maximize_uniform(&problem).unwrap();
        (alloc.value, t0.elapsed().as_secs_f64())
    };
    let (value_fine, time_fine) = run(0.01);
    let (value_coarse, time_coarse) = run(0.5);

    let value_ratio = value_coarse / value_fine;
    let time_ratio = time_coarse / time_fine;
    let value_ok = value_ratio >= 0.9;
    let time_ok = time_ratio <= 0.5;
    println!(
        "ACCEPTANCE 09 delta-tradeoff (soft): REPORT {} value ratio {:.3} (>=0.9: {}), \
         solve time {:.2}s -> {:.2}s ratio {:.3} (<=0.5: {}), build {:.1}s",
        if value_ok && time_ok { "pass" } else { "soft-fail" },
        value_ratio,
        value_ok,
        time_fine,
        time_coarse,
        time_ratio,
        time_ok,
        build_elapsed
    );
}

#[test]
fn c10_build_time_scales_with_edges_report() {
    let power = 8;
    let mut timings = Vec::new();
    for (case, &target_edges) in [512.0f64, 1024.0, 2048.0].iter().enumerate() {
        let b = target_edges.powf(1.0 / power as f64) / 4.0;
        let mut gen_rng = stream_rng(1000 + case as u64, domain::KRONECKER, 0);
        let el = generate_kronecker(&[[b, b], [b, b]], power, &mut gen_rng).unwrap();
        let mut law_rng = stream_rng(1000 + case as u64, domain::LAWS, 0);
        let net = assign_random_laws(&el, LawKind::Weibull, (0.1, 10.0), &mut law_rng).unwrap();
        let hub = max_out_degree_node(&net);

        let t0 = Instant::now();
        let mut config = BundleConfig::new(2000, 5, 1010 + case as u64);
        config.targets = Some(vec![hub]);
        let bundle = build_bundle_with(&net, &config).unwrap();
        let _ = estimate_influence(&bundle, &SourceSet::from([hub]), 10.0).unwrap();
        timings.push((net.num_edges(), t0.elapsed().as_secs_f64()));
    }
    let mut ok = true;
    let mut detail = String::new();
    for w in timings.windows(2) {
        let ratio = w[1].1 / w[0].1;
        ok &= ratio <= 3.0;
        detail.push_str(&format!(
            " {}e/{:.2}s -> {}e/{:.2}s ratio {:.2};",
            w[0].0, w[0].1, w[1].0, w[1].1, ratio
        ));
    }
    println!(
        "ACCEPTANCE 10 edge-scaling (soft): REPORT {}{}",
        if ok { "pass" } else { "soft-fail" },
        detail
    );
}
