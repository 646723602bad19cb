//! Acceptance gate: ten numbered checks covering the worked fairness example,
//! LP oracle agreement with brute-force vertex enumeration, trained-price
//! behavior at scale, worst-case floors, sharing-policy inefficiency, the
//! qualitative efficiency ordering, metric contracts, sample diagnostics, the
//! tiered-market demonstration, and CLI determinism.
//!
//! Each test prints one `[criterion N] PASS` line with the measured numbers
//! (visible with `--nocapture`); every tolerance is pinned as a named
//! constant below.

use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use rayon::prelude::*;

use stopack::bench::{
    lower_bound_demo, random_order, run_experiment, split_seed, AlgorithmId, ExperimentConfig,
};
use stopack::fairness::{
    compute_fair, fairness_metric, fairness_metric_values, total_value, verify_fair,
    FairAllocation, SharingPolicy,
};
use stopack::instance::{
    check_ptas_conditions, da_to_plp, generate_sharing_gap, generate_synthetic, Advertiser,
    DaInstance, Edge, Impression, PlpInstance, SyntheticConfig,
};
use stopack::lp::{solve_primal, verify_duality, SOLVER_TOL};
use stopack::online::{run_online, HybridSchedule, OnlineRule};
use stopack::training::{diagnose_sample, run_dual_base_da, train, TrainingPolicy};

// --- pinned tolerances and thresholds --------------------------------------

/// Criterion 2: |simplex − vertex enumeration| per instance.
const LP_MATCH_TOL: f64 = 1e-6;
/// Criterion 3: per-seed competitive-ratio floor for the trained allocator.
const PTAS_FLOOR: f64 = 0.85;
/// Criterion 3: seeds (out of 10) that must clear the floor.
const PTAS_SEEDS_REQUIRED: usize = 9;
/// Criterion 4: relative slack on the one-half floors.
const FLOOR_SLACK: f64 = 1e-9;
/// Criterion 5: value cap for equal/proportional sharing at K = 10.
const SHARING_CAP: f64 = 0.25;
/// Criterion 6: required mean-efficiency gap, trained prices over averaging.
const ORDERING_MARGIN: f64 = 3.0;
/// Criterion 6: hybrid may trail the trained allocator by at most this much.
const HYBRID_SLACK: f64 = 1.0;
/// Criterion 7: |f(λx) − f(x)| bound for the scale-invariance contract.
const METRIC_SCALE_TOL: f64 = 1e-9;
/// Criterion 9: both tier settings must land strictly below this ratio.
const LB_CEILING: f64 = 0.6;
/// Criterion 3 master seed, fixed before the first full run.
const PTAS_MASTER_SEED: u64 = 7;

// --- shared instance families ----------------------------------------------

/// The two-advertiser, two-impression instance used throughout the docs.
fn showcase_instance() -> DaInstance {
    DaInstance::from_parts(
        vec![Advertiser::new("a", 1), Advertiser::new("b", 1)],
        vec![
            Impression::new("i1", vec![Edge::new(0, 100.0), Edge::new(1, 4.0)]),
            Impression::new("i2", vec![Edge::new(0, 10.0), Edge::new(1, 6.0)]),
        ],
    )
    .unwrap()
}

/// Conforming family: demands so large that every per-option usage share
/// sits below the small-contribution bound. Necessarily undersold.
fn conforming_da(n: usize, seed: u64) -> DaInstance {
    generate_synthetic(&SyntheticConfig {
        advertisers: 10,
        impressions: n,
        demand_min: 140_000,
        demand_max: 160_000,
        density: 0.3,
        weight_mu: 0.0,
        weight_sigma: 0.2,
        seed,
    })
    .unwrap()
}

/// Varied i.i.d. family for the worst-case floor sweep.
fn varied_config(case: u64) -> SyntheticConfig {
    SyntheticConfig {
        advertisers: 10,
        impressions: 2_000,
        demand_min: 50,
        demand_max: 200,
        density: 0.3,
        weight_mu: 0.0,
        weight_sigma: 1.0,
        seed: 1_000 + case,
    }
}

/// Competitive family: supply roughly equals total demand and advertiser
/// value scales form a geometric ladder, so capacity pricing matters and
/// myopic assignment pays an efficiency price.
fn tiered_competitive(case: u64) -> DaInstance {
    let m = 10usize;
    let n = 2_000usize;
    let (dmin, dmax) = (180u64, 260u64);
    let density = 0.55;
    let sigma = 0.52;
    let ratio = 1.3f64;

    let mut rng = ChaCha8Rng::seed_from_u64(9_000 + case);
    let noise = LogNormal::new(0.0, sigma).unwrap();
    let scales: Vec<f64> = (0..m).map(|j| ratio.powi(j as i32)).collect();
    let advertisers = (0..m)
        .map(|j| Advertiser::new(format!("a{j}"), rng.gen_range(dmin..=dmax)))
        .collect();
    let impressions = (0..n)
        .map(|i| {
            let mut edges: Vec<Edge> = Vec::new();
            for j in 0..m {
                if rng.gen_bool(density) {
                    edges.push(Edge::new(j, scales[j] * noise.sample(&mut rng)));
                }
            }
            if edges.is_empty() {
                let j = rng.gen_range(0..m);
                edges.push(Edge::new(j, scales[j] * noise.sample(&mut rng)));
            }
            Impression::new(format!("i{i}"), edges)
        })
        .collect();
    DaInstance::from_parts(advertisers, impressions).unwrap()
}

// --- criterion 1 -----------------------------------------------------------

#[test]
fn criterion_01_worked_fairness_example() {
    let start = Instant::now();
    let da = showcase_instance();

    let fair = compute_fair(&da, SharingPolicy::Equal);
    assert_eq!(total_value(&fair, &da), 106.0, "shortest fair value");
    for (i, entries) in fair.x.iter().enumerate() {
        for &(_, fraction) in entries {
            assert_eq!(fraction, 1.0, "impression {i} must be integral");
        }
    }
    verify_fair(&da, &fair, SharingPolicy::Equal).expect("computed allocation verifies");

    // The all-half allocation is fair too (both advertisers interested in
    // everything, every impression split equally), just longer and cheaper.
    let all_half = FairAllocation {
        x: vec![vec![(0, 0.5), (1, 0.5)], vec![(0, 0.5), (1, 0.5)]],
        prefix: vec![2, 2],
        mass: vec![1.0, 1.0],
    };
    verify_fair(&da, &all_half, SharingPolicy::Equal).expect("all-half allocation verifies");
    assert_eq!(total_value(&all_half, &da), 60.0, "all-half value");

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}, limit 1s");
    println!(
        "[criterion 1] PASS — shortest fair value 106 (integral), all-half verifies at 60, {elapsed:?}"
    );
}

// --- criterion 2 -----------------------------------------------------------

/// Gaussian elimination with partial pivoting; `None` when near-singular.
fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs()))?;
        if a[pivot][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut sum = b[row];
        for k in row + 1..n {
            sum -= a[row][k] * x[k];
        }
        x[row] = sum / a[row][row];
    }
    Some(x)
}

/// Exhaustive optimum of a tiny packing LP: every vertex of the feasible
/// polytope is the solution of some square subsystem of tight constraints.
fn vertex_enumeration_optimum(inst: &PlpInstance) -> f64 {
    let mut weights = Vec::new();
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut columns = 0usize;
    for agent in &inst.agents {
        for opt in &agent.options {
            weights.push(opt.weight);
            columns += 1;
        }
    }
    let nvars = columns;
    assert!(nvars <= 6, "oracle is exhaustive only for tiny LPs");

    let mut base = 0usize;
    for agent in &inst.agents {
        if agent.options.is_empty() {
            continue;
        }
        let mut coefs = vec![0.0; nvars];
        for k in 0..agent.options.len() {
            coefs[base + k] = 1.0;
        }
        rows.push((coefs, 1.0));
        base += agent.options.len();
    }
    for (j, resource) in inst.resources.iter().enumerate() {
        let mut coefs = vec![0.0; nvars];
        let mut col = 0usize;
        for agent in &inst.agents {
            for opt in &agent.options {
                for u in &opt.usage {
                    if u.resource == j {
                        coefs[col] = u.amount;
                    }
                }
                col += 1;
            }
        }
        rows.push((coefs, resource.capacity));
    }
    for v in 0..nvars {
        let mut coefs = vec![0.0; nvars];
        coefs[v] = -1.0;
        rows.push((coefs, 0.0));
    }

    // x = 0 is always feasible for a packing system.
    let mut best = 0.0f64;
    let mut combo: Vec<usize> = (0..nvars).collect();
    loop {
        let a: Vec<Vec<f64>> = combo.iter().map(|&r| rows[r].0.clone()).collect();
        let b: Vec<f64> = combo.iter().map(|&r| rows[r].1).collect();
        if let Some(x) = solve_square(a, b) {
            let feasible = rows.iter().all(|(coefs, rhs)| {
                let lhs: f64 = coefs.iter().zip(&x).map(|(c, v)| c * v).sum();
                lhs <= rhs + 1e-8 * (1.0 + rhs.abs())
            });
            if feasible {
                let value: f64 = weights.iter().zip(&x).map(|(w, v)| w * v).sum();
                best = best.max(value);
            }
        }
        // Advance to the next size-nvars combination of row indices.
        let mut i = nvars;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if combo[i] + (nvars - i) < rows.len() {
                combo[i] += 1;
                for k in i + 1..nvars {
                    combo[k] = combo[k - 1] + 1;
                }
                break;
            }
        }
    }
}

fn random_tiny_lp(rng: &mut ChaCha8Rng) -> PlpInstance {
    use stopack::instance::{Agent, AgentOption, Resource, Usage};
    loop {
        let agents_n = rng.gen_range(1..=3);
        let m = rng.gen_range(1..=3);
        let resources = (0..m)
            .map(|j| Resource::new(format!("r{j}"), rng.gen_range(0.3..3.0)))
            .collect();
        let mut total_vars = 0usize;
        let mut agents = Vec::new();
        for i in 0..agents_n {
            let options_n = rng.gen_range(0..=3).min(6 - total_vars);
            let options = (0..options_n)
                .map(|o| {
                    let usage = (0..m)
                        .filter_map(|j| {
                            rng.gen_bool(0.7)
                                .then(|| Usage::new(j, rng.gen_range(0.0..1.2)))
                        })
                        .collect();
                    AgentOption::new(format!("o{o}"), rng.gen_range(0.1..10.0), usage)
                })
                .collect();
            total_vars += options_n;
            agents.push(Agent::new(format!("a{i}"), options));
        }
        if total_vars == 0 {
            continue;
        }
        return PlpInstance::from_parts(resources, agents).unwrap();
    }
}

#[test]
fn criterion_02_lp_oracle_against_vertex_enumeration() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst_diff = 0.0f64;
    let mut worst_gap = 0.0f64;
    for case in 0..500 {
        let inst = random_tiny_lp(&mut rng);
        let sol = solve_primal(&inst);
        let report = verify_duality(&inst, &sol, SOLVER_TOL).unwrap();
        assert!(
            report.pass,
            "case {case}: duality certificate failed (gap {})",
            report.duality_gap
        );
        worst_gap = worst_gap.max(report.duality_gap / (1.0 + sol.objective.abs()));
        let oracle = vertex_enumeration_optimum(&inst);
        let diff = (sol.objective - oracle).abs();
        assert!(
            diff <= LP_MATCH_TOL * (1.0 + oracle.abs()),
            "case {case}: simplex {} vs enumeration {}",
            sol.objective,
            oracle
        );
        worst_diff = worst_diff.max(diff / (1.0 + oracle.abs()));
    }

    // Duality certificates on representative instances from the other
    // criteria, not just the random tiny family.
    let suite: Vec<PlpInstance> = vec![
        da_to_plp(&showcase_instance()),
        da_to_plp(&generate_sharing_gap(5).unwrap()),
        da_to_plp(&generate_sharing_gap(10).unwrap()),
        da_to_plp(&generate_synthetic(&varied_config(0)).unwrap()),
        da_to_plp(&tiered_competitive(0)),
    ];
    for (k, inst) in suite.iter().enumerate() {
        let sol = solve_primal(inst);
        let report = verify_duality(inst, &sol, SOLVER_TOL).unwrap();
        assert!(report.pass, "suite instance {k}: certificate failed");
    }

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}, limit 30s");
    println!(
        "[criterion 2] PASS — 500 tiny LPs match enumeration (worst rel diff {worst_diff:.2e}, worst rel gap {worst_gap:.2e}), suite certificates hold, {elapsed:?}"
    );
}

// --- criterion 3 -----------------------------------------------------------

fn trained_ratios(da: &DaInstance, lp_value: f64) -> Vec<f64> {
    let n = da.num_impressions();
    (0..10u64)
        .map(|s| {
            let order = random_order(n, split_seed(PTAS_MASTER_SEED, 300 + s));
            let run = run_dual_base_da(
                da,
                &order,
                0.1,
                split_seed(PTAS_MASTER_SEED, 400 + s),
                TrainingPolicy::Skip,
                true,
            )
            .unwrap();
            run.allocation.total_value / lp_value
        })
        .collect()
}

#[test]
fn criterion_03_trained_allocator_at_scale() {
    let start = Instant::now();

    let big = conforming_da(20_000, split_seed(PTAS_MASTER_SEED, 100));
    let big_plp = da_to_plp(&big).normalize();
    let big_sol = solve_primal(&big_plp);
    let report = check_ptas_conditions(&big_plp, 0.1, big_sol.objective).unwrap();
    assert!(
        report.ok,
        "n=20000 instance must conform: weight {:.3e} vs {:.3e}, usage {:.3e} vs {:.3e}",
        report.weight_ratio, report.weight_bound, report.usage_ratio, report.usage_bound
    );

    let small = conforming_da(2_000, split_seed(PTAS_MASTER_SEED, 200));
    let small_sol = solve_primal(&da_to_plp(&small).normalize());

    let big_ratios = trained_ratios(&big, big_sol.objective);
    let small_ratios = trained_ratios(&small, small_sol.objective);
    let big_mean = big_ratios.iter().sum::<f64>() / big_ratios.len() as f64;
    let small_mean = small_ratios.iter().sum::<f64>() / small_ratios.len() as f64;
    let cleared = big_ratios.iter().filter(|r| **r >= PTAS_FLOOR).count();

    assert!(
        cleared >= PTAS_SEEDS_REQUIRED,
        "only {cleared}/10 seeds reached {PTAS_FLOOR} x LP: {big_ratios:?}"
    );
    assert!(
        big_mean > small_mean,
        "mean ratio did not grow with n: {big_mean:.6} (n=20000) vs {small_mean:.6} (n=2000)"
    );

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 300.0, "took {elapsed:?}, limit 5min");
    println!(
        "[criterion 3] PASS — {cleared}/10 seeds ≥ {PTAS_FLOOR}, mean {big_mean:.6} (n=20000) > {small_mean:.6} (n=2000), {elapsed:?}"
    );
}

// --- criterion 4 -----------------------------------------------------------

#[test]
fn criterion_04_half_lp_floors_across_the_suite() {
    let suite: Vec<(String, DaInstance)> = (0..30)
        .map(|i| {
            (
                format!("varied-{i}"),
                generate_synthetic(&varied_config(i)).unwrap(),
            )
        })
        .chain((0..20).map(|i| (format!("tiered-{i}"), tiered_competitive(i))))
        .collect();
    assert!(suite.len() >= 50);

    let results: Vec<(f64, f64)> = suite
        .par_iter()
        .enumerate()
        .map(|(i, (name, da))| {
            let lp = solve_primal(&da_to_plp(da)).objective;
            let slack = FLOOR_SLACK * (1.0 + lp);
            let order = random_order(da.num_impressions(), split_seed(88, i as u64));
            let greedy = run_online(da, &order, OnlineRule::Greedy)
                .allocation
                .total_value;
            assert!(
                greedy >= 0.5 * lp - slack,
                "{name}: greedy {greedy} under half of LP {lp}"
            );
            let stable = total_value(
                &compute_fair(da, SharingPolicy::StableMatching),
                da,
            );
            assert!(
                stable >= 0.5 * lp - slack,
                "{name}: stable fair {stable} under half of LP {lp}"
            );
            (greedy / lp, stable / lp)
        })
        .collect();

    let worst_greedy = results.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
    let worst_stable = results.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    println!(
        "[criterion 4] PASS — {} instances, worst greedy ratio {worst_greedy:.4}, worst stable-fair ratio {worst_stable:.4}, zero violations",
        results.len()
    );
}

// --- criterion 5 -----------------------------------------------------------

#[test]
fn criterion_05_sharing_policy_inefficiency() {
    let mut equal_ratios = Vec::new();
    let mut prop_ratios = Vec::new();
    for k in [5usize, 10, 20] {
        let da = generate_sharing_gap(k).unwrap();
        let lp = solve_primal(&da_to_plp(&da)).objective;
        let equal = total_value(&compute_fair(&da, SharingPolicy::Equal), &da) / lp;
        let prop = total_value(&compute_fair(&da, SharingPolicy::Proportional), &da) / lp;
        equal_ratios.push(equal);
        prop_ratios.push(prop);
    }
    assert!(
        equal_ratios[1] <= SHARING_CAP && prop_ratios[1] <= SHARING_CAP,
        "K=10 ratios above {SHARING_CAP}: equal {:.4}, proportional {:.4}",
        equal_ratios[1],
        prop_ratios[1]
    );
    for ratios in [&equal_ratios, &prop_ratios] {
        assert!(
            ratios[0] > ratios[1] && ratios[1] > ratios[2],
            "ratios must fall as K grows: {ratios:?}"
        );
    }
    println!(
        "[criterion 5] PASS — equal {:.4}/{:.4}/{:.4}, proportional {:.4}/{:.4}/{:.4} at K=5/10/20",
        equal_ratios[0], equal_ratios[1], equal_ratios[2],
        prop_ratios[0], prop_ratios[1], prop_ratios[2]
    );
}

// --- criteria 6 and 7 ------------------------------------------------------

static COMPETITIVE_STUDY: std::sync::OnceLock<(Vec<AlgorithmId>, Vec<f64>, Vec<f64>)> =
    std::sync::OnceLock::new();

/// Mean efficiency and mean raw unfairness per algorithm over the
/// competitive suite: 20 instances x 5 paired trials. Computed once and
/// shared by the two tests that read it.
fn competitive_study() -> &'static (Vec<AlgorithmId>, Vec<f64>, Vec<f64>) {
    COMPETITIVE_STUDY.get_or_init(competitive_study_impl)
}

fn competitive_study_impl() -> (Vec<AlgorithmId>, Vec<f64>, Vec<f64>) {
    let algorithms = vec![
        AlgorithmId::Greedy,
        AlgorithmId::PdAvg,
        AlgorithmId::PdExp,
        AlgorithmId::Hybrid,
        AlgorithmId::DualBase,
    ];
    let instances = 20usize;
    let tables: Vec<_> = (0..instances as u64)
        .into_par_iter()
        .map(|i| {
            let da = tiered_competitive(i);
            let mut config =
                ExperimentConfig::new(algorithms.clone(), 5, 0.2, split_seed(77, i));
            config.shrink = false;
            config.hybrid_schedule = HybridSchedule::ExpHalfLife(4.0);
            run_experiment(&da, &config).unwrap()
        })
        .collect();
    let mut mean_eff = vec![0.0; algorithms.len()];
    let mut mean_f = vec![0.0; algorithms.len()];
    for table in &tables {
        for (k, s) in table.summaries.iter().enumerate() {
            mean_eff[k] += s.mean_eff / instances as f64;
            mean_f[k] += s.mean_fairness_raw / instances as f64;
        }
    }
    (algorithms, mean_eff, mean_f)
}

#[test]
fn criterion_06_efficiency_ordering_on_competitive_instances() {
    let start = Instant::now();
    let (algorithms, mean_eff, _) = competitive_study();
    let eff = |a: AlgorithmId| {
        mean_eff[algorithms.iter().position(|x| *x == a).unwrap()]
    };
    let (greedy, avg, trained, hybrid) = (
        eff(AlgorithmId::Greedy),
        eff(AlgorithmId::PdAvg),
        eff(AlgorithmId::DualBase),
        eff(AlgorithmId::Hybrid),
    );
    assert!(
        trained > avg && avg > greedy,
        "ordering violated: trained {trained:.3}, averaging {avg:.3}, greedy {greedy:.3}"
    );
    assert!(
        trained - avg >= ORDERING_MARGIN,
        "trained-over-averaging gap {:.3} under {ORDERING_MARGIN}",
        trained - avg
    );
    assert!(
        hybrid >= trained - HYBRID_SLACK,
        "hybrid {hybrid:.3} trails trained {trained:.3} by more than {HYBRID_SLACK}"
    );
    println!(
        "[criterion 6] PASS — DualBase {trained:.2} > PD_AVG {avg:.2} > GREEDY {greedy:.2} (gap {:.2}), HYBRID {hybrid:.2}, {:?}",
        trained - avg,
        start.elapsed()
    );
}

#[test]
fn criterion_07_fairness_metric_contracts() {
    // Hard contract 1: the ideal allocation is at distance zero from itself.
    let da = showcase_instance();
    let star = compute_fair(&da, SharingPolicy::Equal);
    assert_eq!(fairness_metric(&star, &star, &da), 0.0);

    // Hard contract 2: uniform scaling of the allocation cancels out.
    let mut rng = ChaCha8Rng::seed_from_u64(71);
    for _ in 0..200 {
        let n = rng.gen_range(1..6);
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..50.0)).collect();
        let v_star: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..50.0)).collect();
        if v.iter().sum::<f64>() <= 0.0 {
            continue;
        }
        for lambda in [0.25, 0.5, 2.0, 8.0] {
            let scaled: Vec<f64> = v.iter().map(|x| x * lambda).collect();
            let diff =
                (fairness_metric_values(&v, &v_star) - fairness_metric_values(&scaled, &v_star))
                    .abs();
            assert!(diff <= METRIC_SCALE_TOL, "scale invariance broke: {diff}");
        }
    }

    // Report-only: the myopic rule should be the least fair on the
    // competitive suite.
    let (algorithms, _, mean_f) = competitive_study();
    let f = |a: AlgorithmId| mean_f[algorithms.iter().position(|x| *x == a).unwrap()];
    let greedy_f = f(AlgorithmId::Greedy);
    let rivals = [
        (AlgorithmId::PdAvg, f(AlgorithmId::PdAvg)),
        (AlgorithmId::PdExp, f(AlgorithmId::PdExp)),
        (AlgorithmId::DualBase, f(AlgorithmId::DualBase)),
    ];
    let verdict = if rivals.iter().all(|(_, v)| greedy_f > *v) {
        "greedy is least fair as expected"
    } else {
        "WARNING: greedy is not the least fair on this synthetic suite (report-only)"
    };
    println!(
        "[criterion 7] PASS — identity 0, scaling invariant ≤ {METRIC_SCALE_TOL:.0e}; raw f: greedy {greedy_f:.0}, averaging {:.0}, discounted {:.0}, trained {:.0}; {verdict}",
        rivals[0].1, rivals[1].1, rivals[2].1
    );
}

// --- criterion 8 -----------------------------------------------------------

#[test]
fn criterion_08_sample_diagnostics_are_clean() {
    let start = Instant::now();
    let da = conforming_da(6_000, 424_242);
    let plp = da_to_plp(&da).normalize();
    let sol = solve_primal(&plp);
    let report = check_ptas_conditions(&plp, 0.1, sol.objective).unwrap();
    assert!(report.ok, "diagnostic instance must conform");

    let n = plp.num_agents();
    let bad: usize = (0..200u64)
        .into_par_iter()
        .map(|s| {
            let order = random_order(n, split_seed(55, s));
            let prices = train(&plp, &order, 0.1, split_seed(56, s)).unwrap();
            let diag = diagnose_sample(&plp, &order, 0.1, &prices).unwrap();
            usize::from(diag.any_bad)
        })
        .sum();
    assert_eq!(bad, 0, "{bad}/200 samples tripped a concentration flag");

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 120.0, "took {elapsed:?}, limit 2min");
    println!("[criterion 8] PASS — 0/200 samples flagged on a conforming instance, {elapsed:?}");
}

// --- criterion 9 -----------------------------------------------------------

#[test]
fn criterion_09_tiered_market_degrades_with_more_tiers() {
    let coarse = lower_bound_demo(2, PTAS_MASTER_SEED).unwrap();
    let fine = lower_bound_demo(4, PTAS_MASTER_SEED).unwrap();
    assert!(
        fine.best_worst_ratio < coarse.best_worst_ratio,
        "T=4 ratio {:.4} not below T=2 ratio {:.4}",
        fine.best_worst_ratio,
        coarse.best_worst_ratio
    );
    assert!(
        coarse.best_worst_ratio < LB_CEILING && fine.best_worst_ratio < LB_CEILING,
        "ratios must sit below {LB_CEILING}: T=2 {:.4}, T=4 {:.4}",
        coarse.best_worst_ratio,
        fine.best_worst_ratio
    );
    println!(
        "[criterion 9] PASS — best worst-case ratio {:.4} (T=2) vs {:.4} (T=4), both < {LB_CEILING}",
        coarse.best_worst_ratio, fine.best_worst_ratio
    );
}

// --- criterion 10 ----------------------------------------------------------

fn cli() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_stopack"));
    cmd.env_remove("SPL_SEED").env_remove("SPL_OUT");
    cmd
}

fn run_cli(args: &[&str]) -> Output {
    let output = cli().args(args).output().expect("binary runs");
    assert!(
        output.status.success(),
        "command {args:?} failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

/// Runs one invocation twice against fresh output paths and requires the
/// stdout bytes and every output file to match exactly.
fn assert_deterministic(dir: &Path, label: &str, build: impl Fn(&Path) -> (Vec<String>, Vec<std::path::PathBuf>)) {
    let mut captured: Vec<(Vec<u8>, Vec<Vec<u8>>)> = Vec::new();
    for rerun in 0..2 {
        let scratch = dir.join(format!("{label}-{rerun}"));
        std::fs::create_dir_all(&scratch).unwrap();
        let (args, outputs) = build(&scratch);
        let arg_refs: Vec<&str> = args.iter().map(|s| s.as_str()).collect();
        let output = run_cli(&arg_refs);
        let files = outputs
            .iter()
            .map(|p| std::fs::read(p).unwrap_or_else(|e| panic!("{label}: missing {p:?}: {e}")))
            .collect();
        captured.push((output.stdout, files));
    }
    assert_eq!(captured[0].0, captured[1].0, "{label}: stdout differs between reruns");
    assert_eq!(captured[0].1, captured[1].1, "{label}: output files differ between reruns");
}

#[test]
fn criterion_10_cli_outputs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("inst.json");
    run_cli(&[
        "gen", "--m", "5", "--n", "120", "--demand-min", "5", "--demand-max", "20", "--seed",
        "42", "-o",
        inst.to_str().unwrap(),
    ]);
    let inst_str = inst.to_str().unwrap().to_string();

    let own = |p: &Path, name: &str| p.join(name);
    assert_deterministic(dir.path(), "gen", |p| {
        let out = own(p, "g.json");
        (
            vec!["gen".into(), "--m".into(), "3".into(), "--n".into(), "40".into(),
                 "--seed".into(), "11".into(), "-o".into(), out.display().to_string()],
            vec![out],
        )
    });
    assert_deterministic(dir.path(), "lp", |p| {
        let out = own(p, "sol.json");
        (
            vec!["lp".into(), inst_str.clone(), "-o".into(), out.display().to_string()],
            vec![out],
        )
    });
    assert_deterministic(dir.path(), "run", |p| {
        let out = own(p, "run.json");
        (
            vec!["run".into(), inst_str.clone(), "--algo".into(), "dualbase".into(),
                 "--eps".into(), "0.2".into(), "--seed".into(), "9".into(), "--shrink".into(),
                 "-o".into(), out.display().to_string()],
            vec![out],
        )
    });
    assert_deterministic(dir.path(), "fair", |p| {
        let out = own(p, "fair.json");
        (
            vec!["fair".into(), inst_str.clone(), "--policy".into(), "stable-matching".into(),
                 "-o".into(), out.display().to_string()],
            vec![out],
        )
    });
    assert_deterministic(dir.path(), "bench", |p| {
        let csv = own(p, "results.csv");
        let summary = own(p, "summary.json");
        (
            vec!["bench".into(), inst_str.clone(), "--trials".into(), "3".into(),
                 "--eps".into(), "0.25".into(), "--seed".into(), "3".into(),
                 "--jobs".into(), "2".into(),
                 "-o".into(), csv.display().to_string(),
                 "--summary".into(), summary.display().to_string()],
            vec![csv, summary],
        )
    });
    assert_deterministic(dir.path(), "diag", |p| {
        let out = own(p, "diag.json");
        (
            vec!["diag".into(), inst_str.clone(), "--eps".into(), "0.2".into(),
                 "--seed".into(), "5".into(), "-o".into(), out.display().to_string()],
            vec![out],
        )
    });
    assert_deterministic(dir.path(), "lbdemo", |p| {
        let out = own(p, "lb.json");
        (
            vec!["lbdemo".into(), "--tiers".into(), "2".into(), "--seed".into(), "1".into(),
                 "-o".into(), out.display().to_string()],
            vec![out],
        )
    });

    println!("[criterion 10] PASS — gen/lp/run/fair/bench/diag/lbdemo byte-identical across reruns");
}
