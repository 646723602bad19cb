//! Seeded experiment harness: paired trials over random arrival orders,
//! efficiency normalized against the LP optimum, fairness normalized against
//! the fair allocation, CSV emission, a sample-size convergence study, and a
//! fixed-threshold hardness demonstration.
//!
//! Within one trial every online algorithm consumes the same random
//! permutation, so differences are attributable to the algorithms alone.
//! `LP_WEIGHT` (the offline LP optimum) anchors normalized efficiency at
//! 100; `FAIR` (the fair allocation under the configured sharing policy)
//! anchors normalized fairness at 0, and the worst raw fairness within a
//! trial maps to 100.
//!
//! Per-trial seeds derive from the master seed by a splitmix64 step
//! ([`split_seed`]), so adding trials never perturbs earlier ones. Wall
//! times are recorded only when explicitly enabled; they default to zero so
//! that repeated runs produce byte-identical reports.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fairness::{
    advertiser_values, compute_fair, fairness_metric_values, total_value, SharingPolicy,
};
use crate::instance::{da_to_plp, DaInstance, SyntheticConfig};
use crate::lp;
use crate::online::{run_hybrid, run_online, HybridSchedule, OnlineRule};
use crate::training::{run_dual_base_da, TrainingPolicy};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("trials must be at least 1, got {0}")]
    BadTrials(usize),
    #[error("epsilon must lie in (0, 1), got {0}")]
    BadEpsilon(f64),
    #[error("no algorithms selected")]
    NoAlgorithms,
    #[error("training-based algorithms need floor(epsilon * {n}) >= 1")]
    SampleTooSmall { n: usize },
    #[error("tier count must be 2, 3, or 4, got {0}")]
    BadTier(u32),
    #[error("unknown algorithm name: {0}")]
    UnknownAlgorithm(String),
    #[error("failed to write {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Instance(#[from] crate::instance::InstanceError),
    #[error(transparent)]
    Train(#[from] crate::training::TrainError),
}

/// The algorithms the harness can compare.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AlgorithmId {
    Greedy,
    PdAvg,
    PdExp,
    Hybrid,
    DualBase,
    Fair,
    LpWeight,
}

impl AlgorithmId {
    pub const ALL: [AlgorithmId; 7] = [
        AlgorithmId::Greedy,
        AlgorithmId::PdAvg,
        AlgorithmId::PdExp,
        AlgorithmId::Hybrid,
        AlgorithmId::DualBase,
        AlgorithmId::Fair,
        AlgorithmId::LpWeight,
    ];

    /// Canonical display name used in reports.
    pub fn name(&self) -> &'static str {
        match self {
            AlgorithmId::Greedy => "GREEDY",
            AlgorithmId::PdAvg => "PD_AVG",
            AlgorithmId::PdExp => "PD_EXP",
            AlgorithmId::Hybrid => "HYBRID",
            AlgorithmId::DualBase => "DualBase",
            AlgorithmId::Fair => "FAIR",
            AlgorithmId::LpWeight => "LP_WEIGHT",
        }
    }

    fn needs_training(&self) -> bool {
        matches!(self, AlgorithmId::Hybrid | AlgorithmId::DualBase)
    }
}

impl fmt::Display for AlgorithmId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AlgorithmId {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, BenchError> {
        match s.to_ascii_lowercase().as_str() {
            "greedy" => Ok(AlgorithmId::Greedy),
            "pd_avg" | "pdavg" => Ok(AlgorithmId::PdAvg),
            "pd_exp" | "pdexp" => Ok(AlgorithmId::PdExp),
            "hybrid" => Ok(AlgorithmId::Hybrid),
            "dualbase" | "dual_base" => Ok(AlgorithmId::DualBase),
            "fair" => Ok(AlgorithmId::Fair),
            "lp_weight" | "lpweight" | "lp" => Ok(AlgorithmId::LpWeight),
            other => Err(BenchError::UnknownAlgorithm(other.to_string())),
        }
    }
}

/// One (algorithm, trial) measurement.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub algorithm: String,
    pub trial: usize,
    pub value: f64,
    /// `100 * value / LP optimum`.
    pub eff_norm: f64,
    pub fairness_raw: f64,
    /// Raw fairness rescaled within the trial: 0 for the fairest observed
    /// (FAIR itself when present), 100 for the worst, 0 for everyone when
    /// all raw values agree.
    pub fairness_norm: f64,
    pub advertiser_value: Vec<f64>,
    pub seed: u64,
    pub wall_ms: f64,
}

/// Per-algorithm mean/std aggregation over trials (sample standard
/// deviation; zero for a single trial).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlgorithmSummary {
    pub algorithm: String,
    pub mean_value: f64,
    pub std_value: f64,
    pub mean_eff: f64,
    pub std_eff: f64,
    pub mean_fairness_raw: f64,
    pub std_fairness_raw: f64,
    pub mean_fairness_norm: f64,
}

/// Full experiment output: per-trial rows plus per-algorithm summaries.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentTable {
    pub reports: Vec<RunReport>,
    pub summaries: Vec<AlgorithmSummary>,
    pub lp_value: f64,
    pub fair_value: f64,
}

/// Experiment configuration beyond the instance itself.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub algorithms: Vec<AlgorithmId>,
    pub trials: usize,
    pub epsilon: f64,
    pub seed: u64,
    /// Policy of the fair allocation used as the fairness target and as the
    /// FAIR contender.
    pub fair_policy: SharingPolicy,
    pub hybrid_schedule: HybridSchedule,
    /// Shrink mode for DualBase training.
    pub shrink: bool,
    /// How the DualBase sample prefix is assigned.
    pub training_policy: TrainingPolicy,
    /// Measure wall times (breaks byte-identical reruns; off by default).
    pub timings: bool,
}

impl ExperimentConfig {
    pub fn new(algorithms: Vec<AlgorithmId>, trials: usize, epsilon: f64, seed: u64) -> Self {
        ExperimentConfig {
            algorithms,
            trials,
            epsilon,
            seed,
            fair_policy: SharingPolicy::Equal,
            hybrid_schedule: HybridSchedule::Linear,
            shrink: true,
            training_policy: TrainingPolicy::Online,
            timings: false,
        }
    }
}

/// Uniform random permutation of `0..n`, deterministic per seed.
pub fn random_order(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    order
}

/// Splitmix64 step: the seed for stream `index` under `master`. Documented
/// so that external tooling can reproduce per-trial seeds.
pub fn split_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs the paired-trial experiment. Trials execute in parallel on the
/// current rayon pool; the row order of the result is (trial, algorithm) and
/// is independent of scheduling.
pub fn run_experiment(da: &DaInstance, config: &ExperimentConfig) -> Result<ExperimentTable, BenchError> {
    if config.trials < 1 {
        return Err(BenchError::BadTrials(config.trials));
    }
    if !(config.epsilon > 0.0 && config.epsilon < 1.0) {
        return Err(BenchError::BadEpsilon(config.epsilon));
    }
    if config.algorithms.is_empty() {
        return Err(BenchError::NoAlgorithms);
    }
    let n = da.num_impressions();
    if config.algorithms.iter().any(AlgorithmId::needs_training)
        && (config.epsilon * n as f64).floor() < 1.0
    {
        return Err(BenchError::SampleTooSmall { n });
    }

    // Order-independent references, computed once.
    let fair = compute_fair(da, config.fair_policy);
    let fair_values = advertiser_values(&fair, da);
    let fair_value = total_value(&fair, da);
    let plp = da_to_plp(da).normalize();
    let lp_solution = lp::solve_primal(&plp);
    let lp_value = lp_solution.objective;
    let mut lp_values = vec![0.0; da.num_advertisers()];
    for (i, xs) in lp_solution.x.iter().enumerate() {
        for (o, &x) in xs.iter().enumerate() {
            if x > 0.0 {
                let edge = &da.impressions[i].edges[o];
                lp_values[edge.advertiser] += edge.weight * x;
            }
        }
    }

    let trial_rows: Vec<Vec<RunReport>> = (0..config.trials)
        .into_par_iter()
        .map(|trial| {
            let trial_seed = split_seed(config.seed, trial as u64);
            let order = random_order(n, trial_seed);
            let mut rows = Vec::with_capacity(config.algorithms.len());
            for &alg in &config.algorithms {
                let start = Instant::now();
                let (value, values) = match alg {
                    AlgorithmId::Greedy | AlgorithmId::PdAvg | AlgorithmId::PdExp => {
                        let rule = match alg {
                            AlgorithmId::Greedy => OnlineRule::Greedy,
                            AlgorithmId::PdAvg => OnlineRule::PdAvg,
                            _ => OnlineRule::PdExp,
                        };
                        let run = run_online(da, &order, rule);
                        (run.allocation.total_value, run.allocation.advertiser_value)
                    }
                    AlgorithmId::Hybrid => {
                        let run = run_hybrid(
                            da,
                            &order,
                            config.epsilon,
                            trial_seed,
                            config.hybrid_schedule,
                        )
                        .expect("sample size validated before the trial loop");
                        (run.allocation.total_value, run.allocation.advertiser_value)
                    }
                    AlgorithmId::DualBase => {
                        let run = run_dual_base_da(
                            da,
                            &order,
                            config.epsilon,
                            trial_seed,
                            config.training_policy,
                            config.shrink,
                        )
                        .expect("sample size validated before the trial loop");
                        (run.allocation.total_value, run.allocation.advertiser_value)
                    }
                    AlgorithmId::Fair => (fair_value, fair_values.clone()),
                    AlgorithmId::LpWeight => (lp_value, lp_values.clone()),
                };
                let wall_ms = if config.timings {
                    start.elapsed().as_secs_f64() * 1e3
                } else {
                    0.0
                };
                // The parenthesized ratio makes the reference row exact:
                // value == lp_value gives value/lp_value == 1.0, eff == 100.0.
                let eff_norm = if lp_value > 0.0 {
                    100.0 * (value / lp_value)
                } else {
                    100.0
                };
                let fairness_raw = fairness_metric_values(&values, &fair_values);
                rows.push(RunReport {
                    algorithm: alg.name().to_string(),
                    trial,
                    value,
                    eff_norm,
                    fairness_raw,
                    fairness_norm: 0.0,
                    advertiser_value: values,
                    seed: trial_seed,
                    wall_ms,
                });
            }
            // Fairness normalization within the trial's comparison set.
            let worst = rows.iter().map(|r| r.fairness_raw).fold(0.0, f64::max);
            if worst > 0.0 {
                for row in &mut rows {
                    row.fairness_norm = 100.0 * (row.fairness_raw / worst);
                }
            }
            rows
        })
        .collect();

    let reports: Vec<RunReport> = trial_rows.into_iter().flatten().collect();
    let summaries = summarize(&config.algorithms, &reports);
    Ok(ExperimentTable {
        reports,
        summaries,
        lp_value,
        fair_value,
    })
}

fn summarize(algorithms: &[AlgorithmId], reports: &[RunReport]) -> Vec<AlgorithmSummary> {
    fn mean_std(values: &[f64]) -> (f64, f64) {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        if values.len() < 2 {
            return (mean, 0.0);
        }
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var.sqrt())
    }
    algorithms
        .iter()
        .map(|alg| {
            let rows: Vec<&RunReport> = reports
                .iter()
                .filter(|r| r.algorithm == alg.name())
                .collect();
            let values: Vec<f64> = rows.iter().map(|r| r.value).collect();
            let effs: Vec<f64> = rows.iter().map(|r| r.eff_norm).collect();
            let raws: Vec<f64> = rows.iter().map(|r| r.fairness_raw).collect();
            let norms: Vec<f64> = rows.iter().map(|r| r.fairness_norm).collect();
            let (mean_value, std_value) = mean_std(&values);
            let (mean_eff, std_eff) = mean_std(&effs);
            let (mean_fairness_raw, std_fairness_raw) = mean_std(&raws);
            let (mean_fairness_norm, _) = mean_std(&norms);
            AlgorithmSummary {
                algorithm: alg.name().to_string(),
                mean_value,
                std_value,
                mean_eff,
                std_eff,
                mean_fairness_raw,
                std_fairness_raw,
                mean_fairness_norm,
            }
        })
        .collect()
}

/// One point of the sample-size convergence curve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurvePoint {
    pub epsilon: f64,
    pub mean_ratio: f64,
    pub std_ratio: f64,
}

/// Ratio of the trained allocator's value to the LP optimum across a grid of
/// sample rates. Each trial draws a fresh synthetic instance and a fresh
/// order (both from the master seed), shared across the grid for paired
/// comparison. The allocator runs in shrink mode with the sample skipped,
/// which is the analyzed configuration.
pub fn ptas_convergence_study(
    generator: &SyntheticConfig,
    eps_grid: &[f64],
    trials: usize,
    seed: u64,
) -> Result<Vec<CurvePoint>, BenchError> {
    if trials < 1 {
        return Err(BenchError::BadTrials(trials));
    }
    for &eps in eps_grid {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(BenchError::BadEpsilon(eps));
        }
        if (eps * generator.impressions as f64).floor() < 1.0 {
            return Err(BenchError::SampleTooSmall {
                n: generator.impressions,
            });
        }
    }

    let per_trial: Vec<Vec<f64>> = (0..trials)
        .into_par_iter()
        .map(|trial| -> Result<Vec<f64>, BenchError> {
            let mut cfg = generator.clone();
            cfg.seed = split_seed(seed, 2 * trial as u64);
            let da = crate::instance::generate_synthetic(&cfg)?;
            let order_seed = split_seed(seed, 2 * trial as u64 + 1);
            let order = random_order(da.num_impressions(), order_seed);
            let lp_value = lp::solve_primal(&da_to_plp(&da).normalize()).objective;
            eps_grid
                .iter()
                .map(|&eps| {
                    let run = run_dual_base_da(
                        &da,
                        &order,
                        eps,
                        order_seed,
                        TrainingPolicy::Skip,
                        true,
                    )?;
                    Ok(if lp_value > 0.0 {
                        run.allocation.total_value / lp_value
                    } else {
                        1.0
                    })
                })
                .collect()
        })
        .collect::<Result<_, _>>()?;

    Ok(eps_grid
        .iter()
        .enumerate()
        .map(|(idx, &eps)| {
            let ratios: Vec<f64> = per_trial.iter().map(|row| row[idx]).collect();
            let n = ratios.len() as f64;
            let mean = ratios.iter().sum::<f64>() / n;
            let std = if ratios.len() < 2 {
                0.0
            } else {
                (ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            };
            CurvePoint {
                epsilon: eps,
                mean_ratio: mean,
                std_ratio: std,
            }
        })
        .collect())
}

/// Outcome of one committed threshold strategy in the hardness demo.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StrategyReport {
    /// The strategy accepts draws of tier `threshold` or higher.
    pub threshold: u32,
    /// Mean strategy/hindsight ratio at each draw count.
    pub mean_ratio_per_count: Vec<f64>,
    /// Worst of those means: the strategy's guarantee when the draw count is
    /// unknown.
    pub worst_ratio: f64,
}

/// Report of the fixed-threshold-versus-hindsight demonstration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LowerBoundReport {
    pub tiers: u32,
    pub capacity: usize,
    pub draw_counts: Vec<usize>,
    pub strategies: Vec<StrategyReport>,
    /// Best worst-case ratio over all committed strategies; shrinks as the
    /// tier count grows.
    pub best_worst_ratio: f64,
}

const LB_TRIALS: usize = 400;

/// Demonstrates why the draw count must be known in advance: a strategy that
/// commits to a value threshold before seeing the stream cannot be
/// simultaneously competitive at every plausible draw count.
///
/// The market has `T` tiers; tier `i` is worth `T^(2i)` and appears with
/// probability proportional to `T^(-2i)`. One resource holds
/// `ceil(3 T ln T)` units. For each draw count `round(6 T ln T * T^(2j))`,
/// every threshold strategy (accept tiers `>= k`, first-come first-served
/// until capacity) is simulated against the hindsight optimum (the capacity
/// heaviest draws). The report shows each strategy's worst mean ratio across
/// draw counts and the best such guarantee; that best degrades quickly in
/// `T`.
pub fn lower_bound_demo(tiers: u32, seed: u64) -> Result<LowerBoundReport, BenchError> {
    if !(2..=4).contains(&tiers) {
        return Err(BenchError::BadTier(tiers));
    }
    let t = tiers as f64;
    let capacity = (3.0 * t * t.ln()).ceil() as usize;
    let base = 6.0 * t * t.ln();
    let values: Vec<f64> = (0..tiers).map(|i| t.powi(2 * i as i32)).collect();
    let draw_counts: Vec<usize> = (0..tiers)
        .map(|j| (base * t.powi(2 * j as i32)).round() as usize)
        .collect();
    // Exact tier probabilities, proportional to T^(-2i).
    let raw: Vec<f64> = (0..tiers).map(|i| t.powi(-2 * (i as i32))).collect();
    let z: f64 = raw.iter().sum();
    let cumulative: Vec<f64> = raw
        .iter()
        .scan(0.0, |acc, p| {
            *acc += p / z;
            Some(*acc)
        })
        .collect();

    let max_draws = *draw_counts.iter().max().unwrap();
    // ratio_sums[k][c] accumulates the per-trial ratio of strategy k at draw
    // count index c.
    let mut ratio_sums = vec![vec![0.0f64; draw_counts.len()]; tiers as usize];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sequence: Vec<u32> = Vec::with_capacity(max_draws);
    for _ in 0..LB_TRIALS {
        sequence.clear();
        for _ in 0..max_draws {
            let u: f64 = rng.gen();
            let tier = cumulative.partition_point(|&c| c < u) as u32;
            sequence.push(tier.min(tiers - 1));
        }
        for (c, &count) in draw_counts.iter().enumerate() {
            let prefix = &sequence[..count];
            let opt = hindsight_value(prefix, &values, capacity);
            for k in 0..tiers {
                let got = threshold_value(prefix, &values, capacity, k);
                ratio_sums[k as usize][c] += if opt > 0.0 { got / opt } else { 1.0 };
            }
        }
    }

    let strategies: Vec<StrategyReport> = (0..tiers)
        .map(|k| {
            let means: Vec<f64> = ratio_sums[k as usize]
                .iter()
                .map(|s| s / LB_TRIALS as f64)
                .collect();
            let worst = means.iter().cloned().fold(f64::INFINITY, f64::min);
            StrategyReport {
                threshold: k,
                mean_ratio_per_count: means,
                worst_ratio: worst,
            }
        })
        .collect();
    let best_worst_ratio = strategies
        .iter()
        .map(|s| s.worst_ratio)
        .fold(0.0, f64::max);
    Ok(LowerBoundReport {
        tiers,
        capacity,
        draw_counts,
        strategies,
        best_worst_ratio,
    })
}

/// Value of the hindsight optimum: the `capacity` heaviest draws.
fn hindsight_value(sequence: &[u32], values: &[f64], capacity: usize) -> f64 {
    let mut counts = vec![0usize; values.len()];
    for &tier in sequence {
        counts[tier as usize] += 1;
    }
    let mut remaining = capacity;
    let mut total = 0.0;
    for tier in (0..values.len()).rev() {
        let take = counts[tier].min(remaining);
        total += take as f64 * values[tier];
        remaining -= take;
        if remaining == 0 {
            break;
        }
    }
    total
}

/// Value of the committed strategy: accept tiers `>= threshold` first-come
/// first-served until capacity.
fn threshold_value(sequence: &[u32], values: &[f64], capacity: usize, threshold: u32) -> f64 {
    let mut remaining = capacity;
    let mut total = 0.0;
    for &tier in sequence {
        if tier >= threshold {
            total += values[tier as usize];
            remaining -= 1;
            if remaining == 0 {
                break;
            }
        }
    }
    total
}

/// CSV header emitted by [`emit_csv`].
pub const CSV_HEADER: &str = "algorithm,trial,value,eff_norm,fairness_raw,fairness_norm,seed,wall_ms";

/// Writes one row per report under the fixed header. Numbers use the
/// shortest exact decimal form, locale-independent.
pub fn emit_csv(reports: &[RunReport], path: &Path) -> Result<(), BenchError> {
    let mut out = String::with_capacity(64 * (reports.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.algorithm,
            r.trial,
            r.value,
            r.eff_norm,
            r.fairness_raw,
            r.fairness_norm,
            r.seed,
            r.wall_ms
        ));
    }
    std::fs::write(path, out).map_err(|source| BenchError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// One parsed CSV data row; see [`parse_csv`].
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub algorithm: String,
    pub trial: usize,
    pub value: f64,
    pub eff_norm: f64,
    pub fairness_raw: f64,
    pub fairness_norm: f64,
    pub seed: u64,
    pub wall_ms: f64,
}

/// Parses a file produced by [`emit_csv`] back into rows.
pub fn parse_csv(path: &Path) -> Result<Vec<CsvRow>, BenchError> {
    let text = std::fs::read_to_string(path).map_err(|source| BenchError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if idx == 0 {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 8 {
            continue;
        }
        rows.push(CsvRow {
            algorithm: parts[0].to_string(),
            trial: parts[1].parse().unwrap_or(0),
            value: parts[2].parse().unwrap_or(f64::NAN),
            eff_norm: parts[3].parse().unwrap_or(f64::NAN),
            fairness_raw: parts[4].parse().unwrap_or(f64::NAN),
            fairness_norm: parts[5].parse().unwrap_or(f64::NAN),
            seed: parts[6].parse().unwrap_or(0),
            wall_ms: parts[7].parse().unwrap_or(f64::NAN),
        });
    }
    Ok(rows)
}
