//! Trained-price allocation: learn resource prices from a sample prefix of
//! the arrival order, then let every later agent take its best price-adjusted
//! option.
//!
//! Training solves the sample LP with capacities scaled by the sample rate
//! `epsilon`, which makes the sample's dual prices an estimate of the full
//! instance's prices. A later agent takes the option maximizing
//! `w - beta . usage`, provided that gain is nonnegative. Ties are broken by
//! a seeded multiplicative weight perturbation of relative size 1e-9, drawn
//! once per (agent, option), so reruns with one seed are identical and the
//! selection is invariant under uniform weight scaling.
//!
//! Capacity handling is report-and-measure: the allocator never refuses an
//! agent for capacity reasons, and the run reports per-resource utilization
//! and the worst violation factor. The optional shrink mode scales
//! capacities by `1/(1 + 3(eps + eps^2))` before training and allocation,
//! which absorbs the concentration overshoot and makes the emitted
//! allocation feasible for the original capacities on well-behaved samples.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::{da_to_plp, DaInstance, PlpInstance};
use crate::lp;
use crate::online::{self, AdvertiserStates, OnlineRule};

/// Relative size of the tie-breaking weight perturbation.
pub const PERTURB_DELTA: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("epsilon must lie in (0, 1), got {0}")]
    BadEpsilon(f64),
    #[error("sample is empty: floor(epsilon * {n}) = 0")]
    SampleTooSmall { n: usize },
    #[error("instance must be normalized (all capacities 1)")]
    NotNormalized,
    #[error("order is not a permutation of the agents: {0}")]
    BadOrder(String),
    #[error("option uses resource index {index}, but only {known} prices are known")]
    UnknownResource { index: usize, known: usize },
}

/// How the sampled prefix itself is handled during allocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrainingPolicy {
    /// Sample agents stay unassigned; the analysis object.
    Skip,
    /// Sample agents are assigned on the fly by the averaging price rule
    /// with free disposal, so their value is not forfeited.
    Online,
}

/// Learned resource prices plus the context needed to replay the run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DualPrices {
    pub beta: Vec<f64>,
    pub epsilon: f64,
    pub sample_size: usize,
    /// Seed of the tie-breaking perturbation.
    pub seed: u64,
}

/// Price-adjusted gain of one option: `w - beta . usage`, without any
/// perturbation.
pub fn gain(prices: &DualPrices, option: &crate::instance::AgentOption) -> Result<f64, TrainError> {
    let mut g = option.weight;
    for u in &option.usage {
        if u.resource >= prices.beta.len() {
            return Err(TrainError::UnknownResource {
                index: u.resource,
                known: prices.beta.len(),
            });
        }
        g -= prices.beta[u.resource] * u.amount;
    }
    Ok(g)
}

/// The capacity shrink factor `1 + 3(eps + eps^2)`.
pub fn shrink_factor(epsilon: f64) -> f64 {
    1.0 + 3.0 * (epsilon + epsilon * epsilon)
}

/// Shrink mode on a normalized instance: scaling every capacity by
/// `1/shrink_factor` and renormalizing is the same LP as scaling every usage
/// amount up by `shrink_factor`, which is what this returns.
pub fn widen_usage(inst: &PlpInstance, epsilon: f64) -> PlpInstance {
    let f = shrink_factor(epsilon);
    let mut out = inst.clone();
    for agent in &mut out.agents {
        for opt in &mut agent.options {
            for u in &mut opt.usage {
                u.amount *= f;
            }
        }
    }
    out
}

/// Seeded multiplicative perturbation `w -> w (1 + u * 1e-9)`, `u` uniform in
/// `[0, 1)`, drawn per option in instance order. Deterministic for one seed
/// and independent of the weights themselves.
pub fn perturb_weights(inst: &PlpInstance, seed: u64) -> PlpInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = inst.clone();
    for agent in &mut out.agents {
        for opt in &mut agent.options {
            let u: f64 = rng.gen();
            opt.weight *= 1.0 + u * PERTURB_DELTA;
        }
    }
    out
}

fn validate_order(n: usize, order: &[usize]) -> Result<(), TrainError> {
    if order.len() != n {
        return Err(TrainError::BadOrder(format!(
            "length {} but {} agents",
            order.len(),
            n
        )));
    }
    let mut seen = vec![false; n];
    for &i in order {
        if i >= n {
            return Err(TrainError::BadOrder(format!("index {i} out of range")));
        }
        if seen[i] {
            return Err(TrainError::BadOrder(format!("index {i} repeated")));
        }
        seen[i] = true;
    }
    Ok(())
}

fn sample_len(n: usize, epsilon: f64) -> Result<usize, TrainError> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(TrainError::BadEpsilon(epsilon));
    }
    let k = (epsilon * n as f64).floor() as usize;
    if k == 0 {
        return Err(TrainError::SampleTooSmall { n });
    }
    Ok(k)
}

/// Learns prices from the first `floor(epsilon n)` agents of `order`: their
/// sub-instance with capacities scaled by `epsilon` is solved and the
/// resource duals are returned. The instance must be normalized.
pub fn train(
    inst: &PlpInstance,
    order: &[usize],
    epsilon: f64,
    seed: u64,
) -> Result<DualPrices, TrainError> {
    if !inst.is_normalized() {
        return Err(TrainError::NotNormalized);
    }
    validate_order(inst.num_agents(), order)?;
    let k = sample_len(inst.num_agents(), epsilon)?;
    let perturbed = perturb_weights(inst, seed);
    let sample = perturbed.restrict_agents(&order[..k]);
    let reduced = lp::solve_reduced_dual(&sample, epsilon)
        .expect("epsilon already validated to lie in (0, 1)");
    Ok(DualPrices {
        beta: reduced.beta,
        epsilon,
        sample_size: k,
        seed,
    })
}

/// An allocation of a packing instance produced by the trained-price rule.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlpAllocation {
    /// Selected option per agent, `None` when unassigned.
    pub selected: Vec<Option<usize>>,
    /// Total perturbed weight of the selection (sample plus stream).
    pub value: f64,
    /// Value collected from the sampled prefix (zero under `Skip`).
    pub sample_value: f64,
    /// Value collected after the sample boundary.
    pub stream_value: f64,
    /// Final usage per resource.
    pub resource_usage: Vec<f64>,
    /// Worst `usage / capacity` over resources, 0 if there are none.
    pub violation_factor: f64,
}

/// Replays the arrival order against trained prices. Agents after the sample
/// boundary take their highest-gain option when that gain is nonnegative;
/// sampled agents follow `policy`. Capacities are not enforced; see the
/// module docs.
pub fn allocate_remaining(
    prices: &DualPrices,
    inst: &PlpInstance,
    order: &[usize],
    policy: TrainingPolicy,
) -> Result<PlpAllocation, TrainError> {
    if !inst.is_normalized() {
        return Err(TrainError::NotNormalized);
    }
    validate_order(inst.num_agents(), order)?;
    let n = inst.num_agents();
    let m = inst.num_resources();
    let k = prices.sample_size.min(n);
    let perturbed = perturb_weights(inst, prices.seed);

    let mut selected: Vec<Option<usize>> = vec![None; n];
    let mut usage = vec![0.0; m];
    let mut sample_value = 0.0;

    if policy == TrainingPolicy::Online {
        sample_value = assign_sample_online(&perturbed, &order[..k], &mut selected, &mut usage);
    }

    let mut stream_value = 0.0;
    for &i in &order[k..] {
        let agent = &perturbed.agents[i];
        let mut best: Option<(usize, f64)> = None;
        for (o, opt) in agent.options.iter().enumerate() {
            let g = gain(prices, opt)?;
            if g >= 0.0 && best.map_or(true, |(_, bg)| g > bg) {
                best = Some((o, g));
            }
        }
        if let Some((o, _)) = best {
            selected[i] = Some(o);
            stream_value += agent.options[o].weight;
            for u in &agent.options[o].usage {
                usage[u.resource] += u.amount;
            }
        }
    }

    let violation_factor = usage
        .iter()
        .zip(&inst.resources)
        .map(|(u, r)| u / r.capacity)
        .fold(0.0, f64::max);
    Ok(PlpAllocation {
        selected,
        value: sample_value + stream_value,
        sample_value,
        stream_value,
        resource_usage: usage,
        violation_factor,
    })
}

/// Averaging-price assignment with free disposal for the sampled prefix,
/// generalized from the display-ad rule: each resource prices itself at its
/// kept value over its capacity, an agent takes its best-priced option when
/// the margin is nonnegative, and an overfull resource evicts its lowest
/// value-per-usage member (the whole agent leaves). On display-ad instances
/// this is exactly the averaging heuristic.
fn assign_sample_online(
    perturbed: &PlpInstance,
    sample: &[usize],
    selected: &mut [Option<usize>],
    usage: &mut [f64],
) -> f64 {
    let m = perturbed.num_resources();
    // Value contribution of resource j: weight split across used resources
    // in proportion to usage.
    let mut kept_value = vec![0.0; m];
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); m];
    let caps: Vec<f64> = perturbed.resources.iter().map(|r| r.capacity).collect();

    for &i in sample {
        let agent = &perturbed.agents[i];
        let beta: Vec<f64> = (0..m).map(|j| kept_value[j] / caps[j]).collect();
        let mut best: Option<(usize, f64)> = None;
        for (o, opt) in agent.options.iter().enumerate() {
            let mut margin = opt.weight;
            for u in &opt.usage {
                margin -= beta[u.resource] * u.amount;
            }
            if margin >= 0.0 && best.map_or(true, |(_, bm)| margin > bm) {
                best = Some((o, margin));
            }
        }
        let Some((o, _)) = best else { continue };
        let opt = &agent.options[o];
        let total_usage: f64 = opt.usage.iter().map(|u| u.amount).sum();
        if total_usage == 0.0 {
            selected[i] = Some(o);
            continue;
        }
        selected[i] = Some(o);
        for u in &opt.usage {
            usage[u.resource] += u.amount;
            kept_value[u.resource] += opt.weight * u.amount / total_usage;
            members[u.resource].push(i);
        }
        // Free disposal: evict lowest-density members until within capacity.
        for j in 0..m {
            while usage[j] > caps[j] {
                let evict = members[j]
                    .iter()
                    .cloned()
                    .min_by(|&a, &b| {
                        density(perturbed, selected, a)
                            .partial_cmp(&density(perturbed, selected, b))
                            .unwrap()
                            .then(a.cmp(&b))
                    })
                    .expect("overfull resource must have members");
                let eo = selected[evict].expect("member must be selected");
                let eopt = &perturbed.agents[evict].options[eo];
                let etotal: f64 = eopt.usage.iter().map(|u| u.amount).sum();
                for u in &eopt.usage {
                    usage[u.resource] -= u.amount;
                    kept_value[u.resource] -= eopt.weight * u.amount / etotal;
                    members[u.resource].retain(|&a| a != evict);
                }
                selected[evict] = None;
            }
        }
    }
    sample
        .iter()
        .filter_map(|&i| selected[i].map(|o| perturbed.agents[i].options[o].weight))
        .sum()
}

fn density(inst: &PlpInstance, selected: &[Option<usize>], agent: usize) -> f64 {
    let o = selected[agent].expect("density of unselected agent");
    let opt = &inst.agents[agent].options[o];
    let total: f64 = opt.usage.iter().map(|u| u.amount).sum();
    opt.weight / total
}

/// Per-resource deviation between the sample and `epsilon` times the whole,
/// measured on the price-selected option set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResourceDiagnostic {
    /// Usage of the selected set on this resource over the whole instance.
    pub selected_usage: f64,
    /// Usage of the selected set inside the sample prefix.
    pub sample_usage: f64,
    /// `|sample_usage - epsilon * selected_usage|`.
    pub deviation: f64,
    pub threshold: f64,
    pub bad: bool,
}

/// Concentration diagnostics for a sample prefix. The selected set contains,
/// for every agent of the instance, its highest-gain option when that gain is
/// nonnegative, under the same perturbed tie-breaking the allocator uses.
///
/// A deviation is flagged as bad when it reaches
/// `L a + sqrt(S) * 2 sqrt(eps L a)` where `L = (m+1)(ln n + ln q)`, `a` is
/// the largest single contribution (usage amount or weight), and `S` the
/// selected total on that coordinate. Under i.i.d.-like arrivals such flags
/// have probability below `1/(n q)^(m+1)` per coordinate, so any flag is a
/// strong sign the sample is unrepresentative.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleDiagnostics {
    pub epsilon: f64,
    pub sample_size: usize,
    /// Total perturbed value of the selected set.
    pub total_value: f64,
    /// Value of the selected set inside the sample.
    pub sample_value: f64,
    /// Value of the selected set after the boundary; the skip-policy
    /// allocation value equals this exactly.
    pub stream_value: f64,
    /// `|sample_value - epsilon * total_value|`.
    pub value_deviation: f64,
    pub value_threshold: f64,
    pub value_bad: bool,
    /// Largest single weight, as used in the value threshold.
    pub max_weight: f64,
    /// Largest single usage amount, as used in the resource thresholds.
    pub max_usage: f64,
    pub resources: Vec<ResourceDiagnostic>,
    pub any_bad: bool,
}

/// Runs the concentration diagnostics for the first `floor(epsilon n)` agents
/// of `order` against the given prices. `epsilon` may be 1, in which case the
/// sample is the whole instance and every deviation is zero.
pub fn diagnose_sample(
    inst: &PlpInstance,
    order: &[usize],
    epsilon: f64,
    prices: &DualPrices,
) -> Result<SampleDiagnostics, TrainError> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(TrainError::BadEpsilon(epsilon));
    }
    validate_order(inst.num_agents(), order)?;
    let n = inst.num_agents();
    let m = inst.num_resources();
    let k = ((epsilon * n as f64).floor() as usize).min(n);
    let perturbed = perturb_weights(inst, prices.seed);

    // Selected option per agent under the price rule.
    let mut choice: Vec<Option<usize>> = vec![None; n];
    for (i, agent) in perturbed.agents.iter().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        for (o, opt) in agent.options.iter().enumerate() {
            let g = gain(prices, opt)?;
            if g >= 0.0 && best.map_or(true, |(_, bg)| g > bg) {
                best = Some((o, g));
            }
        }
        choice[i] = best.map(|(o, _)| o);
    }

    // Accumulate sample and stream parts separately, each in arrival order,
    // so the stream part is bit-identical to the allocator's sum.
    let mut sample_value = 0.0;
    let mut stream_value = 0.0;
    let mut sample_usage = vec![0.0; m];
    let mut stream_usage = vec![0.0; m];
    for (pos, &i) in order.iter().enumerate() {
        let Some(o) = choice[i] else { continue };
        let opt = &perturbed.agents[i].options[o];
        if pos < k {
            sample_value += opt.weight;
            for u in &opt.usage {
                sample_usage[u.resource] += u.amount;
            }
        } else {
            stream_value += opt.weight;
            for u in &opt.usage {
                stream_usage[u.resource] += u.amount;
            }
        }
    }

    let q = inst.max_options().max(1) as f64;
    let log_term = (m as f64 + 1.0) * ((n as f64).ln() + q.ln());
    let w_max = perturbed.max_weight();
    let a_max = perturbed.max_usage();

    let total_value = sample_value + stream_value;
    let value_deviation = (sample_value - epsilon * total_value).abs();
    let value_threshold =
        log_term * w_max + total_value.sqrt() * 2.0 * (epsilon * log_term * w_max).sqrt();
    let value_bad = value_deviation >= value_threshold;

    let mut resources = Vec::with_capacity(m);
    let mut any_bad = value_bad;
    for j in 0..m {
        let selected_usage = sample_usage[j] + stream_usage[j];
        let deviation = (sample_usage[j] - epsilon * selected_usage).abs();
        let threshold =
            log_term * a_max + selected_usage.sqrt() * 2.0 * (epsilon * log_term * a_max).sqrt();
        let bad = deviation >= threshold;
        any_bad |= bad;
        resources.push(ResourceDiagnostic {
            selected_usage,
            sample_usage: sample_usage[j],
            deviation,
            threshold,
            bad,
        });
    }

    Ok(SampleDiagnostics {
        epsilon,
        sample_size: k,
        total_value,
        sample_value,
        stream_value,
        value_deviation,
        value_threshold,
        value_bad,
        max_weight: w_max,
        max_usage: a_max,
        resources,
        any_bad,
    })
}

/// A complete trained-price run on a packing instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DualBaseRun {
    pub prices: DualPrices,
    pub allocation: PlpAllocation,
    pub diagnostics: SampleDiagnostics,
    pub shrink: bool,
    pub policy: TrainingPolicy,
}

/// Trains on the sample prefix and allocates the rest, optionally in shrink
/// mode. Usage and violation in the returned allocation are measured against
/// the original (unshrunk) capacities.
pub fn run_dual_base(
    inst: &PlpInstance,
    order: &[usize],
    epsilon: f64,
    seed: u64,
    policy: TrainingPolicy,
    shrink: bool,
) -> Result<DualBaseRun, TrainError> {
    let working = if shrink {
        widen_usage(inst, epsilon)
    } else {
        inst.clone()
    };
    let prices = train(&working, order, epsilon, seed)?;
    let mut allocation = allocate_remaining(&prices, &working, order, policy)?;
    let diagnostics = diagnose_sample(&working, order, epsilon, &prices)?;
    if shrink {
        // Report utilization in original units.
        let f = shrink_factor(epsilon);
        for u in &mut allocation.resource_usage {
            *u /= f;
        }
        allocation.violation_factor /= f;
    }
    Ok(DualBaseRun {
        prices,
        allocation,
        diagnostics,
        shrink,
        policy,
    })
}

/// A trained-price run on a display-ad instance with free disposal enforced,
/// so the emitted assignment is always feasible for the contracts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DaDualBaseRun {
    pub prices: DualPrices,
    pub allocation: online::DaAllocation,
    pub evictions: usize,
    pub unassigned: usize,
}

/// Display-ad wrapper: trains on the converted normalized instance, assigns
/// the sampled prefix per `policy` (averaging rule when `Online`), then
/// assigns each later impression to its best-gain advertiser. Every
/// advertiser keeps only its `demand` heaviest impressions. Values are true
/// edge weights; the perturbation only breaks ties.
pub fn run_dual_base_da(
    da: &DaInstance,
    order: &[usize],
    epsilon: f64,
    seed: u64,
    policy: TrainingPolicy,
    shrink: bool,
) -> Result<DaDualBaseRun, TrainError> {
    let plp = da_to_plp(da).normalize();
    let working = if shrink {
        widen_usage(&plp, epsilon)
    } else {
        plp
    };
    let prices = train(&working, order, epsilon, seed)?;
    let perturbed = perturb_weights(&working, seed);
    let k = prices.sample_size;

    let mut states = AdvertiserStates::new(da);
    let mut unassigned = 0;
    for (pos, &i) in order.iter().enumerate() {
        if pos < k {
            match policy {
                TrainingPolicy::Skip => unassigned += 1,
                TrainingPolicy::Online => {
                    if !states.assign(da, i, OnlineRule::PdAvg) {
                        unassigned += 1;
                    }
                }
            }
            continue;
        }
        // Best perturbed gain over the impression's edges; edge o of
        // impression i is option o of agent i in the converted instance.
        let agent = &perturbed.agents[i];
        let mut best: Option<(usize, f64)> = None;
        for (o, opt) in agent.options.iter().enumerate() {
            let g = gain(&prices, opt)?;
            if g >= 0.0 && best.map_or(true, |(_, bg)| g > bg) {
                best = Some((o, g));
            }
        }
        match best {
            Some((o, _)) => {
                let j = da.impressions[i].edges[o].advertiser;
                states.place(da, i, j);
            }
            None => unassigned += 1,
        }
    }

    let evictions = states.evictions();
    Ok(DaDualBaseRun {
        prices,
        allocation: states.into_allocation(da),
        evictions,
        unassigned,
    })
}
