//! Price-based online heuristics for display-ad allocation with free
//! disposal.
//!
//! Every rule keeps, per advertiser, the set of impressions currently held
//! and quotes a price from it. An arriving impression is assigned to the
//! advertiser maximizing `weight - price` when that margin is nonnegative
//! (ties go to the smaller advertiser index), and an advertiser holding more
//! than its contracted demand drops its least valuable impression. The rules
//! differ only in the quoted price:
//!
//! * `GREEDY`: the lightest held impression once the contract is full,
//!   otherwise zero. Accepting anything that beats the marginal impression
//!   is the classic 1/2-competitive rule.
//! * `PD_AVG`: held value divided by demand, full or not. The price rises
//!   smoothly with fill, so early low-value impressions are declined even
//!   while slots are free.
//! * `PD_EXP`: an exponentially tilted average that interpolates between
//!   the two: with held weights `w_1 >= w_2 >= ...` zero-padded to the
//!   demand `n`, the price is
//!   `sum_k w_k (1 + 1/n)^(k-1) / (n ((1 + 1/n)^n - 1))`.
//!   This is the classic primal-dual update achieving `1 - 1/e` against
//!   adversarial streams as `n` grows.
//!
//! [`run_hybrid`] combines a trained price (see [`crate::training`]) with the
//! adaptive `PD_AVG` price, decaying trust in the trained component over the
//! stream.

use serde::{Deserialize, Serialize};

use crate::instance::{da_to_plp, DaInstance};
use crate::training::{perturb_weights, train, DaDualBaseRun, TrainError};

/// Price rule used by [`run_online`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OnlineRule {
    Greedy,
    PdAvg,
    PdExp,
}

impl OnlineRule {
    /// Canonical display name, as used in benchmark reports.
    pub fn name(&self) -> &'static str {
        match self {
            OnlineRule::Greedy => "GREEDY",
            OnlineRule::PdAvg => "PD_AVG",
            OnlineRule::PdExp => "PD_EXP",
        }
    }
}

/// Final assignment of impressions to advertisers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DaAllocation {
    /// Advertiser holding each impression at the end, `None` if unassigned
    /// or evicted.
    pub assigned: Vec<Option<usize>>,
    /// Total held weight per advertiser.
    pub advertiser_value: Vec<f64>,
    /// Held impression count per advertiser (never above its demand).
    pub advertiser_count: Vec<usize>,
    pub total_value: f64,
}

/// Running held-set state per advertiser, shared by all online rules.
#[derive(Debug, Clone)]
pub struct AdvertiserStates {
    /// Held (weight, impression) pairs, ascending, so the minimum is first.
    kept: Vec<Vec<(f64, usize)>>,
    kept_sum: Vec<f64>,
    assigned: Vec<Option<usize>>,
    evictions: usize,
}

impl AdvertiserStates {
    pub fn new(da: &DaInstance) -> Self {
        AdvertiserStates {
            kept: vec![Vec::new(); da.advertisers.len()],
            kept_sum: vec![0.0; da.advertisers.len()],
            assigned: vec![None; da.impressions.len()],
            evictions: 0,
        }
    }

    /// The price advertiser `j` currently quotes under `rule`.
    pub fn price(&self, da: &DaInstance, j: usize, rule: OnlineRule) -> f64 {
        let n = da.advertisers[j].demand as usize;
        let kept = &self.kept[j];
        match rule {
            OnlineRule::Greedy => {
                if kept.len() == n {
                    kept[0].0
                } else {
                    0.0
                }
            }
            OnlineRule::PdAvg => self.kept_sum[j] / n as f64,
            OnlineRule::PdExp => {
                let r = 1.0 + 1.0 / n as f64;
                let mut sum = 0.0;
                let mut pow = 1.0;
                // Heaviest first: walk the ascending list backwards. The
                // zero padding contributes nothing.
                for &(w, _) in kept.iter().rev() {
                    sum += w * pow;
                    pow *= r;
                }
                sum / (n as f64 * (r.powi(n as i32) - 1.0))
            }
        }
    }

    /// Assigns impression `i` to its best-margin advertiser under `rule`.
    /// Returns false when every margin is negative and the impression is
    /// declined. An accepted impression may still be evicted later.
    pub fn assign(&mut self, da: &DaInstance, i: usize, rule: OnlineRule) -> bool {
        let mut best: Option<(f64, usize)> = None;
        for edge in &da.impressions[i].edges {
            let margin = edge.weight - self.price(da, edge.advertiser, rule);
            let better = match best {
                None => true,
                Some((bm, bj)) => margin > bm || (margin == bm && edge.advertiser < bj),
            };
            if better {
                best = Some((margin, edge.advertiser));
            }
        }
        match best {
            Some((margin, j)) if margin >= 0.0 => {
                self.place(da, i, j);
                true
            }
            _ => false,
        }
    }

    /// Places impression `i` with advertiser `j` unconditionally, then
    /// enforces the demand by dropping the least valuable held impression
    /// (ties drop the older index).
    ///
    /// # Panics
    ///
    /// Panics if `i` has no edge to `j`.
    pub fn place(&mut self, da: &DaInstance, i: usize, j: usize) {
        let w = da
            .edge_weight(i, j)
            .expect("impression has no edge to that advertiser");
        let kept = &mut self.kept[j];
        let pos = kept.partition_point(|&(kw, ki)| kw < w || (kw == w && ki < i));
        kept.insert(pos, (w, i));
        self.kept_sum[j] += w;
        self.assigned[i] = Some(j);
        if kept.len() > da.advertisers[j].demand as usize {
            let (ew, ei) = kept.remove(0);
            self.kept_sum[j] -= ew;
            self.assigned[ei] = None;
            self.evictions += 1;
        }
    }

    pub fn evictions(&self) -> usize {
        self.evictions
    }

    /// Finalizes into an allocation; per-advertiser values are re-summed
    /// from the held sets so they are exact.
    pub fn into_allocation(self, da: &DaInstance) -> DaAllocation {
        let advertiser_value: Vec<f64> = self
            .kept
            .iter()
            .map(|kept| kept.iter().map(|&(w, _)| w).sum())
            .collect();
        let advertiser_count: Vec<usize> = self.kept.iter().map(Vec::len).collect();
        let total_value = advertiser_value.iter().sum();
        debug_assert_eq!(advertiser_value.len(), da.advertisers.len());
        DaAllocation {
            assigned: self.assigned,
            advertiser_value,
            advertiser_count,
            total_value,
        }
    }
}

/// Result of streaming an instance through one online rule.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OnlineRun {
    pub allocation: DaAllocation,
    pub evictions: usize,
    /// Impressions declined at decision time (negative best margin).
    pub unassigned: usize,
}

/// Streams the impressions in `order` through `rule`.
///
/// # Panics
///
/// Panics if `order` is not a permutation of the impression indices.
pub fn run_online(da: &DaInstance, order: &[usize], rule: OnlineRule) -> OnlineRun {
    assert_eq!(
        order.len(),
        da.impressions.len(),
        "order must cover every impression exactly once"
    );
    let mut seen = vec![false; order.len()];
    for &i in order {
        assert!(!seen[i], "order repeats impression {i}");
        seen[i] = true;
    }
    let mut states = AdvertiserStates::new(da);
    let mut unassigned = 0;
    for &i in order {
        if !states.assign(da, i, rule) {
            unassigned += 1;
        }
    }
    let evictions = states.evictions();
    OnlineRun {
        allocation: states.into_allocation(da),
        evictions,
        unassigned,
    }
}

/// How fast the hybrid rule's trust in the trained price decays after the
/// sample boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum HybridSchedule {
    /// Weight `1 - (t - k) / max(1, n - 1 - k)`: linear from 1 at the
    /// boundary to 0 at the last arrival.
    Linear,
    /// Weight `2^(-(t - k) / h)` with half-life `h = frac * (n - k)`.
    ExpHalfLife(f64),
}

impl HybridSchedule {
    fn weight(&self, t: usize, k: usize, n: usize) -> f64 {
        let since = (t - k) as f64;
        match *self {
            HybridSchedule::Linear => {
                let span = (n.saturating_sub(1).saturating_sub(k)).max(1) as f64;
                (1.0 - since / span).max(0.0)
            }
            HybridSchedule::ExpHalfLife(frac) => {
                let h = frac * (n - k) as f64;
                if h > 0.0 {
                    (-since / h).exp2()
                } else {
                    0.0
                }
            }
        }
    }
}

/// Trains prices on the sample prefix, then streams the rest with a blended
/// price: `alpha * trained + (1 - alpha) * PD_AVG`, where `alpha` follows
/// `schedule`. The prefix itself is assigned by `PD_AVG`. Free disposal is
/// enforced throughout, so the result is always contract-feasible.
pub fn run_hybrid(
    da: &DaInstance,
    order: &[usize],
    epsilon: f64,
    seed: u64,
    schedule: HybridSchedule,
) -> Result<DaDualBaseRun, TrainError> {
    let working = da_to_plp(da).normalize();
    let prices = train(&working, order, epsilon, seed)?;
    let perturbed = perturb_weights(&working, seed);
    let k = prices.sample_size;
    let n = order.len();

    let mut states = AdvertiserStates::new(da);
    let mut unassigned = 0;
    for (pos, &i) in order.iter().enumerate() {
        if pos < k {
            if !states.assign(da, i, OnlineRule::PdAvg) {
                unassigned += 1;
            }
            continue;
        }
        let alpha = schedule.weight(pos, k, n);
        let agent = &perturbed.agents[i];
        let mut best: Option<(f64, usize)> = None;
        for (o, edge) in da.impressions[i].edges.iter().enumerate() {
            // Trained price of this edge in the working instance's units.
            let opt = &agent.options[o];
            let trained: f64 = opt
                .usage
                .iter()
                .map(|u| prices.beta[u.resource] * u.amount)
                .sum();
            let adaptive = states.price(da, edge.advertiser, OnlineRule::PdAvg);
            let margin = opt.weight - (alpha * trained + (1.0 - alpha) * adaptive);
            let better = match best {
                None => true,
                Some((bm, bj)) => margin > bm || (margin == bm && edge.advertiser < bj),
            };
            if better {
                best = Some((margin, edge.advertiser));
            }
        }
        match best {
            Some((margin, j)) if margin >= 0.0 => states.place(da, i, j),
            _ => unassigned += 1,
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
