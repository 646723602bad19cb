//! The ideal fair allocation under a sharing policy, and the distance-from-
//! fair metric.
//!
//! Fairness is defined against a pointer procedure over advertiser
//! preference lists. Every advertiser ranks its reachable impressions by
//! weight (heaviest first) and holds a prefix of that ranking; an impression
//! is shared among all advertisers whose prefix currently reaches it,
//! according to the chosen [`SharingPolicy`]. Unsatisfied advertisers extend
//! their prefixes one impression at a time, round-robin, until every
//! advertiser either has its contracted mass or has extended its prefix to
//! everything it can reach. The procedure stops at the *shortest* such
//! prefixes, which makes the result the most efficient allocation among all
//! fair ones, and it is independent of the round-robin order.
//!
//! The metric [`fairness_metric`] compares an arbitrary allocation `x`
//! against the fair target `x*` by total-value-normalized per-advertiser
//! differences: `f(x) = sum_j |(V(x*)/V(x)) v_j(x) - v_j(x*)|`. Zero means
//! the allocation splits value in exactly the fair proportions; it is
//! invariant under uniform scaling of `x`.

use serde::{Deserialize, Serialize};

use crate::instance::DaInstance;

/// Slack when deciding whether an advertiser's received mass meets its
/// demand, absorbing floating-point share sums.
pub const MASS_TOL: f64 = 1e-9;

/// How an impression inside several prefixes is split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SharingPolicy {
    /// Every claimant gets `1/|J(i)|`.
    Equal,
    /// Claimant `j` gets `w_ij / sum_j' w_ij'`.
    Proportional,
    /// The whole impression goes to the heaviest-weight claimant, ties to
    /// the smaller advertiser index.
    StableMatching,
}

impl SharingPolicy {
    /// Canonical display name, as used in reports.
    pub fn name(&self) -> &'static str {
        match self {
            SharingPolicy::Equal => "EQUAL",
            SharingPolicy::Proportional => "PROPORTIONAL",
            SharingPolicy::StableMatching => "STABLE_MATCHING",
        }
    }
}

/// Shares a single impression among `claimants` (advertiser indices, with
/// `weights[t]` the edge weight of `claimants[t]`). Returns one fraction per
/// claimant, summing to 1 when there is at least one claimant.
///
/// All three policies are monotone: adding a claimant never increases any
/// existing claimant's share, which is what makes the pointer procedure's
/// result order-independent.
pub fn policy_shares(policy: SharingPolicy, claimants: &[usize], weights: &[f64]) -> Vec<f64> {
    assert_eq!(claimants.len(), weights.len());
    let l = claimants.len();
    if l == 0 {
        return Vec::new();
    }
    match policy {
        SharingPolicy::Equal => vec![1.0 / l as f64; l],
        SharingPolicy::Proportional => {
            let total: f64 = weights.iter().sum();
            weights.iter().map(|w| w / total).collect()
        }
        SharingPolicy::StableMatching => {
            let mut best = 0;
            for t in 1..l {
                let better = weights[t] > weights[best]
                    || (weights[t] == weights[best] && claimants[t] < claimants[best]);
                if better {
                    best = t;
                }
            }
            let mut out = vec![0.0; l];
            out[best] = 1.0;
            out
        }
    }
}

/// The fair allocation: fractional shares, the preference prefix each
/// advertiser ended with, and the mass each received.
#[derive(Debug, Clone, PartialEq)]
pub struct FairAllocation {
    /// Per impression: `(advertiser, fraction)` pairs with positive
    /// fraction, ascending by advertiser.
    pub x: Vec<Vec<(usize, f64)>>,
    /// Final preference-prefix length per advertiser.
    pub prefix: Vec<usize>,
    /// Received mass `sum_i x_ij` per advertiser.
    pub mass: Vec<f64>,
}

/// Preference list of each advertiser: reachable impressions by descending
/// weight, ties by impression index.
fn preference_lists(da: &DaInstance) -> Vec<Vec<usize>> {
    let m = da.num_advertisers();
    let mut prefs: Vec<Vec<(f64, usize)>> = vec![Vec::new(); m];
    for (i, imp) in da.impressions.iter().enumerate() {
        for edge in &imp.edges {
            prefs[edge.advertiser].push((edge.weight, i));
        }
    }
    prefs
        .into_iter()
        .map(|mut list| {
            list.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
            list.into_iter().map(|(_, i)| i).collect()
        })
        .collect()
}

/// Computes the fair allocation, processing unsatisfied advertisers
/// round-robin in index order.
pub fn compute_fair(da: &DaInstance, policy: SharingPolicy) -> FairAllocation {
    let order: Vec<usize> = (0..da.num_advertisers()).collect();
    compute_fair_with_order(da, policy, &order)
}

/// Same as [`compute_fair`] with an explicit round-robin order over the
/// advertisers. For the policies in this module the result does not depend
/// on that order; the parameter exists so that the invariance is testable.
///
/// # Panics
///
/// Panics if `rr_order` is not a permutation of the advertiser indices.
pub fn compute_fair_with_order(
    da: &DaInstance,
    policy: SharingPolicy,
    rr_order: &[usize],
) -> FairAllocation {
    let m = da.num_advertisers();
    assert_eq!(rr_order.len(), m, "round-robin order must cover advertisers");
    let mut seen = vec![false; m];
    for &j in rr_order {
        assert!(!seen[j], "round-robin order repeats advertiser {j}");
        seen[j] = true;
    }

    let prefs = preference_lists(da);
    let mut prefix = vec![0usize; m];
    let mut mass = vec![0.0f64; m];
    let mut claimants: Vec<Vec<usize>> = vec![Vec::new(); da.num_impressions()];
    let mut x: Vec<Vec<(usize, f64)>> = vec![Vec::new(); da.num_impressions()];
    let demand: Vec<f64> = da.advertisers.iter().map(|a| a.demand as f64).collect();

    loop {
        let mut advanced = false;
        for &j in rr_order {
            if mass[j] >= demand[j] - MASS_TOL {
                continue;
            }
            if prefix[j] == prefs[j].len() {
                continue;
            }
            let i = prefs[j][prefix[j]];
            prefix[j] += 1;
            claimants[i].push(j);
            reshare(da, policy, i, &claimants[i], &mut x[i], &mut mass);
            advanced = true;
        }
        if !advanced {
            break;
        }
    }

    // Exact masses for the returned record (the loop tracks them
    // incrementally).
    let mut exact = vec![0.0f64; m];
    for entries in &x {
        for &(j, f) in entries {
            exact[j] += f;
        }
    }
    FairAllocation {
        x,
        prefix,
        mass: exact,
    }
}

/// Recomputes impression `i`'s shares for its current claimant set and
/// updates the running masses by the difference.
fn reshare(
    da: &DaInstance,
    policy: SharingPolicy,
    i: usize,
    claimants: &[usize],
    entries: &mut Vec<(usize, f64)>,
    mass: &mut [f64],
) {
    for &(j, f) in entries.iter() {
        mass[j] -= f;
    }
    let mut sorted = claimants.to_vec();
    sorted.sort_unstable();
    let weights: Vec<f64> = sorted
        .iter()
        .map(|&j| da.edge_weight(i, j).expect("claimant must have an edge"))
        .collect();
    let shares = policy_shares(policy, &sorted, &weights);
    entries.clear();
    for (t, &j) in sorted.iter().enumerate() {
        if shares[t] > 0.0 {
            entries.push((j, shares[t]));
            mass[j] += shares[t];
        }
    }
}

/// Value received by advertiser `j`: `sum_i w_ij x_ij`.
pub fn advertiser_value(x: &FairAllocation, da: &DaInstance, j: usize) -> f64 {
    let mut v = 0.0;
    for (i, entries) in x.x.iter().enumerate() {
        for &(adv, f) in entries {
            if adv == j {
                v += da.edge_weight(i, adv).expect("share without edge") * f;
            }
        }
    }
    v
}

/// Value received by every advertiser, in index order.
pub fn advertiser_values(x: &FairAllocation, da: &DaInstance) -> Vec<f64> {
    let mut v = vec![0.0; da.num_advertisers()];
    for (i, entries) in x.x.iter().enumerate() {
        for &(adv, f) in entries {
            v[adv] += da.edge_weight(i, adv).expect("share without edge") * f;
        }
    }
    v
}

/// Total value `V(x)` of the allocation.
pub fn total_value(x: &FairAllocation, da: &DaInstance) -> f64 {
    advertiser_values(x, da).iter().sum()
}

/// Distance-from-fair over per-advertiser value vectors:
/// `sum_j |(V* / V) v_j - v*_j|`, with the convention that a zero-value
/// allocation scores `sum_j v*_j`.
pub fn fairness_metric_values(v: &[f64], v_star: &[f64]) -> f64 {
    assert_eq!(v.len(), v_star.len());
    let total: f64 = v.iter().sum();
    let total_star: f64 = v_star.iter().sum();
    if total <= 0.0 {
        return total_star;
    }
    let scale = total_star / total;
    v.iter()
        .zip(v_star)
        .map(|(a, b)| (scale * a - b).abs())
        .sum()
}

/// Distance of allocation `x` from the fair target `x_star`; see
/// [`fairness_metric_values`].
pub fn fairness_metric(x: &FairAllocation, x_star: &FairAllocation, da: &DaInstance) -> f64 {
    fairness_metric_values(&advertiser_values(x, da), &advertiser_values(x_star, da))
}

/// Checks that `fair` is a fair allocation for `da` under `policy`:
/// impressions are not oversubscribed, every positive share lies inside the
/// owner's preference prefix and follows the policy's split, recorded masses
/// are consistent, and every advertiser is either satisfied or has extended
/// its prefix to its whole reachable set.
pub fn verify_fair(
    da: &DaInstance,
    fair: &FairAllocation,
    policy: SharingPolicy,
) -> Result<(), String> {
    let m = da.num_advertisers();
    let n = da.num_impressions();
    if fair.x.len() != n || fair.prefix.len() != m || fair.mass.len() != m {
        return Err("shape mismatch with the instance".into());
    }
    let prefs = preference_lists(da);
    // Position of each impression in each advertiser's preference list.
    let mut pos: Vec<Vec<Option<usize>>> = vec![vec![None; n]; m];
    for (j, list) in prefs.iter().enumerate() {
        for (t, &i) in list.iter().enumerate() {
            pos[j][i] = Some(t);
        }
    }

    let mut mass = vec![0.0f64; m];
    for (i, entries) in fair.x.iter().enumerate() {
        let mut total = 0.0;
        let mut prev: Option<usize> = None;
        for &(j, f) in entries {
            if j >= m {
                return Err(format!("impression {i}: advertiser {j} out of range"));
            }
            if prev.is_some_and(|p| p >= j) {
                return Err(format!("impression {i}: entries not strictly ascending"));
            }
            prev = Some(j);
            if !(f > 0.0 && f <= 1.0 + MASS_TOL) {
                return Err(format!("impression {i}: fraction {f} out of range"));
            }
            match pos[j][i] {
                Some(t) if t < fair.prefix[j] => {}
                _ => {
                    return Err(format!(
                        "impression {i}: advertiser {j} holds a share outside its prefix"
                    ))
                }
            }
            total += f;
            mass[j] += f;
        }
        if total > 1.0 + MASS_TOL {
            return Err(format!("impression {i}: shares sum to {total} > 1"));
        }
        // Shares must match the policy on the prefix-derived claimant set.
        let claimants: Vec<usize> = (0..m)
            .filter(|&j| pos[j][i].is_some_and(|t| t < fair.prefix[j]))
            .collect();
        let weights: Vec<f64> = claimants
            .iter()
            .map(|&j| da.edge_weight(i, j).unwrap())
            .collect();
        let expected = policy_shares(policy, &claimants, &weights);
        for (t, &j) in claimants.iter().enumerate() {
            let actual = entries
                .iter()
                .find(|&&(a, _)| a == j)
                .map_or(0.0, |&(_, f)| f);
            if (actual - expected[t]).abs() > 1e-9 {
                return Err(format!(
                    "impression {i}: advertiser {j} share {actual} != policy share {}",
                    expected[t]
                ));
            }
        }
    }

    for j in 0..m {
        if (mass[j] - fair.mass[j]).abs() > 1e-6 {
            return Err(format!(
                "advertiser {j}: recorded mass {} != recomputed {}",
                fair.mass[j], mass[j]
            ));
        }
        if fair.prefix[j] > prefs[j].len() {
            return Err(format!("advertiser {j}: prefix exceeds reachable set"));
        }
        let satisfied = mass[j] >= da.advertisers[j].demand as f64 - 1e-6;
        if !satisfied && fair.prefix[j] != prefs[j].len() {
            return Err(format!(
                "advertiser {j}: unsatisfied (mass {}) but prefix {} < {}",
                mass[j],
                fair.prefix[j],
                prefs[j].len()
            ));
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct ShareEntry<'a> {
    impression: &'a str,
    advertiser: &'a str,
    fraction: f64,
}

#[derive(Serialize)]
struct AdvertiserSummary<'a> {
    id: &'a str,
    prefix: usize,
    mass: f64,
    value: f64,
}

#[derive(Serialize)]
struct FairFile<'a> {
    shares: Vec<ShareEntry<'a>>,
    advertisers: Vec<AdvertiserSummary<'a>>,
}

impl FairAllocation {
    /// Pretty JSON with the positive shares, prefixes, masses, and values.
    pub fn to_json(&self, da: &DaInstance) -> String {
        let values = advertiser_values(self, da);
        let shares = self
            .x
            .iter()
            .enumerate()
            .flat_map(|(i, entries)| {
                entries.iter().map(move |&(j, f)| ShareEntry {
                    impression: &da.impressions[i].id,
                    advertiser: &da.advertisers[j].id,
                    fraction: f,
                })
            })
            .collect();
        let advertisers = da
            .advertisers
            .iter()
            .enumerate()
            .map(|(j, a)| AdvertiserSummary {
                id: &a.id,
                prefix: self.prefix[j],
                mass: self.mass[j],
                value: values[j],
            })
            .collect();
        serde_json::to_string_pretty(&FairFile {
            shares,
            advertisers,
        })
        .expect("fair allocation serializes")
    }
}
