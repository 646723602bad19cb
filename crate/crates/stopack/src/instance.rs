//! Instance model: general packing instances, display-ad instances, the
//! conversions between them, seeded generators, and JSON (de)serialization.
//!
//! A packing instance has resources with capacities and agents with options.
//! Selecting fraction `x` of an option consumes `x` times its usage from each
//! resource and earns `x` times its weight. Each agent contributes at most
//! one unit of selected options in total.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors from instance validation, generation, or file handling.
#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("resource {0:?}: capacity must be positive and finite")]
    BadCapacity(String),
    #[error("agent {agent:?} option {option:?}: weight must be nonnegative and finite")]
    BadWeight { agent: String, option: String },
    #[error("agent {agent:?} option {option:?}: usage amounts must be nonnegative and finite")]
    BadUsage { agent: String, option: String },
    #[error("agent {agent:?} option {option:?}: unknown resource {resource:?}")]
    UnknownResource {
        agent: String,
        option: String,
        resource: String,
    },
    #[error("agent {agent:?} option {option:?}: resource index {index} out of range")]
    ResourceIndexOutOfRange {
        agent: String,
        option: String,
        index: usize,
    },
    #[error("agent {agent:?} option {option:?}: duplicate usage entry for resource index {index}")]
    DuplicateUsage {
        agent: String,
        option: String,
        index: usize,
    },
    #[error("duplicate {kind} id {id:?}")]
    DuplicateId { kind: &'static str, id: String },
    #[error("instance has agents but no agent offers any option")]
    NoOptions,
    #[error("advertiser {0:?}: demand must be at least 1")]
    BadDemand(String),
    #[error("impression {impression:?}: edge weight to {advertiser:?} must be positive and finite")]
    BadEdgeWeight {
        impression: String,
        advertiser: String,
    },
    #[error("impression {impression:?}: advertiser index {index} out of range")]
    AdvertiserIndexOutOfRange { impression: String, index: usize },
    #[error("impression {impression:?}: duplicate edge to advertiser index {index}")]
    DuplicateEdge { impression: String, index: usize },
    #[error("generator: {0}")]
    BadGeneratorConfig(String),
    #[error("hypothesis check: {0}")]
    BadCheckInput(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
}

/// A consumable resource with a finite positive capacity.
#[derive(Debug, Clone, PartialEq)]
pub struct Resource {
    pub id: String,
    pub capacity: f64,
}

impl Resource {
    pub fn new(id: impl Into<String>, capacity: f64) -> Self {
        Resource {
            id: id.into(),
            capacity,
        }
    }
}

/// One usage entry of an option: `amount` units of the resource at `resource`
/// (an index into the instance resource list).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Usage {
    pub resource: usize,
    pub amount: f64,
}

impl Usage {
    pub fn new(resource: usize, amount: f64) -> Self {
        Usage { resource, amount }
    }
}

/// One option of an agent: a weight earned if selected and the resource usage
/// incurred. Usage entries are kept sorted by resource index.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentOption {
    pub id: String,
    pub weight: f64,
    pub usage: Vec<Usage>,
}

impl AgentOption {
    pub fn new(id: impl Into<String>, weight: f64, usage: Vec<Usage>) -> Self {
        AgentOption {
            id: id.into(),
            weight,
            usage,
        }
    }
}

/// An agent with its option set. Agents may have no options at all; such
/// agents can never be assigned.
#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub id: String,
    pub options: Vec<AgentOption>,
}

impl Agent {
    pub fn new(id: impl Into<String>, options: Vec<AgentOption>) -> Self {
        Agent {
            id: id.into(),
            options,
        }
    }
}

/// A general packing instance.
#[derive(Debug, Clone, PartialEq)]
pub struct PlpInstance {
    pub resources: Vec<Resource>,
    pub agents: Vec<Agent>,
}

impl PlpInstance {
    /// Builds and validates an instance. Usage entries are sorted by resource
    /// index; duplicate entries for the same resource are rejected.
    pub fn from_parts(
        resources: Vec<Resource>,
        agents: Vec<Agent>,
    ) -> Result<Self, InstanceError> {
        let mut inst = PlpInstance { resources, agents };
        for agent in &mut inst.agents {
            for opt in &mut agent.options {
                opt.usage.sort_by_key(|u| u.resource);
            }
        }
        inst.validate()?;
        Ok(inst)
    }

    fn validate(&self) -> Result<(), InstanceError> {
        let mut seen = HashSet::new();
        for r in &self.resources {
            if !(r.capacity.is_finite() && r.capacity > 0.0) {
                return Err(InstanceError::BadCapacity(r.id.clone()));
            }
            if !seen.insert(&r.id) {
                return Err(InstanceError::DuplicateId {
                    kind: "resource",
                    id: r.id.clone(),
                });
            }
        }
        let mut seen = HashSet::new();
        for agent in &self.agents {
            if !seen.insert(&agent.id) {
                return Err(InstanceError::DuplicateId {
                    kind: "agent",
                    id: agent.id.clone(),
                });
            }
            let mut opt_ids = HashSet::new();
            for opt in &agent.options {
                if !opt_ids.insert(&opt.id) {
                    return Err(InstanceError::DuplicateId {
                        kind: "option",
                        id: format!("{}/{}", agent.id, opt.id),
                    });
                }
                if !(opt.weight.is_finite() && opt.weight >= 0.0) {
                    return Err(InstanceError::BadWeight {
                        agent: agent.id.clone(),
                        option: opt.id.clone(),
                    });
                }
                for (k, u) in opt.usage.iter().enumerate() {
                    if u.resource >= self.resources.len() {
                        return Err(InstanceError::ResourceIndexOutOfRange {
                            agent: agent.id.clone(),
                            option: opt.id.clone(),
                            index: u.resource,
                        });
                    }
                    if !(u.amount.is_finite() && u.amount >= 0.0) {
                        return Err(InstanceError::BadUsage {
                            agent: agent.id.clone(),
                            option: opt.id.clone(),
                        });
                    }
                    if k > 0 && opt.usage[k - 1].resource == u.resource {
                        return Err(InstanceError::DuplicateUsage {
                            agent: agent.id.clone(),
                            option: opt.id.clone(),
                            index: u.resource,
                        });
                    }
                }
            }
        }
        if !self.agents.is_empty() && self.max_options() == 0 {
            return Err(InstanceError::NoOptions);
        }
        Ok(())
    }

    /// Number of agents.
    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }

    /// Number of resources.
    pub fn num_resources(&self) -> usize {
        self.resources.len()
    }

    /// Largest option count over agents (0 for an empty instance).
    pub fn max_options(&self) -> usize {
        self.agents.iter().map(|a| a.options.len()).max().unwrap_or(0)
    }

    /// Largest option weight (0 if there are no options).
    pub fn max_weight(&self) -> f64 {
        self.agents
            .iter()
            .flat_map(|a| a.options.iter())
            .map(|o| o.weight)
            .fold(0.0, f64::max)
    }

    /// Largest usage amount over all options (0 if none).
    pub fn max_usage(&self) -> f64 {
        self.agents
            .iter()
            .flat_map(|a| a.options.iter())
            .flat_map(|o| o.usage.iter())
            .map(|u| u.amount)
            .fold(0.0, f64::max)
    }

    /// True if every capacity equals 1.
    pub fn is_normalized(&self) -> bool {
        self.resources.iter().all(|r| r.capacity == 1.0)
    }

    /// Returns a copy with every capacity rescaled to 1 and usage amounts
    /// divided by the old capacities. Idempotent, and the optimal objective
    /// is unchanged because the feasible region is the same set of `x`.
    pub fn normalize(&self) -> PlpInstance {
        let caps: Vec<f64> = self.resources.iter().map(|r| r.capacity).collect();
        let resources = self
            .resources
            .iter()
            .map(|r| Resource::new(r.id.clone(), 1.0))
            .collect();
        let agents = self
            .agents
            .iter()
            .map(|a| {
                Agent::new(
                    a.id.clone(),
                    a.options
                        .iter()
                        .map(|o| {
                            AgentOption::new(
                                o.id.clone(),
                                o.weight,
                                o.usage
                                    .iter()
                                    .map(|u| Usage::new(u.resource, u.amount / caps[u.resource]))
                                    .collect(),
                            )
                        })
                        .collect(),
                )
            })
            .collect();
        PlpInstance { resources, agents }
    }

    /// Returns a copy with the selected agents only (in the given order) and
    /// the same resource list. Indices must be in range and distinct.
    pub fn restrict_agents(&self, keep: &[usize]) -> PlpInstance {
        PlpInstance {
            resources: self.resources.clone(),
            agents: keep.iter().map(|&i| self.agents[i].clone()).collect(),
        }
    }

    /// Returns a copy with all capacities multiplied by `factor`.
    pub fn scale_capacities(&self, factor: f64) -> PlpInstance {
        let mut out = self.clone();
        for r in &mut out.resources {
            r.capacity *= factor;
        }
        out
    }

    /// Serializes to pretty JSON.
    pub fn to_json(&self) -> String {
        let file = PlpFile::from_instance(self);
        serde_json::to_string_pretty(&file).expect("instance serialization cannot fail")
    }

    /// Parses and validates an instance from JSON text. Unknown fields and
    /// unknown resource ids are rejected.
    pub fn from_json(text: &str) -> Result<Self, InstanceError> {
        let file: PlpFile = serde_json::from_str(text).map_err(|e| InstanceError::Parse {
            path: "<string>".to_string(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        file.into_instance()
    }

    /// Writes the instance to `path` as JSON.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), InstanceError> {
        write_text(path.as_ref(), &self.to_json())
    }

    /// Reads and validates an instance from a JSON file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, InstanceError> {
        let path = path.as_ref();
        let text = read_text(path)?;
        let file: PlpFile = serde_json::from_str(&text).map_err(|e| InstanceError::Parse {
            path: path.display().to_string(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        file.into_instance()
    }
}

/// An advertiser contract: deliver up to `demand` impressions.
#[derive(Debug, Clone, PartialEq)]
pub struct Advertiser {
    pub id: String,
    pub demand: u64,
}

impl Advertiser {
    pub fn new(id: impl Into<String>, demand: u64) -> Self {
        Advertiser {
            id: id.into(),
            demand,
        }
    }
}

/// An edge from an impression to an advertiser with a positive weight.
/// `advertiser` indexes the instance advertiser list.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub advertiser: usize,
    pub weight: f64,
}

impl Edge {
    pub fn new(advertiser: usize, weight: f64) -> Self {
        Edge { advertiser, weight }
    }
}

/// An impression with its positive-weight edges. An impression with no edges
/// can never be assigned.
#[derive(Debug, Clone, PartialEq)]
pub struct Impression {
    pub id: String,
    pub edges: Vec<Edge>,
}

impl Impression {
    pub fn new(id: impl Into<String>, edges: Vec<Edge>) -> Self {
        Impression {
            id: id.into(),
            edges,
        }
    }
}

/// A display-ad instance: advertisers with integral demands and impressions
/// with weighted edges. Every assignment consumes exactly one unit of the
/// target advertiser's demand.
#[derive(Debug, Clone, PartialEq)]
pub struct DaInstance {
    pub advertisers: Vec<Advertiser>,
    pub impressions: Vec<Impression>,
}

impl DaInstance {
    pub fn from_parts(
        advertisers: Vec<Advertiser>,
        impressions: Vec<Impression>,
    ) -> Result<Self, InstanceError> {
        let inst = DaInstance {
            advertisers,
            impressions,
        };
        inst.validate()?;
        Ok(inst)
    }

    fn validate(&self) -> Result<(), InstanceError> {
        let mut seen = HashSet::new();
        for a in &self.advertisers {
            if a.demand == 0 {
                return Err(InstanceError::BadDemand(a.id.clone()));
            }
            if !seen.insert(&a.id) {
                return Err(InstanceError::DuplicateId {
                    kind: "advertiser",
                    id: a.id.clone(),
                });
            }
        }
        let mut seen = HashSet::new();
        for imp in &self.impressions {
            if !seen.insert(&imp.id) {
                return Err(InstanceError::DuplicateId {
                    kind: "impression",
                    id: imp.id.clone(),
                });
            }
            let mut targets = HashSet::new();
            for e in &imp.edges {
                if e.advertiser >= self.advertisers.len() {
                    return Err(InstanceError::AdvertiserIndexOutOfRange {
                        impression: imp.id.clone(),
                        index: e.advertiser,
                    });
                }
                if !(e.weight.is_finite() && e.weight > 0.0) {
                    return Err(InstanceError::BadEdgeWeight {
                        impression: imp.id.clone(),
                        advertiser: self.advertisers[e.advertiser].id.clone(),
                    });
                }
                if !targets.insert(e.advertiser) {
                    return Err(InstanceError::DuplicateEdge {
                        impression: imp.id.clone(),
                        index: e.advertiser,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn num_advertisers(&self) -> usize {
        self.advertisers.len()
    }

    pub fn num_impressions(&self) -> usize {
        self.impressions.len()
    }

    /// Weight of the edge from impression `i` to advertiser `j`, if present.
    pub fn edge_weight(&self, i: usize, j: usize) -> Option<f64> {
        self.impressions[i]
            .edges
            .iter()
            .find(|e| e.advertiser == j)
            .map(|e| e.weight)
    }

    pub fn to_json(&self) -> String {
        let file = DaFile::from_instance(self);
        serde_json::to_string_pretty(&file).expect("instance serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, InstanceError> {
        let file: DaFile = serde_json::from_str(text).map_err(|e| InstanceError::Parse {
            path: "<string>".to_string(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        file.into_instance()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), InstanceError> {
        write_text(path.as_ref(), &self.to_json())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, InstanceError> {
        let path = path.as_ref();
        let text = read_text(path)?;
        let file: DaFile = serde_json::from_str(&text).map_err(|e| InstanceError::Parse {
            path: path.display().to_string(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        file.into_instance()
    }
}

/// Converts a display-ad instance to packing form: one resource per
/// advertiser with capacity `demand`, one agent per impression with one
/// option per edge, each option using exactly one unit of its advertiser.
///
/// Impression order, edge order, and ids are preserved, so agent `i` is
/// impression `i` and option `o` of agent `i` is edge `o` of impression `i`.
pub fn da_to_plp(da: &DaInstance) -> PlpInstance {
    let resources = da
        .advertisers
        .iter()
        .map(|a| Resource::new(a.id.clone(), a.demand as f64))
        .collect();
    let agents = da
        .impressions
        .iter()
        .map(|imp| {
            Agent::new(
                imp.id.clone(),
                imp.edges
                    .iter()
                    .map(|e| {
                        AgentOption::new(
                            da.advertisers[e.advertiser].id.clone(),
                            e.weight,
                            vec![Usage::new(e.advertiser, 1.0)],
                        )
                    })
                    .collect(),
            )
        })
        .collect();
    PlpInstance { resources, agents }
}

/// Configuration for the synthetic display-ad generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub advertisers: usize,
    pub impressions: usize,
    /// Inclusive range of advertiser demands.
    pub demand_min: u64,
    pub demand_max: u64,
    /// Probability that a given (impression, advertiser) pair is eligible.
    pub density: f64,
    /// Parameters of the log-normal edge-weight distribution.
    pub weight_mu: f64,
    pub weight_sigma: f64,
    pub seed: u64,
}

/// Generates a synthetic display-ad instance. Demands are uniform in the
/// configured range, eligibility is Bernoulli per pair, and edge weights are
/// log-normal. Impressions that would end up with no edges are redrawn, so
/// every impression has at least one edge. Deterministic for a fixed seed.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<DaInstance, InstanceError> {
    if cfg.advertisers == 0 || cfg.impressions == 0 {
        return Err(InstanceError::BadGeneratorConfig(
            "advertisers and impressions must be positive".into(),
        ));
    }
    if cfg.demand_min == 0 || cfg.demand_min > cfg.demand_max {
        return Err(InstanceError::BadGeneratorConfig(
            "demand range must satisfy 1 <= demand_min <= demand_max".into(),
        ));
    }
    if !(cfg.density > 0.0 && cfg.density <= 1.0) {
        return Err(InstanceError::BadGeneratorConfig(
            "density must lie in (0, 1]".into(),
        ));
    }
    if !(cfg.weight_sigma >= 0.0 && cfg.weight_sigma.is_finite() && cfg.weight_mu.is_finite()) {
        return Err(InstanceError::BadGeneratorConfig(
            "weight parameters must be finite with sigma >= 0".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let lognormal = LogNormal::new(cfg.weight_mu, cfg.weight_sigma)
        .map_err(|e| InstanceError::BadGeneratorConfig(e.to_string()))?;
    let width = digits(cfg.advertisers);
    let advertisers = (0..cfg.advertisers)
        .map(|j| {
            Advertiser::new(
                format!("a{j:0width$}"),
                rng.gen_range(cfg.demand_min..=cfg.demand_max),
            )
        })
        .collect();
    let iw = digits(cfg.impressions);
    let mut impressions = Vec::with_capacity(cfg.impressions);
    for i in 0..cfg.impressions {
        let edges = loop {
            let mut edges = Vec::new();
            for j in 0..cfg.advertisers {
                if rng.gen_bool(cfg.density) {
                    edges.push(Edge::new(j, lognormal.sample(&mut rng)));
                }
            }
            if !edges.is_empty() {
                break edges;
            }
        };
        impressions.push(Impression::new(format!("i{i:0iw$}"), edges));
    }
    DaInstance::from_parts(advertisers, impressions)
}

/// Configuration for the single-resource hardness generator.
///
/// The instance has `tiers` agent types. Type `i` has value `T^(2i)` and
/// arrival probability proportional to `T^(-2i)`, and the single resource has
/// capacity `ceil(3 T ln T)`. Draw counts spanning `T^(2j)` scales make the
/// hindsight optimum concentrate on a different type per scale, which is what
/// defeats any allocator that must commit without knowing the stream length.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LowerBoundParams {
    /// Number of agent types, written `T` below; must be at least 2.
    pub tiers: u32,
    /// Number of i.i.d. agent draws.
    pub draws: usize,
    pub seed: u64,
}

impl LowerBoundParams {
    /// Resource capacity `ceil(3 T ln T)`.
    pub fn capacity(&self) -> f64 {
        let t = self.tiers as f64;
        (3.0 * t * t.ln()).ceil()
    }

    /// Exactly normalized type probabilities, proportional to `T^(-2i)`.
    pub fn type_probabilities(&self) -> Vec<f64> {
        let t = self.tiers as f64;
        let raw: Vec<f64> = (0..self.tiers).map(|i| t.powi(-2 * i as i32)).collect();
        let total: f64 = raw.iter().sum();
        raw.iter().map(|p| p / total).collect()
    }

    /// Value of type `i`, namely `T^(2i)`.
    pub fn type_value(&self, tier: u32) -> f64 {
        (self.tiers as f64).powi(2 * tier as i32)
    }
}

/// Generates the single-resource hardness instance: `draws` i.i.d. agents,
/// each with one option of unit usage whose weight is its type value.
pub fn generate_lower_bound(params: &LowerBoundParams) -> Result<PlpInstance, InstanceError> {
    if params.tiers < 2 {
        return Err(InstanceError::BadGeneratorConfig(
            "tiers must be at least 2".into(),
        ));
    }
    if params.draws == 0 {
        return Err(InstanceError::BadGeneratorConfig(
            "draws must be at least 1".into(),
        ));
    }
    let probs = params.type_probabilities();
    let mut cumulative = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for p in &probs {
        acc += p;
        cumulative.push(acc);
    }
    *cumulative.last_mut().unwrap() = 1.0;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let width = digits(params.draws);
    let agents = (0..params.draws)
        .map(|k| {
            let u: f64 = rng.gen();
            let tier = cumulative.iter().position(|&c| u < c).unwrap_or(probs.len() - 1);
            Agent::new(
                format!("a{k:0width$}"),
                vec![AgentOption::new(
                    "take",
                    params.type_value(tier as u32),
                    vec![Usage::new(0, 1.0)],
                )],
            )
        })
        .collect();
    PlpInstance::from_parts(vec![Resource::new("r0", params.capacity())], agents)
}

/// Report of the small-contribution conditions under which the trained-price
/// allocator carries its near-optimality guarantee.
///
/// Both ratios compare a largest single contribution against a bound that
/// shrinks with the instance size: weights against `eps / ((m+1)(ln n + ln q))`
/// and per-resource usage against `eps^3 / ((m+1)(ln n + ln q))`, where `m`
/// counts resources, `n` agents, and `q` the largest option count.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionsReport {
    pub epsilon: f64,
    pub opt_value: f64,
    pub max_weight: f64,
    /// `max_weight / opt_value`.
    pub weight_ratio: f64,
    pub weight_bound: f64,
    pub weight_ok: bool,
    pub max_usage: f64,
    /// Largest usage amount relative to capacity (capacities are 1 after
    /// normalization).
    pub usage_ratio: f64,
    pub usage_bound: f64,
    pub usage_ok: bool,
    pub ok: bool,
}

/// Checks the small-contribution conditions on a normalized instance.
pub fn check_ptas_conditions(
    inst: &PlpInstance,
    epsilon: f64,
    opt_value: f64,
) -> Result<ConditionsReport, InstanceError> {
    if inst.agents.is_empty() {
        return Err(InstanceError::BadCheckInput("instance has no agents".into()));
    }
    if !inst.is_normalized() {
        return Err(InstanceError::BadCheckInput(
            "instance must be normalized (all capacities 1)".into(),
        ));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(InstanceError::BadCheckInput(
            "epsilon must lie in (0, 1)".into(),
        ));
    }
    if !(opt_value.is_finite() && opt_value > 0.0) {
        return Err(InstanceError::BadCheckInput(
            "opt_value must be positive and finite".into(),
        ));
    }
    let n = inst.num_agents() as f64;
    let q = inst.max_options() as f64;
    let m = inst.num_resources() as f64;
    let log_term = (m + 1.0) * (n.ln() + q.ln());
    let max_weight = inst.max_weight();
    let max_usage = inst.max_usage();
    let weight_bound = epsilon / log_term;
    let usage_bound = epsilon.powi(3) / log_term;
    let weight_ratio = max_weight / opt_value;
    let usage_ratio = max_usage;
    let weight_ok = weight_ratio <= weight_bound;
    let usage_ok = usage_ratio <= usage_bound;
    Ok(ConditionsReport {
        epsilon,
        opt_value,
        max_weight,
        weight_ratio,
        weight_bound,
        weight_ok,
        max_usage,
        usage_ratio,
        usage_bound,
        usage_ok,
        ok: weight_ok && usage_ok,
    })
}

///// Builds the sharing-gap instance: `K*K` advertisers with unit demand, a
/// special impression that advertiser 0 values at `K` and every other
/// advertiser at 1, and one private impression per advertiser with a small
/// value below `1/K^2`. Split-the-special sharing policies earn O(1) here
/// while the optimum earns about `K`.
pub fn generate_sharing_gap(k: usize) -> Result<DaInstance, InstanceError> {
    if k < 2 {
        return Err(InstanceError::BadGeneratorConfig("k must be at least 2".into()));
    }
    let m = k * k;
    let small = 1.0 / (2.0 * (m as f64));
    let width = digits(m);
    let advertisers = (0..m).map(|j| Advertiser::new(format!("a{j:0width$}"), 1)).collect();
    let mut impressions = Vec::with_capacity(m + 1);
    impressions.push(Impression::new(
        "special",
        (0..m)
            .map(|j| Edge::new(j, if j == 0 { k as f64 } else { 1.0 }))
            .collect(),
    ));
    for j in 0..m {
        impressions.push(Impression::new(
            format!("i{j:0width$}"),
            vec![Edge::new(j, small)],
        ));
    }
    DaInstance::from_parts(advertisers, impressions)
}

fn digits(n: usize) -> usize {
    let mut width = 1;
    let mut v = n.saturating_sub(1);
    while v >= 10 {
        width += 1;
        v /= 10;
    }
    width
}

fn read_text(path: &Path) -> Result<String, InstanceError> {
    std::fs::read_to_string(path).map_err(|e| InstanceError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

fn write_text(path: &Path, text: &str) -> Result<(), InstanceError> {
    let mut data = text.to_string();
    if !data.ends_with('\n') {
        data.push('\n');
    }
    std::fs::write(path, data).map_err(|e| InstanceError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

// On-disk schema. Usage maps are keyed by resource id; BTreeMap keeps the
// emitted key order stable.

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlpFile {
    resources: Vec<ResourceFile>,
    agents: Vec<AgentFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ResourceFile {
    id: String,
    capacity: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AgentFile {
    id: String,
    options: Vec<OptionFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OptionFile {
    id: String,
    weight: f64,
    usage: BTreeMap<String, f64>,
}

impl PlpFile {
    fn from_instance(inst: &PlpInstance) -> Self {
        PlpFile {
            resources: inst
                .resources
                .iter()
                .map(|r| ResourceFile {
                    id: r.id.clone(),
                    capacity: r.capacity,
                })
                .collect(),
            agents: inst
                .agents
                .iter()
                .map(|a| AgentFile {
                    id: a.id.clone(),
                    options: a
                        .options
                        .iter()
                        .map(|o| OptionFile {
                            id: o.id.clone(),
                            weight: o.weight,
                            usage: o
                                .usage
                                .iter()
                                .map(|u| (inst.resources[u.resource].id.clone(), u.amount))
                                .collect(),
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    fn into_instance(self) -> Result<PlpInstance, InstanceError> {
        let index: HashMap<&str, usize> = self
            .resources
            .iter()
            .enumerate()
            .map(|(i, r)| (r.id.as_str(), i))
            .collect();
        let resources = self
            .resources
            .iter()
            .map(|r| Resource::new(r.id.clone(), r.capacity))
            .collect();
        let mut agents = Vec::with_capacity(self.agents.len());
        for a in &self.agents {
            let mut options = Vec::with_capacity(a.options.len());
            for o in &a.options {
                let mut usage = Vec::with_capacity(o.usage.len());
                for (rid, &amount) in &o.usage {
                    let Some(&r) = index.get(rid.as_str()) else {
                        return Err(InstanceError::UnknownResource {
                            agent: a.id.clone(),
                            option: o.id.clone(),
                            resource: rid.clone(),
                        });
                    };
                    usage.push(Usage::new(r, amount));
                }
                options.push(AgentOption::new(o.id.clone(), o.weight, usage));
            }
            agents.push(Agent::new(a.id.clone(), options));
        }
        PlpInstance::from_parts(resources, agents)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DaFile {
    advertisers: Vec<AdvertiserFile>,
    impressions: Vec<ImpressionFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AdvertiserFile {
    id: String,
    demand: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ImpressionFile {
    id: String,
    edges: Vec<EdgeFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeFile {
    advertiser: String,
    weight: f64,
}

impl DaFile {
    fn from_instance(da: &DaInstance) -> Self {
        DaFile {
            advertisers: da
                .advertisers
                .iter()
                .map(|a| AdvertiserFile {
                    id: a.id.clone(),
                    demand: a.demand,
                })
                .collect(),
            impressions: da
                .impressions
                .iter()
                .map(|imp| ImpressionFile {
                    id: imp.id.clone(),
                    edges: imp
                        .edges
                        .iter()
                        .map(|e| EdgeFile {
                            advertiser: da.advertisers[e.advertiser].id.clone(),
                            weight: e.weight,
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    fn into_instance(self) -> Result<DaInstance, InstanceError> {
        let index: HashMap<&str, usize> = self
            .advertisers
            .iter()
            .enumerate()
            .map(|(i, a)| (a.id.as_str(), i))
            .collect();
        let advertisers = self
            .advertisers
            .iter()
            .map(|a| Advertiser::new(a.id.clone(), a.demand))
            .collect();
        let mut impressions = Vec::with_capacity(self.impressions.len());
        for imp in &self.impressions {
            let mut edges = Vec::with_capacity(imp.edges.len());
            for e in &imp.edges {
                let Some(&j) = index.get(e.advertiser.as_str()) else {
                    return Err(InstanceError::UnknownResource {
                        agent: imp.id.clone(),
                        option: e.advertiser.clone(),
                        resource: e.advertiser.clone(),
                    });
                };
                edges.push(Edge::new(j, e.weight));
            }
            impressions.push(Impression::new(imp.id.clone(), edges));
        }
        DaInstance::from_parts(advertisers, impressions)
    }
}

/// Sniffs whether a JSON file holds a packing instance or a display-ad
/// instance and loads it, converting display-ad instances to packing form
/// when `convert` is set.
pub enum AnyInstance {
    Plp(PlpInstance),
    Da(DaInstance),
}

impl AnyInstance {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, InstanceError> {
        let path = path.as_ref();
        let text = read_text(path)?;
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| InstanceError::Parse {
                path: path.display().to_string(),
                line: e.line(),
                column: e.column(),
                message: e.to_string(),
            })?;
        let is_da = value.get("advertisers").is_some();
        drop(value);
        if is_da {
            let file: DaFile = serde_json::from_str(&text).map_err(|e| InstanceError::Parse {
                path: path.display().to_string(),
                line: e.line(),
                column: e.column(),
                message: e.to_string(),
            })?;
            Ok(AnyInstance::Da(file.into_instance()?))
        } else {
            let file: PlpFile = serde_json::from_str(&text).map_err(|e| InstanceError::Parse {
                path: path.display().to_string(),
                line: e.line(),
                column: e.column(),
                message: e.to_string(),
            })?;
            Ok(AnyInstance::Plp(file.into_instance()?))
        }
    }

    /// The packing view: converts display-ad instances, passes packing
    /// instances through.
    pub fn into_plp(self) -> PlpInstance {
        match self {
            AnyInstance::Plp(p) => p,
            AnyInstance::Da(d) => da_to_plp(&d),
        }
    }
}

/// Renders a one-line shape summary, used by the CLI.
pub fn describe_plp(inst: &PlpInstance) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        "packing instance: {} resources, {} agents, max options {}",
        inst.num_resources(),
        inst.num_agents(),
        inst.max_options()
    );
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_instance() -> PlpInstance {
        PlpInstance::from_parts(
            vec![Resource::new("r0", 2.0), Resource::new("r1", 4.0)],
            vec![Agent::new(
                "a0",
                vec![AgentOption::new(
                    "o0",
                    3.0,
                    vec![Usage::new(0, 1.0), Usage::new(1, 2.0)],
                )],
            )],
        )
        .unwrap()
    }

    #[test]
    fn normalize_rescales_usage() {
        let inst = unit_instance();
        let norm = inst.normalize();
        assert!(norm.is_normalized());
        let usage = &norm.agents[0].options[0].usage;
        assert_eq!(usage[0].amount, 0.5);
        assert_eq!(usage[1].amount, 0.5);
    }

    #[test]
    fn normalize_is_idempotent() {
        let inst = unit_instance();
        let once = inst.normalize();
        let twice = once.normalize();
        assert_eq!(once, twice);
    }

    #[test]
    fn validation_rejects_bad_capacity() {
        let err = PlpInstance::from_parts(vec![Resource::new("r0", 0.0)], vec![]);
        assert!(matches!(err, Err(InstanceError::BadCapacity(_))));
        let err = PlpInstance::from_parts(vec![Resource::new("r0", f64::NAN)], vec![]);
        assert!(matches!(err, Err(InstanceError::BadCapacity(_))));
    }

    #[test]
    fn validation_rejects_negative_weight_and_usage() {
        let err = PlpInstance::from_parts(
            vec![Resource::new("r0", 1.0)],
            vec![Agent::new(
                "a0",
                vec![AgentOption::new("o0", -1.0, vec![Usage::new(0, 1.0)])],
            )],
        );
        assert!(matches!(err, Err(InstanceError::BadWeight { .. })));
        let err = PlpInstance::from_parts(
            vec![Resource::new("r0", 1.0)],
            vec![Agent::new(
                "a0",
                vec![AgentOption::new("o0", 1.0, vec![Usage::new(0, -0.5)])],
            )],
        );
        assert!(matches!(err, Err(InstanceError::BadUsage { .. })));
    }

    #[test]
    fn validation_rejects_out_of_range_resource() {
        let err = PlpInstance::from_parts(
            vec![Resource::new("r0", 1.0)],
            vec![Agent::new(
                "a0",
                vec![AgentOption::new("o0", 1.0, vec![Usage::new(5, 1.0)])],
            )],
        );
        assert!(matches!(err, Err(InstanceError::ResourceIndexOutOfRange { .. })));
    }

    #[test]
    fn validation_requires_some_option_when_agents_exist() {
        let err = PlpInstance::from_parts(
            vec![Resource::new("r0", 1.0)],
            vec![Agent::new("a0", vec![]), Agent::new("a1", vec![])],
        );
        assert!(matches!(err, Err(InstanceError::NoOptions)));
        // A single empty agent among others with options is fine.
        let ok = PlpInstance::from_parts(
            vec![Resource::new("r0", 1.0)],
            vec![
                Agent::new("a0", vec![]),
                Agent::new("a1", vec![AgentOption::new("o0", 1.0, vec![Usage::new(0, 1.0)])]),
            ],
        );
        assert!(ok.is_ok());
    }

    #[test]
    fn plp_json_round_trip_is_exact() {
        let inst = unit_instance();
        let text = inst.to_json();
        let back = PlpInstance::from_json(&text).unwrap();
        assert_eq!(inst, back);
    }

    #[test]
    fn plp_json_rejects_unknown_fields() {
        let text = r#"{"resources":[{"id":"r0","capacity":1.0,"color":"red"}],"agents":[]}"#;
        let err = PlpInstance::from_json(text);
        assert!(matches!(err, Err(InstanceError::Parse { .. })));
    }

    #[test]
    fn plp_json_rejects_unknown_resource_id() {
        let text = r#"{
            "resources": [{"id": "r0", "capacity": 1.0}],
            "agents": [{"id": "a0", "options": [{"id": "o0", "weight": 1.0, "usage": {"r9": 1.0}}]}]
        }"#;
        let err = PlpInstance::from_json(text);
        assert!(matches!(err, Err(InstanceError::UnknownResource { .. })));
    }

    #[test]
    fn parse_error_carries_line_context() {
        let text = "{\n  \"resources\": [,]\n}";
        match PlpInstance::from_json(text) {
            Err(InstanceError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn da_small_example_converts() {
        let da = DaInstance::from_parts(
            vec![Advertiser::new("a", 1), Advertiser::new("b", 1)],
            vec![
                Impression::new("i1", vec![Edge::new(0, 100.0), Edge::new(1, 4.0)]),
                Impression::new("i2", vec![Edge::new(0, 10.0), Edge::new(1, 6.0)]),
            ],
        )
        .unwrap();
        let plp = da_to_plp(&da);
        assert_eq!(plp.num_resources(), 2);
        assert_eq!(plp.num_agents(), 2);
        assert_eq!(plp.resources[0].capacity, 1.0);
        assert_eq!(plp.agents[0].options.len(), 2);
        assert_eq!(plp.agents[0].options[0].weight, 100.0);
        assert_eq!(plp.agents[0].options[0].usage, vec![Usage::new(0, 1.0)]);
        assert_eq!(plp.agents[1].options[1].weight, 6.0);
    }

    #[test]
    fn da_impression_with_no_edges_becomes_empty_agent() {
        let da = DaInstance::from_parts(
            vec![Advertiser::new("a", 2)],
            vec![
                Impression::new("i1", vec![Edge::new(0, 1.0)]),
                Impression::new("i2", vec![]),
            ],
        )
        .unwrap();
        let plp = da_to_plp(&da);
        assert!(plp.agents[1].options.is_empty());
    }

    #[test]
    fn da_validation_rejects_zero_demand_and_bad_weights() {
        let err = DaInstance::from_parts(vec![Advertiser::new("a", 0)], vec![]);
        assert!(matches!(err, Err(InstanceError::BadDemand(_))));
        let err = DaInstance::from_parts(
            vec![Advertiser::new("a", 1)],
            vec![Impression::new("i", vec![Edge::new(0, 0.0)])],
        );
        assert!(matches!(err, Err(InstanceError::BadEdgeWeight { .. })));
    }

    #[test]
    fn da_json_round_trip_is_exact() {
        let da = DaInstance::from_parts(
            vec![Advertiser::new("a", 3), Advertiser::new("b", 1)],
            vec![Impression::new("i0", vec![Edge::new(1, 2.5), Edge::new(0, 1.25)])],
        )
        .unwrap();
        let back = DaInstance::from_json(&da.to_json()).unwrap();
        assert_eq!(da, back);
    }

    #[test]
    fn synthetic_generator_is_deterministic_and_in_range() {
        let cfg = SyntheticConfig {
            advertisers: 4,
            impressions: 50,
            demand_min: 2,
            demand_max: 9,
            density: 0.4,
            weight_mu: 0.0,
            weight_sigma: 0.5,
            seed: 11,
        };
        let a = generate_synthetic(&cfg).unwrap();
        let b = generate_synthetic(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.num_advertisers(), 4);
        assert_eq!(a.num_impressions(), 50);
        for adv in &a.advertisers {
            assert!((2..=9).contains(&adv.demand));
        }
        for imp in &a.impressions {
            assert!(!imp.edges.is_empty());
            for e in &imp.edges {
                assert!(e.weight > 0.0);
            }
        }
        let other = generate_synthetic(&SyntheticConfig { seed: 12, ..cfg }).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn lower_bound_small_params_match_hand_values() {
        let params = LowerBoundParams {
            tiers: 2,
            draws: 10,
            seed: 0,
        };
        // ceil(6 ln 2) = ceil(4.158...) = 5.
        assert_eq!(params.capacity(), 5.0);
        let probs = params.type_probabilities();
        assert!((probs[0] - 0.8).abs() < 1e-15);
        assert!((probs[1] - 0.2).abs() < 1e-15);
        assert_eq!(params.type_value(0), 1.0);
        assert_eq!(params.type_value(1), 4.0);
        let inst = generate_lower_bound(&params).unwrap();
        assert_eq!(inst.num_resources(), 1);
        assert_eq!(inst.resources[0].capacity, 5.0);
        assert_eq!(inst.num_agents(), 10);
        for agent in &inst.agents {
            let w = agent.options[0].weight;
            assert!(w == 1.0 || w == 4.0);
        }
    }

    #[test]
    fn lower_bound_type_frequencies_concentrate() {
        let params = LowerBoundParams {
            tiers: 3,
            draws: 100_000,
            seed: 5,
        };
        let inst = generate_lower_bound(&params).unwrap();
        let ones = inst
            .agents
            .iter()
            .filter(|a| a.options[0].weight == 1.0)
            .count();
        let freq = ones as f64 / 100_000.0;
        // Type 0 probability is 81/91 = 0.89010...
        assert!((freq - 81.0 / 91.0).abs() < 0.01, "freq {freq}");
    }

    #[test]
    fn conditions_report_matches_hand_computation() {
        // One resource, 10000 agents with 2 options each, unit weights and
        // tiny usage, checked at eps = 0.1.
        let agents = (0..10_000)
            .map(|i| {
                Agent::new(
                    format!("a{i}"),
                    vec![
                        AgentOption::new("o0", 1.0, vec![Usage::new(0, 1e-6)]),
                        AgentOption::new("o1", 0.5, vec![Usage::new(0, 1e-6)]),
                    ],
                )
            })
            .collect();
        let inst = PlpInstance::from_parts(vec![Resource::new("r0", 1.0)], agents).unwrap();
        let report = check_ptas_conditions(&inst, 0.1, 5000.0).unwrap();
        // (m+1)(ln n + ln q) = 2 (ln 10000 + ln 2) = 19.806975105072258.
        assert!((report.weight_bound - 5.048726495061407e-3).abs() < 1e-12);
        assert!((report.usage_bound - 5.048726495061407e-5).abs() < 1e-14);
        assert!((report.weight_ratio - 2e-4).abs() < 1e-12);
        assert!(report.weight_ok);
        assert!(report.usage_ok);
        assert!(report.ok);
    }

    #[test]
    fn conditions_check_rejects_bad_inputs() {
        let inst = unit_instance();
        // Not normalized.
        assert!(check_ptas_conditions(&inst, 0.1, 1.0).is_err());
        let norm = inst.normalize();
        assert!(check_ptas_conditions(&norm, 0.0, 1.0).is_err());
        assert!(check_ptas_conditions(&norm, 1.0, 1.0).is_err());
        assert!(check_ptas_conditions(&norm, 0.1, 0.0).is_err());
    }

    #[test]
    fn sharing_gap_instance_shape() {
        let da = generate_sharing_gap(3).unwrap();
        assert_eq!(da.num_advertisers(), 9);
        assert_eq!(da.num_impressions(), 10);
        assert_eq!(da.impressions[0].edges.len(), 9);
        assert_eq!(da.impressions[0].edges[0].weight, 3.0);
        assert_eq!(da.impressions[0].edges[1].weight, 1.0);
        let small = da.impressions[1].edges[0].weight;
        assert!(small < 1.0 / 9.0);
    }

    #[test]
    fn restrict_and_scale_helpers() {
        let inst = unit_instance();
        let sub = inst.restrict_agents(&[0]);
        assert_eq!(sub.num_agents(), 1);
        let scaled = inst.scale_capacities(0.5);
        assert_eq!(scaled.resources[0].capacity, 1.0);
        assert_eq!(scaled.resources[1].capacity, 2.0);
    }
}
