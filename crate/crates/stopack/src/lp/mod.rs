//! Offline LP oracle for packing instances.
//!
//! The primal is `max sum w_io x_io` subject to one unit per agent
//! (`sum_o x_io <= 1`), resource capacities (`sum_io a_ioj x_io <= c_j`),
//! and `x >= 0`. The dual carries a price `beta_j` per resource and a value
//! `z_i` per agent with `z_i + sum_j beta_j a_ioj >= w_io`.
//!
//! Two routes produce the same certified answer. Desk-scale instances go
//! through a dense revised simplex with Bland's rule, which is simple,
//! deterministic, and exercised directly against brute-force vertex
//! enumeration in the test suite. Instances too large for a dense basis
//! inverse go through a price-decomposition route whose answer carries an
//! explicit duality-gap certificate and is cross-checked against the dense
//! route on overlapping sizes.

mod pricing;
mod simplex;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::PlpInstance;
use simplex::{PackingLp, SparseCol};

/// Contract tolerance for feasibility, dual feasibility, and the duality gap.
pub const SOLVER_TOL: f64 = 1e-7;

/// Above this many LP rows (active agents plus resources) the dense basis
/// inverse becomes the bottleneck and the price-decomposition route runs
/// instead.
const DENSE_ROW_LIMIT: usize = 600;

/// Which internal route produced a solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveRoute {
    Dense,
    Prices,
}

/// A primal-dual pair for a packing instance. `x[i][o]` is the selected
/// fraction of option `o` of agent `i`, `beta[j]` the price of resource `j`,
/// and `z[i]` the dual value of agent `i`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LpSolution {
    pub x: Vec<Vec<f64>>,
    pub beta: Vec<f64>,
    pub z: Vec<f64>,
    pub objective: f64,
    pub route: SolveRoute,
}

#[derive(Debug, Error)]
pub enum LpError {
    #[error("epsilon must lie in (0, 1], got {0}")]
    BadEpsilon(f64),
    #[error("solution shape does not match instance: {0}")]
    ShapeMismatch(String),
}

/// Solves the packing LP, returning a deterministic certified primal-dual
/// pair. Route selection depends only on the instance shape.
pub fn solve_primal(inst: &PlpInstance) -> LpSolution {
    let active_agents = inst.agents.iter().filter(|a| !a.options.is_empty()).count();
    let rows = active_agents + inst.num_resources();
    if active_agents == 0 {
        return LpSolution {
            x: inst.agents.iter().map(|a| vec![0.0; a.options.len()]).collect(),
            beta: vec![0.0; inst.num_resources()],
            z: vec![0.0; inst.num_agents()],
            objective: 0.0,
            route: SolveRoute::Dense,
        };
    }
    if rows <= DENSE_ROW_LIMIT {
        solve_dense(inst)
    } else {
        pricing::solve(inst)
    }
}

/// Dense simplex route, exposed for cross-checking the two routes against
/// each other. Memory grows with the square of the row count.
pub fn solve_dense(inst: &PlpInstance) -> LpSolution {
    let m = inst.num_resources();
    let n = inst.num_agents();
    // Row layout: one row per agent that has options, then resources.
    let mut agent_row = vec![usize::MAX; n];
    let mut nrows = 0;
    for (i, agent) in inst.agents.iter().enumerate() {
        if !agent.options.is_empty() {
            agent_row[i] = nrows;
            nrows += 1;
        }
    }
    let res_base = nrows;
    nrows += m;

    let mut cols: Vec<SparseCol> = Vec::new();
    let mut obj = Vec::new();
    let mut owner: Vec<(usize, usize)> = Vec::new();
    for (i, agent) in inst.agents.iter().enumerate() {
        for (o, opt) in agent.options.iter().enumerate() {
            let mut col: SparseCol = vec![(agent_row[i], 1.0)];
            for u in &opt.usage {
                if u.amount != 0.0 {
                    col.push((res_base + u.resource, u.amount));
                }
            }
            cols.push(col);
            obj.push(opt.weight);
            owner.push((i, o));
        }
    }
    let mut rhs = vec![1.0; res_base];
    rhs.extend(inst.resources.iter().map(|r| r.capacity));

    let res = simplex::solve(&PackingLp {
        nrows,
        cols,
        obj,
        rhs,
    });

    let mut x: Vec<Vec<f64>> = inst.agents.iter().map(|a| vec![0.0; a.options.len()]).collect();
    for (v, &(i, o)) in res.x.iter().zip(&owner) {
        x[i][o] = *v;
    }
    let mut z = vec![0.0; n];
    for (i, row) in agent_row.iter().enumerate() {
        if *row != usize::MAX {
            z[i] = res.duals[*row];
        }
    }
    let beta = res.duals[res_base..res_base + m].to_vec();
    LpSolution {
        x,
        beta,
        z,
        objective: res.objective,
        route: SolveRoute::Dense,
    }
}

/// Resource prices from a reduced instance: the sample's capacities are
/// scaled by `epsilon` and the LP is solved on that copy. With `epsilon = 1`
/// this is exactly the dual of the sample itself. An empty sample yields
/// all-zero prices.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReducedDual {
    pub beta: Vec<f64>,
    /// Optimal objective of the reduced primal.
    pub objective: f64,
}

pub fn solve_reduced_dual(sample: &PlpInstance, epsilon: f64) -> Result<ReducedDual, LpError> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(LpError::BadEpsilon(epsilon));
    }
    let active = sample.agents.iter().any(|a| !a.options.is_empty());
    if !active {
        return Ok(ReducedDual {
            beta: vec![0.0; sample.num_resources()],
            objective: 0.0,
        });
    }
    let scaled = sample.scale_capacities(epsilon);
    let sol = solve_primal(&scaled);
    Ok(ReducedDual {
        beta: sol.beta,
        objective: sol.objective,
    })
}

/// Outcome of checking a primal-dual pair against an instance. Constraint
/// violations are reported relative to the row scale (capacity for resource
/// rows, 1 for agent rows, weight for dual rows); the gap is compared to
/// `tol * (1 + |objective|)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DualityReport {
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub duality_gap: f64,
    pub max_primal_violation: f64,
    pub max_dual_violation: f64,
    pub max_cs_residual: f64,
    pub pass: bool,
}

pub fn verify_duality(
    inst: &PlpInstance,
    sol: &LpSolution,
    tol: f64,
) -> Result<DualityReport, LpError> {
    if sol.x.len() != inst.num_agents() {
        return Err(LpError::ShapeMismatch(format!(
            "x has {} agents, instance has {}",
            sol.x.len(),
            inst.num_agents()
        )));
    }
    for (i, (row, agent)) in sol.x.iter().zip(&inst.agents).enumerate() {
        if row.len() != agent.options.len() {
            return Err(LpError::ShapeMismatch(format!(
                "agent {i} has {} options, x row has {}",
                agent.options.len(),
                row.len()
            )));
        }
    }
    if sol.beta.len() != inst.num_resources() {
        return Err(LpError::ShapeMismatch(format!(
            "beta has {} entries, instance has {} resources",
            sol.beta.len(),
            inst.num_resources()
        )));
    }
    if sol.z.len() != inst.num_agents() {
        return Err(LpError::ShapeMismatch(format!(
            "z has {} entries, instance has {} agents",
            sol.z.len(),
            inst.num_agents()
        )));
    }

    let mut primal_objective = 0.0;
    let mut usage = vec![0.0; inst.num_resources()];
    let mut max_primal = 0.0_f64;
    let mut max_cs = 0.0_f64;
    for (i, agent) in inst.agents.iter().enumerate() {
        let mut assigned = 0.0;
        for (o, opt) in agent.options.iter().enumerate() {
            let v = sol.x[i][o];
            max_primal = max_primal.max(-v);
            assigned += v;
            primal_objective += v * opt.weight;
            for u in &opt.usage {
                usage[u.resource] += v * u.amount;
            }
        }
        max_primal = max_primal.max(assigned - 1.0);
        max_cs = max_cs.max(sol.z[i] * (1.0 - assigned));
    }
    for (j, r) in inst.resources.iter().enumerate() {
        max_primal = max_primal.max((usage[j] - r.capacity) / r.capacity.max(1.0));
        max_cs = max_cs.max(sol.beta[j] * (r.capacity - usage[j]) / r.capacity.max(1.0));
    }

    let mut max_dual = 0.0_f64;
    for j in 0..inst.num_resources() {
        max_dual = max_dual.max(-sol.beta[j]);
    }
    for (i, agent) in inst.agents.iter().enumerate() {
        max_dual = max_dual.max(-sol.z[i]);
        for (o, opt) in agent.options.iter().enumerate() {
            let mut covered = sol.z[i];
            for u in &opt.usage {
                covered += sol.beta[u.resource] * u.amount;
            }
            let slack = opt.weight - covered;
            max_dual = max_dual.max(slack / opt.weight.max(1.0));
            max_cs = max_cs.max(sol.x[i][o] * -slack);
        }
    }

    let dual_objective: f64 = sol
        .beta
        .iter()
        .zip(&inst.resources)
        .map(|(b, r)| b * r.capacity)
        .sum::<f64>()
        + sol.z.iter().sum::<f64>();
    let duality_gap = (dual_objective - primal_objective).abs();
    let scale = 1.0 + primal_objective.abs();
    let pass = max_primal <= tol
        && max_dual <= tol
        && duality_gap <= tol * scale
        && max_cs <= tol * scale;
    Ok(DualityReport {
        primal_objective,
        dual_objective,
        duality_gap,
        max_primal_violation: max_primal,
        max_dual_violation: max_dual,
        max_cs_residual: max_cs,
        pass,
    })
}

/// Renders the instance LP in CPLEX LP text format for cross-checking with
/// external solvers. Variables are named `x_<agent>_<option>` by index, agent
/// rows `agent_<i>`, resource rows `res_<j>`.
pub fn write_lp_text(inst: &PlpInstance) -> String {
    let mut s = String::new();
    s.push_str("\\ packing instance\nMaximize\n obj:");
    let mut first = true;
    for (i, agent) in inst.agents.iter().enumerate() {
        for (o, opt) in agent.options.iter().enumerate() {
            if first {
                let _ = write!(s, " {} x_{}_{}", fmt_num(opt.weight), i, o);
                first = false;
            } else {
                let _ = write!(s, " + {} x_{}_{}", fmt_num(opt.weight), i, o);
            }
        }
    }
    if first {
        s.push_str(" 0 dummy");
    }
    s.push_str("\nSubject To\n");
    for (i, agent) in inst.agents.iter().enumerate() {
        if agent.options.is_empty() {
            continue;
        }
        let _ = write!(s, " agent_{i}:");
        for (o, _) in agent.options.iter().enumerate() {
            if o == 0 {
                let _ = write!(s, " x_{i}_{o}");
            } else {
                let _ = write!(s, " + x_{i}_{o}");
            }
        }
        s.push_str(" <= 1\n");
    }
    for (j, r) in inst.resources.iter().enumerate() {
        let mut terms = Vec::new();
        for (i, agent) in inst.agents.iter().enumerate() {
            for (o, opt) in agent.options.iter().enumerate() {
                for u in &opt.usage {
                    if u.resource == j && u.amount != 0.0 {
                        terms.push(format!("{} x_{}_{}", fmt_num(u.amount), i, o));
                    }
                }
            }
        }
        if terms.is_empty() {
            continue;
        }
        let _ = write!(s, " res_{j}: {} <= {}\n", terms.join(" + "), fmt_num(r.capacity));
    }
    s.push_str("End\n");
    s
}

fn fmt_num(v: f64) -> String {
    format!("{v}")
}
