//! ILP/LP models for resilience and a brute-force hitting-set oracle.

use serde::Serialize;
use thiserror::Error;

use crate::lp::{solve_lp, solve_milp, LinearModel, Rel, SolveResult, Status};
use crate::model::{Database, Query, TupleKey};
use crate::witness::{compute_witnesses, query_holds, WitnessSet};

pub const BRUTE_FORCE_CAP: usize = 20;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("unavoidable witness: a witness contains only exogenous tuples")]
    UnavoidableWitness,
    #[error("tuple not in any witness")]
    TupleNotInWitness,
    #[error("tuple not found: {0}")]
    TupleNotFound(String),
    #[error("brute force cap exceeded: {0} endogenous tuples > {1}")]
    CapExceeded(usize, usize),
    #[error("query is not linear{0}")]
    NotLinear(String),
    #[error("self-join query: classifier undefined, use IJP search")]
    SelfJoin,
    #[error("solver iteration limit reached")]
    IterationLimit,
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Ilp,
    Lp,
    Flow,
    Brute,
    Round,
    FlowCt,
    FlowCw,
}

#[derive(Debug, Clone)]
pub struct ResilienceAnswer {
    pub value: f64,
    pub contingency: Vec<TupleKey>,
    pub method: Method,
    pub lp_bound: Option<f64>,
}

/// The resilience model plus the tuple owning each variable.
pub struct ResModel {
    pub model: LinearModel,
    pub tuples: Vec<TupleKey>,
}

/// One binary variable per endogenous unique tuple occurring in a witness;
/// one covering constraint per witness; objective weighs each tuple by its
/// multiplicity. Duplicate and dominated (superset) constraints are dropped.
pub fn build_res_model(q: &Query, d: &Database, ws: &WitnessSet) -> Result<ResModel, SolveError> {
    let mut model = LinearModel::default();
    let mut tuples: Vec<TupleKey> = Vec::new();
    let mut index = std::collections::HashMap::new();
    let mut endo_sets: Vec<Vec<usize>> = Vec::new();
    for w in &ws.witnesses {
        let mut set: Vec<usize> = Vec::new();
        for t in &w.tuples {
            if d.is_exogenous(q, t) {
                continue;
            }
            let i = *index.entry(t.clone()).or_insert_with(|| {
                tuples.push(t.clone());
                model.add_var(
                    format!("X[{}]", d.format_tuple(t)),
                    0.0,
                    1.0,
                    true,
                    d.multiplicity(t) as f64,
                )
            });
            set.push(i);
        }
        if set.is_empty() {
            return Err(SolveError::UnavoidableWitness);
        }
        set.sort_unstable();
        set.dedup();
        endo_sets.push(set);
    }
    // presolve: drop duplicates and dominated (superset) constraints
    endo_sets.sort();
    endo_sets.dedup();
    let keep: Vec<bool> = endo_sets
        .iter()
        .map(|s| {
            !endo_sets.iter().any(|o| {
                o != s && o.iter().all(|x| s.binary_search(x).is_ok())
            })
        })
        .collect();
    for (s, keep) in endo_sets.iter().zip(keep) {
        if keep {
            model.add_constraint(s.iter().map(|&i| (i, 1.0)).collect(), Rel::Ge, 1.0);
        }
    }
    Ok(ResModel { model, tuples })
}

fn extract(res: &SolveResult, tuples: &[TupleKey]) -> Vec<TupleKey> {
    res.assignment
        .iter()
        .zip(tuples)
        .filter(|(&x, _)| x > 0.5)
        .map(|(_, t)| t.clone())
        .collect()
}

/// Exact resilience for set or bag semantics via branch-and-bound on the
/// covering ILP. `D ⊭ Q` yields 0 with an empty contingency.
pub fn resilience_ilp(q: &Query, d: &Database) -> Result<ResilienceAnswer, SolveError> {
    let ws = compute_witnesses(q, d);
    if ws.is_empty() {
        return Ok(ResilienceAnswer {
            value: 0.0,
            contingency: Vec::new(),
            method: Method::Ilp,
            lp_bound: None,
        });
    }
    let rm = build_res_model(q, d, &ws)?;
    let r = solve_milp(&rm.model);
    match r.status {
        Status::Optimal => {}
        Status::Infeasible => return Err(SolveError::Invalid("resilience ILP infeasible".into())),
        Status::IterationLimit => return Err(SolveError::IterationLimit),
    }
    Ok(ResilienceAnswer {
        value: r.objective.round(),
        contingency: extract(&r, &rm.tuples),
        method: Method::Ilp,
        lp_bound: None,
    })
}

/// LP relaxation value (a lower bound). The contingency is populated only
/// when the optimum happens to be integral.
pub fn resilience_lp(q: &Query, d: &Database) -> Result<ResilienceAnswer, SolveError> {
    let ws = compute_witnesses(q, d);
    if ws.is_empty() {
        return Ok(ResilienceAnswer {
            value: 0.0,
            contingency: Vec::new(),
            method: Method::Lp,
            lp_bound: Some(0.0),
        });
    }
    let rm = build_res_model(q, d, &ws)?;
    let r = solve_lp(&rm.model);
    match r.status {
        Status::Optimal => {}
        Status::Infeasible => return Err(SolveError::Invalid("resilience LP infeasible".into())),
        Status::IterationLimit => return Err(SolveError::IterationLimit),
    }
    let contingency = if r.is_integral { extract(&r, &rm.tuples) } else { Vec::new() };
    Ok(ResilienceAnswer { value: r.objective, contingency, method: Method::Lp, lp_bound: Some(r.objective) })
}

/// Per-tuple witness incidence as bitmask blocks, for brute-force search.
pub(crate) fn witness_masks(
    q: &Query,
    d: &Database,
    ws: &WitnessSet,
) -> (Vec<TupleKey>, Vec<Vec<u64>>, usize) {
    let blocks = ws.len().div_ceil(64);
    let mut tuples = Vec::new();
    let mut masks: Vec<Vec<u64>> = Vec::new();
    for (t, idxs) in &ws.tuple_index {
        if d.is_exogenous(q, t) {
            continue;
        }
        let mut mask = vec![0u64; blocks];
        for &i in idxs {
            mask[i / 64] |= 1 << (i % 64);
        }
        tuples.push(t.clone());
        masks.push(mask);
    }
    // deterministic order
    let mut order: Vec<usize> = (0..tuples.len()).collect();
    order.sort_by(|&a, &b| tuples[a].cmp(&tuples[b]));
    let tuples2 = order.iter().map(|&i| tuples[i].clone()).collect();
    let masks2 = order.iter().map(|&i| masks[i].clone()).collect();
    (tuples2, masks2, blocks)
}

/// Minimum-weight set of endogenous unique tuples hitting every witness,
/// by exhaustive subset enumeration. Oracle for the ILP path.
pub fn brute_force_resilience(q: &Query, d: &Database) -> Result<ResilienceAnswer, SolveError> {
    brute_force_resilience_capped(q, d, BRUTE_FORCE_CAP)
}

pub fn brute_force_resilience_capped(
    q: &Query,
    d: &Database,
    cap: usize,
) -> Result<ResilienceAnswer, SolveError> {
    let ws = compute_witnesses(q, d);
    if ws.is_empty() {
        return Ok(ResilienceAnswer {
            value: 0.0,
            contingency: Vec::new(),
            method: Method::Brute,
            lp_bound: None,
        });
    }
    let (tuples, masks, blocks) = witness_masks(q, d, &ws);
    let n = tuples.len();
    if n > cap {
        return Err(SolveError::CapExceeded(n, cap));
    }
    let weights: Vec<f64> = tuples.iter().map(|t| d.multiplicity(t) as f64).collect();
    let full: Vec<u64> = (0..blocks)
        .map(|b| {
            let bits = ws.len() - b * 64;
            if bits >= 64 {
                u64::MAX
            } else {
                (1u64 << bits) - 1
            }
        })
        .collect();
    let mut best = f64::INFINITY;
    let mut best_mask = 0u64;
    for mask in 0u64..(1u64 << n) {
        let weight: f64 =
            (0..n).filter(|&i| mask & (1 << i) != 0).map(|i| weights[i]).sum();
        if weight >= best {
            continue;
        }
        let mut covered = vec![0u64; blocks];
        for i in 0..n {
            if mask & (1 << i) != 0 {
                for b in 0..blocks {
                    covered[b] |= masks[i][b];
                }
            }
        }
        if covered == full {
            best = weight;
            best_mask = mask;
        }
    }
    if !best.is_finite() {
        return Err(SolveError::UnavoidableWitness);
    }
    let contingency: Vec<TupleKey> = (0..n)
        .filter(|&i| best_mask & (1 << i) != 0)
        .map(|i| tuples[i].clone())
        .collect();
    debug_assert!(!query_holds(q, &d.without(&contingency)));
    Ok(ResilienceAnswer { value: best, contingency, method: Method::Brute, lp_bound: None })
}
