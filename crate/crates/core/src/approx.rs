//! Approximation algorithms for hard instances: LP rounding, Flow-CT
//! (constant tuples), and Flow-CW (constant witnesses / dissociation).

use itertools::Itertools;

use crate::analysis::{apply_dissociation, linear_orderings, minimal_dissociations, Problem};
use crate::flow::{build_flow_graph, max_flow_min_cut, FlowNetwork};
use crate::lp::{solve_lp, Status};
use crate::model::{Database, Query, TupleKey};
use crate::resilience::{build_res_model, Method, ResilienceAnswer, SolveError};
use crate::responsibility::{build_rsp_model, ResponsibilityAnswer, RspMode};
use crate::witness::{compute_witnesses, query_holds};

/// Per-linearization values, for reporting.
#[derive(Debug, Clone)]
pub struct ApproxAnswer {
    pub res: Option<ResilienceAnswer>,
    pub rsp: Option<ResponsibilityAnswer>,
    pub per_linearization: Vec<f64>,
}

pub const FLOW_CT_ATOM_CAP: usize = 7;

/// Solves the relaxation and rounds tuple variables up at threshold 1/m
/// (m = atom count). Feasible by construction; value ≤ m × relaxation value.
pub fn lp_rounding(
    q: &Query,
    d: &Database,
    problem: Problem,
    t: Option<&TupleKey>,
) -> Result<ApproxAnswer, SolveError> {
    let m = q.atom_count() as f64;
    let ws = compute_witnesses(q, d);
    match problem {
        Problem::Res => {
            if ws.is_empty() {
                return Ok(ApproxAnswer {
                    res: Some(ResilienceAnswer {
                        value: 0.0,
                        contingency: Vec::new(),
                        method: Method::Round,
                        lp_bound: Some(0.0),
                    }),
                    rsp: None,
                    per_linearization: Vec::new(),
                });
            }
            let rm = build_res_model(q, d, &ws)?;
            let r = solve_lp(&rm.model);
            if r.status != Status::Optimal {
                return Err(SolveError::IterationLimit);
            }
            let contingency: Vec<TupleKey> = rm
                .tuples
                .iter()
                .enumerate()
                .filter(|(i, _)| r.assignment[*i] >= 1.0 / m - 1e-9)
                .map(|(_, t)| t.clone())
                .collect();
            let value: f64 = contingency.iter().map(|t| d.multiplicity(t) as f64).sum();
            assert!(!query_holds(q, &d.without(&contingency)));
            Ok(ApproxAnswer {
                res: Some(ResilienceAnswer {
                    value,
                    contingency,
                    method: Method::Round,
                    lp_bound: Some(r.objective),
                }),
                rsp: None,
                per_linearization: Vec::new(),
            })
        }
        Problem::Rsp => {
            let t = t.ok_or_else(|| SolveError::Invalid("rsp requires a tuple".into()))?;
            // MILP relaxation: enumerate the preserved witness, round each LP
            let rm = build_rsp_model(q, d, &ws, t, RspMode::Milp)?;
            let n = rm.tuples.len();
            let mut best: Option<(f64, Vec<TupleKey>, usize)> = None;
            for (j, &wi) in rm.t_witnesses.iter().enumerate() {
                let mut sub = rm.model.clone();
                for u in &ws.witnesses[wi].tuples {
                    if let Some(i) = rm.tuples.iter().position(|x| x == u) {
                        sub.vars[i].upper = 0.0;
                    }
                }
                sub.vars[n + j].upper = 0.0;
                for v in sub.vars.iter_mut() {
                    v.integral = false;
                }
                let r = solve_lp(&sub);
                if r.status != Status::Optimal {
                    continue;
                }
                let gamma: Vec<TupleKey> = rm
                    .tuples
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| r.assignment[*i] >= 1.0 / m - 1e-9)
                    .map(|(_, u)| u.clone())
                    .collect();
                let value: f64 = gamma.iter().map(|u| d.multiplicity(u) as f64).sum();
                if best.as_ref().is_none_or(|(b, _, _)| value < *b) {
                    best = Some((value, gamma, wi));
                }
            }
            match best {
                Some((value, gamma, wi)) => {
                    assert!(query_holds(q, &d.without(&gamma)));
                    let mut killed = gamma.clone();
                    killed.push(t.clone());
                    assert!(!query_holds(q, &d.without(&killed)));
                    let mut a =
                        ResponsibilityAnswer::finite(value, gamma, Some(wi), Method::Round);
                    a.method = Method::Round;
                    Ok(ApproxAnswer { res: None, rsp: Some(a), per_linearization: Vec::new() })
                }
                None => Ok(ApproxAnswer {
                    res: None,
                    rsp: Some(ResponsibilityAnswer::not_counterfactualizable(Method::Round)),
                    per_linearization: Vec::new(),
                }),
            }
        }
    }
}

/// Atom orderings modulo reversal, canonicalized lexicographically.
fn orderings_mod_reversal(m: usize) -> Vec<Vec<usize>> {
    (0..m)
        .permutations(m)
        .filter(|p| p.first() <= p.last())
        .collect()
}

fn res_min_cut(g: &FlowNetwork) -> Option<(i64, Vec<TupleKey>)> {
    let (v, cut) = max_flow_min_cut(g);
    if v >= g.infinity {
        None
    } else {
        Some((v, cut))
    }
}

fn rsp_min_cut(
    g: &FlowNetwork,
    t_group: &[TupleKey],
    preserved_sets: &[(usize, Vec<TupleKey>)],
) -> Option<(i64, Vec<TupleKey>, usize)> {
    let mut best: Option<(i64, Vec<TupleKey>, usize)> = None;
    for (wi, keep) in preserved_sets {
        let mut h = g.clone();
        for t in t_group {
            h.set_tuple_capacity(t, 0);
        }
        for u in keep {
            if !t_group.contains(u) {
                let inf = h.infinity;
                h.set_tuple_capacity(u, inf);
            }
        }
        let (v, cut) = max_flow_min_cut(&h);
        if v < g.infinity && best.as_ref().is_none_or(|(b, _, _)| v < *b) {
            best = Some((v, cut, *wi));
        }
    }
    best
}

/// Flow-CT: keep the original tuples, try every atom ordering (modulo
/// reversal; spurious paths allowed), take the minimum min-cut. Always an
/// upper bound on the exact optimum.
pub fn flow_ct(
    q: &Query,
    d: &Database,
    problem: Problem,
    t: Option<&TupleKey>,
) -> Result<ApproxAnswer, SolveError> {
    flow_ct_capped(q, d, problem, t, FLOW_CT_ATOM_CAP)
}

pub fn flow_ct_capped(
    q: &Query,
    d: &Database,
    problem: Problem,
    t: Option<&TupleKey>,
    atom_cap: usize,
) -> Result<ApproxAnswer, SolveError> {
    if !q.is_self_join_free() {
        return Err(SolveError::SelfJoin);
    }
    let m = q.atom_count();
    if m > atom_cap {
        return Err(SolveError::Invalid(format!(
            "flow-ct capped at {atom_cap} atoms ({m} given); raise the cap to override"
        )));
    }
    let ws = compute_witnesses(q, d);
    let mut per = Vec::new();
    match problem {
        Problem::Res => {
            if ws.is_empty() {
                return Ok(ApproxAnswer {
                    res: Some(ResilienceAnswer {
                        value: 0.0,
                        contingency: Vec::new(),
                        method: Method::FlowCt,
                        lp_bound: None,
                    }),
                    rsp: None,
                    per_linearization: Vec::new(),
                });
            }
            let mut best: Option<(i64, Vec<TupleKey>)> = None;
            for ord in orderings_mod_reversal(m) {
                let g = build_flow_graph(q, d, &ord);
                if let Some((v, cut)) = res_min_cut(&g) {
                    per.push(v as f64);
                    if best.as_ref().is_none_or(|(b, _)| v < *b) {
                        best = Some((v, cut));
                    }
                }
            }
            let (value, contingency) = best.ok_or(SolveError::UnavoidableWitness)?;
            assert!(!query_holds(q, &d.without(&contingency)));
            Ok(ApproxAnswer {
                res: Some(ResilienceAnswer {
                    value: value as f64,
                    contingency,
                    method: Method::FlowCt,
                    lp_bound: None,
                }),
                rsp: None,
                per_linearization: per,
            })
        }
        Problem::Rsp => {
            let t = t.ok_or_else(|| SolveError::Invalid("rsp requires a tuple".into()))?;
            let t_wit: Vec<usize> = ws
                .tuple_index
                .get(t)
                .map(|s| s.iter().copied().collect())
                .unwrap_or_default();
            if t_wit.is_empty() {
                return Err(SolveError::TupleNotInWitness);
            }
            let preserved: Vec<(usize, Vec<TupleKey>)> = t_wit
                .iter()
                .map(|&wi| (wi, ws.witnesses[wi].tuples.clone()))
                .collect();
            let mut best: Option<(i64, Vec<TupleKey>, usize)> = None;
            for ord in orderings_mod_reversal(m) {
                let g = build_flow_graph(q, d, &ord);
                if let Some((v, cut, wi)) = rsp_min_cut(&g, &[t.clone()], &preserved) {
                    per.push(v as f64);
                    if best.as_ref().is_none_or(|(b, _, _)| v < *b) {
                        best = Some((v, cut, wi));
                    }
                }
            }
            let answer = match best {
                Some((v, cut, wi)) => {
                    assert!(query_holds(q, &d.without(&cut)));
                    let mut a =
                        ResponsibilityAnswer::finite(v as f64, cut, Some(wi), Method::FlowCt);
                    a.method = Method::FlowCt;
                    a
                }
                None => ResponsibilityAnswer::not_counterfactualizable(Method::FlowCt),
            };
            Ok(ApproxAnswer { res: None, rsp: Some(answer), per_linearization: per })
        }
    }
}

/// The dissociated database: tuples re-keyed by the extended variable sets,
/// one per witness projection, inheriting multiplicity and exogeneity from
/// the original tuple. Returns the database plus a map back to originals.
fn dissociate_database(
    q: &Query,
    d: &Database,
    q2: &Query,
) -> (Database, std::collections::HashMap<TupleKey, TupleKey>) {
    let ws = compute_witnesses(q, d);
    let vars = q.variables();
    let var_pos: std::collections::HashMap<&str, usize> =
        vars.iter().enumerate().map(|(i, v)| (*v, i)).collect();
    let mut d2 = Database::new(d.semantics);
    d2.interner = d.interner.clone();
    let mut back = std::collections::HashMap::new();
    for a2 in &q2.atoms {
        d2.ensure_relation(&a2.relation);
    }
    for w in &ws.witnesses {
        for (a, a2) in q.atoms.iter().zip(&q2.atoms) {
            let orig = TupleKey {
                relation: a.relation.clone(),
                constants: a.vars.iter().map(|v| w.valuation[var_pos[v.as_str()]]).collect(),
            };
            let split = TupleKey {
                relation: a2.relation.clone(),
                constants: a2.vars.iter().map(|v| w.valuation[var_pos[v.as_str()]]).collect(),
            };
            if d2.record(&split).is_none() {
                let rec = d.record(&orig).expect("witness tuple present");
                let mut m = rec.multiplicity;
                if d2.semantics == crate::model::Semantics::Set {
                    m = 1;
                }
                let _ = d2.insert(&split.relation, split.constants.clone(), m, rec.exogenous);
                if d2.semantics == crate::model::Semantics::Bag && rec.multiplicity > 1 {
                    // insert merged the row; force the original multiplicity
                    if let Some(rows) = d2.relations.get_mut(&split.relation) {
                        for r in rows.iter_mut() {
                            if r.constants == split.constants {
                                r.multiplicity = rec.multiplicity;
                            }
                        }
                    }
                }
                back.insert(split, orig);
            }
        }
    }
    (d2, back)
}

/// Flow-CW: keep the original witnesses, linearize the query by minimal
/// dissociations (splitting tuples), take the minimum min-cut over the
/// dissociations. Always an upper bound on the exact optimum.
pub fn flow_cw(
    q: &Query,
    d: &Database,
    problem: Problem,
    t: Option<&TupleKey>,
) -> Result<ApproxAnswer, SolveError> {
    if !q.is_self_join_free() {
        return Err(SolveError::SelfJoin);
    }
    let ws = compute_witnesses(q, d);
    if ws.is_empty() {
        return match problem {
            Problem::Res => Ok(ApproxAnswer {
                res: Some(ResilienceAnswer {
                    value: 0.0,
                    contingency: Vec::new(),
                    method: Method::FlowCw,
                    lp_bound: None,
                }),
                rsp: None,
                per_linearization: Vec::new(),
            }),
            Problem::Rsp => Err(SolveError::TupleNotInWitness),
        };
    }
    let mut per = Vec::new();
    let mut best_res: Option<(i64, Vec<TupleKey>)> = None;
    let mut best_rsp: Option<(i64, Vec<TupleKey>, usize, bool)> = None;
    let t_wit: Vec<usize> = match (problem, t) {
        (Problem::Rsp, Some(t)) => {
            let v: Vec<usize> = ws
                .tuple_index
                .get(t)
                .map(|s| s.iter().copied().collect())
                .unwrap_or_default();
            if v.is_empty() {
                return Err(SolveError::TupleNotInWitness);
            }
            v
        }
        (Problem::Rsp, None) => {
            return Err(SolveError::Invalid("rsp requires a tuple".into()))
        }
        _ => Vec::new(),
    };
    for (_, added) in minimal_dissociations(q) {
        let q2 = apply_dissociation(q, &added);
        let ord = linear_orderings(&q2)
            .into_iter()
            .next()
            .expect("dissociation linearizes the query");
        let (d2, back) = dissociate_database(q, d, &q2);
        let g = build_flow_graph(&q2, &d2, &ord);
        match problem {
            Problem::Res => {
                if let Some((v, cut)) = res_min_cut(&g) {
                    per.push(v as f64);
                    let mut orig: Vec<TupleKey> =
                        cut.iter().map(|s| back[s].clone()).collect();
                    orig.sort();
                    orig.dedup();
                    if best_res.as_ref().is_none_or(|(b, _)| v < *b) {
                        best_res = Some((v, orig));
                    }
                }
            }
            Problem::Rsp => {
                let t = t.unwrap();
                // t may split into several dissociated tuples
                let t_group: Vec<TupleKey> =
                    back.iter().filter(|(_, o)| *o == t).map(|(s, _)| s.clone()).collect();
                let set_based = t_group.len() > 1;
                let vars = q.variables();
                let var_pos: std::collections::HashMap<&str, usize> =
                    vars.iter().enumerate().map(|(i, v)| (*v, i)).collect();
                let preserved: Vec<(usize, Vec<TupleKey>)> = t_wit
                    .iter()
                    .map(|&wi| {
                        let w = &ws.witnesses[wi];
                        let tuples = q2
                            .atoms
                            .iter()
                            .map(|a2| TupleKey {
                                relation: a2.relation.clone(),
                                constants: a2
                                    .vars
                                    .iter()
                                    .map(|v| w.valuation[var_pos[v.as_str()]])
                                    .collect(),
                            })
                            .collect();
                        (wi, tuples)
                    })
                    .collect();
                if let Some((v, cut, wi)) = rsp_min_cut(&g, &t_group, &preserved) {
                    per.push(v as f64);
                    let mut orig: Vec<TupleKey> =
                        cut.iter().map(|s| back[s].clone()).collect();
                    orig.sort();
                    orig.dedup();
                    if best_rsp.as_ref().is_none_or(|(b, _, _, _)| v < *b) {
                        best_rsp = Some((v, orig, wi, set_based));
                    }
                }
            }
        }
    }
    match problem {
        Problem::Res => {
            let (value, contingency) = best_res.ok_or(SolveError::UnavoidableWitness)?;
            assert!(!query_holds(q, &d.without(&contingency)));
            Ok(ApproxAnswer {
                res: Some(ResilienceAnswer {
                    value: value as f64,
                    contingency,
                    method: Method::FlowCw,
                    lp_bound: None,
                }),
                rsp: None,
                per_linearization: per,
            })
        }
        Problem::Rsp => {
            let answer = match best_rsp {
                Some((v, cut, wi, set_based)) => {
                    let mut a =
                        ResponsibilityAnswer::finite(v as f64, cut, Some(wi), Method::FlowCw);
                    a.method = Method::FlowCw;
                    a.set_based_t = set_based;
                    a
                }
                None => ResponsibilityAnswer::not_counterfactualizable(Method::FlowCw),
            };
            Ok(ApproxAnswer { res: None, rsp: Some(answer), per_linearization: per })
        }
    }
}
