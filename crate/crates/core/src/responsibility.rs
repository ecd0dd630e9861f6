//! ILP/MILP models for causal responsibility, the enumerated-LP algorithm,
//! and a brute-force oracle.

use crate::lp::{solve_lp, solve_milp, LinearModel, Rel, Status, TOL};
use crate::model::{Database, Query, TupleKey};
use crate::resilience::{witness_masks, Method, SolveError};
use crate::witness::{compute_witnesses, query_holds, WitnessSet};

pub const BRUTE_FORCE_CAP: usize = 18;

#[derive(Debug, Clone)]
pub struct ResponsibilityAnswer {
    /// `None` means t cannot be made counterfactual.
    pub value: Option<f64>,
    pub contingency: Vec<TupleKey>,
    pub preserved_witness: Option<usize>,
    /// 1/(1+value); 0 when not counterfactualizable.
    pub rho: f64,
    pub method: Method,
    /// Set when t stands for a set of dissociated tuples (Flow-CW).
    pub set_based_t: bool,
}

impl ResponsibilityAnswer {
    pub fn finite(
        value: f64,
        contingency: Vec<TupleKey>,
        preserved_witness: Option<usize>,
        method: Method,
    ) -> Self {
        ResponsibilityAnswer {
            value: Some(value),
            contingency,
            preserved_witness,
            rho: 1.0 / (1.0 + value),
            method,
            set_based_t: false,
        }
    }

    pub fn not_counterfactualizable(method: Method) -> Self {
        ResponsibilityAnswer {
            value: None,
            contingency: Vec::new(),
            preserved_witness: None,
            rho: 0.0,
            method,
            set_based_t: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RspMode {
    Ilp,
    Milp,
}

/// The responsibility model with its variable bookkeeping.
pub struct RspModel {
    pub model: LinearModel,
    /// Tuple owning each of the first `tuples.len()` variables.
    pub tuples: Vec<TupleKey>,
    /// Witness index (into the WitnessSet) per witness variable, in model
    /// order after the tuple variables.
    pub t_witnesses: Vec<usize>,
}

/// Tuple variables for endogenous tuples of t-free witnesses (tracked
/// tuples; t excluded), witness indicators for t-witnesses, covering
/// constraints on t-free witnesses, tracking constraints X[w] ≥ X[u], and
/// the counterfactual constraint Σ X[w] ≤ k−1. `mode` controls which
/// variables are integral.
pub fn build_rsp_model(
    q: &Query,
    d: &Database,
    ws: &WitnessSet,
    t: &TupleKey,
    mode: RspMode,
) -> Result<RspModel, SolveError> {
    let t_wit: Vec<usize> = ws
        .tuple_index
        .get(t)
        .map(|s| s.iter().copied().collect())
        .unwrap_or_default();
    if t_wit.is_empty() {
        return Err(SolveError::TupleNotInWitness);
    }
    let in_t_witness = |i: usize| t_wit.binary_search(&i).is_ok();
    let mut model = LinearModel::default();
    let mut tuples: Vec<TupleKey> = Vec::new();
    let mut index = std::collections::HashMap::new();
    // tracked tuples: endogenous members of some t-free witness, except t
    let mut free_sets: Vec<Vec<usize>> = Vec::new();
    for (i, w) in ws.witnesses.iter().enumerate() {
        if in_t_witness(i) {
            continue;
        }
        let mut set = Vec::new();
        for u in &w.tuples {
            if u == t || d.is_exogenous(q, u) {
                continue;
            }
            let vi = *index.entry(u.clone()).or_insert_with(|| {
                tuples.push(u.clone());
                model.add_var(
                    format!("X[{}]", d.format_tuple(u)),
                    0.0,
                    1.0,
                    mode == RspMode::Ilp,
                    d.multiplicity(u) as f64,
                )
            });
            set.push(vi);
        }
        set.sort_unstable();
        set.dedup();
        free_sets.push(set);
    }
    free_sets.sort();
    free_sets.dedup();
    let keep: Vec<bool> = free_sets
        .iter()
        .map(|s| {
            !free_sets
                .iter()
                .any(|o| o != s && o.iter().all(|x| s.binary_search(x).is_ok()))
        })
        .collect();
    for (s, keep) in free_sets.iter().zip(keep) {
        if keep {
            // empty set = witness of only exogenous tuples: infeasible row
            model.add_constraint(s.iter().map(|&i| (i, 1.0)).collect(), Rel::Ge, 1.0);
        }
    }
    // witness indicators for t-witnesses
    let mut wvars = Vec::new();
    for &wi in &t_wit {
        let v = model.add_var(format!("X[w{wi}]"), 0.0, 1.0, true, 0.0);
        wvars.push(v);
        for u in &ws.witnesses[wi].tuples {
            if let Some(&ui) = index.get(u) {
                model.add_constraint(vec![(v, 1.0), (ui, -1.0)], Rel::Ge, 0.0);
            }
        }
    }
    // "strictly fewer than k destroyed": k - 1/2 equals k - 1 over integral
    // indicators, but keeps the fully-relaxed LP's fractional solutions
    // (e.g. the all-0.5 point of value 1.5) feasible
    let k = t_wit.len() as f64;
    model.add_constraint(wvars.iter().map(|&v| (v, 1.0)).collect(), Rel::Le, k - 0.5);
    Ok(RspModel { model, tuples, t_witnesses: t_wit })
}

fn answer_from(
    rm: &RspModel,
    assignment: &[f64],
    objective: f64,
    method: Method,
) -> ResponsibilityAnswer {
    let contingency: Vec<TupleKey> = rm
        .tuples
        .iter()
        .enumerate()
        .filter(|(i, _)| assignment[*i] > 0.5)
        .map(|(_, t)| t.clone())
        .collect();
    let n = rm.tuples.len();
    let preserved = rm
        .t_witnesses
        .iter()
        .enumerate()
        .find(|(j, _)| assignment[n + j] < 0.5)
        .map(|(_, &wi)| wi);
    ResponsibilityAnswer::finite(objective, contingency, preserved, method)
}

/// Exact RSP*(q,d,t) by branch-and-bound on the full ILP.
pub fn responsibility_ilp(
    q: &Query,
    d: &Database,
    t: &TupleKey,
) -> Result<ResponsibilityAnswer, SolveError> {
    if d.record(t).is_none() {
        return Err(SolveError::TupleNotFound(d.format_tuple(t)));
    }
    let ws = compute_witnesses(q, d);
    let rm = build_rsp_model(q, d, &ws, t, RspMode::Ilp)?;
    let r = solve_milp(&rm.model);
    match r.status {
        Status::Optimal => {
            let a = answer_from(&rm, &r.assignment, r.objective.round(), Method::Ilp);
            debug_assert!(query_holds(q, &d.without(&a.contingency)));
            debug_assert!({
                let mut gone = a.contingency.clone();
                gone.push(t.clone());
                !query_holds(q, &d.without(&gone))
            });
            Ok(a)
        }
        Status::Infeasible => Ok(ResponsibilityAnswer::not_counterfactualizable(Method::Ilp)),
        Status::IterationLimit => Err(SolveError::IterationLimit),
    }
}

/// MILP[RSP*] via the polynomial enumeration: for each t-witness taken as
/// preserved, fix its tracked tuples to 0 and solve one LP; answer is the
/// minimum. Always ≤ the ILP value.
pub fn responsibility_milp(
    q: &Query,
    d: &Database,
    t: &TupleKey,
) -> Result<ResponsibilityAnswer, SolveError> {
    if d.record(t).is_none() {
        return Err(SolveError::TupleNotFound(d.format_tuple(t)));
    }
    let ws = compute_witnesses(q, d);
    let rm = build_rsp_model(q, d, &ws, t, RspMode::Milp)?;
    let n = rm.tuples.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for (j, &wi) in rm.t_witnesses.iter().enumerate() {
        let mut sub = rm.model.clone();
        // preserve witness wi: its tracked tuples may not be deleted
        for u in &ws.witnesses[wi].tuples {
            if let Some(i) = rm.tuples.iter().position(|x| x == u) {
                sub.vars[i].upper = 0.0;
            }
        }
        // its indicator is 0; others are free in [0,1] and the counterfactual
        // constraint is satisfiable, so drop integrality for the LP
        sub.vars[n + j].upper = 0.0;
        for v in sub.vars.iter_mut() {
            v.integral = false;
        }
        let r = solve_lp(&sub);
        if r.status == Status::Optimal && best.as_ref().is_none_or(|(b, _)| r.objective < b - TOL)
        {
            best = Some((r.objective, r.assignment));
        }
    }
    match best {
        Some((obj, assignment)) => {
            let mut a = answer_from(&rm, &assignment, obj, Method::Lp);
            a.method = Method::Lp;
            // fractional relaxations carry no valid contingency
            let frac = assignment[..n].iter().any(|x| (x - x.round()).abs() > TOL);
            if frac {
                a.contingency.clear();
            }
            Ok(a)
        }
        None => Ok(ResponsibilityAnswer::not_counterfactualizable(Method::Lp)),
    }
}

/// Direct branch-and-bound on the mixed model; must agree with
/// [`responsibility_milp`].
pub fn responsibility_milp_direct(
    q: &Query,
    d: &Database,
    t: &TupleKey,
) -> Result<ResponsibilityAnswer, SolveError> {
    if d.record(t).is_none() {
        return Err(SolveError::TupleNotFound(d.format_tuple(t)));
    }
    let ws = compute_witnesses(q, d);
    let rm = build_rsp_model(q, d, &ws, t, RspMode::Milp)?;
    let r = solve_milp(&rm.model);
    match r.status {
        Status::Optimal => Ok(answer_from(&rm, &r.assignment, r.objective, Method::Lp)),
        Status::Infeasible => Ok(ResponsibilityAnswer::not_counterfactualizable(Method::Lp)),
        Status::IterationLimit => Err(SolveError::IterationLimit),
    }
}

/// Minimum-weight Γ (excluding t) with D−Γ ⊨ Q and D−Γ−{t} ⊭ Q, by subset
/// enumeration over endogenous unique tuples.
pub fn brute_force_responsibility(
    q: &Query,
    d: &Database,
    t: &TupleKey,
) -> Result<ResponsibilityAnswer, SolveError> {
    brute_force_responsibility_capped(q, d, t, BRUTE_FORCE_CAP)
}

pub fn brute_force_responsibility_capped(
    q: &Query,
    d: &Database,
    t: &TupleKey,
    cap: usize,
) -> Result<ResponsibilityAnswer, SolveError> {
    if d.record(t).is_none() {
        return Err(SolveError::TupleNotFound(d.format_tuple(t)));
    }
    let ws = compute_witnesses(q, d);
    let t_wit = ws.tuple_index.get(t).cloned().unwrap_or_default();
    if t_wit.is_empty() {
        return Err(SolveError::TupleNotInWitness);
    }
    let (all_tuples, all_masks, blocks) = witness_masks(q, d, &ws);
    let mut tuples = Vec::new();
    let mut masks = Vec::new();
    for (tp, m) in all_tuples.into_iter().zip(all_masks) {
        if tp != *t {
            tuples.push(tp);
            masks.push(m);
        }
    }
    let n = tuples.len();
    if n > cap {
        return Err(SolveError::CapExceeded(n, cap));
    }
    let weights: Vec<f64> = tuples.iter().map(|tp| d.multiplicity(tp) as f64).collect();
    let mut t_mask = vec![0u64; blocks];
    for &i in &t_wit {
        t_mask[i / 64] |= 1 << (i % 64);
    }
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
        let mut destroyed = vec![0u64; blocks];
        for i in 0..n {
            if mask & (1 << i) != 0 {
                for b in 0..blocks {
                    destroyed[b] |= masks[i][b];
                }
            }
        }
        // survivors = witnesses avoiding Γ; need some survivor, all with t
        let mut some_survivor = false;
        let mut all_contain_t = true;
        for b in 0..blocks {
            let surviving = full[b] & !destroyed[b];
            if surviving != 0 {
                some_survivor = true;
                if surviving & !t_mask[b] != 0 {
                    all_contain_t = false;
                }
            }
        }
        if some_survivor && all_contain_t {
            best = weight;
            best_mask = mask;
        }
    }
    if !best.is_finite() {
        return Ok(ResponsibilityAnswer::not_counterfactualizable(Method::Brute));
    }
    let contingency: Vec<TupleKey> = (0..n)
        .filter(|&i| best_mask & (1 << i) != 0)
        .map(|i| tuples[i].clone())
        .collect();
    let mut a = ResponsibilityAnswer::finite(best, contingency, None, Method::Brute);
    a.preserved_witness = None;
    Ok(a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{parse_query, Semantics};
    use crate::witness::tests::db_from;

    // 3 witnesses all sharing r11; t = s11
    fn star_instance() -> (Query, Database, TupleKey) {
        let q = parse_query("q :- R(x,y), S(x,z).").unwrap();
        let d = db_from(Semantics::Set, &["R(1,1)", "S(1,1)", "S(1,2)", "S(1,3)"]);
        let t = d.parse_tuple("S(1,1)").unwrap();
        (q, d, t)
    }

    #[test]
    fn star_model_shape() {
        let (q, d, t) = star_instance();
        let ws = compute_witnesses(&q, &d);
        let rm = build_rsp_model(&q, &d, &ws, &t, RspMode::Ilp).unwrap();
        // tracked: r11, s12, s13 (members of the two t-free witnesses); one
        // witness indicator for the single t-witness
        assert_eq!(rm.tuples.len(), 3);
        assert_eq!(rm.t_witnesses.len(), 1);
        assert_eq!(rm.model.vars.len(), 4);
    }

    #[test]
    fn star_rsp_two() {
        let (q, d, t) = star_instance();
        let a = responsibility_ilp(&q, &d, &t).unwrap();
        assert_eq!(a.value, Some(2.0));
        let names: Vec<String> = a.contingency.iter().map(|x| d.format_tuple(x)).collect();
        assert_eq!(names, vec!["S(1,2)", "S(1,3)"]);
        assert_eq!(a.rho, 1.0 / 3.0);
        assert_eq!(brute_force_responsibility(&q, &d, &t).unwrap().value, Some(2.0));
    }

    #[test]
    fn star_full_lp_relaxation_is_half() {
        // fully relaxing every variable admits the all-0.5 point of value 1.5;
        // the enumerated-LP MILP recovers the true value 2
        let (q, d, t) = star_instance();
        let ws = compute_witnesses(&q, &d);
        let rm = build_rsp_model(&q, &d, &ws, &t, RspMode::Milp).unwrap();
        let mut relaxed = rm.model.clone();
        for v in relaxed.vars.iter_mut() {
            v.integral = false;
        }
        let r = solve_lp(&relaxed);
        assert!((r.objective - 1.5).abs() < 1e-6);
        let milp = responsibility_milp(&q, &d, &t).unwrap();
        assert_eq!(milp.value, Some(2.0));
        let direct = responsibility_milp_direct(&q, &d, &t).unwrap();
        assert_eq!(direct.value, Some(2.0));
    }

    #[test]
    fn not_counterfactualizable() {
        // witnesses {{r11},{r11,r12}}: r12 can never be made counterfactual
        let q = parse_query("q :- R(x,y), R(y,z).").unwrap();
        let d = db_from(Semantics::Set, &["R(1,1)", "R(1,2)"]);
        let ws = compute_witnesses(&q, &d);
        assert_eq!(ws.len(), 2);
        let t = d.parse_tuple("R(1,2)").unwrap();
        let a = responsibility_ilp(&q, &d, &t).unwrap();
        assert_eq!(a.value, None);
        assert_eq!(a.rho, 0.0);
        assert_eq!(brute_force_responsibility(&q, &d, &t).unwrap().value, None);
        assert_eq!(responsibility_milp(&q, &d, &t).unwrap().value, None);
    }

    #[test]
    fn already_counterfactual() {
        let q = parse_query("q :- R(x,y), S(y,z).").unwrap();
        let d = db_from(Semantics::Set, &["R(1,2)", "S(2,3)"]);
        let t = d.parse_tuple("R(1,2)").unwrap();
        let a = responsibility_ilp(&q, &d, &t).unwrap();
        assert_eq!(a.value, Some(0.0));
        assert!(a.contingency.is_empty());
        assert_eq!(a.rho, 1.0);
        assert_eq!(brute_force_responsibility(&q, &d, &t).unwrap().value, Some(0.0));
    }

    #[test]
    fn tuple_not_in_witness() {
        let q = parse_query("q :- R(x,y), S(y,z).").unwrap();
        let d = db_from(Semantics::Set, &["R(1,2)", "S(2,3)", "R(7,8)"]);
        let t = d.parse_tuple("R(7,8)").unwrap();
        assert!(matches!(responsibility_ilp(&q, &d, &t), Err(SolveError::TupleNotInWitness)));
        let missing = TupleKey { relation: "R".into(), constants: vec![99, 99] };
        assert!(matches!(
            responsibility_ilp(&q, &d, &missing),
            Err(SolveError::TupleNotFound(_))
        ));
    }

    #[test]
    fn t_in_every_witness() {
        let q = parse_query("q :- R(x,y), S(y,z).").unwrap();
        let d = db_from(Semantics::Set, &["R(1,2)", "S(2,3)", "S(2,4)"]);
        let t = d.parse_tuple("R(1,2)").unwrap();
        let ws = compute_witnesses(&q, &d);
        let rm = build_rsp_model(&q, &d, &ws, &t, RspMode::Ilp).unwrap();
        // no tracked tuples, just indicators and the counterfactual row
        assert_eq!(rm.tuples.len(), 0);
        assert_eq!(rm.t_witnesses.len(), 2);
        let a = responsibility_ilp(&q, &d, &t).unwrap();
        assert_eq!(a.value, Some(0.0));
    }

    #[test]
    fn milp_lower_bounds_ilp_random() {
        use rand::prelude::*;
        let q = parse_query("q :- R(x,y), S(y,z), T(z,x).").unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut tested = 0;
        while tested < 40 {
            let mut d = Database::new(Semantics::Set);
            for i in 0..4 {
                d.interner.intern(&i.to_string());
            }
            for rel in ["R", "S", "T"] {
                d.ensure_relation(rel);
                for _ in 0..rng.gen_range(2..5) {
                    let c = vec![rng.gen_range(0..4), rng.gen_range(0..4)];
                    let _ = d.insert(rel, c, 1, false);
                }
            }
            let ws = compute_witnesses(&q, &d);
            if ws.is_empty() {
                continue;
            }
            let t = ws.witnesses[0].tuples[0].clone();
            let ilp = responsibility_ilp(&q, &d, &t).unwrap();
            let milp = responsibility_milp(&q, &d, &t).unwrap();
            let direct = responsibility_milp_direct(&q, &d, &t).unwrap();
            match (milp.value, direct.value) {
                (Some(a), Some(b)) => assert!((a - b).abs() < 1e-6),
                (a, b) => assert_eq!(a.is_none(), b.is_none()),
            }
            match (milp.value, ilp.value) {
                (Some(m), Some(i)) => assert!(m <= i + 1e-6),
                (None, x) => assert!(x.is_none()),
                _ => {}
            }
            let brute = brute_force_responsibility(&q, &d, &t).unwrap();
            assert_eq!(brute.value, ilp.value);
            tested += 1;
        }
    }

    #[test]
    fn rsp_reduces_to_res_with_fresh_witness() {
        // add one disjoint witness; responsibility of its tuples = resilience
        // of the original database
        use crate::resilience::resilience_ilp;
        let q = parse_query("q :- R(x,y), S(y,z).").unwrap();
        let d = db_from(Semantics::Set, &["R(1,2)", "S(2,3)", "S(2,4)", "R(5,2)"]);
        let res = resilience_ilp(&q, &d).unwrap().value;
        let mut d2 = d.clone();
        d2.insert_named("R", &["90", "91"], 1, false).unwrap();
        d2.insert_named("S", &["91", "92"], 1, false).unwrap();
        let t = d2.parse_tuple("R(90,91)").unwrap();
        let a = responsibility_ilp(&q, &d2, &t).unwrap();
        assert_eq!(a.value, Some(res));
    }
}
