//! Structural query analysis: domination, solitary variables, triads, the
//! four complexity dichotomies, linear orderings, and minimal dissociations.

use std::collections::{BTreeSet, HashSet};

use serde::Serialize;

use crate::model::{Query, Semantics};
use crate::resilience::SolveError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TriadStatus {
    Active,
    Deactivated,
    FullyDeactivated,
}

#[derive(Debug, Clone, Serialize)]
pub struct TriadReport {
    pub atoms: [usize; 3],
    pub status: TriadStatus,
    /// For each pair (i,j) of the triple, one connecting path (atom indices)
    /// avoiding the third atom's variables.
    pub witnesses_of_paths: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Problem {
    Res,
    Rsp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Ptime,
    Npc,
    Unknown,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComplexityVerdict {
    pub problem: Problem,
    pub semantics: Semantics,
    pub verdict: Verdict,
    pub reason: String,
}

/// Endogenous atom indices of the query.
fn endogenous_atoms(q: &Query) -> Vec<usize> {
    (0..q.atoms.len()).filter(|&i| !q.atoms[i].exogenous).collect()
}

/// Strict domination: var(a) ⊊ var(b). Defined over endogenous atoms.
pub fn dominates(q: &Query, a: usize, b: usize) -> bool {
    if a == b {
        return false;
    }
    let va = q.atoms[a].var_set();
    let vb = q.atoms[b].var_set();
    va.is_subset(&vb) && va != vb
}

/// Path search on the variable graph: nodes are variables, adjacent when
/// co-occurring in an endogenous atom not banned. Returns an atom path from
/// `from_vars` to any variable of `to_atom`, avoiding `banned_vars` strictly
/// inside the path.
fn var_reach(
    q: &Query,
    start: &HashSet<&str>,
    target: &HashSet<&str>,
    banned_vars: &HashSet<&str>,
    banned_atoms: &HashSet<usize>,
) -> Option<Vec<usize>> {
    // BFS over atoms; entering an atom requires a shared non-banned variable
    let endo = endogenous_atoms(q);
    if start.iter().any(|v| target.contains(v) && !banned_vars.contains(v)) {
        return Some(Vec::new());
    }
    let mut frontier: Vec<(usize, Vec<usize>)> = Vec::new();
    let mut seen = HashSet::new();
    for &i in &endo {
        if banned_atoms.contains(&i) {
            continue;
        }
        if q.atoms[i].vars.iter().any(|v| start.contains(v.as_str()) && !banned_vars.contains(v.as_str()))
        {
            frontier.push((i, vec![i]));
            seen.insert(i);
        }
    }
    while let Some((i, path)) = frontier.pop() {
        let reach: HashSet<&str> = q.atoms[i]
            .vars
            .iter()
            .map(|v| v.as_str())
            .filter(|v| !banned_vars.contains(v))
            .collect();
        if reach.iter().any(|v| target.contains(v)) {
            return Some(path);
        }
        for &j in &endo {
            if seen.contains(&j) || banned_atoms.contains(&j) {
                continue;
            }
            if q.atoms[j].vars.iter().any(|v| reach.contains(v.as_str())) {
                seen.insert(j);
                let mut p = path.clone();
                p.push(j);
                frontier.push((j, p));
            }
        }
    }
    None
}

/// Variables of atom `a` from which no other endogenous atom is reachable
/// without passing through another variable of `a`.
pub fn solitary_variables(q: &Query, a: usize) -> BTreeSet<String> {
    let va = q.atoms[a].var_set();
    let endo = endogenous_atoms(q);
    let mut out = BTreeSet::new();
    for v in &q.atoms[a].vars {
        let banned: HashSet<&str> =
            va.iter().copied().filter(|x| *x != v.as_str()).collect();
        let start: HashSet<&str> = [v.as_str()].into_iter().collect();
        let mut solitary = true;
        for &b in &endo {
            if b == a {
                continue;
            }
            let target = q.atoms[b].var_set();
            // path from v to atom b avoiding var(a) - v; reaching any var of
            // b while standing inside b counts, so ban atom a itself as an
            // intermediate but allow direct sharing
            if target.contains(v.as_str())
                || var_reach(q, &start, &target, &banned, &[a].into_iter().collect()).is_some()
            {
                solitary = false;
                break;
            }
        }
        if solitary {
            out.insert(v.clone());
        }
    }
    out
}

/// Every non-solitary variable of `a` is covered by some dominating atom.
pub fn fully_dominated(q: &Query, a: usize) -> bool {
    let solitary = solitary_variables(q, a);
    let va = q.atoms[a].var_set();
    q.atoms[a].vars.iter().all(|y| {
        solitary.contains(y)
            || (0..q.atoms.len()).any(|b| {
                !q.atoms[b].exogenous
                    && q.atoms[b].var_set().contains(y.as_str())
                    && {
                        let vb = q.atoms[b].var_set();
                        vb.is_subset(&va) && vb != va
                    }
            })
    })
}

/// Whether some endogenous atom dominates atom `a`.
pub fn is_dominated(q: &Query, a: usize) -> bool {
    (0..q.atoms.len()).any(|b| !q.atoms[b].exogenous && dominates(q, b, a))
}

/// All triads of an SJ-free query: atom triples pairwise connected by paths
/// avoiding the third atom's variables, labeled active / deactivated /
/// fully_deactivated by the domination status of their members.
pub fn enumerate_triads(q: &Query) -> Result<Vec<TriadReport>, SolveError> {
    if !q.is_self_join_free() {
        return Err(SolveError::SelfJoin);
    }
    let endo = endogenous_atoms(q);
    let mut out = Vec::new();
    for (i, &a) in endo.iter().enumerate() {
        for (j, &b) in endo.iter().enumerate().skip(i + 1) {
            for &c in endo.iter().skip(j + 1) {
                let mut paths = Vec::new();
                let mut ok = true;
                for (x, y, z) in [(a, b, c), (a, c, b), (b, c, a)] {
                    let banned: HashSet<&str> = q.atoms[z].var_set();
                    let start: HashSet<&str> = q.atoms[x]
                        .var_set()
                        .into_iter()
                        .filter(|v| !banned.contains(v))
                        .collect();
                    let target: HashSet<&str> = q.atoms[y]
                        .var_set()
                        .into_iter()
                        .filter(|v| !banned.contains(v))
                        .collect();
                    if start.is_empty() || target.is_empty() {
                        ok = false;
                        break;
                    }
                    match var_reach(q, &start, &target, &banned, &HashSet::new()) {
                        Some(p) => paths.push(p),
                        None => {
                            ok = false;
                            break;
                        }
                    }
                }
                if !ok {
                    continue;
                }
                let members = [a, b, c];
                let status = if members.iter().any(|&m| fully_dominated(q, m)) {
                    TriadStatus::FullyDeactivated
                } else if members.iter().any(|&m| is_dominated(q, m)) {
                    TriadStatus::Deactivated
                } else {
                    TriadStatus::Active
                };
                out.push(TriadReport { atoms: members, status, witnesses_of_paths: paths });
            }
        }
    }
    Ok(out)
}

/// RES dichotomy. Set: PTIME iff no active triad. Bag: PTIME iff no triad.
/// Self-join queries get `unknown`.
pub fn classify_res(q: &Query, semantics: Semantics) -> ComplexityVerdict {
    let triads = match enumerate_triads(q) {
        Ok(t) => t,
        Err(_) => {
            return ComplexityVerdict {
                problem: Problem::Res,
                semantics,
                verdict: Verdict::Unknown,
                reason: "self-join query: dichotomy not stated, use IJP search".into(),
            }
        }
    };
    let (verdict, reason) = match semantics {
        Semantics::Set => match triads.iter().find(|t| t.status == TriadStatus::Active) {
            Some(t) => (Verdict::Npc, format!("active triad on atoms {:?}", t.atoms)),
            None if triads.is_empty() => (Verdict::Ptime, "linear query (no triads)".into()),
            None => (Verdict::Ptime, "all triads deactivated".into()),
        },
        Semantics::Bag => match triads.first() {
            Some(t) => (Verdict::Npc, format!("triad on atoms {:?} (bag semantics)", t.atoms)),
            None => (Verdict::Ptime, "linear query (no triads)".into()),
        },
    };
    ComplexityVerdict { problem: Problem::Res, semantics, verdict, reason }
}

/// RSP dichotomy for tuples of `t_relation`. Set: PTIME iff no active triad
/// and every not-fully-deactivated triad has a member dominated by t's atom.
/// Bag: PTIME iff no triad.
pub fn classify_rsp(q: &Query, semantics: Semantics, t_relation: &str) -> ComplexityVerdict {
    let t_atom = match q.atoms.iter().position(|a| a.relation == t_relation) {
        Some(i) => i,
        None => {
            return ComplexityVerdict {
                problem: Problem::Rsp,
                semantics,
                verdict: Verdict::Unknown,
                reason: format!("relation {t_relation} not in query"),
            }
        }
    };
    let triads = match enumerate_triads(q) {
        Ok(t) => t,
        Err(_) => {
            return ComplexityVerdict {
                problem: Problem::Rsp,
                semantics,
                verdict: Verdict::Unknown,
                reason: "self-join query: dichotomy not stated, use IJP search".into(),
            }
        }
    };
    let (verdict, reason) = match semantics {
        Semantics::Bag => match triads.first() {
            Some(t) => (Verdict::Npc, format!("triad on atoms {:?} (bag semantics)", t.atoms)),
            None => (Verdict::Ptime, "linear query (no triads)".into()),
        },
        Semantics::Set => {
            if let Some(t) = triads.iter().find(|t| t.status == TriadStatus::Active) {
                (Verdict::Npc, format!("active triad on atoms {:?}", t.atoms))
            } else if let Some(t) = triads.iter().find(|t| {
                t.status != TriadStatus::FullyDeactivated
                    && !t.atoms.iter().any(|&m| dominates(q, t_atom, m))
            }) {
                (
                    Verdict::Npc,
                    format!(
                        "triad on atoms {:?} neither fully deactivated nor dominated by {}",
                        t.atoms, t_relation
                    ),
                )
            } else if triads.is_empty() {
                (Verdict::Ptime, "linear query (no triads)".into())
            } else {
                (
                    Verdict::Ptime,
                    format!("all triads fully deactivated or dominated by {t_relation}"),
                )
            }
        }
    };
    ComplexityVerdict { problem: Problem::Rsp, semantics, verdict, reason }
}

fn running_intersection(q: &Query, order: &[usize]) -> bool {
    // every variable's atoms occupy contiguous positions
    for v in q.variables() {
        let positions: Vec<usize> = order
            .iter()
            .enumerate()
            .filter(|(_, &a)| q.atoms[a].var_set().contains(v))
            .map(|(p, _)| p)
            .collect();
        if let (Some(&lo), Some(&hi)) = (positions.first(), positions.last()) {
            if hi - lo + 1 != positions.len() {
                return false;
            }
        }
    }
    true
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    use itertools::Itertools;
    (0..n).permutations(n).collect()
}

/// All atom orderings (modulo reversal) with the running intersection
/// property; empty iff the query is not linear.
pub fn linear_orderings(q: &Query) -> Vec<Vec<usize>> {
    let n = q.atoms.len();
    let mut out = Vec::new();
    for p in permutations(n) {
        if p.first() > p.last() {
            continue; // reversal representative
        }
        if running_intersection(q, &p) {
            out.push(p);
        }
    }
    out
}

/// For each atom ordering (modulo reversal), the inclusion-minimal variable
/// additions making it satisfy running intersection: each variable is added
/// to every atom strictly between its first and last occurrence. Results are
/// deduplicated up to equivalence of the resulting per-atom variable sets.
pub fn minimal_dissociations(q: &Query) -> Vec<(Vec<usize>, Vec<BTreeSet<String>>)> {
    let n = q.atoms.len();
    let mut seen: HashSet<Vec<BTreeSet<String>>> = HashSet::new();
    let mut out = Vec::new();
    for p in permutations(n) {
        if p.first() > p.last() {
            continue;
        }
        // added[k] = variables joined into the atom at position k
        let mut added: Vec<BTreeSet<String>> = vec![BTreeSet::new(); n];
        for v in q.variables() {
            let positions: Vec<usize> = (0..n)
                .filter(|&k| q.atoms[p[k]].var_set().contains(v))
                .collect();
            if let (Some(&lo), Some(&hi)) = (positions.first(), positions.last()) {
                for k in lo + 1..hi {
                    if !q.atoms[p[k]].var_set().contains(v) {
                        added[k].insert(v.to_string());
                    }
                }
            }
        }
        // signature: the multiset of resulting atom variable sets, keyed by
        // atom index so symmetric orderings collapse
        let mut sig: Vec<BTreeSet<String>> = vec![BTreeSet::new(); n];
        for (k, &a) in p.iter().enumerate() {
            let mut s: BTreeSet<String> =
                q.atoms[a].vars.iter().cloned().collect();
            s.extend(added[k].iter().cloned());
            sig[a] = s;
        }
        if seen.insert(sig) {
            let per_atom: Vec<BTreeSet<String>> = (0..n)
                .map(|a| {
                    let k = p.iter().position(|&x| x == a).unwrap();
                    added[k].clone()
                })
                .collect();
            out.push((p, per_atom));
        }
    }
    out
}

/// Applies a dissociation to the query: extends each atom's variable list.
pub fn apply_dissociation(q: &Query, added: &[BTreeSet<String>]) -> Query {
    let mut atoms = q.atoms.clone();
    for (a, extra) in atoms.iter_mut().zip(added) {
        for v in extra {
            if !a.vars.contains(v) {
                a.vars.push(v.clone());
            }
        }
    }
    Query { name: q.name.clone(), atoms }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_query;

    fn q_triangle() -> Query {
        parse_query("qt :- R(x,y), S(y,z), T(z,x).").unwrap()
    }
    fn q_a_triangle() -> Query {
        parse_query("qa :- A(x), R(x,y), S(y,z), T(z,x).").unwrap()
    }
    fn q_ab_triangle() -> Query {
        parse_query("qab :- A(x), B(z), R(x,y), S(y,z), T(z,x).").unwrap()
    }
    fn q_2we() -> Query {
        parse_query("q2we :- A(x), R(x,y), S(y,z), B(z).").unwrap()
    }
    fn q_3star() -> Query {
        parse_query("q3s :- R(x), S(y), T(z), W(x,y,z).").unwrap()
    }

    #[test]
    fn domination_examples() {
        let q = q_a_triangle();
        assert!(dominates(&q, 0, 1)); // A(x) ⊊ R(x,y)
        assert!(dominates(&q, 0, 3)); // A(x) ⊊ T(z,x)
        assert!(!dominates(&q, 0, 2)); // A(x) vs S(y,z)
        assert!(!dominates(&q, 1, 2));
        assert!(!dominates(&q, 1, 1));
    }

    #[test]
    fn solitary_examples() {
        let q = q_2we();
        // in A(x), x reaches R directly: non-solitary
        assert!(!solitary_variables(&q, 0).contains("x"));
        // single-atom query: both variables solitary
        let q1 = parse_query("q :- R(x,y).").unwrap();
        assert_eq!(solitary_variables(&q1, 0).len(), 2);
        // Q_AB△ atom T(z,x): both non-solitary
        let qab = q_ab_triangle();
        let t = qab.atoms.iter().position(|a| a.relation == "T").unwrap();
        assert!(solitary_variables(&qab, t).is_empty());
    }

    #[test]
    fn full_domination_examples() {
        let qab = q_ab_triangle();
        let t = qab.atoms.iter().position(|a| a.relation == "T").unwrap();
        assert!(fully_dominated(&qab, t));
        let qa = q_a_triangle();
        let t = qa.atoms.iter().position(|a| a.relation == "T").unwrap();
        assert!(!fully_dominated(&qa, t)); // z not covered
        let q2 = parse_query("q :- R(x,y), S(y,z).").unwrap();
        assert!(!fully_dominated(&q2, 0));
    }

    #[test]
    fn triad_examples() {
        let tri = enumerate_triads(&q_triangle()).unwrap();
        assert_eq!(tri.len(), 1);
        assert_eq!(tri[0].status, TriadStatus::Active);

        let tri = enumerate_triads(&q_a_triangle()).unwrap();
        assert_eq!(tri.len(), 1);
        assert_eq!(tri[0].status, TriadStatus::Deactivated);

        let tri = enumerate_triads(&q_ab_triangle()).unwrap();
        assert_eq!(tri.len(), 1);
        assert_eq!(tri[0].status, TriadStatus::FullyDeactivated);

        assert!(enumerate_triads(&q_2we()).unwrap().is_empty());

        let tri = enumerate_triads(&q_3star()).unwrap();
        assert_eq!(tri.len(), 1);
        assert_eq!(tri[0].status, TriadStatus::Active);

        let sj = parse_query("q :- R(x,y), R(y,z).").unwrap();
        assert!(enumerate_triads(&sj).is_err());
    }

    #[test]
    fn res_classifier() {
        assert_eq!(classify_res(&q_a_triangle(), Semantics::Set).verdict, Verdict::Ptime);
        assert_eq!(classify_res(&q_a_triangle(), Semantics::Bag).verdict, Verdict::Npc);
        assert_eq!(classify_res(&q_3star(), Semantics::Set).verdict, Verdict::Npc);
        assert_eq!(classify_res(&q_2we(), Semantics::Set).verdict, Verdict::Ptime);
        assert_eq!(classify_res(&q_2we(), Semantics::Bag).verdict, Verdict::Ptime);
        let sj = parse_query("q :- R(x,y), R(y,z).").unwrap();
        assert_eq!(classify_res(&sj, Semantics::Set).verdict, Verdict::Unknown);
    }

    #[test]
    fn rsp_classifier() {
        let qa = q_a_triangle();
        assert_eq!(classify_rsp(&qa, Semantics::Set, "A").verdict, Verdict::Ptime);
        assert_eq!(classify_rsp(&qa, Semantics::Set, "R").verdict, Verdict::Npc);
        assert_eq!(classify_rsp(&qa, Semantics::Bag, "A").verdict, Verdict::Npc);
        let qab = q_ab_triangle();
        for rel in ["A", "B", "R", "S", "T"] {
            assert_eq!(classify_rsp(&qab, Semantics::Set, rel).verdict, Verdict::Ptime, "{rel}");
            assert_eq!(classify_rsp(&qab, Semantics::Bag, rel).verdict, Verdict::Npc, "{rel}");
        }
    }

    #[test]
    fn orderings() {
        let q2 = parse_query("q :- R(x,y), S(y,z).").unwrap();
        assert_eq!(linear_orderings(&q2), vec![vec![0, 1]]);
        assert!(linear_orderings(&q_triangle()).is_empty());
        let q5 = parse_query("q :- R(x1,x2), S(x2,x3), T(x3,x4), U(x4,x5), V(x5,x6).").unwrap();
        assert_eq!(linear_orderings(&q5), vec![vec![0, 1, 2, 3, 4]]);
    }

    #[test]
    fn linearity_iff_no_triads_random() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        let rels = ["R0", "R1", "R2", "R3", "R4"];
        let vars = ["a", "b", "c", "d", "e"];
        let mut checked = 0;
        while checked < 300 {
            let n = rng.gen_range(2..=4);
            let mut atoms = Vec::new();
            for (i, rel) in rels.iter().enumerate().take(n) {
                let arity = rng.gen_range(1..=3);
                let mut vs: Vec<String> = Vec::new();
                while vs.len() < arity {
                    let v = vars[rng.gen_range(0..vars.len())].to_string();
                    if !vs.contains(&v) {
                        vs.push(v);
                    }
                }
                atoms.push(crate::model::Atom {
                    relation: rel.to_string(),
                    vars: vs,
                    exogenous: false,
                });
                let _ = i;
            }
            let Ok(q) = Query::new("q", atoms) else { continue };
            let triads = enumerate_triads(&q).unwrap();
            let linear = !linear_orderings(&q).is_empty();
            assert_eq!(linear, triads.is_empty(), "query {}", q.render());
            checked += 1;
        }
    }

    #[test]
    fn domination_is_strict_partial_order() {
        for q in [q_a_triangle(), q_ab_triangle(), q_2we(), q_3star()] {
            let n = q.atoms.len();
            for a in 0..n {
                assert!(!dominates(&q, a, a));
                for b in 0..n {
                    for c in 0..n {
                        if dominates(&q, a, b) && dominates(&q, b, c) {
                            assert!(dominates(&q, a, c));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn triangle_dissociations() {
        let diss = minimal_dissociations(&q_triangle());
        assert_eq!(diss.len(), 3);
        for (p, added) in &diss {
            let total: usize = added.iter().map(|s| s.len()).sum();
            assert_eq!(total, 1, "ordering {p:?} adds exactly one variable");
            let q2 = apply_dissociation(&q_triangle(), added);
            assert!(!linear_orderings(&q2).is_empty());
        }
    }

    #[test]
    fn chain_dissociation_trivial() {
        let q2 = parse_query("q :- R(x,y), S(y,z).").unwrap();
        let diss = minimal_dissociations(&q2);
        assert_eq!(diss.len(), 1);
        assert!(diss[0].1.iter().all(|s| s.is_empty()));
    }

    #[test]
    fn star_dissociations_extend_unary_atoms() {
        let diss = minimal_dissociations(&q_3star());
        assert!(!diss.is_empty());
        for (_, added) in &diss {
            let q2 = apply_dissociation(&q_3star(), added);
            assert!(!linear_orderings(&q2).is_empty());
            // additions hit only the unary atoms (W already has all vars)
            assert!(added[3].is_empty());
        }
    }
}
