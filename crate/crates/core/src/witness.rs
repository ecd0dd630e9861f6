//! Query evaluation: witness computation via hash joins, plus the P4
//! unbalance check for instance-level LP integrality.

use std::collections::{BTreeSet, HashMap, HashSet};

use crate::model::{ConstId, Database, Query, TupleKey};

/// One satisfying valuation with the set of unique tuples it uses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Witness {
    /// Constants in query-variable first-occurrence order.
    pub valuation: Vec<ConstId>,
    /// Sorted, deduplicated tuple identifiers instantiating the atoms.
    pub tuples: Vec<TupleKey>,
}

#[derive(Debug, Clone, Default)]
pub struct WitnessSet {
    pub witnesses: Vec<Witness>,
    /// Inverse incidence: tuple -> indices of witnesses using it.
    pub tuple_index: HashMap<TupleKey, BTreeSet<usize>>,
}

impl WitnessSet {
    pub fn len(&self) -> usize {
        self.witnesses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.witnesses.is_empty()
    }
}

/// Greedy join order: start from the smallest relation, then repeatedly take
/// the smallest-relation atom connected to the atoms joined so far.
fn join_order(q: &Query, d: &Database) -> Vec<usize> {
    let size = |i: usize| d.relations.get(&q.atoms[i].relation).map_or(0, |r| r.len());
    let n = q.atoms.len();
    let mut order = Vec::with_capacity(n);
    let mut used = vec![false; n];
    let mut bound: HashSet<&str> = HashSet::new();
    for _ in 0..n {
        let next = (0..n)
            .filter(|&i| !used[i])
            .filter(|&i| {
                order.is_empty() || q.atoms[i].vars.iter().any(|v| bound.contains(v.as_str()))
            })
            .min_by_key(|&i| size(i))
            .expect("connected query always has a joinable atom");
        used[next] = true;
        bound.extend(q.atoms[next].vars.iter().map(|v| v.as_str()));
        order.push(next);
    }
    order
}

fn evaluate(q: &Query, d: &Database, first_only: bool) -> Vec<Vec<ConstId>> {
    let vars = q.variables();
    let var_pos: HashMap<&str, usize> = vars.iter().enumerate().map(|(i, v)| (*v, i)).collect();
    let order = join_order(q, d);

    // partial valuations over the full variable vector, None = unbound
    let mut partials: Vec<Vec<Option<ConstId>>> = vec![vec![None; vars.len()]];
    let mut results = Vec::new();
    let mut bound: HashSet<usize> = HashSet::new();

    for (step, &ai) in order.iter().enumerate() {
        let atom = &q.atoms[ai];
        let rows = match d.relations.get(&atom.relation) {
            Some(r) if !r.is_empty() => r,
            _ => return Vec::new(),
        };
        let positions: Vec<usize> = atom.vars.iter().map(|v| var_pos[v.as_str()]).collect();
        // columns of the atom whose variable is already bound form the join key
        let key_cols: Vec<usize> =
            (0..positions.len()).filter(|&c| bound.contains(&positions[c])).collect();
        let mut index: HashMap<Vec<ConstId>, Vec<&[ConstId]>> = HashMap::new();
        for r in rows {
            // a self-join of one variable within the atom must bind consistently
            let mut consistent = true;
            for (c1, &p1) in positions.iter().enumerate() {
                for (c2, &p2) in positions.iter().enumerate().skip(c1 + 1) {
                    if p1 == p2 && r.constants[c1] != r.constants[c2] {
                        consistent = false;
                    }
                }
            }
            if !consistent {
                continue;
            }
            let key: Vec<ConstId> = key_cols.iter().map(|&c| r.constants[c]).collect();
            index.entry(key).or_default().push(&r.constants);
        }
        let mut next = Vec::new();
        for p in &partials {
            let key: Vec<ConstId> =
                key_cols.iter().map(|&c| p[positions[c]].unwrap()).collect();
            if let Some(matches) = index.get(&key) {
                for row in matches {
                    let mut q2 = p.clone();
                    for (c, &pos) in positions.iter().enumerate() {
                        q2[pos] = Some(row[c]);
                    }
                    if step + 1 == order.len() {
                        results.push(q2.iter().map(|v| v.unwrap()).collect());
                        if first_only {
                            return results;
                        }
                    } else {
                        next.push(q2);
                    }
                }
            }
        }
        if step + 1 < order.len() {
            if next.is_empty() {
                return Vec::new();
            }
            partials = next;
        }
        bound.extend(positions.iter().copied());
    }
    results
}

/// Computes the exact witness set of `q` on `d`. Witness order is
/// canonicalized (sorted valuations) for determinism; multiplicities do not
/// multiply witnesses.
pub fn compute_witnesses(q: &Query, d: &Database) -> WitnessSet {
    let vars = q.variables();
    let var_pos: HashMap<&str, usize> = vars.iter().enumerate().map(|(i, v)| (*v, i)).collect();
    let mut vals = evaluate(q, d, false);
    vals.sort();
    vals.dedup();
    let mut ws = WitnessSet::default();
    for valuation in vals {
        let mut tuples: Vec<TupleKey> = q
            .atoms
            .iter()
            .map(|a| TupleKey {
                relation: a.relation.clone(),
                constants: a.vars.iter().map(|v| valuation[var_pos[v.as_str()]]).collect(),
            })
            .collect();
        tuples.sort();
        tuples.dedup();
        let idx = ws.witnesses.len();
        for t in &tuples {
            ws.tuple_index.entry(t.clone()).or_default().insert(idx);
        }
        ws.witnesses.push(Witness { valuation, tuples });
    }
    ws
}

/// `D |= Q`, with early exit at the first satisfying valuation.
pub fn query_holds(q: &Query, d: &Database) -> bool {
    !evaluate(q, d, true).is_empty()
}

/// Detects the P4 unbalance pattern over endogenous tuples: witnesses
/// w1,w2,w3 and tuples t1 ∈ w1∩w2 \ w3, t2 ∈ w2∩w3 \ w1. When absent, the
/// resilience LP constraint matrix is balanced and its optimum integral.
pub fn has_p4_pattern(q: &Query, d: &Database, ws: &WitnessSet) -> bool {
    let sets: Vec<&BTreeSet<usize>> = ws
        .tuple_index
        .iter()
        .filter(|(t, _)| !d.is_exogenous(q, t))
        .map(|(_, s)| s)
        .collect();
    for (i, a) in sets.iter().enumerate() {
        for b in sets.iter().skip(i + 1) {
            if a.intersection(b).next().is_some()
                && a.difference(b).next().is_some()
                && b.difference(a).next().is_some()
            {
                return true;
            }
        }
    }
    false
}

/// Witness dump: CSV with one column per variable plus a `tuples` column of
/// `Rel(c1,...)` joined by `;`.
pub fn dump_witnesses(q: &Query, d: &Database, ws: &WitnessSet) -> String {
    let vars = q.variables();
    let mut out = String::new();
    out.push_str(&vars.join(","));
    out.push_str(",tuples\n");
    for w in &ws.witnesses {
        let consts: Vec<&str> = w.valuation.iter().map(|&c| d.interner.name(c)).collect();
        out.push_str(&consts.join(","));
        out.push(',');
        let ts: Vec<String> = w.tuples.iter().map(|t| d.format_tuple(t)).collect();
        out.push_str(&ts.join(";"));
        out.push('\n');
    }
    out
}
