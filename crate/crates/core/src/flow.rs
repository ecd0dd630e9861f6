//! Flow-graph encodings of resilience/responsibility for linear queries,
//! with Dinic max-flow / min-cut.

use std::collections::HashMap;

use crate::analysis::{is_dominated, linear_orderings};
use crate::model::{ConstId, Database, Query, Semantics, TupleKey};
use crate::resilience::{Method, ResilienceAnswer, SolveError};
use crate::responsibility::ResponsibilityAnswer;
use crate::witness::{compute_witnesses, query_holds, WitnessSet};

#[derive(Debug, Clone)]
struct Edge {
    to: usize,
    rev: usize,
    cap: i64,
}

/// A directed flow network; finite-capacity edges carry the tuple they
/// encode, so cuts map back to contingency sets.
#[derive(Debug, Clone)]
pub struct FlowNetwork {
    pub node_labels: Vec<String>,
    pub source: usize,
    pub sink: usize,
    adj: Vec<Vec<Edge>>,
    /// (node, edge slot) -> tuple for forward tuple edges.
    tuple_edges: Vec<(usize, usize, TupleKey)>,
    pub infinity: i64,
}

impl FlowNetwork {
    pub fn new() -> Self {
        FlowNetwork {
            node_labels: vec!["source".into(), "sink".into()],
            source: 0,
            sink: 1,
            adj: vec![Vec::new(), Vec::new()],
            tuple_edges: Vec::new(),
            infinity: 0,
        }
    }

    pub fn add_node(&mut self, label: String) -> usize {
        self.node_labels.push(label);
        self.adj.push(Vec::new());
        self.node_labels.len() - 1
    }

    pub fn add_edge(&mut self, from: usize, to: usize, cap: i64, tuple: Option<TupleKey>) {
        let slot = self.adj[from].len();
        let rev = self.adj[to].len();
        self.adj[from].push(Edge { to, rev, cap });
        self.adj[to].push(Edge { to: from, rev: slot, cap: 0 });
        if let Some(t) = tuple {
            self.tuple_edges.push((from, slot, t));
        }
    }

    /// Sets the capacity of every forward edge carrying `tuple`.
    pub fn set_tuple_capacity(&mut self, tuple: &TupleKey, cap: i64) {
        for (n, s, t) in self.tuple_edges.clone() {
            if t == *tuple {
                self.adj[n][s].cap = cap;
            }
        }
    }

    /// Number of distinct source→sink paths (the graph is a DAG by
    /// construction: nodes are layered by atom position).
    pub fn count_paths(&self) -> u64 {
        let n = self.adj.len();
        let mut memo: Vec<Option<u64>> = vec![None; n];
        fn go(g: &FlowNetwork, u: usize, memo: &mut Vec<Option<u64>>) -> u64 {
            if u == g.sink {
                return 1;
            }
            if let Some(v) = memo[u] {
                return v;
            }
            let mut total = 0;
            for e in &g.adj[u] {
                if e.cap > 0 {
                    total += go(g, e.to, memo);
                }
            }
            memo[u] = Some(total);
            total
        }
        go(self, self.source, &mut memo)
    }

    /// Plain-text edge list `u v cap [tuple]` for external visualization.
    pub fn dump(&self, d: &Database) -> String {
        let mut out = String::new();
        for (u, edges) in self.adj.iter().enumerate() {
            for (s, e) in edges.iter().enumerate() {
                if e.cap > 0 {
                    let tuple = self
                        .tuple_edges
                        .iter()
                        .find(|(n, slot, _)| *n == u && *slot == s)
                        .map(|(_, _, t)| format!(" {}", d.format_tuple(t)))
                        .unwrap_or_default();
                    out.push_str(&format!(
                        "{} {} {}{}\n",
                        self.node_labels[u], self.node_labels[e.to], e.cap, tuple
                    ));
                }
            }
        }
        out
    }
}

impl Default for FlowNetwork {
    fn default() -> Self {
        Self::new()
    }
}

/// Dinic max flow. Returns the flow value and one minimum cut of
/// finite-capacity tuple edges (∞ edges are never in the cut).
pub fn max_flow_min_cut(g: &FlowNetwork) -> (i64, Vec<TupleKey>) {
    let mut adj = g.adj.clone();
    let n = adj.len();
    let mut flow = 0i64;
    loop {
        // BFS levels on the residual graph
        let mut level = vec![usize::MAX; n];
        level[g.source] = 0;
        let mut queue = std::collections::VecDeque::from([g.source]);
        while let Some(u) = queue.pop_front() {
            for e in &adj[u] {
                if e.cap > 0 && level[e.to] == usize::MAX {
                    level[e.to] = level[u] + 1;
                    queue.push_back(e.to);
                }
            }
        }
        if level[g.sink] == usize::MAX {
            break;
        }
        let mut it = vec![0usize; n];
        loop {
            let pushed = dfs(&mut adj, &mut it, &level, g.source, g.sink, i64::MAX);
            if pushed == 0 {
                break;
            }
            flow += pushed;
        }
    }
    // min cut: residual-reachable side from source
    let mut reach = vec![false; n];
    reach[g.source] = true;
    let mut stack = vec![g.source];
    while let Some(u) = stack.pop() {
        for e in &adj[u] {
            if e.cap > 0 && !reach[e.to] {
                reach[e.to] = true;
                stack.push(e.to);
            }
        }
    }
    let mut cut = Vec::new();
    for (u, slot, t) in &g.tuple_edges {
        let e = &adj[*u][*slot];
        let orig = &g.adj[*u][*slot];
        if orig.cap > 0 && orig.cap < g.infinity && reach[*u] && !reach[e.to] {
            cut.push(t.clone());
        }
    }
    cut.sort();
    cut.dedup();
    (flow, cut)
}

fn dfs(
    adj: &mut [Vec<Edge>],
    it: &mut [usize],
    level: &[usize],
    u: usize,
    sink: usize,
    limit: i64,
) -> i64 {
    if u == sink {
        return limit;
    }
    while it[u] < adj[u].len() {
        let (to, cap, rev) = {
            let e = &adj[u][it[u]];
            (e.to, e.cap, e.rev)
        };
        if cap > 0 && level[to] == level[u] + 1 {
            let pushed = dfs(adj, it, level, to, sink, limit.min(cap));
            if pushed > 0 {
                adj[u][it[u]].cap -= pushed;
                adj[to][rev].cap += pushed;
                return pushed;
            }
        }
        it[u] += 1;
    }
    0
}

/// Builds the separator flow graph for an atom ordering: the interior node
/// at cut i holds an assignment to J_i = var(A_i) ∩ var(A_{i+1}); each tuple
/// of atom A_i becomes one edge between its adjacent separator nodes, with
/// capacity = multiplicity (∞ when exogenous). Under running intersection
/// the source→sink paths are exactly the witnesses; other orderings admit
/// spurious paths (Flow-CT).
pub fn build_flow_graph(q: &Query, d: &Database, ordering: &[usize]) -> FlowNetwork {
    let m = ordering.len();
    let inf: i64 = 1 + d
        .tuples()
        .filter(|(t, _)| !d.is_exogenous(q, t))
        .map(|(_, r)| r.multiplicity as i64)
        .sum::<i64>();
    let mut g = FlowNetwork::new();
    g.infinity = inf;
    // separator variables between consecutive atoms
    let seps: Vec<Vec<&str>> = (0..m.saturating_sub(1))
        .map(|i| {
            let a = q.atoms[ordering[i]].var_set();
            let b = q.atoms[ordering[i + 1]].var_set();
            let mut v: Vec<&str> = a.intersection(&b).copied().collect();
            v.sort();
            v
        })
        .collect();
    let mut nodes: HashMap<(usize, Vec<ConstId>), usize> = HashMap::new();
    for (i, &ai) in ordering.iter().enumerate() {
        let atom = &q.atoms[ai];
        let rows = match d.relations.get(&atom.relation) {
            Some(r) => r,
            None => continue,
        };
        let proj = |sep: &[&str], consts: &[ConstId]| -> Vec<ConstId> {
            sep.iter()
                .map(|v| {
                    let pos = atom.vars.iter().position(|x| x == v).unwrap();
                    consts[pos]
                })
                .collect()
        };
        for r in rows {
            let key = TupleKey { relation: atom.relation.clone(), constants: r.constants.clone() };
            let from = if i == 0 {
                g.source
            } else {
                let p = proj(&seps[i - 1], &r.constants);
                *nodes.entry((i - 1, p.clone())).or_insert_with(|| {
                    g.add_node(format!("c{}:{:?}", i - 1, p))
                })
            };
            let to = if i == m - 1 {
                g.sink
            } else {
                let p = proj(&seps[i], &r.constants);
                *nodes
                    .entry((i, p.clone()))
                    .or_insert_with(|| g.add_node(format!("c{i}:{p:?}")))
            };
            let cap = if d.is_exogenous(q, &key) { inf } else { r.multiplicity as i64 };
            g.add_edge(from, to, cap, Some(key));
        }
    }
    g
}

/// Witness-chain flow graph over a subset of atoms: each witness contributes
/// a source→sink chain through split tuple nodes; a tuple's internal edge
/// has capacity = multiplicity (∞ when exogenous). Paths compose pairwise,
/// so callers must check `count_paths` against the witness count.
pub fn build_witness_flow_graph(
    q: &Query,
    d: &Database,
    ws: &WitnessSet,
    atoms: &[usize],
) -> FlowNetwork {
    let inf: i64 = 1 + d
        .tuples()
        .filter(|(t, _)| !d.is_exogenous(q, t))
        .map(|(_, r)| r.multiplicity as i64)
        .sum::<i64>();
    let mut g = FlowNetwork::new();
    g.infinity = inf;
    let vars = q.variables();
    let var_pos: HashMap<&str, usize> = vars.iter().enumerate().map(|(i, v)| (*v, i)).collect();
    // split nodes per (position, tuple)
    let mut split: HashMap<(usize, TupleKey), (usize, usize)> = HashMap::new();
    let mut chain_edges: std::collections::HashSet<(usize, usize)> = Default::default();
    for w in &ws.witnesses {
        let mut prev_out = g.source;
        for (i, &ai) in atoms.iter().enumerate() {
            let atom = &q.atoms[ai];
            let key = TupleKey {
                relation: atom.relation.clone(),
                constants: atom
                    .vars
                    .iter()
                    .map(|v| w.valuation[var_pos[v.as_str()]])
                    .collect(),
            };
            let cap = if d.is_exogenous(q, &key) { inf } else { d.multiplicity(&key) as i64 };
            let (n_in, n_out) = *split.entry((i, key.clone())).or_insert_with(|| {
                let label = format!("p{i}:{}", d.format_tuple(&key));
                let a = g.add_node(format!("{label}.in"));
                let b = g.add_node(format!("{label}.out"));
                g.add_edge(a, b, cap, Some(key.clone()));
                (a, b)
            });
            if chain_edges.insert((prev_out, n_in)) {
                g.add_edge(prev_out, n_in, inf, None);
            }
            prev_out = n_out;
        }
        if chain_edges.insert((prev_out, g.sink)) {
            g.add_edge(prev_out, g.sink, inf, None);
        }
    }
    g
}

/// Exact resilience by min-cut. Requires a linear query, or (set semantics)
/// a query whose dominated atoms can be exogenized to leave a witness-exact
/// flow encoding; otherwise errors.
pub fn resilience_via_flow(q: &Query, d: &Database) -> Result<ResilienceAnswer, SolveError> {
    let ws = compute_witnesses(q, d);
    if ws.is_empty() {
        return Ok(ResilienceAnswer {
            value: 0.0,
            contingency: Vec::new(),
            method: Method::Flow,
            lp_bound: None,
        });
    }
    let orderings = linear_orderings(q);
    let (value, cut) = if let Some(ord) = orderings.first() {
        let g = build_flow_graph(q, d, ord);
        max_flow_min_cut(&g)
    } else if d.semantics == Semantics::Set
        && crate::analysis::classify_res(q, Semantics::Set).verdict
            == crate::analysis::Verdict::Ptime
    {
        // exogenize dominated atoms (they never appear in an optimal
        // contingency under set semantics), then encode the witnesses over
        // the remaining endogenous atoms
        let mut q2 = q.clone();
        for i in 0..q2.atoms.len() {
            if is_dominated(q, i) {
                q2.atoms[i].exogenous = true;
            }
        }
        let endo: Vec<usize> =
            (0..q2.atoms.len()).filter(|&i| !q2.atoms[i].exogenous).collect();
        use itertools::Itertools;
        let mut found = None;
        for perm in endo.iter().copied().permutations(endo.len()) {
            let g = build_witness_flow_graph(&q2, d, &ws, &perm);
            if g.count_paths() == ws.len() as u64 {
                found = Some(max_flow_min_cut(&g));
                break;
            }
        }
        match found {
            Some(r) => r,
            None => return Err(SolveError::NotLinear(" and not flow-encodable".into())),
        }
    } else {
        return Err(SolveError::NotLinear(String::new()));
    };
    let g_inf: i64 = 1 + d
        .tuples()
        .filter(|(t, _)| !d.is_exogenous(q, t))
        .map(|(_, r)| r.multiplicity as i64)
        .sum::<i64>();
    if value >= g_inf {
        return Err(SolveError::UnavoidableWitness);
    }
    debug_assert!(!query_holds(q, &d.without(&cut)));
    Ok(ResilienceAnswer {
        value: value as f64,
        contingency: cut,
        method: Method::Flow,
        lp_bound: None,
    })
}

/// Exact responsibility by the minimum of min-cuts: for each t-witness taken
/// as preserved, delete t's edge, make the preserved witness's tuples
/// uncuttable, and cut the remaining (t-free) witness paths.
pub fn responsibility_via_flow(
    q: &Query,
    d: &Database,
    t: &TupleKey,
) -> Result<ResponsibilityAnswer, SolveError> {
    if d.record(t).is_none() {
        return Err(SolveError::TupleNotFound(d.format_tuple(t)));
    }
    let ws = compute_witnesses(q, d);
    let t_wit: Vec<usize> = ws
        .tuple_index
        .get(t)
        .map(|s| s.iter().copied().collect())
        .unwrap_or_default();
    if t_wit.is_empty() {
        return Err(SolveError::TupleNotInWitness);
    }
    let Some(ord) = linear_orderings(q).into_iter().next() else {
        return Err(SolveError::NotLinear(String::new()));
    };
    let base = build_flow_graph(q, d, &ord);
    let mut best: Option<(i64, Vec<TupleKey>, usize)> = None;
    for &wp in &t_wit {
        let mut g = base.clone();
        g.set_tuple_capacity(t, 0);
        for u in &ws.witnesses[wp].tuples {
            if u != t {
                let inf = g.infinity;
                g.set_tuple_capacity(u, inf);
            }
        }
        let (value, cut) = max_flow_min_cut(&g);
        if value < g.infinity && best.as_ref().is_none_or(|(b, _, _)| value < *b) {
            best = Some((value, cut, wp));
        }
    }
    match best {
        Some((value, cut, wp)) => {
            debug_assert!(query_holds(q, &d.without(&cut)));
            let mut a =
                ResponsibilityAnswer::finite(value as f64, cut, Some(wp), Method::Flow);
            a.method = Method::Flow;
            Ok(a)
        }
        None => Ok(ResponsibilityAnswer::not_counterfactualizable(Method::Flow)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{parse_query, Semantics};
    use crate::resilience::{brute_force_resilience, resilience_ilp, resilience_lp};
    use crate::responsibility::{brute_force_responsibility, responsibility_ilp};
    use crate::witness::tests::db_from;

    #[test]
    fn two_chain_min_cut_one() {
        let q = parse_query("q :- R(x,y), S(y,z).").unwrap();
        let d = db_from(Semantics::Set, &["R(1,2)", "S(2,3)", "S(2,4)"]);
        let g = build_flow_graph(&q, &d, &[0, 1]);
        assert_eq!(g.count_paths(), 2);
        let (v, cut) = max_flow_min_cut(&g);
        assert_eq!(v, 1);
        assert_eq!(d.format_tuple(&cut[0]), "R(1,2)");
        let a = resilience_via_flow(&q, &d).unwrap();
        assert_eq!(a.value, 1.0);
    }

    #[test]
    fn parallel_and_series() {
        let mut g = FlowNetwork::new();
        let t1 = TupleKey { relation: "A".into(), constants: vec![1] };
        let t2 = TupleKey { relation: "A".into(), constants: vec![2] };
        g.infinity = 100;
        g.add_edge(g.source, g.sink, 1, Some(t1.clone()));
        g.add_edge(g.source, g.sink, 1, Some(t2.clone()));
        let (v, cut) = max_flow_min_cut(&g);
        assert_eq!(v, 2);
        assert_eq!(cut.len(), 2);

        let mut g = FlowNetwork::new();
        g.infinity = 100;
        let mid = g.add_node("m".into());
        g.add_edge(g.source, mid, 5, Some(t1));
        g.add_edge(mid, g.sink, 3, Some(t2.clone()));
        let (v, cut) = max_flow_min_cut(&g);
        assert_eq!(v, 3);
        assert_eq!(cut, vec![t2]);
    }

    #[test]
    fn infinite_edges_never_cut() {
        let mut g = FlowNetwork::new();
        g.infinity = 100;
        let t1 = TupleKey { relation: "A".into(), constants: vec![1] };
        let mid = g.add_node("m".into());
        g.add_edge(g.source, mid, 100, None);
        g.add_edge(mid, g.sink, 7, Some(t1.clone()));
        let (v, cut) = max_flow_min_cut(&g);
        assert_eq!(v, 7);
        assert_eq!(cut, vec![t1]);
    }

    #[test]
    fn triangle_flow_ct_data_min_cut_two() {
        // the non-linear triangle still yields 2 on its R,S,T arrangement
        let q = parse_query("q :- R(x,y), S(y,z), T(z,x).").unwrap();
        let d = db_from(
            Semantics::Set,
            &["R(1,1)", "R(2,1)", "S(1,1)", "S(1,2)", "T(1,1)", "T(2,1)", "T(2,2)"],
        );
        let g = build_flow_graph(&q, &d, &[0, 1, 2]);
        let (v, _) = max_flow_min_cut(&g);
        assert_eq!(v, 2);
    }

    #[test]
    fn nonlinear_without_deactivation_errors() {
        let q = parse_query("q :- R(x,y), S(y,z), T(z,x).").unwrap();
        let d = db_from(Semantics::Set, &["R(1,1)", "S(1,1)", "T(1,1)"]);
        assert!(matches!(resilience_via_flow(&q, &d), Err(SolveError::NotLinear(_))));
    }

    #[test]
    fn empty_database_zero() {
        let q = parse_query("q :- R(x,y), S(y,z).").unwrap();
        let d = db_from(Semantics::Set, &[]);
        assert_eq!(resilience_via_flow(&q, &d).unwrap().value, 0.0);
    }

    #[test]
    fn deactivated_triangle_via_witness_graph() {
        // Q_A△ under set semantics: A dominates R and T; exogenizing them
        // leaves {A, S} and a bipartite vertex-cover flow
        let q = parse_query("qa :- A(x), R(x,y), S(y,z), T(z,x).").unwrap();
        let d = db_from(
            Semantics::Set,
            &[
                "A(1)", "A(2)", "R(1,1)", "R(2,1)", "S(1,1)", "S(1,2)", "T(1,1)", "T(2,1)",
                "T(2,2)",
            ],
        );
        let flow = resilience_via_flow(&q, &d).unwrap();
        let ilp = resilience_ilp(&q, &d).unwrap();
        assert_eq!(flow.value, ilp.value);
        assert!(!query_holds(&q, &d.without(&flow.contingency)));
    }

    #[test]
    fn cross_method_equality_random_linear() {
        use rand::prelude::*;
        let queries = [
            "q :- R(x,y), S(y,z).",
            "q :- R(x,y), S(y,z), T(z,u).",
            "q :- A(x), R(x,y), S(y,z), B(z).",
        ];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        for text in queries {
            let q = parse_query(text).unwrap();
            for trial in 0..30 {
                let semantics = if trial % 2 == 0 { Semantics::Set } else { Semantics::Bag };
                let mut d = Database::new(semantics);
                for i in 0..4 {
                    d.interner.intern(&i.to_string());
                }
                for a in &q.atoms {
                    d.ensure_relation(&a.relation);
                    for _ in 0..rng.gen_range(1..5) {
                        let c: Vec<ConstId> =
                            (0..a.vars.len()).map(|_| rng.gen_range(0..4)).collect();
                        let mult =
                            if semantics == Semantics::Bag { rng.gen_range(1..4) } else { 1 };
                        let _ = d.insert(&a.relation, c, mult, false);
                    }
                }
                let ilp = resilience_ilp(&q, &d).unwrap();
                let lp = resilience_lp(&q, &d).unwrap();
                let flow = resilience_via_flow(&q, &d).unwrap();
                assert_eq!(flow.value, ilp.value, "{text} trial {trial}");
                assert!((lp.value - ilp.value).abs() < 1e-6, "{text} trial {trial}");
                if let Ok(brute) = brute_force_resilience(&q, &d) {
                    assert_eq!(brute.value, ilp.value);
                }
            }
        }
    }

    #[test]
    fn responsibility_star_example() {
        // 3 witnesses sharing r11, t = s11: responsibility 2
        let q = parse_query("q :- R(x,y), S(x,z).").unwrap();
        let d = db_from(Semantics::Set, &["R(1,1)", "S(1,1)", "S(1,2)", "S(1,3)"]);
        let t = d.parse_tuple("S(1,1)").unwrap();
        let a = responsibility_via_flow(&q, &d, &t).unwrap();
        assert_eq!(a.value, Some(2.0));
    }

    #[test]
    fn responsibility_single_witness_zero() {
        let q = parse_query("q :- R(x,y), S(y,z).").unwrap();
        let d = db_from(Semantics::Set, &["R(1,2)", "S(2,3)"]);
        let t = d.parse_tuple("R(1,2)").unwrap();
        assert_eq!(responsibility_via_flow(&q, &d, &t).unwrap().value, Some(0.0));
    }

    #[test]
    fn responsibility_cross_method_random() {
        use rand::prelude::*;
        let q = parse_query("q :- R(x,y), S(y,z), T(z,u).").unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(37);
        let mut tested = 0;
        while tested < 25 {
            let mut d = Database::new(Semantics::Set);
            for i in 0..3 {
                d.interner.intern(&i.to_string());
            }
            for rel in ["R", "S", "T"] {
                d.ensure_relation(rel);
                for _ in 0..rng.gen_range(1..5) {
                    let c = vec![rng.gen_range(0..3), rng.gen_range(0..3)];
                    let _ = d.insert(rel, c, 1, false);
                }
            }
            let ws = compute_witnesses(&q, &d);
            if ws.is_empty() {
                continue;
            }
            let t = ws.witnesses[0].tuples[0].clone();
            let flow = responsibility_via_flow(&q, &d, &t).unwrap();
            let ilp = responsibility_ilp(&q, &d, &t).unwrap();
            assert_eq!(flow.value, ilp.value);
            let brute = brute_force_responsibility(&q, &d, &t).unwrap();
            assert_eq!(brute.value, ilp.value);
            tested += 1;
        }
    }

    #[test]
    fn path_count_matches_witnesses_on_linear() {
        let q = parse_query("q :- R(x,y), S(y,z), T(z,u).").unwrap();
        let d = db_from(
            Semantics::Set,
            &["R(1,2)", "R(2,2)", "S(2,3)", "S(2,4)", "T(3,1)", "T(4,1)", "T(9,9)"],
        );
        let ws = compute_witnesses(&q, &d);
        let g = build_flow_graph(&q, &d, &[0, 1, 2]);
        assert_eq!(g.count_paths(), ws.len() as u64);
    }

    #[test]
    fn dump_lists_edges() {
        let q = parse_query("q :- R(x,y), S(y,z).").unwrap();
        let d = db_from(Semantics::Set, &["R(1,2)", "S(2,3)"]);
        let g = build_flow_graph(&q, &d, &[0, 1]);
        let dump = g.dump(&d);
        assert!(dump.contains("R(1,2)"));
        assert!(dump.contains("S(2,3)"));
    }
}
