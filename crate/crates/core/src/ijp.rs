//! Join Path / Independent Join Path hardness certificates: verification,
//! composition, the vertex-cover reduction, bounded certificate search, and
//! answer-set program emission for external search.

use std::collections::{BTreeSet, HashMap, HashSet};

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::model::{
    tuple_sets_isomorphic, ConstId, Database, ModelError, Query, Semantics, TupleKey,
};
use crate::resilience::{resilience_ilp, SolveError};
use crate::witness::{compute_witnesses, WitnessSet};

/// A database with designated start/terminal endpoint tuple sets.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JoinPathCandidate {
    pub database: Database,
    pub start: Vec<TupleKey>,
    pub terminal: Vec<TupleKey>,
    pub query: Query,
}

impl JoinPathCandidate {
    pub fn new(
        query: Query,
        database: Database,
        mut start: Vec<TupleKey>,
        mut terminal: Vec<TupleKey>,
    ) -> Result<Self, SolveError> {
        if start.is_empty() || terminal.is_empty() {
            return Err(SolveError::Invalid("endpoint sets must be non-empty".into()));
        }
        for key in start.iter().chain(terminal.iter()) {
            if database.record(key).is_none() {
                return Err(SolveError::TupleNotFound(database.format_tuple(key)));
            }
        }
        start.sort();
        start.dedup();
        terminal.sort();
        terminal.dedup();
        if start.iter().any(|k| terminal.contains(k)) {
            return Err(SolveError::Invalid("endpoint sets must be disjoint".into()));
        }
        Ok(JoinPathCandidate { database, start, terminal, query })
    }
}

/// The five certificate conditions, in check order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub reduced: bool,
    pub connected: bool,
    pub endpoints_valid: bool,
    pub or_property: bool,
    pub nonleaking_triangle: bool,
}

impl CheckRecord {
    pub fn join_path_ok(&self) -> bool {
        self.reduced && self.connected && self.endpoints_valid
    }

    pub fn all(&self) -> bool {
        self.join_path_ok() && self.or_property && self.nonleaking_triangle
    }

    pub fn first_failure(&self) -> Option<&'static str> {
        if !self.reduced {
            Some("reduced")
        } else if !self.connected {
            Some("connected")
        } else if !self.endpoints_valid {
            Some("endpoints-valid")
        } else if !self.or_property {
            Some("or-property")
        } else if !self.nonleaking_triangle {
            Some("nonleaking-triangle")
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IJPCertificate {
    pub candidate: JoinPathCandidate,
    pub resilience_c: u64,
    pub checks: CheckRecord,
}

impl IJPCertificate {
    pub fn is_valid(&self) -> bool {
        self.checks.all()
    }
}

fn key_consts(keys: &[TupleKey]) -> BTreeSet<ConstId> {
    keys.iter().flat_map(|k| k.constants.iter().copied()).collect()
}

fn witness_graph_connected(ws: &WitnessSet) -> bool {
    let n = ws.witnesses.len();
    if n == 0 {
        return false;
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    while let Some(i) = stack.pop() {
        for t in &ws.witnesses[i].tuples {
            for &j in &ws.tuple_index[t] {
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    seen.iter().all(|&s| s)
}

/// Join path conditions: every tuple in a witness, connected witness
/// hypergraph, and a valid endpoint pair (isomorphic, non-identical, no
/// stray endogenous tuple inside either endpoint's constants).
pub fn check_join_path(c: &JoinPathCandidate) -> CheckRecord {
    let mut rec = CheckRecord::default();
    let ws = compute_witnesses(&c.query, &c.database);
    if ws.is_empty() {
        return rec;
    }
    rec.reduced = c
        .database
        .tuples()
        .all(|(key, _)| ws.tuple_index.contains_key(&key));
    rec.connected = witness_graph_connected(&ws);
    rec.endpoints_valid = endpoints_valid(c);
    rec
}

fn endpoints_valid(c: &JoinPathCandidate) -> bool {
    let endo = |k: &TupleKey| !c.database.is_exogenous(&c.query, k);
    if !c.start.iter().all(endo) || !c.terminal.iter().all(endo) {
        return false;
    }
    if tuple_sets_isomorphic(&c.start, &c.terminal).is_none() {
        return false;
    }
    // new() guarantees disjointness, hence non-identity
    let sc = key_consts(&c.start);
    let tc = key_consts(&c.terminal);
    for (key, _) in c.database.tuples() {
        if c.database.is_exogenous(&c.query, &key)
            || c.start.contains(&key)
            || c.terminal.contains(&key)
        {
            continue;
        }
        let within = |set: &BTreeSet<ConstId>| key.constants.iter().all(|x| set.contains(x));
        if within(&sc) || within(&tc) {
            return false;
        }
    }
    true
}

/// Resilience must drop by exactly one when either or both endpoints are
/// removed. Returns (passes, resilience of the full database).
pub fn check_or_property(c: &JoinPathCandidate) -> Result<(bool, u64), SolveError> {
    let full = resilience_ilp(&c.query, &c.database)?.value;
    let both: Vec<TupleKey> = c.start.iter().chain(c.terminal.iter()).cloned().collect();
    let rs = resilience_ilp(&c.query, &c.database.without(&c.start))?.value;
    let rt = resilience_ilp(&c.query, &c.database.without(&c.terminal))?.value;
    let rst = resilience_ilp(&c.query, &c.database.without(&both))?.value;
    let target = full - 1.0;
    let passes = full >= 1.0 && rs == target && rt == target && rst == target;
    Ok((passes, full as u64))
}

fn copy_with_map(
    out: &mut Database,
    src: &Database,
    rename: &dyn Fn(ConstId) -> String,
) -> Result<(), SolveError> {
    for (key, rec) in src.tuples() {
        let names: Vec<String> = key.constants.iter().map(|&c| rename(c)).collect();
        let refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
        let ids: Vec<ConstId> = refs.iter().map(|s| out.interner.intern(s)).collect();
        let target = TupleKey { relation: key.relation.clone(), constants: ids.clone() };
        if out.record(&target).is_some() {
            // glued tuple: keep the larger multiplicity of the two copies
            if let Some(rows) = out.relations.get_mut(&target.relation) {
                for r in rows.iter_mut().filter(|r| r.constants == target.constants) {
                    r.multiplicity = r.multiplicity.max(rec.multiplicity);
                    r.exogenous |= rec.exogenous;
                }
            }
            continue;
        }
        out.insert(&key.relation, ids, rec.multiplicity, rec.exogenous)
            .map_err(|e| SolveError::Invalid(e.to_string()))?;
    }
    Ok(())
}

/// The 3-copy triangle composition: copy 1 runs S(A)→T(B), copy 2 runs
/// S(B)→T(C), copy 3 runs S(A)→T(C); endpoints glued, everything else
/// renamed fresh per copy.
pub fn triangle_database(c: &JoinPathCandidate) -> Result<Database, SolveError> {
    let phi = tuple_sets_isomorphic(&c.start, &c.terminal)
        .ok_or_else(|| SolveError::Invalid("endpoints are not isomorphic".into()))?;
    let sc = key_consts(&c.start);
    let tc = key_consts(&c.terminal);
    if sc.intersection(&tc).next().is_some() {
        return Err(SolveError::Invalid(
            "triangle composition requires disjoint endpoint constants".into(),
        ));
    }
    let name = |id: ConstId| c.database.interner.name(id).to_string();
    let mut out = Database::new(c.database.semantics);
    for copy in 1..=3u32 {
        let rename = |id: ConstId| -> String {
            if sc.contains(&id) {
                match copy {
                    2 => format!("b{}", name(phi[&id])),
                    _ => format!("a{}", name(id)),
                }
            } else if tc.contains(&id) {
                match copy {
                    1 => format!("b{}", name(id)),
                    _ => format!("c{}", name(id)),
                }
            } else {
                format!("f{copy}_{}", name(id))
            }
        };
        copy_with_map(&mut out, &c.database, &rename)?;
    }
    Ok(out)
}

/// The triangle is non-leaking iff it has exactly 3× the candidate's
/// witnesses; shared endpoint constants count as a failure.
pub fn check_triangle_nonleaking(c: &JoinPathCandidate) -> Result<bool, SolveError> {
    let tri = match triangle_database(c) {
        Ok(t) => t,
        Err(SolveError::Invalid(_)) => return Ok(false),
        Err(e) => return Err(e),
    };
    let k = compute_witnesses(&c.query, &c.database).witnesses.len();
    let count = compute_witnesses(&c.query, &tri).witnesses.len();
    Ok(count == 3 * k)
}

/// Runs every check; a fully valid certificate is a machine-checked
/// NP-hardness proof for resilience of the candidate's query.
pub fn verify_ijp(c: &JoinPathCandidate) -> Result<IJPCertificate, SolveError> {
    let mut checks = check_join_path(c);
    let mut resilience_c = 0;
    if checks.join_path_ok() {
        match check_or_property(c) {
            Ok((passes, value)) => {
                checks.or_property = passes;
                resilience_c = value;
            }
            Err(SolveError::UnavoidableWitness) => {}
            Err(e) => return Err(e),
        }
        if checks.or_property {
            checks.nonleaking_triangle = check_triangle_nonleaking(c)?;
        }
    }
    Ok(IJPCertificate { candidate: c.clone(), resilience_c, checks })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Gluing {
    StartStart,
    TerminalTerminal,
    TerminalStart,
}

/// Glues a fresh-renamed copy of c2 onto c1 at the chosen endpoint pair.
pub fn compose(
    c1: &JoinPathCandidate,
    c2: &JoinPathCandidate,
    gluing: Gluing,
) -> Result<Database, SolveError> {
    if !check_join_path(c1).join_path_ok() || !check_join_path(c2).join_path_ok() {
        return Err(SolveError::Invalid("compose requires join paths".into()));
    }
    let (e1, e2) = match gluing {
        Gluing::StartStart => (&c1.start, &c2.start),
        Gluing::TerminalTerminal => (&c1.terminal, &c2.terminal),
        Gluing::TerminalStart => (&c1.terminal, &c2.start),
    };
    let psi = tuple_sets_isomorphic(e2, e1)
        .ok_or_else(|| SolveError::Invalid("glued endpoints are not isomorphic".into()))?;
    let glued = key_consts(e2);
    let mut out = c1.database.clone();
    // fresh names for everything outside the glued endpoint
    let mut fresh: HashMap<ConstId, String> = HashMap::new();
    let mut used: HashSet<String> =
        c1.database.tuples().flat_map(|(k, _)| k.constants).map(|id| {
            c1.database.interner.name(id).to_string()
        }).collect();
    for (key, _) in c2.database.tuples() {
        for &id in &key.constants {
            if glued.contains(&id) || fresh.contains_key(&id) {
                continue;
            }
            let base = c2.database.interner.name(id);
            let mut candidate = base.to_string();
            let mut n = 2;
            while used.contains(&candidate) {
                candidate = format!("{base}_{n}");
                n += 1;
            }
            used.insert(candidate.clone());
            fresh.insert(id, candidate);
        }
    }
    let rename = |id: ConstId| -> String {
        if glued.contains(&id) {
            c1.database.interner.name(psi[&id]).to_string()
        } else {
            fresh[&id].clone()
        }
    };
    copy_with_map(&mut out, &c2.database, &rename)?;
    Ok(out)
}

/// The affine map from vertex-cover size to resilience of the reduction.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct VcPrediction {
    pub edges: usize,
    pub per_edge: u64,
}

impl VcPrediction {
    pub fn predict(&self, cover: u64) -> u64 {
        cover + self.edges as u64 * self.per_edge
    }
}

/// One fresh IJP copy per edge, endpoints glued at per-node tuple sets.
/// Resilience of the result equals VC(g) + |E|·(c−1).
pub fn vertex_cover_reduction(
    cert: &IJPCertificate,
    nodes: usize,
    edges: &[(usize, usize)],
) -> Result<(Database, VcPrediction), SolveError> {
    if !cert.is_valid() {
        return Err(SolveError::Invalid(
            "vertex-cover reduction requires a valid certificate".into(),
        ));
    }
    let c = &cert.candidate;
    let phi = tuple_sets_isomorphic(&c.start, &c.terminal).expect("valid certificate");
    let phi_inv: HashMap<ConstId, ConstId> = phi.iter().map(|(&a, &b)| (b, a)).collect();
    let sc = key_consts(&c.start);
    let tc = key_consts(&c.terminal);
    let mut simple: Vec<(usize, usize)> = Vec::new();
    for &(u, v) in edges {
        if u == v || u >= nodes || v >= nodes {
            return Err(SolveError::Invalid(format!("bad edge ({u},{v})")));
        }
        let e = (u.min(v), u.max(v));
        if !simple.contains(&e) {
            simple.push(e);
        }
    }
    let name = |id: ConstId| c.database.interner.name(id).to_string();
    let mut out = Database::new(c.database.semantics);
    for (ei, &(u, v)) in simple.iter().enumerate() {
        let rename = |id: ConstId| -> String {
            if sc.contains(&id) {
                format!("n{u}_{}", name(id))
            } else if tc.contains(&id) {
                format!("n{v}_{}", name(phi_inv[&id]))
            } else {
                format!("e{ei}_{}", name(id))
            }
        };
        copy_with_map(&mut out, &c.database, &rename)?;
    }
    let prediction =
        VcPrediction { edges: simple.len(), per_edge: cert.resilience_c.saturating_sub(1) };
    Ok((out, prediction))
}

/// Endpoint patterns: subsets of endogenous canonical tuples that two
/// witnesses can share without creating a third witness. Returned as
/// textual tuple sets (start, terminal) over fresh small constants.
pub fn enumerate_endpoints(q: &Query) -> Vec<(Vec<String>, Vec<String>)> {
    let vars = q.variables();
    let endo: Vec<usize> = (0..q.atoms.len()).filter(|&i| !q.atoms[i].exogenous).collect();
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for mask in 1u32..(1 << endo.len()) {
        let picked: Vec<usize> =
            endo.iter().enumerate().filter(|(j, _)| mask >> j & 1 == 1).map(|(_, &i)| i).collect();
        let shared: HashSet<&str> = picked
            .iter()
            .flat_map(|&i| q.atoms[i].vars.iter().map(|v| v.as_str()))
            .collect();
        if shared.len() == vars.len() {
            continue; // copies coincide, no second witness
        }
        // two canonical witnesses sharing exactly the picked tuples
        let mut d = Database::new(Semantics::Set);
        for a in &q.atoms {
            d.ensure_relation(&a.relation);
        }
        let mut ok = true;
        for copy in 1..=2 {
            for a in &q.atoms {
                let names: Vec<String> = a
                    .vars
                    .iter()
                    .map(|v| {
                        let i = vars.iter().position(|x| x == v).unwrap();
                        if shared.contains(v.as_str()) {
                            format!("s{i}")
                        } else {
                            format!("w{copy}_{i}")
                        }
                    })
                    .collect();
                let refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
                let ids: Vec<ConstId> = refs.iter().map(|s| d.interner.intern(s)).collect();
                let key = TupleKey { relation: a.relation.clone(), constants: ids.clone() };
                if d.record(&key).is_none() && d.insert(&a.relation, ids, 1, a.exogenous).is_err()
                {
                    ok = false;
                }
            }
        }
        if !ok || compute_witnesses(q, &d).witnesses.len() != 2 {
            continue;
        }
        // canonical constants: picked tuples' variables numbered by first use
        let mut order: Vec<&str> = Vec::new();
        for &i in &picked {
            for v in &q.atoms[i].vars {
                if !order.contains(&v.as_str()) {
                    order.push(v);
                }
            }
        }
        let k = order.len();
        let render = |offset: usize| -> Vec<String> {
            picked
                .iter()
                .map(|&i| {
                    let cs = q.atoms[i]
                        .vars
                        .iter()
                        .map(|v| {
                            (order.iter().position(|x| *x == v).unwrap() + 1 + offset).to_string()
                        })
                        .join(",");
                    format!("{}({cs})", q.atoms[i].relation)
                })
                .collect()
        };
        let s_txt = render(0);
        let t_txt = render(k);
        if seen.insert(s_txt.join(";")) {
            out.push((s_txt, t_txt));
        }
    }
    out
}

pub const SEARCH_DOMAIN_CAP: usize = 6;
pub const SEARCH_BUDGET: usize = 200_000;

#[derive(Debug)]
pub struct SearchOutcome {
    pub certificate: Option<IJPCertificate>,
    pub candidates: usize,
    /// False when the budget ran out before the space was covered; a `None`
    /// certificate is then no evidence of tractability.
    pub exhausted: bool,
}

/// Enumerates candidate databases over constants {1..domain} containing the
/// endpoints, by increasing tuple count and then witness count; returns the
/// first verified certificate.
pub fn search_ijp(
    q: &Query,
    domain: usize,
    endpoints: Option<(Vec<String>, Vec<String>)>,
    budget: usize,
) -> Result<SearchOutcome, SolveError> {
    search_ijp_capped(q, domain, endpoints, budget, SEARCH_DOMAIN_CAP)
}

pub fn search_ijp_capped(
    q: &Query,
    domain: usize,
    endpoints: Option<(Vec<String>, Vec<String>)>,
    budget: usize,
    domain_cap: usize,
) -> Result<SearchOutcome, SolveError> {
    if domain > domain_cap {
        return Err(SolveError::Invalid(format!(
            "search domain capped at {domain_cap} ({domain} given); raise the cap to override"
        )));
    }
    let explicit = endpoints.is_some();
    let patterns = match endpoints {
        Some(p) => vec![p],
        None => enumerate_endpoints(q),
    };
    let mut checked = 0usize;
    let mut exhausted = true;
    for (s_txt, t_txt) in &patterns {
        let mut base = Database::new(Semantics::Set);
        for i in 1..=domain {
            base.interner.intern(&i.to_string());
        }
        for a in &q.atoms {
            base.ensure_relation(&a.relation);
        }
        let parse_all = |base: &Database, txt: &[String]| -> Result<Vec<TupleKey>, ModelError> {
            txt.iter().map(|t| base.parse_tuple(t)).collect()
        };
        let (s_keys, t_keys) = match (parse_all(&base, s_txt), parse_all(&base, t_txt)) {
            (Ok(s), Ok(t)) => (s, t),
            _ if explicit => {
                return Err(SolveError::Invalid(
                    "endpoint constants must lie in 1..=domain".into(),
                ))
            }
            _ => continue, // pattern needs more constants than the domain has
        };
        for key in s_keys.iter().chain(&t_keys) {
            base.insert(&key.relation, key.constants.clone(), 1, false)
                .map_err(|e| SolveError::Invalid(e.to_string()))?;
        }
        // every possible extra tuple over the domain
        let mut universe: Vec<TupleKey> = Vec::new();
        let mut seen_rel = HashSet::new();
        for a in &q.atoms {
            if !seen_rel.insert(&a.relation) {
                continue;
            }
            let arity = a.vars.len();
            for combo in (0..arity).map(|_| 1..=domain).multi_cartesian_product() {
                let ids: Vec<ConstId> = combo
                    .iter()
                    .map(|c| base.interner.get(&c.to_string()).unwrap())
                    .collect();
                let key = TupleKey { relation: a.relation.clone(), constants: ids };
                if !s_keys.contains(&key) && !t_keys.contains(&key) {
                    universe.push(key);
                }
            }
        }
        let mut out_of_budget = false;
        for size in 0..=universe.len() {
            let mut batch: Vec<(usize, Database)> = Vec::new();
            for combo in universe.iter().combinations(size) {
                if checked >= budget {
                    out_of_budget = true;
                    break;
                }
                checked += 1;
                let mut db = base.clone();
                for key in combo {
                    db.insert(&key.relation, key.constants.clone(), 1, false)
                        .map_err(|e| SolveError::Invalid(e.to_string()))?;
                }
                let cand = JoinPathCandidate::new(
                    q.clone(),
                    db,
                    s_keys.clone(),
                    t_keys.clone(),
                )?;
                if check_join_path(&cand).join_path_ok() {
                    let w = compute_witnesses(q, &cand.database).witnesses.len();
                    batch.push((w, cand.database));
                }
            }
            batch.sort_by_key(|(w, _)| *w);
            for (_, db) in batch {
                let cand =
                    JoinPathCandidate::new(q.clone(), db, s_keys.clone(), t_keys.clone())?;
                let cert = verify_ijp(&cand)?;
                if cert.is_valid() {
                    return Ok(SearchOutcome {
                        certificate: Some(cert),
                        candidates: checked,
                        exhausted: true,
                    });
                }
            }
            if out_of_budget {
                exhausted = false;
                break;
            }
        }
    }
    Ok(SearchOutcome { certificate: None, candidates: checked, exhausted })
}

fn tid_of(constants: &[usize], domain: usize) -> usize {
    constants.iter().fold(0, |acc, &c| acc * domain + (c - 1)) + 1
}

fn numeric_constants(db: &Database, key: &TupleKey) -> Option<Vec<usize>> {
    key.constants.iter().map(|&id| db.interner.name(id).parse().ok()).collect()
}

/// Emits the answer-set program that searches for an IJP of `q` over domain
/// {1..d} with the given endpoints: domain facts with tuple ids, the indb
/// guess, endpoint constraints, saturation-based resilience for the four
/// OR-property databases, the triangle isomorph block, and (optionally) the
/// weak-constraint witness minimization.
pub fn emit_dlp(
    q: &Query,
    domain: usize,
    endpoints: (&[String], &[String]),
    min_witnesses: bool,
) -> Result<String, SolveError> {
    let mut scratch = Database::new(Semantics::Set);
    for i in 1..=domain {
        scratch.interner.intern(&i.to_string());
    }
    for a in &q.atoms {
        scratch.ensure_relation(&a.relation);
    }
    let parse_all = |txt: &[String]| -> Result<Vec<TupleKey>, SolveError> {
        txt.iter()
            .map(|t| {
                scratch
                    .parse_tuple(t)
                    .map_err(|_| SolveError::Invalid(format!("bad endpoint tuple {t}")))
            })
            .collect()
    };
    let s_keys = parse_all(endpoints.0)?;
    let t_keys = parse_all(endpoints.1)?;
    let phi = tuple_sets_isomorphic(&s_keys, &t_keys)
        .ok_or_else(|| SolveError::Invalid("endpoints are not isomorphic".into()))?;

    let vars = q.variables();
    let var_term = |v: &str| v.to_uppercase();
    let var_list = vars.iter().map(|v| var_term(v)).join(",");
    let tid_list = (1..=q.atoms.len()).map(|i| format!("T{i}")).join(",");
    let witness_head = format!("witness({var_list},{tid_list})");
    // body atoms of the witness rule, reused all over
    let mut rels: Vec<(String, usize)> = Vec::new();
    for a in &q.atoms {
        let asp = a.relation.to_lowercase();
        if !rels.iter().any(|(r, _)| *r == asp) {
            rels.push((asp, a.vars.len()));
        }
    }
    let atom_body: Vec<String> = q
        .atoms
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let args = a.vars.iter().map(|v| var_term(v)).join(",");
            format!("{}(T{},{args})", a.relation.to_lowercase(), i + 1)
        })
        .collect();
    let indb_body: Vec<String> = q
        .atoms
        .iter()
        .enumerate()
        .map(|(i, a)| format!("indb({},T{},1)", a.relation.to_lowercase(), i + 1))
        .collect();

    let mut p = String::new();
    // 1. search space: every possible tuple, with a tuple id per relation
    for (rel, arity) in &rels {
        for combo in (0..*arity).map(|_| 1..=domain).multi_cartesian_product() {
            let tid = tid_of(&combo, domain);
            p.push_str(&format!("{rel}({tid},{}).\n", combo.iter().join(",")));
        }
    }
    p.push('\n');
    // 2. guess the candidate database and derive its witnesses
    for (rel, arity) in &rels {
        let pat = (0..*arity).map(|_| "_").join(",");
        p.push_str(&format!("indb({rel},Tid,1) | indb({rel},Tid,0) :- {rel}(Tid,{pat}).\n"));
    }
    p.push_str(&format!(
        "{witness_head} :- {},{}.\n",
        atom_body.join(","),
        indb_body.join(",")
    ));
    p.push_str(&format!(
        "number_of_witnesses(K) :- #count{{{var_list},{tid_list} : {witness_head} }} = K.\n\n"
    ));
    p.push_str(&format!("range_triangle(1..3).ijp_domain(1..{domain}).\n\n"));
    // 3. endpoint conditions
    let end_consts = |keys: &[TupleKey]| -> Vec<usize> {
        let mut cs: Vec<usize> = keys
            .iter()
            .filter_map(|k| numeric_constants(&scratch, k))
            .flatten()
            .collect();
        cs.sort();
        cs.dedup();
        cs
    };
    let s_consts = end_consts(&s_keys);
    let t_consts = end_consts(&t_keys);
    for c in &s_consts {
        p.push_str(&format!("end1const({c}).\n"));
    }
    for c in &t_consts {
        p.push_str(&format!("end2const({c}).\n"));
    }
    p.push('\n');
    for (e, keys) in [(1, &s_keys), (2, &t_keys)] {
        for (i, a) in q.atoms.iter().enumerate() {
            let args = a.vars.iter().map(|v| var_term(v)).join(",");
            let guards =
                a.vars.iter().map(|v| format!("end{e}const({})", var_term(v))).join(",");
            p.push_str(&format!(
                "end{e}witness({tid_list}):-{witness_head},indb({},T{},1),{}(T{},{args}),{guards}.\n",
                a.relation.to_lowercase(),
                i + 1,
                a.relation.to_lowercase(),
                i + 1,
            ));
        }
        p.push_str(&format!(
            ":-not#count{{{tid_list}:end{e}witness({tid_list})}}={}.\n",
            keys.len()
        ));
    }
    p.push('\n');
    for e in [1, 2] {
        let guards = vars.iter().map(|v| format!("end{e}const({})", var_term(v))).join(",");
        p.push_str(&format!(":- {witness_head},{guards}.\n"));
    }
    p.push('\n');
    // 4+5. saturation resilience of the four OR-property databases
    let pinned = |keys: &[TupleKey]| -> Vec<(String, usize)> {
        keys.iter()
            .map(|k| {
                let cs = numeric_constants(&scratch, k).expect("numeric endpoint");
                (k.relation.to_lowercase(), tid_of(&cs, domain))
            })
            .collect()
    };
    let s_pin = pinned(&s_keys);
    let t_pin = pinned(&t_keys);
    let removed: [Vec<(String, usize)>; 4] = [
        Vec::new(),
        s_pin.clone(),
        t_pin.clone(),
        s_pin.iter().chain(&t_pin).cloned().collect(),
    ];
    for (k, pins) in removed.iter().enumerate() {
        for (rel, tid) in pins {
            p.push_str(&format!("valid_res{}({rel},{tid},1).\n", k + 1));
            p.push_str(&format!("invalid_res{}({rel},{tid},1).\n", k + 1));
        }
    }
    p.push('\n');
    for prefix in ["invalid_res", "valid_res"] {
        for k in 1..=4 {
            for (rel, arity) in &rels {
                let pat = (0..*arity).map(|_| "_").join(",");
                p.push_str(&format!(
                    "{prefix}{k}({rel},Tid,1) | {prefix}{k}({rel},Tid,0) :- {rel}(Tid,{pat}).\n"
                ));
            }
        }
    }
    p.push('\n');
    let bound = |k: usize| -> String {
        let off = removed[k - 1].len().saturating_sub(if k == 1 { 0 } else { 1 });
        if off == 0 {
            "K".to_string()
        } else {
            format!("K+{off}")
        }
    };
    for k in 1..=4 {
        let survivors = q
            .atoms
            .iter()
            .enumerate()
            .map(|(i, a)| format!("invalid_res{k}({},T{},0)", a.relation.to_lowercase(), i + 1))
            .join(",");
        p.push_str(&format!("invalid_resilience{k} :- {witness_head},{survivors}.\n"));
        p.push_str(&format!(
            "invalid_resilience{k} :- #count{{Table,Tid: invalid_res{k}(Table,Tid,1)}} >= {},res(K).\n",
            bound(k)
        ));
    }
    p.push('\n');
    for k in 1..=4 {
        for (rel, arity) in &rels {
            let pat = (0..*arity).map(|_| "_").join(",");
            p.push_str(&format!(
                "invalid_res{k}({rel},Tid,0) :- invalid_resilience{k},{rel}(Tid,{pat}).\n"
            ));
            p.push_str(&format!(
                "invalid_res{k}({rel},Tid,1) :- invalid_resilience{k},{rel}(Tid,{pat}).\n"
            ));
        }
        p.push('\n');
    }
    for k in 1..=4 {
        p.push_str(&format!(":- not invalid_resilience{k}.\n"));
    }
    p.push('\n');
    for k in 1..=4 {
        let survivors = q
            .atoms
            .iter()
            .enumerate()
            .map(|(i, a)| format!("valid_res{k}({},T{},0)", a.relation.to_lowercase(), i + 1))
            .join(",");
        p.push_str(&format!(":- {witness_head},{survivors}.\n"));
        if k == 1 {
            p.push_str("res(K) :- #count{Table,Tid: valid_res1(Table,Tid,1)} = K.\n");
        } else {
            p.push_str(&format!(
                ":- not #count{{Table,Tid: valid_res{k}(Table,Tid,1)}} = {},res(K).\n",
                bound(k)
            ));
        }
    }
    p.push('\n');
    // 6. non-leaking triangle via three isomorphs
    let shift = (domain + 1) * 4;
    let mut iso_lines: Vec<String> = Vec::new();
    for &c in &s_consts {
        let img: usize = scratch
            .interner
            .get(&c.to_string())
            .and_then(|id| phi.get(&id))
            .map(|&id| scratch.interner.name(id).parse().unwrap())
            .expect("endpoint constant maps through the isomorphism");
        iso_lines.push(format!("iso_map({c},1,{c})."));
        iso_lines.push(format!("iso_map({c},2,{img})."));
        iso_lines.push(format!("iso_map({c},3,{c})."));
    }
    for &c in &t_consts {
        iso_lines.push(format!("iso_map({c},1,{c})."));
        iso_lines.push(format!("iso_map({c},2,{}).", c + shift));
        iso_lines.push(format!("iso_map({c},3,{}).", c + shift));
    }
    iso_lines.dedup();
    for l in iso_lines {
        p.push_str(&l);
        p.push('\n');
    }
    p.push_str(&format!(
        "iso_map(C,I,X) :- range_triangle(I),ijp_domain(C),X = C+({domain}+1)*I,not end1const(C),not end2const(C).\n\n"
    ));
    for (rel, arity) in &rels {
        for copy in 1..=3 {
            let src = (0..*arity).map(|i| format!("V{i}")).join(",");
            let dst = (0..*arity).map(|i| format!("VI{i}")).join(",");
            let maps = (0..*arity).map(|i| format!("iso_map(V{i},{copy},VI{i})")).join(",");
            p.push_str(&format!(
                "ijp_iso_{copy}_{rel}(TID,{dst}):-indb({rel},TID,1),{rel}(TID,{src}),{maps}.\n"
            ));
        }
        let args = (0..*arity).map(|i| format!("V{i}")).join(",");
        for copy in 1..=3 {
            p.push_str(&format!(
                "ijp_iso_triangle_{rel}(TID,{args}) :- ijp_iso_{copy}_{rel}(TID,{args}).\n"
            ));
        }
    }
    let tri_body = q
        .atoms
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let args = a.vars.iter().map(|v| var_term(v)).join(",");
            format!("ijp_iso_triangle_{}(T{},{args})", a.relation.to_lowercase(), i + 1)
        })
        .join(",");
    p.push_str(&format!("ijp_triangle_witness({var_list}) :- {tri_body}.\n"));
    p.push_str(&format!(
        ":- number_of_witnesses(K),not #count{{{var_list} : ijp_triangle_witness({var_list}) }}= 3*K.\n\n"
    ));
    // 7. optional certificate minimization
    if min_witnesses {
        p.push_str(&format!(":~ {witness_head}. [1@1,{var_list}]\n\n"));
    }
    p.push_str("#show.\n");
    p.push_str("#show number_of_witnesses(K) : number_of_witnesses(K).\n");
    p.push_str(&format!("#show witness({var_list}) : {witness_head}.\n"));
    p.push_str("#show res(K) : res(K).\n");
    Ok(p)
}

/// Decodes a solver model line (`res(K) witness(...)...`) into a candidate
/// database, infers the endpoints from the given constant sets, and
/// re-verifies natively — the external solver is never trusted.
pub fn parse_asp_model(
    q: &Query,
    end1: &[usize],
    end2: &[usize],
    text: &str,
) -> Result<IJPCertificate, SolveError> {
    let line = text
        .lines()
        .filter(|l| l.contains("witness(") && l.contains("res("))
        .next_back()
        .ok_or_else(|| SolveError::Invalid("no model line with res/witness atoms".into()))?;
    let grab = |token: &str| -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut rest = line;
        while let Some(i) = rest.find(token) {
            rest = &rest[i + token.len()..];
            if let Some(j) = rest.find(')') {
                let args: Option<Vec<usize>> =
                    rest[..j].split(',').map(|a| a.trim().parse().ok()).collect();
                if let Some(a) = args {
                    out.push(a);
                }
            }
        }
        out
    };
    let res_atoms = grab("res(");
    let claimed = match res_atoms.as_slice() {
        [k] if k.len() == 1 => k[0] as u64,
        _ => return Err(SolveError::Invalid("expected exactly one res(K) atom".into())),
    };
    let vars = q.variables();
    let mut d = Database::new(Semantics::Set);
    for a in &q.atoms {
        d.ensure_relation(&a.relation);
    }
    let witnesses = grab("witness(");
    if witnesses.is_empty() {
        return Err(SolveError::Invalid("no witness atoms in model".into()));
    }
    for w in &witnesses {
        if w.len() != vars.len() {
            return Err(SolveError::Invalid(format!(
                "witness arity {} does not match the query's {} variables",
                w.len(),
                vars.len()
            )));
        }
        for a in &q.atoms {
            let names: Vec<String> = a
                .vars
                .iter()
                .map(|v| w[vars.iter().position(|x| x == v).unwrap()].to_string())
                .collect();
            let refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
            let ids: Vec<ConstId> = refs.iter().map(|s| d.interner.intern(s)).collect();
            let key = TupleKey { relation: a.relation.clone(), constants: ids.clone() };
            if d.record(&key).is_none() {
                d.insert(&a.relation, ids, 1, a.exogenous)
                    .map_err(|e| SolveError::Invalid(e.to_string()))?;
            }
        }
    }
    let in_set = |key: &TupleKey, set: &[usize]| -> bool {
        numeric_constants(&d, key)
            .is_some_and(|cs| cs.iter().all(|c| set.contains(c)))
    };
    let mut start = Vec::new();
    let mut terminal = Vec::new();
    for (key, _) in d.tuples() {
        let s = in_set(&key, end1);
        let t = in_set(&key, end2);
        if s && t {
            return Err(SolveError::Invalid(format!(
                "tuple {} matches both endpoint constant sets",
                d.format_tuple(&key)
            )));
        }
        if s {
            start.push(key);
        } else if t {
            terminal.push(key);
        }
    }
    let cand = JoinPathCandidate::new(q.clone(), d, start, terminal)?;
    let cert = verify_ijp(&cand)?;
    if !cert.is_valid() {
        return Err(SolveError::Invalid(format!(
            "model failed native verification: {} check",
            cert.checks.first_failure().unwrap_or("unknown")
        )));
    }
    if cert.resilience_c != claimed {
        return Err(SolveError::Invalid(format!(
            "model claims resilience {claimed} but native value is {}",
            cert.resilience_c
        )));
    }
    Ok(cert)
}
