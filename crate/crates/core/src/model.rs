//! Query and database representation: parsing, CSV ingestion, canonical
//! databases, and tuple-set isomorphism.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Dense identifier for an interned constant.
pub type ConstId = u32;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("syntax error at position {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("constants not supported")]
    ConstantsNotSupported,
    #[error("query not connected")]
    NotConnected,
    #[error("{0}")]
    Load(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Semantics {
    Set,
    Bag,
}

impl fmt::Display for Semantics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Semantics::Set => write!(f, "set"),
            Semantics::Bag => write!(f, "bag"),
        }
    }
}

impl std::str::FromStr for Semantics {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "set" => Ok(Semantics::Set),
            "bag" => Ok(Semantics::Bag),
            other => Err(format!("unknown semantics {other:?} (expected set or bag)")),
        }
    }
}

/// One atom of a conjunctive query body.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Atom {
    pub relation: String,
    pub vars: Vec<String>,
    pub exogenous: bool,
}

impl Atom {
    pub fn var_set(&self) -> HashSet<&str> {
        self.vars.iter().map(|v| v.as_str()).collect()
    }
}

/// A Boolean conjunctive query: an ordered list of atoms over variables.
///
/// Invariants enforced at construction: connected hypergraph, no constants,
/// non-empty body.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub name: String,
    pub atoms: Vec<Atom>,
}

impl Query {
    pub fn new(name: impl Into<String>, atoms: Vec<Atom>) -> Result<Self, ModelError> {
        let q = Query { name: name.into(), atoms };
        if q.atoms.is_empty() {
            return Err(ModelError::Syntax { pos: 0, msg: "empty body".into() });
        }
        if !q.is_connected() {
            return Err(ModelError::NotConnected);
        }
        Ok(q)
    }

    /// Query variables in order of first occurrence.
    pub fn variables(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for a in &self.atoms {
            for v in &a.vars {
                if seen.insert(v.as_str()) {
                    out.push(v.as_str());
                }
            }
        }
        out
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_self_join_free(&self) -> bool {
        let mut rels = HashSet::new();
        self.atoms.iter().all(|a| rels.insert(a.relation.as_str()))
    }

    fn is_connected(&self) -> bool {
        if self.atoms.len() <= 1 {
            return true;
        }
        let mut reached = vec![false; self.atoms.len()];
        reached[0] = true;
        let mut frontier = vec![0usize];
        while let Some(i) = frontier.pop() {
            let vars = self.atoms[i].var_set();
            for (j, a) in self.atoms.iter().enumerate() {
                if !reached[j] && a.vars.iter().any(|v| vars.contains(v.as_str())) {
                    reached[j] = true;
                    frontier.push(j);
                }
            }
        }
        reached.into_iter().all(|r| r)
    }

    /// Whether tuples of `relation` are exogenous at the atom level.
    pub fn relation_exogenous(&self, relation: &str) -> bool {
        self.atoms.iter().any(|a| a.relation == relation && a.exogenous)
    }

    pub fn render(&self) -> String {
        let body = self
            .atoms
            .iter()
            .map(|a| {
                format!(
                    "{}{}({})",
                    if a.exogenous { "*" } else { "" },
                    a.relation,
                    a.vars.join(",")
                )
            })
            .collect::<Vec<_>>()
            .join(", ");
        format!("{} :- {}.", self.name, body)
    }
}

/// Parses `name :- [*]Rel(v1,...,vk) {, [*]Rel(...)}* .` where `*` marks an
/// exogenous atom. Constants and disconnected queries are rejected.
pub fn parse_query(text: &str) -> Result<Query, ModelError> {
    let mut p = Parser { text, pos: 0 };
    p.skip_ws();
    let name = p.ident("query name")?;
    p.skip_ws();
    p.expect(":-")?;
    let mut atoms = Vec::new();
    loop {
        p.skip_ws();
        let exogenous = p.eat('*');
        p.skip_ws();
        let relation = p.ident("relation name")?;
        p.skip_ws();
        p.expect("(")?;
        let mut vars = Vec::new();
        loop {
            p.skip_ws();
            let start = p.pos;
            let tok = p.term()?;
            if tok.chars().next().is_some_and(|c| c.is_ascii_digit()) || tok.starts_with('\'') {
                let _ = start;
                return Err(ModelError::ConstantsNotSupported);
            }
            vars.push(tok);
            p.skip_ws();
            if p.eat(',') {
                continue;
            }
            p.expect(")")?;
            break;
        }
        if vars.is_empty() {
            return Err(ModelError::Syntax { pos: p.pos, msg: "empty atom".into() });
        }
        atoms.push(Atom { relation, vars, exogenous });
        p.skip_ws();
        if p.eat(',') {
            continue;
        }
        p.expect(".")?;
        break;
    }
    p.skip_ws();
    if p.pos != p.text.len() {
        return Err(ModelError::Syntax { pos: p.pos, msg: "trailing input".into() });
    }
    Query::new(name, atoms)
}

struct Parser<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while self.text[self.pos..].starts_with(|c: char| c.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn eat(&mut self, c: char) -> bool {
        if self.text[self.pos..].starts_with(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, s: &str) -> Result<(), ModelError> {
        if self.text[self.pos..].starts_with(s) {
            self.pos += s.len();
            Ok(())
        } else {
            Err(ModelError::Syntax { pos: self.pos, msg: format!("expected {s:?}") })
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, ModelError> {
        let rest = &self.text[self.pos..];
        let len = rest
            .char_indices()
            .take_while(|(i, c)| {
                if *i == 0 {
                    c.is_ascii_alphabetic() || *c == '_'
                } else {
                    c.is_ascii_alphanumeric() || *c == '_'
                }
            })
            .count();
        if len == 0 {
            return Err(ModelError::Syntax { pos: self.pos, msg: format!("expected {what}") });
        }
        let s = rest[..len].to_string();
        self.pos += len;
        Ok(s)
    }

    /// A variable or constant token inside an atom.
    fn term(&mut self) -> Result<String, ModelError> {
        let rest = &self.text[self.pos..];
        let len = rest
            .chars()
            .take_while(|c| c.is_ascii_alphanumeric() || *c == '_' || *c == '\'')
            .count();
        if len == 0 {
            return Err(ModelError::Syntax { pos: self.pos, msg: "expected term".into() });
        }
        let s = rest[..len].to_string();
        self.pos += len;
        Ok(s)
    }
}

/// String-to-id constant interner. Ids are dense and allocation-ordered.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Interner {
    names: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, ConstId>,
}

impl Interner {
    pub fn intern(&mut self, s: &str) -> ConstId {
        if self.index.is_empty() && !self.names.is_empty() {
            self.rebuild();
        }
        if let Some(&id) = self.index.get(s) {
            return id;
        }
        let id = self.names.len() as ConstId;
        self.names.push(s.to_string());
        self.index.insert(s.to_string(), id);
        id
    }

    pub fn get(&self, s: &str) -> Option<ConstId> {
        if let Some(&id) = self.index.get(s) {
            return Some(id);
        }
        // serde round-trips drop the index
        self.names.iter().position(|n| n == s).map(|i| i as ConstId)
    }

    pub fn name(&self, id: ConstId) -> &str {
        &self.names[id as usize]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    fn rebuild(&mut self) {
        self.index =
            self.names.iter().enumerate().map(|(i, n)| (n.clone(), i as ConstId)).collect();
    }
}

/// A unique tuple of a relation: constant vector plus multiplicity and an
/// exogenous flag. Duplicate rows merge into one record with summed
/// multiplicity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TupleRecord {
    pub constants: Vec<ConstId>,
    pub multiplicity: u32,
    pub exogenous: bool,
}

/// Identity of a unique tuple: relation name plus constant vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TupleKey {
    pub relation: String,
    pub constants: Vec<ConstId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Database {
    pub relations: BTreeMap<String, Vec<TupleRecord>>,
    pub semantics: Semantics,
    pub interner: Interner,
}

impl Database {
    pub fn new(semantics: Semantics) -> Self {
        Database { relations: BTreeMap::new(), semantics, interner: Interner::default() }
    }

    pub fn ensure_relation(&mut self, name: &str) {
        self.relations.entry(name.to_string()).or_default();
    }

    /// Inserts a row, merging duplicates by summing multiplicity. The
    /// exogenous flag of a merged record is the OR of both rows.
    pub fn insert(
        &mut self,
        relation: &str,
        constants: Vec<ConstId>,
        multiplicity: u32,
        exogenous: bool,
    ) -> Result<(), ModelError> {
        if multiplicity == 0 {
            return Err(ModelError::Load(format!("non-positive mult in relation {relation}")));
        }
        if self.semantics == Semantics::Set && multiplicity > 1 {
            return Err(ModelError::Load(format!(
                "mult {multiplicity} > 1 not allowed under set semantics in relation {relation}"
            )));
        }
        let rows = self.relations.entry(relation.to_string()).or_default();
        if let Some(first) = rows.first() {
            if first.constants.len() != constants.len() {
                return Err(ModelError::Load(format!(
                    "arity mismatch in relation {relation}: {} vs {}",
                    first.constants.len(),
                    constants.len()
                )));
            }
        }
        if let Some(r) = rows.iter_mut().find(|r| r.constants == constants) {
            if self.semantics == Semantics::Set {
                return Err(ModelError::Load(format!(
                    "duplicate row under set semantics in relation {relation}"
                )));
            }
            r.multiplicity += multiplicity;
            r.exogenous |= exogenous;
        } else {
            rows.push(TupleRecord { constants, multiplicity, exogenous });
        }
        Ok(())
    }

    /// Convenience insert with named constants.
    pub fn insert_named(
        &mut self,
        relation: &str,
        constants: &[&str],
        multiplicity: u32,
        exogenous: bool,
    ) -> Result<(), ModelError> {
        let ids = constants.iter().map(|c| self.interner.intern(c)).collect();
        self.insert(relation, ids, multiplicity, exogenous)
    }

    pub fn tuples(&self) -> impl Iterator<Item = (TupleKey, &TupleRecord)> + '_ {
        self.relations.iter().flat_map(|(rel, rows)| {
            rows.iter().map(move |r| {
                (TupleKey { relation: rel.clone(), constants: r.constants.clone() }, r)
            })
        })
    }

    pub fn tuple_count(&self) -> usize {
        self.relations.values().map(|rows| rows.len()).sum()
    }

    pub fn record(&self, key: &TupleKey) -> Option<&TupleRecord> {
        self.relations.get(&key.relation)?.iter().find(|r| r.constants == key.constants)
    }

    pub fn multiplicity(&self, key: &TupleKey) -> u32 {
        self.record(key).map_or(0, |r| r.multiplicity)
    }

    /// Effective exogenous status: OR of the tuple flag and the atom flag.
    pub fn is_exogenous(&self, q: &Query, key: &TupleKey) -> bool {
        q.relation_exogenous(&key.relation) || self.record(key).is_some_and(|r| r.exogenous)
    }

    /// Returns a copy with the given tuples removed (all copies).
    pub fn without(&self, keys: &[TupleKey]) -> Database {
        let mut d = self.clone();
        for k in keys {
            if let Some(rows) = d.relations.get_mut(&k.relation) {
                rows.retain(|r| r.constants != k.constants);
            }
        }
        d
    }

    /// Marks the given tuples exogenous in place.
    pub fn mark_exogenous(&mut self, keys: &[TupleKey]) {
        for k in keys {
            if let Some(rows) = self.relations.get_mut(&k.relation) {
                for r in rows.iter_mut() {
                    if r.constants == k.constants {
                        r.exogenous = true;
                    }
                }
            }
        }
    }

    pub fn format_tuple(&self, key: &TupleKey) -> String {
        let consts: Vec<String> = key
            .constants
            .iter()
            .map(|&c| {
                if (c as usize) < self.interner.len() {
                    self.interner.name(c).to_string()
                } else {
                    format!("#{c}")
                }
            })
            .collect();
        format!("{}({})", key.relation, consts.join(","))
    }

    /// Parses `Rel(c1,...,ck)` against this database's interner.
    pub fn parse_tuple(&self, text: &str) -> Result<TupleKey, ModelError> {
        let text = text.trim();
        let open = text.find('(').ok_or_else(|| ModelError::Load(format!(
            "malformed tuple {text:?}, expected Rel(c1,...)"
        )))?;
        if !text.ends_with(')') {
            return Err(ModelError::Load(format!("malformed tuple {text:?}")));
        }
        let relation = text[..open].trim().to_string();
        let inner = &text[open + 1..text.len() - 1];
        let mut constants = Vec::new();
        for part in inner.split(',') {
            let part = part.trim();
            let id = self
                .interner
                .get(part)
                .ok_or_else(|| ModelError::Load(format!("unknown constant {part:?}")))?;
            constants.push(id);
        }
        Ok(TupleKey { relation, constants })
    }
}

/// Loads a database from a directory of `<Relation>.csv` files with header
/// `c1,...,ck[,mult][,exo]`. `#`-prefixed lines are ignored.
pub fn load_database(dir: &Path, semantics: Semantics) -> Result<Database, ModelError> {
    let mut db = Database::new(semantics);
    let mut entries: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    entries.sort();
    for path in entries {
        let relation = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| ModelError::Load(format!("bad file name {path:?}")))?
            .to_string();
        let content = std::fs::read_to_string(&path)?;
        let mut lines = content.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
        let header = lines
            .next()
            .ok_or_else(|| ModelError::Load(format!("empty file for relation {relation}")))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        let exo_col = cols.iter().position(|c| *c == "exo");
        let mult_col = cols.iter().position(|c| *c == "mult");
        if semantics == Semantics::Set && mult_col.is_some() {
            return Err(ModelError::Load(format!(
                "mult column not allowed under set semantics in relation {relation}"
            )));
        }
        let arity = cols.len() - exo_col.map_or(0, |_| 1) - mult_col.map_or(0, |_| 1);
        if arity == 0 {
            return Err(ModelError::Load(format!("relation {relation} has arity 0")));
        }
        db.ensure_relation(&relation);
        for line in lines {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != cols.len() {
                return Err(ModelError::Load(format!(
                    "arity mismatch vs header in relation {relation}: row {line:?}"
                )));
            }
            let mut constants = Vec::with_capacity(arity);
            for (i, f) in fields.iter().enumerate() {
                if Some(i) == mult_col || Some(i) == exo_col {
                    continue;
                }
                constants.push(db.interner.intern(f));
            }
            let mult = match mult_col {
                Some(i) => fields[i].parse::<i64>().map_err(|_| {
                    ModelError::Load(format!("bad mult {:?} in relation {relation}", fields[i]))
                })?,
                None => 1,
            };
            if mult <= 0 {
                return Err(ModelError::Load(format!("non-positive mult in relation {relation}")));
            }
            let exo = match exo_col {
                Some(i) => match fields[i] {
                    "0" => false,
                    "1" => true,
                    other => {
                        return Err(ModelError::Load(format!(
                            "bad exo value {other:?} in relation {relation}"
                        )))
                    }
                },
                None => false,
            };
            db.insert(&relation, constants, mult as u32, exo)?;
        }
    }
    Ok(db)
}

/// Writes the database back out in the CSV directory format of
/// [`load_database`].
pub fn save_database(db: &Database, dir: &Path) -> Result<(), ModelError> {
    std::fs::create_dir_all(dir)?;
    for (rel, rows) in &db.relations {
        let arity = rows.first().map_or(1, |r| r.constants.len());
        let mut out = String::new();
        let mut cols: Vec<String> = (1..=arity).map(|i| format!("c{i}")).collect();
        if db.semantics == Semantics::Bag {
            cols.push("mult".into());
        }
        cols.push("exo".into());
        out.push_str(&cols.join(","));
        out.push('\n');
        for r in rows {
            let mut fields: Vec<String> =
                r.constants.iter().map(|&c| db.interner.name(c).to_string()).collect();
            if db.semantics == Semantics::Bag {
                fields.push(r.multiplicity.to_string());
            }
            fields.push(if r.exogenous { "1" } else { "0" }.to_string());
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        std::fs::write(dir.join(format!("{rel}.csv")), out)?;
    }
    Ok(())
}

/// The union of `copies` canonical databases on pairwise disjoint fresh
/// constants. Each copy assigns every query variable a distinct constant, so
/// each copy yields exactly one witness.
pub fn canonical_database(q: &Query, copies: usize) -> Database {
    assert!(copies >= 1, "copies must be >= 1");
    let mut db = Database::new(Semantics::Set);
    let vars = q.variables();
    for a in &q.atoms {
        db.ensure_relation(&a.relation);
    }
    for copy in 0..copies {
        let assign: HashMap<&str, ConstId> = vars
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let name = (copy * vars.len() + i + 1).to_string();
                (*v, db.interner.intern(&name))
            })
            .collect();
        for a in &q.atoms {
            let consts: Vec<ConstId> = a.vars.iter().map(|v| assign[v.as_str()]).collect();
            let _ = db.insert(&a.relation, consts, 1, false);
        }
    }
    db
}

/// Searches for a constant bijection mapping tuple set `a` onto tuple set `b`
/// position-wise per relation. Identical sets return the identity.
pub fn tuple_sets_isomorphic(a: &[TupleKey], b: &[TupleKey]) -> Option<HashMap<ConstId, ConstId>> {
    if a.len() != b.len() {
        return None;
    }
    let mut by_rel_a: BTreeMap<&str, Vec<&TupleKey>> = BTreeMap::new();
    let mut by_rel_b: BTreeMap<&str, Vec<&TupleKey>> = BTreeMap::new();
    for t in a {
        by_rel_a.entry(&t.relation).or_default().push(t);
    }
    for t in b {
        by_rel_b.entry(&t.relation).or_default().push(t);
    }
    if by_rel_a.keys().ne(by_rel_b.keys()) {
        return None;
    }
    for (rel, ts) in &by_rel_a {
        if ts.len() != by_rel_b[rel].len() {
            return None;
        }
    }
    let groups: Vec<(&Vec<&TupleKey>, &Vec<&TupleKey>)> =
        by_rel_a.iter().map(|(rel, ts)| (ts, &by_rel_b[rel])).collect();
    let mut fwd: HashMap<ConstId, ConstId> = HashMap::new();
    let mut rev: HashMap<ConstId, ConstId> = HashMap::new();
    if match_groups(&groups, 0, &mut vec![], &mut fwd, &mut rev) {
        Some(fwd)
    } else {
        None
    }
}

fn match_groups(
    groups: &[(&Vec<&TupleKey>, &Vec<&TupleKey>)],
    gi: usize,
    used: &mut Vec<bool>,
    fwd: &mut HashMap<ConstId, ConstId>,
    rev: &mut HashMap<ConstId, ConstId>,
) -> bool {
    if gi == groups.len() {
        return true;
    }
    let (ta, tb) = groups[gi];
    match_in_group(groups, gi, 0, &mut vec![false; tb.len()], ta, tb, fwd, rev, used)
}

#[allow(clippy::too_many_arguments)]
fn match_in_group(
    groups: &[(&Vec<&TupleKey>, &Vec<&TupleKey>)],
    gi: usize,
    ai: usize,
    used_b: &mut Vec<bool>,
    ta: &[&TupleKey],
    tb: &[&TupleKey],
    fwd: &mut HashMap<ConstId, ConstId>,
    rev: &mut HashMap<ConstId, ConstId>,
    used: &mut Vec<bool>,
) -> bool {
    if ai == ta.len() {
        return match_groups(groups, gi + 1, used, fwd, rev);
    }
    for bi in 0..tb.len() {
        if used_b[bi] {
            continue;
        }
        let mut added: Vec<ConstId> = Vec::new();
        let mut ok = true;
        for (ca, cb) in ta[ai].constants.iter().zip(tb[bi].constants.iter()) {
            match (fwd.get(ca), rev.get(cb)) {
                (Some(x), _) if x != cb => {
                    ok = false;
                }
                (_, Some(y)) if y != ca => {
                    ok = false;
                }
                (None, None) => {
                    fwd.insert(*ca, *cb);
                    rev.insert(*cb, *ca);
                    added.push(*ca);
                }
                _ => {}
            }
            if !ok {
                break;
            }
        }
        if ok {
            used_b[bi] = true;
            if match_in_group(groups, gi, ai + 1, used_b, ta, tb, fwd, rev, used) {
                return true;
            }
            used_b[bi] = false;
        }
        for ca in added {
            let cb = fwd.remove(&ca).unwrap();
            rev.remove(&cb);
        }
    }
    false
}
