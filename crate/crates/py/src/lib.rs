//! Python bindings for the resilience / responsibility solver.
//!
//! Build with `python/build_ext.py`, which compiles this cdylib and copies it
//! next to the smoke test as `resq_py.so`.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use resq_core::analysis::{classify_res, classify_rsp, Problem};
use resq_core::approx::{flow_ct, flow_cw, lp_rounding};
use resq_core::flow::{resilience_via_flow, responsibility_via_flow};
use resq_core::gen::generate_instance;
use resq_core::ijp::{search_ijp, verify_ijp, JoinPathCandidate};
use resq_core::resilience::{brute_force_resilience, resilience_ilp, resilience_lp};
use resq_core::responsibility::{
    brute_force_responsibility, responsibility_ilp, responsibility_milp,
};
use resq_core::{compute_witnesses, load_database, parse_query, save_database, Semantics};

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn semantics_of(name: &str) -> PyResult<Semantics> {
    match name {
        "set" => Ok(Semantics::Set),
        "bag" => Ok(Semantics::Bag),
        other => Err(err(format!("unknown semantics {other}"))),
    }
}

/// A Boolean conjunctive query.
#[pyclass(name = "Query", from_py_object)]
#[derive(Clone)]
struct PyQuery {
    inner: resq_core::Query,
}

#[pymethods]
impl PyQuery {
    /// Parse a query from text, e.g. `q :- R(x,y), S(y,z).`
    #[new]
    fn new(text: &str) -> PyResult<Self> {
        Ok(Self { inner: parse_query(text).map_err(err)? })
    }

    fn render(&self) -> String {
        self.inner.render()
    }

    #[getter]
    fn atom_count(&self) -> usize {
        self.inner.atoms.len()
    }

    /// Complexity verdict for RES or RSP: "ptime" or "npc", plus the reason.
    #[pyo3(signature = (problem="res", semantics="set", tuple_relation=None))]
    fn classify(
        &self,
        problem: &str,
        semantics: &str,
        tuple_relation: Option<&str>,
    ) -> PyResult<(String, String)> {
        let sem = semantics_of(semantics)?;
        let v = match problem {
            "res" => classify_res(&self.inner, sem),
            "rsp" => {
                let rel = tuple_relation.ok_or_else(|| err("rsp needs tuple_relation"))?;
                classify_rsp(&self.inner, sem, rel)
            }
            other => return Err(err(format!("unknown problem {other}"))),
        };
        Ok((format!("{:?}", v.verdict).to_lowercase(), v.reason))
    }

    fn __repr__(&self) -> String {
        format!("Query({:?})", self.inner.render())
    }
}

/// A set- or bag-semantics database with per-tuple exogenous flags.
#[pyclass(name = "Database")]
struct PyDatabase {
    inner: resq_core::Database,
}

#[pymethods]
impl PyDatabase {
    #[new]
    #[pyo3(signature = (semantics="set"))]
    fn new(semantics: &str) -> PyResult<Self> {
        Ok(Self { inner: resq_core::Database::new(semantics_of(semantics)?) })
    }

    /// Load a directory with one CSV per relation.
    #[staticmethod]
    #[pyo3(signature = (dir, semantics="set"))]
    fn load(dir: &str, semantics: &str) -> PyResult<Self> {
        Ok(Self { inner: load_database(dir.as_ref(), semantics_of(semantics)?).map_err(err)? })
    }

    /// Random instance: `tuples` tuples per relation over constants 1..=domain.
    #[staticmethod]
    #[pyo3(signature = (query, domain, tuples, semantics="set", max_bag=5, seed=0))]
    fn generate(
        query: &PyQuery,
        domain: usize,
        tuples: usize,
        semantics: &str,
        max_bag: u32,
        seed: u64,
    ) -> PyResult<Self> {
        let d = generate_instance(&query.inner, domain, tuples, semantics_of(semantics)?, max_bag, seed)
            .map_err(err)?;
        Ok(Self { inner: d })
    }

    #[pyo3(signature = (relation, constants, multiplicity=1, exogenous=false))]
    fn insert(
        &mut self,
        relation: &str,
        constants: Vec<String>,
        multiplicity: u32,
        exogenous: bool,
    ) -> PyResult<()> {
        let refs: Vec<&str> = constants.iter().map(String::as_str).collect();
        self.inner
            .insert_named(relation, &refs, multiplicity, exogenous)
            .map_err(err)?;
        Ok(())
    }

    fn save(&self, dir: &str) -> PyResult<()> {
        std::fs::create_dir_all(dir).map_err(err)?;
        save_database(&self.inner, dir.as_ref()).map_err(err)
    }

    #[getter]
    fn tuple_count(&self) -> usize {
        self.inner.tuple_count()
    }

    fn tuples(&self) -> Vec<String> {
        self.inner
            .tuples()
            .map(|(k, _)| self.inner.format_tuple(&k))
            .collect()
    }

    /// Witnesses as lists of tuple strings.
    fn witnesses(&self, query: &PyQuery) -> Vec<Vec<String>> {
        let ws = compute_witnesses(&query.inner, &self.inner);
        ws.witnesses
            .iter()
            .map(|w| w.tuples.iter().map(|k| self.inner.format_tuple(k)).collect())
            .collect()
    }

    fn __len__(&self) -> usize {
        self.inner.tuple_count()
    }
}

fn res_answer<'py>(
    py: Python<'py>,
    d: &resq_core::Database,
    a: resq_core::resilience::ResilienceAnswer,
) -> PyResult<Bound<'py, PyDict>> {
    let out = PyDict::new(py);
    out.set_item("value", a.value)?;
    out.set_item("method", format!("{:?}", a.method).to_lowercase())?;
    out.set_item(
        "contingency",
        a.contingency.iter().map(|k| d.format_tuple(k)).collect::<Vec<_>>(),
    )?;
    out.set_item("lp_bound", a.lp_bound)?;
    Ok(out)
}

/// Resilience of `query` over `db`.
///
/// method: ilp | lp | flow | brute | round | flow-ct | flow-cw
#[pyfunction]
#[pyo3(signature = (query, db, method="ilp"))]
fn resilience<'py>(
    py: Python<'py>,
    query: &PyQuery,
    db: &PyDatabase,
    method: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let (q, d) = (&query.inner, &db.inner);
    let a = match method {
        "ilp" => resilience_ilp(q, d),
        "lp" => resilience_lp(q, d),
        "flow" => resilience_via_flow(q, d),
        "brute" => brute_force_resilience(q, d),
        "round" => lp_rounding(q, d, Problem::Res, None).map(|o| o.res.unwrap()),
        "flow-ct" => flow_ct(q, d, Problem::Res, None).map(|o| o.res.unwrap()),
        "flow-cw" => flow_cw(q, d, Problem::Res, None).map(|o| o.res.unwrap()),
        other => return Err(err(format!("unknown method {other}"))),
    }
    .map_err(err)?;
    res_answer(py, d, a)
}

/// Causal responsibility of `tuple` (e.g. "R(1,2)") for `query` over `db`.
///
/// method: ilp | milp | flow | brute | round | flow-ct | flow-cw
#[pyfunction]
#[pyo3(signature = (query, db, tuple, method="ilp"))]
fn responsibility<'py>(
    py: Python<'py>,
    query: &PyQuery,
    db: &PyDatabase,
    tuple: &str,
    method: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let (q, d) = (&query.inner, &db.inner);
    let t = d.parse_tuple(tuple).map_err(err)?;
    let a = match method {
        "ilp" => responsibility_ilp(q, d, &t),
        "milp" => responsibility_milp(q, d, &t),
        "flow" => responsibility_via_flow(q, d, &t),
        "brute" => brute_force_responsibility(q, d, &t),
        "round" => lp_rounding(q, d, Problem::Rsp, Some(&t)).map(|o| o.rsp.unwrap()),
        "flow-ct" => flow_ct(q, d, Problem::Rsp, Some(&t)).map(|o| o.rsp.unwrap()),
        "flow-cw" => flow_cw(q, d, Problem::Rsp, Some(&t)).map(|o| o.rsp.unwrap()),
        other => return Err(err(format!("unknown method {other}"))),
    }
    .map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("value", a.value)?;
    out.set_item("rho", a.rho)?;
    out.set_item("method", format!("{:?}", a.method).to_lowercase())?;
    out.set_item(
        "contingency",
        a.contingency.iter().map(|k| d.format_tuple(k)).collect::<Vec<_>>(),
    )?;
    out.set_item("set_based_t", a.set_based_t)?;
    Ok(out)
}

fn cert_dict<'py>(
    py: Python<'py>,
    cert: &resq_core::ijp::IJPCertificate,
) -> PyResult<Bound<'py, PyDict>> {
    let c = &cert.candidate;
    let d = &c.database;
    let out = PyDict::new(py);
    out.set_item("valid", cert.is_valid())?;
    out.set_item("resilience_c", cert.resilience_c)?;
    out.set_item(
        "database",
        d.tuples().map(|(k, _)| d.format_tuple(&k)).collect::<Vec<_>>(),
    )?;
    out.set_item("start", c.start.iter().map(|k| d.format_tuple(k)).collect::<Vec<_>>())?;
    out.set_item("terminal", c.terminal.iter().map(|k| d.format_tuple(k)).collect::<Vec<_>>())?;
    let checks = PyDict::new(py);
    checks.set_item("reduced", cert.checks.reduced)?;
    checks.set_item("connected", cert.checks.connected)?;
    checks.set_item("endpoints_valid", cert.checks.endpoints_valid)?;
    checks.set_item("or_property", cert.checks.or_property)?;
    checks.set_item("nonleaking_triangle", cert.checks.nonleaking_triangle)?;
    out.set_item("checks", checks)?;
    Ok(out)
}

/// Verify an Independent Join Path candidate given endpoint tuple strings.
#[pyfunction]
fn verify_ijp_candidate<'py>(
    py: Python<'py>,
    query: &PyQuery,
    db: &PyDatabase,
    start: Vec<String>,
    terminal: Vec<String>,
) -> PyResult<Bound<'py, PyDict>> {
    let d = db.inner.clone();
    let parse = |xs: &[String]| -> PyResult<Vec<_>> {
        xs.iter().map(|t| d.parse_tuple(t).map_err(err)).collect()
    };
    let s = parse(&start)?;
    let t = parse(&terminal)?;
    let cand = JoinPathCandidate::new(query.inner.clone(), d, s, t).map_err(err)?;
    let cert = verify_ijp(&cand).map_err(err)?;
    cert_dict(py, &cert)
}

/// Search for an Independent Join Path certificate over constants 1..=domain.
/// Returns the certificate dict or None.
#[pyfunction]
#[pyo3(signature = (query, domain, budget=200_000))]
fn search_ijp_certificate<'py>(
    py: Python<'py>,
    query: &PyQuery,
    domain: usize,
    budget: usize,
) -> PyResult<Option<Bound<'py, PyDict>>> {
    let outcome = search_ijp(&query.inner, domain, None, budget).map_err(err)?;
    match outcome.certificate {
        Some(cert) => Ok(Some(cert_dict(py, &cert)?)),
        None => Ok(None),
    }
}

#[pymodule]
fn resq_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyQuery>()?;
    m.add_class::<PyDatabase>()?;
    m.add_function(wrap_pyfunction!(resilience, m)?)?;
    m.add_function(wrap_pyfunction!(responsibility, m)?)?;
    m.add_function(wrap_pyfunction!(verify_ijp_candidate, m)?)?;
    m.add_function(wrap_pyfunction!(search_ijp_certificate, m)?)?;
    Ok(())
}
