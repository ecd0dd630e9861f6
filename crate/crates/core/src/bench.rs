//! Benchmark harness: key-value config, a size sweep over generated
//! instances, per-method timing rows, and a log-bucket median summary.

use std::time::{Duration, Instant};

use crate::analysis::Problem;
use crate::approx::{flow_ct, flow_cw, lp_rounding};
use crate::flow::{resilience_via_flow, responsibility_via_flow};
use crate::gen::generate_instance;
use crate::lp::{solve_lp_capped, solve_milp_deadline, Status, DEFAULT_PIVOT_CAP};
use crate::model::{Database, Query, Semantics, TupleKey};
use crate::resilience::{
    brute_force_resilience, build_res_model, resilience_lp, SolveError,
};
use crate::responsibility::{
    brute_force_responsibility, responsibility_ilp, responsibility_milp,
};
use crate::witness::compute_witnesses;

pub const DEFAULT_NODE_CAP: usize = 1_000_000;

#[derive(Debug, Clone)]
pub struct BenchConfig {
    /// Path to a query file; resolved by the caller.
    pub query: String,
    pub semantics: Semantics,
    pub problem: Problem,
    pub sizes: Vec<usize>,
    pub runs: usize,
    pub methods: Vec<String>,
    pub seed: u64,
    /// Wall-clock limit in seconds for the ILP solve (incumbent reported).
    pub cutoff: Option<f64>,
    pub domain: Option<usize>,
    pub max_bag: u32,
    pub parallel: bool,
}

/// Parses the `key = value` config format; `#` starts a comment.
pub fn parse_config(text: &str) -> Result<BenchConfig, SolveError> {
    let mut cfg = BenchConfig {
        query: String::new(),
        semantics: Semantics::Set,
        problem: Problem::Res,
        sizes: Vec::new(),
        runs: 1,
        methods: Vec::new(),
        seed: 0,
        cutoff: None,
        domain: None,
        max_bag: 5,
        parallel: false,
    };
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| SolveError::Invalid(format!("line {}: expected key = value", no + 1)))?;
        let (key, value) = (key.trim(), value.trim());
        let bad = |what: &str| SolveError::Invalid(format!("line {}: bad {what}", no + 1));
        match key {
            "query" => cfg.query = value.to_string(),
            "semantics" => {
                cfg.semantics = value.parse().map_err(|_| bad("semantics"))?;
            }
            "problem" => {
                cfg.problem = match value {
                    "res" => Problem::Res,
                    "rsp" => Problem::Rsp,
                    _ => return Err(bad("problem")),
                }
            }
            "sizes" => {
                cfg.sizes = value
                    .split(',')
                    .map(|s| s.trim().parse().map_err(|_| bad("sizes")))
                    .collect::<Result<_, _>>()?;
            }
            "runs" => cfg.runs = value.parse().map_err(|_| bad("runs"))?,
            "methods" => {
                cfg.methods = value.split(',').map(|s| s.trim().to_string()).collect();
            }
            "seed" => cfg.seed = value.parse().map_err(|_| bad("seed"))?,
            "cutoff" => cfg.cutoff = Some(value.parse().map_err(|_| bad("cutoff"))?),
            "domain" => cfg.domain = Some(value.parse().map_err(|_| bad("domain"))?),
            "max_bag" => cfg.max_bag = value.parse().map_err(|_| bad("max_bag"))?,
            "parallel" => cfg.parallel = value.parse().map_err(|_| bad("parallel"))?,
            _ => return Err(SolveError::Invalid(format!("line {}: unknown key {key}", no + 1))),
        }
    }
    if cfg.query.is_empty() {
        return Err(SolveError::Invalid("config is missing the query key".into()));
    }
    if cfg.sizes.is_empty() {
        return Err(SolveError::Invalid("config is missing the sizes key".into()));
    }
    if cfg.methods.is_empty() {
        return Err(SolveError::Invalid("config is missing the methods key".into()));
    }
    Ok(cfg)
}

#[derive(Debug, Clone)]
pub struct BenchRow {
    pub size: usize,
    pub run: usize,
    pub method: String,
    pub witnesses: usize,
    pub objective: Option<f64>,
    pub build_ms: f64,
    pub solve_ms: f64,
    pub status: String,
}

#[derive(Debug)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

fn env_cap(name: &str, default: usize) -> usize {
    std::env::var(name).ok().and_then(|v| v.parse().ok()).unwrap_or(default)
}

fn fmt_obj(o: Option<f64>) -> String {
    match o {
        Some(v) if (v - v.round()).abs() < 1e-9 => format!("{}", v.round() as i64),
        Some(v) => format!("{v}"),
        None => String::new(),
    }
}

impl BenchReport {
    /// Tidy CSV: one row per run × method.
    pub fn rows_csv(&self, q: &Query, cfg: &BenchConfig) -> String {
        let mut out = String::from(
            "query,semantics,problem,size,run,method,witnesses,objective,build_ms,solve_ms,status\n",
        );
        let problem = match cfg.problem {
            Problem::Res => "res",
            Problem::Rsp => "rsp",
        };
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{:.3},{:.3},{}\n",
                q.name,
                cfg.semantics,
                problem,
                r.size,
                r.run,
                r.method,
                r.witnesses,
                fmt_obj(r.objective),
                r.build_ms,
                r.solve_ms,
                r.status
            ));
        }
        out
    }

    /// Median solve time per method per logarithmic size bucket.
    pub fn summary_csv(&self) -> String {
        let mut keys: Vec<(String, u32)> = self
            .rows
            .iter()
            .map(|r| (r.method.clone(), r.size.max(1).ilog2()))
            .collect();
        keys.sort();
        keys.dedup();
        let mut out = String::from("method,log2_size_bucket,median_solve_ms,median_objective\n");
        for (method, bucket) in keys {
            let mut times: Vec<f64> = Vec::new();
            let mut objs: Vec<f64> = Vec::new();
            for r in &self.rows {
                if r.method == method && r.size.max(1).ilog2() == bucket {
                    times.push(r.solve_ms);
                    objs.extend(r.objective);
                }
            }
            out.push_str(&format!(
                "{method},{bucket},{:.3},{}\n",
                median(&mut times),
                fmt_obj(if objs.is_empty() { None } else { Some(median(&mut objs)) })
            ));
        }
        out
    }
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(|a, b| a.total_cmp(b));
    match xs.len() {
        0 => 0.0,
        n if n % 2 == 1 => xs[n / 2],
        n => (xs[n / 2 - 1] + xs[n / 2]) / 2.0,
    }
}

/// The tuple whose responsibility is benchmarked: the first endogenous
/// tuple of the first witness, deterministically.
fn pick_tuple(q: &Query, d: &Database) -> Option<TupleKey> {
    let ws = compute_witnesses(q, d);
    ws.witnesses
        .first()?
        .tuples
        .iter()
        .find(|t| !d.is_exogenous(q, t))
        .cloned()
}

fn run_method(
    q: &Query,
    d: &Database,
    problem: Problem,
    method: &str,
    cutoff: Option<f64>,
) -> (Option<f64>, f64, f64, String) {
    let ws = compute_witnesses(q, d);
    let t = match problem {
        Problem::Rsp => match pick_tuple(q, d) {
            Some(t) => Some(t),
            None => return (None, 0.0, 0.0, "no-witness".into()),
        },
        Problem::Res => None,
    };
    let start_build = Instant::now();
    // exact ILP/LP get a separate build phase so solve time is solver-only
    if problem == Problem::Res && (method == "ilp" || method == "lp") {
        if ws.is_empty() {
            return (Some(0.0), 0.0, 0.0, "ok".into());
        }
        let model = match build_res_model(q, d, &ws) {
            Ok(m) => m,
            Err(e) => return (None, 0.0, 0.0, format!("error:{e}")),
        };
        let build_ms = start_build.elapsed().as_secs_f64() * 1e3;
        let solve_start = Instant::now();
        let result = if method == "ilp" {
            let deadline = cutoff.map(|s| Instant::now() + Duration::from_secs_f64(s));
            solve_milp_deadline(
                &model.model,
                env_cap("RESQ_NODE_CAP", DEFAULT_NODE_CAP),
                deadline,
            )
        } else {
            solve_lp_capped(&model.model, env_cap("RESQ_PIVOT_CAP", DEFAULT_PIVOT_CAP))
        };
        let solve_ms = solve_start.elapsed().as_secs_f64() * 1e3;
        let status = match result.status {
            Status::Optimal => "ok".into(),
            Status::IterationLimit => "limit".into(),
            Status::Infeasible => "infeasible".into(),
        };
        let obj = match result.status {
            Status::Infeasible => None,
            _ => Some(result.objective),
        };
        return (obj, build_ms, solve_ms, status);
    }
    let build_ms = start_build.elapsed().as_secs_f64() * 1e3;
    let solve_start = Instant::now();
    let outcome: Result<Option<f64>, SolveError> = match (problem, method) {
        (Problem::Res, "flow") => resilience_via_flow(q, d).map(|a| Some(a.value)),
        (Problem::Res, "brute") => brute_force_resilience(q, d).map(|a| Some(a.value)),
        (Problem::Res, "round") => {
            lp_rounding(q, d, Problem::Res, None).map(|a| Some(a.res.unwrap().value))
        }
        (Problem::Res, "flow-ct") => {
            flow_ct(q, d, Problem::Res, None).map(|a| Some(a.res.unwrap().value))
        }
        (Problem::Res, "flow-cw") => {
            flow_cw(q, d, Problem::Res, None).map(|a| Some(a.res.unwrap().value))
        }
        (Problem::Rsp, "ilp") => {
            responsibility_ilp(q, d, t.as_ref().unwrap()).map(|a| a.value)
        }
        (Problem::Rsp, "milp") => {
            responsibility_milp(q, d, t.as_ref().unwrap()).map(|a| a.value)
        }
        (Problem::Rsp, "brute") => {
            brute_force_responsibility(q, d, t.as_ref().unwrap()).map(|a| a.value)
        }
        (Problem::Rsp, "flow") => {
            responsibility_via_flow(q, d, t.as_ref().unwrap()).map(|a| a.value)
        }
        (Problem::Rsp, "round") => {
            lp_rounding(q, d, Problem::Rsp, t.as_ref()).map(|a| a.rsp.unwrap().value)
        }
        (Problem::Rsp, "flow-ct") => {
            flow_ct(q, d, Problem::Rsp, t.as_ref()).map(|a| a.rsp.unwrap().value)
        }
        (Problem::Rsp, "flow-cw") => {
            flow_cw(q, d, Problem::Rsp, t.as_ref()).map(|a| a.rsp.unwrap().value)
        }
        (Problem::Res, "lp-exact") => resilience_lp(q, d).map(|a| Some(a.value)),
        _ => Err(SolveError::Invalid(format!("unknown method {method}"))),
    };
    let solve_ms = solve_start.elapsed().as_secs_f64() * 1e3;
    match outcome {
        Ok(obj) => (obj, build_ms, solve_ms, "ok".into()),
        Err(e) => (None, build_ms, solve_ms, format!("error:{e}")),
    }
}

fn run_instance(q: &Query, cfg: &BenchConfig, size: usize, run: usize) -> Vec<BenchRow> {
    let seed = cfg
        .seed
        .wrapping_add(size as u64)
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(run as u64);
    let domain = cfg.domain.unwrap_or(size.max(1) * 2);
    let d = match generate_instance(q, domain, size, cfg.semantics, cfg.max_bag, seed) {
        Ok(d) => d,
        Err(e) => {
            return cfg
                .methods
                .iter()
                .map(|m| BenchRow {
                    size,
                    run,
                    method: m.clone(),
                    witnesses: 0,
                    objective: None,
                    build_ms: 0.0,
                    solve_ms: 0.0,
                    status: format!("error:{e}"),
                })
                .collect()
        }
    };
    let witnesses = compute_witnesses(q, &d).witnesses.len();
    cfg.methods
        .iter()
        .map(|m| {
            let (objective, build_ms, solve_ms, status) =
                run_method(q, &d, cfg.problem, m, cfg.cutoff);
            BenchRow {
                size,
                run,
                method: m.clone(),
                witnesses,
                objective,
                build_ms,
                solve_ms,
                status,
            }
        })
        .collect()
}

pub fn run_benchmark(q: &Query, cfg: &BenchConfig) -> Result<BenchReport, SolveError> {
    let jobs: Vec<(usize, usize)> = cfg
        .sizes
        .iter()
        .flat_map(|&s| (0..cfg.runs.max(1)).map(move |r| (s, r)))
        .collect();
    let rows = if cfg.parallel {
        std::thread::scope(|scope| {
            let handles: Vec<_> = jobs
                .iter()
                .map(|&(s, r)| scope.spawn(move || run_instance(q, cfg, s, r)))
                .collect();
            handles.into_iter().flat_map(|h| h.join().expect("bench worker")).collect()
        })
    } else {
        jobs.iter().flat_map(|&(s, r)| run_instance(q, cfg, s, r)).collect()
    };
    Ok(BenchReport { rows })
}
