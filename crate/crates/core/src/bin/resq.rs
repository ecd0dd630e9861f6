//! Command-line toolkit for resilience / responsibility solving,
//! complexity classification, approximation, IJP certificates, instance
//! generation, and benchmarking.

use std::path::{Path, PathBuf};
use std::process::exit;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use resq_core::analysis::{classify_res, classify_rsp, enumerate_triads, linear_orderings, Problem};
use resq_core::approx::{flow_ct_capped, flow_cw, lp_rounding, ApproxAnswer, FLOW_CT_ATOM_CAP};
use resq_core::bench::{parse_config, run_benchmark};
use resq_core::flow::{build_flow_graph, resilience_via_flow, responsibility_via_flow};
use resq_core::gen::generate_instance;
use resq_core::ijp::{
    emit_dlp, parse_asp_model, search_ijp_capped, verify_ijp, vertex_cover_reduction,
    IJPCertificate, JoinPathCandidate, SEARCH_BUDGET, SEARCH_DOMAIN_CAP,
};
use resq_core::resilience::{brute_force_resilience, build_res_model, resilience_ilp, resilience_lp};
use resq_core::responsibility::{
    brute_force_responsibility, responsibility_ilp, responsibility_milp, ResponsibilityAnswer,
};
use resq_core::witness::dump_witnesses;
use resq_core::{compute_witnesses, load_database, parse_query, save_database, Database, Query,
    Semantics, TupleKey};

#[derive(Parser)]
#[command(name = "resq", version, about = "Resilience and responsibility solver toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Classify query complexity (ptime / np-complete) per problem and semantics
    Classify(ClassifyArgs),
    /// Compute resilience of a query over a database
    #[command(visible_alias = "approx")]
    Res(ResArgs),
    /// Compute the causal responsibility of one tuple
    Rsp(RspArgs),
    /// Independent Join Path hardness certificates
    Ijp {
        #[command(subcommand)]
        cmd: IjpCmd,
    },
    /// Generate a synthetic database instance
    Gen(GenArgs),
    /// Run a benchmark sweep from a config file
    Bench(BenchArgs),
    /// Enumerate witnesses as CSV
    Witnesses(WitnessArgs),
}

#[derive(Args)]
struct Common {
    /// Query file (e.g. `q :- R(x,y), S(y,z).`)
    #[arg(short, long)]
    query: PathBuf,
    #[arg(long, default_value = "set")]
    semantics: Semantics,
    /// Emit JSON instead of plain text
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ClassifyArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value = "res")]
    problem: String,
    /// Relation of the tracked tuple (rsp classification only)
    #[arg(long)]
    tuple_relation: Option<String>,
}

#[derive(Args)]
struct ResArgs {
    #[command(flatten)]
    common: Common,
    /// Database directory (one CSV per relation)
    #[arg(short, long)]
    data: PathBuf,
    /// ilp | lp | flow | brute | round | flow-ct | flow-cw
    #[arg(long, default_value = "ilp")]
    method: String,
    /// Atom-count cap for flow-ct ordering enumeration
    #[arg(long, default_value_t = FLOW_CT_ATOM_CAP)]
    flow_ct_cap: usize,
    /// Write the ILP model in LP-like text format
    #[arg(long)]
    dump_lp: Option<PathBuf>,
    /// Write the flow network as an edge list (linear queries)
    #[arg(long)]
    dump_flow: Option<PathBuf>,
}

#[derive(Args)]
struct RspArgs {
    #[command(flatten)]
    common: Common,
    #[arg(short, long)]
    data: PathBuf,
    /// The tracked tuple, e.g. "S(1,1)"
    #[arg(long)]
    tuple: String,
    /// ilp | milp | flow | brute | round | flow-ct | flow-cw
    #[arg(long, default_value = "ilp")]
    method: String,
    #[arg(long, default_value_t = FLOW_CT_ATOM_CAP)]
    flow_ct_cap: usize,
}

#[derive(Subcommand)]
enum IjpCmd {
    /// Search for a certificate over a bounded constant domain
    Search(IjpSearchArgs),
    /// Verify a candidate (from a database dir or a solver model file)
    Verify(IjpVerifyArgs),
    /// Emit the answer-set program that searches for a certificate
    EmitDlp(IjpEmitArgs),
    /// Build the vertex-cover reduction database from a certificate
    ReduceVc(IjpReduceArgs),
}

#[derive(Args)]
struct IjpSearchArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    domain: usize,
    /// Start endpoint tuples, e.g. --start "R(1,2)"
    #[arg(long)]
    start: Vec<String>,
    /// Terminal endpoint tuples
    #[arg(long)]
    terminal: Vec<String>,
    #[arg(long, default_value_t = SEARCH_BUDGET)]
    budget: usize,
    #[arg(long, default_value_t = SEARCH_DOMAIN_CAP)]
    domain_cap: usize,
}

#[derive(Args)]
struct IjpVerifyArgs {
    #[command(flatten)]
    common: Common,
    /// Database directory holding the candidate
    #[arg(short, long)]
    data: Option<PathBuf>,
    #[arg(long)]
    start: Vec<String>,
    #[arg(long)]
    terminal: Vec<String>,
    /// Solver model file (res(K)/witness(...) line) instead of a directory
    #[arg(long)]
    model: Option<PathBuf>,
    /// Endpoint constant sets for model decoding, e.g. --end1 1,2
    #[arg(long)]
    end1: Option<String>,
    #[arg(long)]
    end2: Option<String>,
}

#[derive(Args)]
struct IjpEmitArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    domain: usize,
    #[arg(long)]
    start: Vec<String>,
    #[arg(long)]
    terminal: Vec<String>,
    /// Add the weak-constraint witness minimization
    #[arg(long)]
    min_witnesses: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct IjpReduceArgs {
    #[command(flatten)]
    common: Common,
    #[arg(short, long)]
    data: PathBuf,
    #[arg(long)]
    start: Vec<String>,
    #[arg(long)]
    terminal: Vec<String>,
    #[arg(long)]
    nodes: usize,
    /// Edges as "0-1,1-2,0-2"
    #[arg(long)]
    edges: String,
    /// Directory to write the reduction database to
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    domain: usize,
    #[arg(long)]
    tuples: usize,
    #[arg(long, default_value_t = 5)]
    max_bag: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    config: PathBuf,
    /// Rows CSV output path (defaults to stdout)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Log-bucket median summary CSV output path
    #[arg(long)]
    summary_out: Option<PathBuf>,
    /// Override the config's ILP cutoff (seconds)
    #[arg(long)]
    cutoff: Option<f64>,
    /// Run instances concurrently
    #[arg(long)]
    parallel: bool,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct WitnessArgs {
    #[command(flatten)]
    common: Common,
    #[arg(short, long)]
    data: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            exit(code);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        exit(2);
    }
}

type AnyError = Box<dyn std::error::Error>;

fn load_query(path: &Path) -> Result<Query, AnyError> {
    let text = std::fs::read_to_string(path)?;
    Ok(parse_query(&text)?)
}

fn load_db(dir: &Path, semantics: Semantics) -> Result<Database, AnyError> {
    Ok(load_database(dir, semantics)?)
}

fn fmt_keys(d: &Database, keys: &[TupleKey]) -> Vec<String> {
    keys.iter().map(|k| d.format_tuple(k)).collect()
}

fn write_or_print(out: &Option<PathBuf>, text: &str) -> Result<(), AnyError> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), AnyError> {
    match cli.cmd {
        Cmd::Classify(a) => classify_cmd(a),
        Cmd::Res(a) => res_cmd(a),
        Cmd::Rsp(a) => rsp_cmd(a),
        Cmd::Ijp { cmd } => match cmd {
            IjpCmd::Search(a) => ijp_search_cmd(a),
            IjpCmd::Verify(a) => ijp_verify_cmd(a),
            IjpCmd::EmitDlp(a) => ijp_emit_cmd(a),
            IjpCmd::ReduceVc(a) => ijp_reduce_cmd(a),
        },
        Cmd::Gen(a) => gen_cmd(a),
        Cmd::Bench(a) => bench_cmd(a),
        Cmd::Witnesses(a) => witnesses_cmd(a),
    }
}

fn classify_cmd(a: ClassifyArgs) -> Result<(), AnyError> {
    let q = load_query(&a.common.query)?;
    let verdict = match a.problem.as_str() {
        "res" => classify_res(&q, a.common.semantics),
        "rsp" => {
            let rel = a
                .tuple_relation
                .ok_or("rsp classification needs --tuple-relation")?;
            classify_rsp(&q, a.common.semantics, &rel)
        }
        other => return Err(format!("unknown problem {other}").into()),
    };
    if a.common.json {
        let triads = enumerate_triads(&q).unwrap_or_default();
        println!(
            "{}",
            serde_json::to_string_pretty(&json!({
                "problem": verdict.problem,
                "semantics": verdict.semantics,
                "verdict": verdict.verdict,
                "reason": verdict.reason,
                "triads": triads,
            }))?
        );
    } else {
        println!("{:?}", verdict.verdict);
        println!("{}", verdict.reason);
    }
    Ok(())
}

fn approx_json(a: &ApproxAnswer) -> serde_json::Value {
    json!({ "per_linearization": a.per_linearization })
}

fn res_cmd(a: ResArgs) -> Result<(), AnyError> {
    let q = load_query(&a.common.query)?;
    let d = load_db(&a.data, a.common.semantics)?;
    if let Some(path) = &a.dump_lp {
        let ws = compute_witnesses(&q, &d);
        let model = build_res_model(&q, &d, &ws)?;
        std::fs::write(path, model.model.dump())?;
    }
    if let Some(path) = &a.dump_flow {
        let ord = linear_orderings(&q)
            .into_iter()
            .next()
            .ok_or("query is not linear; no flow network to dump")?;
        let g = build_flow_graph(&q, &d, &ord);
        std::fs::write(path, g.dump(&d))?;
    }
    let mut extra = json!({});
    let answer = match a.method.as_str() {
        "ilp" => resilience_ilp(&q, &d)?,
        "lp" => resilience_lp(&q, &d)?,
        "flow" => resilience_via_flow(&q, &d)?,
        "brute" => brute_force_resilience(&q, &d)?,
        "round" => {
            let out = lp_rounding(&q, &d, Problem::Res, None)?;
            extra = approx_json(&out);
            out.res.unwrap()
        }
        "flow-ct" => {
            let out = flow_ct_capped(&q, &d, Problem::Res, None, a.flow_ct_cap)?;
            extra = approx_json(&out);
            out.res.unwrap()
        }
        "flow-cw" => {
            let out = flow_cw(&q, &d, Problem::Res, None)?;
            extra = approx_json(&out);
            out.res.unwrap()
        }
        other => return Err(format!("unknown method {other}").into()),
    };
    if a.common.json {
        let mut obj = json!({
            "value": answer.value,
            "method": answer.method,
            "contingency": fmt_keys(&d, &answer.contingency),
            "lp_bound": answer.lp_bound,
        });
        if let (Some(o), Some(e)) = (obj.as_object_mut(), extra.as_object()) {
            for (k, v) in e {
                o.insert(k.clone(), v.clone());
            }
        }
        println!("{}", serde_json::to_string_pretty(&obj)?);
    } else {
        println!("res = {}", answer.value);
        if !answer.contingency.is_empty() {
            println!("contingency: {}", fmt_keys(&d, &answer.contingency).join(", "));
        }
    }
    Ok(())
}

fn print_rsp(d: &Database, answer: &ResponsibilityAnswer, json_out: bool) -> Result<(), AnyError> {
    if json_out {
        println!(
            "{}",
            serde_json::to_string_pretty(&json!({
                "value": answer.value,
                "rho": answer.rho,
                "contingency": fmt_keys(d, &answer.contingency),
                "preserved_witness": answer.preserved_witness,
                "set_based_t": answer.set_based_t,
                "method": answer.method,
            }))?
        );
    } else {
        match answer.value {
            Some(v) => {
                println!("rsp = {v} (rho = {})", answer.rho);
                if !answer.contingency.is_empty() {
                    println!("contingency: {}", fmt_keys(d, &answer.contingency).join(", "));
                }
            }
            None => println!("tuple cannot be made counterfactual"),
        }
    }
    Ok(())
}

fn rsp_cmd(a: RspArgs) -> Result<(), AnyError> {
    let q = load_query(&a.common.query)?;
    let d = load_db(&a.data, a.common.semantics)?;
    let t = d.parse_tuple(&a.tuple)?;
    let answer = match a.method.as_str() {
        "ilp" => responsibility_ilp(&q, &d, &t)?,
        "milp" => responsibility_milp(&q, &d, &t)?,
        "flow" => responsibility_via_flow(&q, &d, &t)?,
        "brute" => brute_force_responsibility(&q, &d, &t)?,
        "round" => lp_rounding(&q, &d, Problem::Rsp, Some(&t))?.rsp.unwrap(),
        "flow-ct" => {
            flow_ct_capped(&q, &d, Problem::Rsp, Some(&t), a.flow_ct_cap)?.rsp.unwrap()
        }
        "flow-cw" => flow_cw(&q, &d, Problem::Rsp, Some(&t))?.rsp.unwrap(),
        other => return Err(format!("unknown method {other}").into()),
    };
    print_rsp(&d, &answer, a.common.json)
}

fn cert_json(cert: &IJPCertificate) -> serde_json::Value {
    let c = &cert.candidate;
    let d = &c.database;
    let tuples: Vec<serde_json::Value> = d
        .tuples()
        .map(|(k, rec)| {
            json!({
                "tuple": d.format_tuple(&k),
                "multiplicity": rec.multiplicity,
                "exogenous": d.is_exogenous(&c.query, &k),
            })
        })
        .collect();
    json!({
        "query": c.query.render(),
        "database": tuples,
        "start": fmt_keys(d, &c.start),
        "terminal": fmt_keys(d, &c.terminal),
        "resilience_c": cert.resilience_c,
        "checks": cert.checks,
        "valid": cert.is_valid(),
    })
}

fn print_cert(cert: &IJPCertificate, json_out: bool) -> Result<(), AnyError> {
    if json_out {
        println!("{}", serde_json::to_string_pretty(&cert_json(cert))?);
    } else {
        let c = &cert.candidate;
        println!("valid: {}", cert.is_valid());
        println!("resilience c = {}", cert.resilience_c);
        println!("checks: {:?}", cert.checks);
        println!(
            "database: {}",
            c.database.tuples().map(|(k, _)| c.database.format_tuple(&k)).collect::<Vec<_>>().join(", ")
        );
    }
    Ok(())
}

fn ijp_search_cmd(a: IjpSearchArgs) -> Result<(), AnyError> {
    let q = load_query(&a.common.query)?;
    let endpoints = if a.start.is_empty() && a.terminal.is_empty() {
        None
    } else if !a.start.is_empty() && !a.terminal.is_empty() {
        Some((a.start.clone(), a.terminal.clone()))
    } else {
        return Err("--start and --terminal must be given together".into());
    };
    let outcome = search_ijp_capped(&q, a.domain, endpoints, a.budget, a.domain_cap)?;
    match outcome.certificate {
        Some(cert) => print_cert(&cert, a.common.json)?,
        None => {
            if a.common.json {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&json!({
                        "certificate": null,
                        "candidates": outcome.candidates,
                        "exhausted": outcome.exhausted,
                    }))?
                );
            } else if outcome.exhausted {
                println!("no certificate over domain {} ({} candidates)", a.domain, outcome.candidates);
            } else {
                println!("budget exhausted after {} candidates; no hardness claim", outcome.candidates);
            }
        }
    }
    Ok(())
}

fn parse_const_list(s: &str) -> Result<Vec<usize>, AnyError> {
    s.split(',')
        .map(|x| x.trim().parse::<usize>().map_err(|_| format!("bad constant {x}").into()))
        .collect()
}

fn candidate_from_dir(
    q: &Query,
    data: &Path,
    semantics: Semantics,
    start: &[String],
    terminal: &[String],
) -> Result<JoinPathCandidate, AnyError> {
    let d = load_db(data, semantics)?;
    let parse = |txt: &[String]| -> Result<Vec<TupleKey>, AnyError> {
        txt.iter().map(|t| Ok(d.parse_tuple(t)?)).collect()
    };
    let s = parse(start)?;
    let t = parse(terminal)?;
    Ok(JoinPathCandidate::new(q.clone(), d, s, t)?)
}

fn ijp_verify_cmd(a: IjpVerifyArgs) -> Result<(), AnyError> {
    let q = load_query(&a.common.query)?;
    let cert = if let Some(model_path) = &a.model {
        let end1 = parse_const_list(a.end1.as_deref().ok_or("--model needs --end1")?)?;
        let end2 = parse_const_list(a.end2.as_deref().ok_or("--model needs --end2")?)?;
        let text = std::fs::read_to_string(model_path)?;
        parse_asp_model(&q, &end1, &end2, &text)?
    } else {
        let data = a.data.as_deref().ok_or("need --data or --model")?;
        let cand = candidate_from_dir(&q, data, a.common.semantics, &a.start, &a.terminal)?;
        verify_ijp(&cand)?
    };
    print_cert(&cert, a.common.json)
}

fn ijp_emit_cmd(a: IjpEmitArgs) -> Result<(), AnyError> {
    let q = load_query(&a.common.query)?;
    let program = emit_dlp(&q, a.domain, (&a.start, &a.terminal), a.min_witnesses)?;
    write_or_print(&a.out, &program)
}

fn ijp_reduce_cmd(a: IjpReduceArgs) -> Result<(), AnyError> {
    let q = load_query(&a.common.query)?;
    let cand = candidate_from_dir(&q, &a.data, a.common.semantics, &a.start, &a.terminal)?;
    let cert = verify_ijp(&cand)?;
    let edges: Vec<(usize, usize)> = a
        .edges
        .split(',')
        .map(|e| -> Result<(usize, usize), AnyError> {
            let (u, v) = e.trim().split_once('-').ok_or("edges look like 0-1,1-2")?;
            Ok((u.parse()?, v.parse()?))
        })
        .collect::<Result<_, _>>()?;
    let (db, map) = vertex_cover_reduction(&cert, a.nodes, &edges)?;
    if let Some(dir) = &a.out {
        std::fs::create_dir_all(dir)?;
        save_database(&db, dir)?;
    }
    let summary = json!({
        "tuples": db.tuple_count(),
        "edges": map.edges,
        "per_edge": map.per_edge,
        "resilience_of_cover": format!("k + {}", map.edges as u64 * map.per_edge),
    });
    if a.common.json {
        println!("{}", serde_json::to_string_pretty(&summary)?);
    } else {
        println!(
            "reduction database: {} tuples; res = vertex-cover + {}",
            db.tuple_count(),
            map.edges as u64 * map.per_edge
        );
    }
    Ok(())
}

fn gen_cmd(a: GenArgs) -> Result<(), AnyError> {
    let q = load_query(&a.common.query)?;
    let d = generate_instance(&q, a.domain, a.tuples, a.common.semantics, a.max_bag, a.seed)?;
    std::fs::create_dir_all(&a.out)?;
    save_database(&d, &a.out)?;
    if a.common.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&json!({
                "tuples": d.tuple_count(),
                "out": a.out,
            }))?
        );
    } else {
        println!("wrote {} tuples to {}", d.tuple_count(), a.out.display());
    }
    Ok(())
}

fn bench_cmd(a: BenchArgs) -> Result<(), AnyError> {
    let text = std::fs::read_to_string(&a.config)?;
    let mut cfg = parse_config(&text)?;
    if let Some(c) = a.cutoff {
        cfg.cutoff = Some(c);
    }
    cfg.parallel |= a.parallel;
    // the query path is relative to the config file
    let qpath = a.config.parent().unwrap_or(Path::new(".")).join(&cfg.query);
    let q = load_query(&qpath)?;
    let report = run_benchmark(&q, &cfg)?;
    let rows = report.rows_csv(&q, &cfg);
    let summary = report.summary_csv();
    write_or_print(&a.out, &rows)?;
    if let Some(path) = &a.summary_out {
        std::fs::write(path, &summary)?;
    }
    if a.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&json!({
                "rows": report.rows.len(),
                "out": a.out,
                "summary_out": a.summary_out,
            }))?
        );
    }
    Ok(())
}

fn witnesses_cmd(a: WitnessArgs) -> Result<(), AnyError> {
    let q = load_query(&a.common.query)?;
    let d = load_db(&a.data, a.common.semantics)?;
    let ws = compute_witnesses(&q, &d);
    if a.common.json {
        let out: Vec<serde_json::Value> = ws
            .witnesses
            .iter()
            .map(|w| {
                json!({
                    "valuation": w
                        .valuation
                        .iter()
                        .map(|&c| d.interner.name(c).to_string())
                        .collect::<Vec<_>>(),
                    "tuples": fmt_keys(&d, &w.tuples),
                })
            })
            .collect();
        println!("{}", serde_json::to_string_pretty(&json!({ "witnesses": out }))?);
        return Ok(());
    }
    write_or_print(&a.out, &dump_witnesses(&q, &d, &ws))
}
