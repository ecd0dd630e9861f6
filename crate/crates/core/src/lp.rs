//! Generic linear programs, a dense two-phase simplex solver, and
//! branch-and-bound for ILP/MILP.

use std::collections::BinaryHeap;

pub const TOL: f64 = 1e-6;
const DEGENERATE_PIVOTS_BEFORE_BLAND: usize = 1000;
pub const DEFAULT_PIVOT_CAP: usize = 1_000_000;
pub const DEFAULT_NODE_CAP: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64, // f64::INFINITY for unbounded
    pub integral: bool,
    pub objective: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rel {
    Ge,
    Le,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    /// (variable index, coefficient) pairs; indices unique.
    pub coeffs: Vec<(usize, f64)>,
    pub rel: Rel,
    pub rhs: f64,
}

/// A minimization program over bounded variables with optional integrality
/// marks.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinearModel {
    pub vars: Vec<Variable>,
    pub constraints: Vec<Constraint>,
}

impl LinearModel {
    pub fn add_var(
        &mut self,
        name: impl Into<String>,
        lower: f64,
        upper: f64,
        integral: bool,
        objective: f64,
    ) -> usize {
        self.vars.push(Variable { name: name.into(), lower, upper, integral, objective });
        self.vars.len() - 1
    }

    pub fn add_constraint(&mut self, coeffs: Vec<(usize, f64)>, rel: Rel, rhs: f64) {
        self.constraints.push(Constraint { coeffs, rel, rhs });
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v.name == name)
    }

    pub fn objective_of(&self, assignment: &[f64]) -> f64 {
        self.vars.iter().zip(assignment).map(|(v, x)| v.objective * x).sum()
    }

    /// Checks an assignment against bounds and constraints within tolerance.
    pub fn is_feasible(&self, assignment: &[f64]) -> bool {
        if assignment.len() != self.vars.len() {
            return false;
        }
        for (v, &x) in self.vars.iter().zip(assignment) {
            if x < v.lower - TOL || x > v.upper + TOL {
                return false;
            }
        }
        self.constraints.iter().all(|c| {
            let lhs: f64 = c.coeffs.iter().map(|&(i, a)| a * assignment[i]).sum();
            match c.rel {
                Rel::Ge => lhs >= c.rhs - TOL,
                Rel::Le => lhs <= c.rhs + TOL,
                Rel::Eq => (lhs - c.rhs).abs() <= TOL,
            }
        })
    }

    /// Plain-text dump (LP-format-like) for external cross-checks.
    pub fn dump(&self) -> String {
        let mut s = String::from("minimize\n ");
        for (i, v) in self.vars.iter().enumerate() {
            if v.objective != 0.0 {
                s.push_str(&format!(" + {} {}", v.objective, v.name));
            }
            let _ = i;
        }
        s.push_str("\nsubject to\n");
        for c in &self.constraints {
            s.push(' ');
            for &(i, a) in &c.coeffs {
                s.push_str(&format!(" + {} {}", a, self.vars[i].name));
            }
            let rel = match c.rel {
                Rel::Ge => ">=",
                Rel::Le => "<=",
                Rel::Eq => "=",
            };
            s.push_str(&format!(" {rel} {}\n", c.rhs));
        }
        s.push_str("bounds\n");
        for v in &self.vars {
            if v.upper.is_finite() {
                s.push_str(&format!(" {} <= {} <= {}\n", v.lower, v.name, v.upper));
            } else {
                s.push_str(&format!(" {} <= {}\n", v.lower, v.name));
            }
        }
        let ints: Vec<&str> =
            self.vars.iter().filter(|v| v.integral).map(|v| v.name.as_str()).collect();
        if !ints.is_empty() {
            s.push_str("int\n ");
            s.push_str(&ints.join(" "));
            s.push('\n');
        }
        s.push_str("end\n");
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
    Infeasible,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub status: Status,
    pub objective: f64,
    pub assignment: Vec<f64>,
    /// All integral-marked variables within tolerance of integers.
    pub is_integral: bool,
}

impl SolveResult {
    fn infeasible() -> Self {
        SolveResult {
            status: Status::Infeasible,
            objective: f64::INFINITY,
            assignment: Vec::new(),
            is_integral: false,
        }
    }

    fn limit() -> Self {
        SolveResult {
            status: Status::IterationLimit,
            objective: f64::INFINITY,
            assignment: Vec::new(),
            is_integral: false,
        }
    }
}

/// Solves the LP relaxation (integrality marks ignored) by two-phase dense
/// tableau simplex. Deterministic given the model.
pub fn solve_lp(m: &LinearModel) -> SolveResult {
    solve_lp_capped(m, DEFAULT_PIVOT_CAP)
}

pub fn solve_lp_capped(m: &LinearModel, pivot_cap: usize) -> SolveResult {
    let n = m.vars.len();
    // shift variables to x' = x - lower >= 0
    let lower: Vec<f64> = m.vars.iter().map(|v| v.lower).collect();
    assert!(lower.iter().all(|l| l.is_finite()), "lower bounds must be finite");

    // rows: (dense coeffs over structural vars, rel, rhs)
    let mut rows: Vec<(Vec<f64>, Rel, f64)> = Vec::new();
    for c in &m.constraints {
        let mut dense = vec![0.0; n];
        let mut shift = 0.0;
        for &(i, a) in &c.coeffs {
            dense[i] += a;
            shift += a * lower[i];
        }
        rows.push((dense, c.rel, c.rhs - shift));
    }
    for (i, v) in m.vars.iter().enumerate() {
        if v.upper.is_finite() {
            let mut dense = vec![0.0; n];
            dense[i] = 1.0;
            rows.push((dense, Rel::Le, v.upper - v.lower));
        }
    }

    // normalize to b >= 0
    for (dense, rel, rhs) in rows.iter_mut() {
        if *rhs < 0.0 {
            for a in dense.iter_mut() {
                *a = -*a;
            }
            *rhs = -*rhs;
            *rel = match *rel {
                Rel::Ge => Rel::Le,
                Rel::Le => Rel::Ge,
                Rel::Eq => Rel::Eq,
            };
        }
    }

    let nrows = rows.len();
    // columns: structural | slack/surplus | artificial
    let mut slack_count = 0usize;
    let mut artificial_count = 0usize;
    for (_, rel, _) in &rows {
        match rel {
            Rel::Le => slack_count += 1,
            Rel::Ge => {
                slack_count += 1;
                artificial_count += 1;
            }
            Rel::Eq => artificial_count += 1,
        }
    }
    let total = n + slack_count + artificial_count;
    let mut a = vec![vec![0.0f64; total]; nrows];
    let mut b = vec![0.0f64; nrows];
    let mut basis = vec![0usize; nrows];
    let art_start = n + slack_count;
    let mut si = n;
    let mut ai = art_start;
    for (r, (dense, rel, rhs)) in rows.iter().enumerate() {
        a[r][..n].copy_from_slice(dense);
        b[r] = *rhs;
        match rel {
            Rel::Le => {
                a[r][si] = 1.0;
                basis[r] = si;
                si += 1;
            }
            Rel::Ge => {
                a[r][si] = -1.0;
                si += 1;
                a[r][ai] = 1.0;
                basis[r] = ai;
                ai += 1;
            }
            Rel::Eq => {
                a[r][ai] = 1.0;
                basis[r] = ai;
                ai += 1;
            }
        }
    }

    let mut pivots_left = pivot_cap;

    // phase 1: minimize sum of artificials
    if artificial_count > 0 {
        let c1: Vec<f64> =
            (0..total).map(|j| if j >= art_start { 1.0 } else { 0.0 }).collect();
        match run_simplex(&mut a, &mut b, &mut basis, &c1, &mut pivots_left) {
            SimplexOutcome::Optimal => {}
            SimplexOutcome::Limit => return SolveResult::limit(),
            SimplexOutcome::Unbounded => return SolveResult::limit(),
        }
        let phase1: f64 = basis.iter().zip(&b).filter(|(&bi, _)| bi >= art_start).map(|(_, &v)| v).sum();
        if phase1 > TOL {
            return SolveResult::infeasible();
        }
        // drive remaining artificials out of the basis
        for r in 0..nrows {
            if basis[r] >= art_start {
                if let Some(j) = (0..art_start).find(|&j| a[r][j].abs() > TOL) {
                    pivot(&mut a, &mut b, &mut basis, r, j);
                } else {
                    // redundant row
                    b[r] = 0.0;
                }
            }
        }
        // forbid artificial columns from re-entering
        for row in a.iter_mut() {
            for j in art_start..total {
                row[j] = 0.0;
            }
        }
    }

    // phase 2
    let mut c2 = vec![0.0f64; total];
    for (i, v) in m.vars.iter().enumerate() {
        c2[i] = v.objective;
    }
    match run_simplex(&mut a, &mut b, &mut basis, &c2, &mut pivots_left) {
        SimplexOutcome::Optimal => {}
        SimplexOutcome::Limit => return SolveResult::limit(),
        SimplexOutcome::Unbounded => return SolveResult::limit(),
    }

    let mut assignment = lower;
    for (r, &bv) in basis.iter().enumerate() {
        if bv < n {
            assignment[bv] += b[r];
        }
    }
    let objective = m.objective_of(&assignment);
    debug_assert!(m.is_feasible(&assignment), "simplex returned infeasible point");
    let is_integral = m
        .vars
        .iter()
        .zip(&assignment)
        .filter(|(v, _)| v.integral)
        .all(|(_, &x)| (x - x.round()).abs() <= TOL);
    SolveResult { status: Status::Optimal, objective, assignment, is_integral }
}

enum SimplexOutcome {
    Optimal,
    Unbounded,
    Limit,
}

fn run_simplex(
    a: &mut [Vec<f64>],
    b: &mut [f64],
    basis: &mut [usize],
    c: &[f64],
    pivots_left: &mut usize,
) -> SimplexOutcome {
    let nrows = a.len();
    let total = c.len();
    let mut degenerate = 0usize;
    loop {
        if *pivots_left == 0 {
            return SimplexOutcome::Limit;
        }
        // reduced costs: c_j - c_B B^{-1} A_j (recomputed; rows stay small)
        let bland = degenerate > DEGENERATE_PIVOTS_BEFORE_BLAND;
        let mut enter: Option<usize> = None;
        let mut best = -TOL;
        for j in 0..total {
            let mut red = c[j];
            for r in 0..nrows {
                if c[basis[r]] != 0.0 {
                    red -= c[basis[r]] * a[r][j];
                }
            }
            if red < -TOL {
                if bland {
                    enter = Some(j);
                    break;
                }
                if red < best {
                    best = red;
                    enter = Some(j);
                }
            }
        }
        let Some(j) = enter else { return SimplexOutcome::Optimal };
        // ratio test
        let mut leave: Option<usize> = None;
        let mut best_ratio = f64::INFINITY;
        for r in 0..nrows {
            if a[r][j] > TOL {
                let ratio = b[r] / a[r][j];
                let better = ratio < best_ratio - TOL
                    || (ratio < best_ratio + TOL
                        && leave.is_some_and(|l| basis[r] < basis[l]));
                if leave.is_none() || better {
                    best_ratio = ratio;
                    leave = Some(r);
                }
            }
        }
        let Some(r) = leave else { return SimplexOutcome::Unbounded };
        if best_ratio < TOL {
            degenerate += 1;
        } else {
            degenerate = 0;
        }
        pivot(a, b, basis, r, j);
        *pivots_left -= 1;
    }
}

fn pivot(a: &mut [Vec<f64>], b: &mut [f64], basis: &mut [usize], r: usize, j: usize) {
    let nrows = a.len();
    let p = a[r][j];
    for v in a[r].iter_mut() {
        *v /= p;
    }
    b[r] /= p;
    for i in 0..nrows {
        if i != r && a[i][j].abs() > 1e-12 {
            let f = a[i][j];
            for k in 0..a[i].len() {
                a[i][k] -= f * a[r][k];
            }
            b[i] -= f * b[r];
            if b[i].abs() < 1e-12 {
                b[i] = 0.0;
            }
        }
    }
    basis[r] = j;
}

#[derive(Debug)]
struct Node {
    bound: f64,
    overrides: Vec<(usize, f64, f64)>, // (var, lower, upper)
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.bound == other.bound
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // max-heap by *negated* comparison: best (lowest) bound first
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        other.bound.total_cmp(&self.bound)
    }
}

/// Branch-and-bound on the integral-marked variables: best-bound node
/// selection, most-fractional branching, lowest-index tie-break. Terminates
/// early once the incumbent matches the best outstanding relaxation bound.
pub fn solve_milp(m: &LinearModel) -> SolveResult {
    solve_milp_capped(m, DEFAULT_NODE_CAP)
}

pub fn solve_milp_capped(m: &LinearModel, node_cap: usize) -> SolveResult {
    solve_milp_deadline(m, node_cap, None)
}

/// Branch and bound with an optional wall-clock deadline; when the deadline
/// passes, the best incumbent so far is returned with IterationLimit status.
pub fn solve_milp_deadline(
    m: &LinearModel,
    node_cap: usize,
    deadline: Option<std::time::Instant>,
) -> SolveResult {
    let root = solve_lp(m);
    match root.status {
        Status::Optimal => {}
        _ => return root,
    }
    if root.is_integral {
        return root;
    }
    let mut incumbent: Option<SolveResult> = None;
    let mut heap = BinaryHeap::new();
    heap.push(Node { bound: root.objective, overrides: Vec::new() });
    let mut nodes = 0usize;
    while let Some(node) = heap.pop() {
        if let Some(inc) = &incumbent {
            if node.bound >= inc.objective - TOL {
                break; // best-bound >= incumbent: proven optimal
            }
        }
        nodes += 1;
        let timed_out = deadline.is_some_and(|d| std::time::Instant::now() >= d);
        if nodes > node_cap || timed_out {
            return incumbent.map_or_else(SolveResult::limit, |mut r| {
                r.status = Status::IterationLimit;
                r
            });
        }
        let mut sub = m.clone();
        for &(i, lo, up) in &node.overrides {
            sub.vars[i].lower = sub.vars[i].lower.max(lo);
            sub.vars[i].upper = sub.vars[i].upper.min(up);
        }
        if sub.vars.iter().any(|v| v.lower > v.upper + TOL) {
            continue;
        }
        let rel = solve_lp(&sub);
        if rel.status != Status::Optimal {
            continue;
        }
        if let Some(inc) = &incumbent {
            if rel.objective >= inc.objective - TOL {
                continue;
            }
        }
        if rel.is_integral {
            let mut cand = rel;
            // snap integral-marked values exactly
            for (i, v) in m.vars.iter().enumerate() {
                if v.integral {
                    cand.assignment[i] = cand.assignment[i].round();
                }
            }
            cand.objective = m.objective_of(&cand.assignment);
            if incumbent.as_ref().is_none_or(|inc| cand.objective < inc.objective - TOL) {
                incumbent = Some(cand);
            }
            continue;
        }
        // most fractional integral-marked variable, lowest index on ties
        let (bi, bx) = m
            .vars
            .iter()
            .enumerate()
            .filter(|(_, v)| v.integral)
            .map(|(i, _)| (i, rel.assignment[i]))
            .filter(|(_, x)| (x - x.round()).abs() > TOL)
            .max_by(|(i1, x1), (i2, x2)| {
                let f1 = (x1 - x1.round()).abs();
                let f2 = (x2 - x2.round()).abs();
                f1.partial_cmp(&f2).unwrap().then(i2.cmp(i1))
            })
            .expect("fractional variable exists when not integral");
        for (lo, up) in [(f64::NEG_INFINITY, bx.floor()), (bx.ceil(), f64::INFINITY)] {
            let mut overrides = node.overrides.clone();
            overrides.push((bi, lo.max(m.vars[bi].lower), up.min(m.vars[bi].upper)));
            heap.push(Node { bound: rel.objective, overrides });
        }
    }
    incumbent.unwrap_or_else(SolveResult::infeasible)
}

/// Solves both the relaxation and the integral program; lp ≤ ilp always.
pub fn integrality_gap(m: &LinearModel) -> (SolveResult, SolveResult) {
    (solve_lp(m), solve_milp(m))
}
