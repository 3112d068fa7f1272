//! Bounded-variable revised simplex.
//!
//! Problems are `min cᵀx` subject to equality rows, `≤` rows and variable
//! bounds `l ≤ x ≤ u`. Every `≤` row gets a slack; rows whose starting
//! residual has the wrong sign get an artificial that phase 1 drives out.
//!
//! The basis is kept as a sparse LU: structural singletons are peeled off
//! the basis (there are many: slacks, assignment columns) and only the
//! remaining nucleus is factored densely. Pivots are appended as
//! product-form etas and the basis is refactored every
//! [`LpOptions::refactor_every`] pivots.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Entries below this magnitude are never used as pivots.
pub const PIVOT_TOL: f64 = 1e-11;
/// Ratio-test candidates need `|α| > RATIO_TOL`.
const RATIO_TOL: f64 = 1e-9;
/// Pivots at least this large are preferred among tied leaving rows.
const SAFE_PIVOT: f64 = 1e-7;
/// Refactor once the eta file holds this many nonzeros per row.
const ETA_FILL: usize = 8;
const PRIMAL_TOL: f64 = 1e-9;
const DUAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
    pub name: String,
}

/// `min cᵀx` s.t. `A_eq x = b_eq`, `A_ub x ≤ b_ub`, `l ≤ x ≤ u`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LpProblem {
    pub cost: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub var_names: Vec<String>,
    pub eq: Vec<Constraint>,
    pub ub: Vec<Constraint>,
}

impl LpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.cost.len()
    }

    pub fn add_var(&mut self, cost: f64, lower: f64, upper: f64, name: impl Into<String>) -> usize {
        self.cost.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.var_names.push(name.into());
        self.cost.len() - 1
    }

    pub fn add_eq(&mut self, coeffs: Vec<(usize, f64)>, rhs: f64, name: impl Into<String>) -> usize {
        self.eq.push(Constraint { coeffs, rhs, name: name.into() });
        self.eq.len() - 1
    }

    pub fn add_ub(&mut self, coeffs: Vec<(usize, f64)>, rhs: f64, name: impl Into<String>) -> usize {
        self.ub.push(Constraint { coeffs, rhs, name: name.into() });
        self.ub.len() - 1
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        if self.lower.len() != n || self.upper.len() != n || self.var_names.len() != n {
            return Err(Error::Dimension("bounds and names must match the cost row".into()));
        }
        if self.cost.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("costs must be finite"));
        }
        for (j, (&l, &u)) in self.lower.iter().zip(&self.upper).enumerate() {
            if l.is_nan() || u.is_nan() || l > u || l == f64::INFINITY || u == f64::NEG_INFINITY {
                return Err(Error::invalid(format!("variable {j} has bounds [{l}, {u}]")));
            }
        }
        for c in self.eq.iter().chain(&self.ub) {
            if !c.rhs.is_finite() {
                return Err(Error::invalid(format!("row {} has non-finite rhs", c.name)));
            }
            for &(j, v) in &c.coeffs {
                if j >= n || !v.is_finite() {
                    return Err(Error::Dimension(format!("row {} references bad column {j}", c.name)));
                }
            }
        }
        Ok(())
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.cost.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest violation of any row or bound at `x`.
    pub fn primal_residual(&self, x: &[f64]) -> f64 {
        let row = |c: &Constraint| c.coeffs.iter().map(|&(j, v)| v * x[j]).sum::<f64>() - c.rhs;
        let eq = self.eq.iter().map(|c| row(c).abs());
        let ub = self.ub.iter().map(|c| row(c).max(0.0));
        let bounds = x
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&v, (&l, &u))| (l - v).max(v - u).max(0.0));
        eq.chain(ub).chain(bounds).fold(0.0, f64::max)
    }

    /// Plain-text dump: the objective row, then one line per constraint,
    /// then the bounds.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "LP {} {} {}", self.num_vars(), self.eq.len(), self.ub.len());
        s.push_str("min");
        for c in &self.cost {
            let _ = write!(s, " {c:.17e}");
        }
        s.push('\n');
        for (kind, rows) in [("eq", &self.eq), ("ub", &self.ub)] {
            for c in rows {
                let _ = write!(s, "{kind} {}", c.name);
                for &(j, v) in &c.coeffs {
                    let _ = write!(s, " {j}:{v:.17e}");
                }
                let _ = writeln!(s, " rhs {:.17e}", c.rhs);
            }
        }
        for (j, (l, u)) in self.lower.iter().zip(&self.upper).enumerate() {
            let _ = writeln!(s, "bound {j} {} {l:e} {u:e}", self.var_names[j]);
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Pricing {
    /// Smallest eligible index enters, smallest index leaves on ties.
    #[default]
    Bland,
    /// Most negative reduced cost, falling back to Bland during runs of
    /// degenerate pivots.
    DantzigBland,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LpOptions {
    pub pricing: Pricing,
    pub refactor_every: usize,
    pub max_iter: usize,
    /// Consecutive degenerate pivots before `DantzigBland` switches to Bland.
    pub degenerate_switch: usize,
}

impl Default for LpOptions {
    fn default() -> Self {
        Self { pricing: Pricing::Bland, refactor_every: 100, max_iter: 2_000_000, degenerate_switch: 30 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    /// One multiplier per equality row.
    pub duals_eq: Vec<f64>,
    /// One multiplier per `≤` row (nonpositive at optimality).
    pub duals_ub: Vec<f64>,
    pub reduced_costs: Vec<f64>,
    /// Whether each structural variable is basic.
    pub basic: Vec<bool>,
    pub iterations: usize,
    /// Final basis, reusable as a warm start for a related problem.
    pub basis: Basis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarStatus {
    Basic,
    AtLower,
    AtUpper,
}

/// Simplex basis: status per structural, basic flag per `≤` slack, and the
/// rows whose (zero-valued) artificial stays basic.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Basis {
    pub structural: Vec<VarStatus>,
    pub slack_basic: Vec<bool>,
    pub artificial_basic: Vec<bool>,
}

impl LpSolution {
    /// Bound-aware dual objective `b·y + ∑ max(d,0)·l + min(d,0)·u`.
    pub fn dual_objective(&self, problem: &LpProblem) -> f64 {
        let rows: f64 = problem.eq.iter().zip(&self.duals_eq).map(|(c, y)| c.rhs * y).sum::<f64>()
            + problem.ub.iter().zip(&self.duals_ub).map(|(c, y)| c.rhs * y).sum::<f64>();
        let bounds: f64 = self
            .reduced_costs
            .iter()
            .zip(problem.lower.iter().zip(&problem.upper))
            .zip(&self.basic)
            .map(|((&d, (&l, &u)), &b)| {
                if b || d == 0.0 {
                    0.0
                } else if d > 0.0 {
                    d * l
                } else {
                    d * u
                }
            })
            .sum();
        rows + bounds
    }

    pub fn duality_gap(&self, problem: &LpProblem) -> f64 {
        (self.objective - self.dual_objective(problem)).abs()
    }

    /// Largest product of a reduced cost with the distance to the bound its
    /// sign points at, and of a row dual with its row slack.
    pub fn complementary_slackness_residual(&self, problem: &LpProblem) -> f64 {
        let vars = self
            .reduced_costs
            .iter()
            .zip(&self.x)
            .zip(problem.lower.iter().zip(&problem.upper))
            .map(|((&d, &x), (&l, &u))| {
                if d > 0.0 {
                    d * (x - l)
                } else if d < 0.0 {
                    -d * (u - x)
                } else {
                    0.0
                }
            });
        let rows = problem.ub.iter().zip(&self.duals_ub).map(|(c, &y)| {
            let act: f64 = c.coeffs.iter().map(|&(j, v)| v * self.x[j]).sum();
            (y * (c.rhs - act)).abs()
        });
        vars.chain(rows).fold(0.0, f64::max)
    }
}

/// `true` when every value is within `tol` of 0 or 1.
pub fn is_integral(values: &[f64], tol: f64) -> bool {
    values.iter().all(|&v| v.abs() <= tol || (v - 1.0).abs() <= tol)
}

/// `true` when every value is within `tol` of one of its allowed values.
pub fn is_integral_in<F>(values: &[f64], tol: f64, allowed: F) -> bool
where
    F: Fn(usize) -> [f64; 2],
{
    values.iter().enumerate().all(|(j, &v)| allowed(j).iter().any(|a| (v - a).abs() <= tol))
}

/// Snap values within `tol` of 0 or 1 onto them.
pub fn round_near_integral(values: &[f64], tol: f64) -> Vec<f64> {
    values
        .iter()
        .map(|&v| {
            if v.abs() <= tol {
                0.0
            } else if (v - 1.0).abs() <= tol {
                1.0
            } else {
                v
            }
        })
        .collect()
}

pub fn solve_lp(problem: &LpProblem) -> Result<LpSolution> {
    solve_lp_with(problem, &LpOptions::default())
}

pub fn solve_lp_with(problem: &LpProblem, opts: &LpOptions) -> Result<LpSolution> {
    problem.validate()?;
    let mut s = Simplex::cold(problem, opts);
    s.run(problem)
}

/// Like [`solve_lp_with`], starting from `start` when it is a primal feasible
/// basis of `problem`; otherwise a cold start.
pub fn solve_lp_warm(problem: &LpProblem, opts: &LpOptions, start: &Basis) -> Result<LpSolution> {
    problem.validate()?;
    if let Some(mut s) = Simplex::warm(problem, opts, start) {
        if let Ok(sol) = s.run(problem) {
            return Ok(sol);
        }
    }
    Simplex::cold(problem, opts).run(problem)
}

// ---------------------------------------------------------------------------
// Basis factorization

#[derive(Debug, Clone, Copy)]
struct Pivot {
    row: usize,
    pos: usize,
    value: f64,
}

/// `B = P·blockdiag(U_F, K, L_R)·Q` with column singletons `U_F`, a sparse
/// nucleus `K`, and row singletons `L_R`.
#[derive(Debug, Default)]
struct Lu {
    m: usize,
    cols: Vec<Vec<(usize, f64)>>,
    front: Vec<Pivot>,
    back: Vec<Pivot>,
    k_rows: Vec<usize>,
    k_pos: Vec<usize>,
    nucleus: SparseLu,
}

impl Lu {
    fn factor(m: usize, cols: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); m];
        for (p, col) in cols.iter().enumerate() {
            for &(i, _) in col {
                rows[i].push(p);
            }
        }
        let mut col_cnt: Vec<usize> = cols.iter().map(Vec::len).collect();
        let mut row_cnt: Vec<usize> = rows.iter().map(Vec::len).collect();
        let mut row_active = vec![true; m];
        let mut col_active = vec![true; m];
        let mut col_stack: Vec<usize> = (0..m).rev().filter(|&p| col_cnt[p] == 1).collect();
        let mut row_stack: Vec<usize> = (0..m).rev().filter(|&i| row_cnt[i] == 1).collect();
        let mut front = Vec::new();
        let mut back = Vec::new();

        loop {
            if let Some(p) = col_stack.pop() {
                if !col_active[p] || col_cnt[p] != 1 {
                    continue;
                }
                let &(i, value) = cols[p].iter().find(|&&(i, _)| row_active[i]).expect("count is 1");
                front.push(Pivot { row: i, pos: p, value });
                col_active[p] = false;
                row_active[i] = false;
                for &q in &rows[i] {
                    if col_active[q] {
                        col_cnt[q] -= 1;
                        if col_cnt[q] == 1 {
                            col_stack.push(q);
                        }
                    }
                }
                continue;
            }
            if let Some(i) = row_stack.pop() {
                if !row_active[i] || row_cnt[i] != 1 {
                    continue;
                }
                let p = *rows[i].iter().find(|&&p| col_active[p]).expect("count is 1");
                let value = cols[p].iter().find(|&&(r, _)| r == i).map(|&(_, v)| v).unwrap_or(0.0);
                back.push(Pivot { row: i, pos: p, value });
                col_active[p] = false;
                row_active[i] = false;
                for &(r, _) in &cols[p] {
                    if row_active[r] {
                        row_cnt[r] -= 1;
                        if row_cnt[r] == 1 {
                            row_stack.push(r);
                        }
                    }
                }
                continue;
            }
            break;
        }
        for pv in front.iter().chain(&back) {
            if pv.value.abs() < PIVOT_TOL {
                return Err(Error::Numerical(format!("singular basis: pivot {:e}", pv.value)));
            }
        }

        let k_rows: Vec<usize> = (0..m).filter(|&i| row_active[i]).collect();
        let k_pos: Vec<usize> = (0..m).filter(|&p| col_active[p]).collect();
        let kn = k_rows.len();
        let mut row_slot = vec![usize::MAX; m];
        for (t, &i) in k_rows.iter().enumerate() {
            row_slot[i] = t;
        }
        let k_cols: Vec<Vec<(usize, f64)>> = k_pos
            .iter()
            .map(|&p| cols[p].iter().filter(|&&(i, _)| row_slot[i] != usize::MAX).map(|&(i, v)| (row_slot[i], v)).collect())
            .collect();
        let nucleus = SparseLu::factor(kn, k_cols)?;
        Ok(Self { m, cols, front, back, k_rows, k_pos, nucleus })
    }

    /// Solve `B x = v`; `v` is indexed by row, the result by basis position.
    fn ftran(&self, mut w: Vec<f64>) -> Vec<f64> {
        let mut x = vec![0.0; self.m];
        for pv in &self.back {
            let v = w[pv.row] / pv.value;
            x[pv.pos] = v;
            if v != 0.0 {
                for &(r, a) in &self.cols[pv.pos] {
                    w[r] -= a * v;
                }
            }
        }
        let kn = self.k_rows.len();
        if kn > 0 {
            let b = self.nucleus.solve(self.k_rows.iter().map(|&i| w[i]).collect());
            for (s, &p) in self.k_pos.iter().enumerate() {
                let v = b[s];
                x[p] = v;
                if v != 0.0 {
                    for &(r, a) in &self.cols[p] {
                        w[r] -= a * v;
                    }
                }
            }
        }
        for pv in self.front.iter().rev() {
            let v = w[pv.row] / pv.value;
            x[pv.pos] = v;
            if v != 0.0 {
                for &(r, a) in &self.cols[pv.pos] {
                    w[r] -= a * v;
                }
            }
        }
        x
    }

    /// Solve `Bᵀ y = c`; `c` is indexed by basis position, the result by row.
    fn btran(&self, c: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.m];
        let dot = |p: usize, y: &[f64]| self.cols[p].iter().map(|&(r, a)| a * y[r]).sum::<f64>();
        for pv in &self.front {
            y[pv.row] = (c[pv.pos] - dot(pv.pos, &y)) / pv.value;
        }
        let kn = self.k_rows.len();
        if kn > 0 {
            let b: Vec<f64> = self.k_pos.iter().map(|&p| c[p] - dot(p, &y)).collect();
            let b = self.nucleus.solve_transpose(b);
            for (t, &i) in self.k_rows.iter().enumerate() {
                y[i] = b[t];
            }
        }
        for pv in self.back.iter().rev() {
            y[pv.row] = (c[pv.pos] - dot(pv.pos, &y)) / pv.value;
        }
        y
    }
}

/// Threshold for accepting a pivot relative to its column maximum.
const MARKOWITZ_THRESHOLD: f64 = 0.1;
/// Columns inspected per Markowitz pivot search.
const MARKOWITZ_COLUMNS: usize = 4;

#[derive(Debug, Default)]
struct LuStep {
    row: usize,
    col: usize,
    pivot: f64,
    /// Multipliers `(row, f)`: row −= f·pivot row.
    lower: Vec<(usize, f64)>,
    /// Pivot row entries in later-pivoted columns.
    upper: Vec<(usize, f64)>,
}

/// Right-looking sparse LU with Markowitz pivot selection and threshold
/// partial pivoting.
#[derive(Debug, Default)]
struct SparseLu {
    n: usize,
    steps: Vec<LuStep>,
}

impl SparseLu {
    /// `cols[s]` lists `(row, value)` of column `s`.
    fn factor(n: usize, cols: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        let mut col_pattern: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (s, col) in cols.iter().enumerate() {
            for &(i, v) in col {
                rows[i].push((s, v));
                col_pattern[s].push(i);
            }
        }
        let mut row_active = vec![true; n];
        let mut col_active = vec![true; n];
        let mut col_cnt: Vec<usize> = col_pattern.iter().map(Vec::len).collect();
        let mut slot = vec![usize::MAX; n];
        let mut steps = Vec::with_capacity(n);
        let lookup = |row: &[(usize, f64)], c: usize| row.iter().find(|&&(j, _)| j == c).map(|&(_, v)| v);
        for _ in 0..n {
            // Cheapest columns first.
            let mut order: Vec<usize> = (0..n).filter(|&c| col_active[c]).collect();
            let nth = MARKOWITZ_COLUMNS.min(order.len()) - 1;
            order.select_nth_unstable_by_key(nth, |&c| (col_cnt[c], c));
            order.truncate(MARKOWITZ_COLUMNS);
            order.sort_by_key(|&c| (col_cnt[c], c));
            let mut best: Option<(usize, usize, f64, usize)> = None;
            for &c in &order {
                col_pattern[c].retain(|&i| row_active[i]);
                col_pattern[c].sort_unstable();
                col_pattern[c].dedup();
                let entries: Vec<(usize, f64)> =
                    col_pattern[c].iter().filter_map(|&i| lookup(&rows[i], c).map(|v| (i, v))).collect();
                let cmax = entries.iter().fold(0.0f64, |m, &(_, v)| m.max(v.abs()));
                if cmax < PIVOT_TOL {
                    continue;
                }
                let cc = entries.len();
                for &(i, v) in &entries {
                    if v.abs() < MARKOWITZ_THRESHOLD * cmax {
                        continue;
                    }
                    let cost = (rows[i].len() - 1) * (cc - 1);
                    let better = best.is_none_or(|(_, _, bv, bc)| cost < bc || (cost == bc && v.abs() > bv.abs()));
                    if better {
                        best = Some((i, c, v, cost));
                    }
                }
            }
            let Some((r, c, pivot, _)) = best else {
                return Err(Error::Numerical(format!("singular basis nucleus at step {} of {n}", steps.len())));
            };
            row_active[r] = false;
            col_active[c] = false;
            let prow = std::mem::take(&mut rows[r]);
            let upper: Vec<(usize, f64)> = prow.iter().copied().filter(|&(j, _)| j != c).collect();
            for &(j, _) in &prow {
                col_cnt[j] = col_cnt[j].saturating_sub(1);
            }
            let mut lower = Vec::new();
            let targets: Vec<usize> = col_pattern[c].iter().copied().filter(|&i| row_active[i]).collect();
            for i in targets {
                let Some(a) = lookup(&rows[i], c) else { continue };
                let f = a / pivot;
                lower.push((i, f));
                let row = &mut rows[i];
                row.retain(|&(j, _)| j != c);
                for (t, &(j, _)) in row.iter().enumerate() {
                    slot[j] = t;
                }
                for &(j, v) in &upper {
                    if slot[j] != usize::MAX {
                        row[slot[j]].1 -= f * v;
                    } else {
                        row.push((j, -f * v));
                        col_pattern[j].push(i);
                        col_cnt[j] += 1;
                    }
                }
                for &(j, _) in row.iter() {
                    slot[j] = usize::MAX;
                }
            }
            steps.push(LuStep { row: r, col: c, pivot, lower, upper });
        }
        Ok(Self { n, steps })
    }

    /// Solve `K x = b`; `b` by row, `x` by column.
    fn solve(&self, mut b: Vec<f64>) -> Vec<f64> {
        for st in &self.steps {
            let v = b[st.row];
            if v != 0.0 {
                for &(i, f) in &st.lower {
                    b[i] -= f * v;
                }
            }
        }
        let mut x = vec![0.0; self.n];
        for st in self.steps.iter().rev() {
            let acc = b[st.row] - st.upper.iter().map(|&(j, u)| u * x[j]).sum::<f64>();
            x[st.col] = acc / st.pivot;
        }
        x
    }

    /// Solve `Kᵀ y = c`; `c` by column, `y` by row.
    fn solve_transpose(&self, mut c: Vec<f64>) -> Vec<f64> {
        let mut w = vec![0.0; self.n];
        for st in &self.steps {
            let v = c[st.col] / st.pivot;
            w[st.row] = v;
            if v != 0.0 {
                for &(j, u) in &st.upper {
                    c[j] -= u * v;
                }
            }
        }
        for st in self.steps.iter().rev() {
            let acc: f64 = st.lower.iter().map(|&(i, f)| f * w[i]).sum();
            w[st.row] -= acc;
        }
        w
    }
}

#[derive(Debug)]
struct Eta {
    pos: usize,
    pivot: f64,
    rest: Vec<(usize, f64)>,
}

// ---------------------------------------------------------------------------
// Simplex

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Basic,
    Lower,
    Upper,
    /// Free nonbasic variable resting at zero.
    Zero,
}

struct Simplex {
    m: usize,
    n_struct: usize,
    n_slack: usize,
    col_start: Vec<usize>,
    col_rows: Vec<usize>,
    col_vals: Vec<f64>,
    rhs: Vec<f64>,
    cost: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    x: Vec<f64>,
    state: Vec<State>,
    head: Vec<usize>,
    lu: Lu,
    etas: Vec<Eta>,
    art_start: usize,
    opts: LpOptions,
    iterations: usize,
}

impl Simplex {
    /// Structural and slack columns; no basis yet.
    fn build(p: &LpProblem, opts: &LpOptions) -> Self {
        let n = p.num_vars();
        let n_eq = p.eq.len();
        let m = n_eq + p.ub.len();
        let mut per_col: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (i, c) in p.eq.iter().chain(&p.ub).enumerate() {
            for &(j, v) in &c.coeffs {
                if v != 0.0 {
                    per_col[j].push((i, v));
                }
            }
        }
        // Merge duplicate entries within a column.
        for col in &mut per_col {
            col.sort_by_key(|&(i, _)| i);
            col.dedup_by(|b, a| {
                if a.0 == b.0 {
                    a.1 += b.1;
                    true
                } else {
                    false
                }
            });
            col.retain(|&(_, v)| v != 0.0);
        }
        let mut col_start = vec![0];
        let mut col_rows = Vec::new();
        let mut col_vals = Vec::new();
        for col in &per_col {
            for &(i, v) in col {
                col_rows.push(i);
                col_vals.push(v);
            }
            col_start.push(col_rows.len());
        }
        for t in 0..p.ub.len() {
            col_rows.push(n_eq + t);
            col_vals.push(1.0);
            col_start.push(col_rows.len());
        }
        let mut cost = p.cost.clone();
        let mut lower = p.lower.clone();
        let mut upper = p.upper.clone();
        cost.resize(n + p.ub.len(), 0.0);
        lower.resize(n + p.ub.len(), 0.0);
        upper.resize(n + p.ub.len(), f64::INFINITY);
        let art_start = n + p.ub.len();
        Self {
            m,
            n_struct: n,
            n_slack: p.ub.len(),
            col_start,
            col_rows,
            col_vals,
            rhs: p.eq.iter().chain(&p.ub).map(|c| c.rhs).collect(),
            cost,
            lower,
            upper,
            x: Vec::new(),
            state: Vec::new(),
            head: Vec::new(),
            lu: Lu::default(),
            etas: Vec::new(),
            art_start,
            opts: *opts,
            iterations: 0,
        }
    }

    fn push_artificial(&mut self, row: usize, sign: f64, value: f64) -> usize {
        self.col_rows.push(row);
        self.col_vals.push(sign);
        self.col_start.push(self.col_rows.len());
        self.cost.push(0.0);
        self.lower.push(0.0);
        self.upper.push(f64::INFINITY);
        self.x.push(value);
        self.state.push(State::Basic);
        self.x.len() - 1
    }

    /// Every structural at a finite bound, slacks basic where the residual
    /// allows, artificials elsewhere.
    fn cold(p: &LpProblem, opts: &LpOptions) -> Self {
        let mut s = Self::build(p, opts);
        let n = s.n_struct;
        for j in 0..n {
            let (l, u) = (p.lower[j], p.upper[j]);
            let (v, st) = if l.is_finite() {
                (l, State::Lower)
            } else if u.is_finite() {
                (u, State::Upper)
            } else {
                (0.0, State::Zero)
            };
            s.x.push(v);
            s.state.push(st);
        }
        let mut resid = s.rhs.clone();
        for j in 0..n {
            let xj = s.x[j];
            if xj != 0.0 {
                for (i, v) in s.column(j).collect::<Vec<_>>() {
                    resid[i] -= v * xj;
                }
            }
        }
        let n_eq = s.m - s.n_slack;
        let mut head = vec![usize::MAX; s.m];
        for t in 0..s.n_slack {
            let i = n_eq + t;
            if resid[i] >= 0.0 {
                s.x.push(resid[i]);
                s.state.push(State::Basic);
                head[i] = n + t;
            } else {
                s.x.push(0.0);
                s.state.push(State::Lower);
            }
        }
        for i in 0..s.m {
            if head[i] == usize::MAX {
                let sign = if resid[i] >= 0.0 { 1.0 } else { -1.0 };
                head[i] = s.push_artificial(i, sign, resid[i].abs());
            }
        }
        s.head = head;
        s
    }

    /// Start from a caller-supplied basis. Returns `None` unless the basis
    /// has the right size, factors, and is primal feasible.
    fn warm(p: &LpProblem, opts: &LpOptions, basis: &Basis) -> Option<Self> {
        let mut s = Self::build(p, opts);
        let n = s.n_struct;
        if basis.structural.len() != n || basis.slack_basic.len() != s.n_slack || basis.artificial_basic.len() != s.m {
            return None;
        }
        let mut head = Vec::with_capacity(s.m);
        for (j, st) in basis.structural.iter().enumerate() {
            let (l, u) = (p.lower[j], p.upper[j]);
            let (v, st) = match st {
                VarStatus::Basic => {
                    head.push(j);
                    (0.0, State::Basic)
                }
                VarStatus::AtUpper if u.is_finite() => (u, State::Upper),
                _ if l.is_finite() => (l, State::Lower),
                _ if u.is_finite() => (u, State::Upper),
                _ => (0.0, State::Zero),
            };
            s.x.push(v);
            s.state.push(st);
        }
        for (t, &b) in basis.slack_basic.iter().enumerate() {
            s.x.push(0.0);
            if b {
                head.push(n + t);
                s.state.push(State::Basic);
            } else {
                s.state.push(State::Lower);
            }
        }
        for (i, &b) in basis.artificial_basic.iter().enumerate() {
            if b {
                let j = s.push_artificial(i, 1.0, 0.0);
                head.push(j);
            }
        }
        if head.len() != s.m {
            return None;
        }
        s.head = head;
        s.refactor().ok()?;
        let scale = 1.0 + s.rhs.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        let tol = 10.0 * PRIMAL_TOL * scale;
        for (j, &x) in s.x.iter().enumerate() {
            let (l, u) = if j >= s.art_start { (0.0, 0.0) } else { (s.lower[j], s.upper[j]) };
            if x < l - tol || x > u + tol {
                return None;
            }
        }
        for j in s.art_start..s.ncols() {
            s.upper[j] = 0.0;
        }
        Some(s)
    }

    fn ncols(&self) -> usize {
        self.x.len()
    }

    fn column(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.col_start[j], self.col_start[j + 1]);
        self.col_rows[a..b].iter().copied().zip(self.col_vals[a..b].iter().copied())
    }

    fn refactor(&mut self) -> Result<()> {
        let cols = self.head.iter().map(|&j| self.column(j).collect()).collect();
        self.lu = Lu::factor(self.m, cols)?;
        self.etas.clear();
        // Recompute basic values from the nonbasic ones.
        let mut w = self.rhs.clone();
        for j in 0..self.ncols() {
            if self.state[j] != State::Basic && self.x[j] != 0.0 {
                let xj = self.x[j];
                for (i, v) in self.column(j) {
                    w[i] -= v * xj;
                }
            }
        }
        let xb = self.ftran(w);
        for (p, &j) in self.head.iter().enumerate() {
            self.x[j] = xb[p];
        }
        Ok(())
    }

    fn ftran(&self, w: Vec<f64>) -> Vec<f64> {
        let mut x = self.lu.ftran(w);
        for e in &self.etas {
            let v = x[e.pos] / e.pivot;
            x[e.pos] = v;
            if v != 0.0 {
                for &(i, d) in &e.rest {
                    x[i] -= d * v;
                }
            }
        }
        x
    }

    fn btran(&self, mut c: Vec<f64>) -> Vec<f64> {
        for e in self.etas.iter().rev() {
            let dot: f64 = e.rest.iter().map(|&(i, d)| d * c[i]).sum();
            c[e.pos] = (c[e.pos] - dot) / e.pivot;
        }
        self.lu.btran(&c)
    }

    fn reduced_cost(&self, j: usize, cost: &[f64], y: &[f64]) -> f64 {
        cost[j] - self.column(j).map(|(i, v)| v * y[i]).sum::<f64>()
    }

    fn run(&mut self, p: &LpProblem) -> Result<LpSolution> {
        self.refactor()?;
        let has_art = (self.art_start..self.ncols()).any(|j| self.upper[j] > 0.0);
        if has_art {
            let phase1: Vec<f64> = (0..self.ncols()).map(|j| if j >= self.art_start { 1.0 } else { 0.0 }).collect();
            if let Outcome::Unbounded = self.optimize(&phase1)? {
                return Err(Error::Numerical("phase 1 reported unbounded".into()));
            }
            self.refactor()?;
            let infeas: f64 = (self.art_start..self.ncols()).map(|j| self.x[j].max(0.0)).sum();
            let scale = 1.0 + self.rhs.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            if infeas > 10.0 * PRIMAL_TOL * scale {
                return Ok(self.solution(p, LpStatus::Infeasible));
            }
            for j in self.art_start..self.ncols() {
                self.upper[j] = 0.0;
                if self.state[j] != State::Basic {
                    self.x[j] = 0.0;
                    self.state[j] = State::Lower;
                }
            }
        }
        let cost = self.cost.clone();
        let status = match self.optimize(&cost)? {
            Outcome::Optimal => LpStatus::Optimal,
            Outcome::Unbounded => LpStatus::Unbounded,
        };
        self.refactor()?;
        Ok(self.solution(p, status))
    }

    fn movable(&self, j: usize) -> bool {
        self.state[j] != State::Basic && self.lower[j] < self.upper[j]
    }

    fn optimize(&mut self, cost: &[f64]) -> Result<Outcome> {
        let cscale = 1.0 + cost.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        let dtol = DUAL_TOL * cscale;
        let mut degenerate_run = 0usize;
        loop {
            if self.iterations >= self.opts.max_iter {
                return Err(Error::Numerical(format!("iteration limit {} reached", self.opts.max_iter)));
            }
            let eta_nnz: usize = self.etas.iter().map(|e| e.rest.len() + 1).sum();
            if self.etas.len() >= self.opts.refactor_every || eta_nnz > ETA_FILL * self.m {
                self.refactor()?;
            }
            let cb: Vec<f64> = self.head.iter().map(|&j| cost[j]).collect();
            let y = self.btran(cb);
            let bland = match self.opts.pricing {
                Pricing::Bland => true,
                Pricing::DantzigBland => degenerate_run >= self.opts.degenerate_switch,
            };
            let mut entering: Option<(usize, f64)> = None;
            for j in 0..self.ncols() {
                if !self.movable(j) {
                    continue;
                }
                let d = self.reduced_cost(j, cost, &y);
                let eligible = match self.state[j] {
                    State::Lower => d < -dtol,
                    State::Upper => d > dtol,
                    State::Zero => d.abs() > dtol,
                    State::Basic => false,
                };
                if !eligible {
                    continue;
                }
                if bland {
                    entering = Some((j, d));
                    break;
                }
                if entering.is_none_or(|(_, best)| d.abs() > best.abs()) {
                    entering = Some((j, d));
                }
            }
            let Some((q, dq)) = entering else {
                return Ok(Outcome::Optimal);
            };
            let dir = if dq < 0.0 { 1.0 } else { -1.0 };
            let mut aq = vec![0.0; self.m];
            for (i, v) in self.column(q) {
                aq[i] = v;
            }
            let alpha = self.ftran(aq);

            // Ratio test: basic values move by −dir·θ·α.
            let flip = self.upper[q] - self.lower[q];
            let mut best_theta = f64::INFINITY;
            let mut cands: Vec<(usize, f64)> = Vec::new();
            for (p, &a) in alpha.iter().enumerate() {
                if a.abs() <= RATIO_TOL {
                    continue;
                }
                let j = self.head[p];
                let rate = dir * a;
                let theta = if rate > 0.0 {
                    if self.lower[j] == f64::NEG_INFINITY {
                        continue;
                    }
                    (self.x[j] - self.lower[j]).max(0.0) / rate
                } else {
                    if self.upper[j] == f64::INFINITY {
                        continue;
                    }
                    (self.upper[j] - self.x[j]).max(0.0) / -rate
                };
                cands.push((p, theta));
                best_theta = best_theta.min(theta);
            }
            if flip <= best_theta && flip.is_finite() {
                self.apply_step(q, dir, flip, &alpha);
                self.state[q] = if self.state[q] == State::Lower { State::Upper } else { State::Lower };
                self.x[q] = if self.state[q] == State::Lower { self.lower[q] } else { self.upper[q] };
                self.iterations += 1;
                degenerate_run = 0;
                continue;
            }
            if !best_theta.is_finite() {
                return Ok(Outcome::Unbounded);
            }
            let leave = if bland {
                // Exact ties, lowest index; tiny pivots only as a last resort.
                let tie = best_theta + 1e-12 * (1.0 + best_theta);
                let ties: Vec<usize> = cands.iter().filter(|&&(_, t)| t <= tie).map(|&(p, _)| p).collect();
                let big = ties.iter().copied().filter(|&p| alpha[p].abs() >= SAFE_PIVOT).min_by_key(|&p| self.head[p]);
                big.or_else(|| ties.iter().copied().max_by(|&a, &b| alpha[a].abs().total_cmp(&alpha[b].abs())))
            } else {
                // Harris: relax bounds by the primal tolerance, then take the
                // largest pivot among the rows blocking within that window.
                let relaxed = cands
                    .iter()
                    .map(|&(p, t)| t + PRIMAL_TOL / alpha[p].abs())
                    .fold(f64::INFINITY, f64::min);
                cands
                    .iter()
                    .filter(|&&(_, t)| t <= relaxed)
                    .map(|&(p, _)| p)
                    .min_by(|&a, &b| alpha[b].abs().total_cmp(&alpha[a].abs()).then(self.head[a].cmp(&self.head[b])))
            }
            .expect("finite ratio has a candidate");
            let theta = cands.iter().find(|&&(p, _)| p == leave).map(|&(_, t)| t).unwrap_or(best_theta);
            if alpha[leave].abs() < PIVOT_TOL {
                return Err(Error::Numerical(format!("pivot {:e} below tolerance", alpha[leave])));
            }
            self.apply_step(q, dir, theta, &alpha);
            let out = self.head[leave];
            let rate = dir * alpha[leave];
            if rate > 0.0 {
                self.x[out] = self.lower[out];
                self.state[out] = State::Lower;
            } else {
                self.x[out] = self.upper[out];
                self.state[out] = State::Upper;
            }
            self.state[q] = State::Basic;
            self.head[leave] = q;
            let rest = alpha
                .iter()
                .enumerate()
                .filter(|&(p, &a)| p != leave && a != 0.0)
                .map(|(p, &a)| (p, a))
                .collect();
            self.etas.push(Eta { pos: leave, pivot: alpha[leave], rest });
            self.iterations += 1;
            if theta <= 1e-12 {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
        }
    }

    fn apply_step(&mut self, q: usize, dir: f64, theta: f64, alpha: &[f64]) {
        if theta == 0.0 {
            return;
        }
        self.x[q] += dir * theta;
        for (p, &a) in alpha.iter().enumerate() {
            if a != 0.0 {
                let j = self.head[p];
                self.x[j] -= dir * theta * a;
            }
        }
    }

    fn solution(&self, p: &LpProblem, status: LpStatus) -> LpSolution {
        let n = self.n_struct;
        let mut x: Vec<f64> = self.x[..n].to_vec();
        // Clip drift outside the box.
        for (v, (&l, &u)) in x.iter_mut().zip(p.lower.iter().zip(&p.upper)) {
            *v = v.clamp(l, u);
        }
        let cb: Vec<f64> = self.head.iter().map(|&j| self.cost[j]).collect();
        let y = self.btran(cb);
        let n_eq = p.eq.len();
        let reduced_costs: Vec<f64> = (0..n)
            .map(|j| if self.state[j] == State::Basic { 0.0 } else { self.reduced_cost(j, &self.cost, &y) })
            .collect();
        debug_assert_eq!(self.n_slack, p.ub.len());
        LpSolution {
            status,
            objective: p.objective(&x),
            x,
            duals_eq: y[..n_eq].to_vec(),
            duals_ub: y[n_eq..].to_vec(),
            reduced_costs,
            basic: (0..n).map(|j| self.state[j] == State::Basic).collect(),
            iterations: self.iterations,
            basis: self.basis(),
        }
    }

    fn basis(&self) -> Basis {
        let mut artificial_basic = vec![false; self.m];
        for j in self.art_start..self.ncols() {
            if self.state[j] == State::Basic {
                artificial_basic[self.col_rows[self.col_start[j]]] = true;
            }
        }
        Basis {
            structural: (0..self.n_struct)
                .map(|j| match self.state[j] {
                    State::Basic => VarStatus::Basic,
                    State::Upper => VarStatus::AtUpper,
                    _ => VarStatus::AtLower,
                })
                .collect(),
            slack_basic: (self.n_struct..self.art_start).map(|j| self.state[j] == State::Basic).collect(),
            artificial_basic,
        }
    }
}

enum Outcome {
    Optimal,
    Unbounded,
}
