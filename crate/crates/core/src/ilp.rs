//! Pure 0-1 integer linear programs: a small model builder, an exact
//! depth-first branch-and-bound solver, and fixed-format MPS I/O.
//!
//! The solver does not relax to an LP. It relies on
//!
//! * bound propagation: every row is kept in `sum a_j x_j <= b` form with its
//!   minimum activity, and free variables whose every completion would
//!   overshoot `b` get fixed;
//! * an objective bound: the fixed cost plus the negative costs of free
//!   variables, tightened by a fractional-knapsack estimate over covering
//!   rows with pairwise disjoint free supports;
//! * a static most-constrained-first branching order.
//!
//! That is plenty for desk-scale corridor models. Larger instances can be
//! exported with [`export_mps`] and handed to an external MILP solver.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Feasibility tolerance on normalised rows (largest |coefficient| = 1).
pub const ROW_TOL: f64 = 1e-9;
const OBJ_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum IlpError {
    #[error("duplicate variable name {0:?}")]
    DuplicateName(String),
    #[error("unknown variable handle {0}")]
    UnknownVar(usize),
    #[error("coefficient for {0:?} is not finite")]
    NonFinite(String),
    #[error("MPS parse error on line {line}: {msg}")]
    Mps { line: usize, msg: String },
    #[error("external solver failed: {0}")]
    External(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Handle to a binary variable of one [`IlpModel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Var(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

/// Linear expression without a constant term.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinExpr {
    pub terms: Vec<(Var, f64)>,
}

impl LinExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn term(mut self, var: Var, coef: f64) -> Self {
        self.terms.push((var, coef));
        self
    }

    pub fn push(&mut self, var: Var, coef: f64) {
        self.terms.push((var, coef));
    }

    pub fn sum<I: IntoIterator<Item = Var>>(vars: I) -> Self {
        Self {
            terms: vars.into_iter().map(|v| (v, 1.0)).collect(),
        }
    }

    pub fn value(&self, assignment: &[bool]) -> f64 {
        self.terms
            .iter()
            .filter(|(v, _)| assignment[v.0])
            .map(|(_, c)| c)
            .sum()
    }
}

impl FromIterator<(Var, f64)> for LinExpr {
    fn from_iter<T: IntoIterator<Item = (Var, f64)>>(iter: T) -> Self {
        Self {
            terms: iter.into_iter().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub name: String,
    pub expr: LinExpr,
    pub sense: Sense,
    pub rhs: f64,
}

impl Constraint {
    /// Whether `assignment` satisfies the row, with [`ROW_TOL`] scaled by the
    /// row's largest coefficient.
    pub fn satisfied_by(&self, assignment: &[bool]) -> bool {
        let scale = self
            .expr
            .terms
            .iter()
            .map(|(_, c)| c.abs())
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);
        let lhs = self.expr.value(assignment);
        let tol = ROW_TOL * scale;
        match self.sense {
            Sense::Le => lhs <= self.rhs + tol,
            Sense::Ge => lhs >= self.rhs - tol,
            Sense::Eq => (lhs - self.rhs).abs() <= tol,
        }
    }
}

/// Minimisation over binary variables.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IlpModel {
    pub name: String,
    names: Vec<String>,
    index: HashMap<String, usize>,
    constraints: Vec<Constraint>,
    objective: LinExpr,
}

impl IlpModel {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ..Self::default()
        }
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> Result<Var, IlpError> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(IlpError::DuplicateName(name));
        }
        let v = self.names.len();
        self.index.insert(name.clone(), v);
        self.names.push(name);
        Ok(Var(v))
    }

    fn check_expr(&self, expr: &LinExpr) -> Result<(), IlpError> {
        for &(v, c) in &expr.terms {
            if v.0 >= self.names.len() {
                return Err(IlpError::UnknownVar(v.0));
            }
            if !c.is_finite() {
                return Err(IlpError::NonFinite(self.names[v.0].clone()));
            }
        }
        Ok(())
    }

    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        expr: LinExpr,
        sense: Sense,
        rhs: f64,
    ) -> Result<(), IlpError> {
        self.check_expr(&expr)?;
        let name = name.into();
        if !rhs.is_finite() {
            return Err(IlpError::NonFinite(name));
        }
        self.constraints.push(Constraint {
            name,
            expr,
            sense,
            rhs,
        });
        Ok(())
    }

    pub fn set_objective(&mut self, expr: LinExpr) -> Result<(), IlpError> {
        self.check_expr(&expr)?;
        self.objective = expr;
        Ok(())
    }

    pub fn num_vars(&self) -> usize {
        self.names.len()
    }

    pub fn var_name(&self, v: Var) -> &str {
        &self.names[v.0]
    }

    pub fn var(&self, name: &str) -> Option<Var> {
        self.index.get(name).copied().map(Var)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn objective(&self) -> &LinExpr {
        &self.objective
    }

    pub fn objective_value(&self, assignment: &[bool]) -> f64 {
        self.objective.value(assignment)
    }

    /// Indices of constraints violated by `assignment`.
    pub fn violated(&self, assignment: &[bool]) -> Vec<usize> {
        self.constraints
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.satisfied_by(assignment))
            .map(|(i, _)| i)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    BudgetExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub status: SolveStatus,
    /// Best assignment found; always present when `Optimal`.
    pub assignment: Option<Vec<bool>>,
    pub objective: Option<f64>,
    pub nodes: u64,
}

impl SolveResult {
    pub fn value(&self, v: Var) -> bool {
        self.assignment.as_ref().is_some_and(|a| a[v.0])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub node_budget: u64,
    /// Propagation, conflict detection and objective bounding. Turning this
    /// off degrades the search to plain enumeration.
    pub pruning: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            node_budget: 5_000_000,
            pruning: true,
        }
    }
}

impl SolveOptions {
    pub fn with_budget(node_budget: u64) -> Self {
        Self {
            node_budget,
            ..Self::default()
        }
    }
}

/// `sum a_j x_j <= rhs`, scaled so the largest |a_j| is 1.
#[derive(Debug, Clone)]
struct Row {
    vars: Vec<usize>,
    coefs: Vec<f64>,
    rhs: f64,
    /// Free negative-coefficient variables with positive cost, sorted by
    /// cost per unit of coverage. Empty when the row cannot force cost.
    cover_order: Vec<(usize, f64, f64)>,
}

#[derive(Debug, Clone, Copy)]
struct Occurrence {
    row: usize,
    coef: f64,
}

#[derive(Debug, Clone, Copy)]
enum Trail {
    Value(usize),
    MinAct(usize, f64),
    NegFree(usize, f64),
    Bound(f64),
}

const FREE: i8 = -1;

struct Search {
    rows: Vec<Row>,
    occ: Vec<Vec<Occurrence>>,
    cost: Vec<f64>,
    order: Vec<usize>,
    value: Vec<i8>,
    min_act: Vec<f64>,
    neg_free: Vec<f64>,
    bound: f64,
    trail: Vec<Trail>,
    queue: Vec<usize>,
    queued: Vec<bool>,
    pruning: bool,
    cover_rows: Vec<usize>,
    cover_used: Vec<u32>,
    cover_epoch: u32,
}

impl Search {
    /// `None` when a constant row is already violated.
    fn new(model: &IlpModel, pruning: bool) -> Option<Self> {
        let n = model.num_vars();
        let mut cost = vec![0.0; n];
        for &(v, c) in &model.objective.terms {
            cost[v.0] += c;
        }
        let mut rows = Vec::new();
        for con in &model.constraints {
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(con.expr.terms.len());
            let mut terms = con.expr.terms.clone();
            terms.sort_by_key(|(v, _)| v.0);
            for (v, c) in terms {
                match merged.last_mut() {
                    Some(last) if last.0 == v.0 => last.1 += c,
                    _ => merged.push((v.0, c)),
                }
            }
            merged.retain(|(_, c)| *c != 0.0);
            let signs: &[f64] = match con.sense {
                Sense::Le => &[1.0],
                Sense::Ge => &[-1.0],
                Sense::Eq => &[1.0, -1.0],
            };
            let scale = merged.iter().map(|(_, c)| c.abs()).fold(0.0, f64::max);
            for &sign in signs {
                if merged.is_empty() {
                    if sign * 0.0 > sign * con.rhs + ROW_TOL * con.rhs.abs().max(1.0) {
                        return None;
                    }
                    continue;
                }
                let f = sign / scale;
                let vars: Vec<usize> = merged.iter().map(|(v, _)| *v).collect();
                let coefs: Vec<f64> = merged.iter().map(|(_, c)| c * f).collect();
                let mut cover_order: Vec<(usize, f64, f64)> = vars
                    .iter()
                    .zip(&coefs)
                    .filter(|(_, a)| **a < 0.0)
                    .map(|(&v, &a)| (v, -a, cost[v].max(0.0)))
                    .collect();
                if cover_order.iter().all(|(_, _, c)| *c == 0.0) {
                    cover_order.clear();
                } else {
                    cover_order.sort_by(|a, b| (a.2 / a.1).total_cmp(&(b.2 / b.1)));
                }
                rows.push(Row {
                    vars,
                    coefs,
                    rhs: con.rhs * f,
                    cover_order,
                });
            }
        }
        let mut occ = vec![Vec::new(); n];
        for (r, row) in rows.iter().enumerate() {
            for (&v, &a) in row.vars.iter().zip(&row.coefs) {
                occ[v].push(Occurrence { row: r, coef: a });
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&v| std::cmp::Reverse(occ[v].len()));
        let min_act: Vec<f64> = rows
            .iter()
            .map(|r| r.coefs.iter().filter(|a| **a < 0.0).sum())
            .collect();
        let neg_free: Vec<f64> = min_act.iter().map(|m| -m).collect();
        let bound = cost.iter().filter(|c| **c < 0.0).sum();
        let cover_rows = (0..rows.len())
            .filter(|&r| !rows[r].cover_order.is_empty())
            .collect();
        let nrows = rows.len();
        Some(Self {
            rows,
            occ,
            cost,
            order,
            value: vec![FREE; n],
            min_act,
            neg_free,
            bound,
            trail: Vec::new(),
            queue: Vec::new(),
            queued: vec![false; nrows],
            pruning,
            cover_rows,
            cover_used: vec![0; n],
            cover_epoch: 0,
        })
    }

    #[inline]
    fn violated(&self, r: usize) -> bool {
        self.min_act[r] > self.rows[r].rhs + ROW_TOL
    }

    /// Fixes `v`; returns false on an immediate row conflict.
    fn fix(&mut self, v: usize, val: bool) -> bool {
        debug_assert_eq!(self.value[v], FREE);
        self.value[v] = i8::from(val);
        self.trail.push(Trail::Value(v));
        let c = self.cost[v];
        if (c > 0.0 && val) || (c < 0.0 && !val) {
            self.trail.push(Trail::Bound(self.bound));
            self.bound += c.abs();
        }
        let mut ok = true;
        for i in 0..self.occ[v].len() {
            let Occurrence { row, coef } = self.occ[v][i];
            if coef < 0.0 {
                self.trail.push(Trail::NegFree(row, self.neg_free[row]));
                self.neg_free[row] += coef;
            }
            let delta = if coef > 0.0 && val {
                coef
            } else if coef < 0.0 && !val {
                -coef
            } else {
                continue;
            };
            self.trail.push(Trail::MinAct(row, self.min_act[row]));
            self.min_act[row] += delta;
            if self.pruning {
                if self.violated(row) {
                    ok = false;
                } else if !self.queued[row] {
                    self.queued[row] = true;
                    self.queue.push(row);
                }
            }
        }
        ok
    }

    fn clear_queue(&mut self) {
        for r in self.queue.drain(..) {
            self.queued[r] = false;
        }
    }

    fn propagate(&mut self) -> bool {
        while let Some(r) = self.queue.pop() {
            self.queued[r] = false;
            let slack = self.rows[r].rhs + ROW_TOL - self.min_act[r];
            if slack < 0.0 {
                self.clear_queue();
                return false;
            }
            if slack >= 1.0 {
                continue;
            }
            for idx in 0..self.rows[r].vars.len() {
                let v = self.rows[r].vars[idx];
                if self.value[v] != FREE {
                    continue;
                }
                let a = self.rows[r].coefs[idx];
                if a.abs() > slack && !self.fix(v, a < 0.0) {
                    self.clear_queue();
                    return false;
                }
            }
        }
        true
    }

    fn undo(&mut self, mark: usize) {
        while self.trail.len() > mark {
            match self.trail.pop().expect("trail length checked") {
                Trail::Value(v) => self.value[v] = FREE,
                Trail::MinAct(r, old) => self.min_act[r] = old,
                Trail::NegFree(r, old) => self.neg_free[r] = old,
                Trail::Bound(old) => self.bound = old,
            }
        }
    }

    /// Extra cost forced by covering rows with disjoint free supports.
    fn cover_bound(&mut self, budget: f64) -> f64 {
        let mut candidates: Vec<(f64, usize)> = Vec::new();
        for &r in &self.cover_rows {
            let fixed_act = self.min_act[r] + self.neg_free[r];
            let need = fixed_act - self.rows[r].rhs - ROW_TOL;
            if need <= 0.0 {
                continue;
            }
            let mut remaining = need;
            let mut extra = 0.0;
            for &(v, weight, c) in &self.rows[r].cover_order {
                if self.value[v] != FREE {
                    continue;
                }
                if weight >= remaining {
                    extra += c * remaining / weight;
                    remaining = 0.0;
                    break;
                }
                extra += c;
                remaining -= weight;
            }
            if remaining > 0.0 {
                // The free positive-cost variables alone cannot cover the row;
                // zero-cost ones may, so only the full sum is a valid bound.
                let zero_cost_cover: f64 = self.rows[r]
                    .vars
                    .iter()
                    .zip(&self.rows[r].coefs)
                    .filter(|(v, a)| **a < 0.0 && self.value[**v] == FREE && self.cost[**v] <= 0.0)
                    .map(|(_, a)| -a)
                    .sum();
                if zero_cost_cover + ROW_TOL < remaining {
                    return f64::INFINITY;
                }
            }
            if extra > 0.0 {
                candidates.push((extra, r));
            }
        }
        if candidates.is_empty() {
            return 0.0;
        }
        candidates.sort_by(|a, b| b.0.total_cmp(&a.0));
        self.cover_epoch = self.cover_epoch.wrapping_add(1);
        if self.cover_epoch == 0 {
            self.cover_used.iter_mut().for_each(|u| *u = 0);
            self.cover_epoch = 1;
        }
        let epoch = self.cover_epoch;
        let mut total = 0.0;
        for (extra, r) in candidates {
            let row = &self.rows[r];
            let clash = row
                .vars
                .iter()
                .zip(&row.coefs)
                .any(|(v, a)| *a < 0.0 && self.value[*v] == FREE && self.cover_used[*v] == epoch);
            if clash {
                continue;
            }
            for (v, a) in row.vars.iter().zip(&row.coefs) {
                if *a < 0.0 && self.value[*v] == FREE {
                    self.cover_used[*v] = epoch;
                }
            }
            total += extra;
            if total >= budget {
                break;
            }
        }
        total
    }

    fn next_free(&self, from: usize) -> Option<usize> {
        (from..self.order.len()).find(|&p| self.value[self.order[p]] == FREE)
    }

    fn first_value(&self, v: usize) -> bool {
        self.cost[v] < 0.0
    }

    fn leaf_feasible(&self) -> bool {
        (0..self.rows.len()).all(|r| !self.violated(r))
    }

    fn assignment(&self) -> Vec<bool> {
        self.value.iter().map(|v| *v == 1).collect()
    }
}

struct Frame {
    pos: usize,
    var: usize,
    mark: usize,
    tried: u8,
}

/// Exact depth-first branch-and-bound.
pub fn solve(model: &IlpModel, options: SolveOptions) -> SolveResult {
    let infeasible = |nodes| SolveResult {
        status: SolveStatus::Infeasible,
        assignment: None,
        objective: None,
        nodes,
    };
    let Some(mut s) = Search::new(model, options.pruning) else {
        return infeasible(0);
    };
    if options.pruning {
        for r in 0..s.rows.len() {
            if s.violated(r) {
                return infeasible(0);
            }
            s.queued[r] = true;
            s.queue.push(r);
        }
        if !s.propagate() {
            return infeasible(1);
        }
    }

    let mut best: Option<(f64, Vec<bool>)> = None;
    let mut nodes: u64 = 0;
    let mut stack: Vec<Frame> = Vec::new();
    let mut exhausted = false;
    let mut pos = 0usize;

    'search: loop {
        // Evaluate the current node.
        nodes += 1;
        if nodes > options.node_budget {
            exhausted = true;
            break;
        }
        let mut expand = true;
        if options.pruning {
            if let Some((incumbent, _)) = &best {
                let gap = incumbent - OBJ_TOL - s.bound;
                if gap <= 0.0 || s.cover_bound(gap) >= gap {
                    expand = false;
                }
            }
        }
        if expand {
            match s.next_free(pos) {
                Some(p) => {
                    stack.push(Frame {
                        pos: p,
                        var: s.order[p],
                        mark: s.trail.len(),
                        tried: 0,
                    });
                }
                None => {
                    if s.leaf_feasible() {
                        let a = s.assignment();
                        let obj = model.objective_value(&a);
                        if best.as_ref().is_none_or(|(b, _)| obj < b - OBJ_TOL) {
                            best = Some((obj, a));
                        }
                    }
                }
            }
        }
        // Advance to the next child, backtracking as needed.
        loop {
            let Some(frame) = stack.last_mut() else {
                break 'search;
            };
            let mark = frame.mark;
            if frame.tried >= 2 {
                stack.pop();
                if let Some(parent) = stack.last() {
                    s.undo(parent.mark);
                }
                continue;
            }
            let var = frame.var;
            let first = s.first_value(var);
            let val = if frame.tried == 0 { first } else { !first };
            frame.tried += 1;
            let next_pos = frame.pos + 1;
            s.undo(mark);
            let ok = s.fix(var, val) && (!options.pruning || s.propagate());
            if ok {
                pos = next_pos;
                continue 'search;
            }
            s.clear_queue();
        }
    }

    let status = if exhausted {
        SolveStatus::BudgetExhausted
    } else if best.is_some() {
        SolveStatus::Optimal
    } else {
        SolveStatus::Infeasible
    };
    let (objective, assignment) = match best {
        Some((o, a)) => (Some(o), Some(a)),
        None => (None, None),
    };
    SolveResult {
        status,
        assignment,
        objective,
        nodes: nodes.min(options.node_budget),
    }
}

const OBJ_ROW: &str = "OBJ";

fn mps_line(out: &mut String, f1: &str, f2: &str, f3: &str, f4: &str) {
    // Fixed MPS columns: 2-3, 5-12, 15-22, 25-36. Longer names overflow the
    // field, which free-format readers accept.
    let line = format!(" {f1:<2} {f2:<8}  {f3:<8}  {f4}");
    out.push_str(line.trim_end());
    out.push('\n');
}

fn row_name(model: &IlpModel, i: usize) -> String {
    let name = &model.constraints[i].name;
    if name.is_empty() {
        format!("R{}", i + 1)
    } else {
        name.clone()
    }
}

/// Fixed-format MPS, declaration ordered. Every variable is written with a
/// `BV` bound.
pub fn export_mps(model: &IlpModel) -> String {
    let mut out = String::new();
    let name = if model.name.is_empty() { "MODEL" } else { &model.name };
    let _ = writeln!(out, "NAME          {name}");
    out.push_str("ROWS\n");
    mps_line(&mut out, "N", OBJ_ROW, "", "");
    let row_names: Vec<String> = (0..model.constraints.len()).map(|i| row_name(model, i)).collect();
    for (c, rn) in model.constraints.iter().zip(&row_names) {
        let sense = match c.sense {
            Sense::Le => "L",
            Sense::Ge => "G",
            Sense::Eq => "E",
        };
        mps_line(&mut out, sense, rn, "", "");
    }
    // Column-major coefficient lists, in declaration order.
    let n = model.num_vars();
    let mut columns: Vec<Vec<(&str, f64)>> = vec![Vec::new(); n];
    let mut obj = vec![0.0; n];
    for &(v, c) in &model.objective.terms {
        obj[v.0] += c;
    }
    for (v, &c) in obj.iter().enumerate() {
        if c != 0.0 {
            columns[v].push((OBJ_ROW, c));
        }
    }
    for (c, rn) in model.constraints.iter().zip(&row_names) {
        let mut merged: Vec<(usize, f64)> = Vec::new();
        for &(v, a) in &c.expr.terms {
            match merged.iter_mut().find(|(u, _)| *u == v.0) {
                Some(slot) => slot.1 += a,
                None => merged.push((v.0, a)),
            }
        }
        for (v, a) in merged {
            if a != 0.0 {
                columns[v].push((rn.as_str(), a));
            }
        }
    }
    out.push_str("COLUMNS\n");
    for (v, entries) in columns.iter().enumerate() {
        let vn = &model.names[v];
        if entries.is_empty() {
            mps_line(&mut out, "", vn, OBJ_ROW, "0");
        }
        for (rn, a) in entries {
            mps_line(&mut out, "", vn, rn, &format!("{a:?}"));
        }
    }
    out.push_str("RHS\n");
    for (c, rn) in model.constraints.iter().zip(&row_names) {
        if c.rhs != 0.0 {
            mps_line(&mut out, "", "RHS", rn, &format!("{:?}", c.rhs));
        }
    }
    out.push_str("BOUNDS\n");
    for vn in &model.names {
        mps_line(&mut out, "BV", "BND", vn, "");
    }
    out.push_str("ENDATA\n");
    out
}

/// Reads MPS produced by [`export_mps`] (or any pure-binary MPS file).
pub fn import_mps(text: &str) -> Result<IlpModel, IlpError> {
    #[derive(PartialEq)]
    enum Section {
        None,
        Rows,
        Columns,
        Rhs,
        Bounds,
    }
    let err = |line: usize, msg: &str| IlpError::Mps {
        line,
        msg: msg.to_string(),
    };
    let mut model = IlpModel::default();
    let mut section = Section::None;
    let mut obj_name: Option<String> = None;
    let mut rows: Vec<(String, Sense)> = Vec::new();
    let mut row_index: HashMap<String, usize> = HashMap::new();
    let mut row_terms: Vec<Vec<(Var, f64)>> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    let mut objective = LinExpr::new();

    for (ln, raw) in text.lines().enumerate() {
        let line_no = ln + 1;
        if raw.trim().is_empty() || raw.starts_with('*') {
            continue;
        }
        let fields: Vec<&str> = raw.split_whitespace().collect();
        if !raw.starts_with(' ') && !raw.starts_with('\t') {
            match fields[0] {
                "NAME" => model.name = fields.get(1).copied().unwrap_or("").to_string(),
                "ROWS" => section = Section::Rows,
                "COLUMNS" => section = Section::Columns,
                "RHS" => section = Section::Rhs,
                "BOUNDS" => section = Section::Bounds,
                "ENDATA" => break,
                "RANGES" => return Err(err(line_no, "RANGES section is not supported")),
                other => return Err(err(line_no, &format!("unknown section {other}"))),
            }
            continue;
        }
        match section {
            Section::Rows => {
                if fields.len() != 2 {
                    return Err(err(line_no, "ROWS entry needs a type and a name"));
                }
                let sense = match fields[0] {
                    "N" => {
                        if obj_name.is_none() {
                            obj_name = Some(fields[1].to_string());
                        }
                        continue;
                    }
                    "L" => Sense::Le,
                    "G" => Sense::Ge,
                    "E" => Sense::Eq,
                    other => return Err(err(line_no, &format!("unknown row type {other}"))),
                };
                row_index.insert(fields[1].to_string(), rows.len());
                rows.push((fields[1].to_string(), sense));
                row_terms.push(Vec::new());
                rhs.push(0.0);
            }
            Section::Columns => {
                if fields.len() < 3 || fields.len().is_multiple_of(2) {
                    return Err(err(line_no, "COLUMNS entry needs name/value pairs"));
                }
                if fields.contains(&"'MARKER'") {
                    return Err(err(line_no, "integer markers are not supported"));
                }
                let var = match model.var(fields[0]) {
                    Some(v) => v,
                    None => model.add_binary(fields[0])?,
                };
                for pair in fields[1..].chunks(2) {
                    let value: f64 = pair[1]
                        .parse()
                        .map_err(|_| err(line_no, &format!("bad number {}", pair[1])))?;
                    if Some(pair[0]) == obj_name.as_deref() {
                        objective.push(var, value);
                    } else {
                        let r = *row_index
                            .get(pair[0])
                            .ok_or_else(|| err(line_no, &format!("unknown row {}", pair[0])))?;
                        row_terms[r].push((var, value));
                    }
                }
            }
            Section::Rhs => {
                if fields.len() < 3 || fields.len().is_multiple_of(2) {
                    return Err(err(line_no, "RHS entry needs name/value pairs"));
                }
                for pair in fields[1..].chunks(2) {
                    let value: f64 = pair[1]
                        .parse()
                        .map_err(|_| err(line_no, &format!("bad number {}", pair[1])))?;
                    if Some(pair[0]) == obj_name.as_deref() {
                        return Err(err(line_no, "objective constants are not supported"));
                    }
                    let r = *row_index
                        .get(pair[0])
                        .ok_or_else(|| err(line_no, &format!("unknown row {}", pair[0])))?;
                    rhs[r] = value;
                }
            }
            Section::Bounds => {
                if fields.len() < 3 {
                    return Err(err(line_no, "BOUNDS entry too short"));
                }
                if fields[0] != "BV" {
                    return Err(err(line_no, &format!("only BV bounds are supported, got {}", fields[0])));
                }
                if model.var(fields[2]).is_none() {
                    model.add_binary(fields[2])?;
                }
            }
            Section::None => return Err(err(line_no, "data before any section")),
        }
    }
    for (((name, sense), terms), b) in rows.into_iter().zip(row_terms).zip(rhs) {
        model.add_constraint(name, LinExpr { terms }, sense, b)?;
    }
    model.set_objective(objective)?;
    Ok(model)
}

/// External MILP solver invocation. `args` may contain the placeholders
/// `{mps}` and `{solution}`; the solver must write `name value` lines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalSolver {
    pub program: PathBuf,
    pub args: Vec<String>,
}

/// Parses `name value` lines into an assignment for `model`. Unlisted
/// variables are zero; unknown names are rejected.
pub fn parse_solution(text: &str, model: &IlpModel) -> Result<Vec<bool>, IlpError> {
    let mut assignment = vec![false; model.num_vars()];
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace();
        let (Some(name), Some(value)) = (it.next(), it.next()) else {
            return Err(IlpError::External(format!("line {}: expected `name value`", ln + 1)));
        };
        let v = model
            .var(name)
            .ok_or_else(|| IlpError::External(format!("unknown variable {name}")))?;
        let x: f64 = value
            .parse()
            .map_err(|_| IlpError::External(format!("bad value {value:?} for {name}")))?;
        assignment[v.0] = x > 0.5;
    }
    Ok(assignment)
}

/// Writes `model` as MPS into `workdir`, runs the solver, and re-checks the
/// returned assignment against every constraint.
pub fn solve_external(
    model: &IlpModel,
    solver: &ExternalSolver,
    workdir: &Path,
) -> Result<SolveResult, IlpError> {
    let mps_path = workdir.join("model.mps");
    let sol_path = workdir.join("model.sol");
    std::fs::write(&mps_path, export_mps(model))?;
    let args: Vec<String> = solver
        .args
        .iter()
        .map(|a| {
            a.replace("{mps}", &mps_path.to_string_lossy())
                .replace("{solution}", &sol_path.to_string_lossy())
        })
        .collect();
    let status = Command::new(&solver.program).args(&args).status()?;
    if !status.success() {
        return Err(IlpError::External(format!("solver exited with {status}")));
    }
    let text = std::fs::read_to_string(&sol_path)?;
    let assignment = parse_solution(&text, model)?;
    let violated = model.violated(&assignment);
    if !violated.is_empty() {
        return Err(IlpError::External(format!(
            "returned assignment violates {} constraints (first: {})",
            violated.len(),
            model.constraints()[violated[0]].name
        )));
    }
    Ok(SolveResult {
        status: SolveStatus::Optimal,
        objective: Some(model.objective_value(&assignment)),
        assignment: Some(assignment),
        nodes: 0,
    })
}
