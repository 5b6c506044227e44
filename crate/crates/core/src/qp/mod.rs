//! Diagonal convex QPs with named variables.
//!
//! The objective is `sum_j quad_diag[j] * x_j^2 + lin_cost . x` subject to
//! sparse rows `a . x <= ub` and `g . x = d`. Hinge terms `w * max(e, 0)`
//! and squared hinges `w * max(e, 0)^2` enter through an auxiliary
//! variable bounded below by both zero and the expression.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

mod solve;

pub use solve::{solve, SolveOptions};

/// Semantic name of a decision variable, e.g. `B_chg[home=2][t=17]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarKey {
    pub name: &'static str,
    pub home: Option<usize>,
    pub t: Option<usize>,
}

impl VarKey {
    pub const fn scalar(name: &'static str) -> Self {
        VarKey {
            name,
            home: None,
            t: None,
        }
    }

    pub const fn home(name: &'static str, home: usize) -> Self {
        VarKey {
            name,
            home: Some(home),
            t: None,
        }
    }

    pub const fn step(name: &'static str, t: usize) -> Self {
        VarKey {
            name,
            home: None,
            t: Some(t),
        }
    }

    pub const fn at(name: &'static str, home: usize, t: usize) -> Self {
        VarKey {
            name,
            home: Some(home),
            t: Some(t),
        }
    }
}

impl fmt::Display for VarKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name)?;
        if let Some(h) = self.home {
            write!(f, "[home={h}]")?;
        }
        if let Some(t) = self.t {
            write!(f, "[t={t}]")?;
        }
        Ok(())
    }
}

/// Sparse affine expression `sum c_j x_j + constant`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn constant(c: f64) -> Self {
        LinExpr {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn var(j: usize) -> Self {
        LinExpr {
            terms: vec![(j, 1.0)],
            constant: 0.0,
        }
    }

    pub fn term(mut self, j: usize, c: f64) -> Self {
        self.terms.push((j, c));
        self
    }

    pub fn plus(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    pub fn push(&mut self, j: usize, c: f64) {
        self.terms.push((j, c));
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(j, c)| c * x[j]).sum::<f64>()
    }
}

/// One sparse constraint row.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl Row {
    pub fn dot(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, c)| c * x[j]).sum()
    }
}

#[derive(Debug, Clone, Default)]
pub struct QpProblem {
    pub quad_diag: Vec<f64>,
    pub lin_cost: Vec<f64>,
    /// Rows meaning `a . x <= rhs`.
    pub ineq: Vec<Row>,
    /// Rows meaning `g . x = rhs`.
    pub eq: Vec<Row>,
    keys: Vec<VarKey>,
    index: HashMap<VarKey, usize>,
    /// `(auxiliary column, row of expr - aux <= 0)` per hinge term.
    epigraphs: Vec<(usize, usize)>,
}

impl QpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.keys.len()
    }

    pub fn add_var(&mut self, key: VarKey) -> Result<usize> {
        if self.index.contains_key(&key) {
            return Err(Error::Internal(format!("variable {key} declared twice")));
        }
        let j = self.keys.len();
        self.keys.push(key);
        self.index.insert(key, j);
        self.quad_diag.push(0.0);
        self.lin_cost.push(0.0);
        Ok(j)
    }

    pub fn var(&self, key: &VarKey) -> Option<usize> {
        self.index.get(key).copied()
    }

    /// Column of `key`, or an internal error naming it.
    pub fn expect_var(&self, key: &VarKey) -> Result<usize> {
        self.var(key)
            .ok_or_else(|| Error::Internal(format!("missing variable {key}")))
    }

    pub fn key(&self, j: usize) -> &VarKey {
        &self.keys[j]
    }

    pub fn keys(&self) -> &[VarKey] {
        &self.keys
    }

    /// Largest `u - max(expr, 0)` over all hinge auxiliaries at `x`; zero
    /// when every hinge is tight.
    pub fn max_epigraph_gap(&self, x: &[f64]) -> f64 {
        self.epigraphs
            .iter()
            .map(|&(u, r)| {
                let row = &self.ineq[r];
                let expr = row.dot(x) + x[u] - row.rhs;
                x[u] - expr.max(0.0)
            })
            .fold(0.0, f64::max)
    }

    /// `expr <= ub`, with the expression constant moved to the right.
    pub fn add_le(&mut self, expr: LinExpr, ub: f64) {
        self.ineq.push(Row {
            rhs: ub - expr.constant,
            coeffs: expr.terms,
        });
    }

    pub fn add_ge(&mut self, expr: LinExpr, lb: f64) {
        let coeffs = expr.terms.into_iter().map(|(j, c)| (j, -c)).collect();
        self.ineq.push(Row {
            coeffs,
            rhs: expr.constant - lb,
        });
    }

    pub fn add_eq(&mut self, expr: LinExpr, value: f64) {
        self.eq.push(Row {
            rhs: value - expr.constant,
            coeffs: expr.terms,
        });
    }

    /// `lo <= x_j <= hi`; a degenerate box becomes an equality row.
    pub fn add_bounds(&mut self, j: usize, lo: f64, hi: f64) {
        if hi - lo <= 1e-12 {
            self.add_eq(LinExpr::var(j), lo);
        } else {
            if lo.is_finite() {
                self.add_ge(LinExpr::var(j), lo);
            }
            if hi.is_finite() {
                self.add_le(LinExpr::var(j), hi);
            }
        }
    }

    pub fn add_linear_cost(&mut self, j: usize, c: f64) {
        self.lin_cost[j] += c;
    }

    pub fn add_quad_cost(&mut self, j: usize, w: f64) {
        self.quad_diag[j] += w;
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.quad_diag)
            .zip(&self.lin_cost)
            .map(|((x, d), q)| d * x * x + q * x)
            .sum()
    }

    /// Largest constraint violation at `x` (0 when feasible).
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let ineq = self
            .ineq
            .iter()
            .map(|r| (r.dot(x) - r.rhs).max(0.0))
            .fold(0.0, f64::max);
        let eq = self
            .eq
            .iter()
            .map(|r| (r.dot(x) - r.rhs).abs())
            .fold(0.0, f64::max);
        ineq.max(eq)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        if let Some(j) = self.quad_diag.iter().position(|d| !(d.is_finite() && *d >= 0.0)) {
            invalid!("quadratic coefficient of {} is not a finite non-negative number", self.keys[j]);
        }
        if self.lin_cost.iter().any(|c| !c.is_finite()) {
            invalid!("linear cost contains a non-finite coefficient");
        }
        for row in self.ineq.iter().chain(&self.eq) {
            if !row.rhs.is_finite() {
                invalid!("constraint right-hand side is not finite");
            }
            if row.coeffs.iter().any(|&(j, c)| j >= n || !c.is_finite()) {
                invalid!("constraint row references an unknown column or non-finite coefficient");
            }
        }
        Ok(())
    }

    /// Human-readable dump, one line per cost or constraint term. For
    /// debugging only; the layout is not stable.
    pub fn write_dump<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# vars {} ineq {} eq {}", self.num_vars(), self.ineq.len(), self.eq.len())?;
        for (j, key) in self.keys.iter().enumerate() {
            if self.quad_diag[j] != 0.0 || self.lin_cost[j] != 0.0 {
                writeln!(w, "cost {key} quad {} lin {}", self.quad_diag[j], self.lin_cost[j])?;
            }
        }
        let fmt_row = |row: &Row| {
            row.coeffs
                .iter()
                .map(|&(j, c)| format!("{c:+} {}", self.keys[j]))
                .collect::<Vec<_>>()
                .join(" ")
        };
        for row in &self.ineq {
            writeln!(w, "le {} <= {}", fmt_row(row), row.rhs)?;
        }
        for row in &self.eq {
            writeln!(w, "eq {} = {}", fmt_row(row), row.rhs)?;
        }
        Ok(())
    }
}

/// Adds `weight * max(expr, 0)` through an auxiliary `u >= 0, u >= expr`.
pub fn add_hinge_cost(p: &mut QpProblem, key: VarKey, expr: LinExpr, weight: f64) -> Result<usize> {
    if !(weight >= 0.0 && weight.is_finite()) {
        invalid!("hinge weight for {key} must be non-negative, got {weight}");
    }
    let u = add_epigraph(p, key, expr)?;
    p.add_linear_cost(u, weight);
    Ok(u)
}

/// Adds `weight * max(expr, 0)^2` through an auxiliary `s >= 0, s >= expr`.
pub fn add_squared_hinge_cost(
    p: &mut QpProblem,
    key: VarKey,
    expr: LinExpr,
    weight: f64,
) -> Result<usize> {
    if !(weight >= 0.0 && weight.is_finite()) {
        invalid!("squared hinge weight for {key} must be non-negative, got {weight}");
    }
    let s = add_epigraph(p, key, expr)?;
    p.add_quad_cost(s, weight);
    Ok(s)
}

fn add_epigraph(p: &mut QpProblem, key: VarKey, expr: LinExpr) -> Result<usize> {
    let u = p.add_var(key)?;
    p.add_ge(LinExpr::var(u), 0.0);
    // expr - u <= 0
    p.add_le(expr.term(u, -1.0), 0.0);
    p.epigraphs.push((u, p.ineq.len() - 1));
    Ok(u)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    MaxIters,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Scaled infinity-norm primal residual.
    pub primal_residual: f64,
    /// Scaled infinity-norm dual (stationarity) residual.
    pub dual_residual: f64,
    pub status: SolveStatus,
    pub iterations: u32,
}

impl QpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    pub fn value(&self, p: &QpProblem, key: &VarKey) -> Result<f64> {
        Ok(self.x[p.expect_var(key)?])
    }
}
