use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};
use serde::{Deserialize, Serialize};

use super::{QpProblem, QpSolution, SolveStatus};
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveOptions {
    /// Bound on the scaled primal and dual residuals for `Optimal`.
    pub tol: f64,
    pub max_iters: u32,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-6,
            max_iters: 200_000,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol < 1.0) {
            invalid!("solver tol must lie in (0, 1), got {}", self.tol);
        }
        if self.max_iters == 0 {
            invalid!("solver max_iters must be positive");
        }
        Ok(())
    }
}

/// Column-major sparse copy of the stacked `[eq; ineq]` rows.
struct Stacked {
    colptr: Vec<usize>,
    rowval: Vec<usize>,
    nzval: Vec<f64>,
    rhs: Vec<f64>,
}

fn stack_rows(p: &QpProblem) -> Stacked {
    let n = p.num_vars();
    let rows = p.eq.iter().chain(&p.ineq);
    let mut counts = vec![0usize; n];
    for row in rows.clone() {
        for &(j, _) in &row.coeffs {
            counts[j] += 1;
        }
    }
    let mut colptr = vec![0usize; n + 1];
    for j in 0..n {
        colptr[j + 1] = colptr[j] + counts[j];
    }
    let nnz = colptr[n];
    let mut rowval = vec![0usize; nnz];
    let mut nzval = vec![0.0; nnz];
    let mut next = colptr.clone();
    let mut rhs = Vec::with_capacity(p.eq.len() + p.ineq.len());
    // Rows are visited in increasing order, so each column stays sorted;
    // repeated (row, col) entries are merged.
    for (i, row) in rows.enumerate() {
        rhs.push(row.rhs);
        for &(j, c) in &row.coeffs {
            let k = next[j];
            if k > colptr[j] && rowval[k - 1] == i {
                nzval[k - 1] += c;
            } else {
                rowval[k] = i;
                nzval[k] = c;
                next[j] += 1;
            }
        }
    }
    // Compact away slots freed by merged duplicates.
    let mut out_ptr = vec![0usize; n + 1];
    let mut w = 0;
    for j in 0..n {
        for k in colptr[j]..next[j] {
            rowval[w] = rowval[k];
            nzval[w] = nzval[k];
            w += 1;
        }
        out_ptr[j + 1] = w;
    }
    rowval.truncate(w);
    nzval.truncate(w);
    Stacked {
        colptr: out_ptr,
        rowval,
        nzval,
        rhs,
    }
}

/// Snaps each hinge auxiliary onto `max(expr, 0)`. Interior-point iterates
/// leave a slack of order `sqrt(mu / weight)` on inactive squared hinges,
/// where the objective is flat. The snapped point stays feasible and its
/// objective is no larger.
fn polish_epigraphs(p: &QpProblem, x: &mut [f64]) {
    for &(u, r) in &p.epigraphs {
        let row = &p.ineq[r];
        x[u] = (row.dot(x) + x[u] - row.rhs).max(0.0);
    }
}

/// Scaled primal residual of `x`.
fn primal_residual(a: &Stacked, n_eq: usize, x: &[f64]) -> f64 {
    let mut ax = vec![0.0; a.rhs.len()];
    for (j, &xj) in x.iter().enumerate() {
        for k in a.colptr[j]..a.colptr[j + 1] {
            ax[a.rowval[k]] += a.nzval[k] * xj;
        }
    }
    let mut prim: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for (i, (&axi, &b)) in ax.iter().zip(&a.rhs).enumerate() {
        let r = axi - b;
        prim = prim.max(if i < n_eq { r.abs() } else { r.max(0.0) });
        scale = scale.max(axi.abs()).max(b.abs());
    }
    prim / (1.0 + scale)
}

/// Solves `p` with an interior-point method. Deterministic for a fixed
/// problem; the status is `Optimal` only when both scaled residuals are at
/// most `opts.tol`.
pub fn solve(p: &QpProblem, opts: &SolveOptions) -> Result<QpSolution> {
    p.validate()?;
    opts.validate()?;
    let n = p.num_vars();
    let n_eq = p.eq.len();
    let m = n_eq + p.ineq.len();
    let a = stack_rows(p);

    let pmat = CscMatrix::new(
        n,
        n,
        (0..=n).collect(),
        (0..n).collect(),
        p.quad_diag.iter().map(|d| 2.0 * d).collect(),
    );
    let amat = CscMatrix::new(m, n, a.colptr.clone(), a.rowval.clone(), a.nzval.clone());
    let mut cones = Vec::new();
    if n_eq > 0 {
        cones.push(SupportedConeT::ZeroConeT(n_eq));
    }
    if m > n_eq {
        cones.push(SupportedConeT::NonnegativeConeT(m - n_eq));
    }

    let inner_tol = (opts.tol * 1e-4).clamp(1e-12, 1e-10);
    let settings = DefaultSettings {
        verbose: false,
        max_iter: opts.max_iters,
        tol_gap_abs: inner_tol,
        tol_gap_rel: inner_tol,
        tol_feas: inner_tol,
        ..DefaultSettings::default()
    };
    let mut solver = DefaultSolver::new(&pmat, &p.lin_cost, &amat, &a.rhs, &cones, settings)
        .map_err(|e| Error::Internal(format!("solver setup failed: {e}")))?;
    solver.solve();
    let sol = &solver.solution;

    // Residuals of the solver's iterate, independent of solver internals.
    let mut at_z = vec![0.0; n];
    for (j, atz) in at_z.iter_mut().enumerate() {
        for k in a.colptr[j]..a.colptr[j + 1] {
            *atz += a.nzval[k] * sol.z[a.rowval[k]];
        }
    }
    let mut dual: f64 = 0.0;
    let mut dual_scale: f64 = 0.0;
    for j in 0..n {
        let px = 2.0 * p.quad_diag[j] * sol.x[j];
        dual = dual.max((px + p.lin_cost[j] + at_z[j]).abs());
        dual_scale = dual_scale
            .max(px.abs())
            .max(p.lin_cost[j].abs())
            .max(at_z[j].abs());
    }
    let dual_residual = dual / (1.0 + dual_scale);
    let mut x = sol.x.clone();
    polish_epigraphs(p, &mut x);
    let primal_residual = primal_residual(&a, n_eq, &sol.x).max(primal_residual(&a, n_eq, &x));

    let status = match sol.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved
            if primal_residual <= opts.tol && dual_residual <= opts.tol =>
        {
            SolveStatus::Optimal
        }
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SolveStatus::Infeasible,
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => SolveStatus::Unbounded,
        _ => SolveStatus::MaxIters,
    };

    Ok(QpSolution {
        objective: p.objective_value(&x),
        x,
        primal_residual,
        dual_residual,
        status,
        iterations: sol.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::super::{add_hinge_cost, add_squared_hinge_cost, LinExpr, VarKey};
    use super::*;

    fn opts() -> SolveOptions {
        SolveOptions::default()
    }

    #[test]
    fn projection_onto_halfline() {
        // (x - 3)^2 = x^2 - 6x + 9; solver objective excludes the constant.
        let mut p = QpProblem::new();
        let x = p.add_var(VarKey::scalar("x")).unwrap();
        p.add_quad_cost(x, 1.0);
        p.add_linear_cost(x, -6.0);
        p.add_le(LinExpr::var(x), 2.0);
        let s = solve(&p, &opts()).unwrap();
        assert!(s.is_optimal());
        assert!((s.x[x] - 2.0).abs() < 1e-6);
        assert!((s.objective + 9.0 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn linear_objective_at_bound() {
        let mut p = QpProblem::new();
        let x = p.add_var(VarKey::scalar("x")).unwrap();
        p.add_linear_cost(x, 1.0);
        p.add_ge(LinExpr::var(x), 0.0);
        let s = solve(&p, &opts()).unwrap();
        assert!(s.is_optimal());
        assert!(s.x[x].abs() < 1e-6);
    }

    #[test]
    fn hinge_of_negative_is_zero() {
        let mut p = QpProblem::new();
        let x = p.add_var(VarKey::scalar("x")).unwrap();
        p.add_eq(LinExpr::var(x), -3.0);
        let u = add_hinge_cost(&mut p, VarKey::scalar("u"), LinExpr::var(x), 1.0).unwrap();
        let s = solve(&p, &opts()).unwrap();
        assert!(s.is_optimal());
        assert!(s.x[u].abs() < 1e-6);
        assert!(s.objective.abs() < 1e-6);
    }

    #[test]
    fn hinge_of_positive_contributes_weighted_value() {
        let mut p = QpProblem::new();
        let x = p.add_var(VarKey::scalar("x")).unwrap();
        p.add_eq(LinExpr::var(x), 4.0);
        add_hinge_cost(&mut p, VarKey::scalar("u"), LinExpr::var(x), 0.5).unwrap();
        let s = solve(&p, &opts()).unwrap();
        assert!((s.objective - 2.0).abs() < 1e-6);
    }

    #[test]
    fn zero_weight_hinge_leaves_objective_alone() {
        let mut p = QpProblem::new();
        let x = p.add_var(VarKey::scalar("x")).unwrap();
        p.add_eq(LinExpr::var(x), 4.0);
        let u = add_hinge_cost(&mut p, VarKey::scalar("u"), LinExpr::var(x), 0.0).unwrap();
        // Keep the auxiliary bounded so the flat direction has an interior.
        p.add_le(LinExpr::var(u), 10.0);
        let s = solve(&p, &opts()).unwrap();
        assert!(s.is_optimal());
        assert!(s.objective.abs() < 1e-6);
        assert!(s.x[u] >= 4.0 - 1e-6);
    }

    #[test]
    fn squared_hinge_values() {
        for (fixed, expected) in [(2.0, 400.0), (-5.0, 0.0), (0.0, 0.0)] {
            let mut p = QpProblem::new();
            let x = p.add_var(VarKey::scalar("x")).unwrap();
            p.add_eq(LinExpr::var(x), fixed);
            add_squared_hinge_cost(&mut p, VarKey::scalar("s"), LinExpr::var(x), 100.0).unwrap();
            let s = solve(&p, &opts()).unwrap();
            assert!(s.is_optimal(), "{fixed}: {s:?}");
            assert!((s.objective - expected).abs() < 1e-5, "{fixed}: {}", s.objective);
        }
    }

    #[test]
    fn infeasible_is_reported() {
        let mut p = QpProblem::new();
        let x = p.add_var(VarKey::scalar("x")).unwrap();
        p.add_le(LinExpr::var(x), 1.0);
        p.add_ge(LinExpr::var(x), 2.0);
        p.add_quad_cost(x, 1.0);
        assert_eq!(solve(&p, &opts()).unwrap().status, SolveStatus::Infeasible);
    }

    #[test]
    fn iteration_cap_is_reported() {
        let mut p = QpProblem::new();
        let x = p.add_var(VarKey::scalar("x")).unwrap();
        let y = p.add_var(VarKey::scalar("y")).unwrap();
        p.add_quad_cost(x, 1.0);
        p.add_linear_cost(y, 1.0);
        p.add_ge(LinExpr::var(x).term(y, 1.0), 3.0);
        p.add_ge(LinExpr::var(y), -1.0);
        let s = solve(&p, &SolveOptions { tol: 1e-6, max_iters: 1 }).unwrap();
        assert_eq!(s.status, SolveStatus::MaxIters);
        assert_eq!(s.x.len(), 2);
    }

    #[test]
    fn duplicate_entries_are_merged() {
        let mut p = QpProblem::new();
        let x = p.add_var(VarKey::scalar("x")).unwrap();
        p.add_linear_cost(x, -1.0);
        p.add_le(LinExpr::var(x).term(x, 1.0), 4.0); // 2x <= 4
        let s = solve(&p, &opts()).unwrap();
        assert!((s.x[x] - 2.0).abs() < 1e-6);
    }
}
