//! Dense two-phase primal simplex.
//!
//! Variables are nonnegative; constraints may be `<=`, `>=`, or `=`.
//! Pricing starts with Dantzig's rule and falls back to Bland's rule on
//! stalling or tiny pivots, which guarantees termination on degenerate
//! instances.  The tableau is rebuilt from a fresh LU factorization of
//! the basis every 50 pivots to limit drift.
//!
//! Infeasibility is certified: phase 1 ends with a Farkas vector `y`
//! satisfying `y^T A <= 0` on every column and `y^T b > 0`, which callers
//! re-verify independently.

use crate::error::{Error, Result};
use crate::linalg::{self, Lu, Matrix};

/// Feasibility tolerance on constraint residuals.
pub const FEAS_TOL: f64 = 1e-9;
/// Optimality tolerance on reduced costs.
pub const OPT_TOL: f64 = 1e-9;
/// Smallest pivot magnitude accepted during elimination.
const PIVOT_TOL: f64 = 1e-12;
/// Smallest tableau entry eligible as a pivot in the ratio test.  Kept
/// well above `PIVOT_TOL` so the basis never absorbs noise-level
/// columns, which would make later refactorizations singular.
const RATIO_TOL: f64 = 1e-9;
/// Refactorize the tableau from the basis every this many pivots.
const REFACTOR_EVERY: usize = 75;
const MAX_PIVOTS: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub op: Op,
    pub rhs: f64,
}

/// An LP over nonnegative variables.
#[derive(Debug, Clone)]
pub struct LpProblem {
    pub ncols: usize,
    pub objective: Vec<f64>,
    pub sense: Sense,
    pub constraints: Vec<Constraint>,
}

impl LpProblem {
    pub fn new(ncols: usize, objective: Vec<f64>, sense: Sense) -> Self {
        assert_eq!(objective.len(), ncols);
        LpProblem {
            ncols,
            objective,
            sense,
            constraints: Vec::new(),
        }
    }

    pub fn constrain(&mut self, coeffs: Vec<f64>, op: Op, rhs: f64) {
        assert_eq!(coeffs.len(), self.ncols);
        self.constraints.push(Constraint { coeffs, op, rhs });
    }
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// One multiplier per constraint row, in the caller's row order and
    /// sign convention (duals of the stated problem).
    pub duals: Vec<f64>,
    /// Reduced costs of the structural columns (minimization sign).
    pub reduced_costs: Vec<f64>,
    pub pivots: usize,
}

#[derive(Debug, Clone)]
pub struct FarkasCertificate {
    /// Row multipliers: `y^T A <= 0` columnwise and `y^T b > 0`.
    pub y: Vec<f64>,
}

impl FarkasCertificate {
    /// Re-verify the certificate against the original problem data.
    pub fn verify(&self, lp: &LpProblem, tol: f64) -> bool {
        let m = lp.constraints.len();
        if self.y.len() != m {
            return false;
        }
        // Sign conditions from slack columns: y_i <= 0 on `<=` rows,
        // y_i >= 0 on `>=` rows.
        for (i, c) in lp.constraints.iter().enumerate() {
            match c.op {
                Op::Le if self.y[i] > tol => return false,
                Op::Ge if self.y[i] < -tol => return false,
                _ => {}
            }
        }
        for j in 0..lp.ncols {
            let col: f64 = lp
                .constraints
                .iter()
                .enumerate()
                .map(|(i, c)| self.y[i] * c.coeffs[j])
                .sum();
            if col > tol {
                return false;
            }
        }
        let yb: f64 = lp
            .constraints
            .iter()
            .enumerate()
            .map(|(i, c)| self.y[i] * c.rhs)
            .sum();
        yb > tol
    }
}

#[derive(Debug, Clone)]
pub enum LpOutcome {
    Optimal(LpSolution),
    Infeasible(FarkasCertificate),
    Unbounded { ray: Vec<f64> },
}

struct Tableau {
    m: usize,
    /// Standard-form columns: structural, slack/surplus, artificial.
    a: Matrix,
    b: Vec<f64>,
    /// B^{-1} [A | b], row-major, with b appended as the last column.
    t: Matrix,
    basis: Vec<usize>,
    nart_start: usize,
    /// Per-row sign applied when normalizing rhs to be nonnegative.
    row_sign: Vec<f64>,
    pivots: usize,
}

impl Tableau {
    fn build(lp: &LpProblem) -> Tableau {
        let m = lp.constraints.len();
        let nstruct = lp.ncols;
        let nslack = lp
            .constraints
            .iter()
            .filter(|c| c.op != Op::Eq)
            .count();
        let ncols = nstruct + nslack + m;
        let nart_start = nstruct + nslack;
        let mut a = Matrix::zeros(m, ncols);
        let mut b = vec![0.0; m];
        let mut row_sign = vec![1.0; m];
        let mut slack_idx = nstruct;
        let mut basis = vec![usize::MAX; m];
        for (i, c) in lp.constraints.iter().enumerate() {
            let s = if c.rhs < 0.0 { -1.0 } else { 1.0 };
            row_sign[i] = s;
            for (j, &v) in c.coeffs.iter().enumerate() {
                a[(i, j)] = s * v;
            }
            b[i] = s * c.rhs;
            let slack_coeff = match c.op {
                Op::Le => Some(s),
                Op::Ge => Some(-s),
                Op::Eq => None,
            };
            if let Some(sc) = slack_coeff {
                a[(i, slack_idx)] = sc;
                if sc > 0.0 {
                    basis[i] = slack_idx;
                }
                slack_idx += 1;
            }
            // Artificial column for rows without a usable slack basis.
            a[(i, nart_start + i)] = 1.0;
            if basis[i] == usize::MAX {
                basis[i] = nart_start + i;
            }
        }
        let mut t = Matrix::zeros(m, ncols + 1);
        for i in 0..m {
            for j in 0..ncols {
                t[(i, j)] = a[(i, j)];
            }
            t[(i, ncols)] = b[i];
        }
        Tableau {
            m,
            a,
            b,
            t,
            basis,
            nart_start,
            row_sign,
            pivots: 0,
        }
    }

    fn ncols(&self) -> usize {
        self.a.cols
    }

    fn rhs(&self, i: usize) -> f64 {
        self.t[(i, self.ncols())]
    }

    fn is_artificial(&self, j: usize) -> bool {
        j >= self.nart_start
    }

    /// Rebuild `t = B^{-1} [A | b]` from the recorded basis.
    fn refactor(&mut self) -> Result<()> {
        let m = self.m;
        let mut bmat = Matrix::zeros(m, m);
        for (col, &j) in self.basis.iter().enumerate() {
            for i in 0..m {
                bmat[(i, col)] = self.a[(i, j)];
            }
        }
        let lu = Lu::factor(&bmat)
            .map_err(|_| Error::NumericalBreakdown("singular basis during refactorization".into()))?;
        let ncols = self.ncols();
        // Solve column by column: t_col = B^{-1} a_col.
        for j in 0..=ncols {
            let col: Vec<f64> = if j < ncols {
                (0..m).map(|i| self.a[(i, j)]).collect()
            } else {
                self.b.clone()
            };
            let sol = lu.solve(&col);
            for i in 0..m {
                self.t[(i, j)] = sol[i];
            }
        }
        Ok(())
    }

    fn pivot(&mut self, row: usize, col: usize) -> Result<()> {
        let ncols = self.ncols();
        let p = self.t[(row, col)];
        if p.abs() < PIVOT_TOL {
            return Err(Error::NumericalBreakdown(format!(
                "pivot {p:.3e} below threshold"
            )));
        }
        for j in 0..=ncols {
            self.t[(row, j)] /= p;
        }
        for i in 0..self.m {
            if i == row {
                continue;
            }
            let f = self.t[(i, col)];
            if f == 0.0 {
                continue;
            }
            for j in 0..=ncols {
                let v = self.t[(row, j)];
                self.t[(i, j)] -= f * v;
            }
        }
        self.basis[row] = col;
        self.pivots += 1;
        if self.pivots % REFACTOR_EVERY == 0 {
            self.refactor()?;
        }
        Ok(())
    }

    /// Run the simplex on the given phase costs.  `allow_artificial`
    /// controls whether artificial columns may enter the basis.
    fn optimize(&mut self, costs: &[f64], allow_artificial: bool) -> Result<Option<Vec<f64>>> {
        let ncols = self.ncols();
        let mut bland = false;
        let mut stall = 0usize;
        let mut last_obj = f64::INFINITY;
        loop {
            if self.pivots > MAX_PIVOTS {
                return Err(Error::NumericalBreakdown("pivot cap exceeded".into()));
            }
            let mut in_basis = vec![false; ncols];
            for &j in &self.basis {
                in_basis[j] = true;
            }
            // Reduced costs: c_j - c_B^T t_j.
            let cb: Vec<f64> = self.basis.iter().map(|&j| costs[j]).collect();
            let mut entering = None;
            let mut best = -OPT_TOL;
            for j in 0..ncols {
                if !allow_artificial && self.is_artificial(j) {
                    continue;
                }
                if in_basis[j] {
                    continue;
                }
                let mut rc = costs[j];
                for i in 0..self.m {
                    rc -= cb[i] * self.t[(i, j)];
                }
                if rc < best {
                    if bland {
                        entering = Some(j);
                        break;
                    }
                    best = rc;
                    entering = Some(j);
                } else if bland && rc < -OPT_TOL && entering.is_none() {
                    entering = Some(j);
                    break;
                }
            }
            // Bland: take the lowest-index improving column instead.
            if bland {
                entering = None;
                for j in 0..ncols {
                    if (!allow_artificial && self.is_artificial(j)) || in_basis[j] {
                        continue;
                    }
                    let mut rc = costs[j];
                    for i in 0..self.m {
                        rc -= cb[i] * self.t[(i, j)];
                    }
                    if rc < -OPT_TOL {
                        entering = Some(j);
                        break;
                    }
                }
            }
            let Some(col) = entering else {
                return Ok(None); // optimal
            };
            // Ratio test.  The pivot threshold scales with the column so
            // noise-level entries of a drifted tableau are never chosen;
            // ties are broken by the largest pivot magnitude (smallest
            // basis index under Bland) to keep the basis well conditioned.
            let colmax = (0..self.m)
                .map(|i| self.t[(i, col)].abs())
                .fold(0.0_f64, f64::max);
            let piv_tol = RATIO_TOL * (1.0 + colmax);
            // Rows holding a zero-level artificial with a solid entry are
            // pivoted first so artificials can never grow back above zero.
            let mut leave: Option<usize> = None;
            let mut best_ratio = f64::INFINITY;
            for i in 0..self.m {
                let tij = self.t[(i, col)];
                if self.is_artificial(self.basis[i])
                    && self.rhs(i).abs() <= FEAS_TOL
                    && tij.abs() > 1e-7 * (1.0 + colmax)
                {
                    leave = Some(i);
                    best_ratio = 0.0;
                    break;
                }
            }
            if leave.is_none() {
                for i in 0..self.m {
                    let tij = self.t[(i, col)];
                    if tij > piv_tol {
                        let ratio = self.rhs(i) / tij;
                        let tie = (ratio - best_ratio).abs() <= 1e-12 * (1.0 + ratio.abs());
                        let better = match leave {
                            None => true,
                            Some(_) if !tie => ratio < best_ratio,
                            Some(l) => {
                                if bland {
                                    self.basis[i] < self.basis[l]
                                } else {
                                    tij.abs() > self.t[(l, col)].abs()
                                }
                            }
                        };
                        if better {
                            best_ratio = best_ratio.min(ratio);
                            leave = Some(i);
                        }
                    }
                }
            }
            let Some(row) = leave else {
                // Unbounded: return the improving ray.
                let mut ray = vec![0.0; ncols];
                ray[col] = 1.0;
                for i in 0..self.m {
                    ray[self.basis[i]] = -self.t[(i, col)];
                }
                return Ok(Some(ray));
            };
            match self.pivot(row, col) {
                Ok(()) => {}
                Err(Error::NumericalBreakdown(_)) if !bland => {
                    bland = true;
                    self.refactor()?;
                    continue;
                }
                Err(e) => return Err(e),
            }
            let obj = self.objective(costs);
            if (last_obj - obj).abs() <= 1e-12 * (1.0 + obj.abs()) {
                stall += 1;
                if stall > 3 * self.m + 10 && !bland {
                    bland = true;
                }
            } else {
                stall = 0;
            }
            last_obj = obj;
        }
    }

    fn objective(&self, costs: &[f64]) -> f64 {
        (0..self.m)
            .map(|i| costs[self.basis[i]] * self.rhs(i))
            .sum()
    }

    /// Multipliers of the current basis: solves `B^T y = c_B`.
    fn multipliers(&self, costs: &[f64]) -> Result<Vec<f64>> {
        let m = self.m;
        let mut bt = Matrix::zeros(m, m);
        for (col, &j) in self.basis.iter().enumerate() {
            for i in 0..m {
                bt[(col, i)] = self.a[(i, j)];
            }
        }
        let cb: Vec<f64> = self.basis.iter().map(|&j| costs[j]).collect();
        linalg::solve(&bt, &cb)
            .map_err(|_| Error::NumericalBreakdown("singular basis in dual recovery".into()))
    }
}

/// Solve an LP; infeasibility and unboundedness are certified outcomes,
/// not errors.
pub fn solve_lp(lp: &LpProblem) -> Result<LpOutcome> {
    solve_lp_hinted(lp, &[])
}

/// As `solve_lp`, with a caller-provided starting basis: `hint[i]` names
/// a structural column to seat in row `i`.  The hint is used only when
/// it yields an invertible basis with a nonnegative basic solution;
/// otherwise the default slack/artificial start is used.  A good hint
/// removes most of phase 1 on highly degenerate instances.
pub fn solve_lp_hinted(lp: &LpProblem, hint: &[Option<usize>]) -> Result<LpOutcome> {
    let m = lp.constraints.len();
    let mut tab = Tableau::build(lp);
    if !hint.is_empty() {
        assert_eq!(hint.len(), m);
        let saved_basis = tab.basis.clone();
        for (i, h) in hint.iter().enumerate() {
            if let Some(col) = *h {
                assert!(col < lp.ncols);
                tab.basis[i] = col;
            }
        }
        let ok = tab.refactor().is_ok()
            && (0..m).all(|i| tab.rhs(i) >= -FEAS_TOL);
        if !ok {
            tab.basis = saved_basis;
            tab.refactor()?;
        }
    }
    let ncols = tab.ncols();

    // Phase 1: minimize the artificial mass.
    let mut phase1 = vec![0.0; ncols];
    for j in tab.nart_start..ncols {
        phase1[j] = 1.0;
    }
    // Price out the initial artificial basis.
    if tab.optimize(&phase1, true)?.is_some() {
        return Err(Error::NumericalBreakdown(
            "phase 1 reported unbounded".into(),
        ));
    }
    let scale = 1.0 + linalg::inf_norm(&tab.b);
    if tab.objective(&phase1) > FEAS_TOL * scale {
        let y = tab.multipliers(&phase1)?;
        // Map back through the row normalization signs.
        let y_orig: Vec<f64> = (0..m).map(|i| tab.row_sign[i] * y[i]).collect();
        return Ok(LpOutcome::Infeasible(FarkasCertificate { y: y_orig }));
    }

    // Drive any zero-level artificials out of the basis where possible.
    for row in 0..m {
        if !tab.is_artificial(tab.basis[row]) {
            continue;
        }
        let col = (0..tab.nart_start).find(|&j| tab.t[(row, j)].abs() > 1e-8);
        if let Some(col) = col {
            tab.pivot(row, col)?;
        }
        // Otherwise the row is redundant; the artificial stays basic at 0.
    }

    // Phase 2.
    let minimize = lp.sense == Sense::Minimize;
    let mut costs = vec![0.0; ncols];
    for j in 0..lp.ncols {
        costs[j] = if minimize {
            lp.objective[j]
        } else {
            -lp.objective[j]
        };
    }
    if let Some(ray) = tab.optimize(&costs, false)? {
        let struct_ray = ray[..lp.ncols].to_vec();
        return Ok(LpOutcome::Unbounded { ray: struct_ray });
    }

    let mut x = vec![0.0; lp.ncols];
    for i in 0..m {
        let j = tab.basis[i];
        if j < lp.ncols {
            x[j] = tab.rhs(i).max(0.0);
        }
    }
    let y = tab.multipliers(&costs)?;
    let sign = if minimize { 1.0 } else { -1.0 };
    let duals: Vec<f64> = (0..m).map(|i| sign * tab.row_sign[i] * y[i]).collect();
    let mut reduced = vec![0.0; lp.ncols];
    for j in 0..lp.ncols {
        let mut rc = costs[j];
        for (i, c) in lp.constraints.iter().enumerate() {
            rc -= tab.row_sign[i] * y[i] * c.coeffs[j];
        }
        reduced[j] = rc;
    }
    let objective = sign * tab.objective(&costs);
    Ok(LpOutcome::Optimal(LpSolution {
        x,
        objective,
        duals,
        reduced_costs: reduced,
        pivots: tab.pivots,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn min_x_at_least_3() {
        let mut lp = LpProblem::new(1, vec![1.0], Sense::Minimize);
        lp.constrain(vec![1.0], Op::Ge, 3.0);
        match solve_lp(&lp).unwrap() {
            LpOutcome::Optimal(sol) => {
                assert!((sol.objective - 3.0).abs() < 1e-9);
                assert!((sol.x[0] - 3.0).abs() < 1e-9);
            }
            other => panic!("expected optimal, got {other:?}"),
        }
    }

    #[test]
    fn infeasible_box_yields_verified_farkas() {
        let mut lp = LpProblem::new(1, vec![0.0], Sense::Minimize);
        lp.constrain(vec![1.0], Op::Le, -1.0);
        lp.constrain(vec![1.0], Op::Ge, 0.0);
        match solve_lp(&lp).unwrap() {
            LpOutcome::Infeasible(cert) => assert!(cert.verify(&lp, 1e-9)),
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn unbounded_ray() {
        let mut lp = LpProblem::new(1, vec![-1.0], Sense::Minimize);
        lp.constrain(vec![1.0], Op::Ge, 0.0);
        match solve_lp(&lp).unwrap() {
            LpOutcome::Unbounded { ray } => assert!(ray[0] > 0.0),
            other => panic!("expected unbounded, got {other:?}"),
        }
    }

    #[test]
    fn maximize_with_duals() {
        // max 3x + 2y s.t. x + y <= 4, x + 3y <= 6; optimum at (4, 0).
        let mut lp = LpProblem::new(2, vec![3.0, 2.0], Sense::Maximize);
        lp.constrain(vec![1.0, 1.0], Op::Le, 4.0);
        lp.constrain(vec![1.0, 3.0], Op::Le, 6.0);
        match solve_lp(&lp).unwrap() {
            LpOutcome::Optimal(sol) => {
                assert!((sol.objective - 12.0).abs() < 1e-9);
                // Strong duality: y^T b equals the optimum.
                let yb = sol.duals[0] * 4.0 + sol.duals[1] * 6.0;
                assert!((yb - 12.0).abs() < 1e-8);
            }
            other => panic!("expected optimal, got {other:?}"),
        }
    }

    fn beale() -> LpProblem {
        // Beale's cycling example.
        let mut lp = LpProblem::new(
            4,
            vec![-0.75, 150.0, -0.02, 6.0],
            Sense::Minimize,
        );
        lp.constrain(vec![0.25, -60.0, -1.0 / 25.0, 9.0], Op::Le, 0.0);
        lp.constrain(vec![0.5, -90.0, -1.0 / 50.0, 3.0], Op::Le, 0.0);
        lp.constrain(vec![0.0, 0.0, 1.0, 0.0], Op::Le, 1.0);
        lp
    }

    /// Brute-force vertex enumeration oracle over the standard form
    /// (4 structural + 3 slack columns, 3 rows).
    fn beale_vertex_optimum() -> f64 {
        let a: [[f64; 7]; 3] = [
            [0.25, -60.0, -0.04, 9.0, 1.0, 0.0, 0.0],
            [0.5, -90.0, -0.02, 3.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
        ];
        let b = [0.0, 0.0, 1.0];
        let c = [-0.75, 150.0, -0.02, 6.0, 0.0, 0.0, 0.0];
        let mut best = f64::INFINITY;
        for i in 0..7 {
            for j in (i + 1)..7 {
                for k in (j + 1)..7 {
                    let cols = [i, j, k];
                    let mat = Matrix::from_rows(&[
                        cols.iter().map(|&c| a[0][c]).collect(),
                        cols.iter().map(|&c| a[1][c]).collect(),
                        cols.iter().map(|&c| a[2][c]).collect(),
                    ]);
                    if let Ok(x) = linalg::solve(&mat, &b) {
                        if x.iter().all(|&v| v >= -1e-9) {
                            let obj: f64 =
                                cols.iter().zip(&x).map(|(&c_i, &v)| c[c_i] * v).sum();
                            best = best.min(obj);
                        }
                    }
                }
            }
        }
        best
    }

    #[test]
    fn beale_terminates_at_vertex_optimum() {
        let lp = beale();
        let oracle = beale_vertex_optimum();
        assert!((oracle - (-0.05)).abs() < 1e-12);
        match solve_lp(&lp).unwrap() {
            LpOutcome::Optimal(sol) => {
                assert!((sol.objective - oracle).abs() < 1e-9);
            }
            other => panic!("expected optimal, got {other:?}"),
        }
    }

    #[test]
    fn equality_with_redundant_row() {
        // x + y = 1 stated twice plus min x.
        let mut lp = LpProblem::new(2, vec![1.0, 0.0], Sense::Minimize);
        lp.constrain(vec![1.0, 1.0], Op::Eq, 1.0);
        lp.constrain(vec![1.0, 1.0], Op::Eq, 1.0);
        match solve_lp(&lp).unwrap() {
            LpOutcome::Optimal(sol) => {
                assert!(sol.objective.abs() < 1e-9);
                assert!((sol.x[1] - 1.0).abs() < 1e-9);
            }
            other => panic!("expected optimal, got {other:?}"),
        }
    }

    #[test]
    fn negative_rhs_rows() {
        // min x + y s.t. -x - y <= -2  (i.e. x + y >= 2).
        let mut lp = LpProblem::new(2, vec![1.0, 1.0], Sense::Minimize);
        lp.constrain(vec![-1.0, -1.0], Op::Le, -2.0);
        match solve_lp(&lp).unwrap() {
            LpOutcome::Optimal(sol) => assert!((sol.objective - 2.0).abs() < 1e-9),
            other => panic!("expected optimal, got {other:?}"),
        }
    }
}
