//! Dense linear programming kernel.
//!
//! Problems are stated in band form:
//!
//! ```text
//! optimize   c·w
//! subject to l ≤ A·w ≤ u
//!            lo ≤ w ≤ hi
//! ```
//!
//! Equality rows use `l = u`; one-sided rows use an infinite band edge. The
//! solver is a two-phase bounded-variable primal simplex. Each row gets a
//! bounded logical variable `s = A·w`, so two-sided bands never need slack
//! doubling. Pricing is Dantzig's rule until the phase has seen `d·m`
//! degenerate pivots, after which Bland's rule takes over for the rest of
//! the phase.
//!
//! The basis is refactored from scratch every iteration. The problems this
//! crate solves have at most a few dozen columns, so this costs nothing and
//! keeps iterates free of accumulated update error.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};

/// Absolute per-constraint primal feasibility tolerance.
pub const FEAS_TOL: f64 = 1e-9;
/// Smallest pivot magnitude accepted in the ratio test.
pub const PIVOT_TOL: f64 = 1e-10;
/// Iteration cap across both phases.
pub const DEFAULT_MAX_ITERATIONS: usize = 10_000;

const DUAL_TOL: f64 = 1e-11;
const DEGENERATE_STEP: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpProblem {
    pub objective: Vec<f64>,
    pub matrix: DMatrix<f64>,
    pub row_lower: Vec<f64>,
    pub row_upper: Vec<f64>,
    pub col_lower: Vec<f64>,
    pub col_upper: Vec<f64>,
    pub sense: Sense,
}

impl LpProblem {
    /// Builds a problem and checks its invariants.
    pub fn new(
        sense: Sense,
        objective: Vec<f64>,
        matrix: DMatrix<f64>,
        row_lower: Vec<f64>,
        row_upper: Vec<f64>,
        col_lower: Vec<f64>,
        col_upper: Vec<f64>,
    ) -> Result<Self> {
        let p = Self {
            objective,
            matrix,
            row_lower,
            row_upper,
            col_lower,
            col_upper,
            sense,
        };
        p.validate()?;
        Ok(p)
    }

    /// A problem with box constraints only.
    pub fn box_only(sense: Sense, objective: Vec<f64>, lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        let d = objective.len();
        Self::new(sense, objective, DMatrix::zeros(0, d), vec![], vec![], lo, hi)
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.objective.len();
        let m = self.matrix.nrows();
        if d == 0 {
            return contract("LP needs at least one variable");
        }
        if self.matrix.ncols() != d {
            return contract(format!(
                "constraint matrix has {} columns, objective has {d}",
                self.matrix.ncols()
            ));
        }
        if self.row_lower.len() != m || self.row_upper.len() != m {
            return contract(format!("band vectors must have length {m}"));
        }
        if self.col_lower.len() != d || self.col_upper.len() != d {
            return contract(format!("box vectors must have length {d}"));
        }
        if self.objective.iter().any(|c| !c.is_finite()) || self.matrix.iter().any(|a| !a.is_finite()) {
            return contract("objective and constraint matrix must be finite");
        }
        for i in 0..m {
            let (l, u) = (self.row_lower[i], self.row_upper[i]);
            if l.is_nan() || u.is_nan() || l > u || l == f64::INFINITY || u == f64::NEG_INFINITY {
                return contract(format!("row {i}: invalid band [{l}, {u}]"));
            }
        }
        for j in 0..d {
            let (l, u) = (self.col_lower[j], self.col_upper[j]);
            if l.is_nan() || u.is_nan() || l > u || l == f64::INFINITY || u == f64::NEG_INFINITY {
                return contract(format!("column {j}: invalid box [{l}, {u}]"));
            }
            if !l.is_finite() && !u.is_finite() {
                return contract(format!("column {j}: free variables are not supported"));
            }
        }
        Ok(())
    }

    /// Largest violation of any row band or box bound at `w`.
    pub fn max_violation(&self, w: &[f64]) -> f64 {
        let mut worst = 0.0_f64;
        for (j, &x) in w.iter().enumerate() {
            worst = worst.max(self.col_lower[j] - x).max(x - self.col_upper[j]);
        }
        for i in 0..self.num_rows() {
            let ax: f64 = (0..w.len()).map(|j| self.matrix[(i, j)] * w[j]).sum();
            worst = worst.max(self.row_lower[i] - ax).max(ax - self.row_upper[i]);
        }
        worst
    }

    pub fn objective_value(&self, w: &[f64]) -> f64 {
        self.objective.iter().zip(w).map(|(c, x)| c * x).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Optimal objective value; `±∞` for unbounded problems, NaN when infeasible.
    pub value: f64,
    pub point: Vec<f64>,
    pub iterations: usize,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

/// Solves `problem` with the default iteration cap.
pub fn solve(problem: &LpProblem) -> Result<LpSolution> {
    solve_with_limit(problem, DEFAULT_MAX_ITERATIONS)
}

pub fn solve_with_limit(problem: &LpProblem, max_iterations: usize) -> Result<LpSolution> {
    problem.validate()?;
    let mut simplex = Simplex::new(problem, max_iterations);

    let phase1_cost = simplex.artificial_cost();
    match simplex.run(&phase1_cost, false)? {
        PhaseEnd::Optimal => {}
        // Phase 1 minimizes a sum of nonnegative variables; it cannot be unbounded.
        PhaseEnd::Unbounded => return Err(Error::Numerical("phase 1 reported unbounded".into())),
    }
    let infeasibility: f64 = simplex.artificial_sum();
    if infeasibility > FEAS_TOL {
        return Ok(LpSolution {
            status: LpStatus::Infeasible,
            value: f64::NAN,
            point: simplex.structural_point(),
            iterations: simplex.iterations,
        });
    }
    simplex.retire_artificials();

    let sign = match problem.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    let mut cost = vec![0.0; simplex.n];
    for (j, c) in problem.objective.iter().enumerate() {
        cost[j] = sign * c;
    }
    let end = simplex.run(&cost, true)?;
    let point = simplex.structural_point();
    if end == PhaseEnd::Unbounded {
        let value = if problem.sense == Sense::Maximize {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        };
        return Ok(LpSolution {
            status: LpStatus::Unbounded,
            value,
            point,
            iterations: simplex.iterations,
        });
    }
    let violation = problem.max_violation(&point);
    if violation > FEAS_TOL {
        return Err(Error::Numerical(format!(
            "optimal point violates constraints by {violation:e}"
        )));
    }
    Ok(LpSolution {
        status: LpStatus::Optimal,
        value: problem.objective_value(&point),
        point,
        iterations: simplex.iterations,
    })
}

/// Solves `problem` once as a minimization and once as a maximization.
pub fn solve_min_max(problem: &LpProblem) -> Result<(LpSolution, LpSolution)> {
    let mut p = problem.clone();
    p.sense = Sense::Minimize;
    let lo = solve(&p)?;
    p.sense = Sense::Maximize;
    let hi = solve(&p)?;
    Ok((lo, hi))
}

/// Minimum over `0 ≤ w ≤ box_hi` of `‖A·w − b‖_∞`, with a minimizer.
///
/// Solved as an LP in `(w, t)`: minimize `t` subject to `−t ≤ (A·w − b)_i ≤ t`.
pub fn min_inf_norm_residual(a: &DMatrix<f64>, b: &[f64], box_hi: f64) -> Result<(f64, Vec<f64>)> {
    let (m, d) = a.shape();
    if b.len() != m {
        return contract(format!("residual target has length {}, matrix has {m} rows", b.len()));
    }
    if !(box_hi > 0.0) {
        return contract(format!("box bound must be positive, got {box_hi}"));
    }
    if m == 0 {
        return Ok((0.0, vec![0.0; d]));
    }
    let mut matrix = DMatrix::zeros(2 * m, d + 1);
    let mut lower = Vec::with_capacity(2 * m);
    let mut upper = Vec::with_capacity(2 * m);
    for i in 0..m {
        for j in 0..d {
            matrix[(2 * i, j)] = a[(i, j)];
            matrix[(2 * i + 1, j)] = a[(i, j)];
        }
        // A_i·w − t ≤ b_i
        matrix[(2 * i, d)] = -1.0;
        lower.push(f64::NEG_INFINITY);
        upper.push(b[i]);
        // A_i·w + t ≥ b_i
        matrix[(2 * i + 1, d)] = 1.0;
        lower.push(b[i]);
        upper.push(f64::INFINITY);
    }
    let mut objective = vec![0.0; d + 1];
    objective[d] = 1.0;
    let mut col_lower = vec![0.0; d + 1];
    let mut col_upper = vec![box_hi; d + 1];
    col_lower[d] = 0.0;
    col_upper[d] = f64::INFINITY;
    let problem = LpProblem::new(Sense::Minimize, objective, matrix, lower, upper, col_lower, col_upper)?;
    let sol = solve(&problem)?;
    if !sol.is_optimal() {
        return Err(Error::Numerical(format!("residual LP ended {:?}", sol.status)));
    }
    let mut point = sol.point;
    point.truncate(d);
    Ok((sol.value.max(0.0), point))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum VarState {
    Basic,
    AtLower,
    AtUpper,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum PhaseEnd {
    Optimal,
    Unbounded,
}

enum Pricing {
    Dantzig,
    Bland,
}

/// Working state over the extended column set `[A | −I | artificials]`.
struct Simplex {
    m: usize,
    d: usize,
    n: usize,
    columns: DMatrix<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    x: Vec<f64>,
    state: Vec<VarState>,
    basis: Vec<usize>,
    artificial: Vec<bool>,
    iterations: usize,
    max_iterations: usize,
}

impl Simplex {
    fn new(p: &LpProblem, max_iterations: usize) -> Self {
        let m = p.num_rows();
        let d = p.num_vars();
        let n = d + 2 * m;
        let mut columns = DMatrix::zeros(m, n);
        columns.view_mut((0, 0), (m, d)).copy_from(&p.matrix);
        let mut lower = Vec::with_capacity(n);
        let mut upper = Vec::with_capacity(n);
        let mut x = Vec::with_capacity(n);
        let mut state = Vec::with_capacity(n);

        for j in 0..d {
            lower.push(p.col_lower[j]);
            upper.push(p.col_upper[j]);
            if p.col_lower[j].is_finite() {
                x.push(p.col_lower[j]);
                state.push(VarState::AtLower);
            } else {
                x.push(p.col_upper[j]);
                state.push(VarState::AtUpper);
            }
        }

        let activity: Vec<f64> = (0..m)
            .map(|i| (0..d).map(|j| p.matrix[(i, j)] * x[j]).sum())
            .collect();

        let mut basis = vec![0; m];
        let mut art_value = vec![0.0; m];
        let mut art_sign = vec![1.0; m];
        // Logical row variables s_i = A_i·w, column −e_i.
        for i in 0..m {
            columns[(i, d + i)] = -1.0;
            lower.push(p.row_lower[i]);
            upper.push(p.row_upper[i]);
            let act = activity[i];
            if act < p.row_lower[i] {
                x.push(p.row_lower[i]);
                state.push(VarState::AtLower);
                art_sign[i] = 1.0;
                art_value[i] = p.row_lower[i] - act;
            } else if act > p.row_upper[i] {
                x.push(p.row_upper[i]);
                state.push(VarState::AtUpper);
                art_sign[i] = -1.0;
                art_value[i] = act - p.row_upper[i];
            } else {
                x.push(act);
                state.push(VarState::Basic);
                basis[i] = d + i;
            }
        }
        // Artificials: row i reads A_i·w − s_i + σ_i·a_i = 0.
        let mut artificial = vec![false; n];
        for i in 0..m {
            let j = d + m + i;
            artificial[j] = true;
            columns[(i, j)] = art_sign[i];
            lower.push(0.0);
            if state[d + i] == VarState::Basic {
                upper.push(0.0);
                x.push(0.0);
                state.push(VarState::AtLower);
            } else {
                upper.push(f64::INFINITY);
                x.push(art_value[i]);
                state.push(VarState::Basic);
                basis[i] = j;
            }
        }

        Self {
            m,
            d,
            n,
            columns,
            lower,
            upper,
            x,
            state,
            basis,
            artificial,
            iterations: 0,
            max_iterations,
        }
    }

    fn artificial_cost(&self) -> Vec<f64> {
        (0..self.n)
            .map(|j| if self.artificial[j] && self.upper[j] > 0.0 { 1.0 } else { 0.0 })
            .collect()
    }

    fn artificial_sum(&self) -> f64 {
        (0..self.n).filter(|&j| self.artificial[j]).map(|j| self.x[j].max(0.0)).sum()
    }

    fn structural_point(&self) -> Vec<f64> {
        self.x[..self.d].to_vec()
    }

    fn basis_matrix(&self) -> DMatrix<f64> {
        let mut b = DMatrix::zeros(self.m, self.m);
        for (r, &j) in self.basis.iter().enumerate() {
            b.set_column(r, &self.columns.column(j));
        }
        b
    }

    /// Recomputes basic values from the nonbasic ones.
    fn refresh_basic_values(&mut self, lu: &nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>) -> Result<()> {
        let mut rhs = DVector::zeros(self.m);
        for j in 0..self.n {
            if self.state[j] != VarState::Basic && self.x[j] != 0.0 {
                rhs.axpy(-self.x[j], &self.columns.column(j), 1.0);
            }
        }
        let xb = lu
            .solve(&rhs)
            .ok_or_else(|| Error::Numerical("singular basis".into()))?;
        for (r, &j) in self.basis.iter().enumerate() {
            self.x[j] = xb[r];
        }
        Ok(())
    }

    fn run(&mut self, cost: &[f64], track_best: bool) -> Result<PhaseEnd> {
        let mut pricing = Pricing::Dantzig;
        let mut degenerate = 0usize;
        let degenerate_limit = (self.d * self.m).max(1);

        loop {
            if self.m == 0 {
                return Ok(self.run_box_only(cost));
            }
            let b = self.basis_matrix();
            let lu = b.clone().lu();
            self.refresh_basic_values(&lu)?;

            let cb = DVector::from_iterator(self.m, self.basis.iter().map(|&j| cost[j]));
            let duals = b
                .transpose()
                .lu()
                .solve(&cb)
                .ok_or_else(|| Error::Numerical("singular basis".into()))?;

            // Pricing.
            let mut entering: Option<(usize, f64)> = None;
            for j in 0..self.n {
                if self.state[j] == VarState::Basic || self.upper[j] <= self.lower[j] {
                    continue;
                }
                let reduced = cost[j] - duals.dot(&self.columns.column(j));
                let improving = match self.state[j] {
                    VarState::AtLower => reduced < -DUAL_TOL,
                    VarState::AtUpper => reduced > DUAL_TOL,
                    VarState::Basic => false,
                };
                if !improving {
                    continue;
                }
                match pricing {
                    Pricing::Bland => {
                        entering = Some((j, reduced));
                        break;
                    }
                    Pricing::Dantzig => {
                        if entering.is_none_or(|(_, best)| reduced.abs() > best.abs()) {
                            entering = Some((j, reduced));
                        }
                    }
                }
            }
            let Some((enter, _)) = entering else {
                return Ok(PhaseEnd::Optimal);
            };

            self.iterations += 1;
            if self.iterations > self.max_iterations {
                let best_point = if track_best { Some(self.structural_point()) } else { None };
                return Err(Error::SolverStalled {
                    iterations: self.iterations - 1,
                    best_point,
                });
            }

            let direction = if self.state[enter] == VarState::AtLower { 1.0 } else { -1.0 };
            let alpha = lu
                .solve(&self.columns.column(enter).into_owned())
                .ok_or_else(|| Error::Numerical("singular basis".into()))?;

            // Ratio test. Basic r moves at rate −direction·alpha_r per unit step.
            let mut step = f64::INFINITY;
            let mut leaving: Option<(usize, VarState, f64)> = None;
            for r in 0..self.m {
                let rate = direction * alpha[r];
                let j = self.basis[r];
                let limit = if rate > PIVOT_TOL && self.lower[j].is_finite() {
                    ((self.x[j] - self.lower[j]) / rate).max(0.0)
                } else if rate < -PIVOT_TOL && self.upper[j].is_finite() {
                    ((self.upper[j] - self.x[j]) / -rate).max(0.0)
                } else {
                    continue;
                };
                let bound = if rate > 0.0 { VarState::AtLower } else { VarState::AtUpper };
                let better = match leaving {
                    None => true,
                    Some((lr, _, lrate)) => {
                        if limit < step - 1e-12 {
                            true
                        } else if limit <= step + 1e-12 {
                            match pricing {
                                Pricing::Bland => j < self.basis[lr],
                                Pricing::Dantzig => rate.abs() > lrate.abs(),
                            }
                        } else {
                            false
                        }
                    }
                };
                if better {
                    step = if leaving.is_none() { limit } else { step.min(limit) };
                    leaving = Some((r, bound, rate));
                }
            }
            let flip = self.upper[enter] - self.lower[enter];

            if step.is_infinite() && flip.is_infinite() {
                return Ok(PhaseEnd::Unbounded);
            }

            let taken = step.min(flip);
            if taken <= DEGENERATE_STEP {
                degenerate += 1;
                if degenerate >= degenerate_limit {
                    pricing = Pricing::Bland;
                }
            }

            if flip <= step {
                self.x[enter] = if direction > 0.0 { self.upper[enter] } else { self.lower[enter] };
                self.state[enter] = if direction > 0.0 { VarState::AtUpper } else { VarState::AtLower };
                continue;
            }

            let (r, bound, _) = leaving.expect("finite step implies a leaving row");
            let out = self.basis[r];
            self.x[enter] += direction * step;
            self.state[enter] = VarState::Basic;
            self.state[out] = bound;
            self.x[out] = if bound == VarState::AtLower { self.lower[out] } else { self.upper[out] };
            self.basis[r] = enter;
        }
    }

    /// With no rows every variable sits at its cheaper bound.
    fn run_box_only(&mut self, cost: &[f64]) -> PhaseEnd {
        for j in 0..self.n {
            if cost[j] < 0.0 {
                if self.upper[j].is_infinite() {
                    return PhaseEnd::Unbounded;
                }
                self.x[j] = self.upper[j];
                self.state[j] = VarState::AtUpper;
            } else if cost[j] > 0.0 {
                if self.lower[j].is_infinite() {
                    return PhaseEnd::Unbounded;
                }
                self.x[j] = self.lower[j];
                self.state[j] = VarState::AtLower;
            }
        }
        PhaseEnd::Optimal
    }

    /// Pivots zero-valued artificials out of the basis where possible, then
    /// pins every artificial to zero for phase 2.
    fn retire_artificials(&mut self) {
        for r in 0..self.m {
            let j = self.basis[r];
            if !self.artificial[j] {
                continue;
            }
            let bt = self.basis_matrix().transpose();
            let mut e = DVector::zeros(self.m);
            e[r] = 1.0;
            let Some(row) = bt.lu().solve(&e) else { continue };
            let mut best: Option<(usize, f64)> = None;
            for k in 0..self.n {
                if self.artificial[k] || self.state[k] == VarState::Basic {
                    continue;
                }
                let a = row.dot(&self.columns.column(k));
                if a.abs() > PIVOT_TOL && best.is_none_or(|(_, b)| a.abs() > b.abs()) {
                    best = Some((k, a));
                }
            }
            if let Some((k, _)) = best {
                self.state[k] = VarState::Basic;
                self.state[j] = VarState::AtLower;
                self.x[j] = 0.0;
                self.basis[r] = k;
            }
        }
        for j in 0..self.n {
            if self.artificial[j] {
                self.upper[j] = 0.0;
                if self.state[j] != VarState::Basic {
                    self.x[j] = 0.0;
                    self.state[j] = VarState::AtLower;
                }
            }
        }
    }
}
