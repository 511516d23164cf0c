//! Bounds tightened by an always-observed prediction `F` that is independent of
//! response given the outcome.
//!
//! Per stratum the response odds `w(y) = 1/π(y) − 1` must solve `A w = β`, where
//! `A[f][y] = P(R=1, F=f, Y=y)` and `β[f] = P(R=0, F=f)`. The mean ranges over
//! `Σ_y g(y)·colsum_y(A)·(w(y)+1)` on that polyhedron.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::bounds::{check_weights, Interval, Method};
use crate::error::{contract, Error, Result};
use crate::lp::{self, LpProblem, LpSolution, LpStatus, Sense};
use crate::tables::{identity_weights, PopulationTables, StratumTable};

/// Width below which a stratum counts as point identified.
pub const POINT_ID_TOL: f64 = 1e-8;

#[derive(Clone, Debug, Default)]
pub struct ShadowOptions {
    /// Objective weights `g(y)`; `None` means the mean.
    pub weights: Option<Vec<f64>>,
    /// Accept empirical tables even though `A w = β` is then rarely solvable.
    pub force: bool,
}

impl ShadowOptions {
    pub(crate) fn weights_for(&self, m: usize) -> Result<Vec<f64>> {
        match &self.weights {
            Some(g) => {
                check_weights(g, m)?;
                Ok(g.clone())
            }
            None => Ok(identity_weights(m)),
        }
    }
}

/// Objective coefficients `g(y)·colsum_y(A)` and the constant `Σ` of the same.
pub(crate) fn objective_terms(alpha: &DMatrix<f64>, g: &[f64]) -> (Vec<f64>, f64) {
    let c: Vec<f64> = (0..alpha.ncols()).map(|y| g[y] * alpha.column(y).sum()).collect();
    let constant = c.iter().sum();
    (c, constant)
}

/// Min and max of the shadow objective over `{w ≥ 0 : A w = β}`.
pub(crate) fn shadow_lp(alpha: &DMatrix<f64>, beta: &[f64], g: &[f64]) -> Result<(LpSolution, LpSolution, f64)> {
    let m = alpha.ncols();
    let (c, constant) = objective_terms(alpha, g);
    let problem = LpProblem::new(
        Sense::Minimize,
        c,
        alpha.clone(),
        beta.to_vec(),
        beta.to_vec(),
        vec![0.0; m],
        vec![f64::INFINITY; m],
    )?;
    let (lo, hi) = lp::solve_min_max(&problem)?;
    Ok((lo, hi, constant))
}

fn endpoint(sol: &LpSolution, constant: f64) -> Result<f64> {
    match sol.status {
        LpStatus::Optimal => Ok(constant + sol.value),
        LpStatus::Unbounded => Ok(if sol.value > 0.0 { f64::INFINITY } else { f64::NEG_INFINITY }),
        LpStatus::Infeasible => Err(Error::DataInconsistency(
            "no response mechanism reproduces the missing-prediction distribution".into(),
        )),
    }
}

/// Sharp bounds for one stratum.
///
/// Empirical tables are refused unless `opts.force` is set; use
/// [`crate::expansion::estimate`] for sampled data.
pub fn shadow_bounds_stratum(table: &StratumTable, opts: &ShadowOptions) -> Result<Interval> {
    if !table.is_exact() && !opts.force {
        return contract("shadow bounds need a population table; use set expansion for sampled data");
    }
    let g = opts.weights_for(table.m())?;
    let (lo, hi, constant) = shadow_lp(table.alpha(), table.beta(), &g)?;
    let interval = Interval::new(endpoint(&lo, constant)?, endpoint(&hi, constant)?, Method::Shadow)
        .with_meta("status", json!([lo.status, hi.status]));
    Ok(interval)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StratumShadow {
    pub id: String,
    pub interval: Interval,
    pub status: [LpStatus; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapBounds {
    /// Lower bound on `θ_max − θ_max^shad`.
    pub upper: f64,
    /// Lower bound on `θ_min^shad − θ_min`.
    pub lower: f64,
    /// Strata whose top or bottom outcome column is empty; their term is taken as 0.
    pub flagged: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShadowBoundsReport {
    pub per_stratum: Vec<StratumShadow>,
    pub aggregate: Interval,
    pub gap_lb_upper: f64,
    pub gap_lb_lower: f64,
    pub gap_flagged: Vec<String>,
    pub point_identified: bool,
}

/// Per-stratum shadow bounds averaged with the stratum weights, plus the gap guarantees.
pub fn aggregate_shadow_bounds(pop: &PopulationTables, opts: &ShadowOptions) -> Result<ShadowBoundsReport> {
    let mut per_stratum = Vec::with_capacity(pop.strata().len());
    let (mut lo, mut hi) = (0.0, 0.0);
    for s in pop.strata() {
        let interval = shadow_bounds_stratum(&s.table, opts)?;
        lo += s.weight * interval.lo;
        hi += s.weight * interval.hi;
        let status = serde_json::from_value(interval.meta["status"].clone())?;
        per_stratum.push(StratumShadow { id: s.id.clone(), interval, status });
    }
    let point_identified = per_stratum.iter().all(|s| s.interval.width() <= POINT_ID_TOL);
    let gaps = aggregation_gap_lower_bounds(pop);
    Ok(ShadowBoundsReport {
        per_stratum,
        aggregate: Interval::new(lo, hi, Method::Shadow),
        gap_lb_upper: gaps.upper,
        gap_lb_lower: gaps.lower,
        gap_flagged: gaps.flagged,
        point_identified,
    })
}

/// `(1ᵀβ/2)·‖β/1ᵀβ − a/1ᵀa‖₁` for one stratum and one column `a`; `None` when `a` is empty.
fn misalignment(beta: &[f64], column: &[f64]) -> Option<f64> {
    let b: f64 = beta.iter().sum();
    if b <= 0.0 {
        return Some(0.0);
    }
    let s: f64 = column.iter().sum();
    if s <= 0.0 {
        return None;
    }
    let l1: f64 = beta.iter().zip(column).map(|(bf, af)| (bf / b - af / s).abs()).sum();
    Some(0.5 * b * l1)
}

/// Guaranteed improvement of the shadow bounds over the base bounds for the mean.
pub fn aggregation_gap_lower_bounds(pop: &PopulationTables) -> GapBounds {
    let m = pop.m();
    let mut out = GapBounds { upper: 0.0, lower: 0.0, flagged: Vec::new() };
    for s in pop.strata() {
        let beta = s.table.beta();
        let top = misalignment(beta, &s.table.column(m - 1));
        let bottom = misalignment(beta, &s.table.column(0));
        if top.is_none() || bottom.is_none() {
            out.flagged.push(s.id.clone());
        }
        out.upper += s.weight * top.unwrap_or(0.0);
        out.lower += s.weight * bottom.unwrap_or(0.0);
    }
    out
}
