//! Bounds that use no shadow variable: the closed form, its LP twin, and stratified aggregation.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{contract, Error, Result};
use crate::lp::{self, LpProblem, LpStatus, Sense};
use crate::tables::{PopulationTables, StratumTable};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Base,
    Stratified,
    Shadow,
    SetExpansion,
    Ate,
    AteShadow,
    AteSetExpansion,
}

/// A closed interval `[lo, hi]` together with how it was obtained.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub method: Method,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, Value>,
}

impl Interval {
    pub fn new(lo: f64, hi: f64, method: Method) -> Self {
        Self { lo, hi, method, meta: BTreeMap::new() }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, x: f64, tol: f64) -> bool {
        self.lo - tol <= x && x <= self.hi + tol
    }

    /// `self ⊆ other` up to `tol`.
    pub fn is_within(&self, other: &Interval, tol: f64) -> bool {
        other.lo - tol <= self.lo && self.hi <= other.hi + tol
    }

    pub fn with_meta(mut self, key: &str, value: Value) -> Self {
        self.meta.insert(key.to_string(), value);
        self
    }
}

/// Checks a user-supplied objective weight vector `g` against the outcome support.
pub(crate) fn check_weights(g: &[f64], m: usize) -> Result<()> {
    if g.len() != m {
        return contract(format!("weight vector has length {}, expected {m}", g.len()));
    }
    if g.iter().any(|v| !v.is_finite()) {
        return contract("weight vector must be finite");
    }
    Ok(())
}

pub(crate) fn min_max(g: &[f64]) -> (f64, f64) {
    g.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Sharp bounds on `E[g(Y)]` from the outcome marginal among respondents and `P(R=0)`.
///
/// The missing mass is placed entirely on the smallest or largest weight.
pub fn base_bounds_weighted(table: &StratumTable, g: &[f64]) -> Result<Interval> {
    check_weights(g, table.m())?;
    let (gmin, gmax) = min_max(g);
    let observed = dot(g, table.alpha_marginal());
    let p0 = table.p_r0();
    Ok(Interval::new(observed + gmin * p0, observed + gmax * p0, Method::Base))
}

/// Mean bounds `[Σ yα(y) + P(R=0), Σ yα(y) + M·P(R=0)]`.
pub fn base_bounds(table: &StratumTable) -> Interval {
    let g = crate::tables::identity_weights(table.m());
    base_bounds_weighted(table, &g).expect("identity weights match the support")
}

/// The same bounds as [`base_bounds_weighted`], computed by linear programming.
pub fn base_bounds_lp(table: &StratumTable, g: &[f64]) -> Result<Interval> {
    base_bounds_lp_from_marginal(table.alpha_marginal(), g)
}

/// LP bounds straight from a respondent marginal `α(y) = P(R=1, Y=y)`.
///
/// Variables are the imputed masses `u(y) = α(y)·w(y) ≥ 0`, constrained to sum to
/// `1 − Σα`. A marginal with `Σα > 1` makes the LP infeasible.
pub fn base_bounds_lp_from_marginal(alpha: &[f64], g: &[f64]) -> Result<Interval> {
    let m = alpha.len();
    check_weights(g, m)?;
    if alpha.iter().any(|a| !a.is_finite() || *a < 0.0) {
        return contract("marginal entries must be finite and nonnegative");
    }
    let rest = 1.0 - alpha.iter().sum::<f64>();
    let row = DMatrix::from_element(1, m, 1.0);
    let offset = dot(g, alpha);
    let mut ends = [0.0; 2];
    for (slot, sense) in [Sense::Minimize, Sense::Maximize].into_iter().enumerate() {
        let problem = LpProblem::new(
            sense,
            g.to_vec(),
            row.clone(),
            vec![rest],
            vec![rest],
            vec![0.0; m],
            vec![1.0; m],
        )?;
        let sol = lp::solve(&problem)?;
        match sol.status {
            LpStatus::Optimal => ends[slot] = offset + sol.value,
            LpStatus::Infeasible => {
                return Err(Error::DataInconsistency(format!(
                    "respondent mass {} exceeds 1",
                    1.0 - rest
                )))
            }
            LpStatus::Unbounded => return Err(Error::Numerical("bounded LP reported unbounded".into())),
        }
    }
    Ok(Interval::new(ends[0], ends[1], Method::Base).with_meta("solver", json!("lp")))
}

/// Per-stratum base bounds averaged with the stratum weights.
pub fn stratified_bounds(pop: &PopulationTables, g: &[f64]) -> Result<Interval> {
    let mut lo = 0.0;
    let mut hi = 0.0;
    let mut per = serde_json::Map::new();
    for s in pop.strata() {
        let b = base_bounds_weighted(&s.table, g)?;
        lo += s.weight * b.lo;
        hi += s.weight * b.hi;
        per.insert(s.id.clone(), json!([b.lo, b.hi]));
    }
    Ok(Interval::new(lo, hi, Method::Stratified).with_meta("per_stratum", Value::Object(per)))
}
