//! Average treatment effect bounds for a randomized experiment whose outcomes are
//! missing not at random in each arm.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::bounds::{base_bounds_weighted, min_max, Interval, Method};
use crate::error::{contract, Error, Result};
use crate::expansion::{binds, optimal, tube, ExpansionConfig};
use crate::lp::{self, LpProblem, LpSolution, LpStatus, Sense};
use crate::shadow::{objective_terms, ShadowOptions};
use crate::tables::{identity_weights, StratumTable, UnitRecord};

/// Tolerance of the sign tests.
pub const SIGN_TOL: f64 = 1e-12;

/// One table per arm. Arm `1` is treatment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmTables {
    pub arm0: StratumTable,
    pub arm1: StratumTable,
}

impl ArmTables {
    pub fn new(arm0: StratumTable, arm1: StratumTable) -> Result<Self> {
        if arm0.m() != arm1.m() || arm0.m_f() != arm1.m_f() {
            return contract("arms must share the outcome and prediction supports");
        }
        for (d, t) in [(0, &arm0), (1, &arm1)] {
            if t.n() == Some(0) {
                return contract(format!("arm {d} has no records"));
            }
        }
        Ok(Self { arm0, arm1 })
    }

    /// Splits records by arm and tabulates each arm with covariates pooled.
    pub fn from_records(records: &[UnitRecord], m: usize, m_f: usize) -> Result<Self> {
        let mut arms: [Vec<UnitRecord>; 2] = [Vec::new(), Vec::new()];
        for (index, r) in records.iter().enumerate() {
            match r.d {
                Some(d @ (0 | 1)) => arms[d as usize].push(UnitRecord { stratum: None, ..r.clone() }),
                _ => return Err(Error::InvalidRecord { index, reason: "treatment arm must be 0 or 1".into() }),
            }
        }
        let table = |recs: &[UnitRecord], d: u8| -> Result<StratumTable> {
            if recs.is_empty() {
                return contract(format!("arm {d} has no records"));
            }
            Ok(crate::tables::estimate_tables(recs, m, m_f)?.pooled())
        };
        let arm0 = table(&arms[0], 0)?;
        let arm1 = table(&arms[1], 1)?;
        Self::new(arm0, arm1)
    }

    pub fn m(&self) -> usize {
        self.arm0.m()
    }

    pub fn n0(&self) -> Option<u64> {
        self.arm0.n()
    }

    pub fn n1(&self) -> Option<u64> {
        self.arm1.n()
    }

    fn both_exact(&self) -> bool {
        self.arm0.is_exact() && self.arm1.is_exact()
    }
}

/// `[lo₁ − hi₀, hi₁ − lo₀]` from the per-arm base bounds.
pub fn ate_bounds(arms: &ArmTables) -> Interval {
    let g = identity_weights(arms.m());
    let b1 = base_bounds_weighted(&arms.arm1, &g).expect("identity weights");
    let b0 = base_bounds_weighted(&arms.arm0, &g).expect("identity weights");
    Interval::new(b1.lo - b0.hi, b1.hi - b0.lo, Method::Ate)
}

/// The joint LP over both arms' imputed masses; equals [`ate_bounds`] by separability.
pub fn ate_bounds_lp(arms: &ArmTables) -> Result<Interval> {
    let m = arms.m();
    let g = identity_weights(m);
    let mut matrix = DMatrix::zeros(2, 2 * m);
    let mut objective = vec![0.0; 2 * m];
    for y in 0..m {
        matrix[(0, y)] = 1.0;
        matrix[(1, m + y)] = 1.0;
        objective[y] = g[y];
        objective[m + y] = -g[y];
    }
    let rest = [arms.arm1.p_r0(), arms.arm0.p_r0()];
    let problem = LpProblem::new(
        Sense::Minimize,
        objective,
        matrix,
        rest.to_vec(),
        rest.to_vec(),
        vec![0.0; 2 * m],
        vec![1.0; 2 * m],
    )?;
    let offset: f64 = (0..m)
        .map(|y| g[y] * (arms.arm1.alpha_marginal()[y] - arms.arm0.alpha_marginal()[y]))
        .sum();
    let (lo, hi) = lp::solve_min_max(&problem)?;
    Ok(Interval::new(offset + finite(&lo)?, offset + finite(&hi)?, Method::Ate).with_meta("solver", json!("lp")))
}

fn finite(sol: &LpSolution) -> Result<f64> {
    match sol.status {
        LpStatus::Optimal => Ok(sol.value),
        LpStatus::Infeasible => Err(Error::DataInconsistency("arm constraints admit no response mechanism".into())),
        LpStatus::Unbounded => Err(Error::Numerical("effect LP reported unbounded".into())),
    }
}

/// Stacks two per-arm constraint systems block-diagonally; objective is arm 1 minus arm 0.
fn joint_problem(p1: &LpProblem, p0: &LpProblem) -> Result<LpProblem> {
    let (r1, m) = p1.matrix.shape();
    let r0 = p0.matrix.nrows();
    let mut matrix = DMatrix::zeros(r1 + r0, 2 * m);
    matrix.view_mut((0, 0), (r1, m)).copy_from(&p1.matrix);
    matrix.view_mut((r1, m), (r0, m)).copy_from(&p0.matrix);
    let cat = |a: &[f64], b: &[f64]| a.iter().chain(b).copied().collect::<Vec<_>>();
    let objective: Vec<f64> = p1.objective.iter().copied().chain(p0.objective.iter().map(|c| -c)).collect();
    LpProblem::new(
        Sense::Minimize,
        objective,
        matrix,
        cat(&p1.row_lower, &p0.row_lower),
        cat(&p1.row_upper, &p0.row_upper),
        cat(&p1.col_lower, &p0.col_lower),
        cat(&p1.col_upper, &p0.col_upper),
    )
}

fn shadow_arm(table: &StratumTable, g: &[f64]) -> Result<(LpProblem, f64)> {
    let m = table.m();
    let (c, constant) = objective_terms(table.alpha(), g);
    let p = LpProblem::new(
        Sense::Minimize,
        c,
        table.alpha().clone(),
        table.beta().to_vec(),
        table.beta().to_vec(),
        vec![0.0; m],
        vec![f64::INFINITY; m],
    )?;
    Ok((p, constant))
}

/// Effect bounds when each arm carries a shadow variable.
///
/// Empirical tables are refused unless `opts.force` is set; use [`ate_set_expansion`].
pub fn ate_shadow_bounds(arms: &ArmTables, opts: &ShadowOptions) -> Result<Interval> {
    if !arms.both_exact() && !opts.force {
        return contract("shadow effect bounds need population tables; use set expansion for sampled data");
    }
    let g = opts.weights_for(arms.m())?;
    let (p1, c1) = shadow_arm(&arms.arm1, &g)?;
    let (p0, c0) = shadow_arm(&arms.arm0, &g)?;
    let joint = joint_problem(&p1, &p0)?;
    let (lo, hi) = lp::solve_min_max(&joint)?;
    let offset = c1 - c0;
    Ok(Interval::new(offset + finite(&lo)?, offset + finite(&hi)?, Method::AteShadow)
        .with_meta("status", json!([lo.status, hi.status])))
}

/// Set-expansion effect estimate: each arm gets its own tube, the effect is optimized jointly.
pub fn ate_set_expansion(arms: &ArmTables, cfg: &ExpansionConfig) -> Result<Interval> {
    cfg.validate()?;
    let g = cfg.weights_for(arms.m())?;
    let t1 = tube(&arms.arm1, cfg, &g)?;
    let t0 = tube(&arms.arm0, cfg, &g)?;
    let joint = joint_problem(&t1.problem, &t0.problem)?;
    let (lo, hi) = lp::solve_min_max(&joint)?;
    let offset = t1.constant - t0.constant;
    let raw = [offset + optimal(&lo)?, offset + optimal(&hi)?];
    let (gmin, gmax) = min_max(&g);
    let span = gmax - gmin;
    Ok(Interval::new(raw[0].clamp(-span, span), raw[1].clamp(-span, span), Method::AteSetExpansion)
        .with_meta("raw", json!(raw))
        .with_meta("slack", json!([t0.slack, t1.slack]))
        .with_meta("margin", json!([t0.margin, t1.margin]))
        .with_meta("binds_at_c", json!(binds(&lo, cfg.c) || binds(&hi, cfg.c))))
}

/// Effect bounds under the extra restriction that both arms share one response mechanism.
pub fn ate_bounds_shared_response(arms: &ArmTables) -> Result<Interval> {
    let m = arms.m();
    let (a1, a0) = (arms.arm1.alpha_marginal(), arms.arm0.alpha_marginal());
    let matrix = DMatrix::from_fn(2, m, |i, y| if i == 0 { a1[y] } else { a0[y] });
    let rest = [arms.arm1.p_r0(), arms.arm0.p_r0()];
    let objective: Vec<f64> = (0..m).map(|y| (y + 1) as f64 * (a1[y] - a0[y])).collect();
    let offset: f64 = objective.iter().sum();
    let problem = LpProblem::new(
        Sense::Minimize,
        objective,
        matrix,
        rest.to_vec(),
        rest.to_vec(),
        vec![0.0; m],
        vec![f64::INFINITY; m],
    )?;
    let (lo, hi) = lp::solve_min_max(&problem)?;
    Ok(Interval::new(offset + finite(&lo)?, offset + finite(&hi)?, Method::Ate).with_meta("shared_response", json!(true)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignTestResult {
    pub applicable: bool,
    pub holds: bool,
    pub margin: f64,
    pub crossing_point: Option<usize>,
    /// Set when the conclusion rests on the caller's claim that both arms respond alike.
    pub conditional_on_equal_response: bool,
}

/// Nonnegative effect whenever `Σ y(α₁(y) − α₀(y)) ≥ M·P(R(0)=0)`.
pub fn sign_test_worst_case(arms: &ArmTables) -> SignTestResult {
    let m = arms.m();
    let lhs: f64 = (0..m)
        .map(|y| (y + 1) as f64 * (arms.arm1.alpha_marginal()[y] - arms.arm0.alpha_marginal()[y]))
        .sum();
    let rhs = m as f64 * arms.arm0.p_r0();
    let margin = lhs - rhs;
    let holds = margin >= -SIGN_TOL;
    SignTestResult { applicable: true, holds, margin, crossing_point: None, conditional_on_equal_response: false }
}

/// Nonnegative effect when `α₁ − α₀` changes sign once, from negative to positive.
///
/// The conclusion requires equal response probabilities in both arms, which the data
/// cannot confirm; `equal_response_asserted` records the caller's claim and `holds`
/// is false without it.
pub fn sign_test_single_crossing(arms: &ArmTables, equal_response_asserted: bool) -> SignTestResult {
    let m = arms.m();
    let diff: Vec<f64> = (0..m)
        .map(|y| arms.arm1.alpha_marginal()[y] - arms.arm0.alpha_marginal()[y])
        .collect();
    // Slack at crossing y0 (0-based): smallest of −d(y) for y < y0 and d(y) for y ≥ y0.
    let slack = |y0: usize| {
        diff.iter()
            .enumerate()
            .map(|(y, &d)| if y < y0 { -d } else { d })
            .fold(f64::INFINITY, f64::min)
    };
    let mut best = (f64::NEG_INFINITY, 0);
    let mut crossing = None;
    for y0 in 0..m {
        let s = slack(y0);
        if crossing.is_none() && s >= -SIGN_TOL {
            crossing = Some(y0 + 1);
            best = (s, y0);
        }
        if crossing.is_none() && s > best.0 {
            best = (s, y0);
        }
    }
    let applicable = crossing.is_some();
    SignTestResult {
        applicable,
        holds: applicable && equal_response_asserted,
        margin: best.0,
        crossing_point: crossing,
        conditional_on_equal_response: true,
    }
}
