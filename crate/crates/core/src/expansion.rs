//! Set-expansion estimator for sampled tables.
//!
//! The empirical system `Â w = β̂` is usually infeasible. Each stratum first measures
//! how far it is from feasible (`m̂ = min_{0≤w≤C} ‖Âw − β̂‖_∞`), then optimizes over the
//! tube `‖Âw − β̂‖_∞ ≤ m̂ + κ_n/√n` inside the box `[0, C]`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::bounds::{min_max, Interval, Method};
use crate::error::{contract, Error, Result};
use crate::lp::{self, LpProblem, LpSolution, LpStatus, Sense};
use crate::shadow::{aggregate_shadow_bounds, objective_terms, ShadowOptions};
use crate::simlab::rng::{replication_stream, STREAM_GENERATE};
use crate::simlab::DgpConfig;
use crate::tables::{estimate_tables, PopulationTables, StratumTable};

/// Tolerance for deciding that a coordinate of `ŵ` sits on the box bound.
const BIND_TOL: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KappaRule {
    Constant(f64),
    Log,
    LogLog,
}

impl Default for KappaRule {
    fn default() -> Self {
        KappaRule::Constant(0.5)
    }
}

impl KappaRule {
    /// `κ_n` for a stratum with `n` records. `log log n` is replaced by 1 below `n = e²`.
    pub fn kappa(&self, n: u64) -> f64 {
        let n = n as f64;
        match *self {
            KappaRule::Constant(v) => v,
            KappaRule::Log => n.max(1.0).ln(),
            KappaRule::LogLog => {
                if n < std::f64::consts::E.powi(2) {
                    1.0
                } else {
                    n.ln().ln()
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpansionConfig {
    #[serde(default = "default_c")]
    pub c: f64,
    #[serde(default)]
    pub kappa: KappaRule,
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
}

fn default_c() -> f64 {
    50.0
}

impl Default for ExpansionConfig {
    fn default() -> Self {
        Self { c: default_c(), kappa: KappaRule::default(), weights: None }
    }
}

impl ExpansionConfig {
    pub fn with_kappa(kappa: KappaRule) -> Self {
        Self { kappa, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) || !self.c.is_finite() {
            return contract(format!("box bound C must be positive and finite, got {}", self.c));
        }
        if let KappaRule::Constant(v) = self.kappa {
            if !(v >= 0.0) || !v.is_finite() {
                return contract(format!("constant kappa must be nonnegative, got {v}"));
            }
        }
        Ok(())
    }

    pub(crate) fn weights_for(&self, m: usize) -> Result<Vec<f64>> {
        ShadowOptions { weights: self.weights.clone(), force: true }.weights_for(m)
    }

    /// `κ_n/√n`, or 0 for a population table.
    pub fn margin(&self, table: &StratumTable) -> f64 {
        match table.n() {
            Some(n) if n > 0 => self.kappa.kappa(n) / (n as f64).sqrt(),
            _ => 0.0,
        }
    }
}

/// Infeasibility slack `m̂` of one stratum.
pub fn slack(table: &StratumTable, c: f64) -> Result<f64> {
    Ok(lp::min_inf_norm_residual(table.alpha(), table.beta(), c)?.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StratumExpansion {
    pub id: String,
    pub slack: f64,
    pub margin: f64,
    pub interval: Interval,
    pub status: [LpStatus; 2],
    /// Some coordinate of an optimal `ŵ` sits on `C`; coverage claims assume it does not.
    pub binds_at_c: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpansionReport {
    pub per_stratum: Vec<StratumExpansion>,
    pub aggregate: Interval,
    pub binds_at_c: bool,
}

/// The relaxed problem for one stratum, before a sense is chosen.
pub(crate) struct Tube {
    pub problem: LpProblem,
    pub constant: f64,
    pub slack: f64,
    pub margin: f64,
}

pub(crate) fn tube(table: &StratumTable, cfg: &ExpansionConfig, g: &[f64]) -> Result<Tube> {
    let m = table.m();
    let slack = slack(table, cfg.c)?;
    let margin = cfg.margin(table);
    let radius = slack + margin;
    let (c, constant) = objective_terms(table.alpha(), g);
    let problem = LpProblem::new(
        Sense::Minimize,
        c,
        table.alpha().clone(),
        table.beta().iter().map(|b| b - radius).collect(),
        table.beta().iter().map(|b| b + radius).collect(),
        vec![0.0; m],
        vec![cfg.c; m],
    )?;
    Ok(Tube { problem, constant, slack, margin })
}

pub(crate) fn optimal(sol: &LpSolution) -> Result<f64> {
    match sol.status {
        LpStatus::Optimal => Ok(sol.value),
        s => Err(Error::Numerical(format!("relaxed LP ended {s:?} despite a feasible slack point"))),
    }
}

pub(crate) fn binds(sol: &LpSolution, c: f64) -> bool {
    sol.point.iter().any(|&w| w >= c - BIND_TOL)
}

/// Estimates one stratum's interval.
pub fn estimate_stratum(table: &StratumTable, cfg: &ExpansionConfig) -> Result<StratumExpansion> {
    cfg.validate()?;
    let g = cfg.weights_for(table.m())?;
    let t = tube(table, cfg, &g)?;
    let (lo, hi) = lp::solve_min_max(&t.problem)?;
    let raw = [t.constant + optimal(&lo)?, t.constant + optimal(&hi)?];
    let (gmin, gmax) = min_max(&g);
    let interval = Interval::new(raw[0].clamp(gmin, gmax), raw[1].clamp(gmin, gmax), Method::SetExpansion)
        .with_meta("raw", json!(raw));
    Ok(StratumExpansion {
        id: String::new(),
        slack: t.slack,
        margin: t.margin,
        interval,
        status: [lo.status, hi.status],
        binds_at_c: binds(&lo, cfg.c) || binds(&hi, cfg.c),
    })
}

/// Estimates every stratum and aggregates with the stratum weights.
pub fn estimate(pop: &PopulationTables, cfg: &ExpansionConfig) -> Result<ExpansionReport> {
    cfg.validate()?;
    let mut per_stratum = Vec::with_capacity(pop.strata().len());
    let (mut lo, mut hi) = (0.0, 0.0);
    for s in pop.strata() {
        let mut e = estimate_stratum(&s.table, cfg)?;
        e.id = s.id.clone();
        lo += s.weight * e.interval.lo;
        hi += s.weight * e.interval.hi;
        per_stratum.push(e);
    }
    let binds_at_c = per_stratum.iter().any(|s| s.binds_at_c);
    Ok(ExpansionReport {
        per_stratum,
        aggregate: Interval::new(lo, hi, Method::SetExpansion),
        binds_at_c,
    })
}

/// Mean endpoint errors at one sample size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub n: usize,
    pub err_lo: f64,
    pub err_hi: f64,
    /// Mean Hausdorff distance to the oracle interval (the larger endpoint error).
    pub hausdorff: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateTable {
    /// Population shadow interval the estimates are compared against.
    pub oracle: [f64; 2],
    pub rows: Vec<RateRow>,
    /// Least-squares slope of `ln hausdorff` on `ln n`.
    pub slope: f64,
}

/// Empirical convergence of the estimator to the population shadow interval.
///
/// Replication `r` at grid index `i` samples from stream `replication_stream(i·reps + r, GENERATE)`.
pub fn convergence_study(
    dgp: &DgpConfig,
    cfg: &ExpansionConfig,
    n_grid: &[usize],
    reps: usize,
    seed: u64,
) -> Result<RateTable> {
    cfg.validate()?;
    if reps == 0 || n_grid.is_empty() || n_grid.contains(&0) {
        return contract("convergence study needs reps ≥ 1 and a grid of positive sample sizes");
    }
    let model = dgp.resolve()?;
    let opts = ShadowOptions { weights: cfg.weights.clone(), force: false };
    let oracle = aggregate_shadow_bounds(&model.exact_tables(), &opts)?.aggregate;
    let errors: Vec<(f64, f64)> = (0..n_grid.len() * reps)
        .into_par_iter()
        .map(|k| {
            let n = n_grid[k / reps];
            let records = model.generate(n, seed, replication_stream(k as u64, STREAM_GENERATE));
            let pop = estimate_tables(&records, model.m(), model.m_f())?;
            let iv = estimate(&pop, cfg)?.aggregate;
            Ok(((iv.lo - oracle.lo).abs(), (iv.hi - oracle.hi).abs()))
        })
        .collect::<Result<_>>()?;
    let rows: Vec<RateRow> = n_grid
        .iter()
        .zip(errors.chunks(reps))
        .map(|(&n, errs)| {
            let k = errs.len() as f64;
            RateRow {
                n,
                err_lo: errs.iter().map(|e| e.0).sum::<f64>() / k,
                err_hi: errs.iter().map(|e| e.1).sum::<f64>() / k,
                hausdorff: errs.iter().map(|e| e.0.max(e.1)).sum::<f64>() / k,
            }
        })
        .collect();
    let xs: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.hausdorff.ln()).collect();
    Ok(RateTable { oracle: [oracle.lo, oracle.hi], rows, slope: ols_slope(&xs, &ys) })
}

fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shadow::shadow_bounds_stratum;
    use crate::tables::TableSource;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    fn table(alpha: &[f64], m_f: usize, beta: &[f64], source: TableSource) -> StratumTable {
        let m = alpha.len() / m_f;
        StratumTable::new(DMatrix::from_row_slice(m_f, m, alpha), beta.to_vec(), source).unwrap()
    }

    #[test]
    fn kappa_rules() {
        assert_eq!(KappaRule::Constant(0.5).kappa(100), 0.5);
        assert_abs_diff_eq!(KappaRule::Log.kappa(1000), 1000f64.ln());
        assert_eq!(KappaRule::LogLog.kappa(5), 1.0);
        assert_abs_diff_eq!(KappaRule::LogLog.kappa(10_000), 10_000f64.ln().ln());
    }

    #[test]
    fn config_validation() {
        let bad = ExpansionConfig { c: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = ExpansionConfig::with_kappa(KappaRule::Constant(-1.0));
        assert!(bad.validate().is_err());
        assert!(ExpansionConfig::with_kappa(KappaRule::Constant(0.0)).validate().is_ok());
    }

    #[test]
    fn exact_table_has_zero_slack() {
        let t = table(&[0.2, 0.1, 0.1, 0.2], 2, &[0.15, 0.25], TableSource::Exact);
        assert!(slack(&t, 50.0).unwrap() <= 1e-9);
    }

    #[test]
    fn underdetermined_absorbs_inflation() {
        // Â = (0.5), true w = 0.2 so β = 0.1; inflating β̂ to 0.2 is absorbed by w = 0.4.
        let (s, w) = lp::min_inf_norm_residual(&DMatrix::from_element(1, 1, 0.5), &[0.2], 50.0).unwrap();
        assert!(s <= 1e-12);
        assert_abs_diff_eq!(w[0], 0.4, epsilon = 1e-12);
    }

    #[test]
    fn zero_margin_matches_population_bounds() {
        let t = table(&[0.1, 0.2, 0.05, 0.05, 0.1, 0.1], 2, &[0.2, 0.2], TableSource::Exact);
        let shadow = shadow_bounds_stratum(&t, &ShadowOptions::default()).unwrap();
        let cfg = ExpansionConfig::with_kappa(KappaRule::Constant(0.0));
        let e = estimate_stratum(&t, &cfg).unwrap();
        assert_abs_diff_eq!(e.interval.lo, shadow.lo, epsilon = 1e-7);
        assert_abs_diff_eq!(e.interval.hi, shadow.hi, epsilon = 1e-7);
        assert!(!e.binds_at_c);
    }

    #[test]
    fn larger_kappa_nests() {
        let src = TableSource::Empirical { n: 400 };
        let t = table(&[0.1, 0.2, 0.05, 0.06, 0.1, 0.1], 2, &[0.22, 0.17], src);
        let narrow = estimate_stratum(&t, &ExpansionConfig::with_kappa(KappaRule::Constant(0.5))).unwrap();
        let wide = estimate_stratum(&t, &ExpansionConfig::with_kappa(KappaRule::Constant(1.0))).unwrap();
        assert!(narrow.interval.is_within(&wide.interval, 1e-12));
        assert!(wide.interval.lo >= 1.0 && wide.interval.hi <= 3.0);
    }

    #[test]
    fn convergence_on_identity_dgp_shrinks() {
        use crate::simlab::{ConditionalSpec, MechanismSpec, PmfSpec};
        let dgp = DgpConfig {
            m: 3,
            p_y: PmfSpec::Explicit(vec![0.3, 0.4, 0.3]),
            f_given_y: ConditionalSpec::Identity,
            pi: MechanismSpec::Explicit(vec![0.5, 0.7, 0.9]),
            n: 0,
            seed: 0,
        };
        let t = convergence_study(&dgp, &ExpansionConfig::default(), &[400, 40_000], 8, 3).unwrap();
        assert_abs_diff_eq!(t.oracle[0], 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(t.oracle[1], 2.0, epsilon = 1e-9);
        assert!(t.rows[1].hausdorff < t.rows[0].hausdorff);
        assert!(t.slope < 0.0);
        assert_abs_diff_eq!(ols_slope(&[0.0, 1.0, 2.0], &[1.0, 0.5, 0.0]), -0.5);
    }
}
