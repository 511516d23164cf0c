//! Probability tables built from unit records.
//!
//! A [`StratumTable`] holds, for one covariate stratum, the observed joint
//! `alpha[f][y] = P(R=1, F=f, Y=y)` and the missing marginal
//! `beta[f] = P(R=0, F=f)`. Every bound in the crate is a function of these.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};

/// Tolerance for the probability-sum invariants.
pub const TABLE_TOL: f64 = 1e-12;

/// Label of the implicit stratum used when records carry none.
pub const DEFAULT_STRATUM: &str = "all";

/// One unit as seen by the estimators. Outcome and prediction levels are 1-based.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitRecord {
    pub stratum: Option<String>,
    pub f: Option<u32>,
    pub r: bool,
    pub y: Option<u32>,
    pub d: Option<u8>,
}

impl UnitRecord {
    pub fn observed(y: u32, f: Option<u32>) -> Self {
        Self { stratum: None, f, r: true, y: Some(y), d: None }
    }

    pub fn missing(f: Option<u32>) -> Self {
        Self { stratum: None, f, r: false, y: None, d: None }
    }

    pub fn with_stratum(mut self, s: impl Into<String>) -> Self {
        self.stratum = Some(s.into());
        self
    }

    pub fn with_arm(mut self, d: u8) -> Self {
        self.d = Some(d);
        self
    }

    pub fn stratum_label(&self) -> &str {
        self.stratum.as_deref().unwrap_or(DEFAULT_STRATUM)
    }
}

/// Where a table came from. Population tables are exact; empirical ones carry sampling noise.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TableSource {
    Exact,
    Empirical { n: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StratumTable {
    m: usize,
    m_f: usize,
    /// `m_f × m`, rows indexed by prediction level, columns by outcome level.
    alpha: DMatrix<f64>,
    beta: Vec<f64>,
    alpha_marginal: Vec<f64>,
    source: TableSource,
}

impl StratumTable {
    /// Builds a table from its joint and missing marginal, validating the invariants.
    pub fn new(alpha: DMatrix<f64>, beta: Vec<f64>, source: TableSource) -> Result<Self> {
        let (m_f, m) = alpha.shape();
        if m == 0 || m_f == 0 {
            return contract("table needs at least one outcome and one prediction level");
        }
        if beta.len() != m_f {
            return contract(format!("beta has length {}, expected {m_f}", beta.len()));
        }
        if alpha.iter().chain(beta.iter()).any(|p| !(-TABLE_TOL..=1.0 + TABLE_TOL).contains(p)) {
            return contract("table entries must lie in [0, 1]");
        }
        let total = alpha.sum() + beta.iter().sum::<f64>();
        if (total - 1.0).abs() > 1e-9 {
            return contract(format!("table mass sums to {total}, expected 1"));
        }
        let alpha_marginal = (0..m).map(|y| alpha.column(y).sum()).collect();
        Ok(Self { m, m_f, alpha, beta, alpha_marginal, source })
    }

    /// A shadow-free table: one prediction level, so `alpha` is the outcome marginal.
    pub fn from_marginal(alpha: &[f64], p_missing: f64, source: TableSource) -> Result<Self> {
        Self::new(DMatrix::from_row_slice(1, alpha.len(), alpha), vec![p_missing], source)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn m_f(&self) -> usize {
        self.m_f
    }

    pub fn alpha(&self) -> &DMatrix<f64> {
        &self.alpha
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn alpha_marginal(&self) -> &[f64] {
        &self.alpha_marginal
    }

    /// `P(R = 0)` within the stratum.
    pub fn p_r0(&self) -> f64 {
        self.beta.iter().sum()
    }

    pub fn p_r1(&self) -> f64 {
        self.alpha_marginal.iter().sum()
    }

    pub fn source(&self) -> TableSource {
        self.source
    }

    pub fn is_exact(&self) -> bool {
        self.source == TableSource::Exact
    }

    /// Sample count behind an empirical table; `None` for population tables.
    pub fn n(&self) -> Option<u64> {
        match self.source {
            TableSource::Exact => None,
            TableSource::Empirical { n } => Some(n),
        }
    }

    /// Column sums of `alpha` are `P(R=1, Y=y)`; this is column `y` (0-based).
    pub fn column(&self, y: usize) -> Vec<f64> {
        self.alpha.column(y).iter().copied().collect()
    }

    /// The same probabilities with a different provenance tag.
    pub fn with_source(mut self, source: TableSource) -> Self {
        self.source = source;
        self
    }

    /// Collapses the prediction dimension, keeping the outcome marginal only.
    pub fn collapsed(&self) -> StratumTable {
        StratumTable {
            m: self.m,
            m_f: 1,
            alpha: DMatrix::from_row_slice(1, self.m, &self.alpha_marginal),
            beta: vec![self.p_r0()],
            alpha_marginal: self.alpha_marginal.clone(),
            source: self.source,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StratumEntry {
    pub id: String,
    pub table: StratumTable,
    pub weight: f64,
}

/// Stratum tables with their aggregation weights `P(X = x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationTables {
    m: usize,
    m_f: usize,
    strata: Vec<StratumEntry>,
    warnings: Vec<String>,
}

impl PopulationTables {
    pub fn new(strata: Vec<StratumEntry>) -> Result<Self> {
        let Some(first) = strata.first() else {
            return contract("population needs at least one stratum");
        };
        let (m, m_f) = (first.table.m(), first.table.m_f());
        if strata.iter().any(|s| s.table.m() != m || s.table.m_f() != m_f) {
            return contract("all strata must share the outcome and prediction supports");
        }
        if strata.iter().any(|s| !(s.weight >= 0.0)) {
            return contract("stratum weights must be nonnegative");
        }
        let total: f64 = strata.iter().map(|s| s.weight).sum();
        if (total - 1.0).abs() > TABLE_TOL * strata.len().max(1) as f64 * 10.0 {
            return contract(format!("stratum weights sum to {total}, expected 1"));
        }
        Ok(Self { m, m_f, strata, warnings: Vec::new() })
    }

    pub fn single(table: StratumTable) -> Self {
        Self {
            m: table.m(),
            m_f: table.m_f(),
            strata: vec![StratumEntry { id: DEFAULT_STRATUM.to_string(), table, weight: 1.0 }],
            warnings: Vec::new(),
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn m_f(&self) -> usize {
        self.m_f
    }

    pub fn strata(&self) -> &[StratumEntry] {
        &self.strata
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Weighted mixture of all strata, i.e. the table obtained by ignoring covariates.
    pub fn pooled(&self) -> StratumTable {
        let mut alpha = DMatrix::zeros(self.m_f, self.m);
        let mut beta = vec![0.0; self.m_f];
        for s in &self.strata {
            alpha += s.table.alpha() * s.weight;
            for (b, sb) in beta.iter_mut().zip(s.table.beta()) {
                *b += s.weight * sb;
            }
        }
        let source = if self.strata.iter().all(|s| s.table.is_exact()) {
            TableSource::Exact
        } else {
            TableSource::Empirical {
                n: self.strata.iter().filter_map(|s| s.table.n()).sum(),
            }
        };
        let alpha_marginal = (0..self.m).map(|y| alpha.column(y).sum()).collect();
        StratumTable { m: self.m, m_f: self.m_f, alpha, beta, alpha_marginal, source }
    }

    /// Total records behind an empirical population.
    pub fn total_n(&self) -> Option<u64> {
        self.strata.iter().map(|s| s.table.n()).sum()
    }
}

#[derive(Clone, Debug, Default)]
pub struct EstimateOptions {
    /// Laplace add-λ smoothing applied to every cell before normalizing.
    pub smoothing: f64,
    /// Strata expected in the data. Declared strata with no records are dropped with a warning.
    pub declared_strata: Option<Vec<String>>,
}

/// Empirical tables from unit records with declared supports `1..=m` and `1..=m_f`.
pub fn estimate_tables(records: &[UnitRecord], m: usize, m_f: usize) -> Result<PopulationTables> {
    estimate_tables_with(records, m, m_f, &EstimateOptions::default())
}

pub fn estimate_tables_with(
    records: &[UnitRecord],
    m: usize,
    m_f: usize,
    opts: &EstimateOptions,
) -> Result<PopulationTables> {
    if records.is_empty() {
        return contract("no records");
    }
    if m == 0 || m_f == 0 {
        return contract("supports must be nonempty");
    }
    if !(opts.smoothing >= 0.0) {
        return contract("smoothing must be nonnegative");
    }

    struct Counts {
        alpha: Vec<u64>,
        beta: Vec<u64>,
        n: u64,
    }
    let mut by_stratum: BTreeMap<&str, Counts> = BTreeMap::new();
    for (index, rec) in records.iter().enumerate() {
        let f = match rec.f {
            Some(f) if f >= 1 && (f as usize) <= m_f => f as usize - 1,
            Some(f) => {
                return Err(Error::InvalidRecord {
                    index,
                    reason: format!("prediction level {f} outside 1..={m_f}"),
                })
            }
            None if m_f == 1 => 0,
            None => {
                return Err(Error::InvalidRecord {
                    index,
                    reason: "prediction missing but shadow-variable levels declared".into(),
                })
            }
        };
        let counts = by_stratum.entry(rec.stratum_label()).or_insert_with(|| Counts {
            alpha: vec![0; m_f * m],
            beta: vec![0; m_f],
            n: 0,
        });
        counts.n += 1;
        match (rec.r, rec.y) {
            (true, Some(y)) if y >= 1 && (y as usize) <= m => counts.alpha[f * m + y as usize - 1] += 1,
            (true, Some(y)) => {
                return Err(Error::InvalidRecord { index, reason: format!("outcome {y} outside 1..={m}") })
            }
            (true, None) => {
                return Err(Error::InvalidRecord { index, reason: "observed record without outcome".into() })
            }
            (false, None) => counts.beta[f] += 1,
            (false, Some(_)) => {
                return Err(Error::InvalidRecord { index, reason: "missing record carries an outcome".into() })
            }
        }
    }

    let mut warnings = Vec::new();
    if let Some(declared) = &opts.declared_strata {
        for s in declared {
            if !by_stratum.contains_key(s.as_str()) {
                warnings.push(format!("stratum '{s}' has no records and was dropped"));
            }
        }
    }

    let total = records.len() as f64;
    let lambda = opts.smoothing;
    let cells = (m_f * m + m_f) as f64;
    let strata = by_stratum
        .into_iter()
        .map(|(id, c)| {
            let denom = c.n as f64 + lambda * cells;
            let alpha = DMatrix::from_fn(m_f, m, |f, y| (c.alpha[f * m + y] as f64 + lambda) / denom);
            let beta = c.beta.iter().map(|&b| (b as f64 + lambda) / denom).collect();
            let table = StratumTable::new(alpha, beta, TableSource::Empirical { n: c.n })?;
            Ok(StratumEntry { id: id.to_string(), table, weight: c.n as f64 / total })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut pop = PopulationTables::new(strata)?;
    pop.warnings = warnings;
    Ok(pop)
}

/// `g(y) = y`, the weights that make every objective a mean.
pub fn identity_weights(m: usize) -> Vec<f64> {
    (1..=m).map(|y| y as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn four_record_count() {
        let recs = vec![
            UnitRecord::observed(1, Some(1)),
            UnitRecord::observed(2, Some(1)),
            UnitRecord::missing(Some(1)),
            UnitRecord::missing(Some(1)),
        ];
        let pop = estimate_tables(&recs, 2, 1).unwrap();
        let t = &pop.strata()[0].table;
        assert_eq!(t.alpha()[(0, 0)], 0.25);
        assert_eq!(t.alpha()[(0, 1)], 0.25);
        assert_eq!(t.beta(), &[0.5]);
        assert_eq!(t.p_r0(), 0.5);
        assert_eq!(t.n(), Some(4));
    }

    #[test]
    fn fully_observed_has_no_beta() {
        let recs: Vec<_> = (1..=3).map(|y| UnitRecord::observed(y, Some(y))).collect();
        let pop = estimate_tables(&recs, 3, 3).unwrap();
        let t = &pop.strata()[0].table;
        assert!(t.beta().iter().all(|&b| b == 0.0));
        assert_eq!(t.p_r0(), 0.0);
    }

    #[test]
    fn out_of_support_names_the_record() {
        let recs = vec![UnitRecord::observed(1, Some(1)), UnitRecord::observed(4, Some(1))];
        match estimate_tables(&recs, 3, 1).unwrap_err() {
            Error::InvalidRecord { index, .. } => assert_eq!(index, 1),
            e => panic!("unexpected {e}"),
        }
        let recs = vec![UnitRecord::missing(Some(3))];
        assert!(matches!(estimate_tables(&recs, 3, 2), Err(Error::InvalidRecord { index: 0, .. })));
    }

    #[test]
    fn missing_prediction_rejected_with_shadow_levels() {
        let recs = vec![UnitRecord::observed(1, None)];
        assert!(estimate_tables(&recs, 2, 1).is_ok());
        assert!(matches!(estimate_tables(&recs, 2, 2), Err(Error::InvalidRecord { .. })));
    }

    #[test]
    fn strata_weights_and_pooling() {
        let recs = vec![
            UnitRecord::observed(1, None).with_stratum("a"),
            UnitRecord::missing(None).with_stratum("a"),
            UnitRecord::observed(2, None).with_stratum("b"),
            UnitRecord::observed(2, None).with_stratum("b"),
        ];
        let opts = EstimateOptions { declared_strata: Some(vec!["a".into(), "b".into(), "c".into()]), ..Default::default() };
        let pop = estimate_tables_with(&recs, 2, 1, &opts).unwrap();
        assert_eq!(pop.strata().len(), 2);
        assert_eq!(pop.warnings().len(), 1);
        assert_eq!(pop.strata()[0].weight, 0.5);
        let pooled = pop.pooled();
        assert_abs_diff_eq!(pooled.alpha_marginal()[0], 0.25);
        assert_abs_diff_eq!(pooled.alpha_marginal()[1], 0.5);
        assert_abs_diff_eq!(pooled.p_r0(), 0.25);
    }

    #[test]
    fn smoothing_keeps_mass_one() {
        let recs = vec![UnitRecord::observed(1, Some(1)), UnitRecord::missing(Some(2))];
        let opts = EstimateOptions { smoothing: 0.5, ..Default::default() };
        let pop = estimate_tables_with(&recs, 3, 2, &opts).unwrap();
        let t = &pop.strata()[0].table;
        assert_abs_diff_eq!(t.alpha().sum() + t.p_r0(), 1.0, epsilon = 1e-12);
        assert!(t.alpha().iter().all(|&a| a > 0.0));
    }

    #[test]
    fn bad_weights_rejected() {
        let t = StratumTable::from_marginal(&[0.5, 0.5], 0.0, TableSource::Exact).unwrap();
        let err = PopulationTables::new(vec![StratumEntry { id: "x".into(), table: t, weight: 0.7 }]);
        assert!(matches!(err, Err(Error::Contract(_))));
    }
}
