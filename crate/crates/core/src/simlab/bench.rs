//! Replicated benchmarks of bound and point estimators under simulated MNAR masking.

use std::collections::BTreeMap;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dgp::{DgpConfig, LabeledRecord, MechanismPreset, MechanismSpec};
use super::mask::mask;
use super::rng::{replication_stream, STREAM_GENERATE, STREAM_MASK, STREAM_MECHANISM};
use crate::baselines::Baseline;
use crate::bounds::base_bounds;
use crate::error::{contract, Error, Result};
use crate::expansion::{self, KappaRule};
use crate::tables::{estimate_tables, UnitRecord};

/// Slack when checking whether an interval covers the truth.
const COVER_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceSpec {
    /// Fresh samples from a DGP each replication; the target is the population mean.
    Dgp(DgpConfig),
    /// A fully labeled CSV masked afresh each replication; the target is its sample mean.
    Dataset {
        path: PathBuf,
        mechanism: MechanismSpec,
        m: usize,
        m_f: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EstimatorSpec {
    Cca,
    NaiveImpute,
    Ppi,
    Heckman,
    PatternMixture,
    LlmRaw,
    /// Base bounds, ignoring the prediction.
    AggregatedLp,
    SetExpansion {
        #[serde(default = "default_c")]
        c: f64,
        #[serde(default)]
        kappa: KappaRule,
    },
}

fn default_c() -> f64 {
    50.0
}

impl EstimatorSpec {
    pub fn name(&self) -> &'static str {
        match self {
            EstimatorSpec::Cca => "cca",
            EstimatorSpec::NaiveImpute => "naive_impute",
            EstimatorSpec::Ppi => "ppi",
            EstimatorSpec::Heckman => "heckman",
            EstimatorSpec::PatternMixture => "pattern_mixture",
            EstimatorSpec::LlmRaw => "llm_raw",
            EstimatorSpec::AggregatedLp => "aggregated_lp",
            EstimatorSpec::SetExpansion { .. } => "set_expansion",
        }
    }

    fn baseline(&self) -> Option<Baseline> {
        Some(match self {
            EstimatorSpec::Cca => Baseline::Cca,
            EstimatorSpec::NaiveImpute => Baseline::NaiveImpute,
            EstimatorSpec::Ppi => Baseline::Ppi,
            EstimatorSpec::Heckman => Baseline::Heckman,
            EstimatorSpec::PatternMixture => Baseline::PatternMixture,
            EstimatorSpec::LlmRaw => Baseline::LlmRaw,
            _ => return None,
        })
    }

    fn is_interval(&self) -> bool {
        self.baseline().is_none()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Mae,
    Coverage,
    Width,
    Bias,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Mae, Metric::Coverage, Metric::Width, Metric::Bias];
}

fn all_metrics() -> Vec<Metric> {
    Metric::ALL.to_vec()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub source: SourceSpec,
    pub estimators: Vec<EstimatorSpec>,
    pub reps: usize,
    #[serde(default = "all_metrics")]
    pub metrics: Vec<Metric>,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return contract("a benchmark needs at least one replication");
        }
        if self.estimators.is_empty() {
            return contract("a benchmark needs at least one estimator");
        }
        for e in &self.estimators {
            if let EstimatorSpec::SetExpansion { c, kappa } = e {
                expansion::ExpansionConfig { c: *c, kappa: *kappa, weights: None }.validate()?;
            }
        }
        Ok(())
    }

    /// Unique row labels: the estimator name, suffixed by position when repeated.
    pub fn labels(&self) -> Vec<String> {
        let names: Vec<&str> = self.estimators.iter().map(EstimatorSpec::name).collect();
        names
            .iter()
            .enumerate()
            .map(|(i, n)| {
                if names.iter().filter(|m| *m == n).count() > 1 {
                    format!("{n}_{}", i + 1)
                } else {
                    n.to_string()
                }
            })
            .collect()
    }
}

/// One estimator in one replication. Point estimators report their 95% interval as `lo, hi`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRow {
    pub rep: usize,
    pub estimator: String,
    pub truth: f64,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    /// Point value, or the midpoint for interval methods.
    pub value: Option<f64>,
    pub covered: Option<bool>,
    pub failure: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorMetrics {
    pub estimator: String,
    pub interval: bool,
    pub n_ok: usize,
    pub failures: usize,
    pub mae: Option<f64>,
    pub bias: Option<f64>,
    pub width: Option<f64>,
    pub coverage: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub reps: usize,
    pub seed: u64,
    pub estimators: Vec<EstimatorMetrics>,
    /// Mean observed fraction over replications.
    pub response_rate: f64,
    /// The named mechanism vectors, echoed for auditability.
    pub presets: BTreeMap<String, [f64; 5]>,
    pub rows: Vec<ReplicationRow>,
}

/// Runs a scenario, reading the dataset from disk for a dataset source.
pub fn run_benchmark(cfg: &ScenarioConfig) -> Result<MetricsReport> {
    match &cfg.source {
        SourceSpec::Dgp(_) => run(cfg, None),
        SourceSpec::Dataset { path, .. } => {
            let data = crate::io::read_labeled(path)?;
            run(cfg, Some(&data))
        }
    }
}

/// Runs a dataset scenario on records already in memory; the source path is ignored.
pub fn run_benchmark_on(cfg: &ScenarioConfig, dataset: &[LabeledRecord]) -> Result<MetricsReport> {
    match cfg.source {
        SourceSpec::Dataset { .. } => run(cfg, Some(dataset)),
        SourceSpec::Dgp(_) => contract("in-memory data needs a dataset source"),
    }
}

struct Replicate {
    rows: Vec<ReplicationRow>,
    observed: f64,
}

fn run(cfg: &ScenarioConfig, dataset: Option<&[LabeledRecord]>) -> Result<MetricsReport> {
    cfg.validate()?;
    let labels = cfg.labels();
    let (m, m_f) = match &cfg.source {
        SourceSpec::Dgp(d) => {
            let dgp = d.resolve()?;
            (dgp.m(), dgp.m_f())
        }
        SourceSpec::Dataset { m, m_f, .. } => (*m, *m_f),
    };
    let reps: Vec<Replicate> = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| replicate(cfg, dataset, rep, m, m_f, &labels))
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(cfg.reps * labels.len());
    let mut observed = 0.0;
    for r in reps {
        observed += r.observed;
        rows.extend(r.rows);
    }
    let wants = |k: Metric| cfg.metrics.contains(&k);
    let estimators = labels
        .iter()
        .zip(&cfg.estimators)
        .map(|(label, spec)| {
            let ok: Vec<&ReplicationRow> =
                rows.iter().filter(|r| &r.estimator == label && r.failure.is_none()).collect();
            let n = ok.len();
            let mean = |f: &dyn Fn(&ReplicationRow) -> f64| {
                (n > 0).then(|| ok.iter().map(|r| f(r)).sum::<f64>() / n as f64)
            };
            EstimatorMetrics {
                estimator: label.clone(),
                interval: spec.is_interval(),
                n_ok: n,
                failures: cfg.reps - n,
                mae: mean(&|r| (r.value.unwrap() - r.truth).abs()).filter(|_| wants(Metric::Mae)),
                bias: mean(&|r| r.value.unwrap() - r.truth).filter(|_| wants(Metric::Bias)),
                width: mean(&|r| r.hi.unwrap() - r.lo.unwrap()).filter(|_| wants(Metric::Width)),
                coverage: mean(&|r| if r.covered.unwrap() { 1.0 } else { 0.0 })
                    .filter(|_| wants(Metric::Coverage)),
            }
        })
        .collect();
    let presets = [
        MechanismPreset::HigherScoreMissing,
        MechanismPreset::UShaped,
        MechanismPreset::LowerScoreMissing,
        MechanismPreset::Illustrative,
    ]
    .into_iter()
    .map(|p| (serde_json::to_value(p).unwrap().as_str().unwrap().to_string(), p.pi()))
    .collect();
    Ok(MetricsReport {
        reps: cfg.reps,
        seed: cfg.seed,
        estimators,
        response_rate: observed / cfg.reps as f64,
        presets,
        rows,
    })
}

fn replicate(
    cfg: &ScenarioConfig,
    dataset: Option<&[LabeledRecord]>,
    rep: usize,
    m: usize,
    m_f: usize,
    labels: &[String],
) -> Result<Replicate> {
    let rep_u = rep as u64;
    let (records, truth) = match (&cfg.source, dataset) {
        (SourceSpec::Dgp(d), _) => {
            let pi = d.pi.resolve(m, cfg.seed, replication_stream(rep_u, STREAM_MECHANISM))?;
            let dgp = d.resolve()?.with_pi(pi)?;
            (dgp.generate(d.n, cfg.seed, replication_stream(rep_u, STREAM_GENERATE)), dgp.true_mean())
        }
        (SourceSpec::Dataset { mechanism, .. }, Some(data)) => {
            let pi = mechanism.resolve(m, cfg.seed, replication_stream(rep_u, STREAM_MECHANISM))?;
            let masked = mask(data, &pi, cfg.seed, replication_stream(rep_u, STREAM_MASK))?;
            let truth = masked.truth().mean();
            (masked.records, truth)
        }
        (SourceSpec::Dataset { .. }, None) => return contract("dataset source without data"),
    };
    let observed = records.iter().filter(|r| r.r).count() as f64 / records.len().max(1) as f64;
    let rows = cfg
        .estimators
        .iter()
        .zip(labels)
        .map(|(spec, label)| {
            let row = |lo, hi, value, failure| ReplicationRow {
                rep,
                estimator: label.clone(),
                truth,
                lo,
                hi,
                value,
                covered: lo.zip(hi).map(|(l, h): (f64, f64)| l - COVER_TOL <= truth && truth <= h + COVER_TOL),
                failure,
            };
            match run_estimator(spec, &records, m, m_f) {
                Ok((lo, hi, value)) => Ok(row(Some(lo), Some(hi), Some(value), None)),
                Err(Error::Contract(msg)) => Err(Error::Contract(msg)),
                Err(e) => Ok(row(None, None, None, Some(e.to_string()))),
            }
        })
        .collect::<Result<_>>()?;
    Ok(Replicate { rows, observed })
}

/// `(lo, hi, value)`: the interval and its midpoint, or the 95% interval and the point value.
fn run_estimator(spec: &EstimatorSpec, records: &[UnitRecord], m: usize, m_f: usize) -> Result<(f64, f64, f64)> {
    if let Some(b) = spec.baseline() {
        let e = b.run(records)?;
        return Ok((e.ci_lo, e.ci_hi, e.value));
    }
    let pop = estimate_tables(records, m, m_f)?;
    let iv = match spec {
        EstimatorSpec::AggregatedLp => base_bounds(&pop.pooled()),
        EstimatorSpec::SetExpansion { c, kappa } => {
            let cfg = expansion::ExpansionConfig { c: *c, kappa: *kappa, weights: None };
            expansion::estimate(&pop, &cfg)?.aggregate
        }
        _ => unreachable!("point estimators handled above"),
    };
    Ok((iv.lo, iv.hi, iv.midpoint()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simlab::dgp::{ConditionalSpec, PmfSpec};

    fn labeled(n: usize) -> Vec<LabeledRecord> {
        (0..n)
            .map(|i| {
                let y = (i * 7 % 5) as u32 + 1;
                LabeledRecord { stratum: None, f: Some(if i % 3 == 0 { y } else { (y % 5) + 1 }), y }
            })
            .collect()
    }

    fn all_estimators() -> Vec<EstimatorSpec> {
        vec![
            EstimatorSpec::Cca,
            EstimatorSpec::NaiveImpute,
            EstimatorSpec::Ppi,
            EstimatorSpec::PatternMixture,
            EstimatorSpec::LlmRaw,
            EstimatorSpec::AggregatedLp,
            EstimatorSpec::SetExpansion { c: 50.0, kappa: KappaRule::Constant(0.5) },
        ]
    }

    fn dataset_cfg(mechanism: MechanismSpec, reps: usize) -> ScenarioConfig {
        ScenarioConfig {
            source: SourceSpec::Dataset { path: PathBuf::new(), mechanism, m: 5, m_f: 5 },
            estimators: all_estimators(),
            reps,
            metrics: all_metrics(),
            seed: 9,
        }
    }

    #[test]
    fn full_response_gives_sample_mean_error() {
        let data = labeled(500);
        let truth = data.iter().map(|r| r.y as f64).sum::<f64>() / 500.0;
        let report = run_benchmark_on(&dataset_cfg(MechanismSpec::Explicit(vec![1.0; 5]), 1), &data).unwrap();
        let cca = &report.estimators[0];
        assert!(cca.mae.unwrap() < 1e-12);
        let lp = report.estimators.iter().find(|e| e.estimator == "aggregated_lp").unwrap();
        assert!(lp.width.unwrap() < 1e-12);
        assert_eq!(lp.coverage, Some(1.0));
        assert!(report.rows.iter().all(|r| r.truth == truth));
        assert_eq!(report.response_rate, 1.0);
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let data = labeled(2000);
        let cfg = dataset_cfg(MechanismSpec::UniformRandom { lo: 0.1, hi: 0.9 }, 12);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| run_benchmark_on(&cfg, &data)).unwrap();
        let b = four.install(|| run_benchmark_on(&cfg, &data)).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(a.rows.len(), 12 * cfg.estimators.len());
    }

    #[test]
    fn dgp_source_targets_population_mean() {
        let cfg = ScenarioConfig {
            source: SourceSpec::Dgp(DgpConfig {
                m: 3,
                p_y: PmfSpec::Explicit(vec![0.2, 0.5, 0.3]),
                f_given_y: ConditionalSpec::Identity,
                pi: MechanismSpec::UniformRandom { lo: 0.2, hi: 0.8 },
                n: 400,
                seed: 0,
            }),
            estimators: vec![EstimatorSpec::AggregatedLp, EstimatorSpec::Cca],
            reps: 5,
            metrics: vec![Metric::Coverage],
            seed: 4,
        };
        let report = run_benchmark(&cfg).unwrap();
        assert!(report.rows.iter().all(|r| (r.truth - 2.1).abs() < 1e-12));
        assert_eq!(report.estimators[0].coverage, Some(1.0));
        assert!(report.estimators[0].mae.is_none());
    }

    #[test]
    fn config_is_fail_closed_and_labels_are_unique() {
        let json = r#"{"source": {"dataset": {"path": "x.csv", "mechanism": {"preset": "u_shaped"}, "m": 5, "m_f": 5}},
            "estimators": [{"kind": "cca"}, {"kind": "set_expansion"}, {"kind": "set_expansion", "c": 10}],
            "reps": 3, "seed": 1}"#;
        let cfg: ScenarioConfig = serde_json::from_str(json).unwrap();
        assert_eq!(cfg.labels(), ["cca", "set_expansion_2", "set_expansion_3"]);
        assert_eq!(cfg.metrics, all_metrics());
        let bad = json.replace("\"seed\": 1", "\"seed\": 1, \"extra\": 0");
        assert!(serde_json::from_str::<ScenarioConfig>(&bad).is_err());
        let zero = ScenarioConfig { reps: 0, ..cfg };
        assert!(zero.validate().is_err());
    }
}
