//! A small semi-synthetic benchmark: random masks over the committed labeled dataset.

use mnar_bounds::expansion::KappaRule;
use mnar_bounds::simlab::bench::Metric;
use mnar_bounds::simlab::uss::uss_synthetic;
use mnar_bounds::simlab::{run_benchmark_on, EstimatorSpec, MechanismSpec, ScenarioConfig, SourceSpec};

fn main() -> mnar_bounds::Result<()> {
    let cfg = ScenarioConfig {
        source: SourceSpec::Dataset {
            path: "uss_synthetic.csv".into(),
            mechanism: MechanismSpec::UniformRandom { lo: 0.1, hi: 0.9 },
            m: 5,
            m_f: 5,
        },
        estimators: vec![
            EstimatorSpec::Cca,
            EstimatorSpec::Ppi,
            EstimatorSpec::PatternMixture,
            EstimatorSpec::AggregatedLp,
            EstimatorSpec::SetExpansion { c: 50.0, kappa: KappaRule::Constant(0.5) },
        ],
        reps: 40,
        metrics: Metric::ALL.to_vec(),
        seed: 2024,
    };
    let report = run_benchmark_on(&cfg, &uss_synthetic())?;
    println!("response rate {:.3} over {} masks", report.response_rate, report.reps);
    println!("{:<16} {:>8} {:>8} {:>8} {:>8}", "estimator", "mae", "bias", "width", "coverage");
    let show = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
    for e in &report.estimators {
        println!("{:<16} {:>8} {:>8} {:>8} {:>8}", e.estimator, show(e.mae), show(e.bias), show(e.width), show(e.coverage));
    }
    Ok(())
}
