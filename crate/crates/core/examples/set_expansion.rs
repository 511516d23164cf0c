//! Set expansion on simulated samples of growing size, against the population interval.

use mnar_bounds::estimate_tables;
use mnar_bounds::expansion::{estimate, ExpansionConfig, KappaRule};
use mnar_bounds::shadow::{aggregate_shadow_bounds, ShadowOptions};
use mnar_bounds::simlab::rng::STREAM_GENERATE;
use mnar_bounds::simlab::{illustrative_config, ConditionalSpec};

fn main() -> mnar_bounds::Result<()> {
    let dgp = illustrative_config(ConditionalSpec::PartialIdPreset, 0, 0).resolve()?;
    let oracle = aggregate_shadow_bounds(&dgp.exact_tables(), &ShadowOptions::default())?.aggregate;
    println!("population [{:.4}, {:.4}]", oracle.lo, oracle.hi);

    let cfg = ExpansionConfig { c: 50.0, kappa: KappaRule::Constant(0.5), weights: None };
    for n in [1_000, 10_000, 100_000, 1_000_000] {
        let records = dgp.generate(n, 3, STREAM_GENERATE);
        let est = estimate(&estimate_tables(&records, 5, 5)?, &cfg)?;
        let s = &est.per_stratum[0];
        println!(
            "n={n:>8}  [{:.4}, {:.4}]  slack {:.2e}  margin {:.2e}{}",
            est.aggregate.lo,
            est.aggregate.hi,
            s.slack,
            s.margin,
            if est.binds_at_c { "  (binds at C)" } else { "" }
        );
    }
    Ok(())
}
