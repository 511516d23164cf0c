//! Point estimators on one simulated sample where missingness depends on the outcome.

use mnar_bounds::baselines::Baseline;
use mnar_bounds::simlab::rng::STREAM_GENERATE;
use mnar_bounds::simlab::{illustrative_config, ConditionalSpec};

fn main() -> mnar_bounds::Result<()> {
    let cfg = illustrative_config(ConditionalSpec::PointIdPreset, 50_000, 11);
    let dgp = cfg.resolve()?;
    let records = dgp.generate(cfg.n, cfg.seed, STREAM_GENERATE);
    println!("true mean {:.4}, response rate {:.3}", dgp.true_mean(), dgp.response_rate());
    for b in Baseline::ALL {
        match b.run(&records) {
            Ok(e) => println!("{:<16} {:.4}  (se {:.4}){}", format!("{b:?}"), e.value, e.stderr, if e.flags.is_empty() { "" } else { "  flagged" }),
            Err(e) => println!("{:<16} failed: {e}", format!("{b:?}")),
        }
    }
    Ok(())
}
