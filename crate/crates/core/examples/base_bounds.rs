//! Worst-case bounds on a mean from a handful of records, pooled and by stratum.

use mnar_bounds::tables::identity_weights;
use mnar_bounds::{base_bounds, base_bounds_lp, estimate_tables, stratified_bounds, UnitRecord};

fn main() -> mnar_bounds::Result<()> {
    let records = vec![
        UnitRecord::observed(4, Some(4)).with_stratum("north"),
        UnitRecord::observed(5, Some(4)).with_stratum("north"),
        UnitRecord::missing(Some(2)).with_stratum("north"),
        UnitRecord::observed(2, Some(1)).with_stratum("south"),
        UnitRecord::observed(3, Some(3)).with_stratum("south"),
        UnitRecord::missing(Some(1)).with_stratum("south"),
        UnitRecord::missing(Some(5)).with_stratum("south"),
    ];
    let pop = estimate_tables(&records, 5, 5)?;
    let pooled = pop.pooled();

    let closed = base_bounds(&pooled);
    let lp = base_bounds_lp(&pooled, &identity_weights(5))?;
    println!("closed form   [{:.4}, {:.4}]", closed.lo, closed.hi);
    println!("lp            [{:.4}, {:.4}]", lp.lo, lp.hi);
    println!("width         {:.4} = (M-1)·P(R=0) = 4·{:.4}", closed.width(), pooled.p_r0());

    // Strata do not help the worst case.
    let strat = stratified_bounds(&pop, &identity_weights(5))?;
    println!("stratified    [{:.4}, {:.4}]", strat.lo, strat.hi);
    Ok(())
}
