//! Completeness diagnostics: rank and conditioning of the respondent matrix.

use mnar_bounds::diagnostics::{completeness_report, hoffman_constant};
use mnar_bounds::simlab::{illustrative_config, ConditionalSpec};

fn main() -> mnar_bounds::Result<()> {
    for spec in [ConditionalSpec::PointIdPreset, ConditionalSpec::PartialIdPreset] {
        let name = format!("{spec:?}");
        let dgp = illustrative_config(spec, 0, 0).resolve()?;
        let table = dgp.exact_table();
        let h = dgp.joint();
        let report = completeness_report(&table, Some(&h), Some(dgp.pi()))?;
        let sv: Vec<String> = report.b_spectrum.singular_values.iter().map(|s| format!("{s:.3e}")).collect();
        println!("{name}");
        println!("  rank B {}  rank H {:?}  complete {}", report.b_spectrum.rank, report.h_spectrum.as_ref().map(|s| s.rank), report.complete);
        println!("  singular values of B: {}", sv.join(" "));
        if let Some(b) = &report.bound {
            println!("  kappa(B) = {:?} <= {:?}: {}", b.lhs, b.rhs, b.holds);
        }
        match hoffman_constant(table.alpha()) {
            Ok(k) => println!("  Hoffman constant {k:.3}"),
            Err(e) => println!("  Hoffman constant unavailable: {e}"),
        }
    }
    Ok(())
}
