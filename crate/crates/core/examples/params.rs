//! Per-module parameter counts of both profiles next to the published totals.

use ssi_core::eval::report_profiles;

fn main() -> ssi_core::Result<()> {
    let reports = report_profiles()?;
    for r in &reports {
        print!("{}", r.render());
    }
    assert!(reports[1].total > reports[0].total);
    Ok(())
}
