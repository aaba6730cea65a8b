//! Build a small sparse ODM and read cells and marginals from it.

use chrono::NaiveDate;
use odm_anomaly::{SparseOdm, TimeWindow};

fn main() -> odm_anomaly::Result<()> {
    let window = TimeWindow::full_day(NaiveDate::from_ymd_opt(2020, 3, 9).unwrap());
    let odm = SparseOdm::from_triples(
        window,
        [
            ("centre", "north", 120),
            ("centre", "centre", 400),
            ("north", "centre", 95),
            ("north", "south", 30),
            ("south", "centre", 60),
            ("south", "north", 0),
        ],
    )?;

    println!("{window}: {} stored cells, {} movements", odm.len(), odm.mass());
    println!("off-diagonal movements: {}", odm.off_diagonal_mass());
    for area in odm.areas() {
        println!(
            "{:>7}  out {:>4} (with stayers {:>4})   in {:>4} (with stayers {:>4})",
            area.as_str(),
            odm.outbound_excl_diag(&area),
            odm.outbound_incl_diag(&area),
            odm.inbound_excl_diag(&area),
            odm.inbound_incl_diag(&area),
        );
    }
    for (key, value) in odm.all_marginals_excl_diag() {
        println!("{key} = {value}");
    }
    Ok(())
}
