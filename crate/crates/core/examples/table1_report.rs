//! Averages of the bundled published results table and the
//! aggregated-vs-individual LLM comparison.
//!
//!     cargo run --example table1_report

use hardneg::mixer::default_llm_labels;
use hardneg::report::{aggregate_table, compare_aggregated_vs_individual, families, render_comparisons, within_half_milli, CellsFile};

fn main() -> hardneg::Result<()> {
    let cells = CellsFile::bundled_table1();
    let table = aggregate_table(&cells)?;
    print!("{}", table.render());

    let fams = families(&default_llm_labels());
    let computed = compare_aggregated_vs_individual(&table.averages(), &fams)?;
    let reported = compare_aggregated_vs_individual(&cells.reported_averages(), &fams)?;
    print!("{}", render_comparisons("computed averages", &computed));
    print!("{}", render_comparisons("reported averages", &reported));

    for row in &table.rows {
        if let Some(rep) = row.reported_avg {
            if !within_half_milli(row.average, rep) {
                println!("{}: cells average {:.4}, reported {rep}", row.config, row.average);
            }
        }
    }
    Ok(())
}
