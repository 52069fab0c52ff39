//! Renders the published comparison table from its fixture.

use deeprep::harness::{format_report, table_ii_fixture};

fn main() {
    print!("{}", format_report(&table_ii_fixture()));
}
