//! Every end-to-end check, with a reduced number of randomized cases.

use wcd::report::{run_report, ReportOptions};

fn main() -> wcd::error::Result<()> {
    let mut opts = ReportOptions::new(std::env::temp_dir().join("wcd-report"));
    opts.property_cases = 200;
    let report = run_report(&opts)?;
    print!("{}", report.table());
    std::process::exit(if report.passed() { 0 } else { 2 });
}
