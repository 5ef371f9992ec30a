use std::io::Write;

use fracpat_core::acceptance::{run_suite, CRITERIA};

#[test]
fn acceptance_suite() {
    let ids: Vec<u8> = CRITERIA.iter().map(|c| c.0).collect();
    // written to the raw handle so the lines survive output capture
    let outcomes = run_suite(&ids, |o| {
        let _ = writeln!(std::io::stderr(), "{o}");
    });
    let failed: Vec<u8> = outcomes.iter().filter(|o| !o.passed).map(|o| o.id).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
