//! Regenerates the bundled fixture files under `fixtures/`.

use std::path::PathBuf;

use nowcast::fixture::{build_fixture, write_fixture, FIXTURE_SEED};

fn main() {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures"));
    write_fixture(&build_fixture(FIXTURE_SEED), &dir).expect("write fixture");
    println!("wrote {}", dir.display());
}
