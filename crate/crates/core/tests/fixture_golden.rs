use std::path::Path;

use nowcast::fixture::{build_fixture, write_fixture, FIXTURE_SEED};

#[test]
fn regenerated_fixture_matches_checked_in_files() {
    let tmp = tempfile::tempdir().unwrap();
    write_fixture(&build_fixture(FIXTURE_SEED), tmp.path()).unwrap();
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    for name in ["panel.csv", "target.csv", "schema.json", "truth.csv"] {
        let want = std::fs::read(golden.join(name)).unwrap();
        let got = std::fs::read(tmp.path().join(name)).unwrap();
        assert!(want == got, "{name} differs; rerun the make_fixture example");
    }
}
