use std::path::PathBuf;

use dialschema::pack::{load_pack, parse_tree_tests, run_tree_tests, validate_pack};

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../packs/sophie")
}

#[test]
fn persona_pack_validates_cleanly() {
    let (pack, diags) = validate_pack(&root());
    for d in &diags {
        eprintln!("{d}");
    }
    assert!(pack.is_some());
    assert!(diags.iter().all(|d| !d.is_error()));
}

#[test]
fn interpretation_corpus_passes() {
    let pack = load_pack(&root()).unwrap();
    assert!(pack.corpus.len() >= 10);
    let bad = pack.check_corpus();
    assert!(bad.is_empty(), "{bad:#?}");
}

#[test]
fn tree_tests_pass() {
    let pack = load_pack(&root()).unwrap();
    let text = std::fs::read_to_string(root().join("tests/trees.tsv")).unwrap();
    let tests = parse_tree_tests(&text).unwrap();
    let bad = run_tree_tests(&pack.trees, &tests);
    assert!(bad.is_empty(), "{bad:#?}");
}
