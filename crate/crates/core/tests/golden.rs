use std::path::PathBuf;

use realign_core::embedding::{EmbeddingMatrix, MatrixKind};
use realign_core::io::{self, Artifact};
use realign_core::prompts::{construct, load_templates, PromptSetSpec, SetKind, SurfaceForm};
use realign_core::Error;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn golden_matrix() -> EmbeddingMatrix {
    EmbeddingMatrix::from_rows(
        vec![vec![1.0, -2.5], vec![0.125, 3.0], vec![-0.75, 1024.0]],
        MatrixKind::EmbeddingSet,
    )
    .unwrap()
    .with_labels(vec!["alpha", "beta", "gamma"])
    .unwrap()
}

#[test]
#[ignore = "regenerates the checked-in fixture"]
fn regenerate_golden_set() {
    io::write(&Artifact::Matrix(golden_matrix()), fixture("golden_set")).unwrap();
}

#[test]
fn golden_data_bytes_match_hand_encoding() {
    let bytes = std::fs::read(fixture("golden_set/data.bin")).unwrap();
    let expected: [u8; 24] = [
        0x00, 0x00, 0x80, 0x3f, 0x00, 0x00, 0x20, 0xc0, 0x00, 0x00, 0x00, 0x3e, //
        0x00, 0x00, 0x40, 0x40, 0x00, 0x00, 0x40, 0xbf, 0x00, 0x00, 0x80, 0x44,
    ];
    assert_eq!(bytes, expected);
}

#[test]
fn golden_set_reads_back() {
    assert_eq!(
        io::read(fixture("golden_set")).unwrap(),
        Artifact::Matrix(golden_matrix())
    );
}

#[test]
fn writer_reproduces_golden_files() {
    let dir = tempfile::tempdir().unwrap();
    io::write(&Artifact::Matrix(golden_matrix()), dir.path()).unwrap();
    for file in [io::MANIFEST_FILE, io::DATA_FILE] {
        assert_eq!(
            std::fs::read(dir.path().join(file)).unwrap(),
            std::fs::read(fixture("golden_set").join(file)).unwrap(),
            "{file}"
        );
    }
}

#[test]
fn template_fixture_builds_paired_sets() {
    let templates = load_templates(fixture("templates.txt")).unwrap();
    assert_eq!(templates.len(), 4);
    let spec = PromptSetSpec::new(templates, "sks", "dog", SetKind::Contextual).unwrap();
    let a = construct(&spec, SurfaceForm::Keyword).unwrap();
    let b = construct(&spec, SurfaceForm::Concept).unwrap();
    assert_eq!(a[0], "a photo of sks on a wooden bench in a quiet park");
    assert_eq!(b[3], "dog reading a newspaper inside a crowded train");
}

#[test]
fn malformed_template_fixture_reports_line() {
    let err = load_templates(fixture("bad_templates.txt")).unwrap_err();
    assert!(matches!(err, Error::MalformedTemplate { line: Some(1), .. }), "{err:?}");
}
