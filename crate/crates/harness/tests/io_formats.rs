use std::path::Path;

use wrapped_spd::classify::{fit_mdm, fit_tsda, fit_wda, DaKind, LabeledSpdDataset};
use wrapped_spd::estimate::MleOptions;
use wrapped_spd::wgauss::{minimal_representative, sample, translate_class};
use wrapped_spd::{CovKind, SpdMat};
use wrapped_spd_harness::io::{self, DataFormat};
use wrapped_spd_harness::synth::{random_spd, random_wg_params};
use wrapped_spd_harness::HarnessError;

fn dataset(n: usize, d: usize, classes: usize) -> LabeledSpdDataset {
    let items = (0..n)
        .map(|i| (random_spd(d, 0.1, 1.0, i as u64).unwrap(), i % classes))
        .collect();
    LabeledSpdDataset::new(items, Some(classes)).unwrap()
}

#[test]
fn round_trip_is_exact_in_both_formats() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(100, 3, 3);
    for name in ["d.jsonl", "d.csv"] {
        let path = dir.path().join(name);
        io::save_dataset(&path, &data).unwrap();
        assert_eq!(io::load_dataset(&path).unwrap(), data, "{name}");
    }
}

#[test]
fn csv_and_jsonl_encodings_agree() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(30, 4, 2);
    let csv = dir.path().join("a.csv");
    let jsonl = dir.path().join("a.jsonl");
    std::fs::write(&csv, io::dataset_to_string(&data, DataFormat::Csv).unwrap()).unwrap();
    std::fs::write(&jsonl, io::dataset_to_string(&data, DataFormat::JsonLines).unwrap()).unwrap();
    assert_eq!(io::load_dataset(&csv).unwrap(), io::load_dataset(&jsonl).unwrap());
}

#[test]
fn hand_written_files_parse() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("h.csv");
    std::fs::write(&csv, "# label, a11, a12, a22\n0, 2, 0.5, 1\n1, 1, 0, 3\n").unwrap();
    let jsonl = dir.path().join("h.jsonl");
    std::fs::write(
        &jsonl,
        "{\"d\": 2, \"classes\": 2}\n{\"label\": 0, \"matrix\": [[2, 0.5], [0.5, 1]]}\n\n{\"label\": 1, \"matrix\": [[1, 0], [0, 3]]}\n",
    )
    .unwrap();
    let a = io::load_dataset(&csv).unwrap();
    assert_eq!(a, io::load_dataset(&jsonl).unwrap());
    assert_eq!(a.items()[1].0, SpdMat::from_diagonal(&[1.0, 3.0]).unwrap());
}

fn format_error(path: &Path) -> (Option<usize>, String) {
    match io::load_dataset(path) {
        Err(HarnessError::Format { line, message, .. }) => (line, message),
        other => panic!("expected a format error, got {other:?}"),
    }
}

#[test]
fn negative_eigenvalue_names_the_record() {
    let dir = tempfile::tempdir().unwrap();
    let jsonl = dir.path().join("bad.jsonl");
    std::fs::write(
        &jsonl,
        "{\"d\": 2, \"classes\": 1}\n{\"label\": 0, \"matrix\": [[1, 0], [0, 1]]}\n{\"label\": 0, \"matrix\": [[1, 2], [2, 1]]}\n",
    )
    .unwrap();
    let (line, msg) = format_error(&jsonl);
    assert_eq!(line, Some(3));
    assert!(msg.contains("record 1"), "{msg}");

    let csv = dir.path().join("bad.csv");
    std::fs::write(&csv, "0,1,0,1\n0,1,0,1\n0,-1,0,1\n").unwrap();
    let (line, msg) = format_error(&csv);
    assert_eq!(line, Some(3));
    assert!(msg.contains("record 2"), "{msg}");
    let err = io::load_dataset(&csv).unwrap_err();
    assert_eq!(err.exit_code(), 4);
}

#[test]
fn schema_violations_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("asym.jsonl", "{\"d\": 2, \"classes\": 1}\n{\"label\": 0, \"matrix\": [[1, 0.1], [0, 1]]}\n"),
        ("label.jsonl", "{\"d\": 2, \"classes\": 1}\n{\"label\": 1, \"matrix\": [[1, 0], [0, 1]]}\n"),
        ("shape.jsonl", "{\"d\": 2, \"classes\": 1}\n{\"label\": 0, \"matrix\": [[1]]}\n"),
        ("header.jsonl", "{\"label\": 0, \"matrix\": [[1]]}\n"),
        ("count.csv", "0,1,0\n"),
        ("mixed.csv", "0,1,0,1\n0,1\n"),
        ("text.csv", "0,1,x,1\n"),
        ("empty.csv", "# nothing\n"),
    ];
    for (name, text) in cases {
        let p = dir.path().join(name);
        std::fs::write(&p, text).unwrap();
        assert!(matches!(io::load_dataset(&p), Err(HarnessError::Format { .. })), "{name}");
    }
    let tiny_asym = dir.path().join("tiny.jsonl");
    std::fs::write(&tiny_asym, "{\"d\": 2, \"classes\": 1}\n{\"label\": 0, \"matrix\": [[1, 1e-12], [0, 1]]}\n").unwrap();
    let loaded = io::load_dataset(&tiny_asym).unwrap();
    let x = &loaded.items()[0].0;
    assert_eq!(x.as_matrix()[(0, 1)], x.as_matrix()[(1, 0)]);
    assert!(matches!(io::load_dataset(&dir.path().join("missing.csv")), Err(HarnessError::Io { .. })));
}

#[test]
fn params_are_saved_as_minimal_representatives() {
    let dir = tempfile::tempdir().unwrap();
    for kind in [CovKind::Full, CovKind::Diagonal] {
        let theta = random_wg_params(3, kind, 4).unwrap();
        let path = dir.path().join("p.json");
        io::save_params(&path, &theta).unwrap();
        assert_eq!(io::load_params(&path).unwrap(), theta);

        io::save_params(&path, &translate_class(&theta, 0.7)).unwrap();
        let back = io::load_params(&path).unwrap();
        let expect = minimal_representative(&translate_class(&theta, 0.7));
        assert_eq!(back, expect);
    }
}

#[test]
fn models_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let a = random_wg_params(2, CovKind::Full, 1).unwrap();
    let b = random_wg_params(2, CovKind::Full, 2).unwrap();
    let mut items: Vec<_> = sample(&a, 40, 1).unwrap().into_iter().map(|x| (x, 0)).collect();
    items.extend(sample(&b, 40, 2).unwrap().into_iter().map(|x| (x, 1)));
    let data = LabeledSpdDataset::new(items, None).unwrap();
    let opts = MleOptions::default();
    let models = [
        fit_mdm(&data).unwrap(),
        fit_tsda(&data, DaKind::Lda, false).unwrap(),
        fit_tsda(&data, DaKind::Qda, true).unwrap(),
        fit_wda(&data, true, &opts).unwrap(),
        fit_wda(&data, false, &MleOptions { cov_kind: CovKind::Diagonal, ..opts.clone() }).unwrap(),
    ];
    let path = dir.path().join("m.json");
    for m in models {
        io::save_model(&path, &m).unwrap();
        let back = io::load_model(&path).unwrap();
        for (x, _) in data.items() {
            assert_eq!(back.predict_log_proba(x).unwrap(), m.predict_log_proba(x).unwrap());
        }
    }
}

#[test]
fn series_files_with_and_without_header() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    std::fs::write(&a, "c1,c2\n1,2\n3,5\n4,4\n").unwrap();
    std::fs::write(&b, "1,2\n3,5\n4,4\n").unwrap();
    let sa = io::load_series(&a).unwrap();
    assert_eq!(sa.shape(), (3, 2));
    assert_eq!(sa, io::load_series(&b).unwrap());
}

#[test]
fn ill_conditioned_params_reload() {
    let dir = tempfile::tempdir().unwrap();
    let p = SpdMat::from_diagonal(&[1e7, 1e-7]).unwrap();
    let theta = wrapped_spd::WgParams::new(p, nalgebra::DVector::zeros(3), wrapped_spd::CovSpec::identity(3)).unwrap();
    let path = dir.path().join("p.json");
    io::save_params(&path, &theta).unwrap();
    assert_eq!(io::load_params(&path).unwrap(), minimal_representative(&theta));
}
