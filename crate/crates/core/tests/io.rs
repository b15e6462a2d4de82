use std::fs;
use std::path::Path;

use dlcr::gibbs::{run_chain, SamplerSchedule};
use dlcr::io::archive::{read_archive, read_params, write_archive, write_params};
use dlcr::io::summary::{write_fit_summary, write_manifest, FitReport, Manifest};
use dlcr::io::tables::{load_dataset, read_table, write_dataset, DatasetPaths};
use dlcr::model::{simulate_study, EntryKind, Hyperparams, ModelConfig, PriorConstraints};
use dlcr::postproc::{relabel, summarize, waic};
use dlcr::Error;
use tempfile::tempdir;

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn y_only(dir: &Path, text: &str) -> DatasetPaths {
    DatasetPaths { y: write(dir, "Y.csv", text), x: None, t: None }
}

#[test]
fn binary_outcomes_without_covariates_load() {
    let dir = tempdir().unwrap();
    let data = load_dataset(&y_only(dir.path(), "a,b\n0,1\n1,0\n"), None).unwrap();
    assert_eq!((data.n(), data.p()), (2, 2));
    assert_eq!(data.x.shape(), (2, 0));
    assert_eq!(data.t.shape(), (2, 0));
    assert_eq!(data.y[(0, 1)], 1);
}

#[test]
fn out_of_support_value_names_its_cell() {
    let dir = tempdir().unwrap();
    let err = load_dataset(&y_only(dir.path(), "a,b\n0,1\n1,2\n"), None).unwrap_err();
    match err {
        Error::OutOfSupport { row, col, ref value, .. } => assert_eq!((row, col, value.as_str()), (1, 1, "2")),
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(err.exit_code(), 3);
    let kinds = [EntryKind::Binary, EntryKind::Count];
    assert!(load_dataset(&y_only(dir.path(), "a,b\n0,7\n1,2\n"), Some(&kinds)).is_ok());
    let kinds = [EntryKind::Categorical(3), EntryKind::Count];
    assert!(matches!(
        load_dataset(&y_only(dir.path(), "a,b\n0,7\n1,2\n"), Some(&kinds)),
        Err(Error::OutOfSupport { row: 0, col: 0, .. })
    ));
}

#[test]
fn missing_and_ragged_rows_are_rejected() {
    let dir = tempdir().unwrap();
    for text in ["a,b\n0,NA\n1,0\n", "a,b\n0,\n1,0\n", "a,b\n0,1\n1\n"] {
        let err = load_dataset(&y_only(dir.path(), text), None).unwrap_err();
        assert!(matches!(err, Error::Data(_)), "{text:?}: {err:?}");
    }
    let paths = DatasetPaths {
        y: write(dir.path(), "Y.csv", "a\n0\n1\n1\n"),
        x: Some(write(dir.path(), "X.csv", "x1\n0.5\n1.5\n")),
        t: None,
    };
    assert!(matches!(load_dataset(&paths, None), Err(Error::DimensionMismatch(_))));
}

#[test]
fn tab_separated_tables_are_read_by_extension() {
    let dir = tempdir().unwrap();
    let t = read_table(&write(dir.path(), "m.tsv", "a\tb\n1\t2\n")).unwrap();
    assert_eq!(t.header, ["a", "b"]);
    assert_eq!(t.rows, [["1", "2"]]);
}

fn small_study() -> (ModelConfig, dlcr::model::Study) {
    let config = ModelConfig::binary(6, 2, 2, 1, 1);
    let hyper = Hyperparams::default_for(&config);
    let study = simulate_study(&config, &hyper, 30, 5, &PriorConstraints::default()).unwrap();
    (config, study)
}

#[test]
fn dataset_round_trips() {
    let (_, study) = small_study();
    let dir = tempdir().unwrap();
    let paths = write_dataset(dir.path(), &study.sim.data).unwrap();
    let back = load_dataset(&paths, None).unwrap();
    assert_eq!(back.y, study.sim.data.y);
    assert_eq!(back.x, study.sim.data.x);
    assert_eq!(back.t, study.sim.data.t);
}

#[test]
fn params_and_archives_round_trip() {
    let (config, study) = small_study();
    let dir = tempdir().unwrap();
    write_params(dir.path(), &[(0, 0, &study.truth)]).unwrap();
    assert_eq!(read_params(dir.path(), &config).unwrap(), study.truth);

    let hyper = Hyperparams::default_for(&config);
    let samples = run_chain(&study.sim.data, &config, &hyper, &SamplerSchedule::new(30, 20, 9), None).unwrap();
    let arch = dir.path().join("archive");
    write_archive(&arch, &samples).unwrap();
    let back = read_archive(&arch).unwrap();
    assert_eq!(back.params, samples.params);
    assert_eq!(back.z, samples.z);
    assert_eq!(back.w, samples.w);
    assert_eq!(back.loglik, samples.loglik);
    assert_eq!(back.iterations, samples.iterations);
    assert_eq!(back.config, samples.config);

    fs::write(arch.join("z.csv"), "sample,iteration,obs,class\n0,20,0,5\n").unwrap();
    assert!(matches!(read_archive(&arch), Err(Error::Data(_))));
}

#[test]
fn summaries_and_manifest_are_written_deterministically() {
    let (config, study) = small_study();
    let hyper = Hyperparams::default_for(&config);
    let run = |dir: &Path| {
        let samples = run_chain(&study.sim.data, &config, &hyper, &SamplerSchedule::new(30, 20, 4), None).unwrap();
        let (samples, relabeling) = relabel(&samples).unwrap();
        let summary = summarize(&samples).unwrap();
        let report = FitReport {
            q: 2,
            d: 2,
            n_samples: samples.len(),
            waic: waic(&samples.loglik).unwrap(),
            relabeling,
            refine_threshold: 2.0,
            mh_acceptance: samples.mh_acceptance.clone(),
            warnings: summary.warnings.clone(),
        };
        write_fit_summary(dir, &summary, &report).unwrap();
        write_manifest(dir, Manifest::new("fit", Some(4), &config).unwrap()).unwrap();
    };
    let (a, b) = (tempdir().unwrap(), tempdir().unwrap());
    run(a.path());
    run(b.path());
    for name in ["summary_alpha.csv", "summary_beta.csv", "summary_z.csv", "summary_w.csv", "fit.json", "manifest.json"]
    {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
    let z = read_table(&a.path().join("summary_z.csv")).unwrap();
    assert_eq!(z.header, ["obs", "z_mode", "prob_0", "prob_1"]);
    assert_eq!(z.rows.len(), 30);
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(a.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 8);
}
