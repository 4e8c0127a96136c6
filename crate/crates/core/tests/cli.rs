mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use facemanip::features::{save_features, FeatureRow};
use facemanip::metrics::{cross_matrix, load_report, CrossCell};
use facemanip::tripletnet::EmbeddingPoint;
use facemanip::Label;

fn cli(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_facemanip"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn synth_writes_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(dir.path(), &["synth", "--n-real", "50", "--n-fake", "50", "--seed", "7", "--out", "d/"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let m = facemanip::load_manifest(&dir.path().join("d/manifest.csv")).unwrap();
    assert_eq!(m.len(), 100);
}

#[test]
fn synth_refuses_to_clobber_without_overwrite() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["synth", "--n-real", "2", "--n-fake", "2", "--image-size", "16", "--out", "d"];
    assert_eq!(cli(dir.path(), &args).status.code(), Some(0));
    let again = cli(dir.path(), &args);
    assert_eq!(again.status.code(), Some(1));
    assert!(stderr(&again).contains("--overwrite"));
    let mut forced = args.to_vec();
    forced.push("--overwrite");
    assert_eq!(cli(dir.path(), &forced).status.code(), Some(0));
}

#[test]
fn eval_without_scores_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(dir.path(), &["eval"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage"));
}

#[test]
fn unknown_command_and_flag_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(cli(dir.path(), &["dance"]).status.code(), Some(2));
    assert_eq!(cli(dir.path(), &["plot", "--colour", "red"]).status.code(), Some(2));
}

#[test]
fn help_lists_every_command_and_global_flag() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(dir.path(), &["--help"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    for word in [
        "ingest", "synth", "train", "extract", "classify", "eval", "cross", "ablate", "plot",
        "--seed", "--config", "--overwrite",
    ] {
        assert!(text.contains(word), "help lacks {word}");
    }
    let o = cli(dir.path(), &["ingest", "--help"]);
    for flag in ["--stride", "--crop-size", "--detector"] {
        assert!(stdout(&o).contains(flag), "ingest help lacks {flag}");
    }
}

#[test]
fn runtime_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(dir.path(), &["eval", "--scores", "missing.csv"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn eval_recomputes_a_score_file() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("s.csv"),
        "id,label,score\na,0,0.1\nb,0,0.4\nc,1,0.35\nd,1,0.8\n",
    )
    .unwrap();
    let o = cli(dir.path(), &["eval", "--scores", "s.csv", "--report", "r.json"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("auc               0.750000"));
    assert_eq!(load_report(&dir.path().join("r.json")).unwrap().auc, 0.75);
}

fn write_features(path: &Path, dim: usize) {
    let mut rows = Vec::new();
    for i in 0..10 {
        for (label, sign) in [(Label::Real, -1.0), (Label::Fake, 1.0)] {
            let mut coords = vec![sign, 0.01 * i as f64];
            coords.resize(dim, 0.0);
            rows.push(FeatureRow {
                id: format!("{label}{i}"),
                point: EmbeddingPoint::new(coords),
                label,
            });
        }
    }
    save_features(&rows, path).unwrap();
}

#[test]
fn plot_writes_svg_and_points_and_prints_silhouette() {
    let dir = tempfile::tempdir().unwrap();
    write_features(&dir.path().join("f.csv"), 2);
    let o = cli(dir.path(), &["plot", "--features", "f.csv", "--out", "p.svg"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let svg = fs::read_to_string(dir.path().join("p.svg")).unwrap();
    assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));
    let points = fs::read_to_string(dir.path().join("p_points.csv")).unwrap();
    assert_eq!(points.lines().count(), 21);
    let s: f64 = stdout(&o)
        .rsplit(' ')
        .next()
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    assert!(s > 0.9, "{s}");
}

#[test]
fn plot_rejects_three_dimensional_features() {
    let dir = tempfile::tempdir().unwrap();
    write_features(&dir.path().join("f.csv"), 3);
    let o = cli(dir.path(), &["plot", "--features", "f.csv", "--out", "p.svg"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("reduce"), "{}", stderr(&o));
}

#[test]
fn staged_commands_chain_into_an_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("c.cfg"), "crop_size = 24\nstage1_epochs = 1\nstage2_epochs = 2\n").unwrap();
    let steps: [&[&str]; 5] = [
        &["synth", "--n-real", "6", "--n-fake", "6", "--image-size", "24", "--out", "d"],
        &["train", "--manifest", "d/manifest.csv", "--out", "b.json"],
        &["extract", "--backbone", "b.json", "--manifest", "d/manifest.csv", "--split", "train", "--out", "f.csv"],
        &["classify", "--features", "f.csv", "--out", "c.json"],
        &["eval", "--backbone", "b.json", "--classifier", "c.json", "--manifest", "d/manifest.csv", "--scores", "s.csv"],
    ];
    for step in steps {
        let mut args = vec!["--config", "c.cfg", "--seed", "3"];
        args.extend_from_slice(step);
        let o = cli(d, &args);
        assert_eq!(o.status.code(), Some(0), "{step:?}: {}", stderr(&o));
    }
    assert!(d.join("b.json.log").exists());
    assert_eq!(fs::read_to_string(d.join("s.csv")).unwrap().lines().count(), 5);
    assert!(load_report(&d.join("s.json")).is_ok());
}

#[test]
fn cross_prints_the_table_built_from_the_reports() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let names = ["warp", "blur", "noise"];
    for (name, kind) in names.iter().zip(["warp_patch", "blur_patch", "noise_patch"]) {
        let o = cli(
            d,
            &["synth", "--n-real", "5", "--n-fake", "5", "--image-size", "16", "--kind", kind,
              "--dataset", name, "--out", name],
        );
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let evals = names.map(|n| format!("{n}/manifest.csv")).join(", ");
    let mut args = vec!["--seed".to_string(), "2".into(), "cross".into()];
    for n in names {
        fs::write(
            d.join(format!("{n}.plan")),
            format!(
                "train_manifest = {n}/manifest.csv\neval_manifests = {evals}\noutput_dir = run\n\
                 crop_size = 16\nstage1_epochs = 1\nstage2_epochs = 2\n"
            ),
        )
        .unwrap();
        args.push("--plan".into());
        args.push(format!("{n}.plan"));
    }
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    let o = cli(d, &args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let mut cells = Vec::new();
    for train in names {
        for test in names {
            let report = load_report(&d.join(format!("run/reports/{train}__{test}.json"))).unwrap();
            cells.push(CrossCell {
                train: train.into(),
                test: test.into(),
                report,
            });
        }
    }
    assert_eq!(stdout(&o), cross_matrix(&cells));
    assert_eq!(stdout(&o).lines().count(), 5);
}

#[test]
fn seeded_commands_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for out in ["a", "b"] {
        let o = cli(d, &["--seed", "11", "synth", "--n-real", "3", "--n-fake", "3", "--image-size", "16", "--out", out]);
        assert_eq!(o.status.code(), Some(0));
    }
    for name in ["real_00000.png", "fake_00002.png"] {
        assert_eq!(
            fs::read(d.join("a/images").join(name)).unwrap(),
            fs::read(d.join("b/images").join(name)).unwrap()
        );
    }
}
