//! The command line driven in-process: phantom, preprocess, train,
//! generate, evaluate and inspect, with their exit codes and manifests.

use std::path::Path;

use alphagan::cli::dispatch;
use alphagan::manifest::read_manifest;
use alphagan::nifti::read_nifti;
use alphagan::report::REPORT_HEADER;

fn run(args: &[&str]) -> i32 {
    dispatch(std::iter::once("alphagan").chain(args.iter().copied()))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn full_pipeline_through_the_command_line() {
    let root = tempfile::tempdir().unwrap();
    let (data, prep, train, gen, eval) = (
        root.path().join("data"),
        root.path().join("prep"),
        root.path().join("train"),
        root.path().join("gen"),
        root.path().join("eval"),
    );

    assert_eq!(run(&["phantom", "--count", "4", "--shape", "16,16,12", "--seed", "5", "--out", s(&data)]), 0);
    let m = read_manifest(data.join("phantom.manifest")).unwrap();
    assert_eq!((m.command.as_str(), m.seed, m.outputs.len()), ("phantom", 5, 4));

    assert_eq!(run(&["preprocess", "--data", s(&data), "--flip", "x", "--out", s(&prep)]), 0);
    let p = read_nifti(prep.join("phantom_000.nii")).unwrap();
    assert_eq!(p.grid.dims(), [16; 3]);
    let (lo, hi) = p.grid.range();
    assert!((lo + 1.0).abs() < 1e-6 && (hi - 1.0).abs() < 1e-6);

    let train_args = ["train", "--data", s(&data), "--out", s(&train), "--iters", "2", "--batch", "2", "--seed", "9"];
    assert_eq!(run(&train_args), 0);
    let m = read_manifest(train.join("train.manifest")).unwrap();
    assert_eq!(m.seed, 9);
    assert!(m.config.iter().any(|(k, v)| k == "iterations" && v == "2"));
    let model = train.join("final.agan");
    assert!(model.exists());

    let reference = data.join("phantom_000.nii");
    assert_eq!(
        run(&["generate", "--model", s(&model), "--count", "2", "--reference", s(&reference), "--montage", "--out", s(&gen)]),
        0
    );
    let g = read_nifti(gen.join("generated_001.nii")).unwrap();
    assert_eq!(g.grid.dims(), [16, 16, 12]);
    assert!(g.grid.data().iter().all(|v| v.is_finite()));
    assert!(gen.join("generated_000.pgm").exists());
    assert_eq!(read_manifest(gen.join("generate.manifest")).unwrap().outputs.len(), 4);

    assert_eq!(
        run(&["evaluate", "--model", s(&model), "--real", s(&data), "--pairs-per-volume", "2", "--out", s(&eval)]),
        0
    );
    let report = std::fs::read_to_string(eval.join("report.csv")).unwrap();
    assert_eq!(report.lines().next(), Some(REPORT_HEADER));
    assert!(report.lines().nth(1).unwrap().starts_with("sigmarat2,"));
    assert!(eval.join("evaluate.manifest").exists());

    assert_eq!(run(&["inspect-checkpoint", s(&model)]), 0);
    assert!(!train.join("inspect-checkpoint.manifest").exists());
}

#[test]
fn failures_map_to_exit_codes() {
    let root = tempfile::tempdir().unwrap();
    assert_eq!(run(&["no-such-command"]), 2);
    assert_eq!(run(&["phantom", "--count", "x", "--out", s(root.path())]), 2);
    assert_eq!(run(&["phantom", "--shape", "1,2", "--out", s(root.path())]), 2);
    assert_eq!(run(&["inspect-checkpoint", s(&root.path().join("missing.agan"))]), 1);
    let empty = root.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    assert_eq!(run(&["train", "--data", s(&empty), "--out", s(&root.path().join("t"))]), 1);
    let one = root.path().join("one");
    assert_eq!(run(&["phantom", "--count", "1", "--shape", "8", "--out", s(&one)]), 0);
    assert_eq!(run(&["train", "--data", s(&one), "--out", s(&root.path().join("u")), "--set", "nonsense"]), 2);
    assert_eq!(run(&["train", "--data", s(&one), "--out", s(&root.path().join("v")), "--preset", "nope"]), 1);
}
