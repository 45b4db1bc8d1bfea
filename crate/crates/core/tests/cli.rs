//! End-to-end exercises of the command-line surface through
//! `cli::run_from`, including exit codes, provenance records, and the
//! file formats the commands exchange.

use std::path::Path;

use sff_core::classic::DepthUnit;
use sff_core::cli::run_from;
use sff_core::metrics::MetricsReport;
use sff_core::stackio::{load_stack_from_manifest, read_depth, read_pfm, DepthFormat};

fn sff(args: &[&str]) -> i32 {
    let mut argv = vec!["sff".to_string()];
    argv.extend(args.iter().map(|s| s.to_string()));
    run_from(argv)
}

fn make_stack(dir: &Path) -> String {
    let out = dir.join("stack");
    let code = sff(&[
        "--seed", "42", "synth", "--h", "32", "--w", "32", "--s", "4", "--pattern", "staircase",
        "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    out.join("manifest.json").to_str().unwrap().to_string()
}

#[test]
fn synth_writes_stack_manifest_gt_and_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = make_stack(dir.path());
    let stack_dir = dir.path().join("stack");
    assert!(stack_dir.join("gt.pfm").exists());
    assert!(stack_dir.join("run.json").exists());
    assert!(stack_dir.join("slice_000.png").exists());
    let stack = load_stack_from_manifest(Path::new(&manifest)).unwrap();
    assert_eq!(stack.len(), 4);
    assert_eq!((stack.height(), stack.width()), (32, 32));
    let gt = read_pfm(&stack_dir.join("gt.pfm")).unwrap();
    assert_eq!(gt.dim(), (32, 32));
}

#[test]
fn depth_from_fv_dir_matches_direct_computation() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = make_stack(dir.path());
    let fv_dir = dir.path().join("fv");
    assert_eq!(
        sff(&["fv", "--manifest", &manifest, "--r", "2", "--out", fv_dir.to_str().unwrap()]),
        0
    );
    let d1 = dir.path().join("d1.pfm");
    let d2 = dir.path().join("d2.pfm");
    assert_eq!(
        sff(&["depth", "--fv", fv_dir.to_str().unwrap(), "--out", d1.to_str().unwrap()]),
        0
    );
    assert_eq!(
        sff(&["depth", "--manifest", &manifest, "--r", "2", "--out", d2.to_str().unwrap()]),
        0
    );
    // The fv directory stores f32 planes, but argmax indices must agree.
    assert_eq!(std::fs::read(&d1).unwrap(), std::fs::read(&d2).unwrap());
    assert!(d1.with_extension("pfm.run.json").exists() || {
        let mut p = d1.clone().into_os_string();
        p.push(".run.json");
        Path::new(&p).exists()
    });
}

#[test]
fn depth_in_distance_units_uses_the_table() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = make_stack(dir.path());
    let out = dir.path().join("dist.pfm");
    assert_eq!(
        sff(&[
            "depth", "--manifest", &manifest, "--r", "1", "--unit", "dist", "--out",
            out.to_str().unwrap(),
        ]),
        0
    );
    // Synthetic manifests use indices as distances, so values stay in range.
    let map = read_depth(&out, DepthFormat::Pfm, DepthUnit::FocalDistance).unwrap();
    assert!(map.values.iter().all(|&v| (0.0..=3.0).contains(&v)));
}

#[test]
fn pipeline_writes_all_artifacts_and_report_parses() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = make_stack(dir.path());
    let gt = dir.path().join("stack/gt.pfm");
    let out = dir.path().join("pipe");
    assert_eq!(
        sff(&[
            "pipeline", "--manifest", &manifest, "--r", "4", "--cumulative", "--eval",
            gt.to_str().unwrap(), "--out", out.to_str().unwrap(),
        ]),
        0
    );
    for f in ["depth.pfm", "aif.png", "report.json", "run.json"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let report: MetricsReport =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert!(report.valid_pixel_count == 32 * 32);
    assert!(report.rms.is_finite());
}

#[test]
fn noise_output_is_a_loadable_stack() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = make_stack(dir.path());
    let out = dir.path().join("noisy");
    assert_eq!(
        sff(&[
            "--seed", "7", "noise", "--manifest", &manifest, "--kind", "salt_pepper", "--param",
            "0.01", "--out", out.to_str().unwrap(),
        ]),
        0
    );
    let noisy = load_stack_from_manifest(&out.join("manifest.json")).unwrap();
    assert_eq!(noisy.len(), 4);
    let clean = load_stack_from_manifest(Path::new(&manifest)).unwrap();
    let differing = clean
        .slice(0)
        .plane(0)
        .iter()
        .zip(noisy.slice(0).plane(0).iter())
        .filter(|(a, b)| a != b)
        .count();
    assert!(differing > 0, "noise changed nothing");
}

#[test]
fn fmcurve_csv_has_header_and_one_row_per_slice() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = make_stack(dir.path());
    let fv_dir = dir.path().join("fv");
    assert_eq!(
        sff(&["fv", "--manifest", &manifest, "--r", "1", "--out", fv_dir.to_str().unwrap()]),
        0
    );
    let csv_path = dir.path().join("curve.csv");
    assert_eq!(
        sff(&[
            "fmcurve", "--fv", fv_dir.to_str().unwrap(), "--px", "5,6", "--out",
            csv_path.to_str().unwrap(),
        ]),
        0
    );
    let text = std::fs::read_to_string(&csv_path).unwrap();
    let lines: Vec<&str> = text.trim().lines().collect();
    assert_eq!(lines[0], "slice_index,focus_value");
    assert_eq!(lines.len(), 1 + 4, "one row per slice");
    assert!(lines[1].starts_with("0,"));
}

#[test]
fn exit_codes_match_error_classes() {
    let dir = tempfile::tempdir().unwrap();
    // Missing manifest: I/O error contract.
    assert_eq!(
        sff(&["fv", "--manifest", "/no/such/manifest.json", "--out",
            dir.path().join("x").to_str().unwrap()]),
        2
    );
    // Validation: conflicting source flags.
    assert_eq!(sff(&["depth", "--out", dir.path().join("d.pfm").to_str().unwrap()]), 1);
    // Validation: zero repetitions.
    assert_eq!(sff(&["timeit", "--reps", "0", "kernels", "dump", "--theta", "0"]), 1);
    // Help exits cleanly.
    assert_eq!(sff(&["--help"]), 0);
    assert_eq!(sff(&["kernels", "dump", "--r", "2", "--theta", "90"]), 0);
    // Unknown orientation is a validation error.
    assert_eq!(sff(&["kernels", "dump", "--r", "2", "--theta", "30"]), 1);
}

#[test]
fn run_json_replays_to_identical_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = make_stack(dir.path());
    let out1 = dir.path().join("a");
    assert_eq!(
        sff(&["--seed", "3", "noise", "--manifest", &manifest, "--kind", "gaussian", "--param",
            "0.001", "--out", out1.to_str().unwrap()]),
        0
    );
    let record: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out1.join("run.json")).unwrap()).unwrap();
    // Replay the recorded argv with a different output directory.
    let out2 = dir.path().join("b");
    let mut argv: Vec<String> = record["argv"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect();
    for a in argv.iter_mut() {
        if a == out1.to_str().unwrap() {
            *a = out2.to_str().unwrap().to_string();
        }
    }
    let mut full = vec!["sff".to_string()];
    full.extend(argv);
    assert_eq!(run_from(full), 0);
    for entry in std::fs::read_dir(&out1).unwrap() {
        let name = entry.unwrap().file_name();
        if name == "run.json" {
            continue; // provenance carries wall time
        }
        let a = std::fs::read(out1.join(&name)).unwrap();
        let b = std::fs::read(out2.join(&name)).unwrap();
        assert_eq!(a, b, "artifact {name:?} differs under replay");
    }
}

#[test]
fn timeit_records_mean_and_stddev() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = make_stack(dir.path());
    let fv_dir = dir.path().join("fv");
    assert_eq!(
        sff(&["timeit", "--reps", "2", "fv", "--manifest", &manifest, "--r", "1", "--out",
            fv_dir.to_str().unwrap()]),
        0
    );
    let record: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(fv_dir.join("run.json")).unwrap()).unwrap();
    assert_eq!(record["timing"]["repetitions"], 2);
    assert!(record["timing"]["mean_seconds"].as_f64().unwrap() > 0.0);
    assert!(record["timing"]["stddev_seconds"].as_f64().unwrap() >= 0.0);
}

#[test]
fn refine_cli_round_trips_weights() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = make_stack(dir.path());
    let d1 = dir.path().join("r1.pfm");
    let d2 = dir.path().join("r2.pfm");
    let weights = dir.path().join("w.sffw");
    assert_eq!(
        sff(&["--seed", "5", "refine", "--manifest", &manifest, "--iters", "1", "--rates", "1",
            "--out", d1.to_str().unwrap(), "--save-weights", weights.to_str().unwrap()]),
        0
    );
    assert_eq!(
        sff(&["refine", "--manifest", &manifest, "--iters", "1", "--rates", "1", "--out",
            d2.to_str().unwrap(), "--load-weights", weights.to_str().unwrap()]),
        0
    );
    assert_eq!(std::fs::read(&d1).unwrap(), std::fs::read(&d2).unwrap());
}
