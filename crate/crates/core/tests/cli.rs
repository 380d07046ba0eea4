use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use srnf_lab::cli::RunManifest;

fn lab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_srnf-lab"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn srnf-lab")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn manifest(path: &Path) -> RunManifest {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn cylinder_pair_has_zero_distance() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert_eq!(code(&lab(d, &["gen", "cylinder", "--r", "2", "--n", "65", "--out", "g"])), 0);
    let out = lab(d, &["dist", "g/cylinder_f1.json", "g/cylinder_f2.json", "--max-relative", "1e-10", "--out", "r"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("r/dist.json")).unwrap()).unwrap();
    assert!(report["relative_distance"].as_f64().unwrap() <= 1e-10);
    assert_eq!(report["alignment"]["congruent"], false);
    let m = manifest(&d.join("r/dist.manifest.json"));
    assert_eq!(m.inputs.len(), 2);
    assert_eq!(m.outputs[0].sha256.len(), 64);
}

#[test]
fn distinct_surfaces_fail_a_distance_bound() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert_eq!(code(&lab(d, &["gen", "sphere", "--n", "17", "--out", "g"])), 0);
    assert_eq!(code(&lab(d, &["gen", "ellipsoid", "--n", "17", "--axes", "1,1,1.2", "--out", "g"])), 0);
    let out = lab(d, &["dist", "g/sphere.json", "g/ellipsoid.json", "--max-relative", "1e-3", "--no-align", "--out", "r"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn flipped_fixture_is_flagged() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert_eq!(code(&lab(d, &["gen", "sphere", "--n", "17", "--out", "g"])), 0);
    assert_eq!(code(&lab(d, &["srnf", "g/sphere.json", "--out", "g"])), 0);
    let args = ["verify", "--fixture", "g/sphere.json", "--field", "g/sphere.field.json", "--out", "v"];
    assert_eq!(code(&lab(d, &args)), 0);

    let path = d.join("g/sphere.json");
    let text = fs::read_to_string(&path).unwrap();
    assert!(text.contains("\"positive\""));
    fs::write(&path, text.replace("\"positive\"", "\"negative\"")).unwrap();
    assert_eq!(code(&lab(d, &args)), 2);
    let card: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("v/scorecard.json")).unwrap()).unwrap();
    assert_eq!(card["passed"], false);
}

#[test]
fn outputs_are_deterministic_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let one = Command::new(env!("CARGO_BIN_EXE_srnf-lab"))
        .current_dir(d)
        .env("SRNF_LAB_THREADS", "1")
        .args(["gen", "paraboloid", "--a", "1", "--b", "4", "--n", "33", "--out", "a"])
        .status()
        .unwrap();
    assert!(one.success());
    assert_eq!(code(&lab(d, &["--threads", "3", "gen", "paraboloid", "--a", "1", "--b", "4", "--n", "33", "--out", "b"])), 0);
    let (ma, mb) = (manifest(&d.join("a/gen.manifest.json")), manifest(&d.join("b/gen.manifest.json")));
    let digests = |m: &RunManifest| m.outputs.iter().map(|o| o.sha256.clone()).collect::<Vec<_>>();
    assert_eq!(digests(&ma), digests(&mb));
    assert!(!ma.outputs.is_empty());
}

#[test]
fn moser_demo_passes_and_routing_failure_is_numerical() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(
        d.join("flat.json"),
        r#"{"flat": {"outer": {"center": [0, 0], "radius": 1}, "inner": [{"center": [-0.4, 0], "radius": 0.15}]},
            "translations": [[0.6, 0.1]], "mesh_spacing": 0.05}"#,
    )
    .unwrap();
    assert_eq!(code(&lab(d, &["moser", "flat.json", "--out", "m"])), 0);
    let cert: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("m/certificate.json")).unwrap()).unwrap();
    assert!(cert["max_detJ_dev"].as_f64().unwrap() <= 1e-4);
    let nodes = fs::metadata(d.join("m/nodes.bin")).unwrap().len();
    assert_eq!(nodes, fs::metadata(d.join("m/displacement.bin")).unwrap().len());

    fs::write(
        d.join("swap.json"),
        r#"{"flat": {"outer": {"center": [0, 0], "radius": 1},
                     "inner": [{"center": [-0.5, 0], "radius": 0.2}, {"center": [0.5, 0], "radius": 0.2}]},
            "translations": [[1.0, 0.0], [-1.0, 0.0]], "collar_width": 0.02, "mesh_spacing": 0.08}"#,
    )
    .unwrap();
    assert_eq!(code(&lab(d, &["moser", "swap.json", "--out", "s"])), 4);
}

#[test]
fn invalid_specs_are_input_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("bad.json"), r#"{"discs": 3}"#).unwrap();
    assert_eq!(code(&lab(d, &["gen", "chessboard", "--spec", "bad.json", "--out", "c"])), 3);
    assert_eq!(code(&lab(d, &["moser", "missing.json"])), 3);
    assert_eq!(code(&lab(d, &["gen", "torus"])), 3);
}

#[test]
fn report_writes_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert_eq!(code(&lab(d, &["report", "--resolutions", "17", "--out", "r"])), 0);
    let csv = fs::read_to_string(d.join("r/distance_vs_resolution.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    let hist = fs::read_to_string(d.join("r/detj_histogram.csv")).unwrap();
    assert!(hist.starts_with("log10_dev_lo"));
}
