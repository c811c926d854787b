use std::path::Path;
use std::process::{Command, Output};

use segloc::eval::{parse_scored_pairs, roc_auc, RocCurve};
use segloc::io::{load_cloud, load_map, CloudFormat};
use segloc::pipeline::{Pipeline, PipelineConfig};

fn segloc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_segloc")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

const SETTINGS: &[&str] = &[
    "--descriptor",
    "eigen",
    "--k",
    "5",
    "--set",
    "cluster_tolerance=0.5",
    "--set",
    "min_points=50",
    "--set",
    "max_points=1000000",
    "--set",
    "ground_removal=none",
    "--set",
    "max_iterations=5000",
];

fn config() -> PipelineConfig {
    let mut c = PipelineConfig::default();
    for (k, v) in [("descriptor", "eigen"), ("k", "5"), ("cluster_tolerance", "0.5"), ("min_points", "50"), ("max_points", "1000000"), ("ground_removal", "none"), ("max_iterations", "5000")] {
        c.set(k, v).unwrap();
    }
    c
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

fn world(dir: &Path) {
    stdout(&segloc(&["synth-world", "--out-dir", &p(dir, "w"), "--seed", "5", "--primitives", "40", "--views", "2", "--decoys", "1"]));
}

fn with(base: &[&str], extra: &[&str]) -> Vec<String> {
    base.iter().chain(extra).map(|s| s.to_string()).collect()
}

fn run(args: &[String]) -> Output {
    segloc(&args.iter().map(String::as_str).collect::<Vec<_>>())
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(segloc(&[]).status.code(), Some(1));
    assert_eq!(segloc(&["localize", "--bogus"]).status.code(), Some(1));
    assert_eq!(segloc(&["localize", "--cloud", "a.ply", "--map", "m", "--align", "sideways"]).status.code(), Some(1));
    assert_eq!(segloc(&["localize", "--cloud", "a.ply", "--map", "m", "--k", "0", "--descriptor", "eigen"]).status.code(), Some(1));
    // dsm without a model file
    assert_eq!(segloc(&["localize", "--cloud", "a.ply", "--map", "m"]).status.code(), Some(1));
    assert_eq!(segloc(&["--threads", "0", "eval", "bench-fps"]).status.code(), Some(1));
    assert_eq!(segloc(&["--help"]).status.code(), Some(0));
}

#[test]
fn data_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("empty")).unwrap();
    let o = segloc(&["build-map", &p(dir.path(), "empty"), "--out", &p(dir.path(), "m.segm"), "--descriptor", "eigen"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no input clouds"));
    let o = segloc(&["localize", "--cloud", &p(dir.path(), "missing.ply"), "--map", &p(dir.path(), "missing.segm"), "--descriptor", "eigen"]);
    assert_eq!(o.status.code(), Some(2));
    std::fs::write(dir.path().join("bad.segm"), b"SEGMgarbage").unwrap();
    std::fs::write(dir.path().join("c.csv"), "0,0,0\n1,0,0\n").unwrap();
    let o = segloc(&["localize", "--cloud", &p(dir.path(), "c.csv"), "--map", &p(dir.path(), "bad.segm"), "--descriptor", "eigen"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn build_and_localize_match_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    world(d);
    let map_a = p(d, "a.segm");
    let map_b = p(d, "b.segm");
    stdout(&run(&with(&["build-map", &p(d, "w/map.ply"), "--out", &map_a], SETTINGS)));
    stdout(&run(&with(&["build-map", &p(d, "w"), "--out", &map_b], SETTINGS)));
    // A directory holding only map.ply gives the same map; rebuilding is byte-identical.
    assert_eq!(std::fs::read(&map_a).unwrap(), std::fs::read(&map_b).unwrap());

    let pipeline = Pipeline::new(config()).unwrap();
    let cloud = load_cloud(Path::new(&p(d, "w/map.ply")), CloudFormat::BinaryPly).unwrap().cloud;
    let lib_map = pipeline.build_map(&[cloud]).unwrap();
    assert_eq!(lib_map.to_bytes(), std::fs::read(&map_a).unwrap());

    let index = pipeline.index(&load_map(Path::new(&map_a)).unwrap()).unwrap();
    for view in ["w/views/view_000.ply", "w/decoys/decoy_000.ply"] {
        let out = stdout(&run(&with(&["localize", "--cloud", &p(d, view), "--map", &map_a], SETTINGS)));
        let cloud = load_cloud(Path::new(&p(d, view)), CloudFormat::BinaryPly).unwrap().cloud;
        let lib = pipeline.localize(&cloud, &index).unwrap();
        assert_eq!(out, format!("{}\n", lib.record()));
    }
    let truth: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("w/truth.json")).unwrap()).unwrap();
    let out: serde_json::Value = serde_json::from_str(&stdout(&run(&with(&["localize", "--cloud", &p(d, "w/views/view_000.ply"), "--map", &map_a], SETTINGS)))).unwrap();
    assert_eq!(out["status"], "localized");
    let (got, want) = (&out["translation"], &truth[0]["truth"]["translation"]);
    let err: f64 = (0..3).map(|i| (got[i].as_f64().unwrap() - want[i].as_f64().unwrap()).powi(2)).sum::<f64>().sqrt();
    assert!(err < 0.3, "translation error {err}");
    let out: serde_json::Value = serde_json::from_str(&stdout(&run(&with(&["localize", "--cloud", &p(d, "w/decoys/decoy_000.ply"), "--map", &map_a], SETTINGS)))).unwrap();
    assert_eq!(out, serde_json::json!({ "status": "no-localization" }));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    world(d);
    std::fs::write(d.join("run.cfg"), config().to_text()).unwrap();
    let from_file = stdout(&segloc(&["build-map", &p(d, "w/map.ply"), "--out", &p(d, "f.segm"), "--config", &p(d, "run.cfg")]));
    // The file asks for the network descriptor without a model; the flag wins.
    let mut dsm = config();
    dsm.set("descriptor", "dsm").unwrap();
    std::fs::write(d.join("dsm.cfg"), dsm.to_text()).unwrap();
    assert_eq!(segloc(&["build-map", &p(d, "w/map.ply"), "--out", &p(d, "x.segm"), "--config", &p(d, "dsm.cfg")]).status.code(), Some(1));
    stdout(&segloc(&["build-map", &p(d, "w/map.ply"), "--out", &p(d, "x.segm"), "--config", &p(d, "dsm.cfg"), "--descriptor", "eigen"]));
    assert_eq!(std::fs::read(d.join("x.segm")).unwrap(), std::fs::read(d.join("f.segm")).unwrap());
    let from_flags = stdout(&run(&with(&["build-map", &p(d, "w/map.ply"), "--out", &p(d, "g.segm")], SETTINGS)));
    assert_eq!(from_file, from_flags);
    assert_eq!(std::fs::read(d.join("f.segm")).unwrap(), std::fs::read(d.join("g.segm")).unwrap());

    std::fs::write(d.join("broken.cfg"), "k = 3\nnot a line\n").unwrap();
    let o = segloc(&["build-map", &p(d, "w/map.ply"), "--out", &p(d, "h.segm"), "--config", &p(d, "broken.cfg")]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
}

#[test]
fn roc_is_a_thin_wrapper() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let text = "score,label\n0.9,match\n0.8,non_match\n0.8,match\n0.1,non_match\n0.4,1\n0.3,0\n";
    std::fs::write(d.join("pairs.csv"), text).unwrap();
    let out = stdout(&segloc(&["eval", "roc", "--pairs", &p(d, "pairs.csv"), "--out", &p(d, "roc.csv"), "--gnuplot", &p(d, "roc.dat")]));
    let (scores, labels) = parse_scored_pairs(text).unwrap();
    let lib: RocCurve = roc_auc(&scores, &labels).unwrap();
    assert_eq!(out, format!("{}\n", serde_json::to_string(&lib).unwrap()));
    assert_eq!(std::fs::read_to_string(d.join("roc.csv")).unwrap(), lib.to_csv());
    assert_eq!(std::fs::read_to_string(d.join("roc.dat")).unwrap(), lib.to_gnuplot());
    let text_out = stdout(&segloc(&["--format", "text", "eval", "roc", "--pairs", &p(d, "pairs.csv")]));
    assert_eq!(text_out, format!("auc {}\n", lib.auc));

    std::fs::write(d.join("one.csv"), "0.5,match\n0.2,match\n").unwrap();
    assert_eq!(segloc(&["eval", "roc", "--pairs", &p(d, "one.csv")]).status.code(), Some(2));
}

#[test]
fn rotation_writes_one_curve_per_mode() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    world(d);
    stdout(&segloc(&["init-model", "--out", &p(d, "m.dsmw"), "--seed", "3"]));
    let mut args = vec!["eval", "rotation", "--cloud", "", "--model", "", "--modes", "none,pca2d", "--step-deg", "30", "--out", ""];
    let (cloud, model, out) = (p(d, "w/views/view_000.ply"), p(d, "m.dsmw"), p(d, "rot.csv"));
    args[3] = &cloud;
    args[5] = &model;
    args[11] = &out;
    let extra = ["--set", "cluster_tolerance=0.5", "--set", "min_points=50", "--set", "max_points=1000000", "--set", "ground_removal=none"];
    args.extend(extra);
    let json: serde_json::Value = serde_json::from_str(&stdout(&segloc(&args))).unwrap();
    let csv = std::fs::read_to_string(d.join("rot.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "angle_deg,none,pca2d");
    assert_eq!(lines.len(), 1 + 13);
    assert_eq!(lines[1], "0,0,0");
    let mean = |m: &str| {
        let v = json[m]["delta"].as_array().unwrap();
        v.iter().map(|x| x.as_f64().unwrap()).sum::<f64>() / v.len() as f64
    };
    assert!(mean("pca2d") < mean("none"));
}

#[test]
fn bench_fps_reports_speedup() {
    let dir = tempfile::tempdir().unwrap();
    let out = p(dir.path(), "fps.csv");
    let json: serde_json::Value =
        serde_json::from_str(&stdout(&segloc(&["eval", "bench-fps", "--p", "50", "--s", "64", "--m", "16", "--repeats", "1", "--out", &out]))).unwrap();
    assert!(json["speedup"].as_f64().unwrap() > 0.0);
    assert_eq!(json["outputs_match"], true);
    let csv = std::fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("segments,points_per_segment,samples"));
    assert_eq!(segloc(&["eval", "bench-fps", "--m", "300", "--s", "256"]).status.code(), Some(1));
}

#[test]
fn bench_pipeline_and_localize_run() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    world(d);
    let map = p(d, "m.segm");
    stdout(&run(&with(&["build-map", &p(d, "w/map.ply"), "--out", &map], SETTINGS)));
    let views = p(d, "w/views");
    let run_json: serde_json::Value = serde_json::from_str(&stdout(&run(&with(&["eval", "localize-run", "--map", &map, &views], SETTINGS)))).unwrap();
    assert_eq!(run_json["results"].as_array().unwrap().len(), 2);
    assert!(run_json["count"].as_u64().unwrap() >= 1);

    let csv = p(d, "t.csv");
    let reports: serde_json::Value = serde_json::from_str(&stdout(&run(&with(
        &["eval", "bench-pipeline", "--map", &map, &views, "--repeats", "2", "--warmup", "1", "--out", &csv],
        SETTINGS,
    ))))
    .unwrap();
    let reports = reports.as_array().unwrap();
    assert_eq!(reports.len(), 2);
    assert_eq!(reports[0]["mode"], "single_core");
    assert_eq!(reports[1]["mode"], "multi_core");
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 3);
}
