//! Acceptance suite: every criterion runs in sequence (timing criteria must
//! not share the CPU with other tests) and prints one PASS/FAIL line.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use segloc::descriptor::{
    activation_footprint, describe_dsm, eigenvalue_descriptor, init_model, ChannelConfig, Descriptor, DescriptorError, DsmModel, MODEL_FORMAT_VERSION,
};
use segloc::eval::{descriptor_speed, localization_run, roc_auc, rotation_delta, EvalError};
use segloc::geometry::{CloudId, Point3, RigidTransform, Segment, SegmentId};
use segloc::io::{IoError, PairLabelKind, SegmentMap, MAP_FORMAT_VERSION};
use segloc::matching::Correspondence;
use segloc::pipeline::{Pipeline, PipelineConfig};
use segloc::preprocess::{canonicalize, AlignMode};
use segloc::registration::{prosac_pose, ransac_pose, RansacParams};
use segloc::sampling::{fps_batched, fps_benchmark, fps_per_segment, SampleBatch};
use segloc::segmentation::GroundRemoval;
use segloc::synth::{partial_views, random_pose, random_segment, SynthWorld, ViewParams, WorldParams};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<Point3> {
    (0..n).map(|_| Point3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-2.0..2.0))).collect()
}

fn fps_oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let segments: Vec<Vec<Point3>> = (0..100).map(|_| random_points(&mut rng, 256)).collect();
    let seeds: Vec<usize> = (0..100).map(|_| rng.random_range(0..256)).collect();
    let batch = SampleBatch::from_segments(&segments).map_err(|e| e.to_string())?;
    let got = fps_batched(&batch, 160, &seeds).map_err(|e| e.to_string())?;
    for (i, (seg, &seed)) in segments.iter().zip(&seeds).enumerate() {
        let oracle: Vec<u32> = fps_per_segment(seg, 160, seed).map_err(|e| e.to_string())?.into_iter().map(|v| v as u32).collect();
        check(got.row(i) == &oracle[..], || format!("segment {i} differs"))?;
    }
    Ok("100 segments × 160 samples identical".into())
}

fn fps_speedup() -> Outcome {
    let report = fps_benchmark(1000, 256, 160, 3, 7).map_err(|e| e.to_string())?;
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR"));
    std::fs::write(dir.join("fps_bench.csv"), format!("{}\n{}\n", segloc::sampling::FpsBenchReport::csv_header(), report.csv_row())).map_err(|e| e.to_string())?;
    print!("{}", report.table());
    check(report.outputs_match, || "batched and per-segment outputs differ".into())?;
    let msg = format!("speedup {:.2}x (per-segment {:.1} ms, batched {:.1} ms)", report.speedup, report.per_segment_ms, report.batched_ms);
    check(report.speedup >= 5.0, || msg.clone())?;
    Ok(msg)
}

fn footprint_arithmetic() -> Outcome {
    let model = init_model(&ChannelConfig::default(), 0).map_err(|e| e.to_string())?;
    let dsm = activation_footprint(model.layers());
    let full = activation_footprint(model.full_resolution().layers());
    // Oracle: the layer schedule written out by hand.
    let hand_points = 160 + 96 + 16 + 4;
    let hand_knn = 160 * 8 + 96 * 10 + 16 * 12 + 4 * 16;
    check(dsm.points_total == 276 && hand_points == 276, || format!("points {}", dsm.points_total))?;
    check(dsm.knn_ops_total == 2496 && hand_knn == 2496, || format!("knn ops {}", dsm.knn_ops_total))?;
    check(full.points_total == 1024 && full.knn_ops_total == 11776, || format!("reference {full:?}"))?;
    let reduction = 1.0 - dsm.points_total as f64 / full.points_total as f64;
    check(reduction >= 0.73, || format!("reduction {reduction}"))?;
    Ok(format!(
        "points 276 vs 1024 ({:.1}% less), knn ops 2496 vs 11776 ({:.2}x fewer)",
        reduction * 100.0,
        full.knn_ops_total as f64 / dsm.knn_ops_total as f64
    ))
}

fn descriptor_speed_direction() -> Outcome {
    let model = init_model(&ChannelConfig::default(), 3).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let canon: Vec<_> = (0..500u32).map(|i| canonicalize(&random_segment(&mut rng, i, 600), AlignMode::Pca2d, u64::from(i))).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    let r = descriptor_speed(&model, &canon, 3).map_err(|e| e.to_string())?;
    let msg = format!("down-sampling {:.1} ms vs full resolution {:.1} ms: {:.2}x", r.dsm_ms, r.reference_ms, r.speedup);
    check(r.speedup >= 2.0, || msg.clone())?;
    Ok(msg)
}

/// Elongated, non-symmetric blobs: clearly dominant horizontal axis.
fn anisotropic_segments(n: u32, seed: u64) -> Vec<Segment> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let (sx, sy, sz) = (rng.random_range(1.5..3.0), rng.random_range(0.2..0.8), rng.random_range(0.3..2.0));
            let count = rng.random_range(150..600);
            let pts = (0..count)
                .map(|_| {
                    let x: f64 = rng.random_range(-sx..sx);
                    // skew makes the third moments non-zero
                    Point3::new(x + 0.3 * x * x / sx, rng.random_range(-sy..sy), rng.random_range(-sz..sz))
                })
                .collect();
            Segment::new(SegmentId(i), CloudId(0), pts).unwrap()
        })
        .collect()
}

fn rotation_invariance() -> Outcome {
    let segments = anisotropic_segments(50, 5);
    for s in &segments {
        let c = canonicalize(s, AlignMode::Pca2d, 0).map_err(|e| e.to_string())?;
        check(!c.degenerate(), || format!("segment {} is degenerate", s.id.0))?;
    }
    let model = init_model(&ChannelConfig::default(), 6).map_err(|e| e.to_string())?;
    let angles: Vec<f64> = (1..36).map(|i| i as f64 * 10.0).collect();
    let learned = |mode: AlignMode, model: &DsmModel| {
        rotation_delta(
            |s: &Segment| -> Result<Descriptor, EvalError> { Ok(describe_dsm(&canonicalize(s, mode, u64::from(s.id.0))?, model)?) },
            &segments,
            &angles,
        )
    };
    let aligned = learned(AlignMode::Pca2d, &model).map_err(|e| e.to_string())?.mean();
    let unaligned = learned(AlignMode::None, &model).map_err(|e| e.to_string())?.mean();
    let eigen = rotation_delta(|s: &Segment| -> Result<Descriptor, DescriptorError> { eigenvalue_descriptor(s) }, &segments, &angles)
        .map_err(|e| e.to_string())?
        .mean();
    let msg = format!("learned pca2d {aligned:.3e}, learned none {unaligned:.3e}, eigen {eigen:.3e}");
    check(aligned < 1e-3 && eigen < 1e-6 && unaligned > aligned, || msg.clone())?;
    Ok(msg)
}

/// Fraction of (match, non-match) pairs ordered correctly, ties counting ½.
fn mann_whitney(scores: &[f64], labels: &[PairLabelKind]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (i, li) in labels.iter().enumerate() {
        for (j, lj) in labels.iter().enumerate() {
            if *li == PairLabelKind::Match && *lj == PairLabelKind::NonMatch {
                den += 1.0;
                num += if scores[i] > scores[j] {
                    1.0
                } else if scores[i] == scores[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    num / den
}

fn roc_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    // coarse scores so ties occur
    let scores: Vec<f64> = (0..200).map(|_| (rng.random_range(0.0..1.0f64) * 40.0).round() / 40.0).collect();
    let labels: Vec<PairLabelKind> =
        scores.iter().map(|&s| if rng.random_bool(0.3 + 0.4 * s) { PairLabelKind::Match } else { PairLabelKind::NonMatch }).collect();
    let auc = roc_auc(&scores, &labels).map_err(|e| e.to_string())?.auc;
    let oracle = mann_whitney(&scores, &labels);
    check((auc - oracle).abs() <= 1e-12, || format!("auc {auc} vs oracle {oracle}"))?;
    let fixture = [PairLabelKind::Match, PairLabelKind::Match, PairLabelKind::NonMatch, PairLabelKind::NonMatch];
    let sep = roc_auc(&[0.9, 0.7, 0.4, 0.1], &fixture).map_err(|e| e.to_string())?.auc;
    let flat = roc_auc(&[0.3; 4], &fixture).map_err(|e| e.to_string())?.auc;
    check(sep == 1.0 && flat == 0.5, || format!("separated {sep}, constant {flat}"))?;
    Ok(format!("auc {auc:.6} = oracle within {:.1e}; fixtures 1.0 / 0.5", (auc - oracle).abs()))
}

fn correspondence(i: u32, live: Point3, map: Point3, quality: f64) -> Correspondence {
    Correspondence { live_segment: SegmentId(i), map_segment: SegmentId(1000 + i), feature_distance: 0.0, quality: Some(quality), live_centroid: live, map_centroid: map }
}

fn registration_recovery() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut ransac_ok, mut prosac_ok) = (0, 0);
    for case in 0..100u64 {
        let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let t = Vector3::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0), rng.random_range(-3.0..3.0));
        let truth = RigidTransform::from_axis_angle(axis, rng.random_range(-3.1..3.1), t);
        let mut corrs = Vec::new();
        for i in 0..20u32 {
            let live = Point3::new(rng.random_range(-30.0..30.0), rng.random_range(-30.0..30.0), rng.random_range(-3.0..3.0));
            let exact = truth.apply(&live);
            let map = if i < 10 {
                exact
            } else {
                // displaced by at least 3 m so it can never be an inlier
                let dir = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)).normalize();
                exact.add(&Point3::from_vector(&(dir * rng.random_range(3.0..30.0))))
            };
            corrs.push(correspondence(i, live, map, rng.random_range(0.0..1.0)));
        }
        corrs.shuffle(&mut rng);
        let params = RansacParams { seed: case, ..Default::default() };
        let good = |p: Option<segloc::registration::PoseEstimate>| {
            p.is_some_and(|p| p.transform.rotation_angle_to(&truth) <= 1e-6 && p.transform.translation_distance_to(&truth) <= 1e-6)
        };
        ransac_ok += usize::from(good(ransac_pose(&corrs, &params).map_err(|e| e.to_string())?));
        prosac_ok += usize::from(good(prosac_pose(&corrs, &params).map_err(|e| e.to_string())?));
    }
    let mut accepted = 0;
    for seed in 0..100u64 {
        let corrs: Vec<Correspondence> = (0..20u32)
            .map(|i| {
                let a = Point3::new(rng.random_range(-30.0..30.0), rng.random_range(-30.0..30.0), rng.random_range(-3.0..3.0));
                let b = Point3::new(rng.random_range(-30.0..30.0), rng.random_range(-30.0..30.0), rng.random_range(-3.0..3.0));
                correspondence(i, a, b, rng.random_range(0.0..1.0))
            })
            .collect();
        let params = RansacParams { seed, ..Default::default() };
        accepted += usize::from(ransac_pose(&corrs, &params).map_err(|e| e.to_string())?.is_some());
        accepted += usize::from(prosac_pose(&corrs, &params).map_err(|e| e.to_string())?.is_some());
    }
    let msg = format!("RANSAC {ransac_ok}/100, PROSAC {prosac_ok}/100 recovered; {accepted} poses on random sets");
    check(ransac_ok >= 99 && prosac_ok >= 99 && accepted == 0, || msg.clone())?;
    Ok(msg)
}

const SYNTH_SETTINGS: [(&str, &str); 8] = [
    ("descriptor", "eigen"),
    ("cluster_tolerance", "0.5"),
    ("min_points", "50"),
    ("max_points", "1000000"),
    ("ground_removal", "none"),
    ("k", "5"),
    ("max_iterations", "5000"),
    ("min_inliers", "6"),
];

fn synth_config() -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    for (k, v) in SYNTH_SETTINGS {
        cfg.set(k, v).unwrap();
    }
    assert_eq!(cfg.segmentation.ground_removal, GroundRemoval::None);
    cfg
}

fn synthetic_localization() -> Outcome {
    let world = SynthWorld::generate(WorldParams { seed: 21, ..Default::default() }).map_err(|e| e.to_string())?;
    check(world.primitives.len() >= 50, || "world too small".into())?;
    let pipeline = Pipeline::new(synth_config()).map_err(|e| e.to_string())?;
    let map = pipeline.build_map(&[world.map_cloud()]).map_err(|e| e.to_string())?;

    let views = partial_views(&world, 20, &ViewParams::default(), 22).map_err(|e| e.to_string())?;
    let clouds: Vec<_> = views.iter().map(|v| v.cloud.clone()).collect();
    let run = localization_run(&pipeline, &clouds, &map).map_err(|e| e.to_string())?;
    let (mut correct, mut wrong) = (0, 0);
    for (v, pose) in views.iter().zip(&run.poses) {
        if let Some(p) = pose {
            let ok = p.transform.rotation_angle_to(&v.truth).to_degrees() <= 2.0 && p.transform.translation_distance_to(&v.truth) <= 0.3;
            if ok {
                correct += 1;
            } else {
                wrong += 1;
            }
        }
    }

    let decoy_world = SynthWorld::generate(WorldParams { seed: 23, ..Default::default() }).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let decoys: Vec<_> = partial_views(&decoy_world, 10, &ViewParams::default(), 25)
        .map_err(|e| e.to_string())?
        .into_iter()
        .map(|v| segloc::geometry::apply_transform(&random_pose(&mut rng, Vector3::zeros(), 5.0), &v.cloud))
        .collect();
    let decoy_run = localization_run(&pipeline, &decoys, &map).map_err(|e| e.to_string())?;
    let msg = format!(
        "{} map segments; {correct}/20 views within 0.3 m / 2°, {wrong} wrong; {} of 10 decoys localized",
        map.len(),
        decoy_run.count
    );
    check(correct >= 18 && wrong == 0 && decoy_run.count == 0, || msg.clone())?;
    Ok(msg)
}

fn cli(args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_segloc")).args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("segloc {args:?}: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(out.stdout)
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = |p: &str| dir.path().join(p).to_str().unwrap().to_string();
    cli(&["synth-world", "--out-dir", &d("w"), "--seed", "31", "--primitives", "50", "--views", "4", "--decoys", "2"])?;
    cli(&["init-model", "--out", &d("model.dsmw"), "--seed", "32"])?;
    let mut settings: Vec<String> = Vec::new();
    for (k, v) in SYNTH_SETTINGS.iter().skip(1) {
        settings.push("--set".into());
        settings.push(format!("{k}={v}"));
    }
    let views: Vec<String> = (0..4).map(|i| d(&format!("w/views/view_{i:03}.ply"))).chain((0..2).map(|i| d(&format!("w/decoys/decoy_{i:03}.ply")))).collect();
    let mut checked = 0;
    for descriptor in ["eigen", "dsm"] {
        let mut outputs = Vec::new();
        for threads in ["1", "4"] {
            let map = d(&format!("{descriptor}_{threads}.segm"));
            let mut common: Vec<String> = vec!["--threads".into(), threads.into(), "--descriptor".into(), descriptor.into(), "--model".into(), d("model.dsmw")];
            common.extend(settings.iter().cloned());
            let mut build: Vec<String> = vec!["build-map".into(), d("w/map.ply"), "--out".into(), map.clone()];
            build.extend(common.iter().cloned());
            cli(&build.iter().map(String::as_str).collect::<Vec<_>>())?;
            let mut run: Vec<String> = vec!["eval".into(), "localize-run".into(), "--map".into(), map.clone()];
            run.extend(views.iter().cloned());
            run.extend(common.iter().cloned());
            let json = cli(&run.iter().map(String::as_str).collect::<Vec<_>>())?;
            let mut single: Vec<String> = vec!["localize".into(), "--cloud".into(), views[0].clone(), "--map".into(), map.clone()];
            single.extend(common.iter().cloned());
            let one = cli(&single.iter().map(String::as_str).collect::<Vec<_>>())?;
            let bytes = std::fs::read(&map).map_err(|e| e.to_string())?;
            outputs.push((bytes, json, one));
        }
        check(outputs[0].0 == outputs[1].0, || format!("{descriptor}: map files differ between --threads 1 and 4"))?;
        check(outputs[0].1 == outputs[1].1, || format!("{descriptor}: localize-run JSON differs"))?;
        check(outputs[0].2 == outputs[1].2, || format!("{descriptor}: localize JSON differs"))?;
        checked += 1;
    }
    Ok(format!("{checked} descriptor kinds: maps and JSON byte-identical for --threads 1 vs 4"))
}

fn format_round_trips() -> Outcome {
    // Learned map with qualities plus an eigenvalue map.
    let world = SynthWorld::generate(WorldParams { seed: 41, primitives: 20, extent: 60.0, ..Default::default() }).map_err(|e| e.to_string())?;
    let model = init_model(&ChannelConfig::default(), 42).map_err(|e| e.to_string())?;
    let mut learned_cfg = synth_config();
    learned_cfg.set("descriptor", "dsm").unwrap();
    let learned = Pipeline::with_model(learned_cfg, model.clone()).map_err(|e| e.to_string())?.build_map(&[world.map_cloud()]).map_err(|e| e.to_string())?;
    let eigen = Pipeline::new(synth_config()).map_err(|e| e.to_string())?.build_map(&[world.map_cloud()]).map_err(|e| e.to_string())?;
    check(learned.entries().iter().all(|e| e.descriptor.quality().is_some()), || "learned map lacks qualities".into())?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    for (name, map) in [("learned", &learned), ("eigen", &eigen)] {
        let path = dir.path().join(format!("{name}.segm"));
        segloc::io::save_map(map, &path).map_err(|e| e.to_string())?;
        let back = segloc::io::load_map(&path).map_err(|e| e.to_string())?;
        check(&back == map, || format!("{name}: loaded map differs"))?;
        let bytes = std::fs::read(&path).map_err(|e| e.to_string())?;
        check(back.to_bytes() == bytes, || format!("{name}: re-serialized bytes differ"))?;

        let mut flipped = bytes.clone();
        flipped[bytes.len() / 2] ^= 0x10;
        check(matches!(SegmentMap::from_bytes(&flipped), Err(IoError::CorruptFile(_))), || format!("{name}: bit flip accepted"))?;
        for cut in [3, 12, bytes.len() / 2, bytes.len() - 1] {
            check(matches!(SegmentMap::from_bytes(&bytes[..cut]), Err(IoError::CorruptFile(_))), || format!("{name}: truncation at {cut} accepted"))?;
        }
        let mut version = bytes.clone();
        version[4..8].copy_from_slice(&(MAP_FORMAT_VERSION + 1).to_le_bytes());
        check(matches!(SegmentMap::from_bytes(&version), Err(IoError::VersionMismatch { .. })), || format!("{name}: version bump accepted"))?;
    }

    let path = dir.path().join("w.dsmw");
    segloc::descriptor::save_model(&model, &path).map_err(|e| e.to_string())?;
    let bytes = std::fs::read(&path).map_err(|e| e.to_string())?;
    let back = segloc::descriptor::load_model(&path).map_err(|e| e.to_string())?;
    check(back == model && back.to_bytes() == bytes, || "model round trip differs".into())?;
    let bits_equal = back.tensors().zip(model.tensors()).all(|(a, b)| {
        a.weight.iter().zip(&b.weight).all(|(x, y)| x.to_bits() == y.to_bits()) && a.bias.iter().zip(&b.bias).all(|(x, y)| x.to_bits() == y.to_bits())
    });
    check(bits_equal, || "weights not bit-identical".into())?;
    let mut flipped = bytes.clone();
    flipped[bytes.len() / 3] ^= 0x01;
    check(matches!(DsmModel::from_bytes(&flipped), Err(DescriptorError::CorruptFile(_))), || "model bit flip accepted".into())?;
    for cut in [2, 11, bytes.len() / 2, bytes.len() - 1] {
        check(matches!(DsmModel::from_bytes(&bytes[..cut]), Err(DescriptorError::CorruptFile(_))), || format!("model truncation at {cut} accepted"))?;
    }
    let mut version = bytes.clone();
    version[4..8].copy_from_slice(&(MODEL_FORMAT_VERSION + 1).to_le_bytes());
    check(matches!(DsmModel::from_bytes(&version), Err(DescriptorError::VersionMismatch { .. })), || "model version bump accepted".into())?;
    Ok(format!("SEGM ({} + {} segments) and DSMW ({} bytes) bit-exact; corruption, truncation and version rejected", learned.len(), eigen.len(), bytes.len()))
}

#[test]
fn acceptance_criteria() {
    type Criterion = (u32, &'static str, u64, fn() -> Outcome);
    let criteria: [Criterion; 10] = [
        (1, "FPS oracle equivalence", 5, fps_oracle_equivalence),
        (2, "FPS batched speedup >= 5x", 60, fps_speedup),
        (3, "down-sampling footprint arithmetic", 1, footprint_arithmetic),
        (4, "descriptor inference speedup >= 2x", 120, descriptor_speed_direction),
        (5, "rotation invariance", 60, rotation_invariance),
        (6, "ROC oracle equivalence", 5, roc_oracle),
        (7, "registration recovery", 30, registration_recovery),
        (8, "end-to-end synthetic localization", 120, synthetic_localization),
        (9, "determinism across thread counts", 60, determinism),
        (10, "format round-trips", 10, format_round_trips),
    ];
    let mut failed = Vec::new();
    for (n, name, limit, f) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(msg) if elapsed > Duration::from_secs(limit) => Err(format!("{msg}; took {elapsed:.1?}, limit {limit} s")),
            other => other,
        };
        match outcome {
            Ok(msg) => println!("criterion {n:>2} PASS  {name}: {msg} [{elapsed:.2?}]"),
            Err(msg) => {
                println!("criterion {n:>2} FAIL  {name}: {msg} [{elapsed:.2?}]");
                failed.push(n);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
