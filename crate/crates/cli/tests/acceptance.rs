//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use dynkp_cli::commands::{cmd_ablate, cmd_run, cmd_simulate, REPORTS_FILE, TRAJECTORY_FILE};
use dynkp_cli::config::{RunConfig, Settings};
use dynkp_core::evaluation::{self, ate_rmse, read_tum, write_tum, AlignmentKind};
use dynkp_core::filter::{filter_frame_pair, FilterConfig, FrameView};
use dynkp_core::geometry::*;
use dynkp_core::nalgebra::{Isometry3, Matrix3, Rotation3, Vector3};
use dynkp_core::odometry::{PoseSE3, Trajectory};
use dynkp_core::simulator::{generate_sequence, ground_truth_fundamental, CameraPath, SceneConfig};
use dynkp_core::{classification_metrics, KeypointVerdict};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(ok: bool, message: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(message())
    }
}

fn run_config(dataset: &Path, out: &Path, pairs: &[&str]) -> RunConfig {
    let mut s = Settings::default();
    s.dataset = Some(dataset.to_path_buf());
    s.out = Some(out.to_path_buf());
    s.apply_pairs(pairs).unwrap();
    s.finish().unwrap()
}

fn tempdir() -> tempfile::TempDir {
    tempfile::tempdir().expect("temporary directory")
}

// 1 -----------------------------------------------------------------------

fn epipolar_math() -> Check {
    // F = [t]x for t = (1, 0, 0) with identity intrinsics.
    let k = CameraIntrinsics::new(1.0, 1.0, 0.0, 0.0).map_err(|e| e.to_string())?;
    let a = Isometry3::identity();
    let b = Isometry3::translation(1.0, 0.0, 0.0);
    let f = ground_truth_fundamental(&k, &a, &b).map_err(|e| e.to_string())?;
    let tx = Matrix3::new(0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0);
    let scale = f.matrix().dot(&tx) / tx.norm_squared();
    let off = (f.matrix() - tx * scale).norm();
    ensure(off < 1e-9, || format!("pure x-translation F is off [t]x by {off:e}"))?;

    let f = FundamentalMatrix::from_matrix(tx).map_err(|e| e.to_string())?;
    let p1 = PixelPoint::new(10.0, 20.0);
    let line = epipolar_line(&f, p1).map_err(|e| e.to_string())?;
    let l = [line.a(), line.b(), line.c()];
    let s = l[1].abs();
    let expected = [0.0, -1.0, 20.0];
    let line_err = l.iter().zip(expected).map(|(x, e)| (x / s - e).abs()).fold(0.0, f64::max);
    ensure(line_err < 1e-9, || format!("line {l:?} differs from (0, -1, 20) up to scale"))?;
    let d0 = epipolar_distance(&f, p1, PixelPoint::new(30.0, 20.0)).map_err(|e| e.to_string())?;
    let d5 = epipolar_distance(&f, p1, PixelPoint::new(30.0, 25.0)).map_err(|e| e.to_string())?;
    ensure(d0.abs() < 1e-9, || format!("D = {d0}, expected 0"))?;
    ensure((d5 - 5.0).abs() < 1e-9, || format!("D = {d5}, expected 5"))?;
    Ok(format!("pure-translation F within {off:.1e}; D = {d0} and {d5}"))
}

// 2 -----------------------------------------------------------------------

struct Pair {
    matches: Vec<Correspondence>,
    truth: FundamentalMatrix,
}

fn simulated_pair(seed: u64, noise_sigma: f64) -> Pair {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let omega = rng.random_range(0.1..0.3) * if rng.random::<bool>() { 1.0 } else { -1.0 };
    let cfg = SceneConfig {
        camera_path: CameraPath::Arc { radius: rng.random_range(3.0..8.0), angular_velocity: omega },
        frame_rate: 1.0,
        frame_count: 2,
        noise_sigma,
        seed,
        ..SceneConfig::static_scene()
    };
    let seq = generate_sequence(&cfg).expect("scene is valid");
    let (a, b) = (&seq.frames[0], &seq.frames[1]);
    let matches = b
        .gt_matches
        .iter()
        .map(|&(i, j)| Correspondence::new(a.features.keypoints[i].position, b.features.keypoints[j].position))
        .collect();
    let truth = ground_truth_fundamental(&cfg.intrinsics, &a.pose, &b.pose).expect("camera moves");
    Pair { matches, truth }
}

fn fundamental_oracle() -> Check {
    let mut worst_residual: f64 = 0.0;
    let (mut kept, mut admitted, mut worst_admitted) = (0, 0, 0);
    let mut worst_oracle_recovery: f64 = 1.0;
    for seed in 0..50u64 {
        let p = simulated_pair(1000 + seed, 0.0);
        let f = estimate_fundamental_8pt(&p.matches[..20]).map_err(|e| format!("seed {seed}: {e}"))?;
        for c in &p.matches {
            worst_residual = worst_residual.max(f.distance(c.first, c.second).map_err(|e| e.to_string())?);
        }

        let p = simulated_pair(2000 + seed, 0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pairs: Vec<Correspondence> = p.matches[..70].to_vec();
        for c in &p.matches[70..100] {
            let random = PixelPoint::new(rng.random_range(0.0..640.0), rng.random_range(0.0..480.0));
            pairs.push(Correspondence::new(c.first, random));
        }
        let params = RansacParams { seed, ..Default::default() };
        let f = estimate_fundamental_ransac(&pairs, &params).map_err(|e| format!("seed {seed}: {e}"))?;
        let mask = f.inlier_mask();
        kept += mask[..70].iter().filter(|&&m| m).count();
        let a = mask[70..].iter().filter(|&&m| m).count();
        admitted += a;
        worst_admitted = worst_admitted.max(a);

        // True pairs the ground-truth model itself accepts under the same threshold.
        let oracle: Vec<bool> = pairs[..70]
            .iter()
            .map(|c| matches!(p.truth.distance(c.first, c.second), Ok(d) if d < params.inlier_threshold))
            .collect();
        let hits = oracle.iter().zip(mask).filter(|(&o, &m)| o && m).count();
        let total = oracle.iter().filter(|&&o| o).count();
        worst_oracle_recovery = worst_oracle_recovery.min(hits as f64 / total as f64);
    }
    let recovered = kept as f64 / 3500.0;
    let detail = format!(
        "8-point max residual {worst_residual:.1e} px; RANSAC recovered {:.1}% of true pairs (worst pair {:.1}% of those the true F accepts), admitted {admitted} of 1500 outliers (worst pair {worst_admitted} of 100 pairs)",
        100.0 * recovered,
        100.0 * worst_oracle_recovery
    );
    ensure(worst_residual < 1e-6, || detail.clone())?;
    ensure(recovered >= 0.95 && worst_admitted <= 2, || detail.clone())?;
    Ok(detail)
}

// 3 -----------------------------------------------------------------------

fn classification_at(noise_sigma: f64, threshold: f64) -> Result<(f64, f64), String> {
    let (mut predicted, mut truth) = (Vec::new(), Vec::new());
    for seed in 0..3 {
        let seq = generate_sequence(&SceneConfig { noise_sigma, seed, ..SceneConfig::person_and_box() })
            .map_err(|e| e.to_string())?;
        let config = FilterConfig { epipolar_threshold: threshold, ..Default::default() };
        for w in seq.frames.windows(2) {
            let out = filter_frame_pair(
                FrameView { features: &w[0].features, panoptic: &w[0].panoptic },
                FrameView { features: &w[1].features, panoptic: &w[1].panoptic },
                &config,
            )
            .map_err(|e| format!("seed {seed}: {e}"))?;
            predicted.extend(out.verdicts.iter().map(KeypointVerdict::is_removed));
            truth.extend_from_slice(&w[1].dynamic);
        }
    }
    let m = classification_metrics(&predicted, &truth).map_err(|e| e.to_string())?;
    Ok((m.precision, m.recall))
}

fn classification_oracle() -> Check {
    let (p0, r0) = classification_at(0.0, 0.1)?;
    let (p5, r5) = classification_at(0.5, 1.5)?;
    let detail = format!("sigma 0: P {p0:.3} R {r0:.3}; sigma 0.5, threshold 1.5: P {p5:.3} R {r5:.3}");
    ensure(p0 >= 0.9 && r0 >= 0.9 && p5 >= 0.85 && r5 >= 0.85, || detail.clone())?;
    Ok(detail)
}

// 4 -----------------------------------------------------------------------

fn ablation_direction() -> Check {
    let dir = tempdir();
    let mut lines = Vec::new();
    for seed in 0..3 {
        let data = dir.path().join(format!("scene{seed}"));
        cmd_simulate(&SceneConfig { seed, ..SceneConfig::ablation_scene() }, &data).map_err(|e| e.to_string())?;
        // Threshold 3 sigma for the scene's 0.3 px noise.
        let rows = cmd_ablate(&run_config(&data, &dir.path().join(format!("out{seed}")), &["threshold=0.9"]))
            .map_err(|e| e.to_string())?;
        let ate = |name: &str| rows.iter().find(|r| r.name == name).expect("row present").ate_rmse;
        let all = ate("all");
        let others = ["people", "people+things", "people+unknown"].map(ate);
        let best_other = others.iter().copied().fold(f64::INFINITY, f64::min);
        let line = format!(
            "seed {seed}: all {all:.4}, people {:.4}, people+things {:.4}, people+unknown {:.4}",
            others[0], others[1], others[2]
        );
        ensure(all < ate("people+unknown") && all < ate("people") && all <= 0.5 * best_other, || line.clone())?;
        lines.push(line);
    }
    Ok(lines.join("; "))
}

// 5 -----------------------------------------------------------------------

fn moving_coverage(scene: &SceneConfig) -> Result<f64, String> {
    let seq = generate_sequence(scene).map_err(|e| e.to_string())?;
    Ok(seq
        .frames
        .iter()
        .map(|f| {
            let p = &f.panoptic;
            let background: usize = p.stuff().iter().map(|s| s.mask.count()).sum();
            1.0 - background as f64 / (p.width() as f64 * p.height() as f64)
        })
        .fold(0.0, f64::max))
}

fn on_off_ate(scene: &SceneConfig, threshold: &str, dir: &Path) -> Result<(f64, f64), String> {
    let data = dir.join("data");
    cmd_simulate(scene, &data).map_err(|e| e.to_string())?;
    let run = |name: &str, pairs: &[&str]| -> Result<f64, String> {
        let s = cmd_run(&run_config(&data, &dir.join(name), pairs)).map_err(|e| e.to_string())?;
        Ok(s.ate.expect("ground truth present").rmse)
    };
    Ok((run("on", &[threshold])?, run("off", &[threshold, "filtering=off"])?))
}

fn vo_ablation() -> Check {
    let dynamic = SceneConfig::long_dynamic_scene();
    let coverage = moving_coverage(&dynamic)?;
    ensure(coverage <= 0.3, || format!("moving objects cover {:.0}% of a frame", 100.0 * coverage))?;
    let dir = tempdir();
    // Threshold 3 sigma for 0.5 px noise.
    let (on, off) = on_off_ate(&dynamic, "threshold=1.5", &dir.path().join("dynamic"))?;
    let still = SceneConfig { frame_count: 200, noise_sigma: 0.5, ..SceneConfig::static_scene() };
    let (s_on, s_off) = on_off_ate(&still, "threshold=1.5", &dir.path().join("static"))?;
    let detail = format!(
        "dynamic: on {on:.4} off {off:.4} (ratio {:.2}, coverage {:.0}%); static: on {s_on:.4} off {s_off:.4}",
        on / off,
        100.0 * coverage
    );
    ensure(on <= 0.5 * off, || detail.clone())?;
    ensure((s_on - s_off).abs() <= 0.2 * s_on.max(s_off), || detail.clone())?;
    Ok(detail)
}

// 6 -----------------------------------------------------------------------

fn random_trajectory(rng: &mut ChaCha8Rng, n: usize) -> Trajectory {
    let mut t = 0.0;
    let poses = (0..n)
        .map(|_| {
            t += rng.random_range(0.01..0.1);
            PoseSE3 {
                timestamp: t,
                translation: Vector3::from_fn(|_, _| rng.random_range(-10.0..10.0)),
                rotation: dynkp_core::nalgebra::UnitQuaternion::from_euler_angles(
                    rng.random_range(-3.0..3.0),
                    rng.random_range(-1.5..1.5),
                    rng.random_range(-3.0..3.0),
                ),
            }
        })
        .collect();
    Trajectory::from_poses(poses).expect("increasing timestamps")
}

fn map_translations(t: &Trajectory, f: impl Fn(&Vector3<f64>) -> Vector3<f64>) -> Trajectory {
    Trajectory::from_poses(t.iter().map(|p| PoseSE3 { translation: f(&p.translation), ..*p }).collect())
        .expect("same timestamps")
}

fn evaluation_correctness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let ate = |e: &Trajectory, g: &Trajectory, kind| ate_rmse(e, g, kind, 0.02).map(|r| r.rmse).map_err(|e| e.to_string());
    let mut worst_identity: f64 = 0.0;
    let mut worst_invariance: f64 = 0.0;
    for _ in 0..100 {
        let gt = random_trajectory(&mut rng, 30);
        worst_identity = worst_identity.max(ate(&gt, &gt, AlignmentKind::Sim3)?);
        let noise: Vec<Vector3<f64>> =
            (0..gt.len()).map(|_| Vector3::from_fn(|_, _| rng.random_range(-0.3..0.3))).collect();
        let est = Trajectory::from_poses(
            gt.iter().zip(&noise).map(|(p, n)| PoseSE3 { translation: p.translation + n, ..*p }).collect(),
        )
        .expect("same timestamps");
        let r = Rotation3::from_euler_angles(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let shift = Vector3::from_fn(|_, _| rng.random_range(-50.0..50.0));
        let scale = rng.random_range(0.1..10.0);
        let rigid = map_translations(&est, |x| r * x + shift);
        let similar = map_translations(&est, |x| scale * (r * x) + shift);
        worst_invariance = worst_invariance
            .max((ate(&est, &gt, AlignmentKind::Se3)? - ate(&rigid, &gt, AlignmentKind::Se3)?).abs())
            .max((ate(&est, &gt, AlignmentKind::Sim3)? - ate(&similar, &gt, AlignmentKind::Sim3)?).abs());
    }
    ensure(worst_identity < 1e-9, || format!("ATE of a trajectory against itself {worst_identity:e}"))?;
    ensure(worst_invariance < 1e-9, || format!("invariance broken by {worst_invariance:e}"))?;

    let pose = |t: f64, y: f64| PoseSE3 { translation: Vector3::new(t, y, 0.0), ..PoseSE3::identity(t) };
    let gt = Trajectory::from_poses(vec![pose(0.0, 0.0), pose(1.0, 0.0)]).unwrap();
    let est = Trajectory::from_poses(vec![pose(0.0, 0.0), pose(1.0, 0.1)]).unwrap();
    let two = ate(&est, &gt, AlignmentKind::None)?;
    let expected = (0.1f64 * 0.1 / 2.0).sqrt();
    ensure((two - expected).abs() < 1e-12, || format!("two-pose case {two}, expected {expected}"))?;

    let dir = tempdir();
    let path = dir.path().join("t.txt");
    let t = random_trajectory(&mut rng, 1000);
    write_tum(&path, &t).map_err(|e| e.to_string())?;
    let back = read_tum(&path).map_err(|e| e.to_string())?;
    let mut worst_trip: f64 = 0.0;
    for (a, b) in t.iter().zip(&back) {
        worst_trip = worst_trip
            .max((a.timestamp - b.timestamp).abs())
            .max((a.translation - b.translation).amax())
            .max((a.rotation.coords - b.rotation.coords).amax());
    }
    ensure(back.len() == 1000 && worst_trip <= 1e-15, || format!("TUM round trip off by {worst_trip:e}"))?;
    Ok(format!(
        "identity {worst_identity:.1e}, invariance {worst_invariance:.1e}, two-pose {two:.6}, TUM round trip {worst_trip:.1e}"
    ))
}

// 7 -----------------------------------------------------------------------

fn determinism() -> Check {
    let dir = tempdir();
    let data = dir.path().join("data");
    let scene = SceneConfig { noise_sigma: 0.5, seed: 11, ..SceneConfig::unknown_object_scene() };
    cmd_simulate(&scene, &data).map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for name in ["first", "second"] {
        let out = dir.path().join(name);
        cmd_run(&run_config(&data, &out, &["threshold=1.5", "seed=5"])).map_err(|e| e.to_string())?;
        let read = |f: &str| fs::read(out.join(f)).map_err(|e| e.to_string());
        outputs.push((read(TRAJECTORY_FILE)?, read(REPORTS_FILE)?));
    }
    ensure(outputs[0] == outputs[1], || "outputs differ between runs".to_string())?;
    Ok(format!(
        "{} and {} byte files identical across runs",
        outputs[0].0.len(),
        outputs[0].1.len()
    ))
}

// 8 -----------------------------------------------------------------------

fn reference_values() -> Check {
    use evaluation::reference::*;
    let ablation: Vec<String> =
        BONN_NON_OBSTRUCTING_BOX_ABLATION.iter().map(|(n, v)| format!("{n} {v}")).collect();
    Ok(format!(
        "documented only, not reproduced: fr3_w_static {TUM_FR3_WALKING_STATIC}, fr3_w_xyz {TUM_FR3_WALKING_XYZ}, non-obst box {BONN_NON_OBSTRUCTING_BOX} (unfiltered {BONN_NON_OBSTRUCTING_BOX_UNFILTERED}); configurations: {}",
        ablation.join(", ")
    ))
}

fn main() {
    let criteria: [(&str, Duration, fn() -> Check); 8] = [
        ("epipolar math exactness", Duration::from_secs(1), epipolar_math),
        ("fundamental-matrix oracle suite", Duration::from_secs(30), fundamental_oracle),
        ("classification oracle suite", Duration::from_secs(60), classification_oracle),
        ("ablation direction", Duration::MAX, ablation_direction),
        ("VO ablation on 200 frames", Duration::from_secs(120), vo_ablation),
        ("evaluation correctness", Duration::MAX, evaluation_correctness),
        ("determinism of run outputs", Duration::MAX, determinism),
        ("published reference values", Duration::MAX, reference_values),
    ];
    let mut failed = 0;
    for (i, (name, limit, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let mut result = check();
        let elapsed = start.elapsed();
        if result.is_ok() && elapsed > *limit {
            result = Err(format!("took {:.1} s, limit {} s", elapsed.as_secs_f64(), limit.as_secs()));
        }
        let (tag, detail) = match &result {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        failed += result.is_err() as usize;
        println!("[{tag}] criterion {}: {name} ({:.1} s): {detail}", i + 1, elapsed.as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
    println!("all {} criteria passed", criteria.len());
}
