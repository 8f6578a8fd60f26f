//! Acceptance suite. Each criterion prints one PASS/FAIL line; the process exits non-zero
//! if any criterion fails.

use std::time::Duration;

use drillshare_core::attention::{allocation_weight, windowed_attention, AllocationParams, AttentionState};
use drillshare_core::bone::{BoneLayer, BoneModel};
use drillshare_core::compare::{compare_modes, map_with, Execution};
use drillshare_core::config::{Mode, SessionConfig};
use drillshare_core::fixation::{GmmConfig, GmmState};
use drillshare_core::geometry::{pseudoinverse, Matrix, Vec3};
use drillshare_core::haptic::{HapticDevice, HapticKinematicsKind, HapticParams, ImpedanceCommand};
use drillshare_core::kinematics::SerialChain;
use drillshare_core::metrics::MetricsDocument;
use drillshare_core::operator::ProtocolParams;
use drillshare_core::scene::{GazeKind, GazePoint, ObjectLabel};
use drillshare_core::session::{Session, SessionRun};
use drillshare_core::smoothing::smooth_trace;
use drillshare_core::trace::write_trace;
use drillshare_validation::{run_all, verdict, Criterion, Verdict};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const SEED: u64 = 7;

fn run_session(cfg: SessionConfig) -> SessionRun {
    let run = Session::new(cfg).expect("valid config").run_to_end();
    assert!(run.fault.is_none(), "session fault: {:?}", run.fault);
    run
}

fn c1_allocation_law() -> Verdict {
    let p = AllocationParams::default();
    let exact =
        allocation_weight(0.1, &p) == 0.0 && allocation_weight(0.9, &p) == 1.0 && allocation_weight(0.5, &p) == 0.5;
    let mut monotone = true;
    let mut prev = allocation_weight(0.0, &p);
    for i in 1..=1000 {
        let w = allocation_weight(i as f64 * 1e-3, &p);
        monotone &= w >= prev && (0.0..=1.0).contains(&w);
        prev = w;
    }
    verdict(exact && monotone, format!("exact endpoints/midpoint: {exact}, monotone on 1e-3 grid: {monotone}"))
}

fn point(t: f64, object: ObjectLabel, kind: GazeKind) -> GazePoint {
    GazePoint { position: Vec3::zeros(), timestamp: t, object, kind }
}

fn c2_attention_bounds() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let labels = [
        ObjectLabel::Vertebra,
        ObjectLabel::Drill,
        ObjectLabel::DrillingPath,
        ObjectLabel::DistractorDisplay,
        ObjectLabel::Background,
    ];
    let kinds = [GazeKind::Fixation, GazeKind::Saccade, GazeKind::Unclassified];
    let mut windows = 0usize;
    let mut in_bounds = true;
    for _ in 0..100 {
        let window = rng.random_range(0.1..4.0);
        let mut state = AttentionState::new(window, rng.random_range(0.05..2.0));
        let (mut t, mut now) = (0.0, 0.0f64);
        for _ in 0..100 {
            t += rng.random_range(0.0..0.2);
            let p = point(t, labels[rng.random_range(0..5)], kinds[rng.random_range(0..3)]);
            now = now.max(t + rng.random_range(0.0..0.05));
            let abar = state.update(p, now).expect("monotone stream");
            in_bounds &= (0.0..=1.0).contains(&state.alpha()) && (0.0..=1.0).contains(&abar);
            windows += 1;
        }
    }

    let drill: Vec<GazePoint> =
        (0..=120).map(|k| point(k as f64 / 60.0, ObjectLabel::Drill, GazeKind::Fixation)).collect();
    let a_drill = windowed_attention(&drill, 2.0, 2.0);
    let away: Vec<GazePoint> =
        (0..=120).map(|k| point(k as f64 / 60.0, ObjectLabel::DistractorDisplay, GazeKind::Fixation)).collect();
    let a_away = windowed_attention(&away, 2.0, 2.0);
    verdict(
        windows == 10_000 && in_bounds && a_drill >= 0.99 && a_away == 0.0,
        format!("{windows} windows in [0,1]: {in_bounds}; drill α = {a_drill:.4}; distractor α = {a_away}"),
    )
}

fn c3_gmm_segmentation() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let slow = Normal::new(0.01, 0.005).unwrap();
    let fast = Normal::new(0.5, 0.1).unwrap();
    let mut gmm = GmmState::new(GmmConfig::default());
    let dt = 1.0 / 60.0;
    let mut prev = point(0.0, ObjectLabel::Drill, GazeKind::Unclassified);
    let (mut agree, mut total) = (0usize, 0usize);
    for k in 1..=600 {
        let is_fix = rng.random_bool(0.5);
        let speed: f64 = if is_fix { slow.sample(&mut rng) } else { fast.sample(&mut rng) };
        let speed = speed.abs();
        let cur = GazePoint {
            position: prev.position + Vec3::x() * speed * dt,
            timestamp: k as f64 * dt,
            object: ObjectLabel::Drill,
            kind: GazeKind::Unclassified,
        };
        let out = gmm.classify(&cur, &prev).expect("increasing timestamps");
        if gmm.is_fitted() {
            total += 1;
            agree += usize::from((out.kind == GazeKind::Fixation) == is_fix);
        }
        prev = cur;
    }
    let rate = agree as f64 / total.max(1) as f64;
    verdict(total > 0 && rate >= 0.9, format!("agreement {:.2}% over {total} samples after first refit", rate * 100.0))
}

fn free_bone() -> BoneModel {
    BoneModel { layers: vec![BoneLayer { start: 0.0, end: 0.03, viscous: 0.0, dry: 0.0 }], target_depth: 0.03 }
}

fn c4_autonomy_equilibrium() -> Verdict {
    let cfg =
        SessionConfig { mode: Mode::FullRobot, max_duration: 6.0, bone: free_bone(), seed: SEED, ..Default::default() };
    let run = run_session(cfg);
    let v = 0.001;
    let settled: Vec<_> = run.records.iter().filter(|r| r.t >= 5.0).collect();
    let worst_haptic = settled.iter().map(|r| (r.haptic_v.z - v).abs() / v).fold(0.0, f64::max);
    let tip_at = |t: f64| run.records.iter().find(|r| (r.t - t).abs() < 1e-9).map(|r| r.tip.z).unwrap();
    let tip_v = (tip_at(6.0) - tip_at(5.0)) / 1.0;
    let tip_err = (tip_v - v).abs() / v;
    verdict(
        worst_haptic <= 0.05 && tip_err <= 0.05,
        format!(
            "haptic ż max rel. error after 5 s {:.2e}; tip ż over [5,6] s = {:.6} m/s ({:.2}%)",
            worst_haptic,
            tip_v,
            tip_err * 100.0
        ),
    )
}

fn c5_full_robot_timing() -> Verdict {
    let run = run_session(SessionConfig { mode: Mode::FullRobot, seed: SEED, ..Default::default() });
    let m = run.metrics().unwrap();
    match m.completion_time {
        Some(t) => verdict((t - 30.0).abs() <= 1.5, format!("completion at {t:.3} s (closed form 30 s, ±5%)")),
        None => verdict(false, "hole never completed"),
    }
}

fn c6_distraction_safety() -> Verdict {
    let cmp = compare_modes(&SessionConfig { seed: SEED, ..Default::default() }, Execution::default()).unwrap();
    let robot = cmp.get(Mode::FullRobot).unwrap();
    let human = cmp.get(Mode::FullHuman).unwrap();
    let shared = cmp.get(Mode::Shared).unwrap();
    let shared_ok = shared.distraction_movement < 5e-4;
    let robot_ok = (robot.distraction_movement - 0.02).abs() <= 0.001;
    let impulse_ok = shared.operator_impulse <= 0.75 * human.operator_impulse;
    verdict(
        shared_ok && robot_ok && impulse_ok,
        format!(
            "shared movement {:.3} mm (< 0.5: {shared_ok}); full_robot movement {:.3} mm (20 ± 1: {robot_ok}); \
             impulse shared {:.3} vs full_human {:.3} N·s (≥25% lower: {impulse_ok}); full_robot impulse {:.3} N·s",
            shared.distraction_movement * 1e3,
            robot.distraction_movement * 1e3,
            shared.operator_impulse,
            human.operator_impulse,
            robot.operator_impulse
        ),
    )
}

fn trace_bytes(run: &SessionRun) -> Vec<u8> {
    let mut buf = Vec::new();
    write_trace(&mut buf, &run.header, &run.records).unwrap();
    // the header names the mode; only the per-tick records are compared
    let first_newline = buf.iter().position(|&b| b == b'\n').unwrap();
    buf.split_off(first_newline + 1)
}

fn c7_mode_boundary() -> Verdict {
    let base = SessionConfig { seed: SEED, max_duration: 45.0, ..Default::default() };
    let configs = vec![
        SessionConfig { mode: Mode::Shared, pin_alpha: Some(1.0), ..base.clone() },
        SessionConfig { mode: Mode::FullRobot, ..base.clone() },
        SessionConfig { mode: Mode::Shared, pin_alpha: Some(0.0), ..base.clone() },
        SessionConfig { mode: Mode::FullHuman, ..base },
    ];
    let traces = map_with(&configs, Execution::default(), |c| trace_bytes(&run_session(c.clone())));
    let hi = traces[0] == traces[1];
    let lo = traces[2] == traces[3];
    verdict(hi && lo, format!("ᾱ≡1 vs full_robot identical: {hi}; ᾱ≡0 vs full_human identical: {lo}"))
}

fn c8_lateral_constraint() -> Verdict {
    let mut configs = Vec::new();
    for mode in Mode::ALL {
        for force in [Vec3::new(10.0, 0.0, 0.0), Vec3::new(0.0, -10.0, 0.0)] {
            configs.push(SessionConfig {
                mode,
                seed: SEED,
                max_duration: 45.0,
                operator: ProtocolParams { extra_force: force, ..Default::default() },
                ..Default::default()
            });
        }
    }
    let worst = map_with(&configs, Execution::default(), |c| {
        let run = run_session(c.clone());
        let cal = c.robot.calibration();
        let (p0, dir) = cal.planned_axis();
        let task = run.records.iter().map(|r| r.tip.xy().norm()).fold(0.0, f64::max);
        let robot = run
            .records
            .iter()
            .map(|r| {
                let rel = r.robot_x - p0;
                (rel - dir * rel.dot(&dir)).norm()
            })
            .fold(0.0, f64::max);
        (task, robot)
    });
    let task = worst.iter().map(|w| w.0).fold(0.0, f64::max);
    let robot = worst.iter().map(|w| w.1).fold(0.0, f64::max);
    verdict(
        task < 1e-3 && robot < 1e-3,
        format!("max tip deviation from axis {:.3} mm (task frame), {:.3} mm (robot frame)", task * 1e3, robot * 1e3),
    )
}

fn penrose_residual(j: &Matrix) -> f64 {
    let p = pseudoinverse(j);
    let scale = j.norm().max(1.0);
    let r1 = (j * &p * j - j).norm() / scale;
    let r2 = (&p * j * &p - &p).norm() / p.norm().max(1.0);
    let jp = j * &p;
    let pj = &p * j;
    let r3 = (&jp - jp.transpose()).norm();
    let r4 = (&pj - pj.transpose()).norm();
    r1.max(r2).max(r3).max(r4)
}

fn c9_numerical_hygiene() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);

    let mut pinv = 0.0f64;
    for _ in 0..500 {
        let (r, c) = (rng.random_range(1..7), rng.random_range(1..7));
        let mut j = Matrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0));
        if rng.random_bool(0.3) && r > 1 {
            // force a rank deficiency by duplicating a row
            let row = j.row(0).into_owned();
            j.set_row(r - 1, &row);
        }
        pinv = pinv.max(penrose_residual(&j));
    }

    let mut fd = 0.0f64;
    for chain in [SerialChain::default_arm(), SerialChain::revolute6()] {
        for _ in 0..50 {
            let q: Vec<f64> = (0..chain.dof()).map(|_| rng.random_range(-2.0..2.0)).collect();
            let jac = chain.jacobian(&q);
            let eps = 1e-6;
            for i in 0..chain.dof() {
                let mut qe = q.clone();
                qe[i] += eps;
                let col = (chain.forward(&qe) - chain.forward(&q)) / eps;
                for k in 0..3 {
                    fd = fd.max((col[k] - jac[(k, i)]).abs() / eps);
                }
            }
        }
    }

    let mut sg = 0.0f64;
    for _ in 0..20 {
        let (a, b, c) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let xs: Vec<f64> = (0..3000).map(|i| i as f64 * 1e-3).collect();
        let ys: Vec<f64> = xs.iter().map(|x| a + b * x + c * x * x).collect();
        let out = smooth_trace(&ys, 1.0, 1000.0);
        sg = out.values.iter().zip(&ys).map(|(u, v)| (u - v).abs()).fold(sg, f64::max);
    }

    let mut energy_ok = true;
    for kind in [HapticKinematicsKind::Gantry, HapticKinematicsKind::Revolute3] {
        let device = HapticDevice::new(HapticParams { kinematics: kind, ..Default::default() });
        let rest = device.rest_state();
        let mut s = device.state_from_joints(rest.theta, Vec3::new(0.3, -0.2, 0.4));
        let ke = |v: &Vec3| 0.5 * v.component_mul(&device.params.mass).dot(v);
        let mut e = ke(&s.theta_dot);
        for _ in 0..5000 {
            let cmd = ImpedanceCommand { w: 0.0, x_d: s.x, f_fdbk: Vec3::zeros() };
            let u = device.control(&s, &cmd);
            s = device.step(&s, &u, &Vec3::zeros(), 1e-3).unwrap();
            let e2 = ke(&s.theta_dot);
            energy_ok &= e2 <= e * (1.0 + 1e-12);
            e = e2;
        }
    }

    verdict(
        pinv <= 1e-9 && fd <= 10.0 && sg <= 1e-9 && energy_ok,
        format!(
            "Penrose residual {pinv:.1e}; Jacobian FD error {:.1e} (= {fd:.2}·ε); SG polynomial error {sg:.1e}; passive energy non-increasing: {energy_ok}",
            fd * 1e-6
        ),
    )
}

fn c10_determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SessionConfig { seed: SEED, ..Default::default() };
    let mut files = Vec::new();
    for i in 0..2 {
        let run = run_session(cfg.clone());
        let trace = dir.path().join(format!("trace{i}.ndjson"));
        let metrics = dir.path().join(format!("metrics{i}.json"));
        write_trace(std::io::BufWriter::new(std::fs::File::create(&trace).unwrap()), &run.header, &run.records)
            .unwrap();
        std::fs::write(&metrics, MetricsDocument::new(&run.header, run.metrics().unwrap()).to_json()).unwrap();
        files.push((std::fs::read(trace).unwrap(), std::fs::read(metrics).unwrap()));
    }
    let same_trace = files[0].0 == files[1].0;
    let same_metrics = files[0].1 == files[1].1;
    verdict(
        same_trace && same_metrics,
        format!("trace {} bytes identical: {same_trace}; metrics identical: {same_metrics}", files[0].0.len()),
    )
}

fn main() {
    let c = |name, secs, check| Criterion { name, budget: Duration::from_secs(secs), check };
    let criteria = [
        c("allocation law", 1, c1_allocation_law as fn() -> Verdict),
        c("attention bounds", 10, c2_attention_bounds),
        c("GMM segmentation", 5, c3_gmm_segmentation),
        c("autonomy equilibrium", 5, c4_autonomy_equilibrium),
        c("full-robot timing", 60, c5_full_robot_timing),
        c("distraction safety ordering", 300, c6_distraction_safety),
        c("mode boundary equivalence", 300, c7_mode_boundary),
        c("lateral constraint", 300, c8_lateral_constraint),
        c("numerical hygiene", 60, c9_numerical_hygiene),
        c("determinism", 300, c10_determinism),
    ];
    if run_all(&criteria) > 0 {
        std::process::exit(1);
    }
}
