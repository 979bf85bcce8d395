//! Acceptance suite. Every test prints one `[PASS]`/`[FAIL]` line.

mod common;

use std::io::Write;

use common::*;
use rand::RngCore;
use subcusum::detect::{
    calibrate_drift, cusum_step_known_u, drift_bounds, find_peaks, run_detector, subspace_cusum_step,
    CusumState, DetectorSpec, RunMode, SubspaceEstimate,
};
use subcusum::io;
use subcusum::model::{ScenarioModel, Waveform};
use subcusum::sim::{self, CurvePoint, DelayPlan, MonteCarlo, Scenario};
use subcusum::stream::Tick;
use subcusum::sync::{joint_estimate, SyncConfig};
use subcusum::{
    async_pipeline, top_singular_vector, CovarianceWindow, MultiSensorFrame, SensorStreams, SubspaceConfig,
    SubspaceCusum,
};

/// Written to the raw stderr handle so the line survives output capture.
fn verdict(id: &str, name: &str, pass: bool, detail: String) -> bool {
    let line = format!("criterion {id} [{}] {name}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().lock().write_all(line.as_bytes());
    pass
}

fn frame(t: Tick, v: &[f64]) -> MultiSensorFrame {
    MultiSensorFrame::new(t, v.to_vec()).unwrap()
}

#[test]
fn criterion_1_recursion_exactness() {
    let mut worst = 0.0f64;

    // known-u: u = e1, σ² = 1, ρ = 1, offset 2 ln 2
    let xs = [[2.0, 0.0], [0.0, 3.0], [0.5, 1.0], [-1.5, 0.5], [0.0, 2.0]];
    let hand = [
        2.613705638880109,
        1.2274112777602186,
        0.09111691664032806,
        0.9548225555204375,
        -0.4314718055994531,
    ];
    let mut s = CusumState::new(0.0, f64::INFINITY, 0);
    for (t, (x, h)) in xs.iter().zip(hand).enumerate() {
        s = cusum_step_known_u(&s, &frame(t as Tick + 1, x), &[1.0, 0.0], 1.0, 1.0).unwrap();
        worst = worst.max((s.statistic() - h).abs());
    }

    // Subspace-CUSUM with supplied û, d = 1.2
    let steps = [
        ([0.6, 0.8], [1.0, 2.0], 3.64),
        ([1.0, 0.0], [0.3, -4.0], 2.53),
        ([0.8, -0.6], [0.5, 0.5], 1.34),
        ([0.0, 1.0], [2.0, 1.5], 2.39),
        ([0.28, 0.96], [-1.0, -1.0], 2.7276),
    ];
    let mut s = CusumState::new(1.2, f64::INFINITY, 3);
    for (t, (u, x, h)) in steps.iter().enumerate() {
        let t = t as Tick + 1;
        let est = SubspaceEstimate {
            u: u.to_vec(),
            window_start: t + 1,
            window_len: 3,
        };
        s = subspace_cusum_step(&s, &frame(t, x), &est).unwrap();
        worst = worst.max((s.statistic() - h).abs());
    }

    // streaming detector on x_t = a_t (1,1)/√2, where û = (1,1)/√2 and the
    // projection energy is a_t²; w = 2, d = 1.5
    let a = [1.0, 2.0, 0.5, 1.5, 1.0, 1.0, 1.0];
    let v = std::f64::consts::FRAC_1_SQRT_2;
    let series: Vec<f64> = a.iter().map(|x| x * v).collect();
    let streams = SensorStreams::new(1, vec![series.clone(), series]).unwrap();
    let r = async_pipeline(&streams, &SubspaceConfig::synchronous(2, 2, 1.5), f64::INFINITY, RunMode::Full)
        .unwrap()
        .report;
    let hand = [-0.5, 2.5, 1.25, 2.0, 1.5];
    assert_eq!(r.trajectory.len(), 5);
    for ((_, s), h) in r.trajectory.iter().zip(hand) {
        worst = worst.max((s - h).abs());
    }

    let pass = worst <= 1e-12;
    assert!(verdict("1", "recursion exactness", pass, format!("max deviation {worst:.2e} (tol 1e-12)")));
}

#[test]
fn criterion_2_eigen_oracle_equivalence() {
    let mut r = rng(2024);
    let mut worst = 1.0f64;
    for case in 0..100 {
        let k = 2 + case % 9;
        let u = random_unit(&mut r, k);
        let theta = 0.5 + 9.5 * (case as f64 / 99.0);
        let m: Vec<f64> = if case % 2 == 0 {
            (0..k * k)
                .map(|ij| {
                    let (i, j) = (ij / k, ij % k);
                    theta * u[i] * u[j] + if i == j { 1.0 } else { 0.0 }
                })
                .collect()
        } else {
            // scatter matrix of 40 draws from N(0, I + θuuᵀ)
            let frames: Vec<Vec<f64>> = (0..40)
                .map(|_| {
                    let z = theta.sqrt() * gaussian(&mut r);
                    (0..k).map(|i| gaussian(&mut r) + z * u[i]).collect()
                })
                .collect();
            naive_scatter(&frames)
        };
        let (_, oracle) = jacobi_top(&m, k);
        let cov = CovarianceWindow::from_matrix(k, 1, m).unwrap();
        let top = top_singular_vector(&cov, 1e-10, subcusum::linalg::default_max_iter(k, 1e-10)).unwrap();
        worst = worst.min(dot(&top.vector, &oracle).abs());
    }
    let pass = worst >= 1.0 - 1e-8;
    assert!(verdict("2", "eigen-oracle equivalence", pass, format!("min |ûᵀu_oracle| = 1 - {:.2e} over 100 matrices", 1.0 - worst)));
}

#[test]
fn criterion_3_noiseless_synchronization() {
    let mut r = rng(3);
    let mut exact = 0;
    let mut worst = 1.0f64;
    let tau_max = 12i64;
    for _ in 0..50 {
        let k = 2 + (r.next_u32() % 7) as usize;
        let pulse: Vec<f64> = (0..24).map(|_| gaussian(&mut r)).collect();
        let alpha: Vec<f64> = (0..k)
            .map(|_| {
                let a = 0.3 + (r.next_u32() % 1000) as f64 / 1000.0;
                if r.next_u32() % 2 == 0 { a } else { -a }
            })
            .collect();
        let reference = tau_max + 5;
        let onsets: Vec<Tick> = (0..k)
            .map(|i| if i == 0 { reference } else { reference + (r.next_u32() % 25) as Tick - tau_max })
            .collect();
        let truth: Vec<Tick> = onsets.iter().map(|o| o - reference).collect();
        let model = ScenarioModel::new(0.0, alpha.clone(), Waveform::tabulated(pulse), onsets).unwrap();
        let horizon = reference + tau_max + 40;
        let streams = sim::generate_episode(&model, horizon, 0).unwrap();
        let est = joint_estimate(&streams, 1, horizon as usize, &SyncConfig::new(tau_max as usize)).unwrap();
        if est.profile.shifts() == truth.as_slice() {
            exact += 1;
        }
        let n = alpha.iter().map(|a| a * a).sum::<f64>().sqrt();
        let u: Vec<f64> = alpha.iter().map(|a| a / n).collect();
        worst = worst.min(dot(&est.u_hat, &u).abs());
    }
    let pass = exact == 50 && worst >= 1.0 - 1e-6;
    assert!(verdict(
        "3",
        "noiseless synchronization",
        pass,
        format!("{exact}/50 exact delay profiles, min |ûᵀu| = 1 - {:.2e}", 1.0 - worst)
    ));
}

fn spiked_scenarios(k: usize, rho: f64) -> (Scenario, Scenario) {
    let noise = Scenario::pure_noise(k, 1.0).unwrap();
    let a = (rho / k as f64).sqrt();
    let change = Scenario::fixed(ScenarioModel::new(1.0, vec![a; k], Waveform::step(), vec![0; k]).unwrap());
    (noise, change)
}

#[test]
fn criterion_4_projection_energy_expectations() {
    let (k, w) = (5, 200);
    let cfg = SubspaceConfig::synchronous(k, w, 0.0);
    // 25 episodes × 4000 processed ticks
    let mc = MonteCarlo::new(25, 4000 + w as Tick, 41);
    let mut pass = true;
    let mut detail = Vec::new();
    let (noise, _) = spiked_scenarios(k, 1.0);
    let pre = sim::mean_projection_energy(&cfg, &noise, &mc, 0).unwrap();
    pass &= (pre - 1.0).abs() <= 0.02;
    detail.push(format!("pre {pre:.4} vs 1 ({:+.2}%)", 100.0 * (pre - 1.0)));
    for rho in [1.0, 2.0] {
        let (_, change) = spiked_scenarios(k, rho);
        let post = sim::mean_projection_energy(&cfg, &change, &mc, 1 << 20).unwrap();
        let theory = drift_bounds(1.0, rho, k, w).unwrap().upper;
        let rel = (post - theory) / theory;
        pass &= rel.abs() <= 0.05;
        detail.push(format!("rho={rho}: post {post:.4} vs {theory:.4} ({:+.2}%)", 100.0 * rel));
    }
    assert!(verdict("4", "projection energy expectations", pass, detail.join("; ")));
}

fn increment_means(cfg: &SubspaceConfig, scenario: &Scenario, mc: &MonteCarlo, stream_base: u64) -> Vec<f64> {
    (0..mc.trials as u64)
        .map(|i| {
            let episode = sim::trial_episode(scenario, mc.horizon, mc.seed, stream_base + i).unwrap();
            let mut det = SubspaceCusum::new(cfg.clone(), scenario.k(), f64::INFINITY).unwrap();
            let r = run_detector(&mut det, episode, RunMode::Full).unwrap();
            r.energies.iter().map(|(_, e)| e - cfg.drift).sum::<f64>() / r.energies.len() as f64
        })
        .collect()
}

#[test]
fn criterion_5_drift_sign() {
    let (k, w) = (5, 200);
    let mut pass = true;
    let mut detail = Vec::new();
    for rho in [1.0, 2.0] {
        let bounds = drift_bounds(1.0, rho, k, w).unwrap();
        let d = bounds.midpoint().unwrap();
        let cfg = SubspaceConfig::synchronous(k, w, d);
        let (noise, change) = spiked_scenarios(k, rho);
        let mc = MonteCarlo::new(20, 2000 + w as Tick, 5);
        let (pre, pre_se) = mean_and_se(&increment_means(&cfg, &noise, &mc, 0));
        let (post, post_se) = mean_and_se(&increment_means(&cfg, &change, &mc, 1000));
        pass &= pre + 3.0 * pre_se < 0.0 && post - 3.0 * post_se > 0.0;
        detail.push(format!(
            "rho={rho}, d={d:.3}: pre {pre:.4}±{pre_se:.4}, post {post:.4}±{post_se:.4}"
        ));
    }
    assert!(verdict("5", "drift-sign property", pass, detail.join("; ")));
}

struct Panel {
    sub: Vec<CurvePoint>,
    one: Vec<CurvePoint>,
    drift: f64,
}

const TARGET_ARLS: [f64; 5] = [100.0, 200.0, 500.0, 1000.0, 2000.0];

fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(|i| lo + step * i as f64).collect()
}

fn operating_panel(mu: f64, sub_grid: &[f64], one_grid: &[f64], seed: u64) -> Panel {
    let (k, w, tau_max) = (50, 20, 20);
    let noise = Scenario::pure_noise(k, 1.0).unwrap();
    let base = ScenarioModel::pure_noise_with(1.0, vec![mu; k], Waveform::step()).unwrap();
    let change = Scenario::new(base, DelayPlan::Uniform { change_point: 0, tau_max });
    let rho = k as f64 * mu * mu;
    let closed = drift_bounds(1.0, rho, k, w).unwrap();
    let pilot_cfg = SubspaceConfig::asynchronous(w, 0.0, SyncConfig::new(tau_max));
    let drift = sim::default_drift(&closed, &pilot_cfg, &noise, &change, &MonteCarlo::new(8, 3000, seed)).unwrap();
    let sub = DetectorSpec::Subspace(SubspaceConfig::asynchronous(w, drift, SyncConfig::new(tau_max)));
    let one = DetectorSpec::OneShot { mu, sigma2: 1.0 };
    let mc = MonteCarlo::new(500, 40_000, seed);
    let curve = |spec: &DetectorSpec, grid: &[f64]| sim::operating_curve(spec, &noise, &change, grid, &mc, &mc).unwrap();
    Panel {
        sub: curve(&sub, sub_grid),
        one: curve(&one, one_grid),
        drift,
    }
}

/// EDD at `arl`, linear in log ARL between the bracketing grid points.
fn edd_at(curve: &[CurvePoint], arl: f64) -> Option<f64> {
    curve.windows(2).find_map(|p| {
        let (a0, a1) = (p[0].arl.mean, p[1].arl.mean);
        (a0 <= arl && arl <= a1 && a1 > a0).then(|| {
            let f = (arl.ln() - a0.ln()) / (a1.ln() - a0.ln());
            p[0].edd.mean + f * (p[1].edd.mean - p[0].edd.mean)
        })
    })
}

fn matched(panel: &Panel) -> Vec<(f64, Option<f64>, Option<f64>)> {
    TARGET_ARLS
        .iter()
        .map(|&a| (a, edd_at(&panel.sub, a), edd_at(&panel.one, a)))
        .collect()
}

fn describe(rows: &[(f64, Option<f64>, Option<f64>)]) -> String {
    rows.iter()
        .map(|(a, s, o)| {
            let f = |x: &Option<f64>| x.map_or("n/a".to_string(), |v| format!("{v:.1}"));
            format!("ARL {a}: sub {} / one-shot {}", f(s), f(o))
        })
        .collect::<Vec<_>>()
        .join(", ")
}

#[test]
fn criterion_6a_weak_signal_dominance() {
    let panel = operating_panel(0.1, &grid(4.0, 60.0, 2.0), &grid(0.4, 6.6, 0.2), 61);
    let rows = matched(&panel);
    let pass = rows.iter().all(|(_, s, o)| matches!((s, o), (Some(s), Some(o)) if s < o));
    assert!(verdict(
        "6a",
        "mu=0.1 Subspace-CUSUM EDD below one-shot at every matched ARL",
        pass,
        format!("d={:.4}; {}", panel.drift, describe(&rows))
    ));
}

#[test]
fn criterion_6b_large_arl_dominance() {
    let panel = operating_panel(0.25, &grid(1.5, 18.0, 0.75), &grid(0.4, 8.6, 0.2), 62);
    let rows = matched(&panel);
    let large: Vec<_> = rows.iter().filter(|(a, _, _)| *a >= 1000.0).collect();
    let pass = large.iter().all(|(_, s, o)| matches!((s, o), (Some(s), Some(o)) if s < o));
    let small_one_shot_wins = matches!(rows[0], (_, Some(s), Some(o)) if o < s);
    assert!(verdict(
        "6b",
        "mu=0.25 Subspace-CUSUM EDD below one-shot at large ARL",
        pass,
        format!(
            "d={:.4}; {}; one-shot ahead at ARL {}: {small_one_shot_wins}",
            panel.drift,
            describe(&rows),
            TARGET_ARLS[0]
        )
    ));
}

#[test]
fn criterion_7_window_accounting() {
    let mut alarms = 0;
    let mut violations = 0;
    let mut check = |r: &subcusum::StoppingReport, w: usize| {
        if let (Some(c), Some(rep)) = (r.crossed_at, r.reported_at) {
            alarms += 1;
            if rep - c != w as Tick {
                violations += 1;
            }
        }
    };
    for (i, &(k, w, tau_max)) in [(3, 4, 0), (5, 10, 3), (8, 20, 6), (4, 1, 0)].iter().enumerate() {
        let base = ScenarioModel::pure_noise_with(1.0, vec![0.8; k], Waveform::step()).unwrap();
        let change = Scenario::new(base, DelayPlan::Uniform { change_point: 50, tau_max });
        for trial in 0..20u64 {
            let episode = sim::trial_episode(&change, 400, 7 + i as u64, trial).unwrap();
            let streams = SensorStreams::from_frames(&episode.collect::<Vec<_>>()).unwrap();
            let mut configs = vec![SubspaceConfig::synchronous(k, w, 1.2)];
            if w >= 2 {
                configs.push(SubspaceConfig::asynchronous(w, 1.2, SyncConfig::new(tau_max)));
            }
            for cfg in configs {
                for (b, mode) in [(3.0, RunMode::StopAtAlarm), (15.0, RunMode::Full), (0.0, RunMode::StopAtAlarm)] {
                    let r = async_pipeline(&streams, &cfg, b, mode).unwrap().report;
                    check(&r, w);
                }
            }
        }
    }
    let pass = violations == 0 && alarms > 0;
    assert!(verdict(
        "7",
        "window accounting",
        pass,
        format!("{alarms} alarms, {violations} with reported_at - crossed_at != w")
    ));
}

#[test]
fn criterion_8_seismic_workflow() {
    let Ok(path) = std::env::var("SUBCUSUM_SEISMIC_CSV") else {
        let _ = std::io::stderr()
            .lock()
            .write_all(b"criterion 8 [SKIP] seismic workflow: set SUBCUSUM_SEISMIC_CSV to a sensor CSV to run\n");
        return;
    };
    let rate: f64 = std::env::var("SUBCUSUM_SEISMIC_RATE")
        .ok()
        .and_then(|r| r.parse().ok())
        .unwrap_or(250.0);
    let raw = io::read_sensor_csv_path(std::path::Path::new(&path)).unwrap();
    let streams = raw.normalized(None).unwrap();
    let (w, tau_max) = (200, 100);
    let prefix = (500.0 * rate) as usize;
    let pilot = SubspaceConfig::asynchronous(w, 0.0, SyncConfig::new(tau_max));
    let head = SensorStreams::new(
        streams.origin(),
        (0..streams.k()).map(|i| streams.series(i)[..prefix.min(streams.len())].to_vec()).collect(),
    )
    .unwrap();
    let energies: Vec<f64> = async_pipeline(&head, &pilot, f64::INFINITY, RunMode::Full)
        .unwrap()
        .report
        .energies
        .iter()
        .map(|(_, e)| *e)
        .collect();
    let d = calibrate_drift(&energies, 1.5).unwrap();
    let cfg = SubspaceConfig::asynchronous(w, d, SyncConfig::new(tau_max));
    let report = async_pipeline(&streams, &cfg, f64::INFINITY, RunMode::Full).unwrap().report;
    let mut peaks = find_peaks(&report.trajectory, (60.0 * rate) as Tick, 3);
    peaks.sort_by_key(|p| p.0);
    let secs: Vec<f64> = peaks.iter().map(|(t, _)| (t - streams.origin()) as f64 / rate).collect();
    let catalog = [594.0, 2123.7, 6369.2];
    let pass = secs.len() == 3 && secs.iter().zip(catalog).all(|(s, c)| (s - c).abs() <= 15.0);
    assert!(verdict("8", "seismic workflow", pass, format!("d={d:.4}, peaks at {secs:?} s vs catalog {catalog:?} s")));
}

#[test]
fn criterion_9_determinism() {
    let render = || {
        let model = ScenarioModel::new(1.0, vec![0.5, 0.3, -0.2], Waveform::sine_cycle(16), vec![30, 33, 28]).unwrap();
        let streams = sim::generate_episode(&model, 300, 77).unwrap();
        let mut episode = Vec::new();
        io::write_sensor_csv(&mut episode, &streams).unwrap();

        let base = ScenarioModel::pure_noise_with(1.0, vec![0.4; 4], Waveform::step()).unwrap();
        let change = Scenario::new(base, DelayPlan::Uniform { change_point: 0, tau_max: 2 });
        let noise = Scenario::pure_noise(4, 1.0).unwrap();
        let spec = DetectorSpec::Subspace(SubspaceConfig::asynchronous(6, 1.4, SyncConfig::new(2)));
        let mc = MonteCarlo::new(16, 500, 78);
        let points = sim::operating_curve(&spec, &noise, &change, &[2.0, 4.0, 8.0], &mc, &mc).unwrap();
        let mut curve = Vec::new();
        io::write_curve_csv(&mut curve, &points).unwrap();
        (episode, curve)
    };
    let (a, b) = (render(), render());
    let pass = a == b;
    assert!(verdict(
        "9",
        "determinism",
        pass,
        format!("episode {} bytes, curve {} bytes, identical: {pass}", a.0.len(), a.1.len())
    ));
}

