use subcusum::detect::{calibrate_drift, drift_bounds, known_subspace_offset};
use subcusum::model::{ScenarioModel, Waveform};
use subcusum::sim::{self, DelayPlan, MonteCarlo, Scenario};
use subcusum::{async_pipeline, DetectorSpec, RunMode, SubspaceConfig, SyncConfig};

#[test]
fn calibrated_drift_sits_near_one_and_a_half() {
    let (k, w) = (5, 200);
    let cfg = SubspaceConfig::synchronous(k, w, 0.0);
    let noise = Scenario::pure_noise(k, 1.0).unwrap();
    let lower = drift_bounds(1.0, 1.0, k, w).unwrap().lower;
    for seed in 0..5 {
        let episode = sim::trial_episode(&noise, 3000, seed, 0).unwrap();
        let streams = subcusum::SensorStreams::from_frames(&episode.collect::<Vec<_>>()).unwrap();
        let report = async_pipeline(&streams, &cfg, f64::INFINITY, RunMode::Full).unwrap().report;
        let energies: Vec<f64> = report.energies.iter().map(|(_, e)| *e).collect();
        let d = calibrate_drift(&energies, 1.5).unwrap();
        assert!((1.4 * lower..=1.6 * lower).contains(&d), "seed {seed}: d = {d}");
    }
}

#[test]
fn noiseless_delayed_injection() {
    let tau = 100;
    let onsets = vec![tau + 3, tau, tau + 5, tau + 1];
    let alpha = vec![1.0, -0.6, 0.8, 0.5];
    let model = ScenarioModel::new(0.0, alpha, Waveform::sine_cycle(16), onsets.clone()).unwrap();
    let streams = subcusum::generate_episode(&model, 400, 0).unwrap();
    let truth: Vec<i64> = onsets.iter().map(|o| o - onsets[0]).collect();
    let cfg = SubspaceConfig::asynchronous(40, 0.05, SyncConfig::new(6));
    let out = async_pipeline(&streams, &cfg, 1.0, RunMode::Full).unwrap();
    let reported = out.report.reported_at.expect("alarm");
    assert!(reported >= tau, "reported at {reported}");

    // windows [t+41, t+80] holding every pulse (ticks 101..=121)
    let covering: Vec<_> = out
        .delays
        .iter()
        .filter(|r| r.t + 41 <= tau + 1 && r.t + 80 >= tau + 5 + 16)
        .collect();
    assert!(!covering.is_empty());
    for r in covering {
        assert_eq!(r.profile.shifts(), truth.as_slice(), "t = {}", r.t);
    }
}

#[test]
fn arl_calibration_sweep_hits_target() {
    let k = 5;
    let spec = DetectorSpec::Subspace(SubspaceConfig::synchronous(k, 10, 1.5));
    let noise = Scenario::pure_noise(k, 1.0).unwrap();
    let grid: Vec<f64> = (1..=16).map(|i| i as f64).collect();
    let sweep = sim::arl_curve(&spec, &noise, &grid, &MonteCarlo::new(400, 20_000, 100)).unwrap();

    let target = 200.0f64;
    let j = sweep.iter().position(|e| e.mean >= target).expect("grid reaches the target");
    assert!(j > 0);
    let (lo, hi) = (&sweep[j - 1], &sweep[j]);
    let f = (target.ln() - lo.mean.ln()) / (hi.mean.ln() - lo.mean.ln());
    let b = lo.b + f * (hi.b - lo.b);

    let check = sim::estimate_arl(&spec, &noise, b, &MonteCarlo::new(400, 20_000, 101)).unwrap();
    assert!((check.mean - target).abs() <= 0.2 * target, "b = {b}: ARL {}", check.mean);
}

#[test]
fn unit_increments_give_edd_of_b() {
    // x = (c, 0) with c² − offset = 1 on u = e1
    let offset = known_subspace_offset(1.0, 1.0);
    let model = ScenarioModel::new(0.0, vec![(1.0 + offset).sqrt(), 0.0], Waveform::step(), vec![0, 0]).unwrap();
    let spec = DetectorSpec::KnownSubspace {
        u: vec![1.0, 0.0],
        sigma2: 1.0,
        rho: 1.0,
    };
    let edd = sim::estimate_edd(&spec, &Scenario::fixed(model), 5.0 - 1e-9, &MonteCarlo::new(3, 50, 0)).unwrap();
    assert_eq!(edd.mean, 5.0);
    assert_eq!(edd.censored, 0);
}

#[test]
fn stronger_shift_is_detected_sooner() {
    let k = 10;
    let spec = DetectorSpec::Subspace(SubspaceConfig::synchronous(k, 10, 1.3));
    let mc = MonteCarlo::new(100, 5000, 7);
    let edd = |mu: f64| {
        let base = ScenarioModel::pure_noise_with(1.0, vec![mu; k], Waveform::step()).unwrap();
        let change = Scenario::new(base, DelayPlan::Uniform { change_point: 0, tau_max: 0 });
        sim::estimate_edd(&spec, &change, 10.0, &mc).unwrap()
    };
    let (strong, weak) = (edd(0.25), edd(0.1));
    assert!(strong.mean < weak.mean, "{} vs {}", strong.mean, weak.mean);
}

#[test]
fn edd_grows_with_arl_along_a_curve() {
    let k = 4;
    let base = ScenarioModel::pure_noise_with(1.0, vec![0.5; k], Waveform::step()).unwrap();
    let change = Scenario::new(base, DelayPlan::Uniform { change_point: 0, tau_max: 2 });
    let noise = Scenario::pure_noise(k, 1.0).unwrap();
    let spec = DetectorSpec::Subspace(SubspaceConfig::asynchronous(8, 1.4, SyncConfig::new(2)));
    let mc = MonteCarlo::new(60, 3000, 5);
    let curve = sim::operating_curve(&spec, &noise, &change, &[1.0, 3.0, 6.0, 10.0], &mc, &mc).unwrap();
    for p in curve.windows(2) {
        assert!(p[0].arl.mean <= p[1].arl.mean);
        assert!(p[0].edd.mean <= p[1].edd.mean);
    }
}
