//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Positional arguments select checks by substring.
//!
//! `JOINERY_ACCEPTANCE_CACHE=<dir>` keeps trained checkpoints between runs;
//! without it every model is trained from scratch.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::Instant;

use joinery::suite::{run_suite, SuiteManifest, SuiteReport};
use joinery_core::data::{subsample_indices, Butterworth};
use joinery_core::eval::pool_actions;
use joinery_core::policy::{
    bimodal_dataset, bimodal_side, cosine_schedule, ddim_sample, ddim_sample_traced, ddim_step, draw_noise, grad_check,
    train, ArchConfig, NoisePredictor, NoiseSchedule, Policy, PolicyConfig, StepCoefficients, Tensor, UNet, COSINE_OFFSET,
};
use joinery_core::rotation::{quat_to_rot6d, rot6d_to_rotmat, slerp, Quat};
use joinery_core::sim::sample_mortise_offset;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Returns the exact noise for a known clean sample.
struct Oracle {
    a0: Vec<f64>,
    schedule: NoiseSchedule,
}

impl NoisePredictor for Oracle {
    fn predict(&mut self, x: &Tensor, k: usize) -> Tensor {
        let ab = self.schedule.alpha_bar[k];
        let data = x.data.iter().zip(&self.a0).map(|(v, a)| (v - ab.sqrt() * a) / (1.0 - ab).sqrt()).collect();
        Tensor { data, ..*x }
    }
}

/// A randomly initialized network with fixed conditioning.
struct NetPredictor {
    net: UNet,
    params: Vec<f64>,
    obs: Tensor,
}

impl NoisePredictor for NetPredictor {
    fn predict(&mut self, x: &Tensor, k: usize) -> Tensor {
        self.net.predict(&self.params, x.clone(), self.obs.clone(), &vec![k as f64; x.b])
    }
}

fn math_kernel() -> Check {
    // schedule from the closed form
    let s = cosine_schedule(128, COSINE_OFFSET);
    let f = |k: f64| ((k / 128.0 + 0.008) / 1.008 * FRAC_PI_2).cos().powi(2);
    ensure(s.alpha_bar[0] == 1.0, || format!("alpha_bar[0] = {}", s.alpha_bar[0]))?;
    ensure(s.alpha_bar[128] < 1e-3, || format!("alpha_bar[K] = {}", s.alpha_bar[128]))?;
    ensure(s.alpha_bar.windows(2).all(|w| w[1] < w[0]), || "alpha_bar not decreasing".into())?;
    ensure(s.beta[1..].iter().all(|&b| b > 0.0 && b <= 0.999), || "beta outside (0, 0.999]".into())?;
    let worst = (1..128).map(|k| (s.alpha_bar[k] - f(k as f64) / f(0.0)).abs()).fold(0.0, f64::max);
    ensure(worst < 1e-12, || format!("alpha_bar off the closed form by {worst}"))?;

    // forward noising variance at A^0 = 0
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst_var = 0.0f64;
    for k in [1, 16, 64, 128] {
        let eps = gaussian(&mut rng, 10_000);
        let x = s.forward_noise(&vec![0.0; eps.len()], k, &eps);
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (x.len() - 1) as f64;
        worst_var = worst_var.max((var / (1.0 - s.alpha_bar[k]) - 1.0).abs());
    }
    ensure(worst_var < 0.03, || format!("forward variance off by {:.2}%", 100.0 * worst_var))?;

    // eta = 0 is deterministic whatever the sampler rng
    let arch = ArchConfig { channels: vec![8, 16], kernel: 3, groups: 4, time_dim: 8 };
    let net = UNet::new(arch, 15, 8).unwrap();
    let params = net.init_params(&mut ChaCha8Rng::seed_from_u64(2));
    let obs = Tensor::from_columns(&[&gaussian(&mut rng, 15)[..]]);
    let mut pred = NetPredictor { net, params, obs };
    let init = Tensor::from_vec(gaussian(&mut rng, 72), 9, 1, 8);
    let a = ddim_sample(&mut pred, &s, 32, 0.0, init.clone(), true, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let b = ddim_sample(&mut pred, &s, 32, 0.0, init, true, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    ensure(a.data.iter().zip(&b.data).all(|(x, y)| x.to_bits() == y.to_bits()), || "eta = 0 runs differ".into())?;

    // an exact noise oracle recovers A^0 at every step
    let a0: Vec<f64> = (0..72).map(|i| (i as f64 * 0.41).sin() * 0.8).collect();
    let mut oracle = Oracle { a0: a0.clone(), schedule: s.clone() };
    let mut inv = 0.0f64;
    for eta in [0.0, 0.5, 1.0] {
        let init = Tensor::from_vec(gaussian(&mut rng, 72), 9, 1, 8);
        ddim_sample_traced(&mut oracle, &s, 32, eta, init, false, &mut rng, &mut |_, est| {
            inv = est.iter().zip(&a0).map(|(e, a)| (e - a).abs()).fold(inv, f64::max);
        })
        .unwrap();
    }
    ensure(inv < 1e-10, || format!("oracle inversion error {inv:e}"))?;

    // eta = 1 with K_inf = K against the DDPM posterior q(x_{k-1} | x_k, x_0)
    let (x0, xk, n) = (0.3, -0.5, 10_000);
    for k in [2usize, 40, 100] {
        let (ab, abp) = (s.alpha_bar[k], s.alpha_bar[k - 1]);
        let beta = 1.0 - ab / abp;
        let want_mean = abp.sqrt() * beta / (1.0 - ab) * x0 + (1.0 - beta).sqrt() * (1.0 - abp) / (1.0 - ab) * xk;
        let want_var = (1.0 - abp) / (1.0 - ab) * beta;
        let eps = (xk - ab.sqrt() * x0) / (1.0 - ab).sqrt();
        let c = StepCoefficients::new(&s, k, k - 1, 1.0);
        let draws: Vec<f64> =
            (0..n).map(|_| ddim_step(&c, &[xk], &[eps], Some(&[rng.sample(StandardNormal)]), false).0[0]).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let (se_mean, se_var) = ((want_var / n as f64).sqrt(), want_var * (2.0 / (n - 1) as f64).sqrt());
        ensure((mean - want_mean).abs() < 3.0 * se_mean, || format!("k={k}: mean {mean} vs {want_mean}"))?;
        ensure((var - want_var).abs() < 3.0 * se_var, || format!("k={k}: var {var} vs {want_var}"))?;
    }
    Ok(format!("forward variance within {:.2}%, inversion error {inv:.1e}", 100.0 * worst_var))
}

fn gradient() -> Check {
    let arch = ArchConfig { channels: vec![8], kernel: 3, groups: 2, time_dim: 8 };
    let net = UNet::new(arch, 15, 8).unwrap();
    let params = net.init_params(&mut ChaCha8Rng::seed_from_u64(5));
    let sched = cosine_schedule(32, COSINE_OFFSET);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let samples: Vec<_> = (0..4)
        .map(|_| joinery_core::data::TrainingSample {
            obs: (0..15).map(|_| rng.random_range(-1.0..1.0)).collect(),
            actions: (0..72).map(|_| rng.random_range(-1.0..1.0)).collect(),
        })
        .collect();
    let noise = draw_noise(&mut rng, samples.len(), 32, 72);
    let g = grad_check(&net, &sched, &params, &samples, &noise, 50, 7);
    ensure(g.probes.len() == 50, || format!("{} probes", g.probes.len()))?;
    ensure(g.max_rel_err < 1e-5, || format!("max relative error {:e}", g.max_rel_err))?;
    Ok(format!("50 probes over {} parameters, max relative error {:.1e}", params.len(), g.max_rel_err))
}

fn signals() -> Check {
    let fs = 60.0;
    for (order, fc) in [(1, 10.0), (4, 1.0)] {
        let bw = Butterworth::lowpass(order, fc, fs).map_err(|e| e.to_string())?;
        let dc = bw.filtfilt(&vec![3.5; 600]);
        let dc_err = dc.iter().map(|v| (v - 3.5).abs()).fold(0.0, f64::max);
        ensure(dc_err < 1e-9, || format!("order {order}: DC error {dc_err:e}"))?;
        ensure((bw.magnitude(0.0, fs) - 1.0).abs() < 1e-9, || format!("order {order}: DC gain {}", bw.magnitude(0.0, fs)))?;
        // steady-state amplitude of a sinusoid at the cutoff, single pass
        let n = 60 * 200;
        let x: Vec<f64> = (0..n).map(|i| (2.0 * PI * fc * i as f64 / fs).sin()).collect();
        let y = bw.filter(&x);
        let tail = &y[n - 600..];
        let amp = (2.0 * tail.iter().map(|v| v * v).sum::<f64>() / tail.len() as f64).sqrt();
        for db in [20.0 * amp.log10(), 20.0 * bw.magnitude(fc, fs).log10()] {
            ensure((db + 3.01).abs() < 0.05, || format!("order {order}: {db:.3} dB at cutoff"))?;
        }
    }
    let bw4 = Butterworth::lowpass(4, 1.0, fs).map_err(|e| e.to_string())?;
    let h30 = bw4.magnitude(30.0, fs);
    let att = -20.0 * h30.max(1e-300).log10();
    ensure(att >= 110.0, || format!("30 Hz attenuation {att:.1} dB"))?;
    // zero phase: a symmetric pulse stays symmetric about its peak
    // long enough for the slowest pole to die out before either edge
    let c = 1500;
    let pulse: Vec<f64> = (0..=2 * c).map(|i| (-((i as f64 - c as f64) / 20.0).powi(2)).exp()).collect();
    let y = bw4.filtfilt(&pulse);
    let peak = y.iter().enumerate().fold(0, |b, (i, v)| if *v > y[b] { i } else { b });
    let asym = (1..c).map(|i| (y[c + i] - y[c - i]).abs()).fold(0.0, f64::max);
    ensure(peak == c && asym < 1e-9, || format!("peak at {peak}, asymmetry {asym:e}"))?;

    // slerp
    let (q0, q1) = (Quat::about_y(0.0), Quat::about_y(FRAC_PI_2));
    let mid = slerp(q0, q1, 0.5).to_array();
    let want = Quat::about_y(FRAC_PI_4).to_array();
    let d = mid.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ensure(d < 1e-9, || format!("slerp midpoint off by {d:e}"))?;
    let ends = [(slerp(q0, q1, 0.0), q0), (slerp(q0, q1, 1.0), q1)];
    ensure(
        ends.iter().all(|(a, b)| a.to_array().iter().zip(b.to_array()).all(|(x, y)| (x - y).abs() < 1e-12)),
        || "slerp endpoints inexact".into(),
    )?;

    // rot6d round trip over random rotations
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let v = gaussian(&mut rng, 4);
        let q = Quat::from_array([v[0], v[1], v[2], v[3]]).normalized();
        let m = rot6d_to_rotmat(&quat_to_rot6d(q)).map_err(|e| e.to_string())?;
        worst = worst.max((1.0 - q.dot(Quat::from_matrix(&m)).abs()).abs());
    }
    ensure(worst < 1e-9, || format!("rot6d round trip off by {worst:e}"))?;
    ensure(quat_to_rot6d(Quat::about_y(0.0)) == [1.0, 0.0, 0.0, 0.0, 1.0, 0.0], || "identity rot6d".into())?;

    // pooling
    let ramp: Vec<[f64; 2]> = (0..12).map(|i| [3.0 * i as f64, -(i as f64)]).collect();
    ensure(pool_actions(&ramp, 2) == ramp, || "T_a = 2 must not pool".into())?;
    let pooled = pool_actions(&ramp, 4);
    ensure(pooled.len() == 12 && (1..11).all(|i| (pooled[i][0] - ramp[i][0]).abs() < 1e-12), || "ramp interior moved".into())?;
    let mut impulse = vec![[0.0]; 21];
    impulse[10] = [1.0];
    let spread = pool_actions(&impulse, 8);
    ensure(
        (0..21).all(|i| (spread[i][0] - if (7..=13).contains(&i) { 1.0 / 7.0 } else { 0.0 }).abs() < 1e-12),
        || format!("impulse spread {spread:?}"),
    )?;

    // subsampling
    ensure(subsample_indices(64, 64) == (0..64).collect::<Vec<_>>(), || "N = 64 not identity".into())?;
    ensure(subsample_indices(127, 64) == (0..64).map(|i| 2 * i).collect::<Vec<_>>(), || "N = 127 not even".into())?;
    let short = subsample_indices(10, 64);
    ensure(
        short.len() == 64 && short[0] == 0 && short[63] == 9 && short.windows(2).all(|w| w[0] <= w[1]) && (0..10).all(|i| short.contains(&i)),
        || format!("N = 10: {short:?}"),
    )?;
    Ok(format!("rot6d worst {worst:.1e}, |H(30 Hz)| = {h30:.1e}"))
}

fn offsets() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let n = 10_000;
    let inner = (0..n).filter(|_| sample_mortise_offset(&mut rng, 10.0).abs() <= 5.0).count();
    let p = inner as f64 / n as f64;
    ensure((p - 0.5).abs() <= 0.02, || format!("P(|offset| <= 5) = {p}"))?;
    Ok(format!("P(|offset| <= 5 mm) = {p:.4}"))
}

fn multimodality() -> Check {
    let cfg = PolicyConfig {
        lr: 2e-3,
        k: 32,
        k_inf: 16,
        eta: 0.5,
        t_p: 8,
        arch: ArchConfig { channels: vec![32, 64], kernel: 5, groups: 8, time_dim: 32 },
        batch_size: 64,
        epochs: MULTIMODAL_EPOCHS,
        ..PolicyConfig::default()
    };
    let ds = bimodal_dataset(cfg.horizons(), 256, 13);
    let ckpt = train(&ds, &cfg, 14, &mut |_| {}).map_err(|e| e.to_string())?;
    let policy = Policy::from_checkpoint(&ckpt).map_err(|e| e.to_string())?;
    let obs = &ds.train[0].obs;
    let batch: Vec<&[f64]> = vec![obs.as_slice(); 200];
    let out = policy.sample(&batch, cfg.k_inf, cfg.eta, &mut ChaCha8Rng::seed_from_u64(15)).map_err(|e| e.to_string())?;
    let (mut plus, mut minus) = (0, 0);
    for a in &out {
        match bimodal_side(a) {
            1 => plus += 1,
            -1 => minus += 1,
            _ => {}
        }
    }
    let detail = format!("{plus} samples bow +x, {minus} bow -x, {} neither (of 200)", 200 - plus - minus);
    ensure(plus >= 40 && minus >= 40, || detail.clone())?;
    Ok(detail)
}

const MULTIMODAL_EPOCHS: usize = 300;

fn suites_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../suites")
}

fn out_dir(name: &str) -> PathBuf {
    Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance").join(name)
}

/// The end-to-end suite, run once and shared by the checks below.
fn e2e() -> &'static Result<SuiteReport, String> {
    static REPORT: OnceLock<Result<SuiteReport, String>> = OnceLock::new();
    REPORT.get_or_init(|| {
        let m = SuiteManifest::load(&suites_dir().join("acceptance.toml")).map_err(|e| e.to_string())?;
        let cache = std::env::var_os("JOINERY_ACCEPTANCE_CACHE").map(PathBuf::from);
        let t = Instant::now();
        let r = run_suite(&m, cache, &mut |s| eprintln!("[{:6.0}s] {s}", t.elapsed().as_secs_f64()));
        let dir = out_dir("e2e");
        r.write(&dir).map_err(|e| e.to_string())?;
        eprintln!("reports in {}", dir.display());
        if let Some(f) = r.failures.first() {
            return Err(format!("{}: {}", f.label, f.error));
        }
        Ok(r)
    })
}

fn sr_line(r: &joinery_core::eval::ExperimentReport) -> String {
    let per: Vec<String> = r.offsets.iter().map(|o| format!("{}mm {:.0}±{:.1}", o.offset_mm, o.avg_sr, o.sem)).collect();
    format!("{}: {} | total {:.1}%", r.label, per.join(", "), r.avg_total_sr)
}

fn experiment(label: &str) -> Result<&'static joinery_core::eval::ExperimentReport, String> {
    let r = e2e().as_ref().map_err(|e| format!("suite failed: {e}"))?;
    r.find(label).ok_or_else(|| format!("no experiment {label:?}"))
}

fn phase1() -> Check {
    let r = experiment("phase 1")?;
    ensure(r.rollouts.len() == 20, || format!("{} rollouts", r.rollouts.len()))?;
    ensure(r.avg_total_sr >= 80.0, || sr_line(r))?;
    Ok(sr_line(r))
}

fn phase2() -> Check {
    let r = experiment("PF")?;
    let (s0, s10) = (r.sr_at(0.0).unwrap_or(0.0), r.sr_at(10.0).unwrap_or(100.0));
    ensure(r.avg_total_sr >= 50.0 && s0 >= s10, || sr_line(r))?;
    Ok(sr_line(r))
}

fn ft_ablation() -> Check {
    let (full, masked) = (experiment("PF")?, experiment("PF*")?);
    let detail = format!("{} / {}", sr_line(full), sr_line(masked));
    ensure(masked.avg_total_sr <= full.avg_total_sr - 15.0, || detail.clone())?;
    Ok(detail)
}

fn demo_count() -> Check {
    let (few, many) = (experiment("10 demos")?, experiment("100 demos")?);
    let detail = format!("{} / {}", sr_line(few), sr_line(many));
    ensure(few.sr_at(10.0).unwrap_or(100.0) < many.sr_at(10.0).unwrap_or(0.0), || detail.clone())?;
    Ok(detail)
}

fn determinism() -> Check {
    let m = SuiteManifest::load(&suites_dir().join("smoke.toml")).map_err(|e| e.to_string())?;
    let mut files = 0;
    let (a, b) = (out_dir("smoke-a"), out_dir("smoke-b"));
    for d in [&a, &b] {
        let _ = fs::remove_dir_all(d);
        let r = run_suite(&m, None, &mut |_| {});
        ensure(r.failures.is_empty(), || format!("{:?}", r.failures))?;
        r.write(d).map_err(|e| e.to_string())?;
    }
    for e in fs::read_dir(&a).map_err(|e| e.to_string())? {
        let name = e.map_err(|e| e.to_string())?.file_name();
        let (x, y) = (fs::read(a.join(&name)).map_err(|e| e.to_string())?, fs::read(b.join(&name)).map_err(|e| e.to_string())?);
        ensure(x == y, || format!("{name:?} differs between runs"))?;
        files += 1;
    }
    ensure(files >= 5, || format!("only {files} files written"))?;
    Ok(format!("{files} report files identical across two runs"))
}

type Named = (&'static str, fn() -> Check);

fn main() -> ExitCode {
    let checks: [Named; 10] = [
        ("math_kernel", math_kernel),
        ("gradient_check", gradient),
        ("signal_suite", signals),
        ("offset_sampler", offsets),
        ("multimodality", multimodality),
        ("determinism", determinism),
        ("phase1_nominal", phase1),
        ("phase2_offsets", phase2),
        ("ft_ablation", ft_ablation),
        ("demo_count", demo_count),
    ];
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (name, check) in checks {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let t = Instant::now();
        let result = check();
        let secs = t.elapsed().as_secs_f64();
        ran += 1;
        match result {
            Ok(d) => println!("PASS {name} ({secs:.1}s): {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL {name} ({secs:.1}s): {d}");
            }
        }
    }
    println!("acceptance: {} of {ran} passed", ran - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
