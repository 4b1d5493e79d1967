//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use lossyckpt::compress::{compress, decompress, error_identity_check, measured_psnr, CompressorConfig, QuantizerModel};
use lossyckpt::model;
use lossyckpt::sim::{measure_n_prime, run_ensemble, CheckpointPolicy, CostModel, SimConfig, Workload};
use lossyckpt::{LinearSystem, Method, SolveConfig, SolverState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LAMBDA: f64 = 1.0 / 3600.0;
const T_IT: f64 = 1.2;
const N: usize = 5875;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_1() -> Outcome {
    let bound = model::n_prime_bound(LAMBDA, T_IT, 120.0, 25.0).map_err(|e| e.to_string())?;
    check((bound - 500.0).abs() <= 1.0, format!("N' bound = {bound:.3}"))
}

fn criterion_2() -> Outcome {
    let r = model::overhead_ratio_traditional(LAMBDA, 120.0).map_err(|e| e.to_string())?;
    check((0.40..=0.42).contains(&r), format!("overhead ratio = {r:.4}"))
}

fn synthetic(policy: CheckpointPolicy, t_ckp: f64, forced_n_prime: usize, seed: u64) -> SimConfig {
    let k = model::young_iterations(1.0 / LAMBDA, t_ckp, T_IT).expect("valid Young parameters");
    SimConfig {
        workload: Workload::Synthetic {
            n_iterations: N,
            forced_n_prime,
        },
        policy,
        cost: CostModel::Fixed { t_ckp, t_rc: t_ckp },
        ckpt_intvl: k,
        t_it: T_IT,
        lambda: LAMBDA,
        failures_during_ckpt: true,
        trials: 500,
        max_time: None,
        seed,
    }
}

fn criterion_3() -> Outcome {
    let report = run_ensemble(synthetic(CheckpointPolicy::Traditional, 120.0, 0, 2024)).map_err(|e| e.to_string())?;
    let expected = model::expected_total_time(LAMBDA, N as f64, T_IT, 120.0, 120.0).map_err(|e| e.to_string())?;
    let rel = (report.total_time.mean - expected) / expected;
    check(
        rel.abs() <= 0.15 && report.truncated_trials == 0,
        format!(
            "simulated mean T_t = {:.1} ± {:.1}, model = {expected:.1}, rel. diff = {:+.2}%",
            report.total_time.mean,
            report.total_time.ci95,
            100.0 * rel
        ),
    )
}

/// Smooth synthetic fields: sines, Gaussian bumps, solver iterates.
fn smooth_fields() -> Vec<Vec<f64>> {
    let n = 4096;
    let mut fields = Vec::new();
    for (f, phase) in [(1.0, 0.0), (2.5, 0.3), (4.0, 1.1), (7.0, 2.0), (11.0, 0.7), (0.5, 1.9), (3.3, 0.0), (16.0, 0.4)] {
        fields.push((0..n).map(|i| (2.0 * PI * f * i as f64 / n as f64 + phase).sin()).collect());
    }
    for (c, w, a) in [(0.5, 0.1, 1.0), (0.3, 0.05, 3.0), (0.7, 0.2, 0.01), (0.5, 0.3, 100.0), (0.1, 0.08, 2.0), (0.9, 0.15, 1e4)] {
        fields.push((0..n).map(|i| a * (-((i as f64 / n as f64 - c) / w).powi(2)).exp()).collect());
    }
    let sys = LinearSystem::poisson2d(48).expect("poisson2d");
    let mut state = SolverState::init(Method::Cg, &sys, SolveConfig::new(1e-10, 5000, 1000)).expect("init");
    for stop in [10, 20, 30, 45, 60, 80, 100, 120] {
        while state.iteration() < stop && !state.converged() {
            state.step(&sys).expect("cg step");
        }
        fields.push(state.solution().into_owned());
    }
    fields
}

fn closed_form_eb_rel(target: f64) -> f64 {
    3f64.sqrt() * 10f64.powf(-target / 20.0)
}

fn criterion_4() -> Outcome {
    let fields = smooth_fields();
    let mut details = Vec::new();
    let mut ok = fields.len() >= 20;
    for target in [60.0, 80.0, 100.0, 120.0] {
        let cfg = CompressorConfig::fixed_psnr(target);
        let closed_form = closed_form_eb_rel(target);
        let mut psnrs = Vec::new();
        let mut refined = 0;
        for f in &fields {
            let block = compress(f, &cfg).map_err(|e| e.to_string())?;
            if block.eb_rel().is_some_and(|e| e < closed_form * (1.0 - 1e-12)) {
                refined += 1;
            }
            let dec = decompress(&block).map_err(|e| e.to_string())?;
            psnrs.push(measured_psnr(f, &dec).map_err(|e| e.to_string())?.psnr);
        }
        let mean = psnrs.iter().sum::<f64>() / psnrs.len() as f64;
        let min = psnrs.iter().copied().fold(f64::INFINITY, f64::min);
        ok &= mean >= target - 1.0 && mean <= target + 7.0 && min >= target - 1.0;
        details.push(format!("{target} dB: mean {mean:.2}, min {min:.2}, refined {refined}"));
    }
    check(ok, format!("{} fields; {}", fields.len(), details.join("; ")))
}

fn random_field(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let kind = rng.random_range(0..4);
    let scale = 10f64.powi(rng.random_range(-3..4));
    let mut x = 0.0;
    (0..n)
        .map(|i| match kind {
            0 => scale * (i as f64 * rng.random_range(0.001..0.2)).sin(),
            1 => {
                x += rng.random_range(-1.0..1.0) * scale;
                x
            }
            2 => scale * rng.random_range(-1.0..1.0),
            _ => {
                // Smooth with occasional spikes that overflow the bin range.
                let spike = if rng.random_bool(0.02) { 1e3 * scale } else { 0.0 };
                scale * (i as f64 / n as f64) + spike
            }
        })
        .collect()
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..300 {
        let n = rng.random_range(2..3000);
        let field = random_field(&mut rng, n);
        let eb = 10f64.powi(rng.random_range(-7..-1));
        let cfg = CompressorConfig::relative(eb).with_traces();
        let block = compress(&field, &cfg).map_err(|e| e.to_string())?;
        let vr = block.value_range();
        if vr == 0.0 {
            continue;
        }
        worst = worst.max(error_identity_check(&field, &block).map_err(|e| e.to_string())? / vr);
    }
    check(worst <= 1e-12, format!("max identity residual / vr = {worst:.3e} over 300 fields"))
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst_ratio = 0.0f64;
    let mut escape_cases = 0;
    for case in 0..1000 {
        let n = rng.random_range(1..2000);
        let field = random_field(&mut rng, n);
        let eb = 10f64.powi(rng.random_range(-9..0)) * rng.random_range(1.0..10.0);
        let mut cfg = if case % 2 == 0 {
            CompressorConfig::absolute(eb)
        } else {
            CompressorConfig::relative(eb.min(0.5))
        };
        if case % 5 == 0 {
            cfg = cfg.with_bins_half(rng.random_range(2..64));
        }
        let block = compress(&field, &cfg).map_err(|e| e.to_string())?;
        if !block.escapes().is_empty() {
            escape_cases += 1;
        }
        let dec = decompress(&block).map_err(|e| e.to_string())?;
        let max_err = field.iter().zip(&dec).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if block.eb_abs() > 0.0 {
            worst_ratio = worst_ratio.max(max_err / block.eb_abs());
        } else if max_err > 0.0 {
            return Err(format!("case {case}: zero bound but error {max_err}"));
        }
    }
    check(
        worst_ratio <= 1.0 && escape_cases > 0,
        format!("max error / eb_abs = {worst_ratio:.6} over 1000 pairs, {escape_cases} with escapes"),
    )
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let eb = 1e-3;
    let q = QuantizerModel::new(eb, 1.0, 1 << 20).map_err(|e| e.to_string())?;
    let n = 1_000_000;
    let mut sq = 0.0;
    for _ in 0..n {
        let e: f64 = rng.random_range(-0.5..0.5);
        let bin = q.quantize(e).ok_or("prediction error escaped the quantizer")?;
        sq += (e - q.reconstruct(bin)).powi(2);
    }
    let mse = sq / n as f64;
    let law = q.bin_width * q.bin_width / 12.0;
    let rel = (mse - law) / law;
    check(rel.abs() <= 0.05, format!("MSE = {mse:.4e}, δ²/12 = {law:.4e}, rel. diff = {:+.3}%", 100.0 * rel))
}

fn criterion_8() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for m in [16, 32] {
        let sys = LinearSystem::poisson2d(m).map_err(|e| e.to_string())?;
        for method in [Method::Cg, Method::Gmres] {
            let cfg = SolveConfig::new(1e-8, 20_000, 10);
            let n = SolverState::init(method, &sys, cfg)
                .and_then(|mut s| s.solve(&sys))
                .map_err(|e| e.to_string())?
                .iterations;
            let injection = [n / 2];
            let lossless = measure_n_prime(method, &sys, cfg, None, &injection).map_err(|e| e.to_string())?;
            ok &= lossless.samples.iter().all(|s| s.n_prime == Some(0));
            for eb in [1e-4, 1e-6] {
                let c = CompressorConfig::relative(eb);
                let rep = measure_n_prime(method, &sys, cfg, Some(&c), &injection).map_err(|e| e.to_string())?;
                let s = &rep.samples[0];
                ok &= !s.diverged && s.relative_residual <= 1e-8 && s.n_prime.is_some();
                lines.push(format!(
                    "{method} m={m} eb={eb:e}: N={n} N'={}",
                    s.n_prime.map_or("diverged".into(), |v| v.to_string())
                ));
            }
        }
    }
    check(ok, format!("lossless N'=0 everywhere; {}", lines.join(", ")))
}

fn criterion_9() -> Outcome {
    let bound = model::n_prime_bound(LAMBDA, T_IT, 120.0, 25.0).map_err(|e| e.to_string())?;
    let trad = run_ensemble(synthetic(CheckpointPolicy::Traditional, 120.0, 0, 9000)).map_err(|e| e.to_string())?;
    let lossy = |np: f64| {
        let policy = CheckpointPolicy::Lossy(CompressorConfig::relative(1e-4));
        run_ensemble(synthetic(policy, 25.0, np.round() as usize, 9000)).map_err(|e| e.to_string())
    };
    let low = lossy(0.5 * bound)?;
    let high = lossy(2.0 * bound)?;
    let t = trad.total_time;
    let (l, h) = (low.total_time, high.total_time);
    let ok = l.mean < t.mean && l.separated_from(&t) && h.mean > t.mean && h.separated_from(&t);
    check(
        ok,
        format!(
            "traditional {:.0} ± {:.0}; lossy N'=0.5·bound {:.0} ± {:.0}; lossy N'=2·bound {:.0} ± {:.0}",
            t.mean, t.ci95, l.mean, l.ci95, h.mean, h.ci95
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("break-even bound worked example", criterion_1),
        ("overhead ratio anchor point", criterion_2),
        ("model vs simulation total time", criterion_3),
        ("fixed-PSNR control", criterion_4),
        ("error identity", criterion_5),
        ("error-bound guarantee", criterion_6),
        ("uniform quantizer MSE law", criterion_7),
        ("lossy-recovery convergence", criterion_8),
        ("break-even crossover in simulation", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {}: PASS  {name} ({detail}) [{secs:.2}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL  {name} ({detail}) [{secs:.2}s]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
