//! Acceptance gate: one test per release criterion, each printing a single
//! PASS/FAIL line. Run with `cargo test --test acceptance -- --nocapture`
//! to see the lines for passing criteria too.

use std::sync::{Mutex, OnceLock};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use speckflow::graph::{build_weight_graph, nonlocal_flux, PatchConfig, WeightGraph};
use speckflow::indicator::{grayscale_indicator, IndicatorField, IndicatorParams, TextureMask};
use speckflow::kernel::rescaling_study;
use speckflow::metrics::{psnr, ssim, SsimConfig};
use speckflow::noise::{estimate_noise_h, gamma_speckle, GammaNoiseSpec};
use speckflow::pflow::{p_limit_study, PFlowConfig};
use speckflow::pipeline::{denoise, DenoiseParams};
use speckflow::solver::{run, step, Mode, SolverConfig};
use speckflow::synth;
use speckflow::Grid;

/// Criteria with wall-clock budgets must not compete for cores, so every
/// criterion runs under one lock regardless of the harness thread count.
fn lock() -> std::sync::MutexGuard<'static, ()> {
    static LOCK: Mutex<()> = Mutex::new(());
    LOCK.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(number: u32, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("acceptance criterion {number:2} ({name}): {verdict} [{detail}]");
    assert!(pass, "criterion {number} ({name}) failed: {detail}");
}

fn random_grid(rng: &mut ChaCha12Rng, w: usize, h: usize, lo: f64, hi: f64) -> Grid {
    let vals = (0..w * h).map(|_| rng.gen_range(lo..hi)).collect();
    Grid::new(w, h, vals).unwrap()
}

fn test_patch() -> PatchConfig {
    PatchConfig {
        search_radius: 5,
        patch_edge: 5,
        patch_sigma_a: 1.25,
        k_neighbors: 10,
        filter_scale_h: 20.0,
    }
}

fn base_cfg(mode: Mode) -> SolverConfig {
    SolverConfig {
        lambda: 0.5,
        tau: 0.05,
        eps: 1e-5,
        max_iters: 100,
        stop_tol: 0.0,
        mode,
        aa_fidelity: 1.0,
        record_diagnostics: false,
    }
}

#[test]
fn criterion_01_constant_fixed_points() {
    let _guard = lock();
    let t0 = Instant::now();
    let f = Grid::constant(64, 64, 42.0);
    let graph = build_weight_graph(&f, &test_patch()).unwrap();
    let g = IndicatorField::constant(64, 64, 0.5);
    let mut worst = 0.0f64;
    for mode in [
        Mode::Coupled,
        Mode::TvOnly,
        Mode::NltvOnly,
        Mode::SymmetricConservative,
        Mode::AaBaseline,
    ] {
        let (u, _) = run(&f, &graph, &g, &base_cfg(mode)).unwrap();
        for (a, b) in u.values().iter().zip(f.values()) {
            worst = worst.max((a - b).abs());
        }
    }
    let elapsed = t0.elapsed();
    report(
        1,
        "constant fixed points",
        worst == 0.0 && elapsed.as_secs_f64() < 1.0,
        &format!("max |delta| = {worst:e}, {elapsed:.2?}"),
    );
}

#[test]
fn criterion_02_mode_equivalence_bitwise() {
    let _guard = lock();
    let mut rng = ChaCha12Rng::seed_from_u64(2);
    let mut all_equal = true;
    for _ in 0..10 {
        let f = random_grid(&mut rng, 32, 32, 0.0, 255.0);
        let graph = build_weight_graph(&f, &test_patch()).unwrap();
        let g = IndicatorField::constant(32, 32, 0.3);
        for (lambda, single) in [(0.0, Mode::TvOnly), (1.0, Mode::NltvOnly)] {
            let mut cfg_a = base_cfg(Mode::Coupled);
            cfg_a.lambda = lambda;
            let mut cfg_b = base_cfg(single);
            cfg_b.lambda = lambda;
            let mut ua = f.clone();
            let mut ub = f.clone();
            for _ in 0..5 {
                ua = step(&ua, &graph, &g, &cfg_a).unwrap();
                ub = step(&ub, &graph, &g, &cfg_b).unwrap();
                all_equal &= ua.values() == ub.values();
            }
        }
    }
    report(
        2,
        "mode equivalence bitwise",
        all_equal,
        "coupled(0)=tv_only, coupled(1)=nltv_only, 10 inputs x 5 steps",
    );
}

struct ConservationRun {
    drift: f64,
    low_violation: f64,
    high_violation: f64,
}

fn conservation_runs() -> &'static Vec<ConservationRun> {
    static RUNS: OnceLock<Vec<ConservationRun>> = OnceLock::new();
    RUNS.get_or_init(|| {
        let mut rng = ChaCha12Rng::seed_from_u64(34);
        let mut out = Vec::new();
        for _ in 0..5 {
            let f = random_grid(&mut rng, 64, 64, 10.0, 200.0);
            let graph = build_weight_graph(&f, &test_patch()).unwrap();
            let g = IndicatorField::constant(64, 64, 0.5);
            let mut cfg = base_cfg(Mode::SymmetricConservative);
            cfg.max_iters = 1000;
            cfg.record_diagnostics = true;
            let (_, trace) = run(&f, &graph, &g, &cfg).unwrap();
            let s = f.stats();
            let mut drift = 0.0f64;
            let mut low = 0.0f64;
            let mut high = 0.0f64;
            for r in &trace.records {
                drift = drift.max((r.mean - s.mean).abs() / s.mean.abs());
                low = low.max(s.min - r.min);
                high = high.max(r.max - s.max);
            }
            out.push(ConservationRun {
                drift,
                low_violation: low,
                high_violation: high,
            });
        }
        out
    })
}

#[test]
fn criterion_03_mass_conservation() {
    let _guard = lock();
    let runs = conservation_runs();
    let worst = runs.iter().map(|r| r.drift).fold(0.0f64, f64::max);
    report(
        3,
        "mass conservation",
        worst < 1e-10,
        &format!("worst relative mean drift {worst:.3e} over 5 runs x 1000 iters"),
    );
}

#[test]
fn criterion_04_boundedness() {
    let _guard = lock();
    let runs = conservation_runs();
    let worst = runs
        .iter()
        .map(|r| r.low_violation.max(r.high_violation))
        .fold(0.0f64, f64::max);
    report(
        4,
        "boundedness",
        worst <= 1e-6,
        &format!("worst range excursion {worst:.3e}"),
    );
}

#[test]
fn criterion_05_energy_dissipation() {
    let _guard = lock();
    // tau = 0.05 is pinned; eps = 1e-2 keeps the explicit step inside the
    // descent regime (the per-pixel coefficient scales like 1/sqrt(eps)).
    let mut worst = f64::NEG_INFINITY;
    let mut where_ = String::new();
    for (name, img) in synth::corpus(64) {
        let graph = build_weight_graph(&img, &test_patch()).unwrap();
        let g = grayscale_indicator(&img, &IndicatorParams::new(2.0, 2.0, 0.5), None).unwrap();
        for mode in [
            Mode::Coupled,
            Mode::TvOnly,
            Mode::NltvOnly,
            Mode::SymmetricConservative,
        ] {
            let mut cfg = base_cfg(mode);
            cfg.eps = 1e-2;
            cfg.max_iters = 500;
            cfg.record_diagnostics = true;
            let (_, trace) = run(&img, &graph, &g, &cfg).unwrap();
            let mut prev = trace.records[0].energy;
            for r in &trace.records[1..] {
                let rel = (r.energy - prev) / prev.abs();
                if rel > worst {
                    worst = rel;
                    where_ = format!("{name}/{mode:?}");
                }
                prev = r.energy;
            }
        }
    }
    report(
        5,
        "energy dissipation",
        worst <= 1e-9,
        &format!("worst relative increase {worst:.3e} at {where_}"),
    );
}

#[test]
fn criterion_06_decay_to_mean() {
    let _guard = lock();
    let t0 = Instant::now();
    let f = synth::radial_bump(32, 32, 60.0, 140.0);
    let graph = build_weight_graph(&f, &test_patch()).unwrap();
    let g = IndicatorField::constant(32, 32, 0.5);
    let mut cfg = base_cfg(Mode::SymmetricConservative);
    cfg.max_iters = 100_000;
    let (u, _) = run(&f, &graph, &g, &cfg).unwrap();
    let mean = f.stats().mean;
    let dev = |grid: &Grid| -> f64 {
        grid.values()
            .iter()
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            .sqrt()
    };
    let ratio = dev(&u) / dev(&f);
    let elapsed = t0.elapsed();
    report(
        6,
        "decay to mean",
        ratio < 0.01 && elapsed.as_secs_f64() < 60.0,
        &format!(
            "residual deviation {:.3}% of initial, {elapsed:.1?}",
            100.0 * ratio
        ),
    );
}

#[test]
fn criterion_07_rescaling_convergence() {
    let _guard = lock();
    let t0 = Instant::now();
    let f = synth::radial_bump(64, 64, 60.0, 140.0);
    let g = IndicatorField::constant(64, 64, 1.0);
    // eps must dominate single-pixel differences for the smallest radii to
    // resolve curvature rather than a quantized sign pattern; see README.
    let rows = rescaling_study(&f, &[8, 4, 2, 1], 2.0, 0.05, &g, 1.0, 100.0).unwrap();
    let ds: Vec<f64> = rows.iter().map(|r| r.l1_distance).collect();
    let decreasing = ds.windows(2).all(|w| w[1] < w[0]);
    let ratio = ds[ds.len() - 1] / ds[0];
    let elapsed = t0.elapsed();
    report(
        7,
        "rescaling convergence",
        decreasing && ratio <= 0.25 && elapsed.as_secs_f64() < 120.0,
        &format!("D = {ds:.4?}, D(1)/D(8) = {ratio:.3}, {elapsed:.1?}"),
    );
}

#[test]
fn criterion_08_p_to_one_limit() {
    let _guard = lock();
    let t0 = Instant::now();
    let f = synth::radial_bump(64, 64, 60.0, 140.0);
    let g = IndicatorField::constant(64, 64, 0.5);
    let cfg = PFlowConfig {
        p: 2.0,
        tau: 0.05,
        eps: 1e-5,
        max_iters: 0,
        lambda: 0.5,
        kernel: speckflow::kernel::KernelSpec::new(
            speckflow::kernel::KernelProfile::TruncatedGaussian,
            2,
        )
        .unwrap(),
    };
    let rows = p_limit_study(&f, &[2.0, 1.5, 1.2, 1.05], 1.0, &cfg, &g).unwrap();
    let diffs: Vec<f64> = rows[..rows.len() - 1]
        .iter()
        .map(|r| r.abs_diff_vs_p1)
        .collect();
    let decreasing = diffs.windows(2).all(|w| w[1] < w[0]);
    let e1 = rows.last().unwrap().energy_integral;
    let rel = (rows[rows.len() - 2].energy_integral - e1).abs() / e1;
    let elapsed = t0.elapsed();
    report(
        8,
        "p->1 limit",
        decreasing && rel <= 0.10 && elapsed.as_secs_f64() < 120.0,
        &format!("|E_p - E_1| = {diffs:.1?}, rel(1.05) = {rel:.3}, {elapsed:.1?}"),
    );
}

#[test]
fn criterion_09_gamma_noise_statistics() {
    let _guard = lock();
    let scene = Grid::constant(1000, 1000, 1.0);
    let mut detail = String::new();
    let mut pass = true;
    for looks in [4u32, 10] {
        let noisy = gamma_speckle(&scene, &GammaNoiseSpec { looks, seed: 9 }).unwrap();
        let n = noisy.len() as f64;
        let mean = noisy.values().iter().sum::<f64>() / n;
        let var = noisy
            .values()
            .iter()
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            / n;
        let target = 1.0 / looks as f64;
        pass &= (mean - 1.0).abs() < 0.01 && (var - target).abs() < 0.05 * target;
        detail.push_str(&format!("L={looks}: mean {mean:.4}, var {var:.5}; "));
    }
    report(
        9,
        "gamma noise statistics",
        pass,
        detail.trim_end_matches("; "),
    );
}

#[test]
fn criterion_10_immerkaer_estimator() {
    let _guard = lock();
    let sigma = 10.0;
    let mut pass = true;
    let mut estimates = Vec::new();
    for seed in 0..10u64 {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let normal = rand_distr::Normal::new(0.0, sigma).unwrap();
        let vals = (0..256 * 256).map(|_| 100.0 + rng.sample(normal)).collect();
        let noisy = Grid::new(256, 256, vals).unwrap();
        let est = estimate_noise_h(&noisy).unwrap();
        pass &= (est - sigma).abs() <= 0.15 * sigma;
        estimates.push(est);
    }
    let lo = estimates.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = estimates.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    report(
        10,
        "immerkaer estimator",
        pass,
        &format!("10 seeds, estimates in [{lo:.2}, {hi:.2}] for sigma = 10"),
    );
}

#[test]
fn criterion_11_denoising_efficacy() {
    let _guard = lock();
    let (clean, mask_grid) = synth::cartoon_texture(128, 128);
    let noisy = gamma_speckle(&clean, &GammaNoiseSpec { looks: 10, seed: 7 }).unwrap();
    let p_noisy = psnr(&clean, &noisy, 255.0).unwrap();
    let mask = TextureMask::from_pgm_grid(&mask_grid, 0.5).unwrap();
    let run_one = |lambda: f64, sigma: f64, beta: f64| -> f64 {
        let params = DenoiseParams {
            solver: SolverConfig {
                lambda,
                tau: 0.2,
                eps: 1e-5,
                max_iters: 200,
                stop_tol: 0.0,
                mode: Mode::Coupled,
                aa_fidelity: 1.0,
                record_diagnostics: false,
            },
            sigma,
            beta,
            mask: Some(mask.clone()),
            ..DenoiseParams::default()
        };
        let out = denoise(&noisy, &params).unwrap();
        psnr(&clean, &out.restored, 255.0).unwrap()
    };
    let p_tv = run_one(0.0, 2.0, 2.0);
    let p_nltv = run_one(1.0, 3.0, 1.0);
    let p_coupled = run_one(0.3, 3.0, 2.0);
    let pass = p_coupled >= p_noisy + 2.0 && p_coupled >= p_tv && p_coupled >= p_nltv;
    report(
        11,
        "denoising efficacy",
        pass,
        &format!("noisy {p_noisy:.2} dB, tv {p_tv:.2}, nltv {p_nltv:.2}, coupled {p_coupled:.2}"),
    );
}

#[test]
fn criterion_12_metric_oracles() {
    let _guard = lock();
    let a = Grid::constant(16, 16, 100.0);
    let b = Grid::constant(16, 16, 101.0);
    let p = psnr(&a, &b, 255.0).unwrap();
    let psnr_ok = (p - 48.1308).abs() <= 1e-3;

    let mut rng = ChaCha12Rng::seed_from_u64(12);
    let cfg = SsimConfig::default();
    let x = random_grid(&mut rng, 16, 16, 0.0, 255.0);
    let self_ok = ssim(&x, &x, &cfg).unwrap() == 1.0;
    let mut sym_ok = true;
    for _ in 0..10 {
        let u = random_grid(&mut rng, 16, 16, 0.0, 255.0);
        let v = random_grid(&mut rng, 16, 16, 0.0, 255.0);
        sym_ok &= ssim(&u, &v, &cfg).unwrap() == ssim(&v, &u, &cfg).unwrap();
    }
    report(
        12,
        "metric oracles",
        psnr_ok && self_ok && sym_ok,
        &format!("psnr {p:.4} dB, ssim(a,a)==1 {self_ok}, symmetry {sym_ok}"),
    );
}

#[test]
fn criterion_13_brute_force_nonlocal_flux() {
    let _guard = lock();
    let mut rng = ChaCha12Rng::seed_from_u64(13);
    let eps = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = 16usize;
        // Random K=3 graph over the 4x4 grid with normalized weights.
        let mut lists = Vec::with_capacity(n);
        for p in 0..n {
            let mut picks = Vec::new();
            while picks.len() < 3 {
                let q = rng.gen_range(0..n as u32);
                if q as usize != p && !picks.contains(&q) {
                    picks.push(q);
                }
            }
            let raw: Vec<f64> = (0..3).map(|_| rng.gen_range(0.1..1.0)).collect();
            let total: f64 = raw.iter().sum();
            lists.push(
                picks
                    .into_iter()
                    .zip(raw)
                    .map(|(q, w)| (q, w / total))
                    .collect::<Vec<_>>(),
            );
        }
        let graph = WeightGraph::from_lists(4, 4, lists.clone()).unwrap();
        let u = random_grid(&mut rng, 4, 4, 0.0, 10.0);
        let gvals: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let g = IndicatorField::from_grid(Grid::new(4, 4, gvals.clone()).unwrap()).unwrap();
        let fast = nonlocal_flux(&u, &graph, &g, eps).unwrap();

        // Independent direct summation of the alpha formula.
        let uv = u.values();
        let inv: Vec<f64> = (0..n)
            .map(|p| {
                let s: f64 = lists[p]
                    .iter()
                    .map(|&(q, w)| {
                        let d = uv[p] - uv[q as usize];
                        w * d * d
                    })
                    .sum();
                1.0 / (s + eps).sqrt()
            })
            .collect();
        for p in 0..n {
            let mut acc = 0.0;
            for &(q, w) in &lists[p] {
                let alpha = w * (inv[p] + inv[q as usize]).abs();
                acc += alpha * (uv[q as usize] - uv[p]);
            }
            let direct = gvals[p] * acc;
            worst = worst.max((direct - fast.values()[p]).abs());
        }
    }
    report(
        13,
        "brute-force nonlocal flux",
        worst <= 1e-12,
        &format!("max |direct - implementation| = {worst:.3e} over 100 inputs"),
    );
}
