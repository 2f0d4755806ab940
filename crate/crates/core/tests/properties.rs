//! Randomized invariant checks over small instances.

use proptest::prelude::*;

use speckflow::graph::{build_weight_graph, PatchConfig};
use speckflow::indicator::{grayscale_indicator, IndicatorField, IndicatorParams};
use speckflow::io::{read_pfm, read_pgm, write_pfm, write_pgm};
use speckflow::kernel::{KernelProfile, KernelSpec};
use speckflow::metrics::{psnr, ssim, SsimConfig};
use speckflow::noise::{gamma_speckle, GammaNoiseSpec};
use speckflow::solver::{step, Mode, SolverConfig};
use speckflow::Grid;

fn grid_strategy(w: usize, h: usize, lo: f64, hi: f64) -> impl Strategy<Value = Grid> {
    prop::collection::vec(lo..hi, w * h).prop_map(move |v| Grid::new(w, h, v).unwrap())
}

fn byte_grid_strategy(w: usize, h: usize) -> impl Strategy<Value = Grid> {
    prop::collection::vec(0u8..=255, w * h)
        .prop_map(move |v| Grid::new(w, h, v.into_iter().map(f64::from).collect()).unwrap())
}

fn tiny_patch() -> PatchConfig {
    PatchConfig {
        search_radius: 3,
        patch_edge: 3,
        patch_sigma_a: 1.0,
        k_neighbors: 5,
        filter_scale_h: 15.0,
    }
}

fn tiny_cfg(mode: Mode, lambda: f64) -> SolverConfig {
    SolverConfig {
        lambda,
        tau: 0.05,
        eps: 1e-5,
        max_iters: 1,
        stop_tol: 0.0,
        mode,
        aa_fidelity: 1.0,
        record_diagnostics: false,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pgm_roundtrip_preserves_byte_grids(g in byte_grid_strategy(9, 7)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.pgm");
        write_pgm(&g, &path).unwrap();
        let back = read_pgm(&path).unwrap();
        prop_assert_eq!(g.values(), back.values());
    }

    #[test]
    fn pfm_roundtrip_preserves_f32_values(g in grid_strategy(6, 5, -1e4, 1e4)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.pfm");
        write_pfm(&g, &path).unwrap();
        let back = read_pfm(&path).unwrap();
        for (a, b) in g.values().iter().zip(back.values()) {
            prop_assert_eq!(*a as f32, *b as f32);
        }
    }

    #[test]
    fn speckle_is_seed_deterministic_and_nonnegative(
        g in grid_strategy(8, 8, 0.0, 255.0),
        seed in any::<u64>(),
        looks in 1u32..30,
    ) {
        let spec = GammaNoiseSpec { looks, seed };
        let a = gamma_speckle(&g, &spec).unwrap();
        let b = gamma_speckle(&g, &spec).unwrap();
        prop_assert_eq!(a.values(), b.values());
        prop_assert!(a.values().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn indicator_respects_clamp_bounds(
        g in grid_strategy(8, 8, 0.0, 255.0),
        beta in 0.1f64..4.0,
        lambda in 0.0f64..=1.0,
    ) {
        let params = IndicatorParams::new(1.0, beta, lambda);
        let field = grayscale_indicator(&g, &params, None).unwrap();
        prop_assert!(field.grid().values().iter().all(|&v| (1e-3..=0.999).contains(&v)));
    }

    #[test]
    fn psnr_and_ssim_are_symmetric(
        a in grid_strategy(12, 12, 0.0, 255.0),
        b in grid_strategy(12, 12, 0.0, 255.0),
    ) {
        prop_assert_eq!(
            psnr(&a, &b, 255.0).unwrap().to_bits(),
            psnr(&b, &a, 255.0).unwrap().to_bits()
        );
        let cfg = SsimConfig::default();
        prop_assert_eq!(
            ssim(&a, &b, &cfg).unwrap().to_bits(),
            ssim(&b, &a, &cfg).unwrap().to_bits()
        );
    }

    #[test]
    fn weight_graph_is_normalized_and_self_free(g in grid_strategy(10, 10, 0.0, 255.0)) {
        let graph = build_weight_graph(&g, &tiny_patch()).unwrap();
        for p in 0..g.len() {
            let (nbr, w) = graph.neighbors_of(p);
            prop_assert_eq!(nbr.len(), 5);
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(nbr.iter().all(|&q| q as usize != p));
            prop_assert!(nbr.windows(2).all(|pair| pair[0] < pair[1]));
        }
    }

    #[test]
    fn symmetric_step_conserves_mass(g in grid_strategy(10, 10, 1.0, 255.0)) {
        let graph = build_weight_graph(&g, &tiny_patch()).unwrap();
        let ind = IndicatorField::constant(10, 10, 0.5);
        let next = step(&g, &graph, &ind, &tiny_cfg(Mode::SymmetricConservative, 0.5)).unwrap();
        let before: f64 = g.values().iter().sum();
        let after: f64 = next.values().iter().sum();
        prop_assert!((before - after).abs() < 1e-9 * before.abs());
    }

    #[test]
    fn coupled_endpoints_match_single_modes_bitwise(g in grid_strategy(10, 10, 0.0, 255.0)) {
        let graph = build_weight_graph(&g, &tiny_patch()).unwrap();
        let ind = IndicatorField::constant(10, 10, 0.4);
        for (lambda, single) in [(0.0, Mode::TvOnly), (1.0, Mode::NltvOnly)] {
            let a = step(&g, &graph, &ind, &tiny_cfg(Mode::Coupled, lambda)).unwrap();
            let b = step(&g, &graph, &ind, &tiny_cfg(single, lambda)).unwrap();
            prop_assert_eq!(a.values(), b.values());
        }
    }

    #[test]
    fn discrete_kernels_have_unit_mass(radius in 1usize..6) {
        for profile in [
            KernelProfile::Box,
            KernelProfile::Triangle,
            KernelProfile::TruncatedGaussian,
        ] {
            let spec = KernelSpec::new(profile, radius).unwrap();
            let mass: f64 = spec.discrete().iter().map(|c| c.2).sum();
            prop_assert!((mass - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn flow_step_is_shift_equivariant(
        g in grid_strategy(10, 10, 0.0, 200.0),
        shift in 1.0f64..50.0,
    ) {
        // Adding a constant shifts all differences by zero, so the update
        // must shift by exactly the same constant (indicator held fixed).
        let graph = build_weight_graph(&g, &tiny_patch()).unwrap();
        let ind = IndicatorField::constant(10, 10, 0.5);
        let cfg = tiny_cfg(Mode::Coupled, 0.5);
        let base = step(&g, &graph, &ind, &cfg).unwrap();
        let shifted_in =
            Grid::new(10, 10, g.values().iter().map(|v| v + shift).collect()).unwrap();
        let shifted_out = step(&shifted_in, &graph, &ind, &cfg).unwrap();
        for (a, b) in base.values().iter().zip(shifted_out.values()) {
            prop_assert!((a + shift - b).abs() < 1e-9);
        }
    }
}
