use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use locc_gap::algebra::{gram_params, random_operator, Mat4};
use locc_gap::classical::{channel_of_pc, is_separable_channel, random_pc_protocol};
use locc_gap::gap::{
    alpha_max, delta, delta_min_analytic, delta_min_grid, f_pm_operator, gamma_pm, sep_point, solve_star_point, Sign,
};
use locc_gap::locc::{build_protocol_family, classify, simulate, verify_zigzag, ProtocolFamily};
use locc_gap::measures::{EntanglementMeasure, EqMeasure};
use locc_gap::separable::{c_bound, OutcomeStats};

/// Feasible (Q, r, α) from unit coordinates, kept away from the boundary.
fn feasible(q: f64, u: f64, v: f64) -> (f64, f64, f64) {
    let lo = sep_point(q);
    let r = lo + (1.0 - lo) * (0.05 + 0.9 * u);
    let alpha = alpha_max(q, r) * (0.05 + 0.9 * v);
    (q, r, alpha)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn gram_params_reconstruct(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_operator(&mut rng).gram();
        let p = gram_params(&g).unwrap();
        prop_assert!(p.is_valid());
        prop_assert!(p.reconstruct().max_abs_diff(&g) < 1e-12 * (1.0 + g.trace().re));
    }

    #[test]
    fn f_is_weight_times_gamma(seed in any::<u64>(), r in 0.05f64..0.99) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ga = random_operator(&mut rng).gram();
        let gb = random_operator(&mut rng).gram();
        let (pa, pb) = (gram_params(&ga).unwrap(), gram_params(&gb).unwrap());
        let w = pa.w * pb.w;
        let g = Mat4::kron(&ga, &gb);
        for sign in [Sign::Plus, Sign::Minus] {
            let f = f_pm_operator(&g, r, sign);
            prop_assert!((f - w * gamma_pm(pa.x, pb.x, r, sign)).abs() < 1e-12 * (1.0 + w));
        }
    }

    #[test]
    fn concurrence_never_exceeds_bound(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_operator(&mut rng);
        let b = random_operator(&mut rng);
        let s = OutcomeStats::from_kraus(&a, &b);
        let x = gram_params(&a.gram()).unwrap().x;
        let y = gram_params(&b.gram()).unwrap().x;
        let bound = c_bound(x, y).unwrap();
        for c in [s.c_plus, s.c_minus].into_iter().flatten() {
            prop_assert!(c <= bound + 1e-9);
        }
    }

    #[test]
    fn eq_measure_is_monotone(q in 0.01f64..0.99, c1 in 0.0f64..=1.0, c2 in 0.0f64..=1.0) {
        let m = EqMeasure::new(q).unwrap();
        let (lo, hi) = if c1 <= c2 { (c1, c2) } else { (c2, c1) };
        prop_assert!(m.eval(lo) <= m.eval(hi));
        prop_assert!((0.0..=1.0).contains(&m.eval(lo)));
    }

    #[test]
    fn delta_is_symmetric(q in 0.05f64..0.95, x in -0.99f64..0.99, y in -0.99f64..0.99, mu in 0.1f64..1.0) {
        let m = EqMeasure::new(q).unwrap();
        let d = delta(x, y, &m, q, mu).unwrap();
        prop_assert!((d - delta(y, x, &m, q, mu).unwrap()).abs() < 1e-12);
        prop_assert!((d - delta(-x, -y, &m, q, mu).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn gamma_is_affine_along_rounds(
        r in 0.4f64..0.99, x0 in -1.0f64..=1.0, x1 in -1.0f64..=1.0, y in -1.0f64..=1.0,
    ) {
        // A round moves one coordinate; if neither endpoint is in R+, no
        // point of the segment is.
        let outside = |x: f64| gamma_pm(x, y, r, Sign::Plus) < 0.0;
        if outside(x0) && outside(x1) {
            for k in 0..=64 {
                let t = k as f64 / 64.0;
                prop_assert!(outside(x0 + t * (x1 - x0)));
            }
        }
    }

    #[test]
    fn star_point_lies_on_boundary(q in 0.05f64..0.95, u in 0.0f64..1.0, v in 0.0f64..1.0) {
        let (q, r, alpha) = feasible(q, u, v);
        let s = solve_star_point(q, r, alpha).unwrap();
        prop_assert!((gamma_pm(s.x_star, s.y_star, r, Sign::Plus) + alpha * (1.0 + s.x_star * s.y_star)).abs() < 1e-9);
        prop_assert!(s.mu_star > 0.0 && s.mu_star < 1.0 / (1.0 - q));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn grid_never_undercuts_star_point(q in 0.05f64..0.95, u in 0.0f64..1.0, v in 0.0f64..1.0) {
        let (q, r, alpha) = feasible(q, u, v);
        let s = solve_star_point(q, r, alpha).unwrap();
        let analytic = delta_min_analytic(q, r, alpha).unwrap();
        let grid = delta_min_grid(q, r, alpha, s.mu_star, 201).unwrap();
        prop_assert!(grid >= analytic - 1e-9, "grid {} < analytic {}", grid, analytic);
    }

    #[test]
    fn random_protocols_are_consistent(seed in any::<u64>(), depth in 1usize..=5, branching in 2usize..=4) {
        let proto = build_protocol_family(&ProtocolFamily::Random { seed, depth, branching }).unwrap();
        let sim = simulate(&proto).unwrap();
        prop_assert!(verify_zigzag(&sim.leaves));
        prop_assert!(sim.completeness_defect() < 1e-10);
        prop_assert!(sim.parent_child_defect() < 1e-10);
        prop_assert!(sim.recomputed_trajectory_defect() < 1e-10);
        for r in [0.5, 0.7, 0.9] {
            let c = classify(&sim, r);
            prop_assert!(c.entry_sum_defect(&sim) < 1e-10);
            prop_assert_eq!(c.gamma0.len() + c.gamma_plus.len() + c.gamma_minus.len(), sim.leaves.len());
        }
    }

    #[test]
    fn pc_channels_are_separable(seed in any::<u64>(), depth in 1usize..=4) {
        let ch = channel_of_pc(&random_pc_protocol(seed, depth, 3).unwrap()).unwrap();
        prop_assert!(is_separable_channel(&ch));
    }
}
