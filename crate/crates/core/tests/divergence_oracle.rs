use ddot_core::expr::{parse_infix_system, OdeSystem};
use ddot_core::metrics::{div_diff, divergence_at, divergence_field, divergence_terms, Region};
use ddot_core::odegen::{sample_system, GenConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Richardson-extrapolated central difference of `sum_k df_k/dx_k`, plus the
/// sum of the absolute per-component partials as a scale.
fn fd_divergence(sys: &OdeSystem<f64>, x: &[f64]) -> (f64, f64) {
    let mut total = 0.0;
    let mut scale = 0.0;
    for (k, f) in sys.equations().iter().enumerate() {
        let central = |h: f64| {
            let mut p = x.to_vec();
            p[k] = x[k] + h;
            let up = f.evaluate(&p);
            p[k] = x[k] - h;
            (up - f.evaluate(&p)) / (2.0 * h)
        };
        let h = 1e-3 * x[k].abs().max(1.0);
        let d = (4.0 * central(h / 2.0) - central(h)) / 3.0;
        total += d;
        scale += d.abs();
    }
    (total, scale)
}

#[test]
fn symbolic_divergence_matches_finite_differences() {
    let cfg = GenConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut checked = 0;
    for seed in 0..20u64 {
        let sys = sample_system(&cfg, 1000 + seed).unwrap();
        let terms = divergence_terms(&sys);
        let mut points = 0;
        let mut tries = 0;
        while points < 10 {
            tries += 1;
            assert!(tries < 10_000, "no finite points for {sys}");
            let x: Vec<f64> = (0..sys.dim()).map(|_| rng.random_range(-2.0..2.0)).collect();
            let sym: f64 = terms.iter().map(|t| t.evaluate(&x)).sum();
            let (fd, scale) = fd_divergence(&sys, &x);
            let values_ok = sys.eval(&x).iter().all(|v| v.is_finite() && v.abs() < 1e8);
            if !(sym.is_finite() && fd.is_finite() && values_ok) {
                continue;
            }
            let rel = (sym - fd).abs() / scale.max(sym.abs()).max(1.0);
            assert!(rel <= 1e-4, "{sys} at {x:?}: symbolic {sym}, differences {fd}");
            points += 1;
            checked += 1;
        }
    }
    assert_eq!(checked, 200);
}

#[test]
fn rotation_pair_divergence_and_score() {
    let truth: OdeSystem<f64> = parse_infix_system("-x_1 | x_0").unwrap();
    let pred: OdeSystem<f64> = parse_infix_system("-x_1 + 0.1 * x_0 | x_0 + 0.1 * x_1").unwrap();
    let expected = 1.2f64.ln();
    for (lo, hi, g) in [(-1.0, 1.0, 5), (-50.0, 3.0, 20), (0.0, 1e-3, 2)] {
        let region = Region::uniform(2, lo, hi, g).unwrap();
        let field = divergence_field(&pred, &region).unwrap();
        assert!(field.values.iter().all(|v| (v.unwrap() - 0.2).abs() < 1e-15));
        assert!((div_diff(&truth, &pred, &region).unwrap() - expected).abs() <= 1e-9);
    }
    assert_eq!(divergence_at(&truth, &[0.3, -7.0]), 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn div_diff_is_symmetric_and_zero_on_the_diagonal(a in 0u64..10_000, b in 0u64..10_000) {
        let cfg = GenConfig { d_max: 2, dim_weights: vec![0.0, 1.0], ..GenConfig::default() };
        let s1 = sample_system(&cfg, a).unwrap();
        let s2 = sample_system(&cfg, b).unwrap();
        let region = Region::uniform(2, -2.0, 2.0, 20).unwrap();
        let fwd = div_diff(&s1, &s2, &region);
        let back = div_diff(&s2, &s1, &region);
        match (fwd, back) {
            (Ok(x), Ok(y)) => {
                prop_assert_eq!(x.to_bits(), y.to_bits());
                prop_assert!(x >= 0.0);
            }
            (Err(_), Err(_)) => {}
            (x, y) => prop_assert!(false, "asymmetric outcome {:?} vs {:?}", x, y),
        }
        if let Ok(z) = div_diff(&s1, &s1, &region) {
            prop_assert_eq!(z, 0.0);
        }
    }
}
