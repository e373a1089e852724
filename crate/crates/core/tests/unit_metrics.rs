use ddot_core::metrics::*;
use ddot_core::*;
use ddot_core::expr::parse_infix_system;

fn sys(src: &str) -> OdeSystem<f64> {
    parse_infix_system(src).unwrap()
}

fn line(values: &[f64]) -> Trajectory<f64> {
    Trajectory::new((0..values.len()).map(|i| i as f64).collect(), values.to_vec(), 1).unwrap()
}

#[test]
fn r_squared_examples() {
    let truth = line(&[0.0, 1.0, 2.0, 3.0]);
    assert_eq!(r_squared(&truth, &truth).unwrap(), 1.0);
    assert_eq!(r_squared(&truth, &line(&[1.5; 4])).unwrap(), 0.0);
    assert_eq!(r_squared(&truth, &line(&[0.0, 1.0, 2.0, 4.0])).unwrap(), 0.8);
    assert_eq!(r_squared_states(&truth, &[0.0, f64::NAN, 0.0, 0.0]).unwrap(), f64::NEG_INFINITY);
    assert!(r_squared(&truth, &line(&[0.0, 1.0, 2.0])).is_err());
}

#[test]
fn r_squared_is_joint_over_components() {
    let truth = Trajectory::<f64>::new(vec![0.0, 1.0], vec![0.0, 0.0, 2.0, 10.0], 2).unwrap();
    // SST = 2 + 50, SSE = 1
    let pred = Trajectory::new(vec![0.0, 1.0], vec![1.0, 0.0, 2.0, 10.0], 2).unwrap();
    assert!((r_squared(&truth, &pred).unwrap() - (1.0 - 1.0 / 52.0)).abs() < 1e-15);
}

#[test]
fn p_r2_counts_failures() {
    assert_eq!(p_r2_above(&[1.0, 0.95, 0.5, f64::NEG_INFINITY], 0.9).unwrap(), 0.5);
    assert_eq!(p_r2_above(&[1.0, 0.91], 0.9).unwrap(), 1.0);
    assert_eq!(p_r2_above(&[0.9], 0.9).unwrap(), 0.0);
    assert!(p_r2_above(&[], 0.9).is_err());
    let mut scores = vec![1.0; 38];
    scores.extend(vec![0.0; 24]);
    assert!((p_r2_above(&scores, 0.9).unwrap() - 0.613).abs() < 5e-4);
}

#[test]
fn divergence_examples() {
    let truth = sys("-x_1 | x_0");
    let pred = sys("-x_1 + 0.1*x_0 | x_0 + 0.1*x_1");
    for p in [[1.0, 0.0], [-3.0, 2.5], [100.0, -7.0]] {
        assert_eq!(divergence_at(&truth, &p), 0.0);
        assert!((divergence_at(&pred, &p) - 0.2).abs() < 1e-15);
    }
    assert_eq!(divergence_at(&sys("x_0^2"), &[3.0]), 6.0);
}

#[test]
fn fields_and_masking() {
    let truth = sys("-x_1 | x_0");
    let region = Region::uniform(2, -1.0, 1.0, 2).unwrap();
    let f = divergence_field(&truth, &region).unwrap();
    assert_eq!(f.len(), 4);
    assert!(f.values.iter().all(|v| *v == Some(0.0)));

    let singular = sys("inv(x_0) | x_0");
    let region = Region::uniform(2, -1.0, 1.0, 5).unwrap();
    let f = divergence_field(&singular, &region).unwrap();
    for i in 0..f.len() {
        assert_eq!(f.values[i].is_none(), f.point(i)[0] == 0.0);
    }
    assert_eq!(f.valid_count(), 20);
    let csv = f.to_csv();
    assert!(csv.starts_with("x_0,x_1,div,valid\n"));
    assert_eq!(csv.lines().count(), 26);
}

#[test]
fn div_diff_examples() {
    let truth = sys("-x_1 | x_0");
    let pred = sys("-x_1 + 0.1*x_0 | x_0 + 0.1*x_1");
    let region = Region::uniform(2, -2.0, 2.0, 20).unwrap();
    assert_eq!(div_diff(&truth, &truth, &region).unwrap(), 0.0);
    let d = div_diff(&truth, &pred, &region).unwrap();
    assert!((d - 1.2f64.ln()).abs() < 1e-12);
    assert_eq!(d, div_diff(&pred, &truth, &region).unwrap());
}

#[test]
fn degenerate_regions_are_rejected() {
    let bad = sys("sqrt(x_0)");
    let good = sys("x_0");
    let region = Region::uniform(1, -10.0, 1.0, 20).unwrap();
    assert!(matches!(
        div_diff(&good, &bad, &region),
        Err(MetricError::DegenerateRegion { .. })
    ));
}

#[test]
fn region_rules() {
    let t = Trajectory::<f64>::new(vec![0.0, 1.0], vec![0.0, 0.0, 1.0, 1.0], 2).unwrap();
    let r = region_from_trajectory(&t, 0.1).unwrap();
    for &(lo, hi) in r.bounds() {
        assert!((lo + 0.1).abs() < 1e-15 && (hi - 1.1).abs() < 1e-15);
    }
    assert_eq!(r.resolution(), &[20, 20]);

    let c = Trajectory::<f64>::new(vec![0.0, 1.0], vec![5.0, 5.0], 1).unwrap();
    let r = region_from_trajectory(&c, 0.1).unwrap();
    let (lo, hi) = r.bounds()[0];
    assert!((lo - (5.0 - 5e-4)).abs() < 1e-12 && (hi - (5.0 + 5e-4)).abs() < 1e-12);

    let four = Trajectory::new(vec![0.0, 1.0], (0..8).map(|i| i as f64).collect(), 4).unwrap();
    let r = region_from_trajectory(&four, 0.1).unwrap();
    assert_eq!(r.resolution(), &[6; 4]);
    assert_eq!(r.size(), 1296);

    assert!(Region::uniform(1, 1.0, 0.0, 5).is_err());
    assert!(Region::uniform(1, 0.0, 1.0, 1).is_err());
    assert!(matches!(
        Region::uniform(3, 0.0, 1.0, 101),
        Err(MetricError::GridTooLarge { .. })
    ));
}

#[test]
fn monotone_in_spiral_strength() {
    let truth = sys("-x_1 | x_0");
    let region = Region::uniform(2, -2.0, 2.0, 20).unwrap();
    let mut prev = 0.0;
    for c in [0.05, 0.1, 0.2, 0.4] {
        let pred = sys(&format!("-x_1 + {c}*x_0 | x_0 + {c}*x_1"));
        let d = div_diff(&truth, &pred, &region).unwrap();
        assert!(d > prev);
        prev = d;
    }
}
