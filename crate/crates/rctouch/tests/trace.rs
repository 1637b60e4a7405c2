use proptest::prelude::*;
use rctouch::geom::{point_polyline_dist, polyline_length, segment_segment_dist, Vec3};
use rctouch::trace::*;
use rctouch::Error;

fn straight(len: f64, d: f64) -> Conduit {
    Conduit::straight(Vec3::ZERO, Vec3::new(len, 0.0, 0.0), d)
}

fn excess(c: &Conduit, p: &SerpentinePath) -> f64 {
    let mut worst: f64 = 0.0;
    for (a, b, _) in p.segments() {
        let n = ((a.dist(b) / 0.05).ceil() as usize).max(1);
        for i in 0..=n {
            worst = worst.max(point_polyline_dist(a.lerp(b, i as f64 / n as f64), &c.centerline) - c.diameter / 2.0);
        }
    }
    worst
}

#[test]
fn resistance_model_values() {
    let m = ResistivityModel::default();
    assert_eq!(m.resistance(137.0, 0.0), 35_072.0);
    assert_eq!(m.resistance(0.0, 0.0), 0.0);
    assert_eq!(m.resistance(40.0, 0.0), 10_240.0);
    assert_eq!(m.resistance(0.0, 10.0), 10_130.0);
}

#[test]
fn regression_recovers_positive_slopes() {
    let m = ResistivityModel::regressed();
    assert!(m.rho_xy > 200.0 && m.rho_xy < 300.0, "{}", m.rho_xy);
    assert!(m.rho_z > 800.0 && m.rho_z < 1200.0, "{}", m.rho_z);
    let (a, b) = ResistivityModel::fit_line(&[(1.0, 3.0), (2.0, 5.0), (3.0, 7.0)]);
    assert!((a - 2.0).abs() < 1e-12 && (b - 1.0).abs() < 1e-12);
}

#[test]
fn reference_conduit_packs_expected_length() {
    let p = fill_serpentine(&straight(9.0, 5.0), &FillParams::default()).unwrap();
    assert!((p.length_xy / 137.0 - 1.0).abs() <= 0.15, "{}", p.length_xy);
    let r = estimate_resistance(&p, &ResistivityModel::default());
    assert!((r / 35e3 - 1.0).abs() <= 0.15, "{r}");
}

#[test]
fn thin_conduit_is_unfillable() {
    let e = fill_serpentine(&straight(9.0, 1.0), &FillParams::default()).unwrap_err();
    assert!(matches!(e, Error::Unfillable { required, .. } if (required - 2.0).abs() < 1e-12));
}

#[test]
fn tuning_hits_target() {
    let c = straight(40.0, 5.0);
    let fp = FillParams::default();
    let m = ResistivityModel::default();
    let p = tune_to_target(&c, 50e3, 0.05, &fp, &m).unwrap();
    assert!((estimate_resistance(&p, &m) / 50e3 - 1.0).abs() <= 0.05);

    let max = max_resistance(&c, &fp, &m).unwrap();
    let p = tune_to_target(&c, max, 0.05, &fp, &m).unwrap();
    assert_eq!((p.ray_margin, p.layer_margin), (fp.ray_margin, fp.layer_margin));

    assert!(matches!(tune_to_target(&c, 1.0, 0.05, &fp, &m), Err(Error::TargetTooLow { .. })));
    assert!(matches!(
        tune_to_target(&c, 2.0 * max, 0.05, &fp, &m),
        Err(Error::TargetTooHigh { max: got, .. }) if (got - max).abs() < 1e-6
    ));
}

#[test]
fn bent_conduit_tunes_within_tolerance() {
    let c = Conduit {
        centerline: vec![Vec3::ZERO, Vec3::new(20.0, 0.0, 0.0), Vec3::new(30.0, 10.0, 3.0), Vec3::new(30.0, 25.0, 20.0)],
        diameter: 5.0,
    };
    let fp = FillParams::default();
    let m = ResistivityModel::default();
    let max = max_resistance(&c, &fp, &m).unwrap();
    for frac in [0.3, 0.5, 0.8] {
        let p = tune_to_target(&c, frac * max, 0.05, &fp, &m).unwrap();
        let r = estimate_resistance(&p, &m);
        assert!((r / (frac * max) - 1.0).abs() <= 0.05, "{frac}: {r}");
        assert!(excess(&c, &p) <= 1e-6);
    }
}

#[test]
fn packing_grows_with_diameter() {
    let fp = FillParams::default();
    let small = packing_ratio(5.0, &fp).unwrap();
    let large = packing_ratio(10.0, &fp).unwrap();
    assert!(small > 10.0 && large > 3.0 * small, "{small} {large}");
}

#[test]
fn layer_offsets_are_centred() {
    for (d, lm) in [(5.0, 1.2), (10.0, 1.2), (7.3, 2.0)] {
        let l = layer_offsets(d, lm);
        assert_eq!(l.len() % 2, 1);
        let mean: f64 = l.iter().sum::<f64>() / l.len() as f64;
        assert!(mean.abs() < 1e-12);
        assert!(l.windows(2).all(|w| w[1] - w[0] >= lm - 1e-12));
        assert!(l.iter().all(|h| h.abs() < d / 2.0));
    }
}

fn bent() -> impl Strategy<Value = Conduit> {
    let leg = (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0, 6.0f64..25.0);
    (4.0f64..8.0, prop::collection::vec(leg, 1..=3)).prop_map(|(d, legs)| {
        let mut pts = vec![Vec3::ZERO];
        for (x, y, z, len) in legs {
            let dir = Vec3::new(x, y, z).normalized().unwrap_or(Vec3::X);
            let last = *pts.last().unwrap();
            pts.push(last + dir * len);
        }
        Conduit { centerline: pts, diameter: d }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn straight_fill_invariants(len in 5.0f64..40.0, d in 3.0f64..10.0) {
        let c = straight(len, d);
        let fp = FillParams::default();
        let p = fill_serpentine(&c, &fp).unwrap();
        prop_assert!((p.length_xy + p.length_z - polyline_length(&p.points)).abs() < 1e-6);
        prop_assert!(excess(&c, &p) <= 1e-6);
        let first = p.points[0].x;
        let last = p.points.last().unwrap().x;
        prop_assert!(first <= fp.thickness_z && len - last <= fp.thickness_z, "{first} {last}");
        let segs: Vec<_> = p.segments().collect();
        let mut gap = f64::INFINITY;
        for i in 0..segs.len() {
            for j in i + 2..segs.len() {
                gap = gap.min(segment_segment_dist(segs[i].0, segs[i].1, segs[j].0, segs[j].1));
            }
        }
        prop_assert!(gap >= fp.ray_margin.min(fp.layer_margin) - 1e-6, "{gap}");
    }

    #[test]
    fn straight_resistance_is_monotone_in_margin_scale(len in 5.0f64..40.0, d in 3.0f64..10.0) {
        let c = straight(len, d);
        let fp = FillParams::default();
        let m = ResistivityModel::default();
        let mut last = f64::INFINITY;
        for i in 0..=40 {
            let r = resistance_at_scale(&c, &fp, &m, 1.0 + 0.05 * i as f64).unwrap();
            prop_assert!(r <= last * (1.0 + 1e-9), "k={}: {last} -> {r}", 1.0 + 0.05 * i as f64);
            last = r;
        }
    }

    #[test]
    fn doubling_margins_shortens_the_trace(len in 8.0f64..40.0, d in 4.0f64..10.0) {
        let c = straight(len, d);
        let fp = FillParams::default();
        let a = fill_serpentine(&c, &fp).unwrap();
        let b = fill_serpentine(&c, &fp.scaled(2.0)).unwrap();
        prop_assert!(b.total_length() < a.total_length());
    }

    #[test]
    fn bent_fill_stays_inside(c in bent()) {
        let p = fill_serpentine(&c, &FillParams::default()).unwrap();
        prop_assert!(excess(&c, &p) <= 1e-6);
        prop_assert!((p.length_xy + p.length_z - polyline_length(&p.points)).abs() < 1e-6);
    }
}
