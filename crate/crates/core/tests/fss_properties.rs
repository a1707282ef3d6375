use proptest::prelude::*;
use qo2::fss::*;
use qo2::observables::EngineKind;
use qo2::sweep::SweepRecord;

fn cubic(c: [f64; 4]) -> impl Fn(f64) -> f64 {
    move |x| c[0] + x * (c[1] + x * (c[2] + x * c[3]))
}

fn knots(gaps: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0];
    for g in gaps {
        x.push(x.last().unwrap() + g);
    }
    x
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn not_a_knot_and_clamped_splines_reproduce_cubics(
        c in prop::array::uniform4(-3.0f64..3.0),
        gaps in prop::collection::vec(0.05f64..0.5, 4..12),
        u in 0.0f64..1.0,
    ) {
        let x = knots(&gaps);
        let f = cubic(c);
        let y: Vec<f64> = x.iter().map(|&t| f(t)).collect();
        let t = u * x.last().unwrap();
        let scale = y.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for kind in [SplineKind::NotAKnot, SplineKind::Clamped] {
            let s = CubicSpline::new(&x, &y, kind).unwrap();
            prop_assert!((s.eval(t) - f(t)).abs() < 1e-9 * scale, "{kind:?}: {} vs {}", s.eval(t), f(t));
        }
    }

    #[test]
    fn crossing_is_symmetric_and_exact_for_lines(
        x0 in 0.2f64..0.8,
        ka in 0.5f64..4.0,
        kb in -4.0f64..-0.5,
        offset in 0usize..7,
    ) {
        let step = 1e-2;
        let a = Series::sample(16, Observable::SPrime, 0.0, step, 101, |d| ka * (d - x0));
        let b = Series::sample(32, Observable::SPrime, offset as f64 * 1e-3, step, 99, |d| kb * (d - x0));
        let ab = crossing_point(&a, &b).unwrap();
        let ba = crossing_point(&b, &a).unwrap();
        prop_assert_eq!(ab, ba);
        prop_assert!((ab - x0).abs() < 1e-9);
    }

    #[test]
    fn central_charge_inverts_the_height_relation(
        c in 0.2f64..3.0,
        b in 0.5f64..6.0,
        bkt in any::<bool>(),
    ) {
        let kind = if bkt { TransitionKind::Bkt } else { TransitionKind::Iog };
        let a = height_coefficient(c, b, kind);
        let back = central_charge(a, b, kind).unwrap();
        prop_assert!((back - c).abs() < 1e-12 * c.max(1.0));
    }

    #[test]
    fn fits_ignore_data_order(
        amp in 0.5f64..3.0,
        p in 0.3f64..1.5,
        c in -1.0f64..1.0,
        seed in any::<u64>(),
    ) {
        let m = ScalingModel::PowerLaw;
        let truth = [c, amp, p];
        let mut data: Vec<(f64, f64)> = (1..=8).map(|k| {
            let l = 16.0 * k as f64;
            (l, m.eval(&truth, l) * (1.0 + 1e-3 * ((k as f64 * 1.7).sin())))
        }).collect();
        let a = fit_scaling_auto(m, &data, &FitOptions::default()).unwrap();
        let mut s = seed;
        for i in (1..data.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            data.swap(i, (s >> 33) as usize % (i + 1));
        }
        let b = fit_scaling_auto(m, &data, &FitOptions::default()).unwrap();
        prop_assert_eq!(a.params, b.params);
        prop_assert_eq!(a.uncertainties, b.uncertainties);
    }

    #[test]
    fn parabola_peaks_are_located_exactly(centre in 0.2f64..0.8, height in 0.1f64..10.0) {
        let s = Series::sample(32, Observable::ChiF, 0.0, 1e-3, 1001, |d| height - (d - centre).powi(2));
        let p = find_peak(&s, None).unwrap();
        prop_assert!((p.position - centre).abs() < 1e-9);
        prop_assert!((p.height - height).abs() < 1e-9);
    }

    #[test]
    fn records_round_trip_through_json(
        length in 2usize..4096,
        d_index in -5000i64..5000,
        values in prop::array::uniform6(-1e3f64..1e3),
        converged in any::<bool>(),
    ) {
        let r = SweepRecord {
            plan_id: "p".into(),
            timestamp: 1_700_000_000,
            code_version: "qo2 test".into(),
            variant: "u".into(),
            jz: 0.0,
            spin: 1,
            length,
            d: d_index as f64 * 1e-3,
            d_index,
            grid_step: 1e-3,
            delta: 5e-4,
            engine: EngineKind::Dmrg,
            epsilon: 1e-10,
            energy: values[0],
            fidelity: values[1],
            infidelity: values[2],
            chi_f: values[3],
            entropy: values[4],
            entropy_derivative: values[5],
            max_bond: 64,
            converged,
            bond_cap_reached: !converged,
            max_truncation_error: 1e-11,
            sweeps: 9,
        };
        let back: SweepRecord = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        prop_assert_eq!(back, r);
    }
}

#[test]
fn spline_choice_moves_smooth_peaks_very_little() {
    let f = |d: f64| 0.6 / (1.0 + ((d - 1.1237) / 0.08).powi(2));
    let s = Series::sample(64, Observable::SPrime, 1.0, 1e-3, 250, f);
    let positions: Vec<f64> = [SplineKind::NotAKnot, SplineKind::Natural, SplineKind::Clamped]
        .iter()
        .map(|&spline| find_peak_with(&s, None, &PeakOptions { spline, ..PeakOptions::default() }).unwrap().position)
        .collect();
    for p in &positions {
        assert!((p - 1.1237).abs() < 1e-5, "{positions:?}");
    }
}
