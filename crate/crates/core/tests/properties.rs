use chrono::{Duration, NaiveDate, NaiveDateTime};
use proptest::prelude::*;

use nntp_core::baselines::{bic_table, select_order_bic};
use nntp_core::daily_model::{eval_week, ComponentLabel, GaussianComponent, WeeklyProfileModel};
use nntp_core::data_io::{ingest_tsv, EventRecord, IngestOptions, ModelDocument, TrafficKind};
use nntp_core::event_model::{eval_pulse, pulse_volume, EventPulse};
use nntp_core::metrics::{mae, mse, r2, rmse};
use nntp_core::regression::{
    estimate_initial_pulse, fit_attendance_regression, pearson, AttendanceRegression, SigmaPrior,
};
use nntp_core::timeseries::{extract_residual, split_by_events, EventCalendar, EventInfo, HourlyTrafficSeries};

fn monday() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2013, 12, 2)
        .unwrap()
        .and_hms_opt(0, 0, 0)
        .unwrap()
}

fn weekly_model() -> impl Strategy<Value = WeeklyProfileModel> {
    prop::collection::vec((0.0..2000.0f64, -1.5..1.5f64, 0.5..6.0f64), 9).prop_map(|p| {
        WeeklyProfileModel::new(
            ComponentLabel::ALL
                .iter()
                .zip(p)
                .map(|(&l, (r, dt, s))| GaussianComponent::new(l, r, l.anchor_hour() + dt, s).unwrap())
                .collect(),
        )
        .unwrap()
    })
}

fn scale_peaks(m: &WeeklyProfileModel, a: f64) -> WeeklyProfileModel {
    WeeklyProfileModel::new(
        m.components()
            .iter()
            .map(|c| GaussianComponent::new(c.label, c.peak * a, c.center, c.width).unwrap())
            .collect(),
    )
    .unwrap()
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
}

fn paired(len: std::ops::Range<usize>) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    len.prop_flat_map(|n| {
        (
            prop::collection::vec(-1e4..1e4f64, n),
            prop::collection::vec(-1e4..1e4f64, n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn eval_week_is_linear_in_peaks(m in weekly_model(), a in 0.0..10.0f64, k in 1u8..=7, t in 0.0..24.0f64) {
        let lhs = eval_week(&scale_peaks(&m, a), k, t).unwrap();
        let rhs = a * eval_week(&m, k, t).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-9 * rhs.abs().max(1.0));
    }

    #[test]
    fn eval_week_is_non_negative(m in weekly_model(), k in 1u8..=7, t in -48.0..72.0f64) {
        prop_assert!(eval_week(&m, k, t).unwrap() >= 0.0);
    }

    #[test]
    fn eval_week_depends_on_absolute_hour(m in weekly_model(), k in 1u8..=6, t in 0.0..24.0f64) {
        let a = eval_week(&m, k + 1, t).unwrap();
        let b = eval_week(&m, k, t + 24.0).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn pulse_is_symmetric_and_peaks_at_centre(r in 0.1..5000.0f64, c in 0u32..30, s in 0.25..6.0f64, k in 1u32..1280) {
        // Offsets on a 1/64 h grid so c + d and c - d are exact.
        let (c, d) = (f64::from(c), f64::from(k) / 64.0);
        let p = EventPulse::new(r, c, s).unwrap();
        prop_assert_eq!(eval_pulse(&p, c + d), eval_pulse(&p, c - d));
        prop_assert_eq!(eval_pulse(&p, c), p.peak());
        prop_assert!(eval_pulse(&p, c + d) < p.peak());
    }

    #[test]
    fn pulse_is_linear_in_volume(r in 0.0..5000.0f64, a in 0.0..20.0f64, s in 0.25..6.0f64, t in -10.0..40.0f64) {
        let p = EventPulse::new(r, 15.0, s).unwrap();
        let q = EventPulse::new(a * r, 15.0, s).unwrap();
        let want = a * eval_pulse(&p, t);
        prop_assert!((eval_pulse(&q, t) - want).abs() <= 1e-12 * want.max(1e-300));
    }

    #[test]
    fn pulse_volume_recovers_volume(r in 1.0..5000.0f64, s in 0.25..6.0f64) {
        let p = EventPulse::new(r, 20.0, s).unwrap();
        let v = pulse_volume(&p, s / 8.0, 8.0).unwrap();
        prop_assert!(close(v, r, 1e-3));
    }

    #[test]
    fn pearson_affine_invariance(
        xy in paired(3..40),
        a in prop_oneof![-100.0..-0.01f64, 0.01..100.0f64],
        b in -1e3..1e3f64,
    ) {
        let (x, y) = xy;
        let Ok(r) = pearson(&x, &y) else { return Ok(()) };
        let xt: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        let rt = pearson(&xt, &y).unwrap();
        prop_assert!((rt - a.signum() * r).abs() <= 1e-9);
        prop_assert!((pearson(&x, &x).unwrap() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn ols_residuals_are_orthogonal(pts in prop::collection::vec((0u64..100_000, -5e3..5e3f64), 3..30)) {
        let Ok(reg) = fit_attendance_regression(&pts) else { return Ok(()) };
        let res: Vec<f64> = pts.iter().map(|&(a, y)| y - reg.predict(a)).collect();
        let scale: f64 = pts.iter().map(|&(a, y)| (a as f64 * y).abs()).sum::<f64>().max(1.0);
        let dot: f64 = pts.iter().zip(&res).map(|(&(a, _), e)| a as f64 * e).sum();
        let sum: f64 = res.iter().sum();
        let yscale: f64 = pts.iter().map(|p| p.1.abs()).sum::<f64>().max(1.0);
        prop_assert!(dot.abs() <= 1e-9 * scale);
        prop_assert!(sum.abs() <= 1e-9 * yscale);
    }

    #[test]
    fn initial_volume_monotone_in_attendance(slope in 0.0..0.1f64, icpt in -1e3..1e3f64, a in 0u64..100_000, b in 0u64..100_000) {
        let reg = AttendanceRegression { slope, intercept: icpt, pearson_r: 0.9, n_samples: 4 };
        let prior = SigmaPrior { mean_sigma: 1.2, n_samples: 4 };
        let when = monday() + Duration::hours(20);
        let pa = estimate_initial_pulse(&EventInfo::new(when, 2.0, "soccer", a.min(b)).unwrap(), &reg, &prior, -1.0);
        let pb = estimate_initial_pulse(&EventInfo::new(when, 2.0, "soccer", a.max(b)).unwrap(), &reg, &prior, -1.0);
        prop_assert!(pa.volume <= pb.volume);
        prop_assert!(pa.volume >= 0.0);
    }

    #[test]
    fn metrics_are_symmetric_and_ordered(xy in paired(1..60)) {
        let (y, yh) = xy;
        prop_assert_eq!(mse(&y, &yh).unwrap(), mse(&yh, &y).unwrap());
        prop_assert_eq!(rmse(&y, &yh).unwrap(), rmse(&yh, &y).unwrap());
        prop_assert_eq!(mae(&y, &yh).unwrap(), mae(&yh, &y).unwrap());
        prop_assert!(mae(&y, &yh).unwrap() <= rmse(&y, &yh).unwrap() * (1.0 + 1e-12));
        let m = mse(&y, &yh).unwrap();
        prop_assert!(close(rmse(&y, &yh).unwrap().powi(2), m, 1e-12));
    }

    #[test]
    fn r2_affine_invariance(xy in paired(3..60), a in 0.01..100.0f64, b in -1e3..1e3f64) {
        let (y, yh) = xy;
        let Ok(base) = r2(&y, &yh) else { return Ok(()) };
        let ty: Vec<f64> = y.iter().map(|v| a * v + b).collect();
        let tyh: Vec<f64> = yh.iter().map(|v| a * v + b).collect();
        prop_assert!((r2(&ty, &tyh).unwrap() - base).abs() <= 1e-9 * base.abs().max(1.0));
    }

    #[test]
    fn residual_of_composed_series_is_exact(
        vals in prop::collection::vec((0.0..1e6f64, 0.0..=1.0f64), 1..100),
    ) {
        // total = daily + pulse with pulse <= daily, as produced by composition.
        let daily = HourlyTrafficSeries::new(monday(), vals.iter().map(|v| v.0).collect()).unwrap();
        let total = HourlyTrafficSeries::new(monday(), vals.iter().map(|v| v.0 + v.0 * v.1).collect()).unwrap();
        let res = extract_residual(&total, &daily).unwrap();
        for ((r, d), t) in res.values().iter().zip(daily.values()).zip(total.values()) {
            prop_assert_eq!(r + d, *t);
        }
    }

    #[test]
    fn residual_round_trip_within_one_rounding(
        vals in prop::collection::vec((0.0..1e6f64, 0.0..1e6f64), 1..100),
    ) {
        let total = HourlyTrafficSeries::new(monday(), vals.iter().map(|v| v.0).collect()).unwrap();
        let daily = HourlyTrafficSeries::new(monday(), vals.iter().map(|v| v.1).collect()).unwrap();
        let res = extract_residual(&total, &daily).unwrap();
        for ((r, d), t) in res.values().iter().zip(daily.values()).zip(total.values()) {
            prop_assert!(((r + d) - t).abs() <= f64::EPSILON * t.abs().max(d.abs()));
        }
    }

    #[test]
    fn split_partitions_days_and_ignores_order(
        days in 1usize..21,
        picks in prop::collection::btree_set((0usize..21, 0u32..22, 1u32..5), 0..6),
        seed in any::<u64>(),
    ) {
        let series = HourlyTrafficSeries::new(monday(), (0..days * 24).map(|i| i as f64).collect()).unwrap();
        let mut used = std::collections::BTreeSet::new();
        let mut events: Vec<EventInfo> = picks
            .into_iter()
            .filter(|(d, _, _)| *d < days && used.insert(*d))
            .map(|(d, h, dur)| EventInfo::new(monday() + Duration::hours((24 * d) as i64 + h as i64), dur as f64 * 0.5, "g", 1000).unwrap())
            .collect();
        let split = split_by_events(&series, &EventCalendar::new(events.clone()).unwrap()).unwrap();
        prop_assert_eq!(split.non_event_days.len() + split.event_days.len(), days);
        let mut starts: Vec<NaiveDateTime> = split.non_event_days.iter().map(|d| d.start())
            .chain(split.event_days.iter().map(|d| d.series.start())).collect();
        starts.sort();
        starts.dedup();
        prop_assert_eq!(starts.len(), days);

        let n = events.len();
        if n > 1 {
            events.rotate_left((seed % n as u64) as usize);
            events.swap(0, n - 1);
        }
        let again = split_by_events(&series, &EventCalendar::new(events).unwrap()).unwrap();
        prop_assert_eq!(split, again);
    }

    #[test]
    fn document_round_trip_is_exact(
        m in weekly_model(),
        pulses in prop::collection::vec((any::<u32>(), 0.0..1e5f64, -5.0..30.0f64, 0.25..6.0f64), 0..6),
        slope in -1e3..1e3f64,
        noise in prop::option::of(0.0..1e3f64),
    ) {
        let events = pulses.iter().enumerate().map(|(i, &(a, r, t, s))| EventRecord {
            commencement: monday() + Duration::hours(i as i64 * 30),
            attendance: a as u64,
            pulse: EventPulse::new(r, t, s).unwrap(),
            sse: Some(r / 3.0),
            converged: Some(i % 2 == 0),
        }).collect();
        let doc = ModelDocument {
            weekly: m,
            events,
            regression: Some(AttendanceRegression { slope, intercept: slope / 7.0, pearson_r: 0.1 + 0.2, n_samples: 4 }),
            sigma_prior: Some(SigmaPrior { mean_sigma: 1.0 / 3.0, n_samples: 4 }),
            noise_std: noise,
            diagnostics: None,
        };
        prop_assert_eq!(ModelDocument::parse(&doc.to_text()).unwrap(), doc);
    }
}

fn tsv_lines() -> impl Strategy<Value = Vec<String>> {
    let base = 1_385_856_000_000i64; // 2013-12-01T00:00:00Z
    prop::collection::vec((1u32..4, 0i64..36, prop::option::of(0.0..50.0f64)), 1..80).prop_map(move |recs| {
        recs.into_iter()
            .map(|(g, slot, v)| {
                let v = v.map(|v| format!("{v}")).unwrap_or_default();
                format!("{g}\t{}\t39\t{v}\t1.5\t\t\t", base + slot * 600_000)
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ingest_ignores_line_order(lines in tsv_lines(), seed in any::<u64>()) {
        let opts = IngestOptions::new(TrafficKind::SmsIn, [1, 2]);
        let mut shuffled = lines.clone();
        let n = shuffled.len();
        let mut s = seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (s >> 33) as usize % (i + 1));
        }
        let a = ingest_tsv(lines.join("\n").as_bytes(), &opts);
        let b = ingest_tsv(shuffled.join("\n").as_bytes(), &opts);
        match (a, b) {
            (Ok(a), Ok(b)) => prop_assert_eq!(a, b),
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "order changed the outcome"),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn bic_choice_is_scale_invariant(seed in any::<u64>(), scale in 0.01..1000.0f64) {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = Normal::new(0.0, 1.0).unwrap();
        let mut x = vec![0.0f64; 400];
        for t in 2..400 {
            x[t] = 0.5 * x[t - 1] - 0.3 * x[t - 2] + n.sample(&mut rng);
        }
        let a = HourlyTrafficSeries::new(monday(), x.clone()).unwrap();
        let b = HourlyTrafficSeries::new(monday(), x.iter().map(|v| v * scale).collect()).unwrap();
        prop_assert_eq!(select_order_bic(&a, 3, 2, 0).unwrap(), select_order_bic(&b, 3, 2, 0).unwrap());
        let ta = bic_table(&a, 3, 2, 0).unwrap();
        let tb = bic_table(&b, 3, 2, 0).unwrap();
        prop_assert_eq!(ta.len(), tb.len());
    }
}
