//! Generate-then-refit checks against known ground truth.

use chrono::{Duration, NaiveDate, NaiveDateTime};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use nntp_core::baselines::{fit_arma, forecast, select_order_bic, ArmaModel, ArmaOrder};
use nntp_core::daily_model::{fit_weekly, ComponentLabel, WeeklyProfileModel};
use nntp_core::data_io::{generate_synthetic, reference_corpus, reference_weekly_model, SyntheticSpec};
use nntp_core::event_model::{eval_pulse, fit_pulse, fit_pulse_samples, pulse_volume, EventPulse, PulseFitConfig};
use nntp_core::optim::{FitConfig, Solver};
use nntp_core::pipeline::{fit_model, predict, PipelineConfig};
use nntp_core::predictor::{
    best_candidate_fit, predict_multistep, ForecastMode, ForecastRequest, PredictorConfig, SingleStepState,
};
use nntp_core::regression::{AttendanceRegression, SigmaPrior};
use nntp_core::timeseries::{EventCalendar, EventInfo, HourlyTrafficSeries};
use nntp_core::Error;

fn day(d: u32) -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2013, 12, d)
        .unwrap()
        .and_hms_opt(0, 0, 0)
        .unwrap()
}

fn days_of(s: &HourlyTrafficSeries) -> Vec<HourlyTrafficSeries> {
    (0..s.len() / 24).map(|d| s.slice(24 * d, 24).unwrap()).collect()
}

fn routine(weeks: usize, noise: f64, seed: u64) -> (WeeklyProfileModel, HourlyTrafficSeries) {
    let spec = SyntheticSpec {
        weekly: reference_weekly_model(),
        start: day(2).date(),
        weeks,
        events: vec![],
        noise_fraction: noise,
        seed,
    };
    (spec.weekly.clone(), generate_synthetic(&spec).unwrap().series)
}

#[test]
fn weekly_fit_recovers_noiseless_truth() {
    let (truth, series) = routine(2, 0.0, 0);
    let fit = fit_weekly(&days_of(&series), &FitConfig::default()).unwrap();
    assert!(fit.converged);
    for l in ComponentLabel::ALL {
        let (a, b) = (truth.component(l), fit.model.component(l));
        assert!(
            (b.peak / a.peak - 1.0).abs() < 0.01,
            "{l} peak {} vs {}",
            b.peak,
            a.peak
        );
        assert!((b.center - a.center).abs() < 0.1, "{l} center");
        assert!((b.width / a.width - 1.0).abs() < 0.02, "{l} width");
    }
    let bound = 1e-6 * series.len() as f64 * truth.max_peak().powi(2);
    assert!(fit.objective <= bound, "objective {} > {bound}", fit.objective);
}

#[test]
fn weekly_fit_trace_never_increases() {
    let (_, series) = routine(1, 0.05, 4);
    for solver in [Solver::LevenbergMarquardt, Solver::GradientDescent] {
        let cfg = FitConfig {
            solver,
            max_iterations: 400,
            restarts: 1,
            ..FitConfig::default()
        };
        let fit = fit_weekly(&days_of(&series), &cfg).unwrap();
        assert!(fit.trace.len() > 1);
        assert!(fit.trace.windows(2).all(|w| w[1] <= w[0]), "{solver:?} trace rose");
        assert_eq!(*fit.trace.last().unwrap(), fit.objective);
    }
}

#[test]
fn gradient_descent_reaches_good_fit() {
    let (_, series) = routine(2, 0.05, 8);
    let cfg = FitConfig {
        solver: Solver::GradientDescent,
        ..FitConfig::default()
    };
    let fit = fit_weekly(&days_of(&series), &cfg).unwrap();
    let rebuilt = fit.model.predict_series(series.start(), series.len()).unwrap();
    let r2 = nntp_core::metrics::r2(series.values(), rebuilt.values()).unwrap();
    assert!(r2 >= 0.97, "R2 {r2}");
}

#[test]
fn weekly_fit_on_zero_traffic() {
    let zero = HourlyTrafficSeries::new(day(2), vec![0.0; 168]).unwrap();
    let fit = fit_weekly(&days_of(&zero), &FitConfig::default()).unwrap();
    assert_eq!(fit.objective, 0.0);
    assert!(fit.model.components().iter().all(|c| c.peak == 0.0));
}

#[test]
fn weekly_fit_needs_every_weekday() {
    let (_, series) = routine(1, 0.0, 0);
    let mut days = days_of(&series);
    days.remove(2);
    assert!(matches!(
        fit_weekly(&days, &FitConfig::default()),
        Err(Error::InsufficientData(_))
    ));
}

#[test]
fn pulse_fit_recovers_noiseless_pulse() {
    let truth = EventPulse::new(800.0, 15.0, 1.25).unwrap();
    let residual = HourlyTrafficSeries::new(day(1), (0..24).map(|h| eval_pulse(&truth, h as f64)).collect()).unwrap();
    let init = EventPulse::new(400.0, 15.0, 2.5).unwrap();
    let fit = fit_pulse(&residual, 15.0, &init, &PulseFitConfig::default()).unwrap();
    assert!((fit.pulse.volume / 800.0 - 1.0).abs() < 0.005);
    assert!((fit.pulse.width / 1.25 - 1.0).abs() < 0.01);
    assert_eq!(fit.pulse.center, 15.0);
    let energy: f64 = residual.values().iter().filter(|_| true).map(|v| v * v).sum();
    assert!(fit.sse <= 1e-8 * energy);
    assert!(fit.trace.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn pulse_fit_needs_three_samples() {
    let init = EventPulse::new(1.0, 15.0, 1.0).unwrap();
    let cfg = PulseFitConfig::default();
    let r = fit_pulse_samples(&[(14.0, 1.0), (15.0, 2.0)], 15.0, &init, &cfg);
    assert!(matches!(r, Err(Error::InsufficientData(_))));
}

#[test]
fn pulse_volume_error_shrinks_with_step() {
    let p = EventPulse::new(1000.0, 0.0, 1.0).unwrap();
    let mut step = 0.25;
    let mut prev = (pulse_volume(&p, step, 6.0).unwrap() - 1000.0).abs();
    for _ in 0..5 {
        step /= 2.0;
        let err = (pulse_volume(&p, step, 6.0).unwrap() - 1000.0).abs();
        assert!(
            err <= prev / 2.0 || err <= 1e-8 * 1000.0,
            "step {step}: {err} vs {prev}"
        );
        prev = err;
    }
    assert!((pulse_volume(&p, 0.01, 6.0).unwrap() - 1000.0).abs() <= 1.0);
    let z = EventPulse::new(0.0, 0.0, 1.0).unwrap();
    assert_eq!(pulse_volume(&z, 0.01, 6.0).unwrap(), 0.0);
    assert!(pulse_volume(&p, 0.3, 6.0).is_err());
    assert!(pulse_volume(&p, 0.01, 5.0).is_err());
}

fn regression() -> (AttendanceRegression, SigmaPrior) {
    (
        AttendanceRegression {
            slope: 0.03323,
            intercept: -258.85,
            pearson_r: 0.922,
            n_samples: 4,
        },
        SigmaPrior {
            mean_sigma: 1.15,
            n_samples: 4,
        },
    )
}

fn game(d: u32, h: u32, attendance: u64) -> EventInfo {
    EventInfo::new(day(d) + Duration::hours(h as i64), 2.0, "soccer", attendance).unwrap()
}

#[test]
fn multistep_matches_noiseless_truth() {
    let (reg, prior) = regression();
    let weekly = reference_weekly_model();
    let event = game(18, 21, 45_000);
    let pulse = EventPulse::new(reg.predict(45_000), 20.0, prior.mean_sigma).unwrap();
    let req = ForecastRequest::new(
        day(16),
        168,
        EventCalendar::new(vec![event]).unwrap(),
        ForecastMode::MultiStep,
    )
    .unwrap();
    let f = predict_multistep(&weekly, &req, &reg, &prior, &PredictorConfig::default()).unwrap();
    for (i, row) in f.rows.iter().enumerate() {
        let h = i as f64 - 48.0;
        let expected_pulse = if (h - 20.0).abs() <= 6.0 {
            eval_pulse(&pulse, h)
        } else {
            0.0
        };
        assert_eq!(row.daily, weekly.eval_at(row.time));
        assert!((row.predicted - (row.daily + expected_pulse)).abs() <= 1e-9 * row.predicted.max(1.0));
        assert!(row.predicted >= 0.0);
    }

    let quiet = ForecastRequest::new(day(16), 168, EventCalendar::default(), ForecastMode::MultiStep).unwrap();
    let f = predict_multistep(&weekly, &quiet, &reg, &prior, &PredictorConfig::default()).unwrap();
    assert_eq!(
        f.predicted(),
        weekly.predict_series(day(16), 168).unwrap().into_values()
    );
}

#[test]
fn single_and_multi_agree_before_refits_begin() {
    let data = generate_synthetic(&reference_corpus(3, 0.05)).unwrap();
    let cfg = PipelineConfig::default();
    let train = data.series.window(data.series.start(), day(16)).unwrap();
    let doc = fit_model(&train, &data.calendar.between(day(2), day(16)), &cfg)
        .unwrap()
        .document;
    let test = data.series.window(day(16), day(23)).unwrap();
    let events = data.calendar.between(day(16), day(23));
    let req = ForecastRequest::new(day(16), 168, events, ForecastMode::SingleStep).unwrap();
    let single = predict(&doc, &req, Some(&test), &cfg.predictor).unwrap();
    let req = ForecastRequest {
        mode: ForecastMode::MultiStep,
        ..req
    };
    let multi = predict(&doc, &req, Some(&test), &cfg.predictor).unwrap();

    let mut seen_in_window = 0;
    let mut differs = false;
    for (s, m) in single.rows.iter().zip(&multi.rows) {
        if m.pulse == 0.0 && s.pulse == 0.0 {
            assert_eq!(s.predicted, m.predicted);
            seen_in_window = 0;
            continue;
        }
        if seen_in_window < cfg.predictor.min_refit_samples {
            assert_eq!(s.predicted, m.predicted, "{}", s.time);
        } else {
            differs |= s.predicted != m.predicted;
        }
        seen_in_window += 1;
    }
    assert!(differs);
}

#[test]
fn refit_on_exact_history_recovers_pulse() {
    let truth = EventPulse::new(1500.0, 20.0, 1.4).unwrap();
    let initial = EventPulse::new(1100.0, 20.0, 1.1).unwrap();
    let cfg = PredictorConfig::default();
    let mut state = SingleStepState::new(initial, cfg.candidate_spread);
    for h in 14..20 {
        let h = h as f64;
        state
            .advance(h, 100.0 + eval_pulse(&truth, h), 100.0, h + 1.0, 100.0, &cfg)
            .unwrap();
    }
    let got = state.current_pulse();
    assert!((got.volume / truth.volume - 1.0).abs() < 1e-3);
    let next = eval_pulse(got, 20.0);
    assert!((next / eval_pulse(&truth, 20.0) - 1.0).abs() < 1e-3);
}

#[test]
fn rolling_error_never_grows_on_noiseless_data() {
    let truth = EventPulse::new(2000.0, 20.75, 1.155).unwrap();
    let cfg = PredictorConfig::default();
    for initial in [
        EventPulse::new(1400.0, 20.75, 0.9).unwrap(),
        EventPulse::new(2600.0, 20.75, 1.6).unwrap(),
        EventPulse::new(300.0, 20.75, 3.0).unwrap(),
    ] {
        let mut state = SingleStepState::new(initial, cfg.candidate_spread);
        let mut errors = Vec::new();
        for i in 0..12 {
            let h = 15.0 + i as f64;
            let pred = state
                .advance(h, eval_pulse(&truth, h), 0.0, h + 1.0, 0.0, &cfg)
                .unwrap();
            errors.push((pred - eval_pulse(&truth, h + 1.0)).abs());
        }
        let floor = 1e-6 * truth.peak();
        for w in errors[2..].windows(2) {
            assert!(w[1] <= w[0] + floor, "{errors:?}");
        }
    }
}

#[test]
fn candidate_superset_never_raises_sse() {
    let truth = EventPulse::new(900.0, 15.0, 1.3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let noise = Normal::new(0.0, 30.0).unwrap();
    let samples: Vec<(f64, f64)> = (9..16)
        .map(|h| (h as f64, eval_pulse(&truth, h as f64) + noise.sample(&mut rng)))
        .collect();
    let mut candidates = vec![EventPulse::new(200.0, 15.0, 4.0).unwrap()];
    let cfg = PulseFitConfig::default();
    let mut last = f64::INFINITY;
    for extra in [(600.0, 0.6), (1200.0, 2.0), (900.0, 1.3), (50.0, 5.5)] {
        let (_, fit) = best_candidate_fit(&samples, 15.0, &candidates, None, &cfg).unwrap();
        assert!(fit.sse <= last);
        last = fit.sse;
        candidates.push(EventPulse::new(extra.0, 15.0, extra.1).unwrap());
    }
}

#[test]
fn pipeline_recovers_noiseless_corpus() {
    let data = generate_synthetic(&reference_corpus(0, 0.0)).unwrap();
    let cfg = PipelineConfig::default();
    let out = fit_model(&data.series, &data.calendar, &cfg).unwrap();
    for (got, want) in out.document.events.iter().zip(&data.truth.events) {
        assert_eq!(got.commencement, want.commencement);
        assert_eq!(got.pulse.center, want.pulse.center);
        assert!(
            (got.pulse.volume / want.pulse.volume - 1.0).abs() < 0.005,
            "{got:?} vs {want:?}"
        );
        assert!((got.pulse.width / want.pulse.width - 1.0).abs() < 0.01);
    }
    for l in ComponentLabel::ALL {
        let (a, b) = (data.truth.weekly.component(l), out.document.weekly.component(l));
        assert!((b.peak / a.peak - 1.0).abs() < 0.01, "{l}");
    }
    let noise = out.document.noise_std.unwrap();
    assert!(noise < 1e-3 * data.truth.weekly.max_peak(), "noise {noise}");
}

#[test]
fn fit_without_events_keeps_weekly_profile_only() {
    let (_, series) = routine(1, 0.02, 1);
    let out = fit_model(&series, &EventCalendar::default(), &PipelineConfig::default()).unwrap();
    assert!(out.document.events.is_empty());
    assert!(out.document.regression.is_none());
    assert!(out.warnings.iter().any(|w| w.contains("regression")));
}

fn simulate(ar: &[f64], n: usize, seed: u64) -> HourlyTrafficSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let mut x = vec![0.0; n + 200];
    for t in ar.len()..x.len() {
        x[t] = noise.sample(&mut rng) + ar.iter().enumerate().map(|(i, a)| a * x[t - 1 - i]).sum::<f64>();
    }
    HourlyTrafficSeries::new(day(1), x.split_off(200)).unwrap()
}

#[test]
fn white_noise_ar_coefficient_near_zero() {
    let s = simulate(&[], 2000, 3);
    let m = fit_arma(&s, ArmaOrder::new(1, 0, 0).unwrap()).unwrap();
    assert!(m.ar_coeffs[0].abs() < 0.1);
    let order = select_order_bic(&s, 3, 3, 0).unwrap();
    assert_eq!(order.p + order.q, 1, "{order}");
}

#[test]
fn bic_picks_ar2_in_most_runs() {
    let hits = (0..20)
        .filter(|&seed| {
            let o = select_order_bic(&simulate(&[0.6, -0.3], 1000, seed), 3, 3, 0).unwrap();
            o.p == 2 && o.q == 0
        })
        .count();
    assert!(hits >= 16, "AR(2) chosen in {hits}/20 runs");
}

#[test]
fn stationary_forecast_tends_to_mean() {
    let m = ArmaModel::new(ArmaOrder::new(2, 0, 1).unwrap(), vec![0.5, 0.2], vec![0.3], 6.0, 1.0).unwrap();
    let mean = m.process_mean();
    assert!((mean - 20.0).abs() < 1e-12);
    let history = HourlyTrafficSeries::new(day(1), vec![80.0, -30.0, 55.0, 90.0]).unwrap();
    let f = forecast(&m, &history, 200).unwrap();
    assert!((f.values()[199] - mean).abs() <= 0.01 * mean.abs());
}

#[test]
fn constant_series_is_degenerate() {
    let s = HourlyTrafficSeries::new(day(1), vec![5.0; 200]).unwrap();
    assert!(matches!(
        fit_arma(&s, ArmaOrder::new(1, 0, 0).unwrap()),
        Err(Error::Degenerate(_))
    ));
}
