//! Additive event traffic modelled as a normalized Gaussian pulse whose
//! integral equals its volume parameter.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::optim::{minimize, FitConfig, LeastSquares};
use crate::timeseries::{hours_between, midnight_of, HourlyTrafficSeries};

pub const MIN_PULSE_WIDTH: f64 = 0.25;
pub const MAX_PULSE_WIDTH: f64 = 6.0;

/// Event pulse with traffic volume `volume`, centre `center` (hours from
/// midnight of the event day) and standard deviation `width` in hours.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventPulse {
    pub volume: f64,
    pub center: f64,
    pub width: f64,
}

impl EventPulse {
    pub fn new(volume: f64, center: f64, width: f64) -> Result<Self> {
        if !(volume.is_finite() && volume >= 0.0) {
            return Err(Error::Argument(format!("pulse volume {volume} must be non-negative")));
        }
        if !center.is_finite() {
            return Err(Error::Argument("pulse center must be finite".into()));
        }
        if !(width.is_finite() && width > 0.0) {
            return Err(Error::Argument(format!("pulse width {width} must be positive")));
        }
        Ok(Self { volume, center, width })
    }

    /// Peak height `volume / (width * sqrt(2 pi))`.
    pub fn peak(&self) -> f64 {
        self.volume / (self.width * (2.0 * PI).sqrt())
    }
}

pub fn eval_pulse(p: &EventPulse, t: f64) -> f64 {
    let u = t - p.center;
    p.peak() * (-u * u / (2.0 * p.width * p.width)).exp()
}

/// Trapezoid integral of the pulse over `center ± span * width`.
pub fn pulse_volume(p: &EventPulse, grid_step: f64, span: f64) -> Result<f64> {
    if !(grid_step > 0.0 && grid_step <= p.width / 4.0) {
        return Err(Error::Argument(format!(
            "grid step {grid_step} must lie in (0, width/4 = {}]",
            p.width / 4.0
        )));
    }
    if !(span >= 6.0 && span.is_finite()) {
        return Err(Error::Argument(format!("span {span} must be at least 6 widths")));
    }
    let lo = p.center - span * p.width;
    let range = 2.0 * span * p.width;
    let n = (range / grid_step).ceil() as usize;
    let h = range / n as f64;
    let interior: f64 = (1..n).map(|i| eval_pulse(p, lo + i as f64 * h)).sum();
    let ends = 0.5 * (eval_pulse(p, lo) + eval_pulse(p, lo + range));
    Ok(h * (interior + ends))
}

/// Adds the pulse to each sample. The pulse axis is hours since midnight of
/// the series' first day, so hour 25 is 01:00 on the following day.
pub fn compose_total(daily: &HourlyTrafficSeries, pulse: &EventPulse) -> HourlyTrafficSeries {
    let origin = midnight_of(daily.start());
    let values = daily
        .iter()
        .map(|(t, v)| v + eval_pulse(pulse, hours_between(origin, t)))
        .collect();
    HourlyTrafficSeries::new(daily.start(), values).expect("sum of finite values")
}

#[derive(Debug, Clone, PartialEq)]
pub struct PulseFitConfig {
    pub fit: FitConfig,
    /// Samples within this many hours of the centre enter the objective.
    pub window: f64,
    /// Let the centre float instead of holding it at the supplied value.
    pub free_center: bool,
}

impl Default for PulseFitConfig {
    fn default() -> Self {
        Self {
            fit: FitConfig {
                restarts: 1,
                ..FitConfig::default()
            },
            window: 6.0,
            free_center: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PulseFitResult {
    pub pulse: EventPulse,
    pub sse: f64,
    pub converged: bool,
    pub trace: Vec<f64>,
}

/// Gaussian prior on volume and width, added to the sse as the extra terms
/// `(volume_weight (R - volume))^2 + (width_weight (sigma - width))^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulsePrior {
    pub volume: f64,
    pub width: f64,
    pub volume_weight: f64,
    pub width_weight: f64,
}

impl PulsePrior {
    /// Prior centred on `pulse` with standard deviations `spread * volume`
    /// (at least `noise_std`) and `spread * width`, weighted against samples
    /// whose noise is `noise_std`. Zero noise gives a zero-weight prior.
    pub fn around(pulse: &EventPulse, spread: f64, noise_std: f64) -> Self {
        let tau_r = (spread * pulse.volume).max(noise_std);
        let tau_s = spread * pulse.width;
        let w = |tau: f64| if tau > 0.0 { noise_std / tau } else { 0.0 };
        Self {
            volume: pulse.volume,
            width: pulse.width,
            volume_weight: w(tau_r),
            width_weight: w(tau_s),
        }
    }
}

struct PulseProblem<'a> {
    samples: &'a [(f64, f64)],
    center: f64,
    free_center: bool,
    prior: Option<PulsePrior>,
}

impl PulseProblem<'_> {
    fn unpack(&self, p: &[f64]) -> (f64, f64, f64) {
        let center = if self.free_center { p[2] } else { self.center };
        (p[0], p[1], center)
    }
}

impl LeastSquares for PulseProblem<'_> {
    fn num_params(&self) -> usize {
        if self.free_center {
            3
        } else {
            2
        }
    }

    fn num_residuals(&self) -> usize {
        self.samples.len() + if self.prior.is_some() { 2 } else { 0 }
    }

    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        let (volume, width, center) = self.unpack(p);
        let pulse = EventPulse { volume, center, width };
        for (o, &(t, y)) in out.iter_mut().zip(self.samples) {
            *o = eval_pulse(&pulse, t) - y;
        }
        if let Some(pr) = &self.prior {
            let n = self.samples.len();
            out[n] = pr.volume_weight * (volume - pr.volume);
            out[n + 1] = pr.width_weight * (width - pr.width);
        }
    }

    fn jacobian(&self, p: &[f64], out: &mut [f64]) {
        let (volume, width, center) = self.unpack(p);
        let n = self.num_params();
        let norm = 1.0 / (width * (2.0 * PI).sqrt());
        let w2 = width * width;
        for (row, &(t, _)) in out.chunks_exact_mut(n).zip(self.samples) {
            let u = t - center;
            let e = (-u * u / (2.0 * w2)).exp();
            row[0] = norm * e;
            row[1] = volume * norm * e * (u * u / (w2 * width) - 1.0 / width);
            if self.free_center {
                row[2] = volume * norm * e * u / w2;
            }
        }
        if let Some(pr) = &self.prior {
            let tail = &mut out[self.samples.len() * n..];
            tail.fill(0.0);
            tail[0] = pr.volume_weight;
            tail[n + 1] = pr.width_weight;
        }
    }

    fn project(&self, p: &mut [f64]) {
        p[0] = p[0].max(0.0);
        p[1] = p[1].clamp(MIN_PULSE_WIDTH, MAX_PULSE_WIDTH);
    }
}

/// Replaces the volume by its exact least-squares optimum for the final width
/// and centre. The model is linear in volume, so this never raises the sse.
fn polish_volume(problem: &PulseProblem<'_>, min: &mut crate::optim::Minimum) {
    let (_, width, center) = problem.unpack(&min.params);
    let unit = EventPulse {
        volume: 1.0,
        center,
        width,
    };
    let (mut gy, mut gg) = (0.0, 0.0);
    for &(t, y) in problem.samples {
        let g = eval_pulse(&unit, t);
        gy += g * y;
        gg += g * g;
    }
    if let Some(pr) = &problem.prior {
        let w2 = pr.volume_weight * pr.volume_weight;
        gy += w2 * pr.volume;
        gg += w2;
    }
    if gg == 0.0 {
        return;
    }
    let mut params = min.params.clone();
    params[0] = (gy / gg).max(0.0);
    let mut r = vec![0.0; problem.num_residuals()];
    problem.residuals(&params, &mut r);
    let sse: f64 = r.iter().map(|v| v * v).sum();
    if sse <= min.objective {
        min.params = params;
        min.objective = sse;
        if min.trace.last().is_some_and(|&last| sse < last) {
            min.trace.push(sse);
        }
    }
}

/// Least-squares pulse fit to `(hour, residual)` samples.
///
/// All supplied samples are used; window selection is the caller's job (see
/// [`fit_pulse`]). The centre is held at `center` unless
/// `config.free_center` is set.
pub fn fit_pulse_samples(
    samples: &[(f64, f64)],
    center: f64,
    init: &EventPulse,
    config: &PulseFitConfig,
) -> Result<PulseFitResult> {
    fit_pulse_samples_with_prior(samples, center, init, None, config)
}

/// As [`fit_pulse_samples`], with optional prior terms added to the
/// objective. The reported sse includes them.
pub fn fit_pulse_samples_with_prior(
    samples: &[(f64, f64)],
    center: f64,
    init: &EventPulse,
    prior: Option<&PulsePrior>,
    config: &PulseFitConfig,
) -> Result<PulseFitResult> {
    config.fit.validate()?;
    if samples.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "pulse fit needs at least 3 residual samples, got {}",
            samples.len()
        )));
    }
    let problem = PulseProblem {
        samples,
        center,
        free_center: config.free_center,
        prior: prior.copied(),
    };
    let base: Vec<f64> = if config.free_center {
        vec![init.volume, init.width, center]
    } else {
        vec![init.volume, init.width]
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.fit.seed);
    let mut best: Option<crate::optim::Minimum> = None;
    for restart in 0..config.fit.restarts {
        let mut start = base.clone();
        if restart > 0 {
            start[0] *= rng.random_range(0.5..2.0);
            start[1] *= rng.random_range(0.5..2.0);
        }
        let min = minimize(&problem, &start, &config.fit);
        if best.as_ref().is_none_or(|b| min.objective < b.objective) {
            best = Some(min);
        }
    }
    let mut best = best.expect("at least one restart");
    polish_volume(&problem, &mut best);
    let (volume, mut width, center) = problem.unpack(&best.params);
    if volume == 0.0 && prior.is_none() {
        // Width has no influence on a zero-volume pulse.
        width = init.width;
    }
    Ok(PulseFitResult {
        pulse: EventPulse::new(volume, center, width)?,
        sse: best.objective,
        converged: best.converged,
        trace: best.trace,
    })
}

/// Fits a pulse centred at `center` (hours from midnight of the residual's
/// first day) to residual samples within `config.window` hours of it.
pub fn fit_pulse(
    residual: &HourlyTrafficSeries,
    center: f64,
    init: &EventPulse,
    config: &PulseFitConfig,
) -> Result<PulseFitResult> {
    let origin = midnight_of(residual.start());
    let samples: Vec<(f64, f64)> = residual
        .iter()
        .map(|(t, v)| (hours_between(origin, t), v))
        .filter(|(h, _)| (h - center).abs() <= config.window)
        .collect();
    fit_pulse_samples(&samples, center, init, config)
}
