//! Nine-component Gaussian model of the routine weekly traffic profile.
//!
//! Each day class (weekday, Saturday, Sunday) carries a morning, afternoon and
//! evening Gaussian. A sample on day `k` at hour `t` sits at the absolute
//! weekly hour `24(k-1) + t`; the five weekday instances of a weekday
//! component are centred at `24(n-1) + t_c` for `n = 1..=5`, the Saturday
//! components at `120 + t_c` and the Sunday components at `144 + t_c`. There
//! is no wrap from Sunday night into Monday morning.

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDateTime;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::optim::{minimize, FitConfig, LeastSquares};
use crate::timeseries::{CalendarIndex, HourlyTrafficSeries, HOURS_PER_DAY};

pub const MIN_WIDTH: f64 = 0.25;
pub const MAX_WIDTH: f64 = 12.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ComponentLabel {
    Mw,
    Aw,
    Ew,
    Msa,
    Asa,
    Esa,
    Msu,
    Asu,
    Esu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DayClass {
    Weekday,
    Saturday,
    Sunday,
}

impl DayClass {
    pub fn of_day(k: u8) -> Result<Self> {
        match k {
            1..=5 => Ok(DayClass::Weekday),
            6 => Ok(DayClass::Saturday),
            7 => Ok(DayClass::Sunday),
            _ => Err(Error::Argument(format!("day index {k} outside 1..=7"))),
        }
    }

    pub fn labels(self) -> [ComponentLabel; 3] {
        use ComponentLabel::*;
        match self {
            DayClass::Weekday => [Mw, Aw, Ew],
            DayClass::Saturday => [Msa, Asa, Esa],
            DayClass::Sunday => [Msu, Asu, Esu],
        }
    }

    /// Absolute weekly hours at which this class's days start.
    fn day_offsets(self) -> &'static [f64] {
        match self {
            DayClass::Weekday => &[0.0, 24.0, 48.0, 72.0, 96.0],
            DayClass::Saturday => &[120.0],
            DayClass::Sunday => &[144.0],
        }
    }
}

impl ComponentLabel {
    pub const ALL: [ComponentLabel; 9] = {
        use ComponentLabel::*;
        [Mw, Aw, Ew, Msa, Asa, Esa, Msu, Asu, Esu]
    };

    pub fn as_str(self) -> &'static str {
        use ComponentLabel::*;
        match self {
            Mw => "mw",
            Aw => "aw",
            Ew => "ew",
            Msa => "msa",
            Asa => "asa",
            Esa => "esa",
            Msu => "msu",
            Asu => "asu",
            Esu => "esu",
        }
    }

    pub fn day_class(self) -> DayClass {
        use ComponentLabel::*;
        match self {
            Mw | Aw | Ew => DayClass::Weekday,
            Msa | Asa | Esa => DayClass::Saturday,
            Msu | Asu | Esu => DayClass::Sunday,
        }
    }

    /// Hour the component is anchored at before fitting.
    pub fn anchor_hour(self) -> f64 {
        use ComponentLabel::*;
        match self {
            Mw | Msa | Msu => 9.0,
            Aw | Asa | Asu => 15.0,
            Ew | Esa | Esu => 21.0,
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for ComponentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ComponentLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ComponentLabel::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::Argument(format!("unknown component label `{s}`")))
    }
}

/// `peak * exp(-(t - center)^2 / (2 width^2))`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianComponent {
    pub label: ComponentLabel,
    pub peak: f64,
    pub center: f64,
    pub width: f64,
}

impl GaussianComponent {
    pub fn new(label: ComponentLabel, peak: f64, center: f64, width: f64) -> Result<Self> {
        if !(peak.is_finite() && peak >= 0.0) {
            return Err(Error::Argument(format!("{label}: peak {peak} must be non-negative")));
        }
        if !center.is_finite() {
            return Err(Error::Argument(format!("{label}: center must be finite")));
        }
        if !(width > 0.0 && width <= MAX_WIDTH) {
            return Err(Error::Argument(format!(
                "{label}: width {width} outside (0, {MAX_WIDTH}]"
            )));
        }
        Ok(Self {
            label,
            peak,
            center,
            width,
        })
    }
}

pub fn eval_component(c: &GaussianComponent, t: f64) -> f64 {
    let u = t - c.center;
    c.peak * (-u * u / (2.0 * c.width * c.width)).exp()
}

/// One Gaussian component per label.
#[derive(Debug, Clone, PartialEq)]
pub struct WeeklyProfileModel {
    components: [GaussianComponent; 9],
}

impl WeeklyProfileModel {
    pub fn new(components: Vec<GaussianComponent>) -> Result<Self> {
        if components.len() != 9 {
            return Err(Error::Argument(format!(
                "expected 9 components, got {}",
                components.len()
            )));
        }
        let mut slots: [Option<GaussianComponent>; 9] = [None; 9];
        for c in components {
            let slot = &mut slots[c.label.index()];
            if slot.is_some() {
                return Err(Error::Argument(format!("component {} given twice", c.label)));
            }
            *slot = Some(c);
        }
        Ok(Self {
            components: slots.map(|c| c.expect("all nine labels present")),
        })
    }

    /// Builds a model from `[peak, center, width]` triples in [`ComponentLabel::ALL`] order.
    pub fn from_params(params: &[f64]) -> Result<Self> {
        if params.len() != 27 {
            return Err(Error::Argument(format!("expected 27 parameters, got {}", params.len())));
        }
        let comps = ComponentLabel::ALL
            .iter()
            .zip(params.chunks_exact(3))
            .map(|(&l, p)| GaussianComponent::new(l, p[0], p[1], p[2]))
            .collect::<Result<Vec<_>>>()?;
        Self::new(comps)
    }

    pub fn to_params(&self) -> Vec<f64> {
        self.components
            .iter()
            .flat_map(|c| [c.peak, c.center, c.width])
            .collect()
    }

    pub fn component(&self, label: ComponentLabel) -> &GaussianComponent {
        &self.components[label.index()]
    }

    pub fn components(&self) -> &[GaussianComponent; 9] {
        &self.components
    }

    /// Largest component peak.
    pub fn max_peak(&self) -> f64 {
        self.components.iter().map(|c| c.peak).fold(0.0, f64::max)
    }

    /// Model value at absolute weekly hour `24(k-1) + t`.
    pub fn eval_absolute(&self, hour: f64) -> f64 {
        eval_absolute(&self.to_params(), hour)
    }

    /// Routine traffic predicted for each hour of `[start, start + len)`.
    pub fn predict_series(&self, start: NaiveDateTime, len: usize) -> Result<HourlyTrafficSeries> {
        let params = self.to_params();
        let values = (0..len)
            .map(|i| {
                let idx = CalendarIndex::of(start + chrono::Duration::hours(i as i64));
                eval_absolute(&params, absolute_hour(idx.day, idx.hour))
            })
            .collect();
        HourlyTrafficSeries::new(start, values)
    }

    /// Routine traffic at a timestamp.
    pub fn eval_at(&self, t: NaiveDateTime) -> f64 {
        let idx = CalendarIndex::of(t);
        self.eval_absolute(absolute_hour(idx.day, idx.hour))
    }
}

fn absolute_hour(k: u8, t: f64) -> f64 {
    24.0 * (k as f64 - 1.0) + t
}

fn eval_absolute(params: &[f64], hour: f64) -> f64 {
    let mut total = 0.0;
    for (label, p) in ComponentLabel::ALL.iter().zip(params.chunks_exact(3)) {
        let (peak, center, width) = (p[0], p[1], p[2]);
        let inv = 1.0 / (2.0 * width * width);
        let mut s = 0.0;
        for off in label.day_class().day_offsets() {
            let u = hour - off - center;
            s += (-u * u * inv).exp();
        }
        total += peak * s;
    }
    total
}

/// Sum of the three components of one day class at hour `t`.
pub fn eval_day(model: &WeeklyProfileModel, day_labels: &[ComponentLabel], t: f64) -> Result<f64> {
    let valid = [DayClass::Weekday, DayClass::Saturday, DayClass::Sunday]
        .iter()
        .any(|class| {
            let mut want = class.labels();
            let mut got = day_labels.to_vec();
            want.sort();
            got.sort();
            got == want
        });
    if !valid {
        return Err(Error::Argument(format!(
            "{day_labels:?} is not a day's component triple"
        )));
    }
    Ok(day_labels.iter().map(|&l| eval_component(model.component(l), t)).sum())
}

/// Full weekly superposition on day `k` (1 = Monday) at hour `t`.
pub fn eval_week(model: &WeeklyProfileModel, k: u8, t: f64) -> Result<f64> {
    DayClass::of_day(k)?;
    Ok(model.eval_absolute(absolute_hour(k, t)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeeklyFit {
    pub model: WeeklyProfileModel,
    /// Sum of squared errors over every training sample.
    pub objective: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Objective after each accepted step of the winning restart.
    pub trace: Vec<f64>,
}

struct WeeklyProblem {
    hours: Vec<f64>,
    values: Vec<f64>,
}

impl LeastSquares for WeeklyProblem {
    fn num_params(&self) -> usize {
        27
    }

    fn num_residuals(&self) -> usize {
        self.hours.len()
    }

    fn residuals(&self, params: &[f64], out: &mut [f64]) {
        for ((o, &h), &y) in out.iter_mut().zip(&self.hours).zip(&self.values) {
            *o = eval_absolute(params, h) - y;
        }
    }

    fn jacobian(&self, params: &[f64], out: &mut [f64]) {
        for (row, &h) in out.chunks_exact_mut(27).zip(&self.hours) {
            for (c, label) in ComponentLabel::ALL.iter().enumerate() {
                let (peak, center, width) = (params[3 * c], params[3 * c + 1], params[3 * c + 2]);
                let w2 = width * width;
                let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
                for off in label.day_class().day_offsets() {
                    let u = h - off - center;
                    let e = (-u * u / (2.0 * w2)).exp();
                    s0 += e;
                    s1 += e * u;
                    s2 += e * u * u;
                }
                row[3 * c] = s0;
                row[3 * c + 1] = peak * s1 / w2;
                row[3 * c + 2] = peak * s2 / (w2 * width);
            }
        }
    }

    fn project(&self, params: &mut [f64]) {
        for p in params.chunks_exact_mut(3) {
            p[0] = p[0].max(0.0);
            p[2] = p[2].clamp(MIN_WIDTH, MAX_WIDTH);
        }
    }
}

/// Fits the weekly profile to whole non-event days by least squares.
///
/// Every day instance contributes its 24 hourly samples (placed at hours
/// 0..=23) to one pooled objective. Restart 0 starts from the anchor
/// initialization; further restarts jitter it, and the lowest objective wins.
pub fn fit_weekly(days: &[HourlyTrafficSeries], config: &FitConfig) -> Result<WeeklyFit> {
    config.validate()?;
    let mut hours = Vec::with_capacity(days.len() * HOURS_PER_DAY);
    let mut values = Vec::with_capacity(days.len() * HOURS_PER_DAY);
    let mut covered = [false; 7];
    // Sum and count of observations per (day class, anchor hour) for initialization.
    let mut anchor_sum = [0.0f64; 9];
    let mut anchor_n = [0usize; 9];

    for day in days {
        if !day.is_day_aligned() || day.len() != HOURS_PER_DAY {
            return Err(Error::Format(format!(
                "training day starting {} is not a whole day",
                day.start()
            )));
        }
        let k = CalendarIndex::of(day.start()).day;
        covered[k as usize - 1] = true;
        let class = DayClass::of_day(k)?;
        for (h, &v) in day.values().iter().enumerate() {
            hours.push(absolute_hour(k, h as f64));
            values.push(v);
            for label in class.labels() {
                if label.anchor_hour() as usize == h {
                    anchor_sum[label.index()] += v;
                    anchor_n[label.index()] += 1;
                }
            }
        }
    }
    if let Some(missing) = covered.iter().position(|c| !c) {
        return Err(Error::InsufficientData(format!(
            "no non-event training day for day-of-week {}",
            missing + 1
        )));
    }

    let base: Vec<f64> = ComponentLabel::ALL
        .iter()
        .flat_map(|l| {
            let i = l.index();
            [anchor_sum[i] / anchor_n[i] as f64, l.anchor_hour(), 2.0]
        })
        .collect();

    let problem = WeeklyProblem { hours, values };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut best: Option<crate::optim::Minimum> = None;
    for restart in 0..config.restarts {
        let init: Vec<f64> = if restart == 0 {
            base.clone()
        } else {
            base.chunks_exact(3)
                .flat_map(|p| {
                    [
                        p[0] * rng.random_range(0.8..1.2),
                        p[1] + rng.random_range(-1.0..1.0),
                        p[2] * rng.random_range(0.75..1.25),
                    ]
                })
                .collect()
        };
        let min = minimize(&problem, &init, config);
        if best.as_ref().is_none_or(|b| min.objective < b.objective) {
            best = Some(min);
        }
    }
    let best = best.expect("at least one restart");
    Ok(WeeklyFit {
        model: WeeklyProfileModel::from_params(&best.params)?,
        objective: best.objective,
        converged: best.converged,
        iterations: best.iterations,
        trace: best.trace,
    })
}
