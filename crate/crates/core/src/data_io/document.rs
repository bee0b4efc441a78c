//! Versioned key-value text format for fitted models.
//!
//! ```text
//! format = nntp-model
//! version = 1
//! weekly.mw.R = 6.0000000000000000e2
//! weekly.mw.t = 9.5000000000000000e0
//! weekly.mw.sigma = 2.2000000000000002e0
//! ...
//! events = 1
//! event.0.commencement = 2013-12-01T16:00:00
//! event.0.attendance = 32761
//! event.0.R = 8.2979999999999995e2
//! ...
//! end
//! ```
//!
//! Reals are written with 17 significant digits so they read back exactly.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDateTime;

use crate::daily_model::{ComponentLabel, GaussianComponent, WeeklyProfileModel};
use crate::error::{Error, Result};
use crate::event_model::EventPulse;
use crate::regression::{AttendanceRegression, SigmaPrior};

use super::files::TIME_FORMAT;

pub const FORMAT_VERSION: u32 = 1;
const FORMAT_NAME: &str = "nntp-model";

/// One fitted (or ground-truth) event pulse with the advance information it
/// belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub commencement: NaiveDateTime,
    pub attendance: u64,
    pub pulse: EventPulse,
    pub sse: Option<f64>,
    pub converged: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitDiagnostics {
    pub weekly_objective: f64,
    pub weekly_converged: bool,
    pub weekly_iterations: usize,
    pub kickoff_offset: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelDocument {
    pub weekly: WeeklyProfileModel,
    pub events: Vec<EventRecord>,
    pub regression: Option<AttendanceRegression>,
    pub sigma_prior: Option<SigmaPrior>,
    /// RMS residual of the weekly profile on non-event days.
    pub noise_std: Option<f64>,
    pub diagnostics: Option<FitDiagnostics>,
}

fn real(v: f64) -> String {
    format!("{v:.16e}")
}

impl ModelDocument {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("format", FORMAT_NAME.into());
        kv("version", FORMAT_VERSION.to_string());
        for c in self.weekly.components() {
            kv(&format!("weekly.{}.R", c.label), real(c.peak));
            kv(&format!("weekly.{}.t", c.label), real(c.center));
            kv(&format!("weekly.{}.sigma", c.label), real(c.width));
        }
        kv("events", self.events.len().to_string());
        for (i, e) in self.events.iter().enumerate() {
            kv(
                &format!("event.{i}.commencement"),
                e.commencement.format(TIME_FORMAT).to_string(),
            );
            kv(&format!("event.{i}.attendance"), e.attendance.to_string());
            kv(&format!("event.{i}.R"), real(e.pulse.volume));
            kv(&format!("event.{i}.t"), real(e.pulse.center));
            kv(&format!("event.{i}.sigma"), real(e.pulse.width));
            if let Some(sse) = e.sse {
                kv(&format!("event.{i}.sse"), real(sse));
            }
            if let Some(c) = e.converged {
                kv(&format!("event.{i}.converged"), c.to_string());
            }
        }
        if let Some(r) = &self.regression {
            kv("regression.slope", real(r.slope));
            kv("regression.intercept", real(r.intercept));
            kv("regression.pearson_r", real(r.pearson_r));
            kv("regression.n", r.n_samples.to_string());
        }
        if let Some(p) = &self.sigma_prior {
            kv("sigma_prior.mean", real(p.mean_sigma));
            kv("sigma_prior.n", p.n_samples.to_string());
        }
        if let Some(v) = self.noise_std {
            kv("noise.std", real(v));
        }
        if let Some(d) = &self.diagnostics {
            kv("diagnostics.weekly_objective", real(d.weekly_objective));
            kv("diagnostics.weekly_converged", d.weekly_converged.to_string());
            kv("diagnostics.weekly_iterations", d.weekly_iterations.to_string());
            kv("diagnostics.kickoff_offset", real(d.kickoff_offset));
        }
        s.push_str("end\n");
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut map: HashMap<&str, &str> = HashMap::new();
        let mut ended = false;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if ended {
                return Err(Error::Parse {
                    line: i + 1,
                    message: "content after `end`".into(),
                });
            }
            if line == "end" {
                ended = true;
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            if map.insert(k.trim(), v.trim()).is_some() {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("duplicate key `{}`", k.trim()),
                });
            }
        }

        let fields = Fields(map);
        if fields.0.get("format").copied() != Some(FORMAT_NAME) {
            return Err(Error::Format(
                "not a model document (missing `format = nntp-model`)".into(),
            ));
        }
        let version = fields.str("version")?;
        if version != FORMAT_VERSION.to_string() {
            return Err(Error::Version {
                found: version.to_string(),
                expected: FORMAT_VERSION,
            });
        }
        if !ended {
            return Err(Error::Format("document truncated (missing `end`)".into()));
        }

        let comps = ComponentLabel::ALL
            .iter()
            .map(|l| {
                GaussianComponent::new(
                    *l,
                    fields.real(&format!("weekly.{l}.R"))?,
                    fields.real(&format!("weekly.{l}.t"))?,
                    fields.real(&format!("weekly.{l}.sigma"))?,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let weekly = WeeklyProfileModel::new(comps)?;

        let n: usize = fields.parse("events")?;
        let events = (0..n)
            .map(|i| {
                let when = fields.str(&format!("event.{i}.commencement"))?;
                let commencement = NaiveDateTime::parse_from_str(when, TIME_FORMAT)
                    .map_err(|e| Error::Format(format!("event.{i}.commencement: {e}")))?;
                Ok(EventRecord {
                    commencement,
                    attendance: fields.parse(&format!("event.{i}.attendance"))?,
                    pulse: EventPulse::new(
                        fields.real(&format!("event.{i}.R"))?,
                        fields.real(&format!("event.{i}.t"))?,
                        fields.real(&format!("event.{i}.sigma"))?,
                    )?,
                    sse: fields.optional(&format!("event.{i}.sse"))?,
                    converged: fields.optional(&format!("event.{i}.converged"))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let regression = if fields.has("regression.slope") {
            Some(AttendanceRegression {
                slope: fields.real("regression.slope")?,
                intercept: fields.real("regression.intercept")?,
                pearson_r: fields.real("regression.pearson_r")?,
                n_samples: fields.parse("regression.n")?,
            })
        } else {
            None
        };
        let sigma_prior = if fields.has("sigma_prior.mean") {
            Some(SigmaPrior {
                mean_sigma: fields.real("sigma_prior.mean")?,
                n_samples: fields.parse("sigma_prior.n")?,
            })
        } else {
            None
        };
        let noise_std = fields.optional("noise.std")?;
        let diagnostics = if fields.has("diagnostics.weekly_objective") {
            Some(FitDiagnostics {
                weekly_objective: fields.real("diagnostics.weekly_objective")?,
                weekly_converged: fields.parse("diagnostics.weekly_converged")?,
                weekly_iterations: fields.parse("diagnostics.weekly_iterations")?,
                kickoff_offset: fields.real("diagnostics.kickoff_offset")?,
            })
        } else {
            None
        };
        Ok(Self {
            weekly,
            events,
            regression,
            sigma_prior,
            noise_std,
            diagnostics,
        })
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(self.to_text().as_bytes())?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut text = String::new();
        r.read_to_string(&mut text)?;
        Self::parse(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

struct Fields<'a>(HashMap<&'a str, &'a str>);

impl Fields<'_> {
    fn has(&self, key: &str) -> bool {
        self.0.contains_key(key)
    }

    fn str(&self, key: &str) -> Result<&str> {
        self.0
            .get(key)
            .copied()
            .ok_or_else(|| Error::Format(format!("missing key `{key}`")))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let v = self.str(key)?;
        v.parse()
            .map_err(|_| Error::Format(format!("bad value `{v}` for `{key}`")))
    }

    fn real(&self, key: &str) -> Result<f64> {
        let v: f64 = self.parse(key)?;
        if !v.is_finite() {
            return Err(Error::Format(format!("`{key}` must be finite")));
        }
        Ok(v)
    }

    fn optional<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        if self.has(key) {
            self.parse(key).map(Some)
        } else {
            Ok(None)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_io::reference_weekly_model;
    use chrono::NaiveDate;

    fn table_ii() -> ModelDocument {
        let rows = [
            (1, 16, 0, 15.0, 1.263, 829.8),
            (4, 22, 0, 21.0, 1.176, 349.8),
            (8, 21, 45, 20.75, 1.011, 769.7),
            (11, 21, 45, 20.75, 1.155, 2059.8),
        ];
        let events = rows
            .iter()
            .map(|&(d, h, m, t, s, r)| EventRecord {
                commencement: NaiveDate::from_ymd_opt(2013, 12, d)
                    .unwrap()
                    .and_hms_opt(h, m, 0)
                    .unwrap(),
                attendance: 30_000,
                pulse: EventPulse::new(r, t, s).unwrap(),
                sse: None,
                converged: Some(true),
            })
            .collect();
        ModelDocument {
            weekly: reference_weekly_model(),
            events,
            regression: Some(AttendanceRegression {
                slope: 0.03323,
                intercept: -258.85,
                pearson_r: 0.922,
                n_samples: 4,
            }),
            sigma_prior: Some(SigmaPrior {
                mean_sigma: 1.15125,
                n_samples: 4,
            }),
            noise_std: Some(1.0 / 3.0),
            diagnostics: Some(FitDiagnostics {
                weekly_objective: 0.1 + 0.2,
                weekly_converged: true,
                weekly_iterations: 17,
                kickoff_offset: -1.0,
            }),
        }
    }

    #[test]
    fn round_trip_preserves_table_values() {
        let doc = table_ii();
        let back = ModelDocument::parse(&doc.to_text()).unwrap();
        assert_eq!(back, doc);
        let vols: Vec<f64> = back.events.iter().map(|e| e.pulse.volume).collect();
        assert_eq!(vols, [829.8, 349.8, 769.7, 2059.8]);
    }

    #[test]
    fn truncated_and_malformed() {
        let text = table_ii().to_text();
        let cut = &text[..text.len() / 2];
        assert!(matches!(
            ModelDocument::parse(cut),
            Err(Error::Format(_) | Error::Parse { .. })
        ));
        let no_end = text.replace("end\n", "");
        assert!(matches!(ModelDocument::parse(&no_end), Err(Error::Format(_))));
        assert!(matches!(ModelDocument::parse("garbage"), Err(Error::Parse { .. })));
        let bad = text.replace("weekly.mw.R = ", "weekly.mw.R = x");
        assert!(matches!(ModelDocument::parse(&bad), Err(Error::Format(_))));
    }

    #[test]
    fn version_mismatch() {
        let text = table_ii().to_text().replace("version = 1", "version = 2");
        assert!(matches!(ModelDocument::parse(&text), Err(Error::Version { .. })));
    }

    #[test]
    fn optional_sections_may_be_absent() {
        let doc = ModelDocument {
            weekly: reference_weekly_model(),
            events: vec![],
            regression: None,
            sigma_prior: None,
            noise_std: None,
            diagnostics: None,
        };
        assert_eq!(ModelDocument::parse(&doc.to_text()).unwrap(), doc);
    }
}
