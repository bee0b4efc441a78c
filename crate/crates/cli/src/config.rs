//! TOML overrides for fit and prediction settings.
//!
//! ```toml
//! [weekly_fit]
//! solver = "lm"
//! max_iterations = 20000
//!
//! [pulse_fit]
//! window = 6.0
//!
//! [predictor]
//! prior_strength = 3.0
//! ```

use std::path::Path;

use anyhow::Context;
use serde::Deserialize;

use nntp_core::optim::{FitConfig, Solver};
use nntp_core::pipeline::PipelineConfig;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    weekly_fit: FitOverrides,
    #[serde(default)]
    pulse_fit: PulseOverrides,
    #[serde(default)]
    predictor: PredictorOverrides,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FitOverrides {
    max_iterations: Option<usize>,
    learning_rate: Option<f64>,
    convergence_tol: Option<f64>,
    restarts: Option<usize>,
    solver: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PulseOverrides {
    max_iterations: Option<usize>,
    learning_rate: Option<f64>,
    convergence_tol: Option<f64>,
    restarts: Option<usize>,
    solver: Option<String>,
    window: Option<f64>,
    free_center: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PredictorOverrides {
    kickoff_offset: Option<f64>,
    window: Option<f64>,
    candidate_spread: Option<f64>,
    min_refit_samples: Option<usize>,
    prior_strength: Option<f64>,
}

impl FitOverrides {
    fn apply(&self, cfg: &mut FitConfig) -> anyhow::Result<()> {
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { cfg.$f = v; })* };
        }
        set!(max_iterations, learning_rate, convergence_tol, restarts);
        if let Some(s) = &self.solver {
            cfg.solver = s.parse::<Solver>()?;
        }
        Ok(())
    }
}

impl ConfigFile {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn pipeline(&self, seed: u64) -> anyhow::Result<PipelineConfig> {
        let mut cfg = PipelineConfig::default();
        self.weekly_fit.apply(&mut cfg.weekly_fit)?;
        cfg.weekly_fit.seed = seed;

        let pulse = &mut cfg.predictor.pulse_fit;
        let pf = &self.pulse_fit;
        FitOverrides {
            max_iterations: pf.max_iterations,
            learning_rate: pf.learning_rate,
            convergence_tol: pf.convergence_tol,
            restarts: pf.restarts,
            solver: pf.solver.clone(),
        }
        .apply(&mut pulse.fit)?;
        pulse.fit.seed = seed;
        if let Some(w) = self.pulse_fit.window {
            pulse.window = w;
        }
        if let Some(f) = self.pulse_fit.free_center {
            pulse.free_center = f;
        }

        let p = &self.predictor;
        let pc = &mut cfg.predictor;
        if let Some(v) = p.kickoff_offset {
            pc.kickoff_offset = v;
        }
        if let Some(v) = p.window {
            pc.window = v;
        }
        if let Some(v) = p.candidate_spread {
            pc.candidate_spread = v;
        }
        if let Some(v) = p.min_refit_samples {
            pc.min_refit_samples = v;
        }
        if let Some(v) = p.prior_strength {
            pc.prior_strength = v;
        }
        Ok(cfg)
    }
}
