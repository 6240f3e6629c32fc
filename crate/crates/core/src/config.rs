//! Run configuration: one flat record that fully determines a training run.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::loss::{LossWeights, Method};
use crate::problems::{get_problem, CaseId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("no case given")]
    MissingCase,
    #[error("cannot parse configuration: {0}")]
    Parse(String),
}

/// Everything a training run depends on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub case: CaseId,
    pub method: Method,
    pub width: usize,
    pub depth: usize,
    pub w_gov: f64,
    pub w_ic: f64,
    pub w_bc: f64,
    pub w_im: f64,
    pub w_bd: f64,
    pub w_rh: f64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Number of refinement rounds; training has `rar_rounds + 1` phases.
    pub rar_rounds: usize,
    /// Epochs of each phase.
    pub epochs: Vec<usize>,
    pub n_pt: usize,
    pub w_eq: f64,
    pub w_if: f64,
    pub grid_nx: usize,
    pub grid_nt: usize,
    pub eval_nx: usize,
    pub eval_nt: usize,
    pub eval_every: usize,
    pub seed: u64,
    /// RH side offset; two training grid spacings when absent.
    pub h_offset: Option<f64>,
    /// Rescale the initial lift so the domain maps onto `[-1, 1]`.
    pub normalize_inputs: bool,
    /// Write per-epoch wall time into the history.
    pub record_wall_time: bool,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    /// Full-scale settings: width 100, depth 5, 5000 + 5000 epochs.
    pub fn paper(case: CaseId, method: Method) -> Self {
        let w = LossWeights::for_method(method);
        let two_d = get_problem(case).dim() == 2;
        Self {
            case,
            method,
            width: 100,
            depth: 5,
            w_gov: w.gov,
            w_ic: w.ic,
            w_bc: w.bc,
            w_im: w.im,
            w_bd: w.bd,
            w_rh: w.rh,
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            rar_rounds: 1,
            epochs: vec![5000, 5000],
            n_pt: 500,
            w_eq: 33.0,
            w_if: 16.0,
            grid_nx: if two_d { 128 } else { 512 },
            grid_nt: if two_d { 32 } else { 64 },
            eval_nx: if two_d { 200 } else { 800 },
            eval_nt: if two_d { 50 } else { 200 },
            eval_every: 1000,
            seed: 0,
            h_offset: None,
            normalize_inputs: true,
            record_wall_time: false,
            out: None,
        }
    }

    /// Reduced settings that finish in minutes on one core. The shorter
    /// schedule uses a step size ten times the full-scale one.
    pub fn desk(case: CaseId, method: Method, seed: u64) -> Self {
        let two_d = get_problem(case).dim() == 2;
        Self {
            width: 50,
            depth: 3,
            lr: 1e-3,
            epochs: vec![2000, 2000],
            grid_nx: if two_d { 32 } else { 128 },
            grid_nt: if two_d { 16 } else { 32 },
            eval_nx: if two_d { 64 } else { 800 },
            eval_nt: if two_d { 32 } else { 200 },
            seed,
            ..Self::paper(case, method)
        }
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            gov: self.w_gov,
            ic: self.w_ic,
            bc: self.w_bc,
            im: self.w_im,
            bd: self.w_bd,
            rh: self.w_rh,
            terms: self.method.terms(),
        }
    }

    pub fn total_epochs(&self) -> usize {
        self.epochs.iter().sum()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: String| Err(ConfigError::Invalid(msg));
        if self.width == 0 {
            return bad("width must be positive".into());
        }
        if self.epochs.len() != self.rar_rounds + 1 {
            return bad(format!(
                "{} refinement rounds need {} epoch counts, got {}",
                self.rar_rounds,
                self.rar_rounds + 1,
                self.epochs.len()
            ));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.eps <= 0.0 {
            return bad("Adam needs 0 <= beta < 1 and eps > 0".into());
        }
        let weights = [
            self.w_gov, self.w_ic, self.w_bc, self.w_im, self.w_bd, self.w_rh, self.w_eq, self.w_if,
        ];
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return bad("loss and refinement weights must be finite and non-negative".into());
        }
        if self.grid_nx < 3 || self.grid_nt < 2 {
            return bad(format!(
                "training grid {}x{} too small (need at least 3x2)",
                self.grid_nx, self.grid_nt
            ));
        }
        if self.eval_nx < 2 || self.eval_nt < 2 {
            return bad("evaluation grid needs at least 2 nodes per axis".into());
        }
        if self.eval_every == 0 {
            return bad("eval_every must be positive".into());
        }
        if let Some(h) = self.h_offset {
            if !(h > 0.0 && h.is_finite()) {
                return bad(format!("h_offset must be positive, got {h}"));
            }
        }
        Ok(())
    }

    /// Applies the fields present in a flat JSON object on top of `self`.
    pub fn overlay_json(&self, json: &str) -> Result<Self, ConfigError> {
        let patch: serde_json::Value = serde_json::from_str(json).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let serde_json::Value::Object(patch) = patch else {
            return Err(ConfigError::Parse("configuration must be a JSON object".into()));
        };
        let mut base = serde_json::to_value(self).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let obj = base.as_object_mut().expect("config serializes to an object");
        for (k, v) in patch {
            obj.insert(k, v);
        }
        serde_json::from_value(base).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    /// Builds a configuration from a flat JSON object. Fields not given take
    /// the full-scale defaults of the named case and method.
    pub fn from_json(json: &str) -> Result<Self, ConfigError> {
        let v: serde_json::Value = serde_json::from_str(json).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let case = v
            .get("case")
            .ok_or(ConfigError::MissingCase)
            .and_then(|c| serde_json::from_value::<CaseId>(c.clone()).map_err(|e| ConfigError::Parse(e.to_string())))?;
        let method = match v.get("method") {
            Some(m) => serde_json::from_value(m.clone()).map_err(|e| ConfigError::Parse(e.to_string()))?,
            None => Method::Clinn,
        };
        Self::paper(case, method).overlay_json(json)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
