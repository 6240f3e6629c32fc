//! Adam, residual-based refinement weights and the round-structured
//! training loop.
//!
//! Training runs `rar_rounds + 1` phases. Each phase starts by rebuilding
//! the discontinuity set and RH targets from the current prediction (only
//! for methods with an RH term); every phase after the first also resets
//! the per-point weights and boosts the interior points with the largest
//! residual and implicit-relation errors. Each epoch is one full-batch
//! Adam step. The model with the smallest evaluation MSE is kept.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::evalreport::{predict, EvalError, EvalSet};
use crate::indicator::IndicatorParams;
use crate::loss::{LossBreakdown, LossEngine, LossError};
use crate::network::{Architecture, NetworkError, NetworkParams};
use crate::problems::{get_problem, sample_grid, CollocationSet, ProblemError, ProblemSpec};
use crate::shockgeom::{analyze, default_offset, flag_field, ShockGeomError, ShockGeometry};

/// Totals above this abort training.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Shock(#[from] ShockGeomError),
    #[error("non-finite gradient entry {index} at epoch {epoch}")]
    NonFiniteGradient { epoch: usize, index: usize },
    #[error("loss diverged at epoch {epoch}: total = {total:e}")]
    Diverged {
        epoch: usize,
        total: f64,
        history: Box<TrainHistory>,
    },
}

impl TrainError {
    /// Whether the failure is numerical rather than a bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            TrainError::NonFiniteGradient { .. }
                | TrainError::Diverged { .. }
                | TrainError::Loss(LossError::Diff(_))
                | TrainError::Eval(EvalError::Diff(_))
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(len: usize, config: AdamConfig) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
            config,
        }
    }
}

/// One bias-corrected Adam update. A non-finite gradient leaves both the
/// parameters and the state untouched and reports the first bad index.
pub fn adam_step(params: &mut [f64], grad: &[f64], state: &mut AdamState) -> Result<(), usize> {
    assert_eq!(params.len(), grad.len());
    assert_eq!(params.len(), state.m.len());
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(i);
    }
    let AdamConfig { lr, beta1, beta2, eps } = state.config;
    state.step += 1;
    let c1 = 1.0 - beta1.powi(state.step as i32);
    let c2 = 1.0 - beta2.powi(state.step as i32);
    for ((p, &g), (m, v)) in params
        .iter_mut()
        .zip(grad)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let mh = *m / c1;
        let vh = *v / c2;
        *p -= lr * mh / (vh.sqrt() + eps);
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RarSchedule {
    pub rounds: usize,
    pub epochs: Vec<usize>,
    pub n_pt: usize,
    pub w_eq: f64,
    pub w_if: f64,
}

impl Default for RarSchedule {
    fn default() -> Self {
        Self {
            rounds: 1,
            epochs: vec![5000, 5000],
            n_pt: 500,
            w_eq: 33.0,
            w_if: 16.0,
        }
    }
}

/// Indices of the `n` largest values among non-excluded entries, ties to
/// the lower index.
fn top_n(values: &[f64], excluded: &[bool], n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).filter(|&j| !excluded[j]).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx.truncate(n);
    idx
}

/// Fresh weights: all ones, plus `w_eq` on the top `n_pt` points by GOV
/// error and `w_if` on the top `n_pt` by IM error (when given). Excluded
/// points are never selected.
pub fn rar_update(gov: &[f64], im: Option<&[f64]>, excluded: &[bool], schedule: &RarSchedule) -> Vec<f64> {
    assert_eq!(gov.len(), excluded.len());
    let mut w = vec![1.0; gov.len()];
    for j in top_n(gov, excluded, schedule.n_pt) {
        w[j] += schedule.w_eq;
    }
    if let Some(im) = im {
        assert_eq!(im.len(), excluded.len());
        for j in top_n(im, excluded, schedule.n_pt) {
            w[j] += schedule.w_if;
        }
    }
    w
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub gov: f64,
    pub ic: f64,
    pub bc: f64,
    pub im: f64,
    pub bd: f64,
    pub rh: f64,
    pub total: f64,
    pub eval_mse: Option<f64>,
    pub wall_ms: f64,
}

impl EpochRecord {
    fn from_breakdown(epoch: usize, b: &LossBreakdown, wall_ms: f64) -> Self {
        Self {
            epoch,
            gov: b.gov,
            ic: b.ic,
            bc: b.bc,
            im: b.im,
            bd: b.bd,
            rh: b.rh,
            total: b.total,
            eval_mse: None,
            wall_ms,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSample {
    pub epoch: usize,
    pub mse: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
    pub evals: Vec<EvalSample>,
    pub best: Option<EvalSample>,
}

impl TrainHistory {
    pub const CSV_HEADER: &'static str = "epoch,gov,ic,bc,im,bd,rh,total,eval_mse,wall_ms";

    /// One row per epoch; `eval_mse` is blank between evaluations and
    /// `wall_ms` is blank unless requested.
    pub fn to_csv(&self, with_wall_time: bool) -> String {
        let mut s = String::with_capacity(self.records.len() * 160);
        s.push_str(Self::CSV_HEADER);
        s.push('\n');
        for r in &self.records {
            let _ = write!(
                s,
                "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},",
                r.epoch, r.gov, r.ic, r.bc, r.im, r.bd, r.rh, r.total
            );
            if let Some(m) = r.eval_mse {
                let _ = write!(s, "{m:e}");
            }
            s.push(',');
            if with_wall_time {
                let _ = write!(s, "{:.3}", r.wall_ms);
            }
            s.push('\n');
        }
        s
    }
}

/// Result of a completed run.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub history: TrainHistory,
    pub best: NetworkParams,
    pub last: NetworkParams,
    /// Per-node weights after the last refinement.
    pub rar_weights: Vec<f64>,
    /// Discontinuity set and RH targets of the last rebuild.
    pub geometry: ShockGeometry,
}

/// Recomputes `P_D` and the RH targets from the current prediction on the
/// training grid and updates the interior exclusion mask.
pub fn rebuild_discontinuities(
    params: &NetworkParams,
    spec: &ProblemSpec,
    coll: &mut CollocationSet,
    h: f64,
) -> Result<ShockGeometry, TrainError> {
    let values = predict(params, &coll.grid)?;
    let field = flag_field(spec, &coll.grid, &values, &IndicatorParams::default())?;
    let geometry = analyze(spec, &field, h);
    coll.clear_discontinuities();
    let mut interior_of = vec![usize::MAX; coll.grid.len()];
    for (j, &g) in coll.interior_nodes.iter().enumerate() {
        interior_of[g] = j;
    }
    for &g in &geometry.pd.nodes {
        if interior_of[g] != usize::MAX {
            coll.in_discontinuity[interior_of[g]] = true;
        }
    }
    coll.discontinuity = geometry.pd.points.clone();
    Ok(geometry)
}

/// Initial parameters for a configuration.
pub fn initial_params(cfg: &RunConfig) -> Result<NetworkParams, TrainError> {
    let spec = get_problem(cfg.case);
    let arch = Architecture::new(cfg.width, cfg.depth, spec.input_dim())?;
    Ok(if cfg.normalize_inputs {
        let mut lower = spec.domain.lower.clone();
        let mut upper = spec.domain.upper.clone();
        lower.push(0.0);
        upper.push(spec.domain.t_end);
        NetworkParams::init_for_box(arch, cfg.seed, &lower, &upper)
    } else {
        NetworkParams::init(arch, cfg.seed)
    })
}

pub fn train(cfg: &RunConfig) -> Result<TrainOutcome, TrainError> {
    train_with(cfg, |_| {})
}

/// [`train`] with a callback after every recorded epoch.
pub fn train_with(cfg: &RunConfig, mut observe: impl FnMut(&EpochRecord)) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    let spec = get_problem(cfg.case);
    let mut coll = sample_grid(&spec, cfg.grid_nx, cfg.grid_nt)?;
    let eval = EvalSet::new(&spec, cfg.eval_nx, cfg.eval_nt)?;
    let weights = cfg.loss_weights();
    let schedule = RarSchedule {
        rounds: cfg.rar_rounds,
        epochs: cfg.epochs.clone(),
        n_pt: cfg.n_pt,
        w_eq: cfg.w_eq,
        w_if: cfg.w_if,
    };
    let h = cfg.h_offset.unwrap_or_else(|| default_offset(&coll.grid));
    let mut params = initial_params(cfg)?;
    let mut adam = AdamState::new(
        params.len(),
        AdamConfig {
            lr: cfg.lr,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.eps,
        },
    );
    let mut engine = LossEngine::new();
    let mut grad = vec![0.0; params.len()];
    let mut history = TrainHistory::default();
    let mut best = params.clone();
    let mut geometry = ShockGeometry::default();
    let total_epochs = cfg.total_epochs();
    let mut epoch = 0usize;

    for round in 0..=schedule.rounds {
        if weights.terms.rh {
            geometry = rebuild_discontinuities(&params, &spec, &mut coll, h)?;
        }
        if round > 0 {
            let b = engine.evaluate(&params, &spec, &coll, &geometry.targets, &weights, None)?;
            let im = weights.terms.im.then_some(b.im_points.as_slice());
            let interior = rar_update(&b.gov_points, im, &coll.in_discontinuity, &schedule);
            coll.reset_weights();
            for (j, w) in interior.into_iter().enumerate() {
                coll.rar_weights[coll.interior_nodes[j]] = w;
            }
        }
        for _ in 0..schedule.epochs[round] {
            let started = Instant::now();
            let b = engine.evaluate(&params, &spec, &coll, &geometry.targets, &weights, Some(&mut grad))?;
            epoch += 1;
            let mut rec = EpochRecord::from_breakdown(epoch, &b, 0.0);
            if !b.total.is_finite() || b.total > DIVERGENCE_THRESHOLD {
                history.records.push(rec);
                return Err(TrainError::Diverged {
                    epoch,
                    total: b.total,
                    history: Box::new(history),
                });
            }
            adam_step(params.as_mut_slice(), &grad, &mut adam)
                .map_err(|index| TrainError::NonFiniteGradient { epoch, index })?;
            if epoch % cfg.eval_every == 0 || epoch == total_epochs {
                let mse = eval.mse(&params)?;
                rec.eval_mse = Some(mse);
                let sample = EvalSample { epoch, mse };
                history.evals.push(sample);
                if history.best.is_none_or(|b| mse < b.mse) {
                    history.best = Some(sample);
                    best = params.clone();
                }
            }
            rec.wall_ms = started.elapsed().as_secs_f64() * 1e3;
            observe(&rec);
            history.records.push(rec);
        }
    }
    if history.best.is_none() {
        let mse = eval.mse(&params)?;
        history.best = Some(EvalSample { epoch, mse });
        history.evals.push(EvalSample { epoch, mse });
        best = params.clone();
    }
    Ok(TrainOutcome {
        history,
        best,
        last: params,
        rar_weights: coll.rar_weights,
        geometry,
    })
}
