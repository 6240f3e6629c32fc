//! Loss terms and their assembly.
//!
//! Six terms act on the training points: the PDE residual (GOV), initial
//! and boundary data (IC, BC), the implicit-solution relation (IM), the
//! boundedness penalty (BD) and the Rankine–Hugoniot speed mismatch (RH).
//! Each term is a weighted sum of per-point heads. The heads are generic
//! over [`Real`] so their partial derivatives come from forward duals, and
//! those partials are pushed through the batched network by
//! [`BatchEval::backward`].

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

use crate::diffengine::{sign0, BatchEval, DiffError, Dual, Real};
use crate::network::NetworkParams;
use crate::problems::{CollocationSet, Flux, PointSet, ProblemSpec};
use crate::shockgeom::RhTarget;

/// Jumps smaller than this are treated as flat and dropped from the RH term.
pub const RH_MIN_JUMP: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error("unknown method `{0}` (expected clinn, ifnn, pinnwe or pinn)")]
    UnknownMethod(String),
    #[error("{what}: expected {expected} entries, found {found}")]
    Shape {
        what: &'static str,
        expected: usize,
        found: usize,
    },
}

/// Training method, which fixes the active loss terms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Clinn,
    Ifnn,
    #[serde(rename = "pinnwe")]
    PinnWe,
    Pinn,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Clinn, Method::Ifnn, Method::PinnWe, Method::Pinn];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Clinn => "clinn",
            Method::Ifnn => "ifnn",
            Method::PinnWe => "pinnwe",
            Method::Pinn => "pinn",
        }
    }

    pub fn terms(self) -> Terms {
        let base = Terms {
            gov: true,
            ic: true,
            bc: true,
            im: false,
            bd: false,
            rh: false,
        };
        match self {
            Method::Clinn => Terms {
                im: true,
                bd: true,
                rh: true,
                ..base
            },
            Method::Ifnn => Terms { im: true, ..base },
            Method::PinnWe => Terms { rh: true, ..base },
            Method::Pinn => base,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = LossError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase();
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == lower || (lower == "pinn-we" && *m == Method::PinnWe))
            .ok_or_else(|| LossError::UnknownMethod(s.to_string()))
    }
}

/// Which loss terms are switched on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Terms {
    pub gov: bool,
    pub ic: bool,
    pub bc: bool,
    pub im: bool,
    pub bd: bool,
    pub rh: bool,
}

impl Terms {
    pub fn names(&self) -> Vec<&'static str> {
        [
            (self.gov, "GOV"),
            (self.ic, "IC"),
            (self.bc, "BC"),
            (self.im, "IM"),
            (self.bd, "BD"),
            (self.rh, "RH"),
        ]
        .into_iter()
        .filter_map(|(on, n)| on.then_some(n))
        .collect()
    }
}

/// Term weights together with the term toggles.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub gov: f64,
    pub ic: f64,
    pub bc: f64,
    pub im: f64,
    pub bd: f64,
    pub rh: f64,
    pub terms: Terms,
}

impl LossWeights {
    pub fn for_method(method: Method) -> Self {
        Self {
            gov: 1.0,
            ic: 1000.0,
            bc: 10.0,
            im: 10000.0,
            bd: 10000.0,
            rh: 100.0,
            terms: method.terms(),
        }
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        Self::for_method(Method::Clinn)
    }
}

/// Term values (each already including the per-point weights `w_j`), the
/// weighted total, and per-point diagnostics.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub gov: f64,
    pub ic: f64,
    pub bc: f64,
    pub im: f64,
    pub bd: f64,
    pub rh: f64,
    pub total: f64,
    /// Squared residual per interior point; zero where not evaluated.
    pub gov_points: Vec<f64>,
    /// Squared implicit mismatch per interior point; zero where not evaluated.
    pub im_points: Vec<f64>,
    pub rh_used: usize,
    pub rh_skipped: usize,
}

impl LossBreakdown {
    /// Set when RH targets existed but every one was skipped.
    pub fn rh_all_skipped(&self) -> bool {
        self.rh_used == 0 && self.rh_skipped > 0
    }
}

/// `∂_t u + λ(u)·∇_x u` from `grads = (∂u/∂x_1, .., ∂u/∂x_d, ∂u/∂t)`.
pub fn gov_residual<T: Real>(flux: &Flux, u: &T, grads: &[T]) -> T {
    let d = grads.len() - 1;
    let lam = flux.lambda(u);
    grads[..d]
        .iter()
        .fold(grads[d].clone(), |r, g| r + lam.clone() * g.clone())
}

/// `u − u0(x − λ(u) t)`, shifting every spatial coordinate by the same
/// characteristic speed.
pub fn im_mismatch<T: Real>(spec: &ProblemSpec, u: &T, point: &[f64]) -> T {
    let d = point.len() - 1;
    let t = point[d];
    let lam = spec.flux.lambda(u);
    let foot: Vec<T> = point[..d]
        .iter()
        .map(|&x| lam.clone() * (-t) + x)
        .collect();
    u.clone() - spec.u0_generic(&foot)
}

/// Distance from `u` to the interval `[lo, hi]`.
pub fn bd_exceedance<T: Real>(u: &T, lo: f64, hi: f64) -> T {
    let v = u.value();
    if v > hi {
        u.clone() - hi
    } else if v < lo {
        -(u.clone() - lo)
    } else {
        T::cst(0.0)
    }
}

/// `(f(u_L) − f(u_R))/(u_L − u_R)·Σ_k n_k − s`.
pub fn rh_mismatch<T: Real>(flux: &Flux, ul: &T, ur: &T, normal_sum: f64, speed: f64) -> T {
    (flux.eval(ul) - flux.eval(ur)) / (ul.clone() - ur.clone()) * normal_sum - speed
}

fn seeded(values: &[f64]) -> Vec<Dual<f64>> {
    values
        .iter()
        .enumerate()
        .map(|(k, &v)| Dual::variable(v, k, values.len()))
        .collect()
}

/// Reusable buffers for repeated loss and gradient evaluations.
#[derive(Debug, Default)]
pub struct LossEngine {
    interior: BatchEval,
    data: BatchEval,
    points: Vec<f64>,
    active: Vec<usize>,
    grad_u: Vec<f64>,
    grad_du: Vec<f64>,
}

impl LossEngine {
    pub fn new() -> Self {
        Self::default()
    }

    /// Evaluates every enabled term. When `grad` is given it is overwritten
    /// with `∂ total / ∂θ`.
    ///
    /// GOV, IM and BD run over `P_N \ P_D` and are normalized by `|P_N|`,
    /// IC by `|P_I|`; BC is a plain sum and RH a mean over the targets with
    /// a usable jump.
    pub fn evaluate(
        &mut self,
        params: &NetworkParams,
        spec: &ProblemSpec,
        coll: &CollocationSet,
        targets: &[RhTarget],
        weights: &LossWeights,
        mut grad: Option<&mut [f64]>,
    ) -> Result<LossBreakdown, LossError> {
        let terms = weights.terms;
        if coll.rar_weights.len() != coll.grid.len() {
            return Err(LossError::Shape {
                what: "refinement weights",
                expected: coll.grid.len(),
                found: coll.rar_weights.len(),
            });
        }
        if let Some(g) = grad.as_deref_mut() {
            if g.len() != params.len() {
                return Err(LossError::Shape {
                    what: "gradient buffer",
                    expected: params.len(),
                    found: g.len(),
                });
            }
            g.iter_mut().for_each(|v| *v = 0.0);
        }
        let n_int = coll.interior.len();
        let mut out = LossBreakdown {
            gov_points: vec![0.0; n_int],
            im_points: vec![0.0; n_int],
            ..LossBreakdown::default()
        };

        if terms.gov || terms.im || terms.bd {
            self.interior_terms(params, spec, coll, weights, &mut out, grad.as_deref_mut())?;
        }
        if terms.ic || terms.bc || (terms.rh && !targets.is_empty()) {
            self.data_terms(params, spec, coll, targets, weights, &mut out, grad)?;
        }

        let mut total = 0.0;
        for (on, w, v) in [
            (terms.gov, weights.gov, out.gov),
            (terms.ic, weights.ic, out.ic),
            (terms.bc, weights.bc, out.bc),
            (terms.im, weights.im, out.im),
            (terms.bd, weights.bd, out.bd),
            (terms.rh, weights.rh, out.rh),
        ] {
            if on {
                total += w * v;
            }
        }
        out.total = total;
        Ok(out)
    }

    fn interior_terms(
        &mut self,
        params: &NetworkParams,
        spec: &ProblemSpec,
        coll: &CollocationSet,
        weights: &LossWeights,
        out: &mut LossBreakdown,
        grad: Option<&mut [f64]>,
    ) -> Result<(), LossError> {
        let terms = weights.terms;
        let di = spec.input_dim();
        self.active.clear();
        self.active.extend(coll.active_interior());
        self.points.clear();
        for &j in &self.active {
            self.points.extend_from_slice(coll.interior.point(j));
        }
        let m = self.active.len();
        if m == 0 {
            return Ok(());
        }
        self.interior.evaluate(params, &self.points, terms.gov)?;
        let norm = coll.interior.len() as f64;
        let want = grad.is_some();
        self.grad_u.clear();
        self.grad_u.resize(m, 0.0);
        self.grad_du.clear();
        if terms.gov {
            self.grad_du.resize(m * di, 0.0);
        }
        let (lo, hi) = (spec.u0_inf, spec.u0_sup);
        let (mut gov, mut im, mut bd) = (0.0, 0.0, 0.0);
        let mut seed = vec![0.0; di + 1];
        for (a, &j) in self.active.iter().enumerate() {
            let w = coll.rar_weights[coll.interior_nodes[j]];
            let u = self.interior.values()[a];
            if terms.gov {
                seed[0] = u;
                seed[1..].copy_from_slice(self.interior.input_grads(a));
                let vars = seeded(&seed);
                let r = gov_residual(&spec.flux, &vars[0], &vars[1..]);
                let rv = r.value;
                out.gov_points[j] = rv * rv;
                gov += w * rv * rv;
                if want {
                    let c = weights.gov * w * 2.0 * rv / norm;
                    self.grad_u[a] += c * r.tangent(0);
                    for k in 0..di {
                        self.grad_du[a * di + k] += c * r.tangent(k + 1);
                    }
                }
            }
            if terms.im {
                let ud = Dual::variable(u, 0, 1);
                let e = im_mismatch(spec, &ud, coll.interior.point(j));
                let ev = e.value;
                out.im_points[j] = ev * ev;
                im += w * ev * ev;
                if want {
                    self.grad_u[a] += weights.im * w * 2.0 * ev * e.tangent(0) / norm;
                }
            }
            if terms.bd {
                let ud = Dual::variable(u, 0, 1);
                let e = bd_exceedance(&ud, lo, hi);
                bd += w * e.value * e.value;
                if want {
                    self.grad_u[a] += weights.bd * w * 2.0 * e.value * e.tangent(0) / norm;
                }
            }
        }
        out.gov = gov / norm;
        out.im = im / norm;
        out.bd = bd / norm;
        if let Some(g) = grad {
            let gdu = terms.gov.then_some(self.grad_du.as_slice());
            self.interior.backward(params, &self.grad_u, gdu, g);
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn data_terms(
        &mut self,
        params: &NetworkParams,
        spec: &ProblemSpec,
        coll: &CollocationSet,
        targets: &[RhTarget],
        weights: &LossWeights,
        out: &mut LossBreakdown,
        grad: Option<&mut [f64]>,
    ) -> Result<(), LossError> {
        let terms = weights.terms;
        self.points.clear();
        let n_ic = if terms.ic { coll.initial.len() } else { 0 };
        let n_bc = if terms.bc { coll.boundary.len() } else { 0 };
        let n_rh = if terms.rh { targets.len() } else { 0 };
        self.points.extend_from_slice(&coll.initial.coords[..n_ic * coll.initial.input_dim]);
        self.points.extend_from_slice(&coll.boundary.coords[..n_bc * coll.boundary.input_dim]);
        for t in &targets[..n_rh] {
            self.points.extend_from_slice(&t.sides.left);
        }
        for t in &targets[..n_rh] {
            self.points.extend_from_slice(&t.sides.right);
        }
        let m = n_ic + n_bc + 2 * n_rh;
        if m == 0 {
            return Ok(());
        }
        self.data.evaluate(params, &self.points, false)?;
        let vals = self.data.values();
        self.grad_u.clear();
        self.grad_u.resize(m, 0.0);

        let mut ic = 0.0;
        let norm_ic = coll.initial.len().max(1) as f64;
        for j in 0..n_ic {
            let w = coll.rar_weights[coll.initial_nodes[j]];
            let diff = vals[j] - coll.initial_targets[j];
            ic += w * diff * diff;
            self.grad_u[j] = weights.ic * w * 2.0 * diff / norm_ic;
        }
        out.ic = ic / norm_ic;

        let mut bc = 0.0;
        for j in 0..n_bc {
            let w = coll.rar_weights[coll.boundary_nodes[j]];
            let diff = vals[n_ic + j] - coll.boundary_targets[j];
            bc += w * diff * diff;
            self.grad_u[n_ic + j] = weights.bc * w * 2.0 * diff;
        }
        out.bc = bc;

        let base = n_ic + n_bc;
        let mut rh = 0.0;
        let mut used = 0usize;
        for (j, t) in targets[..n_rh].iter().enumerate() {
            let (ul, ur) = (vals[base + j], vals[base + n_rh + j]);
            if (ul - ur).abs() < RH_MIN_JUMP {
                out.rh_skipped += 1;
                continue;
            }
            let w = coll.rar_weights[t.node];
            let v = seeded(&[ul, ur]);
            let normal_sum: f64 = t.normal.iter().sum();
            let e = rh_mismatch(&spec.flux, &v[0], &v[1], normal_sum, t.speed);
            rh += w * e.value.abs();
            used += 1;
            // scaled by 1/used once the count is known
            self.grad_u[base + j] = weights.rh * w * sign0(e.value) * e.tangent(0);
            self.grad_u[base + n_rh + j] = weights.rh * w * sign0(e.value) * e.tangent(1);
        }
        out.rh_used = used;
        if used > 0 {
            out.rh = rh / used as f64;
            let inv = 1.0 / used as f64;
            self.grad_u[base..].iter_mut().for_each(|g| *g *= inv);
        }
        if let Some(g) = grad {
            self.data.backward(params, &self.grad_u, None, g);
        }
        Ok(())
    }
}

/// Loss value and breakdown without a gradient.
pub fn total_loss(
    params: &NetworkParams,
    spec: &ProblemSpec,
    coll: &CollocationSet,
    targets: &[RhTarget],
    weights: &LossWeights,
) -> Result<LossBreakdown, LossError> {
    LossEngine::new().evaluate(params, spec, coll, targets, weights, None)
}

/// Loss breakdown and the gradient of the total with respect to every
/// parameter.
pub fn total_loss_and_grad(
    params: &NetworkParams,
    spec: &ProblemSpec,
    coll: &CollocationSet,
    targets: &[RhTarget],
    weights: &LossWeights,
) -> Result<(LossBreakdown, Vec<f64>), LossError> {
    let mut grad = vec![0.0; params.len()];
    let b = LossEngine::new().evaluate(params, spec, coll, targets, weights, Some(&mut grad))?;
    Ok((b, grad))
}

/// `Σ |P(û)|² / normalizer` over `points`.
pub fn loss_gov(
    params: &NetworkParams,
    spec: &ProblemSpec,
    points: &PointSet,
    normalizer: usize,
) -> Result<f64, LossError> {
    let ev = crate::diffengine::forward_batch(params, &points.coords, true)?;
    let sum: f64 = (0..ev.len())
        .map(|p| gov_residual(&spec.flux, &ev.values()[p], ev.input_grads(p)).powi(2))
        .sum();
    Ok(sum / normalizer.max(1) as f64)
}

/// Mean squared mismatch against `targets`.
pub fn loss_ic(params: &NetworkParams, points: &PointSet, targets: &[f64]) -> Result<f64, LossError> {
    Ok(loss_bc(params, points, targets)? / points.len().max(1) as f64)
}

/// Summed squared mismatch against `targets`.
pub fn loss_bc(params: &NetworkParams, points: &PointSet, targets: &[f64]) -> Result<f64, LossError> {
    if targets.len() != points.len() {
        return Err(LossError::Shape {
            what: "data targets",
            expected: points.len(),
            found: targets.len(),
        });
    }
    let ev = crate::diffengine::forward_batch(params, &points.coords, false)?;
    Ok(ev
        .values()
        .iter()
        .zip(targets)
        .map(|(u, g)| (u - g) * (u - g))
        .sum())
}

/// `Σ |û − u0(x − λ(û) t)|² / normalizer` over `points`.
pub fn loss_im(
    params: &NetworkParams,
    spec: &ProblemSpec,
    points: &PointSet,
    normalizer: usize,
) -> Result<f64, LossError> {
    let ev = crate::diffengine::forward_batch(params, &points.coords, false)?;
    let sum: f64 = points
        .iter()
        .zip(ev.values())
        .map(|(p, u)| im_mismatch(spec, u, p).powi(2))
        .sum();
    Ok(sum / normalizer.max(1) as f64)
}

/// `Σ dist(û, [inf u0, sup u0])² / normalizer` over `points`.
pub fn loss_bd(
    params: &NetworkParams,
    spec: &ProblemSpec,
    points: &PointSet,
    normalizer: usize,
) -> Result<f64, LossError> {
    let ev = crate::diffengine::forward_batch(params, &points.coords, false)?;
    let sum: f64 = ev
        .values()
        .iter()
        .map(|u| bd_exceedance(u, spec.u0_inf, spec.u0_sup).powi(2))
        .sum();
    Ok(sum / normalizer.max(1) as f64)
}

/// Mean absolute RH mismatch over targets with a usable jump, and the
/// number of skipped targets.
pub fn loss_rh(
    params: &NetworkParams,
    spec: &ProblemSpec,
    targets: &[RhTarget],
) -> Result<(f64, usize), LossError> {
    let mut sum = 0.0;
    let mut used = 0usize;
    for t in targets {
        let ul = params.forward(&t.sides.left).map_err(|_| DiffError::NonFinite { layer: 0 })?;
        let ur = params.forward(&t.sides.right).map_err(|_| DiffError::NonFinite { layer: 0 })?;
        if (ul - ur).abs() < RH_MIN_JUMP {
            continue;
        }
        sum += rh_mismatch(&spec.flux, &ul, &ur, t.normal.iter().sum(), t.speed).abs();
        used += 1;
    }
    let skipped = targets.len() - used;
    Ok((if used > 0 { sum / used as f64 } else { 0.0 }, skipped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Architecture;
    use crate::problems::{get_problem, sample_grid, CaseId};
    use crate::shockgeom::SideSample;

    /// `û = a x + b t + c` realized by lift and projection.
    fn affine(a: f64, b: f64, c: f64) -> NetworkParams {
        let ar = Architecture::new(1, 0, 2).unwrap();
        let mut p = NetworkParams::zeros(ar);
        let s = p.as_mut_slice();
        s[ar.lift_weights()].copy_from_slice(&[a, b]);
        s[ar.lift_bias()].copy_from_slice(&[c]);
        s[ar.projection_weights()].copy_from_slice(&[1.0]);
        p
    }

    #[test]
    fn preset_term_sets() {
        assert_eq!(Method::Clinn.terms().names(), ["GOV", "IC", "BC", "IM", "BD", "RH"]);
        assert_eq!(Method::Ifnn.terms().names(), ["GOV", "IC", "BC", "IM"]);
        assert_eq!(Method::PinnWe.terms().names(), ["GOV", "IC", "BC", "RH"]);
        assert_eq!(Method::Pinn.terms().names(), ["GOV", "IC", "BC"]);
        assert_eq!("PINN-WE".parse::<Method>().unwrap(), Method::PinnWe);
        assert!("wpinn".parse::<Method>().is_err());
        let w = LossWeights::default();
        assert_eq!((w.gov, w.ic, w.bc, w.im, w.bd, w.rh), (1.0, 1000.0, 10.0, 1e4, 1e4, 100.0));
    }

    #[test]
    fn gov_examples() {
        let spec = get_problem(CaseId::C1B);
        let mut ps = PointSet::new(2);
        ps.push(&[1.5, 0.5]);
        ps.push(&[0.2, 0.3]);
        assert_eq!(loss_gov(&affine(0.0, 0.0, 0.7), &spec, &ps, 2).unwrap(), 0.0);
        // û = x − t equals 1 at (1.5, 0.5): −1 + 1·1 = 0
        let r = gov_residual(&Flux::Burgers, &1.0, &[1.0, -1.0]);
        assert_eq!(r, 0.0);
        let mut one = PointSet::new(2);
        one.push(&[1.5, 0.5]);
        assert!(loss_gov(&affine(1.0, -1.0, 0.0), &spec, &one, 1).unwrap() < 1e-28);
    }

    #[test]
    fn ic_examples() {
        let mut ps = PointSet::new(2);
        for i in 0..512 {
            ps.push(&[i as f64 / 512.0, 0.0]);
        }
        let net = affine(0.0, 0.0, 0.25);
        assert!((loss_ic(&net, &ps, &vec![0.25; 512]).unwrap()).abs() < 1e-30);
        assert!((loss_ic(&net, &ps, &vec![0.0; 512]).unwrap() - 0.0625).abs() < 1e-15);
        let mut t = vec![0.25; 512];
        t[17] = 0.35;
        assert!((loss_ic(&net, &ps, &t).unwrap() - 0.01 / 512.0).abs() < 1e-17);
    }

    #[test]
    fn im_examples() {
        let spec = get_problem(CaseId::C1B);
        let e: f64 = im_mismatch(&spec, &0.75, &[1.0, 1.0]);
        assert!(e.abs() < 1e-15);
        let e0: f64 = im_mismatch(&spec, &0.5, &[1.0, 0.0]);
        assert_eq!(e0, 0.5 - 3.0);
        let ed: f64 = im_mismatch(&spec, &0.85, &[1.0, 1.0]);
        assert!((ed - (0.85 - 3.0 * 0.15)).abs() < 1e-14);
    }

    #[test]
    fn bd_examples() {
        assert_eq!(bd_exceedance(&0.3, 0.0, 1.0), 0.0);
        assert!((bd_exceedance(&1.2, 0.0, 1.0).powi(2) - 0.04).abs() < 1e-15);
        assert!((bd_exceedance(&-0.3, 0.0, 1.0).powi(2) - 0.09).abs() < 1e-15);
    }

    #[test]
    fn rh_examples() {
        let m: f64 = rh_mismatch(&Flux::Burgers, &2.0, &0.0, 1.0, 1.0);
        assert_eq!(m, 0.0);
        let g = get_problem(CaseId::C2A).flux;
        assert_eq!(rh_mismatch(&g, &1.0, &9.0, 1.0, 12.0), 0.0);
    }

    fn target(node: usize, x: f64, t: f64, h: f64, s: f64) -> RhTarget {
        RhTarget {
            node,
            point: vec![x, t],
            normal: vec![1.0],
            speed: s,
            sides: SideSample {
                left: vec![x - h, t],
                right: vec![x + h, t],
                h,
            },
        }
    }

    #[test]
    fn flat_prediction_skips_rh() {
        let spec = get_problem(CaseId::C1B);
        let net = affine(0.0, 0.0, 1.0);
        let (v, skipped) = loss_rh(&net, &spec, &[target(0, 1.0, 0.5, 0.1, 1.0)]).unwrap();
        assert_eq!((v, skipped), (0.0, 1));
        let coll = sample_grid(&spec, 8, 4).unwrap();
        let mut w = LossWeights::for_method(Method::PinnWe);
        w.terms.gov = false;
        w.terms.ic = false;
        w.terms.bc = false;
        let b = total_loss(&net, &spec, &coll, &[target(9, 1.0, 0.5, 0.1, 1.0)], &w).unwrap();
        assert!(b.rh_all_skipped());
        assert_eq!(b.total, 0.0);
    }

    fn random_net(seed: u64) -> NetworkParams {
        NetworkParams::init(Architecture::new(8, 2, 2).unwrap(), seed)
    }

    #[test]
    fn breakdown_matches_single_term_functions() {
        let spec = get_problem(CaseId::C1B);
        let coll = sample_grid(&spec, 12, 5).unwrap();
        let net = random_net(3);
        let b = total_loss(&net, &spec, &coll, &[], &LossWeights::default()).unwrap();
        let n = coll.interior.len();
        assert!((b.gov - loss_gov(&net, &spec, &coll.interior, n).unwrap()).abs() < 1e-12);
        assert!((b.im - loss_im(&net, &spec, &coll.interior, n).unwrap()).abs() < 1e-12);
        assert!((b.bd - loss_bd(&net, &spec, &coll.interior, n).unwrap()).abs() < 1e-12);
        assert!((b.ic - loss_ic(&net, &coll.initial, &coll.initial_targets).unwrap()).abs() < 1e-12);
        assert!((b.bc - loss_bc(&net, &coll.boundary, &coll.boundary_targets).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn only_gov_gives_weighted_gov() {
        let spec = get_problem(CaseId::C1A);
        let coll = sample_grid(&spec, 10, 4).unwrap();
        let net = random_net(5);
        let mut w = LossWeights::default();
        w.terms = Terms {
            gov: true,
            ic: false,
            bc: false,
            im: false,
            bd: false,
            rh: false,
        };
        w.gov = 2.5;
        let b = total_loss(&net, &spec, &coll, &[], &w).unwrap();
        assert_eq!(b.total, 2.5 * b.gov);
    }

    #[test]
    fn weights_scale_linearly() {
        let spec = get_problem(CaseId::C1B);
        let mut coll = sample_grid(&spec, 10, 4).unwrap();
        let net = random_net(9);
        let targets = [target(coll.interior_nodes[3], 1.0, 2.0, 0.4, 0.3)];
        let w = LossWeights::default();
        let a = total_loss(&net, &spec, &coll, &targets, &w).unwrap();
        coll.rar_weights.iter_mut().for_each(|w| *w = 2.0);
        let b = total_loss(&net, &spec, &coll, &targets, &w).unwrap();
        for (x, y) in [
            (a.gov, b.gov),
            (a.ic, b.ic),
            (a.bc, b.bc),
            (a.im, b.im),
            (a.bd, b.bd),
            (a.rh, b.rh),
            (a.total, b.total),
        ] {
            assert!((2.0 * x - y).abs() <= 1e-12 * y.abs().max(1.0), "{x} {y}");
        }
    }

    #[test]
    fn pinn_total_matches_residual_and_data_only() {
        let spec = get_problem(CaseId::C2A);
        let coll = sample_grid(&spec, 10, 4).unwrap();
        let net = random_net(1);
        let w = LossWeights::for_method(Method::Pinn);
        let b = total_loss(&net, &spec, &coll, &[target(20, 0.0, 1.0, 0.5, 3.0)], &w).unwrap();
        assert_eq!((b.im, b.bd, b.rh), (0.0, 0.0, 0.0));
        assert_eq!(b.total, w.gov * b.gov + w.ic * b.ic + w.bc * b.bc);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let spec = get_problem(CaseId::C1B);
        let mut coll = sample_grid(&spec, 7, 4).unwrap();
        coll.in_discontinuity[2] = true;
        coll.rar_weights[coll.interior_nodes[4]] = 34.0;
        let net = random_net(21);
        let targets = [target(coll.interior_nodes[2], 2.0, 1.0, 0.6, 0.4)];
        let w = LossWeights::default();
        let (b, g) = total_loss_and_grad(&net, &spec, &coll, &targets, &w).unwrap();
        assert!(b.rh_used == 1 && b.im > 0.0);
        let f = |theta: &[f64]| {
            let p = NetworkParams::from_vec(*net.arch(), theta.to_vec()).unwrap();
            total_loss(&p, &spec, &coll, &targets, &w).unwrap().total
        };
        let err = crate::diffengine::finite_diff_check(f, &g, net.as_slice(), 1e-6);
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn excluded_points_do_not_contribute() {
        let spec = get_problem(CaseId::C1B);
        let mut coll = sample_grid(&spec, 8, 4).unwrap();
        let net = random_net(2);
        let w = LossWeights::default();
        coll.in_discontinuity.iter_mut().for_each(|m| *m = true);
        let b = total_loss(&net, &spec, &coll, &[], &w).unwrap();
        assert_eq!((b.gov, b.im, b.bd), (0.0, 0.0, 0.0));
        assert!(b.gov_points.iter().all(|&v| v == 0.0));
    }
}
