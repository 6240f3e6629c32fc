//! The seven benchmark problems: fluxes, initial and boundary data, domains,
//! and the uniform collocation grids used for training and evaluation.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffengine::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("unknown case id `{0}` (expected one of 1A, 1B, 2A, 2B, 3A, 3B, 2D)")]
    UnknownCase(String),
    #[error("boundary solve did not converge at t = {t} after {iterations} iterations")]
    NonConvergence { t: f64, iterations: usize },
    #[error("grid needs at least 2 nodes per axis, got nx = {nx}, nt = {nt}")]
    GridTooSmall { nx: usize, nt: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CaseId {
    #[serde(rename = "1A")]
    C1A,
    #[serde(rename = "1B")]
    C1B,
    #[serde(rename = "2A")]
    C2A,
    #[serde(rename = "2B")]
    C2B,
    #[serde(rename = "3A")]
    C3A,
    #[serde(rename = "3B")]
    C3B,
    #[serde(rename = "2D")]
    C2D,
}

impl CaseId {
    pub const ALL: [CaseId; 7] = [
        CaseId::C1A,
        CaseId::C1B,
        CaseId::C2A,
        CaseId::C2B,
        CaseId::C3A,
        CaseId::C3B,
        CaseId::C2D,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CaseId::C1A => "1A",
            CaseId::C1B => "1B",
            CaseId::C2A => "2A",
            CaseId::C2B => "2B",
            CaseId::C3A => "3A",
            CaseId::C3B => "3B",
            CaseId::C2D => "2D",
        }
    }
}

impl fmt::Display for CaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CaseId {
    type Err = ProblemError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CaseId::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| ProblemError::UnknownCase(s.to_string()))
    }
}

/// Scalar flux shared by every spatial component.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Flux {
    /// `u²/2`
    Burgers,
    /// `v_max · u · (1 − u/u_max)`
    Greenshields { v_max: f64, u_max: f64 },
    /// `u² / (u² + M(1 − u)²)`
    BuckleyLeverett { m: f64 },
    /// `u³/3`
    Cubic,
}

impl Flux {
    pub fn eval<T: Real>(&self, u: &T) -> T {
        match *self {
            Flux::Burgers => u.square() * 0.5,
            Flux::Greenshields { v_max, u_max } => {
                u.clone() * v_max - u.square() * (v_max / u_max)
            }
            Flux::BuckleyLeverett { m } => {
                let a = u.square();
                let b = (T::cst(1.0) - u.clone()).square() * m;
                a.clone() / (a + b)
            }
            Flux::Cubic => u.square() * u.clone() / 3.0,
        }
    }

    /// Characteristic speed `f′(u)`.
    pub fn lambda<T: Real>(&self, u: &T) -> T {
        match *self {
            Flux::Burgers => u.clone(),
            Flux::Greenshields { v_max, u_max } => {
                T::cst(v_max) - u.clone() * (2.0 * v_max / u_max)
            }
            Flux::BuckleyLeverett { m } => {
                let one_minus = T::cst(1.0) - u.clone();
                let d = u.square() + one_minus.square() * m;
                u.clone() * one_minus * (2.0 * m) / d.square()
            }
            Flux::Cubic => u.square(),
        }
    }

    pub fn f(&self, u: f64) -> f64 {
        self.eval(&u)
    }

    pub fn speed(&self, u: f64) -> f64 {
        self.lambda(&u)
    }
}

/// Axis-aligned space-time box `[lower, upper]^d × [0, t_end]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Domain {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub t_end: f64,
}

impl Domain {
    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Whether the space-time point lies in the closed box.
    pub fn contains(&self, point: &[f64]) -> bool {
        let d = self.dim();
        point.len() == d + 1
            && (0..d).all(|k| point[k] >= self.lower[k] && point[k] <= self.upper[k])
            && point[d] >= 0.0
            && point[d] <= self.t_end
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProblemSpec {
    pub id: CaseId,
    pub flux: Flux,
    pub domain: Domain,
    pub u0_inf: f64,
    pub u0_sup: f64,
}

/// Initial data of case 2B; the other piecewise cases follow the same
/// left-closed pattern.
fn u0_2b(x: f64) -> f64 {
    if x <= -2.0 {
        2.0
    } else if x <= 2.0 {
        0.0
    } else {
        4.0
    }
}

impl ProblemSpec {
    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn input_dim(&self) -> usize {
        self.dim() + 1
    }

    pub fn lambda_eval(&self, u: f64) -> Vec<f64> {
        vec![self.flux.speed(u); self.dim()]
    }

    pub fn flux_eval(&self, u: f64) -> Vec<f64> {
        vec![self.flux.f(u); self.dim()]
    }

    /// Initial data at a spatial point, extended to all of `R^d`.
    ///
    /// The sine profile of 1A keeps its analytic form outside the domain;
    /// every other case extends by its constant far-field states.
    pub fn u0(&self, x: &[f64]) -> f64 {
        self.u0_generic(x).value()
    }

    /// [`ProblemSpec::u0`] for any [`Real`], differentiable almost everywhere.
    pub fn u0_generic<T: Real>(&self, x: &[T]) -> T {
        let x0 = x[0].value();
        match self.id {
            CaseId::C1A => (x[0].clone() * PI).sin() + 0.5,
            CaseId::C1B => {
                if x0 > -1.0 && x0 <= 3.0 {
                    x[0].clone() * 3.0
                } else {
                    T::cst(0.0)
                }
            }
            CaseId::C2A => T::cst(if x0 <= -5.0 {
                1.0
            } else if x0 <= 4.0 {
                9.0
            } else {
                19.0
            }),
            CaseId::C2B => T::cst(u0_2b(x0)),
            CaseId::C3A => T::cst(if x0 <= 1.0 { 1.0 } else { 0.0 }),
            CaseId::C3B => T::cst(if x0 <= 0.0 {
                -2.0
            } else if x0 <= 1.0 {
                1.5
            } else {
                2.0
            }),
            CaseId::C2D => T::cst(5.0 - 2.0 * u0_2b(x0.max(x[1].value()))),
        }
    }

    /// Dirichlet data on the spatial boundary at time `t`.
    ///
    /// Case 1A uses the implicit boundary value `g(t)` at both ends (the
    /// initial profile is 2-periodic); every other case freezes the initial
    /// value at the boundary point.
    pub fn boundary_value(&self, x: &[f64], t: f64) -> Result<f64, ProblemError> {
        match self.id {
            CaseId::C1A => solve_1a_boundary(t),
            _ => Ok(self.u0(x)),
        }
    }
}

pub fn get_problem(id: CaseId) -> ProblemSpec {
    let line = |p: f64, q: f64, t: f64| Domain {
        lower: vec![p],
        upper: vec![q],
        t_end: t,
    };
    let (flux, domain, lo, hi) = match id {
        CaseId::C1A => (Flux::Burgers, line(0.0, 2.0, 0.4), -0.5, 1.5),
        CaseId::C1B => (Flux::Burgers, line(-4.0, 12.0, 4.0), -3.0, 9.0),
        CaseId::C2A => (
            Flux::Greenshields {
                v_max: 22.0,
                u_max: 22.0,
            },
            line(-6.0, 6.0, 2.0),
            1.0,
            19.0,
        ),
        CaseId::C2B => (
            Flux::Greenshields {
                v_max: 5.0,
                u_max: 5.0,
            },
            line(-4.0, 6.0, 6.0),
            0.0,
            4.0,
        ),
        CaseId::C3A => (Flux::BuckleyLeverett { m: 1.0 }, line(0.0, 4.0, 2.0), 0.0, 1.0),
        CaseId::C3B => (Flux::Cubic, line(-1.0, 3.0, 1.0), -2.0, 2.0),
        CaseId::C2D => (
            Flux::Burgers,
            Domain {
                lower: vec![-4.0, -4.0],
                upper: vec![6.0, 6.0],
                t_end: 6.0,
            },
            -3.0,
            5.0,
        ),
    };
    ProblemSpec {
        id,
        flux,
        domain,
        u0_inf: lo,
        u0_sup: hi,
    }
}

/// Parses a case label and returns its specification.
pub fn problem_by_name(name: &str) -> Result<ProblemSpec, ProblemError> {
    Ok(get_problem(name.parse()?))
}

/// Root of `g = sin(−π t g) + 0.5` by Newton from `g = 0.5`.
pub fn solve_1a_boundary(t: f64) -> Result<f64, ProblemError> {
    const MAX_ITER: usize = 100;
    let mut g: f64 = 0.5;
    for _ in 0..MAX_ITER {
        let r = g - (-PI * t * g).sin() - 0.5;
        if r.abs() < 1e-12 {
            return Ok(g);
        }
        let dr = 1.0 + PI * t * (-PI * t * g).cos();
        g -= r / dr;
    }
    let r = g - (-PI * t * g).sin() - 0.5;
    if r.abs() < 1e-12 {
        Ok(g)
    } else {
        Err(ProblemError::NonConvergence {
            t,
            iterations: MAX_ITER,
        })
    }
}

/// Uniform tensor grid of `nx` nodes per spatial axis and `nt` time levels.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub nx: usize,
    pub nt: usize,
    pub dim: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub t_end: f64,
}

impl Grid {
    pub fn new(spec: &ProblemSpec, nx: usize, nt: usize) -> Result<Self, ProblemError> {
        if nx < 2 || nt < 2 {
            return Err(ProblemError::GridTooSmall { nx, nt });
        }
        Ok(Self {
            nx,
            nt,
            dim: spec.dim(),
            lower: spec.domain.lower.clone(),
            upper: spec.domain.upper.clone(),
            t_end: spec.domain.t_end,
        })
    }

    pub fn dx(&self, axis: usize) -> f64 {
        (self.upper[axis] - self.lower[axis]) / (self.nx - 1) as f64
    }

    pub fn dt(&self) -> f64 {
        self.t_end / (self.nt - 1) as f64
    }

    pub fn x(&self, axis: usize, i: usize) -> f64 {
        if i == self.nx - 1 {
            self.upper[axis]
        } else {
            self.lower[axis] + i as f64 * self.dx(axis)
        }
    }

    pub fn t(&self, k: usize) -> f64 {
        if k == self.nt - 1 {
            self.t_end
        } else {
            k as f64 * self.dt()
        }
    }

    /// Spatial nodes per time slice.
    pub fn slice_len(&self) -> usize {
        self.nx.pow(self.dim as u32)
    }

    pub fn len(&self) -> usize {
        self.slice_len() * self.nt
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Spatial multi-index of slice offset `s` (first axis slowest).
    pub fn spatial_index(&self, s: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim];
        let mut rem = s;
        for axis in (0..self.dim).rev() {
            idx[axis] = rem % self.nx;
            rem /= self.nx;
        }
        idx
    }

    /// Space-time coordinates of global node `g` (time-major ordering).
    pub fn point(&self, g: usize) -> Vec<f64> {
        let k = g / self.slice_len();
        let idx = self.spatial_index(g % self.slice_len());
        let mut p: Vec<f64> = idx.iter().enumerate().map(|(a, &i)| self.x(a, i)).collect();
        p.push(self.t(k));
        p
    }

    /// Nearest time level to `t`; ties go to the earlier level.
    pub fn nearest_level(&self, t: f64) -> usize {
        let k = (t / self.dt()).round().clamp(0.0, (self.nt - 1) as f64) as usize;
        if k > 0 && ((self.t(k - 1) - t).abs() <= (self.t(k) - t).abs()) {
            k - 1
        } else {
            k
        }
    }
}

/// Flat coordinate buffer of `input_dim`-tuples.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointSet {
    pub input_dim: usize,
    pub coords: Vec<f64>,
}

impl PointSet {
    pub fn new(input_dim: usize) -> Self {
        Self {
            input_dim,
            coords: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        if self.input_dim == 0 {
            0
        } else {
            self.coords.len() / self.input_dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, j: usize) -> &[f64] {
        &self.coords[j * self.input_dim..(j + 1) * self.input_dim]
    }

    pub fn push(&mut self, p: &[f64]) {
        debug_assert_eq!(p.len(), self.input_dim);
        self.coords.extend_from_slice(p);
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.input_dim.max(1))
    }
}

/// Training points split by role, with per-point refinement weights.
#[derive(Clone, Debug, PartialEq)]
pub struct CollocationSet {
    pub grid: Grid,
    pub interior: PointSet,
    /// Global grid node of each interior point.
    pub interior_nodes: Vec<usize>,
    pub initial: PointSet,
    pub initial_nodes: Vec<usize>,
    pub initial_targets: Vec<f64>,
    pub boundary: PointSet,
    pub boundary_nodes: Vec<usize>,
    pub boundary_targets: Vec<f64>,
    /// Flagged discontinuity points, filled in by shock detection.
    pub discontinuity: PointSet,
    /// Marks interior points that currently belong to the discontinuity set.
    pub in_discontinuity: Vec<bool>,
    /// Per-point weight `w_j`, indexed by global grid node.
    pub rar_weights: Vec<f64>,
}

impl CollocationSet {
    /// Interior indices that take part in the residual and implicit terms.
    pub fn active_interior(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.interior.len()).filter(move |&j| !self.in_discontinuity[j])
    }

    pub fn reset_weights(&mut self) {
        self.rar_weights.iter_mut().for_each(|w| *w = 1.0);
    }

    /// Clears the discontinuity set and its interior mask.
    pub fn clear_discontinuities(&mut self) {
        self.discontinuity.coords.clear();
        self.in_discontinuity.iter_mut().for_each(|m| *m = false);
    }
}

/// Samples the uniform training grid and classifies every node.
///
/// Nodes at `t = 0` form `P_I`, remaining nodes on the spatial boundary form
/// `P_B`, and the rest form `P_N`. Ordering is time-major, then by spatial
/// index with the first axis slowest.
pub fn sample_grid(spec: &ProblemSpec, nx: usize, nt: usize) -> Result<CollocationSet, ProblemError> {
    let grid = Grid::new(spec, nx, nt)?;
    let di = spec.input_dim();
    let mut interior = PointSet::new(di);
    let mut interior_nodes = Vec::new();
    let mut initial = PointSet::new(di);
    let mut initial_nodes = Vec::new();
    let mut initial_targets = Vec::new();
    let mut boundary = PointSet::new(di);
    let mut boundary_nodes = Vec::new();
    let mut boundary_targets = Vec::new();
    let slice = grid.slice_len();
    for g in 0..grid.len() {
        let k = g / slice;
        let idx = grid.spatial_index(g % slice);
        let p = grid.point(g);
        let (x, t) = p.split_at(spec.dim());
        if k == 0 {
            initial_nodes.push(g);
            initial_targets.push(spec.u0(x));
            initial.push(&p);
        } else if idx.iter().any(|&i| i == 0 || i == nx - 1) {
            boundary_nodes.push(g);
            boundary_targets.push(spec.boundary_value(x, t[0])?);
            boundary.push(&p);
        } else {
            interior_nodes.push(g);
            interior.push(&p);
        }
    }
    let n_int = interior.len();
    let n_nodes = grid.len();
    Ok(CollocationSet {
        grid,
        interior,
        interior_nodes,
        initial,
        initial_nodes,
        initial_targets,
        boundary,
        boundary_nodes,
        boundary_targets,
        discontinuity: PointSet::new(di),
        in_discontinuity: vec![false; n_int],
        rar_weights: vec![1.0; n_nodes],
    })
}
