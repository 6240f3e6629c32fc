//! Exact solutions for the benchmark cases, a Riemann solver for fluxes with
//! monotone characteristic speed, entropy-based wave classification, and
//! the exact discontinuity trajectories.

use std::f64::consts::{PI, SQRT_2};

use thiserror::Error;

use crate::problems::{get_problem, CaseId, Flux, ProblemSpec};

/// Slack allowed when checking that a point lies in the case domain.
const DOMAIN_SLACK: f64 = 1e-12;
/// Equality tolerance for the entropy inequalities.
pub const CONTACT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("point {point:?} lies outside the domain of case {case}")]
    OutOfDomain { case: CaseId, point: Vec<f64> },
    #[error("u_l = u_r = {0} is not a Riemann problem")]
    NotRiemann(f64),
    #[error("characteristic speed is not monotone between {u_l} and {u_r}")]
    NonMonotone { u_l: f64, u_r: f64 },
    #[error("riemann solution needs t > 0, got {0}")]
    NonPositiveTime(f64),
    #[error("implicit solve failed to converge at {point:?}")]
    NonConvergence { point: Vec<f64> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WaveKind {
    Shock,
    Rarefaction,
    ContactDiscontinuity,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WaveClass {
    pub kind: WaveKind,
    /// Jump speed from the Rankine–Hugoniot relation, absent for fans.
    pub speed: Option<f64>,
}

/// Jump speed `(f(u_l) − f(u_r)) / (u_l − u_r)`.
pub fn jump_speed(flux: &Flux, u_l: f64, u_r: f64) -> f64 {
    (flux.f(u_l) - flux.f(u_r)) / (u_l - u_r)
}

/// Classifies the single wave joining `u_l` to `u_r` by the entropy
/// inequalities `λ(u_r) ≤ s ≤ λ(u_l)`.
pub fn classify_wave(flux: &Flux, u_l: f64, u_r: f64) -> WaveClass {
    let s = jump_speed(flux, u_l, u_r);
    let (ll, lr) = (flux.speed(u_l), flux.speed(u_r));
    let tol = CONTACT_TOLERANCE * (1.0 + s.abs());
    let lower_ok = lr <= s + tol;
    let upper_ok = s <= ll + tol;
    if lower_ok && upper_ok {
        let touching = (lr - s).abs() <= tol || (ll - s).abs() <= tol;
        let kind = if touching {
            WaveKind::ContactDiscontinuity
        } else {
            WaveKind::Shock
        };
        return WaveClass {
            kind,
            speed: Some(s),
        };
    }
    WaveClass {
        kind: WaveKind::Rarefaction,
        speed: None,
    }
}

/// Inverts a monotone `λ` on `[lo, hi]` by bisection.
fn invert_speed(flux: &Flux, target: f64, lo: f64, hi: f64) -> f64 {
    let increasing = flux.speed(hi) >= flux.speed(lo);
    let (mut a, mut b) = (lo, hi);
    while b - a > 1e-12 {
        let m = 0.5 * (a + b);
        let below = flux.speed(m) < target;
        if below == increasing {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

fn speed_is_monotone(flux: &Flux, u_l: f64, u_r: f64) -> bool {
    const SAMPLES: usize = 256;
    let (lo, hi) = (u_l.min(u_r), u_l.max(u_r));
    let vals: Vec<f64> = (0..=SAMPLES)
        .map(|i| flux.speed(lo + (hi - lo) * i as f64 / SAMPLES as f64))
        .collect();
    let inc = vals.windows(2).all(|w| w[1] > w[0]);
    let dec = vals.windows(2).all(|w| w[1] < w[0]);
    inc || dec
}

/// Entropy solution of the Riemann problem with a jump at `x0` at time 0.
pub fn riemann_convex(
    flux: &Flux,
    u_l: f64,
    u_r: f64,
    x0: f64,
    x: f64,
    t: f64,
) -> Result<f64, OracleError> {
    if u_l == u_r {
        return Err(OracleError::NotRiemann(u_l));
    }
    if t <= 0.0 {
        return Err(OracleError::NonPositiveTime(t));
    }
    if !speed_is_monotone(flux, u_l, u_r) {
        return Err(OracleError::NonMonotone { u_l, u_r });
    }
    let (ll, lr) = (flux.speed(u_l), flux.speed(u_r));
    let xi = (x - x0) / t;
    if ll > lr {
        let s = jump_speed(flux, u_l, u_r);
        return Ok(if xi <= s { u_l } else { u_r });
    }
    Ok(if xi <= ll {
        u_l
    } else if xi >= lr {
        u_r
    } else {
        invert_speed(flux, xi, u_l.min(u_r), u_l.max(u_r))
    })
}

fn check_domain(spec: &ProblemSpec, point: &[f64]) -> Result<(), OracleError> {
    let d = spec.dim();
    let dom = &spec.domain;
    let inside = point.len() == d + 1
        && point.iter().all(|v| v.is_finite())
        && (0..d).all(|k| {
            point[k] >= dom.lower[k] - DOMAIN_SLACK && point[k] <= dom.upper[k] + DOMAIN_SLACK
        })
        && point[d] >= -DOMAIN_SLACK
        && point[d] <= dom.t_end + DOMAIN_SLACK;
    if inside {
        Ok(())
    } else {
        Err(OracleError::OutOfDomain {
            case: spec.id,
            point: point.to_vec(),
        })
    }
}

/// Exact solution of a case at a space-time point.
///
/// At a discontinuity the value of the left state is returned.
pub fn exact(case: CaseId, point: &[f64]) -> Result<f64, OracleError> {
    let spec = get_problem(case);
    check_domain(&spec, point)?;
    let t = point[spec.dim()].max(0.0);
    let x = point[0];
    Ok(match case {
        CaseId::C1A => return exact_1a(x, t),
        CaseId::C1B => {
            let r = (1.0 + 3.0 * t).sqrt();
            if x > -r && x <= 3.0 * r {
                3.0 * x / (1.0 + 3.0 * t)
            } else {
                0.0
            }
        }
        CaseId::C2A => {
            if t < 0.5 {
                if x <= 12.0 * t - 5.0 {
                    1.0
                } else if x <= -6.0 * t + 4.0 {
                    9.0
                } else {
                    19.0
                }
            } else if x <= 2.0 * t {
                1.0
            } else {
                19.0
            }
        }
        CaseId::C2B => exact_2b(x, t),
        CaseId::C3A => {
            let front = 1.0 + 0.5 * (SQRT_2 + 1.0) * t;
            if x <= 1.0 {
                1.0
            } else if x <= front {
                let xi = (x - 1.0) / t;
                let r = (4.0 * xi + 1.0).sqrt();
                0.5 * (1.0 + (1.0 - 4.0 * xi / (2.0 * xi + 1.0 + r)).sqrt())
            } else {
                0.0
            }
        }
        CaseId::C3B => {
            if t == 0.0 {
                spec.u0(&[x])
            } else if x <= t {
                -2.0
            } else if x < 2.25 * t {
                (x / t).sqrt()
            } else if x <= 2.25 * t + 1.0 {
                1.5
            } else if x < 4.0 * t + 1.0 {
                ((x - 1.0) / t).sqrt()
            } else {
                2.0
            }
        }
        CaseId::C2D => 5.0 - 2.0 * exact_2b(x.max(point[1]), t),
    })
}

/// Solution of case 2B, also the building block of the 2D case.
fn exact_2b(x: f64, t: f64) -> f64 {
    let fan = |x: f64, t: f64| 0.5 * (5.0 - (x + 2.0) / t);
    if t == 0.0 {
        if x <= -2.0 {
            2.0
        } else if x <= 2.0 {
            0.0
        } else {
            4.0
        }
    } else if t < 1.0 {
        if x <= t - 2.0 {
            2.0
        } else if x <= 5.0 * t - 2.0 {
            fan(x, t)
        } else if x <= t + 2.0 {
            0.0
        } else {
            4.0
        }
    } else if t < 4.0 {
        if x <= t - 2.0 {
            2.0
        } else if x <= -2.0 - 3.0 * t + 8.0 * t.sqrt() {
            fan(x, t)
        } else {
            4.0
        }
    } else if x <= 6.0 - t {
        2.0
    } else {
        4.0
    }
}

fn u0_1a(xi: f64) -> f64 {
    (PI * xi).sin() + 0.5
}

/// Case 1A: solve `x = ξ + u0(ξ) t` for the characteristic foot on the
/// branch selected by the shock `x = t/2 + 1`, then `u = u0(ξ)`.
fn exact_1a(x: f64, t: f64) -> Result<f64, OracleError> {
    if t == 0.0 {
        return Ok(u0_1a(x));
    }
    let residual = |xi: f64| xi + u0_1a(xi) * t - x;
    let slope = |xi: f64| 1.0 + PI * t * (PI * xi).cos();
    let (mut lo, mut hi) = (x - 1.5 * t, x + 0.5 * t);
    if PI * t > 1.0 {
        // the foot map folds between ξ_m and ξ_m'
        let a = (1.0 / (PI * t)).acos() / PI;
        if x <= 1.0 + 0.5 * t {
            hi = hi.min(1.0 - a);
        } else {
            lo = lo.max(1.0 + a);
        }
    }
    let mut xi = 0.5 * (lo + hi);
    let mut converged = false;
    for _ in 0..200 {
        let r = residual(xi);
        if r.abs() < 1e-14 {
            converged = true;
            break;
        }
        if r < 0.0 {
            lo = xi;
        } else {
            hi = xi;
        }
        let newton = xi - r / slope(xi);
        xi = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo < 1e-15 {
            converged = residual(xi).abs() < 1e-12;
            break;
        }
    }
    let u = u0_1a(xi);
    if !converged || (u - (PI * (x - u * t)).sin() - 0.5).abs() >= 1e-10 {
        return Err(OracleError::NonConvergence { point: vec![x, t] });
    }
    Ok(u)
}

/// Exact solution sampled on the uniform evaluation grid, time-major.
pub fn exact_grid(case: CaseId, grid: &crate::problems::Grid) -> Result<Vec<f64>, OracleError> {
    (0..grid.len()).map(|g| exact(case, &grid.point(g))).collect()
}

/// Exact discontinuity trajectories of a case.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactShock {
    pub case: CaseId,
    /// Time interval on which at least one discontinuity exists.
    pub t_start: f64,
    pub t_end: f64,
    /// Times where a trajectory has a kink or tracks merge.
    pub kinks: Vec<f64>,
}

/// Discontinuity trajectories of a case (shocks, plus the contact of 3B).
pub fn exact_shocks(case: CaseId) -> ExactShock {
    let t_end = get_problem(case).domain.t_end;
    let (t_start, kinks) = match case {
        CaseId::C1A => (1.0 / PI, vec![]),
        CaseId::C2A => (0.0, vec![0.5]),
        CaseId::C2B | CaseId::C2D => (0.0, vec![1.0, 4.0]),
        _ => (0.0, vec![]),
    };
    ExactShock {
        case,
        t_start,
        t_end,
        kinks,
    }
}

/// Shock of case 2B and trajectory `γ(t)` of the 2D case.
fn gamma_2b(t: f64) -> f64 {
    if t < 1.0 {
        t + 2.0
    } else if t < 4.0 {
        -2.0 - 3.0 * t + 8.0 * t.sqrt()
    } else {
        6.0 - t
    }
}

impl ExactShock {
    /// Discontinuity positions at time `t`, ascending. For the 2D case this
    /// is `γ(t)`, the corner of the L-shaped front.
    pub fn positions(&self, t: f64) -> Vec<f64> {
        if t < self.t_start || (t == 0.0 && self.case != CaseId::C2A) {
            return vec![];
        }
        match self.case {
            CaseId::C1A => {
                if t > self.t_start {
                    vec![0.5 * t + 1.0]
                } else {
                    vec![]
                }
            }
            CaseId::C1B => {
                let r = (1.0 + 3.0 * t).sqrt();
                vec![-r, 3.0 * r]
            }
            CaseId::C2A => {
                if t < 0.5 {
                    vec![12.0 * t - 5.0, -6.0 * t + 4.0]
                } else {
                    vec![2.0 * t]
                }
            }
            CaseId::C2B | CaseId::C2D => vec![gamma_2b(t)],
            CaseId::C3A => vec![1.0 + 0.5 * (SQRT_2 + 1.0) * t],
            CaseId::C3B => vec![t],
        }
    }

    /// Level set `Φ(x, y, t) = (x − γ)(y − γ)` on the branch `x, y ≤ γ`.
    /// Returns `None` off that branch or for one-dimensional cases.
    pub fn phi(&self, x: f64, y: f64, t: f64) -> Option<f64> {
        if self.case != CaseId::C2D {
            return None;
        }
        let g = gamma_2b(t);
        (x <= g && y <= g).then(|| (x - g) * (y - g))
    }

    /// Distance from `t` to the nearest kink.
    pub fn kink_distance(&self, t: f64) -> f64 {
        self.kinks
            .iter()
            .map(|k| (t - k).abs())
            .fold(f64::INFINITY, f64::min)
    }
}
