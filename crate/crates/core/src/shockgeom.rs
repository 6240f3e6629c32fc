//! Turns indicator flags on a predicted solution into the discontinuity set
//! `P_D`, fitted shock trajectories with speeds, and Rankine–Hugoniot
//! targets with side samples.
//!
//! In 1D, flagged nodes are clustered per time slice, cluster centroids are
//! linked across adjacent slices into tracks, and each track is a
//! piecewise-linear `γ(t)` whose speed comes from finite differences. In 2D
//! every flagged cell gets a local front normal from a least-squares line
//! fit and a speed from the normal displacement of the front between
//! slices.

use thiserror::Error;

use crate::indicator::{detect_1d, detect_2d, FlagGrid, IndicatorError, IndicatorParams, Mesh1D};
use crate::problems::{Grid, PointSet, ProblemSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShockGeomError {
    #[error("side samples at x = {x} collapse to one point after clipping")]
    DegenerateSides { x: f64 },
    #[error("time {t} lies outside the curve range [{t0}, {t1}]")]
    OutOfRange { t: f64, t0: f64, t1: f64 },
    #[error(transparent)]
    Indicator(#[from] IndicatorError),
    #[error("{found} values supplied for a grid of {expected} nodes")]
    LengthMismatch { expected: usize, found: usize },
}

/// Indicator flags for every time level of a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct FlagField {
    pub grid: Grid,
    pub slices: Vec<FlagGrid>,
}

/// Runs the indicator on every time slice of grid-ordered values, treating
/// each node as the midpoint of a cell.
pub fn flag_field(
    spec: &ProblemSpec,
    grid: &Grid,
    values: &[f64],
    params: &IndicatorParams,
) -> Result<FlagField, ShockGeomError> {
    if values.len() != grid.len() {
        return Err(ShockGeomError::LengthMismatch {
            expected: grid.len(),
            found: values.len(),
        });
    }
    let meshes: Vec<Mesh1D> = (0..grid.dim)
        .map(|a| Mesh1D::centred_on_nodes(grid.lower[a], grid.upper[a], grid.nx))
        .collect::<Result<_, _>>()?;
    let speed = |u: f64| spec.flux.speed(u);
    let slices = values
        .chunks_exact(grid.slice_len())
        .map(|slice| match grid.dim {
            1 => detect_1d(slice, &meshes[0], speed, params),
            _ => detect_2d(slice, &meshes[0], &meshes[1], speed, speed, params),
        })
        .collect::<Result<_, _>>()?;
    Ok(FlagField {
        grid: grid.clone(),
        slices,
    })
}

/// Flagged grid nodes with their coordinates.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DiscontinuitySet {
    pub points: PointSet,
    /// Global grid node of each point.
    pub nodes: Vec<usize>,
}

impl DiscontinuitySet {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Collects the centres of flagged cells at every time slice.
pub fn build_pd(field: &FlagField) -> DiscontinuitySet {
    let grid = &field.grid;
    let mut set = DiscontinuitySet {
        points: PointSet::new(grid.dim + 1),
        nodes: Vec::new(),
    };
    for (k, slice) in field.slices.iter().enumerate() {
        for s in slice.flagged() {
            let g = k * grid.slice_len() + s;
            set.points.push(&grid.point(g));
            set.nodes.push(g);
        }
    }
    set
}

/// Piecewise-linear trajectory of one tracked shock.
#[derive(Clone, Debug, PartialEq)]
pub struct ShockCurve {
    /// `(t_k, x_k)` with strictly increasing `t_k`.
    pub samples: Vec<(f64, f64)>,
    /// Finite-difference slope at each sample over two intervals (central
    /// inside, one-sided at the ends); empty for one-sample tracks.
    pub speeds: Vec<f64>,
}

impl ShockCurve {
    fn from_samples(samples: Vec<(f64, f64)>) -> Self {
        let n = samples.len();
        let speeds = if n < 2 {
            Vec::new()
        } else {
            // end stencils span two intervals, like the central ones
            let reach = (n - 1).min(2);
            (0..n)
                .map(|k| {
                    let (a, b) = if k == 0 {
                        (0, reach)
                    } else if k == n - 1 {
                        (n - 1 - reach, n - 1)
                    } else {
                        (k - 1, k + 1)
                    };
                    (samples[b].1 - samples[a].1) / (samples[b].0 - samples[a].0)
                })
                .collect()
        };
        Self { samples, speeds }
    }

    /// Whether the track has a speed estimate and can feed the RH loss.
    pub fn is_usable(&self) -> bool {
        !self.speeds.is_empty()
    }

    pub fn t_range(&self) -> (f64, f64) {
        (self.samples[0].0, self.samples[self.samples.len() - 1].0)
    }

    fn segment(&self, t: f64) -> Result<usize, ShockGeomError> {
        let (t0, t1) = self.t_range();
        if t < t0 || t > t1 {
            return Err(ShockGeomError::OutOfRange { t, t0, t1 });
        }
        Ok(self
            .samples
            .windows(2)
            .position(|w| t <= w[1].0)
            .unwrap_or(0))
    }

    /// Interpolated position `γ(t)`.
    pub fn position(&self, t: f64) -> Result<f64, ShockGeomError> {
        let k = self.segment(t)?;
        if self.samples.len() == 1 {
            return Ok(self.samples[0].1);
        }
        let (ta, xa) = self.samples[k];
        let (tb, xb) = self.samples[k + 1];
        Ok(xa + (xb - xa) * (t - ta) / (tb - ta))
    }

    /// Speed interpolated between sample speeds.
    pub fn speed(&self, t: f64) -> Result<f64, ShockGeomError> {
        let k = self.segment(t)?;
        if !self.is_usable() {
            return Err(ShockGeomError::OutOfRange {
                t,
                t0: f64::NAN,
                t1: f64::NAN,
            });
        }
        let (ta, _) = self.samples[k];
        let (tb, _) = self.samples[k + 1];
        let w = (t - ta) / (tb - ta);
        Ok(self.speeds[k] * (1.0 - w) + self.speeds[k + 1] * w)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitParams {
    /// Spatial cell size of the flag grid.
    pub cell: f64,
    /// Flagged positions further apart than this many cells start a new
    /// cluster.
    pub gap_cells: f64,
    /// Largest centroid displacement between adjacent slices that still
    /// continues a track.
    pub link_radius: f64,
}

impl FitParams {
    /// Linking radius wide enough for the fastest admissible shock to move
    /// between slices, and never below five cells.
    pub fn for_problem(spec: &ProblemSpec, grid: &Grid) -> Self {
        let cell = grid.dx(0);
        Self {
            cell,
            gap_cells: 3.0,
            link_radius: (5.0 * cell).max(max_speed(spec) * grid.dt() + 2.0 * cell),
        }
    }
}

/// Largest `|λ(u)|` over the range of the initial data.
pub fn max_speed(spec: &ProblemSpec) -> f64 {
    const SAMPLES: usize = 512;
    (0..=SAMPLES)
        .map(|i| {
            let u = spec.u0_inf + (spec.u0_sup - spec.u0_inf) * i as f64 / SAMPLES as f64;
            spec.flux.speed(u).abs()
        })
        .fold(0.0, f64::max)
}

/// Fitted curves and, for each discontinuity point, the curve it fed.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CurveFit {
    pub curves: Vec<ShockCurve>,
    pub membership: Vec<Option<usize>>,
}

/// Clusters 1D discontinuity points per time slice and links cluster
/// centroids into tracks.
pub fn fit_curves(pd: &PointSet, params: &FitParams) -> CurveFit {
    let n = pd.len();
    if n == 0 {
        return CurveFit::default();
    }
    // group by time, then by x, keeping original indices
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let (pa, pb) = (pd.point(a), pd.point(b));
        pa[1].total_cmp(&pb[1]).then(pa[0].total_cmp(&pb[0]))
    });

    struct Cluster {
        t: f64,
        x: f64,
        members: Vec<usize>,
    }
    let mut slices: Vec<Vec<Cluster>> = Vec::new();
    let gap = params.gap_cells * params.cell;
    for &j in &order {
        let (x, t) = (pd.point(j)[0], pd.point(j)[1]);
        let new_slice = slices.last().is_none_or(|s| s[0].t != t);
        if new_slice {
            slices.push(Vec::new());
        }
        let slice = slices.last_mut().expect("slice exists");
        let extend = slice.last().is_some_and(|c| {
            let last = pd.point(*c.members.last().expect("non-empty"))[0];
            x - last <= gap
        });
        if extend {
            slice.last_mut().expect("cluster").members.push(j);
        } else {
            slice.push(Cluster {
                t,
                x: 0.0,
                members: vec![j],
            });
        }
    }
    for c in slices.iter_mut().flatten() {
        c.x = c.members.iter().map(|&j| pd.point(j)[0]).sum::<f64>() / c.members.len() as f64;
    }

    // tracks: list of (cluster slice index, cluster index)
    let mut tracks: Vec<Vec<(usize, usize)>> = Vec::new();
    let mut open: Vec<usize> = Vec::new();
    for (si, slice) in slices.iter().enumerate() {
        let adjacent = si > 0;
        let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
        if adjacent {
            for &tr in &open {
                let &(ps, pc) = tracks[tr].last().expect("track non-empty");
                if ps + 1 != si {
                    continue;
                }
                let prev = &slices[ps][pc];
                for (ci, c) in slice.iter().enumerate() {
                    let d = (c.x - prev.x).abs();
                    if d <= params.link_radius {
                        candidates.push((d, tr, ci));
                    }
                }
            }
        }
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut used_track = vec![false; tracks.len()];
        let mut assigned = vec![None; slice.len()];
        for (_, tr, ci) in candidates {
            if !used_track[tr] && assigned[ci].is_none() {
                used_track[tr] = true;
                assigned[ci] = Some(tr);
            }
        }
        let mut next_open = Vec::new();
        for (ci, a) in assigned.into_iter().enumerate() {
            let tr = match a {
                Some(tr) => tr,
                None => {
                    tracks.push(Vec::new());
                    tracks.len() - 1
                }
            };
            tracks[tr].push((si, ci));
            next_open.push(tr);
        }
        next_open.sort_unstable();
        open = next_open;
    }

    let mut membership = vec![None; n];
    let curves = tracks
        .iter()
        .enumerate()
        .map(|(ti, tr)| {
            let samples = tr
                .iter()
                .map(|&(si, ci)| {
                    let c = &slices[si][ci];
                    for &j in &c.members {
                        membership[j] = Some(ti);
                    }
                    (c.t, c.x)
                })
                .collect();
            ShockCurve::from_samples(samples)
        })
        .collect();
    CurveFit { curves, membership }
}

/// Points straddling a discontinuity along its normal.
#[derive(Clone, Debug, PartialEq)]
pub struct SideSample {
    pub left: Vec<f64>,
    pub right: Vec<f64>,
    pub h: f64,
}

/// `(γ(t) − h, t)` and `(γ(t) + h, t)`, clipped to `[p, q]`.
pub fn side_samples(
    curve: &ShockCurve,
    t: f64,
    h: f64,
    p: f64,
    q: f64,
) -> Result<SideSample, ShockGeomError> {
    let x = curve.position(t)?;
    let l = (x - h).clamp(p, q);
    let r = (x + h).clamp(p, q);
    if r <= l {
        return Err(ShockGeomError::DegenerateSides { x });
    }
    Ok(SideSample {
        left: vec![l, t],
        right: vec![r, t],
        h,
    })
}

/// Default side offset: two grid spacings.
pub fn default_offset(grid: &Grid) -> f64 {
    2.0 * grid.dx(0)
}

/// One Rankine–Hugoniot constraint: the normal speed `s` that the jump
/// between `left` and `right` must travel at.
#[derive(Clone, Debug, PartialEq)]
pub struct RhTarget {
    /// Grid node of the discontinuity point.
    pub node: usize,
    pub point: Vec<f64>,
    pub normal: Vec<f64>,
    pub speed: f64,
    pub sides: SideSample,
}

/// RH targets for 1D discontinuity points that belong to usable tracks.
pub fn rh_targets_1d(
    pd: &DiscontinuitySet,
    fit: &CurveFit,
    h: f64,
    p: f64,
    q: f64,
) -> Vec<RhTarget> {
    let mut out = Vec::new();
    for (j, m) in fit.membership.iter().enumerate() {
        let Some(ci) = *m else { continue };
        let curve = &fit.curves[ci];
        if !curve.is_usable() {
            continue;
        }
        let t = pd.points.point(j)[1];
        let (Ok(speed), Ok(sides)) = (curve.speed(t), side_samples(curve, t, h, p, q)) else {
            continue;
        };
        out.push(RhTarget {
            node: pd.nodes[j],
            point: pd.points.point(j).to_vec(),
            normal: vec![1.0],
            speed,
            sides,
        });
    }
    out
}

/// Local front normal and normal speed at one flagged 2D cell.
#[derive(Clone, Debug, PartialEq)]
pub struct FrontEstimate {
    pub cell: (usize, usize),
    pub normal: [f64; 2],
    pub speed: f64,
}

/// Unit normal of the least-squares line through `pts`, oriented with a
/// positive first nonzero component. `None` when the spread is isotropic.
fn fit_normal(pts: &[[f64; 2]]) -> Option<[f64; 2]> {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p[0]).sum::<f64>() / n;
    let my = pts.iter().map(|p| p[1]).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in pts {
        let (dx, dy) = (p[0] - mx, p[1] - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    // smallest eigenvector of [[sxx, sxy], [sxy, syy]]
    let tr = sxx + syy;
    let disc = ((sxx - syy) * (sxx - syy) + 4.0 * sxy * sxy).sqrt();
    if disc <= 1e-12 * tr.max(1e-300) {
        return None;
    }
    let lam = 0.5 * (tr - disc);
    let (a, b) = if (sxx - lam).abs() >= (syy - lam).abs() {
        (-sxy, sxx - lam)
    } else {
        (syy - lam, -sxy)
    };
    let norm = a.hypot(b);
    let (mut nx, mut ny) = (a / norm, b / norm);
    if nx < 0.0 || (nx == 0.0 && ny < 0.0) {
        nx = -nx;
        ny = -ny;
    }
    Some([nx, ny])
}

/// Normal and normal speed for each flagged cell of `flags_now`.
///
/// The normal comes from the flagged cells in the surrounding 5×5 window;
/// cells with fewer than two flagged neighbours are skipped. The speed is
/// the shift of the mean normal offset of nearby front cells from this
/// slice to `flags_next`, divided by `dt`.
pub fn rh_target_2d(
    flags_now: &FlagGrid,
    flags_next: &FlagGrid,
    xs: &[f64],
    ys: &[f64],
    dt: f64,
    search_radius: f64,
) -> Vec<FrontEstimate> {
    let (nx, ny) = (xs.len(), ys.len());
    let cell = (xs[1] - xs[0]).abs().max((ys[1] - ys[0]).abs());
    let flagged_next: Vec<[f64; 2]> = flags_next
        .flagged()
        .map(|c| [xs[c / ny], ys[c % ny]])
        .collect();
    let mut out = Vec::new();
    for c in flags_now.flagged() {
        let (i, j) = (c / ny, c % ny);
        let mut window = Vec::new();
        for ii in i.saturating_sub(2)..(i + 3).min(nx) {
            for jj in j.saturating_sub(2)..(j + 3).min(ny) {
                if flags_now.flags[ii * ny + jj] {
                    window.push([xs[ii], ys[jj]]);
                }
            }
        }
        if window.len() < 3 {
            continue;
        }
        let Some(n) = fit_normal(&window) else { continue };
        let p = [xs[i], ys[j]];
        let offsets = |pts: &mut dyn Iterator<Item = [f64; 2]>, reach: f64| -> Option<f64> {
            let mut sum = 0.0;
            let mut count = 0usize;
            for q in pts {
                let (dx, dy) = (q[0] - p[0], q[1] - p[1]);
                let along = dx * n[0] + dy * n[1];
                let perp = (dx * n[1] - dy * n[0]).abs();
                if perp <= cell && along.abs() <= reach {
                    sum += along;
                    count += 1;
                }
            }
            (count > 0).then(|| sum / count as f64)
        };
        let now = offsets(&mut window.iter().copied(), 2.0 * cell);
        let next = offsets(&mut flagged_next.iter().copied(), search_radius);
        if let (Some(a), Some(b)) = (now, next) {
            out.push(FrontEstimate {
                cell: (i, j),
                normal: n,
                speed: (b - a) / dt,
            });
        }
    }
    out
}

/// Full discontinuity analysis of a flag field: `P_D` plus RH targets.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ShockGeometry {
    pub pd: DiscontinuitySet,
    pub curves: Vec<ShockCurve>,
    pub targets: Vec<RhTarget>,
}

/// Builds `P_D`, tracks and RH targets from flags on the training grid.
pub fn analyze(spec: &ProblemSpec, field: &FlagField, h: f64) -> ShockGeometry {
    let grid = &field.grid;
    let pd = build_pd(field);
    if grid.dim == 1 {
        let fit = fit_curves(&pd.points, &FitParams::for_problem(spec, grid));
        let targets = rh_targets_1d(&pd, &fit, h, grid.lower[0], grid.upper[0]);
        return ShockGeometry {
            pd,
            curves: fit.curves,
            targets,
        };
    }
    let xs: Vec<f64> = (0..grid.nx).map(|i| grid.x(0, i)).collect();
    let ys: Vec<f64> = (0..grid.nx).map(|i| grid.x(1, i)).collect();
    let reach = max_speed(spec) * grid.dt() + 2.0 * grid.dx(0);
    let mut targets = Vec::new();
    let last = field.slices.len() - 1;
    for k in 0..field.slices.len() {
        // the last slice looks back, with the displacement reversed
        let (a, b, sign) = if k < last { (k, k + 1, 1.0) } else { (k, k - 1, -1.0) };
        let t = grid.t(k);
        for est in rh_target_2d(&field.slices[a], &field.slices[b], &xs, &ys, grid.dt(), reach) {
            let (i, j) = est.cell;
            let (x, y) = (xs[i], ys[j]);
            let n = est.normal;
            let clip = |v: f64, axis: usize| v.clamp(grid.lower[axis], grid.upper[axis]);
            let left = vec![clip(x - h * n[0], 0), clip(y - h * n[1], 1), t];
            let right = vec![clip(x + h * n[0], 0), clip(y + h * n[1], 1), t];
            if left[..2] == right[..2] {
                continue;
            }
            targets.push(RhTarget {
                node: k * grid.slice_len() + i * grid.nx + j,
                point: vec![x, y, t],
                normal: n.to_vec(),
                speed: sign * est.speed,
                sides: SideSample { left, right, h },
            });
        }
    }
    ShockGeometry {
        pd,
        curves: Vec::new(),
        targets,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_points(tracks: &[(f64, f64)], times: &[f64]) -> PointSet {
        let mut ps = PointSet::new(2);
        for &t in times {
            for &(slope, icpt) in tracks {
                ps.push(&[slope * t + icpt, t]);
            }
        }
        ps
    }

    fn params(cell: f64) -> FitParams {
        FitParams {
            cell,
            gap_cells: 3.0,
            link_radius: 5.0 * cell,
        }
    }

    #[test]
    fn straight_track_has_unit_speed() {
        let times: Vec<f64> = (1..=10).map(|k| k as f64 / 10.0).collect();
        let ps = line_points(&[(1.0, 2.0)], &times);
        let fit = fit_curves(&ps, &params(0.05));
        assert_eq!(fit.curves.len(), 1);
        assert!(fit.curves[0].speeds.iter().all(|s| (s - 1.0).abs() < 1e-9));
        assert!(fit.membership.iter().all(|m| *m == Some(0)));
    }

    #[test]
    fn parallel_tracks_stay_apart() {
        let times: Vec<f64> = (1..=10).map(|k| k as f64 / 10.0).collect();
        let ps = line_points(&[(1.0, 0.0), (1.0, 3.0)], &times);
        let fit = fit_curves(&ps, &params(0.05));
        assert_eq!(fit.curves.len(), 2);
        for c in &fit.curves {
            assert_eq!(c.samples.len(), 10);
        }
    }

    #[test]
    fn single_slice_track_is_unusable() {
        let ps = line_points(&[(0.0, 1.0)], &[0.5]);
        let fit = fit_curves(&ps, &params(0.05));
        assert_eq!(fit.curves.len(), 1);
        assert!(!fit.curves[0].is_usable());
        let pd = DiscontinuitySet {
            nodes: vec![0],
            points: ps,
        };
        let targets = rh_targets_1d(&pd, &fit, 0.1, 0.0, 2.0);
        assert!(targets.is_empty());
        assert!(fit_curves(&PointSet::new(2), &params(0.05)).curves.is_empty());
    }

    #[test]
    fn side_sample_examples() {
        let c = ShockCurve::from_samples(vec![(0.0, 2.0), (1.0, 2.0)]);
        let s = side_samples(&c, 0.5, 0.05, 0.0, 4.0).unwrap();
        assert_eq!(s.left, vec![1.95, 0.5]);
        assert_eq!(s.right, vec![2.05, 0.5]);
        let edge = ShockCurve::from_samples(vec![(0.0, 0.01), (1.0, 0.01)]);
        let s = side_samples(&edge, 0.5, 0.05, 0.0, 4.0).unwrap();
        assert_eq!(s.left[0], 0.0);
        let at_edge = ShockCurve::from_samples(vec![(0.0, 0.0), (1.0, 0.0)]);
        assert!(side_samples(&at_edge, 0.5, 0.05, 0.0, 0.0).is_err());
    }

    #[test]
    fn planar_front_normal_and_speed() {
        let n = 128;
        let cell = 10.0 / n as f64;
        let xs: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) * cell).collect();
        let ys = xs.clone();
        let field = |front: f64| {
            let u: Vec<f64> = (0..n * n)
                .map(|c| if xs[c / n] < front { 2.0 } else { 0.0 })
                .collect();
            let m = Mesh1D::uniform(0.0, 10.0, n).unwrap();
            detect_2d(&u, &m, &m, |u| u, |u| u, &IndicatorParams::default()).unwrap()
        };
        let (f0, f1) = (field(2.0), field(3.0));
        let est = rh_target_2d(&f0, &f1, &xs, &ys, 1.0, 2.0);
        assert!(!est.is_empty());
        for e in &est {
            assert!((e.normal[0] - 1.0).abs() < 1e-12 && e.normal[1].abs() < 1e-12);
            assert!((e.speed - 1.0).abs() < 0.1, "{}", e.speed);
        }
        let still = rh_target_2d(&f0, &f0, &xs, &ys, 1.0, 2.0);
        assert!(still.iter().all(|e| e.speed.abs() < 1e-12));
    }

    #[test]
    fn isolated_cell_is_skipped() {
        let mut flags = FlagGrid {
            shape: vec![10, 10],
            outputs: vec![0.0; 100],
            flags: vec![false; 100],
        };
        flags.flags[55] = true;
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert!(rh_target_2d(&flags, &flags, &xs, &xs, 1.0, 3.0).is_empty());
    }
}
