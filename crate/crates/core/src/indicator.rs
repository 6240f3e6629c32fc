//! Artificial-neuron discontinuity indicator.
//!
//! A single sigmoid unit reads the difference of size-weighted
//! characteristic averages on either side of a cell and the local mesh size:
//! `out = σ(W (λ̄_L − λ̄_R) + M Δx + C)`. A cell is flagged when `out > 0.5`.
//! Cell averages of `λ(u)` are replaced by their midpoint values, and
//! two-dimensional fields are handled by taking the larger of the x-sweep and
//! y-sweep outputs.

use thiserror::Error;

use crate::diffengine::sigmoid;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IndicatorError {
    #[error("indicator needs at least 3 cells per axis, got {0}")]
    TooFewCells(usize),
    #[error("mesh edges must be strictly increasing")]
    NonMonotoneMesh,
    #[error("{values} values supplied for {cells} cells")]
    LengthMismatch { values: usize, cells: usize },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IndicatorParams {
    pub w: f64,
    pub m: f64,
    pub c: f64,
}

impl Default for IndicatorParams {
    fn default() -> Self {
        Self {
            w: 10.0,
            m: -12.0,
            c: -1.0,
        }
    }
}

/// Cell partition of an interval.
#[derive(Clone, Debug, PartialEq)]
pub struct Mesh1D {
    edges: Vec<f64>,
}

impl Mesh1D {
    pub fn new(edges: Vec<f64>) -> Result<Self, IndicatorError> {
        if edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(IndicatorError::NonMonotoneMesh);
        }
        Ok(Self { edges })
    }

    /// `cells` equal cells partitioning `[p, q]`.
    pub fn uniform(p: f64, q: f64, cells: usize) -> Result<Self, IndicatorError> {
        let h = (q - p) / cells as f64;
        Self::new((0..=cells).map(|i| p + i as f64 * h).collect())
    }

    /// Cells centred on equally spaced nodes, so each node is a midpoint.
    pub fn centred_on_nodes(p: f64, q: f64, nodes: usize) -> Result<Self, IndicatorError> {
        if nodes < 2 {
            return Err(IndicatorError::TooFewCells(nodes));
        }
        let h = (q - p) / (nodes - 1) as f64;
        Self::new((0..=nodes).map(|i| p + (i as f64 - 0.5) * h).collect())
    }

    pub fn len(&self) -> usize {
        self.edges.len().saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn center(&self, j: usize) -> f64 {
        0.5 * (self.edges[j] + self.edges[j + 1])
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.len()).map(|j| self.center(j)).collect()
    }

    pub fn size(&self, j: usize) -> f64 {
        self.edges[j + 1] - self.edges[j]
    }
}

/// Raw indicator outputs and flags over a 1D or 2D cell array.
#[derive(Clone, Debug, PartialEq)]
pub struct FlagGrid {
    /// Cells per axis; row-major with the first axis slowest.
    pub shape: Vec<usize>,
    pub outputs: Vec<f64>,
    pub flags: Vec<bool>,
}

impl FlagGrid {
    fn from_outputs(shape: Vec<usize>, outputs: Vec<f64>) -> Self {
        let flags = outputs.iter().map(|&o| o > 0.5).collect();
        Self {
            shape,
            outputs,
            flags,
        }
    }

    pub fn flagged(&self) -> impl Iterator<Item = usize> + '_ {
        self.flags
            .iter()
            .enumerate()
            .filter_map(|(i, &f)| f.then_some(i))
    }

    pub fn count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }
}

pub fn an_out(lambda_bar_l: f64, lambda_bar_r: f64, dx: f64, params: &IndicatorParams) -> f64 {
    sigmoid(params.w * (lambda_bar_l - lambda_bar_r) + params.m * dx + params.c)
}

/// Indicator outputs along one line of cells given midpoint speeds.
fn sweep(lam: &[f64], mesh: &Mesh1D, params: &IndicatorParams) -> Vec<f64> {
    let n = lam.len();
    // ghost cells replicate their interior neighbour
    let at = |j: isize| -> (f64, f64) {
        let k = j.clamp(0, n as isize - 1) as usize;
        (lam[k], mesh.size(k))
    };
    (0..n as isize)
        .map(|j| {
            let (lm, hm) = at(j - 1);
            let (l0, h0) = at(j);
            let (lp, hp) = at(j + 1);
            let bar_l = (hm * lm + h0 * l0) / (hm + h0);
            let bar_r = (hp * lp + h0 * l0) / (hp + h0);
            let dx = hm.max(h0).max(hp);
            an_out(bar_l, bar_r, dx, params)
        })
        .collect()
}

/// Flags the cells of a 1D slice from midpoint values `values[j] = u(x_j)`.
pub fn detect_1d(
    values: &[f64],
    mesh: &Mesh1D,
    lambda: impl Fn(f64) -> f64,
    params: &IndicatorParams,
) -> Result<FlagGrid, IndicatorError> {
    let n = mesh.len();
    if n < 3 {
        return Err(IndicatorError::TooFewCells(n));
    }
    if values.len() != n {
        return Err(IndicatorError::LengthMismatch {
            values: values.len(),
            cells: n,
        });
    }
    let lam: Vec<f64> = values.iter().map(|&u| lambda(u)).collect();
    Ok(FlagGrid::from_outputs(vec![n], sweep(&lam, mesh, params)))
}

/// Flags the cells of a 2D slice, `values[i * ny + j] = u(x_i, y_j)`, by
/// the larger of the per-axis outputs.
pub fn detect_2d(
    values: &[f64],
    mesh_x: &Mesh1D,
    mesh_y: &Mesh1D,
    lambda_x: impl Fn(f64) -> f64,
    lambda_y: impl Fn(f64) -> f64,
    params: &IndicatorParams,
) -> Result<FlagGrid, IndicatorError> {
    let (nx, ny) = (mesh_x.len(), mesh_y.len());
    if nx < 3 || ny < 3 {
        return Err(IndicatorError::TooFewCells(nx.min(ny)));
    }
    if values.len() != nx * ny {
        return Err(IndicatorError::LengthMismatch {
            values: values.len(),
            cells: nx * ny,
        });
    }
    let mut out = vec![0.0; nx * ny];
    let mut line = Vec::with_capacity(nx.max(ny));
    for j in 0..ny {
        line.clear();
        line.extend((0..nx).map(|i| lambda_x(values[i * ny + j])));
        for (i, o) in sweep(&line, mesh_x, params).into_iter().enumerate() {
            out[i * ny + j] = o;
        }
    }
    for i in 0..nx {
        line.clear();
        line.extend((0..ny).map(|j| lambda_y(values[i * ny + j])));
        for (j, o) in sweep(&line, mesh_y, params).into_iter().enumerate() {
            let cell = &mut out[i * ny + j];
            *cell = cell.max(o);
        }
    }
    Ok(FlagGrid::from_outputs(vec![nx, ny], out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn burgers(u: f64) -> f64 {
        u
    }

    #[test]
    fn an_out_examples() {
        let p = IndicatorParams::default();
        assert!(an_out(2.0, 0.0, 0.1, &p) > 0.9999);
        assert!((an_out(2.0, 0.0, 0.1, &p) - sigmoid(17.8)).abs() < 1e-15);
        assert!(an_out(1.0, 1.0, 0.3, &p) < sigmoid(-1.0));
        assert!((an_out(0.1, 0.0, 0.1, &p) - sigmoid(-1.2)).abs() < 1e-15);
        assert!(an_out(0.1, 0.0, 0.1, &p) < 0.5);
    }

    #[test]
    fn step_flags_adjacent_cells_only() {
        let mesh = Mesh1D::uniform(-1.0, 1.0, 200).unwrap();
        let u: Vec<f64> = mesh.centers().iter().map(|&x| if x < 0.0 { 2.0 } else { 0.0 }).collect();
        let f = detect_1d(&u, &mesh, burgers, &IndicatorParams::default()).unwrap();
        let flagged: Vec<usize> = f.flagged().collect();
        assert_eq!(flagged, vec![99, 100]);
        let expected = sigmoid(10.0 - 12.0 * 0.01 - 1.0);
        assert!((f.outputs[100] - expected).abs() < 1e-15);
    }

    #[test]
    fn smooth_sine_has_no_flags() {
        let mesh = Mesh1D::uniform(0.0, 2.0, 200).unwrap();
        let u: Vec<f64> = mesh
            .centers()
            .iter()
            .map(|&x| (std::f64::consts::PI * x).sin())
            .collect();
        let f = detect_1d(&u, &mesh, burgers, &IndicatorParams::default()).unwrap();
        assert_eq!(f.count(), 0);
    }

    #[test]
    fn constant_data_and_small_meshes() {
        let mesh = Mesh1D::uniform(0.0, 1.0, 10).unwrap();
        let f = detect_1d(&[3.0; 10], &mesh, burgers, &IndicatorParams::default()).unwrap();
        assert_eq!(f.count(), 0);
        let tiny = Mesh1D::uniform(0.0, 1.0, 2).unwrap();
        assert_eq!(
            detect_1d(&[0.0, 1.0], &tiny, burgers, &IndicatorParams::default()),
            Err(IndicatorError::TooFewCells(2))
        );
    }

    #[test]
    fn two_d_column_step() {
        let mx = Mesh1D::uniform(0.0, 1.0, 20).unwrap();
        let my = Mesh1D::uniform(0.0, 1.0, 10).unwrap();
        let xs = mx.centers();
        let mut u = vec![0.0; 200];
        for i in 0..20 {
            for j in 0..10 {
                u[i * 10 + j] = if xs[i] < 0.5 { 2.0 } else { 0.0 };
            }
        }
        let f = detect_2d(&u, &mx, &my, burgers, burgers, &IndicatorParams::default()).unwrap();
        for i in 0..20 {
            for j in 0..10 {
                assert_eq!(f.flags[i * 10 + j], i == 9 || i == 10, "({i},{j})");
            }
        }
    }

    #[test]
    fn centred_mesh_midpoints_are_nodes() {
        let m = Mesh1D::centred_on_nodes(0.0, 1.0, 5).unwrap();
        assert_eq!(m.len(), 5);
        assert!((m.center(2) - 0.5).abs() < 1e-15);
        assert!((m.size(0) - 0.25).abs() < 1e-15);
    }
}
