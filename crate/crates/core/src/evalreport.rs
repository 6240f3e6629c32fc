//! Error metrics against the exact solution and static artifacts: a
//! prediction CSV, heatmaps and time-slice profiles as SVG.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffengine::{BatchEval, DiffError};
use crate::loss::Method;
use crate::network::NetworkParams;
use crate::oracle::{exact_grid, OracleError};
use crate::problems::{CaseId, Grid, ProblemError, ProblemSpec};

/// Points per network evaluation batch.
const CHUNK: usize = 4096;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("grid shapes differ: {left} vs {right} values")]
    ShapeMismatch { left: usize, right: usize },
    #[error("baseline MSE must be positive, got {0}")]
    NonPositiveBaseline(f64),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Diff(#[from] DiffError),
}

/// Mean of squared differences.
pub fn mse(pred: &[f64], exact: &[f64]) -> Result<f64, EvalError> {
    if pred.len() != exact.len() || pred.is_empty() {
        return Err(EvalError::ShapeMismatch {
            left: pred.len(),
            right: exact.len(),
        });
    }
    let s: f64 = pred.iter().zip(exact).map(|(p, e)| (p - e) * (p - e)).sum();
    Ok(s / pred.len() as f64)
}

/// MSE over the grid level nearest to `t`, with that level's time.
pub fn mse_at_time(pred: &[f64], exact: &[f64], grid: &Grid, t: f64) -> Result<(f64, f64), EvalError> {
    if pred.len() != grid.len() || exact.len() != grid.len() {
        return Err(EvalError::ShapeMismatch {
            left: pred.len(),
            right: exact.len(),
        });
    }
    let k = grid.nearest_level(t);
    let r = k * grid.slice_len()..(k + 1) * grid.slice_len();
    Ok((mse(&pred[r.clone()], &exact[r])?, grid.t(k)))
}

/// The four reporting times `T/8, 3T/8, 5T/8, 7T/8`.
pub fn slice_times(t_end: f64) -> [f64; 4] {
    [1.0, 3.0, 5.0, 7.0].map(|k| k * t_end / 8.0)
}

/// `(1 − mse_method / mse_baseline) · 100`, in percent.
pub fn improvement_ratio(mse_method: f64, mse_baseline: f64) -> Result<f64, EvalError> {
    if mse_baseline <= 0.0 || !mse_baseline.is_finite() {
        return Err(EvalError::NonPositiveBaseline(mse_baseline));
    }
    Ok((1.0 - mse_method / mse_baseline) * 100.0)
}

/// Network values at every node of `grid`.
pub fn predict(params: &NetworkParams, grid: &Grid) -> Result<Vec<f64>, EvalError> {
    let di = grid.dim + 1;
    let mut out = Vec::with_capacity(grid.len());
    let mut ev = BatchEval::new();
    let mut pts = Vec::with_capacity(CHUNK * di);
    let mut g = 0;
    while g < grid.len() {
        let end = (g + CHUNK).min(grid.len());
        pts.clear();
        for node in g..end {
            pts.extend(grid.point(node));
        }
        ev.evaluate(params, &pts, false)?;
        out.extend_from_slice(ev.values());
        g = end;
    }
    Ok(out)
}

/// Evaluation grid with exact values cached.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalSet {
    pub case: CaseId,
    pub grid: Grid,
    pub exact: Vec<f64>,
}

impl EvalSet {
    pub fn new(spec: &ProblemSpec, nx: usize, nt: usize) -> Result<Self, EvalError> {
        let grid = Grid::new(spec, nx, nt)?;
        let exact = exact_grid(spec.id, &grid)?;
        Ok(Self {
            case: spec.id,
            grid,
            exact,
        })
    }

    pub fn mse(&self, params: &NetworkParams) -> Result<f64, EvalError> {
        mse(&predict(params, &self.grid)?, &self.exact)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub case: CaseId,
    pub method: Method,
    pub mse_all: f64,
    pub mse_t1: f64,
    pub mse_t2: f64,
    pub mse_t3: f64,
    pub mse_t4: f64,
    /// Grid times the four slice metrics were taken at.
    pub slice_times: [f64; 4],
    pub eval_nx: usize,
    pub eval_nt: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub improvement_vs_pinn: Option<f64>,
}

impl MetricsRecord {
    pub fn slice_mses(&self) -> [f64; 4] {
        [self.mse_t1, self.mse_t2, self.mse_t3, self.mse_t4]
    }
}

/// Metrics of a prediction already evaluated on `set.grid`.
pub fn metrics_from_prediction(set: &EvalSet, method: Method, pred: &[f64]) -> Result<MetricsRecord, EvalError> {
    let mut slices = [0.0; 4];
    let mut times = [0.0; 4];
    for (i, t) in slice_times(set.grid.t_end).into_iter().enumerate() {
        let (m, ts) = mse_at_time(pred, &set.exact, &set.grid, t)?;
        slices[i] = m;
        times[i] = ts;
    }
    Ok(MetricsRecord {
        case: set.case,
        method,
        mse_all: mse(pred, &set.exact)?,
        mse_t1: slices[0],
        mse_t2: slices[1],
        mse_t3: slices[2],
        mse_t4: slices[3],
        slice_times: times,
        eval_nx: set.grid.nx,
        eval_nt: set.grid.nt,
        improvement_vs_pinn: None,
    })
}

pub fn metrics(set: &EvalSet, method: Method, params: &NetworkParams) -> Result<MetricsRecord, EvalError> {
    metrics_from_prediction(set, method, &predict(params, &set.grid)?)
}

fn write_file(path: &Path, contents: &str) -> Result<(), EvalError> {
    fs::write(path, contents).map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `prediction.csv`, `profiles.csv`, `heatmap_pred.svg`,
/// `heatmap_err.svg` and `profiles.svg` into `dir`.
///
/// Heatmaps of 2D cases show the final time level; profiles of 2D cases run
/// along the first axis through the middle of the second.
pub fn export_prediction(
    params: &NetworkParams,
    spec: &ProblemSpec,
    set: &EvalSet,
    dir: &Path,
) -> Result<Vec<PathBuf>, EvalError> {
    fs::create_dir_all(dir).map_err(|source| EvalError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let pred = predict(params, &set.grid)?;
    let grid = &set.grid;
    let mut written = Vec::new();

    let mut csv = String::with_capacity(grid.len() * 64);
    csv.push_str(if grid.dim == 1 {
        "t,x,u_pred,u_exact,abs_err\n"
    } else {
        "t,x,y,u_pred,u_exact,abs_err\n"
    });
    for g in 0..grid.len() {
        let p = grid.point(g);
        let (x, t) = p.split_at(grid.dim);
        let _ = write!(csv, "{}", t[0]);
        for xi in x {
            let _ = write!(csv, ",{xi}");
        }
        let e = set.exact[g];
        let _ = writeln!(csv, ",{},{},{}", pred[g], e, (pred[g] - e).abs());
    }
    let path = dir.join("prediction.csv");
    write_file(&path, &csv)?;
    written.push(path);

    let (rows, cols, pick): (usize, usize, Box<dyn Fn(&[f64], usize, usize) -> f64>) = if grid.dim == 1 {
        let nx = grid.nx;
        (grid.nt, nx, Box::new(move |v: &[f64], r: usize, c: usize| v[r * nx + c]))
    } else {
        let base = (grid.nt - 1) * grid.slice_len();
        let nx = grid.nx;
        (nx, nx, Box::new(move |v: &[f64], r: usize, c: usize| v[base + c * nx + r]))
    };
    let err: Vec<f64> = pred.iter().zip(&set.exact).map(|(p, e)| (p - e).abs()).collect();
    let err_max = err.iter().cloned().fold(0.0, f64::max).max(1e-300);
    for (name, values, lo, hi) in [
        ("heatmap_pred.svg", &pred, spec.u0_inf, spec.u0_sup),
        ("heatmap_err.svg", &err, 0.0, err_max),
    ] {
        let svg = heatmap_svg(rows, cols, |r, c| pick(values, r, c), lo, hi);
        let path = dir.join(name);
        write_file(&path, &svg)?;
        written.push(path);
    }

    let levels: Vec<usize> = slice_times(grid.t_end)
        .iter()
        .map(|&t| grid.nearest_level(t))
        .collect();
    let xs: Vec<f64> = (0..grid.nx).map(|i| grid.x(0, i)).collect();
    let line = |v: &[f64], k: usize| -> Vec<f64> {
        let base = k * grid.slice_len();
        if grid.dim == 1 {
            v[base..base + grid.nx].to_vec()
        } else {
            let mid = grid.nx / 2;
            (0..grid.nx).map(|i| v[base + i * grid.nx + mid]).collect()
        }
    };
    let mut pcsv = String::from("x");
    for &k in &levels {
        let t = grid.t(k);
        let _ = write!(pcsv, ",u_pred_t={t},u_exact_t={t}");
    }
    pcsv.push('\n');
    let curves: Vec<(Vec<f64>, Vec<f64>)> = levels
        .iter()
        .map(|&k| (line(&pred, k), line(&set.exact, k)))
        .collect();
    for (i, x) in xs.iter().enumerate() {
        let _ = write!(pcsv, "{x}");
        for (p, e) in &curves {
            let _ = write!(pcsv, ",{},{}", p[i], e[i]);
        }
        pcsv.push('\n');
    }
    let path = dir.join("profiles.csv");
    write_file(&path, &pcsv)?;
    written.push(path);

    let titles: Vec<String> = levels.iter().map(|&k| format!("t = {:.4}", grid.t(k))).collect();
    let svg = profiles_svg(&xs, &curves, &titles, spec.u0_inf, spec.u0_sup);
    let path = dir.join("profiles.svg");
    write_file(&path, &svg)?;
    written.push(path);
    Ok(written)
}

/// Piecewise-linear colour ramp from dark blue through teal to yellow.
fn colour(v: f64, lo: f64, hi: f64) -> String {
    const STOPS: [(f64, [f64; 3]); 4] = [
        (0.0, [68.0, 1.0, 84.0]),
        (0.33, [49.0, 104.0, 142.0]),
        (0.66, [53.0, 183.0, 121.0]),
        (1.0, [253.0, 231.0, 37.0]),
    ];
    let s = if hi > lo { ((v - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.0 };
    let k = STOPS.windows(2).position(|w| s <= w[1].0).unwrap_or(2);
    let (a, b) = (STOPS[k], STOPS[k + 1]);
    let w = (s - a.0) / (b.0 - a.0);
    let c: Vec<u8> = (0..3).map(|i| (a.1[i] + w * (b.1[i] - a.1[i])).round() as u8).collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

/// Heatmap with row 0 at the bottom, downsampled to at most 200×100 cells.
fn heatmap_svg(rows: usize, cols: usize, value: impl Fn(usize, usize) -> f64, lo: f64, hi: f64) -> String {
    let (out_c, out_r) = (cols.min(200), rows.min(100));
    let (cw, ch) = (3.0, 3.0);
    let (w, h) = (out_c as f64 * cw, out_r as f64 * ch);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" shape-rendering="crispEdges">"#,
        w + 80.0,
        h
    );
    for r in 0..out_r {
        let src_r = r * rows / out_r;
        for c in 0..out_c {
            let src_c = c * cols / out_c;
            let _ = writeln!(
                s,
                r#"<rect x="{}" y="{}" width="{cw}" height="{ch}" fill="{}"/>"#,
                c as f64 * cw,
                h - (r as f64 + 1.0) * ch,
                colour(value(src_r, src_c), lo, hi)
            );
        }
    }
    for i in 0..=10 {
        let v = lo + (hi - lo) * i as f64 / 10.0;
        let y = h - (i as f64 + 1.0) * h / 11.0;
        let _ = writeln!(
            s,
            r#"<rect x="{}" y="{y}" width="12" height="{}" fill="{}"/>"#,
            w + 8.0,
            h / 11.0,
            colour(v, lo, hi)
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="9">{v:.3}</text>"#,
            w + 24.0,
            y + h / 22.0 + 3.0
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Stacked panels, prediction solid and exact dashed.
fn profiles_svg(xs: &[f64], curves: &[(Vec<f64>, Vec<f64>)], titles: &[String], lo: f64, hi: f64) -> String {
    let (pw, ph, pad) = (480.0, 140.0, 24.0);
    let span = (hi - lo).max(1e-12);
    let (ylo, yhi) = (lo - 0.1 * span, hi + 0.1 * span);
    let (x0, x1) = (xs[0], xs[xs.len() - 1]);
    let mut s = String::new();
    let total_h = curves.len() as f64 * (ph + pad);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{total_h}">"#,
        pw + 2.0 * pad
    );
    for (i, ((pred, exact), title)) in curves.iter().zip(titles).enumerate() {
        let top = i as f64 * (ph + pad) + pad;
        let map = |x: f64, y: f64| {
            (
                pad + (x - x0) / (x1 - x0) * pw,
                top + ph - (y.clamp(ylo, yhi) - ylo) / (yhi - ylo) * ph,
            )
        };
        let _ = writeln!(
            s,
            r##"<rect x="{pad}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#888"/>"##
        );
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="11">{title}</text>"#, pad + 4.0, top - 4.0);
        for (values, style) in [
            (exact, r##"stroke="#000" stroke-dasharray="4 3""##),
            (pred, r##"stroke="#d62728""##),
        ] {
            let pts: Vec<String> = xs
                .iter()
                .zip(values)
                .map(|(&x, &y)| {
                    let (a, b) = map(x, y);
                    format!("{a:.2},{b:.2}")
                })
                .collect();
            let _ = writeln!(s, r#"<polyline fill="none" {style} points="{}"/>"#, pts.join(" "));
        }
    }
    s.push_str("</svg>\n");
    s
}
