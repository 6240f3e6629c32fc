//! Batched forward/backward through the residual network.
//!
//! Values and input tangents for a group of points are stacked as the row
//! blocks of one `(C·b) × n` matrix (`C = 1` for value-only batches,
//! `C = d + 2` with tangents), so every affine layer is a single GEMM.
//! The backward pass is the adjoint of the dual-number forward recursion:
//!
//! ```text
//! a = W v + b,  a_k = W v_k,  h = tanh(a),  s = 1 - h²
//! v' = v + h,   v'_k = v_k + s ⊙ a_k
//! ```
//!
//! so parameter gradients flow through the input derivatives as well.
//!
//! Points are processed in chunks of [`CHUNK`] so that a chunk's layer
//! inputs, pre-activations and adjoints stay cache-resident between the
//! GEMM and the elementwise work. Stored intermediates are laid out chunk
//! by chunk. A [`BatchEval`] owns every buffer and reuses them across
//! evaluations.

use ndarray::{linalg::general_mat_mul, ArrayView2, ArrayViewMut2};

use super::real::tanh_kernel;
use super::DiffError;
use crate::network::NetworkParams;

/// Points per processing chunk.
const CHUNK: usize = 128;

/// Forward state for one batch, retained for the backward pass.
#[derive(Debug, Default)]
pub struct BatchEval {
    points: usize,
    channels: usize,
    input_dim: usize,
    width: usize,
    coords: Vec<f64>,
    /// Stacked states entering each block; the last entry feeds the projection.
    states: Vec<Vec<f64>>,
    /// Pre-activations of the tangent rows, per block.
    pre_tan: Vec<Vec<f64>>,
    act: Vec<Vec<f64>>,
    slope: Vec<Vec<f64>>,
    u: Vec<f64>,
    du: Vec<f64>,
    pre: Vec<f64>,
    delta: Vec<f64>,
    dpre: Vec<f64>,
    row_weight: Vec<f64>,
}

fn fit(buf: &mut Vec<f64>, len: usize) {
    buf.resize(len, 0.0);
}

fn fit_layers(bufs: &mut Vec<Vec<f64>>, count: usize, len: usize) {
    bufs.resize_with(count, Vec::new);
    for b in bufs.iter_mut() {
        fit(b, len);
    }
}

fn view(data: &[f64], rows: usize, cols: usize) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((rows, cols), data).expect("buffer shape")
}

fn view_mut(data: &mut [f64], rows: usize, cols: usize) -> ArrayViewMut2<'_, f64> {
    ArrayViewMut2::from_shape((rows, cols), data).expect("buffer shape")
}

/// Point ranges of the processing chunks.
fn chunks(b: usize) -> impl DoubleEndedIterator<Item = (usize, usize)> {
    (0..b.div_ceil(CHUNK)).map(move |i| (i * CHUNK, ((i + 1) * CHUNK).min(b)))
}

impl BatchEval {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.points
    }

    pub fn is_empty(&self) -> bool {
        self.points == 0
    }

    pub fn has_tangents(&self) -> bool {
        self.channels > 1
    }

    pub fn values(&self) -> &[f64] {
        &self.u
    }

    /// Input derivatives `(∂u/∂x_1, .., ∂u/∂x_d, ∂u/∂t)` of point `p`.
    pub fn input_grads(&self, p: usize) -> &[f64] {
        assert!(self.has_tangents(), "value-only batch has no input derivatives");
        &self.du[p * self.input_dim..(p + 1) * self.input_dim]
    }

    /// Evaluates the network on `points` (row-major, `input_dim` per point),
    /// optionally carrying exact input derivatives, reusing this value's
    /// buffers.
    pub fn evaluate(
        &mut self,
        params: &NetworkParams,
        points: &[f64],
        with_tangents: bool,
    ) -> Result<(), DiffError> {
        let arch = params.arch();
        let theta = params.as_slice();
        let n = arch.width;
        let di = arch.input_dim;
        if points.len() % di != 0 {
            return Err(DiffError::InputDimension {
                expected: di,
                found: points.len() % di,
            });
        }
        let b = points.len() / di;
        let c = if with_tangents { di + 1 } else { 1 };
        self.points = b;
        self.channels = c;
        self.input_dim = di;
        self.width = n;
        self.coords.clear();
        self.coords.extend_from_slice(points);
        fit_layers(&mut self.states, arch.depth + 1, c * b * n);
        fit_layers(&mut self.pre_tan, arch.depth, (c - 1) * b * n);
        fit_layers(&mut self.act, arch.depth, b * n);
        fit_layers(&mut self.slope, arch.depth, b * n);
        fit(&mut self.pre, c * CHUNK.min(b.max(1)) * n);
        self.u.clear();
        self.u.resize(b, 0.0);
        fit(&mut self.du, if c > 1 { b * di } else { 0 });

        let pw = view(&theta[arch.lift_weights()], n, di);
        let pb = &theta[arch.lift_bias()];
        let q = &theta[arch.projection_weights()];
        let qb = theta[arch.projection_bias()];
        let proj = |row: &[f64]| row.iter().zip(q).map(|(x, w)| x * w).sum::<f64>();

        for (p0, p1) in chunks(b) {
            let m = p1 - p0;
            let rows = c * m;
            let srange = c * p0 * n..c * p1 * n;
            {
                let v0 = &mut self.states[0][srange.clone()];
                let (val, tan) = v0.split_at_mut(m * n);
                general_mat_mul(
                    1.0,
                    &view(&self.coords[p0 * di..p1 * di], m, di),
                    &pw.t(),
                    0.0,
                    &mut view_mut(val, m, n),
                );
                for row in val.chunks_exact_mut(n) {
                    for (x, bi) in row.iter_mut().zip(pb) {
                        *x += bi;
                    }
                }
                for (ch, blk) in tan.chunks_exact_mut(m * n).enumerate() {
                    for row in blk.chunks_exact_mut(n) {
                        for (i, x) in row.iter_mut().enumerate() {
                            *x = pw[[i, ch]];
                        }
                    }
                }
                if !v0.iter().all(|x| x.is_finite()) {
                    return Err(DiffError::NonFinite { layer: 0 });
                }
            }

            for k in 0..arch.depth {
                let w = view(&theta[arch.block_weights(k)], n, n);
                let bias = &theta[arch.block_bias(k)];
                let (before, after) = self.states.split_at_mut(k + 1);
                let input = &before[k][srange.clone()];
                let next = &mut after[0][srange.clone()];
                let pre = &mut self.pre[..rows * n];
                general_mat_mul(1.0, &view(input, rows, n), &w.t(), 0.0, &mut view_mut(pre, rows, n));
                let act = &mut self.act[k][p0 * n..p1 * n];
                let slope = &mut self.slope[k][p0 * n..p1 * n];
                let (pre_val, pre_tan) = pre.split_at(m * n);
                let (in_val, in_tan) = input.split_at(m * n);
                let (next_val, next_tan) = next.split_at_mut(m * n);
                let mut finite = true;
                for ((((a_row, h_row), s_row), (iv_row, nv_row)), _) in pre_val
                    .chunks_exact(n)
                    .zip(act.chunks_exact_mut(n))
                    .zip(slope.chunks_exact_mut(n))
                    .zip(in_val.chunks_exact(n).zip(next_val.chunks_exact_mut(n)))
                    .zip(0..m)
                {
                    for (((((a, h), sl), iv), nv), bi) in a_row
                        .iter()
                        .zip(h_row)
                        .zip(s_row)
                        .zip(iv_row)
                        .zip(nv_row)
                        .zip(bias)
                    {
                        let t = tanh_kernel(a + bi);
                        *h = t;
                        *sl = 1.0 - t * t;
                        *nv = iv + t;
                        finite &= nv.is_finite();
                    }
                }
                let stored = &mut self.pre_tan[k][(c - 1) * p0 * n..(c - 1) * p1 * n];
                stored.copy_from_slice(pre_tan);
                for ((nt, it), at) in next_tan
                    .chunks_exact_mut(m * n)
                    .zip(in_tan.chunks_exact(m * n))
                    .zip(pre_tan.chunks_exact(m * n))
                {
                    for (((nv, iv), a), sl) in nt.iter_mut().zip(it).zip(at).zip(slope.iter()) {
                        *nv = iv + sl * a;
                        finite &= nv.is_finite();
                    }
                }
                if !finite {
                    return Err(DiffError::NonFinite { layer: k + 1 });
                }
            }

            let last = &self.states[arch.depth][srange];
            for (p, row) in last[..m * n].chunks_exact(n).enumerate() {
                self.u[p0 + p] = proj(row) + qb;
            }
            for ch in 1..c {
                let blk = &last[ch * m * n..(ch + 1) * m * n];
                for (p, row) in blk.chunks_exact(n).enumerate() {
                    self.du[(p0 + p) * di + ch - 1] = proj(row);
                }
            }
        }
        if !self.u.iter().chain(&self.du).all(|x| x.is_finite()) {
            return Err(DiffError::NonFinite {
                layer: arch.depth + 1,
            });
        }
        Ok(())
    }

    /// Accumulates `∂L/∂θ` into `grad` given upstream `∂L/∂u` per point and,
    /// for tangent batches, `∂L/∂(∂u/∂z_k)` as a row-major `B × (d+1)` slice.
    pub fn backward(
        &mut self,
        params: &NetworkParams,
        grad_u: &[f64],
        grad_du: Option<&[f64]>,
        grad: &mut [f64],
    ) {
        let arch = params.arch();
        let theta = params.as_slice();
        let n = arch.width;
        let b = self.points;
        let c = self.channels;
        let di = self.input_dim;
        assert_eq!(n, self.width, "parameters do not match the evaluated network");
        assert_eq!(grad_u.len(), b);
        assert_eq!(grad.len(), theta.len());
        if b == 0 {
            return;
        }
        let gdu = if c > 1 {
            let g = grad_du.expect("tangent batch needs derivative adjoints");
            assert_eq!(g.len(), b * di);
            g
        } else {
            &[]
        };
        grad[arch.projection_bias()] += grad_u.iter().sum::<f64>();
        let q = &theta[arch.projection_weights()];
        let chunk_rows = c * CHUNK.min(b);
        fit(&mut self.delta, chunk_rows * n);
        fit(&mut self.dpre, chunk_rows * n);

        for (p0, p1) in chunks(b) {
            let m = p1 - p0;
            let rows = c * m;
            let srange = c * p0 * n..c * p1 * n;

            // upstream weight per stacked row: ∂L/∂u for values, ∂L/∂u_z for tangents
            self.row_weight.clear();
            self.row_weight.extend_from_slice(&grad_u[p0..p1]);
            for ch in 1..c {
                self.row_weight.extend((p0..p1).map(|p| gdu[p * di + ch - 1]));
            }
            let delta = &mut self.delta[..rows * n];
            {
                let gq = &mut grad[arch.projection_weights()];
                let last = &self.states[arch.depth][srange.clone()];
                for ((&g, row), drow) in self
                    .row_weight
                    .iter()
                    .zip(last.chunks_exact(n))
                    .zip(delta.chunks_exact_mut(n))
                {
                    for (((gqi, &x), d), &qi) in gq.iter_mut().zip(row).zip(drow).zip(q) {
                        *gqi += g * x;
                        *d = g * qi;
                    }
                }
            }

            for k in (0..arch.depth).rev() {
                let pre_tan = &self.pre_tan[k][(c - 1) * p0 * n..(c - 1) * p1 * n];
                let act = &self.act[k][p0 * n..p1 * n];
                let slope = &self.slope[k][p0 * n..p1 * n];
                let dpre = &mut self.dpre[..rows * n];
                {
                    let (dval, dtan) = dpre.split_at_mut(m * n);
                    // dh accumulates in dval before the final slope scaling
                    dval.copy_from_slice(&delta[..m * n]);
                    for ch in 1..c {
                        let dt = &mut dtan[(ch - 1) * m * n..ch * m * n];
                        let dv_blk = &delta[ch * m * n..(ch + 1) * m * n];
                        let a_blk = &pre_tan[(ch - 1) * m * n..ch * m * n];
                        for ((((dp, dv), a), h), (sl, dh)) in dt
                            .iter_mut()
                            .zip(dv_blk)
                            .zip(a_blk)
                            .zip(act)
                            .zip(slope.iter().zip(dval.iter_mut()))
                        {
                            *dp = dv * sl;
                            *dh -= 2.0 * dv * a * h;
                        }
                    }
                    for (dh, sl) in dval.iter_mut().zip(slope) {
                        *dh *= sl;
                    }
                }
                let dpre_v = view(dpre, rows, n);
                general_mat_mul(
                    1.0,
                    &dpre_v.t(),
                    &view(&self.states[k][srange.clone()], rows, n),
                    1.0,
                    &mut view_mut(&mut grad[arch.block_weights(k)], n, n),
                );
                let gb = &mut grad[arch.block_bias(k)];
                for row in dpre[..m * n].chunks_exact(n) {
                    for (g, d) in gb.iter_mut().zip(row) {
                        *g += d;
                    }
                }
                let w = view(&theta[arch.block_weights(k)], n, n);
                general_mat_mul(1.0, &dpre_v, &w, 1.0, &mut view_mut(delta, rows, n));
            }

            // lift: the value rows see the coordinates, tangent row block k sees e_k
            general_mat_mul(
                1.0,
                &view(&delta[..m * n], m, n).t(),
                &view(&self.coords[p0 * di..p1 * di], m, di),
                1.0,
                &mut view_mut(&mut grad[arch.lift_weights()], n, di),
            );
            let gpb = arch.lift_bias();
            for row in delta[..m * n].chunks_exact(n) {
                for (g, d) in grad[gpb.clone()].iter_mut().zip(row) {
                    *g += d;
                }
            }
            let gp = arch.lift_weights().start;
            for ch in 1..c {
                for row in delta[ch * m * n..(ch + 1) * m * n].chunks_exact(n) {
                    for (i, d) in row.iter().enumerate() {
                        grad[gp + i * di + ch - 1] += d;
                    }
                }
            }
        }
    }
}

/// One-shot evaluation into a fresh [`BatchEval`].
pub fn forward_batch(
    params: &NetworkParams,
    points: &[f64],
    with_tangents: bool,
) -> Result<BatchEval, DiffError> {
    let mut ev = BatchEval::new();
    ev.evaluate(params, points, with_tangents)?;
    Ok(ev)
}
