//! Residual Tanh network `û = Q(v_N)`, `v_{k+1} = v_k + tanh(W_k v_k + b_k)`,
//! `v_0 = P [x; t]`.
//!
//! Parameters live in one flat `Vec<f64>` in layer order (lift weights, lift
//! bias, then each block's weights and bias, then projection weights and
//! bias). The flat vector is what the optimizer and gradients index into.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffengine::{DiffError, Real};

const MAGIC: &[u8; 8] = b"CLINNNET";
const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 * 4;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("point has {found} coordinates, network expects {expected}")]
    InputDimension { expected: usize, found: usize },
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },
    #[error("checkpoint parse error: {0}")]
    Parse(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Diff(#[from] DiffError),
}

/// Width `n`, residual block count `N`, and input dimension `d + 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub width: usize,
    pub depth: usize,
    pub input_dim: usize,
}

impl Architecture {
    pub fn new(width: usize, depth: usize, input_dim: usize) -> Result<Self, NetworkError> {
        if width == 0 {
            return Err(NetworkError::InvalidArchitecture("width must be >= 1".into()));
        }
        if input_dim == 0 {
            return Err(NetworkError::InvalidArchitecture(
                "input dimension must be >= 1".into(),
            ));
        }
        Ok(Self {
            width,
            depth,
            input_dim,
        })
    }

    pub fn param_count(&self) -> usize {
        let n = self.width;
        n * self.input_dim + n + self.depth * (n * n + n) + n + 1
    }

    pub fn lift_weights(&self) -> std::ops::Range<usize> {
        0..self.width * self.input_dim
    }

    pub fn lift_bias(&self) -> std::ops::Range<usize> {
        let s = self.width * self.input_dim;
        s..s + self.width
    }

    pub fn block_weights(&self, k: usize) -> std::ops::Range<usize> {
        let n = self.width;
        let s = self.lift_bias().end + k * (n * n + n);
        s..s + n * n
    }

    pub fn block_bias(&self, k: usize) -> std::ops::Range<usize> {
        let s = self.block_weights(k).end;
        s..s + self.width
    }

    pub fn projection_weights(&self) -> std::ops::Range<usize> {
        let n = self.width;
        let s = self.lift_bias().end + self.depth * (n * n + n);
        s..s + n
    }

    pub fn projection_bias(&self) -> usize {
        self.projection_weights().end
    }

    fn describe(&self) -> String {
        format!(
            "width {} depth {} input_dim {}",
            self.width, self.depth, self.input_dim
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams {
    arch: Architecture,
    data: Vec<f64>,
}

impl NetworkParams {
    /// Glorot-uniform weights, zero biases, deterministic per seed.
    pub fn init(arch: Architecture, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = vec![0.0; arch.param_count()];
        let n = arch.width;
        let mut fill = |range: std::ops::Range<usize>, fan_in: usize, fan_out: usize| {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for w in &mut data[range] {
                *w = rng.random_range(-limit..limit);
            }
        };
        fill(arch.lift_weights(), arch.input_dim, n);
        for k in 0..arch.depth {
            fill(arch.block_weights(k), n, n);
        }
        fill(arch.projection_weights(), n, 1);
        Self { arch, data }
    }

    /// [`NetworkParams::init`] followed by an affine rescaling of the lift
    /// so that the box `[lower, upper]` (space-time, one entry per input)
    /// maps onto `[-1, 1]` before the random lift weights act.
    pub fn init_for_box(arch: Architecture, seed: u64, lower: &[f64], upper: &[f64]) -> Self {
        let mut p = Self::init(arch, seed);
        let di = arch.input_dim;
        assert_eq!(lower.len(), di);
        assert_eq!(upper.len(), di);
        let (wr, br) = (arch.lift_weights(), arch.lift_bias());
        let (w, b) = p.data.split_at_mut(br.start);
        let w = &mut w[wr];
        for (i, bias) in b[..arch.width].iter_mut().enumerate() {
            for k in 0..di {
                let half = 0.5 * (upper[k] - lower[k]);
                let mid = 0.5 * (upper[k] + lower[k]);
                let scaled = w[i * di + k] / half;
                w[i * di + k] = scaled;
                *bias -= scaled * mid;
            }
        }
        p
    }

    pub fn zeros(arch: Architecture) -> Self {
        Self {
            arch,
            data: vec![0.0; arch.param_count()],
        }
    }

    pub fn from_vec(arch: Architecture, data: Vec<f64>) -> Result<Self, NetworkError> {
        if data.len() != arch.param_count() {
            return Err(NetworkError::ShapeMismatch {
                expected: format!("{} parameters", arch.param_count()),
                found: format!("{} parameters", data.len()),
            });
        }
        Ok(Self { arch, data })
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Plain `f64` forward pass.
    pub fn forward(&self, point: &[f64]) -> Result<f64, NetworkError> {
        self.check_point(point)?;
        let a = &self.arch;
        let n = a.width;
        let d = &self.data;
        let pw = &d[a.lift_weights()];
        let pb = &d[a.lift_bias()];
        let mut v: Vec<f64> = (0..n)
            .map(|i| {
                pb[i]
                    + pw[i * a.input_dim..(i + 1) * a.input_dim]
                        .iter()
                        .zip(point)
                        .map(|(w, z)| w * z)
                        .sum::<f64>()
            })
            .collect();
        let mut pre = vec![0.0; n];
        for k in 0..a.depth {
            let w = &d[a.block_weights(k)];
            let b = &d[a.block_bias(k)];
            for i in 0..n {
                pre[i] = b[i] + w[i * n..(i + 1) * n].iter().zip(&v).map(|(w, v)| w * v).sum::<f64>();
            }
            for i in 0..n {
                v[i] += pre[i].tanh();
            }
        }
        let q = &d[a.projection_weights()];
        let out = d[a.projection_bias()] + q.iter().zip(&v).map(|(q, v)| q * v).sum::<f64>();
        if !out.is_finite() {
            return Err(DiffError::NonFinite { layer: a.depth + 1 }.into());
        }
        Ok(out)
    }

    fn check_point(&self, point: &[f64]) -> Result<(), NetworkError> {
        if point.len() != self.arch.input_dim {
            return Err(NetworkError::InputDimension {
                expected: self.arch.input_dim,
                found: point.len(),
            });
        }
        Ok(())
    }

    /// Checkpoint: magic, version, width, depth, input dim (u32 LE), then
    /// every parameter as a little-endian f64 in layer order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * self.data.len());
        out.extend_from_slice(MAGIC);
        for v in [
            FORMAT_VERSION,
            self.arch.width as u32,
            self.arch.depth as u32,
            self.arch.input_dim as u32,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for p in &self.data {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NetworkError> {
        if bytes.len() < HEADER_LEN {
            return Err(NetworkError::Parse(format!(
                "file too short for header ({} bytes)",
                bytes.len()
            )));
        }
        if &bytes[..8] != MAGIC {
            return Err(NetworkError::Parse("bad magic".into()));
        }
        let word = |i: usize| {
            let s = 8 + 4 * i;
            u32::from_le_bytes(bytes[s..s + 4].try_into().expect("4-byte slice")) as usize
        };
        if word(0) != FORMAT_VERSION as usize {
            return Err(NetworkError::Parse(format!("unsupported version {}", word(0))));
        }
        let arch = Architecture::new(word(1), word(2), word(3))?;
        let body = &bytes[HEADER_LEN..];
        if body.len() != 8 * arch.param_count() {
            return Err(NetworkError::ShapeMismatch {
                expected: format!("{} ({} parameters)", arch.describe(), arch.param_count()),
                found: format!("{} bytes of parameters", body.len()),
            });
        }
        let data = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Ok(Self { arch, data })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), NetworkError> {
        let path = path.as_ref();
        let io = |source| NetworkError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut f = fs::File::create(path).map_err(io)?;
        f.write_all(&self.to_bytes()).map_err(io)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NetworkError> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|source| NetworkError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }

    /// Loads and checks the header against an expected architecture.
    pub fn load_expecting(path: impl AsRef<Path>, arch: &Architecture) -> Result<Self, NetworkError> {
        let params = Self::load(path)?;
        if params.arch != *arch {
            return Err(NetworkError::ShapeMismatch {
                expected: arch.describe(),
                found: params.arch.describe(),
            });
        }
        Ok(params)
    }
}

/// Forward pass over any [`Real`] scalar. Parameters and inputs share the
/// scalar type; checks every layer's output for finiteness.
pub fn forward_generic<T: Real>(arch: &Architecture, theta: &[T], point: &[T]) -> Result<T, DiffError> {
    let n = arch.width;
    let di = arch.input_dim;
    let finite = |x: &T, layer: usize| {
        if x.value().is_finite() {
            Ok(())
        } else {
            Err(DiffError::NonFinite { layer })
        }
    };
    let pw = &theta[arch.lift_weights()];
    let pb = &theta[arch.lift_bias()];
    let mut v: Vec<T> = Vec::with_capacity(n);
    for i in 0..n {
        let mut acc = pb[i].clone();
        for j in 0..di {
            acc = acc + pw[i * di + j].clone() * point[j].clone();
        }
        finite(&acc, 0)?;
        v.push(acc);
    }
    for k in 0..arch.depth {
        let w = &theta[arch.block_weights(k)];
        let b = &theta[arch.block_bias(k)];
        let mut next = Vec::with_capacity(n);
        for i in 0..n {
            let mut acc = b[i].clone();
            for j in 0..n {
                acc = acc + w[i * n + j].clone() * v[j].clone();
            }
            let out = v[i].clone() + acc.tanh();
            finite(&out, k + 1)?;
            next.push(out);
        }
        v = next;
    }
    let q = &theta[arch.projection_weights()];
    let mut out = theta[arch.projection_bias()].clone();
    for i in 0..n {
        out = out + q[i].clone() * v[i].clone();
    }
    finite(&out, arch.depth + 1)?;
    Ok(out)
}
