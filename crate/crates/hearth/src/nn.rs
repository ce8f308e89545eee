//! Minimal feedforward network machinery: dense layers with ReLU between
//! them, exact backpropagation, global-norm gradient clipping, Adam, and a
//! flat checkpoint format (one JSON header line + little-endian `f32`
//! payload) shared by every trained model in the crate.
//!
//! Everything is `f64` internally and deterministic: initialization draws
//! from a caller-supplied seeded stream, and training loops own their
//! iteration order.

use std::io::{Read as _, Write as _};
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::features::SparseVec;
use crate::{Error, Result};

/// One affine layer, stored row-major as (outputs × inputs).
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

/// Feedforward network: affine layers with ReLU after all but the last.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Cached intermediates from one forward pass, consumed by [`Mlp::backward`].
pub struct Forward {
    input: SparseVec,
    /// Post-ReLU activations of each hidden layer.
    hidden: Vec<Array1<f64>>,
    /// Final-layer output (no activation).
    pub out: Array1<f64>,
}

/// Per-parameter gradient accumulator, same shapes as the model.
#[derive(Debug, Clone)]
pub struct Grads {
    pub layers: Vec<Dense>,
}

impl Mlp {
    /// He-uniform initialization: weights ~ U(±√(6/fan_in)), biases zero.
    pub fn new(dims: &[usize], rng: &mut ChaCha8Rng) -> Self {
        assert!(dims.len() >= 2, "need at least input and output dims");
        let layers = dims
            .windows(2)
            .map(|io| {
                let (fan_in, fan_out) = (io[0], io[1]);
                let bound = (6.0 / fan_in as f64).sqrt();
                let w = Array2::from_shape_fn((fan_out, fan_in), |_| {
                    rng.gen_range(-bound..bound)
                });
                Dense {
                    w,
                    b: Array1::zeros(fan_out),
                }
            })
            .collect();
        Mlp { layers }
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].w.ncols()];
        dims.extend(self.layers.iter().map(|l| l.w.nrows()));
        dims
    }

    /// Forward pass from a sparse input, caching per-layer activations.
    pub fn forward(&self, input: &SparseVec) -> Forward {
        let first = &self.layers[0];
        let mut z = first.b.clone();
        for &(i, v) in input {
            z.scaled_add(v, &first.w.column(i));
        }
        let mut hidden = Vec::with_capacity(self.layers.len() - 1);
        for layer in &self.layers[1..] {
            let h = z.mapv(|x| x.max(0.0));
            z = layer.w.dot(&h) + &layer.b;
            hidden.push(h);
        }
        Forward {
            input: input.clone(),
            hidden,
            out: z,
        }
    }

    /// Accumulate parameter gradients for one sample into `grads`, given
    /// ∂loss/∂output. Inputs are never differentiated (they are data).
    pub fn backward(&self, fwd: &Forward, dout: &Array1<f64>, grads: &mut Grads) {
        let mut delta = dout.clone();
        for (idx, layer) in self.layers.iter().enumerate().skip(1).rev() {
            let h = &fwd.hidden[idx - 1];
            let g = &mut grads.layers[idx];
            for (r, &d) in delta.iter().enumerate() {
                if d != 0.0 {
                    g.w.row_mut(r).scaled_add(d, h);
                }
            }
            g.b += &delta;
            // Through the affine map, then the ReLU that produced `h`.
            let mut dh = layer.w.t().dot(&delta);
            for (dh_i, &h_i) in dh.iter_mut().zip(h.iter()) {
                if h_i <= 0.0 {
                    *dh_i = 0.0;
                }
            }
            delta = dh;
        }
        let g = &mut grads.layers[0];
        for &(i, v) in &fwd.input {
            for (r, &d) in delta.iter().enumerate() {
                g.w[(r, i)] += d * v;
            }
        }
        g.b += &delta;
    }

    pub fn zero_grads(&self) -> Grads {
        Grads {
            layers: self
                .layers
                .iter()
                .map(|l| Dense {
                    w: Array2::zeros(l.w.dim()),
                    b: Array1::zeros(l.b.len()),
                })
                .collect(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// All parameters as one flat vector (layer order: weights row-major,
    /// then biases).
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend(l.w.iter());
            out.extend(l.b.iter());
        }
        out
    }

    /// Load parameters from [`Mlp::flatten`] order.
    pub fn load_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::config(format!(
                "parameter payload has {} values, model needs {}",
                flat.len(),
                self.param_count()
            )));
        }
        let mut it = flat.iter();
        for l in &mut self.layers {
            for w in l.w.iter_mut() {
                *w = *it.next().expect("length checked");
            }
            for b in l.b.iter_mut() {
                *b = *it.next().expect("length checked");
            }
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.iter().chain(l.b.iter()).all(|x| x.is_finite()))
    }
}

impl Grads {
    /// Scale every gradient (e.g. to average over a batch).
    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.w *= factor;
            l.b *= factor;
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| {
                l.w.iter().map(|x| x * x).sum::<f64>() + l.b.iter().map(|x| x * x).sum::<f64>()
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Rescale so the global norm does not exceed `max_norm`.
    pub fn clip_global_norm(&mut self, max_norm: f64) {
        let norm = self.global_norm();
        if norm > max_norm {
            self.scale(max_norm / norm);
        }
    }
}

/// Adam optimizer with the usual defaults (β₁ 0.9, β₂ 0.999, ε 1e-8).
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    m: Grads,
    v: Grads,
}

impl Adam {
    pub fn new(model: &Mlp, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: model.zero_grads(),
            v: model.zero_grads(),
        }
    }

    pub fn step(&mut self, model: &mut Mlp, grads: &Grads) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (li, layer) in model.layers.iter_mut().enumerate() {
            let (g, m, v) = (&grads.layers[li], &mut self.m.layers[li], &mut self.v.layers[li]);
            for ((p, gr), (m1, v1)) in layer
                .w
                .iter_mut()
                .zip(g.w.iter())
                .zip(m.w.iter_mut().zip(v.w.iter_mut()))
                .chain(
                    layer
                        .b
                        .iter_mut()
                        .zip(g.b.iter())
                        .zip(m.b.iter_mut().zip(v.b.iter_mut())),
                )
            {
                *m1 = self.beta1 * *m1 + (1.0 - self.beta1) * gr;
                *v1 = self.beta2 * *v1 + (1.0 - self.beta2) * gr * gr;
                let mhat = *m1 / bc1;
                let vhat = *v1 / bc2;
                *p -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &Array1<f64>) -> Array1<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps = logits.mapv(|x| (x - max).exp());
    let sum = exps.sum();
    exps / sum
}

/// Numerically stable log-sum-exp.
pub fn logsumexp(values: &Array1<f64>) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + values.mapv(|x| (x - max).exp()).sum().ln()
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

/// Write a checkpoint: one line of JSON header, a newline, then every value
/// of `params` as a little-endian `f32`.
pub fn save_checkpoint(path: &Path, header: &serde_json::Value, params: &[f64]) -> Result<()> {
    let mut bytes = serde_json::to_vec(header).map_err(|e| Error::parse(path, e.to_string()))?;
    bytes.push(b'\n');
    bytes.reserve(params.len() * 4);
    for &p in params {
        bytes.extend_from_slice(&(p as f32).to_le_bytes());
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Read a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint(path: &Path) -> Result<(serde_json::Value, Vec<f64>)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let split = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::parse(path, "missing header line"))?;
    let header: serde_json::Value = serde_json::from_slice(&bytes[..split])
        .map_err(|e| Error::parse(path, format!("bad header: {e}")))?;
    let payload = &bytes[split + 1..];
    if payload.len() % 4 != 0 {
        return Err(Error::parse(path, "payload length not a multiple of 4"));
    }
    let params = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Ok((header, params))
}
