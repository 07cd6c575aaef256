//! The two optimized neural fields: an SDF head over grid vertices and an
//! albedo head over surface points.
//!
//! A frequency positional encoding feeds a small tanh MLP. Gradients are
//! hand-derived reverse mode and validated against central finite
//! differences; nothing here depends on an autodiff framework.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, Vector3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::optim::Adam;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    /// Scalar signed distance, identity output.
    Sdf,
    /// RGB albedo, logistic-squashed to (0,1)^3.
    Albedo,
}

/// Positional-encoded MLP with explicit reverse-mode gradients.
#[derive(Clone)]
pub struct MlpField {
    pub head: Head,
    pub freqs: usize,
    /// Layer weights, `(out, in)` each; biases as `(1, out)`.
    w: Vec<DMatrix<f64>>,
    b: Vec<DMatrix<f64>>,
}

/// Per-layer parameter gradients in `visit order` (w0, b0, w1, b1, ...).
pub struct FieldGrads(pub Vec<DMatrix<f64>>);

/// Activations cached by a forward pass for the reverse pass.
pub struct FieldCache {
    /// activations[0] is the encoded input; activations[l+1] the output of
    /// layer l (post-nonlinearity, post-head on the last layer).
    activations: Vec<DMatrix<f64>>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl MlpField {
    /// Xavier-initialized field; hidden layers use tanh.
    pub fn new(head: Head, freqs: usize, hidden: &[usize], seed: u64) -> Self {
        let in_dim = 3 + 6 * freqs;
        let out_dim = match head {
            Head::Sdf => 1,
            Head::Albedo => 3,
        };
        let mut dims = vec![in_dim];
        dims.extend_from_slice(hidden);
        dims.push(out_dim);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = Vec::new();
        let mut b = Vec::new();
        for pair in dims.windows(2) {
            let (i, o) = (pair[0], pair[1]);
            let std = (2.0 / (i + o) as f64).sqrt();
            w.push(DMatrix::from_fn(o, i, |_, _| normal(&mut rng) * std));
            b.push(DMatrix::zeros(1, o));
        }
        MlpField { head, freqs, w, b }
    }

    /// Standard geometry field: 6 frequency bands, 3 hidden layers of 64.
    pub fn sdf_default(seed: u64) -> Self {
        MlpField::new(Head::Sdf, 6, &[64, 64, 64], seed)
    }

    pub fn albedo_default(seed: u64) -> Self {
        MlpField::new(Head::Albedo, 6, &[64, 64, 64], seed)
    }

    pub fn out_dim(&self) -> usize {
        self.w.last().unwrap().nrows()
    }

    fn in_dim(&self) -> usize {
        3 + 6 * self.freqs
    }

    /// Frequency positional encoding: (x, y, z, sin(2^k pi v), cos(2^k pi v))
    /// per axis per band.
    pub fn encode(&self, points: &[Vector3<f64>]) -> DMatrix<f64> {
        let n = points.len();
        let d = self.in_dim();
        let mut m = DMatrix::zeros(n, d);
        for (r, p) in points.iter().enumerate() {
            m[(r, 0)] = p.x;
            m[(r, 1)] = p.y;
            m[(r, 2)] = p.z;
            let mut c = 3;
            for k in 0..self.freqs {
                let f = (1u64 << k) as f64 * std::f64::consts::PI;
                for axis in 0..3 {
                    let v = f * p[axis];
                    m[(r, c)] = v.sin();
                    m[(r, c + 1)] = v.cos();
                    c += 2;
                }
            }
        }
        m
    }

    /// Batched forward pass; keep the cache when gradients are needed.
    pub fn forward(&self, points: &[Vector3<f64>]) -> (DMatrix<f64>, FieldCache) {
        let mut activations = vec![self.encode(points)];
        let last = self.w.len() - 1;
        for (l, (w, b)) in self.w.iter().zip(&self.b).enumerate() {
            let x = activations.last().unwrap();
            let mut z = x * w.transpose();
            for r in 0..z.nrows() {
                for c in 0..z.ncols() {
                    z[(r, c)] += b[(0, c)];
                }
            }
            if l < last {
                z.apply(|v| *v = v.tanh());
            } else if self.head == Head::Albedo {
                z.apply(|v| *v = sigmoid(*v));
            }
            activations.push(z);
        }
        (activations.last().unwrap().clone(), FieldCache { activations })
    }

    /// Reverse pass: parameter gradients for a per-point output gradient.
    pub fn backward(&self, cache: &FieldCache, d_out: &DMatrix<f64>) -> FieldGrads {
        let last = self.w.len() - 1;
        let mut grads = vec![DMatrix::zeros(0, 0); 2 * self.w.len()];
        let mut d_act = d_out.clone();
        for l in (0..self.w.len()).rev() {
            let x_in = &cache.activations[l];
            let x_out = &cache.activations[l + 1];
            // through the nonlinearity
            let mut d_z = d_act;
            if l < last {
                for i in 0..d_z.len() {
                    let y = x_out[i];
                    d_z[i] *= 1.0 - y * y;
                }
            } else if self.head == Head::Albedo {
                for i in 0..d_z.len() {
                    let y = x_out[i];
                    d_z[i] *= y * (1.0 - y);
                }
            }
            let dw = d_z.transpose() * x_in;
            let mut db = DMatrix::zeros(1, d_z.ncols());
            for c in 0..d_z.ncols() {
                db[(0, c)] = d_z.column(c).sum();
            }
            d_act = &d_z * &self.w[l];
            grads[2 * l] = dw;
            grads[2 * l + 1] = db;
        }
        FieldGrads(grads)
    }

    pub fn params_mut(&mut self) -> Vec<&mut DMatrix<f64>> {
        let mut out = Vec::with_capacity(2 * self.w.len());
        for (w, b) in self.w.iter_mut().zip(self.b.iter_mut()) {
            out.push(w);
            out.push(b);
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.w.iter().map(|m| m.len()).sum::<usize>() + self.b.iter().map(|m| m.len()).sum::<usize>()
    }

    /// Scalar SDF values; rejects albedo-headed fields.
    pub fn eval_sdf(&self, points: &[Vector3<f64>]) -> Result<Vec<f64>> {
        if self.head != Head::Sdf {
            return Err(Error::invalid("eval_sdf on a non-SDF field"));
        }
        let (out, _) = self.forward(points);
        Ok((0..out.nrows()).map(|r| out[(r, 0)]).collect())
    }

    /// Per-point RGB in (0,1); rejects SDF-headed fields.
    pub fn eval_albedo(&self, points: &[Vector3<f64>]) -> Result<Vec<[f64; 3]>> {
        if self.head != Head::Albedo {
            return Err(Error::invalid("eval_albedo on a non-albedo field"));
        }
        let (out, _) = self.forward(points);
        Ok((0..out.nrows())
            .map(|r| [out[(r, 0)], out[(r, 1)], out[(r, 2)]])
            .collect())
    }

    // -- checkpoint format: magic, head, freq count, layer table, f32 params

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut buf: Vec<u8> = Vec::new();
        buf.extend_from_slice(b"FLD1");
        buf.push(match self.head {
            Head::Sdf => 0,
            Head::Albedo => 1,
        });
        buf.push(self.freqs as u8);
        buf.push(self.w.len() as u8);
        buf.push(0);
        for w in &self.w {
            buf.extend_from_slice(&(w.ncols() as u32).to_le_bytes());
            buf.extend_from_slice(&(w.nrows() as u32).to_le_bytes());
        }
        for (w, b) in self.w.iter().zip(&self.b) {
            for r in 0..w.nrows() {
                for c in 0..w.ncols() {
                    buf.extend_from_slice(&(w[(r, c)] as f32).to_le_bytes());
                }
            }
            for c in 0..b.ncols() {
                buf.extend_from_slice(&(b[(0, c)] as f32).to_le_bytes());
            }
        }
        std::fs::File::create(path)?.write_all(&buf)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        if buf.len() < 8 || &buf[0..4] != b"FLD1" {
            return Err(Error::Parse("not a field checkpoint".into()));
        }
        let head = match buf[4] {
            0 => Head::Sdf,
            1 => Head::Albedo,
            h => return Err(Error::Parse(format!("unknown head tag {h}"))),
        };
        let freqs = buf[5] as usize;
        let n_layers = buf[6] as usize;
        let mut pos = 8;
        let mut read_u32 = |pos: &mut usize| -> Result<u32> {
            if *pos + 4 > buf.len() {
                return Err(Error::Parse("truncated checkpoint".into()));
            }
            let v = u32::from_le_bytes(buf[*pos..*pos + 4].try_into().unwrap());
            *pos += 4;
            Ok(v)
        };
        let mut dims = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let i = read_u32(&mut pos)? as usize;
            let o = read_u32(&mut pos)? as usize;
            dims.push((i, o));
        }
        let mut w = Vec::new();
        let mut b = Vec::new();
        let mut read_f32 = |pos: &mut usize| -> Result<f64> {
            if *pos + 4 > buf.len() {
                return Err(Error::Parse("truncated checkpoint".into()));
            }
            let v = f32::from_le_bytes(buf[*pos..*pos + 4].try_into().unwrap());
            *pos += 4;
            Ok(v as f64)
        };
        for &(i, o) in &dims {
            let mut wm = DMatrix::zeros(o, i);
            for r in 0..o {
                for c in 0..i {
                    wm[(r, c)] = read_f32(&mut pos)?;
                }
            }
            let mut bm = DMatrix::zeros(1, o);
            for c in 0..o {
                bm[(0, c)] = read_f32(&mut pos)?;
            }
            w.push(wm);
            b.push(bm);
        }
        Ok(MlpField { head, freqs, w, b })
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.random::<f64>().max(1e-12);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Fits an SDF field to an oracle over the given points by minibatch Adam on
/// the squared residual. Returns the monotone-smoothed loss trace; the first
/// entry is the full-set loss before any update.
pub fn fit_sdf_init(
    field: &mut MlpField,
    points: &[Vector3<f64>],
    oracle: impl Fn(&Vector3<f64>) -> f64,
    steps: usize,
    lr: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    if field.head != Head::Sdf {
        return Err(Error::invalid("fit_sdf_init requires an SDF head"));
    }
    if points.len() < 1000 {
        return Err(Error::invalid(format!(
            "fit_sdf_init needs at least 1000 points, got {}",
            points.len()
        )));
    }
    let targets: Vec<f64> = points.iter().map(|p| oracle(p)).collect();

    let full_loss = |f: &MlpField| -> f64 {
        let vals = f.eval_sdf(points).expect("sdf head checked");
        vals.iter()
            .zip(&targets)
            .map(|(v, t)| (v - t) * (v - t))
            .sum::<f64>()
            / points.len() as f64
    };

    let mut trace = vec![full_loss(field)];
    let mut ema = trace[0];
    let batch = points.len().min(2048);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut adam = Adam::new(lr);

    let mut pts = Vec::with_capacity(batch);
    let mut tgt = Vec::with_capacity(batch);
    for step in 0..steps {
        pts.clear();
        tgt.clear();
        for _ in 0..batch {
            let i = rng.random_range(0..points.len());
            pts.push(points[i]);
            tgt.push(targets[i]);
        }
        let (out, cache) = field.forward(&pts);
        let mut d_out = DMatrix::zeros(batch, 1);
        let mut loss = 0.0;
        for r in 0..batch {
            let res = out[(r, 0)] - tgt[r];
            loss += res * res;
            d_out[(r, 0)] = 2.0 * res / batch as f64;
        }
        loss /= batch as f64;
        if !loss.is_finite() || loss > 1e6 {
            return Err(Error::numerical(format!(
                "sdf fit diverged at step {step}: loss {loss}"
            )));
        }
        let grads = field.backward(&cache, &d_out);
        adam.step(&mut field.params_mut(), &grads.0);
        ema = 0.95 * ema + 0.05 * loss;
        trace.push(trace.last().unwrap().min(ema));
    }
    Ok(trace)
}
