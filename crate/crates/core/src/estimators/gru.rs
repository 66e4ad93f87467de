//! Gated recurrent unit with a per-step linear readout.
//!
//! ```text
//! z  = σ(W_z u + U_z h + b_z)
//! r  = σ(W_r u + U_r h + b_r)
//! h̃  = tanh(W_h u + U_h (r ⊙ h) + b_h)
//! h' = (1 − z) ⊙ h + z ⊙ h̃
//! ŷ  = wᵀh' + b
//! ```
//!
//! The hidden state starts at zero for every sequence. The training loss is
//! the mean squared error over all steps of all sequences, and gradients are
//! obtained by back-propagation through time.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::optim::{diverged, Adam};
use crate::error::{Error, Result};
use crate::numerics::{dot, DenseMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GruParams {
    pub hidden: usize,
    pub input: usize,
    pub w_z: DenseMatrix,
    pub w_r: DenseMatrix,
    pub w_h: DenseMatrix,
    pub u_z: DenseMatrix,
    pub u_r: DenseMatrix,
    pub u_h: DenseMatrix,
    pub b_z: Vec<f64>,
    pub b_r: Vec<f64>,
    pub b_h: Vec<f64>,
    pub readout: Vec<f64>,
    pub readout_bias: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GruConfig {
    pub hidden_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Sequences per optimizer step.
    pub batch_sequences: usize,
}

impl Default for GruConfig {
    fn default() -> Self {
        Self {
            hidden_size: 16,
            learning_rate: 1e-2,
            epochs: 300,
            batch_sequences: 8,
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn affine(w: &DenseMatrix, u: &[f64], uh: &DenseMatrix, h: &[f64], b: &[f64]) -> Vec<f64> {
    (0..b.len())
        .map(|i| dot(w.row(i), u) + dot(uh.row(i), h) + b[i])
        .collect()
}

/// Intermediate values of one step, kept for the backward pass.
struct StepTrace {
    h_prev: Vec<f64>,
    z: Vec<f64>,
    r: Vec<f64>,
    cand: Vec<f64>,
    h: Vec<f64>,
}

impl GruParams {
    /// Uniform `±1/√H` initialization.
    pub fn init(input: usize, hidden: usize, rng: &mut impl Rng) -> Result<Self> {
        if input == 0 || hidden == 0 {
            return Err(Error::arg("GRU input and hidden sizes must be positive"));
        }
        let a = 1.0 / (hidden as f64).sqrt();
        let mut mat = |r: usize, c: usize| {
            let d = (0..r * c).map(|_| rng.random_range(-a..a)).collect();
            DenseMatrix::new(r, c, d).expect("finite init")
        };
        let (w_z, w_r, w_h) = (mat(hidden, input), mat(hidden, input), mat(hidden, input));
        let (u_z, u_r, u_h) = (
            mat(hidden, hidden),
            mat(hidden, hidden),
            mat(hidden, hidden),
        );
        let b = mat(3, hidden);
        let readout = mat(1, hidden).data().to_vec();
        Ok(Self {
            hidden,
            input,
            w_z,
            w_r,
            w_h,
            u_z,
            u_r,
            u_h,
            b_z: b.row(0).to_vec(),
            b_r: b.row(1).to_vec(),
            b_h: b.row(2).to_vec(),
            readout,
            readout_bias: 0.0,
        })
    }

    pub fn num_params(&self) -> usize {
        3 * self.hidden * self.input + 3 * self.hidden * self.hidden + 4 * self.hidden + 1
    }

    /// Flat order: W_z, W_r, W_h, U_z, U_r, U_h, b_z, b_r, b_h, readout, readout bias.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for m in [
            &self.w_z, &self.w_r, &self.w_h, &self.u_z, &self.u_r, &self.u_h,
        ] {
            out.extend_from_slice(m.data());
        }
        for v in [&self.b_z, &self.b_r, &self.b_h, &self.readout] {
            out.extend_from_slice(v);
        }
        out.push(self.readout_bias);
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_params());
        let (h, d) = (self.hidden, self.input);
        let mut at = 0;
        let mut take = |len: usize| {
            let s = &flat[at..at + len];
            at += len;
            s.to_vec()
        };
        let wz = take(h * d);
        let wr = take(h * d);
        let wh = take(h * d);
        let uz = take(h * h);
        let ur = take(h * h);
        let uh = take(h * h);
        self.b_z = take(h);
        self.b_r = take(h);
        self.b_h = take(h);
        self.readout = take(h);
        self.readout_bias = take(1)[0];
        let m = |r, c, v| DenseMatrix::new(r, c, v).expect("finite parameters");
        self.w_z = m(h, d, wz);
        self.w_r = m(h, d, wr);
        self.w_h = m(h, d, wh);
        self.u_z = m(h, h, uz);
        self.u_r = m(h, h, ur);
        self.u_h = m(h, h, uh);
    }

    fn step_trace(&self, h_prev: &[f64], u: &[f64]) -> StepTrace {
        let z: Vec<f64> = affine(&self.w_z, u, &self.u_z, h_prev, &self.b_z)
            .into_iter()
            .map(sigmoid)
            .collect();
        let r: Vec<f64> = affine(&self.w_r, u, &self.u_r, h_prev, &self.b_r)
            .into_iter()
            .map(sigmoid)
            .collect();
        let rh: Vec<f64> = r.iter().zip(h_prev).map(|(a, b)| a * b).collect();
        let cand: Vec<f64> = affine(&self.w_h, u, &self.u_h, &rh, &self.b_h)
            .into_iter()
            .map(f64::tanh)
            .collect();
        let h = (0..self.hidden)
            .map(|i| (1.0 - z[i]) * h_prev[i] + z[i] * cand[i])
            .collect();
        StepTrace {
            h_prev: h_prev.to_vec(),
            z,
            r,
            cand,
            h,
        }
    }

    pub fn readout_value(&self, h: &[f64]) -> f64 {
        dot(&self.readout, h) + self.readout_bias
    }

    /// Predictions for each step of one sequence, starting from a zero state.
    pub fn run_sequence(&self, inputs: &[&[f64]]) -> Vec<f64> {
        let mut h = vec![0.0; self.hidden];
        inputs
            .iter()
            .map(|u| {
                h = gru_cell(self, &h, u);
                self.readout_value(&h)
            })
            .collect()
    }
}

/// One recurrent step.
pub fn gru_cell(p: &GruParams, h_prev: &[f64], u: &[f64]) -> Vec<f64> {
    assert_eq!(h_prev.len(), p.hidden, "hidden state width");
    assert_eq!(u.len(), p.input, "input width");
    p.step_trace(h_prev, u).h
}

/// Sum of squared step errors over the given sequences (not yet averaged).
fn sequences_sse(p: &GruParams, x: &DenseMatrix, y: &[f64], seqs: &[Vec<usize>]) -> f64 {
    seqs.iter()
        .map(|s| {
            let inputs: Vec<&[f64]> = s.iter().map(|&i| x.row(i)).collect();
            p.run_sequence(&inputs)
                .iter()
                .zip(s)
                .map(|(f, &i)| (f - y[i]).powi(2))
                .sum::<f64>()
        })
        .sum()
}

/// Mean squared error over every step of every sequence.
pub fn gru_loss(p: &GruParams, x: &DenseMatrix, y: &[f64], seqs: &[Vec<usize>]) -> f64 {
    let steps: usize = seqs.iter().map(Vec::len).sum();
    sequences_sse(p, x, y, seqs) / steps as f64
}

/// Flat gradient (see [`GruParams::to_flat`]) of [`gru_loss`] by BPTT.
pub fn gru_bptt_grad(
    p: &GruParams,
    x: &DenseMatrix,
    y: &[f64],
    seqs: &[Vec<usize>],
) -> Result<Vec<f64>> {
    if x.cols() != p.input {
        return Err(Error::dims(format!(
            "inputs have {} columns, GRU expects {}",
            x.cols(),
            p.input
        )));
    }
    let steps: usize = seqs.iter().map(Vec::len).sum();
    if steps == 0 {
        return Err(Error::EmptyDataset);
    }
    let (h, d) = (p.hidden, p.input);
    let scale = 1.0 / steps as f64;
    let mut gw = [vec![0.0; h * d], vec![0.0; h * d], vec![0.0; h * d]];
    let mut gu = [vec![0.0; h * h], vec![0.0; h * h], vec![0.0; h * h]];
    let mut gb = [vec![0.0; h], vec![0.0; h], vec![0.0; h]];
    let mut g_out = vec![0.0; h];
    let mut g_out_b = 0.0;

    for s in seqs {
        let mut state = vec![0.0; h];
        let mut trace = Vec::with_capacity(s.len());
        for &i in s {
            let t = p.step_trace(&state, x.row(i));
            state = t.h.clone();
            trace.push(t);
        }
        let mut carry = vec![0.0; h];
        for (t, &i) in trace.iter().zip(s).rev() {
            let u = x.row(i);
            let d_out = 2.0 * (p.readout_value(&t.h) - y[i]) * scale;
            g_out_b += d_out;
            let mut dh = carry.clone();
            for k in 0..h {
                g_out[k] += d_out * t.h[k];
                dh[k] += d_out * p.readout[k];
            }
            let mut dh_prev: Vec<f64> = (0..h).map(|k| dh[k] * (1.0 - t.z[k])).collect();
            let da_z: Vec<f64> = (0..h)
                .map(|k| dh[k] * (t.cand[k] - t.h_prev[k]) * t.z[k] * (1.0 - t.z[k]))
                .collect();
            let da_c: Vec<f64> = (0..h)
                .map(|k| dh[k] * t.z[k] * (1.0 - t.cand[k] * t.cand[k]))
                .collect();
            let rh: Vec<f64> = (0..h).map(|k| t.r[k] * t.h_prev[k]).collect();
            // d(r ⊙ h_prev) = U_hᵀ da_c
            let mut d_rh = vec![0.0; h];
            for (k, &a) in da_c.iter().enumerate() {
                for (j, v) in d_rh.iter_mut().enumerate() {
                    *v += p.u_h.get(k, j) * a;
                }
            }
            let da_r: Vec<f64> = (0..h)
                .map(|k| d_rh[k] * t.h_prev[k] * t.r[k] * (1.0 - t.r[k]))
                .collect();
            for k in 0..h {
                dh_prev[k] += d_rh[k] * t.r[k];
            }
            for (gate, (da, hin)) in [(&da_z, &t.h_prev), (&da_r, &t.h_prev), (&da_c, &rh)]
                .into_iter()
                .enumerate()
            {
                for k in 0..h {
                    let a = da[k];
                    gb[gate][k] += a;
                    for j in 0..d {
                        gw[gate][k * d + j] += a * u[j];
                    }
                    for j in 0..h {
                        gu[gate][k * h + j] += a * hin[j];
                    }
                }
            }
            for (da, um) in [(&da_z, &p.u_z), (&da_r, &p.u_r)] {
                for (k, &a) in da.iter().enumerate() {
                    for (j, v) in dh_prev.iter_mut().enumerate() {
                        *v += um.get(k, j) * a;
                    }
                }
            }
            carry = dh_prev;
        }
    }

    let mut flat = Vec::with_capacity(p.num_params());
    for v in gw.iter().chain(gu.iter()).chain(gb.iter()) {
        flat.extend_from_slice(v);
    }
    flat.extend_from_slice(&g_out);
    flat.push(g_out_b);
    Ok(flat)
}

/// Trains on the given sequences of row indices into `x`/`y`.
pub fn fit_gru(
    x: &DenseMatrix,
    y: &[f64],
    sequences: &[Vec<usize>],
    cfg: &GruConfig,
    seed: u64,
) -> Result<GruParams> {
    if x.rows() != y.len() {
        return Err(Error::dims(format!(
            "{} rows but {} targets",
            x.rows(),
            y.len()
        )));
    }
    if sequences.iter().all(Vec::is_empty) {
        return Err(Error::EmptyDataset);
    }
    if !(cfg.learning_rate > 0.0 && cfg.learning_rate.is_finite()) || cfg.epochs == 0 {
        return Err(Error::arg(
            "GRU needs a positive learning rate and epoch count",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = GruParams::init(x.cols(), cfg.hidden_size, &mut rng)?;
    let mut flat = params.to_flat();
    let mut opt = Adam::new(flat.len(), cfg.learning_rate);
    let mut order: Vec<usize> = (0..sequences.len()).collect();
    let batch = cfg.batch_sequences.max(1);
    let initial_loss = gru_loss(&params, x, y, sequences);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            let seqs: Vec<Vec<usize>> = chunk.iter().map(|&s| sequences[s].clone()).collect();
            if seqs.iter().all(Vec::is_empty) {
                continue;
            }
            let g = gru_bptt_grad(&params, x, y, &seqs)?;
            opt.update(&mut flat, &g);
            if flat.iter().any(|v| !v.is_finite()) {
                return Err(Error::TrainingDiverged {
                    epoch,
                    loss: f64::NAN,
                });
            }
            params.set_flat(&flat);
        }
        let loss = gru_loss(&params, x, y, sequences);
        if diverged(loss, initial_loss) {
            return Err(Error::TrainingDiverged { epoch, loss });
        }
    }
    Ok(params)
}
