use crate::error::{Error, Result};
use crate::numeric::{Matrix, SeededRng};

pub const DEFAULT_INIT_SCALE: f64 = 0.08;

/// `W·x + U·h + b` for one LSTM gate.
#[derive(Debug, Clone, PartialEq)]
pub struct Gate {
    pub w: Matrix,
    pub u: Matrix,
    pub b: Vec<f64>,
}

impl Gate {
    fn zeros(input: usize, hidden: usize) -> Self {
        Gate {
            w: Matrix::zeros(hidden, input),
            u: Matrix::zeros(hidden, hidden),
            b: vec![0.0; hidden],
        }
    }

    pub(crate) fn preactivation(&self, x: &[f64], h: &[f64]) -> Vec<f64> {
        let mut z = self.b.clone();
        self.w.matvec_acc(x, &mut z);
        self.u.matvec_acc(h, &mut z);
        z
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub input: Gate,
    pub forget: Gate,
    pub output: Gate,
    pub cell: Gate,
}

impl LstmParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        LstmParams {
            input: Gate::zeros(input, hidden),
            forget: Gate::zeros(input, hidden),
            output: Gate::zeros(input, hidden),
            cell: Gate::zeros(input, hidden),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input.w.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.input.w.rows()
    }

    pub(crate) fn gates(&self) -> [&Gate; 4] {
        [&self.input, &self.forget, &self.output, &self.cell]
    }

    pub(crate) fn gates_mut(&mut self) -> [&mut Gate; 4] {
        [&mut self.input, &mut self.forget, &mut self.output, &mut self.cell]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub vocab_size: usize,
    pub emb_dim: usize,
    pub hidden_dim: usize,
}

/// Every trainable tensor of the encoder-decoder.
///
/// The decoder LSTM consumes `[embedding(y_prev); context]`, so its input
/// width is `emb_dim + hidden_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub embedding: Matrix,
    pub encoder: LstmParams,
    pub decoder: LstmParams,
    pub out_proj: Matrix,
    pub out_bias: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(dims: ModelDims) -> Self {
        let ModelDims {
            vocab_size,
            emb_dim,
            hidden_dim,
        } = dims;
        ModelParams {
            embedding: Matrix::zeros(vocab_size, emb_dim),
            encoder: LstmParams::zeros(emb_dim, hidden_dim),
            decoder: LstmParams::zeros(emb_dim + hidden_dim, hidden_dim),
            out_proj: Matrix::zeros(vocab_size, hidden_dim),
            out_bias: vec![0.0; vocab_size],
        }
    }

    /// Uniform in `[-scale, scale]`, drawn in [`ModelParams::tensors`] order.
    pub fn init(dims: ModelDims, scale: f64, rng: &mut SeededRng) -> Self {
        let mut m = ModelParams::zeros(dims);
        for t in m.tensors_mut() {
            for v in t.iter_mut() {
                *v = rng.symmetric(scale);
            }
        }
        m
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            vocab_size: self.embedding.rows(),
            emb_dim: self.embedding.cols(),
            hidden_dim: self.encoder.hidden_dim(),
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.embedding.rows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.encoder.hidden_dim()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dims();
        let expect = ModelParams::zeros(d);
        let shapes_ok = self
            .tensors()
            .iter()
            .zip(expect.tensors())
            .all(|(a, b)| a.len() == b.len())
            && self.encoder.input_dim() == d.emb_dim
            && self.decoder.input_dim() == d.emb_dim + d.hidden_dim
            && self.decoder.hidden_dim() == d.hidden_dim
            && self.out_proj.shape() == (d.vocab_size, d.hidden_dim);
        if !shapes_ok {
            return Err(Error::InvalidShape(format!(
                "inconsistent model tensors for dims {d:?}"
            )));
        }
        Ok(())
    }

    /// Fixed tensor order: embedding; encoder gates i, f, o, c (each W, U,
    /// b); decoder gates in the same order; output projection; output bias.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = vec![self.embedding.as_slice()];
        for lstm in [&self.encoder, &self.decoder] {
            for g in lstm.gates() {
                out.push(g.w.as_slice());
                out.push(g.u.as_slice());
                out.push(&g.b);
            }
        }
        out.push(self.out_proj.as_slice());
        out.push(&self.out_bias);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = vec![self.embedding.as_mut_slice()];
        for lstm in [&mut self.encoder, &mut self.decoder] {
            for g in lstm.gates_mut() {
                out.push(g.w.as_mut_slice());
                out.push(g.u.as_mut_slice());
                out.push(&mut g.b);
            }
        }
        out.push(self.out_proj.as_mut_slice());
        out.push(&mut self.out_bias);
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::InvalidShape(format!(
                "{} values for {} parameters",
                flat.len(),
                self.num_params()
            )));
        }
        let mut rest = flat;
        for t in self.tensors_mut() {
            let (head, tail) = rest.split_at(t.len());
            t.copy_from_slice(head);
            rest = tail;
        }
        Ok(())
    }

    pub fn zeros_like(&self) -> Self {
        ModelParams::zeros(self.dims())
    }

    pub(crate) fn add_assign(&mut self, other: &ModelParams) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub(crate) fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            for x in t.iter_mut() {
                *x *= factor;
            }
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }
}
