//! Dense f64 linear algebra, activations, seeded randomness and a
//! finite-difference gradient checker.
//!
//! Vectors are plain `[f64]` slices; matrices are row-major [`Matrix`] values.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::InvalidShape(format!(
                "{rows}x{cols} matrix needs {} elements, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::InvalidShape(format!(
                "ragged rows: expected {cols} columns, found {}",
                bad.len()
            )));
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// `out += self · x`. Shapes are the caller's responsibility.
    pub(crate) fn matvec_acc(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols)) {
            *o += dot(row, x);
        }
    }

    /// `out += selfᵀ · v`.
    pub(crate) fn matvec_t_acc(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for (&vi, row) in v.iter().zip(self.data.chunks_exact(self.cols)) {
            if vi == 0.0 {
                continue;
            }
            for (o, &w) in out.iter_mut().zip(row) {
                *o += vi * w;
            }
        }
    }

    /// `self += a ⊗ b`.
    pub(crate) fn add_outer(&mut self, a: &[f64], b: &[f64]) {
        debug_assert_eq!(a.len(), self.rows);
        debug_assert_eq!(b.len(), self.cols);
        for (&ai, row) in a.iter().zip(self.data.chunks_exact_mut(self.cols)) {
            if ai == 0.0 {
                continue;
            }
            for (w, &bj) in row.iter_mut().zip(b) {
                *w += ai * bj;
            }
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `W·x + b`.
pub fn affine(w: &Matrix, x: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if w.cols != x.len() || w.rows != b.len() {
        return Err(Error::InvalidShape(format!(
            "affine: W is {}x{}, x has length {}, b has length {}",
            w.rows,
            w.cols,
            x.len(),
            b.len()
        )));
    }
    let mut out = b.to_vec();
    w.matvec_acc(x, &mut out);
    Ok(out)
}

pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(x: &[f64]) -> Vec<f64> {
    x.iter().copied().map(sigmoid_scalar).collect()
}

pub fn tanh(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| v.tanh()).collect()
}

/// Max-subtracted softmax.
pub fn softmax(scores: &[f64]) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::InvalidShape("softmax of an empty vector".into()));
    }
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = out.iter().sum();
    for o in &mut out {
        *o /= total;
    }
    Ok(out)
}

pub fn log_softmax(scores: &[f64]) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::InvalidShape("log-softmax of an empty vector".into()));
    }
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_z = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
    Ok(scores.iter().map(|s| s - log_z).collect())
}

/// Index of the first maximal element (lowest index wins ties).
pub fn argmax(xs: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &x) in xs.iter().enumerate() {
        match best {
            Some(b) if xs[b] >= x => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Index of the first minimal element (lowest index wins ties).
pub fn argmin(xs: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &x) in xs.iter().enumerate() {
        match best {
            Some(b) if xs[b] <= x => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Deterministic generator backed by ChaCha8 (`rand_chacha`), whose output
/// stream is fixed by the seed on every platform.
///
/// Integer draws go through `u64` ranges so results do not depend on the
/// target's pointer width.
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub const ALGORITHM: &'static str = "chacha8";

    pub fn new(seed: u64) -> Self {
        SeededRng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// A generator for a sub-task, keyed by `(seed, stream...)`.
    pub fn derive(seed: u64, stream: &[u64]) -> Self {
        let mut h = seed ^ 0x9e37_79b9_7f4a_7c15;
        for &s in stream {
            h = splitmix64(h ^ s);
        }
        SeededRng::new(h)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn algorithm(&self) -> &'static str {
        Self::ALGORITHM
    }

    /// Uniform in `[0, n)`. Panics if `n == 0`.
    pub fn index(&mut self, n: usize) -> usize {
        self.inner.gen_range(0..n as u64) as usize
    }

    /// Uniform in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    /// Uniform in `[-scale, scale]`.
    pub fn symmetric(&mut self, scale: f64) -> f64 {
        (2.0 * self.unit() - 1.0) * scale
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.index(i + 1);
            items.swap(i, j);
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Compare an analytic gradient against central differences of `loss`.
///
/// Returns the maximum over parameters of
/// `|g_a - g_n| / max(|g_a|, |g_n|, 1e-8)`.
pub fn grad_check<F>(mut loss: F, analytic: &[f64], params: &[f64], epsilon: f64) -> Result<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(epsilon > 0.0) {
        return Err(Error::InvalidInput(format!(
            "grad_check epsilon must be positive, got {epsilon}"
        )));
    }
    if analytic.len() != params.len() {
        return Err(Error::InvalidShape(format!(
            "grad_check: {} analytic gradients for {} parameters",
            analytic.len(),
            params.len()
        )));
    }
    let mut probe = params.to_vec();
    let mut worst = 0.0f64;
    for (k, &g_a) in analytic.iter().enumerate() {
        let original = probe[k];
        probe[k] = original + epsilon;
        let plus = loss(&probe);
        probe[k] = original - epsilon;
        let minus = loss(&probe);
        probe[k] = original;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite loss while probing parameter {k}"
            )));
        }
        let g_n = (plus - minus) / (2.0 * epsilon);
        let rel = (g_a - g_n).abs() / g_a.abs().max(g_n.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn affine_examples() {
        let id = Matrix::identity(2);
        assert_eq!(affine(&id, &[3.0, -1.0], &[0.0, 0.0]).unwrap(), vec![3.0, -1.0]);
        let zero = Matrix::zeros(2, 2);
        assert_eq!(affine(&zero, &[5.0, 7.0], &[1.0, 2.0]).unwrap(), vec![1.0, 2.0]);
        let w = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(affine(&w, &[1.0, 1.0], &[1.0, 0.0]).unwrap(), vec![4.0, 7.0]);
    }

    #[test]
    fn affine_shape_error_names_shapes() {
        let w = Matrix::zeros(2, 3);
        let err = affine(&w, &[1.0, 2.0], &[0.0, 0.0]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("2x3") && msg.contains("length 2"), "{msg}");
    }

    #[test]
    fn activations() {
        assert_eq!(sigmoid(&[0.0, 0.0]), vec![0.5, 0.5]);
        assert_eq!(tanh(&[0.0]), vec![0.0]);
        // 1 / (1 + e^-2)
        assert!((sigmoid(&[2.0])[0] - 0.880_797_077_977_882_3).abs() < 1e-15);
        let sat = sigmoid(&[-800.0, 800.0]);
        assert!(sat.iter().all(|v| v.is_finite()));
        assert_eq!(sat[1], 1.0);
    }

    #[test]
    fn softmax_examples() {
        let third = 1.0 / 3.0;
        assert!(close(&softmax(&[0.0; 3]).unwrap(), &[third; 3], 1e-15));
        assert_eq!(softmax(&[42.5]).unwrap(), vec![1.0]);
        let p = softmax(&[1.0, 2.0, 3.0]).unwrap();
        assert!(close(
            &p,
            &[0.090_030_573_170_380_46, 0.244_728_471_054_797_6, 0.665_240_955_774_821_9],
            1e-15
        ));
        assert!(matches!(softmax(&[]), Err(Error::InvalidShape(_))));
    }

    #[test]
    fn softmax_large_magnitude_is_stable() {
        let p = softmax(&[1000.0, -1000.0, 999.0]).unwrap();
        assert!(p.iter().all(|v| v.is_finite()));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), Some(1));
        assert_eq!(argmin(&[2.0, 1.0, 1.0]), Some(1));
        assert_eq!(argmax(&[]), None);
    }

    #[test]
    fn grad_check_quadratic_and_constant() {
        let params = [1.0, -2.0];
        let err = grad_check(|p| p.iter().map(|x| x * x).sum(), &[2.0, -4.0], &params, 1e-4).unwrap();
        assert!(err < 1e-8, "{err}");
        let err = grad_check(|_| 3.0, &[0.0, 0.0], &params, 1e-4).unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn grad_check_reports_non_finite_parameter() {
        let err = grad_check(|p| if p[1] > -2.0 { f64::NAN } else { 0.0 }, &[0.0, 0.0], &[1.0, -2.0], 1e-3)
            .unwrap_err();
        assert!(err.to_string().contains("parameter 1"), "{err}");
        assert!(grad_check(|_| 0.0, &[0.0], &[0.0], 0.0).is_err());
    }

    #[test]
    fn rng_is_reproducible() {
        let mut a = SeededRng::new(7);
        let mut b = SeededRng::new(7);
        let xs: Vec<u64> = (0..16).map(|_| a.index(1000) as u64).collect();
        let ys: Vec<u64> = (0..16).map(|_| b.index(1000) as u64).collect();
        assert_eq!(xs, ys);
        assert_eq!(a.algorithm(), "chacha8");
        assert_ne!(SeededRng::derive(7, &[1]).index(1 << 30), SeededRng::derive(7, &[2]).index(1 << 30));
    }

    proptest! {
        #[test]
        fn softmax_sums_to_one(xs in prop::collection::vec(-1000.0f64..1000.0, 1..200)) {
            let p = softmax(&xs).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(p.iter().all(|v| *v >= 0.0));
        }

        #[test]
        fn softmax_shift_invariant(xs in prop::collection::vec(-50.0f64..50.0, 1..50), c in -100.0f64..100.0) {
            let shifted: Vec<f64> = xs.iter().map(|x| x + c).collect();
            prop_assert!(close(&softmax(&xs).unwrap(), &softmax(&shifted).unwrap(), 1e-12));
        }

        #[test]
        fn affine_is_linear(
            w in prop::collection::vec(-2.0f64..2.0, 12),
            x in prop::collection::vec(-2.0f64..2.0, 4),
            y in prop::collection::vec(-2.0f64..2.0, 4),
            alpha in -3.0f64..3.0,
            beta in -3.0f64..3.0,
        ) {
            let w = Matrix::from_vec(3, 4, w).unwrap();
            let zero = [0.0; 3];
            let mix: Vec<f64> = x.iter().zip(&y).map(|(a, b)| alpha * a + beta * b).collect();
            let lhs = affine(&w, &mix, &zero).unwrap();
            let fx = affine(&w, &x, &zero).unwrap();
            let fy = affine(&w, &y, &zero).unwrap();
            let rhs: Vec<f64> = fx.iter().zip(&fy).map(|(a, b)| alpha * a + beta * b).collect();
            prop_assert!(close(&lhs, &rhs, 1e-9));
        }

        #[test]
        fn ops_are_pure(xs in prop::collection::vec(-10.0f64..10.0, 1..20)) {
            prop_assert_eq!(softmax(&xs).unwrap(), softmax(&xs).unwrap());
            prop_assert_eq!(sigmoid(&xs), sigmoid(&xs));
        }
    }
}
