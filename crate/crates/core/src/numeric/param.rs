use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::matrix::Matrix;

/// Handle into a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamId(pub(crate) usize);

/// A named parameter with its gradient and Adam moment buffers.
///
/// All four matrices share one shape. Non-trainable blocks never change
/// value and are skipped by the optimizer and the gradient checker.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ParamBlock {
    pub name: String,
    pub value: Matrix,
    pub grad: Matrix,
    pub adam_m: Matrix,
    pub adam_v: Matrix,
    pub step_count: u64,
    pub trainable: bool,
}

impl ParamBlock {
    fn new(name: String, value: Matrix, trainable: bool) -> Self {
        let (r, c) = (value.rows(), value.cols());
        ParamBlock {
            name,
            value,
            grad: Matrix::zeros(r, c),
            adam_m: Matrix::zeros(r, c),
            adam_v: Matrix::zeros(r, c),
            step_count: 0,
            trainable,
        }
    }
}

/// Owner of every parameter block in a model; single writer during training.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ParamStore {
    blocks: Vec<ParamBlock>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore { blocks: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix, trainable: bool) -> ParamId {
        self.blocks.push(ParamBlock::new(name.into(), value, trainable));
        ParamId(self.blocks.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn block(&self, id: ParamId) -> &ParamBlock {
        &self.blocks[id.0]
    }

    pub fn block_mut(&mut self, id: ParamId) -> &mut ParamBlock {
        &mut self.blocks[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Matrix {
        &self.blocks[id.0].value
    }

    pub fn blocks(&self) -> impl Iterator<Item = &ParamBlock> {
        self.blocks.iter()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.blocks.len()).map(ParamId)
    }

    pub fn zero_grads(&mut self) {
        for b in &mut self.blocks {
            b.grad.fill(0.0);
        }
    }

    pub fn scale_grads(&mut self, k: f64) {
        for b in &mut self.blocks {
            b.grad.scale_assign(k);
        }
    }

    /// L2 norm over all gradients jointly.
    pub fn grad_global_norm(&self) -> f64 {
        self.blocks.iter().map(|b| b.grad.sum_squares()).sum::<f64>().sqrt()
    }

    /// If the joint gradient L2 norm exceeds `threshold`, scale every
    /// gradient by `threshold / norm`; otherwise leave them unchanged.
    pub fn clip_global_norm(&mut self, threshold: f64) {
        let norm = self.grad_global_norm();
        if norm > threshold {
            self.scale_grads(threshold / norm);
        }
    }

    /// One Adam update with bias correction over every trainable block.
    /// Increments each block's step count and zeroes its gradient.
    pub fn adam_step(&mut self, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Result<()> {
        for b in &mut self.blocks {
            if !b.trainable {
                continue;
            }
            if !b.grad.is_finite() {
                return Err(Error::Training(format!("non-finite gradient in block '{}'", b.name)));
            }
            b.step_count += 1;
            let t = b.step_count as i32;
            let m_corr = 1.0 - beta1.powi(t);
            let v_corr = 1.0 - beta2.powi(t);
            let value = b.value.data_mut();
            let grad = b.grad.data_mut();
            let m = b.adam_m.data_mut();
            let v = b.adam_v.data_mut();
            for i in 0..value.len() {
                let g = grad[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                let m_hat = m[i] / m_corr;
                let v_hat = v[i] / v_corr;
                value[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                grad[i] = 0.0;
            }
        }
        Ok(())
    }

    /// Copy of every block's current values, for best-epoch snapshots.
    pub fn snapshot_values(&self) -> Vec<Matrix> {
        self.blocks.iter().map(|b| b.value.clone()).collect()
    }

    pub fn restore_values(&mut self, values: &[Matrix]) -> Result<()> {
        if values.len() != self.blocks.len() {
            return Err(Error::Dimension(format!(
                "snapshot has {} blocks, store has {}",
                values.len(),
                self.blocks.len()
            )));
        }
        for (b, v) in self.blocks.iter_mut().zip(values.iter()) {
            if !b.value.same_shape(v) {
                return Err(Error::Dimension(format!("snapshot shape mismatch in block '{}'", b.name)));
            }
            b.value = v.clone();
        }
        Ok(())
    }
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(value: f64) -> (ParamStore, ParamId) {
        let mut store = ParamStore::new();
        let id = store.add("w", Matrix::column(&[value]), true);
        (store, id)
    }

    #[test]
    fn adam_first_step_is_bias_corrected() {
        // First step equals -lr * g / (|g| + eps).
        let (mut store, id) = scalar_store(1.0);
        store.block_mut(id).grad = Matrix::column(&[0.1]);
        store.adam_step(5e-4, ADAM_BETA1, ADAM_BETA2, ADAM_EPS).unwrap();
        let expected = 1.0 - 5e-4 * 0.1 / (0.1 + ADAM_EPS);
        let got = store.value(id).data()[0];
        assert!((got - expected).abs() < 1e-15);
        assert!((1.0 - got - 5e-4).abs() < 1e-10);
    }

    #[test]
    fn adam_zero_gradient_zero_moments_is_identity() {
        let (mut store, id) = scalar_store(2.5);
        store.adam_step(5e-4, ADAM_BETA1, ADAM_BETA2, ADAM_EPS).unwrap();
        assert_eq!(store.value(id).data()[0], 2.5);
    }

    #[test]
    fn adam_matches_scripted_recurrence() {
        // Independent scalar Adam recurrence, three steps with constant gradient.
        let g = 0.3;
        let lr = 1e-2;
        let (mut w, mut m, mut v) = (1.0_f64, 0.0_f64, 0.0_f64);
        for t in 1..=3 {
            m = ADAM_BETA1 * m + (1.0 - ADAM_BETA1) * g;
            v = ADAM_BETA2 * v + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = m / (1.0 - ADAM_BETA1.powi(t));
            let v_hat = v / (1.0 - ADAM_BETA2.powi(t));
            w -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }

        let (mut store, id) = scalar_store(1.0);
        for _ in 0..3 {
            store.block_mut(id).grad = Matrix::column(&[g]);
            store.adam_step(lr, ADAM_BETA1, ADAM_BETA2, ADAM_EPS).unwrap();
        }
        assert!((store.value(id).data()[0] - w).abs() < 1e-12);
    }

    #[test]
    fn adam_rejects_non_finite_gradient() {
        let (mut store, id) = scalar_store(1.0);
        store.block_mut(id).grad = Matrix::column(&[f64::NAN]);
        let err = store.adam_step(1e-3, ADAM_BETA1, ADAM_BETA2, ADAM_EPS).unwrap_err();
        assert!(err.to_string().contains("'w'"));
    }

    #[test]
    fn adam_skips_frozen_blocks() {
        let mut store = ParamStore::new();
        let id = store.add("emb", Matrix::column(&[1.0]), false);
        store.block_mut(id).grad = Matrix::column(&[5.0]);
        store.adam_step(1e-1, ADAM_BETA1, ADAM_BETA2, ADAM_EPS).unwrap();
        assert_eq!(store.value(id).data()[0], 1.0);
        assert_eq!(store.block(id).step_count, 0);
    }

    #[test]
    fn clip_halves_when_norm_is_double() {
        let mut store = ParamStore::new();
        let a = store.add("a", Matrix::column(&[0.0, 0.0]), true);
        store.block_mut(a).grad = Matrix::column(&[6.0, 8.0]); // norm 10
        store.clip_global_norm(5.0);
        assert_eq!(store.block(a).grad.data(), &[3.0, 4.0]);
    }

    #[test]
    fn clip_leaves_small_gradients_unchanged() {
        let mut store = ParamStore::new();
        let a = store.add("a", Matrix::column(&[0.0]), true);
        store.block_mut(a).grad = Matrix::column(&[3.0]);
        store.clip_global_norm(5.0);
        assert_eq!(store.block(a).grad.data(), &[3.0]);
    }

    #[test]
    fn clip_exact_norm_is_unchanged() {
        // Two blocks with grads [3,4] and [0]: joint norm exactly 5.
        let mut store = ParamStore::new();
        let a = store.add("a", Matrix::column(&[0.0, 0.0]), true);
        let b = store.add("b", Matrix::column(&[0.0]), true);
        store.block_mut(a).grad = Matrix::column(&[3.0, 4.0]);
        store.block_mut(b).grad = Matrix::column(&[0.0]);
        assert_eq!(store.grad_global_norm(), 5.0);
        store.clip_global_norm(5.0);
        assert_eq!(store.block(a).grad.data(), &[3.0, 4.0]);
    }

    #[test]
    fn clip_is_idempotent() {
        let mut store = ParamStore::new();
        let a = store.add("a", Matrix::column(&[0.0, 0.0, 0.0]), true);
        store.block_mut(a).grad = Matrix::column(&[2.0, -7.0, 11.0]);
        store.clip_global_norm(5.0);
        let once = store.block(a).grad.clone();
        store.clip_global_norm(5.0);
        let twice = store.block(a).grad.clone();
        for (x, y) in once.data().iter().zip(twice.data().iter()) {
            assert!((x - y).abs() < 1e-15);
        }
    }
}
