//! A small contextual encoder with hand-written backpropagation.
//!
//! Per token: `x0 = embed[id] + pos[t]`, one single-head softmax attention
//! mixing step with a residual connection, then a residual tanh
//! feed-forward layer. The sentence summary is attention pooling over the
//! token states with a learned query vector.

use ndarray::{Array1, Array2, ArrayViewD, ArrayViewMutD, Axis};
use rand::Rng;

use crate::error::{Error, Result};
use crate::math::{softmax, softmax_rows, softmax_rows_backward};
use crate::params::ParamSet;

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub embed: Array2<f64>,
    pub pos: Array2<f64>,
    pub wq: Array2<f64>,
    pub bq: Array1<f64>,
    pub wk: Array2<f64>,
    pub bk: Array1<f64>,
    pub wv: Array2<f64>,
    pub bv: Array1<f64>,
    pub wf: Array2<f64>,
    pub bf: Array1<f64>,
    pub pool_query: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSentence {
    /// Pooled sentence representation.
    pub summary: Array1<f64>,
    /// T x H contextual token states.
    pub token_states: Array2<f64>,
}

/// Intermediate activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct EncoderCache {
    ids: Vec<usize>,
    x0: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    attn: Array2<f64>,
    x1: Array2<f64>,
    ff: Array2<f64>,
    x2: Array2<f64>,
    pool: Array1<f64>,
}

impl EncoderParams {
    pub fn zeros(vocab_size: usize, max_seq_len: usize, hidden: usize) -> Self {
        let m = || Array2::zeros((hidden, hidden));
        let v = || Array1::zeros(hidden);
        EncoderParams {
            embed: Array2::zeros((vocab_size, hidden)),
            pos: Array2::zeros((max_seq_len, hidden)),
            wq: m(),
            bq: v(),
            wk: m(),
            bk: v(),
            wv: m(),
            bv: v(),
            wf: m(),
            bf: v(),
            pool_query: v(),
        }
    }

    pub fn random<R: Rng>(
        vocab_size: usize,
        max_seq_len: usize,
        hidden: usize,
        scale: f64,
        rng: &mut R,
    ) -> Self {
        let mut p = Self::zeros(vocab_size, max_seq_len, hidden);
        p.fill_uniform(rng, scale);
        p
    }

    pub fn hidden(&self) -> usize {
        self.wq.nrows()
    }

    pub fn vocab_size(&self) -> usize {
        self.embed.nrows()
    }

    pub fn max_seq_len(&self) -> usize {
        self.pos.nrows()
    }

    fn check_input(&self, ids: &[usize]) -> Result<()> {
        if ids.is_empty() || ids.len() > self.max_seq_len() {
            return Err(Error::Input(format!(
                "sequence length {} outside 1..={}",
                ids.len(),
                self.max_seq_len()
            )));
        }
        if let Some(&id) = ids.iter().find(|&&id| id >= self.vocab_size()) {
            return Err(Error::OutOfVocab {
                id,
                vocab: self.vocab_size(),
            });
        }
        Ok(())
    }

    pub fn encode(&self, ids: &[usize]) -> Result<EncodedSentence> {
        self.forward(ids).map(|(out, _)| out)
    }

    /// Summary vector of a definition text, D(c).
    pub fn encode_definition(&self, ids: &[usize]) -> Result<Array1<f64>> {
        self.encode(ids).map(|e| e.summary)
    }

    pub fn forward(&self, ids: &[usize]) -> Result<(EncodedSentence, EncoderCache)> {
        self.check_input(ids)?;
        let t = ids.len();
        let h = self.hidden();
        let mut x0 = Array2::zeros((t, h));
        for (i, &id) in ids.iter().enumerate() {
            let mut row = x0.row_mut(i);
            row += &self.embed.row(id);
            row += &self.pos.row(i);
        }
        let q = x0.dot(&self.wq) + &self.bq;
        let k = x0.dot(&self.wk) + &self.bk;
        let v = x0.dot(&self.wv) + &self.bv;
        let scores = q.dot(&k.t()) / (h as f64).sqrt();
        let attn = softmax_rows(&scores);
        let x1 = &x0 + &attn.dot(&v);
        let ff = (x1.dot(&self.wf) + &self.bf).mapv(f64::tanh);
        let x2 = &x1 + &ff;
        let pool = softmax(x2.dot(&self.pool_query).view());
        let summary = pool.dot(&x2);
        let out = EncodedSentence {
            summary,
            token_states: x2.clone(),
        };
        let cache = EncoderCache {
            ids: ids.to_vec(),
            x0,
            q,
            k,
            v,
            attn,
            x1,
            ff,
            x2,
            pool,
        };
        Ok((out, cache))
    }

    /// Accumulate parameter gradients into `grads` given upstream gradients
    /// for the summary vector and the token states.
    pub fn backward(
        &self,
        cache: &EncoderCache,
        d_summary: &Array1<f64>,
        d_states: &Array2<f64>,
        grads: &mut EncoderParams,
    ) {
        let h = self.hidden() as f64;
        let x2 = &cache.x2;

        // attention pooling
        let mut dx2 = d_states.clone();
        for (i, mut row) in dx2.axis_iter_mut(Axis(0)).enumerate() {
            row.scaled_add(cache.pool[i], d_summary);
        }
        let d_pool = x2.dot(d_summary);
        let inner = cache.pool.dot(&d_pool);
        let d_energy = &cache.pool * &(d_pool - inner);
        grads.pool_query += &d_energy.dot(x2);
        for (i, mut row) in dx2.axis_iter_mut(Axis(0)).enumerate() {
            row.scaled_add(d_energy[i], &self.pool_query);
        }

        // residual tanh feed-forward
        let d_pre = &dx2 * &cache.ff.mapv(|u| 1.0 - u * u);
        grads.wf += &cache.x1.t().dot(&d_pre);
        grads.bf += &d_pre.sum_axis(Axis(0));
        let dx1 = &dx2 + &d_pre.dot(&self.wf.t());

        // residual attention mixing
        let d_attn = dx1.dot(&cache.v.t());
        let dv = cache.attn.t().dot(&dx1);
        let d_scores = softmax_rows_backward(&cache.attn, &d_attn) / h.sqrt();
        let dq = d_scores.dot(&cache.k);
        let dk = d_scores.t().dot(&cache.q);
        let x0t = cache.x0.t();
        grads.wq += &x0t.dot(&dq);
        grads.bq += &dq.sum_axis(Axis(0));
        grads.wk += &x0t.dot(&dk);
        grads.bk += &dk.sum_axis(Axis(0));
        grads.wv += &x0t.dot(&dv);
        grads.bv += &dv.sum_axis(Axis(0));
        let dx0 = dx1 + dq.dot(&self.wq.t()) + dk.dot(&self.wk.t()) + dv.dot(&self.wv.t());

        for (i, &id) in cache.ids.iter().enumerate() {
            let row = dx0.row(i);
            let mut e = grads.embed.row_mut(id);
            e += &row;
            let mut p = grads.pos.row_mut(i);
            p += &row;
        }
    }
}

impl ParamSet for EncoderParams {
    fn tensors(&self) -> Vec<(String, ArrayViewD<'_, f64>)> {
        vec![
            ("embed".into(), self.embed.view().into_dyn()),
            ("pos".into(), self.pos.view().into_dyn()),
            ("wq".into(), self.wq.view().into_dyn()),
            ("bq".into(), self.bq.view().into_dyn()),
            ("wk".into(), self.wk.view().into_dyn()),
            ("bk".into(), self.bk.view().into_dyn()),
            ("wv".into(), self.wv.view().into_dyn()),
            ("bv".into(), self.bv.view().into_dyn()),
            ("wf".into(), self.wf.view().into_dyn()),
            ("bf".into(), self.bf.view().into_dyn()),
            ("pool_query".into(), self.pool_query.view().into_dyn()),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, f64>)> {
        vec![
            ("embed".into(), self.embed.view_mut().into_dyn()),
            ("pos".into(), self.pos.view_mut().into_dyn()),
            ("wq".into(), self.wq.view_mut().into_dyn()),
            ("bq".into(), self.bq.view_mut().into_dyn()),
            ("wk".into(), self.wk.view_mut().into_dyn()),
            ("bk".into(), self.bk.view_mut().into_dyn()),
            ("wv".into(), self.wv.view_mut().into_dyn()),
            ("bv".into(), self.bv.view_mut().into_dyn()),
            ("wf".into(), self.wf.view_mut().into_dyn()),
            ("bf".into(), self.bf.view_mut().into_dyn()),
            ("pool_query".into(), self.pool_query.view_mut().into_dyn()),
        ]
    }

    fn zeros_like(&self) -> Self {
        EncoderParams::zeros(self.vocab_size(), self.max_seq_len(), self.hidden())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random(seed: u64, scale: f64) -> EncoderParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        EncoderParams::random(10, 8, 4, scale, &mut rng)
    }

    #[test]
    fn zero_params_give_zero_summary() {
        let p = EncoderParams::zeros(10, 8, 4);
        let out = p.encode(&[3, 1, 4, 1, 5]).unwrap();
        assert!(out.summary.iter().all(|&v| v == 0.0));
        assert_eq!(out.token_states.dim(), (5, 4));
    }

    #[test]
    fn deterministic() {
        let p = random(1, 0.5);
        let a = p.encode(&[2, 7, 1]).unwrap();
        let b = p.encode(&[2, 7, 1]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn order_sensitive() {
        let p = random(2, 0.05);
        let ids = [2, 7, 1, 9];
        let fwd = p.encode(&ids).unwrap();
        let rev: Vec<usize> = ids.iter().rev().copied().collect();
        let bwd = p.encode(&rev).unwrap();
        assert_ne!(fwd.summary, bwd.summary);
    }

    #[test]
    fn input_errors() {
        let p = EncoderParams::zeros(10, 3, 4);
        assert!(matches!(p.encode(&[10]), Err(Error::OutOfVocab { id: 10, .. })));
        assert!(p.encode(&[]).is_err());
        assert!(p.encode(&[1, 2, 3, 4]).is_err());
    }

    /// Scalar probe of the outputs: fixed random linear functional.
    fn probe(out: &EncodedSentence, ws: &Array1<f64>, wt: &Array2<f64>) -> f64 {
        out.summary.dot(ws) + (&out.token_states * wt).sum()
    }

    #[test]
    fn backward_matches_central_differences() {
        let ids = [3, 1, 4, 1, 5];
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let ws = Array1::from_shape_fn(4, |_| rng.gen_range(-1.0..1.0));
        let wt = Array2::from_shape_fn((5, 4), |_| rng.gen_range(-1.0..1.0));
        let p = random(3, 0.5);
        let (_, cache) = p.forward(&ids).unwrap();
        let mut grads = p.zeros_like();
        p.backward(&cache, &ws, &wt, &mut grads);

        let step = 1e-6;
        let mut worst: f64 = 0.0;
        let mut perturbed = p.clone();
        let n_tensors = p.tensors().len();
        for ti in 0..n_tensors {
            let len = p.tensors()[ti].1.len();
            for j in 0..len {
                let orig = p.tensors()[ti].1.iter().nth(j).copied().unwrap();
                let set = |pp: &mut EncoderParams, val: f64| {
                    let mut ts = pp.tensors_mut();
                    *ts[ti].1.iter_mut().nth(j).unwrap() = val;
                };
                set(&mut perturbed, orig + step);
                let fp = probe(&perturbed.encode(&ids).unwrap(), &ws, &wt);
                set(&mut perturbed, orig - step);
                let fm = probe(&perturbed.encode(&ids).unwrap(), &ws, &wt);
                set(&mut perturbed, orig);
                let numeric = (fp - fm) / (2.0 * step);
                let analytic = grads.tensors()[ti].1.iter().nth(j).copied().unwrap();
                let err = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-6);
                worst = worst.max(err);
            }
        }
        assert!(worst < 1e-5, "max relative error {worst}");
    }
}
