//! Classifier heads: 19 sigmoid sentence classifiers over the summary vector
//! (head 0 detects any propaganda, head `c` detects technique class `c`)
//! and one 19-way softmax token classifier over the token states.

use ndarray::{s, Array1, Array2, ArrayView2, ArrayViewD, ArrayViewMutD, Axis};
use rand::Rng;

use crate::catalog::NUM_CLASSES;
use crate::encoder::EncodedSentence;
use crate::math::{sigmoid, softmax_rows, softmax_rows_backward};
use crate::params::ParamSet;

#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    /// 19 x H; row `c` is the weight vector of sentence head `c`.
    pub sentence_w: Array2<f64>,
    pub sentence_b: Array1<f64>,
    /// 19 x H token classifier.
    pub token_w: Array2<f64>,
    pub token_b: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelOutput {
    /// Sigmoid outputs of the 19 sentence heads.
    pub sentence_probs: Array1<f64>,
    /// T x 19, each row a softmax distribution over token classes.
    pub token_probs: Array2<f64>,
}

impl ModelOutput {
    pub fn num_tokens(&self) -> usize {
        self.token_probs.nrows()
    }
}

impl HeadParams {
    pub fn zeros(hidden: usize) -> Self {
        HeadParams {
            sentence_w: Array2::zeros((NUM_CLASSES, hidden)),
            sentence_b: Array1::zeros(NUM_CLASSES),
            token_w: Array2::zeros((NUM_CLASSES, hidden)),
            token_b: Array1::zeros(NUM_CLASSES),
        }
    }

    pub fn random<R: Rng>(hidden: usize, scale: f64, rng: &mut R) -> Self {
        let mut p = Self::zeros(hidden);
        p.fill_uniform(rng, scale);
        p
    }

    pub fn hidden(&self) -> usize {
        self.sentence_w.ncols()
    }

    pub fn sentence_logits(&self, encoded: &EncodedSentence) -> Array1<f64> {
        self.sentence_w.dot(&encoded.summary) + &self.sentence_b
    }

    pub fn token_logits(&self, encoded: &EncodedSentence) -> Array2<f64> {
        encoded.token_states.dot(&self.token_w.t()) + &self.token_b
    }

    pub fn forward(&self, encoded: &EncodedSentence) -> ModelOutput {
        ModelOutput {
            sentence_probs: self.sentence_logits(encoded).mapv(sigmoid),
            token_probs: softmax_rows(&self.token_logits(encoded)),
        }
    }

    /// W(c) for the 18 techniques: sentence-head weight rows 1..=18, biases excluded.
    pub fn class_representations(&self) -> ArrayView2<'_, f64> {
        self.sentence_w.slice(s![1.., ..])
    }

    /// Backpropagate gradients w.r.t. the output probabilities. Accumulates
    /// head gradients and returns `(d_summary, d_token_states)`.
    pub fn backward(
        &self,
        encoded: &EncodedSentence,
        output: &ModelOutput,
        d_sentence_probs: &Array1<f64>,
        d_token_probs: &Array2<f64>,
        grads: &mut HeadParams,
    ) -> (Array1<f64>, Array2<f64>) {
        let p = &output.sentence_probs;
        let d_sent_logits = d_sentence_probs * &p.mapv(|v| v * (1.0 - v));
        for (c, &g) in d_sent_logits.iter().enumerate() {
            grads.sentence_w.row_mut(c).scaled_add(g, &encoded.summary);
        }
        grads.sentence_b += &d_sent_logits;
        let d_summary = self.sentence_w.t().dot(&d_sent_logits);

        let d_tok_logits = softmax_rows_backward(&output.token_probs, d_token_probs);
        grads.token_w += &d_tok_logits.t().dot(&encoded.token_states);
        grads.token_b += &d_tok_logits.sum_axis(Axis(0));
        let d_states = d_tok_logits.dot(&self.token_w);
        (d_summary, d_states)
    }
}

impl ParamSet for HeadParams {
    fn tensors(&self) -> Vec<(String, ArrayViewD<'_, f64>)> {
        vec![
            ("sentence_w".into(), self.sentence_w.view().into_dyn()),
            ("sentence_b".into(), self.sentence_b.view().into_dyn()),
            ("token_w".into(), self.token_w.view().into_dyn()),
            ("token_b".into(), self.token_b.view().into_dyn()),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, f64>)> {
        vec![
            ("sentence_w".into(), self.sentence_w.view_mut().into_dyn()),
            ("sentence_b".into(), self.sentence_b.view_mut().into_dyn()),
            ("token_w".into(), self.token_w.view_mut().into_dyn()),
            ("token_b".into(), self.token_b.view_mut().into_dyn()),
        ]
    }

    fn zeros_like(&self) -> Self {
        HeadParams::zeros(self.hidden())
    }
}
