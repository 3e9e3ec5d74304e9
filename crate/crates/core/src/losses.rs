//! Training objectives and their gradients w.r.t. the model's output
//! probabilities.
//!
//! * sentence loss: mean binary cross-entropy over the 19 sentence heads
//! * token loss: focal loss over the 19 token classes
//! * logic loss: product-logic penalty for the implication
//!   "sentence head predicts technique c => some token predicts c"
//! * definition loss: summed Euclidean distance between each technique's
//!   head weight vector and the encoding of its definition
//! * joint loss: `alpha*tok + beta*(sen + lambda*def) + gamma*logic`

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::catalog::{NUM_CLASSES, NUM_TECHNIQUES};
use crate::math::argmax;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub focal_gamma: f64,
    pub eps: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha: 0.8,
            beta: 0.2,
            lambda: 0.001,
            gamma: 0.001,
            focal_gamma: 2.0,
            eps: 1e-7,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), String> {
        let fields = [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("lambda", self.lambda),
            ("gamma", self.gamma),
            ("focal_gamma", self.focal_gamma),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v >= 0.0) {
                return Err(format!("{name} must be a finite non-negative number, got {v}"));
            }
        }
        if !(self.eps > 0.0 && self.eps < 0.5) {
            return Err(format!("eps must lie in (0, 0.5), got {}", self.eps));
        }
        Ok(())
    }
}

/// How the token-level evidence g_c is pooled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Grounding {
    /// Max of column c over tokens whose argmax class is c; 0 if there are none.
    #[default]
    Masked,
    /// Plain column max over all tokens.
    Plain,
}

fn clamp(p: f64, eps: f64) -> f64 {
    p.clamp(eps, 1.0 - eps)
}

/// d/dp of the clamp: 1 strictly inside, 0 where the clamp is active.
fn clamp_slope(p: f64, eps: f64) -> f64 {
    if p > eps && p < 1.0 - eps {
        1.0
    } else {
        0.0
    }
}

pub fn sentence_bce(probs: ArrayView1<f64>, labels: &[bool; NUM_CLASSES], eps: f64) -> f64 {
    let total: f64 = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = clamp(p, eps);
            if y {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    total / NUM_CLASSES as f64
}

pub fn sentence_bce_grad(
    probs: ArrayView1<f64>,
    labels: &[bool; NUM_CLASSES],
    eps: f64,
) -> Array1<f64> {
    let n = NUM_CLASSES as f64;
    Array1::from_iter(probs.iter().zip(labels).map(|(&raw, &y)| {
        let p = clamp(raw, eps);
        let d = if y { -1.0 / p } else { 1.0 / (1.0 - p) };
        d * clamp_slope(raw, eps) / n
    }))
}

/// Focal loss of one token given the probability of its gold class.
pub fn focal_term(p_true: f64, focal_gamma: f64, eps: f64) -> f64 {
    let p = clamp(p_true, eps);
    -(1.0 - p).powf(focal_gamma) * p.ln()
}

fn focal_term_grad(p_true: f64, focal_gamma: f64, eps: f64) -> f64 {
    let p = clamp(p_true, eps);
    let q = 1.0 - p;
    let from_weight = if focal_gamma == 0.0 {
        0.0
    } else {
        focal_gamma * q.powf(focal_gamma - 1.0) * p.ln()
    };
    (from_weight - q.powf(focal_gamma) / p) * clamp_slope(p_true, eps)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FocalLoss {
    pub value: f64,
    pub counted_tokens: usize,
    /// Set when every token was masked out; `value` is then 0.
    pub all_masked: bool,
}

/// Mean focal loss over unmasked tokens. `labels[t]` is `None` for tokens
/// excluded from the loss.
pub fn token_focal(
    token_probs: ArrayView2<f64>,
    labels: &[Option<usize>],
    focal_gamma: f64,
    eps: f64,
) -> FocalLoss {
    let mut total = 0.0;
    let mut n = 0;
    for (row, label) in token_probs.rows().into_iter().zip(labels) {
        if let Some(c) = *label {
            total += focal_term(row[c], focal_gamma, eps);
            n += 1;
        }
    }
    if n == 0 {
        return FocalLoss {
            value: 0.0,
            counted_tokens: 0,
            all_masked: true,
        };
    }
    FocalLoss {
        value: total / n as f64,
        counted_tokens: n,
        all_masked: false,
    }
}

pub fn token_focal_grad(
    token_probs: ArrayView2<f64>,
    labels: &[Option<usize>],
    focal_gamma: f64,
    eps: f64,
) -> Array2<f64> {
    let mut grad = Array2::zeros(token_probs.raw_dim());
    let n = labels.iter().take(token_probs.nrows()).filter(|l| l.is_some()).count();
    if n == 0 {
        return grad;
    }
    for (t, label) in labels.iter().enumerate().take(token_probs.nrows()) {
        if let Some(c) = *label {
            grad[[t, c]] = focal_term_grad(token_probs[[t, c]], focal_gamma, eps) / n as f64;
        }
    }
    grad
}

/// Token-level evidence g_c for class `class` (1..=18) and the token it was
/// taken from, if any.
pub fn grounded_token_prob(
    token_probs: ArrayView2<f64>,
    class: usize,
    grounding: Grounding,
) -> (f64, Option<usize>) {
    let mut best: Option<(usize, f64)> = None;
    for (t, row) in token_probs.rows().into_iter().enumerate() {
        if grounding == Grounding::Masked && argmax(row) != class {
            continue;
        }
        let p = row[class];
        if best.map_or(true, |(_, b)| p > b) {
            best = Some((t, p));
        }
    }
    match best {
        Some((t, p)) => (p, Some(t)),
        None => (0.0, None),
    }
}

/// P(F) for one technique: `f * (g - 1) + 1`.
pub fn implication_prob(f: f64, g: f64) -> f64 {
    f * (g - 1.0) + 1.0
}

pub fn logic_loss(
    sentence_probs: ArrayView1<f64>,
    token_probs: ArrayView2<f64>,
    grounding: Grounding,
    eps: f64,
) -> f64 {
    let total: f64 = (1..NUM_CLASSES)
        .map(|c| {
            let (g, _) = grounded_token_prob(token_probs, c, grounding);
            let p = implication_prob(sentence_probs[c], g).clamp(eps, 1.0);
            -p.ln()
        })
        .sum();
    total / NUM_TECHNIQUES as f64
}

/// Gradients of [`logic_loss`] w.r.t. the sentence and token probabilities.
/// The pooled max passes gradient only to its selected entry.
pub fn logic_loss_grad(
    sentence_probs: ArrayView1<f64>,
    token_probs: ArrayView2<f64>,
    grounding: Grounding,
    eps: f64,
) -> (Array1<f64>, Array2<f64>) {
    let mut d_sent = Array1::zeros(NUM_CLASSES);
    let mut d_tok = Array2::zeros(token_probs.raw_dim());
    for c in 1..NUM_CLASSES {
        let (g, source) = grounded_token_prob(token_probs, c, grounding);
        let f = sentence_probs[c];
        let p = implication_prob(f, g);
        if p <= eps {
            continue;
        }
        let d_p = -1.0 / (p * NUM_TECHNIQUES as f64);
        d_sent[c] = d_p * (g - 1.0);
        if let Some(t) = source {
            d_tok[[t, c]] = d_p * f;
        }
    }
    (d_sent, d_tok)
}

/// Sum over rows of the Euclidean distance between `w` and `d`.
pub fn definition_loss(w: ArrayView2<f64>, d: ArrayView2<f64>) -> f64 {
    assert_eq!(w.dim(), d.dim(), "definition loss shape mismatch");
    w.rows()
        .into_iter()
        .zip(d.rows())
        .map(|(a, b)| (&a - &b).mapv(|x| x * x).sum().sqrt())
        .sum()
}

/// Gradient w.r.t. `w`; the gradient w.r.t. `d` is its negation. Rows with
/// zero distance get a zero subgradient.
pub fn definition_loss_grad(w: ArrayView2<f64>, d: ArrayView2<f64>) -> Array2<f64> {
    let mut grad = &w - &d;
    for mut row in grad.rows_mut() {
        let norm = row.mapv(|x| x * x).sum().sqrt();
        if norm > 0.0 {
            row /= norm;
        }
    }
    grad
}

/// Component losses of one sentence or batch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    pub tok: f64,
    pub sen: f64,
    pub def: f64,
    pub logic: f64,
}

impl LossComponents {
    pub fn is_finite(&self) -> bool {
        self.tok.is_finite() && self.sen.is_finite() && self.def.is_finite() && self.logic.is_finite()
    }
}

pub fn joint_loss(c: &LossComponents, w: &LossWeights) -> f64 {
    w.alpha * c.tok + w.beta * (c.sen + c.def * w.lambda) + w.gamma * c.logic
}
