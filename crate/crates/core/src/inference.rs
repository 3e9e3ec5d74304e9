//! Constrained decoding of model outputs into sentence decisions, token
//! classes and character-level fragments.
//!
//! A sentence is labeled propagandistic when head 0 exceeds the SLC
//! threshold. Each technique head is binarized against the FLC threshold and
//! the binary gate multiplies that technique's column of every token
//! distribution (the "none" column is left as is) before the token argmax.

use std::collections::BTreeSet;

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::catalog::{TechniqueId, NUM_CLASSES};
use crate::corpus::{Corpus, Fragment, SentenceExample};
use crate::error::Result;
use crate::heads::ModelOutput;
use crate::math::argmax;
use crate::model::Model;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    pub slc: f64,
    pub flc: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { slc: 0.7, flc: 0.9 }
    }
}

/// Sentence-level threshold used for the ungated consistency measurement.
pub const UNGATED_SENTENCE_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentencePrediction {
    pub doc_id: String,
    pub slc: bool,
    /// Decoded class for every token of the sentence, including tokens past
    /// the model's maximum length (always 0).
    pub token_classes: Vec<usize>,
    pub fragments: Vec<Fragment>,
    /// Techniques whose sentence gate is open.
    pub y_c: BTreeSet<usize>,
    /// Technique classes among the decoded tokens.
    pub y_t: BTreeSet<usize>,
}

fn token_classes_from<F>(output: &ModelOutput, example: &SentenceExample, mut row_class: F) -> Vec<usize>
where
    F: FnMut(ArrayView1<f64>) -> usize,
{
    let mut classes: Vec<usize> = output.token_probs.rows().into_iter().map(&mut row_class).collect();
    classes.resize(example.tokens.len(), 0);
    classes
}

/// Merge maximal runs of adjacent tokens sharing a non-zero class.
pub fn fragments_from_tokens(example: &SentenceExample, classes: &[usize]) -> Vec<Fragment> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < classes.len() {
        let c = classes[i];
        if c == 0 {
            i += 1;
            continue;
        }
        let start = i;
        while i + 1 < classes.len() && classes[i + 1] == c {
            i += 1;
        }
        let technique = TechniqueId::from_class(c).expect("token class in 1..=18");
        out.push(Fragment::new(
            example.doc_id.clone(),
            example.tokens[start].begin,
            example.tokens[i].end,
            technique,
        ));
        i += 1;
    }
    out
}

fn assemble(
    example: &SentenceExample,
    slc: bool,
    token_classes: Vec<usize>,
    y_c: BTreeSet<usize>,
) -> SentencePrediction {
    let fragments = fragments_from_tokens(example, &token_classes);
    let y_t = token_classes.iter().copied().filter(|&c| c > 0).collect();
    SentencePrediction {
        doc_id: example.doc_id.clone(),
        slc,
        token_classes,
        fragments,
        y_c,
        y_t,
    }
}

/// Binary technique gates: 1 where the sentence head exceeds `threshold`.
pub fn technique_gates(sentence_probs: &Array1<f64>, threshold: f64) -> [bool; NUM_CLASSES] {
    let mut gates = [false; NUM_CLASSES];
    for c in 1..NUM_CLASSES {
        gates[c] = sentence_probs[c] > threshold;
    }
    gates
}

pub fn decode(output: &ModelOutput, example: &SentenceExample, thresholds: Thresholds) -> SentencePrediction {
    let slc = output.sentence_probs[0] > thresholds.slc;
    let gates = technique_gates(&output.sentence_probs, thresholds.flc);
    let classes = token_classes_from(output, example, |row| {
        let mut adjusted = row.to_owned();
        for c in 1..NUM_CLASSES {
            if !gates[c] {
                adjusted[c] = 0.0;
            }
        }
        argmax(adjusted.view())
    });
    let y_c = (1..NUM_CLASSES).filter(|&c| gates[c]).collect();
    assemble(example, slc, classes, y_c)
}

/// Plain token argmax with no sentence-level gating; `y_c` holds the
/// techniques whose sentence probability exceeds `sentence_threshold`.
pub fn decode_unconstrained(
    output: &ModelOutput,
    example: &SentenceExample,
    slc_threshold: f64,
    sentence_threshold: f64,
) -> SentencePrediction {
    let slc = output.sentence_probs[0] > slc_threshold;
    let classes = token_classes_from(output, example, argmax);
    let y_c = (1..NUM_CLASSES)
        .filter(|&c| output.sentence_probs[c] > sentence_threshold)
        .collect();
    assemble(example, slc, classes, y_c)
}

/// Gated and ungated decodings for every sentence of a corpus.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusPredictions {
    pub examples: Vec<SentenceExample>,
    pub gated: Vec<SentencePrediction>,
    pub ungated: Vec<SentencePrediction>,
}

impl CorpusPredictions {
    pub fn fragments(&self) -> Vec<Fragment> {
        self.gated.iter().flat_map(|p| p.fragments.iter().cloned()).collect()
    }
}

pub fn predict_examples(
    model: &Model,
    examples: Vec<SentenceExample>,
    thresholds: Thresholds,
) -> Result<CorpusPredictions> {
    let mut gated = Vec::with_capacity(examples.len());
    let mut ungated = Vec::with_capacity(examples.len());
    for ex in &examples {
        let out = model.predict_sentence(ex)?;
        gated.push(decode(&out, ex, thresholds));
        ungated.push(decode_unconstrained(&out, ex, thresholds.slc, UNGATED_SENTENCE_THRESHOLD));
    }
    Ok(CorpusPredictions {
        examples,
        gated,
        ungated,
    })
}

pub fn predict_corpus(model: &Model, corpus: &Corpus, thresholds: Thresholds) -> Result<CorpusPredictions> {
    predict_examples(model, corpus.examples().examples, thresholds)
}
