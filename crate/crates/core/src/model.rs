//! The complete multi-task model: sentence encoder, classifier heads and the
//! definition encoder, plus the batch objective and its gradient.

use ndarray::{s, Array2, ArrayViewD, ArrayViewMutD};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::{TechniqueCatalog, NUM_CLASSES, NUM_TECHNIQUES};
use crate::corpus::SentenceExample;
use crate::encoder::EncoderParams;
use crate::error::Result;
use crate::heads::{HeadParams, ModelOutput};
use crate::losses::{
    definition_loss, definition_loss_grad, joint_loss, logic_loss, logic_loss_grad, sentence_bce,
    sentence_bce_grad, token_focal, token_focal_grad, Grounding, LossComponents, LossWeights,
};
use crate::params::ParamSet;
use crate::vocab::{Vocab, UNK};

/// Where the definition vectors D(c) come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DefinitionEncoderMode {
    /// Own trainable encoder, updated only through the definition loss.
    #[default]
    Separate,
    /// The sentence encoder itself.
    Shared,
    /// Own encoder, fixed at its initial values.
    Frozen,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub hidden: usize,
    pub max_seq_len: usize,
    pub init_scale: f64,
    pub definition_encoder: DefinitionEncoderMode,
}

impl ModelConfig {
    pub fn is_trainable(&self, name: &str) -> bool {
        !(self.definition_encoder == DefinitionEncoderMode::Frozen && name.starts_with("def_encoder."))
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: 32,
            max_seq_len: 256,
            init_scale: 0.05,
            definition_encoder: DefinitionEncoderMode::Separate,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub encoder: EncoderParams,
    pub heads: HeadParams,
    /// Absent when definitions are encoded by the sentence encoder.
    pub def_encoder: Option<EncoderParams>,
}

impl ParamSet for ModelParams {
    fn tensors(&self) -> Vec<(String, ArrayViewD<'_, f64>)> {
        let mut out = Vec::new();
        out.extend(self.encoder.tensors().into_iter().map(|(n, t)| (format!("encoder.{n}"), t)));
        out.extend(self.heads.tensors().into_iter().map(|(n, t)| (format!("heads.{n}"), t)));
        if let Some(d) = &self.def_encoder {
            out.extend(d.tensors().into_iter().map(|(n, t)| (format!("def_encoder.{n}"), t)));
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, f64>)> {
        let mut out = Vec::new();
        out.extend(self.encoder.tensors_mut().into_iter().map(|(n, t)| (format!("encoder.{n}"), t)));
        out.extend(self.heads.tensors_mut().into_iter().map(|(n, t)| (format!("heads.{n}"), t)));
        if let Some(d) = &mut self.def_encoder {
            out.extend(d.tensors_mut().into_iter().map(|(n, t)| (format!("def_encoder.{n}"), t)));
        }
        out
    }

    fn zeros_like(&self) -> Self {
        ModelParams {
            encoder: self.encoder.zeros_like(),
            heads: self.heads.zeros_like(),
            def_encoder: self.def_encoder.as_ref().map(|d| d.zeros_like()),
        }
    }
}

/// A sentence prepared for the model: vocabulary ids and loss targets for
/// the leading `max_seq_len` tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub ids: Vec<usize>,
    /// `None` marks tokens excluded from the token loss.
    pub token_labels: Vec<Option<usize>>,
    pub sentence_labels: [bool; NUM_CLASSES],
}

impl TrainingExample {
    pub fn from_sentence(ex: &SentenceExample, vocab: &Vocab, max_seq_len: usize) -> Self {
        let n = ex.model_len(max_seq_len);
        TrainingExample {
            ids: vocab.encode_tokens(&ex.tokens[..n]),
            token_labels: ex.token_labels[..n].iter().map(|&k| Some(k)).collect(),
            sentence_labels: ex.sentence_labels,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossOptions {
    pub weights: LossWeights,
    pub grounding: Grounding,
}

impl Default for LossOptions {
    fn default() -> Self {
        LossOptions {
            weights: LossWeights::default(),
            grounding: Grounding::Masked,
        }
    }
}

/// Definition vectors used by the definition loss.
#[derive(Debug, Clone, Copy)]
pub enum Definitions<'a> {
    /// Encode the definitions now and backpropagate through the encoder.
    Live,
    /// Precomputed vectors; gradients w.r.t. them are accumulated in
    /// [`Gradients::definitions`] instead.
    Fixed(&'a Array2<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub params: ModelParams,
    /// 18 x H gradient w.r.t. fixed definition vectors.
    pub definitions: Array2<f64>,
}

impl Gradients {
    pub fn zero(&mut self) {
        self.params.fill_zero();
        self.definitions.fill(0.0);
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchLoss {
    pub components: LossComponents,
    pub joint: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub vocab: Vocab,
    pub config: ModelConfig,
    pub params: ModelParams,
    /// Token ids of the 18 technique definitions, in technique order.
    pub definition_ids: Vec<Vec<usize>>,
}

pub fn definition_ids(vocab: &Vocab, catalog: &TechniqueCatalog, max_seq_len: usize) -> Vec<Vec<usize>> {
    catalog
        .definitions()
        .map(|d| {
            let mut ids = vocab.encode_text(d);
            ids.truncate(max_seq_len);
            if ids.is_empty() {
                ids.push(UNK);
            }
            ids
        })
        .collect()
}

impl Model {
    /// Fresh model with all parameters drawn from uniform(-scale, scale).
    pub fn new<R: Rng>(vocab: Vocab, catalog: &TechniqueCatalog, config: ModelConfig, rng: &mut R) -> Self {
        let v = vocab.len();
        let scale = config.init_scale;
        let encoder = EncoderParams::random(v, config.max_seq_len, config.hidden, scale, rng);
        let heads = HeadParams::random(config.hidden, scale, rng);
        let def_encoder = match config.definition_encoder {
            DefinitionEncoderMode::Shared => None,
            _ => Some(EncoderParams::random(v, config.max_seq_len, config.hidden, scale, rng)),
        };
        let definition_ids = definition_ids(&vocab, catalog, config.max_seq_len);
        Model {
            vocab,
            config,
            params: ModelParams {
                encoder,
                heads,
                def_encoder,
            },
            definition_ids,
        }
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients {
            params: self.params.zeros_like(),
            definitions: Array2::zeros((NUM_TECHNIQUES, self.config.hidden)),
        }
    }

    /// Whether the optimizer should update the named tensor.
    pub fn is_trainable(&self, name: &str) -> bool {
        self.config.is_trainable(name)
    }

    fn definition_encoder(&self) -> &EncoderParams {
        self.params.def_encoder.as_ref().unwrap_or(&self.params.encoder)
    }

    pub fn predict(&self, ids: &[usize]) -> Result<ModelOutput> {
        let enc = self.params.encoder.encode(ids)?;
        Ok(self.params.heads.forward(&enc))
    }

    pub fn predict_sentence(&self, ex: &SentenceExample) -> Result<ModelOutput> {
        let n = ex.model_len(self.config.max_seq_len);
        self.predict(&self.vocab.encode_tokens(&ex.tokens[..n]))
    }

    /// D(c) for every technique, 18 x H.
    pub fn definition_vectors(&self) -> Result<Array2<f64>> {
        let enc = self.definition_encoder();
        let mut out = Array2::zeros((NUM_TECHNIQUES, self.config.hidden));
        for (i, ids) in self.definition_ids.iter().enumerate() {
            out.row_mut(i).assign(&enc.encode_definition(ids)?);
        }
        Ok(out)
    }

    /// Backpropagate a gradient w.r.t. the definition vectors into the
    /// encoder that produced them.
    pub fn definition_backward(&self, d_defs: &Array2<f64>, grads: &mut ModelParams) -> Result<()> {
        let enc = self.definition_encoder();
        let target = match grads.def_encoder.as_mut() {
            Some(d) if self.params.def_encoder.is_some() => d,
            _ => &mut grads.encoder,
        };
        for (i, ids) in self.definition_ids.iter().enumerate() {
            let (_, cache) = enc.forward(ids)?;
            let zeros = Array2::zeros((ids.len(), self.config.hidden));
            enc.backward(&cache, &d_defs.row(i).to_owned(), &zeros, target);
        }
        Ok(())
    }

    /// Mean per-sentence objective over the batch plus the definition term.
    /// When `grads` is given, the gradient of the joint loss is added to it.
    pub fn batch_loss(
        &self,
        batch: &[&TrainingExample],
        opts: &LossOptions,
        definitions: Definitions<'_>,
        mut grads: Option<&mut Gradients>,
    ) -> Result<BatchLoss> {
        let w = &opts.weights;
        let eps = w.eps;
        let scale = 1.0 / batch.len().max(1) as f64;
        let mut sum = LossComponents::default();

        for ex in batch {
            let (enc, cache) = self.params.encoder.forward(&ex.ids)?;
            let out = self.params.heads.forward(&enc);
            let sp = out.sentence_probs.view();
            let tp = out.token_probs.view();
            let tok = token_focal(tp, &ex.token_labels, w.focal_gamma, eps).value;
            let sen = sentence_bce(sp, &ex.sentence_labels, eps);
            let logic = logic_loss(sp, tp, opts.grounding, eps);
            sum.tok += tok;
            sum.sen += sen;
            sum.logic += logic;

            if let Some(g) = grads.as_deref_mut() {
                let (dl_sent, dl_tok) = logic_loss_grad(sp, tp, opts.grounding, eps);
                let d_sent = (sentence_bce_grad(sp, &ex.sentence_labels, eps) * w.beta
                    + dl_sent * w.gamma)
                    * scale;
                let d_tok = (token_focal_grad(tp, &ex.token_labels, w.focal_gamma, eps) * w.alpha
                    + dl_tok * w.gamma)
                    * scale;
                let (d_summary, d_states) =
                    self.params
                        .heads
                        .backward(&enc, &out, &d_sent, &d_tok, &mut g.params.heads);
                self.params
                    .encoder
                    .backward(&cache, &d_summary, &d_states, &mut g.params.encoder);
            }
        }

        let mut components = LossComponents {
            tok: sum.tok * scale,
            sen: sum.sen * scale,
            logic: sum.logic * scale,
            def: 0.0,
        };

        let live;
        let defs = match definitions {
            Definitions::Fixed(d) => d,
            Definitions::Live => {
                live = self.definition_vectors()?;
                &live
            }
        };
        let class_w = self.params.heads.class_representations();
        components.def = definition_loss(class_w, defs.view());
        if let Some(g) = grads {
            let coef = w.beta * w.lambda;
            let d_w = definition_loss_grad(class_w, defs.view()) * coef;
            let mut rows = g.params.heads.sentence_w.slice_mut(s![1.., ..]);
            rows += &d_w;
            let d_defs = -d_w;
            match definitions {
                Definitions::Fixed(_) => g.definitions += &d_defs,
                Definitions::Live => {
                    if self.config.definition_encoder != DefinitionEncoderMode::Frozen {
                        self.definition_backward(&d_defs, &mut g.params)?;
                    }
                }
            }
        }

        Ok(BatchLoss {
            joint: joint_loss(&components, w),
            components,
        })
    }

    /// Sum of per-class distances between W(c) and D(c).
    pub fn definition_distance(&self) -> Result<f64> {
        let d = self.definition_vectors()?;
        Ok(definition_loss(self.params.heads.class_representations(), d.view()))
    }
}
