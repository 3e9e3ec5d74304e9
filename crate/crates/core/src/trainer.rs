//! Mini-batch training with AdamW, linear warmup, per-epoch dev evaluation
//! and early stopping on the mean of Spans and Full-task F1.

use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::TechniqueCatalog;
use crate::corpus::{Corpus, SentenceExample};
use crate::error::{Error, Result};
use crate::eval::{evaluate, Consistency, ScoreReport};
use crate::inference::{predict_examples, Thresholds};
use crate::losses::{Grounding, LossComponents, LossWeights};
use crate::model::{
    BatchLoss, DefinitionEncoderMode, Definitions, LossOptions, Model, ModelConfig, TrainingExample,
};
use crate::optim::{learning_rate, AdamConfig, AdamW, LrSchedule};
use crate::params::ParamSet;
use crate::vocab::Vocab;

/// When the definition vectors D(c) are recomputed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DefinitionRefresh {
    /// Once per epoch. The definition encoder is updated at the end of the
    /// epoch from the gradient accumulated over all batches.
    #[default]
    Epoch,
    /// Re-encoded on every step with exact gradient flow.
    Step,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub warmup_steps: usize,
    /// Epochs without strict improvement before stopping; 0 disables.
    pub early_stop_patience: usize,
    pub seed: u64,
    pub lr_schedule: LrSchedule,
    pub hidden: usize,
    pub max_seq_len: usize,
    pub init_scale: f64,
    pub definition_encoder: DefinitionEncoderMode,
    pub definition_refresh: DefinitionRefresh,
    pub grounding: Grounding,
    pub weights: LossWeights,
    pub adam: AdamConfig,
    pub thresholds: Thresholds,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let model = ModelConfig::default();
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 16,
            max_epochs: 20,
            warmup_steps: 500,
            early_stop_patience: 5,
            seed: 42,
            lr_schedule: LrSchedule::Constant,
            hidden: model.hidden,
            max_seq_len: model.max_seq_len,
            init_scale: model.init_scale,
            definition_encoder: model.definition_encoder,
            definition_refresh: DefinitionRefresh::Epoch,
            grounding: Grounding::Masked,
            weights: LossWeights::default(),
            adam: AdamConfig::default(),
            thresholds: Thresholds::default(),
        }
    }
}

impl TrainConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: TrainConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            hidden: self.hidden,
            max_seq_len: self.max_seq_len,
            init_scale: self.init_scale,
            definition_encoder: self.definition_encoder,
        }
    }

    pub fn loss_options(&self) -> LossOptions {
        LossOptions {
            weights: self.weights,
            grounding: self.grounding,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.hidden == 0 || self.max_seq_len == 0 {
            return bad("hidden and max_seq_len must be positive");
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return bad("init_scale must be non-negative");
        }
        let a = &self.adam;
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) {
            return bad("adam betas must lie in [0, 1)");
        }
        if !(a.eps > 0.0) || !(a.weight_decay >= 0.0) {
            return bad("adam eps must be positive and weight_decay non-negative");
        }
        for (name, t) in [("slc", self.thresholds.slc), ("flc", self.thresholds.flc)] {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::Config(format!("{name} threshold must lie in [0, 1]")));
            }
        }
        self.weights.validate().map_err(Error::Config)
    }
}

/// Dev metrics recorded after each epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DevMetrics {
    pub slc_f1: f64,
    pub spans_f1: f64,
    pub full_f1: f64,
    pub consistency: Consistency,
    pub consistency_gated: Consistency,
    pub token_accuracy: f64,
}

impl From<&ScoreReport> for DevMetrics {
    fn from(r: &ScoreReport) -> Self {
        DevMetrics {
            slc_f1: r.slc.f1,
            spans_f1: r.spans.f1,
            full_f1: r.full.f1,
            consistency: r.consistency_ungated,
            consistency_gated: r.consistency_gated,
            token_accuracy: r.token_accuracy,
        }
    }
}

impl DevMetrics {
    pub fn selection_score(&self) -> f64 {
        0.5 * (self.spans_f1 + self.full_f1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Batch means of the loss components.
    pub loss: LossComponents,
    pub joint: f64,
    pub final_lr: f64,
    pub dev: DevMetrics,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    EarlyStopping,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were returned; `None` for the initial model.
    pub best_epoch: Option<usize>,
    pub stop_reason: StopReason,
    pub steps: usize,
    pub train_sentences: usize,
    pub dev_sentences: usize,
}

impl TrainReport {
    pub fn to_table(&self) -> String {
        use std::fmt::Write as _;
        let mut out = format!(
            "{:>5} {:>9} {:>9} {:>9} {:>9} {:>9} {:>7} {:>7} {:>7} {:>7}\n",
            "epoch", "L_tok", "L_sen", "L_def", "L_logic", "L_j", "SLC", "Spans", "Full", "M_C"
        );
        for e in &self.epochs {
            let marker = if Some(e.epoch) == self.best_epoch { " *" } else { "" };
            writeln!(
                out,
                "{:>5} {:>9.5} {:>9.5} {:>9.4} {:>9.5} {:>9.5} {:>7.2} {:>7.2} {:>7.2} {:>7.2}{}",
                e.epoch,
                e.loss.tok,
                e.loss.sen,
                e.loss.def,
                e.loss.logic,
                e.joint,
                100.0 * e.dev.slc_f1,
                100.0 * e.dev.spans_f1,
                100.0 * e.dev.full_f1,
                100.0 * e.dev.consistency.value,
                marker
            )
            .unwrap();
        }
        writeln!(out, "stop: {:?}, best epoch: {:?}", self.stop_reason, self.best_epoch).unwrap();
        out
    }
}

pub struct Trained {
    pub model: Model,
    pub report: TrainReport,
}

fn training_examples(model: &Model, examples: &[SentenceExample]) -> Vec<TrainingExample> {
    examples
        .iter()
        .map(|e| TrainingExample::from_sentence(e, &model.vocab, model.config.max_seq_len))
        .collect()
}

fn non_finite(epoch: usize, batch: usize, loss: &BatchLoss) -> Error {
    let c = &loss.components;
    Error::NonFiniteLoss {
        epoch,
        batch,
        tok: c.tok,
        sen: c.sen,
        def: c.def,
        logic: c.logic,
    }
}

/// Train on `train` and select the best epoch on `dev`.
pub fn train(train: &Corpus, dev: &Corpus, catalog: &TechniqueCatalog, config: &TrainConfig) -> Result<Trained> {
    config.validate()?;
    let train_examples = train.examples().examples;
    if train_examples.is_empty() {
        return Err(Error::Input("training split has no sentences".into()));
    }
    let dev_examples = dev.examples().examples;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let vocab = Vocab::build(&train_examples, catalog);
    let mut model = Model::new(vocab, catalog, config.model_config(), &mut rng);
    let data = training_examples(&model, &train_examples);
    let opts = config.loss_options();

    // Shared mode has no separate encoder to refresh, so definitions are
    // always encoded live there.
    let epoch_refresh = config.definition_refresh == DefinitionRefresh::Epoch
        && config.definition_encoder != DefinitionEncoderMode::Shared;
    let mode = model.config;
    let main_filter = move |name: &str| {
        mode.is_trainable(name) && !(epoch_refresh && name.starts_with("def_encoder."))
    };
    let def_filter = move |name: &str| mode.is_trainable(name) && name.starts_with("def_encoder.");

    let mut opt = AdamW::new(&model.params, config.adam);
    let mut def_opt = AdamW::new(&model.params, config.adam);
    let mut grads = model.zero_gradients();
    let batches_per_epoch = data.len().div_ceil(config.batch_size);
    let total_steps = batches_per_epoch * config.max_epochs;

    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epochs = Vec::new();
    let mut best: Option<(f64, usize, Model)> = None;
    let mut stale = 0usize;
    let mut stop_reason = StopReason::MaxEpochs;
    let mut step = 0usize;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let cached: Option<Array2<f64>> = if epoch_refresh {
            Some(model.definition_vectors()?)
        } else {
            None
        };
        let mut def_grad = Array2::<f64>::zeros((crate::catalog::NUM_TECHNIQUES, config.hidden));
        let mut sum = LossComponents::default();
        let mut joint_sum = 0.0;
        let mut lr = 0.0;

        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&TrainingExample> = chunk.iter().map(|&i| &data[i]).collect();
            grads.zero();
            let defs = cached.as_ref().map_or(Definitions::Live, Definitions::Fixed);
            let loss = model.batch_loss(&batch, &opts, defs, Some(&mut grads))?;
            if !loss.components.is_finite() || !loss.joint.is_finite() || !grads.params.is_finite() {
                return Err(non_finite(epoch, b + 1, &loss));
            }
            step += 1;
            lr = learning_rate(config.learning_rate, step, config.warmup_steps, config.lr_schedule, total_steps);
            opt.step(&mut model.params, &grads.params, lr, main_filter);
            def_grad += &grads.definitions;
            sum.tok += loss.components.tok;
            sum.sen += loss.components.sen;
            sum.def += loss.components.def;
            sum.logic += loss.components.logic;
            joint_sum += loss.joint;
        }

        if epoch_refresh && config.definition_encoder == DefinitionEncoderMode::Separate {
            let mut g = model.params.zeros_like();
            model.definition_backward(&def_grad, &mut g)?;
            def_opt.step(&mut model.params, &g, lr, def_filter);
        }

        let n = batches_per_epoch as f64;
        let preds = predict_examples(&model, dev_examples.clone(), config.thresholds)?;
        let dev_metrics = DevMetrics::from(&evaluate(&preds, &dev.fragments));
        let record = EpochRecord {
            epoch,
            loss: LossComponents {
                tok: sum.tok / n,
                sen: sum.sen / n,
                def: sum.def / n,
                logic: sum.logic / n,
            },
            joint: joint_sum / n,
            final_lr: lr,
            dev: dev_metrics,
        };
        log::info!(
            "epoch {epoch}: L_j {:.5} spans {:.4} full {:.4} M_C {:.4}",
            record.joint,
            dev_metrics.spans_f1,
            dev_metrics.full_f1,
            dev_metrics.consistency.value
        );
        epochs.push(record);

        let score = dev_metrics.selection_score();
        if best.as_ref().is_none_or(|(s, _, _)| score > *s) {
            best = Some((score, epoch, model.clone()));
            stale = 0;
        } else {
            stale += 1;
            if config.early_stop_patience > 0 && stale >= config.early_stop_patience {
                stop_reason = StopReason::EarlyStopping;
                break;
            }
        }
    }

    let (best_epoch, model) = match best {
        Some((_, e, m)) => (Some(e), m),
        None => (None, model),
    };
    Ok(Trained {
        model,
        report: TrainReport {
            epochs,
            best_epoch,
            stop_reason,
            steps: step,
            train_sentences: data.len(),
            dev_sentences: dev_examples.len(),
        },
    })
}

/// One seed of the paired consistency experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyTrial {
    pub seed: u64,
    pub baseline: Consistency,
    pub with_logic: Consistency,
    pub baseline_gated: Consistency,
    pub with_logic_gated: Consistency,
}

impl ConsistencyTrial {
    pub fn improved(&self) -> bool {
        self.with_logic.value >= self.baseline.value
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyExperiment {
    pub gamma: f64,
    pub trials: Vec<ConsistencyTrial>,
}

impl ConsistencyExperiment {
    pub fn improved_count(&self) -> usize {
        self.trials.iter().filter(|t| t.improved()).count()
    }

    pub fn to_table(&self) -> String {
        use std::fmt::Write as _;
        let mut out = format!("{:>6} {:>10} {:>10} {:>6}\n", "seed", "gamma=0", format!("gamma={}", self.gamma), "up");
        for t in &self.trials {
            writeln!(
                out,
                "{:>6} {:>10.2} {:>10.2} {:>6}",
                t.seed,
                100.0 * t.baseline.value,
                100.0 * t.with_logic.value,
                if t.improved() { "yes" } else { "no" }
            )
            .unwrap();
        }
        writeln!(out, "improved in {}/{} seeds", self.improved_count(), self.trials.len()).unwrap();
        out
    }
}

/// For each seed train twin models that differ only in the logic weight
/// (0 versus `gamma`) and report their final dev consistency.
pub fn consistency_experiment(
    train_corpus: &Corpus,
    dev: &Corpus,
    catalog: &TechniqueCatalog,
    config: &TrainConfig,
    gamma: f64,
    seeds: &[u64],
) -> Result<ConsistencyExperiment> {
    if seeds.len() < 2 {
        return Err(Error::Config("consistency experiment needs at least two seeds".into()));
    }
    let arm = |seed: u64, g: f64| -> Result<(Consistency, Consistency)> {
        let mut c = config.clone();
        c.seed = seed;
        c.weights.gamma = g;
        let trained = train(train_corpus, dev, catalog, &c)?;
        let last = trained.report.epochs.last().map(|e| e.dev);
        let best = trained.report.best_epoch.and_then(|b| trained.report.epochs.get(b - 1)).map(|e| e.dev);
        let m = best.or(last).map_or((Consistency::default(), Consistency::default()), |d| {
            (d.consistency, d.consistency_gated)
        });
        Ok(m)
    };
    let jobs: Vec<(u64, f64)> = seeds.iter().flat_map(|&s| [(s, 0.0), (s, gamma)]).collect();
    let results: Vec<Result<(Consistency, Consistency)>> = jobs.par_iter().map(|&(s, g)| arm(s, g)).collect();
    let mut trials = Vec::with_capacity(seeds.len());
    let mut it = results.into_iter();
    for &seed in seeds {
        let (baseline, baseline_gated) = it.next().expect("paired result")?;
        let (with_logic, with_logic_gated) = it.next().expect("paired result")?;
        trials.push(ConsistencyTrial {
            seed,
            baseline,
            with_logic,
            baseline_gated,
            with_logic_gated,
        });
    }
    Ok(ConsistencyExperiment { gamma, trials })
}
