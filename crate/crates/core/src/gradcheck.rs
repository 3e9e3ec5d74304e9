//! Central finite-difference verification of analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::{TechniqueCatalog, NUM_CLASSES};
use crate::error::Result;
use crate::model::{
    DefinitionEncoderMode, Definitions, LossOptions, Model, ModelConfig, ModelParams, TrainingExample,
};
use crate::params::ParamSet;
use crate::vocab::Vocab;

pub const DEFAULT_STEP: f64 = 1e-5;
/// Denominator floor of the relative error, so that gradients that are
/// zero on both sides compare as exact.
pub const RELATIVE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorCheck {
    pub name: String,
    pub len: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub tensors: Vec<TensorCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.tensors.iter().all(|t| t.passed)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.tensors.iter().map(|t| t.max_rel_error).fold(0.0, f64::max)
    }

    pub fn failing(&self) -> impl Iterator<Item = &TensorCheck> {
        self.tensors.iter().filter(|t| !t.passed)
    }

    pub fn to_table(&self) -> String {
        let mut out = format!("{:<28} {:>8} {:>12} {:>12}  status\n", "tensor", "size", "max_rel", "max_abs");
        for t in &self.tensors {
            out.push_str(&format!(
                "{:<28} {:>8} {:>12.3e} {:>12.3e}  {}\n",
                t.name,
                t.len,
                t.max_rel_error,
                t.max_abs_error,
                if t.passed { "ok" } else { "FAIL" }
            ));
        }
        out
    }
}

fn set_element<P: ParamSet>(p: &mut P, tensor: usize, index: usize, value: f64) {
    let mut ts = p.tensors_mut();
    *ts[tensor].1.iter_mut().nth(index).expect("index in range") = value;
}

/// Compare `analytic` against central differences of `loss` around `params`,
/// element by element. Tensors for which `skip` returns true are omitted.
pub fn check_gradients<P, F>(
    params: &P,
    analytic: &P,
    mut loss: F,
    tolerance: f64,
    step: f64,
    skip: impl Fn(&str) -> bool,
) -> GradCheckReport
where
    P: ParamSet + Clone,
    F: FnMut(&P) -> f64,
{
    let mut probe = params.clone();
    let names: Vec<String> = params.tensors().into_iter().map(|(n, _)| n).collect();
    let grads: Vec<Vec<f64>> = analytic
        .tensors()
        .into_iter()
        .map(|(_, t)| t.iter().copied().collect())
        .collect();
    let values: Vec<Vec<f64>> = params
        .tensors()
        .into_iter()
        .map(|(_, t)| t.iter().copied().collect())
        .collect();

    let mut tensors = Vec::new();
    for (ti, name) in names.iter().enumerate() {
        if skip(name) {
            continue;
        }
        let mut max_rel: f64 = 0.0;
        let mut max_abs: f64 = 0.0;
        for (j, &orig) in values[ti].iter().enumerate() {
            set_element(&mut probe, ti, j, orig + step);
            let up = loss(&probe);
            set_element(&mut probe, ti, j, orig - step);
            let down = loss(&probe);
            set_element(&mut probe, ti, j, orig);
            let numeric = (up - down) / (2.0 * step);
            let a = grads[ti][j];
            let abs = (numeric - a).abs();
            max_abs = max_abs.max(abs);
            max_rel = max_rel.max(abs / numeric.abs().max(a.abs()).max(RELATIVE_FLOOR));
        }
        tensors.push(TensorCheck {
            name: name.clone(),
            len: values[ti].len(),
            max_rel_error: max_rel,
            max_abs_error: max_abs,
            passed: max_rel <= tolerance,
        });
    }
    GradCheckReport { tolerance, tensors }
}

/// Check the gradient of the joint loss on `batch` for every trainable
/// tensor of `model`, with definitions encoded inside the loss.
pub fn gradient_check(
    model: &Model,
    batch: &[&TrainingExample],
    opts: &LossOptions,
    tolerance: f64,
) -> Result<GradCheckReport> {
    let mut grads = model.zero_gradients();
    model.batch_loss(batch, opts, Definitions::Live, Some(&mut grads))?;
    let mut scratch = model.clone();
    let loss = move |p: &ModelParams| {
        scratch.params.clone_from(p);
        scratch
            .batch_loss(batch, opts, Definitions::Live, None)
            .map(|l| l.joint)
            .unwrap_or(f64::NAN)
    };
    Ok(check_gradients(
        &model.params,
        &grads.params,
        loss,
        tolerance,
        DEFAULT_STEP,
        |name| !model.is_trainable(name),
    ))
}

/// A random model with hidden size 4 and a batch of 5-token sentences for
/// gradient checking. The first sentence is always labelled propagandistic.
pub fn tiny_problem(seed: u64, batch_size: usize, mode: DefinitionEncoderMode) -> (Model, Vec<TrainingExample>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = Vocab::from_words(
        "the a of to and propaganda fear nation enemy always".split_whitespace(),
    );
    let config = ModelConfig {
        hidden: 4,
        max_seq_len: 8,
        init_scale: 0.5,
        definition_encoder: mode,
    };
    let model = Model::new(vocab, &TechniqueCatalog::default(), config, &mut rng);
    let batch = (0..batch_size.max(1))
        .map(|i| {
            let mut sentence_labels = [false; NUM_CLASSES];
            for l in sentence_labels.iter_mut() {
                *l = rng.gen_bool(0.3);
            }
            sentence_labels[0] |= i == 0;
            TrainingExample {
                ids: (0..5).map(|_| rng.gen_range(0..model.vocab.len())).collect(),
                token_labels: (0..5).map(|_| Some(rng.gen_range(0..NUM_CLASSES))).collect(),
                sentence_labels,
            }
        })
        .collect();
    (model, batch)
}
