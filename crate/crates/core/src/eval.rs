//! Scoring: sentence-level P/R/F1, fragment-level partial-credit P/R/F1
//! (spans and full task), the prediction-consistency metric and the token
//! confusion matrix.
//!
//! Fragment credit is measured on character sets. A predicted fragment earns
//! the fraction of its characters covered by gold fragments of a matching
//! label; precision is the mean credit over predictions. Recall is the same
//! computation with the roles swapped. In spans mode every label matches.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::catalog::{TechniqueId, NUM_CLASSES};
use crate::corpus::{Fragment, SentenceExample};
use crate::inference::{CorpusPredictions, SentencePrediction};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// No predictions: precision reported as 0.
    pub empty_predictions: bool,
    /// No gold items: recall reported as 0.
    pub empty_gold: bool,
}

pub fn harmonic_mean(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

impl Prf {
    fn new(precision: f64, recall: f64, empty_predictions: bool, empty_gold: bool) -> Self {
        Prf {
            precision,
            recall,
            f1: harmonic_mean(precision, recall),
            empty_predictions,
            empty_gold,
        }
    }
}

/// Binary sentence-level scores with propaganda as the positive class.
pub fn score_slc(predicted: &[bool], gold: &[bool]) -> Prf {
    assert_eq!(predicted.len(), gold.len(), "sentence lists must align");
    let tp = predicted.iter().zip(gold).filter(|(&p, &g)| p && g).count() as f64;
    let n_pred = predicted.iter().filter(|&&p| p).count();
    let n_gold = gold.iter().filter(|&&g| g).count();
    let precision = if n_pred > 0 { tp / n_pred as f64 } else { 0.0 };
    let recall = if n_gold > 0 { tp / n_gold as f64 } else { 0.0 };
    Prf::new(precision, recall, n_pred == 0, n_gold == 0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlcMode {
    /// Location only.
    Spans,
    /// Location and technique.
    Full,
}

/// Sorted, disjoint half-open intervals.
#[derive(Debug, Clone, Default)]
struct IntervalSet(Vec<(usize, usize)>);

impl IntervalSet {
    fn from_spans(mut spans: Vec<(usize, usize)>) -> Self {
        spans.sort_unstable();
        let mut merged: Vec<(usize, usize)> = Vec::with_capacity(spans.len());
        for (b, e) in spans {
            match merged.last_mut() {
                Some(last) if b <= last.1 => last.1 = last.1.max(e),
                _ => merged.push((b, e)),
            }
        }
        IntervalSet(merged)
    }

    fn covered(&self, begin: usize, end: usize) -> usize {
        let start = self.0.partition_point(|&(_, e)| e <= begin);
        self.0[start..]
            .iter()
            .take_while(|&&(b, _)| b < end)
            .map(|&(b, e)| e.min(end) - b.max(begin))
            .sum()
    }
}

type CoverageKey<'a> = (&'a str, Option<TechniqueId>);

fn coverage<'a>(fragments: &'a [Fragment], mode: FlcMode) -> BTreeMap<CoverageKey<'a>, IntervalSet> {
    let mut spans: BTreeMap<CoverageKey<'a>, Vec<(usize, usize)>> = BTreeMap::new();
    for f in fragments {
        let label = match mode {
            FlcMode::Spans => None,
            FlcMode::Full => Some(f.technique),
        };
        spans.entry((f.doc_id.as_str(), label)).or_default().push((f.begin, f.end));
    }
    spans
        .into_iter()
        .map(|(k, v)| (k, IntervalSet::from_spans(v)))
        .collect()
}

/// Credit of each fragment in `items` against the union of `reference`.
fn credits(items: &[Fragment], reference: &[Fragment], mode: FlcMode) -> Vec<f64> {
    let cover = coverage(reference, mode);
    items
        .iter()
        .map(|f| {
            let label = match mode {
                FlcMode::Spans => None,
                FlcMode::Full => Some(f.technique),
            };
            let hit = cover
                .get(&(f.doc_id.as_str(), label))
                .map_or(0, |set| set.covered(f.begin, f.end));
            hit as f64 / f.len() as f64
        })
        .collect()
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlcScore {
    pub overall: Prf,
    /// Per technique (full mode only), in technique order.
    pub per_technique: Option<Vec<Prf>>,
}

pub fn score_flc(predicted: &[Fragment], gold: &[Fragment], mode: FlcMode) -> FlcScore {
    let p_credit = credits(predicted, gold, mode);
    let r_credit = credits(gold, predicted, mode);
    let overall = Prf::new(
        mean(&p_credit),
        mean(&r_credit),
        predicted.is_empty(),
        gold.is_empty(),
    );
    let per_technique = (mode == FlcMode::Full).then(|| {
        TechniqueId::all()
            .map(|t| {
                let pick = |frags: &[Fragment], credit: &[f64]| -> Vec<f64> {
                    frags
                        .iter()
                        .zip(credit)
                        .filter(|(f, _)| f.technique == t)
                        .map(|(_, &c)| c)
                        .collect()
                };
                let pc = pick(predicted, &p_credit);
                let rc = pick(gold, &r_credit);
                Prf::new(mean(&pc), mean(&rc), pc.is_empty(), rc.is_empty())
            })
            .collect()
    });
    FlcScore {
        overall,
        per_technique,
    }
}

/// Fraction of token-level technique classes that the sentence level also
/// predicts; `None` when `y_t` is empty.
pub fn sentence_consistency(y_c: &BTreeSet<usize>, y_t: &BTreeSet<usize>) -> Option<f64> {
    if y_t.is_empty() {
        return None;
    }
    let hits = y_t.iter().filter(|c| y_c.contains(c)).count();
    Some(hits as f64 / y_t.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Consistency {
    /// Mean over sentences with non-empty `y_t`; 0 if there are none.
    pub value: f64,
    pub sentences: usize,
}

pub fn consistency_metric<'a, I>(pairs: I) -> Consistency
where
    I: IntoIterator<Item = (&'a BTreeSet<usize>, &'a BTreeSet<usize>)>,
{
    let values: Vec<f64> = pairs
        .into_iter()
        .filter_map(|(y_c, y_t)| sentence_consistency(y_c, y_t))
        .collect();
    Consistency {
        value: mean(&values),
        sentences: values.len(),
    }
}

pub fn prediction_consistency(preds: &[SentencePrediction]) -> Consistency {
    consistency_metric(preds.iter().map(|p| (&p.y_c, &p.y_t)))
}

pub type ConfusionMatrix = [[usize; NUM_CLASSES]; NUM_CLASSES];

/// Rows are gold token classes, columns predicted classes.
pub fn confusion_matrix<'a, I>(pairs: I) -> ConfusionMatrix
where
    I: IntoIterator<Item = (&'a [usize], &'a [usize])>,
{
    let mut m = [[0; NUM_CLASSES]; NUM_CLASSES];
    for (gold, pred) in pairs {
        assert_eq!(gold.len(), pred.len(), "token sequences must align");
        for (&g, &p) in gold.iter().zip(pred) {
            m[g][p] += 1;
        }
    }
    m
}

pub fn confusion_csv(m: &ConfusionMatrix) -> String {
    let mut out = String::from("gold\\pred");
    let label = |c: usize| {
        TechniqueId::from_class(c).map_or("O".to_string(), |t| format!("\"{}\"", t.name()))
    };
    for c in 0..NUM_CLASSES {
        write!(out, ",{}", label(c)).unwrap();
    }
    out.push('\n');
    for (g, row) in m.iter().enumerate() {
        out.push_str(&label(g));
        for v in row {
            write!(out, ",{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// Token accuracy of the given decoded classes against gold labels.
pub fn token_accuracy(examples: &[SentenceExample], preds: &[SentencePrediction]) -> f64 {
    let mut correct = 0usize;
    let mut total = 0usize;
    for (ex, p) in examples.iter().zip(preds) {
        total += ex.token_labels.len();
        correct += ex
            .token_labels
            .iter()
            .zip(&p.token_classes)
            .filter(|(g, p)| g == p)
            .count();
    }
    if total == 0 {
        0.0
    } else {
        correct as f64 / total as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub slc: Prf,
    pub spans: Prf,
    pub full: Prf,
    pub per_technique: Vec<Prf>,
    /// Consistency of ungated predictions (sentence threshold 0.5, raw token argmax).
    pub consistency_ungated: Consistency,
    /// Consistency of the constrained decoder's own predictions.
    pub consistency_gated: Consistency,
    /// Ungated token accuracy.
    pub token_accuracy: f64,
    pub confusion: Vec<Vec<usize>>,
}

impl ScoreReport {
    /// Mean of spans and full-task F1, the model-selection criterion.
    pub fn selection_score(&self) -> f64 {
        0.5 * (self.spans.f1 + self.full.f1)
    }

    pub fn to_table(&self) -> String {
        let pct = |v: f64| format!("{:6.2}", 100.0 * v);
        let mut out = String::new();
        writeln!(out, "{:<10} {:>6} {:>6} {:>6}", "task", "P", "R", "F1").unwrap();
        for (name, s) in [("SLC", &self.slc), ("Spans", &self.spans), ("Full", &self.full)] {
            writeln!(out, "{:<10} {} {} {}", name, pct(s.precision), pct(s.recall), pct(s.f1)).unwrap();
        }
        writeln!(
            out,
            "M_C ungated {} ({} sentences), gated {} ({} sentences)",
            pct(self.consistency_ungated.value),
            self.consistency_ungated.sentences,
            pct(self.consistency_gated.value),
            self.consistency_gated.sentences
        )
        .unwrap();
        writeln!(out, "token accuracy {}", pct(self.token_accuracy)).unwrap();
        writeln!(out, "\n{:<34} {:>6} {:>6} {:>6}", "technique (full task)", "P", "R", "F1").unwrap();
        for (t, s) in TechniqueId::all().zip(&self.per_technique) {
            writeln!(out, "{:<34} {} {} {}", t.name(), pct(s.precision), pct(s.recall), pct(s.f1)).unwrap();
        }
        out
    }
}

/// Score predictions made on the same sentences against gold fragments.
pub fn evaluate(preds: &CorpusPredictions, gold_fragments: &[Fragment]) -> ScoreReport {
    let predicted = preds.fragments();
    let slc_pred: Vec<bool> = preds.gated.iter().map(|p| p.slc).collect();
    let slc_gold: Vec<bool> = preds.examples.iter().map(|e| e.is_propaganda()).collect();
    let full = score_flc(&predicted, gold_fragments, FlcMode::Full);
    let confusion = confusion_matrix(
        preds
            .examples
            .iter()
            .zip(&preds.gated)
            .map(|(e, p)| (e.token_labels.as_slice(), p.token_classes.as_slice())),
    );
    ScoreReport {
        slc: score_slc(&slc_pred, &slc_gold),
        spans: score_flc(&predicted, gold_fragments, FlcMode::Spans).overall,
        full: full.overall,
        per_technique: full.per_technique.unwrap_or_default(),
        consistency_ungated: prediction_consistency(&preds.ungated),
        consistency_gated: prediction_consistency(&preds.gated),
        token_accuracy: token_accuracy(&preds.examples, &preds.ungated),
        confusion: confusion.iter().map(|r| r.to_vec()).collect(),
    }
}

/// Score a predictions file against a gold labels file (no model involved).
pub fn score_fragments(predicted: &[Fragment], gold: &[Fragment]) -> (Prf, FlcScore) {
    (
        score_flc(predicted, gold, FlcMode::Spans).overall,
        score_flc(predicted, gold, FlcMode::Full),
    )
}
