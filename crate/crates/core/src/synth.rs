//! Seeded synthetic corpus generator.
//!
//! Sentences are runs of filler pseudo-words. A propagandistic sentence
//! carries one or two fragments, each built from marker words of its
//! technique; a fraction of fragment words come from a pool shared by all
//! techniques, and a technique cue word may appear elsewhere in the sentence.
//! Techniques are drawn in proportion to the reference training counts.

use std::collections::BTreeSet;
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::{CatalogEntry, TechniqueCatalog, TechniqueId, NUM_TECHNIQUES, REFERENCE_TRAIN_COUNTS};
use crate::corpus::{article_path, write_labels, Corpus, Document, Fragment, TechniqueCounts};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub seed: u64,
    pub sentences: usize,
    pub sentences_per_doc: usize,
    pub propaganda_rate: f64,
    /// Probability that a propagandistic sentence carries a second fragment.
    pub second_fragment_rate: f64,
    pub filler_words: usize,
    pub markers_per_technique: usize,
    pub shared_markers: usize,
    /// Probability that a fragment word is drawn from the shared pool.
    pub ambiguity: f64,
    /// Probability that a fragment's technique cue word appears outside it.
    pub cue_rate: f64,
    pub min_filler: usize,
    pub max_filler: usize,
    pub min_fragment: usize,
    pub max_fragment: usize,
    pub first_doc_id: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 7,
            sentences: 256,
            sentences_per_doc: 8,
            propaganda_rate: 0.4,
            second_fragment_rate: 0.15,
            filler_words: 200,
            markers_per_technique: 4,
            shared_markers: 6,
            ambiguity: 0.3,
            cue_rate: 0.7,
            min_filler: 4,
            max_filler: 10,
            min_fragment: 2,
            max_fragment: 4,
            first_doc_id: 700_000,
        }
    }
}

/// Word lists shared by every corpus drawn from the same lexicon seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lexicon {
    pub filler: Vec<String>,
    pub markers: Vec<Vec<String>>,
    pub shared: Vec<String>,
    pub cues: Vec<String>,
}

const ONSETS: &[&str] = &["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "st", "tr"];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "ou"];

fn pseudo_word<R: Rng>(rng: &mut R) -> String {
    let syllables = rng.gen_range(2..=3);
    (0..syllables)
        .map(|_| format!("{}{}", ONSETS.choose(rng).unwrap(), VOWELS.choose(rng).unwrap()))
        .collect()
}

impl Lexicon {
    pub fn generate<R: Rng>(config: &SynthConfig, rng: &mut R) -> Self {
        let mut seen = BTreeSet::new();
        let mut fresh = |rng: &mut R, n: usize| -> Vec<String> {
            let mut out = Vec::with_capacity(n);
            while out.len() < n {
                let w = pseudo_word(rng);
                if seen.insert(w.clone()) {
                    out.push(w);
                }
            }
            out
        };
        let filler = fresh(rng, config.filler_words);
        let markers = (0..NUM_TECHNIQUES).map(|_| fresh(rng, config.markers_per_technique)).collect();
        let shared = fresh(rng, config.shared_markers);
        let cues = fresh(rng, NUM_TECHNIQUES);
        Lexicon {
            filler,
            markers,
            shared,
            cues,
        }
    }

    /// The default catalog with each definition extended by its marker words.
    pub fn catalog(&self) -> TechniqueCatalog {
        let base = TechniqueCatalog::default();
        let entries = base
            .entries()
            .iter()
            .zip(&self.markers)
            .map(|(e, m)| CatalogEntry {
                name: e.name.clone(),
                definition: format!("{} Typical words: {}.", e.definition, m.join(" ")),
            })
            .collect();
        TechniqueCatalog::from_entries(entries).expect("default catalog is valid")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub documents: Vec<Document>,
    pub fragments: Vec<Fragment>,
    /// Fragment counts recorded while generating.
    pub counts: TechniqueCounts,
}

impl SynthCorpus {
    pub fn corpus(&self) -> Result<Corpus> {
        Corpus::new(self.documents.clone(), self.fragments.clone())
    }

    /// Write `articles/`, `labels.tsv` and `stats.tsv` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let articles = dir.join("articles");
        std::fs::create_dir_all(&articles).map_err(|e| Error::io(&articles, e))?;
        for d in &self.documents {
            let path = article_path(&articles, &d.id);
            std::fs::write(&path, &d.text).map_err(|e| Error::io(&path, e))?;
        }
        write_labels(&dir.join("labels.tsv"), &self.fragments)?;
        let stats = dir.join("stats.tsv");
        std::fs::write(&stats, self.counts.to_table()).map_err(|e| Error::io(&stats, e))
    }
}

struct SentenceBuilder {
    text: String,
    chars: usize,
}

impl SentenceBuilder {
    fn push(&mut self, word: &str) -> (usize, usize) {
        if !self.text.is_empty() {
            self.text.push(' ');
            self.chars += 1;
        }
        let begin = self.chars;
        self.text.push_str(word);
        self.chars += word.chars().count();
        (begin, self.chars)
    }
}

/// Draw a corpus of `config.sentences` sentences over `lexicon`.
pub fn generate_with(config: &SynthConfig, lexicon: &Lexicon, rng: &mut ChaCha8Rng) -> SynthCorpus {
    let technique_dist = WeightedIndex::new(REFERENCE_TRAIN_COUNTS).expect("positive counts");
    let mut counts = [0usize; NUM_TECHNIQUES];
    let mut documents = Vec::new();
    let mut fragments = Vec::new();
    let per_doc = config.sentences_per_doc.max(1);

    let mut doc_text = String::new();
    let mut doc_chars = 0usize;
    let mut doc_index = 0u64;
    let mut doc_frags: Vec<Fragment> = Vec::new();

    for s in 0..config.sentences {
        let doc_id = (config.first_doc_id + doc_index).to_string();
        let mut techniques = Vec::new();
        if rng.gen_bool(config.propaganda_rate) {
            techniques.push(TechniqueId::new(technique_dist.sample(rng)).unwrap());
            if rng.gen_bool(config.second_fragment_rate) {
                let t = TechniqueId::new(technique_dist.sample(rng)).unwrap();
                if t != techniques[0] {
                    techniques.push(t);
                }
            }
        }

        // slots: filler words, fragments and cue words in random order
        enum Slot {
            Filler,
            Fragment(TechniqueId),
            Cue(TechniqueId),
        }
        let mut slots: Vec<Slot> = (0..rng.gen_range(config.min_filler..=config.max_filler))
            .map(|_| Slot::Filler)
            .collect();
        for &t in &techniques {
            slots.push(Slot::Fragment(t));
            if rng.gen_bool(config.cue_rate) {
                slots.push(Slot::Cue(t));
            }
        }
        slots.shuffle(rng);
        // keep fragments apart so adjacent runs never merge
        let mut ordered: Vec<Slot> = Vec::with_capacity(slots.len() + 2);
        for slot in slots {
            let after_fragment = matches!(ordered.last(), Some(Slot::Fragment(_)));
            if after_fragment && matches!(slot, Slot::Fragment(_)) {
                ordered.push(Slot::Filler);
            }
            ordered.push(slot);
        }

        let mut sentence = SentenceBuilder {
            text: String::new(),
            chars: 0,
        };
        let offset = doc_chars;
        for slot in &ordered {
            match *slot {
                Slot::Filler => {
                    sentence.push(lexicon.filler.choose(rng).unwrap());
                }
                Slot::Cue(t) => {
                    sentence.push(&lexicon.cues[t.index()]);
                }
                Slot::Fragment(t) => {
                    let len = rng.gen_range(config.min_fragment..=config.max_fragment);
                    let mut span = (usize::MAX, 0);
                    for _ in 0..len {
                        let pool = if rng.gen_bool(config.ambiguity) {
                            &lexicon.shared
                        } else {
                            &lexicon.markers[t.index()]
                        };
                        let (b, e) = sentence.push(pool.choose(rng).unwrap());
                        span = (span.0.min(b), e);
                    }
                    counts[t.index()] += 1;
                    doc_frags.push(Fragment::new(doc_id.clone(), offset + span.0, offset + span.1, t));
                }
            }
        }
        sentence.push(".");
        doc_text.push_str(&sentence.text);
        doc_text.push('\n');
        doc_chars += sentence.chars + 1;

        if (s + 1) % per_doc == 0 || s + 1 == config.sentences {
            documents.push(Document::new(doc_id, std::mem::take(&mut doc_text)).expect("non-empty text"));
            fragments.append(&mut doc_frags);
            doc_chars = 0;
            doc_index += 1;
        }
    }
    SynthCorpus {
        documents,
        fragments,
        counts: TechniqueCounts { counts },
    }
}

/// Training corpus, dev corpus and catalog sharing one lexicon.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSplit {
    pub lexicon: Lexicon,
    pub catalog: TechniqueCatalog,
    pub train: SynthCorpus,
    pub dev: SynthCorpus,
}

pub fn generate(config: &SynthConfig, dev_sentences: usize) -> SynthSplit {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let lexicon = Lexicon::generate(config, &mut rng);
    let train = generate_with(config, &lexicon, &mut rng);
    let dev_config = SynthConfig {
        sentences: dev_sentences,
        first_doc_id: config.first_doc_id + train.documents.len() as u64,
        ..config.clone()
    };
    let dev = generate_with(&dev_config, &lexicon, &mut rng);
    SynthSplit {
        catalog: lexicon.catalog(),
        lexicon,
        train,
        dev,
    }
}

impl SynthSplit {
    /// Layout: `catalog.json`, `train/` and `dev/` (see [`SynthCorpus::write`]).
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.catalog.save(&dir.join("catalog.json"))?;
        self.train.write(&dir.join("train"))?;
        self.dev.write(&dir.join("dev"))
    }
}
