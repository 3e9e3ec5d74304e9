//! Article and span-annotation ingestion, sentence segmentation,
//! tokenization and token/sentence label alignment.
//!
//! All offsets are character (Unicode scalar) offsets into the raw article
//! text, begin inclusive and end exclusive.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::catalog::{resolve_technique, TechniqueId, NUM_CLASSES, NUM_TECHNIQUES};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Result<Self> {
        let doc = Document {
            id: id.into(),
            text: text.into(),
        };
        if doc.text.is_empty() {
            return Err(Error::Input(format!("document {} is empty", doc.id)));
        }
        Ok(doc)
    }

    pub fn char_len(&self) -> usize {
        self.text.chars().count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Fragment {
    pub doc_id: String,
    pub begin: usize,
    pub end: usize,
    pub technique: TechniqueId,
}

impl Fragment {
    pub fn new(doc_id: impl Into<String>, begin: usize, end: usize, technique: TechniqueId) -> Self {
        Fragment {
            doc_id: doc_id.into(),
            begin,
            end,
            technique,
        }
    }

    pub fn len(&self) -> usize {
        self.end - self.begin
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.begin
    }

    pub fn overlaps(&self, begin: usize, end: usize) -> bool {
        self.begin < end && begin < self.end
    }

    pub fn validate(&self, doc_len: usize) -> Result<()> {
        if self.begin >= self.end {
            return Err(Error::Fragment(format!(
                "end {} must exceed begin {}",
                self.end, self.begin
            )));
        }
        if self.end > doc_len {
            return Err(Error::Fragment(format!(
                "end {} beyond document length {doc_len}",
                self.end
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub begin: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceExample {
    pub doc_id: String,
    /// Position of the sentence among the document's non-empty sentences.
    pub index: usize,
    pub sent_begin: usize,
    pub sent_end: usize,
    pub tokens: Vec<Token>,
    /// Index 0: any propaganda; index k >= 1: technique class k present.
    pub sentence_labels: [bool; NUM_CLASSES],
    /// Per-token class in 0..=18, 0 meaning no technique.
    pub token_labels: Vec<usize>,
}

impl SentenceExample {
    pub fn is_propaganda(&self) -> bool {
        self.sentence_labels[0]
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Number of leading tokens that enter the model and the training loss.
    pub fn model_len(&self, max_seq_len: usize) -> usize {
        self.tokens.len().min(max_seq_len)
    }
}

/// Tokenize `text[begin..end)` (character offsets) into maximal alphanumeric
/// runs and single punctuation characters. Whitespace separates tokens.
pub fn tokenize(chars: &[char], begin: usize, end: usize) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut i = begin;
    while i < end {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_alphanumeric() {
            let start = i;
            while i < end && chars[i].is_alphanumeric() {
                i += 1;
            }
            tokens.push(Token {
                text: chars[start..i].iter().collect(),
                begin: start,
                end: i,
            });
        } else {
            tokens.push(Token {
                text: c.to_string(),
                begin: i,
                end: i + 1,
            });
            i += 1;
        }
    }
    tokens
}

/// Character ranges of the newline-delimited sentences of a document.
pub fn sentence_ranges(chars: &[char]) -> Vec<(usize, usize)> {
    let mut ranges = Vec::new();
    let mut start = 0;
    for (i, &c) in chars.iter().enumerate() {
        if c == '\n' {
            ranges.push((start, i));
            start = i + 1;
        }
    }
    if start < chars.len() {
        ranges.push((start, chars.len()));
    }
    ranges
}

#[derive(Debug, Clone, Default)]
pub struct Alignment {
    pub examples: Vec<SentenceExample>,
    /// Sentences dropped because they contain no tokens.
    pub dropped_empty: usize,
}

/// Pick the label for a character span: among overlapping fragments, the one
/// with the smallest begin, ties broken by smallest technique index.
fn label_for_span<'a>(fragments: impl Iterator<Item = &'a Fragment>, begin: usize, end: usize) -> usize {
    fragments
        .filter(|f| f.overlaps(begin, end))
        .min_by_key(|f| (f.begin, f.technique))
        .map(|f| f.technique.class())
        .unwrap_or(0)
}

/// Split a document into sentences, tokenize them and derive token and
/// sentence labels from the document's fragments.
pub fn sentence_split_and_align(doc: &Document, fragments: &[Fragment]) -> Alignment {
    let chars: Vec<char> = doc.text.chars().collect();
    let own: Vec<&Fragment> = fragments.iter().filter(|f| f.doc_id == doc.id).collect();
    let mut out = Alignment::default();
    for (begin, end) in sentence_ranges(&chars) {
        let tokens = tokenize(&chars, begin, end);
        if tokens.is_empty() {
            out.dropped_empty += 1;
            continue;
        }
        let local: Vec<&Fragment> = own.iter().copied().filter(|f| f.overlaps(begin, end)).collect();
        let token_labels: Vec<usize> = tokens
            .iter()
            .map(|t| label_for_span(local.iter().copied(), t.begin, t.end))
            .collect();
        let mut sentence_labels = [false; NUM_CLASSES];
        for &k in &token_labels {
            if k > 0 {
                sentence_labels[k] = true;
                sentence_labels[0] = true;
            }
        }
        out.examples.push(SentenceExample {
            doc_id: doc.id.clone(),
            index: out.examples.len(),
            sent_begin: begin,
            sent_end: end,
            tokens,
            sentence_labels,
            token_labels,
        });
    }
    out
}

/// Documents plus their gold fragments.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub fragments: Vec<Fragment>,
}

impl Corpus {
    pub fn new(documents: Vec<Document>, fragments: Vec<Fragment>) -> Result<Self> {
        let lens: HashMap<&str, usize> = documents
            .iter()
            .map(|d| (d.id.as_str(), d.char_len()))
            .collect();
        if lens.len() != documents.len() {
            return Err(Error::Input("duplicate document ids".into()));
        }
        for f in &fragments {
            let len = lens
                .get(f.doc_id.as_str())
                .ok_or_else(|| Error::Fragment(format!("unknown document {}", f.doc_id)))?;
            f.validate(*len)?;
        }
        Ok(Corpus {
            documents,
            fragments,
        })
    }

    pub fn load(articles_dir: &Path, labels_file: &Path) -> Result<Self> {
        let (documents, fragments) = load_corpus(articles_dir, labels_file)?;
        Ok(Corpus {
            documents,
            fragments,
        })
    }

    /// Aligned sentence examples for every document, in document order.
    pub fn examples(&self) -> Alignment {
        let mut by_doc: HashMap<&str, Vec<Fragment>> = HashMap::new();
        for f in &self.fragments {
            by_doc.entry(f.doc_id.as_str()).or_default().push(f.clone());
        }
        let mut out = Alignment::default();
        for doc in &self.documents {
            let frags = by_doc.get(doc.id.as_str()).map(Vec::as_slice).unwrap_or(&[]);
            let a = sentence_split_and_align(doc, frags);
            out.examples.extend(a.examples);
            out.dropped_empty += a.dropped_empty;
        }
        out
    }

    pub fn document(&self, id: &str) -> Option<&Document> {
        self.documents.iter().find(|d| d.id == id)
    }
}

pub fn article_path(dir: &Path, doc_id: &str) -> PathBuf {
    dir.join(format!("article{doc_id}.txt"))
}

fn doc_sort_key(id: &str) -> (u64, String) {
    (id.parse::<u64>().unwrap_or(u64::MAX), id.to_string())
}

/// Read every `article<id>.txt` under `dir`, sorted by id.
pub fn load_articles(dir: &Path) -> Result<Vec<Document>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut docs = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        let Some(id) = name
            .strip_prefix("article")
            .and_then(|rest| rest.strip_suffix(".txt"))
        else {
            continue;
        };
        let path = entry.path();
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        docs.push(Document::new(id, text)?);
    }
    docs.sort_by_key(|d| doc_sort_key(&d.id));
    Ok(docs)
}

/// Parse a labels TSV (doc_id, technique, begin, end). Blank lines and lines
/// starting with `#` are skipped. Offsets are validated against `doc_lens`.
pub fn parse_labels(
    text: &str,
    file: &Path,
    doc_lens: &HashMap<String, usize>,
    articles_dir: &Path,
) -> Result<Vec<Fragment>> {
    let mut fragments = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let row = i + 1;
        let err = |message: String| Error::Labels {
            file: file.to_path_buf(),
            row,
            message,
        };
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 {
            return Err(err(format!("expected 4 tab-separated columns, found {}", cols.len())));
        }
        let doc_id = cols[0].trim();
        let technique = resolve_technique(cols[1]).map_err(|e| err(e.to_string()))?;
        let parse = |s: &str, what: &str| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| err(format!("invalid {what} offset {s:?}")))
        };
        let begin = parse(cols[2], "begin")?;
        let end = parse(cols[3], "end")?;
        let Some(&len) = doc_lens.get(doc_id) else {
            return Err(err(
                Error::MissingArticle {
                    doc_id: doc_id.to_string(),
                    path: article_path(articles_dir, doc_id),
                }
                .to_string(),
            ));
        };
        let frag = Fragment::new(doc_id, begin, end, technique);
        frag.validate(len).map_err(|e| err(e.to_string()))?;
        fragments.push(frag);
    }
    Ok(fragments)
}

pub fn load_corpus(articles_dir: &Path, labels_file: &Path) -> Result<(Vec<Document>, Vec<Fragment>)> {
    let documents = load_articles(articles_dir)?;
    let lens: HashMap<String, usize> = documents
        .iter()
        .map(|d| (d.id.clone(), d.char_len()))
        .collect();
    let text = std::fs::read_to_string(labels_file).map_err(|e| Error::io(labels_file, e))?;
    let fragments = parse_labels(&text, labels_file, &lens, articles_dir)?;
    Ok((documents, fragments))
}

/// Render fragments in the labels TSV format.
pub fn format_labels(fragments: &[Fragment]) -> String {
    let mut out = String::new();
    for f in fragments {
        writeln!(out, "{}\t{}\t{}\t{}", f.doc_id, f.technique.name(), f.begin, f.end)
            .expect("write to string");
    }
    out
}

pub fn write_labels(path: &Path, fragments: &[Fragment]) -> Result<()> {
    std::fs::write(path, format_labels(fragments)).map_err(|e| Error::io(path, e))
}

/// Per-technique fragment counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TechniqueCounts {
    pub counts: [usize; NUM_TECHNIQUES],
}

impl TechniqueCounts {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn get(&self, id: TechniqueId) -> usize {
        self.counts[id.index()]
    }

    /// Two-column TSV (technique, count) with a trailing Total row.
    pub fn to_table(&self) -> String {
        let mut out = String::from("technique\tcount\n");
        for id in TechniqueId::all() {
            writeln!(out, "{}\t{}", id.name(), self.get(id)).expect("write to string");
        }
        writeln!(out, "Total\t{}", self.total()).expect("write to string");
        out
    }

    pub fn from_table(text: &str) -> Result<Self> {
        let mut counts = TechniqueCounts::default();
        for line in text.lines().skip(1) {
            let Some((name, n)) = line.split_once('\t') else {
                continue;
            };
            if name == "Total" {
                continue;
            }
            let id = resolve_technique(name)?;
            counts.counts[id.index()] = n
                .trim()
                .parse()
                .map_err(|_| Error::Input(format!("bad count {n:?}")))?;
        }
        Ok(counts)
    }
}

pub fn corpus_statistics(fragments: &[Fragment]) -> TechniqueCounts {
    let mut counts = TechniqueCounts::default();
    for f in fragments {
        counts.counts[f.technique.index()] += 1;
    }
    counts
}

/// Group fragments by document id, preserving input order within a document.
pub fn fragments_by_doc(fragments: &[Fragment]) -> BTreeMap<&str, Vec<&Fragment>> {
    let mut map: BTreeMap<&str, Vec<&Fragment>> = BTreeMap::new();
    for f in fragments {
        map.entry(f.doc_id.as_str()).or_default().push(f);
    }
    map
}
