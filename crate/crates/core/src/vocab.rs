use std::collections::{BTreeSet, HashMap};

use crate::catalog::TechniqueCatalog;
use crate::corpus::{tokenize, SentenceExample, Token};

pub const PAD: usize = 0;
pub const UNK: usize = 1;

/// Lower-cased word vocabulary with reserved PAD and UNK ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let set: BTreeSet<String> = words.into_iter().map(|w| w.as_ref().to_lowercase()).collect();
        let mut all = vec!["<pad>".to_string(), "<unk>".to_string()];
        all.extend(set.into_iter().filter(|w| w != "<pad>" && w != "<unk>"));
        Self::from_ordered(all)
    }

    /// Rebuild from a stored word list (index order preserved).
    pub fn from_ordered(words: Vec<String>) -> Self {
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Vocab { words, index }
    }

    /// Every training-sentence token plus every token of the technique definitions.
    pub fn build(examples: &[SentenceExample], catalog: &TechniqueCatalog) -> Self {
        let corpus_words = examples.iter().flat_map(|e| e.tokens.iter().map(|t| t.text.clone()));
        let def_words = catalog.definitions().flat_map(|d| {
            let chars: Vec<char> = d.chars().collect();
            tokenize(&chars, 0, chars.len()).into_iter().map(|t| t.text)
        });
        Self::from_words(corpus_words.chain(def_words))
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn id(&self, word: &str) -> usize {
        self.index.get(&word.to_lowercase()).copied().unwrap_or(UNK)
    }

    pub fn encode_tokens(&self, tokens: &[Token]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(&t.text)).collect()
    }

    pub fn encode_text(&self, text: &str) -> Vec<usize> {
        let chars: Vec<char> = text.chars().collect();
        self.encode_tokens(&tokenize(&chars, 0, chars.len()))
    }
}
