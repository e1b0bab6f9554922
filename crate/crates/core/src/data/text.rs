use std::collections::HashMap;
use std::fs::File;
use std::path::Path;

use super::{Dataset, Example};
use crate::error::{Error, Result};
use crate::nn::Modality;

pub const AG_NEWS_CLASSES: usize = 4;

/// Raw labelled documents before vocabulary lookup.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TextCorpus {
    pub texts: Vec<String>,
    pub labels: Vec<usize>,
    pub class_count: usize,
    /// Rows dropped for having the wrong field count or an invalid label.
    pub skipped: usize,
}

impl TextCorpus {
    /// Token ids per document, ready for training.
    pub fn encode(&self, vocab: &Vocab) -> Result<Dataset> {
        let examples = self.texts.iter().map(|t| Example::Tokens(encode(vocab, t))).collect();
        Dataset::new(Modality::Nlp, self.class_count, examples, self.labels.clone())
    }
}

/// Reads `label,title,description` rows with labels `1..=4`. Title and
/// description are joined with a space.
pub fn load_text_csv(path: &Path) -> Result<TextCorpus> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let corpus = parse_text_csv(file)?;
    if corpus.texts.is_empty() {
        return Err(Error::Data(format!("{}: no usable rows ({} skipped)", path.display(), corpus.skipped)));
    }
    Ok(corpus)
}

pub(crate) fn parse_text_csv(reader: impl std::io::Read) -> Result<TextCorpus> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(reader);
    let mut corpus = TextCorpus { class_count: AG_NEWS_CLASSES, ..Default::default() };
    for record in rdr.records() {
        let record = match record {
            Ok(r) => r,
            Err(e) if e.is_io_error() => return Err(Error::Data(format!("reading csv: {e}"))),
            Err(_) => {
                corpus.skipped += 1;
                continue;
            }
        };
        let label = record.get(0).and_then(|s| s.trim().parse::<usize>().ok());
        match (record.len(), label) {
            (3, Some(y)) if (1..=AG_NEWS_CLASSES).contains(&y) => {
                corpus.texts.push(format!("{} {}", &record[1], &record[2]));
                corpus.labels.push(y - 1);
            }
            _ => corpus.skipped += 1,
        }
    }
    Ok(corpus)
}

/// Lowercases and splits on every non-alphanumeric character.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Token ids are dense; id 0 is the unknown token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    min_freq: usize,
}

pub const UNKNOWN_TOKEN: &str = "<unk>";

impl Vocab {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn min_freq(&self) -> usize {
        self.min_freq
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(0)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }
}

/// Keeps tokens seen at least `min_freq` times, ordered by descending
/// frequency and then lexicographically.
pub fn build_vocab<S: AsRef<str>>(texts: &[S], min_freq: usize) -> Result<Vocab> {
    if texts.is_empty() {
        return Err(Error::Data("cannot build a vocabulary from an empty corpus".into()));
    }
    let mut counts: HashMap<String, usize> = HashMap::new();
    for t in texts {
        for tok in tokenize(t.as_ref()) {
            *counts.entry(tok).or_default() += 1;
        }
    }
    let mut kept: Vec<(String, usize)> = counts.into_iter().filter(|(_, n)| *n >= min_freq.max(1)).collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let tokens: Vec<String> = std::iter::once(UNKNOWN_TOKEN.to_string()).chain(kept.into_iter().map(|(t, _)| t)).collect();
    let index = tokens.iter().enumerate().skip(1).map(|(i, t)| (t.clone(), i)).collect();
    Ok(Vocab { tokens, index, min_freq })
}

pub fn encode(vocab: &Vocab, text: &str) -> Vec<usize> {
    tokenize(text).iter().map(|t| vocab.id(t)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizer_lowercases_and_splits() {
        assert_eq!(tokenize("Hello, world!"), vec!["hello", "world"]);
        assert_eq!(tokenize("  A1-b2 "), vec!["a1", "b2"]);
        assert!(tokenize("...").is_empty());
    }

    #[test]
    fn vocab_order_and_oov() {
        let texts = ["b a a", "c a b", "rare"];
        let v = build_vocab(&texts, 2).unwrap();
        assert_eq!(v.token(0), Some(UNKNOWN_TOKEN));
        assert_eq!(v.id("a"), 1);
        assert_eq!(v.id("b"), 2);
        assert_eq!(v.id("rare"), 0);
        assert_eq!(v.id("never"), 0);
        assert_eq!(v.len(), 3);
        assert_eq!(encode(&v, "A c b"), vec![1, 0, 2]);
        assert_eq!(build_vocab(&texts, 2).unwrap(), v);
        assert!(build_vocab::<&str>(&[], 1).is_err());
    }

    #[test]
    fn ties_break_lexicographically() {
        let v = build_vocab(&["zeta alpha mid"], 1).unwrap();
        assert_eq!((v.id("alpha"), v.id("mid"), v.id("zeta")), (1, 2, 3));
    }

    #[test]
    fn csv_rows_are_validated() {
        let csv = "3,\"Wall St, rally\",Stocks rose.\n\
                   5,bad,label\n\
                   1,too,many,fields\n\
                   x,no,number\n\
                   2,Cup final,\"Team \"\"wins\"\"\"\n";
        let c = parse_text_csv(csv.as_bytes()).unwrap();
        assert_eq!(c.labels, vec![2, 1]);
        assert_eq!(c.texts[0], "Wall St, rally Stocks rose.");
        assert_eq!(c.texts[1], "Cup final Team \"wins\"");
        assert_eq!(c.skipped, 3);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("empty.csv");
        std::fs::write(&p, "9,a,b\n").unwrap();
        assert!(load_text_csv(&p).is_err());
    }
}
