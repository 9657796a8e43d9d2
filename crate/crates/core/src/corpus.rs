//! Dependency-parsed sentences, annotatable spans and candidate filtering.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Universal POS tags.
pub const UPOS_TAGS: [&str; 17] = [
    "ADJ", "ADP", "ADV", "AUX", "CCONJ", "DET", "INTJ", "NOUN", "NUM", "PART", "PRON", "PROPN", "PUNCT", "SCONJ",
    "SYM", "VERB", "X",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub index: usize,
    pub form: String,
    pub lemma: String,
    pub upos: String,
    /// `key=value` morphological features, sorted by key.
    pub morph_feats: BTreeMap<String, String>,
    pub head: usize,
    pub deprel: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub sentence_id: String,
    pub tokens: Vec<Token>,
}

impl Sentence {
    /// Token by 1-based index.
    pub fn token(&self, index: usize) -> Option<&Token> {
        index.checked_sub(1).and_then(|i| self.tokens.get(i))
    }

    /// Tokens whose head is `index`.
    pub fn dependents(&self, index: usize) -> impl Iterator<Item = &Token> {
        self.tokens.iter().filter(move |t| t.head == index)
    }

    pub fn text(&self) -> String {
        self.tokens
            .iter()
            .map(|t| t.form.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ItemKind {
    Argument,
    Predicate,
}

impl FromStr for ItemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "argument" => Ok(ItemKind::Argument),
            "predicate" => Ok(ItemKind::Predicate),
            other => Err(Error::invalid(format!("unknown item kind `{other}`"))),
        }
    }
}

impl fmt::Display for ItemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ItemKind::Argument => "argument",
            ItemKind::Predicate => "predicate",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanItem {
    pub item_id: String,
    pub sentence_id: String,
    pub root_index: usize,
    pub span_indices: Vec<usize>,
    pub kind: ItemKind,
}

impl SpanItem {
    /// Checks the span against its sentence.
    pub fn validate(&self, sentence: &Sentence) -> Result<()> {
        if !self.span_indices.contains(&self.root_index) {
            return Err(Error::invalid(format!(
                "item {}: root {} not in span",
                self.item_id, self.root_index
            )));
        }
        if let Some(bad) = self.span_indices.iter().find(|&&i| sentence.token(i).is_none()) {
            return Err(Error::invalid(format!(
                "item {}: token {bad} not in sentence {}",
                self.item_id, sentence.sentence_id
            )));
        }
        Ok(())
    }
}

/// Parses CoNLL-U text. Multiword ranges and empty nodes are skipped.
pub fn parse_conllu<R: BufRead>(reader: R) -> Result<Vec<Sentence>> {
    let mut sentences = Vec::new();
    let mut tokens: Vec<Token> = Vec::new();
    let mut sent_id: Option<String> = None;
    let mut block_start = 0;

    let finish = |tokens: &mut Vec<Token>,
                  sent_id: &mut Option<String>,
                  sentences: &mut Vec<Sentence>,
                  line: usize|
     -> Result<()> {
        if tokens.is_empty() {
            *sent_id = None;
            return Ok(());
        }
        let n = tokens.len();
        for t in tokens.iter() {
            if t.head > n {
                return Err(Error::parse(
                    line,
                    format!("token {} has head {} outside sentence", t.index, t.head),
                ));
            }
        }
        let id = sent_id.take().unwrap_or_else(|| format!("s{}", sentences.len() + 1));
        sentences.push(Sentence {
            sentence_id: id,
            tokens: std::mem::take(tokens),
        });
        Ok(())
    };

    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            finish(&mut tokens, &mut sent_id, &mut sentences, block_start)?;
            continue;
        }
        if tokens.is_empty() && sent_id.is_none() {
            block_start = lineno;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(id) = comment.trim().strip_prefix("sent_id") {
                let id = id.trim_start().trim_start_matches('=').trim();
                sent_id = Some(id.to_string());
            }
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(Error::parse(
                lineno,
                format!("expected 10 tab-separated columns, found {}", cols.len()),
            ));
        }
        if cols[0].contains('-') || cols[0].contains('.') {
            continue;
        }
        let index: usize = cols[0]
            .parse()
            .map_err(|_| Error::parse(lineno, format!("non-integer ID `{}`", cols[0])))?;
        if index != tokens.len() + 1 {
            return Err(Error::parse(
                lineno,
                format!("expected token ID {}, found {index}", tokens.len() + 1),
            ));
        }
        let head: usize = cols[6]
            .parse()
            .map_err(|_| Error::parse(lineno, format!("non-integer HEAD `{}`", cols[6])))?;
        let upos = cols[3];
        if !UPOS_TAGS.contains(&upos) {
            return Err(Error::parse(lineno, format!("unknown UPOS tag `{upos}`")));
        }
        tokens.push(Token {
            index,
            form: cols[1].to_string(),
            lemma: cols[2].to_string(),
            upos: upos.to_string(),
            morph_feats: parse_feats(cols[5]).map_err(|m| Error::parse(lineno, m))?,
            head,
            deprel: cols[7].to_string(),
        });
    }
    finish(&mut tokens, &mut sent_id, &mut sentences, block_start)?;
    Ok(sentences)
}

fn parse_feats(col: &str) -> std::result::Result<BTreeMap<String, String>, String> {
    let mut feats = BTreeMap::new();
    if col == "_" {
        return Ok(feats);
    }
    for pair in col.split('|') {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| format!("malformed feature `{pair}`"))?;
        if feats.insert(k.to_string(), v.to_string()).is_some() {
            return Err(format!("duplicate feature key `{k}`"));
        }
    }
    Ok(feats)
}

/// Writes sentences back out as CoNLL-U. Columns that are not retained are `_`.
pub fn to_conllu(sentences: &[Sentence]) -> String {
    let mut out = String::new();
    for s in sentences {
        out.push_str(&format!("# sent_id = {}\n", s.sentence_id));
        for t in &s.tokens {
            let feats = if t.morph_feats.is_empty() {
                "_".to_string()
            } else {
                t.morph_feats
                    .iter()
                    .map(|(k, v)| format!("{k}={v}"))
                    .collect::<Vec<_>>()
                    .join("|")
            };
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t_\t{}\t{}\t{}\t_\t_\n",
                t.index, t.form, t.lemma, t.upos, feats, t.head, t.deprel
            ));
        }
        out.push('\n');
    }
    out
}

/// Toggleable candidate filters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub pos_whitelist: bool,
    pub exclude_adverbial_predicates: bool,
    /// Lowercased lemmas of pronoun argument roots to drop. Empty disables the rule.
    pub pronoun_stoplist: Vec<String>,
}

pub const ARGUMENT_ROOT_POS: [&str; 5] = ["DET", "NUM", "NOUN", "PROPN", "PRON"];
pub const PREDICATE_ROOT_POS: [&str; 8] = ["ADJ", "NOUN", "NUM", "DET", "PROPN", "PRON", "VERB", "AUX"];
const ADVERBIAL_RELATIONS: [&str; 2] = ["advmod", "advcl"];

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            pos_whitelist: true,
            exclude_adverbial_predicates: true,
            pronoun_stoplist: ["i", "we", "he", "she", "it", "me", "us", "him", "her"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }
}

/// Keeps the items of `kind` whose roots pass the configured filters.
pub fn filter_candidates(
    sentences: &[Sentence],
    items: &[SpanItem],
    kind: ItemKind,
    config: &FilterConfig,
) -> Result<Vec<SpanItem>> {
    let by_id: HashMap<&str, &Sentence> = sentences.iter().map(|s| (s.sentence_id.as_str(), s)).collect();
    let mut kept = Vec::new();
    for item in items.iter().filter(|it| it.kind == kind) {
        let root = by_id
            .get(item.sentence_id.as_str())
            .and_then(|s| s.token(item.root_index))
            .ok_or_else(|| {
                Error::invalid(format!(
                    "item {}: root {} missing from sentence {}",
                    item.item_id, item.root_index, item.sentence_id
                ))
            })?;
        if keep_root(root, kind, config) {
            kept.push(item.clone());
        }
    }
    Ok(kept)
}

fn keep_root(root: &Token, kind: ItemKind, config: &FilterConfig) -> bool {
    let upos = root.upos.as_str();
    match kind {
        ItemKind::Argument => {
            if config.pos_whitelist && !ARGUMENT_ROOT_POS.contains(&upos) {
                return false;
            }
            if upos == "PRON" {
                let lemma = root.lemma.to_lowercase();
                let form = root.form.to_lowercase();
                if config.pronoun_stoplist.iter().any(|p| *p == lemma || *p == form) {
                    return false;
                }
            }
            true
        }
        ItemKind::Predicate => {
            if config.pos_whitelist && !PREDICATE_ROOT_POS.contains(&upos) {
                return false;
            }
            let base_rel = root.deprel.split(':').next().unwrap_or("");
            !(config.exclude_adverbial_predicates && ADVERBIAL_RELATIONS.contains(&base_rel))
        }
    }
}
