//! Type-level and token-level feature vectors with ablation control.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{ItemKind, Sentence, SpanItem, Token, UPOS_TAGS};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResourceKind {
    Concreteness,
    Eventivity,
    Verbnet,
    Framenet,
    Wordnet,
}

impl ResourceKind {
    pub const ALL: [ResourceKind; 5] = [
        ResourceKind::Concreteness,
        ResourceKind::Eventivity,
        ResourceKind::Verbnet,
        ResourceKind::Framenet,
        ResourceKind::Wordnet,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ResourceKind::Concreteness => "concreteness",
            ResourceKind::Eventivity => "eventivity",
            ResourceKind::Verbnet => "verbnet",
            ResourceKind::Framenet => "framenet",
            ResourceKind::Wordnet => "wordnet",
        }
    }

    fn is_categorical(self) -> bool {
        matches!(
            self,
            ResourceKind::Verbnet | ResourceKind::Framenet | ResourceKind::Wordnet
        )
    }
}

impl FromStr for ResourceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ResourceKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown resource kind `{s}`")))
    }
}

impl fmt::Display for ResourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A lemma-keyed lexical resource. Numeric resources keep their ratings;
/// categorical ones are one-hot over the tags seen in the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceTable {
    pub name: String,
    pub kind: ResourceKind,
    /// Column names; categorical tables list their tag vocabulary here.
    pub columns: Vec<String>,
    pub entries: BTreeMap<String, Vec<f64>>,
}

impl ResourceTable {
    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn lookup(&self, lemma: &str) -> Option<&[f64]> {
        self.entries.get(&lemma.to_lowercase()).map(Vec::as_slice)
    }

    /// Values followed by the missing-indicator bit.
    pub fn encode(&self, lemma: Option<&str>) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.width() + 1);
        self.encode_into(lemma, &mut out);
        out
    }

    fn encode_into(&self, lemma: Option<&str>, out: &mut Vec<f64>) {
        match lemma.and_then(|l| self.lookup(l)) {
            Some(v) => {
                out.extend_from_slice(v);
                out.push(0.0);
            }
            None => {
                out.extend(std::iter::repeat_n(0.0, self.width()));
                out.push(1.0);
            }
        }
    }
}

/// Reads `lemma<TAB>value(s)` rows. Numeric kinds take whitespace-separated
/// reals of a fixed count; categorical kinds take whitespace- or
/// comma-separated tags. Blank lines and `#` comments are skipped.
pub fn load_resource<R: BufRead>(kind: ResourceKind, reader: R) -> Result<ResourceTable> {
    let mut raw: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut numeric_width = None;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (lemma, rest) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(line_no, "expected `lemma<TAB>value(s)`"))?;
        let lemma = lemma.trim().to_lowercase();
        if lemma.is_empty() {
            return Err(Error::parse(line_no, "empty lemma"));
        }
        let values: Vec<String> = rest
            .split(|c: char| c.is_whitespace() || (kind.is_categorical() && c == ','))
            .filter(|v| !v.is_empty())
            .map(str::to_string)
            .collect();
        if values.is_empty() {
            return Err(Error::parse(line_no, "no values"));
        }
        if !kind.is_categorical() {
            for v in &values {
                match v.parse::<f64>() {
                    Ok(x) if x.is_finite() => {}
                    _ => return Err(Error::parse(line_no, format!("`{v}` is not a finite number"))),
                }
            }
            match numeric_width {
                None => numeric_width = Some(values.len()),
                Some(w) if w != values.len() => {
                    return Err(Error::parse(
                        line_no,
                        format!("expected {w} values, found {}", values.len()),
                    ))
                }
                Some(_) => {}
            }
        }
        if raw.insert(lemma.clone(), values).is_some() {
            return Err(Error::parse(line_no, format!("duplicate lemma `{lemma}`")));
        }
    }

    let (columns, entries) = if kind.is_categorical() {
        let vocab: BTreeSet<&String> = raw.values().flatten().collect();
        let columns: Vec<String> = vocab.into_iter().cloned().collect();
        let position: BTreeMap<&str, usize> = columns.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
        let entries = raw
            .iter()
            .map(|(lemma, tags)| {
                let mut v = vec![0.0; columns.len()];
                for t in tags {
                    v[position[t.as_str()]] = 1.0;
                }
                (lemma.clone(), v)
            })
            .collect();
        (columns, entries)
    } else {
        let width = numeric_width.unwrap_or(0);
        let columns = if width == 1 {
            vec![kind.name().to_string()]
        } else {
            (0..width).map(|i| format!("{}{i}", kind.name())).collect()
        };
        let entries = raw
            .into_iter()
            .map(|(lemma, vals)| (lemma, vals.iter().map(|v| v.parse().unwrap()).collect()))
            .collect();
        (columns, entries)
    };
    Ok(ResourceTable {
        name: kind.name().to_string(),
        kind,
        columns,
        entries,
    })
}

/// Dense vectors keyed by string.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VectorTable {
    pub dim: usize,
    pub entries: BTreeMap<String, Vec<f32>>,
}

impl VectorTable {
    pub fn get(&self, key: &str) -> Option<&[f32]> {
        self.entries.get(key).map(Vec::as_slice)
    }
}

fn parse_floats(fields: &[&str], line_no: usize) -> Result<Vec<f32>> {
    fields
        .iter()
        .map(|f| {
            f.parse::<f32>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::parse(line_no, format!("`{f}` is not a finite number")))
        })
        .collect()
}

/// GloVe text format: `token f1 … fd`, space separated. The dimension comes
/// from the first row; later rows take their last `d` fields as values so
/// tokens containing spaces still load.
pub fn load_glove<R: BufRead>(reader: R) -> Result<VectorTable> {
    let mut table = VectorTable::default();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let fields: Vec<&str> = line.split(' ').filter(|f| !f.is_empty()).collect();
        if fields.is_empty() {
            continue;
        }
        if table.dim == 0 {
            if fields.len() < 2 {
                return Err(Error::parse(line_no, "expected a token followed by values"));
            }
            table.dim = fields.len() - 1;
        }
        if fields.len() < table.dim + 1 {
            return Err(Error::parse(
                line_no,
                format!("expected {} values, found {}", table.dim, fields.len() - 1),
            ));
        }
        let split = fields.len() - table.dim;
        let key = fields[..split].join(" ").to_lowercase();
        let values = parse_floats(&fields[split..], line_no)?;
        // Uncased tables can list a key twice; the first (most frequent) wins.
        table.entries.entry(key).or_insert(values);
    }
    Ok(table)
}

/// Precomputed contextual vectors: a header line holding the dimension,
/// then `sentence_id:token_index<TAB>f1 … f_dim`.
pub fn load_context_vectors<R: BufRead>(reader: R) -> Result<VectorTable> {
    let mut lines = reader.lines().enumerate();
    let dim = loop {
        match lines.next() {
            None => return Err(Error::parse(1, "missing dimension header")),
            Some((i, line)) => {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                break line
                    .trim()
                    .parse::<usize>()
                    .ok()
                    .filter(|&d| d > 0)
                    .ok_or_else(|| Error::parse(i + 1, "header must be a positive dimension"))?;
            }
        }
    };
    let mut table = VectorTable {
        dim,
        entries: BTreeMap::new(),
    };
    for (i, line) in lines {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (key, rest) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(line_no, "expected `sentence_id:token_index<TAB>values`"))?;
        if !key
            .rsplit_once(':')
            .is_some_and(|(_, idx)| idx.parse::<usize>().is_ok())
        {
            return Err(Error::parse(line_no, format!("bad key `{key}`")));
        }
        let fields: Vec<&str> = rest.split_whitespace().collect();
        if fields.len() != dim {
            return Err(Error::parse(
                line_no,
                format!("expected {dim} values, found {}", fields.len()),
            ));
        }
        if table
            .entries
            .insert(key.to_string(), parse_floats(&fields, line_no)?)
            .is_some()
        {
            return Err(Error::parse(line_no, format!("duplicate key `{key}`")));
        }
    }
    Ok(table)
}

pub fn context_key(sentence_id: &str, token_index: usize) -> String {
    format!("{sentence_id}:{token_index}")
}

/// Closed-class words counted among a root's dependents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionWords {
    pub determiners: Vec<String>,
    pub modals: Vec<String>,
    pub auxiliaries: Vec<String>,
}

impl Default for FunctionWords {
    fn default() -> Self {
        let words = |ws: &[&str]| ws.iter().map(|w| w.to_string()).collect();
        FunctionWords {
            determiners: words(&[
                "a", "an", "the", "this", "that", "these", "those", "some", "any", "no", "every", "each", "all",
                "both", "either", "neither", "another", "many", "much", "few", "several", "most", "such", "what",
                "which", "whatever",
            ]),
            modals: words(&[
                "can", "could", "may", "might", "must", "shall", "should", "will", "would", "ought",
            ]),
            auxiliaries: words(&["be", "have", "do", "get", "to"]),
        }
    }
}

impl FunctionWords {
    /// Deduplicated, sorted lexicon.
    pub fn lexicon(&self) -> Vec<String> {
        let set: BTreeSet<String> = self
            .determiners
            .iter()
            .chain(&self.modals)
            .chain(&self.auxiliaries)
            .map(|w| w.to_lowercase())
            .collect();
        set.into_iter().collect()
    }
}

/// Categorical vocabularies for the token-level one-hot blocks.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TokenVocab {
    pub deprels: Vec<String>,
    pub morph: Vec<String>,
    pub function_words: Vec<String>,
}

impl TokenVocab {
    /// Collects relations and features over the roots of `items` and their dependents.
    pub fn fit<'a>(
        sentences: &BTreeMap<String, Sentence>,
        items: impl IntoIterator<Item = &'a SpanItem>,
        function_words: &FunctionWords,
    ) -> Result<Self> {
        let mut deprels = BTreeSet::new();
        let mut morph = BTreeSet::new();
        for item in items {
            let sentence = sentence_for(sentences, item)?;
            let root = root_token(sentence, item)?;
            for tok in std::iter::once(root).chain(sentence.dependents(root.index)) {
                deprels.insert(tok.deprel.clone());
                morph.extend(tok.morph_feats.iter().map(|(k, v)| format!("{k}={v}")));
            }
        }
        Ok(TokenVocab {
            deprels: deprels.into_iter().collect(),
            morph: morph.into_iter().collect(),
            function_words: function_words.lexicon(),
        })
    }

    fn block_widths(&self) -> [(&'static str, usize); 7] {
        [
            ("root-upos", UPOS_TAGS.len()),
            ("root-deprel", self.deprels.len()),
            ("root-morph", self.morph.len()),
            ("dep-upos", UPOS_TAGS.len()),
            ("dep-deprel", self.deprels.len()),
            ("dep-morph", self.morph.len()),
            ("function-words", self.function_words.len()),
        ]
    }

    pub fn width(&self) -> usize {
        self.block_widths().iter().map(|b| b.1).sum()
    }
}

fn sentence_for<'s>(sentences: &'s BTreeMap<String, Sentence>, item: &SpanItem) -> Result<&'s Sentence> {
    sentences
        .get(&item.sentence_id)
        .ok_or_else(|| Error::invalid(format!("item {}: unknown sentence {}", item.item_id, item.sentence_id)))
}

fn root_token<'s>(sentence: &'s Sentence, item: &SpanItem) -> Result<&'s Token> {
    sentence.token(item.root_index).ok_or_else(|| {
        Error::invalid(format!(
            "item {}: root {} not in sentence {}",
            item.item_id, item.root_index, sentence.sentence_id
        ))
    })
}

fn set_one_hot(block: &mut [f64], vocab: &[String], key: &str) {
    if let Ok(i) = vocab.binary_search_by(|v| v.as_str().cmp(key)) {
        block[i] = 1.0;
    }
}

/// Syntactic and lexical indicators for the item's root and its dependents,
/// in the order given by [`TokenVocab`]. Values outside the vocabulary are dropped.
pub fn extract_token_features(item: &SpanItem, sentence: &Sentence, vocab: &TokenVocab) -> Result<Vec<f64>> {
    let root = root_token(sentence, item)?;
    let upos: Vec<String> = UPOS_TAGS.iter().map(|s| s.to_string()).collect();
    let widths = vocab.block_widths();
    let mut blocks: Vec<Vec<f64>> = widths.iter().map(|(_, w)| vec![0.0; *w]).collect();

    set_one_hot(&mut blocks[0], &upos, &root.upos);
    set_one_hot(&mut blocks[1], &vocab.deprels, &root.deprel);
    for (k, v) in &root.morph_feats {
        set_one_hot(&mut blocks[2], &vocab.morph, &format!("{k}={v}"));
    }
    for dep in sentence.dependents(root.index) {
        set_one_hot(&mut blocks[3], &upos, &dep.upos);
        set_one_hot(&mut blocks[4], &vocab.deprels, &dep.deprel);
        for (k, v) in &dep.morph_feats {
            set_one_hot(&mut blocks[5], &vocab.morph, &format!("{k}={v}"));
        }
        set_one_hot(&mut blocks[6], &vocab.function_words, &dep.lemma.to_lowercase());
    }
    Ok(blocks.concat())
}

/// Mean, maximum and minimum rating over the arguments that have one,
/// followed by the missing bit.
pub fn aggregate_arg_concreteness<'a>(
    argument_lemmas: impl IntoIterator<Item = &'a str>,
    table: &ResourceTable,
) -> [f64; 4] {
    let ratings: Vec<f64> = argument_lemmas
        .into_iter()
        .filter_map(|l| table.lookup(l).map(|v| v[0]))
        .collect();
    if ratings.is_empty() {
        return [0.0, 0.0, 0.0, 1.0];
    }
    let mean = ratings.iter().sum::<f64>() / ratings.len() as f64;
    let max = ratings.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = ratings.iter().copied().fold(f64::INFINITY, f64::min);
    [mean, max, min, 0.0]
}

/// Argument items of `predicate`: those in the same sentence whose root
/// the predicate root governs.
pub fn arguments_of<'a>(predicate: &SpanItem, sentence: &Sentence, items: &'a [SpanItem]) -> Vec<&'a SpanItem> {
    items
        .iter()
        .filter(|a| {
            a.kind == ItemKind::Argument
                && a.sentence_id == predicate.sentence_id
                && sentence
                    .token(a.root_index)
                    .is_some_and(|t| t.head == predicate.root_index)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub use_type_hand: bool,
    pub use_token_hand: bool,
    pub use_type_emb: bool,
    pub use_context_emb: bool,
}

impl FeatureConfig {
    pub const ALL: FeatureConfig = FeatureConfig {
        use_type_hand: true,
        use_token_hand: true,
        use_type_emb: true,
        use_context_emb: true,
    };

    pub fn validate(&self) -> Result<()> {
        if self.use_type_hand || self.use_token_hand || self.use_type_emb || self.use_context_emb {
            Ok(())
        } else {
            Err(Error::invalid("feature config enables no block"))
        }
    }

    /// Ablation pattern in `+`/`-` notation, e.g. `+-+-`.
    pub fn pattern(&self) -> String {
        [
            self.use_type_hand,
            self.use_token_hand,
            self.use_type_emb,
            self.use_context_emb,
        ]
        .iter()
        .map(|&b| if b { '+' } else { '-' })
        .collect()
    }
}

impl FromStr for FeatureConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let flags: Vec<bool> = s
            .chars()
            .map(|c| match c {
                '+' => Ok(true),
                '-' => Ok(false),
                _ => Err(Error::invalid(format!("feature pattern `{s}` must use only + and -"))),
            })
            .collect::<Result<_>>()?;
        if flags.len() != 4 {
            return Err(Error::invalid(format!("feature pattern `{s}` must have 4 positions")));
        }
        let config = FeatureConfig {
            use_type_hand: flags[0],
            use_token_hand: flags[1],
            use_type_emb: flags[2],
            use_context_emb: flags[3],
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub name: String,
    pub offset: usize,
    pub width: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub item_id: String,
    pub values: Vec<f64>,
    pub layout: Vec<Block>,
}

impl FeatureVector {
    /// Values of every sub-block whose name starts with `prefix`.
    pub fn block(&self, prefix: &str) -> Vec<f64> {
        self.layout
            .iter()
            .filter(|b| b.name.starts_with(prefix))
            .flat_map(|b| self.values[b.offset..b.offset + b.width].iter().copied())
            .collect()
    }
}

#[derive(Debug, Clone, Default)]
pub struct Resources {
    pub tables: BTreeMap<ResourceKind, ResourceTable>,
}

impl Resources {
    pub fn insert(&mut self, table: ResourceTable) {
        self.tables.insert(table.kind, table);
    }

    fn get(&self, kind: ResourceKind) -> Result<&ResourceTable> {
        self.tables
            .get(&kind)
            .ok_or_else(|| Error::invalid(format!("type-level features need the {kind} table")))
    }
}

/// Everything `assemble` reads besides the item itself.
pub struct FeatureInputs<'a> {
    pub sentences: &'a BTreeMap<String, Sentence>,
    /// All span items, used to find a predicate's arguments.
    pub items: &'a [SpanItem],
    pub resources: &'a Resources,
    pub vocab: &'a TokenVocab,
    pub glove: Option<&'a VectorTable>,
    pub context: Option<&'a VectorTable>,
}

struct Builder {
    values: Vec<f64>,
    layout: Vec<Block>,
}

impl Builder {
    fn push(&mut self, name: String, values: &[f64]) {
        self.layout.push(Block {
            name,
            offset: self.values.len(),
            width: values.len(),
        });
        self.values.extend_from_slice(values);
    }
}

fn type_hand(item: &SpanItem, sentence: &Sentence, inputs: &FeatureInputs<'_>, out: &mut Builder) -> Result<()> {
    let res = inputs.resources;
    let root = root_token(sentence, item)?;
    let head = sentence.token(root.head);
    let lemma = Some(root.lemma.as_str());
    match item.kind {
        ItemKind::Argument => {
            out.push(
                "type-hand/concreteness".into(),
                &res.get(ResourceKind::Concreteness)?.encode(lemma),
            );
            out.push(
                "type-hand/eventivity-head".into(),
                &res.get(ResourceKind::Eventivity)?
                    .encode(head.map(|h| h.lemma.as_str())),
            );
            let framenet = res.get(ResourceKind::Framenet)?;
            out.push("type-hand/framenet".into(), &framenet.encode(lemma));
            out.push(
                "type-hand/framenet-head".into(),
                &framenet.encode(head.map(|h| h.lemma.as_str())),
            );
            out.push(
                "type-hand/wordnet".into(),
                &res.get(ResourceKind::Wordnet)?.encode(lemma),
            );
        }
        ItemKind::Predicate => {
            let args = arguments_of(item, sentence, inputs.items);
            let lemmas: Vec<&str> = args
                .iter()
                .filter_map(|a| sentence.token(a.root_index).map(|t| t.lemma.as_str()))
                .collect();
            let agg = aggregate_arg_concreteness(lemmas, res.get(ResourceKind::Concreteness)?);
            out.push("type-hand/arg-concreteness".into(), &agg);
            out.push(
                "type-hand/eventivity".into(),
                &res.get(ResourceKind::Eventivity)?.encode(lemma),
            );
            out.push(
                "type-hand/verbnet".into(),
                &res.get(ResourceKind::Verbnet)?.encode(lemma),
            );
            out.push(
                "type-hand/framenet".into(),
                &res.get(ResourceKind::Framenet)?.encode(lemma),
            );
            out.push(
                "type-hand/wordnet".into(),
                &res.get(ResourceKind::Wordnet)?.encode(lemma),
            );
        }
    }
    Ok(())
}

/// Concatenates the enabled blocks in the order
/// `[type-hand | token-hand | type-emb | context-emb]`.
pub fn assemble(item: &SpanItem, config: &FeatureConfig, inputs: &FeatureInputs<'_>) -> Result<FeatureVector> {
    config.validate()?;
    let sentence = sentence_for(inputs.sentences, item)?;
    let root = root_token(sentence, item)?;
    let mut out = Builder {
        values: Vec::new(),
        layout: Vec::new(),
    };

    if config.use_type_hand {
        type_hand(item, sentence, inputs, &mut out)?;
    }
    if config.use_token_hand {
        let values = extract_token_features(item, sentence, inputs.vocab)?;
        let mut offset = 0;
        for (name, width) in inputs.vocab.block_widths() {
            out.push(format!("token-hand/{name}"), &values[offset..offset + width]);
            offset += width;
        }
    }
    if config.use_type_emb {
        let glove = inputs
            .glove
            .ok_or_else(|| Error::invalid("type-level embeddings need a GloVe table"))?;
        let found = glove
            .get(&root.form.to_lowercase())
            .or_else(|| glove.get(&root.lemma.to_lowercase()));
        let mut block: Vec<f64> = match found {
            Some(v) => v.iter().map(|&x| f64::from(x)).collect(),
            None => vec![0.0; glove.dim],
        };
        block.push(if found.is_some() { 0.0 } else { 1.0 });
        out.push("type-emb".into(), &block);
    }
    if config.use_context_emb {
        let context = inputs
            .context
            .ok_or_else(|| Error::invalid("contextual embeddings need a context-vector table"))?;
        let key = context_key(&item.sentence_id, item.root_index);
        let v = context
            .get(&key)
            .ok_or_else(|| Error::invalid(format!("item {}: no context vector for {key}", item.item_id)))?;
        let block: Vec<f64> = v.iter().map(|&x| f64::from(x)).collect();
        out.push("context-emb".into(), &block);
    }

    Ok(FeatureVector {
        item_id: item.item_id.clone(),
        values: out.values,
        layout: out.layout,
    })
}

/// Feature rows sharing one layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub config: FeatureConfig,
    pub layout: Vec<Block>,
    pub item_ids: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl FeatureMatrix {
    pub fn width(&self) -> usize {
        self.layout.iter().map(|b| b.width).sum()
    }

    pub fn from_vectors(config: FeatureConfig, vectors: Vec<FeatureVector>) -> Result<Self> {
        let layout = vectors.first().map(|v| v.layout.clone()).unwrap_or_default();
        let mut item_ids = Vec::with_capacity(vectors.len());
        let mut rows = Vec::with_capacity(vectors.len());
        for v in vectors {
            if v.layout != layout {
                return Err(Error::invalid(format!(
                    "item {}: layout differs from the first row",
                    v.item_id
                )));
            }
            item_ids.push(v.item_id);
            rows.push(v.values);
        }
        Ok(FeatureMatrix {
            config,
            layout,
            item_ids,
            rows,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_conllu;
    use proptest::prelude::*;

    const CONLLU: &str = "# sent_id = s1\n\
1\tThe\tthe\tDET\t_\tDefinite=Def|PronType=Art\t2\tdet\t_\t_\n\
2\tdog\tdog\tNOUN\t_\tNumber=Sing\t4\tnsubj\t_\t_\n\
3\twill\twill\tAUX\t_\tVerbForm=Fin\t4\taux\t_\t_\n\
4\teat\teat\tVERB\t_\tVerbForm=Inf\t0\troot\t_\t_\n\
5\toatmeal\toatmeal\tNOUN\t_\tNumber=Sing\t4\tobj\t_\t_\n\
\n\
# sent_id = s2\n\
1\tBirds\tbird\tNOUN\t_\tNumber=Plur\t2\tnsubj\t_\t_\n\
2\tfly\tfly\tVERB\t_\t_\t0\troot\t_\t_\n\n";

    fn item(id: &str, sid: &str, root: usize, kind: ItemKind) -> SpanItem {
        SpanItem {
            item_id: id.into(),
            sentence_id: sid.into(),
            root_index: root,
            span_indices: vec![root],
            kind,
        }
    }

    struct Fixture {
        sentences: BTreeMap<String, Sentence>,
        items: Vec<SpanItem>,
        resources: Resources,
        vocab: TokenVocab,
        glove: VectorTable,
        context: VectorTable,
    }

    fn fixture() -> Fixture {
        let sentences: BTreeMap<String, Sentence> = parse_conllu(CONLLU.as_bytes())
            .unwrap()
            .into_iter()
            .map(|s| (s.sentence_id.clone(), s))
            .collect();
        let items = vec![
            item("a1", "s1", 2, ItemKind::Argument),
            item("a2", "s1", 5, ItemKind::Argument),
            item("p1", "s1", 4, ItemKind::Predicate),
            item("a3", "s2", 1, ItemKind::Argument),
            item("p2", "s2", 2, ItemKind::Predicate),
        ];
        let mut resources = Resources::default();
        let load = |kind, text: &str| load_resource(kind, text.as_bytes()).unwrap();
        resources.insert(load(ResourceKind::Concreteness, "dog\t4.9\noatmeal\t4.6\n"));
        resources.insert(load(ResourceKind::Eventivity, "eat\t0.9 0.1\nfly\t0.8 0.3\n"));
        resources.insert(load(ResourceKind::Verbnet, "eat\teat-39.1\nfly\trun-51.3.2,fill-9.8\n"));
        resources.insert(load(ResourceKind::Framenet, "eat\tIngestion\ndog\tAnimals\n"));
        resources.insert(load(
            ResourceKind::Wordnet,
            "dog\tnoun.animal\nbird\tnoun.animal\neat\tverb.consumption\n",
        ));
        let vocab = TokenVocab::fit(&sentences, &items, &FunctionWords::default()).unwrap();
        let glove = load_glove("dog 0.1 0.2 0.3\nbirds 0.5 0.5 0.5\n".as_bytes()).unwrap();
        let mut ctx = String::from("4\n");
        for (sid, n) in [("s1", 5), ("s2", 2)] {
            for i in 1..=n {
                ctx.push_str(&format!("{sid}:{i}\t{i}.0 0.5 -1 2\n"));
            }
        }
        let context = load_context_vectors(ctx.as_bytes()).unwrap();
        Fixture {
            sentences,
            items,
            resources,
            vocab,
            glove,
            context,
        }
    }

    impl Fixture {
        fn inputs(&self) -> FeatureInputs<'_> {
            FeatureInputs {
                sentences: &self.sentences,
                items: &self.items,
                resources: &self.resources,
                vocab: &self.vocab,
                glove: Some(&self.glove),
                context: Some(&self.context),
            }
        }
    }

    #[test]
    fn concreteness_row_lookup() {
        let t = load_resource(ResourceKind::Concreteness, "oatmeal\t4.6\n".as_bytes()).unwrap();
        assert_eq!(t.lookup("oatmeal"), Some(&[4.6][..]));
        assert_eq!(t.lookup("Oatmeal"), Some(&[4.6][..]));
    }

    #[test]
    fn missing_lemma_sets_indicator() {
        let t = load_resource(ResourceKind::Concreteness, "oatmeal\t4.6\n".as_bytes()).unwrap();
        assert_eq!(t.encode(Some("granite")), vec![0.0, 1.0]);
        assert_eq!(t.encode(None), vec![0.0, 1.0]);
        assert_eq!(t.encode(Some("oatmeal")), vec![4.6, 0.0]);
    }

    #[test]
    fn resource_errors_carry_line_numbers() {
        let dup = load_resource(ResourceKind::Concreteness, "a\t1\n# c\nA\t2\n".as_bytes()).unwrap_err();
        assert!(matches!(dup, Error::Parse { line: 3, .. }), "{dup}");
        let bad = load_resource(ResourceKind::Concreteness, "a\tx\n".as_bytes()).unwrap_err();
        assert!(matches!(bad, Error::Parse { line: 1, .. }));
        let ragged = load_resource(ResourceKind::Eventivity, "a\t1 2\nb\t1\n".as_bytes()).unwrap_err();
        assert!(matches!(ragged, Error::Parse { line: 2, .. }));
        let no_tab = load_resource(ResourceKind::Wordnet, "a noun.act\n".as_bytes()).unwrap_err();
        assert!(matches!(no_tab, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn categorical_one_hot_over_file_vocabulary() {
        let t = load_resource(
            ResourceKind::Verbnet,
            "eat\teat-39.1\nfly\trun-51.3.2,fill-9.8\n".as_bytes(),
        )
        .unwrap();
        assert_eq!(t.columns, vec!["eat-39.1", "fill-9.8", "run-51.3.2"]);
        assert_eq!(t.lookup("fly"), Some(&[0.0, 1.0, 1.0][..]));
    }

    #[test]
    fn glove_and_context_loaders() {
        let g = load_glove("The 1 2\nof the 3 4\nthe 9 9\n".as_bytes()).unwrap();
        assert_eq!(g.dim, 2);
        assert_eq!(g.get("the"), Some(&[1.0f32, 2.0][..]));
        assert_eq!(g.get("of the"), Some(&[3.0f32, 4.0][..]));
        assert!(matches!(
            load_glove("a 1 2\nb 1\n".as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));

        let c = load_context_vectors("2\ns1:3\t0.5 1\n".as_bytes()).unwrap();
        assert_eq!(c.get("s1:3"), Some(&[0.5f32, 1.0][..]));
        assert!(matches!(
            load_context_vectors("2\ns1:3\t0.5\n".as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            load_context_vectors("x\n".as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn noun_root_with_determiner_dependent() {
        let f = fixture();
        let it = &f.items[0];
        let v = extract_token_features(it, &f.sentences["s1"], &f.vocab).unwrap();
        let noun = UPOS_TAGS.iter().position(|&t| t == "NOUN").unwrap();
        assert_eq!(v[noun], 1.0);
        let fw_offset = f.vocab.width() - f.vocab.function_words.len();
        let the = f.vocab.function_words.iter().position(|w| w == "the").unwrap();
        assert_eq!(v[fw_offset + the], 1.0);
        assert_eq!(v[fw_offset..].iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn no_dependents_means_zero_dependent_blocks() {
        let f = fixture();
        let v = extract_token_features(&f.items[1], &f.sentences["s1"], &f.vocab).unwrap();
        let root_width = UPOS_TAGS.len() + f.vocab.deprels.len() + f.vocab.morph.len();
        assert!(v[root_width..].iter().all(|&x| x == 0.0));
        assert!(v[..root_width].contains(&1.0));
    }

    #[test]
    fn identical_items_identical_blocks() {
        let f = fixture();
        let a = extract_token_features(&f.items[2], &f.sentences["s1"], &f.vocab).unwrap();
        let b = extract_token_features(&f.items[2].clone(), &f.sentences["s1"].clone(), &f.vocab).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn concreteness_aggregation() {
        let t = load_resource(ResourceKind::Concreteness, "a\t2.0\nb\t4.0\nc\t3.3\n".as_bytes()).unwrap();
        assert_eq!(aggregate_arg_concreteness(["a", "b", "zzz"], &t), [3.0, 4.0, 2.0, 0.0]);
        assert_eq!(aggregate_arg_concreteness(["c"], &t), [3.3, 3.3, 3.3, 0.0]);
        assert_eq!(aggregate_arg_concreteness(["zzz"], &t), [0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn predicate_uses_its_arguments_concreteness() {
        let f = fixture();
        let v = assemble(
            &f.items[2],
            &FeatureConfig {
                use_type_hand: true,
                use_token_hand: false,
                use_type_emb: false,
                use_context_emb: false,
            },
            &f.inputs(),
        )
        .unwrap();
        assert_eq!(v.block("type-hand/arg-concreteness"), vec![4.75, 4.9, 4.6, 0.0]);
        assert_eq!(v.block("type-hand/eventivity"), vec![0.9, 0.1, 0.0]);
    }

    #[test]
    fn all_off_is_error() {
        let f = fixture();
        let off = FeatureConfig {
            use_type_hand: false,
            use_token_hand: false,
            use_type_emb: false,
            use_context_emb: false,
        };
        assert!(assemble(&f.items[0], &off, &f.inputs()).is_err());
        assert!("----".parse::<FeatureConfig>().is_err());
        assert_eq!("+-+-".parse::<FeatureConfig>().unwrap().pattern(), "+-+-");
    }

    #[test]
    fn type_embedding_width_is_dim_plus_missing_bit() {
        let f = fixture();
        let cfg = FeatureConfig {
            use_type_hand: false,
            use_token_hand: false,
            use_type_emb: true,
            use_context_emb: false,
        };
        let v = assemble(&f.items[0], &cfg, &f.inputs()).unwrap();
        assert_eq!(v.values.len(), f.glove.dim + 1);
        assert_eq!(*v.values.last().unwrap(), 0.0);
        let missing = assemble(&f.items[1], &cfg, &f.inputs()).unwrap();
        assert_eq!(*missing.values.last().unwrap(), 1.0);

        let mut big = VectorTable {
            dim: 300,
            ..Default::default()
        };
        big.entries.insert("dog".into(), vec![0.25; 300]);
        let inputs = FeatureInputs {
            glove: Some(&big),
            ..f.inputs()
        };
        assert_eq!(assemble(&f.items[0], &cfg, &inputs).unwrap().values.len(), 301);
    }

    #[test]
    fn context_only_has_three_layer_width() {
        let f = fixture();
        let mut ctx = VectorTable {
            dim: 3 * 1024,
            ..Default::default()
        };
        ctx.entries.insert(context_key("s1", 2), vec![0.5; 3 * 1024]);
        let inputs = FeatureInputs {
            context: Some(&ctx),
            ..f.inputs()
        };
        let cfg = FeatureConfig {
            use_type_hand: false,
            use_token_hand: false,
            use_type_emb: false,
            use_context_emb: true,
        };
        assert_eq!(assemble(&f.items[0], &cfg, &inputs).unwrap().values.len(), 3072);
        assert!(assemble(&f.items[1], &cfg, &inputs).is_err());
    }

    #[test]
    fn enabled_block_without_table_is_error() {
        let f = fixture();
        let inputs = FeatureInputs {
            glove: None,
            ..f.inputs()
        };
        let cfg = FeatureConfig {
            use_type_hand: false,
            use_token_hand: false,
            use_type_emb: true,
            use_context_emb: false,
        };
        assert!(assemble(&f.items[0], &cfg, &inputs).is_err());
        let empty = Resources::default();
        let inputs = FeatureInputs {
            resources: &empty,
            ..f.inputs()
        };
        let cfg = FeatureConfig {
            use_type_hand: true,
            use_token_hand: false,
            use_type_emb: false,
            use_context_emb: false,
        };
        assert!(assemble(&f.items[0], &cfg, &inputs).is_err());
    }

    fn config_from(bits: u8) -> FeatureConfig {
        FeatureConfig {
            use_type_hand: bits & 1 != 0,
            use_token_hand: bits & 2 != 0,
            use_type_emb: bits & 4 != 0,
            use_context_emb: bits & 8 != 0,
        }
    }

    proptest! {
        #[test]
        fn layout_stable_and_blocks_contained(bits in 1u8..16, which in 0usize..5) {
            let f = fixture();
            let cfg = config_from(bits);
            let inputs = f.inputs();
            let full = assemble(&f.items[which], &FeatureConfig::ALL, &inputs).unwrap();
            let part = assemble(&f.items[which], &cfg, &inputs).unwrap();
            prop_assert_eq!(part.layout.iter().map(|b| b.width).sum::<usize>(), part.values.len());
            let same_kind: Vec<&SpanItem> = f.items.iter().filter(|i| i.kind == f.items[which].kind).collect();
            for other in same_kind {
                let o = assemble(other, &cfg, &inputs).unwrap();
                prop_assert_eq!(&o.layout, &part.layout);
            }
            for block in ["type-hand", "token-hand", "type-emb", "context-emb"] {
                let present = part.layout.iter().any(|b| b.name.starts_with(block));
                if present {
                    prop_assert_eq!(part.block(block), full.block(block));
                }
            }
        }
    }
}
