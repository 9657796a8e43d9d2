//! Raw judgments and per-annotator ridit normalization of confidence.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::ItemKind;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Property {
    #[serde(rename = "Is.Particular")]
    IsParticular,
    #[serde(rename = "Is.Kind")]
    IsKind,
    #[serde(rename = "Is.Abstract")]
    IsAbstract,
    #[serde(rename = "Is.Hypothetical")]
    IsHypothetical,
    #[serde(rename = "Is.Dynamic")]
    IsDynamic,
}

impl Property {
    pub const ARGUMENT: [Property; 3] = [Property::IsParticular, Property::IsKind, Property::IsAbstract];
    pub const PREDICATE: [Property; 3] = [Property::IsParticular, Property::IsHypothetical, Property::IsDynamic];

    /// The properties judged for an item of `kind`, in column order.
    pub fn for_kind(kind: ItemKind) -> [Property; 3] {
        match kind {
            ItemKind::Argument => Self::ARGUMENT,
            ItemKind::Predicate => Self::PREDICATE,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Property::IsParticular => "Is.Particular",
            Property::IsKind => "Is.Kind",
            Property::IsAbstract => "Is.Abstract",
            Property::IsHypothetical => "Is.Hypothetical",
            Property::IsDynamic => "Is.Dynamic",
        }
    }
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Property {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            Property::IsParticular,
            Property::IsKind,
            Property::IsAbstract,
            Property::IsHypothetical,
            Property::IsDynamic,
        ]
        .into_iter()
        .find(|p| p.name() == s)
        .ok_or_else(|| Error::invalid(format!("unknown property `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub annotator_id: String,
    pub item_id: String,
    pub property: Property,
    pub polarity: bool,
    pub confidence: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ridit_conf: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(Error::invalid(format!("unknown split `{other}`"))),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationDataset {
    pub records: Vec<ResponseRecord>,
    pub split: Split,
}

impl AnnotationDataset {
    /// Validates confidence ranges and `(annotator, item, property)` uniqueness.
    pub fn new(records: Vec<ResponseRecord>, split: Split) -> Result<Self> {
        let mut seen = HashSet::new();
        for r in &records {
            if !(1..=5).contains(&r.confidence) {
                return Err(Error::invalid(format!(
                    "confidence {} out of range 1..5 (annotator {}, item {})",
                    r.confidence, r.annotator_id, r.item_id
                )));
            }
            if !seen.insert((r.annotator_id.as_str(), r.item_id.as_str(), r.property)) {
                return Err(Error::invalid(format!(
                    "duplicate response: annotator {}, item {}, {}",
                    r.annotator_id, r.item_id, r.property
                )));
            }
        }
        Ok(AnnotationDataset { records, split })
    }

    /// Checks that every referenced item exists.
    pub fn check_items<'a>(&self, known: impl IntoIterator<Item = &'a str>) -> Result<()> {
        let known: HashSet<&str> = known.into_iter().collect();
        match self.records.iter().find(|r| !known.contains(r.item_id.as_str())) {
            Some(r) => Err(Error::invalid(format!("unknown item `{}`", r.item_id))),
            None => Ok(()),
        }
    }

    pub fn is_ridit_filled(&self) -> bool {
        self.records.iter().all(|r| r.ridit_conf.is_some())
    }

    /// Records for one property, in dataset order.
    pub fn for_property(&self, property: Property) -> impl Iterator<Item = &ResponseRecord> {
        self.records.iter().filter(move |r| r.property == property)
    }
}

/// Ridit score of each observed value: `P(Y < y) + ½ P(Y = y)` under the
/// empirical distribution of `confidences`.
pub fn ridit_scores(confidences: &[u8]) -> Result<BTreeMap<u8, f64>> {
    if confidences.is_empty() {
        return Err(Error::invalid("ridit scoring needs at least one rating"));
    }
    let mut counts = [0u64; 6];
    for &c in confidences {
        if !(1..=5).contains(&c) {
            return Err(Error::invalid(format!("confidence {c} out of range 1..5")));
        }
        counts[c as usize] += 1;
    }
    let n = confidences.len() as f64;
    let mut below = 0u64;
    let mut out = BTreeMap::new();
    for (y, &count) in counts.iter().enumerate().skip(1) {
        if count > 0 {
            out.insert(y as u8, (below as f64 + 0.5 * count as f64) / n);
        }
        below += count;
    }
    Ok(out)
}

/// How annotator rating histories are pooled before ridit scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RiditPooling {
    /// One distribution per annotator across all properties.
    #[default]
    PerAnnotator,
    /// One distribution per (annotator, property).
    PerProperty,
}

/// Fills `ridit_conf` on every record; polarity and all other fields are untouched.
pub fn apply_ridit(dataset: &AnnotationDataset, pooling: RiditPooling) -> Result<AnnotationDataset> {
    if dataset.records.is_empty() {
        return Err(Error::invalid("empty dataset"));
    }
    let key = |r: &ResponseRecord| match pooling {
        RiditPooling::PerAnnotator => (r.annotator_id.clone(), None),
        RiditPooling::PerProperty => (r.annotator_id.clone(), Some(r.property)),
    };
    let mut histories: HashMap<(String, Option<Property>), Vec<u8>> = HashMap::new();
    for r in &dataset.records {
        histories.entry(key(r)).or_default().push(r.confidence);
    }
    let tables = histories
        .into_iter()
        .map(|(k, v)| ridit_scores(&v).map(|t| (k, t)))
        .collect::<Result<HashMap<_, _>>>()?;
    let records = dataset
        .records
        .iter()
        .map(|r| {
            let mut r = r.clone();
            r.ridit_conf = Some(tables[&key(&r)][&r.confidence]);
            r
        })
        .collect();
    Ok(AnnotationDataset {
        records,
        split: dataset.split,
    })
}
