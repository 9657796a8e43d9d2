//! HTTP annotation service: hands out batches, validates and stores judgments.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use genlab_core::annotations::{Property, ResponseRecord, Split};
use genlab_core::corpus::{ItemKind, Sentence, SpanItem};
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::args::ServeArgs;
use crate::commands::{index_sentences, read_items, read_sentences};
use crate::error::{CliError, Result};

/// Statement text per `kind/property`; `{span}` is replaced by the span's words.
#[derive(Debug, Clone, PartialEq)]
pub struct Templates(pub BTreeMap<String, String>);

impl Default for Templates {
    fn default() -> Self {
        let pairs = [
            (
                "argument/Is.Particular",
                "\"{span}\" refers to a particular person, thing or group.",
            ),
            ("argument/Is.Kind", "\"{span}\" refers to a kind of thing."),
            ("argument/Is.Abstract", "\"{span}\" refers to something abstract."),
            (
                "predicate/Is.Particular",
                "\"{span}\" describes a particular situation.",
            ),
            (
                "predicate/Is.Hypothetical",
                "\"{span}\" describes a hypothetical situation.",
            ),
            (
                "predicate/Is.Dynamic",
                "\"{span}\" describes something that happens or changes.",
            ),
        ];
        Templates(pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect())
    }
}

impl Templates {
    /// Defaults overridden by the entries of a JSON object.
    pub fn with_overrides(overrides: &Map<String, Value>) -> std::result::Result<Self, String> {
        let mut t = Templates::default();
        for (k, v) in overrides {
            if !t.0.contains_key(k) {
                return Err(format!("unknown template key `{k}`"));
            }
            let text = v.as_str().ok_or_else(|| format!("template `{k}` must be a string"))?;
            t.0.insert(k.clone(), text.to_string());
        }
        Ok(t)
    }

    fn render(&self, kind: ItemKind, property: Property, span: &str) -> String {
        self.0
            .get(&format!("{kind}/{property}"))
            .map(|t| t.replace("{span}", span))
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub k_per_item: usize,
    pub batch_size: usize,
    pub templates: Templates,
    /// When set, only these annotators may request or submit work.
    pub allowed: Option<HashSet<String>>,
}

impl ServeConfig {
    /// One judgment per training item, three otherwise.
    pub fn default_k(split: Split) -> usize {
        match split {
            Split::Train => 1,
            Split::Dev | Split::Test => 3,
        }
    }
}

#[derive(Debug, Serialize)]
struct Statement {
    property: Property,
    text: String,
}

#[derive(Debug, Serialize)]
struct BatchItem {
    item_id: String,
    kind: ItemKind,
    sentence_id: String,
    tokens: Vec<String>,
    /// 1-based token indices of the highlighted span.
    span_indices: Vec<usize>,
    root_index: usize,
    statements: Vec<Statement>,
}

#[derive(Debug, Serialize)]
struct FieldError {
    index: Option<usize>,
    field: Option<String>,
    message: String,
}

impl FieldError {
    fn at(index: usize, field: &str, message: impl Into<String>) -> Self {
        FieldError {
            index: Some(index),
            field: Some(field.to_string()),
            message: message.into(),
        }
    }

    fn body(message: impl Into<String>) -> Self {
        FieldError {
            index: None,
            field: None,
            message: message.into(),
        }
    }
}

fn bad_request(errors: Vec<FieldError>) -> Response {
    (StatusCode::BAD_REQUEST, Json(json!({ "errors": errors }))).into_response()
}

type Triple = (String, String, Property);

struct Store {
    items: Vec<SpanItem>,
    sentences: BTreeMap<String, Sentence>,
    index: HashMap<String, usize>,
    /// Annotators with at least one stored judgment, per item.
    completed: Vec<BTreeSet<String>>,
    /// Outstanding batch per (annotator, protocol).
    in_flight: HashMap<(String, ItemKind), Vec<usize>>,
    known: HashSet<String>,
    records: HashMap<Triple, ResponseRecord>,
    property_counts: Vec<BTreeMap<Property, usize>>,
    file: File,
}

impl Store {
    fn in_flight_count(&self, item: usize) -> usize {
        self.in_flight.values().filter(|b| b.contains(&item)).count()
    }

    fn record(&mut self, r: ResponseRecord) {
        let i = self.index[&r.item_id];
        self.completed[i].insert(r.annotator_id.clone());
        *self.property_counts[i].entry(r.property).or_default() += 1;
        self.known.insert(r.annotator_id.clone());
        self.records
            .insert((r.annotator_id.clone(), r.item_id.clone(), r.property), r);
    }
}

pub struct AppState {
    config: ServeConfig,
    store: Mutex<Store>,
}

/// Reads stored records, dropping a torn final line left by an interrupted write.
fn load_store_file(path: &Path) -> Result<Vec<ResponseRecord>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let complete = match text.rfind('\n') {
        Some(end) => &text[..=end],
        None => "",
    };
    if complete.len() < text.len() {
        eprintln!("{}: discarding an incomplete final line", path.display());
        let f = OpenOptions::new()
            .write(true)
            .open(path)
            .map_err(|source| CliError::Write {
                path: path.to_path_buf(),
                source,
            })?;
        f.set_len(complete.len() as u64).map_err(|source| CliError::Write {
            path: path.to_path_buf(),
            source,
        })?;
    }
    genlab_core::jsonl::read(complete.as_bytes()).map_err(|e| CliError::data(path, e))
}

impl AppState {
    /// Opens the store at `responses_out`, replaying any records it already holds.
    pub fn open(
        items: Vec<SpanItem>,
        sentences: BTreeMap<String, Sentence>,
        responses_out: &Path,
        config: ServeConfig,
    ) -> Result<Self> {
        if config.batch_size == 0 || config.k_per_item == 0 {
            return Err(CliError::Usage("batch size and k per item must be positive".into()));
        }
        let index: HashMap<String, usize> = items
            .iter()
            .enumerate()
            .map(|(i, it)| (it.item_id.clone(), i))
            .collect();
        if index.len() != items.len() {
            return Err(CliError::Usage("item IDs must be unique".into()));
        }
        let existing = load_store_file(responses_out)?;
        if let Some(dir) = responses_out.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|source| CliError::Write {
                path: responses_out.to_path_buf(),
                source,
            })?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(responses_out)
            .map_err(|source| CliError::Write {
                path: responses_out.to_path_buf(),
                source,
            })?;
        let n = items.len();
        let mut store = Store {
            items,
            sentences,
            index,
            completed: vec![BTreeSet::new(); n],
            in_flight: HashMap::new(),
            known: config.allowed.clone().unwrap_or_default(),
            records: HashMap::new(),
            property_counts: vec![BTreeMap::new(); n],
            file,
        };
        for r in existing {
            if !store.index.contains_key(&r.item_id) {
                return Err(CliError::data(
                    responses_out,
                    genlab_core::Error::InvalidInput(format!("stored response for unknown item {}", r.item_id)),
                ));
            }
            store.record(r);
        }
        Ok(AppState {
            config,
            store: Mutex::new(store),
        })
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/batch", get(get_batch))
        .route("/api/responses", post(post_responses))
        .route("/api/progress", get(get_progress))
        .with_state(state)
}

fn batch_item(store: &Store, i: usize, templates: &Templates) -> BatchItem {
    let item = &store.items[i];
    let sentence = &store.sentences[&item.sentence_id];
    let span_text: Vec<&str> = item
        .span_indices
        .iter()
        .filter_map(|&t| sentence.token(t).map(|tok| tok.form.as_str()))
        .collect();
    let span_text = span_text.join(" ");
    BatchItem {
        item_id: item.item_id.clone(),
        kind: item.kind,
        sentence_id: item.sentence_id.clone(),
        tokens: sentence.tokens.iter().map(|t| t.form.clone()).collect(),
        span_indices: item.span_indices.clone(),
        root_index: item.root_index,
        statements: Property::for_kind(item.kind)
            .iter()
            .map(|&p| Statement {
                property: p,
                text: templates.render(item.kind, p, &span_text),
            })
            .collect(),
    }
}

async fn get_batch(State(state): State<Arc<AppState>>, Query(q): Query<HashMap<String, String>>) -> Response {
    let Some(annotator) = q.get("annotator").map(|a| a.trim()).filter(|a| !a.is_empty()) else {
        return bad_request(vec![FieldError::body("missing `annotator` query parameter")]);
    };
    let protocol: ItemKind = match q.get("protocol").map(|p| p.parse()) {
        Some(Ok(k)) => k,
        Some(Err(_)) => return bad_request(vec![FieldError::body("`protocol` must be `argument` or `predicate`")]),
        None => return bad_request(vec![FieldError::body("missing `protocol` query parameter")]),
    };
    if let Some(allowed) = &state.config.allowed {
        if !allowed.contains(annotator) {
            return bad_request(vec![FieldError::body(format!("unknown annotator `{annotator}`"))]);
        }
    }
    let mut store = state.store.lock().expect("store lock");
    store.known.insert(annotator.to_string());
    let key = (annotator.to_string(), protocol);
    // A repeated request before submitting gets the same outstanding batch back.
    let pending: Vec<usize> = store
        .in_flight
        .get(&key)
        .map(|b| {
            b.iter()
                .copied()
                .filter(|&i| !store.completed[i].contains(annotator))
                .collect()
        })
        .unwrap_or_default();
    let batch = if pending.is_empty() {
        let mut chosen = Vec::new();
        for i in 0..store.items.len() {
            if chosen.len() == state.config.batch_size {
                break;
            }
            if store.items[i].kind != protocol || store.completed[i].contains(annotator) {
                continue;
            }
            if store.completed[i].len() + store.in_flight_count(i) < state.config.k_per_item {
                chosen.push(i);
            }
        }
        chosen
    } else {
        pending
    };
    if batch.is_empty() {
        store.in_flight.remove(&key);
    } else {
        store.in_flight.insert(key, batch.clone());
    }
    let body: Vec<BatchItem> = batch
        .iter()
        .map(|&i| batch_item(&store, i, &state.config.templates))
        .collect();
    Json(body).into_response()
}

fn parse_record(index: usize, v: &Value, errors: &mut Vec<FieldError>) -> Option<ResponseRecord> {
    let Some(obj) = v.as_object() else {
        errors.push(FieldError {
            index: Some(index),
            field: None,
            message: "expected an object".into(),
        });
        return None;
    };
    let before = errors.len();
    let string = |field: &str, errors: &mut Vec<FieldError>| match obj.get(field) {
        Some(Value::String(s)) if !s.trim().is_empty() => Some(s.clone()),
        Some(_) => {
            errors.push(FieldError::at(index, field, "must be a nonempty string"));
            None
        }
        None => {
            errors.push(FieldError::at(index, field, "missing"));
            None
        }
    };
    let annotator_id = string("annotator_id", errors);
    let item_id = string("item_id", errors);
    let property = match obj.get("property") {
        Some(Value::String(s)) => match s.parse::<Property>() {
            Ok(p) => Some(p),
            Err(e) => {
                errors.push(FieldError::at(index, "property", e.to_string()));
                None
            }
        },
        Some(_) => {
            errors.push(FieldError::at(index, "property", "must be a string"));
            None
        }
        None => {
            errors.push(FieldError::at(index, "property", "missing"));
            None
        }
    };
    let polarity = match obj.get("polarity") {
        Some(Value::Bool(b)) => Some(*b),
        Some(_) => {
            errors.push(FieldError::at(index, "polarity", "must be true or false"));
            None
        }
        None => {
            errors.push(FieldError::at(index, "polarity", "missing"));
            None
        }
    };
    let confidence = match obj.get("confidence") {
        Some(v) => match v.as_u64() {
            Some(c @ 1..=5) => Some(c as u8),
            _ => {
                errors.push(FieldError::at(index, "confidence", "must be an integer from 1 to 5"));
                None
            }
        },
        None => {
            errors.push(FieldError::at(index, "confidence", "missing"));
            None
        }
    };
    if errors.len() > before {
        return None;
    }
    Some(ResponseRecord {
        annotator_id: annotator_id?,
        item_id: item_id?,
        property: property?,
        polarity: polarity?,
        confidence: confidence?,
        ridit_conf: None,
    })
}

fn same_judgment(a: &ResponseRecord, b: &ResponseRecord) -> bool {
    a.polarity == b.polarity && a.confidence == b.confidence
}

async fn post_responses(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let values: Vec<Value> = match serde_json::from_slice::<Value>(&body) {
        Ok(Value::Array(v)) => v,
        Ok(_) => return bad_request(vec![FieldError::body("body must be a JSON array of responses")]),
        Err(e) => return bad_request(vec![FieldError::body(format!("malformed JSON: {e}"))]),
    };
    let mut errors = Vec::new();
    let parsed: Vec<(usize, ResponseRecord)> = values
        .iter()
        .enumerate()
        .filter_map(|(i, v)| parse_record(i, v, &mut errors).map(|r| (i, r)))
        .collect();

    let mut store = state.store.lock().expect("store lock");
    let mut fresh: Vec<ResponseRecord> = Vec::new();
    let mut batch_seen: HashMap<Triple, usize> = HashMap::new();
    let mut duplicates = 0;
    for (i, r) in parsed {
        if !store.known.contains(&r.annotator_id) {
            errors.push(FieldError::at(
                i,
                "annotator_id",
                format!("unknown annotator `{}`", r.annotator_id),
            ));
            continue;
        }
        let Some(&item) = store.index.get(&r.item_id) else {
            errors.push(FieldError::at(i, "item_id", format!("unknown item `{}`", r.item_id)));
            continue;
        };
        let kind = store.items[item].kind;
        if !Property::for_kind(kind).contains(&r.property) {
            errors.push(FieldError::at(
                i,
                "property",
                format!("{} is not judged for {kind} items", r.property),
            ));
            continue;
        }
        let key = (r.annotator_id.clone(), r.item_id.clone(), r.property);
        let earlier = store
            .records
            .get(&key)
            .or_else(|| batch_seen.get(&key).map(|&j| &fresh[j]));
        match earlier {
            Some(prev) if same_judgment(prev, &r) => duplicates += 1,
            Some(_) => errors.push(FieldError::at(
                i,
                "property",
                "already recorded with a different judgment",
            )),
            None => {
                batch_seen.insert(key, fresh.len());
                fresh.push(r);
            }
        }
    }
    if !errors.is_empty() {
        return bad_request(errors);
    }
    if !fresh.is_empty() {
        let mut lines = Vec::new();
        genlab_core::jsonl::write(&mut lines, &fresh).expect("writing to memory");
        let written = store.file.write_all(&lines).and_then(|_| store.file.sync_data());
        if let Err(e) = written {
            return (
                StatusCode::INTERNAL_SERVER_ERROR,
                Json(json!({ "errors": [FieldError::body(format!("could not persist responses: {e}"))] })),
            )
                .into_response();
        }
    }
    let touched: BTreeSet<(String, String)> = fresh
        .iter()
        .map(|r| (r.annotator_id.clone(), r.item_id.clone()))
        .collect();
    let accepted = fresh.len();
    for r in fresh {
        store.record(r);
    }
    for (annotator, item_id) in touched {
        let item = store.index[&item_id];
        let kind = store.items[item].kind;
        if let Some(batch) = store.in_flight.get_mut(&(annotator.clone(), kind)) {
            batch.retain(|&i| i != item);
            if batch.is_empty() {
                store.in_flight.remove(&(annotator, kind));
            }
        }
    }
    Json(json!({ "accepted": accepted, "duplicates": duplicates })).into_response()
}

#[derive(Serialize)]
struct ItemProgress<'a> {
    item_id: &'a str,
    kind: ItemKind,
    completed: usize,
    in_flight: usize,
    responses: &'a BTreeMap<Property, usize>,
}

async fn get_progress(State(state): State<Arc<AppState>>) -> Response {
    let store = state.store.lock().expect("store lock");
    let items: Vec<ItemProgress<'_>> = store
        .items
        .iter()
        .enumerate()
        .map(|(i, it)| ItemProgress {
            item_id: &it.item_id,
            kind: it.kind,
            completed: store.completed[i].len(),
            in_flight: store.in_flight_count(i),
            responses: &store.property_counts[i],
        })
        .collect();
    Json(json!({
        "k_per_item": state.config.k_per_item,
        "items": items,
    }))
    .into_response()
}

fn read_lines(path: &PathBuf) -> Result<HashSet<String>> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.clone(),
        source,
    })?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect())
}

pub fn serve(a: &ServeArgs) -> Result<()> {
    let items = read_items(&a.items)?;
    let sentences = index_sentences(read_sentences(&a.conllu)?, &items, &a.items)?;
    let templates = match &a.templates {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|source| CliError::Read {
                path: path.clone(),
                source,
            })?;
            let value: Value = serde_json::from_str(&text).map_err(|e| CliError::data(path, e))?;
            let map = value.as_object().ok_or_else(|| {
                CliError::data(path, genlab_core::Error::InvalidInput("expected a JSON object".into()))
            })?;
            Templates::with_overrides(map).map_err(|m| CliError::data(path, genlab_core::Error::InvalidInput(m)))?
        }
        None => Templates::default(),
    };
    let config = ServeConfig {
        k_per_item: a.k_per_item.unwrap_or(ServeConfig::default_k(a.split.into())),
        batch_size: a.batch_size,
        templates,
        allowed: a.annotators.as_ref().map(read_lines).transpose()?,
    };
    let state = Arc::new(AppState::open(items, sentences, &a.responses_out, config)?);
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind((a.host.as_str(), a.port)).await?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
    })?;
    Ok(())
}
