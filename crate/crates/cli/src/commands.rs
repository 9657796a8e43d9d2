use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use genlab_core::agreement::{agreement_report, format_table, AgreementReport};
use genlab_core::annotations::{apply_ridit, AnnotationDataset, Property, ResponseRecord, Split};
use genlab_core::corpus::{filter_candidates, parse_conllu, FilterConfig, ItemKind, Sentence, SpanItem};
use genlab_core::features::{
    assemble, load_context_vectors, load_glove, load_resource, FeatureConfig, FeatureInputs, FeatureMatrix,
    FunctionWords, ResourceKind, Resources, TokenVocab,
};
use genlab_core::jsonl;
use genlab_core::normalize::{
    fit_normalization, parse_wide_tsv, score_items, to_wide_tsv, NormalizeOptions, WideTable,
};
use genlab_core::ontology::{nested_cv, parse_ontology_tsv, svc_grid, NestedCvOptions, SmoOptions};
use genlab_core::regressor::{
    evaluate, format_ablation_table, grid_search, hyperparameter_grid, load_model, predict, save_model, train,
    EvalReport, GridPoint, MlpConfig,
};
use ndarray::Array2;
use serde::Serialize;

use crate::args::*;
use crate::error::{CliError, Result};

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Ingest(a) => ingest(&a),
        Command::Ridit(a) => ridit(&a),
        Command::Iaa(a) => iaa(&a),
        Command::Normalize(a) => normalize(&a),
        Command::Features(a) => features(&a),
        Command::Train(a) => train_cmd(&a),
        Command::Eval(a) => eval(&a),
        Command::Compare(a) => compare(&a),
        Command::ExportPlotdata(a) => export_plotdata(&a),
        Command::Serve(a) => crate::server::serve(&a),
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| CliError::Write {
            path: path.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, bytes).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes to `path`, or to standard output when it is absent.
fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => write_file(p, text.as_bytes()),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|source| CliError::Write {
                    path: PathBuf::from("<stdout>"),
                    source,
                })
        }
    }
}

fn to_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn jsonl_bytes<T: Serialize>(values: &[T]) -> Vec<u8> {
    let mut buf = Vec::new();
    jsonl::write(&mut buf, values).expect("writing to memory");
    buf
}

pub fn read_sentences(path: &Path) -> Result<Vec<Sentence>> {
    parse_conllu(open(path)?).map_err(|e| CliError::data(path, e))
}

pub fn read_items(path: &Path) -> Result<Vec<SpanItem>> {
    jsonl::read(open(path)?).map_err(|e| CliError::data(path, e))
}

fn read_records(path: &Path) -> Result<Vec<ResponseRecord>> {
    jsonl::read(open(path)?).map_err(|e| CliError::data(path, e))
}

fn read_dataset(path: &Path, split: Split) -> Result<AnnotationDataset> {
    AnnotationDataset::new(read_records(path)?, split).map_err(|e| CliError::data(path, e))
}

fn read_wide(path: &Path) -> Result<WideTable> {
    parse_wide_tsv(&read_text(path)?).map_err(|e| CliError::data(path, e))
}

/// Sentences keyed by ID; every item must point at a known sentence and valid tokens.
pub fn index_sentences(
    sentences: Vec<Sentence>,
    items: &[SpanItem],
    items_path: &Path,
) -> Result<BTreeMap<String, Sentence>> {
    let by_id: BTreeMap<String, Sentence> = sentences.into_iter().map(|s| (s.sentence_id.clone(), s)).collect();
    for item in items {
        let sentence = by_id.get(&item.sentence_id).ok_or_else(|| {
            CliError::data(
                items_path,
                genlab_core::Error::InvalidInput(format!(
                    "item {}: unknown sentence {}",
                    item.item_id, item.sentence_id
                )),
            )
        })?;
        item.validate(sentence).map_err(|e| CliError::data(items_path, e))?;
    }
    Ok(by_id)
}

fn ingest(a: &IngestArgs) -> Result<()> {
    let sentences = read_sentences(&a.conllu)?;
    let items = read_items(&a.spans)?;
    let by_id = index_sentences(sentences, &items, &a.spans)?;
    let sentences: Vec<Sentence> = by_id.into_values().collect();
    let defaults = FilterConfig::default();
    let config = FilterConfig {
        pos_whitelist: !a.no_pos_filter,
        exclude_adverbial_predicates: !a.keep_adverbial,
        pronoun_stoplist: if a.no_pronoun_stoplist {
            Vec::new()
        } else {
            defaults.pronoun_stoplist
        },
    };
    let mut kept_ids = HashSet::new();
    for kind in a.kind.kinds() {
        for item in filter_candidates(&sentences, &items, kind, &config).map_err(|e| CliError::data(&a.spans, e))? {
            kept_ids.insert(item.item_id);
        }
    }
    let kept: Vec<&SpanItem> = items.iter().filter(|it| kept_ids.contains(&it.item_id)).collect();
    write_file(&a.out, &jsonl_bytes(&kept))?;
    eprintln!("kept {} of {} candidate items", kept.len(), items.len());
    Ok(())
}

fn ridit(a: &RiditArgs) -> Result<()> {
    let dataset = read_dataset(&a.responses, Split::Train)?;
    let filled = apply_ridit(&dataset, a.pooling.into()).map_err(|e| CliError::data(&a.responses, e))?;
    write_file(&a.out, &jsonl_bytes(&filled.records))
}

/// Uses stored ridit confidences when every record has one, otherwise recomputes them.
fn with_ridit(dataset: AnnotationDataset, pooling: PoolingArg, path: &Path) -> Result<AnnotationDataset> {
    if dataset.is_ridit_filled() {
        Ok(dataset)
    } else {
        apply_ridit(&dataset, pooling.into()).map_err(|e| CliError::data(path, e))
    }
}

fn iaa(a: &IaaArgs) -> Result<()> {
    let mut records = Vec::new();
    for path in &a.responses {
        records.extend(read_records(path)?);
    }
    let first = &a.responses[0];
    let dataset = AnnotationDataset::new(records, Split::Test).map_err(|e| CliError::data(first, e))?;
    let dataset = with_ridit(dataset, a.pooling, first)?;
    let properties: Vec<Property> = if a.property.is_empty() {
        dataset
            .records
            .iter()
            .map(|r| r.property)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    } else {
        a.property
            .iter()
            .map(|p| {
                p.parse()
                    .map_err(|e: genlab_core::Error| CliError::Usage(e.to_string()))
            })
            .collect::<Result<_>>()?
    };
    let options = a.report_options();
    let reports: Vec<AgreementReport> = properties
        .iter()
        .map(|&p| agreement_report(&dataset, p, &options).map_err(|e| CliError::data(first, e)))
        .collect::<Result<_>>()?;
    let text = match a.format {
        ReportFormat::Table => format_table(&reports),
        ReportFormat::Json if a.property.len() == 1 => to_json(&reports[0]),
        ReportFormat::Json => to_json(&reports),
    };
    emit(a.out.as_deref(), &text)
}

fn normalize(a: &NormalizeArgs) -> Result<()> {
    let dataset = read_dataset(&a.responses, a.split.into())?;
    let dataset = with_ridit(dataset, a.pooling, &a.responses)?;
    let fit = fit_normalization(&dataset, &NormalizeOptions::default()).map_err(|e| CliError::data(&a.responses, e))?;
    if !fit.converged {
        eprintln!("warning: normalization stopped before the variance estimates settled");
    }
    let scores = score_items(&fit);
    match a.format {
        ScoreFormat::Wide => {
            let properties: Vec<Property> = scores
                .iter()
                .map(|s| s.property)
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            write_file(&a.out, to_wide_tsv(&scores, &properties).as_bytes())?;
        }
        ScoreFormat::Long => write_file(&a.out, &jsonl_bytes(&scores))?,
    }
    if let Some(path) = &a.fit_out {
        write_file(path, to_json(&fit).as_bytes())?;
    }
    Ok(())
}

fn features(a: &FeaturesArgs) -> Result<()> {
    let config: FeatureConfig = a
        .config
        .parse()
        .map_err(|e: genlab_core::Error| CliError::Usage(e.to_string()))?;
    let items = read_items(&a.items)?;
    let sentences = index_sentences(read_sentences(&a.conllu)?, &items, &a.items)?;
    let kind: ItemKind = a.kind.into();

    let mut resources = Resources::default();
    if let Some(dir) = &a.resource_dir {
        for rk in ResourceKind::ALL {
            let path = dir.join(format!("{}.tsv", rk.name()));
            if path.exists() {
                resources.insert(load_resource(rk, open(&path)?).map_err(|e| CliError::data(&path, e))?);
            }
        }
    }
    let glove = match &a.glove {
        Some(p) => Some(load_glove(open(p)?).map_err(|e| CliError::data(p, e))?),
        None => None,
    };
    let context = match &a.context_vectors {
        Some(p) => Some(load_context_vectors(open(p)?).map_err(|e| CliError::data(p, e))?),
        None => None,
    };
    let selected: Vec<&SpanItem> = items.iter().filter(|it| it.kind == kind).collect();
    let vocab = TokenVocab::fit(&sentences, selected.iter().copied(), &FunctionWords::default())
        .map_err(|e| CliError::data(&a.items, e))?;
    let inputs = FeatureInputs {
        sentences: &sentences,
        items: &items,
        resources: &resources,
        vocab: &vocab,
        glove: glove.as_ref(),
        context: context.as_ref(),
    };
    let vectors = selected
        .iter()
        .map(|it| assemble(it, &config, &inputs))
        .collect::<genlab_core::Result<Vec<_>>>()
        .map_err(|e| CliError::data(&a.items, e))?;
    let matrix = FeatureMatrix::from_vectors(config, vectors)?;
    eprintln!("{} items, {} features", matrix.rows.len(), matrix.width());
    write_file(&a.out, serde_json::to_string(&matrix).expect("serializable").as_bytes())
}

fn read_matrix(path: &Path) -> Result<FeatureMatrix> {
    serde_json::from_reader(open(path)?).map_err(|e| CliError::data(path, e))
}

/// Feature rows and the kind's property columns for every scored item that has features.
fn join_rows(
    matrix: &FeatureMatrix,
    table: &WideTable,
    kind: ItemKind,
    scores_path: &Path,
) -> Result<(Array2<f64>, Array2<f64>, Vec<String>)> {
    let properties = Property::for_kind(kind);
    let columns: Vec<usize> =
        properties
            .iter()
            .map(|p| {
                table.properties.iter().position(|q| q == p).ok_or_else(|| {
                    CliError::data(scores_path, genlab_core::Error::InvalidInput(format!("no {p} column")))
                })
            })
            .collect::<Result<_>>()?;
    let row_of: HashMap<&str, usize> = matrix
        .item_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let (mut xs, mut ys, mut ids) = (Vec::new(), Vec::new(), Vec::new());
    let mut unmatched = 0;
    for (item, values) in &table.rows {
        let targets: Vec<f64> = columns.iter().map(|&c| values[c]).collect();
        if targets.iter().all(|v| v.is_nan()) {
            continue;
        }
        match row_of.get(item.as_str()) {
            Some(&r) => {
                xs.extend_from_slice(&matrix.rows[r]);
                ys.extend(targets);
                ids.push(item.clone());
            }
            // Rows of the other kind share some property columns; only fully
            // scored rows are certainly of this kind.
            None if targets.iter().all(|v| v.is_finite()) => unmatched += 1,
            None => {}
        }
    }
    if unmatched > 0 {
        eprintln!(
            "{}: {unmatched} scored items have no feature row",
            scores_path.display()
        );
    }
    if ids.is_empty() {
        return Err(CliError::data(
            scores_path,
            genlab_core::Error::InvalidInput("no scored items match the feature matrix".into()),
        ));
    }
    let n = ids.len();
    let x = Array2::from_shape_vec((n, matrix.width()), xs).expect("rows share the layout width");
    let y = Array2::from_shape_vec((n, properties.len()), ys).expect("one target per property");
    Ok((x, y, ids))
}

#[derive(Serialize)]
struct TrainReport<'a> {
    pattern: String,
    properties: Vec<&'static str>,
    n_train: usize,
    n_dev: usize,
    selected: &'a MlpConfig,
    dev_l1: f64,
    dev_l1_by_epoch: Option<&'a [f64]>,
    grid: Option<&'a [GridPoint]>,
}

fn train_cmd(a: &TrainArgs) -> Result<()> {
    let kind: ItemKind = a.kind.into();
    let matrix = read_matrix(&a.features)?;
    let (x, y, _) = join_rows(&matrix, &read_wide(&a.train_scores)?, kind, &a.train_scores)?;
    let (dx, dy, _) = join_rows(&matrix, &read_wide(&a.dev_scores)?, kind, &a.dev_scores)?;
    let pattern = matrix.config.pattern();
    let properties: Vec<&'static str> = Property::for_kind(kind).iter().map(|p| p.name()).collect();
    let (model, report_json) = if a.hidden.is_empty() {
        let mut grid = hyperparameter_grid(a.seed);
        if let Some(e) = a.max_epochs {
            grid.iter_mut().for_each(|c| c.max_epochs = e);
        }
        let result = grid_search(x.view(), y.view(), dx.view(), dy.view(), &grid, a.seed)?;
        let best = result.points.iter().map(|p| p.dev_l1).fold(f64::INFINITY, f64::min);
        let report = TrainReport {
            pattern,
            properties,
            n_train: x.nrows(),
            n_dev: dx.nrows(),
            selected: &result.best,
            dev_l1: best,
            dev_l1_by_epoch: None,
            grid: Some(&result.points),
        };
        let json = to_json(&report);
        (result.model, json)
    } else {
        let mut config =
            MlpConfig::new(a.hidden.clone(), a.l2, a.dropout, a.seed).map_err(|e| CliError::Usage(e.to_string()))?;
        if let Some(e) = a.max_epochs {
            config.max_epochs = e;
            config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        }
        let trained = train(x.view(), y.view(), dx.view(), dy.view(), &config)?;
        let report = TrainReport {
            pattern,
            properties,
            n_train: x.nrows(),
            n_dev: dx.nrows(),
            selected: &config,
            dev_l1: trained.selected_dev_l1,
            dev_l1_by_epoch: Some(&trained.dev_l1),
            grid: None,
        };
        let json = to_json(&report);
        (trained.model, json)
    };
    let mut buf = Vec::new();
    save_model(&model, &mut buf)?;
    write_file(&a.out, &buf)?;
    if let Some(path) = &a.report {
        write_file(path, report_json.as_bytes())?;
    }
    Ok(())
}

#[derive(Serialize)]
struct EvalRow {
    pattern: String,
    model: PathBuf,
    features: PathBuf,
    report: EvalReport,
}

fn eval(a: &EvalArgs) -> Result<()> {
    if a.model.len() != a.features.len() {
        return Err(CliError::Usage(format!(
            "{} --model files but {} --features files; pass them in pairs",
            a.model.len(),
            a.features.len()
        )));
    }
    let kind: ItemKind = a.kind.into();
    let table = read_wide(&a.scores)?;
    let names: Vec<&str> = Property::for_kind(kind).iter().map(|p| p.name()).collect();
    let mut rows = Vec::new();
    for (model_path, features_path) in a.model.iter().zip(&a.features) {
        let model = load_model(open(model_path)?).map_err(|e| CliError::data(model_path, e))?;
        let matrix = read_matrix(features_path)?;
        let (x, y, _) = join_rows(&matrix, &table, kind, &a.scores)?;
        let pred = predict(&model, x.view()).map_err(|e| CliError::data(model_path, e))?;
        if pred.ncols() != y.ncols() {
            return Err(CliError::data(
                model_path,
                genlab_core::Error::DimensionMismatch {
                    expected: y.ncols(),
                    got: pred.ncols(),
                },
            ));
        }
        let report =
            evaluate(pred.view(), y.view(), &names, a.weighting.into()).map_err(|e| CliError::data(&a.scores, e))?;
        rows.push(EvalRow {
            pattern: matrix.config.pattern(),
            model: model_path.clone(),
            features: features_path.clone(),
            report,
        });
    }
    let text = match a.format {
        ReportFormat::Json => to_json(&rows),
        ReportFormat::Table => {
            let pairs: Vec<(String, EvalReport)> = rows.into_iter().map(|r| (r.pattern, r.report)).collect();
            format_ablation_table(&pairs)
        }
    };
    emit(a.out.as_deref(), &text)
}

fn compare(a: &CompareArgs) -> Result<()> {
    let (x, y) = parse_ontology_tsv(open(&a.input)?).map_err(|e| CliError::data(&a.input, e))?;
    let options = NestedCvOptions {
        outer_k: a.outer_k,
        inner_k: a.inner_k,
        seed: a.seed,
        selection: a.selection.into(),
        smo: SmoOptions::default(),
    };
    let report = nested_cv(&x, &y, &svc_grid(), &options).map_err(|e| CliError::data(&a.input, e))?;
    emit(a.out.as_deref(), &to_json(&report))
}

fn export_plotdata(a: &ExportArgs) -> Result<()> {
    let table = read_wide(&a.scores)?;
    let index = |name: &str| -> Result<usize> {
        let p: Property = name
            .parse()
            .map_err(|e: genlab_core::Error| CliError::Usage(e.to_string()))?;
        table
            .properties
            .iter()
            .position(|&q| q == p)
            .ok_or_else(|| CliError::data(&a.scores, genlab_core::Error::InvalidInput(format!("no {p} column"))))
    };
    let pairs: Vec<(usize, usize)> = match (&a.x, &a.y) {
        (Some(x), Some(y)) => vec![(index(x)?, index(y)?)],
        _ => {
            let k = table.properties.len();
            (0..k).flat_map(|i| (i + 1..k).map(move |j| (i, j))).collect()
        }
    };
    let mut out = String::from("x_property\ty_property\titem_id\tscore_x\tscore_y\n");
    for (i, j) in pairs {
        for (item, values) in &table.rows {
            let (sx, sy) = (values[i], values[j]);
            if sx.is_nan() || sy.is_nan() {
                continue;
            }
            let _ = writeln!(
                out,
                "{}\t{}\t{item}\t{sx}\t{sy}",
                table.properties[i], table.properties[j]
            );
        }
    }
    emit(a.out.as_deref(), &out)
}
