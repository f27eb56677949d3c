use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde_json::{json, Value};

use cfx_core::artifact::{self, Artifact};
use cfx_core::balance::BalanceStrategy;
use cfx_core::cnn::{CnnConfig, OptimizerConfig};
use cfx_core::corpus::{
    has_column, load_conllu, load_embeddings_filtered, load_label_predictions, load_sentences,
    load_span_predictions, load_task1_csv, load_task2_csv, random_split, stratified_split,
    write_label_predictions, write_span_predictions, write_task1_csv, write_task2_csv,
    EmbeddingTable, Label, ParsedSentence, SpanAnnotation, SpanPrediction, SplitConfig,
};
use cfx_core::ensemble::{vote_all, EnsembleConfig};
use cfx_core::eval::{prf_binary, span_metrics, MetricsReport};
use cfx_core::features::{fit_vectorizer, Channel, Document, VectorizerConfig, Weighting};
use cfx_core::forms::{classify_text, FormLabel, ModalLexicon};
use cfx_core::linear::{LinearTrainConfig, LossKind};
use cfx_core::pipeline::{
    document, document_for, train_cnn_pipeline, train_linear_pipeline, train_per_form, CnnPipeline,
    CnnSettings, LinearPipeline, LinearSettings, PerFormPipeline,
};
use cfx_core::spans::{train_span_models, CrfTrainConfig, SpanModels};

use crate::config::{RunConfig, UsageError};
use crate::{
    Cli, Command, EnsembleArgs, EvalArgs, ExtractSpansArgs, FeaturizeArgs, FormsArgs, LexiconArgs,
    ParseArgs, PredictArgs, SplitArgs, TrainCnnArgs, TrainCrfArgs, TrainLinearArgs, VectorizerArgs,
};

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        // a bad config file is a usage problem, not a data problem
        Some(path) => RunConfig::load(path).map_err(|e| UsageError(format!("{e:#}")))?,
        None => RunConfig::default(),
    };
    let seed = cfg.get("seed", cli.seed, 0u64)?;
    match cli.command {
        Command::Split(a) => split(a, seed, &mut cfg),
        Command::Forms(a) => forms(a, &mut cfg),
        Command::Featurize(a) => featurize(a, &mut cfg),
        Command::TrainLinear(a) => train_linear(a, seed, &mut cfg),
        Command::TrainCnn(a) => train_cnn(a, seed, &mut cfg),
        Command::TrainCrf(a) => train_crf(a, seed, &mut cfg),
        Command::Predict(a) => predict(a, &mut cfg),
        Command::Ensemble(a) => ensemble(a, &mut cfg),
        Command::ExtractSpans(a) => extract_spans(a, &mut cfg),
        Command::Eval(a) => eval(a, &mut cfg),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Saves `value` as a versioned artifact with the resolved settings under
/// `run_config`; loaders ignore the extra field.
fn save_artifact<T: Artifact>(value: &T, cfg: &RunConfig, path: &Path) -> Result<()> {
    let mut doc: Value = serde_json::from_str(&artifact::to_json(value)?)?;
    doc.as_object_mut()
        .expect("artifacts serialize as objects")
        .insert("run_config".into(), json!(cfg.resolved()));
    write_json(path, &doc)
}

fn lexicon(args: &LexiconArgs, cfg: &mut RunConfig) -> Result<ModalLexicon> {
    Ok(
        match cfg.optional_path("modal_lexicon", args.modal_lexicon.clone())? {
            Some(p) => ModalLexicon::load(&p)?,
            None => ModalLexicon::default(),
        },
    )
}

/// Parses for the given sentences, when a CoNLL-U file is configured.
fn parses<'a>(
    args: &ParseArgs,
    texts: impl IntoIterator<Item = (&'a str, &'a str)>,
    cfg: &mut RunConfig,
) -> Result<Option<BTreeMap<String, ParsedSentence>>> {
    let Some(path) = cfg.optional_path("conllu", args.conllu.clone())? else {
        return Ok(None);
    };
    let raw: HashMap<String, String> = texts
        .into_iter()
        .map(|(id, t)| (id.to_string(), t.to_string()))
        .collect();
    Ok(Some(load_conllu(&path, &raw).with_context(|| {
        format!("loading parses from {}", path.display())
    })?))
}

fn sentences_with_parses(
    input: &Path,
    args: &ParseArgs,
    cfg: &mut RunConfig,
) -> Result<Vec<Document>> {
    let rows = load_sentences(input)?;
    let parsed = parses(
        args,
        rows.iter().map(|(i, t)| (i.as_str(), t.as_str())),
        cfg,
    )?;
    Ok(rows
        .iter()
        .map(|(id, text)| document_for(id, text, parsed.as_ref()))
        .collect())
}

fn split(a: SplitArgs, seed: u64, cfg: &mut RunConfig) -> Result<()> {
    let split_cfg = SplitConfig {
        train_fraction: cfg.get("ratio", a.ratio, 0.75)?,
        seed,
        stratified: cfg.get("stratified", a.stratified, true)?,
    };
    let dir = match a.out_dir {
        Some(d) => d,
        None => a
            .input
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from(".")),
    };
    let stem = a
        .input
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("data")
        .to_string();
    let train_path = dir.join(format!("{stem}.train.csv"));
    let val_path = dir.join(format!("{stem}.val.csv"));
    let (task, n_train, n_val) = if has_column(&a.input, "antecedent_startid")? {
        let data = load_task2_csv(&a.input)?;
        let (train, val) = random_split(&data, &split_cfg)?;
        write_task2_csv(create(&train_path)?, &train)?;
        write_task2_csv(create(&val_path)?, &val)?;
        (2, train.len(), val.len())
    } else {
        let data = load_task1_csv(&a.input)?;
        let (train, val) = stratified_split(&data, &split_cfg)?;
        write_task1_csv(create(&train_path)?, &train)?;
        write_task1_csv(create(&val_path)?, &val)?;
        (1, train.len(), val.len())
    };
    write_json(
        &dir.join(format!("{stem}.split.json")),
        &json!({
            "format": "cfx-split",
            "version": 1,
            "task": task,
            "train": n_train,
            "val": n_val,
            "run_config": cfg.resolved(),
        }),
    )?;
    println!(
        "train: {n_train} -> {}\nval:   {n_val} -> {}",
        train_path.display(),
        val_path.display()
    );
    Ok(())
}

fn forms(a: FormsArgs, cfg: &mut RunConfig) -> Result<()> {
    let lex = lexicon(&a.lexicon, cfg)?;
    let labelled = has_column(&a.input, "gold_label")?;
    let rows: Vec<(String, Option<Label>)> = if labelled {
        load_task1_csv(&a.input)?
            .into_iter()
            .map(|s| (s.text, Some(s.label)))
            .collect()
    } else {
        load_sentences(&a.input)?
            .into_iter()
            .map(|(_, t)| (t, None))
            .collect()
    };
    let mut counts: BTreeMap<FormLabel, (usize, usize)> =
        FormLabel::ALL.into_iter().map(|f| (f, (0, 0))).collect();
    for (text, label) in &rows {
        let c = counts
            .get_mut(&classify_text(text, &lex))
            .expect("all forms present");
        c.0 += 1;
        c.1 += usize::from(label.is_some_and(Label::is_positive));
    }
    if labelled {
        println!("{:<10} {:>8} {:>9}", "form", "total", "positive");
    } else {
        println!("{:<10} {:>8}", "form", "total");
    }
    let mut report = serde_json::Map::new();
    for (form, (total, pos)) in &counts {
        if labelled {
            println!("{:<10} {total:>8} {pos:>9}", form.name());
            report.insert(form.name().into(), json!({"total": total, "positive": pos}));
        } else {
            println!("{:<10} {total:>8}", form.name());
            report.insert(form.name().into(), json!({"total": total}));
        }
    }
    if let Some(out) = &a.out {
        write_json(
            out,
            &json!({
                "format": "cfx-forms",
                "version": 1,
                "forms": report,
                "run_config": cfg.resolved(),
            }),
        )?;
    }
    Ok(())
}

fn vectorizer_config(a: &VectorizerArgs, cfg: &mut RunConfig) -> Result<VectorizerConfig> {
    let d = VectorizerConfig::default();
    let channels = match &a.channels {
        Some(v) => Some(
            v.iter()
                .map(|s| s.trim().parse::<Channel>())
                .collect::<Result<Vec<_>, _>>()?,
        ),
        None => None,
    };
    let weighting = a
        .weighting
        .as_deref()
        .map(str::parse::<Weighting>)
        .transpose()?;
    let v = VectorizerConfig {
        channels: cfg.get_list("channels", channels, d.channels)?,
        ngram_min: cfg.get("ngram_min", a.ngram_min, d.ngram_min)?,
        ngram_max: cfg.get("ngram_max", a.ngram_max, d.ngram_max)?,
        top_k: cfg.get("top_k", a.top_k, d.top_k)?,
        weighting: cfg.get("weighting", weighting, d.weighting)?,
        keep_stopwords: cfg.get("keep_stopwords", a.keep_stopwords, d.keep_stopwords)?,
        lowercase: cfg.get("lowercase", a.lowercase, d.lowercase)?,
    };
    v.validate()?;
    Ok(v)
}

fn balance(flag: Option<&str>, cfg: &mut RunConfig) -> Result<BalanceStrategy> {
    let flag = flag.map(str::parse::<BalanceStrategy>).transpose()?;
    cfg.get("balance", flag, BalanceStrategy::Weights)
}

fn featurize(a: FeaturizeArgs, cfg: &mut RunConfig) -> Result<()> {
    let vcfg = vectorizer_config(&a.vectorizer, cfg)?;
    let docs = sentences_with_parses(&a.input, &a.parse, cfg)?;
    let fitted = fit_vectorizer(&docs, &vcfg)?;
    save_artifact(&fitted, cfg, &a.out)?;
    if let Some(path) = &a.matrix {
        let mut w = create(path)?;
        for (doc, row) in docs.iter().zip(fitted.transform_all(&docs)?) {
            serde_json::to_writer(&mut w, &json!({"id": doc.id, "features": row.entries()}))?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
    }
    println!(
        "{} features from {} sentences",
        fitted.n_features,
        docs.len()
    );
    Ok(())
}

fn train_linear(a: TrainLinearArgs, seed: u64, cfg: &mut RunConfig) -> Result<()> {
    let d = LinearTrainConfig::default();
    let loss = a.loss.as_deref().map(str::parse::<LossKind>).transpose()?;
    let settings = LinearSettings {
        vectorizer: vectorizer_config(&a.vectorizer, cfg)?,
        train: LinearTrainConfig {
            c: cfg.get("c", a.c, d.c)?,
            epochs: cfg.get("epochs", a.epochs, d.epochs)?,
            seed,
            class_weights: None,
            loss: cfg.get("loss", loss, d.loss)?,
        },
        balance: balance(a.balance.as_deref(), cfg)?,
        smote_k: cfg.get("smote_k", a.smote_k, LinearSettings::default().smote_k)?,
    };
    settings.train.validate()?;
    let data = load_task1_csv(&a.train)?;
    let parsed = parses(
        &a.parse,
        data.iter().map(|s| (s.id.as_str(), s.text.as_str())),
        cfg,
    )?;
    let docs: Vec<Document> = data.iter().map(|s| document(s, parsed.as_ref())).collect();
    let labels: Vec<Label> = data.iter().map(|s| s.label).collect();
    if a.per_form {
        let lex = lexicon(&a.lexicon, cfg)?;
        let model = train_per_form(&docs, &labels, &settings, &lex)?;
        save_artifact(&model, cfg, &a.out)?;
    } else {
        let model = train_linear_pipeline(&docs, &labels, &settings)?;
        save_artifact(&model, cfg, &a.out)?;
    }
    println!("trained on {} sentences -> {}", data.len(), a.out.display());
    Ok(())
}

/// Loads only vectors for words that occur in `docs`, in either case.
fn embeddings_for(path: &Path, docs: &[&[Document]]) -> Result<EmbeddingTable> {
    let vocab: HashSet<String> = docs
        .iter()
        .flat_map(|ds| ds.iter())
        .flat_map(|d| d.tokens.iter())
        .flat_map(|t| [t.clone(), t.to_lowercase()])
        .collect();
    load_embeddings_filtered(path, |w| vocab.contains(w))
        .with_context(|| format!("loading embeddings from {}", path.display()))
}

fn labelled_docs(path: &Path) -> Result<(Vec<Document>, Vec<Label>)> {
    let data = load_task1_csv(path)?;
    Ok((
        data.iter().map(|s| document(s, None)).collect(),
        data.iter().map(|s| s.label).collect(),
    ))
}

fn train_cnn(a: TrainCnnArgs, seed: u64, cfg: &mut RunConfig) -> Result<()> {
    let emb_path = cfg.required_path("embeddings", a.embeddings.clone())?;
    let od = OptimizerConfig::default();
    let optimizer = OptimizerConfig {
        lr: cfg.get("lr", a.lr, od.lr)?,
        beta1: cfg.get("beta1", a.beta1, od.beta1)?,
        beta2: cfg.get("beta2", a.beta2, od.beta2)?,
        eps: cfg.get("eps", a.eps, od.eps)?,
        weight_decay: cfg.get("weight_decay", a.weight_decay, od.weight_decay)?,
        epochs: cfg.get("epochs", a.epochs, od.epochs)?,
        batch_size: cfg.get("batch_size", a.batch_size, od.batch_size)?,
        seed,
    };
    optimizer.validate()?;
    let settings = CnnSettings {
        optimizer,
        balance: balance(a.balance.as_deref(), cfg)?,
    };
    let train = labelled_docs(&a.train)?;
    let val = labelled_docs(&a.val)?;
    let table = embeddings_for(&emb_path, &[&train.0, &val.0])?;
    let cd = CnnConfig::with_dim(table.dim());
    let cnn = CnnConfig {
        kernel_sizes: cfg.get_list("kernel_sizes", a.kernel_sizes.clone(), cd.kernel_sizes)?,
        filters_per_size: cfg.get("filters", a.filters, cd.filters_per_size)?,
        dropout_rate: cfg.get("dropout", a.dropout, cd.dropout_rate)?,
        max_len: cfg.get("max_len", a.max_len, cd.max_len)?,
        embedding_dim: table.dim(),
    };
    cnn.validate()?;
    let model = train_cnn_pipeline(
        (&train.0, &train.1),
        (&val.0, &val.1),
        &table,
        &cnn,
        &settings,
    )?;
    save_artifact(&model, cfg, &a.out)?;
    println!(
        "best epoch {} (validation F1 {:.4}) -> {}",
        model.best_epoch,
        model.best_val_f1,
        a.out.display()
    );
    Ok(())
}

fn train_crf(a: TrainCrfArgs, seed: u64, cfg: &mut RunConfig) -> Result<()> {
    let d = CrfTrainConfig::default();
    let crf = CrfTrainConfig {
        l2_lambda: cfg.get("crf_l2", a.crf_l2, d.l2_lambda)?,
        lr: cfg.get("crf_lr", a.crf_lr, d.lr)?,
        lr_decay: cfg.get("crf_lr_decay", a.crf_lr_decay, d.lr_decay)?,
        epochs: cfg.get("crf_epochs", a.crf_epochs, d.epochs)?,
        batch_size: cfg.get("crf_batch_size", a.crf_batch_size, d.batch_size)?,
        seed,
    };
    crf.validate()?;
    let lex = lexicon(&a.lexicon, cfg)?;
    let data = load_task2_csv(&a.train)?;
    let parsed = parses(
        &a.parse,
        data.iter().map(|s| (s.id.as_str(), s.text.as_str())),
        cfg,
    )?
    .unwrap_or_default();
    let models = train_span_models(&data, &parsed, &crf, &lex)?;
    save_artifact(&models, cfg, &a.out)?;
    println!(
        "trained span taggers on {} sentences -> {}",
        data.len(),
        a.out.display()
    );
    Ok(())
}

fn predict(a: PredictArgs, cfg: &mut RunConfig) -> Result<()> {
    let text = std::fs::read_to_string(&a.model)
        .with_context(|| format!("reading {}", a.model.display()))?;
    let docs = sentences_with_parses(&a.input, &a.parse, cfg)?;
    let labels = match artifact::peek_format(&text)?.as_str() {
        f if f == LinearPipeline::FORMAT => {
            artifact::from_json::<LinearPipeline>(&text)?.predict_all(&docs)?
        }
        f if f == PerFormPipeline::FORMAT => {
            artifact::from_json::<PerFormPipeline>(&text)?.predict_all(&docs)?
        }
        f if f == CnnPipeline::FORMAT => {
            let model = artifact::from_json::<CnnPipeline>(&text)?;
            let path = cfg.required_path("embeddings", a.embeddings.clone())?;
            // CNN inputs never use parses
            let plain: Vec<Document> = load_sentences(&a.input)?
                .iter()
                .map(|(id, t)| document_for(id, t, None))
                .collect();
            let table = embeddings_for(&path, &[&plain])?;
            model.predict_all(&plain, &table)?
        }
        other => bail!(
            "{}: {other:?} is not a sentence classifier",
            a.model.display()
        ),
    };
    let rows: Vec<(String, Label)> = docs.into_iter().map(|d| d.id).zip(labels).collect();
    write_label_predictions(create(&a.out)?, &rows)?;
    Ok(())
}

fn ensemble(a: EnsembleArgs, cfg: &mut RunConfig) -> Result<()> {
    let vote_cfg = EnsembleConfig::new(cfg.get(
        "threshold",
        a.threshold,
        EnsembleConfig::default().threshold,
    )?)?;
    let mut ids: Option<Vec<String>> = None;
    let mut members = Vec::with_capacity(a.models.len());
    for path in &a.models {
        let rows = load_label_predictions(path)
            .with_context(|| format!("reading predictions {}", path.display()))?;
        let (these, labels): (Vec<String>, Vec<Label>) = rows.into_iter().unzip();
        match &ids {
            None => ids = Some(these),
            Some(first) if *first != these => bail!(
                "{} lists different sentence ids (or order) than {}",
                path.display(),
                a.models[0].display()
            ),
            Some(_) => {}
        }
        members.push(labels);
    }
    let ids = ids.unwrap_or_default();
    let votes = vote_all(&members, &vote_cfg)?;
    let rows: Vec<(String, Label)> = ids.into_iter().zip(votes).collect();
    write_label_predictions(create(&a.out)?, &rows)?;
    Ok(())
}

fn extract_spans(a: ExtractSpansArgs, cfg: &mut RunConfig) -> Result<()> {
    let models: SpanModels = artifact::load(&a.model)?;
    let rows = load_sentences(&a.input)?;
    let parsed = parses(
        &a.parse,
        rows.iter().map(|(i, t)| (i.as_str(), t.as_str())),
        cfg,
    )?;
    let preds = rows
        .iter()
        .map(|(id, text)| models.predict(id, text, parsed.as_ref().and_then(|p| p.get(id))))
        .collect::<cfx_core::Result<Vec<SpanPrediction>>>()?;
    write_span_predictions(create(&a.out)?, &preds)?;
    Ok(())
}

/// Reorders `pred` to follow `gold_ids`; every id must appear exactly once.
fn align<T>(gold_ids: &[&str], pred: Vec<T>, id_of: impl Fn(&T) -> &str) -> Result<Vec<T>> {
    if pred.len() != gold_ids.len() {
        bail!(
            "{} predictions for {} gold sentences",
            pred.len(),
            gold_ids.len()
        );
    }
    let mut by_id: HashMap<String, T> = HashMap::with_capacity(pred.len());
    for p in pred {
        by_id.insert(id_of(&p).to_string(), p);
    }
    gold_ids
        .iter()
        .map(|id| {
            by_id
                .remove(*id)
                .with_context(|| format!("no prediction for sentence {id:?}"))
        })
        .collect()
}

fn eval(a: EvalArgs, cfg: &mut RunConfig) -> Result<()> {
    let report = if a.task == 1 {
        let gold = load_task1_csv(&a.gold)?;
        let ids: Vec<&str> = gold.iter().map(|s| s.id.as_str()).collect();
        let pred = align(&ids, load_label_predictions(&a.pred)?, |p| p.0.as_str())?;
        let g: Vec<Label> = gold.iter().map(|s| s.label).collect();
        let p: Vec<Label> = pred.iter().map(|p| p.1).collect();
        MetricsReport {
            task: "1".into(),
            examples: gold.len(),
            classification: Some(prf_binary(&g, &p)?),
            spans: None,
        }
    } else {
        let gold: Vec<SpanAnnotation> = load_task2_csv(&a.gold)?;
        let ids: Vec<&str> = gold.iter().map(|s| s.id.as_str()).collect();
        let pred = align(&ids, load_span_predictions(&a.pred)?, |p| p.id.as_str())?;
        MetricsReport {
            task: "2".into(),
            examples: gold.len(),
            classification: None,
            spans: Some(span_metrics(&gold, &pred)?),
        }
    };
    print!("{}", report.table());
    if let Some(out) = &a.out {
        save_artifact(&report, cfg, out)?;
    }
    Ok(())
}
