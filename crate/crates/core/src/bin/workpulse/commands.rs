use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Subcommand};
use serde::Serialize;
use serde_json::json;

use workpulse::analytics::{
    affect_matrix, compare_profiles, kendall_tau, lexical_stats, parse_tagged_line, pos_profile, separate_accounts,
    volume_series, write_affect_csv, write_series_csv, AccountParams, AccountType, Granularity,
};
use workpulse::annotation::{
    aggregate_labels, agreement_pooled, build_gold_set, make_batches_with_prefix, read_labels_csv, write_labels_csv,
    AggregatedLabel, Batch, GoldSource, RATERS_PER_TWEET,
};
use workpulse::corpus::{ingest_jsonl, job_likely_filter, write_job_likely_jsonl, write_jsonl, Corpus, FilterRules, SlangDictionary};
use workpulse::lexicon::{score_category, Lexicon};
use workpulse::model::{
    grid_search_cv, load_model, save_model, select_round2_samples, top_features, write_cv_table, EvalReport, Featurizer,
    ScoredItem, TrainConfig,
};
use workpulse::pipeline::{
    export_reports, generate_corpus, read_training_csv, read_truth_csv, run_round, simulate_annotations, write_truth_csv,
    ExportInputs, RoundContext, RoundRecipe, SimulatedAnnotator, SyntheticConfig, TrainingRow,
    TrainingSource,
};
use workpulse::service::{ProjectDefinition, Service, ServiceConfig, SystemClock, PROJECT_FILE};
use workpulse::topics::{fit_lda_observed, prepare_documents, DocumentOptions, LdaConfig};
use workpulse::Error;

use crate::config::parse_list;
use crate::{CliError, CliResult, Command, Globals, Output};

pub fn run(cmd: Command, g: &Globals) -> CliResult {
    match cmd {
        Command::Ingest(a) => ingest(a),
        Command::Filter(a) => filter(a, g),
        Command::Batch(a) => batch(a, g),
        Command::Serve(a) => serve(a, g),
        Command::Simulate(c) => simulate(c, g),
        Command::Aggregate(a) => aggregate(a),
        Command::Gold(a) => gold(a),
        Command::Train(a) => train(a, g),
        Command::Classify(a) => classify(a, g),
        Command::Sample(a) => sample(a, g),
        Command::Evaluate(a) => evaluate(a, g),
        Command::Topics(a) => topics(a, g),
        Command::Affect(a) => affect(a, g),
        Command::Timeseries(a) => timeseries(a, g),
        Command::Accounts(a) => accounts(a),
        Command::Stats(a) => stats(a, g),
        Command::Kendall(a) => kendall(a, g),
        Command::Pos(a) => pos(a),
        Command::Round(a) => round(a, g),
        Command::Export(a) => export(a, g),
    }
}

fn print_json<T: Serialize>(value: &T) -> CliResult {
    let s = serde_json::to_string_pretty(value).map_err(Error::from)?;
    // a closed pipe (e.g. `| head`) is not an error
    let _ = writeln!(std::io::stdout().lock(), "{s}");
    Ok(())
}

fn create(path: &Path) -> CliResult<File> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::Io {
            path: parent.to_path_buf(),
            source: e,
        })?;
    }
    File::create(path).map_err(|e| {
        CliError::Data(Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })
}

fn open(path: &Path) -> CliResult<File> {
    File::open(path).map_err(|e| {
        CliError::Data(Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })
}

fn write_json_file<T: Serialize>(path: &Path, value: &T) -> CliResult {
    let mut f = create(path)?;
    serde_json::to_writer_pretty(&mut f, value).map_err(Error::from)?;
    f.write_all(b"\n").map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn load_corpus(path: &Path) -> CliResult<Corpus> {
    let report = ingest_jsonl(path)?;
    if report.skipped > 0 || report.duplicates > 0 {
        log::warn!(
            "{}: skipped {} malformed line(s), {} duplicate id(s)",
            path.display(),
            report.skipped,
            report.duplicates
        );
    }
    Ok(report.corpus)
}

fn slang(args: &Option<PathBuf>, g: &Globals) -> CliResult<SlangDictionary> {
    match args.clone().or_else(|| g.config.path("slang")) {
        Some(p) => Ok(SlangDictionary::load(p)?),
        None => Ok(SlangDictionary::new()),
    }
}

fn lexicon(args: &Option<PathBuf>, g: &Globals) -> CliResult<Lexicon> {
    match args.clone().or_else(|| g.config.path("lexicon")) {
        Some(p) => Ok(Lexicon::load(p)?),
        None => {
            log::warn!("no lexicon given; using the small built-in demo lexicon");
            Ok(Lexicon::demo())
        }
    }
}

/// `id,score` rows, with or without a header.
fn read_scores(path: &Path) -> CliResult<Vec<(String, f64)>> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(open(path)?);
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(Error::from)?;
        let (Some(id), Some(score)) = (rec.get(0), rec.get(1)) else {
            return Err(format_err("score csv", i + 1, "expected id,score"));
        };
        match score.trim().parse::<f64>() {
            Ok(s) => out.push((id.to_string(), s)),
            Err(_) if i == 0 => continue,
            Err(e) => return Err(format_err("score csv", i + 1, &e.to_string())),
        }
    }
    Ok(out)
}

fn format_err(what: &'static str, line: usize, message: &str) -> CliError {
    CliError::Data(Error::Format {
        what,
        line,
        message: message.to_string(),
    })
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[command(flatten)]
    out: Output,
}

fn ingest(a: IngestArgs) -> CliResult {
    let report = ingest_jsonl(&a.input)?;
    write_jsonl(&report.corpus.tweets, &a.out.output)?;
    print_json(&json!({
        "accepted": report.corpus.len(),
        "skipped": report.skipped,
        "duplicates": report.duplicates,
    }))
}

#[derive(Args, Debug)]
pub struct FilterArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[command(flatten)]
    out: Output,
    /// Sectioned rule file; the built-in rules otherwise.
    #[arg(long)]
    rules: Option<PathBuf>,
    /// Tab-separated slang dictionary.
    #[arg(long)]
    slang: Option<PathBuf>,
}

fn filter(a: FilterArgs, g: &Globals) -> CliResult {
    let corpus = load_corpus(&a.input)?;
    let rules = match a.rules.or_else(|| g.config.path("rules")) {
        Some(p) => FilterRules::load(p)?,
        None => FilterRules::default(),
    };
    let jl = job_likely_filter(&corpus, &rules, &slang(&a.slang, g)?);
    write_job_likely_jsonl(&jl.tweets, &a.out.output)?;
    print_json(&json!({ "input": corpus.len(), "job_likely": jl.len() }))
}

#[derive(Args, Debug)]
pub struct BatchArgs {
    /// Messages to annotate (JSONL).
    #[arg(short, long)]
    input: PathBuf,
    /// Project id registered under `<data-dir>/projects/`.
    #[arg(long)]
    project: String,
    #[arg(long, default_value_t = 1)]
    round: u32,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    dups: Option<usize>,
    /// Also write the batches as JSON here.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn batch(a: BatchArgs, g: &Globals) -> CliResult {
    let corpus = load_corpus(&a.input)?;
    let params = g.config.round_params()?;
    let ids: Vec<String> = corpus.tweets.iter().map(|t| t.id.clone()).collect();
    let batches = make_batches_with_prefix(
        &ids,
        a.batch_size.unwrap_or(params.batch_size),
        a.dups.unwrap_or(params.dup_count),
        g.seed,
        &format!("{}-batch", a.project),
    )?;
    let def = ProjectDefinition {
        id: a.project.clone(),
        round: a.round,
        batches: batches.clone(),
        texts: corpus.tweets.iter().map(|t| (t.id.clone(), t.text.clone())).collect(),
    };
    def.validate()?;
    let dir = g.data_dir.join("projects").join(&a.project);
    if dir.join(PROJECT_FILE).exists() {
        return Err(CliError::Data(Error::Conflict(format!(
            "project {} already exists in {}",
            a.project,
            dir.display()
        ))));
    }
    std::fs::create_dir_all(&dir).map_err(|e| Error::Io {
        path: dir.clone(),
        source: e,
    })?;
    def.save(dir.join(PROJECT_FILE))?;
    if let Some(out) = &a.output {
        write_json_file(out, &batches)?;
    }
    print_json(&json!({
        "project": a.project,
        "batches": batches.len(),
        "tweets": ids.len(),
        "directory": dir,
    }))
}

#[derive(Args, Debug)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Shared token required in the `x-workpulse-token` header.
    #[arg(long)]
    token: Option<String>,
    #[arg(long, default_value_t = 30)]
    ttl_minutes: i64,
    #[arg(long, default_value_t = 100)]
    snapshot_every: u64,
}

fn serve(a: ServeArgs, g: &Globals) -> CliResult {
    let config = ServiceConfig {
        assignment_ttl: chrono::Duration::minutes(a.ttl_minutes),
        token: a.token,
        snapshot_every: a.snapshot_every,
    };
    let svc = Arc::new(Service::open_data_dir(&g.data_dir, config, Arc::new(SystemClock))?);
    if svc.project_ids().is_empty() {
        log::warn!("no projects under {}", g.data_dir.join("projects").display());
    }
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Internal(e.to_string()))?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind((a.host.as_str(), a.port))
            .await
            .map_err(|e| CliError::Internal(format!("cannot bind {}:{}: {e}", a.host, a.port)))?;
        let addr = listener.local_addr().map_err(|e| CliError::Internal(e.to_string()))?;
        eprintln!("listening on http://{addr}/v1 ({} project(s))", svc.project_ids().len());
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        workpulse::service::serve(listener, svc.clone(), shutdown)
            .await
            .map_err(|e| CliError::Internal(e.to_string()))
    })?;
    svc.checkpoint()?;
    Ok(())
}

#[derive(Subcommand, Debug)]
pub enum SimulateCommand {
    /// Write a synthetic corpus and its ground-truth labels.
    Corpus(SimCorpusArgs),
    /// Answer batches with noisy oracle workers.
    Labels(SimLabelsArgs),
}

#[derive(Args, Debug)]
pub struct SimCorpusArgs {
    #[arg(long, default_value_t = 2000)]
    tweets: usize,
    #[arg(long, default_value_t = 150)]
    accounts: usize,
    /// Directory for corpus.jsonl and truth.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SimLabelsArgs {
    #[arg(long)]
    batches: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    flip: Option<f64>,
    #[arg(long, default_value_t = RATERS_PER_TWEET)]
    workers: usize,
    #[command(flatten)]
    out: Output,
}

fn simulate(c: SimulateCommand, g: &Globals) -> CliResult {
    match c {
        SimulateCommand::Corpus(a) => {
            let syn = generate_corpus(&SyntheticConfig {
                n_tweets: a.tweets,
                n_accounts: a.accounts,
                seed: g.seed,
                ..SyntheticConfig::default()
            })?;
            std::fs::create_dir_all(&a.out).map_err(|e| Error::Io {
                path: a.out.clone(),
                source: e,
            })?;
            write_jsonl(&syn.corpus.tweets, a.out.join("corpus.jsonl"))?;
            write_truth_csv(&syn.truth, create(&a.out.join("truth.csv"))?)?;
            print_json(&json!({
                "tweets": syn.corpus.len(),
                "job_related": syn.truth.values().filter(|&&y| y).count(),
                "directory": a.out,
            }))
        }
        SimulateCommand::Labels(a) => {
            let batches: Vec<Batch> = serde_json::from_reader(BufReader::new(open(&a.batches)?)).map_err(Error::from)?;
            let truth = read_truth_csv(open(&a.truth)?)?;
            let flip = match a.flip {
                Some(f) => f,
                None => g.config.round_params()?.flip_probability,
            };
            let annotator = SimulatedAnnotator::new(Arc::new(truth), flip, g.seed)?;
            let labels = simulate_annotations(&batches, &annotator, a.workers)?;
            write_labels_csv(&labels, create(&a.out.output)?)?;
            print_json(&json!({ "labels": labels.len(), "batches": batches.len() }))
        }
    }
}

#[derive(Args, Debug)]
pub struct AggregateArgs {
    #[arg(long)]
    labels: PathBuf,
    /// Batch definitions, for agreement and worker consistency.
    #[arg(long)]
    batches: Option<PathBuf>,
    #[command(flatten)]
    out: Output,
}

fn aggregate(a: AggregateArgs) -> CliResult {
    let labels = read_labels_csv(open(&a.labels)?)?;
    let agg = aggregate_labels(&labels);
    for d in &agg.deficiencies {
        log::warn!("tweet {} has {} counted answer(s)", d.tweet_id, d.answers);
    }
    let agreement = match &a.batches {
        Some(p) => {
            let batches: Vec<Batch> = serde_json::from_reader(BufReader::new(open(p)?)).map_err(Error::from)?;
            Some(agreement_pooled(&labels, &batches, RATERS_PER_TWEET)?)
        }
        None => None,
    };
    write_json_file(
        &a.out.output,
        &json!({
            "histogram": agg.histogram(),
            "agreement": agreement,
            "labels": agg.labels,
            "deficiencies": agg.deficiencies,
        }),
    )?;
    print_json(&json!({ "histogram": agg.histogram(), "deficiencies": agg.deficiencies.len() }))
}

#[derive(Args, Debug)]
pub struct GoldArgs {
    /// Output of `aggregate`.
    #[arg(long)]
    aggregation: PathBuf,
    /// `tweet_id,job_related` expert decisions for the majority tiers.
    #[arg(long)]
    adjudications: Option<PathBuf>,
    #[command(flatten)]
    out: Output,
}

#[derive(serde::Deserialize)]
struct AggregationFile {
    labels: Vec<AggregatedLabel>,
}

fn gold(a: GoldArgs) -> CliResult {
    let agg: AggregationFile = serde_json::from_reader(BufReader::new(open(&a.aggregation)?)).map_err(Error::from)?;
    let adj: HashMap<String, bool> = match &a.adjudications {
        Some(p) => read_truth_csv(open(p)?)?.into_iter().collect(),
        None => HashMap::new(),
    };
    let gold = build_gold_set(&agg.labels, &adj)?;
    let mut w = csv::Writer::from_writer(create(&a.out.output)?);
    for g in &gold {
        w.serialize(TrainingRow {
            tweet_id: g.tweet_id.clone(),
            job_related: g.job_related,
            source: match g.source {
                GoldSource::UnanimousCrowd => TrainingSource::UnanimousCrowd,
                GoldSource::Community => TrainingSource::Community,
            },
        })
        .map_err(Error::from)?;
    }
    w.flush().map_err(|e| Error::Io {
        path: a.out.output.clone(),
        source: e,
    })?;
    let pos = gold.iter().filter(|g| g.job_related).count();
    print_json(&json!({ "job_related": pos, "not_job_related": gold.len() - pos }))
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// `tweet_id,job_related,source` rows.
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    model_out: PathBuf,
    #[arg(long)]
    cv_table: Option<PathBuf>,
    /// Comma-separated C values.
    #[arg(long)]
    c_grid: Option<String>,
    /// Comma-separated positive:negative class-weight ratios.
    #[arg(long)]
    ratio_grid: Option<String>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long, default_value_t = 15)]
    top: usize,
    #[arg(long)]
    slang: Option<PathBuf>,
}

fn tokens_for(corpus: &Corpus, slang: &SlangDictionary, id: &str) -> CliResult<Vec<String>> {
    corpus
        .get(id)
        .map(|t| t.tokens(slang))
        .ok_or_else(|| CliError::Data(Error::NotFound(format!("tweet {id} in the corpus"))))
}

fn train(a: TrainArgs, g: &Globals) -> CliResult {
    let corpus = load_corpus(&a.corpus)?;
    let slang = slang(&a.slang, g)?;
    let rows = read_training_csv(&a.gold)?;
    let params = g.config.round_params()?;
    let grid = |arg: &Option<String>, default: Vec<f64>| -> CliResult<Vec<f64>> {
        match arg {
            Some(s) => parse_list(s).map_err(CliError::Usage),
            None => Ok(default),
        }
    };
    let c_grid = grid(&a.c_grid, params.c_grid.clone())?;
    let ratio_grid = grid(&a.ratio_grid, params.ratio_grid.clone())?;
    let docs: Vec<Vec<String>> = rows
        .iter()
        .map(|r| tokens_for(&corpus, &slang, &r.tweet_id))
        .collect::<CliResult<_>>()?;
    let featurizer = Arc::new(Featurizer::fit(docs.iter().map(Vec::as_slice), params.ngram)?);
    let examples: Vec<_> = docs
        .iter()
        .zip(&rows)
        .map(|(d, r)| (featurizer.transform(d), r.job_related))
        .collect();
    let base = TrainConfig {
        seed: g.seed,
        ..TrainConfig::default()
    };
    let search = grid_search_cv(
        &examples,
        featurizer,
        &c_grid,
        &ratio_grid,
        a.folds.unwrap_or(params.folds),
        &base,
    )?;
    save_model(&search.model, &a.model_out)?;
    if let Some(p) = &a.cv_table {
        write_cv_table(&search.table, create(p)?)?;
    }
    let (pos, neg) = top_features(&search.model, a.top);
    print_json(&json!({
        "C": search.best.c,
        "ratio": search.best.class_weight_ratio,
        "examples": examples.len(),
        "features": search.model.weights.len(),
        "top_job_related": pos,
        "top_not_job_related": neg,
    }))
}

#[derive(Args, Debug)]
pub struct ClassifyArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[command(flatten)]
    out: Output,
    #[arg(long)]
    slang: Option<PathBuf>,
}

fn classify(a: ClassifyArgs, g: &Globals) -> CliResult {
    let model = load_model(&a.model)?;
    let corpus = load_corpus(&a.corpus)?;
    let slang = slang(&a.slang, g)?;
    let mut w = csv::Writer::from_writer(create(&a.out.output)?);
    w.write_record(["tweet_id", "score"]).map_err(Error::from)?;
    let mut positives = 0;
    for t in &corpus.tweets {
        let s = model.score_tokens(&t.tokens(&slang))?;
        positives += usize::from(s.is_positive());
        w.write_record([t.id.clone(), s.value().to_string()]).map_err(Error::from)?;
    }
    w.flush().map_err(|e| Error::Io {
        path: a.out.output.clone(),
        source: e,
    })?;
    print_json(&json!({ "scored": corpus.len(), "job_related": positives }))
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    /// `tweet_id,score` from `classify`.
    #[arg(long)]
    scores: PathBuf,
    #[arg(long)]
    type1: Option<usize>,
    #[arg(long)]
    type2: Option<usize>,
    #[arg(long)]
    percentile: Option<f64>,
    #[command(flatten)]
    out: Output,
}

fn sample(a: SampleArgs, g: &Globals) -> CliResult {
    let params = g.config.round_params()?;
    let scored: Vec<ScoredItem> = read_scores(&a.scores)?
        .into_iter()
        .map(|(id, score)| ScoredItem { id, score })
        .collect();
    let s = select_round2_samples(
        &scored,
        a.type1.unwrap_or(params.type1_count),
        a.type2.unwrap_or(params.type2_count),
        a.percentile.unwrap_or(params.percentile),
        g.seed,
    )?;
    write_json_file(&a.out.output, &s)?;
    print_json(&json!({
        "cutoff": s.cutoff,
        "type1": s.type1.len(),
        "type2": s.type2.len(),
        "warnings": s.warnings,
    }))
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    /// `tweet_id,job_related`; only these tweets are evaluated.
    #[arg(long)]
    truth: PathBuf,
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long)]
    slang: Option<PathBuf>,
}

fn evaluate(a: EvaluateArgs, g: &Globals) -> CliResult {
    let model = load_model(&a.model)?;
    let corpus = load_corpus(&a.corpus)?;
    let slang = slang(&a.slang, g)?;
    let truth = read_truth_csv(open(&a.truth)?)?;
    let mut predicted = Vec::with_capacity(truth.len());
    let mut actual = Vec::with_capacity(truth.len());
    for (id, &y) in &truth {
        predicted.push(model.score_tokens(&tokens_for(&corpus, &slang, id)?)?.is_positive());
        actual.push(y);
    }
    let report = EvalReport::from_predictions(&predicted, &actual)?;
    if let Some(p) = &a.output {
        write_json_file(p, &report)?;
    }
    print_json(&report)
}

#[derive(Args, Debug)]
pub struct TopicsArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Restrict to tweets scored positive in this `tweet_id,score` file.
    #[arg(long)]
    scores: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    topics: usize,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long, default_value_t = workpulse::topics::DEFAULT_MIN_DOC_LEN)]
    min_len: usize,
    #[arg(long, default_value_t = workpulse::topics::DEFAULT_STOPLIST_SIZE)]
    stoplist: usize,
    #[arg(long, default_value_t = 10)]
    top: usize,
    /// Also write the full model dump here.
    #[arg(long)]
    dump: Option<PathBuf>,
    #[command(flatten)]
    out: Output,
    #[arg(long)]
    slang: Option<PathBuf>,
}

fn positive_ids(scores: &Option<PathBuf>) -> CliResult<Option<std::collections::HashSet<String>>> {
    scores
        .as_ref()
        .map(|p| {
            Ok(read_scores(p)?
                .into_iter()
                .filter(|(_, s)| *s > 0.0)
                .map(|(id, _)| id)
                .collect())
        })
        .transpose()
}

fn topics(a: TopicsArgs, g: &Globals) -> CliResult {
    let corpus = load_corpus(&a.corpus)?;
    let slang = slang(&a.slang, g)?;
    let keep = positive_ids(&a.scores)?;
    let tweets: Vec<(String, Vec<String>)> = corpus
        .tweets
        .iter()
        .filter(|t| keep.as_ref().is_none_or(|k| k.contains(&t.id)))
        .map(|t| (t.account_id.clone(), t.tokens(&slang)))
        .collect();
    let set = prepare_documents(
        &tweets,
        &DocumentOptions {
            min_len: a.min_len,
            stoplist_size: a.stoplist,
        },
    );
    let mut cfg = LdaConfig::with_topics(a.topics);
    cfg.seed = g.seed;
    if let Some(v) = a.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = a.beta {
        cfg.beta = v;
    }
    if let Some(v) = a.iterations {
        cfg.iterations = v;
    }
    let model = fit_lda_observed(&set.documents, &cfg, |sweep, _| {
        if sweep % 100 == 0 {
            log::info!("sweep {sweep}");
        }
    })?;
    write_json_file(&a.out.output, &model.summaries(a.top))?;
    if let Some(p) = &a.dump {
        model.save(p)?;
    }
    print_json(&json!({
        "documents": set.documents.len(),
        "dropped": set.dropped,
        "vocabulary": model.vocab.len(),
        "log_likelihood": model.log_likelihood(),
    }))
}

#[derive(Args, Debug)]
pub struct AffectArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Restrict to tweets scored positive in this `tweet_id,score` file.
    #[arg(long)]
    scores: Option<PathBuf>,
    #[command(flatten)]
    out: Output,
    #[arg(long)]
    slang: Option<PathBuf>,
}

fn affect(a: AffectArgs, g: &Globals) -> CliResult {
    let corpus = load_corpus(&a.corpus)?;
    let slang = slang(&a.slang, g)?;
    let lex = lexicon(&a.lexicon, g)?;
    let keep = positive_ids(&a.scores)?;
    let rows: Vec<_> = corpus
        .tweets
        .iter()
        .filter(|t| keep.as_ref().is_none_or(|k| k.contains(&t.id)))
        .map(|t| (t.created_at_utc, t.tokens(&slang)))
        .collect();
    let m = affect_matrix(rows.iter().map(|(t, toks)| (*t, toks.as_slice())), &lex, g.zone)?;
    write_affect_csv(&m, create(&a.out.output)?)?;
    print_json(&json!({ "tweets": m.total_n(), "zone": g.zone.to_string() }))
}

#[derive(Args, Debug)]
pub struct TimeseriesArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// month, weekday, hour or weekday-hour.
    #[arg(long, default_value = "month")]
    granularity: String,
    #[arg(long)]
    scores: Option<PathBuf>,
    #[command(flatten)]
    out: Output,
}

fn timeseries(a: TimeseriesArgs, g: &Globals) -> CliResult {
    let granularity: Granularity = a
        .granularity
        .parse()
        .map_err(|e: Error| CliError::Usage(e.to_string()))?;
    let corpus = load_corpus(&a.corpus)?;
    let keep = positive_ids(&a.scores)?;
    let times: Vec<_> = corpus
        .tweets
        .iter()
        .filter(|t| keep.as_ref().is_none_or(|k| k.contains(&t.id)))
        .map(|t| t.created_at_utc)
        .collect();
    let series = volume_series(&times, granularity, g.zone);
    write_series_csv(&series, create(&a.out.output)?)?;
    print_json(&json!({ "tweets": times.len(), "buckets": series.len() }))
}

#[derive(Args, Debug)]
pub struct AccountsArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    theta: Option<f64>,
    #[command(flatten)]
    out: Output,
}

fn accounts(a: AccountsArgs) -> CliResult {
    let corpus = load_corpus(&a.corpus)?;
    let mut params = AccountParams::default();
    if let Some(t) = a.theta {
        params.theta = t;
    }
    let accts = separate_accounts(&corpus, &params);
    let mut w = csv::Writer::from_writer(create(&a.out.output)?);
    w.write_record(["account_id", "type", "ad_like", "total"]).map_err(Error::from)?;
    for (id, c) in &accts {
        let kind = match c.account_type {
            AccountType::Individual => "individual",
            AccountType::Commercial => "commercial",
        };
        w.write_record([id.as_str(), kind, &c.ad_like.to_string(), &c.total.to_string()])
            .map_err(Error::from)?;
    }
    w.flush().map_err(|e| Error::Io {
        path: a.out.output.clone(),
        source: e,
    })?;
    let commercial = accts
        .values()
        .filter(|c| c.account_type == AccountType::Commercial)
        .count();
    print_json(&json!({ "individual": accts.len() - commercial, "commercial": commercial }))
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// `accounts` output; statistics are then split by account type.
    #[arg(long)]
    accounts: Option<PathBuf>,
    #[arg(long)]
    slang: Option<PathBuf>,
}

fn stats(a: StatsArgs, g: &Globals) -> CliResult {
    let corpus = load_corpus(&a.corpus)?;
    let slang = slang(&a.slang, g)?;
    let rows: Vec<(&str, Vec<String>)> = corpus
        .tweets
        .iter()
        .map(|t| (t.account_id.as_str(), t.tokens(&slang)))
        .collect();
    let groups: BTreeMap<String, String> = match &a.accounts {
        Some(p) => {
            let mut r = csv::Reader::from_reader(open(p)?);
            let mut m = BTreeMap::new();
            for rec in r.records() {
                let rec = rec.map_err(Error::from)?;
                m.insert(rec[0].to_string(), rec[1].to_string());
            }
            m
        }
        None => BTreeMap::new(),
    };
    let mut out = BTreeMap::new();
    out.insert("all".to_string(), lexical_stats(rows.iter().map(|(a, t)| (*a, t))));
    for group in ["individual", "commercial"] {
        if groups.is_empty() {
            break;
        }
        let s = lexical_stats(
            rows.iter()
                .filter(|(acct, _)| groups.get(*acct).map(String::as_str) == Some(group))
                .map(|(acct, t)| (*acct, t)),
        );
        out.insert(group.to_string(), s);
    }
    print_json(&out)
}

#[derive(Args, Debug)]
pub struct KendallArgs {
    /// `id,score` file for the first ranking.
    #[arg(long, requires = "second")]
    first: Option<PathBuf>,
    #[arg(long)]
    second: Option<PathBuf>,
    /// Alternatively rank `--corpus` by this model's confidence...
    #[arg(long, conflicts_with = "first", requires = "corpus")]
    model: Option<PathBuf>,
    /// ...and by the lexicon category ratio.
    #[arg(long, default_value = "work")]
    category: String,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long)]
    slang: Option<PathBuf>,
}

fn kendall(a: KendallArgs, g: &Globals) -> CliResult {
    let (r1, r2) = match (&a.first, &a.second, &a.model, &a.corpus) {
        (Some(f), Some(s), _, _) => (read_scores(f)?, read_scores(s)?),
        (None, _, Some(m), Some(c)) => {
            let model = load_model(m)?;
            let corpus = load_corpus(c)?;
            let slang = slang(&a.slang, g)?;
            let lex = lexicon(&a.lexicon, g)?;
            let mut r1 = Vec::with_capacity(corpus.len());
            let mut r2 = Vec::with_capacity(corpus.len());
            for t in &corpus.tweets {
                let toks = t.tokens(&slang);
                r1.push((t.id.clone(), model.score_tokens(&toks)?.value()));
                r2.push((t.id.clone(), score_category(&toks, &lex, &a.category)?.ratio));
            }
            (r1, r2)
        }
        _ => {
            return Err(CliError::Usage(
                "give --first and --second, or --model with --corpus".into(),
            ))
        }
    };
    print_json(&kendall_tau(&r1, &r2)?)
}

#[derive(Args, Debug)]
pub struct PosArgs {
    /// One tweet per line as `token/TAG token/TAG ...`.
    #[arg(long)]
    group_a: PathBuf,
    #[arg(long)]
    group_b: PathBuf,
    #[command(flatten)]
    out: Output,
}

fn read_tagged(path: &Path) -> CliResult<Vec<Vec<(String, String)>>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(open(path)?).lines().enumerate() {
        let line = line.map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_tagged_line(&line).map_err(|e| format_err("tagged text", i + 1, &e.to_string()))?);
    }
    Ok(out)
}

fn pos(a: PosArgs) -> CliResult {
    let pa = pos_profile(&read_tagged(&a.group_a)?)?;
    let pb = pos_profile(&read_tagged(&a.group_b)?)?;
    let mut w = csv::Writer::from_writer(create(&a.out.output)?);
    w.write_record(["tag", "group_a", "group_b", "difference"]).map_err(Error::from)?;
    for d in compare_profiles(&pa, &pb) {
        w.write_record([
            d.tag.clone(),
            format!("{:.6}", d.group_a),
            format!("{:.6}", d.group_b),
            format!("{:.6}", d.difference),
        ])
        .map_err(Error::from)?;
    }
    w.flush().map_err(|e| Error::Io {
        path: a.out.output.clone(),
        source: e,
    })?;
    print_json(&json!({ "group_a_tweets": pa.tweets, "group_b_tweets": pb.tweets }))
}

#[derive(Args, Debug)]
pub struct RoundArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Oracle labels driving the simulated crowd, expert and evaluation.
    #[arg(long)]
    truth: PathBuf,
    #[arg(long, default_value_t = 1)]
    round: usize,
    /// Directory of the previous round (required from round 2 on).
    #[arg(long)]
    previous: Option<PathBuf>,
    /// Parent directory for `round-<k>`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    rules: Option<PathBuf>,
    #[arg(long)]
    slang: Option<PathBuf>,
}

fn round(a: RoundArgs, g: &Globals) -> CliResult {
    let corpus = load_corpus(&a.corpus)?;
    let truth = read_truth_csv(open(&a.truth)?)?;
    let mut ctx = RoundContext::new(corpus, truth);
    ctx.slang = slang(&a.slang, g)?;
    if let Some(p) = a.rules.or_else(|| g.config.path("rules")) {
        ctx.rules = FilterRules::load(p)?;
    }
    let recipe = RoundRecipe {
        round: a.round,
        root_seed: g.seed,
        params: g.config.round_params()?,
    };
    let out = run_round(&recipe, &ctx, a.previous.as_deref(), &a.out)?;
    print_json(&json!({
        "directory": out.dir,
        "metrics": out.manifest.metrics,
    }))
}

#[derive(Args, Debug)]
pub struct ExportArgs {
    /// Round directories in order; the last supplies the model.
    #[arg(long, num_args = 1.., required = true)]
    rounds: Vec<PathBuf>,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    slang: Option<PathBuf>,
}

fn export(a: ExportArgs, g: &Globals) -> CliResult {
    let corpus = load_corpus(&a.corpus)?;
    let slang = slang(&a.slang, g)?;
    let lex = lexicon(&a.lexicon, g)?;
    let files = export_reports(
        &ExportInputs {
            round_dirs: &a.rounds,
            corpus: &corpus,
            slang: &slang,
            lexicon: &lex,
            zone: g.zone,
        },
        &a.out,
    )?;
    print_json(&json!({ "files": files }))
}
