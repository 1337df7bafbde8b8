//! The iterative labeling loop: filter, batch, annotate, aggregate,
//! adjudicate, train, classify and sample, one round at a time.

mod export;
mod simulate;
mod synthetic;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::Duration;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use export::{export_reports, ExportInputs, EXPORT_FILES};
pub use simulate::{simulate_annotations, CrowdRun, SimulatedAnnotator};
pub use synthetic::{generate_corpus, read_truth_csv, write_truth_csv, SyntheticConfig, SyntheticCorpus};

use crate::annotation::{
    aggregate_labels, agreement_pooled, build_gold_set, make_batches_with_prefix, AgreementReport, AggregatedLabel,
    Batch, GoldSource, Tier, RATERS_PER_TWEET,
};
use crate::corpus::{job_likely_filter, Corpus, FilterRules, SlangDictionary};
use crate::error::{Error, Result};
use crate::model::{
    grid_search_cv, save_model, select_round2_samples, write_cv_table, EvalReport, Featurizer, LinearModel,
    NgramConfig, Round2Samples, ScoredItem, TrainConfig, DEFAULT_C_GRID, DEFAULT_RATIO_GRID,
};
use crate::service::{ManualClock, ProjectDefinition, Service, ServiceConfig, ServiceError, PROJECT_FILE};

pub const STAGES: [&str; 8] = [
    "filter",
    "batch",
    "annotate",
    "aggregate",
    "adjudicate",
    "train",
    "classify",
    "sample",
];

pub const MANIFEST_FILE: &str = "manifest.json";
const EXPERT_ID: &str = "sim-expert";

/// Derives an independent seed from the root seed and two labels.
pub fn stage_seed(root: u64, a: &str, b: &str) -> u64 {
    let digest = Sha256::digest(format!("{root}:{a}:{b}").as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundParams {
    /// Job-Likely tweets sent to the crowd in the first round.
    pub round1_sample: usize,
    pub batch_size: usize,
    pub dup_count: usize,
    pub flip_probability: f64,
    /// Share of the corpus kept out of every round for evaluation.
    pub heldout_fraction: f64,
    /// Add random non-Job-Likely tweets as negatives to balance round-1 training.
    pub augment_negatives: bool,
    pub type1_count: usize,
    pub type2_count: usize,
    pub percentile: f64,
    pub folds: usize,
    /// Grids for rounds after the first.
    pub c_grid: Vec<f64>,
    pub ratio_grid: Vec<f64>,
    /// Fixed configuration for the first round.
    pub round1_c: f64,
    pub round1_ratio: f64,
    pub ngram: NgramConfig,
    /// Give up on annotation after this many simulated workers.
    pub max_workers: usize,
}

impl Default for RoundParams {
    fn default() -> Self {
        RoundParams {
            round1_sample: 400,
            batch_size: 40,
            dup_count: 5,
            flip_probability: 0.1,
            heldout_fraction: 0.2,
            augment_negatives: true,
            type1_count: 200,
            type2_count: 200,
            percentile: 80.0,
            folds: 10,
            c_grid: DEFAULT_C_GRID.to_vec(),
            ratio_grid: DEFAULT_RATIO_GRID.to_vec(),
            round1_c: 0.1,
            round1_ratio: 1.0,
            ngram: NgramConfig::default(),
            max_workers: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecipe {
    pub round: usize,
    pub root_seed: u64,
    pub params: RoundParams,
}

impl RoundRecipe {
    pub fn new(round: usize, root_seed: u64) -> Self {
        RoundRecipe {
            round,
            root_seed,
            params: RoundParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.params;
        if self.round == 0 {
            return Err(Error::invalid("rounds are numbered from 1"));
        }
        if !(0.0..1.0).contains(&p.heldout_fraction) {
            return Err(Error::invalid("held-out fraction must be within [0, 1)"));
        }
        if !(0.0..0.5).contains(&p.flip_probability) {
            return Err(Error::invalid("flip probability must be within [0, 0.5)"));
        }
        if p.batch_size == 0 || p.round1_sample == 0 {
            return Err(Error::invalid("batch size and round-1 sample must be positive"));
        }
        if !(p.percentile > 0.0 && p.percentile <= 100.0) {
            return Err(Error::invalid("percentile must be within (0, 100]"));
        }
        p.ngram.validate()
    }

    pub fn seed(&self, stage: &str) -> u64 {
        stage_seed(self.root_seed, &self.round.to_string(), stage)
    }
}

/// Inputs shared by every round.
#[derive(Clone)]
pub struct RoundContext {
    pub corpus: Arc<Corpus>,
    /// Oracle labels for the simulated crowd, the simulated expert and evaluation.
    pub truth: Arc<BTreeMap<String, bool>>,
    pub rules: FilterRules,
    pub slang: SlangDictionary,
}

impl RoundContext {
    pub fn new(corpus: Corpus, truth: BTreeMap<String, bool>) -> Self {
        RoundContext {
            corpus: Arc::new(corpus),
            truth: Arc::new(truth),
            rules: FilterRules::default(),
            slang: SlangDictionary::new(),
        }
    }
}

/// Tweets withheld from annotation and training, fixed by the root seed.
pub fn heldout_ids(corpus: &Corpus, fraction: f64, root_seed: u64) -> BTreeSet<String> {
    let mut ids: Vec<&str> = corpus.tweets.iter().map(|t| t.id.as_str()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(stage_seed(root_seed, "all", "heldout"));
    ids.shuffle(&mut rng);
    let n = (fraction * ids.len() as f64).round() as usize;
    ids.into_iter().take(n).map(str::to_string).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub seed: u64,
    /// File name within the round directory to its SHA-256.
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub candidates: usize,
    pub crowd: CrowdRun,
    pub tier_histogram: BTreeMap<Tier, usize>,
    pub fleiss_kappa: f64,
    pub krippendorff_alpha: f64,
    pub adjudicated: usize,
    pub gold_positive: usize,
    pub gold_negative: usize,
    pub augmented: usize,
    pub best_c: f64,
    pub best_ratio: f64,
    pub best_cv_f1: f64,
    pub heldout: EvalReport,
    pub scored: usize,
    pub type1_cutoff: Option<f64>,
    pub type1_count: usize,
    pub type2_count: usize,
}

/// Record of one round. Carries no timestamps, so reruns under the same
/// seeds produce identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub round: usize,
    pub recipe: RoundRecipe,
    pub previous_samples_sha256: Option<String>,
    pub stages: Vec<StageRecord>,
    pub metrics: RoundMetrics,
}

impl Manifest {
    pub fn output_hash(&self, file: &str) -> Option<&str> {
        self.stages
            .iter()
            .find_map(|s| s.outputs.get(file))
            .map(String::as_str)
    }

    pub fn files(&self) -> impl Iterator<Item = (&str, &str)> {
        self.stages
            .iter()
            .flat_map(|s| s.outputs.iter().map(|(f, h)| (f.as_str(), h.as_str())))
    }
}

/// Checks that every file named by the manifest in `round_dir` exists and
/// matches its recorded hash.
pub fn verify_manifest(round_dir: impl AsRef<Path>) -> Result<Manifest> {
    let dir = round_dir.as_ref();
    let manifest = read_manifest(dir)?;
    for (file, hash) in manifest.files() {
        let path = dir.join(file);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(Error::NotFound(format!("artifact {} listed in the manifest", path.display())))
            }
            Err(e) => return Err(Error::io(&path, e)),
        };
        if sha256_hex(&bytes) != hash {
            return Err(Error::Conflict(format!("{} does not match its manifest hash", path.display())));
        }
    }
    Ok(manifest)
}

pub fn read_manifest(round_dir: impl AsRef<Path>) -> Result<Manifest> {
    let path = round_dir.as_ref().join(MANIFEST_FILE);
    let bytes = fs::read(&path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound(format!("manifest {}", path.display())),
        _ => Error::io(&path, e),
    })?;
    Ok(serde_json::from_slice(&bytes)?)
}

/// Aggregated crowd labels as persisted by the aggregate stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregationArtifact {
    pub histogram: BTreeMap<Tier, usize>,
    pub agreement: AgreementReport,
    pub labels: Vec<AggregatedLabel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjudicationRecord {
    pub project_id: String,
    pub tweet_id: String,
    pub group: String,
    pub crowd_majority: bool,
    pub job_related: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainingSource {
    UnanimousCrowd,
    Community,
    Augmentation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingRow {
    pub tweet_id: String,
    pub job_related: bool,
    pub source: TrainingSource,
}

fn write_training_csv(rows: &[TrainingRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record(["tweet_id", "job_related", "source"])?;
    }
    w.into_inner().map_err(|e| Error::io("<csv>", e.into_error()))
}

pub fn read_training_csv(path: impl AsRef<Path>) -> Result<Vec<TrainingRow>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    csv::Reader::from_reader(file)
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

/// What a later round needs from the round before it.
#[derive(Debug, Clone)]
pub struct PreviousRound {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub samples: Round2Samples,
    pub augmentation: Vec<TrainingRow>,
}

impl PreviousRound {
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        let manifest = verify_manifest(&dir)?;
        let samples: Round2Samples = read_json(&dir.join("samples.json"))?;
        let augmentation = read_training_csv(dir.join("training_set.csv"))?
            .into_iter()
            .filter(|r| r.source == TrainingSource::Augmentation)
            .collect();
        Ok(PreviousRound {
            dir,
            manifest,
            samples,
            augmentation,
        })
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound(format!("artifact {}", path.display())),
        _ => Error::io(path, e),
    })?;
    Ok(serde_json::from_slice(&bytes)?)
}

#[derive(Debug, Clone)]
pub struct RoundOutcome {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub model: LinearModel,
    pub samples: Round2Samples,
}

/// Writes files into the round directory and records their hashes per stage.
struct Recorder {
    dir: PathBuf,
    stages: Vec<StageRecord>,
}

impl Recorder {
    fn begin(&mut self, name: &str, seed: u64) {
        log::info!("stage {name}");
        self.stages.push(StageRecord {
            name: name.to_string(),
            seed,
            outputs: BTreeMap::new(),
        });
    }

    fn write(&mut self, file: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(file);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        let stage = self.stages.last_mut().expect("a stage is open");
        stage.outputs.insert(file.to_string(), sha256_hex(bytes));
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, file: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write(file, &bytes)
    }
}

fn stage<T>(name: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    f().map_err(|e| Error::Stage {
        stage: name,
        source: Box::new(e),
    })
}

fn service_err(e: ServiceError) -> Error {
    match e {
        ServiceError::Core(e) => e,
        other => Error::Conflict(other.to_string()),
    }
}

fn project_id(round: usize) -> String {
    format!("round-{round}")
}

fn copy_dir(src: &Path, dst: &Path) -> Result<()> {
    fs::create_dir_all(dst).map_err(|e| Error::io(dst, e))?;
    for entry in fs::read_dir(src).map_err(|e| Error::io(src, e))? {
        let entry = entry.map_err(|e| Error::io(src, e))?;
        let path = entry.path();
        let target = dst.join(entry.file_name());
        if path.is_dir() {
            copy_dir(&path, &target)?;
        } else {
            fs::copy(&path, &target).map_err(|e| Error::io(&target, e))?;
        }
    }
    Ok(())
}

/// Runs one round under `out_dir/round-<k>`. Rounds after the first annotate
/// the previous round's Type-1 and Type-2 samples and need its directory.
/// A failing stage aborts the round with everything written so far kept.
pub fn run_round(
    recipe: &RoundRecipe,
    ctx: &RoundContext,
    previous: Option<&Path>,
    out_dir: impl AsRef<Path>,
) -> Result<RoundOutcome> {
    recipe.validate()?;
    let round = recipe.round;
    let p = &recipe.params;
    let prev = match (round, previous) {
        (1, None) => None,
        (1, Some(_)) => return Err(Error::invalid("round 1 takes no previous round")),
        (_, None) => return Err(Error::invalid(format!("round {round} needs the previous round's directory"))),
        (_, Some(d)) => Some(PreviousRound::load(d)?),
    };
    if let Some(prev) = &prev {
        if prev.manifest.round + 1 != round {
            return Err(Error::invalid(format!(
                "previous directory holds round {}, expected {}",
                prev.manifest.round,
                round - 1
            )));
        }
    }

    let dir = out_dir.as_ref().join(format!("round-{round}"));
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut rec = Recorder {
        dir: dir.clone(),
        stages: Vec::new(),
    };
    let corpus = &ctx.corpus;
    let heldout = heldout_ids(corpus, p.heldout_fraction, recipe.root_seed);

    // filter
    rec.begin("filter", recipe.seed("filter"));
    let (job_likely, candidates) = stage("filter", || {
        let jl: BTreeSet<String> = job_likely_filter(corpus, &ctx.rules, &ctx.slang)
            .tweets
            .into_iter()
            .map(|t| t.id)
            .collect();
        let candidates: Vec<String> = match &prev {
            None => {
                let mut pool: Vec<String> = jl.iter().filter(|id| !heldout.contains(*id)).cloned().collect();
                pool.shuffle(&mut ChaCha8Rng::seed_from_u64(recipe.seed("filter")));
                pool.truncate(p.round1_sample);
                pool
            }
            Some(prev) => prev
                .samples
                .type1
                .iter()
                .chain(&prev.samples.type2)
                .map(|s| s.id.clone())
                .collect(),
        };
        if candidates.is_empty() {
            return Err(Error::invalid("no candidate tweets to annotate"));
        }
        let listing = |ids: &mut dyn Iterator<Item = &String>| {
            ids.fold(String::new(), |mut acc, id| {
                acc.push_str(id);
                acc.push('\n');
                acc
            })
        };
        rec.write("job_likely.txt", listing(&mut jl.iter()).as_bytes())?;
        rec.write("candidates.txt", listing(&mut candidates.iter()).as_bytes())?;
        Ok((jl, candidates))
    })?;

    // batch
    rec.begin("batch", recipe.seed("batch"));
    let batches: Vec<Batch> = stage("batch", || {
        let b = make_batches_with_prefix(
            &candidates,
            p.batch_size,
            p.dup_count,
            recipe.seed("batch"),
            &format!("r{round}-batch"),
        )?;
        rec.write_json("batches.json", &b)?;
        Ok(b)
    })?;

    // annotate
    rec.begin("annotate", recipe.seed("annotate"));
    let service_dir = dir.join("service");
    let (svc, clock, crowd) = stage("annotate", || {
        if service_dir.exists() {
            fs::remove_dir_all(&service_dir).map_err(|e| Error::io(&service_dir, e))?;
        }
        if let Some(prev) = &prev {
            copy_dir(&prev.dir.join("service"), &service_dir)?;
        }
        let def = ProjectDefinition {
            id: project_id(round),
            round: round as u32,
            batches: batches.clone(),
            texts: candidates
                .iter()
                .map(|id| {
                    corpus
                        .get(id)
                        .map(|t| (id.clone(), t.text.clone()))
                        .ok_or_else(|| Error::NotFound(format!("tweet {id} in the corpus")))
                })
                .collect::<Result<_>>()?,
        };
        let start = synthetic::simulation_epoch() + Duration::days(30 * (round as i64 - 1));
        let clock = Arc::new(ManualClock::new(start));
        let config = ServiceConfig {
            snapshot_every: 0,
            ..ServiceConfig::default()
        };
        let mut svc = Service::open_data_dir(&service_dir, config, clock.clone())?;
        svc.open_project(def.clone(), service_dir.join("projects").join(&def.id))?;
        let annotator = SimulatedAnnotator::new(ctx.truth.clone(), p.flip_probability, recipe.seed("annotate"))?;
        let crowd = simulate::crowd_through_service(&svc, &clock, &def, &annotator, p.max_workers)?;
        svc.checkpoint()?;
        let csv = svc.export_labels_csv(&def.id).map_err(service_err)?;
        rec.write("labels.csv", &csv)?;
        rec.write_json("crowd.json", &crowd)?;
        Ok((svc, clock, crowd))
    })?;
    let pid = project_id(round);

    // aggregate
    rec.begin("aggregate", recipe.seed("aggregate"));
    let aggregation = stage("aggregate", || {
        let labels = svc.counted_labels(&pid).map_err(service_err)?;
        let agg = aggregate_labels(&labels);
        if !agg.deficiencies.is_empty() {
            return Err(Error::invalid(format!(
                "{} tweet(s) lack {RATERS_PER_TWEET} counted answers",
                agg.deficiencies.len()
            )));
        }
        let art = AggregationArtifact {
            histogram: agg.histogram(),
            agreement: agreement_pooled(&labels, &batches, RATERS_PER_TWEET)?,
            labels: agg.labels,
        };
        rec.write_json("aggregation.json", &art)?;
        Ok(art)
    })?;

    // adjudicate: deferred in the first round, then covers every round so far
    rec.begin("adjudicate", recipe.seed("adjudicate"));
    let decisions = stage("adjudicate", || {
        let mut out = Vec::new();
        if round >= 2 {
            clock.advance(Duration::days(1));
            for project in svc.project_ids() {
                for q in svc.adjudication_queue(&project, false).map_err(service_err)? {
                    let truth = *ctx
                        .truth
                        .get(&q.tweet_id)
                        .ok_or_else(|| Error::NotFound(format!("no oracle label for tweet {}", q.tweet_id)))?;
                    svc.adjudicate(&project, &q.tweet_id, truth, EXPERT_ID)
                        .map_err(service_err)?;
                    out.push(AdjudicationRecord {
                        project_id: project.clone(),
                        tweet_id: q.tweet_id,
                        group: q.group,
                        crowd_majority: q.tier.majority(),
                        job_related: truth,
                    });
                }
            }
            svc.checkpoint()?;
        }
        rec.write_json("adjudications.json", &out)?;
        Ok(out)
    })?;

    // train
    rec.begin("train", recipe.seed("train"));
    let (training, search) = stage("train", || {
        let mut rows: Vec<TrainingRow> = Vec::new();
        for project in svc.project_ids() {
            let aggregates = aggregate_labels(&svc.counted_labels(&project).map_err(service_err)?).labels;
            if round >= 2 {
                let adj = svc.adjudications(&project).map_err(service_err)?;
                rows.extend(build_gold_set(&aggregates, &adj)?.into_iter().map(|g| TrainingRow {
                    tweet_id: g.tweet_id,
                    job_related: g.job_related,
                    source: match g.source {
                        GoldSource::UnanimousCrowd => TrainingSource::UnanimousCrowd,
                        GoldSource::Community => TrainingSource::Community,
                    },
                }));
            } else {
                rows.extend(aggregates.iter().filter(|a| a.tier.is_unanimous()).map(|a| TrainingRow {
                    tweet_id: a.tweet_id.clone(),
                    job_related: a.tier.majority(),
                    source: TrainingSource::UnanimousCrowd,
                }));
            }
        }
        rows.sort_by(|a, b| a.tweet_id.cmp(&b.tweet_id));
        let gold_csv = write_training_csv(&rows)?;
        rec.write("gold.csv", &gold_csv)?;

        let augmentation: Vec<TrainingRow> = match &prev {
            Some(prev) => prev.augmentation.clone(),
            None if p.augment_negatives => {
                let pos = rows.iter().filter(|r| r.job_related).count();
                let need = pos.saturating_sub(rows.len() - pos);
                let mut pool: Vec<&str> = corpus
                    .tweets
                    .iter()
                    .map(|t| t.id.as_str())
                    .filter(|id| !job_likely.contains(*id) && !heldout.contains(*id))
                    .collect();
                pool.shuffle(&mut ChaCha8Rng::seed_from_u64(recipe.seed("augment")));
                if pool.len() < need {
                    log::warn!("only {} tweets available for {need} augmentation negatives", pool.len());
                }
                let mut aug: Vec<TrainingRow> = pool
                    .into_iter()
                    .take(need)
                    .map(|id| TrainingRow {
                        tweet_id: id.to_string(),
                        job_related: false,
                        source: TrainingSource::Augmentation,
                    })
                    .collect();
                aug.sort_by(|a, b| a.tweet_id.cmp(&b.tweet_id));
                aug
            }
            None => Vec::new(),
        };
        rows.extend(augmentation);
        rec.write("training_set.csv", &write_training_csv(&rows)?)?;

        let docs: Vec<Vec<String>> = rows
            .iter()
            .map(|r| {
                corpus
                    .get(&r.tweet_id)
                    .map(|t| t.tokens(&ctx.slang))
                    .ok_or_else(|| Error::NotFound(format!("tweet {} in the corpus", r.tweet_id)))
            })
            .collect::<Result<_>>()?;
        let featurizer = Arc::new(Featurizer::fit(docs.iter().map(Vec::as_slice), p.ngram)?);
        let examples: Vec<_> = docs
            .iter()
            .zip(&rows)
            .map(|(d, r)| (featurizer.transform(d), r.job_related))
            .collect();
        let base = TrainConfig {
            seed: recipe.seed("train"),
            ..TrainConfig::default()
        };
        let search = if round == 1 {
            grid_search_cv(&examples, featurizer, &[p.round1_c], &[p.round1_ratio], p.folds, &base)?
        } else {
            grid_search_cv(&examples, featurizer, &p.c_grid, &p.ratio_grid, p.folds, &base)?
        };
        let mut cv = Vec::new();
        write_cv_table(&search.table, &mut cv)?;
        rec.write("cv_table.csv", &cv)?;
        let model_path = dir.join("model.bin");
        save_model(&search.model, &model_path)?;
        let bytes = fs::read(&model_path).map_err(|e| Error::io(&model_path, e))?;
        rec.write("model.bin", &bytes)?;
        Ok((rows, search))
    })?;
    let model = search.model.clone();

    // classify
    rec.begin("classify", recipe.seed("classify"));
    let (heldout_report, scored) = stage("classify", || {
        let mut predicted = Vec::new();
        let mut actual = Vec::new();
        for t in corpus.tweets.iter().filter(|t| heldout.contains(&t.id)) {
            let y = *ctx
                .truth
                .get(&t.id)
                .ok_or_else(|| Error::NotFound(format!("no oracle label for tweet {}", t.id)))?;
            predicted.push(model.score_tokens(&t.tokens(&ctx.slang))?.is_positive());
            actual.push(y);
        }
        let report = EvalReport::from_predictions(&predicted, &actual)?;
        rec.write_json("eval_report.json", &report)?;

        let mut seen: BTreeSet<&str> = training.iter().map(|r| r.tweet_id.as_str()).collect();
        // tweets annotated in any round, whatever their tier
        let annotated: Vec<String> = svc
            .project_ids()
            .iter()
            .map(|pid| svc.definition(pid).map_err(service_err))
            .collect::<Result<Vec<_>>>()?
            .iter()
            .flat_map(|d| d.texts.keys().cloned().collect::<Vec<_>>())
            .collect();
        seen.extend(annotated.iter().map(String::as_str));
        let scored: Vec<ScoredItem> = corpus
            .tweets
            .iter()
            .filter(|t| !heldout.contains(&t.id) && !seen.contains(t.id.as_str()))
            .map(|t| {
                Ok(ScoredItem {
                    id: t.id.clone(),
                    score: model.score_tokens(&t.tokens(&ctx.slang))?.value(),
                })
            })
            .collect::<Result<_>>()?;
        let mut csv = String::from("tweet_id,score\n");
        for s in &scored {
            csv.push_str(&format!("{},{}\n", s.id, s.score));
        }
        rec.write("scores.csv", csv.as_bytes())?;
        Ok((report, scored))
    })?;

    // sample
    rec.begin("sample", recipe.seed("sample"));
    let samples = stage("sample", || {
        let s = select_round2_samples(&scored, p.type1_count, p.type2_count, p.percentile, recipe.seed("sample"))?;
        rec.write_json("samples.json", &s)?;
        Ok(s)
    })?;

    let best_cv_f1 = search
        .cells
        .iter()
        .find(|c| c.c == search.best.c && c.ratio == search.best.class_weight_ratio)
        .map_or(0.0, |c| c.mean_f1);
    let manifest = Manifest {
        round,
        recipe: recipe.clone(),
        previous_samples_sha256: prev
            .as_ref()
            .and_then(|p| p.manifest.output_hash("samples.json").map(str::to_string)),
        stages: rec.stages,
        metrics: RoundMetrics {
            candidates: candidates.len(),
            crowd,
            tier_histogram: aggregation.histogram.clone(),
            fleiss_kappa: aggregation.agreement.fleiss_kappa,
            krippendorff_alpha: aggregation.agreement.krippendorff_alpha,
            adjudicated: decisions.len(),
            gold_positive: training
                .iter()
                .filter(|r| r.job_related && r.source != TrainingSource::Augmentation)
                .count(),
            gold_negative: training
                .iter()
                .filter(|r| !r.job_related && r.source != TrainingSource::Augmentation)
                .count(),
            augmented: training
                .iter()
                .filter(|r| r.source == TrainingSource::Augmentation)
                .count(),
            best_c: search.best.c,
            best_ratio: search.best.class_weight_ratio,
            best_cv_f1,
            heldout: heldout_report,
            scored: scored.len(),
            type1_cutoff: samples.cutoff,
            type1_count: samples.type1.len(),
            type2_count: samples.type2.len(),
        },
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest)?;
    bytes.push(b'\n');
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    debug_assert!(service_dir.join("projects").join(&pid).join(PROJECT_FILE).exists());
    Ok(RoundOutcome {
        dir,
        manifest,
        model,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> (RoundContext, RoundRecipe) {
        let syn = generate_corpus(&SyntheticConfig {
            n_tweets: 600,
            seed: 11,
            ..SyntheticConfig::default()
        })
        .unwrap();
        let mut recipe = RoundRecipe::new(1, 5);
        recipe.params.round1_sample = 120;
        recipe.params.type1_count = 40;
        recipe.params.type2_count = 40;
        recipe.params.folds = 3;
        recipe.params.c_grid = vec![0.1, 1.0];
        recipe.params.ratio_grid = vec![1.0];
        (RoundContext::new(syn.corpus, syn.truth), recipe)
    }

    #[test]
    fn stage_seeds_differ() {
        assert_ne!(stage_seed(1, "1", "batch"), stage_seed(1, "1", "train"));
        assert_ne!(stage_seed(1, "1", "batch"), stage_seed(2, "1", "batch"));
        assert_eq!(stage_seed(1, "1", "batch"), stage_seed(1, "1", "batch"));
    }

    #[test]
    fn two_rounds_with_manifest_checks() {
        let (ctx, mut recipe) = small();
        let tmp = tempfile::tempdir().unwrap();
        let r1 = run_round(&recipe, &ctx, None, tmp.path()).unwrap();
        assert_eq!(r1.manifest.stages.len(), STAGES.len());
        for (s, name) in r1.manifest.stages.iter().zip(STAGES) {
            assert_eq!(s.name, name);
        }
        assert_eq!(r1.manifest.metrics.adjudicated, 0);
        verify_manifest(&r1.dir).unwrap();

        recipe.round = 2;
        let r2 = run_round(&recipe, &ctx, Some(&r1.dir), tmp.path()).unwrap();
        let cutoff = r1.manifest.metrics.type1_cutoff.unwrap();
        assert!(r1.samples.type1.iter().all(|s| s.score >= cutoff));
        assert_eq!(
            r2.manifest.previous_samples_sha256.as_deref(),
            r1.manifest.output_hash("samples.json")
        );
        assert!(r2.manifest.metrics.adjudicated > 0);
        verify_manifest(&r2.dir).unwrap();
        // round 1 artifacts are untouched by round 2
        verify_manifest(&r1.dir).unwrap();

        fs::write(r2.dir.join("gold.csv"), b"tampered").unwrap();
        assert!(matches!(verify_manifest(&r2.dir), Err(Error::Conflict(_))));
        fs::remove_file(r2.dir.join("gold.csv")).unwrap();
        assert!(matches!(verify_manifest(&r2.dir), Err(Error::NotFound(_))));
    }

    #[test]
    fn rerun_is_byte_identical() {
        let (ctx, recipe) = small();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        run_round(&recipe, &ctx, None, a.path()).unwrap();
        run_round(&recipe, &ctx, None, b.path()).unwrap();
        let ma = fs::read(a.path().join("round-1").join(MANIFEST_FILE)).unwrap();
        let mb = fs::read(b.path().join("round-1").join(MANIFEST_FILE)).unwrap();
        assert_eq!(ma, mb);
        // and in place
        run_round(&recipe, &ctx, None, a.path()).unwrap();
        assert_eq!(fs::read(a.path().join("round-1").join(MANIFEST_FILE)).unwrap(), ma);
    }

    #[test]
    fn preconditions() {
        let (ctx, mut recipe) = small();
        let tmp = tempfile::tempdir().unwrap();
        recipe.round = 2;
        assert!(matches!(run_round(&recipe, &ctx, None, tmp.path()), Err(Error::Invalid(_))));
        recipe.round = 1;
        recipe.params.round1_sample = 0;
        assert!(run_round(&recipe, &ctx, None, tmp.path()).is_err());
    }

    #[test]
    fn stage_failure_is_named() {
        let (ctx, mut recipe) = small();
        recipe.params.max_workers = 2;
        let tmp = tempfile::tempdir().unwrap();
        match run_round(&recipe, &ctx, None, tmp.path()) {
            Err(Error::Stage { stage, .. }) => assert_eq!(stage, "annotate"),
            other => panic!("{other:?}"),
        }
        // partial artifacts retained
        assert!(tmp.path().join("round-1").join("batches.json").exists());
    }
}
