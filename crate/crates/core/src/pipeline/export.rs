//! Report bundle assembled from finished rounds.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::Serialize;
use serde_json::json;

use super::{read_json, verify_manifest, AggregationArtifact};
use crate::analytics::{affect_matrix, volume_series, write_affect_csv, write_series_csv, Granularity, Zone};
use crate::annotation::Tier;
use crate::corpus::{Corpus, SlangDictionary};
use crate::error::{Error, Result};
use crate::lexicon::Lexicon;
use crate::model::{load_model, EvalReport};

pub const EXPORT_FILES: [&str; 6] = [
    "cv_table.csv",
    "eval_report.json",
    "tier_histogram.csv",
    "volume_month.csv",
    "volume_weekday.csv",
    "affect_matrix.csv",
];

pub struct ExportInputs<'a> {
    /// Round directories in round order; the last one supplies the model.
    pub round_dirs: &'a [PathBuf],
    pub corpus: &'a Corpus,
    pub slang: &'a SlangDictionary,
    pub lexicon: &'a Lexicon,
    pub zone: Zone,
}

fn require(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound(format!("artifact {}", path.display())),
        _ => Error::io(path, e),
    })
}

fn write(out: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf> {
    let path = out.join(name);
    fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

#[derive(Serialize)]
struct RoundEval {
    round: usize,
    best_c: f64,
    best_ratio: f64,
    heldout: EvalReport,
}

/// Writes the six report files into `out` and returns their paths. Analytics
/// cover the tweets the last round's model scores as job-related.
pub fn export_reports(inputs: &ExportInputs<'_>, out: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let out = out.as_ref();
    let last = inputs
        .round_dirs
        .last()
        .ok_or_else(|| Error::invalid("no round directories to export"))?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut written = Vec::new();

    let mut evals = Vec::new();
    let mut hist = String::from("round,job_3,job_4,job_5,not_3,not_4,not_5\n");
    for dir in inputs.round_dirs {
        let manifest = verify_manifest(dir)?;
        let report: EvalReport = read_json(&dir.join("eval_report.json"))?;
        evals.push(RoundEval {
            round: manifest.round,
            best_c: manifest.metrics.best_c,
            best_ratio: manifest.metrics.best_ratio,
            heldout: report,
        });
        let agg: AggregationArtifact = read_json(&dir.join("aggregation.json"))?;
        let h = |t| agg.histogram.get(&t).copied().unwrap_or(0);
        hist.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            manifest.round,
            h(Tier::ThreeYes),
            h(Tier::FourYes),
            h(Tier::UnanimousYes),
            h(Tier::ThreeNo),
            h(Tier::FourNo),
            h(Tier::UnanimousNo)
        ));
    }

    written.push(write(out, "cv_table.csv", &require(&last.join("cv_table.csv"))?)?);
    let mut eval = serde_json::to_vec_pretty(&json!({ "rounds": evals }))?;
    eval.push(b'\n');
    written.push(write(out, "eval_report.json", &eval)?);
    written.push(write(out, "tier_histogram.csv", hist.as_bytes())?);

    let model_path = last.join("model.bin");
    require(&model_path)?;
    let model = load_model(&model_path)?;
    let mut positives: Vec<(DateTime<Utc>, Vec<String>)> = Vec::new();
    for t in &inputs.corpus.tweets {
        let tokens = t.tokens(inputs.slang);
        if model.score_tokens(&tokens)?.is_positive() {
            positives.push((t.created_at_utc, tokens));
        }
    }
    let times: Vec<DateTime<Utc>> = positives.iter().map(|p| p.0).collect();
    for (name, g) in [
        ("volume_month.csv", Granularity::Month),
        ("volume_weekday.csv", Granularity::Weekday),
    ] {
        let mut buf = Vec::new();
        write_series_csv(&volume_series(&times, g, inputs.zone), &mut buf)?;
        written.push(write(out, name, &buf)?);
    }
    let matrix = affect_matrix(
        positives.iter().map(|(t, toks)| (*t, toks.as_slice())),
        inputs.lexicon,
        inputs.zone,
    )?;
    let mut buf = Vec::new();
    write_affect_csv(&matrix, &mut buf)?;
    written.push(write(out, "affect_matrix.csv", &buf)?);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::super::*;
    use super::*;

    #[test]
    fn bundle_is_complete_and_stable() {
        let syn = generate_corpus(&SyntheticConfig {
            n_tweets: 400,
            seed: 2,
            ..SyntheticConfig::default()
        })
        .unwrap();
        let ctx = RoundContext::new(syn.corpus, syn.truth);
        let mut recipe = RoundRecipe::new(1, 9);
        recipe.params.round1_sample = 80;
        recipe.params.folds = 3;
        let tmp = tempfile::tempdir().unwrap();
        let r1 = run_round(&recipe, &ctx, None, tmp.path()).unwrap();
        let lex = Lexicon::demo();
        let dirs = vec![r1.dir.clone()];
        let inputs = ExportInputs {
            round_dirs: &dirs,
            corpus: &ctx.corpus,
            slang: &ctx.slang,
            lexicon: &lex,
            zone: Zone::default(),
        };
        let a = tmp.path().join("a");
        let files = export_reports(&inputs, &a).unwrap();
        assert_eq!(files.len(), 6);
        for f in EXPORT_FILES {
            assert!(a.join(f).exists(), "{f}");
        }
        let b = tmp.path().join("b");
        export_reports(&inputs, &b).unwrap();
        for f in EXPORT_FILES {
            assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
        }

        // histogram rows sum to the number of aggregated candidates
        let hist = fs::read_to_string(a.join("tier_histogram.csv")).unwrap();
        let row: Vec<usize> = hist.lines().nth(1).unwrap().split(',').map(|v| v.parse().unwrap()).collect();
        let agg: AggregationArtifact = read_json(&r1.dir.join("aggregation.json")).unwrap();
        assert_eq!(row[1..].iter().sum::<usize>(), agg.labels.len());
        assert_eq!(agg.labels.len(), r1.manifest.metrics.candidates);

        fs::remove_file(r1.dir.join("cv_table.csv")).unwrap();
        match export_reports(&inputs, tmp.path().join("c")) {
            Err(Error::NotFound(m)) => assert!(m.contains("cv_table.csv"), "{m}"),
            other => panic!("{other:?}"),
        }
    }
}
