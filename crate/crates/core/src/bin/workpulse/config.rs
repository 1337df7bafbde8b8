//! `key = value` configuration file shared by every subcommand.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use workpulse::pipeline::RoundParams;

use crate::CliError;

const KEYS: &[&str] = &[
    "seed",
    "zone",
    "data_dir",
    "rules",
    "slang",
    "lexicon",
    "round1_sample",
    "batch_size",
    "dup_count",
    "flip_probability",
    "heldout_fraction",
    "augment_negatives",
    "type1_count",
    "type2_count",
    "percentile",
    "folds",
    "c_grid",
    "ratio_grid",
    "round1_c",
    "round1_ratio",
    "max_n",
    "max_workers",
];

#[derive(Debug, Default, Clone)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let src = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&src).map_err(|m| CliError::Usage(format!("{}: {m}", path.display())))
    }

    pub fn parse(src: &str) -> Result<Self, String> {
        let mut values = BTreeMap::new();
        for (i, raw) in src.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected key = value", i + 1))?;
            let key = k.trim().replace('-', "_");
            if !KEYS.contains(&key.as_str()) {
                return Err(format!("line {}: unknown key {key:?}", i + 1));
            }
            values.insert(key, v.trim().to_string());
        }
        Ok(Config { values })
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        self.values
            .get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| CliError::Usage(format!("config key {key}: {e}")))
            })
            .transpose()
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.values.get(key).map(PathBuf::from)
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>, CliError> {
        self.values
            .get(key)
            .map(|v| parse_list(v).map_err(|e| CliError::Usage(format!("config key {key}: {e}"))))
            .transpose()
    }

    pub fn round_params(&self) -> Result<RoundParams, CliError> {
        let mut p = RoundParams::default();
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = self.get(stringify!($field))? {
                    p.$field = v;
                }
            )*};
        }
        set!(
            round1_sample,
            batch_size,
            dup_count,
            flip_probability,
            heldout_fraction,
            augment_negatives,
            type1_count,
            type2_count,
            percentile,
            folds,
            round1_c,
            round1_ratio,
            max_workers
        );
        if let Some(v) = self.list("c_grid")? {
            p.c_grid = v;
        }
        if let Some(v) = self.list("ratio_grid")? {
            p.ratio_grid = v;
        }
        if let Some(n) = self.get("max_n")? {
            p.ngram.max_n = n;
        }
        Ok(p)
    }
}

/// Comma-separated reals.
pub fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| format!("{x:?}: {e}")))
        .collect()
}
