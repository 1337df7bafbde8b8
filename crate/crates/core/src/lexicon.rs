//! Word-category lexica with literal and prefix-wildcard terms, and per-text
//! category ratios.
//!
//! File format: UTF-8, sections headed by `[CategoryName]`, one term per line
//! (commas also separate terms), a trailing `*` marks a prefix, `#` starts a
//! comment.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Category {
    pub literals: BTreeSet<String>,
    /// Stored without the `*`.
    pub prefixes: BTreeSet<String>,
}

impl Category {
    pub fn matches(&self, token: &str) -> bool {
        self.literals.contains(token) || self.prefixes.iter().any(|p| token.starts_with(p.as_str()))
    }

    pub fn term_count(&self) -> usize {
        self.literals.len() + self.prefixes.len()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexicon {
    pub categories: BTreeMap<String, Category>,
    pub source: Option<PathBuf>,
}

/// Small positive-affect / negative-affect / work lexicon for demos and
/// tests. It is not a reproduction of any published dictionary.
pub const DEMO_LEXICON: &str = "\
# demo lexicon: hand-written, non-canonical
[PA]
happy
glad
great
good
love*
lovely
enjoy*
excit*
proud
awesome
amazing
best
fun
nice
thank*
yay
smil*
laugh*
relax*
celebrat*

[NA]
hate*
sad
tired
exhaust*
stress*
angry
annoy*
bored
boring
awful
worst
sick
ugh
cry*
quit
fired
miserable
worr*
upset
hurt*

[work]
work*
job*
boss*
manag*
shift*
office
career*
employ*
hire*
hiring
salary
paid
pay*
meeting*
coworker*
client*
intern*
payroll
overtime
promot*
";

impl Lexicon {
    pub fn parse(src: &str) -> Result<Self> {
        let mut categories: BTreeMap<String, Category> = BTreeMap::new();
        let mut current: Option<String> = None;
        for (i, raw) in src.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim().to_string();
                if name.is_empty() {
                    return Err(Error::Format {
                        what: "lexicon",
                        line: i + 1,
                        message: "empty category name".into(),
                    });
                }
                if categories.contains_key(&name) {
                    return Err(Error::Format {
                        what: "lexicon",
                        line: i + 1,
                        message: format!("duplicate category [{name}]"),
                    });
                }
                categories.insert(name.clone(), Category::default());
                current = Some(name);
                continue;
            }
            let Some(cat) = current.as_ref().and_then(|c| categories.get_mut(c)) else {
                return Err(Error::Format {
                    what: "lexicon",
                    line: i + 1,
                    message: "term before any [Category] header".into(),
                });
            };
            for term in line.split(',').map(str::trim).filter(|t| !t.is_empty()) {
                let term = term.to_lowercase();
                match term.strip_suffix('*') {
                    Some(prefix) if !prefix.is_empty() => {
                        cat.prefixes.insert(prefix.to_string());
                    }
                    Some(_) => {
                        return Err(Error::Format {
                            what: "lexicon",
                            line: i + 1,
                            message: "bare `*` is not a term".into(),
                        })
                    }
                    None => {
                        cat.literals.insert(term);
                    }
                }
            }
        }
        for (name, cat) in &categories {
            if cat.term_count() == 0 {
                log::warn!("lexicon category [{name}] is empty");
            }
        }
        Ok(Lexicon {
            categories,
            source: None,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let src = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lex = Self::parse(&src)?;
        lex.source = Some(path.to_path_buf());
        Ok(lex)
    }

    pub fn demo() -> Self {
        Self::parse(DEMO_LEXICON).expect("demo lexicon parses")
    }

    pub fn category(&self, name: &str) -> Result<&Category> {
        self.categories
            .get(name)
            .ok_or_else(|| Error::UnknownCategory(name.to_string()))
    }

    pub fn term_counts(&self) -> BTreeMap<&str, usize> {
        self.categories.iter().map(|(k, c)| (k.as_str(), c.term_count())).collect()
    }
}

pub fn load_lexicon(path: impl AsRef<Path>) -> Result<Lexicon> {
    Lexicon::load(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryScore {
    pub category: String,
    pub match_count: usize,
    pub total_tokens: usize,
    pub ratio: f64,
}

/// Share of token positions that match `category`. Each position counts at
/// most once even if it hits both a literal and a prefix.
pub fn score_category(tokens: &[String], lexicon: &Lexicon, category: &str) -> Result<CategoryScore> {
    let cat = lexicon.category(category)?;
    let match_count = tokens.iter().filter(|t| cat.matches(&t.to_lowercase())).count();
    let total_tokens = tokens.len();
    let ratio = if total_tokens == 0 {
        0.0
    } else {
        match_count as f64 / total_tokens as f64
    };
    Ok(CategoryScore {
        category: category.to_string(),
        match_count,
        total_tokens,
        ratio,
    })
}
