use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

pub const MENTION_PLACEHOLDER: &str = "@SOMEONE";
pub const URL_PLACEHOLDER: &str = "URL";

/// Informal term to standard phrase mapping, applied per token.
///
/// Expansions are stored already cleaned and fully resolved: no expansion
/// contains a key, which keeps normalization idempotent.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SlangDictionary {
    entries: HashMap<String, Vec<String>>,
}

impl SlangDictionary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a dictionary, resolving chained entries (`a -> b`, `b -> c`)
    /// and rejecting cyclic or self-referencing ones.
    pub fn from_pairs<I, K, V>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let mut raw: HashMap<String, Vec<String>> = HashMap::new();
        for (k, v) in pairs {
            let key = k.as_ref().trim().to_lowercase();
            if key.is_empty() || key.chars().any(char::is_whitespace) {
                return Err(Error::invalid(format!("slang key {:?} must be a single token", k.as_ref())));
            }
            let expansion: Vec<String> = v.as_ref().split_whitespace().filter_map(clean_word).collect();
            raw.insert(key, expansion);
        }

        let mut entries = HashMap::with_capacity(raw.len());
        for key in raw.keys() {
            let mut chain = vec![key.as_str()];
            let resolved = resolve(key, &raw, &mut chain)?;
            entries.insert(key.clone(), resolved);
        }
        Ok(SlangDictionary { entries })
    }

    /// Parses `term<TAB>expansion` lines. Blank lines and `#` comments are ignored.
    pub fn parse(src: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, line) in src.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('\t').ok_or_else(|| Error::Format {
                what: "slang dictionary",
                line: i + 1,
                message: "expected term<TAB>expansion".into(),
            })?;
            pairs.push((k.to_string(), v.to_string()));
        }
        Self::from_pairs(pairs)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let src = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&src)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, term: &str) -> Option<&[String]> {
        self.entries.get(term).map(Vec::as_slice)
    }
}

fn resolve<'a>(
    key: &'a str,
    raw: &'a HashMap<String, Vec<String>>,
    chain: &mut Vec<&'a str>,
) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for word in &raw[key] {
        if raw.contains_key(word.as_str()) {
            if chain.contains(&word.as_str()) {
                return Err(Error::invalid(format!(
                    "slang entry {:?} expands back into itself via {}",
                    chain[0],
                    chain.join(" -> ")
                )));
            }
            chain.push(word);
            out.extend(resolve(word, raw, chain)?);
            chain.pop();
        } else {
            out.push(word.clone());
        }
    }
    Ok(out)
}

/// Lowercases and keeps only alphanumeric characters. Lowercasing first
/// matters: some uppercase letters lowercase into a letter plus a combining
/// mark, which the filter then drops.
fn clean_word(raw: &str) -> Option<String> {
    let s: String = raw
        .to_lowercase()
        .chars()
        .filter(|c| c.is_alphanumeric())
        .collect();
    (!s.is_empty()).then_some(s)
}

pub(crate) fn is_url(tok: &str) -> bool {
    let lower = tok.to_ascii_lowercase();
    lower.starts_with("http://") || lower.starts_with("https://") || lower.starts_with("www.")
}

fn push_normalized(raw: &str, slang: &SlangDictionary, out: &mut Vec<String>) {
    let trimmed = raw
        .trim_start_matches(|c: char| !c.is_alphanumeric() && c != '#' && c != '@')
        .trim_end_matches(|c: char| !c.is_alphanumeric());

    if is_url(trimmed) || trimmed == URL_PLACEHOLDER {
        out.push(URL_PLACEHOLDER.to_string());
        return;
    }
    if let Some(rest) = trimmed.strip_prefix('@') {
        if rest.chars().any(char::is_alphanumeric) {
            out.push(MENTION_PLACEHOLDER.to_string());
        }
        return;
    }
    if let Some(rest) = trimmed.strip_prefix('#') {
        if let Some(body) = clean_word(rest) {
            out.push(format!("#{body}"));
        }
        return;
    }
    if let Some(word) = clean_word(trimmed) {
        match slang.get(&word) {
            Some(expansion) => out.extend(expansion.iter().cloned()),
            None => out.push(word),
        }
    }
}

/// Lowercases, strips punctuation and symbol-only tokens (emoticons), swaps
/// mentions and links for placeholders and expands slang, token by token.
pub fn normalize_text(text: &str, slang: &SlangDictionary) -> String {
    let mut tokens = Vec::new();
    for raw in text.split_whitespace() {
        if is_url(raw) {
            tokens.push(URL_PLACEHOLDER.to_string());
            continue;
        }
        push_normalized(raw, slang, &mut tokens);
    }
    tokens.join(" ")
}

/// Splits normalized text on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_string).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn norm(s: &str) -> String {
        normalize_text(s, &SlangDictionary::new())
    }

    #[test]
    fn strips_punctuation_and_lowercases() {
        assert_eq!(norm("I really hate my job!!"), "i really hate my job");
        assert_eq!(norm(""), "");
        assert_eq!(norm("Really bored....., no entertainment at work today"), "really bored no entertainment at work today");
    }

    #[test]
    fn slang_is_expanded() {
        let slang = SlangDictionary::from_pairs([("gr8", "great")]).unwrap();
        assert_eq!(normalize_text("gr8 job", &slang), "great job");
        assert_eq!(normalize_text("GR8!! job", &slang), "great job");
        let multi = SlangDictionary::from_pairs([("idk", "I don't know")]).unwrap();
        assert_eq!(normalize_text("idk", &multi), "i dont know");
    }

    #[test]
    fn chained_slang_resolves_and_cycles_are_rejected() {
        let d = SlangDictionary::from_pairs([("a1", "b1 x"), ("b1", "c")]).unwrap();
        assert_eq!(d.get("a1").unwrap(), ["c", "x"]);
        assert!(SlangDictionary::from_pairs([("a", "b"), ("b", "a")]).is_err());
        assert!(SlangDictionary::from_pairs([("lol", "lol lol")]).is_err());
        assert!(SlangDictionary::from_pairs([("two words", "x")]).is_err());
    }

    #[test]
    fn parses_tab_separated_file() {
        let d = SlangDictionary::parse("# comment\ngr8\tgreat\n\nB4\tbefore\n").unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.get("b4").unwrap(), ["before"]);
        assert!(SlangDictionary::parse("nospace").is_err());
    }

    #[test]
    fn placeholders_and_hashtags() {
        assert_eq!(
            norm("@bob: check https://t.co/xyz #Hiring now :)"),
            "@SOMEONE check URL #hiring now"
        );
        assert_eq!(norm("(#Rochester, NY)"), "#rochester ny");
        assert_eq!(norm("@SOMEONE @SOMEONE shit manager"), "@SOMEONE @SOMEONE shit manager");
        assert_eq!(norm("http://URL"), "URL");
    }

    #[test]
    fn emoticons_and_symbol_tokens_drop() {
        assert_eq!(norm(":-) <3 ;) ^_^ job"), "3 job");
        assert_eq!(norm("\u{1F600} happy \u{1F622}"), "happy");
        assert_eq!(norm("# @ - !!"), "");
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("i really hate my job"), ["i", "really", "hate", "my", "job"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("#job URL"), ["#job", "URL"]);
    }

    proptest! {
        #[test]
        fn normalization_is_idempotent(text in "[ a-zA-Z0-9@#:/.!?,'()\u{e9}\u{130}\u{1F600}-]{0,80}") {
            let slang = SlangDictionary::from_pairs([("gr8", "great"), ("u", "you"), ("idk", "i dont know")]).unwrap();
            let once = normalize_text(&text, &slang);
            prop_assert_eq!(normalize_text(&once, &slang), once.clone());
        }

        #[test]
        fn output_tokens_are_clean(text in "\\PC{0,60}") {
            let out = normalize_text(&text, &SlangDictionary::new());
            for tok in tokenize(&out) {
                let ok = tok == MENTION_PLACEHOLDER
                    || tok == URL_PLACEHOLDER
                    || tok.chars().skip(usize::from(tok.starts_with('#'))).all(char::is_alphanumeric);
                prop_assert!(ok, "unexpected token {:?}", tok);
            }
        }
    }
}
