//! Parallel dialect/standard text pairs, synthetic noising for the
//! robustness control, and model-assisted topic labeling.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::backend::{Client, CompletionRequest};
use crate::{Error, Result};

/// The seven audited dialects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DialectCode {
    Nds,
    Frr,
    Stq,
    Ksh,
    Pfl,
    Als,
    Bar,
}

impl DialectCode {
    pub fn all() -> [DialectCode; 7] {
        [
            DialectCode::Nds,
            DialectCode::Frr,
            DialectCode::Stq,
            DialectCode::Ksh,
            DialectCode::Pfl,
            DialectCode::Als,
            DialectCode::Bar,
        ]
    }

    pub fn code(self) -> &'static str {
        match self {
            DialectCode::Nds => "nds",
            DialectCode::Frr => "frr",
            DialectCode::Stq => "stq",
            DialectCode::Ksh => "ksh",
            DialectCode::Pfl => "pfl",
            DialectCode::Als => "als",
            DialectCode::Bar => "bar",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            DialectCode::Nds => "Low German",
            DialectCode::Frr => "North Frisian",
            DialectCode::Stq => "Saterfrisian",
            DialectCode::Ksh => "Ripuarian",
            DialectCode::Pfl => "Rhine Franconian",
            DialectCode::Als => "Alemannic",
            DialectCode::Bar => "Bavarian",
        }
    }
}

impl std::fmt::Display for DialectCode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.code())
    }
}

impl std::str::FromStr for DialectCode {
    type Err = Error;

    fn from_str(s: &str) -> Result<DialectCode> {
        DialectCode::all()
            .into_iter()
            .find(|d| d.code() == s)
            .ok_or_else(|| Error::schema("dialect", format!("unknown dialect code `{s}`")))
    }
}

/// One aligned dialect/standard passage pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextPair {
    pub id: String,
    pub dialect: DialectCode,
    pub dialect_text: String,
    pub standard_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic: Option<String>,
}

/// Loads and validates a JSONL corpus; errors name the offending record.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<TextPair>> {
    let text = std::fs::read_to_string(&path)?;
    let mut pairs = Vec::new();
    let mut seen = HashSet::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(line)
            .map_err(|e| Error::Corpus { id: format!("line {}", lineno + 1), detail: e.to_string() })?;
        let id = value
            .get("id")
            .and_then(|v| v.as_str())
            .unwrap_or(&format!("line {}", lineno + 1))
            .to_string();
        let pair: TextPair = serde_json::from_value(value)
            .map_err(|e| Error::Corpus { id: id.clone(), detail: e.to_string() })?;
        if pair.dialect_text.trim().is_empty() {
            return Err(Error::Corpus { id, detail: "empty dialect_text".into() });
        }
        if pair.standard_text.trim().is_empty() {
            return Err(Error::Corpus { id, detail: "empty standard_text".into() });
        }
        if !seen.insert(pair.id.clone()) {
            return Err(Error::Corpus { id, detail: "duplicate id".into() });
        }
        pairs.push(pair);
    }
    Ok(pairs)
}

/// Writes a corpus back out as JSONL, one record per line.
pub fn save_corpus(pairs: &[TextPair], path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    for pair in pairs {
        out.push_str(&serde_json::to_string(pair)?);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn per_dialect_counts(pairs: &[TextPair]) -> BTreeMap<DialectCode, usize> {
    let mut counts = BTreeMap::new();
    for pair in pairs {
        *counts.entry(pair.dialect).or_insert(0) += 1;
    }
    counts
}

/// Latin letters plus the German extras, used for character operations.
pub fn german_alphabet() -> Vec<char> {
    let mut chars: Vec<char> = ('a'..='z').chain('A'..='Z').collect();
    chars.extend(['ä', 'ö', 'ü', 'Ä', 'Ö', 'Ü', 'ß']);
    chars
}

/// Parameters of the synthetic noise control.
#[derive(Debug, Clone)]
pub struct NoiseParams {
    pub word_alter_prob: f64,
    /// Probability that an altered word gets a character-level operation.
    pub char_vs_word_prob: f64,
    pub common_words: Vec<String>,
    pub alphabet: Vec<char>,
}

impl Default for NoiseParams {
    fn default() -> NoiseParams {
        NoiseParams {
            word_alter_prob: 0.5,
            char_vs_word_prob: 0.5,
            common_words: bundled_wordlist(),
            alphabet: german_alphabet(),
        }
    }
}

impl NoiseParams {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in
            [("word_alter_prob", self.word_alter_prob), ("char_vs_word_prob", self.char_vs_word_prob)]
        {
            if !(0.0..=1.0).contains(&p) || !p.is_finite() {
                return Err(Error::schema(name, format!("probability {p} outside [0, 1]")));
            }
        }
        if self.common_words.is_empty() {
            return Err(Error::schema("common_words", "empty word list"));
        }
        if self.alphabet.is_empty() {
            return Err(Error::schema("alphabet", "empty alphabet"));
        }
        Ok(())
    }

    /// Replaces the common-word list with one loaded from a newline file.
    pub fn with_wordlist(mut self, path: impl AsRef<Path>) -> Result<NoiseParams> {
        let text = std::fs::read_to_string(path)?;
        self.common_words = text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect();
        self.validate()?;
        Ok(self)
    }
}

/// Frequency-ranked German word list shipped with the crate.
pub fn bundled_wordlist() -> Vec<String> {
    include_str!("../data/german_common_words.txt")
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect()
}

/// Tally of one noising pass.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct NoiseStats {
    pub words_total: usize,
    pub words_altered: usize,
    pub char_ops: usize,
    pub word_ops: usize,
}

enum Tok<'a> {
    Ws(&'a str),
    Word(&'a str),
}

fn split_keeping_whitespace(text: &str) -> Vec<Tok<'_>> {
    let mut toks = Vec::new();
    let mut start = 0;
    let mut in_ws: Option<bool> = None;
    for (i, ch) in text.char_indices() {
        let is_ws = ch.is_whitespace();
        match in_ws {
            None => in_ws = Some(is_ws),
            Some(prev) if prev != is_ws => {
                toks.push(if prev { Tok::Ws(&text[start..i]) } else { Tok::Word(&text[start..i]) });
                start = i;
                in_ws = Some(is_ws);
            }
            _ => {}
        }
    }
    if let Some(prev) = in_ws {
        toks.push(if prev { Tok::Ws(&text[start..]) } else { Tok::Word(&text[start..]) });
    }
    toks
}

fn char_op(word: &str, params: &NoiseParams, rng: &mut impl Rng) -> Option<String> {
    let mut chars: Vec<char> = word.chars().collect();
    match rng.gen_range(0..3u8) {
        0 => {
            let pos = rng.gen_range(0..chars.len());
            chars[pos] = params.alphabet[rng.gen_range(0..params.alphabet.len())];
        }
        1 => {
            let pos = rng.gen_range(0..chars.len());
            chars.remove(pos);
            if chars.is_empty() {
                return None;
            }
        }
        _ => {
            let pos = rng.gen_range(0..=chars.len());
            chars.insert(pos, params.alphabet[rng.gen_range(0..params.alphabet.len())]);
        }
    }
    Some(chars.into_iter().collect())
}

fn word_op(word: &str, params: &NoiseParams, rng: &mut impl Rng) -> Option<String> {
    match rng.gen_range(0..3u8) {
        0 => None,
        1 => Some(params.common_words[rng.gen_range(0..params.common_words.len())].clone()),
        _ => {
            let inserted = &params.common_words[rng.gen_range(0..params.common_words.len())];
            Some(format!("{word} {inserted}"))
        }
    }
}

/// Noises a passage word by word; deterministic given the generator state.
/// Word deletion also removes one adjacent whitespace span.
pub fn noise_text_with_stats(
    text: &str,
    params: &NoiseParams,
    rng: &mut impl Rng,
) -> (String, NoiseStats) {
    let toks = split_keeping_whitespace(text);
    let mut slots: Vec<Option<String>> = Vec::with_capacity(toks.len());
    let mut stats = NoiseStats::default();
    // Set when a word with no surviving separator before it is deleted; the
    // separator after it goes instead.
    let mut skip_next_ws = false;
    for tok in &toks {
        match tok {
            Tok::Ws(s) => {
                slots.push(if skip_next_ws { None } else { Some((*s).to_string()) });
                skip_next_ws = false;
            }
            Tok::Word(word) => {
                stats.words_total += 1;
                if !rng.gen_bool(params.word_alter_prob) {
                    slots.push(Some((*word).to_string()));
                    continue;
                }
                stats.words_altered += 1;
                let replacement = if rng.gen_bool(params.char_vs_word_prob) {
                    stats.char_ops += 1;
                    char_op(word, params, rng)
                } else {
                    stats.word_ops += 1;
                    word_op(word, params, rng)
                };
                if replacement.is_none() {
                    let prev_ws = slots
                        .iter()
                        .rposition(|s| s.as_deref().map(|t| t.chars().all(char::is_whitespace)).unwrap_or(false));
                    match prev_ws {
                        Some(i) => slots[i] = None,
                        None => skip_next_ws = true,
                    }
                }
                slots.push(replacement);
            }
        }
    }
    let rebuilt: String = slots.into_iter().flatten().collect();
    (rebuilt, stats)
}

pub fn noise_text(text: &str, params: &NoiseParams, rng: &mut impl Rng) -> String {
    noise_text_with_stats(text, params, rng).0
}

/// Raw-label to cluster-name table plus the closed cluster set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopicClusters {
    pub clusters: Vec<String>,
    pub default_cluster: String,
    pub map: BTreeMap<String, String>,
}

impl TopicClusters {
    pub fn bundled() -> TopicClusters {
        let clusters: TopicClusters = serde_json::from_str(include_str!("../data/topic_clusters.json"))
            .expect("bundled cluster map parses");
        clusters.validate().expect("bundled cluster map is valid");
        clusters
    }

    pub fn load(path: impl AsRef<Path>) -> Result<TopicClusters> {
        let clusters: TopicClusters = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        clusters.validate()?;
        Ok(clusters)
    }

    pub fn validate(&self) -> Result<()> {
        if self.clusters.is_empty() {
            return Err(Error::schema("clusters", "empty cluster list"));
        }
        if !self.clusters.contains(&self.default_cluster) {
            return Err(Error::schema("default_cluster", format!("`{}` not in clusters", self.default_cluster)));
        }
        for (raw, cluster) in &self.map {
            if !self.clusters.contains(cluster) {
                return Err(Error::schema("map", format!("`{raw}` maps to unknown cluster `{cluster}`")));
            }
        }
        Ok(())
    }

    /// Maps a raw model label onto a cluster name; unknown labels fall back
    /// to the default cluster.
    pub fn cluster_of(&self, raw_label: &str) -> String {
        let trimmed = raw_label.trim().trim_end_matches('.').trim();
        let key = trimmed.to_lowercase();
        if let Some(cluster) = self.map.get(&key) {
            return cluster.clone();
        }
        if let Some(cluster) = self.clusters.iter().find(|c| c.to_lowercase() == key) {
            return cluster.clone();
        }
        self.default_cluster.clone()
    }
}

/// A labeled topic: the raw model reply plus its cluster.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicLabel {
    pub raw: String,
    pub cluster: String,
    pub truncated_multiline: bool,
}

pub fn topic_prompt(text: &str) -> String {
    format!("What is the high-level topic area of the following text: '{text}'? Just reply with the topic area.")
}

/// Asks the backend for a topic label and clusters the reply. Multi-line
/// replies keep only the first line and are flagged.
pub fn label_topic(
    text: &str,
    client: &Client,
    clusters: &TopicClusters,
    request_id: &str,
) -> Result<TopicLabel> {
    if text.trim().is_empty() {
        return Err(Error::schema("text", "empty passage for topic labeling"));
    }
    let request = CompletionRequest::user(client.model_id(), request_id, &topic_prompt(text));
    let response = client.complete(&request, None)?;
    let trimmed = response.raw_text.trim();
    let first_line = trimmed.lines().next().unwrap_or("").trim();
    let truncated_multiline = trimmed.lines().count() > 1;
    Ok(TopicLabel {
        raw: first_line.to_string(),
        cluster: clusters.cluster_of(first_line),
        truncated_multiline,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{MockBackend, MockPolicy};
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;
    use std::collections::HashMap;
    use std::io::Write;

    fn rng(seed: u64) -> ChaCha12Rng {
        ChaCha12Rng::seed_from_u64(seed)
    }

    #[test]
    fn dialect_codes_round_trip() {
        assert_eq!(DialectCode::all().len(), 7);
        for code in DialectCode::all() {
            let json = serde_json::to_string(&code).unwrap();
            assert_eq!(json, format!("\"{}\"", code.code()));
            let back: DialectCode = serde_json::from_str(&json).unwrap();
            assert_eq!(back, code);
            assert_eq!(code.code().parse::<DialectCode>().unwrap(), code);
        }
        assert_eq!(DialectCode::Als.display_name(), "Alemannic");
        assert!("saxon".parse::<DialectCode>().is_err());
    }

    #[test]
    fn bundled_example_corpus_loads() {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/corpus.example.jsonl");
        let pairs = load_corpus(path).unwrap();
        assert_eq!(pairs.len(), 7);
        let counts = per_dialect_counts(&pairs);
        assert_eq!(counts.len(), 7);
        assert!(counts.values().all(|&n| n == 1));
    }

    #[test]
    fn load_rejects_bad_records() {
        let dir = tempfile::tempdir().unwrap();
        let write = |name: &str, body: &str| {
            let p = dir.path().join(name);
            let mut f = std::fs::File::create(&p).unwrap();
            f.write_all(body.as_bytes()).unwrap();
            p
        };
        let empty = write(
            "empty.jsonl",
            r#"{"id":"x1","dialect":"bar","dialect_text":"Servus","standard_text":"  "}"#,
        );
        let err = load_corpus(empty).unwrap_err().to_string();
        assert!(err.contains("x1") && err.contains("standard_text"), "{err}");

        let dup = write(
            "dup.jsonl",
            "{\"id\":\"x1\",\"dialect\":\"bar\",\"dialect_text\":\"a\",\"standard_text\":\"b\"}\n{\"id\":\"x1\",\"dialect\":\"nds\",\"dialect_text\":\"c\",\"standard_text\":\"d\"}\n",
        );
        assert!(load_corpus(dup).unwrap_err().to_string().contains("duplicate id"));

        let unknown = write(
            "unknown.jsonl",
            r#"{"id":"x2","dialect":"sxu","dialect_text":"a","standard_text":"b"}"#,
        );
        assert!(load_corpus(unknown).unwrap_err().to_string().contains("x2"));
    }

    #[test]
    fn corpus_round_trips_bit_identically() {
        let src = concat!(env!("CARGO_MANIFEST_DIR"), "/data/corpus.example.jsonl");
        let pairs = load_corpus(src).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("copy.jsonl");
        save_corpus(&pairs, &out).unwrap();
        let reloaded = load_corpus(&out).unwrap();
        assert_eq!(pairs, reloaded);
        let again = dir.path().join("copy2.jsonl");
        save_corpus(&reloaded, &again).unwrap();
        assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(&again).unwrap());
    }

    #[test]
    fn zero_probability_is_identity() {
        let params = NoiseParams { word_alter_prob: 0.0, ..NoiseParams::default() };
        let text = "Ein  Text\nmit   ungewöhnlichen\tLücken. ";
        let (out, stats) = noise_text_with_stats(text, &params, &mut rng(7));
        assert_eq!(out, text);
        assert_eq!(stats.words_altered, 0);
        assert_eq!(stats.words_total, 5);
    }

    #[test]
    fn noising_is_deterministic_per_seed() {
        let params = NoiseParams::default();
        let text = "Die Gemeinde liegt im Norden des Landkreises und hat viele Einwohner.";
        let a = noise_text(text, &params, &mut rng(42));
        let b = noise_text(text, &params, &mut rng(42));
        let c = noise_text(text, &params, &mut rng(43));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn altered_fraction_concentrates_around_half() {
        let params = NoiseParams::default();
        let text = vec!["Wort"; 10_000].join(" ");
        let (_, stats) = noise_text_with_stats(&text, &params, &mut rng(3));
        assert_eq!(stats.words_total, 10_000);
        let fraction = stats.words_altered as f64 / stats.words_total as f64;
        assert!((0.45..=0.55).contains(&fraction), "fraction {fraction}");
    }

    #[test]
    fn word_substitutions_come_from_the_list() {
        let params = NoiseParams {
            word_alter_prob: 1.0,
            char_vs_word_prob: 0.0,
            ..NoiseParams::default()
        };
        let originals: HashSet<&str> = "Die Gemeinde liegt im Norden".split_whitespace().collect();
        let listed: HashSet<&str> = params.common_words.iter().map(String::as_str).collect();
        for seed in 0..200 {
            let out = noise_text("Die Gemeinde liegt im Norden", &params, &mut rng(seed));
            for word in out.split_whitespace() {
                assert!(
                    originals.contains(word) || listed.contains(word),
                    "seed {seed}: `{word}` neither original nor listed"
                );
            }
        }
    }

    #[test]
    fn single_char_word_deletion_drops_the_word() {
        // Only char ops, always alter: deletions on 1-char words must not
        // leave empty tokens or doubled spaces behind.
        let params = NoiseParams { word_alter_prob: 1.0, char_vs_word_prob: 1.0, ..NoiseParams::default() };
        for seed in 0..300 {
            let out = noise_text("a b c d e", &params, &mut rng(seed));
            assert!(!out.contains("  "), "seed {seed}: `{out}`");
            assert!(out == out.trim_start(), "seed {seed}: `{out}`");
        }
    }

    #[test]
    fn bundled_clusters_map_expected_labels() {
        let clusters = TopicClusters::bundled();
        assert_eq!(clusters.clusters.len(), 11);
        assert_eq!(clusters.cluster_of("History"), "History & Historical Geography");
        assert_eq!(clusters.cluster_of(" history. "), "History & Historical Geography");
        assert_eq!(clusters.cluster_of("municipality"), "Geography & Local Administration");
        assert_eq!(clusters.cluster_of("Something Entirely Different"), clusters.default_cluster);
        assert_eq!(clusters.cluster_of("geography & local administration"), "Geography & Local Administration");
    }

    #[test]
    fn label_topic_uses_prompt_and_clusters_reply() {
        let mut map = HashMap::new();
        map.insert("topic-1".to_string(), "History\nIt covers old events.".to_string());
        let client = Client::Mock(MockBackend::new("labeler", MockPolicy::ScriptedReplay(map)));
        let clusters = TopicClusters::bundled();
        let label = label_topic("Im Jahr 1250 wurde die Burg erbaut.", &client, &clusters, "topic-1").unwrap();
        assert_eq!(label.raw, "History");
        assert_eq!(label.cluster, "History & Historical Geography");
        assert!(label.truncated_multiline);
        assert!(label_topic("   ", &client, &clusters, "topic-2").is_err());
    }

    #[test]
    fn topic_prompt_is_exact() {
        assert_eq!(
            topic_prompt("xyz"),
            "What is the high-level topic area of the following text: 'xyz'? Just reply with the topic area."
        );
    }

    #[test]
    fn wordlist_has_two_thousand_entries() {
        let words = bundled_wordlist();
        assert_eq!(words.len(), 2000);
        let unique: HashSet<&String> = words.iter().collect();
        assert_eq!(unique.len(), 2000);
    }
}
