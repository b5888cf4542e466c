//! Weighted log-odds lexical profiling with an informative Dirichlet prior.
//! Surfaces tokens that statistically separate profiles generated for
//! dialect-role writers from those for standard-role writers.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Token counts over one document group.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TokenCounts {
    pub counts: BTreeMap<String, u64>,
    pub total: u64,
}

impl TokenCounts {
    pub fn from_docs<S: AsRef<str>>(docs: &[S]) -> TokenCounts {
        let mut counts: BTreeMap<String, u64> = BTreeMap::new();
        let mut total = 0;
        for doc in docs {
            for tok in tokenize(doc.as_ref()) {
                *counts.entry(tok).or_insert(0) += 1;
                total += 1;
            }
        }
        TokenCounts { counts, total }
    }

    fn get(&self, token: &str) -> u64 {
        self.counts.get(token).copied().unwrap_or(0)
    }
}

/// Which group a marked word leans toward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Dialect,
    Standard,
}

/// One row of the weighted log-odds table, oriented dialect minus standard.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkedWord {
    pub token: String,
    pub delta: f64,
    pub z: f64,
    pub group: Group,
    /// True when the token never occurs in the prior corpus and received the
    /// smoothed floor pseudo-count.
    pub unseen_in_prior: bool,
}

/// Lowercases, keeps Unicode letters only (joining hyphenated parts), and
/// splits on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .filter_map(|raw| {
            let word: String = raw
                .chars()
                .filter(|c| c.is_alphabetic())
                .flat_map(|c| c.to_lowercase())
                .collect();
            (!word.is_empty()).then_some(word)
        })
        .collect()
}

/// Full weighted log-odds table over the union vocabulary of both groups,
/// sorted by token. `alpha0` defaults to the prior corpus total.
pub fn log_odds_table(
    dialect_docs: &[String],
    standard_docs: &[String],
    prior_docs: &[String],
    alpha0: Option<f64>,
) -> Result<Vec<MarkedWord>> {
    let yd = TokenCounts::from_docs(dialect_docs);
    let ys = TokenCounts::from_docs(standard_docs);
    let yp = TokenCounts::from_docs(prior_docs);
    if yd.total == 0 || ys.total == 0 || yp.total == 0 {
        return Err(Error::Stats("log_odds_table needs non-empty corpora in all three groups".into()));
    }
    let alpha0 = alpha0.unwrap_or(yp.total as f64);
    if alpha0 <= 0.0 {
        return Err(Error::Stats(format!("alpha0 must be positive, got {alpha0}")));
    }
    // floor pseudo-count for words the prior never saw
    let alpha_min = alpha0 / (yp.counts.len() as f64 + 1.0);
    let prior_total = yp.total as f64;
    let (nd, ns) = (yd.total as f64, ys.total as f64);

    let mut vocab: Vec<&String> = yd.counts.keys().chain(ys.counts.keys()).collect();
    vocab.sort();
    vocab.dedup();

    let mut rows = Vec::with_capacity(vocab.len());
    for token in vocab {
        let prior = yp.get(token);
        let unseen = prior == 0;
        let alpha_w = if unseen { alpha_min } else { alpha0 * prior as f64 / prior_total };
        let d = yd.get(token) as f64;
        let s = ys.get(token) as f64;
        let delta = ((d + alpha_w) / (nd + alpha0 - d - alpha_w)).ln()
            - ((s + alpha_w) / (ns + alpha0 - s - alpha_w)).ln();
        let sigma2 = 1.0 / (d + alpha_w) + 1.0 / (s + alpha_w);
        let z = delta / sigma2.sqrt();
        rows.push(MarkedWord {
            token: token.clone(),
            delta,
            z,
            group: if z > 0.0 { Group::Dialect } else { Group::Standard },
            unseen_in_prior: unseen,
        });
    }
    Ok(rows)
}

/// Tokens whose |z| exceeds the threshold, sorted by |z| descending.
pub fn marked_words(
    dialect_docs: &[String],
    standard_docs: &[String],
    prior_docs: &[String],
    alpha0: Option<f64>,
    z_threshold: f64,
) -> Result<Vec<MarkedWord>> {
    let mut rows = log_odds_table(dialect_docs, standard_docs, prior_docs, alpha0)?;
    rows.retain(|r| r.z.abs() > z_threshold);
    rows.sort_by(|a, b| b.z.abs().partial_cmp(&a.z.abs()).expect("finite z"));
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn docs(texts: &[&str]) -> Vec<String> {
        texts.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn tokenize_normalizes() {
        assert_eq!(tokenize("Well-prepared, CLEAR!"), vec!["wellprepared", "clear"]);
        assert_eq!(tokenize(""), Vec::<String>::new());
        assert_eq!(tokenize("wohnt in Köln."), vec!["wohnt", "in", "köln"]);
        assert_eq!(tokenize("  42 ---  "), Vec::<String>::new());
    }

    #[test]
    fn identical_corpora_give_zero_delta() {
        let d = docs(&["alpha beta gamma", "beta beta alpha"]);
        let prior = docs(&["alpha beta gamma delta"]);
        let rows = log_odds_table(&d, &d.clone(), &prior, None).unwrap();
        for row in rows {
            assert!(row.delta.abs() < 1e-15, "{row:?}");
            assert!(row.z.abs() < 1e-15);
        }
    }

    #[test]
    fn swap_negates_exactly() {
        let d = docs(&["farm farm quiet honest"]);
        let s = docs(&["professor city city refined"]);
        let prior = docs(&["farm city professor quiet honest refined extra"]);
        let ab = log_odds_table(&d, &s, &prior, Some(9.0)).unwrap();
        let ba = log_odds_table(&s, &d, &prior, Some(9.0)).unwrap();
        for (x, y) in ab.iter().zip(ba.iter()) {
            assert_eq!(x.token, y.token);
            assert_eq!(x.delta, -y.delta);
            assert_eq!(x.z, -y.z);
        }
    }

    #[test]
    fn growing_alpha0_shrinks_delta_under_shared_prior() {
        let d = docs(&["farm farm farm quiet"]);
        let s = docs(&["professor professor city city"]);
        let prior = docs(&["farm quiet professor city"]);
        let small = log_odds_table(&d, &s, &prior, Some(4.0)).unwrap();
        let large = log_odds_table(&d, &s, &prior, Some(400.0)).unwrap();
        for (a, b) in small.iter().zip(large.iter()) {
            assert!(b.delta.abs() < a.delta.abs(), "{} vs {}", a.delta, b.delta);
        }
    }

    #[test]
    fn order_of_documents_is_irrelevant() {
        let d1 = docs(&["one two", "three three"]);
        let d2 = docs(&["three three", "one two"]);
        let s = docs(&["four five six"]);
        let prior = docs(&["one two three four five six"]);
        assert_eq!(
            log_odds_table(&d1, &s, &prior, None).unwrap(),
            log_odds_table(&d2, &s, &prior, None).unwrap()
        );
    }

    #[test]
    fn overused_profession_word_flags_on_standard_side() {
        // one group leans heavily on "professor"; expect |z| > 1.96 there
        let base = "der schreibt einen kurzen text über das leben";
        let s: Vec<String> = (0..30)
            .map(|i| format!("{base} professor professor akademisch {i}"))
            .collect();
        let d: Vec<String> = (0..30).map(|i| format!("{base} bauernhof feld ruhig {i}")).collect();
        let mut prior: Vec<String> = s.iter().take(10).cloned().collect();
        prior.extend(d.iter().take(10).cloned());
        let marked = marked_words(&d, &s, &prior, None, 1.96).unwrap();
        let professor = marked.iter().find(|r| r.token == "professor").expect("flagged");
        assert_eq!(professor.group, Group::Standard);
        assert!(professor.z < -1.96);
    }
}
