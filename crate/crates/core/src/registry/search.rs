//! Lexical two-stage ranking: applications first, then operations within the
//! best-matching applications.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::{AppManifest, ToolSpec};

/// Number of applications whose operations are ranked in stage two.
pub const APP_FANOUT: usize = 3;
const SNIPPET_CAP: usize = 80;

const STOPWORDS: &[&str] = &[
    "a", "an", "the", "to", "of", "for", "by", "in", "on", "with", "and", "or", "my", "me", "i",
    "is", "are", "be", "it", "its", "this", "that", "from", "at", "as", "all", "any", "your",
    "you", "please", "do", "does", "did", "how", "what", "which", "who", "whom", "can", "could",
    "would", "should", "will", "then", "their", "them", "they", "we", "our", "us", "into", "via",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub tool_id: String,
    pub score: f64,
    pub app_rank: usize,
    pub snippet: String,
}

/// Lowercased content terms with camelCase/snake_case splitting, stopword
/// removal, and plural folding.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut words = Vec::new();
    let mut current = String::new();
    let mut prev_lower = false;
    for c in text.chars() {
        if c.is_alphanumeric() {
            if c.is_uppercase() && prev_lower && !current.is_empty() {
                words.push(std::mem::take(&mut current));
            }
            prev_lower = c.is_lowercase() || c.is_ascii_digit();
            current.extend(c.to_lowercase());
        } else {
            if !current.is_empty() {
                words.push(std::mem::take(&mut current));
            }
            prev_lower = false;
        }
    }
    if !current.is_empty() {
        words.push(current);
    }
    words
        .into_iter()
        .filter(|w| !STOPWORDS.contains(&w.as_str()))
        .map(|w| fold_plural(&w))
        .collect()
}

fn fold_plural(word: &str) -> String {
    if word.len() > 4 && word.ends_with("ies") {
        format!("{}y", &word[..word.len() - 3])
    } else if word.len() > 3 && word.ends_with('s') && !word.ends_with("ss") && !word.ends_with("us")
    {
        word[..word.len() - 1].to_string()
    } else {
        word.to_string()
    }
}

/// Text a tool contributes to the index: summary, path, key and parameters.
pub fn tool_text(tool: &ToolSpec) -> String {
    let key = tool.tool_id.rsplit_once('.').map(|(_, k)| k).unwrap_or(&tool.tool_id);
    let mut s = format!("{} {} {}", tool.summary, tool.path, key);
    for p in &tool.params {
        s.push(' ');
        s.push_str(&p.name);
        if !p.description.is_empty() {
            s.push(' ');
            s.push_str(&p.description);
        }
    }
    s
}

#[derive(Debug, Clone, Default)]
struct Doc {
    tf: HashMap<String, u32>,
}

impl Doc {
    fn from_text(text: &str) -> Doc {
        let mut tf = HashMap::new();
        for t in tokenize(text) {
            *tf.entry(t).or_insert(0) += 1;
        }
        Doc { tf }
    }

    fn score(&self, query: &BTreeSet<String>, idf: &HashMap<String, f64>) -> f64 {
        query
            .iter()
            .filter_map(|t| {
                let tf = *self.tf.get(t)?;
                Some(idf.get(t).copied().unwrap_or(0.0) * (1.0 + (tf as f64).ln()))
            })
            .sum()
    }
}

fn idf_table<'a>(docs: impl Iterator<Item = &'a Doc>) -> HashMap<String, f64> {
    let mut df: HashMap<String, u32> = HashMap::new();
    let mut n = 0u32;
    for d in docs {
        n += 1;
        for t in d.tf.keys() {
            *df.entry(t.clone()).or_insert(0) += 1;
        }
    }
    df.into_iter()
        .map(|(t, k)| (t, (1.0 + n as f64 / k as f64).ln()))
        .collect()
}

#[derive(Debug, Clone, Default)]
pub struct SearchIndex {
    apps: BTreeMap<String, Doc>,
    tools: BTreeMap<String, (String, Doc, String)>,
    app_idf: HashMap<String, f64>,
    tool_idf: HashMap<String, f64>,
}

impl SearchIndex {
    pub fn build<'a>(manifests: impl IntoIterator<Item = &'a AppManifest>) -> SearchIndex {
        let mut index = SearchIndex::default();
        for m in manifests {
            let mut app_text = format!("{} {} {}", m.app_id, m.title, m.description);
            for t in &m.tools {
                let text = tool_text(t);
                app_text.push(' ');
                app_text.push_str(&text);
                let snippet = super::minimize::cap_text(&t.summary, SNIPPET_CAP);
                index
                    .tools
                    .insert(t.tool_id.clone(), (m.app_id.clone(), Doc::from_text(&text), snippet));
            }
            index.apps.insert(m.app_id.clone(), Doc::from_text(&app_text));
        }
        index.app_idf = idf_table(index.apps.values());
        index.tool_idf = idf_table(index.tools.values().map(|(_, d, _)| d));
        index
    }

    /// Applications ranked by aggregate score, best first, zero scores dropped.
    pub fn rank_apps(&self, query: &str) -> Vec<(String, f64)> {
        let terms: BTreeSet<String> = tokenize(query).into_iter().collect();
        let mut ranked: Vec<(String, f64)> = self
            .apps
            .iter()
            .map(|(id, d)| (id.clone(), d.score(&terms, &self.app_idf)))
            .filter(|(_, s)| *s > 0.0)
            .collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked
    }

    pub fn search(&self, query: &str, scope: Option<&[String]>, k: usize) -> Vec<SearchHit> {
        let terms: BTreeSet<String> = tokenize(query).into_iter().collect();
        let apps: Vec<String> = match scope {
            Some(scope) => {
                let allowed: BTreeSet<&str> = scope.iter().map(String::as_str).collect();
                self.rank_apps(query)
                    .into_iter()
                    .map(|(a, _)| a)
                    .filter(|a| allowed.contains(a.as_str()))
                    .take(APP_FANOUT)
                    .collect()
            }
            None => self
                .rank_apps(query)
                .into_iter()
                .map(|(a, _)| a)
                .take(APP_FANOUT)
                .collect(),
        };
        let mut hits: Vec<SearchHit> = self
            .tools
            .iter()
            .filter_map(|(tool_id, (app, doc, snippet))| {
                let rank = apps.iter().position(|a| a == app)?;
                let score = doc.score(&terms, &self.tool_idf);
                (score > 0.0).then(|| SearchHit {
                    tool_id: tool_id.clone(),
                    score,
                    app_rank: rank + 1,
                    snippet: snippet.clone(),
                })
            })
            .collect();
        hits.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.tool_id.cmp(&b.tool_id)));
        hits.truncate(k);
        hits
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizer_splits_and_folds() {
        assert_eq!(
            tokenize("listOrders for user_id"),
            vec!["list", "order", "user", "id"]
        );
        assert_eq!(tokenize("Transfer money to a friend"), vec!["transfer", "money", "friend"]);
        assert_eq!(tokenize("categories status"), vec!["category", "status"]);
    }
}
