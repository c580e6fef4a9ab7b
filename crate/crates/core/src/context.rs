//! Utterance assessment, site-map mining and prompt enrichment.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::browser::{origin, BrowserDriver, BrowserError};
use crate::plan::Task;
use crate::reasoner::{ReasonerError, ReasonerHandle, Schema};
use crate::registry::search::tokenize;
use crate::registry::Registry;
use crate::session::{schema_of, TaskSession};
use crate::trajectory::AgentRole;

pub const DEFAULT_CHAR_BUDGET: usize = 4000;
pub const DEFAULT_MINING_BUDGET: usize = 25;

#[derive(Debug, Error)]
pub enum ContextError {
    #[error("utterance is empty")]
    EmptyUtterance,
    #[error(transparent)]
    Reasoner(#[from] ReasonerError),
    #[error(transparent)]
    Browser(#[from] BrowserError),
    #[error("mining budget must be at least 1")]
    ZeroBudget,
    #[error("knowledge store: {0}")]
    Store(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntentQuality {
    Clear,
    Paraphrased,
    Ambiguous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinedIntent {
    pub original: String,
    pub refined: String,
    pub quality: IntentQuality,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
}

/// Capitalized words and numbers; these must survive a paraphrase.
pub fn entities(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| {
            w.chars().next().is_some_and(|c| c.is_uppercase()) || (!w.is_empty() && w.chars().all(|c| c.is_ascii_digit()))
        })
        .map(str::to_string)
        .collect()
}

fn words_lower(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Entities of `original` missing from `refined`, compared case-insensitively.
pub fn missing_entities(original: &str, refined: &str) -> Vec<String> {
    let have = words_lower(refined);
    entities(original)
        .into_iter()
        .filter(|e| !have.contains(&e.to_lowercase()))
        .collect()
}

fn assess_schema() -> Schema {
    schema_of(
        &[
            ("quality", Schema::enumeration(["clear", "paraphrased", "ambiguous"])),
            ("refined", Schema::String),
            ("notes", Schema::String),
        ],
        &["quality", "refined"],
    )
}

/// Grades an utterance and rewrites it when unclear. A rewrite that drops a
/// named entity is discarded in favour of the original.
pub fn assess_and_paraphrase(
    utterance: &str,
    reasoner: &ReasonerHandle,
    session: &mut TaskSession,
) -> Result<RefinedIntent, ContextError> {
    let original = utterance.trim();
    if original.is_empty() {
        return Err(ContextError::EmptyUtterance);
    }
    let bundle = session
        .prompt("utterance_assessor")
        .preamble("You judge whether a request is clear and rewrite it if it is not.")
        .instructions(original.to_string())
        .schema(assess_schema())
        .build();
    let out = session.ask(reasoner, AgentRole::Context, bundle)?;
    let refined = out["refined"].as_str().unwrap_or(original).trim().to_string();
    let notes = out
        .get("notes")
        .and_then(Value::as_str)
        .filter(|s| !s.trim().is_empty())
        .map(str::to_string);
    let intent = match out["quality"].as_str() {
        Some("ambiguous") => RefinedIntent {
            original: original.into(),
            refined: if refined.is_empty() { original.into() } else { refined },
            quality: IntentQuality::Ambiguous,
            notes: Some(notes.unwrap_or_else(|| "request is ambiguous".into())),
        },
        Some("paraphrased") if refined != original => {
            let missing = missing_entities(original, &refined);
            if missing.is_empty() {
                RefinedIntent {
                    original: original.into(),
                    refined,
                    quality: IntentQuality::Paraphrased,
                    notes,
                }
            } else {
                RefinedIntent {
                    original: original.into(),
                    refined: original.into(),
                    quality: IntentQuality::Clear,
                    notes: Some(format!("paraphrase dropped {}", missing.join(", "))),
                }
            }
        }
        _ => RefinedIntent {
            original: original.into(),
            refined: original.into(),
            quality: IntentQuality::Clear,
            notes,
        },
    };
    Ok(intent)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SitePage {
    pub url: String,
    pub title: String,
    pub links: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NavigationKnowledge {
    pub app_id: String,
    pub nodes: Vec<SitePage>,
    pub mined_at_seq: u64,
    pub budget_used: usize,
}

/// Breadth-first crawl from the driver's current page. Links are link-role
/// nodes whose value carries the target URL; only same-origin targets are
/// followed. Each recorded page spends one unit of budget.
pub fn mine_sitemap(
    app_id: &str,
    entry_url: &str,
    driver: &mut dyn BrowserDriver,
    budget: usize,
) -> Result<NavigationKnowledge, ContextError> {
    if budget == 0 {
        return Err(ContextError::ZeroBudget);
    }
    let home = origin(entry_url).to_string();
    let norm = |u: &str| u.trim_end_matches('/').to_string();
    let mut queue = VecDeque::from([entry_url.to_string()]);
    let mut queued: BTreeSet<String> = BTreeSet::from([norm(entry_url)]);
    let mut nodes = Vec::new();
    let mut last_seq = 0;
    while let Some(url) = queue.pop_front() {
        if nodes.len() >= budget {
            break;
        }
        match driver.navigate(&url) {
            Ok(()) => {}
            Err(BrowserError::SessionClosed) => return Err(ContextError::Browser(BrowserError::SessionClosed)),
            Err(_) => continue,
        }
        let obs = driver.snapshot()?;
        last_seq = obs.capture_seq;
        let title = obs
            .ax_tree
            .iter()
            .find(|n| n.role == "heading")
            .map(|n| n.name.clone())
            .unwrap_or_else(|| obs.url.clone());
        let mut links = Vec::new();
        for n in obs.ax_tree.iter().filter(|n| n.role == "link") {
            links.push(n.name.clone());
            if let Some(target) = &n.value {
                if origin(target) == home && queued.insert(norm(target)) {
                    queue.push_back(target.clone());
                }
            }
        }
        nodes.push(SitePage {
            url: obs.url.clone(),
            title,
            links,
        });
    }
    Ok(NavigationKnowledge {
        app_id: app_id.to_string(),
        budget_used: nodes.len(),
        nodes,
        mined_at_seq: last_seq,
    })
}

/// Per-app navigation knowledge, optionally persisted as one JSON file per app.
#[derive(Default)]
pub struct KnowledgeStore {
    entries: RwLock<BTreeMap<String, Arc<NavigationKnowledge>>>,
    writers: Mutex<BTreeMap<String, Arc<Mutex<()>>>>,
    dir: Option<PathBuf>,
}

impl KnowledgeStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Loads every `<app>.json` under `dir` and persists new entries there.
    pub fn persistent(dir: impl Into<PathBuf>) -> Result<Self, ContextError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| ContextError::Store(e.to_string()))?;
        let mut entries = BTreeMap::new();
        let listing = std::fs::read_dir(&dir).map_err(|e| ContextError::Store(e.to_string()))?;
        let mut paths: Vec<PathBuf> = listing.filter_map(|e| e.ok().map(|e| e.path())).collect();
        paths.sort();
        for path in paths.iter().filter(|p| p.extension().is_some_and(|x| x == "json")) {
            let text = std::fs::read_to_string(path).map_err(|e| ContextError::Store(e.to_string()))?;
            let k: NavigationKnowledge =
                serde_json::from_str(&text).map_err(|e| ContextError::Store(format!("{}: {e}", path.display())))?;
            entries.insert(k.app_id.clone(), Arc::new(k));
        }
        Ok(KnowledgeStore {
            entries: RwLock::new(entries),
            writers: Mutex::new(BTreeMap::new()),
            dir: Some(dir),
        })
    }

    pub fn get(&self, app_id: &str) -> Option<Arc<NavigationKnowledge>> {
        self.entries.read().expect("knowledge lock").get(app_id).cloned()
    }

    pub fn apps(&self) -> Vec<String> {
        self.entries.read().expect("knowledge lock").keys().cloned().collect()
    }

    pub fn insert(&self, knowledge: NavigationKnowledge) -> Result<Arc<NavigationKnowledge>, ContextError> {
        if let Some(dir) = &self.dir {
            write_knowledge(dir, &knowledge)?;
        }
        let k = Arc::new(knowledge);
        self.entries
            .write()
            .expect("knowledge lock")
            .insert(k.app_id.clone(), k.clone());
        Ok(k)
    }

    /// Returns cached knowledge or mines it; concurrent callers for the same
    /// app wait for a single miner.
    pub fn get_or_mine(
        &self,
        app_id: &str,
        mine: impl FnOnce() -> Result<NavigationKnowledge, ContextError>,
    ) -> Result<Arc<NavigationKnowledge>, ContextError> {
        if let Some(k) = self.get(app_id) {
            return Ok(k);
        }
        let gate = self
            .writers
            .lock()
            .expect("writers lock")
            .entry(app_id.to_string())
            .or_default()
            .clone();
        let _held = gate.lock().expect("app writer lock");
        if let Some(k) = self.get(app_id) {
            return Ok(k);
        }
        self.insert(mine()?)
    }
}

fn write_knowledge(dir: &Path, k: &NavigationKnowledge) -> Result<(), ContextError> {
    let safe: String = k
        .app_id
        .chars()
        .map(|c| if c.is_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    let path = dir.join(format!("{safe}.json"));
    let tmp = dir.join(format!(".{safe}.json.tmp"));
    let text = serde_json::to_string_pretty(k).expect("knowledge serializes");
    std::fs::write(&tmp, text).map_err(|e| ContextError::Store(e.to_string()))?;
    std::fs::rename(&tmp, &path).map_err(|e| ContextError::Store(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FragmentSource {
    Sitemap,
    Registry,
    UtteranceNotes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextBundle {
    pub fragments: Vec<(String, String)>,
    pub provenance: Vec<FragmentSource>,
}

impl ContextBundle {
    pub fn size(&self) -> usize {
        self.fragments.iter().map(|(l, t)| l.chars().count() + t.chars().count()).sum()
    }
}

/// Overlap between a page's title and link labels and the intent terms.
pub fn page_overlap(page: &SitePage, terms: &BTreeSet<String>) -> usize {
    let mut text = page.title.clone();
    for l in &page.links {
        text.push(' ');
        text.push_str(l);
    }
    let page_terms: BTreeSet<String> = tokenize(&text).into_iter().collect();
    page_terms.intersection(terms).count()
}

fn sitemap_text(app: &str, page: &SitePage) -> String {
    format!("{app} page \"{}\" at {}; links: {}", page.title, page.url, page.links.join(", "))
}

/// Builds the prompt context for a task: matching site-map pages for apps in
/// scope plus registry app titles, within `char_budget`. Over budget, the
/// lowest-overlap site-map fragments go first; registry and note fragments
/// are dropped only after every site-map fragment is gone.
pub fn enrich(
    intent: &RefinedIntent,
    task: &Task,
    knowledge: &KnowledgeStore,
    registry: Option<&Registry>,
    char_budget: usize,
) -> ContextBundle {
    let terms: BTreeSet<String> = tokenize(&intent.refined).into_iter().collect();
    // (priority, fragment); higher priority survives longer.
    let mut scored: Vec<(usize, (String, String), FragmentSource)> = Vec::new();
    if let Some(registry) = registry {
        for app in &task.apps_in_scope {
            if let Some(m) = registry.manifest(app) {
                let text = if m.description.is_empty() {
                    m.title.clone()
                } else {
                    format!("{}: {}", m.title, m.description)
                };
                scored.push((usize::MAX, (format!("app:{app}"), text), FragmentSource::Registry));
            }
        }
    }
    if let (IntentQuality::Ambiguous, Some(notes)) = (intent.quality, &intent.notes) {
        scored.push((usize::MAX, ("utterance_notes".into(), notes.clone()), FragmentSource::UtteranceNotes));
    }
    for app in &task.apps_in_scope {
        if let Some(k) = knowledge.get(app) {
            for page in &k.nodes {
                let overlap = page_overlap(page, &terms);
                if overlap > 0 {
                    scored.push((overlap, (format!("sitemap:{app}:{}", page.url), sitemap_text(app, page)), FragmentSource::Sitemap));
                }
            }
        }
    }
    let mut seen = BTreeSet::new();
    scored.retain(|(_, (label, text), _)| seen.insert((label.clone(), hex::encode(Sha256::digest(text.as_bytes())))));
    let size = |items: &[(usize, (String, String), FragmentSource)]| -> usize {
        items.iter().map(|(_, (l, t), _)| l.chars().count() + t.chars().count()).sum()
    };
    while size(&scored) > char_budget && !scored.is_empty() {
        // Lowest priority; among equals, the latest one.
        let victim = scored
            .iter()
            .enumerate()
            .min_by(|(i, a), (j, b)| a.0.cmp(&b.0).then(j.cmp(i)))
            .map(|(i, _)| i)
            .unwrap();
        scored.remove(victim);
    }
    ContextBundle {
        provenance: scored.iter().map(|(_, _, s)| *s).collect(),
        fragments: scored.into_iter().map(|(_, f, _)| f).collect(),
    }
}
