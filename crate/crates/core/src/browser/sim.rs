//! Deterministic page-graph browser.
//!
//! Pages declare their nodes, an optional overlay, markdown, and click
//! transitions (node id → page id). Session state covers history, dismissed
//! overlays and form values, so the same action sequence always lands on the
//! same page with the same observation.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{AxNode, BrowserDriver, BrowserError, DriverFactory, Observation, PageContent};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeDef {
    pub id: u32,
    pub role: String,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub options: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<u32>,
}

impl NodeDef {
    pub fn new(id: u32, role: &str, name: &str) -> Self {
        NodeDef {
            id,
            role: role.into(),
            name: name.into(),
            value: None,
            options: Vec::new(),
            parent: None,
        }
    }

    pub fn under(mut self, parent: u32) -> Self {
        self.parent = Some(parent);
        self
    }

    pub fn with_options(mut self, options: &[&str]) -> Self {
        self.options = options.iter().map(|s| s.to_string()).collect();
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlayDef {
    /// Node id of the dialog; must have role `dialog`.
    pub dialog: u32,
    /// Nodes covered by the dialog. Empty means every node outside it.
    #[serde(default)]
    pub occludes: Vec<u32>,
    pub dismissable: bool,
    /// Close control inside the dialog, if it has one.
    #[serde(default)]
    pub close: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageDef {
    pub id: String,
    pub url: String,
    pub nodes: Vec<NodeDef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overlay: Option<OverlayDef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub markdown: Option<String>,
    #[serde(default)]
    pub transitions: BTreeMap<u32, String>,
}

impl PageDef {
    pub fn new(id: &str, url: &str, nodes: Vec<NodeDef>) -> Self {
        PageDef {
            id: id.into(),
            url: url.into(),
            nodes,
            overlay: None,
            markdown: None,
            transitions: BTreeMap::new(),
        }
    }

    pub fn link(mut self, node: u32, page: &str) -> Self {
        self.transitions.insert(node, page.into());
        self
    }

    pub fn markdown(mut self, md: &str) -> Self {
        self.markdown = Some(md.into());
        self
    }

    pub fn overlay(mut self, overlay: OverlayDef) -> Self {
        self.overlay = Some(overlay);
        self
    }

    fn node(&self, id: u32) -> Option<&NodeDef> {
        self.nodes.iter().find(|n| n.id == id)
    }

    fn in_dialog(&self, id: u32, dialog: u32) -> bool {
        let mut cur = Some(id);
        let mut hops = 0;
        while let Some(c) = cur {
            if c == dialog {
                return true;
            }
            hops += 1;
            if hops > self.nodes.len() {
                return false;
            }
            cur = self.node(c).and_then(|n| n.parent);
        }
        false
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteGraph {
    pub start: String,
    pub pages: Vec<PageDef>,
}

impl SiteGraph {
    pub fn from_json(text: &str) -> Result<SiteGraph, String> {
        let g: SiteGraph = serde_json::from_str(text).map_err(|e| e.to_string())?;
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), String> {
        let ids: BTreeSet<&str> = self.pages.iter().map(|p| p.id.as_str()).collect();
        if ids.len() != self.pages.len() {
            return Err("duplicate page id".into());
        }
        if !ids.contains(self.start.as_str()) {
            return Err(format!("start page `{}` is not declared", self.start));
        }
        for p in &self.pages {
            let nodes: BTreeSet<u32> = p.nodes.iter().map(|n| n.id).collect();
            if nodes.len() != p.nodes.len() {
                return Err(format!("page `{}` repeats a node id", p.id));
            }
            for (node, target) in &p.transitions {
                if !nodes.contains(node) || !ids.contains(target.as_str()) {
                    return Err(format!("page `{}` has a bad transition {node} -> {target}", p.id));
                }
            }
            if let Some(o) = &p.overlay {
                match p.node(o.dialog) {
                    Some(n) if n.role == "dialog" => {}
                    _ => return Err(format!("page `{}` overlay must name a dialog node", p.id)),
                }
                if o.close.is_some_and(|c| !nodes.contains(&c)) || o.occludes.iter().any(|c| !nodes.contains(c)) {
                    return Err(format!("page `{}` overlay names unknown nodes", p.id));
                }
            }
        }
        Ok(())
    }

    fn page_index(&self, id: &str) -> Option<usize> {
        self.pages.iter().position(|p| p.id == id)
    }

    fn page_by_url(&self, url: &str) -> Option<usize> {
        let norm = |u: &str| u.trim_end_matches('/').to_string();
        self.pages.iter().position(|p| norm(&p.url) == norm(url))
    }

    /// Pages reachable from the start page through transitions, breadth-first.
    pub fn reachable(&self) -> Vec<String> {
        let mut seen = vec![self.start.clone()];
        let mut i = 0;
        while i < seen.len() {
            let page = &self.pages[self.page_index(&seen[i]).unwrap()];
            for target in page.transitions.values() {
                if !seen.contains(target) {
                    seen.push(target.clone());
                }
            }
            i += 1;
        }
        seen
    }
}

const EDITABLE: [&str; 3] = ["textbox", "searchbox", "combobox"];
const SELECTABLE: [&str; 2] = ["combobox", "listbox"];

/// One simulated browser session.
pub struct SimBrowser {
    site: Arc<SiteGraph>,
    current: usize,
    history: Vec<usize>,
    dismissed: BTreeSet<usize>,
    values: BTreeMap<(usize, u32), String>,
    capture_seq: u64,
    closed: bool,
}

impl SimBrowser {
    pub fn new(site: Arc<SiteGraph>) -> Self {
        let current = site.page_index(&site.start).expect("validated site");
        SimBrowser {
            site,
            current,
            history: Vec::new(),
            dismissed: BTreeSet::new(),
            values: BTreeMap::new(),
            capture_seq: 0,
            closed: false,
        }
    }

    pub fn page_id(&self) -> &str {
        &self.site.pages[self.current].id
    }

    fn page(&self) -> &PageDef {
        &self.site.pages[self.current]
    }

    fn live(&self) -> Result<(), BrowserError> {
        if self.closed {
            Err(BrowserError::SessionClosed)
        } else {
            Ok(())
        }
    }

    fn active_overlay(&self) -> Option<&OverlayDef> {
        self.page()
            .overlay
            .as_ref()
            .filter(|_| !self.dismissed.contains(&self.current))
    }

    fn occluder(&self, node: u32) -> Option<u32> {
        let o = self.active_overlay()?;
        let page = self.page();
        if page.in_dialog(node, o.dialog) {
            return None;
        }
        (o.occludes.is_empty() || o.occludes.contains(&node)).then_some(o.dialog)
    }

    /// Node lookup for an action: must exist, be visible and uncovered.
    fn target(&self, node: u32) -> Result<&NodeDef, BrowserError> {
        let page = self.page();
        let n = page
            .node(node)
            .ok_or_else(|| BrowserError::Rejected(format!("no element {node} on this page")))?;
        if let Some(o) = &page.overlay {
            if self.dismissed.contains(&self.current) && page.in_dialog(node, o.dialog) {
                return Err(BrowserError::Rejected(format!("no element {node} on this page")));
            }
        }
        if let Some(d) = self.occluder(node) {
            return Err(BrowserError::Rejected(format!("element {node} is covered by dialog {d}")));
        }
        Ok(n)
    }

    fn go_to(&mut self, index: usize) {
        self.history.push(self.current);
        self.current = index;
    }

    fn next_capture(&mut self) -> u64 {
        self.capture_seq += 1;
        self.capture_seq
    }

    fn derived_markdown(&self) -> String {
        let page = self.page();
        let hidden = |id: u32| {
            page.overlay
                .as_ref()
                .is_some_and(|o| page.in_dialog(id, o.dialog))
        };
        let mut lines = Vec::new();
        for n in page.nodes.iter().filter(|n| !hidden(n.id)) {
            let line = match n.role.as_str() {
                "heading" => format!("# {}", n.name),
                "link" => match page.transitions.get(&n.id).and_then(|t| self.site.page_index(t)) {
                    Some(i) => format!("[{}]({})", n.name, self.site.pages[i].url),
                    None => format!("[{}]", n.name),
                },
                "text" | "cell" | "paragraph" => n.name.clone(),
                _ => continue,
            };
            lines.push(line);
        }
        lines.join("\n")
    }
}

impl BrowserDriver for SimBrowser {
    fn navigate(&mut self, url: &str) -> Result<(), BrowserError> {
        self.live()?;
        let index = self
            .site
            .page_by_url(url)
            .ok_or_else(|| BrowserError::Navigation(format!("no page at {url}")))?;
        self.go_to(index);
        Ok(())
    }

    fn click(&mut self, node: u32) -> Result<(), BrowserError> {
        self.live()?;
        let n = self.target(node)?.clone();
        if let Some(o) = self.active_overlay().cloned() {
            if o.close == Some(node) {
                if o.dismissable {
                    self.dismissed.insert(self.current);
                    return Ok(());
                }
                return Err(BrowserError::Rejected(format!("dialog {} did not close", o.dialog)));
            }
        }
        if let Some(target) = self.page().transitions.get(&node).cloned() {
            let index = self.site.page_index(&target).expect("validated transition");
            self.go_to(index);
            return Ok(());
        }
        if n.role == "checkbox" {
            let key = (self.current, node);
            let next = if self.values.get(&key).map(String::as_str) == Some("checked") {
                "unchecked"
            } else {
                "checked"
            };
            self.values.insert(key, next.into());
            return Ok(());
        }
        Err(BrowserError::Rejected(format!("clicking element {node} had no effect")))
    }

    fn type_text(&mut self, node: u32, text: &str) -> Result<(), BrowserError> {
        self.live()?;
        let n = self.target(node)?;
        if !EDITABLE.contains(&n.role.as_str()) {
            return Err(BrowserError::Rejected(format!("element {node} ({}) does not accept text", n.role)));
        }
        self.values.insert((self.current, node), text.to_string());
        Ok(())
    }

    fn select(&mut self, node: u32, option: &str) -> Result<(), BrowserError> {
        self.live()?;
        let n = self.target(node)?;
        if !SELECTABLE.contains(&n.role.as_str()) {
            return Err(BrowserError::Rejected(format!("element {node} ({}) has no options", n.role)));
        }
        let chosen = n
            .options
            .iter()
            .find(|o| o.eq_ignore_ascii_case(option))
            .cloned()
            .ok_or_else(|| BrowserError::Rejected(format!("element {node} has no option `{option}`")))?;
        self.values.insert((self.current, node), chosen);
        Ok(())
    }

    fn go_back(&mut self) -> Result<(), BrowserError> {
        self.live()?;
        match self.history.pop() {
            Some(prev) => {
                self.current = prev;
                Ok(())
            }
            None => Err(BrowserError::Rejected("no page to go back to".into())),
        }
    }

    fn press_escape(&mut self) -> Result<(), BrowserError> {
        self.live()?;
        match self.active_overlay() {
            Some(o) if o.dismissable => {
                self.dismissed.insert(self.current);
                Ok(())
            }
            Some(o) => Err(BrowserError::Rejected(format!("dialog {} ignores Escape", o.dialog))),
            None => Err(BrowserError::Rejected("nothing to dismiss".into())),
        }
    }

    fn snapshot(&mut self) -> Result<Observation, BrowserError> {
        self.live()?;
        let seq = self.next_capture();
        let page = self.page();
        let overlay = self.active_overlay();
        let hidden_dialog = page
            .overlay
            .as_ref()
            .filter(|_| overlay.is_none())
            .map(|o| o.dialog);
        let ax_tree = page
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| !hidden_dialog.is_some_and(|d| page.in_dialog(n.id, d)))
            .map(|(i, n)| {
                let link_target = (n.role == "link")
                    .then(|| page.transitions.get(&n.id))
                    .flatten()
                    .and_then(|t| self.site.page_index(t))
                    .map(|i| self.site.pages[i].url.clone());
                AxNode {
                    node_id: n.id,
                    role: n.role.clone(),
                    name: n.name.clone(),
                    value: self
                        .values
                        .get(&(self.current, n.id))
                        .cloned()
                        .or_else(|| n.value.clone())
                        .or(link_target),
                    bounds: (16, 40 * i as i32, 320, 32),
                    occluded_by: self.occluder(n.id),
                    parent: n.parent,
                }
            })
            .collect();
        Ok(Observation {
            url: page.url.clone(),
            ax_tree,
            screenshot_ref: format!("shot:{}:{seq}", page.id),
            overlay_present: overlay.is_some(),
            capture_seq: seq,
        })
    }

    fn page_content(&mut self) -> Result<PageContent, BrowserError> {
        self.live()?;
        let seq = self.next_capture();
        let markdown = self.page().markdown.clone().unwrap_or_else(|| self.derived_markdown());
        Ok(PageContent {
            markdown,
            screenshot_ref: format!("shot:{}:{seq}", self.page().id),
            url: self.page().url.clone(),
        })
    }

    fn close(&mut self) {
        self.closed = true;
    }
}

/// Hands out independent sessions over one shared site.
pub struct SimFactory {
    pub site: Arc<SiteGraph>,
}

impl DriverFactory for SimFactory {
    fn open(&self) -> Box<dyn BrowserDriver> {
        Box::new(SimBrowser::new(self.site.clone()))
    }
}
