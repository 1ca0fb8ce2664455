//! Corpus ingestion: thread-record parsing, the local corpus store, test-set
//! selection and gold-label loading.
//!
//! A store on disk is a directory holding `items.jsonl` (accepted thread
//! records, in ingestion order) and `meta.json`. Orphan flags are recomputed
//! on load, so the record file is the only source of truth.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::thread_model::{
    AssessorLabel, ContentItem, ContentKind, ContextDescriptor, ReactionRecord,
};

pub const DEFAULT_MIN_REPLIES: usize = 4;
pub const DEFAULT_MAX_REPLIES: usize = 7;

/// Fraction of failed lines above which ingestion aborts.
pub const MAX_FAILED_FRACTION: f64 = 0.10;

const ITEMS_FILE: &str = "items.jsonl";
const META_FILE: &str = "meta.json";

const RECORD_FIELDS: [&str; 9] = [
    "id",
    "kind",
    "parent_id",
    "title",
    "body",
    "image_desc",
    "score",
    "created_utc",
    "context",
];

/// One line of a thread dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThreadRecord {
    pub id: String,
    pub kind: ContentKind,
    pub parent_id: Option<String>,
    pub title: Option<String>,
    pub body: String,
    pub image_desc: Option<String>,
    pub score: i64,
    pub created_utc: i64,
    pub context: String,
}

impl ThreadRecord {
    pub fn into_item(self) -> Result<ContentItem> {
        let item = ContentItem {
            id: self.id,
            kind: self.kind,
            parent_id: self.parent_id,
            title: self.title,
            body: self.body,
            image_desc: self.image_desc,
            score: self.score,
            created_at: self.created_utc,
            context: ContextDescriptor::new(self.context)?,
        };
        item.validate()?;
        Ok(item)
    }
}

impl From<&ContentItem> for ThreadRecord {
    fn from(item: &ContentItem) -> Self {
        Self {
            id: item.id.clone(),
            kind: item.kind,
            parent_id: item.parent_id.clone(),
            title: item.title.clone(),
            body: item.body.clone(),
            image_desc: item.image_desc.clone(),
            score: item.score,
            created_utc: item.created_at,
            context: item.context.community_id().to_string(),
        }
    }
}

/// Parses a single thread-record line. Unknown fields are logged and ignored.
pub fn parse_thread_record(line: &str) -> Result<ContentItem> {
    let value: serde_json::Value =
        serde_json::from_str(line).map_err(|e| Error::parse(e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| Error::parse("thread record must be a JSON object"))?;
    for key in obj.keys() {
        if !RECORD_FIELDS.contains(&key.as_str()) {
            warn!("ignoring unknown thread-record field {key:?}");
        }
    }
    for key in RECORD_FIELDS {
        if !obj.contains_key(key) {
            return Err(Error::parse(format!("missing field {key:?}")));
        }
    }
    let record: ThreadRecord =
        serde_json::from_value(value).map_err(|e| Error::parse(e.to_string()))?;
    record.into_item().map_err(|e| Error::parse(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineError {
    /// 1-based line number in the input.
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestReport {
    /// Non-blank lines seen.
    pub total_lines: usize,
    pub posts: usize,
    pub comments: usize,
    pub orphans: usize,
    pub duplicates: usize,
    pub errors: Vec<LineError>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreMetadata {
    pub context: ContextDescriptor,
    pub ingested_at: i64,
    pub posts: usize,
    pub comments: usize,
    pub orphans: usize,
}

/// Queryable corpus of content items.
///
/// Built once by a single writer, then read-only.
#[derive(Debug, Clone)]
pub struct CorpusStore {
    context: ContextDescriptor,
    ingested_at: i64,
    items: Vec<ContentItem>,
    by_id: HashMap<String, usize>,
    children: HashMap<String, Vec<usize>>,
    /// Items whose ancestor chain does not reach a stored post.
    orphaned: HashSet<String>,
}

impl CorpusStore {
    /// Builds a store from items; later duplicates replace earlier ones.
    pub fn from_items(
        context: ContextDescriptor,
        items: impl IntoIterator<Item = ContentItem>,
    ) -> Result<Self> {
        let mut store = Self {
            context,
            ingested_at: now_secs(),
            items: Vec::new(),
            by_id: HashMap::new(),
            children: HashMap::new(),
            orphaned: HashSet::new(),
        };
        for item in items {
            item.validate()?;
            store.upsert(item);
        }
        store.reindex();
        Ok(store)
    }

    /// Returns true when an existing item was replaced.
    fn upsert(&mut self, item: ContentItem) -> bool {
        match self.by_id.get(&item.id) {
            Some(&idx) => {
                self.items[idx] = item;
                true
            }
            None => {
                self.by_id.insert(item.id.clone(), self.items.len());
                self.items.push(item);
                false
            }
        }
    }

    fn reindex(&mut self) {
        self.children.clear();
        for (idx, item) in self.items.iter().enumerate() {
            if let Some(parent) = &item.parent_id {
                self.children.entry(parent.clone()).or_default().push(idx);
            }
        }
        let mut rooted: HashMap<&str, bool> = HashMap::new();
        let orphaned = self
            .items
            .iter()
            .filter(|item| !self.reaches_post(&item.id, &mut rooted))
            .map(|item| item.id.clone())
            .collect();
        self.orphaned = orphaned;
    }

    fn reaches_post<'a>(&'a self, id: &'a str, memo: &mut HashMap<&'a str, bool>) -> bool {
        let mut chain = Vec::new();
        let mut seen = HashSet::new();
        let mut cursor = id;
        let verdict = loop {
            if let Some(&known) = memo.get(cursor) {
                break known;
            }
            if !seen.insert(cursor) {
                break false; // parent cycle
            }
            chain.push(cursor);
            match self.get(cursor) {
                None => break false,
                Some(item) => match &item.parent_id {
                    None => break item.kind == ContentKind::Post,
                    Some(parent) => cursor = parent,
                },
            }
        };
        for link in chain {
            memo.insert(link, verdict);
        }
        verdict
    }

    pub fn context(&self) -> &ContextDescriptor {
        &self.context
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&ContentItem> {
        self.by_id.get(id).map(|&i| &self.items[i])
    }

    /// Direct replies of `id`, in ingestion order.
    pub fn replies_of(&self, id: &str) -> Vec<&ContentItem> {
        self.children
            .get(id)
            .map(|idxs| idxs.iter().map(|&i| &self.items[i]).collect())
            .unwrap_or_default()
    }

    /// Up to `max` direct replies, highest score first (ties: earlier, then smaller id).
    pub fn top_replies(&self, id: &str, max: usize) -> Vec<ContentItem> {
        let mut replies: Vec<ContentItem> = self.replies_of(id).into_iter().cloned().collect();
        replies.sort_by(reply_rank);
        replies.truncate(max);
        replies
    }

    pub fn iter(&self) -> impl Iterator<Item = &ContentItem> {
        self.items.iter()
    }

    /// True when the item sits in a subtree that never reaches a stored post.
    pub fn is_orphaned(&self, id: &str) -> bool {
        self.orphaned.contains(id)
    }

    /// The post at the root of the item's thread, if it resolves.
    pub fn root_post(&self, id: &str) -> Option<&ContentItem> {
        let mut cursor = self.get(id)?;
        for _ in 0..=self.items.len() {
            match &cursor.parent_id {
                None => return (cursor.kind == ContentKind::Post).then_some(cursor),
                Some(parent) => cursor = self.get(parent)?,
            }
        }
        None
    }

    /// Non-orphaned items that have at least one direct reply, in ingestion order.
    pub fn reply_targets(&self) -> impl Iterator<Item = &ContentItem> {
        self.items
            .iter()
            .filter(|i| !self.is_orphaned(&i.id) && self.children.contains_key(&i.id))
    }

    pub fn metadata(&self) -> StoreMetadata {
        let posts = self.items.iter().filter(|i| i.kind == ContentKind::Post).count();
        StoreMetadata {
            context: self.context.clone(),
            ingested_at: self.ingested_at,
            posts,
            comments: self.items.len() - posts,
            orphans: self
                .items
                .iter()
                .filter(|i| i.kind == ContentKind::Comment && self.is_orphaned(&i.id))
                .count(),
        }
    }

    /// Accepted records in ingestion order, in the thread-record wire shape.
    pub fn export_records(&self) -> Vec<ThreadRecord> {
        self.items.iter().map(ThreadRecord::from).collect()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut items = Vec::new();
        for record in self.export_records() {
            serde_json::to_writer(&mut items, &record).expect("records serialize");
            items.push(b'\n');
        }
        write_atomic(&dir.join(ITEMS_FILE), &items)?;
        let meta = serde_json::to_vec_pretty(&self.metadata()).expect("metadata serializes");
        write_atomic(&dir.join(META_FILE), &meta)
    }

    pub fn open(dir: &Path) -> Result<Self> {
        let meta_path = dir.join(META_FILE);
        let meta_bytes = std::fs::read(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let meta: StoreMetadata =
            serde_json::from_slice(&meta_bytes).map_err(|e| Error::parse(e.to_string()))?;
        let items_path = dir.join(ITEMS_FILE);
        let file = std::fs::File::open(&items_path).map_err(|e| Error::io(&items_path, e))?;
        let mut items = Vec::new();
        for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(&items_path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let record: ThreadRecord =
                serde_json::from_str(&line).map_err(|e| Error::parse_at(n + 1, e.to_string()))?;
            items.push(record.into_item()?);
        }
        let mut store = Self::from_items(meta.context, items)?;
        store.ingested_at = meta.ingested_at;
        Ok(store)
    }
}

/// Writes `bytes` to a temporary file next to `path`, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn now_secs() -> i64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs() as i64).unwrap_or(0)
}

/// Parses a thread dump into a store.
///
/// Bad lines are collected into the report; if more than 10% of non-blank
/// lines fail the whole ingestion aborts with [`Error::CorruptCorpus`].
pub fn ingest_threads<R: BufRead>(
    input: R,
    context: ContextDescriptor,
) -> Result<(CorpusStore, IngestReport)> {
    let mut report = IngestReport::default();
    let mut items = Vec::new();
    let mut seen = HashSet::new();
    for (n, line) in input.lines().enumerate() {
        let line_no = n + 1;
        let line = match line {
            Ok(l) => l,
            Err(e) => {
                report.total_lines += 1;
                report.errors.push(LineError { line: line_no, message: e.to_string() });
                continue;
            }
        };
        if line.trim().is_empty() {
            continue;
        }
        report.total_lines += 1;
        match parse_thread_record(&line) {
            Ok(item) => {
                if item.context != context {
                    warn!(
                        "line {line_no}: item {} belongs to context {:?}, store context is {:?}",
                        item.id,
                        item.context.community_id(),
                        context.community_id()
                    );
                }
                if !seen.insert(item.id.clone()) {
                    warn!("line {line_no}: duplicate id {}; last record wins", item.id);
                    report.duplicates += 1;
                }
                items.push(item);
            }
            Err(e) => report.errors.push(LineError { line: line_no, message: e.to_string() }),
        }
    }
    let failed = report.errors.len();
    if failed as f64 > MAX_FAILED_FRACTION * report.total_lines as f64 {
        return Err(Error::CorruptCorpus { failed, total: report.total_lines });
    }
    let store = CorpusStore::from_items(context, items)?;
    let meta = store.metadata();
    report.posts = meta.posts;
    report.comments = meta.comments;
    report.orphans = meta.orphans;
    for item in store.iter() {
        if item.kind == ContentKind::Comment && store.is_orphaned(&item.id) {
            warn!("comment {} does not resolve to a stored post", item.id);
        }
    }
    Ok((store, report))
}

/// Highest score first; ties by earlier creation time, then by id.
fn reply_rank(a: &ContentItem, b: &ContentItem) -> Ordering {
    b.score
        .cmp(&a.score)
        .then(a.created_at.cmp(&b.created_at))
        .then_with(|| a.id.cmp(&b.id))
}

/// Selects messages with at least `min_replies` direct replies, keeping at
/// most `max_replies` of them by rank. Output is sorted by target id.
pub fn select_test_set(
    store: &CorpusStore,
    min_replies: usize,
    max_replies: usize,
) -> Result<Vec<(ContentItem, Vec<ContentItem>)>> {
    if min_replies == 0 || max_replies < min_replies {
        return Err(Error::InvalidConfig(format!(
            "need 1 <= min_replies <= max_replies, got {min_replies} and {max_replies}"
        )));
    }
    let mut selected: Vec<_> = store
        .reply_targets()
        .filter(|target| store.replies_of(&target.id).len() >= min_replies)
        .map(|target| (target.clone(), store.top_replies(&target.id, max_replies)))
        .collect();
    selected.sort_by(|a, b| a.0.id.cmp(&b.0.id));
    Ok(selected)
}

#[derive(Debug, Clone, Deserialize)]
struct GoldEntry {
    comment_id: String,
    reply_id: String,
    labels: Vec<String>,
}

/// Reads a gold-label file (a JSON array of `{comment_id, reply_id, labels}`).
pub fn load_gold_labels<R: std::io::Read>(
    input: R,
    store: &CorpusStore,
) -> Result<Vec<ReactionRecord>> {
    let entries: Vec<GoldEntry> =
        serde_json::from_reader(input).map_err(|e| Error::parse(e.to_string()))?;
    entries
        .into_iter()
        .enumerate()
        .map(|(i, entry)| {
            if entry.labels.is_empty() {
                return Err(Error::parse(format!(
                    "entry {i}: reply {} has an empty label list",
                    entry.reply_id
                )));
            }
            let labels = entry
                .labels
                .iter()
                .map(|l| l.parse::<AssessorLabel>())
                .collect::<Result<Vec<_>>>()?;
            if store.get(&entry.comment_id).is_none() {
                return Err(Error::MissingContent(entry.comment_id));
            }
            let reply = store
                .get(&entry.reply_id)
                .ok_or_else(|| Error::MissingContent(entry.reply_id.clone()))?;
            if reply.parent_id.as_deref() != Some(entry.comment_id.as_str()) {
                return Err(Error::parse(format!(
                    "entry {i}: {} is not a direct reply to {}",
                    entry.reply_id, entry.comment_id
                )));
            }
            ReactionRecord::from_labels(reply.clone(), labels, None)
        })
        .collect()
}
