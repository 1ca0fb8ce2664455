//! Nearest-neighbour prediction: a new item inherits the score of the most
//! similar scored item, provided the match clears a similarity threshold.
//!
//! The index is an exact linear scan. Embeddings come from upstream; this
//! module never embeds text.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::io::{BufRead, BufReader};
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::ScoreRecord;
use crate::thread_model::PonosScore;

pub const DEFAULT_TAU: f64 = 0.8;

const EMBEDDINGS_FILE: &str = "embeddings.jsonl";
const SCORES_FILE: &str = "scores.jsonl";

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `dot(a, b) / (|a| |b|)`, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionError { expected: a.len(), actual: b.len() });
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || !na.is_finite() {
        return Err(Error::ZeroVector("left operand".into()));
    }
    if nb == 0.0 || !nb.is_finite() {
        return Err(Error::ZeroVector("right operand".into()));
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// One line of an embedding file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingLine {
    pub content_id: String,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    content_id: String,
    vector: Vec<f64>,
    norm: f64,
}

impl EmbeddingRecord {
    pub fn new(content_id: impl Into<String>, vector: Vec<f64>) -> Result<Self> {
        let content_id = content_id.into();
        if vector.is_empty() {
            return Err(Error::DimensionError { expected: 1, actual: 0 });
        }
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidContent(format!("non-finite component in {content_id}")));
        }
        let norm = norm(&vector);
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::ZeroVector(content_id));
        }
        Ok(Self { content_id, vector, norm })
    }

    pub fn content_id(&self) -> &str {
        &self.content_id
    }

    pub fn vector(&self) -> &[f64] {
        &self.vector
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor {
    pub content_id: String,
    pub score: PonosScore,
    pub similarity: f64,
}

#[derive(Debug, Clone)]
pub struct NeighborIndex {
    dimension: Option<usize>,
    entries: Vec<(EmbeddingRecord, ScoreRecord)>,
    tau: f64,
}

impl NeighborIndex {
    pub fn new(tau: f64) -> Result<Self> {
        Self::check_tau(tau)?;
        Ok(Self { dimension: None, entries: Vec::new(), tau })
    }

    fn check_tau(tau: f64) -> Result<()> {
        if !(-1.0..=1.0).contains(&tau) {
            return Err(Error::InvalidConfig(format!("tau {tau} outside [-1, 1]")));
        }
        Ok(())
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn set_tau(&mut self, tau: f64) -> Result<()> {
        Self::check_tau(tau)?;
        self.tau = tau;
        Ok(())
    }

    pub fn dimension(&self) -> Option<usize> {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &(EmbeddingRecord, ScoreRecord)> {
        self.entries.iter()
    }

    pub fn insert(&mut self, record: EmbeddingRecord, score: ScoreRecord) -> Result<()> {
        let dim = record.vector.len();
        match self.dimension {
            Some(d) if d != dim => return Err(Error::DimensionError { expected: d, actual: dim }),
            _ => self.dimension = Some(dim),
        }
        if score.content_id != record.content_id {
            return Err(Error::InvalidContent(format!(
                "score for {} attached to embedding {}",
                score.content_id, record.content_id
            )));
        }
        if self.entries.iter().any(|(r, _)| r.content_id == record.content_id) {
            return Err(Error::DuplicateId(record.content_id));
        }
        self.entries.push((record, score));
        Ok(())
    }

    /// Most similar indexed item, or `None` when the index is empty or the
    /// best similarity is below `tau`. Ties go to the smaller content id.
    pub fn query_nearest(&self, query: &[f64]) -> Result<Option<Neighbor>> {
        let Some(dim) = self.dimension else {
            return Ok(None);
        };
        if query.len() != dim {
            return Err(Error::DimensionError { expected: dim, actual: query.len() });
        }
        let qnorm = norm(query);
        if qnorm == 0.0 || !qnorm.is_finite() {
            return Err(Error::ZeroVector("query".into()));
        }
        let mut best: Option<(f64, &(EmbeddingRecord, ScoreRecord))> = None;
        for entry in &self.entries {
            let sim = (dot(query, &entry.0.vector) / (qnorm * entry.0.norm)).clamp(-1.0, 1.0);
            let better = match best {
                None => true,
                Some((b, cur)) => match sim.partial_cmp(&b).unwrap_or(Ordering::Equal) {
                    Ordering::Greater => true,
                    Ordering::Equal => entry.0.content_id < cur.0.content_id,
                    Ordering::Less => false,
                },
            };
            if better {
                best = Some((sim, entry));
            }
        }
        Ok(best.filter(|(sim, _)| *sim >= self.tau).map(|(similarity, (rec, score))| Neighbor {
            content_id: rec.content_id.clone(),
            score: score.score.clone(),
            similarity,
        }))
    }

    /// Joins an embedding file with a score report on `content_id`.
    ///
    /// Embeddings without a score (or whose target was not scored) are
    /// skipped with a warning. Returns the index and the number skipped.
    pub fn from_files(embeddings: &Path, scores: &Path, tau: f64) -> Result<(Self, usize)> {
        let lines = read_embeddings(embeddings)?;
        let mut by_id: HashMap<String, ScoreRecord> = HashMap::new();
        for record in crate::metric::read_score_report(scores)? {
            by_id.insert(record.content_id.clone(), record);
        }
        let mut index = Self::new(tau)?;
        let mut skipped = 0;
        for line in lines {
            match by_id.remove(&line.content_id) {
                Some(score) => index.insert(EmbeddingRecord::new(line.content_id, line.vector)?, score)?,
                None => {
                    warn!("no score for embedding {}; skipped", line.content_id);
                    skipped += 1;
                }
            }
        }
        Ok((index, skipped))
    }

    /// Persists the index as an embedding file plus a score report.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut emb = Vec::new();
        let mut scores = Vec::new();
        for (rec, score) in &self.entries {
            let line = EmbeddingLine { content_id: rec.content_id.clone(), vector: rec.vector.clone() };
            serde_json::to_writer(&mut emb, &line).expect("embedding serializes");
            emb.push(b'\n');
            serde_json::to_writer(&mut scores, score).expect("score serializes");
            scores.push(b'\n');
        }
        crate::ingest::write_atomic(&dir.join(EMBEDDINGS_FILE), &emb)?;
        crate::ingest::write_atomic(&dir.join(SCORES_FILE), &scores)
    }

    pub fn open(dir: &Path, tau: f64) -> Result<Self> {
        let (index, skipped) =
            Self::from_files(&dir.join(EMBEDDINGS_FILE), &dir.join(SCORES_FILE), tau)?;
        if skipped > 0 {
            return Err(Error::InvalidContent(format!(
                "index at {} has {skipped} embeddings without scores",
                dir.display()
            )));
        }
        Ok(index)
    }
}

/// Reads a JSONL embedding file.
pub fn read_embeddings(path: &Path) -> Result<Vec<EmbeddingLine>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::parse_at(n + 1, e.to_string()))?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::thread_model::{ContextDescriptor, ScoreVariant};

    fn scored(id: &str, value: f64) -> ScoreRecord {
        let score = PonosScore::new(value, 5, 0.1, ScoreVariant::Weighted, None, Some("m".into())).unwrap();
        ScoreRecord::new(id, ContextDescriptor::new("sub").unwrap(), score)
    }

    fn index(entries: &[(&str, Vec<f64>, f64)], tau: f64) -> NeighborIndex {
        let mut idx = NeighborIndex::new(tau).unwrap();
        for (id, v, s) in entries {
            idx.insert(EmbeddingRecord::new(*id, v.clone()).unwrap(), scored(id, *s)).unwrap();
        }
        idx
    }

    #[test]
    fn cosine_examples() {
        assert!((cosine_similarity(&[3.0, 4.0], &[3.0, 4.0]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let s = cosine_similarity(&[1.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!((s - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!(matches!(cosine_similarity(&[1.0], &[1.0, 2.0]), Err(Error::DimensionError { .. })));
        assert!(matches!(cosine_similarity(&[0.0, 0.0], &[1.0, 2.0]), Err(Error::ZeroVector(_))));
    }

    #[test]
    fn nearest_examples() {
        let idx = index(&[("a", vec![1.0, 0.0], 0.8), ("b", vec![0.0, 1.0], 0.2)], 0.5);
        let hit = idx.query_nearest(&[0.9, 0.1]).unwrap().unwrap();
        assert_eq!(hit.content_id, "a");
        assert_eq!(hit.score.value(), 0.8);
        // 0.9 / sqrt(0.82)
        assert!((hit.similarity - 0.9 / 0.82f64.sqrt()).abs() < 1e-12);
        assert!((hit.similarity - 0.9939).abs() < 1e-4);

        let exact = idx.query_nearest(&[0.0, 1.0]).unwrap().unwrap();
        assert_eq!(exact.content_id, "b");
        assert!((exact.similarity - 1.0).abs() < 1e-9);

        assert!(NeighborIndex::new(0.8).unwrap().query_nearest(&[1.0]).unwrap().is_none());
        assert!(matches!(idx.query_nearest(&[1.0]), Err(Error::DimensionError { .. })));
    }

    #[test]
    fn threshold_and_ties() {
        let idx = index(&[("z", vec![1.0, 0.0], 0.1), ("m", vec![2.0, 0.0], 0.9)], 0.8);
        // both have similarity exactly 1; smaller id wins
        assert_eq!(idx.query_nearest(&[5.0, 0.0]).unwrap().unwrap().content_id, "m");
        // best similarity 1/sqrt(2) < 0.8
        assert!(idx.query_nearest(&[1.0, 1.0]).unwrap().is_none());
    }

    #[test]
    fn insert_checks() {
        let mut idx = index(&[("a", vec![1.0, 0.0], 0.5)], 0.8);
        assert!(matches!(
            idx.insert(EmbeddingRecord::new("b", vec![1.0]).unwrap(), scored("b", 0.1)),
            Err(Error::DimensionError { .. })
        ));
        assert!(matches!(
            idx.insert(EmbeddingRecord::new("a", vec![0.0, 1.0]).unwrap(), scored("a", 0.1)),
            Err(Error::DuplicateId(_))
        ));
        assert!(matches!(EmbeddingRecord::new("z", vec![0.0, 0.0]), Err(Error::ZeroVector(_))));
        assert!(NeighborIndex::new(1.5).is_err());
    }

    #[test]
    fn save_open_round_trip() {
        let idx = index(&[("a", vec![1.0, 0.5], 0.25), ("b", vec![-1.0, 2.0], 0.75)], 0.8);
        let dir = tempfile::tempdir().unwrap();
        idx.save(dir.path()).unwrap();
        let back = NeighborIndex::open(dir.path(), 0.8).unwrap();
        assert_eq!(back.len(), 2);
        let q = [0.9, 0.4];
        assert_eq!(back.query_nearest(&q).unwrap(), idx.query_nearest(&q).unwrap());
    }
}
