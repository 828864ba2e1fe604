//! Cosine-distance scoring of pair lists.

use std::fmt;
use std::io::{BufRead, Write};
use std::sync::Arc;

use crate::embedding::EmbeddingSet;
use crate::error::{Error, Result};
use crate::format::sig;
use crate::par::{self, Execution};
use crate::protocol::{Label, PairList, Scenario, SyncMode};

/// Pairs scored per parallel work item.
const CHUNK: usize = 4096;

/// `1 - <a, b> / (|a| |b|)`, accumulated in a single pass.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::VectorDimension(a.len(), b.len()));
    }
    let (mut dot, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok(1.0 - dot / (aa.sqrt() * bb.sqrt()))
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn inverse_norms(set: &EmbeddingSet) -> Vec<f64> {
    set.records()
        .iter()
        .map(|r| 1.0 / dot(&r.vector, &r.vector).sqrt())
        .collect()
}

/// Provenance carried alongside a score vector.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreMeta {
    pub scenario: Option<Scenario>,
    pub sync_mode: Option<SyncMode>,
    /// Trait or fusion description, e.g. `IRIS`.
    pub source: String,
}

impl ScoreMeta {
    pub fn unknown() -> Self {
        ScoreMeta {
            scenario: None,
            sync_mode: None,
            source: String::new(),
        }
    }
}

/// Distances aligned by ordinal to a pair list.
#[derive(Clone, Debug)]
pub struct ScoreSet {
    scores: Vec<f64>,
    labels: Vec<Label>,
    pub meta: ScoreMeta,
    pairs: Option<Arc<PairList>>,
}

impl PartialEq for ScoreSet {
    fn eq(&self, other: &Self) -> bool {
        self.scores == other.scores && self.labels == other.labels && self.meta == other.meta
    }
}

impl ScoreSet {
    pub fn new(scores: Vec<f64>, labels: Vec<Label>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::Metrics(format!(
                "{} scores but {} labels",
                scores.len(),
                labels.len()
            )));
        }
        Ok(ScoreSet {
            scores,
            labels,
            meta: ScoreMeta::unknown(),
            pairs: None,
        })
    }

    /// Builds a set from separate genuine and impostor score lists.
    pub fn from_partitions(genuine: &[f64], impostor: &[f64]) -> Self {
        let scores = genuine.iter().chain(impostor).copied().collect();
        let labels = std::iter::repeat(Label::Genuine)
            .take(genuine.len())
            .chain(std::iter::repeat(Label::Impostor).take(impostor.len()))
            .collect();
        ScoreSet {
            scores,
            labels,
            meta: ScoreMeta::unknown(),
            pairs: None,
        }
    }

    pub fn with_meta(mut self, meta: ScoreMeta) -> Self {
        self.meta = meta;
        self
    }

    pub(crate) fn with_parts(
        scores: Vec<f64>,
        labels: Vec<Label>,
        meta: ScoreMeta,
        pairs: Option<Arc<PairList>>,
    ) -> Self {
        ScoreSet {
            scores,
            labels,
            meta,
            pairs,
        }
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    /// The pair list that produced these scores, when scored in-process.
    pub fn pairs(&self) -> Option<&Arc<PairList>> {
        self.pairs.as_ref()
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn genuine(&self) -> impl Iterator<Item = f64> + '_ {
        self.partition(Label::Genuine)
    }

    pub fn impostor(&self) -> impl Iterator<Item = f64> + '_ {
        self.partition(Label::Impostor)
    }

    fn partition(&self, label: Label) -> impl Iterator<Item = f64> + '_ {
        self.scores
            .iter()
            .zip(&self.labels)
            .filter(move |(_, &l)| l == label)
            .map(|(&s, _)| s)
    }

    /// Applies `f` to every score, keeping labels.
    pub fn map_scores(&self, f: impl Fn(f64) -> f64) -> ScoreSet {
        ScoreSet {
            scores: self.scores.iter().map(|&s| f(s)).collect(),
            ..self.clone()
        }
    }

    /// `ordinal,label,score` rows, scores at 12 significant digits.
    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "ordinal,label,score")?;
        for (k, (s, l)) in self.scores.iter().zip(&self.labels).enumerate() {
            writeln!(out, "{k},{},{}", l.as_str(), sig(*s, 12))?;
        }
        out.flush()
    }

    pub fn read<R: BufRead>(reader: R) -> Result<ScoreSet> {
        let bad = |line: usize, msg: String| Error::Fusion(format!("score file line {line}: {msg}"));
        let mut scores = Vec::new();
        let mut labels = Vec::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| bad(n + 1, e.to_string()))?;
            let line = line.trim();
            if n == 0 && line == "ordinal,label,score" || line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(bad(n + 1, format!("expected 3 fields, found {}", fields.len())));
            }
            let ordinal: usize = fields[0]
                .parse()
                .map_err(|_| bad(n + 1, format!("invalid ordinal '{}'", fields[0])))?;
            if ordinal != scores.len() {
                return Err(bad(n + 1, format!("ordinal {ordinal} out of sequence")));
            }
            labels.push(fields[1].parse().map_err(|m| bad(n + 1, m))?);
            let score: f64 = fields[2]
                .parse()
                .map_err(|_| bad(n + 1, format!("invalid score '{}'", fields[2])))?;
            if !score.is_finite() {
                return Err(bad(n + 1, "non-finite score".to_string()));
            }
            scores.push(score);
        }
        ScoreSet::new(scores, labels)
    }
}

impl fmt::Display for ScoreSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let g = self.genuine().count();
        write!(
            f,
            "{} scores ({} genuine, {} impostor)",
            self.len(),
            g,
            self.len() - g
        )
    }
}

/// Scores every pair with [`Execution::default`].
pub fn score_pairs(probe: &EmbeddingSet, gallery: &EmbeddingSet, pairs: &Arc<PairList>) -> Result<ScoreSet> {
    score_pairs_with(Execution::default(), probe, gallery, pairs)
}

/// Scores every pair of `pairs`, resolving probe keys in `probe` and gallery
/// keys in `gallery`. Record norms are computed once per set. The output is
/// bit-identical for every execution mode and thread count.
pub fn score_pairs_with(
    exec: Execution,
    probe: &EmbeddingSet,
    gallery: &EmbeddingSet,
    pairs: &Arc<PairList>,
) -> Result<ScoreSet> {
    if !probe.is_empty() && !gallery.is_empty() && probe.dimension() != gallery.dimension() {
        return Err(Error::VectorDimension(probe.dimension(), gallery.dimension()));
    }
    let keys = pairs.keys();
    let resolve = |set: &EmbeddingSet| -> Vec<Option<u32>> {
        keys.iter().map(|k| set.index_of(k).map(|i| i as u32)).collect()
    };
    let probe_map = resolve(probe);
    let gallery_map = resolve(gallery);

    let list = pairs.pairs();
    let mut resolved = Vec::with_capacity(list.len());
    for (ordinal, pair) in list.iter().enumerate() {
        let p = probe_map[pair.probe as usize].ok_or_else(|| Error::UnresolvedKey {
            ordinal,
            key: keys[pair.probe as usize].clone(),
            side: "probe",
        })?;
        let g = gallery_map[pair.gallery as usize].ok_or_else(|| Error::UnresolvedKey {
            ordinal,
            key: keys[pair.gallery as usize].clone(),
            side: "gallery",
        })?;
        resolved.push((p, g));
    }

    let probe_inv = inverse_norms(probe);
    let gallery_inv = inverse_norms(gallery);
    let probe_records = probe.records();
    let gallery_records = gallery.records();

    let mut scores = vec![0.0f64; list.len()];
    par::fill_chunks(exec, &mut scores, CHUNK, |offset, out| {
        for (slot, &(p, g)) in out.iter_mut().zip(&resolved[offset..]) {
            let (p, g) = (p as usize, g as usize);
            let d = dot(&probe_records[p].vector, &gallery_records[g].vector);
            *slot = 1.0 - d * probe_inv[p] * gallery_inv[g];
        }
    });

    let source = if probe.modality() == gallery.modality() {
        probe.modality().to_string()
    } else {
        format!("{}/{}", probe.modality(), gallery.modality())
    };
    Ok(ScoreSet::with_parts(
        scores,
        pairs.labels(),
        ScoreMeta {
            scenario: Some(pairs.scenario()),
            sync_mode: Some(pairs.sync_mode()),
            source,
        },
        Some(Arc::clone(pairs)),
    ))
}

/// Helper for single-modality flows where probe and gallery come from the
/// same set.
pub fn score_within(set: &EmbeddingSet, pairs: &Arc<PairList>, exec: Execution) -> Result<ScoreSet> {
    score_pairs_with(exec, set, set, pairs)
}
