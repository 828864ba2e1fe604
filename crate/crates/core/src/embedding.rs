//! Labeled embedding sets: types, file ingestion, validation and filtering.
//!
//! Records inside an [`EmbeddingSet`] are kept sorted by [`RecordKey`]
//! (class, spectrum, sample index). Every consumer relies on that order:
//! pair enumeration is canonical because of it and key lookups are a binary
//! search.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const HEADER: &str = "subject_id,class_id,spectrum,sample_index,trait,dim";

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Spectrum {
    #[serde(rename = "NIR")]
    Nir,
    #[serde(rename = "VIS")]
    Vis,
}

impl Spectrum {
    pub const ALL: [Spectrum; 2] = [Spectrum::Nir, Spectrum::Vis];

    pub fn as_str(self) -> &'static str {
        match self {
            Spectrum::Nir => "NIR",
            Spectrum::Vis => "VIS",
        }
    }
}

impl fmt::Display for Spectrum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Spectrum {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "NIR" => Ok(Spectrum::Nir),
            "VIS" => Ok(Spectrum::Vis),
            other => Err(format!("unknown spectrum token '{other}'")),
        }
    }
}

/// Biometric trait an embedding was extracted from.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Modality {
    #[serde(rename = "IRIS")]
    Iris,
    #[serde(rename = "PERIOCULAR")]
    Periocular,
}

impl Modality {
    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Iris => "IRIS",
            Modality::Periocular => "PERIOCULAR",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "IRIS" => Ok(Modality::Iris),
            "PERIOCULAR" => Ok(Modality::Periocular),
            other => Err(format!("unknown trait token '{other}'")),
        }
    }
}

/// Identity of one capture within a single-modality set.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RecordKey {
    pub class_id: Arc<str>,
    pub spectrum: Spectrum,
    pub sample_index: u32,
}

impl RecordKey {
    pub fn new(class_id: impl Into<Arc<str>>, spectrum: Spectrum, sample_index: u32) -> Self {
        RecordKey {
            class_id: class_id.into(),
            spectrum,
            sample_index,
        }
    }
}

impl fmt::Display for RecordKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.class_id, self.spectrum, self.sample_index)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingRecord {
    pub subject_id: Arc<str>,
    pub key: RecordKey,
    pub modality: Modality,
    pub vector: Arc<[f64]>,
}

impl EmbeddingRecord {
    pub fn new(
        subject_id: impl Into<Arc<str>>,
        key: RecordKey,
        modality: Modality,
        vector: impl Into<Arc<[f64]>>,
    ) -> Self {
        EmbeddingRecord {
            subject_id: subject_id.into(),
            key,
            modality,
            vector: vector.into(),
        }
    }

    pub fn class_id(&self) -> &str {
        &self.key.class_id
    }

    pub fn spectrum(&self) -> Spectrum {
        self.key.spectrum
    }

    pub fn sample_index(&self) -> u32 {
        self.key.sample_index
    }
}

/// Class/sample/spectrum shape of a rectangular database.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetLayout {
    pub num_classes: usize,
    pub samples_per_class_per_spectrum: usize,
    pub spectra: Vec<Spectrum>,
}

impl DatasetLayout {
    pub fn new(num_classes: usize, samples: usize, spectra: &[Spectrum]) -> Self {
        let spectra: BTreeSet<Spectrum> = spectra.iter().copied().collect();
        DatasetLayout {
            num_classes,
            samples_per_class_per_spectrum: samples,
            spectra: spectra.into_iter().collect(),
        }
    }

    /// 209 subjects, both eyes, 15 captures per eye and spectrum.
    pub fn polyu() -> Self {
        Self::new(418, 15, &Spectrum::ALL)
    }

    /// 120 subjects, both eyes, 8 captures per eye and spectrum.
    pub fn cross_eyed() -> Self {
        Self::new(240, 8, &Spectrum::ALL)
    }

    pub fn num_records(&self) -> usize {
        self.num_classes * self.samples_per_class_per_spectrum * self.spectra.len()
    }
}

/// An immutable, validated, single-modality collection of embeddings.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingSet {
    records: Vec<EmbeddingRecord>,
    dimension: usize,
    modality: Modality,
}

impl EmbeddingSet {
    /// Builds a set and rejects it if [`validate`] finds any hard violation.
    /// Ragged layouts are accepted; see [`EmbeddingSet::layout`].
    pub fn new(modality: Modality, records: Vec<EmbeddingRecord>) -> Result<Self> {
        let set = Self::new_unchecked(modality, records);
        if let Some(issue) = validate(&set).issues.into_iter().find(|i| i.is_error()) {
            return Err(issue.into_error());
        }
        Ok(set)
    }

    /// Sorts the records into canonical order without checking invariants.
    pub fn new_unchecked(modality: Modality, mut records: Vec<EmbeddingRecord>) -> Self {
        records.sort_by(|a, b| a.key.cmp(&b.key));
        let dimension = records.first().map_or(0, |r| r.vector.len());
        EmbeddingSet {
            records,
            dimension,
            modality,
        }
    }

    pub fn empty(modality: Modality, dimension: usize) -> Self {
        EmbeddingSet {
            records: Vec::new(),
            dimension,
            modality,
        }
    }

    /// Combines two sets of the same modality and dimension, e.g. the NIR
    /// and VIS files of one trial.
    pub fn merge(&self, other: &EmbeddingSet) -> Result<Self> {
        if self.modality != other.modality {
            return Err(Error::Config(format!(
                "cannot merge {} and {} embedding sets",
                self.modality, other.modality
            )));
        }
        let mut records = self.records.clone();
        records.extend(other.records.iter().cloned());
        Self::new(self.modality, records)
    }

    pub fn records(&self) -> &[EmbeddingRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn get(&self, index: usize) -> Option<&EmbeddingRecord> {
        self.records.get(index)
    }

    pub fn index_of(&self, key: &RecordKey) -> Option<usize> {
        self.records.binary_search_by(|r| r.key.cmp(key)).ok()
    }

    /// Distinct class ids in canonical (lexicographic) order.
    pub fn class_ids(&self) -> Vec<Arc<str>> {
        let mut ids: Vec<Arc<str>> = Vec::new();
        for r in &self.records {
            if ids.last().map_or(true, |last| **last != *r.key.class_id) {
                ids.push(r.key.class_id.clone());
            }
        }
        ids
    }

    pub fn spectra(&self) -> Vec<Spectrum> {
        let set: BTreeSet<Spectrum> = self.records.iter().map(|r| r.key.spectrum).collect();
        set.into_iter().collect()
    }

    fn cell_counts(&self) -> BTreeMap<(Arc<str>, Spectrum), usize> {
        let spectra = self.spectra();
        let mut counts = BTreeMap::new();
        for class in self.class_ids() {
            for &s in &spectra {
                counts.insert((class.clone(), s), 0usize);
            }
        }
        for r in &self.records {
            *counts
                .get_mut(&(r.key.class_id.clone(), r.key.spectrum))
                .expect("cell registered above") += 1;
        }
        counts
    }

    /// Derives the dataset shape, failing when some (class, spectrum) cell
    /// holds a different number of samples than the others.
    pub fn layout(&self) -> Result<DatasetLayout> {
        let counts = self.cell_counts();
        let expected = counts.values().copied().max().unwrap_or(0);
        if let Some(((class, spectrum), n)) = counts.iter().find(|(_, &n)| n != expected) {
            return Err(Error::NonRectangular(format!(
                "class {class} has {n} {spectrum} samples, others have {expected}"
            )));
        }
        Ok(DatasetLayout::new(
            self.class_ids().len(),
            expected,
            &self.spectra(),
        ))
    }

    pub fn filter(&self, filter: &RecordFilter) -> EmbeddingSet {
        let records = self
            .records
            .iter()
            .filter(|r| filter.matches(r))
            .cloned()
            .collect();
        EmbeddingSet {
            records,
            dimension: self.dimension,
            modality: self.modality,
        }
    }

    /// Returns a copy with every vector multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> EmbeddingSet {
        let records = self
            .records
            .iter()
            .map(|r| EmbeddingRecord {
                vector: r.vector.iter().map(|v| v * factor).collect(),
                ..r.clone()
            })
            .collect();
        EmbeddingSet {
            records,
            ..self.clone()
        }
    }
}

/// Conjunction of optional predicates over records.
#[derive(Clone, Debug, Default)]
pub struct RecordFilter {
    pub spectrum: Option<Spectrum>,
    pub class_ids: Option<BTreeSet<String>>,
    /// Inclusive sample-index range.
    pub sample_range: Option<(u32, u32)>,
}

impl RecordFilter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn spectrum(mut self, spectrum: Spectrum) -> Self {
        self.spectrum = Some(spectrum);
        self
    }

    pub fn class_ids<I, S>(mut self, ids: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        self.class_ids = Some(ids.into_iter().map(|s| s.as_ref().to_string()).collect());
        self
    }

    pub fn sample_range(mut self, lo: u32, hi: u32) -> Self {
        self.sample_range = Some((lo, hi));
        self
    }

    pub fn matches(&self, record: &EmbeddingRecord) -> bool {
        self.spectrum.map_or(true, |s| s == record.key.spectrum)
            && self
                .class_ids
                .as_ref()
                .map_or(true, |ids| ids.contains(record.class_id()))
            && self
                .sample_range
                .map_or(true, |(lo, hi)| (lo..=hi).contains(&record.key.sample_index))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum IssueKind {
    NonFinite {
        key: RecordKey,
        component: usize,
    },
    ZeroVector {
        key: RecordKey,
    },
    Dimension {
        key: RecordKey,
        expected: usize,
        found: usize,
    },
    Duplicate {
        key: RecordKey,
    },
    Modality {
        key: RecordKey,
        found: Modality,
    },
    Ragged {
        class_id: String,
        spectrum: Spectrum,
        count: usize,
        expected: usize,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Issue {
    pub kind: IssueKind,
    expected_modality: Modality,
}

impl Issue {
    /// Ragged cells are warnings; everything else breaks a set invariant.
    pub fn is_error(&self) -> bool {
        !matches!(self.kind, IssueKind::Ragged { .. })
    }

    fn into_error(self) -> Error {
        match self.kind {
            IssueKind::NonFinite { key, component } => Error::NonFinite { key, component },
            IssueKind::ZeroVector { key } => Error::ZeroVector(key),
            IssueKind::Dimension { key, expected, found } => {
                Error::DimensionMismatch { key, expected, found }
            }
            IssueKind::Duplicate { key } => Error::DuplicateKey(key),
            IssueKind::Modality { key, found } => Error::MixedModality {
                key,
                expected: self.expected_modality.to_string(),
                found: found.to_string(),
            },
            IssueKind::Ragged { .. } => Error::NonRectangular(self.to_string()),
        }
    }
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            IssueKind::NonFinite { key, component } => {
                write!(f, "error: {key}: non-finite value at component {component}")
            }
            IssueKind::ZeroVector { key } => write!(f, "error: {key}: all-zero vector"),
            IssueKind::Dimension { key, expected, found } => {
                write!(f, "error: {key}: dimension {found}, expected {expected}")
            }
            IssueKind::Duplicate { key } => write!(f, "error: {key}: duplicate record"),
            IssueKind::Modality { key, found } => write!(
                f,
                "error: {key}: modality {found}, expected {}",
                self.expected_modality
            ),
            IssueKind::Ragged {
                class_id,
                spectrum,
                count,
                expected,
            } => write!(
                f,
                "warning: class {class_id} has {count} {spectrum} samples, expected {expected}"
            ),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn has_errors(&self) -> bool {
        self.issues.iter().any(Issue::is_error)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for issue in &self.issues {
            writeln!(f, "{issue}")?;
        }
        Ok(())
    }
}

/// Lists every invariant violation of `set`.
pub fn validate(set: &EmbeddingSet) -> ValidationReport {
    let modality = set.modality;
    let issue = |kind| Issue {
        kind,
        expected_modality: modality,
    };
    let mut issues = Vec::new();
    let mut previous: Option<&RecordKey> = None;
    for r in &set.records {
        if previous == Some(&r.key) {
            issues.push(issue(IssueKind::Duplicate { key: r.key.clone() }));
        }
        previous = Some(&r.key);
        if r.modality != modality {
            issues.push(issue(IssueKind::Modality {
                key: r.key.clone(),
                found: r.modality,
            }));
        }
        if r.vector.len() != set.dimension {
            issues.push(issue(IssueKind::Dimension {
                key: r.key.clone(),
                expected: set.dimension,
                found: r.vector.len(),
            }));
        }
        if let Some(component) = r.vector.iter().position(|v| !v.is_finite()) {
            issues.push(issue(IssueKind::NonFinite {
                key: r.key.clone(),
                component,
            }));
        } else if r.vector.iter().all(|&v| v == 0.0) {
            issues.push(issue(IssueKind::ZeroVector { key: r.key.clone() }));
        }
    }

    let counts = set.cell_counts();
    let expected = counts.values().copied().max().unwrap_or(0);
    for ((class, spectrum), &count) in &counts {
        if count != expected {
            issues.push(issue(IssueKind::Ragged {
                class_id: class.to_string(),
                spectrum: *spectrum,
                count,
                expected,
            }));
        }
    }
    ValidationReport { issues }
}

/// Loads and validates an embedding file.
pub fn load_embeddings(path: impl AsRef<Path>, expected: Modality) -> Result<EmbeddingSet> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_embeddings(BufReader::new(file), path, expected)
}

pub fn read_embeddings<R: BufRead>(
    reader: R,
    source: impl AsRef<Path>,
    expected: Modality,
) -> Result<EmbeddingSet> {
    let source = source.as_ref();
    let parse_err = |line: usize, message: String| Error::Parse {
        path: source.to_path_buf(),
        line,
        message,
    };

    let mut seen_header = false;
    let mut dimension: Option<usize> = None;
    let mut records = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let lineno = n + 1;
        let line = line.map_err(|e| Error::io(source, e))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        if !seen_header {
            if line.trim() != HEADER {
                return Err(parse_err(lineno, format!("expected header '{HEADER}'")));
            }
            seen_header = true;
            continue;
        }

        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 6 {
            return Err(parse_err(
                lineno,
                format!("expected at least 6 fields, found {}", fields.len()),
            ));
        }
        let spectrum: Spectrum = fields[2].parse().map_err(|m| parse_err(lineno, m))?;
        let sample_index: u32 = fields[3]
            .parse()
            .ok()
            .filter(|&i| i >= 1)
            .ok_or_else(|| parse_err(lineno, format!("invalid sample index '{}'", fields[3])))?;
        let modality: Modality = fields[4].parse().map_err(|m| parse_err(lineno, m))?;
        let dim: usize = fields[5]
            .parse()
            .map_err(|_| parse_err(lineno, format!("invalid dim '{}'", fields[5])))?;
        let values = &fields[6..];
        if values.len() != dim {
            return Err(parse_err(
                lineno,
                format!("declared dim {dim} but found {} values", values.len()),
            ));
        }
        let key = RecordKey::new(fields[1], spectrum, sample_index);
        let expected_dim = *dimension.get_or_insert(dim);
        if dim != expected_dim {
            return Err(Error::DimensionMismatch {
                key,
                expected: expected_dim,
                found: dim,
            });
        }
        if modality != expected {
            return Err(Error::MixedModality {
                key,
                expected: expected.to_string(),
                found: modality.to_string(),
            });
        }
        let vector = values
            .iter()
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| parse_err(lineno, format!("invalid value '{v}'")))
            })
            .collect::<Result<Vec<f64>>>()?;
        records.push(EmbeddingRecord::new(fields[0], key, modality, vector));
    }
    if !seen_header {
        return Err(parse_err(0, "missing header".to_string()));
    }
    let set = EmbeddingSet::new(expected, records)?;
    Ok(if set.is_empty() {
        EmbeddingSet::empty(expected, dimension.unwrap_or(0))
    } else {
        set
    })
}

/// Writes `set` in canonical order; values use the shortest text that
/// parses back to the identical `f64`.
pub fn write_embeddings<W: Write>(set: &EmbeddingSet, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{HEADER}")?;
    for r in &set.records {
        write!(
            out,
            "{},{},{},{},{},{}",
            r.subject_id,
            r.key.class_id,
            r.key.spectrum,
            r.key.sample_index,
            r.modality,
            r.vector.len()
        )?;
        for v in r.vector.iter() {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    out.flush()
}

pub fn save_embeddings(set: &EmbeddingSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_embeddings(set, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}
