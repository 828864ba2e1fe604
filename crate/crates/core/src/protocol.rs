//! Train/test splits and exhaustive genuine/impostor pair enumeration.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embedding::{DatasetLayout, EmbeddingSet, RecordFilter, RecordKey, Spectrum};
use crate::error::{Error, Result};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProtocolKind {
    #[serde(rename = "cw")]
    ClosedWorld,
    #[serde(rename = "ow")]
    OpenWorld,
}

impl ProtocolKind {
    pub fn short(self) -> &'static str {
        match self {
            ProtocolKind::ClosedWorld => "CW",
            ProtocolKind::OpenWorld => "OW",
        }
    }
}

impl FromStr for ProtocolKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cw" | "closed" | "closed-world" => Ok(ProtocolKind::ClosedWorld),
            "ow" | "open" | "open-world" => Ok(ProtocolKind::OpenWorld),
            other => Err(format!("unknown protocol '{other}' (expected cw or ow)")),
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scenario {
    #[serde(rename = "cross")]
    CrossSpectral,
    #[serde(rename = "vis")]
    IntraVis,
    #[serde(rename = "nir")]
    IntraNir,
}

impl Scenario {
    /// The single spectrum of an intra-spectral scenario.
    pub fn intra_spectrum(self) -> Option<Spectrum> {
        match self {
            Scenario::CrossSpectral => None,
            Scenario::IntraVis => Some(Spectrum::Vis),
            Scenario::IntraNir => Some(Spectrum::Nir),
        }
    }

    pub fn intra(spectrum: Spectrum) -> Self {
        match spectrum {
            Spectrum::Nir => Scenario::IntraNir,
            Spectrum::Vis => Scenario::IntraVis,
        }
    }

    pub fn is_cross(self) -> bool {
        self == Scenario::CrossSpectral
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::CrossSpectral => "cross",
            Scenario::IntraVis => "vis",
            Scenario::IntraNir => "nir",
        })
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cross" => Ok(Scenario::CrossSpectral),
            "vis" => Ok(Scenario::IntraVis),
            "nir" => Ok(Scenario::IntraNir),
            other => Err(format!("unknown scenario '{other}' (expected cross, vis or nir)")),
        }
    }
}

/// Whether same-index NIR/VIS captures are the same physical event.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SyncMode {
    #[serde(rename = "sync")]
    Synchronous,
    #[serde(rename = "nonsync")]
    NonSynchronous,
}

impl fmt::Display for SyncMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SyncMode::Synchronous => "sync",
            SyncMode::NonSynchronous => "nonsync",
        })
    }
}

impl FromStr for SyncMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sync" | "synchronous" => Ok(SyncMode::Synchronous),
            "nonsync" | "non-synchronous" => Ok(SyncMode::NonSynchronous),
            other => Err(format!("unknown sync mode '{other}' (expected sync or nonsync)")),
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Label {
    Genuine,
    Impostor,
}

impl Label {
    pub fn is_genuine(self) -> bool {
        self == Label::Genuine
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Genuine => "GENUINE",
            Label::Impostor => "IMPOSTOR",
        }
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "GENUINE" => Ok(Label::Genuine),
            "IMPOSTOR" => Ok(Label::Impostor),
            other => Err(format!("unknown label '{other}'")),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Split {
    pub train: EmbeddingSet,
    pub test: EmbeddingSet,
    pub protocol: ProtocolKind,
}

/// Train on sample indices `1..=train_samples` of every class, test on the
/// rest.
pub fn split_closed_world(set: &EmbeddingSet, train_samples: u32) -> Result<Split> {
    let layout = set.layout()?;
    let samples = layout.samples_per_class_per_spectrum;
    if train_samples < 1 || train_samples as usize >= samples {
        return Err(Error::Protocol(format!(
            "train_samples must be in [1, {}), got {train_samples}",
            samples
        )));
    }
    Ok(Split {
        train: set.filter(&RecordFilter::new().sample_range(1, train_samples)),
        test: set.filter(&RecordFilter::new().sample_range(train_samples + 1, u32::MAX)),
        protocol: ProtocolKind::ClosedWorld,
    })
}

/// Train on the first half of the class ids in lexicographic order, test on
/// the second half.
pub fn split_open_world(set: &EmbeddingSet) -> Result<Split> {
    set.layout()?;
    let classes = set.class_ids();
    if classes.len() % 2 != 0 {
        return Err(Error::Protocol(format!(
            "open-world split needs an even class count, got {}; supply the training \
             classes explicitly",
            classes.len()
        )));
    }
    let train: Vec<&str> = classes[..classes.len() / 2].iter().map(|c| &**c).collect();
    split_open_world_with(set, &train)
}

/// Open-world split with a caller-chosen training class list.
pub fn split_open_world_with<S: AsRef<str>>(set: &EmbeddingSet, train_classes: &[S]) -> Result<Split> {
    let train_filter = RecordFilter::new().class_ids(train_classes.iter().map(AsRef::as_ref));
    let train_ids = train_filter.class_ids.clone().unwrap_or_default();
    let test_ids: Vec<String> = set
        .class_ids()
        .iter()
        .filter(|c| !train_ids.contains(&***c))
        .map(|c| c.to_string())
        .collect();
    Ok(Split {
        train: set.filter(&train_filter),
        test: set.filter(&RecordFilter::new().class_ids(test_ids)),
        protocol: ProtocolKind::OpenWorld,
    })
}

pub fn split(set: &EmbeddingSet, protocol: ProtocolKind, train_samples: u32) -> Result<Split> {
    match protocol {
        ProtocolKind::ClosedWorld => split_closed_world(set, train_samples),
        ProtocolKind::OpenWorld => split_open_world(set),
    }
}

/// One comparison; `probe` and `gallery` index into [`PairList::keys`].
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct ComparisonPair {
    pub probe: u32,
    pub gallery: u32,
    pub label: Label,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairList {
    keys: Vec<RecordKey>,
    pairs: Vec<ComparisonPair>,
    scenario: Scenario,
    sync_mode: SyncMode,
    num_genuine: u64,
    num_impostor: u64,
}

impl PairList {
    /// Index space of the pairs: the record keys of the enumerated set.
    pub fn keys(&self) -> &[RecordKey] {
        &self.keys
    }

    pub fn pairs(&self) -> &[ComparisonPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn scenario(&self) -> Scenario {
        self.scenario
    }

    pub fn sync_mode(&self) -> SyncMode {
        self.sync_mode
    }

    pub fn counts(&self) -> (u64, u64) {
        (self.num_genuine, self.num_impostor)
    }

    pub fn probe_key(&self, ordinal: usize) -> &RecordKey {
        &self.keys[self.pairs[ordinal].probe as usize]
    }

    pub fn gallery_key(&self, ordinal: usize) -> &RecordKey {
        &self.keys[self.pairs[ordinal].gallery as usize]
    }

    pub fn labels(&self) -> Vec<Label> {
        self.pairs.iter().map(|p| p.label).collect()
    }

    /// Writes one line per pair in canonical order.
    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for pair in &self.pairs {
            let p = &self.keys[pair.probe as usize];
            let g = &self.keys[pair.gallery as usize];
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                pair.label.as_str(),
                p.class_id,
                p.spectrum,
                p.sample_index,
                g.class_id,
                g.spectrum,
                g.sample_index
            )?;
        }
        out.flush()
    }
}

/// Enumerates every genuine and impostor comparison of `scenario` over the
/// test set, in canonical order (probe records ascending, then gallery
/// records ascending).
///
/// Cross-spectral pairs are oriented NIR probe to VIS gallery. Same-class
/// cross-spectral pairs keep only probe index < gallery index, or <= when
/// captures are not synchronous.
pub fn enumerate_pairs(test: &EmbeddingSet, scenario: Scenario, sync_mode: SyncMode) -> Result<PairList> {
    let indices_of = |spectrum: Spectrum| -> Result<Vec<u32>> {
        let idx: Vec<u32> = test
            .records()
            .iter()
            .enumerate()
            .filter(|(_, r)| r.spectrum() == spectrum)
            .map(|(i, _)| i as u32)
            .collect();
        if idx.is_empty() {
            Err(Error::MissingSpectrum(spectrum.to_string()))
        } else {
            Ok(idx)
        }
    };
    let records = test.records();
    let mut pairs = Vec::new();
    let (mut genuine, mut impostor) = (0u64, 0u64);

    match scenario.intra_spectrum() {
        Some(spectrum) => {
            let idx = indices_of(spectrum)?;
            let n = idx.len();
            pairs.reserve(n * n.saturating_sub(1) / 2);
            for (a, &probe) in idx.iter().enumerate() {
                let probe_class = records[probe as usize].class_id();
                for &gallery in &idx[a + 1..] {
                    let label = if records[gallery as usize].class_id() == probe_class {
                        genuine += 1;
                        Label::Genuine
                    } else {
                        impostor += 1;
                        Label::Impostor
                    };
                    pairs.push(ComparisonPair {
                        probe,
                        gallery,
                        label,
                    });
                }
            }
        }
        None => {
            let nir = indices_of(Spectrum::Nir)?;
            let vis = indices_of(Spectrum::Vis)?;
            pairs.reserve(nir.len() * vis.len());
            for &probe in &nir {
                let p = &records[probe as usize];
                for &gallery in &vis {
                    let g = &records[gallery as usize];
                    let label = if g.class_id() != p.class_id() {
                        impostor += 1;
                        Label::Impostor
                    } else {
                        let keep = match sync_mode {
                            SyncMode::Synchronous => p.sample_index() < g.sample_index(),
                            SyncMode::NonSynchronous => p.sample_index() <= g.sample_index(),
                        };
                        if !keep {
                            continue;
                        }
                        genuine += 1;
                        Label::Genuine
                    };
                    pairs.push(ComparisonPair {
                        probe,
                        gallery,
                        label,
                    });
                }
            }
        }
    }

    Ok(PairList {
        keys: records.iter().map(|r| r.key.clone()).collect(),
        pairs,
        scenario,
        sync_mode,
        num_genuine: genuine,
        num_impostor: impostor,
    })
}

/// Class count and samples per class per spectrum of the test half.
pub fn test_layout(layout: &DatasetLayout, protocol: ProtocolKind, train_samples: u32) -> Result<(u64, u64)> {
    let classes = layout.num_classes as u64;
    let samples = layout.samples_per_class_per_spectrum as u64;
    match protocol {
        ProtocolKind::ClosedWorld => {
            let t = train_samples as u64;
            if t < 1 || t >= samples {
                return Err(Error::Protocol(format!(
                    "train_samples must be in [1, {samples}), got {train_samples}"
                )));
            }
            Ok((classes, samples - t))
        }
        ProtocolKind::OpenWorld => {
            if classes % 2 != 0 {
                return Err(Error::Protocol(format!(
                    "open-world split needs an even class count, got {classes}"
                )));
            }
            Ok((classes / 2, samples))
        }
    }
}

/// Closed-form genuine/impostor counts of [`enumerate_pairs`] on the test
/// half of a rectangular layout.
pub fn expected_counts(
    layout: &DatasetLayout,
    protocol: ProtocolKind,
    scenario: Scenario,
    sync_mode: SyncMode,
    train_samples: u32,
) -> Result<(u64, u64)> {
    let needed = match scenario.intra_spectrum() {
        Some(s) => vec![s],
        None => Spectrum::ALL.to_vec(),
    };
    for s in &needed {
        if !layout.spectra.contains(s) {
            return Err(Error::MissingSpectrum(s.to_string()));
        }
    }
    let (c, m) = test_layout(layout, protocol, train_samples)?;
    let images = c * m;
    let within = c * m * m.saturating_sub(1) / 2;
    Ok(match (scenario.is_cross(), sync_mode) {
        (false, _) => (within, images * images.saturating_sub(1) / 2 - within),
        (true, SyncMode::Synchronous) => (within, images * images - c * m * m),
        (true, SyncMode::NonSynchronous) => (c * m * (m + 1) / 2, images * images - c * m * m),
    })
}

/// One row of the protocol table: image/class totals and pair counts.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ProtocolRow {
    pub protocol: ProtocolKind,
    pub scenario: Scenario,
    pub train_images: u64,
    pub train_classes: u64,
    pub test_images: u64,
    pub test_classes: u64,
    pub genuine: u64,
    pub impostor: u64,
}

impl ProtocolRow {
    pub fn compute(
        layout: &DatasetLayout,
        protocol: ProtocolKind,
        scenario: Scenario,
        sync_mode: SyncMode,
        train_samples: u32,
    ) -> Result<Self> {
        let (genuine, impostor) = expected_counts(layout, protocol, scenario, sync_mode, train_samples)?;
        let (test_classes, m) = test_layout(layout, protocol, train_samples)?;
        let spectra = layout.spectra.len() as u64;
        let samples = layout.samples_per_class_per_spectrum as u64;
        let (train_classes, train_per_class) = match protocol {
            ProtocolKind::ClosedWorld => (layout.num_classes as u64, train_samples as u64),
            ProtocolKind::OpenWorld => (layout.num_classes as u64 / 2, samples),
        };
        let test_spectra = if scenario.is_cross() { spectra } else { 1 };
        Ok(ProtocolRow {
            protocol,
            scenario,
            train_images: train_classes * train_per_class * spectra,
            train_classes,
            test_images: test_classes * m * test_spectra,
            test_classes,
            genuine,
            impostor,
        })
    }
}
