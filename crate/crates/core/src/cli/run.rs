//! End-to-end pipelines behind the `eval`, `sweep`, `pairs` and `synth`
//! subcommands. Everything written here is a pure function of the config and
//! the input sets, so reruns produce byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;

use super::config::{RunConfig, TraitSelection, TrialFiles};
use crate::embedding::{
    load_embeddings, save_embeddings, DatasetLayout, EmbeddingSet, Modality, RecordFilter,
};
use crate::error::{Error, Result};
use crate::format::{round_sig, thousands};
use crate::fusion::{self, FusionSpec, SweepPoint, SweepResult};
use crate::matcher::{score_pairs, ScoreSet};
use crate::metrics::{self, aggregate_trials, write_roc_csv, ErrorCurve, EvalReport, Stats, TrialAggregate};
use crate::par::Execution;
use crate::protocol::{self, enumerate_pairs, PairList, ProtocolKind, ProtocolRow, Scenario, SyncMode};
use crate::synth::{self, SynthConfig};

/// Embedding sets of one trial, one per trait.
#[derive(Clone, Debug, Default)]
pub struct TrialInput {
    pub iris: Option<EmbeddingSet>,
    pub periocular: Option<EmbeddingSet>,
}

fn load_merged(paths: &[PathBuf], modality: Modality) -> Result<Option<EmbeddingSet>> {
    let mut merged: Option<EmbeddingSet> = None;
    for p in paths {
        let set = load_embeddings(p, modality)?;
        merged = Some(match merged {
            None => set,
            Some(m) => m.merge(&set)?,
        });
    }
    Ok(merged)
}

impl TrialInput {
    /// Loads the files of the traits `selection` needs.
    pub fn load(files: &TrialFiles, selection: TraitSelection) -> Result<Self> {
        let iris = if selection != TraitSelection::Periocular {
            load_merged(&files.iris, Modality::Iris)?
        } else {
            None
        };
        let periocular = if selection != TraitSelection::Iris {
            load_merged(&files.periocular, Modality::Periocular)?
        } else {
            None
        };
        Ok(TrialInput { iris, periocular })
    }

    fn get(&self, modality: Modality) -> Result<&EmbeddingSet> {
        match modality {
            Modality::Iris => self.iris.as_ref(),
            Modality::Periocular => self.periocular.as_ref(),
        }
        .ok_or_else(|| Error::Config(format!("trial has no {modality} embeddings")))
    }
}

/// Pair lists of one trial, enumerated once and shared by both traits.
enum TrialPairs {
    Single(Arc<PairList>),
    Spectral { nir: Arc<PairList>, vis: Arc<PairList> },
}

impl TrialPairs {
    fn counts(&self) -> (u64, u64) {
        match self {
            TrialPairs::Single(list) => list.counts(),
            TrialPairs::Spectral { nir, .. } => nir.counts(),
        }
    }
}

fn test_half(cfg: &RunConfig, set: &EmbeddingSet) -> Result<EmbeddingSet> {
    let layout = set.layout()?;
    let train = cfg.train_samples(layout.samples_per_class_per_spectrum);
    Ok(protocol::split(set, cfg.protocol, train)?.test)
}

fn build_pairs(cfg: &RunConfig, test: &EmbeddingSet) -> Result<TrialPairs> {
    if cfg.spectral_fusion {
        Ok(TrialPairs::Spectral {
            nir: Arc::new(enumerate_pairs(test, Scenario::IntraNir, cfg.sync)?),
            vis: Arc::new(enumerate_pairs(test, Scenario::IntraVis, cfg.sync)?),
        })
    } else {
        Ok(TrialPairs::Single(Arc::new(enumerate_pairs(
            test,
            cfg.scenario,
            cfg.sync,
        )?)))
    }
}

fn score_trait(cfg: &RunConfig, test: &EmbeddingSet, pairs: &TrialPairs) -> Result<ScoreSet> {
    match pairs {
        TrialPairs::Single(list) => score_pairs(test, test, list),
        TrialPairs::Spectral { nir, vis } => fusion::fuse_spectral(
            &score_pairs(test, test, nir)?,
            &score_pairs(test, test, vis)?,
            &FusionSpec::spectral(cfg.nir_weight())?,
        ),
    }
}

/// Per-trait scores of one trial plus the pair counts they came from.
#[derive(Clone, Debug)]
pub struct TraitScores {
    pub iris: Option<ScoreSet>,
    pub periocular: Option<ScoreSet>,
    pub counts: (u64, u64),
}

pub fn trait_scores(cfg: &RunConfig, input: &TrialInput, modalities: &[Modality]) -> Result<TraitScores> {
    let mut pairs: Option<TrialPairs> = None;
    let mut out = TraitScores {
        iris: None,
        periocular: None,
        counts: (0, 0),
    };
    for &modality in modalities {
        let test = test_half(cfg, input.get(modality)?)?;
        if pairs.is_none() {
            pairs = Some(build_pairs(cfg, &test)?);
        }
        let pairs = pairs.as_ref().expect("built above");
        out.counts = pairs.counts();
        let scores = score_trait(cfg, &test, pairs)?;
        match modality {
            Modality::Iris => out.iris = Some(scores),
            Modality::Periocular => out.periocular = Some(scores),
        }
    }
    Ok(out)
}

fn modalities_for(selection: TraitSelection) -> &'static [Modality] {
    match selection {
        TraitSelection::Iris => &[Modality::Iris],
        TraitSelection::Periocular => &[Modality::Periocular],
        TraitSelection::Fusion => &[Modality::Periocular, Modality::Iris],
    }
}

#[derive(Clone, Debug)]
pub struct TrialResult {
    pub report: EvalReport,
    pub curve: ErrorCurve,
    pub counts: (u64, u64),
    pub scores: ScoreSet,
}

/// Split, pair, score, fuse and evaluate one trial.
pub fn evaluate_trial(cfg: &RunConfig, input: &TrialInput) -> Result<TrialResult> {
    let scores = trait_scores(cfg, input, modalities_for(cfg.trait_selection))?;
    let final_scores = match cfg.trait_selection {
        TraitSelection::Iris => scores.iris.expect("iris scored"),
        TraitSelection::Periocular => scores.periocular.expect("periocular scored"),
        TraitSelection::Fusion => fusion::fuse_scores(
            scores.periocular.as_ref().expect("periocular scored"),
            scores.iris.as_ref().expect("iris scored"),
            &FusionSpec::traits(cfg.wp)?,
        )?,
    };
    let (report, curve) = metrics::evaluate(&final_scores, Execution::default())?;
    Ok(TrialResult {
        report,
        curve,
        counts: scores.counts,
        scores: final_scores,
    })
}

#[derive(Serialize)]
struct ReportFile<'a> {
    database: &'a str,
    protocol: ProtocolKind,
    scenario: Scenario,
    sync: SyncMode,
    #[serde(rename = "trait")]
    trait_selection: TraitSelection,
    wp: f64,
    spectral_fusion: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    nir_weight: Option<f64>,
    genuine_pairs: u64,
    impostor_pairs: u64,
    eer: f64,
    eer_threshold: f64,
    decidability: f64,
    genuine_stats: Stats,
    impostor_stats: Stats,
}

#[derive(Serialize)]
struct AggregateFile<'a> {
    database: &'a str,
    genuine_pairs: u64,
    impostor_pairs: u64,
    #[serde(flatten)]
    aggregate: TrialAggregate,
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn with_file(path: &Path, f: impl FnOnce(BufWriter<fs::File>) -> std::io::Result<()>) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f(BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn json(value: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

fn write_trial(cfg: &RunConfig, dir: &Path, result: &TrialResult) -> Result<()> {
    create_dir(dir)?;
    let r = result.report.rounded();
    let file = ReportFile {
        database: &cfg.database,
        protocol: cfg.protocol,
        scenario: cfg.scenario,
        sync: cfg.sync,
        trait_selection: cfg.trait_selection,
        wp: cfg.wp,
        spectral_fusion: cfg.spectral_fusion,
        nir_weight: cfg.spectral_fusion.then(|| cfg.nir_weight()),
        genuine_pairs: result.counts.0,
        impostor_pairs: result.counts.1,
        eer: r.eer,
        eer_threshold: r.eer_threshold,
        decidability: r.decidability,
        genuine_stats: r.genuine_stats,
        impostor_stats: r.impostor_stats,
    };
    write_text(&dir.join("report.json"), &json(&file))?;
    with_file(&dir.join("curve.csv"), |w| {
        result.curve.downsample(metrics::EXPORT_CURVE_POINTS).write_csv(w)
    })?;
    with_file(&dir.join("roc.csv"), |w| write_roc_csv(&result.report.roc, w))?;
    if cfg.export_scores {
        with_file(&dir.join("scores.csv"), |w| result.scores.write(w))?;
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct EvalSummary {
    pub reports: Vec<EvalReport>,
    pub counts: (u64, u64),
    pub aggregate: TrialAggregate,
    /// Human-readable table, also written to `summary.txt`.
    pub table: String,
}

fn describe_run(cfg: &RunConfig) -> String {
    let mut s = format!(
        "database: {}  protocol: {}  scenario: {}  sync: {}  trait: {}",
        cfg.database,
        cfg.protocol.short(),
        cfg.scenario,
        cfg.sync,
        cfg.trait_selection
    );
    if cfg.trait_selection == TraitSelection::Fusion {
        let _ = write!(
            s,
            " (wp={}, wi={})",
            round_sig(cfg.wp, 6),
            round_sig(1.0 - cfg.wp, 6)
        );
    }
    if cfg.spectral_fusion {
        let w = cfg.nir_weight();
        let _ = write!(
            s,
            "  spectral fusion: NIR {} + VIS {}",
            round_sig(w, 6),
            round_sig(1.0 - w, 6)
        );
    }
    s
}

/// Evaluates every trial and writes per-trial and aggregate files to
/// `cfg.out`. `load` supplies the input of trial `k`.
pub fn run_eval<F>(cfg: &RunConfig, num_trials: usize, mut load: F) -> Result<EvalSummary>
where
    F: FnMut(usize) -> Result<TrialInput>,
{
    if num_trials == 0 {
        return Err(Error::Config("trial list is empty".to_string()));
    }
    create_dir(&cfg.out)?;
    let mut reports = Vec::with_capacity(num_trials);
    let mut counts = (0, 0);
    for k in 0..num_trials {
        let input = load(k)?;
        let result = evaluate_trial(cfg, &input)?;
        write_trial(cfg, &cfg.out.join(format!("trial_{k:02}")), &result)?;
        counts = result.counts;
        reports.push(result.report);
    }
    let aggregate = aggregate_trials(&reports)?;
    let rounded = TrialAggregate {
        mean_eer: round_sig(aggregate.mean_eer, 6),
        std_eer: round_sig(aggregate.std_eer, 6),
        mean_decidability: round_sig(aggregate.mean_decidability, 6),
        std_decidability: round_sig(aggregate.std_decidability, 6),
        num_trials: aggregate.num_trials,
    };
    write_text(
        &cfg.out.join("aggregate.json"),
        &json(&AggregateFile {
            database: &cfg.database,
            genuine_pairs: counts.0,
            impostor_pairs: counts.1,
            aggregate: rounded,
        }),
    )?;

    let mut table = describe_run(cfg);
    let _ = writeln!(table);
    let _ = writeln!(
        table,
        "pairs: {} genuine / {} impostor",
        thousands(counts.0),
        thousands(counts.1)
    );
    let _ = writeln!(table, "trials: {}", aggregate.num_trials);
    let _ = writeln!(
        table,
        "EER (%)       {:.2} ± {:.2}",
        100.0 * aggregate.mean_eer,
        100.0 * aggregate.std_eer
    );
    let _ = writeln!(
        table,
        "Decidability  {:.2} ± {:.2}",
        aggregate.mean_decidability, aggregate.std_decidability
    );
    write_text(&cfg.out.join("summary.txt"), &table)?;
    Ok(EvalSummary {
        reports,
        counts,
        aggregate,
        table,
    })
}

/// Evaluates trial files listed in the config.
pub fn run_eval_files(cfg: &RunConfig) -> Result<EvalSummary> {
    cfg.validate()?;
    run_eval(cfg, cfg.trials.len(), |k| {
        TrialInput::load(&cfg.trials[k], cfg.trait_selection)
    })
}

/// Periocular-weight sweep, averaged over trials, written to `sweep.csv`.
pub fn run_sweep<F>(cfg: &RunConfig, num_trials: usize, mut load: F) -> Result<SweepResult>
where
    F: FnMut(usize) -> Result<TrialInput>,
{
    if num_trials == 0 {
        return Err(Error::Config("trial list is empty".to_string()));
    }
    create_dir(&cfg.out)?;
    let mut sums: Vec<SweepPoint> = Vec::new();
    for k in 0..num_trials {
        let input = load(k)?;
        let scores = trait_scores(cfg, &input, &[Modality::Periocular, Modality::Iris])?;
        let sweep = fusion::weight_sweep(
            scores.periocular.as_ref().expect("periocular scored"),
            scores.iris.as_ref().expect("iris scored"),
            cfg.sweep_step,
            fusion::eer_and_decidability,
        )?;
        if sums.is_empty() {
            sums = sweep.grid;
        } else {
            for (acc, p) in sums.iter_mut().zip(sweep.grid) {
                acc.eer += p.eer;
                acc.decidability += p.decidability;
            }
        }
    }
    let n = num_trials as f64;
    let result = SweepResult {
        grid: sums
            .into_iter()
            .map(|p| SweepPoint {
                w_p: p.w_p,
                eer: p.eer / n,
                decidability: p.decidability / n,
            })
            .collect(),
    };
    with_file(&cfg.out.join("sweep.csv"), |w| result.write_csv(w))?;
    Ok(result)
}

pub fn run_sweep_files(cfg: &RunConfig) -> Result<SweepResult> {
    let mut cfg = cfg.clone();
    cfg.trait_selection = TraitSelection::Fusion;
    cfg.validate()?;
    run_sweep(&cfg, cfg.trials.len(), |k| {
        TrialInput::load(&cfg.trials[k], TraitSelection::Fusion)
    })
}

/// The four protocol rows (CW/OW x cross/intra) of a layout.
pub fn protocol_rows(layout: &DatasetLayout, sync: SyncMode, train_samples: u32) -> Result<Vec<ProtocolRow>> {
    let intra = Scenario::intra(layout.spectra[0]);
    let mut rows = Vec::new();
    for protocol in [ProtocolKind::ClosedWorld, ProtocolKind::OpenWorld] {
        for scenario in [Scenario::CrossSpectral, intra] {
            rows.push(ProtocolRow::compute(
                layout,
                protocol,
                scenario,
                sync,
                train_samples,
            )?);
        }
    }
    Ok(rows)
}

pub fn format_protocol_table(database: &str, rows: &[ProtocolRow]) -> String {
    let mut out = format!(
        "{:<12} {:<8} {:<9} {:<32} {}\n",
        "Database", "Protocol", "Scenario", "Train/Test Images(Classes)", "Gen./Imp. pairs"
    );
    for r in rows {
        let images = format!(
            "{}({})/{}({})",
            thousands(r.train_images),
            thousands(r.train_classes),
            thousands(r.test_images),
            thousands(r.test_classes)
        );
        let scenario = if r.scenario.is_cross() { "Cross" } else { "Intra" };
        let _ = writeln!(
            out,
            "{:<12} {:<8} {:<9} {:<32} {}/{}",
            database,
            r.protocol.short(),
            scenario,
            images,
            thousands(r.genuine),
            thousands(r.impostor)
        );
    }
    out
}

/// Minimal set with the layout's keys and tiny distinct vectors, used to
/// enumerate pairs without real embeddings.
pub fn skeleton_set(layout: &DatasetLayout) -> Result<EmbeddingSet> {
    let cfg = SynthConfig {
        layout: layout.clone(),
        dimension: 2,
        class_spread: 1.0,
        sample_noise: 0.1,
        spectrum_shift: 0.1,
        seed: 0,
    };
    synth::generate(&cfg, Modality::Iris)
}

/// Enumerates `scenario` on the test half of a skeleton set.
pub fn enumerate_layout(
    layout: &DatasetLayout,
    protocol: ProtocolKind,
    scenario: Scenario,
    sync: SyncMode,
    train_samples: u32,
) -> Result<PairList> {
    let set = skeleton_set(layout)?;
    let test = protocol::split(&set, protocol, train_samples)?.test;
    enumerate_pairs(&test, scenario, sync)
}

/// Options of the `synth` subcommand.
#[derive(Clone, Debug)]
pub struct SynthRun {
    pub database: String,
    pub layout: DatasetLayout,
    pub dimension: usize,
    pub trials: usize,
    pub seed: u64,
    pub class_spread: f64,
    pub iris_noise: f64,
    pub periocular_noise: f64,
    pub spectrum_shift: f64,
    pub modalities: Vec<Modality>,
    pub out: PathBuf,
}

impl SynthRun {
    pub fn config(&self, trial: usize, modality: Modality) -> SynthConfig {
        SynthConfig {
            layout: self.layout.clone(),
            dimension: self.dimension,
            class_spread: self.class_spread,
            sample_noise: match modality {
                Modality::Iris => self.iris_noise,
                Modality::Periocular => self.periocular_noise,
            },
            spectrum_shift: self.spectrum_shift,
            seed: synth::trial_seed(self.seed, trial),
        }
    }

    /// In-memory input of one trial, identical to what [`run_synth`] writes.
    pub fn trial_input(&self, trial: usize) -> Result<TrialInput> {
        let mut input = TrialInput::default();
        for &m in &self.modalities {
            let set = synth::generate(&self.config(trial, m), m)?;
            match m {
                Modality::Iris => input.iris = Some(set),
                Modality::Periocular => input.periocular = Some(set),
            }
        }
        Ok(input)
    }
}

/// Writes one embedding file per (trial, trait, spectrum) plus a `run.toml`
/// that lists them. Returns the written embedding files.
pub fn run_synth(run: &SynthRun) -> Result<Vec<PathBuf>> {
    if run.trials == 0 {
        return Err(Error::Config("trials must be >= 1".to_string()));
    }
    create_dir(&run.out)?;
    let mut written = Vec::new();
    let mut trials = Vec::new();
    for k in 0..run.trials {
        let input = run.trial_input(k)?;
        let mut files = TrialFiles::default();
        for &m in &run.modalities {
            let set = input.get(m)?;
            for &spectrum in &run.layout.spectra {
                let name = format!(
                    "trial_{k:02}_{}_{}.csv",
                    m.as_str().to_ascii_lowercase(),
                    spectrum.as_str().to_ascii_lowercase()
                );
                let path = run.out.join(&name);
                save_embeddings(&set.filter(&RecordFilter::new().spectrum(spectrum)), &path)?;
                written.push(path);
                match m {
                    Modality::Iris => files.iris.push(PathBuf::from(name)),
                    Modality::Periocular => files.periocular.push(PathBuf::from(name)),
                }
            }
        }
        trials.push(files);
    }
    let both = run.modalities.contains(&Modality::Iris) && run.modalities.contains(&Modality::Periocular);
    let manifest = RunConfig {
        database: run.database.clone(),
        trait_selection: if both {
            TraitSelection::Fusion
        } else if run.modalities.contains(&Modality::Iris) {
            TraitSelection::Iris
        } else {
            TraitSelection::Periocular
        },
        out: PathBuf::from("eval"),
        trials,
        ..RunConfig::default()
    };
    let mut text = String::new();
    for k in 0..run.trials {
        let _ = writeln!(text, "# trial {k}: seed {}", synth::trial_seed(run.seed, k));
    }
    text.push_str(&manifest.to_toml());
    write_text(&run.out.join("run.toml"), &text)?;
    Ok(written)
}
