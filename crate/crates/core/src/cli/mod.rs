//! Command-line surface: `synth`, `pairs`, `eval` and `sweep`.

pub mod config;
pub mod run;

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::embedding::{DatasetLayout, Modality};
use crate::error::{Error, Result};
use crate::format::thousands;
use crate::par;
use crate::protocol::{ProtocolKind, Scenario, SyncMode};
use config::{parse_layout, RunConfig, TraitSelection, TrialFiles};

#[derive(Debug, Parser)]
#[command(
    name = "ocular-eval",
    version,
    about = "Cross-spectral ocular verification evaluation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic embedding files (one per trial, trait and spectrum).
    Synth(SynthArgs),
    /// Print genuine/impostor pair counts for a layout.
    Pairs(PairsArgs),
    /// Evaluate trials: split, pair, score, fuse, report.
    Eval(RunArgs),
    /// Sweep the periocular fusion weight over [0, 1].
    Sweep(RunArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// polyu, cross-eyed or CLASSESxSAMPLES[xSPECTRA]
    #[arg(long, default_value = "polyu")]
    pub layout: String,
    #[arg(long = "dim", default_value_t = 256)]
    pub dimension: usize,
    #[arg(long, default_value_t = 1)]
    pub trials: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub class_spread: f64,
    #[arg(long, default_value_t = 2.5)]
    pub iris_noise: f64,
    #[arg(long = "perioc-noise", default_value_t = 2.0)]
    pub periocular_noise: f64,
    #[arg(long, default_value_t = 0.5)]
    pub spectrum_shift: f64,
    /// Traits to generate.
    #[arg(long, value_delimiter = ',', default_value = "iris,perioc")]
    pub traits: Vec<String>,
    #[arg(long, default_value = "synth")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PairsArgs {
    /// polyu, cross-eyed or CLASSESxSAMPLES[xSPECTRA]
    #[arg(long, default_value = "polyu")]
    pub layout: String,
    #[arg(long)]
    pub train_samples: Option<u32>,
    #[arg(long, default_value = "sync")]
    pub sync: SyncMode,
    /// Also enumerate every list and check it against the closed form.
    #[arg(long)]
    pub enumerate: bool,
    /// Export the pair list of --protocol/--scenario to this file.
    #[arg(long)]
    pub export: Option<PathBuf>,
    #[arg(long, default_value = "cw")]
    pub protocol: ProtocolKind,
    #[arg(long, default_value = "cross")]
    pub scenario: Scenario,
}

#[derive(Debug, Args, Default)]
pub struct RunArgs {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub database: Option<String>,
    #[arg(long)]
    pub protocol: Option<ProtocolKind>,
    #[arg(long)]
    pub scenario: Option<Scenario>,
    #[arg(long)]
    pub sync: Option<SyncMode>,
    #[arg(long = "trait")]
    pub trait_selection: Option<TraitSelection>,
    /// Periocular weight of trait fusion.
    #[arg(long)]
    pub wp: Option<f64>,
    /// Fuse the NIR and VIS intra-spectral scores.
    #[arg(long)]
    pub spectral_fusion: bool,
    #[arg(long)]
    pub nir_weight: Option<f64>,
    #[arg(long)]
    pub train_samples: Option<u32>,
    #[arg(long)]
    pub sweep_step: Option<f64>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write per-trial score files.
    #[arg(long)]
    pub export_scores: bool,
    /// Iris embedding files of a single trial (replaces the config's trials).
    #[arg(long, num_args = 1..)]
    pub iris: Vec<PathBuf>,
    /// Periocular embedding files of a single trial.
    #[arg(long = "perioc", num_args = 1..)]
    pub periocular: Vec<PathBuf>,
}

impl RunArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = &self.database {
            cfg.database = v.clone();
        }
        if let Some(v) = self.protocol {
            cfg.protocol = v;
        }
        if let Some(v) = self.scenario {
            cfg.scenario = v;
        }
        if let Some(v) = self.sync {
            cfg.sync = v;
        }
        if let Some(v) = self.trait_selection {
            cfg.trait_selection = v;
        }
        if let Some(v) = self.wp {
            cfg.wp = v;
        }
        if self.spectral_fusion {
            cfg.spectral_fusion = true;
        }
        if self.nir_weight.is_some() {
            cfg.nir_weight = self.nir_weight;
        }
        if self.train_samples.is_some() {
            cfg.train_samples = self.train_samples;
        }
        if let Some(v) = self.sweep_step {
            cfg.sweep_step = v;
        }
        if let Some(v) = self.threads {
            cfg.threads = v;
        }
        if let Some(v) = &self.out {
            cfg.out = v.clone();
        }
        if self.export_scores {
            cfg.export_scores = true;
        }
        if !self.iris.is_empty() || !self.periocular.is_empty() {
            cfg.trials = vec![TrialFiles {
                iris: self.iris.clone(),
                periocular: self.periocular.clone(),
            }];
        }
        Ok(cfg)
    }
}

fn parse_modality(s: &str) -> Result<Modality> {
    match s.trim().to_ascii_lowercase().as_str() {
        "iris" => Ok(Modality::Iris),
        "perioc" | "periocular" => Ok(Modality::Periocular),
        other => Err(Error::Config(format!("unknown trait '{other}'"))),
    }
}

fn layout_label(spec: &str, layout: &DatasetLayout) -> String {
    match config::database_key(spec).as_str() {
        "polyu" => "PolyU".to_string(),
        "cross-eyed" => "Cross-Eyed".to_string(),
        _ => format!(
            "{}x{}x{}",
            layout.num_classes,
            layout.samples_per_class_per_spectrum,
            layout.spectra.len()
        ),
    }
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let layout = parse_layout(&args.layout)?;
    let modalities = args
        .traits
        .iter()
        .map(|t| parse_modality(t))
        .collect::<Result<Vec<_>>>()?;
    let run = run::SynthRun {
        database: config::database_key(&args.layout),
        layout,
        dimension: args.dimension,
        trials: args.trials,
        seed: args.seed,
        class_spread: args.class_spread,
        iris_noise: args.iris_noise,
        periocular_noise: args.periocular_noise,
        spectrum_shift: args.spectrum_shift,
        modalities,
        out: args.out.clone(),
    };
    let files = run::run_synth(&run)?;
    println!(
        "wrote {} embedding files and {}",
        files.len(),
        args.out.join("run.toml").display()
    );
    Ok(())
}

fn cmd_pairs(args: &PairsArgs) -> Result<()> {
    let layout = parse_layout(&args.layout)?;
    let train = args.train_samples.unwrap_or_else(|| {
        config::default_train_samples(&args.layout, layout.samples_per_class_per_spectrum)
    });
    let rows = run::protocol_rows(&layout, args.sync, train)?;
    print!(
        "{}",
        run::format_protocol_table(&layout_label(&args.layout, &layout), &rows)
    );
    if args.enumerate {
        for r in &rows {
            let list = run::enumerate_layout(&layout, r.protocol, r.scenario, args.sync, train)?;
            let ok = list.counts() == (r.genuine, r.impostor);
            println!(
                "enumerated {} {}: {}/{} {}",
                r.protocol.short(),
                r.scenario,
                thousands(list.counts().0),
                thousands(list.counts().1),
                if ok { "ok" } else { "MISMATCH" }
            );
            if !ok {
                return Err(Error::Protocol(format!(
                    "enumeration disagrees with closed form for {} {}",
                    r.protocol.short(),
                    r.scenario
                )));
            }
        }
    }
    if let Some(path) = &args.export {
        let list = run::enumerate_layout(&layout, args.protocol, args.scenario, args.sync, train)?;
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        list.write(BufWriter::new(file)).map_err(|e| Error::io(path, e))?;
        println!(
            "wrote {} pairs to {}",
            thousands(list.len() as u64),
            path.display()
        );
    }
    Ok(())
}

fn cmd_eval(args: &RunArgs) -> Result<()> {
    let cfg = args.resolve()?;
    let summary = par::with_threads(cfg.threads, || run::run_eval_files(&cfg))?;
    print!("{}", summary.table);
    Ok(())
}

fn cmd_sweep(args: &RunArgs) -> Result<()> {
    let cfg = args.resolve()?;
    let sweep = par::with_threads(cfg.threads, || run::run_sweep_files(&cfg))?;
    if let Some(best) = sweep.best() {
        println!(
            "{} grid points written to {}; best w_p = {} (EER {:.2}%)",
            sweep.grid.len(),
            cfg.out.join("sweep.csv").display(),
            crate::format::sig(best.w_p, 6),
            100.0 * best.eer
        );
    }
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Pairs(a) => cmd_pairs(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Sweep(a) => cmd_sweep(a),
    }
}
