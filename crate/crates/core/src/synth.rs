//! Synthetic embedding sets with controllable class separation, plus the
//! closed-form Gaussian score oracle.
//!
//! Each class draws an isotropic centroid, each (class, spectrum) cell adds
//! a fixed offset of length `spectrum_shift` and each sample adds isotropic
//! noise. Every draw comes from its own ChaCha stream keyed on
//! (seed, trait, class ordinal, spectrum, sample index), so any record can be
//! regenerated alone and generation order never matters.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as NormalDist};

use crate::embedding::{DatasetLayout, EmbeddingRecord, EmbeddingSet, Modality, RecordKey, Spectrum};
use crate::error::{Error, Result};
use crate::matcher::ScoreSet;
use crate::par::{self, Execution};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub layout: DatasetLayout,
    pub dimension: usize,
    pub class_spread: f64,
    pub sample_noise: f64,
    pub spectrum_shift: f64,
    pub seed: u64,
}

impl SynthConfig {
    pub fn new(layout: DatasetLayout, dimension: usize, seed: u64) -> Self {
        SynthConfig {
            layout,
            dimension,
            class_spread: 1.0,
            sample_noise: 0.5,
            spectrum_shift: 0.5,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension < 2 {
            return Err(Error::Synth(format!(
                "dimension must be >= 2, got {}",
                self.dimension
            )));
        }
        for (name, v) in [
            ("class_spread", self.class_spread),
            ("sample_noise", self.sample_noise),
            ("spectrum_shift", self.spectrum_shift),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Synth(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if self.class_spread == 0.0 && self.sample_noise == 0.0 && self.spectrum_shift == 0.0 {
            return Err(Error::Synth(
                "all spreads are zero, vectors would be all-zero".to_string(),
            ));
        }
        if self.layout.spectra.is_empty() || self.layout.num_classes == 0 {
            return Err(Error::Synth("layout has no classes or no spectra".to_string()));
        }
        Ok(())
    }
}

/// Subject and class ids for class ordinal `c`: consecutive ordinals are the
/// left and right eye of one subject.
pub fn class_name(c: usize, num_classes: usize) -> (String, String) {
    let width = (num_classes.div_ceil(2).max(1) - 1).to_string().len().max(4);
    let subject = format!("s{:0width$}", c / 2);
    let eye = if c % 2 == 0 { 'L' } else { 'R' };
    (subject.clone(), format!("{subject}{eye}"))
}

const STREAM_CENTROID: u64 = 0;
const STREAM_OFFSET: u64 = 1;
const STREAM_SAMPLE: u64 = 2;

fn stream(
    seed: u64,
    modality: Modality,
    class: usize,
    kind: u64,
    spectrum: Option<Spectrum>,
    index: u32,
) -> ChaCha8Rng {
    let spectrum_code = match spectrum {
        None => 0u64,
        Some(Spectrum::Nir) => 1,
        Some(Spectrum::Vis) => 2,
    };
    let modality_code = match modality {
        Modality::Iris => 0u64,
        Modality::Periocular => 1,
    };
    let words = [
        seed,
        class as u64,
        (modality_code << 32) | (kind << 8) | spectrum_code,
        index as u64,
    ];
    let mut key = [0u8; 32];
    for (chunk, w) in key.chunks_exact_mut(8).zip(words) {
        chunk.copy_from_slice(&w.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

fn gaussian_vector(rng: &mut impl Rng, dimension: usize, std: f64) -> Vec<f64> {
    (0..dimension)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            std * z
        })
        .collect::<Vec<f64>>()
}

fn class_records(config: &SynthConfig, modality: Modality, c: usize) -> Vec<EmbeddingRecord> {
    let d = config.dimension;
    let (subject, class_id) = class_name(c, config.layout.num_classes);
    let centroid = gaussian_vector(
        &mut stream(config.seed, modality, c, STREAM_CENTROID, None, 0),
        d,
        config.class_spread,
    );
    let mut records = Vec::new();
    for &spectrum in &config.layout.spectra {
        let mut direction = gaussian_vector(
            &mut stream(config.seed, modality, c, STREAM_OFFSET, Some(spectrum), 0),
            d,
            1.0,
        );
        let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
        for v in &mut direction {
            *v *= config.spectrum_shift / norm;
        }
        for index in 1..=config.layout.samples_per_class_per_spectrum as u32 {
            let noise = gaussian_vector(
                &mut stream(config.seed, modality, c, STREAM_SAMPLE, Some(spectrum), index),
                d,
                config.sample_noise,
            );
            let vector: Vec<f64> = (0..d).map(|j| centroid[j] + direction[j] + noise[j]).collect();
            records.push(EmbeddingRecord::new(
                subject.as_str(),
                RecordKey::new(class_id.as_str(), spectrum, index),
                modality,
                vector,
            ));
        }
    }
    records
}

/// One synthetic set for `modality` covering every spectrum of the layout.
pub fn generate(config: &SynthConfig, modality: Modality) -> Result<EmbeddingSet> {
    generate_with(Execution::default(), config, modality)
}

pub fn generate_with(exec: Execution, config: &SynthConfig, modality: Modality) -> Result<EmbeddingSet> {
    config.validate()?;
    let classes: Vec<usize> = (0..config.layout.num_classes).collect();
    let records = par::map(exec, &classes, |&c| class_records(config, modality, c))
        .into_iter()
        .flatten()
        .collect();
    EmbeddingSet::new(modality, records)
}

/// Seed of trial `trial` derived from a base seed (splitmix64 finalizer).
pub fn trial_seed(seed: u64, trial: usize) -> u64 {
    let mut z = seed.wrapping_add((trial as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    NormalDist::standard().cdf(x)
}

/// EER and decidability of equal-variance Gaussian genuine/impostor
/// distance distributions.
pub fn gaussian_score_oracle(mu_genuine: f64, mu_impostor: f64, sigma: f64) -> Result<(f64, f64)> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::Synth(format!("sigma must be > 0, got {sigma}")));
    }
    let gap = (mu_impostor - mu_genuine).abs();
    Ok((normal_cdf(-gap / (2.0 * sigma)), gap / sigma))
}

/// Gaussian genuine and impostor distance samples.
pub fn gaussian_scores(
    n_genuine: usize,
    n_impostor: usize,
    mu_genuine: f64,
    mu_impostor: f64,
    sigma: f64,
    seed: u64,
) -> Result<ScoreSet> {
    let bad = |e: rand_distr::NormalError| Error::Synth(e.to_string());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = Normal::new(mu_genuine, sigma).map_err(bad)?;
    let i = Normal::new(mu_impostor, sigma).map_err(bad)?;
    let genuine: Vec<f64> = (0..n_genuine).map(|_| g.sample(&mut rng)).collect();
    let impostor: Vec<f64> = (0..n_impostor).map(|_| i.sample(&mut rng)).collect();
    Ok(ScoreSet::from_partitions(&genuine, &impostor))
}
