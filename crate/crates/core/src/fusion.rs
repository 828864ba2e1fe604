//! Score-level fusion by weighted arithmetic mean, across traits or spectra,
//! and the fusion-weight sweep.

use std::io::Write;
use std::sync::Arc;

use serde::Serialize;

use crate::embedding::Spectrum;
use crate::error::{Error, Result};
use crate::format::sig;
use crate::matcher::{ScoreMeta, ScoreSet};
use crate::metrics;
use crate::par::{self, Execution};
use crate::protocol::{PairList, Scenario};

pub const DEFAULT_SWEEP_STEP: f64 = 0.05;

/// Weights of a two-input fusion; `weight_b = 1 - weight_a`.
#[derive(Clone, Debug, PartialEq)]
pub struct FusionSpec {
    pub weight_a: f64,
    pub weight_b: f64,
    pub role_a: String,
    pub role_b: String,
}

impl FusionSpec {
    pub fn new(weight_a: f64, role_a: impl Into<String>, role_b: impl Into<String>) -> Result<Self> {
        if !(0.0..=1.0).contains(&weight_a) {
            return Err(Error::Fusion(format!(
                "weight must lie in [0, 1], got {weight_a}"
            )));
        }
        Ok(FusionSpec {
            weight_a,
            weight_b: 1.0 - weight_a,
            role_a: role_a.into(),
            role_b: role_b.into(),
        })
    }

    /// Periocular weight `wp`, iris weight `1 - wp`.
    pub fn traits(periocular_weight: f64) -> Result<Self> {
        Self::new(periocular_weight, "PERIOCULAR", "IRIS")
    }

    /// The 0.6 periocular / 0.4 iris default.
    pub fn default_traits() -> Self {
        Self::traits(0.6).expect("valid weight")
    }

    /// NIR weight `w`, VIS weight `1 - w`.
    pub fn spectral(nir_weight: f64) -> Result<Self> {
        Self::new(nir_weight, Spectrum::Nir.as_str(), Spectrum::Vis.as_str())
    }

    /// 0.6 NIR + 0.4 VIS, used for the PolyU-style database.
    pub fn polyu_spectral() -> Self {
        Self::spectral(0.6).expect("valid weight")
    }

    /// 0.6 VIS + 0.4 NIR, used for the Cross-Eyed-style database.
    pub fn cross_eyed_spectral() -> Self {
        Self::spectral(0.4).expect("valid weight")
    }

    fn describe(&self) -> String {
        format!(
            "{}*{}+{}*{}",
            self.role_a,
            sig(self.weight_a, 6),
            self.role_b,
            sig(self.weight_b, 6)
        )
    }
}

fn check_labels(a: &ScoreSet, b: &ScoreSet) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Fusion(format!(
            "score sets differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if let Some(k) = a.labels().iter().zip(b.labels()).position(|(x, y)| x != y) {
        return Err(Error::Fusion(format!("label mismatch at ordinal {k}")));
    }
    Ok(())
}

/// Compares the pair structure of two lists ordinal by ordinal; the
/// spectrum is ignored when `ignore_spectrum` is set.
fn check_structure(a: &Arc<PairList>, b: &Arc<PairList>, ignore_spectrum: bool) -> Result<()> {
    if Arc::ptr_eq(a, b) {
        return Ok(());
    }
    for k in 0..a.len() {
        let (pa, ga, pb, gb) = (a.probe_key(k), a.gallery_key(k), b.probe_key(k), b.gallery_key(k));
        let same = if ignore_spectrum {
            pa.class_id == pb.class_id
                && pa.sample_index == pb.sample_index
                && ga.class_id == gb.class_id
                && ga.sample_index == gb.sample_index
        } else {
            pa == pb && ga == gb
        };
        if !same {
            return Err(Error::Fusion(format!(
                "ordinal {k} compares {pa}-{ga} in one set and {pb}-{gb} in the other"
            )));
        }
    }
    Ok(())
}

fn combine(
    a: &ScoreSet,
    b: &ScoreSet,
    spec: &FusionSpec,
    meta: ScoreMeta,
    pairs: Option<Arc<PairList>>,
) -> ScoreSet {
    let scores = a
        .scores()
        .iter()
        .zip(b.scores())
        .map(|(&x, &y)| {
            // Clamping only removes rounding overshoot; the mean is convex.
            (spec.weight_a * x + spec.weight_b * y).clamp(x.min(y), x.max(y))
        })
        .collect();
    ScoreSet::with_parts(scores, a.labels().to_vec(), meta, pairs)
}

/// `weight_a * a[k] + weight_b * b[k]` for every ordinal `k`.
pub fn fuse_scores(a: &ScoreSet, b: &ScoreSet, spec: &FusionSpec) -> Result<ScoreSet> {
    check_labels(a, b)?;
    if let (Some(pa), Some(pb)) = (a.pairs(), b.pairs()) {
        check_structure(pa, pb, false)?;
    }
    let meta = ScoreMeta {
        scenario: a.meta.scenario,
        sync_mode: a.meta.sync_mode,
        source: spec.describe(),
    };
    Ok(combine(a, b, spec, meta, a.pairs().cloned()))
}

/// Fuses an intra-NIR and an intra-VIS score set; `spec.weight_a` is the
/// NIR weight. Ordinals must compare the same class pair and sample-index
/// pair in both spectra.
pub fn fuse_spectral(nir: &ScoreSet, vis: &ScoreSet, spec: &FusionSpec) -> Result<ScoreSet> {
    let expect = |set: &ScoreSet, want: Scenario| match set.meta.scenario {
        Some(s) if s != want => Err(Error::Fusion(format!(
            "spectral fusion expects a {want} score set, got {s}"
        ))),
        _ => Ok(()),
    };
    expect(nir, Scenario::IntraNir)?;
    expect(vis, Scenario::IntraVis)?;
    check_labels(nir, vis)?;
    if let (Some(pa), Some(pb)) = (nir.pairs(), vis.pairs()) {
        check_structure(pa, pb, true)?;
    }
    let meta = ScoreMeta {
        scenario: None,
        sync_mode: nir.meta.sync_mode,
        source: format!("[{}] {}", nir.meta.source, spec.describe()),
    };
    Ok(combine(nir, vis, spec, meta, None))
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize)]
pub struct SweepPoint {
    pub w_p: f64,
    pub eer: f64,
    pub decidability: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepResult {
    pub grid: Vec<SweepPoint>,
}

impl SweepResult {
    /// Grid point with the lowest EER (first one on ties).
    pub fn best(&self) -> Option<SweepPoint> {
        self.grid
            .iter()
            .copied()
            .reduce(|best, p| if p.eer < best.eer { p } else { best })
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "w_p,eer,decidability")?;
        for p in &self.grid {
            writeln!(
                out,
                "{},{},{}",
                sig(p.w_p, 6),
                sig(p.eer, 6),
                sig(p.decidability, 6)
            )?;
        }
        out.flush()
    }
}

/// Weights `0, step, 2 step, ...` up to and always including 1.
pub fn sweep_grid(step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::Fusion(format!(
            "sweep step must lie in (0, 1], got {step}"
        )));
    }
    let inverse = 1.0 / step;
    let n = inverse.round();
    if (inverse - n).abs() < 1e-9 {
        let n = n as usize;
        return Ok((0..=n).map(|k| k as f64 / n as f64).collect());
    }
    let mut grid: Vec<f64> = (0..)
        .map(|k| k as f64 * step)
        .take_while(|&w| w < 1.0 - 1e-9)
        .collect();
    grid.push(1.0);
    Ok(grid)
}

/// EER and decidability of one score set; the usual sweep metric.
pub fn eer_and_decidability(scores: &ScoreSet) -> Result<(f64, f64)> {
    let (report, _) = metrics::evaluate(scores, Execution::default())?;
    Ok((report.eer, report.decidability))
}

/// Fuses `a` (weight `w_p`) with `b` (weight `1 - w_p`) over the sweep grid
/// and evaluates each point with `metric`. Rows come back ordered by `w_p`.
pub fn weight_sweep<F>(a: &ScoreSet, b: &ScoreSet, step: f64, metric: F) -> Result<SweepResult>
where
    F: Fn(&ScoreSet) -> Result<(f64, f64)> + Sync + Send,
{
    weight_sweep_with(Execution::default(), a, b, step, metric)
}

pub fn weight_sweep_with<F>(
    exec: Execution,
    a: &ScoreSet,
    b: &ScoreSet,
    step: f64,
    metric: F,
) -> Result<SweepResult>
where
    F: Fn(&ScoreSet) -> Result<(f64, f64)> + Sync + Send,
{
    let grid = sweep_grid(step)?;
    check_labels(a, b)?;
    let role_a = a.meta.source.clone();
    let role_b = b.meta.source.clone();
    let points = par::map(exec, &grid, |&w| -> Result<SweepPoint> {
        let spec = FusionSpec::new(w, role_a.clone(), role_b.clone())?;
        let fused = fuse_scores(a, b, &spec)?;
        let (eer, decidability) = metric(&fused)?;
        Ok(SweepPoint {
            w_p: w,
            eer,
            decidability,
        })
    });
    Ok(SweepResult {
        grid: points.into_iter().collect::<Result<Vec<_>>>()?,
    })
}
