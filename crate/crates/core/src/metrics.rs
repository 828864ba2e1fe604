//! FAR/FRR curves, equal error rate, decidability, ROC sampling and
//! multi-trial aggregation.
//!
//! Scores are distances: a comparison is accepted iff `score <= threshold`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::{round_sig, sig};
use crate::matcher::ScoreSet;
use crate::par::{self, Execution};

/// Points kept in exported curve files.
pub const EXPORT_CURVE_POINTS: usize = 1000;
/// ROC points stored in an [`EvalReport`].
pub const REPORT_ROC_POINTS: usize = 101;

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorCurve {
    pub thresholds: Vec<f64>,
    pub far: Vec<f64>,
    pub frr: Vec<f64>,
}

impl ErrorCurve {
    pub fn len(&self) -> usize {
        self.thresholds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thresholds.is_empty()
    }

    /// Evenly spaced subset (by index) keeping both ends.
    pub fn downsample(&self, max_points: usize) -> ErrorCurve {
        if self.len() <= max_points || max_points < 2 {
            return self.clone();
        }
        let last = self.len() - 1;
        let idx: Vec<usize> = (0..max_points).map(|i| i * last / (max_points - 1)).collect();
        ErrorCurve {
            thresholds: idx.iter().map(|&i| self.thresholds[i]).collect(),
            far: idx.iter().map(|&i| self.far[i]).collect(),
            frr: idx.iter().map(|&i| self.frr[i]).collect(),
        }
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "threshold,far,frr")?;
        for i in 0..self.len() {
            writeln!(
                out,
                "{},{},{}",
                sig(self.thresholds[i], 6),
                sig(self.far[i], 6),
                sig(self.frr[i], 6)
            )?;
        }
        out.flush()
    }
}

/// Genuine and impostor scores, each sorted ascending.
#[derive(Clone, Debug)]
pub struct SortedScores {
    pub genuine: Vec<f64>,
    pub impostor: Vec<f64>,
}

impl SortedScores {
    pub fn new(scores: &ScoreSet, exec: Execution) -> Result<Self> {
        let mut genuine: Vec<f64> = scores.genuine().collect();
        let mut impostor: Vec<f64> = scores.impostor().collect();
        if genuine.is_empty() || impostor.is_empty() {
            return Err(Error::Metrics(format!(
                "need genuine and impostor scores, got {} and {}",
                genuine.len(),
                impostor.len()
            )));
        }
        if let Some(bad) = genuine.iter().chain(&impostor).find(|s| !s.is_finite()) {
            return Err(Error::Metrics(format!("non-finite score {bad}")));
        }
        par::sort_f64(exec, &mut genuine);
        par::sort_f64(exec, &mut impostor);
        Ok(SortedScores { genuine, impostor })
    }

    /// (FAR, FRR) at one threshold.
    pub fn rates_at(&self, threshold: f64) -> (f64, f64) {
        let accepted_impostors = self.impostor.partition_point(|&s| s <= threshold);
        let accepted_genuine = self.genuine.partition_point(|&s| s <= threshold);
        (
            accepted_impostors as f64 / self.impostor.len() as f64,
            (self.genuine.len() - accepted_genuine) as f64 / self.genuine.len() as f64,
        )
    }

    /// Exact curve over the distinct observed scores.
    pub fn error_curve(&self) -> ErrorCurve {
        let (g, i) = (&self.genuine, &self.impostor);
        let (ng, ni) = (g.len() as f64, i.len() as f64);
        let mut curve = ErrorCurve {
            thresholds: Vec::new(),
            far: Vec::new(),
            frr: Vec::new(),
        };
        let (mut a, mut b) = (0usize, 0usize);
        while a < g.len() || b < i.len() {
            let t = match (g.get(a), i.get(b)) {
                (Some(&x), Some(&y)) => x.min(y),
                (Some(&x), None) => x,
                (None, Some(&y)) => y,
                (None, None) => unreachable!(),
            };
            while a < g.len() && g[a] <= t {
                a += 1;
            }
            while b < i.len() && i[b] <= t {
                b += 1;
            }
            curve.thresholds.push(t);
            curve.far.push(b as f64 / ni);
            curve.frr.push((g.len() - a) as f64 / ng);
        }
        curve
    }

    pub fn eer(&self) -> Eer {
        eer_from_curve(&self.error_curve())
    }

    pub fn decidability(&self) -> Result<f64> {
        decidability_of(&self.genuine, &self.impostor)
    }

    pub fn roc_points(&self, num_points: usize) -> Result<Vec<RocPoint>> {
        if num_points < 2 {
            return Err(Error::Metrics(format!(
                "num_points must be >= 2, got {num_points}"
            )));
        }
        let lo = self.genuine[0].min(self.impostor[0]);
        let hi = self.genuine[self.genuine.len() - 1].max(self.impostor[self.impostor.len() - 1]);
        Ok((0..num_points)
            .map(|k| {
                let t = if k == num_points - 1 {
                    hi
                } else {
                    lo + (hi - lo) * k as f64 / (num_points - 1) as f64
                };
                let (far, frr) = self.rates_at(t);
                RocPoint { far, tar: 1.0 - frr }
            })
            .collect())
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Eer {
    pub rate: f64,
    pub threshold: f64,
}

/// Crossing of FAR and FRR. The curve starts from the implicit point
/// FAR = 0, FRR = 1 below every score; between the two thresholds where
/// FAR - FRR changes sign both rates are interpolated linearly.
fn eer_from_curve(curve: &ErrorCurve) -> Eer {
    let mut prev = (0.0, 1.0, curve.thresholds[0]);
    for k in 0..curve.len() {
        let (far, frr, t) = (curve.far[k], curve.frr[k], curve.thresholds[k]);
        let diff = far - frr;
        if diff == 0.0 {
            return Eer {
                rate: far,
                threshold: t,
            };
        }
        if diff > 0.0 {
            let prev_diff = prev.0 - prev.1;
            let alpha = -prev_diff / (diff - prev_diff);
            return Eer {
                rate: prev.0 + alpha * (far - prev.0),
                threshold: prev.2 + alpha * (t - prev.2),
            };
        }
        prev = (far, frr, t);
    }
    // Last threshold accepts everything, so FAR = 1 and FRR = 0 there.
    unreachable!("FAR - FRR is positive at the largest threshold")
}

pub fn error_curve(scores: &ScoreSet) -> Result<ErrorCurve> {
    Ok(SortedScores::new(scores, Execution::default())?.error_curve())
}

pub fn eer(scores: &ScoreSet) -> Result<Eer> {
    Ok(SortedScores::new(scores, Execution::default())?.eer())
}

pub fn decidability(scores: &ScoreSet) -> Result<f64> {
    let g: Vec<f64> = scores.genuine().collect();
    let i: Vec<f64> = scores.impostor().collect();
    decidability_of(&g, &i)
}

pub fn roc_points(scores: &ScoreSet, num_points: usize) -> Result<Vec<RocPoint>> {
    SortedScores::new(scores, Execution::default())?.roc_points(num_points)
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub count: usize,
}

impl Stats {
    pub fn of(values: &[f64]) -> Stats {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Stats {
            mean,
            std: var.sqrt(),
            count: values.len(),
        }
    }
}

fn decidability_of(genuine: &[f64], impostor: &[f64]) -> Result<f64> {
    if genuine.len() < 2 || impostor.len() < 2 {
        return Err(Error::Metrics(format!(
            "decidability needs >= 2 scores per partition, got {} genuine and {} impostor",
            genuine.len(),
            impostor.len()
        )));
    }
    let (g, i) = (Stats::of(genuine), Stats::of(impostor));
    let pooled = (0.5 * (g.std * g.std + i.std * i.std)).sqrt();
    let gap = (g.mean - i.mean).abs();
    if pooled == 0.0 {
        return Err(Error::Metrics(if gap == 0.0 {
            "decidability undefined: equal means and zero variance".to_string()
        } else {
            "decidability unbounded: both partitions have zero variance".to_string()
        }));
    }
    Ok(gap / pooled)
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub far: f64,
    pub tar: f64,
}

/// TAR at `far`, interpolated linearly along a monotone ROC polyline.
pub fn tar_at_far(roc: &[RocPoint], far: f64) -> Option<f64> {
    let k = roc.iter().position(|p| p.far >= far)?;
    if k == 0 || roc[k].far == far {
        return Some(roc[k].tar);
    }
    let (a, b) = (roc[k - 1], roc[k]);
    Some(a.tar + (far - a.far) / (b.far - a.far) * (b.tar - a.tar))
}

pub fn write_roc_csv<W: Write>(roc: &[RocPoint], mut out: W) -> std::io::Result<()> {
    writeln!(out, "far,tar")?;
    for p in roc {
        writeln!(out, "{},{}", sig(p.far, 6), sig(p.tar, 6))?;
    }
    out.flush()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub eer: f64,
    pub eer_threshold: f64,
    pub decidability: f64,
    pub genuine_stats: Stats,
    pub impostor_stats: Stats,
    pub roc: Vec<RocPoint>,
}

impl EvalReport {
    /// Same report with every float rounded to 6 significant digits, the
    /// precision used by the export files.
    pub fn rounded(&self) -> EvalReport {
        let r = |x: f64| round_sig(x, 6);
        let stats = |s: Stats| Stats {
            mean: r(s.mean),
            std: r(s.std),
            count: s.count,
        };
        EvalReport {
            eer: r(self.eer),
            eer_threshold: r(self.eer_threshold),
            decidability: r(self.decidability),
            genuine_stats: stats(self.genuine_stats),
            impostor_stats: stats(self.impostor_stats),
            roc: self
                .roc
                .iter()
                .map(|p| RocPoint {
                    far: r(p.far),
                    tar: r(p.tar),
                })
                .collect(),
        }
    }
}

/// EER, decidability, partition statistics and a coarse ROC in one pass
/// over the sorted scores.
pub fn evaluate(scores: &ScoreSet, exec: Execution) -> Result<(EvalReport, ErrorCurve)> {
    let sorted = SortedScores::new(scores, exec)?;
    let curve = sorted.error_curve();
    let eer = eer_from_curve(&curve);
    let report = EvalReport {
        eer: eer.rate,
        eer_threshold: eer.threshold,
        decidability: sorted.decidability()?,
        genuine_stats: Stats::of(&sorted.genuine),
        impostor_stats: Stats::of(&sorted.impostor),
        roc: sorted.roc_points(REPORT_ROC_POINTS)?,
    };
    Ok((report, curve))
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialAggregate {
    pub mean_eer: f64,
    pub std_eer: f64,
    pub mean_decidability: f64,
    pub std_decidability: f64,
    pub num_trials: usize,
}

/// Mean and sample (n - 1) standard deviation across trials; a single trial
/// reports a standard deviation of 0.
pub fn aggregate_trials(reports: &[EvalReport]) -> Result<TrialAggregate> {
    if reports.is_empty() {
        return Err(Error::Metrics("no trials to aggregate".to_string()));
    }
    let mean_std = |values: Vec<f64>| {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        (mean, std)
    };
    let (mean_eer, std_eer) = mean_std(reports.iter().map(|r| r.eer).collect());
    let (mean_decidability, std_decidability) = mean_std(reports.iter().map(|r| r.decidability).collect());
    Ok(TrialAggregate {
        mean_eer,
        std_eer,
        mean_decidability,
        std_decidability,
        num_trials: reports.len(),
    })
}
