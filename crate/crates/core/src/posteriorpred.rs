//! Posterior predictive quantities for the AB condition and the evaluation
//! metrics used in simulation studies (RSE, RWD, credible-interval coverage).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::igdist::{CompetitionParams, Racers, StimulusParams};
use crate::mcmc::PosteriorDraws;
use crate::rng::substream;
use crate::simulate::{race_step, simulate_competition_with, simulate_iigpp_with, GroundTruth};
use crate::splines::{Basis, BasisConfig};
use crate::train::{Label, LabeledTrain};

/// Which label an inter-spike interval counts toward when measuring the time
/// spent encoding A.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribution {
    /// interval ending at spike j belongs to l_j
    #[default]
    Current,
    /// interval ending at spike j belongs to l_{j-1} (the first to l_1)
    Previous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictiveConfig {
    pub n_rep: usize,
    pub attribution: Attribution,
    pub seed: u64,
}

impl Default for PredictiveConfig {
    fn default() -> Self {
        Self { n_rep: 1000, attribution: Attribution::Current, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub mean: f64,
    pub q025: f64,
    pub q500: f64,
    pub q975: f64,
}

impl Quantiles {
    pub fn of(x: &[f64]) -> Self {
        let mut s = x.to_vec();
        s.sort_by(f64::total_cmp);
        Self {
            mean: x.iter().sum::<f64>() / x.len() as f64,
            q025: quantile_sorted(&s, 0.025),
            q500: quantile_sorted(&s, 0.5),
            q975: quantile_sorted(&s, 0.975),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveSummary {
    pub switches: Vec<u32>,
    pub time_a: Vec<f64>,
    pub spike_counts: Vec<u32>,
    /// Replicates with no spikes; their window goes to the winner of one extra race.
    pub empty_replicates: usize,
    pub switches_summary: Quantiles,
    pub time_a_summary: Quantiles,
    pub spike_count_summary: Quantiles,
    /// Posterior probability that each observed AB spike encodes A, per train.
    pub label_prob_a: Vec<Vec<f64>>,
}

impl PredictiveSummary {
    pub fn mean_switches(&self) -> f64 {
        self.switches_summary.mean
    }
}

/// Number of j >= 2 with l_j != l_{j-1}.
pub fn count_switches(labels: &[Label]) -> u32 {
    labels.windows(2).filter(|w| w[0] != w[1]).count() as u32
}

/// Time attributed to A in one labeled train on [0, t_end]. Empty trains
/// use `empty_winner` for the whole window.
pub fn time_encoding_a(t: &LabeledTrain, attribution: Attribution, empty_winner: Label) -> f64 {
    let n = t.labels.len();
    let t_end = t.train.window_end;
    if n == 0 {
        return if empty_winner == Label::A { t_end } else { 0.0 };
    }
    let mut total = 0.0;
    let mut prev_s = 0.0;
    for j in 0..n {
        let owner = match attribution {
            Attribution::Current => t.labels[j],
            Attribution::Previous => t.labels[j.saturating_sub(1)],
        };
        let s = t.train.spikes[j];
        if owner == Label::A {
            total += s - prev_s;
        }
        prev_s = s;
    }
    if t.labels[n - 1] == Label::A {
        total += t_end - prev_s;
    }
    total
}

/// Index of the posterior draw used by replicate `r` of `n_rep`.
fn draw_index(r: usize, n_rep: usize, n_draws: usize) -> usize {
    if n_rep <= n_draws {
        r * n_draws / n_rep
    } else {
        r % n_draws
    }
}

pub fn competition_params(draws: &PosteriorDraws, s: usize) -> Result<CompetitionParams> {
    let d = &draws.draws[s];
    let delta = d.delta.ok_or_else(|| Error::Config(format!("model '{}' has no delay parameter", draws.model)))?;
    Ok(CompetitionParams { a: d.sets[0].clone(), b: d.sets[1].clone(), delta })
}

/// Simulates one AB trial per replicate from competition-model draws.
pub fn predictive_draws(
    draws: &PosteriorDraws,
    basis_cfg: &BasisConfig,
    t_end: f64,
    cfg: &PredictiveConfig,
) -> Result<PredictiveSummary> {
    if draws.draws.is_empty() || cfg.n_rep == 0 {
        return Err(Error::Config("predictive simulation needs draws and at least one replicate".into()));
    }
    let basis = Basis::new(basis_cfg)?;
    let n_draws = draws.draws.len();
    let reps: Vec<(u32, f64, u32, bool)> = (0..cfg.n_rep)
        .into_par_iter()
        .map(|r| -> Result<(u32, f64, u32, bool)> {
            let cp = competition_params(draws, draw_index(r, cfg.n_rep, n_draws))?;
            let mut rng = substream(cfg.seed, &[r as u64]);
            let t = simulate_competition_with(&cp, &basis, t_end, &mut rng);
            let empty = t.labels.is_empty();
            let winner = if empty {
                race_step(&Racers::at(&cp, &basis, 0.0)?, None, cp.delta, &mut rng).1
            } else {
                t.labels[0]
            };
            let ta = time_encoding_a(&t, cfg.attribution, winner);
            Ok((count_switches(&t.labels), ta, t.labels.len() as u32, empty))
        })
        .collect::<Result<_>>()?;
    let switches: Vec<u32> = reps.iter().map(|r| r.0).collect();
    let time_a: Vec<f64> = reps.iter().map(|r| r.1).collect();
    let spike_counts: Vec<u32> = reps.iter().map(|r| r.2).collect();
    let f = |v: &[u32]| v.iter().map(|&x| x as f64).collect::<Vec<f64>>();
    Ok(PredictiveSummary {
        switches_summary: Quantiles::of(&f(&switches)),
        time_a_summary: Quantiles::of(&time_a),
        spike_count_summary: Quantiles::of(&f(&spike_counts)),
        empty_replicates: reps.iter().filter(|r| r.3).count(),
        label_prob_a: label_frequencies(draws),
        switches,
        time_a,
        spike_counts,
    })
}

/// Fraction of stored draws labeling each race-train spike A.
pub fn label_frequencies(draws: &PosteriorDraws) -> Vec<Vec<f64>> {
    let Some(first) = draws.draws.first() else { return Vec::new() };
    let s = draws.draws.len() as f64;
    first
        .labels
        .iter()
        .enumerate()
        .map(|(k, l)| {
            (0..l.len())
                .map(|j| draws.draws.iter().filter(|d| d.labels[k][j] == Label::A).count() as f64 / s)
                .collect()
        })
        .collect()
}

/// Posterior predictive mean spike count per trial of parameter set `set`.
pub fn predictive_mean_count(
    draws: &PosteriorDraws,
    set: usize,
    basis_cfg: &BasisConfig,
    t_end: f64,
    n_rep: usize,
    seed: u64,
) -> Result<f64> {
    if draws.draws.is_empty() || n_rep == 0 {
        return Err(Error::Config("predictive simulation needs draws and at least one replicate".into()));
    }
    let basis = Basis::new(basis_cfg)?;
    let n_draws = draws.draws.len();
    let total: usize = (0..n_rep)
        .into_par_iter()
        .map(|r| {
            let p = &draws.draws[draw_index(r, n_rep, n_draws)].sets[set];
            simulate_iigpp_with(p, &basis, t_end, &mut substream(seed, &[r as u64])).len()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum();
    Ok(total as f64 / n_rep as f64)
}

/// Relative squared error ||est - truth||^2 / ||truth||^2.
pub fn rse(estimate: &[f64], truth: &[f64]) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(Error::Config(format!("rse: lengths differ ({} vs {})", estimate.len(), truth.len())));
    }
    let den: f64 = truth.iter().map(|t| t * t).sum();
    if !(den > 0.0) {
        return Err(Error::InvalidParameter("rse: truth has zero norm".into()));
    }
    Ok(estimate.iter().zip(truth).map(|(e, t)| (e - t).powi(2)).sum::<f64>() / den)
}

/// Relative Wasserstein distance between equal-size samples via order statistics.
pub fn rwd(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.is_empty() {
        return Err(Error::Config(format!("rwd: need equal nonempty samples, got {} and {}", x.len(), y.len())));
    }
    let mut xs = x.to_vec();
    let mut ys = y.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let den: f64 = ys.iter().map(|v| v.abs()).sum();
    if !(den > 0.0) {
        return Err(Error::InvalidParameter("rwd: reference sample sums to zero".into()));
    }
    Ok(xs.iter().zip(&ys).map(|(a, b)| (a - b).abs()).sum::<f64>() / den)
}

pub const CURVE_GRID: usize = 1000;

/// Uniform grid of `n` points over [0, t_end], endpoints included.
pub fn grid(t_end: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| t_end * i as f64 / (n - 1) as f64).collect()
}

/// Input current I exp(phi^T b(t)) on a grid.
pub fn current_curve(p: &StimulusParams, basis: &Basis, points: &[f64]) -> Result<Vec<f64>> {
    points.iter().map(|&t| p.rate(basis, t)).collect()
}

/// RSE of a current-curve estimate evaluated on the standard grid.
pub fn rse_curve(estimate: &StimulusParams, truth: &StimulusParams, basis: &Basis, t_end: f64) -> Result<f64> {
    let g = grid(t_end, CURVE_GRID);
    rse(&current_curve(estimate, basis, &g)?, &current_curve(truth, basis, &g)?)
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = q * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Central credible interval at `level`.
pub fn credible_interval(samples: &[f64], level: f64) -> (f64, f64) {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let tail = 0.5 * (1.0 - level);
    (quantile_sorted(&s, tail), quantile_sorted(&s, 1.0 - tail))
}

pub fn median(samples: &[f64]) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    quantile_sorted(&s, 0.5)
}

/// Posterior samples and truth for one scalar parameter in one run.
#[derive(Debug, Clone)]
pub struct ScalarInput {
    pub name: String,
    pub samples: Vec<f64>,
    pub truth: f64,
    /// Absolute tolerance when testing whether the interval contains truth.
    pub slack: f64,
}

/// Posterior curve draws (draws by grid points) and the true curve.
#[derive(Debug, Clone)]
pub struct CurveInput {
    pub name: String,
    pub samples: Vec<Vec<f64>>,
    pub truth: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct RunInput {
    pub scalars: Vec<ScalarInput>,
    pub curves: Vec<CurveInput>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamCoverage {
    pub name: String,
    /// Per run: whether the interval contains truth (scalars) or the fraction
    /// of grid points covered (curves).
    pub per_run: Vec<f64>,
    /// Mean of `per_run`.
    pub coverage: f64,
    /// Mean interval width divided by |truth| (finite terms only).
    pub mean_relative_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub level: f64,
    pub params: Vec<ParamCoverage>,
}

impl CoverageReport {
    pub fn get(&self, name: &str) -> Option<&ParamCoverage> {
        self.params.iter().find(|p| p.name == name)
    }
}

fn mean_finite(v: &[f64]) -> f64 {
    let f: Vec<f64> = v.iter().copied().filter(|x| x.is_finite()).collect();
    if f.is_empty() {
        f64::NAN
    } else {
        f.iter().sum::<f64>() / f.len() as f64
    }
}

/// Central-interval coverage at `level` for every parameter named in the
/// first run; later runs must name the same parameters in the same order.
pub fn coverage_report(runs: &[RunInput], level: f64) -> Result<CoverageReport> {
    let first = runs.first().ok_or_else(|| Error::Config("coverage needs at least one run".into()))?;
    let mut params = Vec::new();
    for (k, s0) in first.scalars.iter().enumerate() {
        let mut per_run = Vec::new();
        let mut widths = Vec::new();
        for r in runs {
            let s = r.scalars.get(k).filter(|s| s.name == s0.name).ok_or_else(|| {
                Error::Config(format!("run is missing scalar parameter '{}'", s0.name))
            })?;
            let (lo, hi) = credible_interval(&s.samples, level);
            per_run.push((lo - s.slack <= s.truth && s.truth <= hi + s.slack) as u8 as f64);
            widths.push((hi - lo) / s.truth.abs());
        }
        params.push(ParamCoverage {
            name: s0.name.clone(),
            coverage: per_run.iter().sum::<f64>() / per_run.len() as f64,
            per_run,
            mean_relative_width: mean_finite(&widths),
        });
    }
    for (k, c0) in first.curves.iter().enumerate() {
        let mut per_run = Vec::new();
        let mut widths = Vec::new();
        for r in runs {
            let c = r.curves.get(k).filter(|c| c.name == c0.name).ok_or_else(|| {
                Error::Config(format!("run is missing curve '{}'", c0.name))
            })?;
            let mut covered = 0usize;
            let mut w = Vec::with_capacity(c.truth.len());
            for (g, &truth) in c.truth.iter().enumerate() {
                let col: Vec<f64> = c.samples.iter().map(|d| d[g]).collect();
                let (lo, hi) = credible_interval(&col, level);
                covered += (lo <= truth && truth <= hi) as usize;
                w.push((hi - lo) / truth.abs());
            }
            per_run.push(covered as f64 / c.truth.len() as f64);
            widths.push(mean_finite(&w));
        }
        params.push(ParamCoverage {
            name: c0.name.clone(),
            coverage: per_run.iter().sum::<f64>() / per_run.len() as f64,
            per_run,
            mean_relative_width: mean_finite(&widths),
        });
    }
    Ok(CoverageReport { level, params })
}

/// Absolute tolerance for covering a delay of exactly zero.
pub const DELTA_SLACK: f64 = 1e-8;

/// Coverage inputs of a competition fit: current curves of A and B on the
/// standard grid, sigma of A and B, and delta.
pub fn competition_run_input(draws: &PosteriorDraws, truth: &GroundTruth, basis: &Basis, t_end: f64) -> Result<RunInput> {
    let g = grid(t_end, CURVE_GRID);
    let mut r = RunInput::default();
    for (k, (name, p)) in [("A", &truth.a), ("B", &truth.b)].into_iter().enumerate() {
        let samples = draws.draws.iter().map(|d| current_curve(&d.sets[k], basis, &g)).collect::<Result<_>>()?;
        r.curves.push(CurveInput { name: format!("I_{name}"), samples, truth: current_curve(p, basis, &g)? });
    }
    for (k, (name, p)) in [("A", &truth.a), ("B", &truth.b)].into_iter().enumerate() {
        r.scalars.push(ScalarInput {
            name: format!("sigma_{name}"),
            samples: draws.column(|d| d.sets[k].sigma),
            truth: p.sigma,
            slack: 0.0,
        });
    }
    if let Some(delta) = truth.delta {
        let samples = draws
            .draws
            .iter()
            .map(|d| d.delta.ok_or_else(|| Error::Config("draws have no delay".into())))
            .collect::<Result<_>>()?;
        r.scalars.push(ScalarInput { name: "delta".into(), samples, truth: delta, slack: DELTA_SLACK });
    }
    Ok(r)
}
