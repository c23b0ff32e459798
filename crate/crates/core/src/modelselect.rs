//! Marginal WAIC, four-way model comparison and the single-stimulus
//! screening pipeline (trial counts, posterior p-values, distinguishability).

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::igdist::{iigpp_loglik, StimulusParams};
use crate::mcmc::{run_groups, ModelKind, PosteriorDraws, PriorConfig, SamplerConfig};
use crate::rng::{derive_seed, substream, Stream};
use crate::simulate::simulate_iigpp_with;
use crate::special::log_sum_exp;
use crate::splines::{Basis, BasisConfig};
use crate::train::{PreparedTrain, SpikeTrain, Triplet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaicResult {
    pub lppd: f64,
    pub p_eff: f64,
    pub waic: f64,
    pub train_lppd: Vec<f64>,
    pub train_var: Vec<f64>,
}

/// WAIC from a draws-by-trains log likelihood matrix.
pub fn waic_from_matrix(ll: &[Vec<f64>]) -> Result<WaicResult> {
    let s = ll.len();
    if s < 2 {
        return Err(Error::Config(format!("WAIC needs at least 2 draws, got {s}")));
    }
    let n = ll[0].len();
    if ll.iter().any(|r| r.len() != n) {
        return Err(Error::Invariant("ragged log likelihood matrix".into()));
    }
    let ln_s = (s as f64).ln();
    let (train_lppd, train_var): (Vec<f64>, Vec<f64>) = (0..n)
        .into_par_iter()
        .map(|i| {
            let col: Vec<f64> = ll.iter().map(|r| r[i]).collect();
            let mean = col.iter().sum::<f64>() / s as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (s - 1) as f64;
            (log_sum_exp(&col) - ln_s, var)
        })
        .unzip();
    let lppd: f64 = train_lppd.iter().sum();
    let p_eff: f64 = train_var.iter().sum();
    Ok(WaicResult { lppd, p_eff, waic: -2.0 * (lppd - p_eff), train_lppd, train_var })
}

pub fn waic(draws: &PosteriorDraws) -> Result<WaicResult> {
    waic_from_matrix(&draws.loglik_matrix())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Iigpp,
    WtaPreferred,
    WtaNonPreferred,
    SlowJuggling,
    FastJuggling,
}

impl Category {
    pub fn label(self) -> &'static str {
        match self {
            Category::Iigpp => "IIGPP",
            Category::WtaPreferred => "Winner-Take-All (Preferred)",
            Category::WtaNonPreferred => "Winner-Take-All (Non-Preferred)",
            Category::SlowJuggling => "Slow Juggling",
            Category::FastJuggling => "Fast Juggling",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub category: Category,
    pub selected: ModelKind,
    /// Another model had exactly the same WAIC.
    pub tie: bool,
}

/// Threshold on the predictive mean number of switches per AB trial.
pub const JUGGLING_THRESHOLD: f64 = 0.5;

fn complexity(k: ModelKind) -> usize {
    match k {
        ModelKind::Iigpp => 0,
        ModelKind::WtaA => 1,
        ModelKind::WtaB => 2,
        ModelKind::Competition => 3,
    }
}

/// Model with the smallest WAIC; exact ties go to the simpler model.
pub fn select_model(waics: &[(ModelKind, f64)]) -> Result<(ModelKind, bool)> {
    let mut sorted: Vec<(ModelKind, f64)> = waics.to_vec();
    if sorted.is_empty() || sorted.iter().any(|(_, w)| w.is_nan()) {
        return Err(Error::Config("model comparison needs finite WAIC values".into()));
    }
    sorted.sort_by(|a, b| a.1.total_cmp(&b.1).then(complexity(a.0).cmp(&complexity(b.0))));
    let tie = sorted.len() > 1 && sorted[0].1 == sorted[1].1;
    Ok((sorted[0].0, tie))
}

/// Category from the four WAIC values. `rate_a` and `rate_b` are the overall
/// single-stimulus firing rates; the WTA model wins as Preferred when it
/// encodes the stimulus with the higher (or equal) rate.
pub fn classify(waics: &[(ModelKind, f64)], mean_switches: f64, rate_a: f64, rate_b: f64) -> Result<Classification> {
    for k in ModelKind::ALL {
        if !waics.iter().any(|(m, _)| *m == k) {
            return Err(Error::Config(format!("classification needs the WAIC of model {}", k.name())));
        }
    }
    if !(mean_switches >= 0.0) {
        return Err(Error::Config(format!("mean switch count must be nonnegative, got {mean_switches}")));
    }
    let (selected, tie) = select_model(waics)?;
    let category = match selected {
        ModelKind::Iigpp => Category::Iigpp,
        ModelKind::WtaA if rate_a >= rate_b => Category::WtaPreferred,
        ModelKind::WtaB if rate_b >= rate_a => Category::WtaPreferred,
        ModelKind::WtaA | ModelKind::WtaB => Category::WtaNonPreferred,
        ModelKind::Competition if mean_switches < JUGGLING_THRESHOLD => Category::SlowJuggling,
        ModelKind::Competition => Category::FastJuggling,
    };
    Ok(Classification { category, selected, tie })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpcConfig {
    /// Posterior draws used, after even thinning.
    pub max_draws: usize,
    /// Simulated trains per draw for the spike-count moments.
    pub moment_reps: usize,
    pub seed: u64,
}

impl Default for PpcConfig {
    fn default() -> Self {
        Self { max_draws: 500, moment_reps: 1000, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PValues {
    pub avg_ll: f64,
    pub mean_sc: f64,
    pub var_sc: f64,
}

impl PValues {
    pub fn min(&self) -> f64 {
        self.avg_ll.min(self.mean_sc).min(self.var_sc)
    }
}

/// Evenly spaced indices, at most `max` of them.
pub fn thin_indices(n: usize, max: usize) -> Vec<usize> {
    if n <= max {
        return (0..n).collect();
    }
    (0..max).map(|i| i * n / max).collect()
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = if x.len() > 1 { x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var)
}

fn counts(trains: &[SpikeTrain]) -> Vec<f64> {
    trains.iter().map(|t| t.len() as f64).collect()
}

fn avg_loglik(p: &StimulusParams, trains: &[SpikeTrain], basis: &Basis) -> Result<f64> {
    let mut s = 0.0;
    for t in trains {
        s += iigpp_loglik(p, &PreparedTrain::new(t, basis)?);
    }
    Ok(s / trains.len() as f64)
}

/// Posterior predictive p-values of an IIGPP fit to one condition
/// (parameter set 0 of `draws`).
pub fn posterior_p_values(draws: &PosteriorDraws, trains: &[SpikeTrain], basis_cfg: &BasisConfig, cfg: &PpcConfig) -> Result<PValues> {
    if trains.is_empty() || draws.draws.is_empty() {
        return Err(Error::Config("posterior p-values need trains and draws".into()));
    }
    let basis = Basis::new(basis_cfg)?;
    let t_end = trains[0].window_end;
    let n = trains.len();
    let obs_counts = counts(trains);
    let (obs_mean, obs_var) = mean_var(&obs_counts);
    let idx = thin_indices(draws.draws.len(), cfg.max_draws.max(1));
    let hits: Vec<[bool; 3]> = idx
        .par_iter()
        .map(|&s| -> Result<[bool; 3]> {
            let p = &draws.draws[s].sets[0];
            let mut rng: Stream = substream(cfg.seed, &[s as u64]);
            let rep: Vec<SpikeTrain> = (0..n).map(|_| simulate_iigpp_with(p, &basis, t_end, &mut rng)).collect();
            let moment: Vec<f64> =
                (0..cfg.moment_reps.max(2)).map(|_| simulate_iigpp_with(p, &basis, t_end, &mut rng).len() as f64).collect();
            let (e_n, v_n) = mean_var(&moment);
            let (rep_mean, rep_var) = mean_var(&counts(&rep));
            let d_obs = avg_loglik(p, trains, &basis)?;
            let d_rep = avg_loglik(p, &rep, &basis)?;
            Ok([
                d_rep <= d_obs,
                (rep_mean - e_n).abs() >= (obs_mean - e_n).abs(),
                (rep_var - v_n).abs() >= (obs_var - v_n).abs(),
            ])
        })
        .collect::<Result<_>>()?;
    let frac = |k: usize| hits.iter().filter(|h| h[k]).count() as f64 / hits.len() as f64;
    Ok(PValues { avg_ll: frac(0), mean_sc: frac(1), var_sc: frac(2) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distinguishability {
    pub lppd_separate: f64,
    pub lppd_joint: f64,
    pub pass: bool,
}

/// Minimum lppd gain of separate over pooled single-stimulus fits.
pub fn distinguishability_threshold() -> f64 {
    3f64.ln()
}

pub fn distinguishability_from_lppd(lppd_separate: f64, lppd_joint: f64) -> Distinguishability {
    Distinguishability { lppd_separate, lppd_joint, pass: lppd_separate - lppd_joint > distinguishability_threshold() }
}

/// Fits separate and pooled IIGPP models to the A and B trains and compares
/// their lppd.
pub fn distinguishability_screen(
    a: &[SpikeTrain],
    b: &[SpikeTrain],
    prior: &PriorConfig,
    sampler: &SamplerConfig,
    basis_cfg: &BasisConfig,
) -> Result<Distinguishability> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Config("distinguishability needs A and B trains".into()));
    }
    let sep_cfg = SamplerConfig { seed: derive_seed(sampler.seed, &[1]), ..sampler.clone() };
    let joint_cfg = SamplerConfig { seed: derive_seed(sampler.seed, &[2]), ..sampler.clone() };
    let sep = run_groups("separate", &[("A", a), ("B", b)], prior, &sep_cfg, basis_cfg)?;
    let pooled: Vec<SpikeTrain> = a.iter().chain(b).cloned().collect();
    let joint = run_groups("joint", &[("AB", &pooled)], prior, &joint_cfg, basis_cfg)?;
    Ok(distinguishability_from_lppd(waic(&sep)?.lppd, waic(&joint)?.lppd))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScreenConfig {
    pub min_trials: usize,
    pub alpha: f64,
    pub ppc: PpcConfig,
}

impl Default for ScreenConfig {
    fn default() -> Self {
        Self { min_trials: 5, alpha: 0.05, ppc: PpcConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenReport {
    pub trial_counts: BTreeMap<String, usize>,
    pub trial_count_pass: bool,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub p_values: BTreeMap<String, PValues>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_value_pass: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distinguishability: Option<Distinguishability>,
    pub pass: bool,
}

/// Runs the screening stages in order, stopping at the first failure.
pub fn screen_triplet(
    triplet: &Triplet,
    prior: &PriorConfig,
    sampler: &SamplerConfig,
    basis_cfg: &BasisConfig,
    cfg: &ScreenConfig,
) -> Result<ScreenReport> {
    let trial_counts: BTreeMap<String, usize> = [
        ("A".to_string(), triplet.a_trials.len()),
        ("AB".to_string(), triplet.ab_trials.len()),
        ("B".to_string(), triplet.b_trials.len()),
    ]
    .into_iter()
    .collect();
    let mut report = ScreenReport {
        trial_count_pass: trial_counts.values().all(|&n| n >= cfg.min_trials),
        trial_counts,
        p_values: BTreeMap::new(),
        p_value_pass: None,
        distinguishability: None,
        pass: false,
    };
    if !report.trial_count_pass {
        return Ok(report);
    }
    for (k, (name, trains)) in [("A", &triplet.a_trials), ("B", &triplet.b_trials)].into_iter().enumerate() {
        let fit_cfg = SamplerConfig { seed: derive_seed(sampler.seed, &[10, k as u64]), ..sampler.clone() };
        let draws = run_groups(name, &[(name, trains)], prior, &fit_cfg, basis_cfg)?;
        let ppc = PpcConfig { seed: derive_seed(cfg.ppc.seed, &[k as u64]), ..cfg.ppc.clone() };
        let pv = posterior_p_values(&draws, trains, basis_cfg, &ppc)?;
        report.p_values.insert(name.to_string(), pv);
    }
    let ok = report.p_values.values().all(|p| p.min() >= cfg.alpha);
    report.p_value_pass = Some(ok);
    if !ok {
        return Ok(report);
    }
    let d = distinguishability_screen(&triplet.a_trials, &triplet.b_trials, prior, sampler, basis_cfg)?;
    report.pass = d.pass;
    report.distinguishability = Some(d);
    Ok(report)
}
