use std::path::PathBuf;

use serde::Serialize;
use spikerace::mcmc::{run_chain, ModelKind, PosteriorDraws, SamplerConfig};
use spikerace::modelselect::{classify, screen_triplet, waic, Category, ScreenReport, WaicResult};
use spikerace::posteriorpred::{predictive_draws, predictive_mean_count, PredictiveConfig, PredictiveSummary};
use spikerace::rng::derive_seed;
use spikerace::simulate::{simulate_dataset, DatasetSpec, GroundTruth};
use spikerace::splines::{Basis, BasisConfig};
use spikerace::train::Triplet;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::io::{draws_csv, labels_file, load_triplet, write_bytes, write_json, Stamped, TripletFile};

/// Resolved settings shared by every command.
#[derive(Debug, Clone)]
pub struct Run {
    pub cfg: RunConfig,
    pub seed: u64,
    pub config_hash: String,
}

impl Run {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let seed = cfg
            .seed
            .ok_or_else(|| CliError::Usage("no seed given; set `seed` in the config or pass --seed".into()))?;
        let config_hash = cfg.hash();
        Ok(Self { cfg, seed, config_hash })
    }

    fn stamp<T: Serialize>(&self, body: T) -> Stamped<'_, T> {
        Stamped { config_hash: &self.config_hash, seed: self.seed, body }
    }

    fn out(&self, name: &str) -> PathBuf {
        self.cfg.out_dir.join(name)
    }

    fn basis_for(&self, window_end: f64) -> BasisConfig {
        self.cfg.basis.clone().unwrap_or_else(|| BasisConfig::for_window(window_end))
    }

    fn sampler(&self, keys: &[u64]) -> SamplerConfig {
        SamplerConfig { seed: derive_seed(self.seed, keys), ..self.cfg.sampler.clone() }
    }

    fn input(&self) -> Result<(Triplet, String)> {
        let path = self
            .cfg
            .triplet
            .as_ref()
            .ok_or_else(|| CliError::Usage("no triplet file given; set `triplet` in the config or pass --triplet".into()))?;
        load_triplet(path)
    }
}

#[derive(Serialize)]
struct TruthFile<'a> {
    spec: &'a DatasetSpec,
    truth: &'a GroundTruth,
}

pub fn simulate(run: &Run) -> Result<Vec<PathBuf>> {
    let spec = run.cfg.simulate.dataset_spec()?;
    let basis = Basis::new(&run.basis_for(spec.window_end))?;
    let ds = simulate_dataset(&spec, &basis, run.seed)?;
    let triplet = TripletFile {
        config_hash: Some(run.config_hash.clone()),
        seed: Some(run.seed),
        ..TripletFile::from_triplet(&ds.triplet)
    };
    let paths = vec![run.out("triplet.json"), run.out("truth.json")];
    write_json(&paths[0], &triplet)?;
    write_json(&paths[1], &run.stamp(TruthFile { spec: &spec, truth: &ds.truth }))?;
    println!(
        "simulated {} dataset: {} A, {} B, {} AB trials on [0, {}]",
        ds.truth.model,
        ds.triplet.a_trials.len(),
        ds.triplet.b_trials.len(),
        ds.triplet.ab_trials.len(),
        ds.triplet.window_end
    );
    Ok(paths)
}

fn check_fit_input(t: &Triplet, model: ModelKind) -> Result<()> {
    for (name, n) in [("A", t.a_trials.len()), ("B", t.b_trials.len()), ("AB", t.ab_trials.len())] {
        if n == 0 {
            return Err(spikerace::Error::InvalidParameter(format!(
                "the {} model needs at least one {name} trial",
                model.name()
            ))
            .into());
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct FitManifest<'a> {
    model: &'a str,
    input_sha256: &'a str,
    draws_file: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    labels_file: Option<String>,
    n_draws: usize,
    columns: Vec<String>,
    set_names: &'a [String],
    basis: &'a BasisConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    waic: Option<&'a WaicResult>,
    stats: &'a spikerace::mcmc::ChainStats,
}

/// Writes the draws CSV, the labels sidecar (race models only) and the
/// manifest for one fit.
fn write_fit(
    run: &Run,
    draws: &PosteriorDraws,
    input_sha: &str,
    basis: &BasisConfig,
    w: Option<&WaicResult>,
) -> Result<Vec<PathBuf>> {
    let name = &draws.model;
    let csv_name = format!("draws_{name}.csv");
    let mut paths = vec![run.out(&csv_name)];
    write_bytes(&paths[0], &draws_csv(draws, &run.config_hash, run.seed))?;
    let labels_name = match labels_file(draws) {
        Some(l) => {
            let n = format!("labels_{name}.json");
            paths.push(run.out(&n));
            write_json(paths.last().unwrap(), &run.stamp(l))?;
            Some(n)
        }
        None => None,
    };
    let manifest = FitManifest {
        model: name,
        input_sha256: input_sha,
        draws_file: csv_name,
        labels_file: labels_name,
        n_draws: draws.draws.len(),
        columns: crate::io::draw_columns(draws),
        set_names: &draws.set_names,
        basis,
        waic: w,
        stats: &draws.stats,
    };
    paths.push(run.out(&format!("fit_{name}.json")));
    write_json(paths.last().unwrap(), &run.stamp(manifest))?;
    Ok(paths)
}

fn print_fit_summary(draws: &PosteriorDraws, w: Option<&WaicResult>) {
    let st = &draws.stats;
    println!(
        "model {}: {} + {} + {} iterations",
        draws.model, st.phase_iterations[0], st.phase_iterations[1], st.phase_iterations[2]
    );
    let has_delta = draws.draws.first().is_some_and(|d| d.delta.is_some());
    println!("phase      I/sigma accept  phi accept{}", if has_delta { "  delta moves" } else { "" });
    for (p, name) in ["warmup1", "warmup2", "sampling"].iter().enumerate() {
        let mut line = format!("{name:<10} {:>14.3}  {:>10.3}", st.is_block.accept_rate[p], st.phi_block.accept_rate[p]);
        if has_delta {
            line.push_str(&format!("  {:>11.3}", st.delta_move_rate[p]));
        }
        println!("{line}");
    }
    let totals: Vec<f64> = draws.draws.iter().map(|d| d.train_loglik.iter().sum()).collect();
    let n = totals.len() as f64;
    let mean = totals.iter().sum::<f64>() / n;
    let sd = if totals.len() > 1 {
        (totals.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    println!(
        "log marginal likelihood over trains: mean {mean:.3}, sd {sd:.3}, final {:.3}",
        totals.last().copied().unwrap_or(f64::NAN)
    );
    if let Some(w) = w {
        println!("lppd {:.3}, p_eff {:.3}, WAIC {:.3}", w.lppd, w.p_eff, w.waic);
    }
}

pub fn fit(run: &Run) -> Result<Vec<PathBuf>> {
    let (triplet, sha) = run.input()?;
    let model = run.cfg.model;
    check_fit_input(&triplet, model)?;
    let basis = run.basis_for(triplet.window_end);
    let draws = run_chain(&triplet, model, &run.cfg.prior, &run.sampler(&[]), &basis)?;
    // WAIC needs at least two draws.
    let w = waic(&draws).ok();
    print_fit_summary(&draws, w.as_ref());
    write_fit(run, &draws, &sha, &basis, w.as_ref())
}

#[derive(Debug, Clone, Serialize)]
pub struct WaicEntry {
    pub lppd: f64,
    pub p_eff: f64,
    pub waic: f64,
}

#[derive(Serialize)]
struct CompareReport {
    input_sha256: String,
    models: serde_json::Map<String, serde_json::Value>,
    selected: ModelKind,
    tie: bool,
    category: Category,
    category_label: &'static str,
    mean_switches: f64,
    rate_a: f64,
    rate_b: f64,
}

pub fn compare(run: &Run) -> Result<Vec<PathBuf>> {
    let (triplet, sha) = run.input()?;
    check_fit_input(&triplet, ModelKind::Competition)?;
    let basis = run.basis_for(triplet.window_end);
    let mut paths = Vec::new();
    let mut table = serde_json::Map::new();
    let mut waics = Vec::new();
    let mut fits = Vec::new();
    for (k, model) in ModelKind::ALL.into_iter().enumerate() {
        let draws = run_chain(&triplet, model, &run.cfg.prior, &run.sampler(&[k as u64]), &basis)?;
        let w = waic(&draws)?;
        print_fit_summary(&draws, Some(&w));
        paths.extend(write_fit(run, &draws, &sha, &basis, Some(&w))?);
        let entry = WaicEntry { lppd: w.lppd, p_eff: w.p_eff, waic: w.waic };
        table.insert(model.name().into(), serde_json::to_value(entry).expect("serializes"));
        waics.push((model, w.waic));
        fits.push(draws);
    }
    let by_kind = |m: ModelKind| &fits[ModelKind::ALL.iter().position(|k| *k == m).unwrap()];
    let pcfg = PredictiveConfig { seed: derive_seed(run.seed, &[20]), ..run.cfg.predict.clone() };
    let pred = predictive_draws(by_kind(ModelKind::Competition), &basis, triplet.window_end, &pcfg)?;
    let iigpp = by_kind(ModelKind::Iigpp);
    let n_rep = run.cfg.predict.n_rep;
    let rate_a = predictive_mean_count(iigpp, 0, &basis, triplet.window_end, n_rep, derive_seed(run.seed, &[21]))?;
    let rate_b = predictive_mean_count(iigpp, 1, &basis, triplet.window_end, n_rep, derive_seed(run.seed, &[22]))?;
    let c = classify(&waics, pred.mean_switches(), rate_a, rate_b)?;
    println!("selected {} ({}){}", c.selected.name(), c.category.label(), if c.tie { ", tied" } else { "" });
    let report = CompareReport {
        input_sha256: sha,
        models: table,
        selected: c.selected,
        tie: c.tie,
        category: c.category,
        category_label: c.category.label(),
        mean_switches: pred.mean_switches(),
        rate_a,
        rate_b,
    };
    paths.push(run.out("compare.json"));
    write_json(paths.last().unwrap(), &run.stamp(report))?;
    Ok(paths)
}

#[derive(Serialize)]
struct ScreenFile<'a> {
    input_sha256: &'a str,
    #[serde(flatten)]
    report: &'a ScreenReport,
    reasons: Vec<String>,
}

/// Human-readable reasons for a failed screen.
pub fn screen_reasons(r: &ScreenReport, min_trials: usize, alpha: f64) -> Vec<String> {
    let mut out = Vec::new();
    if !r.trial_count_pass {
        for (cond, n) in &r.trial_counts {
            if *n < min_trials {
                out.push(format!("condition {cond} has {n} trials, fewer than {min_trials}"));
            }
        }
        return out;
    }
    if r.p_value_pass == Some(false) {
        for (cond, p) in &r.p_values {
            if p.min() < alpha {
                out.push(format!("IIGPP fit to {cond} fails a posterior predictive check (min p-value {:.4} < {alpha})", p.min()));
            }
        }
        return out;
    }
    if let Some(d) = &r.distinguishability {
        if !d.pass {
            out.push(format!(
                "A and B are not distinguishable (lppd gain {:.3} <= {:.3})",
                d.lppd_separate - d.lppd_joint,
                spikerace::modelselect::distinguishability_threshold()
            ));
        }
    }
    out
}

pub fn screen(run: &Run) -> Result<Vec<PathBuf>> {
    let (triplet, sha) = run.input()?;
    let basis = run.basis_for(triplet.window_end);
    let scfg = &run.cfg.screen;
    let report = screen_triplet(&triplet, &run.cfg.prior, &run.sampler(&[]), &basis, scfg)?;
    let reasons = screen_reasons(&report, scfg.min_trials, scfg.alpha);
    if report.pass {
        println!("triplet passes all inclusion criteria");
    } else {
        for r in &reasons {
            println!("excluded: {r}");
        }
    }
    let path = run.out("screen.json");
    write_json(&path, &run.stamp(ScreenFile { input_sha256: &sha, report: &report, reasons }))?;
    Ok(vec![path])
}

#[derive(Serialize)]
struct PredictFile<'a> {
    input_sha256: &'a str,
    config: &'a PredictiveConfig,
    #[serde(flatten)]
    summary: &'a PredictiveSummary,
}

pub fn predict(run: &Run) -> Result<Vec<PathBuf>> {
    let (triplet, sha) = run.input()?;
    check_fit_input(&triplet, ModelKind::Competition)?;
    let basis = run.basis_for(triplet.window_end);
    let draws = run_chain(&triplet, ModelKind::Competition, &run.cfg.prior, &run.sampler(&[]), &basis)?;
    let w = waic(&draws).ok();
    print_fit_summary(&draws, w.as_ref());
    let mut paths = write_fit(run, &draws, &sha, &basis, w.as_ref())?;
    let pcfg = PredictiveConfig { seed: derive_seed(run.seed, &[20]), ..run.cfg.predict.clone() };
    let s = predictive_draws(&draws, &basis, triplet.window_end, &pcfg)?;
    let q = &s.switches_summary;
    println!("switches per AB trial: mean {:.3} (95% interval {:.1} to {:.1})", q.mean, q.q025, q.q975);
    let q = &s.time_a_summary;
    println!("fraction of time encoding A: mean {:.3} (95% interval {:.3} to {:.3})", q.mean, q.q025, q.q975);
    paths.push(run.out("predictive.json"));
    write_json(paths.last().unwrap(), &run.stamp(PredictFile { input_sha256: &sha, config: &pcfg, summary: &s }))?;
    Ok(paths)
}
