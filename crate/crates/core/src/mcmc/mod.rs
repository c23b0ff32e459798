//! Posterior sampling for the competition, IIGPP and winner-take-all models.
//!
//! One iteration of a competition chain is: HMC on (ln I, ln sigma), HMC on
//! the spline coefficients, conjugate updates of the shrinkage scales, then the
//! ensemble update of (delta, labels). IIGPP-type chains skip the last step.
//! Warmup runs in two phases (step sizes only, then step sizes plus mass
//! matrices and the delay proposal) before draws are stored.

pub mod ensemble;
pub mod hmc;
pub mod posterior;
pub mod priors;

use log::warn;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::RaceTrain;
use crate::igdist::StimulusParams;
use crate::rng::{substream, Stream};
use crate::splines::{Basis, BasisConfig};
use crate::train::{Label, PreparedTrain, SpikeTrain, Triplet};

pub use ensemble::{ensemble_delta_labels, ensemble_weights, DeltaProposal, EnsembleOutcome};
pub use hmc::{adapt_mass, adapt_psi_delta, hmc_transition, robbins_monro, BlockTuning, HmcOutcome};
pub use posterior::{log_posterior_and_grad, Block, ModelData, Owner, Theta};
pub use priors::{gibbs_tau, PriorConfig, PriorFamily};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub warmup1: usize,
    pub warmup2: usize,
    pub samples: usize,
    pub leapfrog_steps: usize,
    pub initial_step_size: f64,
    pub m_delta: usize,
    pub alpha_mix: f64,
    pub target_accept: f64,
    pub step_adapt_rate: f64,
    pub mass_regularizer: f64,
    pub adaptation_interval: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            warmup1: 1000,
            warmup2: 2500,
            samples: 5000,
            leapfrog_steps: 10,
            initial_step_size: 0.05,
            m_delta: 5,
            alpha_mix: 0.3,
            target_accept: 0.65,
            step_adapt_rate: 0.05,
            mass_regularizer: 0.001,
            adaptation_interval: 200,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.warmup1 < 1 || self.warmup2 < 1 || self.samples < 1 {
            return bad(format!(
                "iteration counts must be at least 1, got warmup1={} warmup2={} samples={}",
                self.warmup1, self.warmup2, self.samples
            ));
        }
        if self.m_delta < 1 {
            return bad("m_delta must be at least 1".into());
        }
        if !(self.alpha_mix > 0.0 && self.alpha_mix < 1.0) {
            return bad(format!("alpha_mix must lie in (0, 1), got {}", self.alpha_mix));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return bad(format!("target_accept must lie in (0, 1), got {}", self.target_accept));
        }
        if !(self.initial_step_size > 0.0) || self.leapfrog_steps < 1 || self.adaptation_interval < 2 {
            return bad("step size, leapfrog steps and adaptation interval must be positive".into());
        }
        if !(self.mass_regularizer >= 0.0 && self.step_adapt_rate >= 0.0) {
            return bad("mass_regularizer and step_adapt_rate must be nonnegative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Competition,
    Iigpp,
    WtaA,
    WtaB,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Iigpp, ModelKind::WtaA, ModelKind::WtaB, ModelKind::Competition];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Competition => "competition",
            ModelKind::Iigpp => "iigpp",
            ModelKind::WtaA => "wta_a",
            ModelKind::WtaB => "wta_b",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "competition" => Ok(ModelKind::Competition),
            "iigpp" => Ok(ModelKind::Iigpp),
            "wta_a" => Ok(ModelKind::WtaA),
            "wta_b" => Ok(ModelKind::WtaB),
            other => Err(Error::Config(format!(
                "unknown model '{other}'; expected competition, iigpp, wta_a or wta_b"
            ))),
        }
    }
}

/// Which parameter set explains which train.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelLayout {
    pub name: String,
    pub set_names: Vec<String>,
    pub owners: Vec<Owner>,
}

impl ModelLayout {
    /// Layout over the triplet's trains in the order A, B, AB.
    pub fn for_model(kind: ModelKind, t: &Triplet) -> Self {
        let (na, nb, nab) = (t.a_trials.len(), t.b_trials.len(), t.ab_trials.len());
        let rep = |o: Owner, n: usize| std::iter::repeat_n(o, n);
        let (names, ab_owner): (Vec<&str>, Owner) = match kind {
            ModelKind::Competition => (vec!["A", "B"], Owner::Race),
            ModelKind::Iigpp => (vec!["A", "B", "AB"], Owner::Set(2)),
            ModelKind::WtaA => (vec!["A", "B"], Owner::Set(0)),
            ModelKind::WtaB => (vec!["A", "B"], Owner::Set(1)),
        };
        let owners = rep(Owner::Set(0), na).chain(rep(Owner::Set(1), nb)).chain(rep(ab_owner, nab)).collect();
        Self { name: kind.name().into(), set_names: names.into_iter().map(String::from).collect(), owners }
    }

    /// Independent IIGPP sets, one per group of consecutive trains.
    pub fn groups(name: &str, groups: &[(&str, usize)]) -> Self {
        let mut owners = Vec::new();
        for (k, (_, n)) in groups.iter().enumerate() {
            owners.extend(std::iter::repeat_n(Owner::Set(k), *n));
        }
        Self { name: name.into(), set_names: groups.iter().map(|g| g.0.to_string()).collect(), owners }
    }

    pub fn n_sets(&self) -> usize {
        self.set_names.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// step sizes adapt
    Warmup1,
    /// step sizes, mass matrices and the delay proposal adapt
    Warmup2,
    Sampling,
}

/// One stored posterior draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Draw {
    pub sets: Vec<StimulusParams>,
    pub tau: Vec<f64>,
    pub delta: Option<f64>,
    /// Per-train log likelihood (marginal over labels for race trains), in data order.
    pub train_loglik: Vec<f64>,
    /// Sampled labels of each race train.
    pub labels: Vec<Vec<Label>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BlockStats {
    pub accept_rate: [f64; 3],
    pub divergences: [usize; 3],
    pub final_step: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChainStats {
    pub phase_iterations: [usize; 3],
    pub is_block: BlockStats,
    pub phi_block: BlockStats,
    /// Fraction of ensemble sweeps that moved away from the current delay, per phase.
    pub delta_move_rate: [f64; 3],
    pub psi_delta: (f64, f64),
    pub init_attempts: usize,
    pub mass_fallbacks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDraws {
    pub model: String,
    pub set_names: Vec<String>,
    pub n_trains: usize,
    pub draws: Vec<Draw>,
    pub stats: ChainStats,
}

impl PosteriorDraws {
    pub fn set_index(&self, name: &str) -> Option<usize> {
        self.set_names.iter().position(|s| s == name)
    }

    /// Values of a scalar extracted from each draw.
    pub fn column<F: Fn(&Draw) -> f64>(&self, f: F) -> Vec<f64> {
        self.draws.iter().map(f).collect()
    }

    /// Draw-by-train log likelihood matrix.
    pub fn loglik_matrix(&self) -> Vec<Vec<f64>> {
        self.draws.iter().map(|d| d.train_loglik.clone()).collect()
    }
}

struct Accum {
    accept: [f64; 3],
    count: [usize; 3],
    div: [usize; 3],
}

impl Accum {
    fn new() -> Self {
        Self { accept: [0.0; 3], count: [0; 3], div: [0; 3] }
    }

    fn add(&mut self, phase: usize, o: &HmcOutcome) {
        self.accept[phase] += o.accept_prob;
        self.count[phase] += 1;
        self.div[phase] += o.divergent as usize;
    }

    fn stats(&self, step: f64) -> BlockStats {
        let mut s = BlockStats { final_step: step, divergences: self.div, ..Default::default() };
        for p in 0..3 {
            s.accept_rate[p] = if self.count[p] > 0 { self.accept[p] / self.count[p] as f64 } else { 0.0 };
        }
        s
    }
}

fn phase_index(p: Phase) -> usize {
    match p {
        Phase::Warmup1 => 0,
        Phase::Warmup2 => 1,
        Phase::Sampling => 2,
    }
}

/// A single chain with its data, state and tuning.
pub struct Sampler {
    pub data: ModelData,
    pub layout: ModelLayout,
    pub prior: PriorConfig,
    pub cfg: SamplerConfig,
    pub theta: Theta,
    pub labels: Vec<Vec<Label>>,
    pub is_tuning: BlockTuning,
    pub phi_tuning: BlockTuning,
    pub psi_delta: (f64, f64),
    /// Per-race-train marginal log likelihoods from the last ensemble step.
    pub race_loglik: Vec<f64>,
    /// When false, step sizes and mass matrices never change.
    pub adapt: bool,
    rng: Stream,
    is_hist: Vec<Vec<f64>>,
    phi_hist: Vec<Vec<f64>>,
    delta_hist: Vec<f64>,
    phase2_iter: usize,
    is_acc: Accum,
    phi_acc: Accum,
    delta_moves: [usize; 3],
    delta_sweeps: [usize; 3],
    mass_fallbacks: usize,
    init_attempts: usize,
}

fn prepare_all(trains: &[SpikeTrain], basis: &Basis) -> Result<Vec<PreparedTrain>> {
    trains.iter().map(|t| PreparedTrain::new(t, basis)).collect()
}

impl Sampler {
    pub fn new(
        layout: ModelLayout,
        trains: &[SpikeTrain],
        prior: &PriorConfig,
        cfg: &SamplerConfig,
        basis_cfg: &BasisConfig,
    ) -> Result<Self> {
        prior.validate()?;
        cfg.validate()?;
        if layout.owners.len() != trains.len() {
            return Err(Error::Config(format!(
                "layout covers {} trains but {} were given",
                layout.owners.len(),
                trains.len()
            )));
        }
        let basis = Basis::new(basis_cfg)?;
        let dim = basis.dim();
        let n_sets = layout.n_sets();
        let data = ModelData { n_sets, dim, trains: prepare_all(trains, &basis)?, owners: layout.owners.clone() };
        if data.has_race() && n_sets < 2 {
            return Err(Error::Config("a race needs the A and B parameter sets".into()));
        }
        let mut rng = substream(cfg.seed, &[0]);
        let sets = initial_sets(&data, prior);
        let n_race = data.race_indices().len();
        let theta = Theta { sets, tau: vec![1.0; n_sets], aux: vec![1.0; n_sets], delta: 0.01 };
        let mut s = Self {
            is_tuning: BlockTuning::identity(theta.block_dim(Block::Is), cfg.initial_step_size),
            phi_tuning: BlockTuning::identity(theta.block_dim(Block::Phi), cfg.initial_step_size),
            data,
            layout,
            prior: prior.clone(),
            cfg: cfg.clone(),
            theta,
            labels: vec![Vec::new(); n_race],
            psi_delta: (0.01f64.ln(), 1.0),
            race_loglik: vec![0.0; n_race],
            adapt: true,
            rng: substream(cfg.seed, &[1]),
            is_hist: Vec::new(),
            phi_hist: Vec::new(),
            delta_hist: Vec::new(),
            phase2_iter: 0,
            is_acc: Accum::new(),
            phi_acc: Accum::new(),
            delta_moves: [0; 3],
            delta_sweeps: [0; 3],
            mass_fallbacks: 0,
            init_attempts: 0,
        };
        s.initialize(&mut rng)?;
        s.is_tuning.step = s.reasonable_step(Block::Is);
        s.phi_tuning.step = s.reasonable_step(Block::Phi);
        Ok(s)
    }

    /// Labels from a backward sample at the starting point; jitters the
    /// continuous parameters until the posterior is finite.
    fn initialize(&mut self, rng: &mut Stream) -> Result<()> {
        let base = self.theta.clone();
        for attempt in 1..=20 {
            self.init_attempts = attempt;
            if attempt > 1 {
                self.theta = base.clone();
                for s in self.theta.sets.iter_mut() {
                    let z1: f64 = StandardNormal.sample(rng);
                    let z2: f64 = StandardNormal.sample(rng);
                    s.current *= (0.5 * z1).exp();
                    s.sigma *= (0.5 * z2).exp();
                }
                let z: f64 = StandardNormal.sample(rng);
                self.theta.delta = 0.01 * z.exp();
            }
            if self.data.has_race() {
                let races = self.race_trains();
                let mut lls = Vec::with_capacity(races.len());
                let mut labels = Vec::with_capacity(races.len());
                let mut ok = true;
                for (i, (ll, fs)) in ensemble::filter_all(&races, self.theta.delta).into_iter().enumerate() {
                    if !ll.is_finite() {
                        ok = false;
                        break;
                    }
                    labels.push(match fs {
                        Some(fs) => crate::filter::backward_sample(&fs, i, rng)?,
                        None => Vec::new(),
                    });
                    lls.push(ll);
                }
                if !ok {
                    continue;
                }
                self.labels = labels;
                self.race_loglik = lls;
            }
            let finite = [Block::Is, Block::Phi].iter().all(|&b| {
                let (v, g) = self.log_posterior_and_grad(b);
                posterior::check_finite(v, &g, "initial state").is_ok()
            });
            if finite {
                return Ok(());
            }
        }
        Err(Error::Numerical("no finite starting point after 20 attempts".into()))
    }

    pub fn has_race(&self) -> bool {
        self.data.has_race()
    }

    pub fn race_trains(&self) -> Vec<RaceTrain> {
        let (a, b) = (&self.theta.sets[0], &self.theta.sets[1]);
        self.data
            .race_indices()
            .into_iter()
            .map(|i| RaceTrain::new(a, b, &self.data.trains[i]))
            .collect()
    }

    pub fn log_posterior_and_grad(&self, block: Block) -> (f64, Vec<f64>) {
        log_posterior_and_grad(&self.data, &self.theta, &self.labels, &self.prior, block)
    }

    fn block_logp(&self, block: Block) -> impl FnMut(&[f64]) -> (f64, Vec<f64>) + '_ {
        let mut th = self.theta.clone();
        move |q: &[f64]| {
            th.set_block(block, q);
            log_posterior_and_grad(&self.data, &th, &self.labels, &self.prior, block)
        }
    }

    /// Tuning used for a transition. The coefficient block adds the current
    /// shrinkage precision diag(1/tau) to its mass matrix; tau is fixed during
    /// that update, and without it small tau makes the block too stiff for the
    /// adapted step.
    pub fn effective_tuning(&self, block: Block) -> BlockTuning {
        match block {
            Block::Is => self.is_tuning.clone(),
            Block::Phi => {
                let mut m = self.phi_tuning.mass();
                let mut off = 0;
                for (set, &tau) in self.theta.sets.iter().zip(&self.theta.tau) {
                    for i in off..off + set.phi.len() {
                        m[(i, i)] += 1.0 / tau;
                    }
                    off += set.phi.len();
                }
                BlockTuning::with_mass(&m, self.phi_tuning.step).unwrap_or_else(|| self.phi_tuning.clone())
            }
        }
    }

    fn reasonable_step(&mut self, block: Block) -> f64 {
        let q = self.theta.block_vector(block);
        let tuning = self.effective_tuning(block);
        let mut rng = self.rng.clone();
        let step = hmc::find_reasonable_step(&q, self.block_logp(block), &tuning, self.cfg.leapfrog_steps, &mut rng);
        self.rng = rng;
        step
    }

    fn hmc_block(&mut self, block: Block, phase: Phase) -> HmcOutcome {
        let q = self.theta.block_vector(block);
        let tuning = self.effective_tuning(block);
        let mut rng = self.rng.clone();
        let out = hmc_transition(&q, self.block_logp(block), &tuning, self.cfg.leapfrog_steps, &mut rng);
        self.rng = rng;
        self.theta.set_block(block, &out.q);
        if self.adapt && phase != Phase::Sampling {
            let c = &self.cfg;
            let t = match block {
                Block::Is => &mut self.is_tuning,
                Block::Phi => &mut self.phi_tuning,
            };
            t.step = robbins_monro(t.step, out.accept_prob, c.target_accept, c.step_adapt_rate);
        }
        out
    }

    /// One full iteration.
    pub fn sweep(&mut self, phase: Phase) -> Result<()> {
        let pi = phase_index(phase);
        let o = self.hmc_block(Block::Is, phase);
        self.is_acc.add(pi, &o);
        let o = self.hmc_block(Block::Phi, phase);
        self.phi_acc.add(pi, &o);
        for k in 0..self.theta.sets.len() {
            let (tau, aux) = gibbs_tau(&self.theta.sets[k].phi, self.theta.aux[k], &self.prior, &mut self.rng);
            self.theta.tau[k] = tau;
            self.theta.aux[k] = aux;
        }
        if self.has_race() {
            let races = self.race_trains();
            let q = DeltaProposal::new(&self.prior, self.cfg.alpha_mix, self.psi_delta);
            let out = ensemble_delta_labels(&races, self.theta.delta, &q, self.cfg.m_delta, &mut self.rng)?;
            self.delta_sweeps[pi] += 1;
            self.delta_moves[pi] += (out.chosen != 0) as usize;
            self.theta.delta = out.delta;
            self.labels = out.labels;
            self.race_loglik = out.train_loglik;
        }
        if self.adapt && phase == Phase::Warmup2 {
            self.is_hist.push(self.theta.block_vector(Block::Is));
            self.phi_hist.push(self.theta.block_vector(Block::Phi));
            self.delta_hist.push(self.theta.delta);
            self.phase2_iter += 1;
            // A refresh needs some iterations left to retune the step size.
            let remaining = self.cfg.warmup2.saturating_sub(self.phase2_iter);
            if self.phase2_iter % self.cfg.adaptation_interval == 0 && 2 * remaining >= self.cfg.adaptation_interval {
                self.refresh_tuning();
            }
        }
        Ok(())
    }

    fn refresh_tuning(&mut self) {
        let reg = self.cfg.mass_regularizer;
        for block in [Block::Is, Block::Phi] {
            let hist = match block {
                Block::Is => &self.is_hist,
                Block::Phi => &self.phi_hist,
            };
            let step = match block {
                Block::Is => self.is_tuning.step,
                Block::Phi => self.phi_tuning.step,
            };
            match adapt_mass(hist, reg).and_then(|m| BlockTuning::with_mass(&m, step)) {
                Some(t) => {
                    match block {
                        Block::Is => self.is_tuning = t,
                        Block::Phi => self.phi_tuning = t,
                    }
                    let s = self.reasonable_step(block);
                    match block {
                        Block::Is => self.is_tuning.step = s,
                        Block::Phi => self.phi_tuning.step = s,
                    }
                }
                None => {
                    self.mass_fallbacks += 1;
                    warn!("sample covariance for block {block:?} is singular; keeping the previous mass matrix");
                }
            }
        }
        if self.has_race() {
            self.psi_delta = adapt_psi_delta(&self.delta_hist);
        }
        self.is_hist.clear();
        self.phi_hist.clear();
        self.delta_hist.clear();
    }

    /// Replaces the observed trains (same layout) and, for race trains, their labels.
    pub fn replace_data(&mut self, trains: &[SpikeTrain], labels: Vec<Vec<Label>>, basis_cfg: &BasisConfig) -> Result<()> {
        let basis = Basis::new(basis_cfg)?;
        if trains.len() != self.data.trains.len() || labels.len() != self.labels.len() {
            return Err(Error::Config("replacement data does not match the layout".into()));
        }
        self.data.trains = prepare_all(trains, &basis)?;
        self.labels = labels;
        if self.has_race() {
            self.race_loglik = ensemble::filter_all(&self.race_trains(), self.theta.delta).into_iter().map(|x| x.0).collect();
        }
        Ok(())
    }

    pub fn current_draw(&self) -> Draw {
        Draw {
            sets: self.theta.sets.clone(),
            tau: self.theta.tau.clone(),
            delta: self.has_race().then_some(self.theta.delta),
            train_loglik: posterior::train_logliks(&self.data, &self.theta, &self.race_loglik),
            labels: self.labels.clone(),
        }
    }

    pub fn stats(&self) -> ChainStats {
        let mut rate = [0.0; 3];
        for p in 0..3 {
            if self.delta_sweeps[p] > 0 {
                rate[p] = self.delta_moves[p] as f64 / self.delta_sweeps[p] as f64;
            }
        }
        ChainStats {
            phase_iterations: [self.cfg.warmup1, self.cfg.warmup2, self.cfg.samples],
            is_block: self.is_acc.stats(self.is_tuning.step),
            phi_block: self.phi_acc.stats(self.phi_tuning.step),
            delta_move_rate: rate,
            psi_delta: self.psi_delta,
            init_attempts: self.init_attempts,
            mass_fallbacks: self.mass_fallbacks,
        }
    }

    pub fn rng(&mut self) -> &mut Stream {
        &mut self.rng
    }

    /// Runs both warmup phases and stores `samples` draws.
    pub fn run(mut self) -> Result<PosteriorDraws> {
        for _ in 0..self.cfg.warmup1 {
            self.sweep(Phase::Warmup1)?;
        }
        for _ in 0..self.cfg.warmup2 {
            self.sweep(Phase::Warmup2)?;
        }
        let mut draws = Vec::with_capacity(self.cfg.samples);
        for _ in 0..self.cfg.samples {
            self.sweep(Phase::Sampling)?;
            draws.push(self.current_draw());
        }
        Ok(PosteriorDraws {
            model: self.layout.name.clone(),
            set_names: self.layout.set_names.clone(),
            n_trains: self.data.trains.len(),
            draws,
            stats: self.stats(),
        })
    }
}

/// Starting values: I from the reciprocal mean ISI of the set's trains,
/// sigma = sqrt(I), phi = 0. Race trains count toward both A and B.
fn initial_sets(data: &ModelData, prior: &PriorConfig) -> Vec<StimulusParams> {
    (0..data.n_sets)
        .map(|k| {
            let mut total = 0.0;
            let mut count = 0usize;
            for (t, o) in data.trains.iter().zip(&data.owners) {
                let mine = match o {
                    Owner::Set(j) => *j == k,
                    Owner::Race => k < 2,
                };
                if mine {
                    total += t.isi.iter().sum::<f64>();
                    count += t.len();
                }
            }
            let current = if count > 0 && total > 0.0 {
                count as f64 / total
            } else {
                match prior.family {
                    PriorFamily::InverseGaussian => prior.alpha_i,
                    PriorFamily::InverseGamma => prior.beta_i / (prior.alpha_i + 1.0),
                }
            };
            StimulusParams::homogeneous(current, current.sqrt(), data.dim)
        })
        .collect()
}

/// Fits `kind` to a triplet.
pub fn run_chain(
    triplet: &Triplet,
    kind: ModelKind,
    prior: &PriorConfig,
    cfg: &SamplerConfig,
    basis_cfg: &BasisConfig,
) -> Result<PosteriorDraws> {
    let layout = ModelLayout::for_model(kind, triplet);
    let trains: Vec<SpikeTrain> = triplet.all_trains().map(|(_, t)| t.clone()).collect();
    Sampler::new(layout, &trains, prior, cfg, basis_cfg)?.run()
}

/// Fits independent IIGPP parameter sets to consecutive groups of trains.
pub fn run_groups(
    name: &str,
    groups: &[(&str, &[SpikeTrain])],
    prior: &PriorConfig,
    cfg: &SamplerConfig,
    basis_cfg: &BasisConfig,
) -> Result<PosteriorDraws> {
    let sizes: Vec<(&str, usize)> = groups.iter().map(|(n, t)| (*n, t.len())).collect();
    let layout = ModelLayout::groups(name, &sizes);
    let trains: Vec<SpikeTrain> = groups.iter().flat_map(|(_, t)| t.iter().cloned()).collect();
    Sampler::new(layout, &trains, prior, cfg, basis_cfg)?.run()
}

/// Draws a full parameter vector from the prior (tau drawn from its half-t
/// representation, phi from N(0, tau I)).
pub fn sample_prior<R: Rng + ?Sized>(prior: &PriorConfig, n_sets: usize, dim: usize, rng: &mut R) -> Theta {
    let mut sets = Vec::with_capacity(n_sets);
    let mut tau = Vec::with_capacity(n_sets);
    let mut aux = Vec::with_capacity(n_sets);
    for _ in 0..n_sets {
        let current = prior.sample_current(rng);
        let sigma = prior.sample_sigma(rng);
        let (t, a) = prior.sample_tau(rng);
        let sd = t.sqrt();
        let phi = (0..dim)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                sd * z
            })
            .collect();
        sets.push(StimulusParams { current, sigma, phi });
        tau.push(t);
        aux.push(a);
    }
    Theta { sets, tau, aux, delta: prior.sample_delta(rng) }
}
