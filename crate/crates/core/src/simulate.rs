//! Forward simulation of IIGPP, competition, winner-take-all and HMM spike trains.

use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::igdist::{CompetitionParams, Racers, StimulusParams};
use crate::rng::{substream, Stream};
use crate::splines::Basis;
use crate::train::{Label, LabeledTrain, SpikeTrain, Triplet};

/// Inverse-Gaussian draw with mean `mu` and shape `lambda`
/// (Michael, Schucany and Haas transformation).
pub fn sample_ig<R: Rng + ?Sized>(mu: f64, lambda: f64, rng: &mut R) -> f64 {
    let n: f64 = StandardNormal.sample(rng);
    let z = mu * n * n / (2.0 * lambda);
    // mu * (1 + z - sqrt(z^2 + 2z)), written to avoid cancellation
    let x1 = mu / (1.0 + z + (z * z + 2.0 * z).sqrt());
    let u: f64 = rng.random();
    if u * (mu + x1) <= mu {
        x1
    } else {
        mu * mu / x1
    }
}

#[inline]
fn sample_isi<R: Rng + ?Sized>(rate: f64, sigma: f64, rng: &mut R) -> f64 {
    sample_ig(1.0 / rate, 1.0 / (sigma * sigma), rng)
}

/// One race after a spike won by `prev` (`None` for the first spike).
/// Returns the ISI and the winning label; ties go to A.
pub fn race_step<R: Rng + ?Sized>(racers: &Racers, prev: Option<Label>, delta: f64, rng: &mut R) -> (f64, Label) {
    let mut t = [0.0; 2];
    for s in Label::BOTH {
        let delay = match prev {
            Some(p) if p != s => delta,
            _ => 0.0,
        };
        t[s.index()] = delay + sample_isi(racers.rate[s.index()], racers.sigma[s.index()], rng);
    }
    if t[0] <= t[1] {
        (t[0], Label::A)
    } else {
        (t[1], Label::B)
    }
}

pub fn simulate_iigpp_with<R: Rng + ?Sized>(p: &StimulusParams, basis: &Basis, t_end: f64, rng: &mut R) -> SpikeTrain {
    let mut spikes = Vec::new();
    let mut s = 0.0;
    loop {
        let rate = p.rate(basis, s).expect("spike times stay inside the window");
        let x = sample_isi(rate, p.sigma, rng);
        if s + x > t_end {
            break;
        }
        s += x;
        spikes.push(s);
    }
    SpikeTrain { spikes, window_end: t_end }
}

pub fn simulate_iigpp(p: &StimulusParams, basis: &Basis, t_end: f64, seed: u64) -> SpikeTrain {
    simulate_iigpp_with(p, basis, t_end, &mut substream(seed, &[]))
}

pub fn simulate_competition_with<R: Rng + ?Sized>(
    cp: &CompetitionParams,
    basis: &Basis,
    t_end: f64,
    rng: &mut R,
) -> LabeledTrain {
    let mut spikes = Vec::new();
    let mut labels = Vec::new();
    let mut s = 0.0;
    let mut prev = None;
    loop {
        let racers = Racers::at(cp, basis, s).expect("spike times stay inside the window");
        let (x, w) = race_step(&racers, prev, cp.delta, rng);
        if s + x > t_end {
            break;
        }
        s += x;
        spikes.push(s);
        labels.push(w);
        prev = Some(w);
    }
    LabeledTrain { train: SpikeTrain { spikes, window_end: t_end }, labels }
}

pub fn simulate_competition(cp: &CompetitionParams, basis: &Basis, t_end: f64, seed: u64) -> LabeledTrain {
    simulate_competition_with(cp, basis, t_end, &mut substream(seed, &[]))
}

pub fn simulate_wta(
    a: &StimulusParams,
    b: &StimulusParams,
    winner: Label,
    basis: &Basis,
    t_end: f64,
    seed: u64,
) -> SpikeTrain {
    let p = match winner {
        Label::A => a,
        Label::B => b,
    };
    simulate_iigpp(p, basis, t_end, seed)
}

pub fn simulate_hmm_with<R: Rng + ?Sized>(
    a: &StimulusParams,
    b: &StimulusParams,
    p_stay: f64,
    basis: &Basis,
    t_end: f64,
    rng: &mut R,
) -> Result<LabeledTrain> {
    if !(0.0..=1.0).contains(&p_stay) {
        return Err(Error::InvalidParameter(format!("p_stay must lie in [0, 1], got {p_stay}")));
    }
    let mut spikes = Vec::new();
    let mut labels = Vec::new();
    let mut s = 0.0;
    let mut label = if rng.random::<f64>() < 0.5 { Label::A } else { Label::B };
    loop {
        let p = if label == Label::A { a } else { b };
        let rate = p.rate(basis, s)?;
        let x = sample_isi(rate, p.sigma, rng);
        if s + x > t_end {
            break;
        }
        s += x;
        spikes.push(s);
        labels.push(label);
        if rng.random::<f64>() >= p_stay {
            label = label.complement();
        }
    }
    Ok(LabeledTrain { train: SpikeTrain { spikes, window_end: t_end }, labels })
}

pub fn simulate_hmm(
    a: &StimulusParams,
    b: &StimulusParams,
    p_stay: f64,
    basis: &Basis,
    t_end: f64,
    seed: u64,
) -> Result<LabeledTrain> {
    simulate_hmm_with(a, b, p_stay, basis, t_end, &mut substream(seed, &[]))
}

/// Distribution of a scalar parameter in a dataset spec. Normal-type
/// distributions take a variance, not a standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case")]
pub enum ParamDist {
    Fixed { value: f64 },
    /// Normal(mean, var) truncated to `[lower, inf)`.
    TruncNormal {
        mean: f64,
        var: f64,
        #[serde(default)]
        lower: f64,
    },
    LogNormal { mu: f64, var: f64 },
    Uniform { lo: f64, hi: f64 },
    Beta { a: f64, b: f64 },
    /// Zero with probability `zero_prob`, otherwise a draw from `inner`.
    ZeroInflated { zero_prob: f64, inner: Box<ParamDist> },
}

impl ParamDist {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        match self {
            ParamDist::Fixed { value } if !value.is_finite() => bad(format!("fixed value {value} is not finite")),
            ParamDist::TruncNormal { mean, var, lower } => {
                if !(*var >= 0.0 && mean.is_finite() && lower.is_finite()) {
                    return bad(format!("truncated normal needs var >= 0 and finite bounds, got mean {mean} var {var}"));
                }
                if *var == 0.0 && mean < lower {
                    return bad(format!("degenerate truncated normal at {mean} lies below {lower}"));
                }
                Ok(())
            }
            ParamDist::LogNormal { mu, var } if !(mu.is_finite() && *var >= 0.0) => {
                bad(format!("log-normal needs finite mu and var >= 0, got {mu}, {var}"))
            }
            ParamDist::Uniform { lo, hi } if !(lo <= hi) => bad(format!("uniform needs lo <= hi, got {lo}, {hi}")),
            ParamDist::Beta { a, b } if !(*a > 0.0 && *b > 0.0) => bad(format!("beta needs positive shapes, got {a}, {b}")),
            ParamDist::ZeroInflated { zero_prob, inner } => {
                if !(0.0..=1.0).contains(zero_prob) {
                    return bad(format!("zero probability {zero_prob} outside [0, 1]"));
                }
                inner.validate()
            }
            _ => Ok(()),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            ParamDist::Fixed { value } => *value,
            ParamDist::TruncNormal { mean, var, lower } => {
                let sd = var.sqrt();
                loop {
                    let z: f64 = StandardNormal.sample(rng);
                    let v = mean + sd * z;
                    if v >= *lower && (v > 0.0 || *lower > 0.0 || sd == 0.0) {
                        return v;
                    }
                }
            }
            ParamDist::LogNormal { mu, var } => {
                let z: f64 = StandardNormal.sample(rng);
                (mu + var.sqrt() * z).exp()
            }
            ParamDist::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            ParamDist::Beta { a, b } => Beta::new(*a, *b).expect("validated").sample(rng),
            ParamDist::ZeroInflated { zero_prob, inner } => {
                if rng.random::<f64>() < *zero_prob {
                    0.0
                } else {
                    inner.sample(rng)
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StimulusDist {
    pub current: ParamDist,
    pub sigma: ParamDist,
    /// Each spline coefficient is N(0, phi_var).
    pub phi_var: f64,
}

impl StimulusDist {
    fn sample<R: Rng + ?Sized>(&self, dim: usize, rng: &mut R) -> StimulusParams {
        let current = self.current.sample(rng);
        let sigma = self.sigma.sample(rng);
        let sd = self.phi_var.sqrt();
        let phi = (0..dim)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                sd * z
            })
            .collect();
        StimulusParams { current, sigma, phi }
    }

    fn validate(&self) -> Result<()> {
        self.current.validate()?;
        self.sigma.validate()?;
        if !(self.phi_var >= 0.0) {
            return Err(Error::Config(format!("phi_var must be nonnegative, got {}", self.phi_var)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Generator {
    Competition { a: StimulusDist, b: StimulusDist, delta: ParamDist },
    Iigpp { a: StimulusDist, b: StimulusDist, ab: StimulusDist },
    /// AB trials copy A with probability `p_a`, otherwise B.
    Wta {
        a: StimulusDist,
        b: StimulusDist,
        #[serde(default = "half")]
        p_a: f64,
    },
    Hmm { a: StimulusDist, b: StimulusDist, p_stay: ParamDist },
}

fn half() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub generator: Generator,
    pub n_a: usize,
    pub n_b: usize,
    pub n_ab: usize,
    pub window_end: f64,
}

/// Parameters a dataset was generated from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub model: String,
    pub a: StimulusParams,
    pub b: StimulusParams,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ab: Option<StimulusParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_stay: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub winner: Option<Label>,
    /// Per-spike labels of the AB trials, when the generator has them.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ab_labels: Option<Vec<Vec<Label>>>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub triplet: Triplet,
    pub truth: GroundTruth,
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.window_end > 0.0 && self.window_end.is_finite()) {
            return Err(Error::Config(format!("window_end must be positive, got {}", self.window_end)));
        }
        for (name, n) in [("n_a", self.n_a), ("n_b", self.n_b), ("n_ab", self.n_ab)] {
            if n < 1 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        match &self.generator {
            Generator::Competition { a, b, delta } => {
                a.validate()?;
                b.validate()?;
                delta.validate()
            }
            Generator::Iigpp { a, b, ab } => {
                a.validate()?;
                b.validate()?;
                ab.validate()
            }
            Generator::Wta { a, b, p_a } => {
                a.validate()?;
                b.validate()?;
                if !(0.0..=1.0).contains(p_a) {
                    return Err(Error::Config(format!("p_a must lie in [0, 1], got {p_a}")));
                }
                Ok(())
            }
            Generator::Hmm { a, b, p_stay } => {
                a.validate()?;
                b.validate()?;
                p_stay.validate()
            }
        }
    }

    /// Named protocol from the simulation studies, with `n` trials per condition on [0, 1].
    pub fn preset(name: &str, n: usize) -> Result<Self> {
        let tn = |mean: f64, var: f64| ParamDist::TruncNormal { mean, var, lower: 0.0 };
        let tnl = |mean: f64, var: f64, lower: f64| ParamDist::TruncNormal { mean, var, lower };
        let sd = |current, sigma| StimulusDist { current, sigma, phi_var: 0.09 };
        let generator = match name {
            "supp-3.1-competition" => Generator::Competition {
                a: sd(tn(40.0, 16.0), tn(40f64.sqrt(), 4.0)),
                b: sd(tn(80.0, 16.0), tn(80f64.sqrt(), 4.0)),
                delta: ParamDist::ZeroInflated {
                    zero_prob: 0.2,
                    inner: Box::new(ParamDist::LogNormal { mu: -2.5, var: 0.25 }),
                },
            },
            "supp-3.1-iigpp" => Generator::Iigpp {
                a: sd(tn(40.0, 16.0), tn(40f64.sqrt(), 4.0)),
                b: sd(tn(80.0, 16.0), tn(80f64.sqrt(), 4.0)),
                ab: sd(tn(80.0, 64.0), tn(60f64.sqrt(), 16.0)),
            },
            "supp-3.4-hmm" => Generator::Hmm {
                a: sd(tn(40.0, 16.0), tn(40f64.sqrt(), 4.0)),
                b: sd(tn(80.0, 16.0), tn(80f64.sqrt(), 4.0)),
                p_stay: ParamDist::Beta { a: 10.0, b: 2.0 },
            },
            "supp-3.5-wta" => Generator::Wta {
                a: sd(tn(40.0, 36.0), tn(40f64.sqrt(), 4.0)),
                b: sd(tn(80.0, 36.0), tn(80f64.sqrt(), 4.0)),
                p_a: 0.5,
            },
            "supp-3.5-competition" => Generator::Competition {
                a: sd(tn(40.0, 36.0), tn(40f64.sqrt(), 4.0)),
                b: sd(tn(80.0, 36.0), tn(80f64.sqrt(), 4.0)),
                delta: ParamDist::LogNormal { mu: -2.5, var: 0.25 },
            },
            "supp-4-recovery" => Generator::Competition {
                a: sd(tnl(40.0, 400.0, 10.0), tnl(40f64.sqrt(), 25.0, 3.0)),
                b: sd(tnl(80.0, 400.0, 10.0), tnl(80f64.sqrt(), 25.0, 3.0)),
                delta: ParamDist::ZeroInflated {
                    zero_prob: 0.2,
                    inner: Box::new(ParamDist::LogNormal { mu: -3.5, var: 1.0 }),
                },
            },
            other => {
                return Err(Error::Config(format!(
                    "unknown preset '{other}'; known presets: {}",
                    PRESETS.join(", ")
                )))
            }
        };
        Ok(Self { generator, n_a: n, n_b: n, n_ab: n, window_end: 1.0 })
    }
}

pub const PRESETS: [&str; 6] = [
    "supp-3.1-competition",
    "supp-3.1-iigpp",
    "supp-3.4-hmm",
    "supp-3.5-wta",
    "supp-3.5-competition",
    "supp-4-recovery",
];

/// Draws dataset-level parameters, then simulates every trial on its own
/// substream keyed by (condition, trial index).
pub fn simulate_dataset(spec: &DatasetSpec, basis: &Basis, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    let t_end = spec.window_end;
    let dim = basis.dim();
    let mut rng = substream(seed, &[0]);
    let trials = |cond: u64, n: usize, f: &(dyn Fn(&mut Stream) -> Result<LabeledTrain> + Sync)| {
        (0..n)
            .into_par_iter()
            .map(|i| f(&mut substream(seed, &[1, cond, i as u64])))
            .collect::<Result<Vec<_>>>()
    };
    let iigpp = |p: StimulusParams| move |r: &mut Stream| Ok(unlabeled(simulate_iigpp_with(&p, basis, t_end, r)));

    let (truth, a, b, ab) = match &spec.generator {
        Generator::Competition { a, b, delta } => {
            let pa = a.sample(dim, &mut rng);
            let pb = b.sample(dim, &mut rng);
            let delta = delta.sample(&mut rng);
            let cp = CompetitionParams { a: pa.clone(), b: pb.clone(), delta };
            cp.validate()?;
            let ab = trials(2, spec.n_ab, &|r: &mut Stream| Ok(simulate_competition_with(&cp, basis, t_end, r)))?;
            let truth = GroundTruth {
                model: "competition".into(),
                a: pa.clone(),
                b: pb.clone(),
                ab: None,
                delta: Some(delta),
                p_stay: None,
                winner: None,
                ab_labels: Some(ab.iter().map(|t| t.labels.clone()).collect()),
            };
            (truth, pa, pb, ab)
        }
        Generator::Iigpp { a, b, ab } => {
            let pa = a.sample(dim, &mut rng);
            let pb = b.sample(dim, &mut rng);
            let pab = ab.sample(dim, &mut rng);
            pab.validate()?;
            let ab = trials(2, spec.n_ab, &iigpp(pab.clone()))?;
            let truth = GroundTruth {
                model: "iigpp".into(),
                a: pa.clone(),
                b: pb.clone(),
                ab: Some(pab),
                delta: None,
                p_stay: None,
                winner: None,
                ab_labels: None,
            };
            (truth, pa, pb, ab)
        }
        Generator::Wta { a, b, p_a } => {
            let pa = a.sample(dim, &mut rng);
            let pb = b.sample(dim, &mut rng);
            let winner = if rng.random::<f64>() < *p_a { Label::A } else { Label::B };
            let pw = if winner == Label::A { pa.clone() } else { pb.clone() };
            pw.validate()?;
            let ab = trials(2, spec.n_ab, &iigpp(pw))?;
            let truth = GroundTruth {
                model: "wta".into(),
                a: pa.clone(),
                b: pb.clone(),
                ab: None,
                delta: None,
                p_stay: None,
                winner: Some(winner),
                ab_labels: None,
            };
            (truth, pa, pb, ab)
        }
        Generator::Hmm { a, b, p_stay } => {
            let pa = a.sample(dim, &mut rng);
            let pb = b.sample(dim, &mut rng);
            let ps = p_stay.sample(&mut rng);
            pa.validate()?;
            pb.validate()?;
            let ab = trials(2, spec.n_ab, &|r: &mut Stream| simulate_hmm_with(&pa, &pb, ps, basis, t_end, r))?;
            let truth = GroundTruth {
                model: "hmm".into(),
                a: pa.clone(),
                b: pb.clone(),
                ab: None,
                delta: None,
                p_stay: Some(ps),
                winner: None,
                ab_labels: Some(ab.iter().map(|t| t.labels.clone()).collect()),
            };
            (truth, pa, pb, ab)
        }
    };
    a.validate()?;
    b.validate()?;
    let a_trials = trials(0, spec.n_a, &iigpp(a))?;
    let b_trials = trials(1, spec.n_b, &iigpp(b))?;
    let triplet = Triplet {
        window_end: t_end,
        a_trials: a_trials.into_iter().map(|t| t.train).collect(),
        b_trials: b_trials.into_iter().map(|t| t.train).collect(),
        ab_trials: ab.into_iter().map(|t| t.train).collect(),
    };
    Ok(Dataset { triplet, truth })
}

fn unlabeled(train: SpikeTrain) -> LabeledTrain {
    LabeledTrain { train, labels: Vec::new() }
}
