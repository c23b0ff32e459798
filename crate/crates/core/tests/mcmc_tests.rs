mod common;

use common::{bits_of, ig_cdf, ig_pdf, ks_distance, path_density, path_from_bits, std_normal_cdf};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use spikerace::filter::RaceTrain;
use spikerace::igdist::{CompetitionParams, StimulusParams};
use spikerace::mcmc::ensemble::{ensemble_delta_labels, ensemble_weights, DeltaProposal};
use spikerace::mcmc::hmc::{adapt_mass, hmc_transition, BlockTuning};
use spikerace::mcmc::posterior::{log_posterior_and_grad, Block, ModelData, Owner, Theta};
use spikerace::mcmc::priors::{gibbs_tau, PriorConfig};
use spikerace::mcmc::{run_chain, ModelKind, ModelLayout, Phase, Sampler, SamplerConfig};
use spikerace::quadrature::{integrate, integrate_to_infinity};
use spikerace::rng::substream;
use spikerace::simulate::{simulate_competition, simulate_dataset, simulate_iigpp, DatasetSpec};
use spikerace::splines::{Basis, BasisConfig};
use spikerace::train::{Label, PreparedTrain, SpikeTrain};
use statrs::distribution::{ChiSquared, Continuous, ContinuousCDF, Gamma, LogNormal, StudentsT};

fn basis() -> Basis {
    Basis::new(&BasisConfig::for_window(1.0)).unwrap()
}

fn short_cfg(seed: u64) -> SamplerConfig {
    SamplerConfig { warmup1: 100, warmup2: 200, samples: 200, adaptation_interval: 50, seed, ..SamplerConfig::default() }
}

/// A competition model over a small simulated triplet, at a random state.
fn random_competition_state(seed: u64) -> (ModelData, Theta, Vec<Vec<Label>>) {
    let b = basis();
    let d = simulate_dataset(&DatasetSpec::preset("supp-3.1-competition", 3).unwrap(), &b, seed).unwrap();
    let layout = ModelLayout::for_model(ModelKind::Competition, &d.triplet);
    let trains: Vec<SpikeTrain> = d.triplet.all_trains().map(|(_, t)| t.clone()).collect();
    let s = Sampler::new(layout, &trains, &PriorConfig::default(), &short_cfg(seed), &BasisConfig::for_window(1.0)).unwrap();
    let mut rng = substream(seed, &[9]);
    let mut theta = s.theta.clone();
    for (k, set) in theta.sets.iter_mut().enumerate() {
        set.current *= rng.random_range(0.7..1.4);
        set.sigma *= rng.random_range(0.7..1.4);
        for p in set.phi.iter_mut() {
            *p = rng.random_range(-0.4..0.4);
        }
        theta.tau[k] = rng.random_range(0.05..2.0);
    }
    (s.data, theta, s.labels)
}

fn check_gradient(data: &ModelData, theta: &Theta, labels: &[Vec<Label>], block: Block) -> Result<(), String> {
    let prior = PriorConfig::default();
    let (_, g) = log_posterior_and_grad(data, theta, labels, &prior, block);
    let q = theta.block_vector(block);
    let h = 1e-5;
    for i in 0..q.len() {
        let eval = |d: f64| {
            let mut th = theta.clone();
            let mut qq = q.clone();
            qq[i] += d;
            th.set_block(block, &qq);
            log_posterior_and_grad(data, &th, labels, &prior, block).0
        };
        let fd = (eval(h) - eval(-h)) / (2.0 * h);
        if (fd - g[i]).abs() > 1e-4 * (1.0 + g[i].abs()) {
            return Err(format!("{block:?}[{i}]: analytic {} vs fd {fd}", g[i]));
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn gradients_match_finite_differences(seed in any::<u64>()) {
        let (data, theta, labels) = random_competition_state(seed);
        for block in [Block::Is, Block::Phi] {
            if let Err(e) = check_gradient(&data, &theta, &labels, block) {
                prop_assert!(false, "{}", e);
            }
        }
    }
}

#[test]
fn empty_data_leaves_only_the_prior() {
    let prior = PriorConfig::default();
    let data = ModelData { n_sets: 1, dim: 6, trains: vec![], owners: vec![] };
    let theta = Theta {
        sets: vec![StimulusParams { current: 33.0, sigma: 4.2, phi: vec![0.1, -0.2, 0.3, 0.0, 0.5, -0.1] }],
        tau: vec![0.7],
        aux: vec![1.0],
        delta: 0.0,
    };
    let (v, _) = log_posterior_and_grad(&data, &theta, &[], &prior, Block::Is);
    // Densities of ln I and ln sigma: IG(mean, shape) times the Jacobian.
    let want = (ig_pdf(33.0, prior.alpha_i, prior.beta_i) * 33.0).ln()
        + (ig_pdf(4.2, prior.alpha_sigma, prior.beta_sigma) * 4.2).ln();
    assert!((v - want).abs() < 1e-10, "{v} vs {want}");
    let (v, _) = log_posterior_and_grad(&data, &theta, &[], &prior, Block::Phi);
    let want = -theta.sets[0].phi.iter().map(|p| p * p).sum::<f64>() / (2.0 * 0.7);
    assert!((v - want).abs() < 1e-12);
}

#[test]
fn duplicated_data_doubles_the_likelihood() {
    let (data, theta, labels) = random_competition_state(5);
    let prior = PriorConfig::default();
    let empty = ModelData { n_sets: data.n_sets, dim: data.dim, trains: vec![], owners: vec![] };
    let doubled = ModelData {
        trains: data.trains.iter().chain(&data.trains).cloned().collect(),
        owners: data.owners.iter().chain(&data.owners).copied().collect(),
        ..data.clone()
    };
    let labels2: Vec<Vec<Label>> = labels.iter().chain(&labels).cloned().collect();
    for block in [Block::Is, Block::Phi] {
        let p0 = log_posterior_and_grad(&empty, &theta, &[], &prior, block).0;
        let p1 = log_posterior_and_grad(&data, &theta, &labels, &prior, block).0;
        let p2 = log_posterior_and_grad(&doubled, &theta, &labels2, &prior, block).0;
        assert!(((p2 - p0) - 2.0 * (p1 - p0)).abs() < 1e-8 * (1.0 + (p1 - p0).abs()));
    }
}

#[test]
fn prior_only_chain_recovers_the_prior() {
    // The default half-t(0.25) scale spreads ln tau over dozens of units and
    // mixes far too slowly for a KS check; a lighter tail keeps it testable.
    let prior = PriorConfig { nu: 4.0, gamma: 1.0, ..PriorConfig::default() };
    let cfg = SamplerConfig { warmup1: 500, warmup2: 1500, seed: 4, ..SamplerConfig::default() };
    let layout = ModelLayout::groups("prior", &[("A", 0)]);
    let mut s = Sampler::new(layout, &[], &prior, &cfg, &BasisConfig::for_window(1.0)).unwrap();
    for _ in 0..cfg.warmup1 {
        s.sweep(Phase::Warmup1).unwrap();
    }
    for _ in 0..cfg.warmup2 {
        s.sweep(Phase::Warmup2).unwrap();
    }
    let (n, thin) = (20_000, 40);
    let (mut cur, mut sig, mut z, mut root_tau) = (vec![], vec![], vec![], vec![]);
    for i in 0..n * thin {
        s.sweep(Phase::Sampling).unwrap();
        if i % thin == 0 {
            let set = &s.theta.sets[0];
            cur.push(set.current);
            sig.push(set.sigma);
            z.push(set.phi[0] / s.theta.tau[0].sqrt());
            root_tau.push(s.theta.tau[0].sqrt());
        }
    }
    let crit = 1.95 / (n as f64).sqrt();
    let t = StudentsT::new(0.0, 1.0, prior.nu).unwrap();
    let checks = [
        ("I", ks_distance(&mut cur, |x| ig_cdf(x, prior.alpha_i, prior.beta_i))),
        ("sigma", ks_distance(&mut sig, |x| ig_cdf(x, prior.alpha_sigma, prior.beta_sigma))),
        ("phi/sqrt(tau)", ks_distance(&mut z, std_normal_cdf)),
        ("sqrt(tau)", ks_distance(&mut root_tau, |x| 2.0 * t.cdf(x / prior.gamma) - 1.0)),
    ];
    for (name, d) in checks {
        assert!(d < crit, "{name}: KS {d} >= {crit}");
    }
}

#[test]
fn tau_gibbs_targets_its_conditional() {
    let prior = PriorConfig::default();
    let phi = [0.3, -0.2, 0.5, 0.1, -0.4, 0.2];
    let ss: f64 = phi.iter().map(|p| p * p).sum();
    let t = StudentsT::new(0.0, 1.0, prior.nu).unwrap();
    // Density of u = ln tau given phi: N(phi | 0, tau I) times the half-t
    // induced prior on tau, times the Jacobian tau.
    let dens = |u: f64| {
        let tau = u.exp();
        let root = tau.sqrt();
        let p_tau = 2.0 * t.pdf(root / prior.gamma) / prior.gamma / (2.0 * root);
        (-(phi.len() as f64) / 2.0 * u - ss / (2.0 * tau)).exp() * p_tau * tau
    };
    let edges: Vec<f64> = (0..=20).map(|i| -5.0 + 0.4 * i as f64).collect();
    let mut probs = vec![integrate(dens, -60.0, edges[0], 1e-13).unwrap().value];
    for w in edges.windows(2) {
        probs.push(integrate(dens, w[0], w[1], 1e-13).unwrap().value);
    }
    probs.push(integrate_to_infinity(dens, edges[20], 1e-13).unwrap().value);
    let z: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= z);

    let mut rng = substream(8, &[]);
    let mut aux = 1.0;
    let mut counts = vec![0u64; probs.len()];
    for i in 0..300_000 {
        let (tau, a) = gibbs_tau(&phi, aux, &prior, &mut rng);
        aux = a;
        if i % 3 == 0 {
            let u = tau.ln();
            let bin = edges.iter().position(|&e| u <= e).unwrap_or(edges.len());
            counts[bin] += 1;
        }
    }
    let stat = common::chi_square(&counts, &probs);
    let df = probs.iter().filter(|p| **p > 0.0).count() - 1;
    let crit = ChiSquared::new(df as f64).unwrap().inverse_cdf(0.999);
    assert!(stat < crit, "chi2 {stat} >= {crit}");
}

#[test]
fn ensemble_weights_match_explicit_formula() {
    let prior = PriorConfig { alpha_delta: 2.0, beta_delta: 50.0, ..PriorConfig::default() };
    let q = DeltaProposal::new(&prior, 0.3, ((0.04f64).ln(), 0.5));
    let cands = [0.01, 0.05, 0.002];
    let ll: [f64; 3] = [-10.0, -12.5, -9.0];
    let g = Gamma::new(2.0, 50.0).unwrap();
    let ln = LogNormal::new(0.04f64.ln(), 0.5f64.sqrt()).unwrap();
    let raw: Vec<f64> = cands
        .iter()
        .zip(&ll)
        .map(|(&d, &l)| l.exp() * g.pdf(d) / (0.3 * g.pdf(d) + 0.7 * ln.pdf(d)))
        .collect();
    let total: f64 = raw.iter().sum();
    let got = ensemble_weights(&cands, &ll, &q).unwrap();
    for (g, r) in got.iter().zip(&raw) {
        assert!((g.exp() - r / total).abs() < 1e-12);
    }
}

#[test]
fn ensemble_kernel_leaves_delay_posterior_invariant() {
    let b = basis();
    let prior = PriorConfig { alpha_delta: 2.0, beta_delta: 50.0, ..PriorConfig::default() };
    let cp = CompetitionParams {
        a: StimulusParams { current: 40.0, sigma: 6.3, phi: vec![0.2, -0.1, 0.0, 0.1, 0.2, -0.2] },
        b: StimulusParams { current: 80.0, sigma: 8.9, phi: vec![0.0; 6] },
        delta: 0.03,
    };
    let trains: Vec<SpikeTrain> = (0..3).map(|i| simulate_competition(&cp, &b, 0.4, 500 + i).train).collect();
    let prepared: Vec<PreparedTrain> = trains.iter().map(|t| PreparedTrain::new(t, &b).unwrap()).collect();
    let races: Vec<RaceTrain> = prepared.iter().map(|p| RaceTrain::new(&cp.a, &cp.b, p)).collect();
    let g = Gamma::new(2.0, 50.0).unwrap();
    let loglik = |d: f64| races.iter().map(|r| r.loglik(d)).sum::<f64>();
    let ll_ref = loglik(0.03);
    let dens = |d: f64| if d > 0.0 { g.pdf(d) * (loglik(d) - ll_ref).exp() } else { 0.0 };

    let edges: Vec<f64> = (1..=15).map(|i| 0.01 * i as f64).collect();
    // Integrate between every kink of the likelihood (the ISIs).
    let mut kinks: Vec<f64> = trains.iter().flat_map(|t| t.isis()).filter(|&x| x < 0.15).collect();
    kinks.extend(&edges);
    kinks.push(0.0);
    kinks.sort_by(f64::total_cmp);
    kinks.dedup();
    let mut probs = vec![0.0; edges.len() + 1];
    for w in kinks.windows(2) {
        let bin = edges.iter().position(|&e| w[1] <= e + 1e-15).unwrap();
        probs[bin] += integrate(dens, w[0], w[1], 1e-12).unwrap().value;
    }
    probs[edges.len()] = integrate_to_infinity(dens, 0.15, 1e-12).unwrap().value;
    let z: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= z);

    let q = DeltaProposal::new(&prior, 0.3, ((0.03f64).ln(), 0.5));
    let mut rng = substream(17, &[]);
    let mut delta = 0.03;
    let mut counts = vec![0u64; probs.len()];
    for i in 0..100_000 {
        let out = ensemble_delta_labels(&races, delta, &q, 5, &mut rng).unwrap();
        delta = out.delta;
        if i % 10 == 0 {
            let bin = edges.iter().position(|&e| delta <= e).unwrap_or(edges.len());
            counts[bin] += 1;
        }
    }
    let stat = common::chi_square(&counts, &probs);
    let df = probs.iter().filter(|p| **p > 0.0).count() - 1;
    let crit = ChiSquared::new(df as f64).unwrap().inverse_cdf(0.999);
    assert!(stat < crit, "chi2 {stat} >= {crit}; counts {counts:?} probs {probs:?}");
}

#[test]
fn mass_adaptation_inverts_the_sample_covariance() {
    let sigma = DMatrix::from_row_slice(3, 3, &[2.0, 0.6, -0.3, 0.6, 1.0, 0.2, -0.3, 0.2, 0.5]);
    let l = sigma.clone().cholesky().unwrap().l();
    let mut rng = substream(2, &[]);
    let hist: Vec<Vec<f64>> = (0..50_000)
        .map(|_| {
            let z = nalgebra::DVector::from_fn(3, |_, _| StandardNormal.sample(&mut rng));
            (&l * z).iter().copied().collect()
        })
        .collect();
    let m = adapt_mass(&hist, 0.001).unwrap();
    let want = (&sigma + DMatrix::identity(3, 3) * 0.001).try_inverse().unwrap();
    assert!((&m - &want).norm() / want.norm() < 0.03, "{m} vs {want}");
    assert!(adapt_mass(&hist[..1], 0.001).is_none());
    let flat = vec![vec![1.0, 1.0]; 10];
    // Zero sample covariance still gives reg * I after regularization.
    let m = adapt_mass(&flat, 0.001).unwrap();
    assert!((m[(0, 0)] - 1000.0).abs() < 1e-6);
}

#[test]
fn dense_mass_hmc_samples_a_correlated_gaussian() {
    let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 0.95, 0.95, 1.0]);
    let prec = sigma.clone().try_inverse().unwrap();
    let mu = [1.0, -2.0];
    let logp = |q: &[f64]| {
        let d = nalgebra::DVector::from_vec(vec![q[0] - mu[0], q[1] - mu[1]]);
        let g = -(&prec * &d);
        (0.5 * d.dot(&g), g.iter().copied().collect::<Vec<f64>>())
    };
    let tuning = BlockTuning::with_mass(&prec, 0.3).unwrap();
    let mut rng = substream(6, &[]);
    let mut q = vec![0.0, 0.0];
    let n = 40_000;
    let (mut s, mut s2, mut sxy) = ([0.0; 2], [0.0; 2], 0.0);
    let mut acc = 0.0;
    for _ in 0..n {
        let o = hmc_transition(&q, logp, &tuning, 10, &mut rng);
        acc += o.accept_prob;
        q = o.q;
        for i in 0..2 {
            s[i] += q[i];
            s2[i] += q[i] * q[i];
        }
        sxy += q[0] * q[1];
    }
    let nf = n as f64;
    let m = [s[0] / nf, s[1] / nf];
    for i in 0..2 {
        assert!((m[i] - mu[i]).abs() < 0.05, "mean {m:?}");
        let v = s2[i] / nf - m[i] * m[i];
        assert!((v - 1.0).abs() < 0.05, "var {v}");
    }
    let c = sxy / nf - m[0] * m[1];
    assert!((c - 0.95).abs() < 0.05, "cov {c}");
    assert!(acc / nf > 0.8);
}

#[test]
fn short_competition_chain_is_well_formed_and_reproducible() {
    let b = basis();
    let d = simulate_dataset(&DatasetSpec::preset("supp-3.1-competition", 5).unwrap(), &b, 31).unwrap();
    let prior = PriorConfig::default();
    let cfg = short_cfg(12);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| run_chain(&d.triplet, ModelKind::Competition, &prior, &cfg, &BasisConfig::for_window(1.0)).unwrap())
    };
    let post = run(1);
    assert_eq!(post, run(3));
    assert_eq!(post.draws.len(), cfg.samples);
    assert_eq!(post.n_trains, d.triplet.n_trains());
    for draw in &post.draws {
        let delta = draw.delta.unwrap();
        assert!(delta >= 0.0);
        assert!(draw.sets.iter().all(|s| s.current > 0.0 && s.sigma > 0.0));
        assert!(draw.train_loglik.iter().all(|v| v.is_finite()));
        for (labels, t) in draw.labels.iter().zip(&d.triplet.ab_trials) {
            assert_eq!(labels.len(), t.len());
            let isi = t.isis();
            for j in 1..labels.len() {
                assert!(labels[j] == labels[j - 1] || isi[j] > delta);
            }
        }
    }
    let layout = ModelLayout::for_model(ModelKind::Competition, &d.triplet);
    assert_eq!(layout.owners.iter().filter(|o| **o == Owner::Race).count(), d.triplet.ab_trials.len());
}

#[test]
fn iigpp_chain_locates_the_rate() {
    let b = basis();
    let truth = StimulusParams { current: 60.0, sigma: 60f64.sqrt(), phi: vec![0.0; 6] };
    let trains: Vec<SpikeTrain> = (0..30).map(|i| simulate_iigpp(&truth, &b, 1.0, 900 + i)).collect();
    let layout = ModelLayout::groups("one", &[("A", trains.len())]);
    let s = Sampler::new(layout, &trains, &PriorConfig::default(), &short_cfg(3), &BasisConfig::for_window(1.0)).unwrap();
    let post = s.run().unwrap();
    let mut cur = post.column(|d| d.sets[0].current);
    cur.sort_by(f64::total_cmp);
    let (lo, hi) = (cur[cur.len() / 40], cur[cur.len() * 39 / 40]);
    assert!(lo < 60.0 && 60.0 < hi, "95% interval ({lo}, {hi})");
}

#[test]
fn one_ensemble_sweep_preserves_the_exact_joint_posterior() {
    let b = basis();
    let prior = PriorConfig { alpha_delta: 2.0, beta_delta: 20.0, ..PriorConfig::default() };
    let base = CompetitionParams {
        a: StimulusParams { current: 5.0, sigma: 2.0, phi: vec![0.1, 0.0, -0.1, 0.2, 0.0, 0.1] },
        b: StimulusParams { current: 8.0, sigma: 3.0, phi: vec![0.0; 6] },
        delta: 0.0,
    };
    let train = SpikeTrain::new(vec![0.12, 0.31], 1.0).unwrap();
    let with = |d: f64| CompetitionParams { delta: d, ..base.clone() };
    let path_dens = |bits: usize, d: f64| path_density(&with(d), &b, &train, &path_from_bits(bits, 2), 2);
    let lik = |d: f64| (0..4).map(|k| path_dens(k, d)).sum::<f64>();
    let g = Gamma::new(2.0, 20.0).unwrap();

    // Exact probabilities of (label path, delta bin), integrating across the kinks.
    let edges = [0.03, 0.06, 0.09, 0.12, 0.15, 0.19, 0.25, 0.35, 0.5];
    let kinks = [0.0, 0.03, 0.06, 0.09, 0.12, 0.15, 0.19, 0.25, 0.35, 0.5];
    let nb = edges.len() + 1;
    let mut probs = vec![0.0; 4 * nb];
    for k in 0..4 {
        let f = |d: f64| if d > 0.0 { g.pdf(d) * path_dens(k, d) } else { 0.0 };
        for (i, w) in kinks.windows(2).enumerate() {
            probs[k * nb + i] = integrate(f, w[0], w[1], 1e-13).unwrap().value;
        }
        // Split the tail at the censoring kink (window end minus last spike).
        probs[k * nb + nb - 1] = integrate(f, 0.5, 0.69, 1e-13).unwrap().value
            + integrate_to_infinity(f, 0.69, 1e-13).unwrap().value;
    }
    let z: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= z);

    // Exact marginal draws of delta by rejection from the prior.
    let l_max = (0..20_000).map(|i| lik(i as f64 * 1e-4)).fold(0.0, f64::max) * 1.05;
    let prepared = PreparedTrain::new(&train, &b).unwrap();
    let races = vec![RaceTrain::new(&base.a, &base.b, &prepared)];
    let q = DeltaProposal::new(&prior, 0.3, ((0.1f64).ln(), 0.5));
    let mut rng = substream(44, &[]);
    let gamma = rand_distr::Gamma::new(2.0, 1.0 / 20.0).unwrap();
    let mut counts = vec![0u64; 4 * nb];
    for _ in 0..200_000 {
        let d0 = loop {
            let d: f64 = gamma.sample(&mut rng);
            if rng.random::<f64>() * l_max < lik(d) {
                break d;
            }
        };
        let out = ensemble_delta_labels(&races, d0, &q, 5, &mut rng).unwrap();
        let bin = edges.iter().position(|&e| out.delta <= e).unwrap_or(edges.len());
        counts[bits_of(&out.labels[0]) * nb + bin] += 1;
    }
    let stat = common::chi_square(&counts, &probs);
    let df = probs.iter().filter(|p| **p > 0.0).count() - 1;
    let crit = ChiSquared::new(df as f64).unwrap().inverse_cdf(0.999);
    assert!(stat < crit, "chi2 {stat} >= {crit}; counts {counts:?} probs {probs:?}");
}
