mod common;

use common::{ig_cdf, joint, ks_by_quadrature, ks_distance, rate_at};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, InverseGaussian};
use spikerace::igdist::{race_win_probability, CompetitionParams, Racers, StimulusParams};
use spikerace::quadrature::{integrate, integrate_to_infinity};
use spikerace::rng::substream;
use spikerace::simulate::{
    race_step, sample_ig, simulate_competition_with, simulate_dataset, simulate_hmm_with, simulate_iigpp,
    simulate_wta, DatasetSpec, PRESETS,
};
use spikerace::splines::{Basis, BasisConfig};
use spikerace::train::Label;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn basis() -> Basis {
    Basis::new(&BasisConfig::for_window(1.0)).unwrap()
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

/// Spike count of a sequential renewal simulation using the rand_distr IG sampler.
fn oracle_count<R: Rng>(p: &StimulusParams, b: &Basis, t_end: f64, rng: &mut R) -> usize {
    let mut s = 0.0;
    let mut n = 0;
    loop {
        let r = rate_at(p, b, s);
        let x = InverseGaussian::new(1.0 / r, 1.0 / (p.sigma * p.sigma)).unwrap().sample(rng);
        if s + x > t_end {
            return n;
        }
        s += x;
        n += 1;
    }
}

#[test]
fn iigpp_counts_match_independent_sampler() {
    let b = basis();
    let cases = [
        StimulusParams::homogeneous(40.0, 40f64.sqrt(), 6),
        StimulusParams { current: 25.0, sigma: 3.0, phi: vec![0.4, -0.3, 0.6, -0.2, 0.5, 0.1] },
    ];
    for (k, p) in cases.iter().enumerate() {
        let n = 10_000;
        let ours: Vec<f64> = (0..n).map(|i| simulate_iigpp(p, &b, 1.0, 1000 * k as u64 + i).len() as f64).collect();
        let mut rng = substream(77, &[k as u64]);
        let theirs: Vec<f64> = (0..n).map(|_| oracle_count(p, &b, 1.0, &mut rng) as f64).collect();
        let (m1, s1) = mean_se(&ours);
        let (m2, s2) = mean_se(&theirs);
        let z = (m1 - m2) / (s1 * s1 + s2 * s2).sqrt();
        assert!(z.abs() < 4.0, "case {k}: {m1} vs {m2} (z {z})");
    }
}

#[test]
fn ig_sampler_matches_cdf() {
    for &(mu, lambda) in &[(0.025, 0.025), (0.0125, 0.0125), (1.0, 20.0), (0.1, 0.001)] {
        let mut rng = substream(3, &[]);
        let mut xs: Vec<f64> = (0..50_000).map(|_| sample_ig(mu, lambda, &mut rng)).collect();
        let d = ks_distance(&mut xs, |x| ig_cdf(x, mu, lambda));
        // 99.9% KS critical value is about 1.95 / sqrt(n).
        assert!(d < 1.95 / (50_000f64).sqrt(), "mu {mu} lambda {lambda}: D = {d}");
    }
}

#[test]
fn wta_delegates_to_iigpp() {
    let b = basis();
    let a = StimulusParams::homogeneous(40.0, 6.0, 6);
    let bb = StimulusParams { current: 80.0, sigma: 9.0, phi: vec![0.2; 6] };
    for seed in 0..20 {
        assert_eq!(simulate_wta(&a, &bb, Label::A, &b, 1.0, seed), simulate_iigpp(&a, &b, 1.0, seed));
        assert_eq!(simulate_wta(&a, &bb, Label::B, &b, 1.0, seed), simulate_iigpp(&bb, &b, 1.0, seed));
    }
}

#[test]
fn symmetric_race_splits_labels_evenly() {
    let b = basis();
    let p = StimulusParams::homogeneous(40.0, 40f64.sqrt(), 6);
    let cp = CompetitionParams { a: p.clone(), b: p, delta: 0.0 };
    let mut rng = substream(11, &[]);
    let mut n_a = 0usize;
    let mut n = 0usize;
    for _ in 0..2000 {
        let t = simulate_competition_with(&cp, &b, 1.0, &mut rng);
        n_a += t.labels.iter().filter(|l| **l == Label::A).count();
        n += t.labels.len();
    }
    let f = n_a as f64 / n as f64;
    // Labels within a train are dependent only through timing; treat as binomial with slack.
    let se = (0.25 / n as f64).sqrt();
    assert!((f - 0.5).abs() < 4.0 * se, "fraction {f}");
}

#[test]
fn hmm_stay_frequency() {
    let b = basis();
    let a = StimulusParams::homogeneous(40.0, 6.0, 6);
    let bb = StimulusParams::homogeneous(80.0, 9.0, 6);
    let mut rng = substream(5, &[]);
    let (mut stays, mut pairs) = (0usize, 0usize);
    for _ in 0..2000 {
        let t = simulate_hmm_with(&a, &bb, 0.8, &b, 1.0, &mut rng).unwrap();
        for w in t.labels.windows(2) {
            pairs += 1;
            stays += (w[0] == w[1]) as usize;
        }
    }
    let f = stays as f64 / pairs as f64;
    let se = (0.16 / pairs as f64).sqrt();
    assert!((f - 0.8).abs() < 4.0 * se, "stay frequency {f}");
    assert!(simulate_hmm_with(&a, &bb, 1.5, &b, 1.0, &mut rng).is_err());
}

#[test]
fn delay_zero_inflation_rate() {
    let b = basis();
    let spec = DatasetSpec { n_a: 1, n_b: 1, n_ab: 1, ..DatasetSpec::preset("supp-3.1-competition", 1).unwrap() };
    let n = 1000;
    let zeros = (0..n).filter(|&s| simulate_dataset(&spec, &b, s).unwrap().truth.delta == Some(0.0)).count();
    let f = zeros as f64 / n as f64;
    let se = (0.2 * 0.8 / n as f64).sqrt();
    assert!((f - 0.2).abs() < 3.0 * se, "zero fraction {f}");
}

/// Histogram of (first ISI bin, winner) against bin probabilities from the
/// oracle joint density.
fn race_histogram_check(cp: &CompetitionParams, prev: Option<Label>, s_prev: f64, edges: &[f64], seed: u64) {
    let b = basis();
    let racers = Racers::at(cp, &b, s_prev).unwrap();
    let k = edges.len();
    let mut probs = Vec::with_capacity(2 * k);
    for w in Label::BOTH {
        let f = |x: f64| if x > 0.0 { joint(cp, &b, x, w, prev, s_prev) } else { 0.0 };
        let mut lo = 0.0;
        for &hi in edges {
            probs.push(integrate(f, lo, hi, 1e-12).unwrap().value);
            lo = hi;
        }
        probs.push(integrate_to_infinity(f, lo, 1e-12).unwrap().value);
    }
    let total: f64 = probs.iter().sum();
    assert!((total - 1.0).abs() < 1e-7, "oracle mass {total}");
    let mut counts = vec![0u64; 2 * (k + 1)];
    let mut rng = substream(seed, &[]);
    let n = 200_000;
    for _ in 0..n {
        let (x, w) = race_step(&racers, prev, cp.delta, &mut rng);
        let bin = edges.iter().position(|&e| x <= e).unwrap_or(k);
        counts[w.index() * (k + 1) + bin] += 1;
    }
    let stat = common::chi_square(&counts, &probs);
    let df = probs.iter().filter(|p| **p > 0.0).count() - 1;
    let crit = ChiSquared::new(df as f64).unwrap().inverse_cdf(0.999);
    assert!(stat < crit, "chi2 {stat} > {crit} (df {df}) prev {prev:?}");
}

#[test]
fn first_race_matches_joint_density() {
    let cp = CompetitionParams {
        a: StimulusParams::homogeneous(40.0, 40f64.sqrt(), 6),
        b: StimulusParams::homogeneous(80.0, 80f64.sqrt(), 6),
        delta: 0.03,
    };
    let edges: Vec<f64> = (1..12).map(|i| 0.004 * i as f64).collect();
    race_histogram_check(&cp, None, 0.0, &edges, 21);
}

#[test]
fn delayed_race_matches_joint_density() {
    let cp = CompetitionParams {
        a: StimulusParams { current: 40.0, sigma: 6.0, phi: vec![0.3, -0.2, 0.1, 0.0, 0.2, -0.4] },
        b: StimulusParams { current: 70.0, sigma: 8.0, phi: vec![-0.3, 0.1, 0.0, 0.2, -0.1, 0.3] },
        delta: 0.02,
    };
    let edges: Vec<f64> = (1..16).map(|i| 0.004 * i as f64).collect();
    race_histogram_check(&cp, Some(Label::A), 0.4, &edges, 22);
    race_histogram_check(&cp, Some(Label::B), 0.7, &edges, 23);
}

#[test]
fn datasets_are_reproducible_across_thread_counts() {
    let b = basis();
    for name in PRESETS {
        let spec = DatasetSpec::preset(name, 8).unwrap();
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| simulate_dataset(&spec, &b, 42).unwrap())
        };
        let (x, y) = (run(1), run(4));
        assert_eq!(x.triplet, y.triplet, "{name}");
        assert_eq!(x.truth, y.truth, "{name}");
        x.triplet.validate(8).unwrap();
    }
}

/// Label-conditional ISI laws against the quadrature CDF, and label
/// frequencies against the win probability.
fn label_conditional_check(cp: &CompetitionParams, prev: Option<Label>, s_prev: f64, seed: u64) {
    let b = basis();
    let racers = Racers::at(cp, &b, s_prev).unwrap();
    let mut rng = substream(seed, &[]);
    let n = 100_000;
    let mut by_label = [Vec::new(), Vec::new()];
    for _ in 0..n {
        let (x, w) = race_step(&racers, prev, cp.delta, &mut rng);
        by_label[w.index()].push(x);
    }
    for w in Label::BOTH {
        let p = race_win_probability(cp, w, prev, s_prev, &b).unwrap();
        let k = by_label[w.index()].len() as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((k / n as f64 - p).abs() < 3.0 * se, "{w:?}: freq {} vs {p}", k / n as f64);
        let d = ks_by_quadrature(&mut by_label[w.index()], |x| if x > 0.0 { joint(cp, &b, x, w, prev, s_prev) } else { 0.0 }, 0.0, p);
        assert!(d < 0.01, "{w:?} prev {prev:?}: KS {d}");
    }
}

#[test]
fn label_conditional_isi_laws_match_quadrature() {
    let cp = CompetitionParams {
        a: StimulusParams { current: 40.0, sigma: 6.0, phi: vec![0.3, -0.2, 0.1, 0.0, 0.2, -0.4] },
        b: StimulusParams { current: 70.0, sigma: 8.0, phi: vec![-0.3, 0.1, 0.0, 0.2, -0.1, 0.3] },
        delta: 0.02,
    };
    label_conditional_check(&cp, None, 0.0, 31);
    label_conditional_check(&cp, Some(Label::A), 0.3, 32);
    label_conditional_check(&cp, Some(Label::B), 0.8, 33);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn simulated_trains_are_valid(seed in any::<u64>(), t_end in 0.05f64..2.0, i in 1.0f64..300.0, k in 0.3f64..3.0, delta in 0.0f64..0.2) {
        let b = Basis::new(&BasisConfig::for_window(t_end)).unwrap();
        let p = StimulusParams { current: i, sigma: k * i.sqrt(), phi: vec![0.3, -0.3, 0.2, 0.0, -0.2, 0.1] };
        let q = StimulusParams::homogeneous(2.0 * i, 2.0 * k * i.sqrt(), 6);
        let t = simulate_iigpp(&p, &b, t_end, seed);
        prop_assert!(t.validate().is_ok());
        let cp = CompetitionParams { a: p.clone(), b: q.clone(), delta };
        let lt = simulate_competition_with(&cp, &b, t_end, &mut substream(seed, &[1]));
        prop_assert!(lt.train.validate().is_ok());
        prop_assert_eq!(lt.labels.len(), lt.train.len());
        let isi = lt.train.isis();
        for j in 1..lt.labels.len() {
            prop_assert!(lt.labels[j] == lt.labels[j - 1] || isi[j] > delta);
        }
        let h = simulate_hmm_with(&p, &q, 0.7, &b, t_end, &mut substream(seed, &[2])).unwrap();
        prop_assert!(h.train.validate().is_ok());
    }
}
