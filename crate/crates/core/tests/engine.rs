use std::sync::Arc;

use specdiff_core::analysis::{cost_ratio, simulate_advance, CostModel};
use specdiff_core::drafting::DraftStrategy;
use specdiff_core::engine::*;
use specdiff_core::metrics::ks_two_sample;
use specdiff_core::rng::{substream, RngStream, StreamKey};
use specdiff_core::schedule::DEFAULT_T_CLIP;
use specdiff_core::{GmmSpec, ReverseChain, Schedule, ScoreModel, TimeGrid};

fn setup(d: usize, k: usize, seed: u64) -> (ReverseChain, Arc<ReverseChain>) {
    let mut rng = RngStream::new(StreamKey::new(seed, 0, 0, substream::AUX));
    let gmm = GmmSpec::random(d, 16, &mut rng).unwrap();
    let schedule = Schedule::linear(DEFAULT_T_CLIP).unwrap();
    let grid = TimeGrid::new(k, DEFAULT_T_CLIP).unwrap();
    let draft = ScoreModel::perturbed(&gmm, 0.1, 0.0, &mut rng).unwrap();
    (
        ReverseChain::new(ScoreModel::exact(gmm), schedule, grid.clone()),
        Arc::new(ReverseChain::new(draft, schedule, grid)),
    )
}

fn cfg(lookahead: usize, eps: f64) -> SpeculativeConfig {
    SpeculativeConfig { lookahead, eps, coupling: CouplingConfig::default() }
}

#[test]
fn every_strategy_preserves_the_target_law() {
    let (target, draft) = setup(2, 50, 1);
    let eps = 0.5;
    let n = 4000;
    let base = run_target(&target, eps, n, 100).unwrap();
    let strategies = [
        DraftStrategy::frozen(),
        DraftStrategy::independent(draft.clone(), 0.1),
        DraftStrategy::mixture(vec![DraftStrategy::frozen(), DraftStrategy::independent(draft, 0.1)], None).unwrap(),
        DraftStrategy::picard(2).unwrap(),
    ];
    for s in &strategies {
        let spec = run_speculative(&target, s, &cfg(5, eps), n, 200).unwrap();
        for i in 0..2 {
            let p = ks_two_sample(&spec.coordinate(i), &base.coordinate(i)).unwrap().p_value;
            assert!(p > 0.01, "{} coordinate {i}: p = {p}", s.name());
        }
    }
}

#[test]
fn runs_are_reproducible() {
    let (target, _) = setup(3, 60, 2);
    let a = run_speculative(&target, &DraftStrategy::frozen(), &cfg(6, 0.3), 20, 7).unwrap();
    let b = run_speculative(&target, &DraftStrategy::frozen(), &cfg(6, 0.3), 20, 7).unwrap();
    assert_eq!(a, b);
    let c = run_speculative(&target, &DraftStrategy::frozen(), &cfg(6, 0.3), 20, 8).unwrap();
    assert_ne!(a.samples, c.samples);
}

#[test]
fn advances_cover_every_step() {
    let (target, draft) = setup(2, 77, 3);
    for s in [DraftStrategy::frozen(), DraftStrategy::independent(draft, 0.1)] {
        let stats = run_speculative(&target, &s, &cfg(7, 0.4), 30, 1).unwrap();
        let total: u64 = stats.advance_hist.iter().enumerate().map(|(l, c)| l as u64 * c).sum();
        assert_eq!(total, 77 * 30);
        assert_eq!(stats.advance_hist[0], 0);
        assert!(stats.nfe_parallel <= stats.nfe_total);
        assert_eq!(stats.nfe_parallel, stats.windows());
    }
}

#[test]
fn frozen_acceptance_is_highest_early() {
    let (target, _) = setup(2, 200, 4);
    let stats = run_speculative(&target, &DraftStrategy::frozen(), &cfg(10, 0.25), 500, 3).unwrap();
    let rate = |lo: usize, hi: usize| {
        let a: u64 = stats.accept_by_step[lo..hi].iter().sum();
        let v: u64 = stats.verified_by_step[lo..hi].iter().sum();
        a as f64 / v as f64
    };
    // the first bin sits next to the time clip where f and g^2 blow up
    let last = rate(180, 200);
    for b in 1..9 {
        let r = rate(20 * b, 20 * b + 20);
        assert!(r >= last, "bin {b}: {r} < {last}");
    }
}

#[test]
fn longer_windows_need_fewer_rounds() {
    let (target, _) = setup(2, 200, 5);
    let nfe: Vec<f64> = [1, 2, 5, 10, 20]
        .iter()
        .map(|&l| {
            run_speculative(&target, &DraftStrategy::frozen(), &cfg(l, 0.25), 100, 1).unwrap().mean_nfe_parallel()
        })
        .collect();
    assert!(nfe.windows(2).all(|w| w[1] <= w[0]), "{nfe:?}");
    assert_eq!(nfe[0], 200.0);
}

#[test]
fn cost_ratio_does_not_depend_on_chain_length() {
    let (alpha, l) = (0.7, 5);
    let cm = CostModel::new(0.1, 1.0, l).unwrap();
    let mut rng = RngStream::new(StreamKey::new(11, 0, 0, substream::AUX));
    let mut ratio = |k: usize, chains: usize| {
        let mut adv = Vec::new();
        for _ in 0..chains {
            let mut n = 0;
            while n < k {
                let a = simulate_advance(alpha, l.min(k - n), &mut rng);
                adv.push(a as f64);
                n += a;
            }
        }
        let mean = adv.iter().sum::<f64>() / adv.len() as f64;
        let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (adv.len() - 1) as f64;
        let r = cost_ratio(&adv, &cm).unwrap().ratio;
        (r, (var / adv.len() as f64).sqrt() / 1.5)
    };
    let (r100, se100) = ratio(100, 2000);
    let (r400, se400) = ratio(400, 500);
    assert!((r100 - r400).abs() < 4.0 * (se100 * se100 + se400 * se400).sqrt(), "{r100} {r400}");
}
