mod common;

use common::{random_policy, rng, small_tabular};
use lporl::sampling::{draw_dataset, empirical_lambda, Dataset, SampleSource, Source, TransitionSampler};
use lporl::{LinearMDP, Policy, Setting};

const N: usize = 200_000;

/// Every cell frequency within five standard errors (plus a small floor) of
/// its expected probability.
fn assert_frequencies(what: &str, counts: &[usize], probs: &[f64], n: usize) {
    for (i, (&c, &p)) in counts.iter().zip(probs).enumerate() {
        let freq = c as f64 / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((freq - p).abs() <= 5.0 * se + 1e-4, "{what} cell {i}: frequency {freq} vs {p}");
    }
}

fn check(mdp: &LinearMDP, behavior: &Policy, setting: Setting, source: Source, seed: u64) {
    let data = draw_dataset(mdp, behavior, N, seed, setting, source).unwrap();
    let mu = common::occupancy(mdp, behavior, setting);
    let mut pair_counts = vec![0; mdp.num_pairs()];
    let mut init_counts = vec![0; mdp.num_states()];
    for t in &data.transitions {
        pair_counts[mdp.pair(t.x, t.a)] += 1;
        assert_eq!(t.r, common::reward(mdp, t.x, t.a));
        match (setting, t.x0) {
            (Setting::Discounted, Some(x0)) => init_counts[x0] += 1,
            (Setting::Average, None) => {}
            other => panic!("unexpected initial-state field {other:?}"),
        }
    }
    assert_frequencies(&format!("{setting} {source:?} pairs"), &pair_counts, mu.as_slice(), N);
    if setting == Setting::Discounted {
        assert_frequencies("initial states", &init_counts, mdp.init_dist().as_slice(), N);
    }
    // Next states from the most visited pair.
    let busiest = (0..mdp.num_pairs()).max_by_key(|&i| pair_counts[i]).unwrap();
    let (x, a) = (busiest / mdp.num_actions(), busiest % mdp.num_actions());
    let mut next_counts = vec![0; mdp.num_states()];
    for t in data.transitions.iter().filter(|t| t.x == x && t.a == a) {
        next_counts[t.x_next] += 1;
    }
    let probs: Vec<f64> = (0..mdp.num_states()).map(|y| common::kernel(mdp, x, a, y)).collect();
    assert_frequencies("next states", &next_counts, &probs, pair_counts[busiest]);
}

#[test]
fn empirical_frequencies_match_behavior_occupancy() {
    let mut r = rng(41);
    for (i, mdp) in small_tabular(4, 42).iter().enumerate() {
        let behavior = random_policy(mdp.num_states(), mdp.num_actions(), &mut r);
        for setting in [Setting::Discounted, Setting::Average] {
            check(mdp, &behavior, setting, Source::ExactCategorical, i as u64);
        }
    }
}

#[test]
fn rollouts_reproduce_the_same_distribution() {
    let mut r = rng(43);
    let mdp = &small_tabular(1, 44)[0];
    let behavior = random_policy(mdp.num_states(), mdp.num_actions(), &mut r);
    check(mdp, &behavior, Setting::Discounted, Source::Rollout { burn_in: None }, 1);
    // The burn-in must mix the chain; 200 steps is ample for these sizes.
    check(mdp, &behavior, Setting::Average, Source::Rollout { burn_in: Some(200) }, 2);
}

#[test]
fn empirical_covariance_converges() {
    let mut r = rng(45);
    let mdp = &small_tabular(1, 46)[0];
    let behavior = random_policy(mdp.num_states(), mdp.num_actions(), &mut r);
    let data = draw_dataset(mdp, &behavior, N, 3, Setting::Discounted, Source::ExactCategorical).unwrap();
    let lam = empirical_lambda(&data, mdp).unwrap();
    assert!(lam.is_approximate());
    let exact = common::covariance(mdp, &common::occupancy(mdp, &behavior, Setting::Discounted));
    assert!((lam.lambda() - exact).amax() < 5e-3);
}

#[test]
fn sampler_stream_equals_drawn_dataset_and_round_trips() {
    let mdp = &small_tabular(1, 47)[0];
    let behavior = Policy::uniform(mdp.num_states(), mdp.num_actions());
    let data = draw_dataset(mdp, &behavior, 500, 9, Setting::Average, Source::ExactCategorical).unwrap();
    let mut sampler = TransitionSampler::new(mdp, &behavior, 9, Setting::Average, Source::ExactCategorical).unwrap();
    for t in &data.transitions {
        assert_eq!(sampler.next_transition().unwrap(), *t);
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.csv");
    data.write_with_meta(&path, mdp, lporl::sampling::BehaviorSpec::Uniform).unwrap();
    let (back, meta) = Dataset::read(&path).unwrap();
    assert_eq!(back, data);
    assert_eq!(meta.mdp_hash, mdp.content_hash());
    let mut cursor = back.cursor();
    for _ in 0..500 {
        cursor.next_transition().unwrap();
    }
    assert!(cursor.next_transition().is_err());
}
