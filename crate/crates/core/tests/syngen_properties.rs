//! Statistical properties of the synthetic generator, checked against its own
//! configuration.

use std::collections::{BTreeMap, HashMap};

use stance_core::dynamics;
use stance_core::ingest::{Dataset, StanceRecord, TweetKind};
use stance_core::syngen::{self, GeneratorConfig, TweetCountDist};
use stance_core::threads::{self, AttributionTarget};
use stance_core::topics::TopicLexicon;

fn stream(seed: u64, n_users: usize) -> Dataset {
    let cfg = GeneratorConfig { seed, n_users, ..GeneratorConfig::default() };
    syngen::generate_stream(&cfg, &TopicLexicon::demo()).unwrap().0
}

#[test]
fn realised_precision_matches_channel() {
    let cfg = GeneratorConfig {
        seed: 21,
        n_users: 150_000,
        tweets: TweetCountDist { exponent: 2.0, min: 3, cap: 1000 },
        ..GeneratorConfig::default()
    };
    let pop = syngen::generate_population(&cfg).unwrap();
    let tweets: u64 = pop.iter().map(|u| u.n_a + u.n_p + u.n_neutral).sum();
    assert!(tweets >= 1_000_000, "only {tweets} tweets");
    let n_a: u64 = pop.iter().map(|u| u.n_a).sum();
    let n_p: u64 = pop.iter().map(|u| u.n_p).sum();
    let ta: u64 = pop.iter().map(|u| u.true_anti_among_anti).sum();
    let tp: u64 = pop.iter().map(|u| u.true_pro_among_pro).sum();
    let (aa, ap) = cfg.implied_precision();
    assert!((ta as f64 / n_a as f64 - aa).abs() <= 0.005, "anti {} vs {aa}", ta as f64 / n_a as f64);
    assert!((tp as f64 / n_p as f64 - ap).abs() <= 0.005, "pro {} vs {ap}", tp as f64 / n_p as f64);
}

#[test]
fn tweet_kinds_follow_the_mix() {
    let cfg = GeneratorConfig::default();
    let ds = stream(22, 20_000);
    let population: Vec<&StanceRecord> = ds.records().iter().filter(|r| r.user_id.starts_with('u')).collect();
    let n = population.len() as f64;
    for (kind, want) in [TweetKind::Original, TweetKind::Retweet, TweetKind::Reply].into_iter().zip(cfg.kind_mix) {
        let got = population.iter().filter(|r| r.kind == kind).count() as f64 / n;
        assert!((got - want).abs() <= 0.02, "{kind:?}: {got} vs {want}");
    }
}

#[test]
fn threads_live_within_the_burst_window() {
    let cfg = GeneratorConfig::default();
    let ds = stream(23, 20_000);
    let events = dynamics::all_events(&dynamics::dataset_changes(&ds));
    let built = threads::build_threads(&events, &ds);
    assert!(!built.is_empty());
    let short = built.iter().filter(|t| t.lifespan() <= cfg.burst_days).count();
    assert!(short as f64 >= 0.95 * built.len() as f64, "{short} of {} threads", built.len());
}

#[test]
fn heavy_tailed_sources_concentrate_changes() {
    let ds = stream(24, 30_000);
    let events = dynamics::all_events(&dynamics::dataset_changes(&ds));
    let attr = threads::attribute_changes(&events, &ds, AttributionTarget::ThreadRoot);
    let hist = threads::originator_buckets(&attr.counts);
    // Most change-tweets sit in the threads of the largest bucket in use.
    let top = hist.changes.iter().rposition(|&c| c > 0).unwrap();
    assert!(2 * hist.changes[top] > hist.changes.iter().sum::<u64>(), "{hist:?}");
}

/// Attribution recomputed by walking parent links in a plain map.
fn join_attribution(ds: &Dataset, target: AttributionTarget) -> (BTreeMap<String, u64>, u64) {
    let by_id: HashMap<&str, &StanceRecord> = ds.records().iter().map(|r| (r.tweet_id.as_str(), r)).collect();
    let events = dynamics::all_events(&dynamics::dataset_changes(ds));
    let mut counts = BTreeMap::new();
    let mut unresolved = 0;
    for e in events.iter().filter(|e| e.kind != TweetKind::Original) {
        let parent = e.parent_id.clone().unwrap();
        let credited = match (e.kind, target) {
            (TweetKind::Reply, AttributionTarget::ThreadRoot) => {
                match by_id[e.tweet_id.as_str()].root_id.clone() {
                    Some(root) => root,
                    None => {
                        let mut cur = parent;
                        loop {
                            match by_id.get(cur.as_str()) {
                                Some(r) if r.root_id.is_some() => break r.root_id.clone().unwrap(),
                                Some(r) if r.kind == TweetKind::Reply => cur = r.parent_id.clone().unwrap(),
                                _ => break cur,
                            }
                        }
                    }
                }
            }
            _ => parent,
        };
        match by_id.get(credited.as_str()) {
            Some(r) => *counts.entry(r.user_id.clone()).or_insert(0) += 1,
            None => unresolved += 1,
        }
    }
    (counts, unresolved)
}

#[test]
fn attribution_matches_a_plain_join() {
    let ds = stream(25, 8_000);
    for target in [AttributionTarget::ThreadRoot, AttributionTarget::ImmediateParent] {
        let attr = threads::attribute_changes(&dynamics::all_events(&dynamics::dataset_changes(&ds)), &ds, target);
        let (counts, unresolved) = join_attribution(&ds, target);
        assert_eq!(attr.counts, counts, "{target:?}");
        assert_eq!(attr.unresolved, unresolved, "{target:?}");
    }
}

#[test]
fn adf_rejects_a_stationary_autoregression() {
    let rejected = (0..100u64)
        .filter(|&seed| dynamics::adf_test(&syngen::ar1(500, 0.5, seed), None).unwrap().stationary)
        .count();
    assert!(rejected >= 80, "{rejected}/100");
}
