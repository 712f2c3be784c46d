//! Library pipeline from JSON lines to cohort, classes and change series.

use std::io::Cursor;

use proptest::prelude::*;
use stance_core::classify::{self, ClassifyParams, LeaningClass, ProbabilityMode};
use stance_core::cohort::{self, AlphaSource, PrecisionModel};
use stance_core::dynamics;
use stance_core::ingest::{self, ParseOptions};
use stance_core::syngen::{self, GeneratorConfig};
use stance_core::topics::TopicLexicon;

const FIXTURE: &str = r#"{"tweet_id":"1","user_id":"alice","ts":"2021-01-01T10:00:00Z","stance":"anti","kind":"original"}
{"tweet_id":"2","user_id":"alice","ts":"2021-01-02T10:00:00Z","stance":"pro","kind":"original"}
{"tweet_id":"3","user_id":"alice","ts":"2021-01-03T10:00:00Z","stance":"anti","kind":"retweet","parent_id":"9"}
{"tweet_id":"4","user_id":"bob","ts":"2021-01-01T11:00:00Z","stance":"pro","kind":"original"}
{"tweet_id":"5","user_id":"bob","ts":"2021-01-02T11:00:00Z","stance":"neutral","kind":"original"}
{"tweet_id":"6","user_id":"carol","ts":"2021-01-01T12:00:00Z","stance":"pro","kind":"reply","parent_id":"1"}
{"tweet_id":"7","user_id":"carol","ts":"2021-01-03T12:00:00Z","stance":"anti","kind":"original"}
"#;

fn fixture() -> ingest::Dataset {
    ingest::parse_records(Cursor::new(FIXTURE), &ParseOptions::default()).unwrap().dataset
}

#[test]
fn hand_computed_cohort() {
    let ds = fixture();
    assert_eq!(ds.day_count(), 3);
    let users = ingest::aggregate_users(&ds);
    let dual: Vec<_> = users.values().filter(|u| u.is_dual_detected()).cloned().collect();
    assert_eq!(dual.iter().map(|u| u.user_id.as_str()).collect::<Vec<_>>(), ["alice", "carol"]);
    let pm = PrecisionModel::global_only(0.8, 0.9).unwrap();
    let est = cohort::effective_cohort_size(&dual, &pm, AlphaSource::Global).unwrap();
    // alice: (1 - 0.2^2)(1 - 0.1) = 0.864; carol: 0.8 * 0.9 = 0.72.
    assert_eq!(est.detected, 2);
    assert!((est.effective - 1.584).abs() < 1e-12);
}

#[test]
fn hand_computed_changes() {
    let ds = fixture();
    let changes = dynamics::dataset_changes(&ds);
    let series = dynamics::aggregate_series(&changes, ds.day_count()).unwrap();
    // alice: anti -> pro (day 1) -> anti (day 2); carol: pro -> anti (day 2).
    assert_eq!(series.delta_plus, [0, 1, 0]);
    assert_eq!(series.delta_minus, [0, 0, 2]);
    assert_eq!(series.cumulative, [0, 1, -1]);
}

#[test]
fn classes_of_a_generated_stream() {
    let cfg = GeneratorConfig { seed: 31, n_users: 4000, ..GeneratorConfig::default() };
    let (ds, truth) = syngen::generate_stream(&cfg, &TopicLexicon::demo()).unwrap();
    let pm = PrecisionModel::from_csv_reader(Cursor::new(truth.implied.to_precision_csv())).unwrap();
    let users = ingest::aggregate_users(&ds);
    let params = ClassifyParams { mode: ProbabilityMode::Exact, ..ClassifyParams::default() };
    let results = classify::classify_users(&users, &pm, &params).unwrap();
    assert_eq!(results.len(), users.values().filter(|u| u.is_dual_detected()).count());
    for r in &results {
        let p = &r.probabilities;
        assert!((p.pr_pro + p.pr_anti + p.pr_bal - 1.0).abs() < 1e-9);
        if r.class == LeaningClass::ProLeaning {
            assert!(p.pr_pro > p.pr_anti);
        }
    }
}

#[test]
fn generated_stream_round_trips_through_json_lines() {
    let cfg = GeneratorConfig { seed: 32, n_users: 500, ..GeneratorConfig::default() };
    let (ds, _) = syngen::generate_stream(&cfg, &TopicLexicon::demo()).unwrap();
    let mut buf = Vec::new();
    ingest::write_records(&ds, &mut buf).unwrap();
    let opts = ParseOptions { dataset_start: Some(ds.dataset_start()), strict: true, min_day_count: ds.day_count() };
    let back = ingest::parse_records(Cursor::new(buf), &opts).unwrap();
    assert_eq!(back.skipped_count(), 0);
    assert_eq!(back.dataset.records(), ds.records());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn change_counts_are_bounded_by_tweets(seed in 0u64..1000) {
        let cfg = GeneratorConfig { seed, n_users: 200, originators: 50, ..GeneratorConfig::default() };
        let (ds, _) = syngen::generate_stream(&cfg, &TopicLexicon::demo()).unwrap();
        for c in dynamics::dataset_changes(&ds) {
            prop_assert!(c.into_pro().abs_diff(c.into_anti()) <= 1);
            prop_assert!(c.events.len() as u64 <= c.non_neutral_tweets.saturating_sub(1));
        }
    }
}
