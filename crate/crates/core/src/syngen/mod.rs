//! Deterministic synthetic stance streams with known ground truth.
//!
//! Each population user draws a behaviour type, a heavy-tailed tweet count
//! and, per tweet, a true stance from the type's emission mix; the detected
//! stance passes through a noisy label channel. Retweets and replies point
//! at source tweets by noiseless originators with Zipf-distributed
//! popularity. Every user owns two random streams derived from
//! `(seed, user index)`, one for stances and one for tweet details, so the
//! output does not depend on scheduling and the compact population summary
//! matches the full stream exactly.

mod config;
mod systems;

pub use config::{GeneratorConfig, TweetCountDist, UserType};
pub use systems::{ar1, coupled_logistic, random_walk, white_noise, LogisticParams};

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Duration, NaiveTime, Utc};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Dataset, RecordInput, Stance, TweetKind};
use crate::topics::TopicLexicon;

const STANCES: [Stance; 3] = [Stance::Anti, Stance::Pro, Stance::Neutral];
const KINDS: [TweetKind; 3] = [TweetKind::Original, TweetKind::Retweet, TweetKind::Reply];
const SECONDS_PER_DAY: i64 = 86_400;
const GLOBAL_STREAM: u64 = 0;
const NESTING_STREAM: u64 = u64::MAX;
const FILLER: [&str; 10] = ["just", "saw", "today", "honestly", "thread", "people", "news", "update", "wow", "hmm"];

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn stance_stream(i: usize) -> u64 {
    1 + 2 * i as u64
}

fn detail_stream(i: usize) -> u64 {
    2 + 2 * i as u64
}

/// Inverse-CDF draw from a power law truncated to `[min, cap]`.
fn draw_count(rng: &mut ChaCha8Rng, d: TweetCountDist) -> u64 {
    let u: f64 = rng.random();
    let a = 1.0 - d.exponent;
    let hi = ((d.cap + 1) as f64 / d.min as f64).powf(a);
    let x = d.min as f64 * (1.0 - u * (1.0 - hi)).powf(1.0 / a);
    (x.floor() as u64).clamp(d.min, d.cap)
}

struct Samplers {
    types: WeightedIndex<f64>,
    emission: Vec<WeightedIndex<f64>>,
    channel: Vec<WeightedIndex<f64>>,
    kinds: WeightedIndex<f64>,
}

impl Samplers {
    fn new(cfg: &GeneratorConfig) -> Result<Self> {
        let w = |v: &[f64]| WeightedIndex::new(v.to_vec()).map_err(|e| Error::Config(e.to_string()));
        Ok(Samplers {
            types: w(&cfg.type_mix)?,
            emission: cfg.emission.iter().map(|r| w(r)).collect::<Result<_>>()?,
            channel: cfg.channel.iter().map(|r| w(r)).collect::<Result<_>>()?,
            kinds: w(&cfg.kind_mix)?,
        })
    }
}

/// A user's type and per-tweet `(true, detected)` stance indices.
struct UserPlan {
    user_type: UserType,
    tweets: Vec<(u8, u8)>,
}

fn plan_user(cfg: &GeneratorConfig, s: &Samplers, i: usize) -> UserPlan {
    let mut rng = stream_rng(cfg.seed, stance_stream(i));
    let user_type = UserType::ALL[s.types.sample(&mut rng)];
    let n = draw_count(&mut rng, cfg.tweets);
    let tweets = (0..n)
        .map(|_| {
            let truth = s.emission[user_type.index()].sample(&mut rng);
            let detected = s.channel[truth].sample(&mut rng);
            (truth as u8, detected as u8)
        })
        .collect();
    UserPlan { user_type, tweets }
}

/// Detected counts and truth for one population user.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PopulationUser {
    pub user_type: UserType,
    pub n_a: u64,
    pub n_p: u64,
    pub n_neutral: u64,
    /// Detected-anti tweets that are truly anti.
    pub true_anti_among_anti: u64,
    /// Detected-pro tweets that are truly pro.
    pub true_pro_among_pro: u64,
}

impl PopulationUser {
    /// At least one detected-anti tweet is truly anti and at least one
    /// detected-pro tweet is truly pro.
    pub fn truly_dual(&self) -> bool {
        self.true_anti_among_anti >= 1 && self.true_pro_among_pro >= 1
    }

    pub fn is_dual_detected(&self) -> bool {
        self.n_a >= 1 && self.n_p >= 1
    }

    pub fn non_neutral(&self) -> u64 {
        self.n_a + self.n_p
    }
}

fn summarize_plan(plan: &UserPlan) -> PopulationUser {
    let mut u = PopulationUser {
        user_type: plan.user_type,
        n_a: 0,
        n_p: 0,
        n_neutral: 0,
        true_anti_among_anti: 0,
        true_pro_among_pro: 0,
    };
    for &(t, d) in &plan.tweets {
        match d {
            0 => {
                u.n_a += 1;
                u.true_anti_among_anti += (t == 0) as u64;
            }
            1 => {
                u.n_p += 1;
                u.true_pro_among_pro += (t == 1) as u64;
            }
            _ => u.n_neutral += 1,
        }
    }
    u
}

/// Per-user detected counts and truth without materialising records; user
/// `i` here is user `u{i}` of [`generate_stream`] with the same config.
pub fn generate_population(cfg: &GeneratorConfig) -> Result<Vec<PopulationUser>> {
    cfg.validate()?;
    let s = Samplers::new(cfg)?;
    Ok((0..cfg.n_users)
        .into_par_iter()
        .map(|i| summarize_plan(&plan_user(cfg, &s, i)))
        .collect())
}

/// Closed-form and realised detector precision of a generated stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpliedPrecision {
    pub closed_form_anti: f64,
    pub closed_form_pro: f64,
    /// Over population tweets (originator sources are noiseless and
    /// excluded).
    pub empirical_anti: f64,
    pub empirical_pro: f64,
    pub detected_anti: u64,
    pub detected_pro: u64,
}

impl ImpliedPrecision {
    /// Precision file with the empirical pair as the global row.
    pub fn to_precision_csv(&self) -> String {
        format!(
            "start_day,end_day,alpha_anti,alpha_pro\n0,-1,{},{}\n",
            self.empirical_anti, self.empirical_pro
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Population users and originators.
    pub user_types: BTreeMap<String, UserType>,
    pub truly_dual: BTreeSet<String>,
    pub tweet_stance: BTreeMap<String, Stance>,
    pub implied: ImpliedPrecision,
}

impl GroundTruth {
    pub fn users_csv_string(&self) -> String {
        let mut s = String::from("user_id,true_type\n");
        for (u, t) in &self.user_types {
            s.push_str(&format!("{u},{}\n", t.as_str()));
        }
        s
    }

    pub fn tweets_csv_string(&self) -> String {
        let mut s = String::from("tweet_id,true_stance\n");
        for (t, st) in &self.tweet_stance {
            s.push_str(&format!("{t},{st}\n"));
        }
        s
    }
}

struct Source {
    stance: usize,
    ts: i64,
    missing: bool,
}

struct Pools {
    members: [Vec<usize>; 2],
    popularity: [Option<WeightedIndex<f64>>; 2],
}

impl Pools {
    fn pick(&self, pool: usize, rng: &mut ChaCha8Rng) -> usize {
        let p = if self.popularity[pool].is_some() { pool } else { 1 - pool };
        let idx = self.popularity[p].as_ref().expect("at least one pool is non-empty").sample(rng);
        self.members[p][idx]
    }
}

struct GenTweet {
    id: String,
    ts: i64,
    truth: u8,
    detected: u8,
    kind: TweetKind,
    source: Option<usize>,
    parent: Option<String>,
    with_root: bool,
    text: Option<String>,
}

fn phrase_text(
    rng: &mut ChaCha8Rng,
    detected: Stance,
    topics: &[Vec<usize>; 2],
    lexicon: &TopicLexicon,
    topic_probability: f64,
) -> String {
    let filler = |rng: &mut ChaCha8Rng| FILLER[rng.random_range(0..FILLER.len())];
    let mut words = vec![filler(rng)];
    let admitted = match detected {
        Stance::Anti => &topics[0],
        Stance::Pro => &topics[1],
        Stance::Neutral => return format!("{} {}", words[0], filler(rng)),
    };
    if !admitted.is_empty() && rng.random::<f64>() < topic_probability {
        let repeats = if rng.random::<f64>() < 0.25 { 2 } else { 1 };
        for _ in 0..repeats {
            let entry = &lexicon.entries()[admitted[rng.random_range(0..admitted.len())]];
            let phrase = &entry.phrases[rng.random_range(0..entry.phrases.len())];
            words.push(phrase);
            words.push(filler(rng));
        }
    } else {
        words.push(filler(rng));
    }
    words.join(" ")
}

/// Generates a full record stream and its ground truth. Text is drawn from
/// `lexicon` when the config enables it.
pub fn generate_stream(cfg: &GeneratorConfig, lexicon: &TopicLexicon) -> Result<(Dataset, GroundTruth)> {
    cfg.validate()?;
    let samplers = Samplers::new(cfg)?;
    let start: DateTime<Utc> = cfg.start_date.and_time(NaiveTime::MIN).and_utc();
    let horizon = cfg.day_count as i64 * SECONDS_PER_DAY;

    // Originators and their source tweets.
    let mut global = stream_rng(cfg.seed, GLOBAL_STREAM);
    let sources: Vec<Source> = (0..cfg.originators)
        .map(|_| Source {
            stance: global.random_range(0..2),
            ts: global.random_range(0..horizon),
            missing: global.random::<f64>() < cfg.missing_source_fraction,
        })
        .collect();
    let mut members: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (k, s) in sources.iter().enumerate() {
        members[s.stance].push(k);
    }
    let popularity = [0, 1].map(|p| {
        let weights: Vec<f64> =
            (0..members[p].len()).map(|r| ((r + 1) as f64).powf(-cfg.originator_exponent)).collect();
        WeightedIndex::new(weights).ok()
    });
    let pools = Pools { members, popularity };

    let topics: [Vec<usize>; 2] = [Stance::Anti, Stance::Pro].map(|s| {
        (0..lexicon.len()).filter(|&i| lexicon.entries()[i].stance.admits(s)).collect()
    });

    let users: Vec<(UserType, Vec<GenTweet>)> = (0..cfg.n_users)
        .into_par_iter()
        .map(|i| {
            let plan = plan_user(cfg, &samplers, i);
            let mut rng = stream_rng(cfg.seed, detail_stream(i));
            let tweets = plan
                .tweets
                .iter()
                .enumerate()
                .map(|(k, &(truth, detected))| {
                    let kind = KINDS[samplers.kinds.sample(&mut rng)];
                    let (ts, source) = match kind {
                        TweetKind::Original => (rng.random_range(0..horizon), None),
                        _ => {
                            let pool = match (kind, truth) {
                                (TweetKind::Retweet, 0 | 1) => truth as usize,
                                _ => rng.random_range(0..2),
                            };
                            let src = pools.pick(pool, &mut rng);
                            let offset = rng.random_range(0..cfg.burst_days as i64 * SECONDS_PER_DAY);
                            ((sources[src].ts + offset).min(horizon - 1), Some(src))
                        }
                    };
                    let with_root = kind == TweetKind::Reply && rng.random::<f64>() < cfg.root_id_fraction;
                    let text = cfg.text.then(|| {
                        phrase_text(&mut rng, STANCES[detected as usize], &topics, lexicon, cfg.topic_probability)
                    });
                    GenTweet {
                        id: format!("t{i}_{k}"),
                        ts,
                        truth,
                        detected,
                        kind,
                        source,
                        parent: source.map(|s| format!("s{s}")),
                        with_root,
                        text,
                    }
                })
                .collect();
            (plan.user_type, tweets)
        })
        .collect();
    let mut users = users;

    // Nested replies: some replies answer an earlier reply of their thread.
    if cfg.nested_reply_fraction > 0.0 {
        let mut threads: BTreeMap<usize, Vec<(i64, String, usize, usize)>> = BTreeMap::new();
        for (ui, (_, tweets)) in users.iter().enumerate() {
            for (ti, t) in tweets.iter().enumerate() {
                if let (TweetKind::Reply, Some(src)) = (t.kind, t.source) {
                    threads.entry(src).or_default().push((t.ts, t.id.clone(), ui, ti));
                }
            }
        }
        let mut rng = stream_rng(cfg.seed, NESTING_STREAM);
        for replies in threads.values_mut() {
            replies.sort();
            for j in 1..replies.len() {
                if rng.random::<f64>() < cfg.nested_reply_fraction {
                    let target = replies[rng.random_range(0..j)].1.clone();
                    let (_, _, ui, ti) = replies[j];
                    users[ui].1[ti].parent = Some(target);
                }
            }
        }
    }

    let to_time = |secs: i64| start + Duration::seconds(secs);
    let mut inputs = Vec::new();
    let mut user_types = BTreeMap::new();
    let mut tweet_stance = BTreeMap::new();
    let mut truly_dual = BTreeSet::new();
    let (mut det, mut hit) = ([0u64; 2], [0u64; 2]);

    for (k, s) in sources.iter().enumerate() {
        let (uid, tid) = (format!("o{k}"), format!("s{k}"));
        user_types.insert(uid.clone(), if s.stance == 0 { UserType::PureAnti } else { UserType::PurePro });
        if s.missing {
            continue;
        }
        tweet_stance.insert(tid.clone(), STANCES[s.stance]);
        let text = cfg.text.then(|| phrase_text(&mut global, STANCES[s.stance], &topics, lexicon, cfg.topic_probability));
        inputs.push(RecordInput {
            tweet_id: tid,
            user_id: uid,
            timestamp: to_time(s.ts),
            stance: STANCES[s.stance],
            kind: TweetKind::Original,
            parent_id: None,
            root_id: None,
            text,
        });
    }
    for (i, (ty, tweets)) in users.into_iter().enumerate() {
        let uid = format!("u{i}");
        user_types.insert(uid.clone(), ty);
        let mut dual = [false; 2];
        for t in tweets {
            if t.detected < 2 {
                let d = t.detected as usize;
                det[d] += 1;
                if t.truth == t.detected {
                    hit[d] += 1;
                    dual[d] = true;
                }
            }
            tweet_stance.insert(t.id.clone(), STANCES[t.truth as usize]);
            inputs.push(RecordInput {
                tweet_id: t.id,
                user_id: uid.clone(),
                timestamp: to_time(t.ts),
                stance: STANCES[t.detected as usize],
                kind: t.kind,
                parent_id: t.parent,
                root_id: if t.with_root { t.source.map(|s| format!("s{s}")) } else { None },
                text: t.text,
            });
        }
        if dual[0] && dual[1] {
            truly_dual.insert(uid);
        }
    }

    let (closed_form_anti, closed_form_pro) = cfg.implied_precision();
    let ratio = |h: u64, d: u64| if d == 0 { f64::NAN } else { h as f64 / d as f64 };
    let implied = ImpliedPrecision {
        closed_form_anti,
        closed_form_pro,
        empirical_anti: ratio(hit[0], det[0]),
        empirical_pro: ratio(hit[1], det[1]),
        detected_anti: det[0],
        detected_pro: det[1],
    };
    let ds = Dataset::from_inputs(inputs, start, cfg.day_count)?;
    Ok((ds, GroundTruth { user_types, truly_dual, tweet_stance, implied }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{aggregate_series, dataset_changes};
    use crate::ingest::aggregate_users;

    fn small(seed: u64) -> GeneratorConfig {
        GeneratorConfig { seed, n_users: 300, originators: 50, ..GeneratorConfig::default() }
    }

    #[test]
    fn same_seed_same_stream() {
        let lex = TopicLexicon::demo();
        let (a, ta) = generate_stream(&small(5), &lex).unwrap();
        let (b, tb) = generate_stream(&small(5), &lex).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        let (c, _) = generate_stream(&small(6), &lex).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn independent_of_thread_count() {
        let lex = TopicLexicon::demo();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let single = pool.install(|| generate_stream(&small(8), &lex).unwrap());
        assert_eq!(single, generate_stream(&small(8), &lex).unwrap());
    }

    #[test]
    fn population_matches_stream() {
        let lex = TopicLexicon::demo();
        let cfg = small(11);
        let (ds, truth) = generate_stream(&cfg, &lex).unwrap();
        let pop = generate_population(&cfg).unwrap();
        let agg = aggregate_users(&ds);
        for (i, p) in pop.iter().enumerate() {
            let uid = format!("u{i}");
            assert_eq!(truth.user_types[&uid], p.user_type);
            match agg.get(&uid) {
                Some(a) => assert_eq!((a.n_a, a.n_p, a.n_neutral), (p.n_a, p.n_p, p.n_neutral)),
                None => assert_eq!(p.n_a + p.n_p + p.n_neutral, 0),
            }
            assert_eq!(truth.truly_dual.contains(&uid), p.truly_dual());
        }
    }

    #[test]
    fn identity_channel_makes_every_detected_dual_truly_dual() {
        let mut cfg = small(2);
        cfg.channel = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        cfg.type_mix = [0.0, 0.0, 0.0, 0.0, 1.0];
        let pop = generate_population(&cfg).unwrap();
        assert!(pop.iter().filter(|u| u.is_dual_detected()).all(|u| u.truly_dual()));
        let (_, truth) = generate_stream(&cfg, &TopicLexicon::demo()).unwrap();
        assert_eq!((truth.implied.empirical_anti, truth.implied.empirical_pro), (1.0, 1.0));
    }

    #[test]
    fn stream_invariants() {
        let cfg = small(3);
        let (ds, truth) = generate_stream(&cfg, &TopicLexicon::demo()).unwrap();
        assert_eq!(ds.day_count(), cfg.day_count);
        for r in ds.records() {
            assert!(truth.tweet_stance.contains_key(&r.tweet_id));
            if let Some(p) = &r.parent_id {
                // Parents are sources or earlier replies.
                if let Some(parent) = ds.tweet(p) {
                    assert!(parent.timestamp <= r.timestamp, "{} before parent {}", r.tweet_id, p);
                }
            }
        }
        let series = aggregate_series(&dataset_changes(&ds), ds.day_count()).unwrap();
        assert_eq!(series.day_count(), cfg.day_count as usize);
    }

    #[test]
    fn count_draws_respect_bounds() {
        let mut rng = stream_rng(1, 0);
        let d = TweetCountDist { exponent: 2.0, min: 3, cap: 40 };
        let v: Vec<u64> = (0..10_000).map(|_| draw_count(&mut rng, d)).collect();
        assert!(v.iter().all(|&c| (3..=40).contains(&c)));
        assert!(v.iter().filter(|&&c| c == 3).count() > v.iter().filter(|&&c| c == 10).count());
    }

    #[test]
    fn zero_users_rejected() {
        let cfg = GeneratorConfig { n_users: 0, ..GeneratorConfig::default() };
        assert!(generate_population(&cfg).is_err());
    }
}
