//! Retweet and reply threads behind stance changes.
//!
//! Retweet change-tweets belong to the thread of the retweeted tweet; reply
//! change-tweets to the thread of their conversation root (the record's
//! `root_id`, else the top of the parent chain inside the dataset, else the
//! first missing ancestor). A thread's originator is the author of its key
//! tweet when that tweet is in the dataset.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::ChangeEvent;
use crate::error::{Error, Result};
use crate::ingest::{Dataset, Stance, TweetKind};

/// Fractions of change-tweets by kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Composition {
    pub total: u64,
    pub retweet_fraction: f64,
    pub reply_fraction: f64,
    pub original_fraction: f64,
}

pub fn change_tweet_composition(events: &[ChangeEvent]) -> Result<Composition> {
    if events.is_empty() {
        return Err(Error::Empty("change events"));
    }
    let (mut rt, mut rp, mut or) = (0u64, 0u64, 0u64);
    for e in events {
        match e.kind {
            TweetKind::Retweet => rt += 1,
            TweetKind::Reply => rp += 1,
            TweetKind::Original => or += 1,
        }
    }
    let n = events.len() as f64;
    Ok(Composition {
        total: events.len() as u64,
        retweet_fraction: rt as f64 / n,
        reply_fraction: rp as f64 / n,
        original_fraction: or as f64 / n,
    })
}

/// Whose tweet a reply change is credited to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttributionTarget {
    /// The author of the conversation root.
    #[default]
    ThreadRoot,
    /// The author of the tweet being replied to.
    ImmediateParent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThreadKind {
    Retweet,
    Reply,
}

impl ThreadKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ThreadKind::Retweet => "retweet",
            ThreadKind::Reply => "reply",
        }
    }
}

/// Conversation root of a reply: `root_id` when given, else the top of the
/// parent chain within the dataset, else the first ancestor id missing from
/// the dataset.
pub fn reply_root(ds: &Dataset, tweet_id: &str, parent_id: &str) -> String {
    if let Some(root) = ds.tweet(tweet_id).and_then(|r| r.root_id.as_deref()) {
        return root.to_string();
    }
    let mut current = parent_id.to_string();
    let mut seen = HashSet::new();
    while seen.insert(current.clone()) {
        match ds.tweet(&current) {
            Some(rec) => match (&rec.root_id, &rec.parent_id) {
                (Some(root), _) => return root.clone(),
                (None, Some(p)) if rec.kind == TweetKind::Reply => current = p.clone(),
                _ => return current,
            },
            None => return current,
        }
    }
    current
}

/// The thread a change event belongs to, or `None` for originals.
pub fn thread_key(ds: &Dataset, e: &ChangeEvent) -> Option<(ThreadKind, String)> {
    let parent = e.parent_id.as_deref()?;
    match e.kind {
        TweetKind::Original => None,
        TweetKind::Retweet => Some((ThreadKind::Retweet, parent.to_string())),
        TweetKind::Reply => Some((ThreadKind::Reply, reply_root(ds, &e.tweet_id, parent))),
    }
}

/// The tweet whose author is credited with a change event.
fn credited_tweet(ds: &Dataset, e: &ChangeEvent, target: AttributionTarget) -> Option<String> {
    match (e.kind, target) {
        (TweetKind::Reply, AttributionTarget::ImmediateParent) => e.parent_id.clone(),
        _ => thread_key(ds, e).map(|(_, k)| k),
    }
}

/// Change counts per originator plus the events whose credited tweet is not
/// in the dataset.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Attribution {
    pub counts: BTreeMap<String, u64>,
    pub unresolved: u64,
}

impl Attribution {
    pub fn attributed(&self) -> u64 {
        self.counts.values().sum()
    }
}

/// Credits every retweet and reply change event to an originator.
pub fn attribute_changes(events: &[ChangeEvent], ds: &Dataset, target: AttributionTarget) -> Attribution {
    let owners: Vec<Option<Option<String>>> = events
        .par_iter()
        .map(|e| match e.kind {
            TweetKind::Original => None,
            _ => Some(
                credited_tweet(ds, e, target)
                    .and_then(|t| ds.tweet(&t).map(|r| r.user_id.clone())),
            ),
        })
        .collect();
    let mut out = Attribution::default();
    for owner in owners.into_iter().flatten() {
        match owner {
            Some(u) => *out.counts.entry(u).or_default() += 1,
            None => out.unresolved += 1,
        }
    }
    out
}

pub const BUCKET_LABELS: [&str; 5] = ["1", "2-10", "11-100", "101-1000", "1000+"];

/// Originators and their attributed changes, bucketed by change count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BucketHistogram {
    pub originators: [u64; 5],
    pub changes: [u64; 5],
}

impl BucketHistogram {
    pub fn to_csv_string(&self) -> String {
        let mut s = String::from("bucket,originators,changes\n");
        for (i, label) in BUCKET_LABELS.iter().enumerate() {
            s.push_str(&format!("{},{},{}\n", label, self.originators[i], self.changes[i]));
        }
        s
    }
}

pub fn bucket_of(count: u64) -> usize {
    match count {
        0..=1 => 0,
        2..=10 => 1,
        11..=100 => 2,
        101..=1000 => 3,
        _ => 4,
    }
}

pub fn originator_buckets(counts: &BTreeMap<String, u64>) -> BucketHistogram {
    let mut h = BucketHistogram::default();
    for &c in counts.values() {
        let b = bucket_of(c);
        h.originators[b] += 1;
        h.changes[b] += c;
    }
    h
}

/// Originators sorted by count descending, then user id.
pub fn ranked_originators(counts: &BTreeMap<String, u64>) -> Vec<(&str, u64)> {
    let mut v: Vec<(&str, u64)> = counts.iter().map(|(u, &c)| (u.as_str(), c)).collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    v
}

/// Fewest top originators whose changes make up at least `q` of the total.
pub fn concentration(counts: &BTreeMap<String, u64>, q: f64) -> Result<usize> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::InvalidArgument(format!("quantile {q} outside (0, 1]")));
    }
    let total: u64 = counts.values().sum();
    if total == 0 {
        return Err(Error::Empty("attribution map"));
    }
    let mut running = 0u64;
    for (i, (_, c)) in ranked_originators(counts).iter().enumerate() {
        running += c;
        if running as f64 >= q * total as f64 {
            return Ok(i + 1);
        }
    }
    Ok(counts.len())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThreadStats {
    pub thread_id: String,
    pub kind: ThreadKind,
    pub change_tweet_count: u64,
    pub pro_count: u64,
    pub anti_count: u64,
    pub first_day: u32,
    pub last_day: u32,
    pub originator_user: Option<String>,
}

impl ThreadStats {
    pub fn lifespan(&self) -> u32 {
        self.last_day - self.first_day
    }

    pub fn pro_ratio(&self) -> f64 {
        self.pro_count as f64 / self.change_tweet_count as f64
    }
}

/// Groups retweet and reply change events into threads, ordered by kind and
/// thread id.
pub fn build_threads(events: &[ChangeEvent], ds: &Dataset) -> Vec<ThreadStats> {
    let keys: Vec<Option<(ThreadKind, String)>> = events.par_iter().map(|e| thread_key(ds, e)).collect();
    let mut threads: BTreeMap<(ThreadKind, String), ThreadStats> = BTreeMap::new();
    for (e, key) in events.iter().zip(keys) {
        let Some((kind, id)) = key else { continue };
        let t = threads.entry((kind, id.clone())).or_insert_with(|| ThreadStats {
            originator_user: ds.tweet(&id).map(|r| r.user_id.clone()),
            thread_id: id,
            kind,
            change_tweet_count: 0,
            pro_count: 0,
            anti_count: 0,
            first_day: e.day_index,
            last_day: e.day_index,
        });
        t.change_tweet_count += 1;
        match e.stance {
            Stance::Pro => t.pro_count += 1,
            Stance::Anti => t.anti_count += 1,
            Stance::Neutral => {}
        }
        t.first_day = t.first_day.min(e.day_index);
        t.last_day = t.last_day.max(e.day_index);
    }
    threads.into_values().collect()
}

pub fn threads_csv_string(threads: &[ThreadStats]) -> String {
    let mut s = String::from("thread_id,kind,size,pro,anti,first_day,last_day,originator\n");
    for t in threads {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            t.thread_id,
            t.kind.as_str(),
            t.change_tweet_count,
            t.pro_count,
            t.anti_count,
            t.first_day,
            t.last_day,
            t.originator_user.as_deref().unwrap_or("")
        ));
    }
    s
}

pub const DEFAULT_REPLY_MIN_SIZE: u64 = 10;
pub const DEFAULT_LIFESPAN_MIN_SIZE: u64 = 1000;

/// Pro share of each reply thread with at least `min_size` change-tweets.
pub fn reply_composition(threads: &[ThreadStats], min_size: u64) -> Vec<(String, f64)> {
    threads
        .iter()
        .filter(|t| t.kind == ThreadKind::Reply && t.change_tweet_count >= min_size && t.change_tweet_count > 0)
        .map(|t| (t.thread_id.clone(), t.pro_ratio()))
        .collect()
}

/// `(thread id, size, lifespan in days)` of each retweet thread with at
/// least `min_size` change-tweets.
pub fn thread_lifespan(threads: &[ThreadStats], min_size: u64) -> Vec<(String, u64, u32)> {
    threads
        .iter()
        .filter(|t| t.kind == ThreadKind::Retweet && t.change_tweet_count >= min_size)
        .map(|t| (t.thread_id.clone(), t.change_tweet_count, t.lifespan()))
        .collect()
}

/// Count, mean and quartiles of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Linear-interpolation quantiles; `None` for an empty sample.
pub fn summarize(values: &[f64]) -> Option<Summary> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let pos = p * (v.len() - 1) as f64;
        let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
        v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
    };
    Some(Summary {
        count: v.len(),
        mean: v.iter().sum::<f64>() / v.len() as f64,
        min: v[0],
        q1: q(0.25),
        median: q(0.5),
        q3: q(0.75),
        max: v[v.len() - 1],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignedEdge {
    /// Author of the tweet replied to.
    pub src_user: String,
    /// Author of the reply.
    pub dst_user: String,
    pub weight: i8,
    pub day: u32,
    pub reply_tweet: String,
    pub parent_tweet: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSummary {
    pub nodes: Vec<String>,
    pub edges: usize,
    /// Nodes without incoming edges inside the component.
    pub roots: usize,
    pub positive: usize,
    pub negative: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SignedReplyGraph {
    pub nodes: BTreeSet<String>,
    pub edges: Vec<SignedEdge>,
    /// Reply events whose parent is not in the dataset.
    pub skipped: u64,
}

impl SignedReplyGraph {
    pub fn edges_csv_string(&self) -> String {
        let mut s = String::from("src_user,dst_user,weight,day\n");
        for e in &self.edges {
            s.push_str(&format!("{},{},{},{}\n", e.src_user, e.dst_user, e.weight, e.day));
        }
        s
    }

    /// Weakly connected components, largest first (ties by first node id).
    pub fn components(&self) -> Vec<ComponentSummary> {
        let ids: Vec<&String> = self.nodes.iter().collect();
        let pos: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let mut parent: Vec<usize> = (0..ids.len()).collect();
        fn find(p: &mut [usize], mut i: usize) -> usize {
            while p[i] != i {
                p[i] = p[p[i]];
                i = p[i];
            }
            i
        }
        for e in &self.edges {
            let (a, b) = (find(&mut parent, pos[e.src_user.as_str()]), find(&mut parent, pos[e.dst_user.as_str()]));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
        let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for i in 0..ids.len() {
            let r = find(&mut parent, i);
            members.entry(r).or_default().push(i);
        }
        let mut has_in = vec![false; ids.len()];
        let mut stats: HashMap<usize, (usize, usize, usize)> = HashMap::new();
        for e in &self.edges {
            let d = pos[e.dst_user.as_str()];
            has_in[d] = true;
            let r = find(&mut parent, d);
            let s = stats.entry(r).or_default();
            s.0 += 1;
            if e.weight > 0 {
                s.1 += 1;
            } else {
                s.2 += 1;
            }
        }
        let mut out: Vec<ComponentSummary> = members
            .into_iter()
            .map(|(r, m)| {
                let (edges, positive, negative) = stats.get(&r).copied().unwrap_or_default();
                ComponentSummary {
                    roots: m.iter().filter(|&&i| !has_in[i]).count(),
                    nodes: m.iter().map(|&i| ids[i].clone()).collect(),
                    edges,
                    positive,
                    negative,
                }
            })
            .collect();
        out.sort_by(|a, b| b.nodes.len().cmp(&a.nodes.len()).then_with(|| a.nodes[0].cmp(&b.nodes[0])));
        out
    }
}

/// One edge per reply change event, from the parent tweet's author to the
/// replier, weighted +1 when both tweets carry the same stance and -1
/// otherwise. Non-reply events are ignored; replies to tweets outside the
/// dataset are skipped and counted.
pub fn build_signed_reply_graph(events: &[ChangeEvent], ds: &Dataset) -> SignedReplyGraph {
    let mut g = SignedReplyGraph::default();
    for e in events.iter().filter(|e| e.kind == TweetKind::Reply) {
        let Some(parent) = e.parent_id.as_deref().and_then(|p| ds.tweet(p)) else {
            g.skipped += 1;
            continue;
        };
        g.nodes.insert(parent.user_id.clone());
        g.nodes.insert(e.user_id.clone());
        g.edges.push(SignedEdge {
            src_user: parent.user_id.clone(),
            dst_user: e.user_id.clone(),
            weight: if parent.stance == e.stance { 1 } else { -1 },
            day: e.day_index,
            reply_tweet: e.tweet_id.clone(),
            parent_tweet: parent.tweet_id.clone(),
        });
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::ChangeDirection;
    use crate::ingest::RecordInput;
    use chrono::{Duration, TimeZone, Utc};
    use proptest::prelude::*;

    fn input(id: &str, user: &str, day: i64, stance: Stance, kind: TweetKind, parent: Option<&str>, root: Option<&str>) -> RecordInput {
        let start = Utc.with_ymd_and_hms(2021, 1, 1, 0, 0, 0).unwrap();
        RecordInput {
            tweet_id: id.into(),
            user_id: user.into(),
            timestamp: start + Duration::days(day) + Duration::seconds(id.len() as i64),
            stance,
            kind,
            parent_id: parent.map(Into::into),
            root_id: root.map(Into::into),
            text: None,
        }
    }

    fn event(id: &str, user: &str, day: u32, stance: Stance, kind: TweetKind, parent: Option<&str>) -> ChangeEvent {
        ChangeEvent {
            user_id: user.into(),
            tweet_id: id.into(),
            day_index: day,
            direction: if stance == Stance::Pro { ChangeDirection::IntoPro } else { ChangeDirection::IntoAnti },
            stance,
            kind,
            parent_id: parent.map(Into::into),
        }
    }

    fn dataset(inputs: Vec<RecordInput>) -> Dataset {
        Dataset::from_inputs(inputs, Utc.with_ymd_and_hms(2021, 1, 1, 0, 0, 0).unwrap(), 0).unwrap()
    }

    #[test]
    fn composition_counts() {
        let ev = [
            event("a", "u", 0, Stance::Pro, TweetKind::Retweet, Some("x")),
            event("b", "u", 0, Stance::Pro, TweetKind::Retweet, Some("x")),
            event("c", "u", 0, Stance::Pro, TweetKind::Reply, Some("x")),
            event("d", "u", 0, Stance::Pro, TweetKind::Original, None),
        ];
        let c = change_tweet_composition(&ev).unwrap();
        assert_eq!((c.retweet_fraction, c.reply_fraction, c.original_fraction), (0.5, 0.25, 0.25));
        assert!(change_tweet_composition(&[]).is_err());
    }

    #[test]
    fn attribution_examples() {
        let ds = dataset(vec![
            input("s", "u1", 0, Stance::Anti, TweetKind::Original, None, None),
            input("r1", "a", 1, Stance::Anti, TweetKind::Reply, Some("s"), None),
            input("r2", "b", 2, Stance::Pro, TweetKind::Reply, Some("r1"), None),
            input("r3", "c", 2, Stance::Pro, TweetKind::Reply, Some("zz"), Some("gone")),
        ]);
        let ev = [
            event("t1", "x", 1, Stance::Pro, TweetKind::Retweet, Some("s")),
            event("t2", "y", 1, Stance::Pro, TweetKind::Retweet, Some("s")),
            event("t3", "z", 1, Stance::Pro, TweetKind::Retweet, Some("s")),
            event("r2", "b", 2, Stance::Pro, TweetKind::Reply, Some("r1")),
            event("r3", "c", 2, Stance::Pro, TweetKind::Reply, Some("zz")),
        ];
        let a = attribute_changes(&ev, &ds, AttributionTarget::ThreadRoot);
        assert_eq!(a.counts, BTreeMap::from([("u1".to_string(), 4)]));
        assert_eq!(a.unresolved, 1);
        let p = attribute_changes(&ev, &ds, AttributionTarget::ImmediateParent);
        assert_eq!(p.counts, BTreeMap::from([("u1".to_string(), 3), ("a".to_string(), 1)]));
        assert_eq!(p.unresolved, 1);
    }

    #[test]
    fn buckets_and_concentration() {
        let m = |v: &[u64]| -> BTreeMap<String, u64> {
            v.iter().enumerate().map(|(i, &c)| (format!("u{i:02}"), c)).collect()
        };
        let h = originator_buckets(&m(&[1, 5, 200]));
        assert_eq!(h.originators, [1, 1, 0, 1, 0]);
        assert_eq!(h.changes, [1, 5, 0, 200, 0]);
        assert_eq!(originator_buckets(&BTreeMap::new()), BucketHistogram::default());
        assert_eq!(concentration(&m(&[6, 2, 1, 1]), 0.5).unwrap(), 1);
        assert_eq!(concentration(&m(&[1; 10]), 0.5).unwrap(), 5);
        assert!(concentration(&BTreeMap::new(), 0.5).is_err());
        assert!(concentration(&m(&[1]), 0.0).is_err());
    }

    #[test]
    fn thread_metrics() {
        let t = ThreadStats {
            thread_id: "x".into(),
            kind: ThreadKind::Reply,
            change_tweet_count: 10,
            pro_count: 4,
            anti_count: 6,
            first_day: 5,
            last_day: 9,
            originator_user: None,
        };
        assert_eq!(t.pro_ratio(), 0.4);
        assert_eq!(reply_composition(std::slice::from_ref(&t), 10), [("x".to_string(), 0.4)]);
        assert!(reply_composition(std::slice::from_ref(&t), 11).is_empty());
        assert_eq!(t.lifespan(), 4);
    }

    #[test]
    fn threads_from_events() {
        let ds = dataset(vec![input("s", "o", 0, Stance::Pro, TweetKind::Original, None, None)]);
        let ev = [
            event("a", "u", 5, Stance::Pro, TweetKind::Retweet, Some("s")),
            event("b", "v", 5, Stance::Anti, TweetKind::Retweet, Some("s")),
            event("c", "w", 9, Stance::Pro, TweetKind::Retweet, Some("s")),
            event("d", "w", 9, Stance::Pro, TweetKind::Original, None),
        ];
        let th = build_threads(&ev, &ds);
        assert_eq!(th.len(), 1);
        let t = &th[0];
        assert_eq!((t.change_tweet_count, t.pro_count, t.anti_count), (3, 2, 1));
        assert_eq!((t.first_day, t.last_day, t.lifespan()), (5, 9, 4));
        assert_eq!(t.originator_user.as_deref(), Some("o"));
        assert_eq!(thread_lifespan(&th, 3), [("s".to_string(), 3, 4)]);
    }

    #[test]
    fn signed_edges() {
        let ds = dataset(vec![
            input("a0", "a", 0, Stance::Anti, TweetKind::Original, None, None),
            input("b0", "b", 0, Stance::Anti, TweetKind::Reply, Some("a0"), None),
            input("c0", "c", 0, Stance::Anti, TweetKind::Reply, Some("b0"), None),
        ]);
        let ev = [
            event("p1", "p", 1, Stance::Pro, TweetKind::Reply, Some("a0")),
            event("q1", "q", 1, Stance::Anti, TweetKind::Reply, Some("a0")),
            event("m1", "m", 1, Stance::Anti, TweetKind::Reply, Some("missing")),
        ];
        let g = build_signed_reply_graph(&ev, &ds);
        assert_eq!(g.edges.iter().map(|e| e.weight).collect::<Vec<_>>(), [-1, 1]);
        assert_eq!(g.skipped, 1);

        let chain = [
            event("b0", "b", 0, Stance::Anti, TweetKind::Reply, Some("a0")),
            event("c0", "c", 0, Stance::Anti, TweetKind::Reply, Some("b0")),
        ];
        let g = build_signed_reply_graph(&chain, &ds);
        let comps = g.components();
        assert_eq!(comps.len(), 1);
        assert_eq!((comps[0].edges, comps[0].positive, comps[0].roots), (2, 2, 1));
        assert_eq!(comps[0].nodes, ["a", "b", "c"]);
    }

    #[test]
    fn summary_quartiles() {
        let s = summarize(&[4.0, 1.0, 3.0, 2.0, 5.0]).unwrap();
        assert_eq!((s.min, s.q1, s.median, s.q3, s.max, s.mean), (1.0, 2.0, 3.0, 4.0, 5.0, 3.0));
        assert!(summarize(&[]).is_none());
    }

    proptest! {
        #[test]
        fn concentration_monotone_and_matches_scan(
            counts in proptest::collection::vec(1u64..500, 1..60),
            q1 in 0.01f64..1.0, q2 in 0.01f64..1.0,
        ) {
            let m: BTreeMap<String, u64> = counts.iter().enumerate().map(|(i, &c)| (format!("u{i:03}"), c)).collect();
            let (lo, hi) = if q1 <= q2 { (q1, q2) } else { (q2, q1) };
            prop_assert!(concentration(&m, lo).unwrap() <= concentration(&m, hi).unwrap());
            let h = originator_buckets(&m);
            prop_assert_eq!(h.originators.iter().sum::<u64>(), m.len() as u64);
            prop_assert_eq!(h.changes.iter().sum::<u64>(), counts.iter().sum::<u64>());
        }
    }
}
