//! Lexicon-driven topic tagging and observed-versus-expected topic counts.
//!
//! A topic matches a tweet when the tweet's stance is admitted by the
//! topic's stance bucket and one of its phrases occurs as a contiguous run
//! of tokens in the normalised text. A group's expected count for a topic is
//! the population-wide topic count scaled by the group's share of the
//! population's tweets of that stance.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Stance, StanceRecord};

/// A small illustrative lexicon. Its phrases are invented examples, not a
/// curated research vocabulary.
pub const DEMO_LEXICON_CSV: &str = include_str!("../data/demo_lexicon.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StanceBucket {
    Anti,
    Pro,
    Both,
}

impl StanceBucket {
    pub fn admits(self, stance: Stance) -> bool {
        matches!(
            (self, stance),
            (StanceBucket::Both, Stance::Anti | Stance::Pro)
                | (StanceBucket::Anti, Stance::Anti)
                | (StanceBucket::Pro, Stance::Pro)
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StanceBucket::Anti => "anti",
            StanceBucket::Pro => "pro",
            StanceBucket::Both => "both",
        }
    }

    /// The non-neutral stances this bucket covers.
    pub fn stances(self) -> &'static [Stance] {
        match self {
            StanceBucket::Anti => &[Stance::Anti],
            StanceBucket::Pro => &[Stance::Pro],
            StanceBucket::Both => &[Stance::Anti, Stance::Pro],
        }
    }
}

impl FromStr for StanceBucket {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "anti" => Ok(StanceBucket::Anti),
            "pro" => Ok(StanceBucket::Pro),
            "both" => Ok(StanceBucket::Both),
            _ => Err(Error::InvalidArgument(format!("unknown stance bucket '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Veracity {
    Genuine,
    Falsehood,
    None,
}

impl Veracity {
    pub fn as_str(self) -> &'static str {
        match self {
            Veracity::Genuine => "genuine",
            Veracity::Falsehood => "falsehood",
            Veracity::None => "none",
        }
    }
}

impl FromStr for Veracity {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "genuine" => Ok(Veracity::Genuine),
            "falsehood" => Ok(Veracity::Falsehood),
            "none" => Ok(Veracity::None),
            _ => Err(Error::InvalidArgument(format!("unknown veracity '{s}'"))),
        }
    }
}

impl fmt::Display for Veracity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicEntry {
    pub name: String,
    pub stance: StanceBucket,
    pub veracity: Veracity,
    /// Normalised phrases.
    pub phrases: Vec<String>,
}

/// Topics with a first-token index over their phrases.
#[derive(Debug, Clone)]
pub struct TopicLexicon {
    entries: Vec<TopicEntry>,
    /// First token -> (entry index, phrase tokens).
    index: HashMap<String, Vec<(usize, Vec<String>)>>,
}

#[derive(Debug, Deserialize)]
struct LexiconRow {
    topic: String,
    stance: String,
    veracity: String,
    phrase: String,
}

impl TopicLexicon {
    pub fn new(entries: Vec<TopicEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut index: HashMap<String, Vec<(usize, Vec<String>)>> = HashMap::new();
        for (i, e) in entries.iter().enumerate() {
            if e.name.trim().is_empty() {
                return Err(Error::InvalidArgument("topic with empty name".into()));
            }
            if !seen.insert((e.name.clone(), e.stance)) {
                return Err(Error::InvalidArgument(format!(
                    "topic '{}' ({}) defined twice",
                    e.name,
                    e.stance.as_str()
                )));
            }
            if e.phrases.is_empty() {
                return Err(Error::InvalidArgument(format!("topic '{}' has no phrases", e.name)));
            }
            for p in &e.phrases {
                if p.is_empty() || *p != normalize_text(p) {
                    return Err(Error::InvalidArgument(format!(
                        "phrase '{p}' of topic '{}' is empty or not normalised",
                        e.name
                    )));
                }
                let tokens: Vec<String> = p.split(' ').map(str::to_string).collect();
                index.entry(tokens[0].clone()).or_default().push((i, tokens));
            }
        }
        Ok(TopicLexicon { entries, index })
    }

    /// Reads `topic,stance,veracity,phrase` rows, one phrase per row. Rows
    /// of the same topic and stance bucket are merged; phrases are
    /// normalised on load.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut entries: Vec<TopicEntry> = Vec::new();
        let mut by_key: HashMap<(String, StanceBucket), usize> = HashMap::new();
        for row in rdr.deserialize() {
            let row: LexiconRow = row?;
            let stance: StanceBucket = row.stance.to_ascii_lowercase().parse()?;
            let veracity: Veracity = row.veracity.to_ascii_lowercase().parse()?;
            let phrase = normalize_text(&row.phrase);
            if phrase.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "topic '{}' has a phrase that normalises to nothing",
                    row.topic
                )));
            }
            let key = (row.topic.clone(), stance);
            match by_key.get(&key) {
                Some(&i) => {
                    if entries[i].veracity != veracity {
                        return Err(Error::InvalidArgument(format!(
                            "topic '{}' has conflicting veracity labels",
                            row.topic
                        )));
                    }
                    if !entries[i].phrases.contains(&phrase) {
                        entries[i].phrases.push(phrase);
                    }
                }
                None => {
                    by_key.insert(key, entries.len());
                    entries.push(TopicEntry { name: row.topic, stance, veracity, phrases: vec![phrase] });
                }
            }
        }
        if entries.is_empty() {
            return Err(Error::Empty("lexicon"));
        }
        Self::new(entries)
    }

    pub fn demo() -> Self {
        Self::from_csv_reader(DEMO_LEXICON_CSV.as_bytes()).expect("bundled lexicon is valid")
    }

    pub fn entries(&self) -> &[TopicEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Lowercases, drops URLs and @mentions, turns every non-alphanumeric
/// character into a space and collapses whitespace.
pub fn normalize_text(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    for token in raw.split_whitespace() {
        let lower = token.to_lowercase();
        if lower.starts_with('@')
            || lower.starts_with("http://")
            || lower.starts_with("https://")
            || lower.starts_with("www.")
        {
            continue;
        }
        for c in lower.chars() {
            if c.is_alphanumeric() {
                out.push(c);
            } else if !out.ends_with(' ') {
                out.push(' ');
            }
        }
        if !out.is_empty() && !out.ends_with(' ') {
            out.push(' ');
        }
    }
    let trimmed_len = out.trim_end().len();
    out.truncate(trimmed_len);
    let start = out.len() - out.trim_start().len();
    out.split_off(start)
}

/// A topic assigned to a tweet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TopicMatch {
    /// Index into [`TopicLexicon::entries`].
    pub topic: usize,
    pub veracity: Veracity,
}

/// Every admissible topic with a phrase in `text`, ordered by lexicon
/// position. Neutral tweets match nothing.
pub fn tag_tweet(text: &str, stance: Stance, lexicon: &TopicLexicon) -> Vec<TopicMatch> {
    if stance.is_neutral() {
        return Vec::new();
    }
    let norm = normalize_text(text);
    let tokens: Vec<&str> = norm.split(' ').filter(|t| !t.is_empty()).collect();
    let mut found = BTreeSet::new();
    for start in 0..tokens.len() {
        let Some(candidates) = lexicon.index.get(tokens[start]) else {
            continue;
        };
        for (entry, phrase) in candidates {
            let e = &lexicon.entries[*entry];
            if !e.stance.admits(stance) || found.contains(entry) {
                continue;
            }
            let end = start + phrase.len();
            if end <= tokens.len() && tokens[start..end].iter().zip(phrase).all(|(a, b)| *a == b) {
                found.insert(*entry);
            }
        }
    }
    found
        .into_iter()
        .map(|topic| TopicMatch { topic, veracity: lexicon.entries[topic].veracity })
        .collect()
}

/// A non-neutral tweet with its topic assignments.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggedTweet {
    pub tweet_id: String,
    pub user_id: String,
    pub stance: Stance,
    pub topics: Vec<TopicMatch>,
}

impl TaggedTweet {
    pub fn has(&self, v: Veracity) -> bool {
        self.topics.iter().any(|m| m.veracity == v)
    }
}

/// Tags every non-neutral record; records without text get no topics.
pub fn tag_corpus(records: &[StanceRecord], lexicon: &TopicLexicon) -> Vec<TaggedTweet> {
    records
        .par_iter()
        .filter(|r| !r.stance.is_neutral())
        .map(|r| TaggedTweet {
            tweet_id: r.tweet_id.clone(),
            user_id: r.user_id.clone(),
            stance: r.stance,
            topics: r.text.as_deref().map(|t| tag_tweet(t, r.stance, lexicon)).unwrap_or_default(),
        })
        .collect()
}

/// Which tweets define topic totals and stance shares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Denominator {
    /// Every tweet in the dataset.
    #[default]
    Dataset,
    /// Only tweets of dual-stance users.
    Dual,
}

impl Denominator {
    pub fn as_str(self) -> &'static str {
        match self {
            Denominator::Dataset => "dataset",
            Denominator::Dual => "dual",
        }
    }
}

impl FromStr for Denominator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dataset" => Ok(Denominator::Dataset),
            "dual" => Ok(Denominator::Dual),
            _ => Err(Error::InvalidArgument(format!("unknown denominator '{s}'"))),
        }
    }
}

/// A group's fraction of the population's anti and pro tweets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StanceShares {
    pub anti: f64,
    pub pro: f64,
}

impl StanceShares {
    pub fn for_stance(&self, s: Stance) -> f64 {
        match s {
            Stance::Anti => self.anti,
            Stance::Pro => self.pro,
            Stance::Neutral => 0.0,
        }
    }
}

/// `expected = total * share`, per topic.
pub fn expected_counts(share: f64, topic_totals: &[u64]) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&share) {
        return Err(Error::InvalidArgument(format!("share {share} outside [0, 1]")));
    }
    Ok(topic_totals.iter().map(|&t| t as f64 * share).collect())
}

/// A named set of users.
#[derive(Debug, Clone, PartialEq)]
pub struct UserGroup {
    pub name: String,
    pub users: HashSet<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicRow {
    pub group: String,
    pub topic: String,
    pub stance: Stance,
    pub observed: u64,
    pub expected: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VeracityReport {
    pub group: String,
    pub genuine_observed: u64,
    pub genuine_expected: f64,
    pub falsehood_observed: u64,
    pub falsehood_expected: f64,
    pub unclassified: u64,
    pub anti_tweets: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicReport {
    pub rows: Vec<TopicRow>,
    pub veracity: Vec<VeracityReport>,
    pub shares: Vec<(String, StanceShares)>,
}

impl TopicReport {
    pub fn to_csv_string(&self) -> String {
        let mut s = String::from("group,topic,stance,observed,expected\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                csv_field(&r.group),
                csv_field(&r.topic),
                r.stance,
                r.observed,
                r.expected
            ));
        }
        s
    }

    pub fn veracity_csv_string(&self) -> String {
        let mut s = String::from(
            "group,genuine_observed,genuine_expected,falsehood_observed,falsehood_expected,unclassified\n",
        );
        for v in &self.veracity {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                csv_field(&v.group),
                v.genuine_observed,
                v.genuine_expected,
                v.falsehood_observed,
                v.falsehood_expected,
                v.unclassified
            ));
        }
        s
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Counts per (topic, stance) and veracity flags over a set of tweets.
#[derive(Debug, Clone, Default)]
struct Tally {
    topic: HashMap<(usize, Stance), u64>,
    anti: u64,
    pro: u64,
    genuine: u64,
    falsehood: u64,
    unclassified: u64,
}

impl Tally {
    fn add(&mut self, t: &TaggedTweet) {
        match t.stance {
            Stance::Anti => self.anti += 1,
            Stance::Pro => self.pro += 1,
            Stance::Neutral => return,
        }
        for m in &t.topics {
            *self.topic.entry((m.topic, t.stance)).or_default() += 1;
        }
        if t.stance == Stance::Anti {
            let (g, f) = (t.has(Veracity::Genuine), t.has(Veracity::Falsehood));
            self.genuine += g as u64;
            self.falsehood += f as u64;
            self.unclassified += (!g && !f) as u64;
        }
    }

    fn get(&self, topic: usize, stance: Stance) -> u64 {
        self.topic.get(&(topic, stance)).copied().unwrap_or(0)
    }
}

fn share(part: u64, whole: u64) -> f64 {
    if whole == 0 {
        0.0
    } else {
        part as f64 / whole as f64
    }
}

/// Observed and expected topic counts for each group. Totals and shares are
/// taken over tweets whose author satisfies `in_population`; group tweets
/// outside the population are ignored. When the groups partition the
/// population, expected counts sum to the population's observed counts.
pub fn topic_report(
    tagged: &[TaggedTweet],
    lexicon: &TopicLexicon,
    groups: &[UserGroup],
    in_population: impl Fn(&str) -> bool,
) -> TopicReport {
    let mut population = Tally::default();
    let mut per_group = vec![Tally::default(); groups.len()];
    for t in tagged {
        if !in_population(&t.user_id) {
            continue;
        }
        population.add(t);
        for (g, tally) in groups.iter().zip(per_group.iter_mut()) {
            if g.users.contains(&t.user_id) {
                tally.add(t);
            }
        }
    }

    let mut rows = Vec::new();
    let mut veracity = Vec::new();
    let mut shares = Vec::new();
    for (g, tally) in groups.iter().zip(&per_group) {
        let sh = StanceShares { anti: share(tally.anti, population.anti), pro: share(tally.pro, population.pro) };
        for (i, e) in lexicon.entries().iter().enumerate() {
            for &s in e.stance.stances() {
                rows.push(TopicRow {
                    group: g.name.clone(),
                    topic: e.name.clone(),
                    stance: s,
                    observed: tally.get(i, s),
                    expected: population.get(i, s) as f64 * sh.for_stance(s),
                });
            }
        }
        veracity.push(VeracityReport {
            group: g.name.clone(),
            genuine_observed: tally.genuine,
            genuine_expected: population.genuine as f64 * sh.anti,
            falsehood_observed: tally.falsehood,
            falsehood_expected: population.falsehood as f64 * sh.anti,
            unclassified: tally.unclassified,
            anti_tweets: tally.anti,
        });
        shares.push((g.name.clone(), sh));
    }
    TopicReport { rows, veracity, shares }
}

/// Genuine / falsehood / unclassified counts over anti tweets, counting a
/// tweet with both flags in both columns.
pub fn veracity_counts(tagged: &[TaggedTweet]) -> (u64, u64, u64) {
    let mut t = Tally::default();
    tagged.iter().filter(|x| x.stance == Stance::Anti).for_each(|x| t.add(x));
    (t.genuine, t.falsehood, t.unclassified)
}
