//! Parsing and indexing of stance-labelled tweet records.
//!
//! Input is line-delimited JSON, one record per line:
//!
//! ```text
//! {"tweet_id":"t1","user_id":"u1","ts":"2020-11-09T12:00:00Z","stance":"pro","kind":"original"}
//! ```
//!
//! Records are held time-ordered by `(timestamp, tweet_id)`; the per-user
//! index inherits that order.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{BufRead, Write};

use chrono::{DateTime, NaiveTime, SecondsFormat, Timelike, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cohort::UserAggregate;
use crate::error::{Error, Result};

const SECONDS_PER_DAY: i64 = 86_400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stance {
    Anti,
    Pro,
    Neutral,
}

impl Stance {
    pub fn as_str(self) -> &'static str {
        match self {
            Stance::Anti => "anti",
            Stance::Pro => "pro",
            Stance::Neutral => "neutral",
        }
    }

    pub fn is_neutral(self) -> bool {
        self == Stance::Neutral
    }
}

impl fmt::Display for Stance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TweetKind {
    Original,
    Retweet,
    Reply,
}

impl TweetKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TweetKind::Original => "original",
            TweetKind::Retweet => "retweet",
            TweetKind::Reply => "reply",
        }
    }
}

impl fmt::Display for TweetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One tweet observation with its detected stance.
#[derive(Debug, Clone, PartialEq)]
pub struct StanceRecord {
    pub tweet_id: String,
    pub user_id: String,
    /// Second resolution; sub-second parts are truncated on parse.
    pub timestamp: DateTime<Utc>,
    pub day_index: u32,
    pub stance: Stance,
    pub kind: TweetKind,
    pub parent_id: Option<String>,
    pub root_id: Option<String>,
    pub text: Option<String>,
}

impl StanceRecord {
    fn sort_key(&self) -> (DateTime<Utc>, &str) {
        (self.timestamp, self.tweet_id.as_str())
    }
}

/// Wire format of a single input line.
#[derive(Debug, Serialize, Deserialize)]
struct WireRecord {
    tweet_id: String,
    user_id: String,
    ts: DateTime<Utc>,
    stance: Stance,
    kind: TweetKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    parent_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    root_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text: Option<String>,
}

/// Raw record before day indexing. Used by generators and tests to build a
/// [`Dataset`] without going through JSON.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordInput {
    pub tweet_id: String,
    pub user_id: String,
    pub timestamp: DateTime<Utc>,
    pub stance: Stance,
    pub kind: TweetKind,
    pub parent_id: Option<String>,
    pub root_id: Option<String>,
    pub text: Option<String>,
}

impl From<WireRecord> for RecordInput {
    fn from(w: WireRecord) -> Self {
        RecordInput {
            tweet_id: w.tweet_id,
            user_id: w.user_id,
            timestamp: w.ts,
            stance: w.stance,
            kind: w.kind,
            parent_id: w.parent_id,
            root_id: w.root_id,
            text: w.text,
        }
    }
}

impl RecordInput {
    fn validate(&self) -> std::result::Result<(), String> {
        if self.tweet_id.is_empty() {
            return Err("empty tweet_id".into());
        }
        if self.user_id.is_empty() {
            return Err("empty user_id".into());
        }
        match (self.kind, &self.parent_id) {
            (TweetKind::Original, Some(_)) => Err("original tweet carries a parent_id".into()),
            (TweetKind::Retweet | TweetKind::Reply, None) => {
                Err(format!("{} without parent_id", self.kind))
            }
            _ => Ok(()),
        }
    }
}

/// UTC midnight at or before `ts`.
pub fn utc_midnight(ts: DateTime<Utc>) -> DateTime<Utc> {
    ts.date_naive().and_time(NaiveTime::MIN).and_utc()
}

fn truncate_to_second(ts: DateTime<Utc>) -> DateTime<Utc> {
    ts.with_nanosecond(0).unwrap_or(ts)
}

/// Immutable, indexed collection of stance records.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<StanceRecord>,
    by_user: BTreeMap<String, Vec<usize>>,
    by_tweet: HashMap<String, usize>,
    dataset_start: DateTime<Utc>,
    day_count: u32,
}

impl Dataset {
    /// Builds a dataset from already-validated inputs. Fails on the first
    /// record that violates an invariant or duplicates a tweet id.
    pub fn from_inputs(
        inputs: Vec<RecordInput>,
        dataset_start: DateTime<Utc>,
        min_day_count: u32,
    ) -> Result<Dataset> {
        let mut records = Vec::with_capacity(inputs.len());
        for (i, input) in inputs.into_iter().enumerate() {
            let rec = index_record(input, dataset_start)
                .map_err(|reason| Error::MalformedRecord { line: i + 1, reason })?;
            records.push(rec);
        }
        Self::assemble(records, dataset_start, min_day_count, true).map(|(ds, _)| ds)
    }

    fn assemble(
        mut records: Vec<StanceRecord>,
        dataset_start: DateTime<Utc>,
        min_day_count: u32,
        strict: bool,
    ) -> Result<(Dataset, usize)> {
        // Stable sort keeps first-seen order among exact duplicates.
        records.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));

        let mut by_tweet: HashMap<String, usize> = HashMap::with_capacity(records.len());
        let mut kept = Vec::with_capacity(records.len());
        let mut duplicates = 0;
        for rec in records {
            if by_tweet.contains_key(&rec.tweet_id) {
                if strict {
                    return Err(Error::MalformedRecord {
                        line: 0,
                        reason: format!("duplicate tweet_id {}", rec.tweet_id),
                    });
                }
                duplicates += 1;
                continue;
            }
            by_tweet.insert(rec.tweet_id.clone(), kept.len());
            kept.push(rec);
        }

        let mut by_user: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, rec) in kept.iter().enumerate() {
            by_user.entry(rec.user_id.clone()).or_default().push(i);
        }

        let observed_days = kept.iter().map(|r| r.day_index + 1).max().unwrap_or(0);
        let ds = Dataset {
            records: kept,
            by_user,
            by_tweet,
            dataset_start,
            day_count: observed_days.max(min_day_count),
        };
        Ok((ds, duplicates))
    }

    pub fn records(&self) -> &[StanceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dataset_start(&self) -> DateTime<Utc> {
        self.dataset_start
    }

    pub fn day_count(&self) -> u32 {
        self.day_count
    }

    pub fn user_count(&self) -> usize {
        self.by_user.len()
    }

    pub fn users(&self) -> impl Iterator<Item = &str> {
        self.by_user.keys().map(String::as_str)
    }

    /// Records of one user in `(timestamp, tweet_id)` order.
    pub fn user_records(&self, user_id: &str) -> Vec<&StanceRecord> {
        self.by_user
            .get(user_id)
            .map(|idx| idx.iter().map(|&i| &self.records[i]).collect())
            .unwrap_or_default()
    }

    /// Iterates `(user_id, records)` in user-id order.
    pub fn iter_users(&self) -> impl Iterator<Item = (&str, Vec<&StanceRecord>)> {
        self.by_user
            .iter()
            .map(|(u, idx)| (u.as_str(), idx.iter().map(|&i| &self.records[i]).collect()))
    }

    pub fn tweet(&self, tweet_id: &str) -> Option<&StanceRecord> {
        self.by_tweet.get(tweet_id).map(|&i| &self.records[i])
    }

    /// Day index for an instant relative to this dataset's start.
    pub fn day_of(&self, ts: DateTime<Utc>) -> Option<u32> {
        day_index(ts, self.dataset_start)
    }

    /// Keeps only the records accepted by `keep`, re-indexing the result.
    /// Used for snapshot comparisons (e.g. tweets still online later).
    pub fn filter(&self, mut keep: impl FnMut(&StanceRecord) -> bool) -> Dataset {
        let records: Vec<StanceRecord> = self.records.iter().filter(|r| keep(r)).cloned().collect();
        Self::assemble(records, self.dataset_start, self.day_count, false)
            .map(|(ds, _)| ds)
            .expect("filtering a valid dataset cannot fail")
    }
}

fn day_index(ts: DateTime<Utc>, start: DateTime<Utc>) -> Option<u32> {
    let secs = (ts - start).num_seconds();
    if secs < 0 {
        return None;
    }
    u32::try_from(secs.div_euclid(SECONDS_PER_DAY)).ok()
}

fn index_record(
    input: RecordInput,
    dataset_start: DateTime<Utc>,
) -> std::result::Result<StanceRecord, String> {
    input.validate()?;
    let timestamp = truncate_to_second(input.timestamp);
    let day_index = day_index(timestamp, dataset_start)
        .ok_or_else(|| format!("timestamp {timestamp} precedes dataset start {dataset_start}"))?;
    Ok(StanceRecord {
        tweet_id: input.tweet_id,
        user_id: input.user_id,
        timestamp,
        day_index,
        stance: input.stance,
        kind: input.kind,
        parent_id: input.parent_id,
        root_id: input.root_id,
        text: input.text,
    })
}

#[derive(Debug, Clone, Default)]
pub struct ParseOptions {
    /// Origin of day indices. Defaults to UTC midnight of the earliest record.
    pub dataset_start: Option<DateTime<Utc>>,
    /// Abort on the first malformed line instead of skipping it.
    pub strict: bool,
    /// Lower bound on the day count (series length) of the result.
    pub min_day_count: u32,
}

#[derive(Debug, Clone)]
pub struct SkippedLine {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct ParseOutcome {
    pub dataset: Dataset,
    pub skipped: Vec<SkippedLine>,
}

impl ParseOutcome {
    pub fn skipped_count(&self) -> usize {
        self.skipped.len()
    }
}

/// Reads line-delimited JSON records.
///
/// Blank lines are ignored. Malformed lines are skipped and reported unless
/// `opts.strict` is set, in which case the first one aborts parsing.
pub fn parse_records<R: BufRead>(reader: R, opts: &ParseOptions) -> Result<ParseOutcome> {
    let mut lines = Vec::new();
    for line in reader.lines() {
        lines.push(line?);
    }

    let parsed: Vec<std::result::Result<Option<RecordInput>, String>> = lines
        .par_iter()
        .map(|line| {
            let trimmed = line.trim();
            if trimmed.is_empty() {
                return Ok(None);
            }
            let wire: WireRecord = serde_json::from_str(trimmed).map_err(|e| e.to_string())?;
            let input = RecordInput::from(wire);
            input.validate()?;
            Ok(Some(input))
        })
        .collect();

    let mut skipped = Vec::new();
    let mut inputs = Vec::with_capacity(parsed.len());
    for (i, res) in parsed.into_iter().enumerate() {
        match res {
            Ok(Some(input)) => inputs.push((i + 1, input)),
            Ok(None) => {}
            Err(reason) => {
                if opts.strict {
                    return Err(Error::MalformedRecord { line: i + 1, reason });
                }
                skipped.push(SkippedLine { line: i + 1, reason });
            }
        }
    }

    let dataset_start = match opts.dataset_start {
        Some(s) => s,
        None => inputs
            .iter()
            .map(|(_, r)| truncate_to_second(r.timestamp))
            .min()
            .map(utc_midnight)
            .unwrap_or(DateTime::UNIX_EPOCH),
    };

    let mut records = Vec::with_capacity(inputs.len());
    for (line, input) in inputs {
        match index_record(input, dataset_start) {
            Ok(rec) => records.push((line, rec)),
            Err(reason) => {
                if opts.strict {
                    return Err(Error::MalformedRecord { line, reason });
                }
                skipped.push(SkippedLine { line, reason });
            }
        }
    }

    // Duplicate ids: keep the first occurrence in file order.
    let mut seen = HashMap::with_capacity(records.len());
    let mut unique = Vec::with_capacity(records.len());
    for (line, rec) in records {
        if let Some(first) = seen.get(&rec.tweet_id) {
            let reason = format!("duplicate tweet_id {} (first seen on line {first})", rec.tweet_id);
            if opts.strict {
                return Err(Error::MalformedRecord { line, reason });
            }
            skipped.push(SkippedLine { line, reason });
            continue;
        }
        seen.insert(rec.tweet_id.clone(), line);
        unique.push(rec);
    }
    skipped.sort_by_key(|s| s.line);

    let (dataset, _) = Dataset::assemble(unique, dataset_start, opts.min_day_count, true)?;
    Ok(ParseOutcome { dataset, skipped })
}

/// Writes the dataset back out in the input wire format, in dataset order.
pub fn write_records<W: Write>(ds: &Dataset, mut out: W) -> Result<()> {
    for rec in ds.records() {
        let wire = WireRecord {
            tweet_id: rec.tweet_id.clone(),
            user_id: rec.user_id.clone(),
            ts: rec.timestamp,
            stance: rec.stance,
            kind: rec.kind,
            parent_id: rec.parent_id.clone(),
            root_id: rec.root_id.clone(),
            text: rec.text.clone(),
        };
        serde_json::to_writer(&mut out, &wire).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// ISO-8601 rendering used in all outputs.
pub fn format_timestamp(ts: DateTime<Utc>) -> String {
    ts.to_rfc3339_opts(SecondsFormat::Secs, true)
}

/// Per-user anti/pro/neutral counts. Dual probability is left at zero; the
/// cohort module fills it in.
pub fn aggregate_users(ds: &Dataset) -> BTreeMap<String, UserAggregate> {
    ds.iter_users()
        .map(|(user, recs)| (user.to_string(), UserAggregate::from_records(user, &recs)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn parse(text: &str) -> ParseOutcome {
        parse_records(Cursor::new(text), &ParseOptions::default()).unwrap()
    }

    #[test]
    fn single_valid_line() {
        let out = parse(
            r#"{"tweet_id":"t1","user_id":"u1","ts":"2020-03-20T10:00:00Z","stance":"pro","kind":"original"}"#,
        );
        assert_eq!(out.dataset.len(), 1);
        assert_eq!(out.dataset.user_count(), 1);
        assert_eq!(out.skipped_count(), 0);
        assert_eq!(out.dataset.day_count(), 1);
    }

    #[test]
    fn retweet_without_parent_is_skipped() {
        let out = parse(
            r#"{"tweet_id":"t1","user_id":"u1","ts":"2020-03-20T10:00:00Z","stance":"pro","kind":"retweet"}"#,
        );
        assert_eq!(out.dataset.len(), 0);
        assert_eq!(out.skipped_count(), 1);
    }

    #[test]
    fn original_with_parent_is_skipped() {
        let out = parse(
            r#"{"tweet_id":"t1","user_id":"u1","ts":"2020-03-20T10:00:00Z","stance":"pro","kind":"original","parent_id":"x"}"#,
        );
        assert_eq!(out.skipped_count(), 1);
    }

    #[test]
    fn strict_mode_fails_on_first_bad_line() {
        let text = "{\"tweet_id\":\"t1\"}\nnot json\n";
        let err = parse_records(
            Cursor::new(text),
            &ParseOptions {
                strict: true,
                ..Default::default()
            },
        )
        .unwrap_err();
        assert!(matches!(err, Error::MalformedRecord { line: 1, .. }), "{err}");
    }

    #[test]
    fn per_user_sequence_is_sorted() {
        let text = concat!(
            r#"{"tweet_id":"b","user_id":"u1","ts":"2020-03-22T10:00:00Z","stance":"anti","kind":"original"}"#,
            "\n",
            r#"{"tweet_id":"a","user_id":"u1","ts":"2020-03-20T10:00:00Z","stance":"pro","kind":"original"}"#,
            "\n",
            r#"{"tweet_id":"c","user_id":"u1","ts":"2020-03-20T10:00:00Z","stance":"neutral","kind":"original"}"#,
        );
        let out = parse(text);
        let ids: Vec<_> = out
            .dataset
            .user_records("u1")
            .iter()
            .map(|r| r.tweet_id.as_str())
            .collect();
        assert_eq!(ids, ["a", "c", "b"]);
        let days: Vec<_> = out.dataset.user_records("u1").iter().map(|r| r.day_index).collect();
        assert_eq!(days, [0, 0, 2]);
    }

    #[test]
    fn unknown_fields_are_ignored_and_subseconds_truncated() {
        let out = parse(
            r#"{"tweet_id":"t1","user_id":"u1","ts":"2020-03-20T10:00:00.750Z","stance":"anti","kind":"reply","parent_id":"p","lang":"en"}"#,
        );
        let rec = &out.dataset.records()[0];
        assert_eq!(format_timestamp(rec.timestamp), "2020-03-20T10:00:00Z");
        assert_eq!(rec.parent_id.as_deref(), Some("p"));
    }

    #[test]
    fn record_before_start_is_skipped() {
        let start = "2020-03-21T00:00:00Z".parse().unwrap();
        let out = parse_records(
            Cursor::new(
                r#"{"tweet_id":"t1","user_id":"u1","ts":"2020-03-20T10:00:00Z","stance":"pro","kind":"original"}"#,
            ),
            &ParseOptions {
                dataset_start: Some(start),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(out.skipped_count(), 1);
    }

    #[test]
    fn duplicate_tweet_ids_keep_first() {
        let text = concat!(
            r#"{"tweet_id":"t1","user_id":"u1","ts":"2020-03-20T10:00:00Z","stance":"pro","kind":"original"}"#,
            "\n",
            r#"{"tweet_id":"t1","user_id":"u2","ts":"2020-03-19T10:00:00Z","stance":"anti","kind":"original"}"#,
        );
        let out = parse(text);
        assert_eq!(out.dataset.len(), 1);
        assert_eq!(out.dataset.records()[0].user_id, "u1");
        assert_eq!(out.skipped[0].line, 2);
    }

    #[test]
    fn aggregate_counts() {
        let text = concat!(
            r#"{"tweet_id":"1","user_id":"u1","ts":"2020-03-20T10:00:00Z","stance":"pro","kind":"original"}"#,
            "\n",
            r#"{"tweet_id":"2","user_id":"u1","ts":"2020-03-20T11:00:00Z","stance":"anti","kind":"original"}"#,
            "\n",
            r#"{"tweet_id":"3","user_id":"u1","ts":"2020-03-20T12:00:00Z","stance":"neutral","kind":"original"}"#,
            "\n",
            r#"{"tweet_id":"4","user_id":"u2","ts":"2020-03-20T10:00:00Z","stance":"pro","kind":"original"}"#,
            "\n",
            r#"{"tweet_id":"5","user_id":"u2","ts":"2020-03-20T10:30:00Z","stance":"pro","kind":"original"}"#,
        );
        let aggs = aggregate_users(&parse(text).dataset);
        let u1 = &aggs["u1"];
        assert_eq!((u1.n_a, u1.n_p, u1.n_neutral), (1, 1, 1));
        assert!(u1.is_dual_detected());
        let u2 = &aggs["u2"];
        assert_eq!((u2.n_a, u2.n_p), (0, 2));
        assert!(!u2.is_dual_detected());
    }

    #[test]
    fn empty_dataset_aggregates_to_empty_map() {
        let out = parse("");
        assert!(aggregate_users(&out.dataset).is_empty());
        assert_eq!(out.dataset.day_count(), 0);
    }
}
