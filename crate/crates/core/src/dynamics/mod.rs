//! Stance-change time series.
//!
//! A change is a non-neutral tweet whose stance differs from the same user's
//! immediately preceding non-neutral tweet. Changes into pro feed
//! `delta_plus`, changes into anti feed `delta_minus`, binned by the day of
//! the change-tweet. Because the non-neutral subsequence alternates between
//! runs, a user's totals differ by at most one.

mod mutual_info;
mod stationarity;

pub use mutual_info::{mutual_information, mutual_information_lag, MiCurve, DEFAULT_MI_BINS, MIN_OVERLAP};
pub use stationarity::{
    adf_critical_value_5pct, adf_test, kpss_bandwidth, kpss_test, schwert_lag, AdfResult, KpssResult,
    KPSS_CRITICAL_5PCT, MIN_TEST_LENGTH,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Dataset, Stance, StanceRecord, TweetKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChangeDirection {
    IntoPro,
    IntoAnti,
}

/// The tweet realising a stance change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeEvent {
    pub user_id: String,
    pub tweet_id: String,
    pub day_index: u32,
    pub direction: ChangeDirection,
    pub stance: Stance,
    pub kind: TweetKind,
    pub parent_id: Option<String>,
}

/// Stance changes of one user.
#[derive(Debug, Clone, PartialEq)]
pub struct UserChanges {
    pub user_id: String,
    pub events: Vec<ChangeEvent>,
    pub non_neutral_tweets: u64,
}

impl UserChanges {
    pub fn into_pro(&self) -> u64 {
        self.count(ChangeDirection::IntoPro)
    }

    pub fn into_anti(&self) -> u64 {
        self.count(ChangeDirection::IntoAnti)
    }

    fn count(&self, dir: ChangeDirection) -> u64 {
        self.events.iter().filter(|e| e.direction == dir).count() as u64
    }

    /// Daily `(delta_plus_i, delta_minus_i)` over `day_count` days.
    pub fn daily(&self, day_count: u32) -> (Vec<u64>, Vec<u64>) {
        let mut plus = vec![0; day_count as usize];
        let mut minus = vec![0; day_count as usize];
        for e in &self.events {
            let slot = match e.direction {
                ChangeDirection::IntoPro => &mut plus,
                ChangeDirection::IntoAnti => &mut minus,
            };
            if let Some(v) = slot.get_mut(e.day_index as usize) {
                *v += 1;
            }
        }
        (plus, minus)
    }
}

/// Scans one user's records (sorted by `(timestamp, tweet_id)`) for stance
/// changes. Neutral records are ignored; the first non-neutral record never
/// counts as a change.
pub fn per_user_changes<'a, I>(user_id: &str, records: I) -> UserChanges
where
    I: IntoIterator<Item = &'a StanceRecord>,
{
    let mut previous: Option<Stance> = None;
    let mut events = Vec::new();
    let mut non_neutral = 0;
    for rec in records {
        if rec.stance.is_neutral() {
            continue;
        }
        non_neutral += 1;
        if let Some(prev) = previous {
            if prev != rec.stance {
                events.push(ChangeEvent {
                    user_id: user_id.to_string(),
                    tweet_id: rec.tweet_id.clone(),
                    day_index: rec.day_index,
                    direction: match rec.stance {
                        Stance::Pro => ChangeDirection::IntoPro,
                        _ => ChangeDirection::IntoAnti,
                    },
                    stance: rec.stance,
                    kind: rec.kind,
                    parent_id: rec.parent_id.clone(),
                });
            }
        }
        previous = Some(rec.stance);
    }
    UserChanges {
        user_id: user_id.to_string(),
        events,
        non_neutral_tweets: non_neutral,
    }
}

/// Changes for every user of the dataset, in user-id order.
pub fn dataset_changes(ds: &Dataset) -> Vec<UserChanges> {
    let users: Vec<(&str, Vec<&StanceRecord>)> = ds.iter_users().collect();
    users
        .par_iter()
        .map(|(u, recs)| per_user_changes(u, recs.iter().copied()))
        .collect()
}

/// All change events in user order, each user's events in time order.
pub fn all_events(changes: &[UserChanges]) -> Vec<ChangeEvent> {
    changes.iter().flat_map(|c| c.events.iter().cloned()).collect()
}

/// Daily aggregate change counts with their difference and running sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StanceChangeSeries {
    pub delta_plus: Vec<u64>,
    pub delta_minus: Vec<u64>,
    /// `delta_plus(n) - delta_minus(n)`.
    pub diff: Vec<i64>,
    /// `S(n) = sum_{k <= n} diff(k)`.
    pub cumulative: Vec<i64>,
}

impl StanceChangeSeries {
    pub fn from_counts(delta_plus: Vec<u64>, delta_minus: Vec<u64>) -> Result<Self> {
        if delta_plus.len() != delta_minus.len() {
            return Err(Error::InvalidArgument(format!(
                "series lengths differ: {} vs {}",
                delta_plus.len(),
                delta_minus.len()
            )));
        }
        let diff: Vec<i64> = delta_plus
            .iter()
            .zip(&delta_minus)
            .map(|(&p, &m)| p as i64 - m as i64)
            .collect();
        let cumulative = diff
            .iter()
            .scan(0i64, |acc, &d| {
                *acc += d;
                Some(*acc)
            })
            .collect();
        Ok(StanceChangeSeries { delta_plus, delta_minus, diff, cumulative })
    }

    pub fn day_count(&self) -> usize {
        self.delta_plus.len()
    }

    /// Days `start..end` (clamped) as a new series with its own running sum.
    pub fn window(&self, start: usize, end: usize) -> StanceChangeSeries {
        let end = end.min(self.day_count());
        let start = start.min(end);
        Self::from_counts(self.delta_plus[start..end].to_vec(), self.delta_minus[start..end].to_vec())
            .expect("equal-length slices")
    }

    pub fn plus_f64(&self) -> Vec<f64> {
        self.delta_plus.iter().map(|&v| v as f64).collect()
    }

    pub fn minus_f64(&self) -> Vec<f64> {
        self.delta_minus.iter().map(|&v| v as f64).collect()
    }

    pub fn to_csv_string(&self, first_day: usize) -> String {
        let mut s = String::from("day,delta_plus,delta_minus,diff,cumulative\n");
        for i in 0..self.day_count() {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                first_day + i,
                self.delta_plus[i],
                self.delta_minus[i],
                self.diff[i],
                self.cumulative[i]
            ));
        }
        s
    }
}

/// Sums per-user changes into daily series, checking per-user bookkeeping:
/// `|delta_plus_i - delta_minus_i| <= 1`, changes fewer than non-neutral
/// tweets and every event inside the day range.
pub fn aggregate_series(users: &[UserChanges], day_count: u32) -> Result<StanceChangeSeries> {
    let mut plus = vec![0u64; day_count as usize];
    let mut minus = vec![0u64; day_count as usize];
    for u in users {
        let (p, m) = (u.into_pro(), u.into_anti());
        if p.abs_diff(m) > 1 {
            return Err(Error::Consistency(format!(
                "user {} has {p} changes into pro but {m} into anti",
                u.user_id
            )));
        }
        if !u.events.is_empty() && u.events.len() as u64 >= u.non_neutral_tweets {
            return Err(Error::Consistency(format!(
                "user {} has {} changes over {} non-neutral tweets",
                u.user_id,
                u.events.len(),
                u.non_neutral_tweets
            )));
        }
        for e in &u.events {
            let day = e.day_index as usize;
            if day >= plus.len() {
                return Err(Error::Consistency(format!(
                    "change tweet {} on day {day} beyond series length {day_count}",
                    e.tweet_id
                )));
            }
            match e.direction {
                ChangeDirection::IntoPro => plus[day] += 1,
                ChangeDirection::IntoAnti => minus[day] += 1,
            }
        }
    }
    StanceChangeSeries::from_counts(plus, minus)
}

/// `out[k] = series[k + 1] - series[k]`.
pub fn first_difference(series: &[f64]) -> Result<Vec<f64>> {
    if series.len() < 2 {
        return Err(Error::SeriesTooShort { required: 2, actual: series.len() });
    }
    Ok(series.windows(2).map(|w| w[1] - w[0]).collect())
}
