//! Generator configuration and its flat `key = value` text form.

use std::fmt::Write as _;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ground-truth behaviour class of a generated user.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UserType {
    PureAnti,
    PurePro,
    DualProLean,
    DualAntiLean,
    DualBalanced,
}

impl UserType {
    pub const ALL: [UserType; 5] = [
        UserType::PureAnti,
        UserType::PurePro,
        UserType::DualProLean,
        UserType::DualAntiLean,
        UserType::DualBalanced,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            UserType::PureAnti => "pure-anti",
            UserType::PurePro => "pure-pro",
            UserType::DualProLean => "dual-pro-lean",
            UserType::DualAntiLean => "dual-anti-lean",
            UserType::DualBalanced => "dual-balanced",
        }
    }

    fn key(self) -> &'static str {
        match self {
            UserType::PureAnti => "pure_anti",
            UserType::PurePro => "pure_pro",
            UserType::DualProLean => "dual_pro_lean",
            UserType::DualAntiLean => "dual_anti_lean",
            UserType::DualBalanced => "dual_balanced",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Truncated discrete power law for tweets per user.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TweetCountDist {
    pub exponent: f64,
    pub min: u64,
    pub cap: u64,
}

/// All generator parameters. Stance vectors and channel rows are ordered
/// `(anti, pro, neutral)`; the kind mix is `(original, retweet, reply)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub n_users: usize,
    pub day_count: u32,
    pub start_date: NaiveDate,
    /// Probabilities over [`UserType::ALL`].
    pub type_mix: [f64; 5],
    pub tweets: TweetCountDist,
    /// True-stance emission probabilities per user type.
    pub emission: [[f64; 3]; 5],
    /// `channel[true][detected]`.
    pub channel: [[f64; 3]; 3],
    pub kind_mix: [f64; 3],
    pub originators: usize,
    /// Zipf exponent of source-tweet popularity.
    pub originator_exponent: f64,
    /// Retweets and replies follow their source within this many days.
    pub burst_days: u32,
    /// Fraction of source tweets left out of the record stream.
    pub missing_source_fraction: f64,
    /// Fraction of replies that carry their thread root id.
    pub root_id_fraction: f64,
    /// Fraction of replies re-targeted at an earlier reply of the thread.
    pub nested_reply_fraction: f64,
    pub text: bool,
    /// Chance that a non-neutral tweet's text carries a lexicon phrase.
    pub topic_probability: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            seed: 0,
            n_users: 10_000,
            day_count: 369,
            start_date: NaiveDate::from_ymd_opt(2020, 3, 20).expect("valid date"),
            type_mix: [0.3, 0.4, 0.1, 0.1, 0.1],
            tweets: TweetCountDist { exponent: 2.0, min: 1, cap: 1000 },
            emission: [
                [0.8, 0.0, 0.2],
                [0.0, 0.8, 0.2],
                [0.15, 0.65, 0.2],
                [0.65, 0.15, 0.2],
                [0.4, 0.4, 0.2],
            ],
            channel: [[0.85, 0.05, 0.1], [0.04, 0.9, 0.06], [0.12, 0.1, 0.78]],
            kind_mix: [0.16, 0.67, 0.17],
            originators: 1000,
            originator_exponent: 1.8,
            burst_days: 3,
            missing_source_fraction: 0.05,
            root_id_fraction: 0.5,
            nested_reply_fraction: 0.3,
            text: true,
            topic_probability: 0.8,
        }
    }
}

const PROB_TOLERANCE: f64 = 1e-12;

fn check_distribution(name: &str, v: &[f64]) -> Result<()> {
    if v.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::Config(format!("{name}: probabilities must lie in [0, 1]")));
    }
    let sum: f64 = v.iter().sum();
    if (sum - 1.0).abs() > PROB_TOLERANCE {
        return Err(Error::Config(format!("{name}: probabilities sum to {sum}, not 1")));
    }
    Ok(())
}

fn check_fraction(name: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::Config(format!("{name} = {v} outside [0, 1]")));
    }
    Ok(())
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_users == 0 {
            return Err(Error::Config("n_users must be positive".into()));
        }
        if self.day_count == 0 {
            return Err(Error::Config("day_count must be positive".into()));
        }
        check_distribution("type_mix", &self.type_mix)?;
        for t in UserType::ALL {
            check_distribution(&format!("emission.{}", t.key()), &self.emission[t.index()])?;
        }
        for (row, name) in self.channel.iter().zip(["anti", "pro", "neutral"]) {
            check_distribution(&format!("channel.{name}"), row)?;
        }
        check_distribution("kind_mix", &self.kind_mix)?;
        let t = self.tweets;
        if !(t.exponent > 1.0) || t.min == 0 || t.cap < t.min {
            return Err(Error::Config(format!(
                "tweet counts need exponent > 1 and 1 <= min <= cap, got {t:?}"
            )));
        }
        if self.originators == 0 && self.kind_mix[0] < 1.0 {
            return Err(Error::Config("retweets and replies need at least one originator".into()));
        }
        if !(self.originator_exponent >= 0.0) {
            return Err(Error::Config("originator_exponent must be non-negative".into()));
        }
        if self.burst_days == 0 {
            return Err(Error::Config("burst_days must be positive".into()));
        }
        check_fraction("missing_source_fraction", self.missing_source_fraction)?;
        check_fraction("root_id_fraction", self.root_id_fraction)?;
        check_fraction("nested_reply_fraction", self.nested_reply_fraction)?;
        check_fraction("topic_probability", self.topic_probability)?;
        Ok(())
    }

    /// Flat `key = value` form accepted by [`GeneratorConfig::from_kv_str`].
    pub fn to_kv_string(&self) -> String {
        let list = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("seed", self.seed.to_string());
        put("n_users", self.n_users.to_string());
        put("day_count", self.day_count.to_string());
        put("start_date", self.start_date.to_string());
        put("type_mix", list(&self.type_mix));
        put("tweets_exponent", self.tweets.exponent.to_string());
        put("tweets_min", self.tweets.min.to_string());
        put("tweets_cap", self.tweets.cap.to_string());
        for t in UserType::ALL {
            put(&format!("emission.{}", t.key()), list(&self.emission[t.index()]));
        }
        for (row, name) in self.channel.iter().zip(["anti", "pro", "neutral"]) {
            put(&format!("channel.{name}"), list(row));
        }
        put("kind_mix", list(&self.kind_mix));
        put("originators", self.originators.to_string());
        put("originator_exponent", self.originator_exponent.to_string());
        put("burst_days", self.burst_days.to_string());
        put("missing_source_fraction", self.missing_source_fraction.to_string());
        put("root_id_fraction", self.root_id_fraction.to_string());
        put("nested_reply_fraction", self.nested_reply_fraction.to_string());
        put("text", self.text.to_string());
        put("topic_probability", self.topic_probability.to_string());
        s
    }

    /// Parses `key = value` lines over the defaults. Blank lines and lines
    /// starting with `#` are ignored; unknown keys are errors.
    pub fn from_kv_str(text: &str) -> Result<Self> {
        let mut cfg = GeneratorConfig::default();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", no + 1)))?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", no + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets one parameter from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::Config(format!("{key}: cannot parse '{v}'")))
        }
        fn vec<const N: usize>(key: &str, v: &str) -> Result<[f64; N]> {
            let parts: Vec<f64> = v.split(',').map(|p| num(key, p.trim())).collect::<Result<_>>()?;
            parts
                .try_into()
                .map_err(|_| Error::Config(format!("{key}: expected {N} comma-separated values")))
        }
        match key {
            "seed" => self.seed = num(key, value)?,
            "n_users" => self.n_users = num(key, value)?,
            "day_count" => self.day_count = num(key, value)?,
            "start_date" => self.start_date = num(key, value)?,
            "type_mix" => self.type_mix = vec(key, value)?,
            "tweets_exponent" => self.tweets.exponent = num(key, value)?,
            "tweets_min" => self.tweets.min = num(key, value)?,
            "tweets_cap" => self.tweets.cap = num(key, value)?,
            "kind_mix" => self.kind_mix = vec(key, value)?,
            "originators" => self.originators = num(key, value)?,
            "originator_exponent" => self.originator_exponent = num(key, value)?,
            "burst_days" => self.burst_days = num(key, value)?,
            "missing_source_fraction" => self.missing_source_fraction = num(key, value)?,
            "root_id_fraction" => self.root_id_fraction = num(key, value)?,
            "nested_reply_fraction" => self.nested_reply_fraction = num(key, value)?,
            "text" => self.text = num(key, value)?,
            "topic_probability" => self.topic_probability = num(key, value)?,
            _ => {
                if let Some(t) = key.strip_prefix("emission.") {
                    let ty = UserType::ALL
                        .into_iter()
                        .find(|u| u.key() == t)
                        .ok_or_else(|| Error::Config(format!("unknown user type '{t}'")))?;
                    self.emission[ty.index()] = vec(key, value)?;
                } else if let Some(row) = key.strip_prefix("channel.") {
                    let i = ["anti", "pro", "neutral"]
                        .iter()
                        .position(|r| *r == row)
                        .ok_or_else(|| Error::Config(format!("unknown channel row '{row}'")))?;
                    self.channel[i] = vec(key, value)?;
                } else {
                    return Err(Error::Config(format!("unknown key '{key}'")));
                }
            }
        }
        Ok(())
    }

    /// Precision implied by the emission mix and channel:
    /// `P(true s | detected s)` for anti and pro, weighting types by their
    /// mix (tweet volume does not depend on type).
    pub fn implied_precision(&self) -> (f64, f64) {
        let mut joint = [[0.0; 3]; 3];
        for t in UserType::ALL {
            let m = self.type_mix[t.index()];
            for (s, row) in joint.iter_mut().enumerate() {
                for (d, cell) in row.iter_mut().enumerate() {
                    *cell += m * self.emission[t.index()][s] * self.channel[s][d];
                }
            }
        }
        let precision = |d: usize| {
            let detected: f64 = (0..3).map(|s| joint[s][d]).sum();
            if detected > 0.0 {
                joint[d][d] / detected
            } else {
                f64::NAN
            }
        };
        (precision(0), precision(1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_round_trip() {
        let mut cfg = GeneratorConfig { seed: 42, n_users: 17, text: false, ..GeneratorConfig::default() };
        cfg.emission[2] = [0.1, 0.7, 0.2];
        let again = GeneratorConfig::from_kv_str(&cfg.to_kv_string()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn kv_errors() {
        assert!(GeneratorConfig::from_kv_str("bogus = 1").is_err());
        assert!(GeneratorConfig::from_kv_str("n_users = 0").is_err());
        assert!(GeneratorConfig::from_kv_str("type_mix = 0.5,0.5").is_err());
        assert!(GeneratorConfig::from_kv_str("type_mix = 0.5,0.5,0.1,0,0").is_err());
        assert!(GeneratorConfig::from_kv_str("channel.pro = 0.2,0.7,0.2").is_err());
        assert!(GeneratorConfig::from_kv_str("# comment\n\nseed = 3\n").is_ok());
    }

    #[test]
    fn identity_channel_has_unit_precision() {
        let cfg = GeneratorConfig {
            channel: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            ..GeneratorConfig::default()
        };
        assert_eq!(cfg.implied_precision(), (1.0, 1.0));
    }

    #[test]
    fn anti_to_pro_flip_only_hurts_pro_precision() {
        let cfg = GeneratorConfig {
            type_mix: [0.0, 0.0, 0.0, 0.0, 1.0],
            channel: [[0.9, 0.1, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            ..GeneratorConfig::default()
        };
        let (a, p) = cfg.implied_precision();
        assert_eq!(a, 1.0);
        // Detected pro: 0.4 truly pro + 0.04 flipped anti.
        assert!((p - 0.4 / 0.44).abs() < 1e-12);
    }
}
