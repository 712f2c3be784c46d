//! Probabilistic leaning classification of dual-detected users.
//!
//! Let `I ~ Binomial(n_a, alpha_anti)` be the number of truly anti tweets
//! among the detected-anti ones and `J ~ Binomial(n_p, alpha_pro)` the truly
//! pro ones among the detected-pro. A user leans pro when `J > I`, anti when
//! `I > J` and is balanced when `I = J`.
//!
//! Two evaluation modes are provided. [`ProbabilityMode::AsWritten`] follows
//! the published sums literally: outer index from 1, inner pro sum capped at
//! `min(n_a + 1, n_p)`. [`ProbabilityMode::Exact`] evaluates the events over
//! the full support. The two agree only for small margins; the literal form
//! drops every outcome with a zero true count and, through the cap, most of
//! the mass of users with a large pro (or anti) surplus.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binomial::{pmf, prefix_sums, suffix_sums};
use crate::cohort::{AlphaPair, AlphaSource, PrecisionModel, UserAggregate};
use crate::error::{Error, Result};

pub const DEFAULT_EPSILON: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbabilityMode {
    #[default]
    AsWritten,
    Exact,
}

impl ProbabilityMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ProbabilityMode::AsWritten => "as-written",
            ProbabilityMode::Exact => "exact",
        }
    }
}

impl fmt::Display for ProbabilityMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProbabilityMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "as-written" => Ok(ProbabilityMode::AsWritten),
            "exact" => Ok(ProbabilityMode::Exact),
            other => Err(Error::InvalidArgument(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeaningProbabilities {
    pub pr_pro: f64,
    pub pr_anti: f64,
    pub pr_bal: f64,
    pub mode: ProbabilityMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LeaningClass {
    ProLeaning,
    AntiLeaning,
    Balanced,
    PureAnti,
    PurePro,
    AllDeleted,
}

impl LeaningClass {
    /// Classes produced by the leaning rule itself.
    pub const LEANING: [LeaningClass; 3] =
        [LeaningClass::ProLeaning, LeaningClass::AntiLeaning, LeaningClass::Balanced];

    /// Destination columns of a migration matrix.
    pub const DESTINATIONS: [LeaningClass; 6] = [
        LeaningClass::ProLeaning,
        LeaningClass::AntiLeaning,
        LeaningClass::Balanced,
        LeaningClass::PurePro,
        LeaningClass::PureAnti,
        LeaningClass::AllDeleted,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LeaningClass::ProLeaning => "pro-leaning",
            LeaningClass::AntiLeaning => "anti-leaning",
            LeaningClass::Balanced => "balanced",
            LeaningClass::PureAnti => "pure-anti",
            LeaningClass::PurePro => "pure-pro",
            LeaningClass::AllDeleted => "all-deleted",
        }
    }
}

impl fmt::Display for LeaningClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LeaningClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LeaningClass::DESTINATIONS
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown class {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaningResult {
    pub user_id: String,
    pub n_a: u64,
    pub n_p: u64,
    pub dual_probability: f64,
    pub probabilities: LeaningProbabilities,
    pub epsilon: f64,
    pub class: LeaningClass,
}

fn check_counts(n_a: u64, n_p: u64, alpha_anti: f64, alpha_pro: f64) -> Result<()> {
    if n_a == 0 || n_p == 0 {
        return Err(Error::Precondition(format!(
            "leaning probabilities need n_a >= 1 and n_p >= 1, got ({n_a}, {n_p})"
        )));
    }
    AlphaPair::new(alpha_anti, alpha_pro).map(|_| ())
}

/// `P(second > first)` over the full support of two independent count pmfs.
fn exceeds(first: &[f64], second: &[f64]) -> f64 {
    let tail = suffix_sums(second);
    first
        .iter()
        .enumerate()
        .map(|(i, &p)| p * tail[(i + 1).min(second.len())])
        .sum()
}

/// Literal form of the leaning sum where `outer` holds the pmf of the count
/// that must be exceeded:
/// `sum_{i=1}^{min(n_o, n_i - 1)} outer[i] * sum_{j=i+1}^{min(n_o + 1, n_i)} inner[j]`.
fn exceeds_as_written(outer: &[f64], inner: &[f64]) -> f64 {
    let n_outer = outer.len() - 1;
    let n_inner = inner.len() - 1;
    if n_inner == 0 {
        return 0.0;
    }
    let prefix = prefix_sums(inner);
    let hi = (n_outer + 1).min(n_inner);
    let upper = n_outer.min(n_inner - 1);
    (1..=upper)
        .map(|i| {
            if i + 1 > hi {
                0.0
            } else {
                outer[i] * (prefix[hi + 1] - prefix[i + 1])
            }
        })
        .sum()
}

fn equal(first: &[f64], second: &[f64], from: usize) -> f64 {
    first
        .iter()
        .zip(second)
        .skip(from)
        .map(|(a, b)| a * b)
        .sum()
}

/// All three leaning probabilities, sharing one pair of pmf evaluations.
pub fn leaning_probabilities(
    n_a: u64,
    n_p: u64,
    alpha_anti: f64,
    alpha_pro: f64,
    mode: ProbabilityMode,
) -> Result<LeaningProbabilities> {
    check_counts(n_a, n_p, alpha_anti, alpha_pro)?;
    let anti = pmf(n_a, alpha_anti);
    let pro = pmf(n_p, alpha_pro);
    let (pr_pro, pr_anti, pr_bal) = match mode {
        ProbabilityMode::Exact => (exceeds(&anti, &pro), exceeds(&pro, &anti), equal(&anti, &pro, 0)),
        ProbabilityMode::AsWritten => (
            exceeds_as_written(&anti, &pro),
            exceeds_as_written(&pro, &anti),
            equal(&anti, &pro, 1),
        ),
    };
    Ok(LeaningProbabilities {
        pr_pro: pr_pro.clamp(0.0, 1.0),
        pr_anti: pr_anti.clamp(0.0, 1.0),
        pr_bal: pr_bal.clamp(0.0, 1.0),
        mode,
    })
}

pub fn pr_pro(n_a: u64, n_p: u64, alpha_anti: f64, alpha_pro: f64, mode: ProbabilityMode) -> Result<f64> {
    leaning_probabilities(n_a, n_p, alpha_anti, alpha_pro, mode).map(|p| p.pr_pro)
}

pub fn pr_anti(n_a: u64, n_p: u64, alpha_anti: f64, alpha_pro: f64, mode: ProbabilityMode) -> Result<f64> {
    leaning_probabilities(n_a, n_p, alpha_anti, alpha_pro, mode).map(|p| p.pr_anti)
}

pub fn pr_bal(n_a: u64, n_p: u64, alpha_anti: f64, alpha_pro: f64, mode: ProbabilityMode) -> Result<f64> {
    leaning_probabilities(n_a, n_p, alpha_anti, alpha_pro, mode).map(|p| p.pr_bal)
}

pub fn validate_epsilon(epsilon: f64) -> Result<()> {
    if (0.0..0.5).contains(&epsilon) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("epsilon {epsilon} outside [0, 0.5)")))
    }
}

/// Tolerance rule: a leaning label needs to beat both other probabilities by
/// more than `epsilon`; everything else is balanced.
pub fn classify_user(probs: &LeaningProbabilities, epsilon: f64) -> LeaningClass {
    let LeaningProbabilities { pr_pro, pr_anti, pr_bal, .. } = *probs;
    if pr_pro > pr_anti + epsilon && pr_pro > pr_bal + epsilon {
        LeaningClass::ProLeaning
    } else if pr_anti > pr_pro + epsilon && pr_anti > pr_bal + epsilon {
        LeaningClass::AntiLeaning
    } else {
        LeaningClass::Balanced
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifyParams {
    pub epsilon: f64,
    pub mode: ProbabilityMode,
    pub alpha_source: AlphaSource,
    /// Users below this dual probability are left out.
    pub min_dual_probability: f64,
}

impl Default for ClassifyParams {
    fn default() -> Self {
        ClassifyParams {
            epsilon: DEFAULT_EPSILON,
            mode: ProbabilityMode::default(),
            alpha_source: AlphaSource::Global,
            min_dual_probability: 0.0,
        }
    }
}

fn classify_one(u: &UserAggregate, pm: &PrecisionModel, params: &ClassifyParams) -> Result<LeaningResult> {
    let a = pm.alpha_for_user(u, params.alpha_source);
    let probabilities = leaning_probabilities(u.n_a, u.n_p, a.anti, a.pro, params.mode)?;
    let dual_probability = crate::cohort::dual_probability(u.n_a, u.n_p, a.anti, a.pro)?;
    Ok(LeaningResult {
        user_id: u.user_id.clone(),
        n_a: u.n_a,
        n_p: u.n_p,
        dual_probability,
        probabilities,
        epsilon: params.epsilon,
        class: classify_user(&probabilities, params.epsilon),
    })
}

/// Classifies every dual-detected user whose dual probability reaches
/// `params.min_dual_probability`. Output is in user-id order.
pub fn classify_users(
    users: &BTreeMap<String, UserAggregate>,
    pm: &PrecisionModel,
    params: &ClassifyParams,
) -> Result<Vec<LeaningResult>> {
    validate_epsilon(params.epsilon)?;
    let dual: Vec<&UserAggregate> = users.values().filter(|u| u.is_dual_detected()).collect();
    let results: Vec<LeaningResult> = dual
        .par_iter()
        .map(|u| classify_one(u, pm, params))
        .collect::<Result<_>>()?;
    Ok(results
        .into_iter()
        .filter(|r| r.dual_probability >= params.min_dual_probability)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub pro: u64,
    pub anti: u64,
    pub bal: u64,
}

/// Class counts for each tolerance in `grid` (ascending, within `[0, 0.5)`).
pub fn sweep_epsilon(probs: &[LeaningProbabilities], grid: &[f64]) -> Result<Vec<SweepRow>> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty epsilon grid".into()));
    }
    for &e in grid {
        validate_epsilon(e)?;
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("epsilon grid must be strictly ascending".into()));
    }
    Ok(grid
        .iter()
        .map(|&epsilon| {
            let mut row = SweepRow { epsilon, pro: 0, anti: 0, bal: 0 };
            for p in probs {
                match classify_user(p, epsilon) {
                    LeaningClass::ProLeaning => row.pro += 1,
                    LeaningClass::AntiLeaning => row.anti += 1,
                    _ => row.bal += 1,
                }
            }
            row
        })
        .collect())
}

/// `start, start + step, ...` strictly below `end`, rounded to 12 decimals so
/// that grid values print cleanly.
pub fn epsilon_grid(start: f64, end: f64, step: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut k = 0u32;
    loop {
        let v = ((start + step * k as f64) * 1e12).round() / 1e12;
        if v >= end {
            break;
        }
        out.push(v);
        k += 1;
    }
    out
}

/// Class transitions between two snapshots of the same users.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MigrationMatrix {
    /// `counts[from][to]`, rows indexed like [`LeaningClass::LEANING`],
    /// columns like [`LeaningClass::DESTINATIONS`].
    pub counts: [[u64; 6]; 3],
    /// Users classified before but absent from the later snapshot. They are
    /// also counted under `AllDeleted`.
    pub missing: u64,
}

impl MigrationMatrix {
    pub fn row_total(&self, from: LeaningClass) -> u64 {
        row_index(from).map(|r| self.counts[r].iter().sum()).unwrap_or(0)
    }

    pub fn get(&self, from: LeaningClass, to: LeaningClass) -> u64 {
        match (row_index(from), col_index(to)) {
            (Some(r), Some(c)) => self.counts[r][c],
            _ => 0,
        }
    }

    pub fn to_csv_string(&self) -> String {
        let mut s = String::from("from");
        for c in LeaningClass::DESTINATIONS {
            s.push(',');
            s.push_str(c.as_str());
        }
        s.push('\n');
        for (r, from) in LeaningClass::LEANING.iter().enumerate() {
            s.push_str(from.as_str());
            for v in self.counts[r] {
                s.push_str(&format!(",{v}"));
            }
            s.push('\n');
        }
        s
    }
}

fn row_index(c: LeaningClass) -> Option<usize> {
    LeaningClass::LEANING.iter().position(|&x| x == c)
}

fn col_index(c: LeaningClass) -> Option<usize> {
    LeaningClass::DESTINATIONS.iter().position(|&x| x == c)
}

/// Destination of one user given the later snapshot's counts.
pub fn destination_class(
    after: Option<&UserAggregate>,
    pm: &PrecisionModel,
    params: &ClassifyParams,
) -> Result<LeaningClass> {
    let Some(u) = after else {
        return Ok(LeaningClass::AllDeleted);
    };
    Ok(match (u.n_a, u.n_p) {
        (0, 0) => LeaningClass::AllDeleted,
        (0, _) => LeaningClass::PurePro,
        (_, 0) => LeaningClass::PureAnti,
        _ => classify_one(u, pm, params)?.class,
    })
}

/// Counts how originally classified users move once their later snapshot
/// (e.g. the tweets still online) is reclassified with the same parameters.
pub fn migration_matrix(
    before: &BTreeMap<String, LeaningResult>,
    after: &BTreeMap<String, UserAggregate>,
    pm: &PrecisionModel,
    params: &ClassifyParams,
) -> Result<MigrationMatrix> {
    validate_epsilon(params.epsilon)?;
    let moves: Vec<(usize, usize, bool)> = before
        .values()
        .collect::<Vec<_>>()
        .par_iter()
        .filter_map(|r| row_index(r.class).map(|row| (row, r)))
        .map(|(row, r)| {
            let later = after.get(&r.user_id);
            let dest = destination_class(later, pm, params)?;
            Ok((row, col_index(dest).expect("destination column"), later.is_none()))
        })
        .collect::<Result<_>>()?;
    let mut m = MigrationMatrix { counts: [[0; 6]; 3], missing: 0 };
    for (row, col, missing) in moves {
        m.counts[row][col] += 1;
        m.missing += u64::from(missing);
    }
    Ok(m)
}
