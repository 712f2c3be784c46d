//! Noise-aware estimation of the dual-stance cohort.
//!
//! A user detected with `n_a` anti and `n_p` pro tweets is genuinely dual
//! when at least one detected-anti tweet is truly anti and at least one
//! detected-pro tweet is truly pro. With per-class detector precisions
//! `alpha_anti` and `alpha_pro` and independent per-tweet errors:
//!
//! ```text
//! p_i = 1 - (1-a_a)^n_a - (1-a_p)^n_p + (1-a_a)^n_a (1-a_p)^n_p
//! ```
//!
//! and the effective cohort size is `N_e = sum_i p_i`.

use std::collections::BTreeMap;
use std::io::Read;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binomial::none_succeed;
use crate::error::{Error, Result};
use crate::ingest::{Stance, StanceRecord};

/// Detector precisions for the anti and pro classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaPair {
    pub anti: f64,
    pub pro: f64,
}

impl AlphaPair {
    pub fn new(anti: f64, pro: f64) -> Result<Self> {
        for (name, v) in [("alpha_anti", anti), ("alpha_pro", pro)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidArgument(format!("{name} = {v} outside [0, 1]")));
            }
        }
        Ok(AlphaPair { anti, pro })
    }
}

/// Precisions valid over an inclusive day range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionPeriod {
    pub start_day: u32,
    pub end_day: u32,
    pub alphas: AlphaPair,
}

/// Per-period precisions with a global fallback.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionModel {
    periods: Vec<PrecisionPeriod>,
    global: AlphaPair,
}

/// How a user's precision pair is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlphaSource {
    /// Always the global pair.
    #[default]
    Global,
    /// The period containing the user's median non-neutral tweet day,
    /// falling back to the global pair.
    MedianDayPeriod,
}

#[derive(Debug, Deserialize)]
struct PrecisionRow {
    start_day: i64,
    end_day: i64,
    alpha_anti: f64,
    alpha_pro: f64,
}

impl PrecisionModel {
    pub fn new(mut periods: Vec<PrecisionPeriod>, global: AlphaPair) -> Result<Self> {
        AlphaPair::new(global.anti, global.pro)?;
        periods.sort_by_key(|p| p.start_day);
        for p in &periods {
            AlphaPair::new(p.alphas.anti, p.alphas.pro)?;
            if p.end_day < p.start_day {
                return Err(Error::InvalidArgument(format!(
                    "precision period {}..{} is empty",
                    p.start_day, p.end_day
                )));
            }
        }
        for w in periods.windows(2) {
            if w[1].start_day <= w[0].end_day {
                return Err(Error::InvalidArgument(format!(
                    "precision periods {}..{} and {}..{} overlap",
                    w[0].start_day, w[0].end_day, w[1].start_day, w[1].end_day
                )));
            }
        }
        Ok(PrecisionModel { periods, global })
    }

    pub fn global_only(alpha_anti: f64, alpha_pro: f64) -> Result<Self> {
        Self::new(Vec::new(), AlphaPair::new(alpha_anti, alpha_pro)?)
    }

    /// Reads `start_day,end_day,alpha_anti,alpha_pro`. The row with
    /// `start_day=0,end_day=-1` is the global pair and must be present.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut global = None;
        let mut periods = Vec::new();
        for row in rdr.deserialize() {
            let row: PrecisionRow = row?;
            let alphas = AlphaPair::new(row.alpha_anti, row.alpha_pro)?;
            if row.start_day == 0 && row.end_day == -1 {
                if global.replace(alphas).is_some() {
                    return Err(Error::InvalidArgument("more than one global precision row".into()));
                }
                continue;
            }
            let start = u32::try_from(row.start_day)
                .map_err(|_| Error::InvalidArgument(format!("bad start_day {}", row.start_day)))?;
            let end = u32::try_from(row.end_day)
                .map_err(|_| Error::InvalidArgument(format!("bad end_day {}", row.end_day)))?;
            periods.push(PrecisionPeriod { start_day: start, end_day: end, alphas });
        }
        let global = global.ok_or_else(|| {
            Error::InvalidArgument("precision file lacks the global row (start_day=0,end_day=-1)".into())
        })?;
        Self::new(periods, global)
    }

    pub fn to_csv_string(&self) -> String {
        let mut s = String::from("start_day,end_day,alpha_anti,alpha_pro\n");
        s.push_str(&format!("0,-1,{},{}\n", self.global.anti, self.global.pro));
        for p in &self.periods {
            s.push_str(&format!("{},{},{},{}\n", p.start_day, p.end_day, p.alphas.anti, p.alphas.pro));
        }
        s
    }

    pub fn global(&self) -> AlphaPair {
        self.global
    }

    pub fn periods(&self) -> &[PrecisionPeriod] {
        &self.periods
    }

    pub fn alpha_for_day(&self, day: u32) -> AlphaPair {
        let idx = self.periods.partition_point(|p| p.end_day < day);
        match self.periods.get(idx) {
            Some(p) if p.start_day <= day => p.alphas,
            _ => self.global,
        }
    }

    pub fn alpha_for_user(&self, user: &UserAggregate, source: AlphaSource) -> AlphaPair {
        match (source, user.median_day) {
            (AlphaSource::MedianDayPeriod, Some(day)) => self.alpha_for_day(day),
            _ => self.global,
        }
    }

    /// Componentwise minimum and maximum precisions over all pairs, or `None`
    /// when the model holds a single pair.
    pub fn alpha_range(&self) -> Option<(AlphaPair, AlphaPair)> {
        if self.periods.iter().all(|p| p.alphas == self.global) {
            return None;
        }
        let all = std::iter::once(self.global).chain(self.periods.iter().map(|p| p.alphas));
        let (mut lo, mut hi) = (self.global, self.global);
        for a in all {
            lo.anti = lo.anti.min(a.anti);
            lo.pro = lo.pro.min(a.pro);
            hi.anti = hi.anti.max(a.anti);
            hi.pro = hi.pro.max(a.pro);
        }
        Some((lo, hi))
    }
}

/// Per-user detected stance counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserAggregate {
    pub user_id: String,
    pub n_a: u64,
    pub n_p: u64,
    pub n_neutral: u64,
    /// Lower median day index of the user's non-neutral tweets.
    pub median_day: Option<u32>,
    /// Filled by [`annotate_dual_probability`]; zero unless dual-detected.
    pub dual_probability: f64,
}

impl UserAggregate {
    pub fn new(user_id: impl Into<String>, n_a: u64, n_p: u64) -> Self {
        UserAggregate {
            user_id: user_id.into(),
            n_a,
            n_p,
            n_neutral: 0,
            median_day: None,
            dual_probability: 0.0,
        }
    }

    pub fn from_records(user_id: &str, records: &[&StanceRecord]) -> Self {
        let mut agg = UserAggregate::new(user_id, 0, 0);
        let mut days = Vec::new();
        for r in records {
            match r.stance {
                Stance::Anti => agg.n_a += 1,
                Stance::Pro => agg.n_p += 1,
                Stance::Neutral => {
                    agg.n_neutral += 1;
                    continue;
                }
            }
            days.push(r.day_index);
        }
        days.sort_unstable();
        if !days.is_empty() {
            agg.median_day = Some(days[(days.len() - 1) / 2]);
        }
        agg
    }

    pub fn is_dual_detected(&self) -> bool {
        self.n_a >= 1 && self.n_p >= 1
    }
}

/// Probability that a user detected with `n_a` anti and `n_p` pro tweets is
/// genuinely dual-stance.
pub fn dual_probability(n_a: u64, n_p: u64, alpha_anti: f64, alpha_pro: f64) -> Result<f64> {
    if n_a == 0 || n_p == 0 {
        return Err(Error::Precondition(format!(
            "dual probability needs n_a >= 1 and n_p >= 1, got ({n_a}, {n_p})"
        )));
    }
    AlphaPair::new(alpha_anti, alpha_pro)?;
    let no_true_anti = none_succeed(n_a, alpha_anti);
    let no_true_pro = none_succeed(n_p, alpha_pro);
    // Inclusion-exclusion factorises into a product, which stays in [0, 1].
    Ok((1.0 - no_true_anti) * (1.0 - no_true_pro))
}

/// Fills `dual_probability` for every dual-detected user (others get 0).
pub fn annotate_dual_probability(
    users: &mut BTreeMap<String, UserAggregate>,
    pm: &PrecisionModel,
    source: AlphaSource,
) {
    users.values_mut().for_each(|u| {
        u.dual_probability = if u.is_dual_detected() {
            let a = pm.alpha_for_user(u, source);
            dual_probability(u.n_a, u.n_p, a.anti, a.pro).expect("validated inputs")
        } else {
            0.0
        };
    });
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortEstimate {
    /// Number of dual-detected users `N`.
    pub detected: usize,
    /// `N_e` under the chosen alpha source.
    pub effective: f64,
    /// `N_e` at the componentwise minimum and maximum precisions, when the
    /// model carries more than one pair.
    pub bounds: Option<(f64, f64)>,
}

fn sum_probabilities<'a>(
    users: &'a [UserAggregate],
    alphas: impl Fn(&'a UserAggregate) -> AlphaPair + Sync,
) -> Result<f64> {
    let probs: Vec<f64> = users
        .par_iter()
        .map(|u| {
            let a = alphas(u);
            dual_probability(u.n_a, u.n_p, a.anti, a.pro)
        })
        .collect::<Result<_>>()?;
    // Sequential reduction keeps the sum bit-stable across thread counts.
    Ok(probs.iter().sum())
}

/// Effective size of a dual-detected cohort. Every user must be
/// dual-detected; an empty slice yields zero.
pub fn effective_cohort_size(
    users: &[UserAggregate],
    pm: &PrecisionModel,
    source: AlphaSource,
) -> Result<CohortEstimate> {
    let effective = sum_probabilities(users, |u| pm.alpha_for_user(u, source))?;
    let bounds = match pm.alpha_range() {
        Some((lo, hi)) => Some((
            sum_probabilities(users, |_| lo)?,
            sum_probabilities(users, |_| hi)?,
        )),
        None => None,
    };
    Ok(CohortEstimate {
        detected: users.len(),
        effective,
        bounds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn literal_formula(n_a: u64, n_p: u64, aa: f64, ap: f64) -> f64 {
        let qa = (1.0 - aa).powi(n_a as i32);
        let qp = (1.0 - ap).powi(n_p as i32);
        1.0 - qa - qp + qa * qp
    }

    fn choose(n: u64, k: u64) -> f64 {
        (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
    }

    fn bin(n: u64, k: u64, p: f64) -> f64 {
        choose(n, k) * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32)
    }

    #[test]
    fn spot_values() {
        assert_eq!(dual_probability(1, 1, 1.0, 1.0).unwrap(), 1.0);
        assert_eq!(dual_probability(3, 5, 0.0, 0.9).unwrap(), 0.0);
        let p = dual_probability(1, 1, 0.52, 0.68).unwrap();
        assert!((p - 0.3536).abs() < 1e-12, "{p}");
        assert!((p - literal_formula(1, 1, 0.52, 0.68)).abs() < 1e-12);
    }

    #[test]
    fn zero_counts_violate_precondition() {
        assert!(matches!(dual_probability(0, 3, 0.5, 0.5), Err(Error::Precondition(_))));
        assert!(matches!(dual_probability(2, 0, 0.5, 0.5), Err(Error::Precondition(_))));
        assert!(dual_probability(1, 1, 1.5, 0.5).is_err());
    }

    #[test]
    fn enumeration_oracle_on_grid() {
        let grid = [0.0, 0.25, 0.5, 0.75, 1.0];
        for n_a in 1..=12u64 {
            for n_p in 1..=12u64 {
                for &aa in &grid {
                    for &ap in &grid {
                        let mut enumerated = 0.0;
                        for i in 1..=n_a {
                            for j in 1..=n_p {
                                enumerated += bin(n_a, i, aa) * bin(n_p, j, ap);
                            }
                        }
                        let got = dual_probability(n_a, n_p, aa, ap).unwrap();
                        assert!((got - enumerated).abs() < 1e-12, "{n_a},{n_p},{aa},{ap}");
                        assert!((got - literal_formula(n_a, n_p, aa, ap)).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn heavy_users_do_not_underflow() {
        let p = dual_probability(5_000, 20_000, 0.001, 0.0001).unwrap();
        let want = (1.0 - (5_000.0 * (-0.001f64).ln_1p()).exp())
            * (1.0 - (20_000.0 * (-0.0001f64).ln_1p()).exp());
        assert!((p - want).abs() < 1e-12);
    }

    #[test]
    fn cohort_sum_and_bounds() {
        let users = vec![UserAggregate::new("a", 1, 1), UserAggregate::new("b", 2, 3)];
        let pm = PrecisionModel::global_only(1.0, 1.0).unwrap();
        let est = effective_cohort_size(&users, &pm, AlphaSource::Global).unwrap();
        assert_eq!(est.effective, 2.0);
        assert_eq!(est.bounds, None);

        let pm = PrecisionModel::global_only(0.52, 0.68).unwrap();
        let users = vec![UserAggregate::new("a", 1, 1)];
        let est = effective_cohort_size(&users, &pm, AlphaSource::Global).unwrap();
        assert!((est.effective - 0.3536).abs() < 1e-12);

        let empty = effective_cohort_size(&[], &pm, AlphaSource::Global).unwrap();
        assert_eq!(empty.effective, 0.0);
    }

    #[test]
    fn non_dual_user_is_rejected() {
        let pm = PrecisionModel::global_only(0.5, 0.5).unwrap();
        let users = vec![UserAggregate::new("a", 0, 4)];
        assert!(effective_cohort_size(&users, &pm, AlphaSource::Global).is_err());
    }

    #[test]
    fn range_bounds_bracket_estimate() {
        let pm = PrecisionModel::new(
            vec![
                PrecisionPeriod { start_day: 0, end_day: 99, alphas: AlphaPair { anti: 0.52, pro: 0.68 } },
                PrecisionPeriod { start_day: 100, end_day: 199, alphas: AlphaPair { anti: 0.92, pro: 0.95 } },
            ],
            AlphaPair { anti: 0.7, pro: 0.8 },
        )
        .unwrap();
        let mut u1 = UserAggregate::new("a", 1, 2);
        u1.median_day = Some(150);
        let mut u2 = UserAggregate::new("b", 3, 1);
        u2.median_day = Some(10);
        let users = vec![u1, u2];
        let est = effective_cohort_size(&users, &pm, AlphaSource::MedianDayPeriod).unwrap();
        let (lo, hi) = est.bounds.unwrap();
        assert!(lo <= est.effective && est.effective <= hi);
        let want = dual_probability(1, 2, 0.92, 0.95).unwrap() + dual_probability(3, 1, 0.52, 0.68).unwrap();
        assert!((est.effective - want).abs() < 1e-15);
        assert!((lo - (dual_probability(1, 2, 0.52, 0.68).unwrap() + dual_probability(3, 1, 0.52, 0.68).unwrap())).abs() < 1e-15);
    }

    #[test]
    fn precision_csv_round_trip_and_lookup() {
        let text = "start_day,end_day,alpha_anti,alpha_pro\n0,-1,0.7,0.8\n0,9,0.52,0.68\n20,29,0.9,0.95\n";
        let pm = PrecisionModel::from_csv_reader(text.as_bytes()).unwrap();
        assert_eq!(pm.alpha_for_day(5), AlphaPair { anti: 0.52, pro: 0.68 });
        assert_eq!(pm.alpha_for_day(15), AlphaPair { anti: 0.7, pro: 0.8 });
        assert_eq!(pm.alpha_for_day(29), AlphaPair { anti: 0.9, pro: 0.95 });
        assert_eq!(pm.alpha_for_day(30), AlphaPair { anti: 0.7, pro: 0.8 });
        let again = PrecisionModel::from_csv_reader(pm.to_csv_string().as_bytes()).unwrap();
        assert_eq!(again, pm);
    }

    #[test]
    fn precision_csv_errors() {
        let no_global = "start_day,end_day,alpha_anti,alpha_pro\n0,9,0.5,0.5\n";
        assert!(PrecisionModel::from_csv_reader(no_global.as_bytes()).is_err());
        let overlap = "start_day,end_day,alpha_anti,alpha_pro\n0,-1,0.5,0.5\n0,9,0.5,0.5\n5,12,0.5,0.5\n";
        assert!(PrecisionModel::from_csv_reader(overlap.as_bytes()).is_err());
        let out_of_range = "start_day,end_day,alpha_anti,alpha_pro\n0,-1,1.5,0.5\n";
        assert!(PrecisionModel::from_csv_reader(out_of_range.as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn monotone_in_counts_and_alphas(
            n_a in 1u64..60, n_p in 1u64..60,
            aa in 0.0f64..=1.0, ap in 0.0f64..=1.0, bump in 0.0f64..0.5,
        ) {
            let base = dual_probability(n_a, n_p, aa, ap).unwrap();
            prop_assert!((0.0..=1.0).contains(&base));
            prop_assert!(dual_probability(n_a + 1, n_p, aa, ap).unwrap() >= base - 1e-15);
            prop_assert!(dual_probability(n_a, n_p + 1, aa, ap).unwrap() >= base - 1e-15);
            prop_assert!(dual_probability(n_a, n_p, (aa + bump).min(1.0), ap).unwrap() >= base - 1e-15);
            prop_assert!(dual_probability(n_a, n_p, aa, (ap + bump).min(1.0)).unwrap() >= base - 1e-15);
        }

        #[test]
        fn effective_size_bounded_by_count(
            counts in proptest::collection::vec((1u64..30, 1u64..30), 0..40),
            aa in 0.0f64..=1.0, ap in 0.0f64..=1.0,
        ) {
            let users: Vec<_> = counts.iter().enumerate()
                .map(|(i, &(a, p))| UserAggregate::new(format!("u{i}"), a, p)).collect();
            let pm = PrecisionModel::global_only(aa, ap).unwrap();
            let est = effective_cohort_size(&users, &pm, AlphaSource::Global).unwrap();
            prop_assert!(est.effective >= 0.0);
            prop_assert!(est.effective <= users.len() as f64 + 1e-9);
        }
    }
}
