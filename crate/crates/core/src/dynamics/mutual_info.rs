//! Plug-in mutual information on equal-frequency bins.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_MI_BINS: usize = 16;

/// Minimum number of aligned pairs for a lag curve.
pub const MIN_OVERLAP: usize = 20;

/// Rank-based equal-frequency bin labels. A value's bin is
/// `rank * bins / n`, where `rank` counts strictly smaller values, so tied
/// values always share a bin.
fn equal_frequency_bins(values: &[f64], bins: usize) -> Vec<usize> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = values.len();
    values
        .iter()
        .map(|v| {
            let rank = sorted.partition_point(|s| s.total_cmp(v).is_lt());
            rank * bins / n
        })
        .collect()
}

/// Mutual information (nats) between two equally long samples.
pub fn mutual_information(x: &[f64], y: &[f64], bins: usize) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "sample lengths differ: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if bins < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 bins, got {bins}")));
    }
    if x.len() < 2 {
        return Err(Error::SeriesTooShort { required: 2, actual: x.len() });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("samples contain non-finite values".into()));
    }
    let bx = equal_frequency_bins(x, bins);
    let by = equal_frequency_bins(y, bins);
    let mut joint = vec![0u64; bins * bins];
    let mut mx = vec![0u64; bins];
    let mut my = vec![0u64; bins];
    for (&i, &j) in bx.iter().zip(&by) {
        joint[i * bins + j] += 1;
        mx[i] += 1;
        my[j] += 1;
    }
    let n = x.len() as f64;
    let mut mi = 0.0;
    for i in 0..bins {
        for j in 0..bins {
            let c = joint[i * bins + j];
            if c > 0 {
                let c = c as f64;
                mi += c / n * (c * n / (mx[i] as f64 * my[j] as f64)).ln();
            }
        }
    }
    Ok(mi.max(0.0))
}

/// MI between `x(t - lag)` and `y(t)` over the overlapping range.
pub fn mutual_information_lag(x: &[f64], y: &[f64], lag: usize, bins: usize) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "series lengths differ: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len();
    if n < lag + 2 {
        return Err(Error::SeriesTooShort { required: lag + 2, actual: n });
    }
    mutual_information(&x[..n - lag], &y[lag..], bins)
}

/// MI as a function of lag `0..=max_lag`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiCurve {
    pub bins: usize,
    pub values: Vec<f64>,
    /// First lag attaining the minimum (the conventional embedding delay).
    pub argmin: usize,
    /// First lag attaining the maximum (the best-aligned shift).
    pub argmax: usize,
}

impl MiCurve {
    /// Requires more than `MIN_OVERLAP` pairs at the largest lag.
    pub fn compute(x: &[f64], y: &[f64], max_lag: usize, bins: usize) -> Result<Self> {
        if x.len() <= max_lag + MIN_OVERLAP {
            return Err(Error::SeriesTooShort { required: max_lag + MIN_OVERLAP + 1, actual: x.len() });
        }
        let values = (0..=max_lag)
            .map(|l| mutual_information_lag(x, y, l, bins))
            .collect::<Result<Vec<_>>>()?;
        let argmin = first_extreme(&values, |a, b| a < b);
        let argmax = first_extreme(&values, |a, b| a > b);
        Ok(MiCurve { bins, values, argmin, argmax })
    }

    pub fn to_csv_string(&self) -> String {
        let mut s = String::from("lag,mi_nats\n");
        for (l, v) in self.values.iter().enumerate() {
            s.push_str(&format!("{l},{v}\n"));
        }
        s
    }
}

fn first_extreme(values: &[f64], better: impl Fn(f64, f64) -> bool) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if better(v, values[best]) {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ties_share_a_bin() {
        let b = equal_frequency_bins(&[1.0, 1.0, 1.0, 2.0], 2);
        assert_eq!(b, [0, 0, 0, 1]);
        let b = equal_frequency_bins(&[4.0, 3.0, 2.0, 1.0], 2);
        assert_eq!(b, [1, 1, 0, 0]);
    }

    #[test]
    fn identical_uniform_labels_give_log_bins() {
        let x: Vec<f64> = (0..64).map(f64::from).collect();
        let mi = mutual_information(&x, &x, 4).unwrap();
        assert!((mi - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn hand_computed_table() {
        // Joint counts [[2,1],[0,1]] over n=4: MI = sum p ln(p/(px py)).
        let x = [0.0, 0.0, 0.0, 1.0];
        let y = [0.0, 0.0, 1.0, 1.0];
        // Bins of x: ranks 0,0,0,3 -> 0,0,0,1; bins of y: 0,0,1,1.
        let want = 0.5 * (0.5f64 / (0.75 * 0.5)).ln()
            + 0.25 * (0.25f64 / (0.75 * 0.5)).ln()
            + 0.25 * (0.25f64 / (0.25 * 0.5)).ln();
        let got = mutual_information(&x, &y, 2).unwrap();
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }

    #[test]
    fn constant_series_has_zero_information() {
        let x = [5.0; 50];
        let y: Vec<f64> = (0..50).map(f64::from).collect();
        assert_eq!(mutual_information(&x, &y, 8).unwrap(), 0.0);
    }

    #[test]
    fn shifted_copy_peaks_at_shift() {
        let x: Vec<f64> = (0..500u64).map(|i| ((i * 7919) % 503) as f64).collect();
        let mut y = vec![0.0; 500];
        y[3..].copy_from_slice(&x[..497]);
        let curve = MiCurve::compute(&x, &y, 10, 16).unwrap();
        assert_eq!(curve.argmax, 3);
        let same = MiCurve::compute(&x, &x, 10, 16).unwrap();
        assert_eq!(same.argmax, 0);
    }

    #[test]
    fn argument_errors() {
        assert!(mutual_information(&[1.0, 2.0], &[1.0], 4).is_err());
        assert!(mutual_information(&[1.0, 2.0], &[1.0, 2.0], 1).is_err());
        assert!(mutual_information_lag(&[1.0; 5], &[1.0; 5], 4, 2).is_err());
        let x: Vec<f64> = (0..30).map(f64::from).collect();
        assert!(MiCurve::compute(&x, &x, 9, 4).is_ok());
        assert!(MiCurve::compute(&x, &x, 10, 4).is_err());
    }

    proptest! {
        #[test]
        fn bounded_and_symmetric(
            pairs in proptest::collection::vec((-100i32..100, -100i32..100), 2..200),
            bins in 2usize..20,
        ) {
            let x: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
            let y: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
            let mxy = mutual_information(&x, &y, bins).unwrap();
            let myx = mutual_information(&y, &x, bins).unwrap();
            prop_assert!(mxy >= 0.0);
            prop_assert!((mxy - myx).abs() < 1e-12);
            prop_assert!(mxy <= (bins as f64).ln() + 1e-12);
        }
    }
}
