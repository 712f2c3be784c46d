//! Augmented Dickey–Fuller and KPSS stationarity tests (constant-only
//! deterministic term).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 5% critical value of the KPSS level-stationarity statistic.
pub const KPSS_CRITICAL_5PCT: f64 = 0.463;

/// Fuller's 5% critical values for the constant-only Dickey–Fuller
/// regression, indexed by sample size.
const ADF_TABLE_5PCT: [(f64, f64); 5] = [
    (25.0, -3.00),
    (50.0, -2.93),
    (100.0, -2.89),
    (250.0, -2.88),
    (500.0, -2.87),
];
const ADF_ASYMPTOTIC_5PCT: f64 = -2.86;

/// Shortest series either test accepts.
pub const MIN_TEST_LENGTH: usize = 20;

/// Default augmentation lag `floor(12 (n/100)^(1/4))`.
pub fn schwert_lag(n: usize) -> usize {
    (12.0 * (n as f64 / 100.0).powf(0.25)).floor() as usize
}

/// Default Bartlett bandwidth `floor(4 (n/100)^(1/4))`.
pub fn kpss_bandwidth(n: usize) -> usize {
    (4.0 * (n as f64 / 100.0).powf(0.25)).floor() as usize
}

/// 5% ADF critical value interpolated linearly in the sample size; beyond
/// the last tabulated size the interpolation towards the asymptotic value is
/// linear in `1/n`.
pub fn adf_critical_value_5pct(n: usize) -> f64 {
    let n = n as f64;
    let (first_n, first_v) = ADF_TABLE_5PCT[0];
    if n <= first_n {
        return first_v;
    }
    for w in ADF_TABLE_5PCT.windows(2) {
        let ((n0, v0), (n1, v1)) = (w[0], w[1]);
        if n <= n1 {
            return v0 + (v1 - v0) * (n - n0) / (n1 - n0);
        }
    }
    let (last_n, last_v) = ADF_TABLE_5PCT[ADF_TABLE_5PCT.len() - 1];
    ADF_ASYMPTOTIC_5PCT + (last_v - ADF_ASYMPTOTIC_5PCT) * last_n / n
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdfResult {
    /// t-statistic of the lagged level coefficient.
    pub statistic: f64,
    pub lag: usize,
    /// Rows of the test regression.
    pub nobs: usize,
    pub critical_5pct: f64,
    /// True when the unit root is rejected at 5%.
    pub stationary: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KpssResult {
    pub statistic: f64,
    pub bandwidth: usize,
    pub critical_5pct: f64,
    /// True when level stationarity is not rejected at 5%.
    pub stationary: bool,
}

fn check_finite_and_varying(x: &[f64]) -> Result<()> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("series contains non-finite values".into()));
    }
    if x.windows(2).all(|w| w[0] == w[1]) {
        return Err(Error::ZeroVariance("series"));
    }
    Ok(())
}

/// ADF regression `dx_t = c + g x_{t-1} + sum_{j=1..p} b_j dx_{t-j} + e_t`
/// over the `n - 1 - p` rows for which every lag exists; returns the
/// t-statistic of `g`. `lag = None` uses [`schwert_lag`].
pub fn adf_test(x: &[f64], lag: Option<usize>) -> Result<AdfResult> {
    let n = x.len();
    let p = lag.unwrap_or_else(|| schwert_lag(n));
    let k = p + 2;
    // Need at least one residual degree of freedom.
    let required = (2 * p + 4).max(MIN_TEST_LENGTH);
    if n < required {
        return Err(Error::SeriesTooShort { required, actual: n });
    }
    check_finite_and_varying(x)?;

    let dx: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let nobs = dx.len() - p;
    let design = DMatrix::from_fn(nobs, k, |r, c| {
        let t = p + r;
        match c {
            0 => 1.0,
            1 => x[t],
            j => dx[t - (j - 1)],
        }
    });
    let y = DVector::from_fn(nobs, |r, _| dx[p + r]);

    let qr = design.clone().qr();
    let r = qr.r();
    if (0..k).any(|i| r[(i, i)].abs() < 1e-12 * r.amax().max(1.0)) {
        return Err(Error::Precondition("singular ADF regression".into()));
    }
    let qty = qr.q().transpose() * &y;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Precondition("singular ADF regression".into()))?;
    let resid = &y - &design * &beta;
    let sigma2 = resid.norm_squared() / (nobs - k) as f64;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or_else(|| Error::Precondition("singular ADF regression".into()))?;
    // (X'X)^-1 = R^-1 R^-T, so its (1,1) entry is the squared norm of row 1 of R^-1.
    let var_g = sigma2 * r_inv.row(1).norm_squared();
    if !(var_g > 0.0) {
        return Err(Error::ZeroVariance("ADF residuals"));
    }
    let statistic = beta[1] / var_g.sqrt();
    let critical_5pct = adf_critical_value_5pct(nobs);
    Ok(AdfResult {
        statistic,
        lag: p,
        nobs,
        critical_5pct,
        stationary: statistic < critical_5pct,
    })
}

/// KPSS level-stationarity test with a Bartlett-weighted long-run variance.
/// `bandwidth = None` uses [`kpss_bandwidth`].
pub fn kpss_test(x: &[f64], bandwidth: Option<usize>) -> Result<KpssResult> {
    let n = x.len();
    let lags = bandwidth.unwrap_or_else(|| kpss_bandwidth(n));
    let required = (lags + 2).max(MIN_TEST_LENGTH);
    if n < required {
        return Err(Error::SeriesTooShort { required, actual: n });
    }
    check_finite_and_varying(x)?;

    let mean = x.iter().sum::<f64>() / n as f64;
    let e: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let mut partial = 0.0;
    let eta = e
        .iter()
        .map(|v| {
            partial += v;
            partial * partial
        })
        .sum::<f64>()
        / (n as f64 * n as f64);

    let mut s = e.iter().map(|v| v * v).sum::<f64>();
    for l in 1..=lags {
        let gamma: f64 = e[l..].iter().zip(&e[..n - l]).map(|(a, b)| a * b).sum();
        s += 2.0 * gamma * (1.0 - l as f64 / (lags as f64 + 1.0));
    }
    let s = s / n as f64;
    if !(s > 0.0) {
        return Err(Error::ZeroVariance("long-run variance"));
    }
    let statistic = eta / s;
    Ok(KpssResult {
        statistic,
        bandwidth: lags,
        critical_5pct: KPSS_CRITICAL_5PCT,
        stationary: statistic <= KPSS_CRITICAL_5PCT,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Deterministic pseudo-noise (LCG mapped to roughly N(0,1) by summing
    /// uniforms) so these tests do not depend on the generators.
    fn noise(n: usize, mut state: u64) -> Vec<f64> {
        (0..n)
            .map(|_| {
                (0..12)
                    .map(|_| {
                        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                        (state >> 11) as f64 / (1u64 << 53) as f64
                    })
                    .sum::<f64>()
                    - 6.0
            })
            .collect()
    }

    #[test]
    fn default_lags() {
        assert_eq!(schwert_lag(100), 12);
        assert_eq!(schwert_lag(500), 17);
        assert_eq!(kpss_bandwidth(100), 4);
        assert_eq!(kpss_bandwidth(500), 5);
    }

    #[test]
    fn critical_value_interpolation() {
        assert_eq!(adf_critical_value_5pct(10), -3.00);
        assert_eq!(adf_critical_value_5pct(25), -3.00);
        assert!((adf_critical_value_5pct(75) - (-2.91)).abs() < 1e-12);
        assert_eq!(adf_critical_value_5pct(500), -2.87);
        assert!((adf_critical_value_5pct(1000) - (-2.865)).abs() < 1e-12);
        assert!(adf_critical_value_5pct(10_000_000) > -2.8601);
    }

    #[test]
    fn constant_series_is_zero_variance() {
        assert!(matches!(adf_test(&[3.0; 200], None), Err(Error::ZeroVariance(_))));
        assert!(matches!(kpss_test(&[3.0; 200], None), Err(Error::ZeroVariance(_))));
    }

    #[test]
    fn short_series_rejected() {
        assert!(matches!(adf_test(&[1.0, 2.0, 3.0], Some(1)), Err(Error::SeriesTooShort { .. })));
        assert!(matches!(kpss_test(&[1.0, 2.0], None), Err(Error::SeriesTooShort { .. })));
        let ramp: Vec<f64> = (0..19).map(f64::from).collect();
        assert!(matches!(adf_test(&ramp, Some(0)), Err(Error::SeriesTooShort { required: 20, .. })));
    }

    #[test]
    fn level_with_tiny_noise_is_kpss_stationary() {
        let x: Vec<f64> = noise(300, 9).iter().map(|e| 5.0 + 1e-6 * e).collect();
        assert!(kpss_test(&x, None).unwrap().stationary);
    }

    #[test]
    fn statistics_match_naive_oracles() {
        // The QR path must agree with an explicit normal-equation solve of
        // the same regression and with the textbook KPSS sums.
        let x = noise(60, 1);
        let adf = adf_test(&x, Some(2)).unwrap();
        let kpss = kpss_test(&x, Some(3)).unwrap();
        assert_eq!(adf.nobs, 57);
        let oracle = naive_adf(&x, 2);
        assert!((adf.statistic - oracle).abs() < 1e-9, "{} vs {}", adf.statistic, oracle);
        let oracle_k = naive_kpss(&x, 3);
        assert!((kpss.statistic - oracle_k).abs() < 1e-12);
    }

    /// Normal-equation ADF via Gauss-Jordan on X'X; independent of the QR path.
    fn naive_adf(x: &[f64], p: usize) -> f64 {
        let dx: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let rows: Vec<(Vec<f64>, f64)> = (p..dx.len())
            .map(|t| {
                let mut r = vec![1.0, x[t]];
                r.extend((1..=p).map(|j| dx[t - j]));
                (r, dx[t])
            })
            .collect();
        let k = p + 2;
        let mut a = vec![vec![0.0; 2 * k]; k];
        let mut xty = vec![0.0; k];
        for (r, y) in &rows {
            for i in 0..k {
                xty[i] += r[i] * y;
                for j in 0..k {
                    a[i][j] += r[i] * r[j];
                }
            }
        }
        for (i, row) in a.iter_mut().enumerate() {
            row[k + i] = 1.0;
        }
        for c in 0..k {
            let piv = (c..k).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
            a.swap(c, piv);
            let d = a[c][c];
            for v in a[c].iter_mut() {
                *v /= d;
            }
            for r in 0..k {
                if r != c {
                    let f = a[r][c];
                    let pivot_row = a[c].clone();
                    for (v, pv) in a[r].iter_mut().zip(&pivot_row) {
                        *v -= f * pv;
                    }
                }
            }
        }
        let inv: Vec<Vec<f64>> = a.iter().map(|r| r[k..].to_vec()).collect();
        let beta: Vec<f64> = (0..k).map(|i| (0..k).map(|j| inv[i][j] * xty[j]).sum()).collect();
        let rss: f64 = rows
            .iter()
            .map(|(r, y)| {
                let fit: f64 = r.iter().zip(&beta).map(|(a, b)| a * b).sum();
                (y - fit).powi(2)
            })
            .sum();
        let s2 = rss / (rows.len() - k) as f64;
        beta[1] / (s2 * inv[1][1]).sqrt()
    }

    fn naive_kpss(x: &[f64], l: usize) -> f64 {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        let e: Vec<f64> = x.iter().map(|v| v - m).collect();
        let mut eta = 0.0;
        for t in 0..e.len() {
            let s: f64 = e[..=t].iter().sum();
            eta += s * s;
        }
        let mut lrv = 0.0;
        for lag in 0..=l {
            let w = if lag == 0 { 1.0 } else { 2.0 * (1.0 - lag as f64 / (l as f64 + 1.0)) };
            let g: f64 = (lag..e.len()).map(|t| e[t] * e[t - lag]).sum();
            lrv += w * g;
        }
        (eta / (n * n)) / (lrv / n)
    }

    #[test]
    fn separates_noise_from_random_walk() {
        let mut noise_hits = 0;
        let mut walk_hits = 0;
        for seed in 0..20 {
            let e = noise(500, seed + 100);
            let walk: Vec<f64> = e
                .iter()
                .scan(0.0, |acc, v| {
                    *acc += v;
                    Some(*acc)
                })
                .collect();
            if adf_test(&e, None).unwrap().stationary && kpss_test(&e, None).unwrap().stationary {
                noise_hits += 1;
            }
            if !adf_test(&walk, None).unwrap().stationary && !kpss_test(&walk, None).unwrap().stationary {
                walk_hits += 1;
            }
        }
        assert!(noise_hits >= 16, "{noise_hits}");
        assert!(walk_hits >= 16, "{walk_hits}");
    }
}
