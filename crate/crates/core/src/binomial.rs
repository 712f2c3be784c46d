//! Binomial mass functions and survival powers shared by the cohort and
//! classification code.

/// Above this many trials powers and mass functions are evaluated in log space.
pub(crate) const LOG_SPACE_THRESHOLD: u64 = 1_000;

/// `(1 - p)^n`, the probability that none of `n` independent trials succeeds.
pub(crate) fn none_succeed(n: u64, p: f64) -> f64 {
    let q = 1.0 - p;
    if n > LOG_SPACE_THRESHOLD {
        if q <= 0.0 {
            return 0.0;
        }
        (n as f64 * (-p).ln_1p()).exp()
    } else {
        q.powi(n as i32)
    }
}

/// Mass function of Binomial(n, p) over `0..=n`.
///
/// Uses the multiplicative recurrence `P(k+1) = P(k) (n-k)/(k+1) p/(1-p)`
/// starting from `(1-p)^n`; switches to a log-space recurrence when `n` is
/// large or the starting term would underflow.
pub(crate) fn pmf(n: u64, p: f64) -> Vec<f64> {
    let len = n as usize + 1;
    let mut out = vec![0.0; len];
    if p <= 0.0 {
        out[0] = 1.0;
        return out;
    }
    if p >= 1.0 {
        out[len - 1] = 1.0;
        return out;
    }

    let log_q = (-p).ln_1p();
    let log_start = n as f64 * log_q;
    let odds = p / (1.0 - p);

    if n <= LOG_SPACE_THRESHOLD && log_start > -700.0 {
        let mut term = (1.0 - p).powi(n as i32);
        out[0] = term;
        for k in 0..n {
            term *= (n - k) as f64 / (k + 1) as f64 * odds;
            out[k as usize + 1] = term;
        }
    } else {
        let log_odds = odds.ln();
        let mut log_term = log_start;
        out[0] = log_term.exp();
        for k in 0..n {
            log_term += ((n - k) as f64 / (k + 1) as f64).ln() + log_odds;
            out[k as usize + 1] = log_term.exp();
        }
    }
    out
}

/// `suffix[k] = sum_{j >= k} values[j]`, with one trailing zero so that
/// `suffix[values.len()] == 0`.
pub(crate) fn suffix_sums(values: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; values.len() + 1];
    for k in (0..values.len()).rev() {
        out[k] = out[k + 1] + values[k];
    }
    out
}

/// `prefix[k] = sum_{j < k} values[j]`.
pub(crate) fn prefix_sums(values: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; values.len() + 1];
    for k in 0..values.len() {
        out[k + 1] = out[k] + values[k];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn choose(n: u64, k: u64) -> f64 {
        (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
    }

    #[test]
    fn matches_closed_form_small_n() {
        for n in 0..=15u64 {
            for &p in &[0.0, 0.1, 0.37, 0.5, 0.9, 1.0] {
                let got = pmf(n, p);
                for k in 0..=n {
                    let want = choose(n, k) * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32);
                    assert!((got[k as usize] - want).abs() < 1e-14, "n={n} p={p} k={k}");
                }
            }
        }
    }

    #[test]
    fn sums_to_one_for_large_n() {
        for &n in &[500u64, 1_000, 1_001, 5_000] {
            for &p in &[0.05, 0.52, 0.95] {
                let s: f64 = pmf(n, p).iter().sum();
                assert!((s - 1.0).abs() < 1e-9, "n={n} p={p} sum={s}");
            }
        }
    }

    #[test]
    fn underflowing_start_uses_log_space() {
        // 0.1^400 underflows; the mass near the mode must still be recovered.
        let v = pmf(400, 0.9);
        let s: f64 = v.iter().sum();
        assert!((s - 1.0).abs() < 1e-9);
        assert!(v[360] > 0.05);
    }

    #[test]
    fn none_succeed_agrees_across_regimes() {
        let a = none_succeed(1_000, 0.001);
        let b = (1_000.0 * (-0.001f64).ln_1p()).exp();
        assert!((a - b).abs() < 1e-12);
        assert_eq!(none_succeed(5_000, 1.0), 0.0);
        assert_eq!(none_succeed(5_000, 0.0), 1.0);
    }
}
