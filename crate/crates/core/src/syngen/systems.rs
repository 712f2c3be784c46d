//! Reference dynamical systems and noise processes for testing the
//! time-series tools.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Parameters of a pair of logistic maps coupled through cross terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticParams {
    pub x0: f64,
    pub y0: f64,
    pub r_x: f64,
    pub r_y: f64,
    /// Effect of y on x.
    pub beta_xy: f64,
    /// Effect of x on y.
    pub beta_yx: f64,
    pub burn_in: usize,
}

impl Default for LogisticParams {
    /// x drives y; y does not act on x.
    fn default() -> Self {
        LogisticParams { x0: 0.4, y0: 0.2, r_x: 3.8, r_y: 3.5, beta_xy: 0.0, beta_yx: 0.1, burn_in: 0 }
    }
}

/// Iterates
/// `x ← x (r_x − r_x x − β_xy y)`, `y ← y (r_y − r_y y − β_yx x)`
/// and returns `n` samples after discarding `burn_in`; the first retained
/// sample of a run without burn-in is `(x0, y0)`.
pub fn coupled_logistic(n: usize, p: &LogisticParams) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 {
        return Err(Error::InvalidArgument("series length must be at least 1".into()));
    }
    let open = |v: f64| v > 0.0 && v < 1.0;
    if !open(p.x0) || !open(p.y0) {
        return Err(Error::InvalidArgument("initial values must lie in (0, 1)".into()));
    }
    let (mut x, mut y) = (p.x0, p.y0);
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for step in 0..n + p.burn_in {
        if step >= p.burn_in {
            xs.push(x);
            ys.push(y);
        }
        let nx = x * (p.r_x - p.r_x * x - p.beta_xy * y);
        let ny = y * (p.r_y - p.r_y * y - p.beta_yx * x);
        if step + 1 < n + p.burn_in && !((0.0..=1.0).contains(&nx) && (0.0..=1.0).contains(&ny)) {
            return Err(Error::Divergent { step: step + 1 });
        }
        x = nx;
        y = ny;
    }
    Ok((xs, ys))
}

/// Independent standard normal draws.
pub fn white_noise(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// Cumulative sum of standard normal steps.
pub fn random_walk(n: usize, seed: u64) -> Vec<f64> {
    let mut acc = 0.0;
    white_noise(n, seed)
        .into_iter()
        .map(|e| {
            acc += e;
            acc
        })
        .collect()
}

/// `v_t = φ v_{t−1} + ε_t`, started at the first innovation.
pub fn ar1(n: usize, phi: f64, seed: u64) -> Vec<f64> {
    let mut prev = 0.0;
    white_noise(n, seed)
        .into_iter()
        .map(|e| {
            prev = phi * prev + e;
            prev
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_by_hand() {
        let p = LogisticParams { beta_yx: 0.0, ..LogisticParams::default() };
        let (x, _) = coupled_logistic(2, &p).unwrap();
        assert_eq!(x[0], 0.4);
        assert!((x[1] - 0.912).abs() < 1e-12);
    }

    #[test]
    fn uncoupled_maps_evolve_independently() {
        let base = LogisticParams { beta_yx: 0.0, ..LogisticParams::default() };
        let (x1, y1) = coupled_logistic(200, &base).unwrap();
        let (x2, y2) = coupled_logistic(200, &LogisticParams { x0: 0.3, ..base }).unwrap();
        assert_eq!(y1, y2);
        assert_ne!(x1, x2);
    }

    #[test]
    fn forcing_reaches_the_driven_map_only() {
        let base = LogisticParams::default();
        let (x1, y1) = coupled_logistic(200, &base).unwrap();
        let (x2, y2) = coupled_logistic(200, &LogisticParams { y0: 0.25, ..base }).unwrap();
        assert_eq!(x1, x2);
        assert_ne!(y1, y2);
        let (_, y3) = coupled_logistic(200, &LogisticParams { x0: 0.41, ..base }).unwrap();
        assert!(y1.iter().zip(&y3).skip(1).any(|(a, b)| a != b));
    }

    #[test]
    fn burn_in_discards_prefix() {
        let p = LogisticParams::default();
        let (x, _) = coupled_logistic(50, &p).unwrap();
        let (xb, _) = coupled_logistic(40, &LogisticParams { burn_in: 10, ..p }).unwrap();
        assert_eq!(&x[10..], &xb[..]);
    }

    #[test]
    fn divergence_and_bad_inputs() {
        let p = LogisticParams { r_x: 4.5, ..LogisticParams::default() };
        assert!(matches!(coupled_logistic(100, &p), Err(Error::Divergent { .. })));
        assert!(coupled_logistic(0, &LogisticParams::default()).is_err());
        assert!(coupled_logistic(5, &LogisticParams { x0: 1.0, ..LogisticParams::default() }).is_err());
    }

    #[test]
    fn noise_processes() {
        assert_eq!(white_noise(100, 3), white_noise(100, 3));
        let w = white_noise(1000, 3);
        let r = random_walk(1000, 3);
        let mut acc = 0.0;
        for (e, v) in w.iter().zip(&r) {
            acc += e;
            assert!((acc - v).abs() < 1e-9);
        }
        assert_eq!(ar1(1000, 1.0, 3), r);
        assert_eq!(ar1(1000, 0.0, 3), w);
    }
}
