//! Convergent cross mapping.
//!
//! Each series is standardised and delay-embedded into a shadow manifold.
//! Cross mapping estimates one series from the nearest neighbours on the
//! other's manifold (simplex projection); the correlation between estimate
//! and truth is the cross-map skill. Naming follows the usual convention:
//! "y xmap x" estimates `x` from `y`'s manifold, which succeeds when `x`
//! drives `y` (the driver leaves its imprint on the driven system).

mod neighbors;

pub use neighbors::{Neighbor, NeighborIndex, KD_TREE_THRESHOLD};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_E: usize = 32;
pub const DEFAULT_TAU: usize = 3;
/// Minimum skill margin for a directional verdict.
pub const DEFAULT_MARGIN: f64 = 0.05;
/// Minimum rise from the smallest to the largest library for convergence.
pub const DEFAULT_CONVERGENCE_RISE: f64 = 0.02;

/// Delay embedding `point t = (s(t), s(t-tau), ..., s(t-(E-1)tau))` for
/// `t = (E-1)tau .. len-1`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayEmbedding {
    pub source_length: usize,
    pub dim: usize,
    pub tau: usize,
    coords: Vec<f64>,
    time_index: Vec<usize>,
}

impl DelayEmbedding {
    pub fn len(&self) -> usize {
        self.time_index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time_index.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn time_index(&self) -> &[usize] {
        &self.time_index
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Index of the first embedded time step.
    pub fn offset(&self) -> usize {
        (self.dim - 1) * self.tau
    }
}

/// Shortest series that [`delay_embed`] accepts.
pub fn min_embedding_length(dim: usize, tau: usize) -> usize {
    (dim.saturating_sub(1)) * tau + 2
}

pub fn delay_embed(series: &[f64], dim: usize, tau: usize) -> Result<DelayEmbedding> {
    if dim == 0 || tau == 0 {
        return Err(Error::InvalidArgument(format!(
            "embedding needs E >= 1 and tau >= 1, got E={dim}, tau={tau}"
        )));
    }
    let required = min_embedding_length(dim, tau);
    if series.len() < required {
        return Err(Error::SeriesTooShort { required, actual: series.len() });
    }
    let offset = (dim - 1) * tau;
    let time_index: Vec<usize> = (offset..series.len()).collect();
    let mut coords = Vec::with_capacity(time_index.len() * dim);
    for &t in &time_index {
        coords.extend((0..dim).map(|j| series[t - j * tau]));
    }
    Ok(DelayEmbedding { source_length: series.len(), dim, tau, coords, time_index })
}

/// Zero-mean, unit-variance copy of `series`.
pub fn standardize(series: &[f64]) -> Result<Vec<f64>> {
    if series.is_empty() {
        return Err(Error::Empty("series"));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("series contains non-finite values".into()));
    }
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let var = series.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if !(var > 0.0) {
        return Err(Error::ZeroVariance("series"));
    }
    let sd = var.sqrt();
    Ok(series.iter().map(|v| (v - mean) / sd).collect())
}

/// Pearson correlation. A zero-variance `actual` is an error; a
/// zero-variance `predicted` yields 0.
pub fn pearson(predicted: &[f64], actual: &[f64]) -> Result<f64> {
    if predicted.len() != actual.len() {
        return Err(Error::InvalidArgument("correlation inputs differ in length".into()));
    }
    if actual.len() < 2 {
        return Err(Error::SeriesTooShort { required: 2, actual: actual.len() });
    }
    let n = actual.len() as f64;
    let mp = predicted.iter().sum::<f64>() / n;
    let ma = actual.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (p, a) in predicted.iter().zip(actual) {
        let (dp, da) = (p - mp, a - ma);
        sab += dp * da;
        saa += da * da;
        sbb += dp * dp;
    }
    if !(saa > 0.0) {
        return Err(Error::ZeroVariance("target"));
    }
    if !(sbb > 0.0) {
        return Ok(0.0);
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Spearman rank correlation (average ranks for ties).
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut order: Vec<usize> = (0..v.len()).collect();
        order.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut out = vec![0.0; v.len()];
        let mut i = 0;
        while i < order.len() {
            let mut j = i;
            while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
                j += 1;
            }
            let r = (i + j) as f64 / 2.0 + 1.0;
            for &k in &order[i..=j] {
                out[k] = r;
            }
            i = j + 1;
        }
        out
    }
    pearson(&ranks(a), &ranks(b))
}

/// Simplex weights for neighbour distances sorted ascending:
/// `exp(-d_k / d_1)` normalised, or uniform over exact matches when the
/// nearest distance is zero.
pub fn simplex_weights(dists: &[f64]) -> Vec<f64> {
    let Some(&d1) = dists.first() else {
        return Vec::new();
    };
    let raw: Vec<f64> = if d1 > 0.0 {
        dists.iter().map(|d| (-d / d1).exp()).collect()
    } else {
        dists.iter().map(|&d| if d == 0.0 { 1.0 } else { 0.0 }).collect()
    };
    let total: f64 = raw.iter().sum();
    raw.iter().map(|w| w / total).collect()
}

/// Cross-map estimates for each prediction point.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossMapEstimate {
    /// Embedded-point indices that were predicted.
    pub points: Vec<usize>,
    pub predicted: Vec<f64>,
    pub actual: Vec<f64>,
}

/// Estimates `target` at shadow points from a fixed library. Points outside
/// the library are predicted; when the library covers every point each point
/// is predicted from the others (leave-one-out). Library neighbours whose
/// time index lies within `exclusion_radius` of the predicted point's are
/// skipped; the point itself is always skipped.
pub fn cross_map_with_library(
    target: &[f64],
    shadow: &DelayEmbedding,
    library: &[usize],
    exclusion_radius: usize,
) -> Result<CrossMapEstimate> {
    if target.len() != shadow.source_length {
        return Err(Error::InvalidArgument(format!(
            "target length {} differs from embedded series length {}",
            target.len(),
            shadow.source_length
        )));
    }
    let k = shadow.dim + 1;
    let n = shadow.len();
    if library.len() < shadow.dim + 2 {
        return Err(Error::InvalidArgument(format!(
            "library of {} points is below E + 2 = {}",
            library.len(),
            shadow.dim + 2
        )));
    }
    if library.iter().any(|&p| p >= n) {
        return Err(Error::InvalidArgument("library index out of range".into()));
    }
    let mut in_library = vec![false; n];
    for &p in library {
        in_library[p] = true;
    }
    let points: Vec<usize> = if library.len() >= n {
        (0..n).collect()
    } else {
        (0..n).filter(|&p| !in_library[p]).collect()
    };
    if points.is_empty() {
        return Err(Error::Empty("prediction set"));
    }

    let times = shadow.time_index();
    let index = NeighborIndex::new(shadow.coords(), shadow.dim, library);
    let predicted = points
        .par_iter()
        .map(|&p| {
            let t = times[p];
            let nbrs = index.knn(shadow.point(p), k, |q| q == p || times[q].abs_diff(t) <= exclusion_radius);
            if nbrs.len() < k {
                return Err(Error::Precondition(format!(
                    "only {} admissible neighbours for point {p}, need {k}",
                    nbrs.len()
                )));
            }
            let dists: Vec<f64> = nbrs.iter().map(|nb| nb.dist2.sqrt()).collect();
            let w = simplex_weights(&dists);
            Ok(nbrs.iter().zip(&w).map(|(nb, w)| w * target[times[nb.point]]).sum())
        })
        .collect::<Result<Vec<f64>>>()?;
    let actual = points.iter().map(|&p| target[times[p]]).collect();
    Ok(CrossMapEstimate { points, predicted, actual })
}

/// Draws a library of `library_size` distinct shadow points; returned
/// sorted ascending.
pub fn draw_library(n_points: usize, library_size: usize, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    if library_size > n_points {
        return Err(Error::InvalidArgument(format!(
            "library size {library_size} exceeds {n_points} embedded points"
        )));
    }
    let mut lib = if library_size == n_points {
        (0..n_points).collect()
    } else {
        index::sample(rng, n_points, library_size).into_vec()
    };
    lib.sort_unstable();
    Ok(lib)
}

/// Cross-map skill of `target` from a random library of `library_size`
/// points on `shadow`.
pub fn simplex_cross_map(
    target: &[f64],
    shadow: &DelayEmbedding,
    library_size: usize,
    exclusion_radius: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let lib = draw_library(shadow.len(), library_size, rng)?;
    let est = cross_map_with_library(target, shadow, &lib, exclusion_radius)?;
    pearson(&est.predicted, &est.actual)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CcmParams {
    pub e: usize,
    pub tau: usize,
    pub library_sizes: Vec<usize>,
    pub samples: usize,
    pub seed: u64,
    pub exclusion_radius: usize,
}

impl Default for CcmParams {
    fn default() -> Self {
        CcmParams {
            e: DEFAULT_E,
            tau: DEFAULT_TAU,
            library_sizes: Vec::new(),
            samples: 50,
            seed: 0,
            exclusion_radius: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CcmResult {
    pub library_sizes: Vec<usize>,
    /// Skill of estimating `y` from `x`'s manifold; high when `y` drives `x`.
    pub skill_x_xmap_y: Vec<f64>,
    /// Skill of estimating `x` from `y`'s manifold; high when `x` drives `y`.
    pub skill_y_xmap_x: Vec<f64>,
    pub e: usize,
    pub tau: usize,
    pub num_samples: usize,
    pub seed: u64,
    pub exclusion_radius: usize,
}

impl CcmResult {
    pub fn to_csv_string(&self) -> String {
        let mut s = String::from("library_size,skill_x_xmap_y,skill_y_xmap_x\n");
        for i in 0..self.library_sizes.len() {
            s.push_str(&format!(
                "{},{},{}\n",
                self.library_sizes[i], self.skill_x_xmap_y[i], self.skill_y_xmap_x[i]
            ));
        }
        s
    }
}

/// Number of embedded points a pair of series of length `len` yields.
pub fn embedded_points(len: usize, e: usize, tau: usize) -> usize {
    len.saturating_sub(e.saturating_sub(1) * tau)
}

fn sample_rng(seed: u64, size_index: usize, sample: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((size_index as u64) << 32) | sample as u64);
    rng
}

/// Mean cross-map skill in both directions for each library size, over
/// `samples` random libraries per size. The same library is used for both
/// directions, and every (size, sample) pair has its own random stream, so
/// the result depends only on the inputs and the seed.
pub fn skill_curve(x: &[f64], y: &[f64], params: &CcmParams) -> Result<CcmResult> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "series lengths differ: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if params.samples == 0 {
        return Err(Error::InvalidArgument("need at least one library sample".into()));
    }
    if params.library_sizes.is_empty() {
        return Err(Error::InvalidArgument("no library sizes given".into()));
    }
    if params.library_sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("library sizes must be strictly ascending".into()));
    }
    let xs = standardize(x)?;
    let ys = standardize(y)?;
    let mx = delay_embed(&xs, params.e, params.tau)?;
    let my = delay_embed(&ys, params.e, params.tau)?;
    let max = *params.library_sizes.last().expect("non-empty");
    if max > mx.len() {
        return Err(Error::InvalidArgument(format!(
            "largest library {max} exceeds {} embedded points",
            mx.len()
        )));
    }

    let mut skill_x_xmap_y = Vec::with_capacity(params.library_sizes.len());
    let mut skill_y_xmap_x = Vec::with_capacity(params.library_sizes.len());
    for (si, &size) in params.library_sizes.iter().enumerate() {
        let pairs = (0..params.samples)
            .into_par_iter()
            .map(|s| {
                let mut rng = sample_rng(params.seed, si, s);
                let lib = draw_library(mx.len(), size, &mut rng)?;
                let from_x = cross_map_with_library(&ys, &mx, &lib, params.exclusion_radius)?;
                let from_y = cross_map_with_library(&xs, &my, &lib, params.exclusion_radius)?;
                Ok((
                    pearson(&from_x.predicted, &from_x.actual)?,
                    pearson(&from_y.predicted, &from_y.actual)?,
                ))
            })
            .collect::<Result<Vec<(f64, f64)>>>()?;
        let n = pairs.len() as f64;
        skill_x_xmap_y.push(pairs.iter().map(|p| p.0).sum::<f64>() / n);
        skill_y_xmap_x.push(pairs.iter().map(|p| p.1).sum::<f64>() / n);
    }
    Ok(CcmResult {
        library_sizes: params.library_sizes.clone(),
        skill_x_xmap_y,
        skill_y_xmap_x,
        e: params.e,
        tau: params.tau,
        num_samples: params.samples,
        seed: params.seed,
        exclusion_radius: params.exclusion_radius,
    })
}

/// `count` library sizes spread evenly from `E + 2` to every embedded point.
pub fn default_library_sizes(n_points: usize, e: usize, count: usize) -> Vec<usize> {
    let lo = e + 2;
    if n_points < lo || count == 0 {
        return Vec::new();
    }
    if count == 1 || n_points == lo {
        return vec![n_points];
    }
    let mut sizes: Vec<usize> = (0..count)
        .map(|i| lo + ((n_points - lo) as f64 * i as f64 / (count - 1) as f64).round() as usize)
        .collect();
    sizes.dedup();
    sizes
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CausalDirection {
    XDrivenByY,
    YDrivenByX,
    Indeterminate,
}

impl CausalDirection {
    pub fn as_str(self) -> &'static str {
        match self {
            CausalDirection::XDrivenByY => "x-driven-by-y",
            CausalDirection::YDrivenByX => "y-driven-by-x",
            CausalDirection::Indeterminate => "indeterminate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CausalVerdict {
    pub driven: CausalDirection,
    /// Absolute skill difference at the largest library.
    pub margin: f64,
}

/// Directional verdict from the skills at the largest library. The winner
/// must lead by at least `min_margin` and its curve must have risen by at
/// least `min_rise` from the smallest library.
pub fn causal_compare_with(result: &CcmResult, min_margin: f64, min_rise: f64) -> CausalVerdict {
    let (Some(&xy_end), Some(&yx_end)) = (result.skill_x_xmap_y.last(), result.skill_y_xmap_x.last())
    else {
        return CausalVerdict { driven: CausalDirection::Indeterminate, margin: 0.0 };
    };
    let margin = (xy_end - yx_end).abs();
    let (winner, curve) = if xy_end >= yx_end {
        (CausalDirection::XDrivenByY, &result.skill_x_xmap_y)
    } else {
        (CausalDirection::YDrivenByX, &result.skill_y_xmap_x)
    };
    let converged = curve.len() < 2 || curve[curve.len() - 1] >= curve[0] + min_rise;
    let driven = if margin < min_margin || !converged { CausalDirection::Indeterminate } else { winner };
    CausalVerdict { driven, margin }
}

pub fn causal_compare(result: &CcmResult) -> CausalVerdict {
    causal_compare_with(result, DEFAULT_MARGIN, DEFAULT_CONVERGENCE_RISE)
}

/// Skill at one library size for each candidate embedding dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSweepRow {
    pub e: usize,
    pub skill_x_xmap_y: f64,
    pub skill_y_xmap_x: f64,
}

/// Runs [`skill_curve`] at the largest usable library for each `E`; sizes
/// that the embedding cannot support are skipped.
pub fn embedding_sweep(
    x: &[f64],
    y: &[f64],
    dims: &[usize],
    tau: usize,
    samples: usize,
    seed: u64,
) -> Result<Vec<EmbeddingSweepRow>> {
    let mut rows = Vec::new();
    for &e in dims {
        let n = embedded_points(x.len(), e, tau);
        if e == 0 || n < e + 3 || x.len() < min_embedding_length(e, tau) {
            continue;
        }
        let params = CcmParams {
            e,
            tau,
            library_sizes: vec![n],
            samples,
            seed,
            exclusion_radius: 0,
        };
        let r = skill_curve(x, y, &params)?;
        rows.push(EmbeddingSweepRow { e, skill_x_xmap_y: r.skill_x_xmap_y[0], skill_y_xmap_x: r.skill_y_xmap_x[0] });
    }
    Ok(rows)
}
