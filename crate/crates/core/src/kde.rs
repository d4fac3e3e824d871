//! One-dimensional kernel density estimation with segment-wise bandwidths.
//!
//! The sorted sample is cut recursively at the point minimizing the sum of
//! the two segment standard deviations, as long as that sum stays below
//! `(1 + tau_s)` times the standard deviation of the segment being cut. Each
//! final segment gets its own rule-of-thumb bandwidth and a weight equal to
//! its share of the sample.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::sampling::{logistic, open_unit, stream_rng};
use crate::stats::DataMatrix;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    #[default]
    Gaussian,
}

impl Kernel {
    pub fn eval(self, u: f64) -> f64 {
        match self {
            Kernel::Gaussian => INV_SQRT_2PI * (-0.5 * u * u).exp(),
        }
    }
}

/// Sample standard deviation (divisor `n - 1`).
pub fn sample_sd(data: &[f64]) -> Result<f64> {
    let n = data.len();
    if n < 2 {
        return Err(invalid(format!("need at least 2 points, got {n}")));
    }
    let mean = data.iter().sum::<f64>() / n as f64;
    let ss: f64 = data.iter().map(|x| (x - mean) * (x - mean)).sum();
    Ok((ss / (n - 1) as f64).sqrt())
}

/// `n^{-1/5} σ̂`.
pub fn silverman_bandwidth(data: &[f64]) -> Result<f64> {
    let sd = sample_sd(data)?;
    if !(sd > 0.0) {
        return Err(Error::DegenerateData);
    }
    Ok((data.len() as f64).powf(-0.2) * sd)
}

/// `(nb)^{-1} Σ K((x - Xᵢ)/b)`.
pub fn kde_eval(data: &[f64], bandwidth: f64, x: f64, kernel: Kernel) -> Result<f64> {
    if !(bandwidth > 0.0) || !bandwidth.is_finite() {
        return Err(invalid(format!(
            "bandwidth must be positive, got {bandwidth}"
        )));
    }
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(kde_sum(data, bandwidth, x, kernel) / (data.len() as f64 * bandwidth))
}

fn kde_sum(data: &[f64], bandwidth: f64, x: f64, kernel: Kernel) -> f64 {
    data.iter()
        .map(|xi| kernel.eval((x - xi) / bandwidth))
        .sum()
}

/// Best cut of a sorted sample into `sorted[..m]` and `sorted[m..]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cut {
    pub m: usize,
    pub sigma_sum: f64,
}

/// Scans every cut leaving at least `min_segment` points per side and
/// returns the one minimizing `σ_G + σ_H`, smallest `m` on ties. Standard
/// deviations use divisor `n - 1`, so `min_segment` must be at least 2.
pub fn best_1d_split(sorted: &[f64], min_segment: usize) -> Result<Cut> {
    let n = sorted.len();
    if min_segment < 2 {
        return Err(invalid("min_segment must be at least 2"));
    }
    if n < 2 * min_segment {
        return Err(invalid(format!(
            "{n} points cannot be cut into two segments of {min_segment}"
        )));
    }
    if sorted.windows(2).any(|w| w[0] > w[1]) {
        return Err(invalid("data must be sorted ascending"));
    }
    // Shift by the mean so the prefix sums do not cancel catastrophically.
    let shift = sorted.iter().sum::<f64>() / n as f64;
    let mut s1 = vec![0.0; n + 1];
    let mut s2 = vec![0.0; n + 1];
    for (i, x) in sorted.iter().enumerate() {
        let y = x - shift;
        s1[i + 1] = s1[i] + y;
        s2[i + 1] = s2[i] + y * y;
    }
    let sd = |sum: f64, sq: f64, k: usize| -> f64 {
        let ss = (sq - sum * sum / k as f64).max(0.0);
        (ss / (k - 1) as f64).sqrt()
    };
    let mut best = Cut {
        m: 0,
        sigma_sum: f64::INFINITY,
    };
    for m in min_segment..=n - min_segment {
        let g = sd(s1[m], s2[m], m);
        let h = sd(s1[n] - s1[m], s2[n] - s2[m], n - m);
        if g + h < best.sigma_sum {
            best = Cut {
                m,
                sigma_sum: g + h,
            };
        }
    }
    Ok(best)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KdeConfig {
    pub tau_s: f64,
    /// Smallest segment a cut may produce. `None` uses
    /// `max(3, ceil(sqrt(len)))` of the segment being cut.
    pub min_segment: Option<usize>,
    pub kernel: Kernel,
}

impl Default for KdeConfig {
    fn default() -> Self {
        KdeConfig {
            tau_s: 0.05,
            min_segment: None,
            kernel: Kernel::Gaussian,
        }
    }
}

impl KdeConfig {
    /// Never cuts: the plain single-bandwidth estimator.
    pub fn single() -> Self {
        KdeConfig {
            tau_s: f64::INFINITY,
            ..KdeConfig::default()
        }
    }

    fn min_segment_for(&self, len: usize) -> usize {
        self.min_segment
            .unwrap_or_else(|| 3.max((len as f64).sqrt().ceil() as usize))
    }

    fn splits_enabled(&self) -> bool {
        self.tau_s.is_finite()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub weight: f64,
    /// Half-open range `lo..hi` into the sorted data.
    pub lo: usize,
    pub hi: usize,
    pub bandwidth: f64,
}

/// A weighted sum of per-segment kernel estimates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KdeModel {
    pub segments: Vec<Segment>,
    pub kernel: Kernel,
    #[serde(skip)]
    sorted: Vec<f64>,
}

impl KdeModel {
    /// Rebuilds a model from its segments and the data it was fitted on.
    pub fn from_parts(mut data: Vec<f64>, segments: Vec<Segment>, kernel: Kernel) -> Result<Self> {
        data.sort_by(f64::total_cmp);
        let mut expected_lo = 0;
        for s in &segments {
            if s.lo != expected_lo || s.hi <= s.lo || !(s.bandwidth > 0.0) {
                return Err(invalid("segments must tile the sorted data"));
            }
            expected_lo = s.hi;
        }
        if expected_lo != data.len() {
            return Err(invalid("segments must tile the sorted data"));
        }
        let total: f64 = segments.iter().map(|s| s.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(invalid(format!("segment weights sum to {total}")));
        }
        Ok(KdeModel {
            segments,
            kernel,
            sorted: data,
        })
    }

    pub fn sorted_data(&self) -> &[f64] {
        &self.sorted
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.segments
            .iter()
            .map(|s| {
                let seg = &self.sorted[s.lo..s.hi];
                s.weight * kde_sum(seg, s.bandwidth, x, self.kernel)
                    / (seg.len() as f64 * s.bandwidth)
            })
            .sum()
    }

    pub fn eval_grid(&self, grid: &[f64]) -> Vec<f64> {
        grid.iter().map(|&x| self.eval(x)).collect()
    }

    /// Bandwidth-weighted span used to pad evaluation grids.
    pub fn max_bandwidth(&self) -> f64 {
        self.segments
            .iter()
            .map(|s| s.bandwidth)
            .fold(0.0, f64::max)
    }
}

/// Fits the segment-wise estimator. With `tau_s = +∞` no cut is accepted and
/// the result is the plain estimator with the rule-of-thumb bandwidth.
pub fn mixture_kde(data: &[f64], cfg: &KdeConfig) -> Result<KdeModel> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if data.len() < 6 {
        return Err(invalid(format!(
            "need at least 6 points, got {}",
            data.len()
        )));
    }
    if data.iter().any(|x| !x.is_finite()) {
        return Err(invalid("data must be finite"));
    }
    let mut sorted = data.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut ranges = Vec::new();
    cut_recursively(&sorted, 0, n, cfg, &mut ranges);
    let segments = ranges
        .into_iter()
        .map(|(lo, hi)| {
            Ok(Segment {
                weight: (hi - lo) as f64 / n as f64,
                lo,
                hi,
                bandwidth: silverman_bandwidth(&sorted[lo..hi])?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(KdeModel {
        segments,
        kernel: cfg.kernel,
        sorted,
    })
}

fn cut_recursively(
    sorted: &[f64],
    lo: usize,
    hi: usize,
    cfg: &KdeConfig,
    out: &mut Vec<(usize, usize)>,
) {
    let seg = &sorted[lo..hi];
    let accepted = cfg.splits_enabled().then(|| try_cut(seg, cfg)).flatten();
    match accepted {
        Some(m) => {
            cut_recursively(sorted, lo, lo + m, cfg, out);
            cut_recursively(sorted, lo + m, hi, cfg, out);
        }
        None => out.push((lo, hi)),
    }
}

fn try_cut(seg: &[f64], cfg: &KdeConfig) -> Option<usize> {
    let min = cfg.min_segment_for(seg.len()).max(2);
    let cut = best_1d_split(seg, min).ok()?;
    let whole = sample_sd(seg).ok()?;
    let (g, h) = (
        sample_sd(&seg[..cut.m]).ok()?,
        sample_sd(&seg[cut.m..]).ok()?,
    );
    // Zero-variance segments have no usable bandwidth.
    if !(whole > 0.0 && g > 0.0 && h > 0.0) {
        return None;
    }
    (cut.sigma_sum / whole < 1.0 + cfg.tau_s).then_some(cut.m)
}

/// `0.2/cosh²(x+2.5) + 0.3/cosh²(x-2.5)`.
pub fn sech2_bimodal_density(x: f64) -> f64 {
    0.2 / (x + 2.5).cosh().powi(2) + 0.3 / (x - 2.5).cosh().powi(2)
}

/// I.i.d. draws from [`sech2_bimodal_density`]: pick the left mode with
/// probability 0.4, then invert the CDF `(1 + tanh(x - c))/2` of the mode.
pub fn sample_sech2_bimodal(n: usize, seed: u64) -> DataMatrix {
    let mut rng = stream_rng(seed, 0x5ec4);
    let values = (0..n)
        .map(|_| {
            let center = if open_unit(&mut rng) < 0.4 { -2.5 } else { 2.5 };
            center + logistic(&mut rng, 0.5)
        })
        .collect();
    DataMatrix::new(n, 1, values).expect("finite samples")
}

/// `2048` points spanning the data range padded by four bandwidths.
pub fn default_grid(data: &[f64], bandwidth: f64) -> Result<Vec<f64>> {
    uniform_grid(data, 4.0 * bandwidth, 2048)
}

/// `points` evenly spaced values covering the data range widened by `pad`.
pub fn uniform_grid(data: &[f64], pad: f64, points: usize) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if points < 2 {
        return Err(invalid("a grid needs at least 2 points"));
    }
    let lo = data.iter().copied().fold(f64::INFINITY, f64::min) - pad;
    let hi = data.iter().copied().fold(f64::NEG_INFINITY, f64::max) + pad;
    if !(hi > lo) {
        return Err(invalid("grid span must be positive"));
    }
    let step = (hi - lo) / (points - 1) as f64;
    Ok((0..points).map(|i| lo + step * i as f64).collect())
}

/// Trapezoid integral of `values` over `grid`.
pub fn trapezoid(grid: &[f64], values: &[f64]) -> f64 {
    grid.windows(2)
        .zip(values.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}

/// Integrated squared error of `model` against `truth` on `grid`.
pub fn ise(model: &KdeModel, truth: impl Fn(f64) -> f64, grid: &[f64]) -> Result<f64> {
    ise_of(|x| model.eval(x), truth, grid)
}

/// Integrated squared error between any two densities on `grid`.
pub fn ise_of(
    estimate: impl Fn(f64) -> f64,
    truth: impl Fn(f64) -> f64,
    grid: &[f64],
) -> Result<f64> {
    if grid.len() < 2 {
        return Err(invalid("empty grid"));
    }
    let sq: Vec<f64> = grid
        .iter()
        .map(|&x| {
            let e = estimate(x) - truth(x);
            e * e
        })
        .collect();
    Ok(trapezoid(grid, &sq))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{gaussian_points, stream_rng};

    #[test]
    fn silverman_examples() {
        // Exactly unit sample sd: ±1 alternating, with n - 1 divisor rescaled.
        let n = 1000;
        let raw: Vec<f64> = (0..n)
            .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let sd = sample_sd(&raw).unwrap();
        let data: Vec<f64> = raw.iter().map(|x| x / sd).collect();
        let b = silverman_bandwidth(&data).unwrap();
        assert!((b - 0.251189).abs() < 1e-6, "{b}");

        assert!(silverman_bandwidth(&[1.0]).is_err());
        assert!(matches!(
            silverman_bandwidth(&[2.0, 2.0, 2.0]),
            Err(Error::DegenerateData)
        ));

        let scaled: Vec<f64> = data.iter().map(|x| 3.0 * x).collect();
        let bs = silverman_bandwidth(&scaled).unwrap();
        assert!((bs - 3.0 * b).abs() < 1e-12);
    }

    #[test]
    fn kde_eval_examples() {
        let v = kde_eval(&[0.0], 1.0, 0.0, Kernel::Gaussian).unwrap();
        assert!((v - 0.398942).abs() < 1e-6);
        assert!(kde_eval(&[0.0], 0.0, 0.0, Kernel::Gaussian).is_err());
        assert!(kde_eval(&[0.0], -1.0, 0.0, Kernel::Gaussian).is_err());

        let pair = kde_eval(&[-1.0, 1.0], 0.7, 0.0, Kernel::Gaussian).unwrap();
        let single = kde_eval(&[1.0], 0.7, 0.0, Kernel::Gaussian).unwrap();
        assert!((pair - single).abs() < 1e-15);
        let mirrored = kde_eval(&[-1.0, 1.0], 0.7, 0.4, Kernel::Gaussian).unwrap();
        let other = kde_eval(&[-1.0, 1.0], 0.7, -0.4, Kernel::Gaussian).unwrap();
        assert!((mirrored - other).abs() < 1e-15);
    }

    #[test]
    fn kde_integrates_to_one() {
        let mut rng = stream_rng(21, 0);
        let data = gaussian_points(&mut rng, 200, 1);
        let x = data.as_column().unwrap();
        let b = silverman_bandwidth(x).unwrap();
        let grid = uniform_grid(x, 8.0 * b, 4001).unwrap();
        let f: Vec<f64> = grid
            .iter()
            .map(|&g| kde_eval(x, b, g, Kernel::Gaussian).unwrap())
            .collect();
        assert!((trapezoid(&grid, &f) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn cut_examples() {
        let c = best_1d_split(&[0.0, 1.0, 2.0, 10.0, 11.0, 12.0], 3).unwrap();
        assert_eq!(c.m, 3);
        let c = best_1d_split(&[0.0, 0.01, 0.02, 100.0, 100.01], 2).unwrap();
        assert_eq!(c.m, 3);
        assert!(best_1d_split(&[0.0, 1.0, 2.0, 3.0, 4.0], 3).is_err());
        assert!(best_1d_split(&[3.0, 1.0, 2.0, 4.0], 2).is_err());
    }

    #[test]
    fn evenly_spaced_data_gains_nothing() {
        let n = 2000;
        let data: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
        let c = best_1d_split(&data, 3).unwrap();
        let whole = sample_sd(&data).unwrap();
        assert!(c.sigma_sum / whole > 0.99, "{}", c.sigma_sum / whole);
    }

    #[test]
    fn sech2_sample_moments() {
        // ∫ sech² = 2, so the two weights are 0.4 and 0.6.
        let grid = uniform_grid(&[-30.0, 30.0], 0.0, 60001).unwrap();
        let f: Vec<f64> = grid.iter().map(|&x| sech2_bimodal_density(x)).collect();
        assert!((trapezoid(&grid, &f) - 1.0).abs() < 1e-8);

        let n = 100_000;
        let data = sample_sech2_bimodal(n, 9);
        let x = data.as_column().unwrap();
        let mean = x.iter().sum::<f64>() / n as f64;
        let se = sample_sd(x).unwrap() / (n as f64).sqrt();
        assert!((mean - 0.5).abs() < 4.0 * se, "mean {mean} se {se}");
        assert_eq!(sample_sech2_bimodal(0, 1).n(), 0);
    }

    #[test]
    fn sech2_gets_two_segments() {
        let data = sample_sech2_bimodal(1000, 3);
        let model = mixture_kde(data.as_column().unwrap(), &KdeConfig::default()).unwrap();
        assert_eq!(model.segments.len(), 2);
        let cut = model.sorted_data()[model.segments[1].lo];
        assert!(cut.abs() < 1.5, "cut at {cut}");
    }

    #[test]
    fn gaussian_gets_one_segment() {
        let mut rng = stream_rng(3, 0);
        let data = gaussian_points(&mut rng, 1000, 1);
        let model = mixture_kde(data.as_column().unwrap(), &KdeConfig::default()).unwrap();
        assert_eq!(model.segments.len(), 1);
    }

    #[test]
    fn single_cut_matches_the_two_part_formula() {
        let data = sample_sech2_bimodal(1000, 4);
        let x = data.as_column().unwrap();
        let model = mixture_kde(x, &KdeConfig::default()).unwrap();
        assert_eq!(model.segments.len(), 2);
        let sorted = model.sorted_data();
        let m = model.segments[0].hi;
        let n = sorted.len();
        let (g, h) = (&sorted[..m], &sorted[m..]);
        let bg = (m as f64).powf(-0.2) * sample_sd(g).unwrap();
        let bh = ((n - m) as f64).powf(-0.2) * sample_sd(h).unwrap();
        for t in [-4.0, -2.5, 0.0, 0.3, 2.5, 6.0] {
            let want = m as f64 / n as f64 * kde_eval(g, bg, t, Kernel::Gaussian).unwrap()
                + (n - m) as f64 / n as f64 * kde_eval(h, bh, t, Kernel::Gaussian).unwrap();
            assert!((model.eval(t) - want).abs() < 1e-14);
        }
    }

    #[test]
    fn infinite_threshold_is_the_plain_estimator() {
        let data = sample_sech2_bimodal(500, 5);
        let x = data.as_column().unwrap();
        let model = mixture_kde(x, &KdeConfig::single()).unwrap();
        assert_eq!(model.segments.len(), 1);
        let b = silverman_bandwidth(x).unwrap();
        for t in [-3.0, 0.0, 2.0] {
            let want = kde_eval(x, b, t, Kernel::Gaussian).unwrap();
            assert!((model.eval(t) - want).abs() < 1e-14);
        }
    }

    #[test]
    fn ise_examples() {
        let data = sample_sech2_bimodal(300, 6);
        let x = data.as_column().unwrap();
        let model = mixture_kde(x, &KdeConfig::default()).unwrap();
        let grid = default_grid(x, model.max_bandwidth()).unwrap();
        assert_eq!(
            ise_of(sech2_bimodal_density, sech2_bimodal_density, &grid).unwrap(),
            0.0
        );
        assert!(ise(&model, sech2_bimodal_density, &grid).unwrap() >= 0.0);
        assert!(ise(&model, sech2_bimodal_density, &[]).is_err());
    }

    #[test]
    fn model_json_shape() {
        let data = sample_sech2_bimodal(200, 1);
        let model = mixture_kde(data.as_column().unwrap(), &KdeConfig::default()).unwrap();
        let v: serde_json::Value = serde_json::to_value(&model).unwrap();
        assert_eq!(v["kernel"], "gaussian");
        let seg = &v["segments"][0];
        for key in ["weight", "lo", "hi", "bandwidth"] {
            assert!(seg.get(key).is_some(), "missing {key}");
        }
    }
}
