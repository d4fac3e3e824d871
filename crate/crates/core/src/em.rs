//! Two-component Gaussian EM, the engine that proposes splits.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::cluster::ClusterView;
use crate::error::{invalid, Error, Result};
use crate::sampling::{standard_normal, stream_rng};
use crate::stats::{moments_of, CovarianceDivisor, DataMatrix};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// A weighted Gaussian.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl GaussianComponent {
    pub fn new(weight: f64, mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        if !(weight > 0.0 && weight <= 1.0) {
            return Err(invalid(format!("component weight {weight} outside (0, 1]")));
        }
        let d = mean.len();
        if covariance.nrows() != d || covariance.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: covariance.nrows(),
            });
        }
        let c = GaussianComponent {
            weight,
            mean,
            covariance,
        };
        c.prepare()?;
        Ok(c)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Log of the (unweighted) normal density at `x`.
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        let p = self.prepare()?;
        let mut scratch = vec![0.0; self.dim()];
        Ok(p.log_density(x, &mut scratch))
    }

    pub fn prepare(&self) -> Result<PreparedGaussian> {
        PreparedGaussian::new(self)
    }
}

/// A Gaussian with its Cholesky factor cached for repeated evaluation.
#[derive(Clone, Debug)]
pub struct PreparedGaussian {
    d: usize,
    log_weight: f64,
    mean: Vec<f64>,
    // Lower Cholesky factor, row-major.
    chol: Vec<f64>,
    log_norm: f64,
}

impl PreparedGaussian {
    fn new(c: &GaussianComponent) -> Result<Self> {
        let d = c.dim();
        let chol = cholesky(&c.covariance).ok_or(Error::SingularCovariance)?;
        let log_det_half: f64 = (0..d).map(|i| chol[i * d + i].ln()).sum();
        Ok(PreparedGaussian {
            d,
            log_weight: c.weight.ln(),
            mean: c.mean.iter().copied().collect(),
            chol,
            log_norm: -log_det_half - 0.5 * d as f64 * LN_2PI,
        })
    }

    /// Log density without the mixture weight. `scratch` must hold `d` values.
    pub fn log_density(&self, x: &[f64], scratch: &mut [f64]) -> f64 {
        let d = self.d;
        let mut quad = 0.0;
        for i in 0..d {
            let mut v = x[i] - self.mean[i];
            for j in 0..i {
                v -= self.chol[i * d + j] * scratch[j];
            }
            v /= self.chol[i * d + i];
            scratch[i] = v;
            quad += v * v;
        }
        self.log_norm - 0.5 * quad
    }

    pub fn log_weighted_density(&self, x: &[f64], scratch: &mut [f64]) -> f64 {
        self.log_weight + self.log_density(x, scratch)
    }
}

fn cholesky(m: &DMatrix<f64>) -> Option<Vec<f64>> {
    let d = m.nrows();
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return None;
                }
                l[i * d + i] = s.sqrt();
            } else {
                l[i * d + j] = s / l[j * d + j];
            }
        }
    }
    Some(l)
}

/// Log of `Σ exp(values)` without overflow.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Log density of a Gaussian mixture at `x`.
pub fn mixture_log_density(components: &[GaussianComponent], x: &[f64]) -> Result<f64> {
    let prepared = components
        .iter()
        .map(GaussianComponent::prepare)
        .collect::<Result<Vec<_>>>()?;
    let mut scratch = vec![0.0; x.len()];
    let terms: Vec<f64> = prepared
        .iter()
        .map(|p| p.log_weighted_density(x, &mut scratch))
        .collect();
    Ok(log_sum_exp(&terms))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    pub max_iters: usize,
    /// Stop when the relative change of the log-likelihood drops below this.
    pub loglik_tol: f64,
    /// Each M-step adds `ridge · trace(S)/d` to the component covariance
    /// diagonals, `S` being the covariance of the data being split.
    pub ridge: f64,
    /// Random-hyperplane starts tried after the principal-axis starts.
    pub restarts: usize,
    pub seed: u64,
    /// Runs whose hard partition puts fewer points than this on a side rank
    /// below every run that does not.
    pub min_side: usize,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            max_iters: 200,
            loglik_tol: 1e-8,
            ridge: 1e-6,
            restarts: 3,
            seed: 0,
            min_side: 1,
        }
    }
}

impl EmConfig {
    fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(invalid("max_iters must be at least 1"));
        }
        if !(self.loglik_tol > 0.0) {
            return Err(invalid("loglik_tol must be positive"));
        }
        if !(self.ridge >= 0.0) {
            return Err(invalid("ridge must be nonnegative"));
        }
        if self.restarts == 0 {
            return Err(invalid("restarts must be at least 1"));
        }
        Ok(())
    }
}

/// Outcome of a two-component EM fit.
#[derive(Clone, Debug)]
pub struct EmFit {
    pub components: [GaussianComponent; 2],
    /// Per-point posterior probabilities of the two components.
    pub responsibilities: Vec<[f64; 2]>,
    pub log_likelihood: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Log-likelihood after every E-step.
    pub trace: Vec<f64>,
    /// Index of the start that won.
    pub run: usize,
}

/// Smallest cluster `em_two_gaussian` accepts in `d` dimensions.
pub fn min_split_size(d: usize) -> usize {
    2 * (d + 1)
}

/// Fits a two-component Gaussian mixture by EM.
///
/// Starts are, in order: a cut through the mean across each principal axis
/// (largest variance first), then `restarts` cuts across random directions.
/// The fit with the highest final log-likelihood wins, among the starts whose
/// hard partition respects `min_side` if any do; ties go to the earlier start.
pub fn em_two_gaussian(data: &DataMatrix, cfg: &EmConfig) -> Result<EmFit> {
    cfg.validate()?;
    let (n, d) = (data.n(), data.d());
    let min = min_split_size(d);
    if n < min {
        return Err(Error::TooSmallToSplit { size: n, min });
    }
    let starts = initial_partitions(data, cfg)?;
    let mut best: Option<(bool, EmFit)> = None;
    let mut last_err = None;
    for (run, sides) in starts.into_iter().enumerate() {
        let init: Vec<[f64; 2]> = sides
            .iter()
            .map(|&s| if s { [0.01, 0.99] } else { [0.99, 0.01] })
            .collect();
        match em_from_responsibilities(data, &init, cfg) {
            Ok(mut fit) => {
                fit.run = run;
                let (a, b) = side_counts(&fit.responsibilities);
                let ok = a.min(b) >= cfg.min_side;
                let better = match &best {
                    None => true,
                    Some((best_ok, best_fit)) => {
                        (ok && !best_ok)
                            || (ok == *best_ok && fit.log_likelihood > best_fit.log_likelihood)
                    }
                };
                if better {
                    best = Some((ok, fit));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    match best {
        Some((_, fit)) => Ok(fit),
        None => Err(last_err.unwrap_or_else(|| Error::EmFailed("no usable start".into()))),
    }
}

fn side_counts(resp: &[[f64; 2]]) -> (usize, usize) {
    let right = resp.iter().filter(|r| r[1] > r[0]).count();
    (resp.len() - right, right)
}

fn initial_partitions(data: &DataMatrix, cfg: &EmConfig) -> Result<Vec<Vec<bool>>> {
    let all: Vec<usize> = (0..data.n()).collect();
    let m = moments_of(data, &all, CovarianceDivisor::Population)?;
    let d = data.d();
    let eig = SymmetricEigen::new(m.covariance.clone());
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut directions: Vec<Vec<f64>> = order
        .iter()
        .map(|&k| eig.eigenvectors.column(k).iter().copied().collect())
        .collect();
    let mut rng = stream_rng(cfg.seed, 0x454d);
    for _ in 0..cfg.restarts {
        directions.push((0..d).map(|_| standard_normal(&mut rng)).collect());
    }
    let mean = m.mean.as_slice();
    let starts = directions
        .iter()
        .map(|dir| {
            data.rows()
                .map(|x| {
                    x.iter()
                        .zip(mean)
                        .zip(dir)
                        .map(|((xi, mi), di)| (xi - mi) * di)
                        .sum::<f64>()
                        > 0.0
                })
                .collect::<Vec<bool>>()
        })
        .filter(|sides| {
            let right = sides.iter().filter(|&&s| s).count();
            right > 0 && right < sides.len()
        })
        .collect::<Vec<_>>();
    if starts.is_empty() {
        return Err(Error::EmFailed("all points coincide".into()));
    }
    Ok(starts)
}

/// Runs EM from the given initial responsibilities, without any size check.
pub fn em_from_responsibilities(
    data: &DataMatrix,
    init: &[[f64; 2]],
    cfg: &EmConfig,
) -> Result<EmFit> {
    cfg.validate()?;
    let (n, d) = (data.n(), data.d());
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if init.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: init.len(),
        });
    }
    let all: Vec<usize> = (0..n).collect();
    let parent = moments_of(data, &all, CovarianceDivisor::Population)?;
    let ridge = cfg.ridge * parent.covariance.trace() / d as f64;

    let mut resp = init.to_vec();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut components = None;
    let mut scratch = vec![0.0; d];
    for _ in 0..cfg.max_iters {
        let comps = m_step(data, &resp, ridge)?;
        let prepared = [comps[0].prepare()?, comps[1].prepare()?];
        let mut ll = 0.0;
        for (x, r) in data.rows().zip(resp.iter_mut()) {
            let a = prepared[0].log_weighted_density(x, &mut scratch);
            let b = prepared[1].log_weighted_density(x, &mut scratch);
            let total = log_sum_exp(&[a, b]);
            ll += total;
            *r = [(a - total).exp(), (b - total).exp()];
        }
        if !ll.is_finite() {
            return Err(Error::EmFailed("non-finite log-likelihood".into()));
        }
        components = Some(comps);
        let done = trace
            .last()
            .is_some_and(|&prev: &f64| (ll - prev).abs() < cfg.loglik_tol * ll.abs());
        trace.push(ll);
        if done {
            converged = true;
            break;
        }
    }
    let components = components.expect("max_iters >= 1");
    Ok(EmFit {
        components,
        responsibilities: resp,
        log_likelihood: *trace.last().expect("at least one iteration"),
        converged,
        iterations: trace.len(),
        trace,
        run: 0,
    })
}

fn m_step(data: &DataMatrix, resp: &[[f64; 2]], ridge: f64) -> Result<[GaussianComponent; 2]> {
    let (n, d) = (data.n(), data.d());
    let mut out = Vec::with_capacity(2);
    for k in 0..2 {
        let nk: f64 = resp.iter().map(|r| r[k]).sum();
        if !(nk > 1e-9 * n as f64) {
            return Err(Error::EmFailed(format!("component {k} collapsed")));
        }
        let mut mean = DVector::<f64>::zeros(d);
        for (x, r) in data.rows().zip(resp) {
            for i in 0..d {
                mean[i] += r[k] * x[i];
            }
        }
        mean /= nk;
        let mut cov = DMatrix::<f64>::zeros(d, d);
        let mut c = vec![0.0; d];
        for (x, r) in data.rows().zip(resp) {
            for i in 0..d {
                c[i] = x[i] - mean[i];
            }
            for i in 0..d {
                for j in 0..=i {
                    cov[(i, j)] += r[k] * c[i] * c[j];
                }
            }
        }
        for i in 0..d {
            for j in 0..=i {
                let v = cov[(i, j)] / nk;
                cov[(i, j)] = v;
                cov[(j, i)] = v;
            }
            cov[(i, i)] += ridge;
        }
        out.push(GaussianComponent {
            weight: nk / n as f64,
            mean,
            covariance: cov,
        });
    }
    let b = out.pop().expect("two components");
    let a = out.pop().expect("two components");
    Ok([a, b])
}

/// Splits points by their larger responsibility; ties go to component 0.
/// Returns local point positions for each side.
pub fn assign(responsibilities: &[[f64; 2]]) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut left = Vec::new();
    let mut right = Vec::new();
    for (i, r) in responsibilities.iter().enumerate() {
        if r[1] > r[0] {
            right.push(i);
        } else {
            left.push(i);
        }
    }
    if left.is_empty() || right.is_empty() {
        return Err(Error::DegenerateSplit);
    }
    Ok((left, right))
}

/// A two-way partition of a cluster with its pseudo-volume ratio.
#[derive(Clone, Debug)]
pub struct SplitResult<'a> {
    pub left: ClusterView<'a>,
    pub right: ClusterView<'a>,
    /// `(pv(left) + pv(right)) / pv(parent)`; `None` when the parent is
    /// degenerate.
    pub ratio: Option<f64>,
    pub converged: bool,
}

/// Hard partition of `parent` from per-point responsibilities, which are in
/// the order of `parent.indices()`.
pub fn hard_partition<'a>(
    parent: &ClusterView<'a>,
    responsibilities: &[[f64; 2]],
    converged: bool,
) -> Result<SplitResult<'a>> {
    if responsibilities.len() != parent.len() {
        return Err(Error::DimensionMismatch {
            expected: parent.len(),
            actual: responsibilities.len(),
        });
    }
    let (l, r) = assign(responsibilities)?;
    let idx = parent.indices();
    let left = parent.subset(l.iter().map(|&i| idx[i]).collect())?;
    let right = parent.subset(r.iter().map(|&i| idx[i]).collect())?;
    let ratio = split_ratio(parent, &left, &right);
    Ok(SplitResult {
        left,
        right,
        ratio,
        converged,
    })
}

pub(crate) fn split_ratio(parent: &ClusterView, a: &ClusterView, b: &ClusterView) -> Option<f64> {
    let p = parent.pseudo_volume().value();
    (p > 0.0).then(|| (a.pseudo_volume().value() + b.pseudo_volume().value()) / p)
}

/// The Gaussian sharing the cluster's mean and covariance, weighted by the
/// cluster's share of the full dataset. A singular covariance gets the EM
/// default ridge.
pub fn moment_match_gaussian(cluster: &ClusterView) -> Result<GaussianComponent> {
    if cluster.len() < 2 {
        return Err(Error::DegenerateCluster);
    }
    let m = cluster.moments();
    let mut cov = m.covariance.clone();
    if cluster.pseudo_volume().is_zero() {
        let d = cov.nrows();
        let bump = EmConfig::default().ridge * cov.trace() / d as f64;
        if !(bump > 0.0) {
            return Err(Error::DegenerateCluster);
        }
        for i in 0..d {
            cov[(i, i)] += bump;
        }
    }
    let weight = cluster.len() as f64 / cluster.data().n() as f64;
    GaussianComponent::new(weight, m.mean.clone(), cov).map_err(|e| match e {
        Error::SingularCovariance => Error::DegenerateCluster,
        e => e,
    })
}
