//! Numerical checks of the inequalities behind the pseudo-volume criterion.
//!
//! Every check is deterministic given its seed and returns an
//! [`InequalityReport`]. Margins are `rhs - lhs` of the inequality being
//! checked, so a negative margin means the inequality went the wrong way.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::em::{em_from_responsibilities, log_sum_exp, EmConfig, GaussianComponent};
use crate::error::{invalid, Error, Result};
use crate::sampling::{
    gaussian_points, logistic_points, random_linear_map, standard_normal, stream_rng,
    uniform_ball_points, SeededRng,
};
use crate::stats::{
    min_pseudo_volume_bound, moments_of, pseudo_volume, spherical_uniform_covariance,
    unit_ball_volume, CovarianceDivisor, DataMatrix,
};

/// Relative tolerance of the subadditivity checks.
pub const RELATIVE_TOL: f64 = 1e-10;
/// Finite-sample slack of the unimodal partition check.
pub const PARTITION_SLACK: f64 = 0.1;
pub const PARTITION_SAMPLE_SIZE: usize = 5000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub name: String,
    pub trials: usize,
    pub violations: usize,
    pub worst_margin: f64,
}

impl InequalityReport {
    pub fn new(name: impl Into<String>) -> Self {
        InequalityReport {
            name: name.into(),
            trials: 0,
            violations: 0,
            worst_margin: f64::INFINITY,
        }
    }

    /// Records one trial; `violated` is decided by the caller's tolerance.
    pub fn record(&mut self, margin: f64, violated: bool) {
        self.trials += 1;
        if violated {
            self.violations += 1;
        }
        if margin < self.worst_margin || margin.is_nan() {
            self.worst_margin = margin;
        }
    }

    pub fn absorb(&mut self, other: &InequalityReport) {
        self.trials += other.trials;
        self.violations += other.violations;
        if other.worst_margin < self.worst_margin || other.worst_margin.is_nan() {
            self.worst_margin = other.worst_margin;
        }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

impl fmt::Display for InequalityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: {} trials, {} violations, worst margin {:.3e}",
            self.name, self.trials, self.violations, self.worst_margin
        )
    }
}

/// `((Σ xᵢ^{1+2/d}) / Σ xᵢ)^{d/2}`, homogeneous of degree one.
pub fn lemma_f(x: &[f64], d: usize) -> Result<f64> {
    if d == 0 {
        return Err(invalid("d must be positive"));
    }
    if x.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(invalid("entries must be finite and nonnegative"));
    }
    let sum: f64 = x.iter().sum();
    if !(sum > 0.0) {
        return Err(invalid("entries must not all be zero"));
    }
    let p = 1.0 + 2.0 / d as f64;
    let num: f64 = x.iter().map(|v| v.powf(p)).sum();
    Ok((num / sum).powf(d as f64 / 2.0))
}

/// Entries spread over several orders of magnitude, some exactly zero, with
/// a positive total.
fn random_nonnegative(rng: &mut SeededRng, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n)
            .map(|_| {
                if rng.random::<f64>() < 0.2 {
                    0.0
                } else {
                    (rng.random_range(-4.0..4.0f64)).exp()
                }
            })
            .collect();
        if v.iter().sum::<f64>() > 0.0 {
            return v;
        }
    }
}

/// `f(b + c) ≤ f(b) + f(c)` on random nonnegative `b`, `c` of length `n`.
pub fn check_lemma_2_4(trials: usize, n: usize, d: usize, seed: u64) -> Result<InequalityReport> {
    if trials == 0 || n == 0 || d == 0 {
        return Err(invalid("trials, n and d must be positive"));
    }
    let mut rng = stream_rng(seed, ((n as u64) << 8) | d as u64);
    let mut report = InequalityReport::new(format!("lemma24 n={n} d={d}"));
    for _ in 0..trials {
        let b = random_nonnegative(&mut rng, n);
        let c = random_nonnegative(&mut rng, n);
        record_triple(&mut report, &b, &c, d, false)?;
    }
    Ok(report)
}

/// Equality `f(b + λb) = f(b) + f(λb)` for random `b` and `λ > 0`.
pub fn check_lemma_2_4_proportional(
    trials: usize,
    n: usize,
    d: usize,
    seed: u64,
) -> Result<InequalityReport> {
    if trials == 0 || n == 0 || d == 0 {
        return Err(invalid("trials, n and d must be positive"));
    }
    let mut rng = stream_rng(seed, (1 << 32) | ((n as u64) << 8) | d as u64);
    let mut report = InequalityReport::new(format!("lemma24-equality n={n} d={d}"));
    for _ in 0..trials {
        let b = random_nonnegative(&mut rng, n);
        let lambda = rng.random_range(-3.0..3.0f64).exp();
        let c: Vec<f64> = b.iter().map(|v| lambda * v).collect();
        record_triple(&mut report, &b, &c, d, true)?;
    }
    Ok(report)
}

fn record_triple(
    report: &mut InequalityReport,
    b: &[f64],
    c: &[f64],
    d: usize,
    equality: bool,
) -> Result<()> {
    let a: Vec<f64> = b.iter().zip(c).map(|(x, y)| x + y).collect();
    let lhs = lemma_f(&a, d)?;
    let rhs = lemma_f(b, d)? + lemma_f(c, d)?;
    let margin = (rhs - lhs) / rhs;
    let violated = if equality {
        margin.abs() > RELATIVE_TOL
    } else {
        margin < -RELATIVE_TOL
    };
    report.record(margin, violated);
    Ok(())
}

/// Runs `total` random triples spread evenly over `n ∈ 2..=10`,
/// `d ∈ 1..=5`, plus a tenth as many proportional ones.
pub fn check_lemma_2_4_sweep(total: usize, seed: u64) -> Result<Vec<InequalityReport>> {
    let combos: Vec<(usize, usize)> = (2..=10)
        .flat_map(|n| (1..=5).map(move |d| (n, d)))
        .collect();
    let per = total.div_ceil(combos.len()).max(1);
    let mut general = InequalityReport::new("lemma24");
    let mut equal = InequalityReport::new("lemma24-equality");
    for &(n, d) in &combos {
        general.absorb(&check_lemma_2_4(per, n, d, seed)?);
        equal.absorb(&check_lemma_2_4_proportional(per.div_ceil(10), n, d, seed)?);
    }
    Ok(vec![general, equal])
}

/// Elliptical unimodal families used by the partition check.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DensityFamily {
    Gaussian,
    LogisticElliptical,
    UniformBall,
}

impl DensityFamily {
    pub const ALL: [DensityFamily; 3] = [
        DensityFamily::Gaussian,
        DensityFamily::LogisticElliptical,
        DensityFamily::UniformBall,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DensityFamily::Gaussian => "gaussian",
            DensityFamily::LogisticElliptical => "logistic-elliptical",
            DensityFamily::UniformBall => "uniform-ball",
        }
    }

    /// `n` draws of the standard member, before any linear map.
    pub fn sample(self, rng: &mut SeededRng, n: usize, d: usize) -> DataMatrix {
        match self {
            DensityFamily::Gaussian => gaussian_points(rng, n, d),
            DensityFamily::LogisticElliptical => logistic_points(rng, n, d),
            DensityFamily::UniformBall => uniform_ball_points(rng, n, d, 1.0),
        }
    }
}

impl FromStr for DensityFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DensityFamily::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| invalid(format!("unknown density family '{s}'")))
    }
}

/// How the partition check cuts a sample in two.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartitionStrategy {
    /// A random direction, cut at a random quantile between 5% and 95%.
    Hyperplane,
    /// EM started from a random hyperplane cut, then hard assignment.
    Em,
}

impl FromStr for PartitionStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hyperplane" => Ok(PartitionStrategy::Hyperplane),
            "em" => Ok(PartitionStrategy::Em),
            _ => Err(invalid(format!("unknown partition strategy '{s}'"))),
        }
    }
}

/// `(pv(left) + pv(right)) / pv(all)`, `left` being a membership mask.
pub fn partition_ratio(
    data: &DataMatrix,
    left: &[bool],
    divisor: CovarianceDivisor,
) -> Result<f64> {
    if left.len() != data.n() {
        return Err(Error::DimensionMismatch {
            expected: data.n(),
            actual: left.len(),
        });
    }
    let (l, r): (Vec<usize>, Vec<usize>) = (0..data.n()).partition(|&i| left[i]);
    if l.is_empty() || r.is_empty() {
        return Err(Error::DegenerateSplit);
    }
    let all: Vec<usize> = (0..data.n()).collect();
    let pv = |idx: &[usize]| -> Result<f64> {
        Ok(pseudo_volume(&moments_of(data, idx, divisor)?)?.value())
    };
    let whole = pv(&all)?;
    if !(whole > 0.0) {
        return Err(Error::DegenerateData);
    }
    Ok((pv(&l)? + pv(&r)?) / whole)
}

fn hyperplane_mask(data: &DataMatrix, rng: &mut SeededRng) -> Vec<bool> {
    let d = data.d();
    let dir: Vec<f64> = (0..d).map(|_| standard_normal(rng)).collect();
    let proj: Vec<f64> = data
        .rows()
        .map(|x| x.iter().zip(&dir).map(|(a, b)| a * b).sum())
        .collect();
    let mut sorted = proj.clone();
    sorted.sort_by(f64::total_cmp);
    let q: f64 = rng.random_range(0.05..0.95);
    let t = sorted[((q * data.n() as f64) as usize).min(data.n() - 1)];
    proj.iter().map(|&p| p < t).collect()
}

/// Draws `PARTITION_SAMPLE_SIZE` points from a random affine image of `family` and
/// checks that `trials` random two-way partitions all have ratio at least
/// `1 - PARTITION_SLACK`. Trial `t` uses stream `t` of `seed`.
pub fn check_theorem_3(
    family: DensityFamily,
    d: usize,
    strategy: PartitionStrategy,
    trials: usize,
    seed: u64,
) -> Result<InequalityReport> {
    check_theorem_3_with(family, d, strategy, trials, PARTITION_SAMPLE_SIZE, seed)
}

/// [`check_theorem_3`] with an explicit sample size.
pub fn check_theorem_3_with(
    family: DensityFamily,
    d: usize,
    strategy: PartitionStrategy,
    trials: usize,
    n: usize,
    seed: u64,
) -> Result<InequalityReport> {
    if d == 0 || n < 2 {
        return Err(invalid("need d ≥ 1 and at least 2 points"));
    }
    let mut rng = stream_rng(seed, u64::MAX);
    let raw = family.sample(&mut rng, n, d);
    let map = random_linear_map(&mut rng, d);
    let shift: Vec<f64> = (0..d).map(|_| 10.0 * standard_normal(&mut rng)).collect();
    let data = raw.affine(&map, &shift)?;
    let strategy_name = match strategy {
        PartitionStrategy::Hyperplane => "hyperplane",
        PartitionStrategy::Em => "em",
    };
    let mut report =
        InequalityReport::new(format!("theorem3 {} d={d} {strategy_name}", family.name()));
    let em_cfg = EmConfig {
        max_iters: 100,
        loglik_tol: 1e-6,
        ..EmConfig::default()
    };
    for t in 0..trials {
        let mut trng = stream_rng(seed, t as u64);
        let mut mask = hyperplane_mask(&data, &mut trng);
        if strategy == PartitionStrategy::Em {
            let init: Vec<[f64; 2]> = mask
                .iter()
                .map(|&l| if l { [0.99, 0.01] } else { [0.01, 0.99] })
                .collect();
            let fit = em_from_responsibilities(&data, &init, &em_cfg)?;
            let em_mask: Vec<bool> = fit.responsibilities.iter().map(|r| r[0] >= r[1]).collect();
            let left = em_mask.iter().filter(|&&l| l).count();
            // A collapsed fit leaves the starting cut in place.
            if left > 0 && left < em_mask.len() {
                mask = em_mask;
            }
        }
        let ratio = partition_ratio(&data, &mask, CovarianceDivisor::Population)?;
        let margin = ratio - (1.0 - PARTITION_SLACK);
        report.record(margin, margin < 0.0);
    }
    Ok(report)
}

/// Monte-Carlo estimate of `KL(f‖single) − KL(f‖mixture)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KlComparison {
    pub delta: f64,
    pub stderr: f64,
}

/// Estimates `E_f[log q_mix(X)] − E_f[log q_single(X)]` from `mc_n` draws of
/// `sampler`. The entropy of `f` cancels, so its density is not needed. The
/// weight of `single` is ignored.
pub fn compare_kl(
    mut sampler: impl FnMut(&mut SeededRng) -> Vec<f64>,
    single: &GaussianComponent,
    mixture: &[GaussianComponent],
    mc_n: usize,
    seed: u64,
) -> Result<KlComparison> {
    if mc_n < 10_000 {
        return Err(invalid(format!("mc_n must be at least 10000, got {mc_n}")));
    }
    if mixture.is_empty() {
        return Err(invalid("mixture needs at least one component"));
    }
    let total: f64 = mixture.iter().map(|c| c.weight).sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(invalid(format!("mixture weights sum to {total}")));
    }
    let d = single.dim();
    if let Some(c) = mixture.iter().find(|c| c.dim() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: c.dim(),
        });
    }
    let single = single.prepare()?;
    let mixture = mixture
        .iter()
        .map(GaussianComponent::prepare)
        .collect::<Result<Vec<_>>>()?;
    let mut rng = stream_rng(seed, 0x6b6c);
    let mut scratch = vec![0.0; d];
    let mut terms = vec![0.0; mixture.len()];
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..mc_n {
        let x = sampler(&mut rng);
        if x.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: x.len(),
            });
        }
        for (t, p) in terms.iter_mut().zip(&mixture) {
            *t = p.log_weighted_density(&x, &mut scratch);
        }
        let diff = log_sum_exp(&terms) - single.log_density(&x, &mut scratch);
        sum += diff;
        sum_sq += diff * diff;
    }
    let n = mc_n as f64;
    let delta = sum / n;
    let var = ((sum_sq - n * delta * delta) / (n - 1.0)).max(0.0);
    Ok(KlComparison {
        delta,
        stderr: (var / n).sqrt(),
    })
}

/// The ±10 unit-variance two-blob mixture in one dimension: its true
/// components, and the moment-matched single Gaussian `N(0, 101)`.
pub fn two_blob_models() -> (GaussianComponent, Vec<GaussianComponent>) {
    let g = |w: f64, m: f64, v: f64| {
        GaussianComponent::new(
            w,
            DVector::from_element(1, m),
            DMatrix::from_element(1, 1, v),
        )
        .expect("valid component")
    };
    (
        g(1.0, 0.0, 101.0),
        vec![g(0.5, -10.0, 1.0), g(0.5, 10.0, 1.0)],
    )
}

pub fn sample_two_blobs(rng: &mut SeededRng) -> Vec<f64> {
    let center = if rng.random::<bool>() { 10.0 } else { -10.0 };
    vec![center + standard_normal(rng)]
}

/// The two-blob comparison as a report: the margin is `delta − 5·stderr`.
pub fn check_theorem_4(mc_n: usize, seed: u64) -> Result<InequalityReport> {
    let (single, mixture) = two_blob_models();
    let kl = compare_kl(sample_two_blobs, &single, &mixture, mc_n, seed)?;
    let mut report = InequalityReport::new("theorem4 two-blob");
    let margin = kl.delta - 5.0 * kl.stderr;
    report.record(margin, margin <= 0.0);
    Ok(report)
}

/// Sample pseudo-volume plus four bootstrap standard errors against the
/// lower bound for densities bounded by `max_density`.
pub fn check_lemma_1(
    mut sampler: impl FnMut(&mut SeededRng) -> Vec<f64>,
    max_density: f64,
    d: usize,
    n: usize,
    seed: u64,
) -> Result<InequalityReport> {
    if n < 2 {
        return Err(invalid("need at least 2 points"));
    }
    let bound = min_pseudo_volume_bound(max_density, d)?;
    let mut rng = stream_rng(seed, 0x4c31);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| sampler(&mut rng)).collect();
    let data = DataMatrix::from_rows(&rows)?;
    if data.d() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: data.d(),
        });
    }
    let all: Vec<usize> = (0..n).collect();
    let pv = |idx: &[usize]| -> Result<f64> {
        Ok(pseudo_volume(&moments_of(&data, idx, CovarianceDivisor::Population)?)?.value())
    };
    let estimate = pv(&all)?;
    let reps = 200;
    let mut boot = Vec::with_capacity(reps);
    let mut idx = vec![0; n];
    for _ in 0..reps {
        for i in idx.iter_mut() {
            *i = rng.random_range(0..n);
        }
        boot.push(pv(&idx)?);
    }
    let mean = boot.iter().sum::<f64>() / reps as f64;
    let se = (boot.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt();
    let mut report = InequalityReport::new(format!("lemma1 d={d}"));
    let margin = estimate + 4.0 * se - bound;
    report.record(margin, margin < 0.0);
    Ok(report)
}

/// Uniform on the unit cube `[0, 1]^d` (density bound 1).
pub fn sample_unit_cube(rng: &mut SeededRng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.random::<f64>()).collect()
}

/// The three bounded densities of the `lemma1` suite: the unit square, the
/// unit 3-ball (the equality case) and the unit interval.
pub fn check_lemma_1_suite(n: usize, seed: u64) -> Result<Vec<InequalityReport>> {
    let ball =
        |rng: &mut SeededRng| -> Vec<f64> { crate::sampling::uniform_ball_point(rng, 3, 1.0) };
    Ok(vec![
        named(
            "lemma1 cube d=2",
            check_lemma_1(|r| sample_unit_cube(r, 2), 1.0, 2, n, seed)?,
        ),
        named(
            "lemma1 ball d=3",
            check_lemma_1(ball, 1.0 / unit_ball_volume(3), 3, n, seed)?,
        ),
        named(
            "lemma1 interval d=1",
            check_lemma_1(|r| sample_unit_cube(r, 1), 1.0, 1, n, seed)?,
        ),
    ])
}

fn named(name: &str, mut report: InequalityReport) -> InequalityReport {
    report.name = name.to_string();
    report
}

/// Each entry of the sample covariance of `n` uniform draws from the
/// `d`-ball of `radius` against `radius²/(d+2)·δᵢⱼ`, within four standard
/// errors. Margins are `4·SE − |error|`.
pub fn check_spherical_covariance(
    d: usize,
    radius: f64,
    n: usize,
    seed: u64,
) -> Result<InequalityReport> {
    if n < 2 {
        return Err(invalid("need at least 2 points"));
    }
    let target = spherical_uniform_covariance(radius, d)?.covariance;
    let mut rng = stream_rng(seed, 0x5343);
    let data = uniform_ball_points(&mut rng, n, d, radius);
    let mut report = InequalityReport::new(format!("spherical-cov d={d}"));
    // The mean is known to be zero, so each entry is a plain average of
    // products and its standard error is that of a mean.
    for i in 0..d {
        for j in i..d {
            let prods: Vec<f64> = data.rows().map(|x| x[i] * x[j]).collect();
            let mean = prods.iter().sum::<f64>() / n as f64;
            let var = prods.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let se = (var / n as f64).sqrt();
            let margin = 4.0 * se - (mean - target[(i, j)]).abs();
            report.record(margin, margin < 0.0);
        }
    }
    Ok(report)
}

/// Suites runnable by name.
pub const SUITES: [&str; 5] = ["lemma1", "lemma24", "theorem3", "theorem4", "spherical-cov"];

/// Trials used by [`run_suite`] when none are given.
pub fn default_trials(suite: &str) -> usize {
    match suite {
        "lemma24" => 100_000,
        "theorem3" => 50,
        _ => 1,
    }
}

/// Runs a named suite, or every suite for `"all"`. `trials` scales the
/// amount of work: total random triples for `lemma24`, partitions per case
/// for `theorem3`; the sampling suites use fixed sample sizes. `None` uses
/// [`default_trials`] for each suite.
pub fn run_suite(name: &str, trials: Option<usize>, seed: u64) -> Result<Vec<InequalityReport>> {
    if trials == Some(0) {
        return Err(invalid("trials must be positive"));
    }
    let trials_for = |suite: &str| trials.unwrap_or_else(|| default_trials(suite));
    match name {
        "lemma1" => check_lemma_1_suite(20_000, seed),
        "lemma24" => check_lemma_2_4_sweep(trials_for(name), seed),
        "theorem3" => {
            let mut out = Vec::new();
            for family in [DensityFamily::Gaussian, DensityFamily::LogisticElliptical] {
                for d in [1, 2, 4] {
                    out.push(check_theorem_3(
                        family,
                        d,
                        PartitionStrategy::Hyperplane,
                        trials_for(name),
                        seed,
                    )?);
                }
            }
            Ok(out)
        }
        "theorem4" => Ok(vec![check_theorem_4(100_000, seed)?]),
        "spherical-cov" => (1..=3)
            .map(|d| check_spherical_covariance(d, 1.0, 100_000, seed))
            .collect(),
        "all" => {
            let mut out = Vec::new();
            for suite in SUITES {
                out.extend(run_suite(suite, trials, seed)?);
            }
            Ok(out)
        }
        other => Err(invalid(format!(
            "unknown suite '{other}' (expected one of {}, all)",
            SUITES.join(", ")
        ))),
    }
}
