//! Sample moments, pseudo-volumes and the closed-form quantities they are
//! compared against.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// `n` points in `d` dimensions, stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl DataMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if cols == 0 {
            return Err(invalid("dimension must be at least 1"));
        }
        if values.len() != rows * cols {
            return Err(invalid(format!(
                "expected {} values for a {rows}x{cols} matrix, got {}",
                rows * cols,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!(
                "non-finite value at row {}, column {}",
                pos / cols,
                pos % cols
            )));
        }
        Ok(DataMatrix { rows, cols, values })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let first = rows.first().ok_or(Error::EmptyDataset)?;
        let cols = first.as_ref().len();
        let mut values = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != cols {
                return Err(invalid(format!(
                    "row {i} has {} columns, expected {cols}",
                    row.len()
                )));
            }
            values.extend_from_slice(row);
        }
        DataMatrix::new(rows.len(), cols, values)
    }

    /// A one-column matrix.
    pub fn from_column(values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        DataMatrix::new(n, 1, values)
    }

    pub fn n(&self) -> usize {
        self.rows
    }

    pub fn d(&self) -> usize {
        self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.cols)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    /// The data of a one-dimensional matrix as a slice.
    pub fn as_column(&self) -> Result<&[f64]> {
        if self.cols != 1 {
            return Err(invalid(format!(
                "expected one-dimensional data, got {} columns",
                self.cols
            )));
        }
        Ok(&self.values)
    }

    /// Copies the given rows, in order, into a new matrix.
    pub fn select(&self, indices: &[usize]) -> DataMatrix {
        let mut values = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        DataMatrix {
            rows: indices.len(),
            cols: self.cols,
            values,
        }
    }

    /// Applies `x -> A x + b` to every point.
    pub fn affine(&self, a: &DMatrix<f64>, b: &[f64]) -> Result<DataMatrix> {
        if a.ncols() != self.cols || b.len() != a.nrows() {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                actual: a.ncols(),
            });
        }
        let out_d = a.nrows();
        let mut values = Vec::with_capacity(self.rows * out_d);
        for row in self.rows() {
            for (i, bi) in b.iter().enumerate() {
                let mut acc = *bi;
                for (j, x) in row.iter().enumerate() {
                    acc += a[(i, j)] * x;
                }
                values.push(acc);
            }
        }
        DataMatrix::new(self.rows, out_d, values)
    }
}

/// Normalization of the sample covariance.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceDivisor {
    /// Divide by `n`.
    #[default]
    Population,
    /// Divide by `n - 1`. A single point gets a zero covariance.
    Unbiased,
}

impl CovarianceDivisor {
    fn denominator(self, n: usize) -> f64 {
        match self {
            CovarianceDivisor::Population => n as f64,
            CovarianceDivisor::Unbiased if n > 1 => (n - 1) as f64,
            CovarianceDivisor::Unbiased => 1.0,
        }
    }
}

/// Mean and covariance of a point set.
///
/// `count` is the sample size; it is 0 for moments of an analytic density.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub count: usize,
}

impl Moments {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Square root of a covariance determinant.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PseudoVolume(f64);

impl PseudoVolume {
    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0.0
    }
}

/// Sample mean and covariance with divisor `n`.
pub fn sample_moments(data: &DataMatrix) -> Result<Moments> {
    let all: Vec<usize> = (0..data.n()).collect();
    moments_of(data, &all, CovarianceDivisor::Population)
}

/// Moments of the rows `indices` of `data`.
pub fn moments_of(
    data: &DataMatrix,
    indices: &[usize],
    divisor: CovarianceDivisor,
) -> Result<Moments> {
    if indices.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let d = data.d();
    let n = indices.len();
    let mut mean = vec![0.0; d];
    for &i in indices {
        for (m, x) in mean.iter_mut().zip(data.row(i)) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut cov = DMatrix::<f64>::zeros(d, d);
    let mut centered = vec![0.0; d];
    for &i in indices {
        for ((c, x), m) in centered.iter_mut().zip(data.row(i)).zip(&mean) {
            *c = x - m;
        }
        for a in 0..d {
            for b in 0..=a {
                cov[(a, b)] += centered[a] * centered[b];
            }
        }
    }
    let denom = divisor.denominator(n);
    for a in 0..d {
        for b in 0..=a {
            let v = cov[(a, b)] / denom;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    Ok(Moments {
        mean: DVector::from_vec(mean),
        covariance: cov,
        count: n,
    })
}

/// Determinant of a symmetric positive semidefinite matrix by an LDLᵀ
/// factorization with diagonal pivoting.
///
/// Pivots in `[-1e-8·trace, 0]` are clamped to zero and give a zero
/// determinant; anything more negative is rejected.
pub fn psd_determinant(m: &DMatrix<f64>) -> Result<f64> {
    let d = m.nrows();
    if m.ncols() != d {
        return Err(invalid("covariance must be square"));
    }
    if d == 0 {
        return Ok(1.0);
    }
    let tol = 1e-8 * m.trace().abs();
    let mut a = m.clone();
    let mut det = 1.0;
    for k in 0..d {
        let p = (k..d)
            .max_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]))
            .unwrap_or(k);
        if p != k {
            a.swap_rows(k, p);
            a.swap_columns(k, p);
        }
        let pivot = a[(k, k)];
        if pivot < -tol {
            return Err(Error::NotPsd);
        }
        if pivot <= 0.0 {
            // Remaining block must be zero within tolerance for a PSD input.
            for i in k..d {
                for j in k..d {
                    if a[(i, j)].abs() > tol && (i != j || a[(i, j)] < 0.0) {
                        return Err(Error::NotPsd);
                    }
                }
            }
            return Ok(0.0);
        }
        det *= pivot;
        for i in k + 1..d {
            let lik = a[(i, k)] / pivot;
            for j in k + 1..=i {
                let v = a[(i, j)] - lik * a[(k, j)];
                a[(i, j)] = v;
                a[(j, i)] = v;
            }
        }
    }
    Ok(det)
}

/// `sqrt(det Σ)`, zero for singular covariances.
pub fn pseudo_volume(m: &Moments) -> Result<PseudoVolume> {
    let det = psd_determinant(&m.covariance)?;
    Ok(PseudoVolume(det.max(0.0).sqrt()))
}

/// Smallest pseudo-volume any density bounded by `max_density` can have in
/// `d` dimensions: `Γ(d/2+1) / (M (π(d+2))^{d/2})`. Attained only by
/// elliptical uniform densities.
pub fn min_pseudo_volume_bound(max_density: f64, d: usize) -> Result<f64> {
    if !(max_density > 0.0) || !max_density.is_finite() {
        return Err(invalid(format!(
            "max density must be positive and finite, got {max_density}"
        )));
    }
    if d == 0 {
        return Err(invalid("dimension must be at least 1"));
    }
    let half_d = d as f64 / 2.0;
    let gamma = libm::tgamma(half_d + 1.0);
    Ok(gamma / (max_density * (std::f64::consts::PI * (d as f64 + 2.0)).powf(half_d)))
}

/// Moments of the uniform density on the `d`-ball of the given radius,
/// centred at the origin: covariance `r²/(d+2)·I`.
pub fn spherical_uniform_covariance(radius: f64, d: usize) -> Result<Moments> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(invalid(format!(
            "radius must be positive and finite, got {radius}"
        )));
    }
    if d == 0 {
        return Err(invalid("dimension must be at least 1"));
    }
    let var = radius * radius / (d as f64 + 2.0);
    Ok(Moments {
        mean: DVector::zeros(d),
        covariance: DMatrix::identity(d, d) * var,
        count: 0,
    })
}

/// Volume of the unit `d`-ball.
pub fn unit_ball_volume(d: usize) -> f64 {
    let half_d = d as f64 / 2.0;
    std::f64::consts::PI.powf(half_d) / libm::tgamma(half_d + 1.0)
}
