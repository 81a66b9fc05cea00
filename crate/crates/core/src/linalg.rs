//! Dense complex linear-algebra helpers shared by the estimators.
//!
//! Least-squares solves go through an SVD (an orthogonal factorization), so
//! the normal equations `AᴴA` are never formed explicitly.

use nalgebra::linalg::ColPivQR;
use nalgebra::{DMatrix, DVector, Dyn};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// One circularly-symmetric complex Gaussian sample with the given variance.
pub fn cscg<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let scale = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * scale, im * scale)
}

/// Matrix of i.i.d. CSCG entries, filled column-major.
pub fn cscg_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, variance: f64) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| cscg(rng, variance))
}

pub fn cscg_vector<R: Rng + ?Sized>(rng: &mut R, len: usize, variance: f64) -> CVector {
    CVector::from_fn(len, |_, _| cscg(rng, variance))
}

/// Rank threshold `max_dim · ε · σ_max`.
fn rank_tolerance(rows: usize, cols: usize, sigma_max: f64) -> f64 {
    rows.max(cols) as f64 * f64::EPSILON * sigma_max
}

/// Numerical rank and 2-norm condition number of `a`.
///
/// The condition number is `σ_max / σ_min` over the `min(rows, cols)`
/// singular values and is infinite when `σ_min` is exactly zero.
pub fn numerical_rank(a: &CMatrix) -> (usize, f64) {
    if a.is_empty() {
        return (0, f64::INFINITY);
    }
    let sv = a.clone().singular_values();
    rank_from_singular_values(a.nrows(), a.ncols(), sv.as_slice())
}

fn rank_from_singular_values(rows: usize, cols: usize, sv: &[f64]) -> (usize, f64) {
    let max = sv.iter().cloned().fold(0.0_f64, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    let tol = rank_tolerance(rows, cols, max);
    let rank = sv.iter().filter(|&&s| s > tol).count();
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    (rank, condition)
}

/// Column-pivoted QR `A P = Q R` of a tall `a`, rejected unless it has full
/// column rank. Returns the factorization, the square `R` and the condition
/// estimate `max |r_ii| / min |r_ii|`.
fn full_rank_qr(a: &CMatrix) -> Result<(ColPivQR<Complex64, Dyn, Dyn>, CMatrix, f64)> {
    let (rows, cols) = a.shape();
    if cols == 0 || rows < cols {
        return Err(Error::RankDeficient {
            rank: rows.min(cols),
            required: cols,
            condition: if cols == 0 { f64::NAN } else { f64::INFINITY },
        });
    }
    let qr = a.clone().col_piv_qr();
    let r = qr.r();
    let diag: Vec<f64> = (0..cols).map(|i| r[(i, i)].norm()).collect();
    let max = diag.iter().cloned().fold(0.0_f64, f64::max);
    let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    let tol = rank_tolerance(rows, cols, max);
    let rank = diag.iter().filter(|&&d| d > tol).count();
    if rank < cols {
        // the pivoted diagonal only brackets the spectrum; report the true condition
        let (_, condition) = numerical_rank(a);
        return Err(Error::RankDeficient {
            rank,
            required: cols,
            condition,
        });
    }
    Ok((qr, r, max / min))
}

/// `P R⁻¹ Qᴴ` for a tall `a` of full column rank.
fn left_inverse(a: &CMatrix) -> Result<(CMatrix, f64)> {
    let (qr, r, condition) = full_rank_qr(a)?;
    let mut x = qr.q().adjoint();
    if !r.solve_upper_triangular_mut(&mut x) {
        return Err(Error::RankDeficient {
            rank: a.ncols() - 1,
            required: a.ncols(),
            condition: f64::INFINITY,
        });
    }
    qr.p().inv_permute_rows(&mut x);
    Ok((x, condition))
}

/// Least-squares solution of `A x ≈ b` for a tall `a` of full column rank,
/// without forming `A⁺`. Cheaper than [`Pseudoinverse`] when `a` is used
/// for a single right-hand side.
pub fn solve_least_squares(a: &CMatrix, b: &CVector) -> Result<CVector> {
    if b.len() != a.nrows() {
        return Err(Error::Dimension(format!(
            "right-hand side has length {}, system has {} rows",
            b.len(),
            a.nrows()
        )));
    }
    let (qr, r, _) = full_rank_qr(a)?;
    let mut qb = b.clone();
    qr.q_tr_mul(&mut qb);
    let mut x = qb.rows(0, a.ncols()).clone_owned();
    if !r.solve_upper_triangular_mut(&mut x) {
        return Err(Error::RankDeficient {
            rank: a.ncols() - 1,
            required: a.ncols(),
            condition: f64::INFINITY,
        });
    }
    qr.p().inv_permute_rows(&mut x);
    Ok(x)
}

/// Moore-Penrose pseudoinverse of a matrix with full rank along the solved
/// dimension.
///
/// Built once per training design and reused for every received block. The
/// factorization is a column-pivoted Householder QR of the tall orientation,
/// `A P = Q R`, giving `A⁺ = P R⁻¹ Qᴴ`; this is backward stable, unlike the
/// complex SVD in nalgebra, which loses up to seven digits on some of the
/// structured Kronecker systems built here.
#[derive(Debug, Clone)]
pub struct Pseudoinverse {
    pinv: CMatrix,
    rows: usize,
    cols: usize,
    condition: f64,
}

impl Pseudoinverse {
    /// Left inverse of a tall (or square) matrix with full column rank.
    pub fn full_column_rank(a: &CMatrix) -> Result<Self> {
        if a.nrows() < a.ncols() {
            return Err(Self::too_few(a, a.ncols()));
        }
        let (pinv, condition) = left_inverse(a)?;
        Ok(Self {
            pinv,
            rows: a.nrows(),
            cols: a.ncols(),
            condition,
        })
    }

    /// Right inverse of a wide (or square) matrix with full row rank.
    pub fn full_row_rank(a: &CMatrix) -> Result<Self> {
        if a.ncols() < a.nrows() {
            return Err(Self::too_few(a, a.nrows()));
        }
        let (pinv_h, condition) = left_inverse(&a.adjoint())?;
        Ok(Self {
            pinv: pinv_h.adjoint(),
            rows: a.nrows(),
            cols: a.ncols(),
            condition,
        })
    }

    fn too_few(a: &CMatrix, required: usize) -> Error {
        Error::RankDeficient {
            rank: a.nrows().min(a.ncols()),
            required,
            condition: f64::INFINITY,
        }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.pinv
    }

    /// Condition estimate from the QR diagonal; within a modest factor of
    /// the 2-norm condition number for the matrices used here.
    pub fn condition(&self) -> f64 {
        self.condition
    }

    /// `A⁺ b`: least-squares solution of `A x ≈ b` (column-wise for matrix `b`).
    pub fn solve_left(&self, b: &CMatrix) -> Result<CMatrix> {
        if b.nrows() != self.rows {
            return Err(Error::Dimension(format!(
                "right-hand side has {} rows, system has {}",
                b.nrows(),
                self.rows
            )));
        }
        Ok(&self.pinv * b)
    }

    pub fn solve_left_vec(&self, b: &CVector) -> Result<CVector> {
        if b.len() != self.rows {
            return Err(Error::Dimension(format!(
                "right-hand side has length {}, system has {} rows",
                b.len(),
                self.rows
            )));
        }
        Ok(&self.pinv * b)
    }

    /// `Y A⁺`: least-squares solution of `X A ≈ Y` (row-wise).
    pub fn solve_right(&self, y: &CMatrix) -> Result<CMatrix> {
        if y.ncols() != self.cols {
            return Err(Error::Dimension(format!(
                "observation has {} columns, training matrix has {}",
                y.ncols(),
                self.cols
            )));
        }
        Ok(y * &self.pinv)
    }
}

/// Principal square root with the angle taken in `(-π, π]`.
///
/// The result's angle lies in `(-π/2, π/2]`, so a negative real input maps
/// to `+j·√|z|` regardless of the sign of its zero imaginary part.
pub fn principal_sqrt(z: Complex64) -> Complex64 {
    let mut angle = z.im.atan2(z.re);
    if angle <= -std::f64::consts::PI {
        angle = std::f64::consts::PI;
    }
    Complex64::from_polar(z.norm().sqrt(), angle / 2.0)
}

/// Index of the largest-modulus entry (the first one on ties).
pub fn argmax_modulus<'a>(values: impl IntoIterator<Item = &'a Complex64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, z) in values.into_iter().enumerate() {
        let r = z.norm();
        if best.is_none_or(|(_, b)| r > b) {
            best = Some((i, r));
        }
    }
    best.map(|(i, _)| i)
}

/// Squared Frobenius norm.
pub fn frobenius_sq(a: &CMatrix) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum()
}

/// `‖a − b‖_F / ‖b‖_F`.
pub fn relative_error(a: &CMatrix, b: &CMatrix) -> f64 {
    (frobenius_sq(&(a - b)) / frobenius_sq(b)).sqrt()
}

/// `a · diag(d)`: scales column `n` of `a` by `d[n]`.
pub fn scale_columns(a: &CMatrix, d: &CVector) -> CMatrix {
    let mut out = a.clone();
    for (mut col, s) in out.column_iter_mut().zip(d.iter()) {
        col *= *s;
    }
    out
}

/// Neumaier-compensated sum; order-dependent only through rounding of the
/// compensation term.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::default();
        iter.into_iter().for_each(|x| acc.add(x));
        acc
    }
}
