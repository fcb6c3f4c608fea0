//! Shared deterministic kernels: grids, banded solves, symmetric tridiagonal
//! eigenpairs, bracketed root finding and weighted quadrature.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum NumericsError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("requested {requested} eigenpairs from a matrix of dimension {dim}")]
    TooManyEigenpairs { requested: usize, dim: usize },
    #[error("eigensolver did not converge for eigenvalue {index} (residual {residual:e})")]
    EigenConvergence { index: usize, residual: f64 },
    #[error("no sign change on [{lo}, {hi}]: f(lo) = {f_lo:e}, f(hi) = {f_hi:e}")]
    NoSignChange {
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
    },
    #[error("non-finite function value at {0}")]
    NonFinite(f64),
    #[error("banded system is numerically singular (pivot ratio {ratio:e})")]
    Singular { ratio: f64 },
}

/// Uniform grid on `[a, b]` with `n_points` nodes, both endpoints included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UniformGrid1D {
    n_points: usize,
    a: f64,
    b: f64,
}

impl UniformGrid1D {
    pub fn new(n_points: usize, a: f64, b: f64) -> Result<Self, NumericsError> {
        if n_points < 2 {
            return Err(NumericsError::InvalidGrid(format!(
                "need at least two nodes, got {n_points}"
            )));
        }
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(NumericsError::InvalidGrid(format!(
                "endpoints must satisfy a < b, got [{a}, {b}]"
            )));
        }
        Ok(Self { n_points, a, b })
    }

    /// Grid on the unit radial interval `[0, 1]`.
    pub fn unit(n_points: usize) -> Result<Self, NumericsError> {
        Self::new(n_points, 0.0, 1.0)
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn endpoints(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    pub fn spacing(&self) -> f64 {
        (self.b - self.a) / (self.n_points - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.n_points {
            self.b
        } else {
            self.a + i as f64 * self.spacing()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.node(i)).collect()
    }

    /// The grid with every interval halved (`2n - 1` nodes).
    pub fn refined(&self) -> Self {
        Self {
            n_points: 2 * self.n_points - 1,
            ..*self
        }
    }

    /// The grid keeping every second node; requires an odd node count.
    pub fn coarsened(&self) -> Option<Self> {
        if self.n_points % 2 == 1 && self.n_points >= 5 {
            Some(Self {
                n_points: self.n_points.div_ceil(2),
                ..*self
            })
        } else {
            None
        }
    }
}

/// Dimension of the ball together with the area of its boundary sphere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BallGeometry {
    pub n: usize,
    pub omega_n: f64,
}

impl BallGeometry {
    pub fn new(n: usize) -> Result<Self, NumericsError> {
        if n == 0 {
            return Err(NumericsError::InvalidGrid(
                "dimension must be at least 1".into(),
            ));
        }
        Ok(Self {
            n,
            omega_n: sphere_area(n),
        })
    }

    /// `r^(n-1)`, with `0^0 = 1`.
    pub fn radial_weight(&self, r: f64) -> f64 {
        r.powi(self.n as i32 - 1)
    }
}

/// Area of the unit sphere S^{n-1}: `2 pi^{n/2} / Gamma(n/2)`.
fn sphere_area(n: usize) -> f64 {
    // omega_{n+2} = 2 pi omega_n / n
    let (mut m, mut omega) = if n % 2 == 1 {
        (1, 2.0)
    } else {
        (2, 2.0 * std::f64::consts::PI)
    };
    while m < n {
        omega *= 2.0 * std::f64::consts::PI / m as f64;
        m += 2;
    }
    omega
}

/// Symmetric tridiagonal matrix stored by its two diagonals.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiag {
    diagonal: Vec<f64>,
    off_diagonal: Vec<f64>,
}

impl SymTridiag {
    pub fn new(diagonal: Vec<f64>, off_diagonal: Vec<f64>) -> Result<Self, NumericsError> {
        if diagonal.is_empty() {
            return Err(NumericsError::InvalidGrid("empty matrix".into()));
        }
        if off_diagonal.len() + 1 != diagonal.len() {
            return Err(NumericsError::LengthMismatch {
                expected: diagonal.len() - 1,
                got: off_diagonal.len(),
            });
        }
        Ok(Self {
            diagonal,
            off_diagonal,
        })
    }

    pub fn dim(&self) -> usize {
        self.diagonal.len()
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diagonal
    }

    pub fn off_diagonal(&self) -> &[f64] {
        &self.off_diagonal
    }

    pub fn trace(&self) -> f64 {
        self.diagonal.iter().sum()
    }

    /// Infinity norm (max absolute row sum).
    pub fn norm_inf(&self) -> f64 {
        let n = self.dim();
        (0..n)
            .map(|i| {
                let left = if i > 0 {
                    self.off_diagonal[i - 1].abs()
                } else {
                    0.0
                };
                let right = if i + 1 < n {
                    self.off_diagonal[i].abs()
                } else {
                    0.0
                };
                self.diagonal[i].abs() + left + right
            })
            .fold(0.0, f64::max)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n)
            .map(|i| {
                let mut y = self.diagonal[i] * x[i];
                if i > 0 {
                    y += self.off_diagonal[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    y += self.off_diagonal[i] * x[i + 1];
                }
                y
            })
            .collect()
    }

    /// Number of eigenvalues strictly below `x` (Sturm sequence count).
    pub fn count_below(&self, x: f64) -> usize {
        let n = self.dim();
        let guard = f64::MIN_POSITIVE.sqrt() * (1.0 + self.norm_inf());
        let mut count = 0;
        let mut q = self.diagonal[0] - x;
        for i in 0..n {
            if i > 0 {
                let e = self.off_diagonal[i - 1];
                q = (self.diagonal[i] - x) - e * e / q;
            }
            if q.abs() < guard {
                q = -guard;
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    fn gershgorin(&self) -> (f64, f64) {
        let n = self.dim();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let left = if i > 0 {
                self.off_diagonal[i - 1].abs()
            } else {
                0.0
            };
            let right = if i + 1 < n {
                self.off_diagonal[i].abs()
            } else {
                0.0
            };
            lo = lo.min(self.diagonal[i] - left - right);
            hi = hi.max(self.diagonal[i] + left + right);
        }
        (lo, hi)
    }
}

/// One eigenpair of a symmetric tridiagonal matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub value: f64,
    /// Euclidean unit vector.
    pub vector: Vec<f64>,
}

/// The `k` smallest eigenpairs, ascending.
///
/// Eigenvalues are isolated by Sturm-sequence bisection to full precision and
/// the vectors are obtained by inverse iteration with a banded LU of the
/// shifted matrix. Vectors whose eigenvalues form a cluster are
/// re-orthogonalized against earlier members of the cluster.
pub fn sym_tridiag_eigs(m: &SymTridiag, k: usize) -> Result<Vec<EigenPair>, NumericsError> {
    let n = m.dim();
    if k > n {
        return Err(NumericsError::TooManyEigenpairs {
            requested: k,
            dim: n,
        });
    }
    let norm = m.norm_inf();
    if norm == 0.0 {
        return Ok((0..k)
            .map(|i| {
                let mut vector = vec![0.0; n];
                vector[i] = 1.0;
                EigenPair { value: 0.0, vector }
            })
            .collect());
    }
    let (glo, ghi) = m.gershgorin();
    let pad = 1e-12 * (1.0 + norm);
    let mut out: Vec<EigenPair> = Vec::with_capacity(k);
    for index in 0..k {
        let value = bisect_eigenvalue(m, index, glo - pad, ghi + pad);
        let vector = inverse_iteration(m, value, norm, &out)?;
        let residual = residual_norm(m, value, &vector);
        if residual > 1e-10 * norm.max(f64::MIN_POSITIVE) && residual > 1e-300 {
            return Err(NumericsError::EigenConvergence { index, residual });
        }
        out.push(EigenPair { value, vector });
    }
    Ok(out)
}

fn bisect_eigenvalue(m: &SymTridiag, index: usize, mut lo: f64, mut hi: f64) -> f64 {
    // Invariant: count_below(lo) <= index < count_below(hi).
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if m.count_below(mid) > index {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

fn residual_norm(m: &SymTridiag, value: f64, v: &[f64]) -> f64 {
    m.mul_vec(v)
        .iter()
        .zip(v)
        .map(|(mv, x)| (mv - value * x).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn inverse_iteration(
    m: &SymTridiag,
    value: f64,
    norm: f64,
    previous: &[EigenPair],
) -> Result<Vec<f64>, NumericsError> {
    let n = m.dim();
    if n == 1 {
        return Ok(vec![1.0]);
    }
    let scale = norm.max(f64::MIN_POSITIVE);
    let cluster_tol = 1e-8 * scale;
    let cluster: Vec<&EigenPair> = previous
        .iter()
        .filter(|p| (p.value - value).abs() <= cluster_tol)
        .collect();
    // An exactly singular shift (possible when the matrix decouples) gives an
    // infinite solve; retry with a slightly larger offset.
    let mut x = Vec::new();
    for offset in [1.0, 1e3, 1e6] {
        if let Some(v) = inverse_iterate(
            m,
            value,
            value + offset * f64::EPSILON * scale,
            scale,
            &cluster,
        ) {
            x = v;
            break;
        }
    }
    if x.is_empty() {
        return Err(NumericsError::EigenConvergence {
            index: previous.len(),
            residual: f64::NAN,
        });
    }
    // Fix the sign: first significant component positive.
    if let Some(first) = x.iter().find(|v| v.abs() > 1e-12) {
        if *first < 0.0 {
            x.iter_mut().for_each(|v| *v = -*v);
        }
    }
    Ok(x)
}

fn inverse_iterate(
    m: &SymTridiag,
    value: f64,
    shift: f64,
    scale: f64,
    cluster: &[&EigenPair],
) -> Option<Vec<f64>> {
    let n = m.dim();
    let mut band = BandMatrix::zeros(n, 1, 1);
    for i in 0..n {
        band.set(i, i, m.diagonal[i] - shift);
        if i + 1 < n {
            band.set(i, i + 1, m.off_diagonal[i]);
            band.set(i + 1, i, m.off_diagonal[i]);
        }
    }
    let lu = band.factor_unchecked();
    // Deterministic start vector with components in every eigen-direction.
    let mut x: Vec<f64> = (0..n)
        .map(|i| 1.0 + 0.5 * ((i as f64) * 0.618_033_988_75).fract())
        .collect();
    normalize(&mut x);
    for _ in 0..4 {
        let mut y = lu.solve(&x);
        for p in cluster {
            let d = dot(&y, &p.vector);
            for (yi, pi) in y.iter_mut().zip(&p.vector) {
                *yi -= d * pi;
            }
        }
        if !y.iter().all(|v| v.is_finite()) {
            return None;
        }
        normalize(&mut y);
        x = y;
        if residual_norm(m, value, &x) <= 1e-13 * scale {
            break;
        }
    }
    Some(x)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(x: &mut [f64]) {
    let norm = dot(x, x).sqrt();
    if norm > 0.0 {
        x.iter_mut().for_each(|v| *v /= norm);
    }
}

/// General band matrix with `kl` sub- and `ku` super-diagonals.
///
/// Storage is row-major over the band with `kl` extra columns reserved for
/// the fill-in created by partial pivoting.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            width,
            data: vec![0.0; n * width],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn offset(&self, i: usize, j: usize) -> usize {
        // column j sits at position j - i + kl within row i
        i * self.width + (j + self.kl - i)
    }

    pub fn in_band(&self, i: usize, j: usize) -> bool {
        j + self.kl >= i && j <= i + self.ku
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.in_band(i, j) {
            self.data[self.offset(i, j)]
        } else {
            0.0
        }
    }

    /// Panics when `(i, j)` lies outside the declared band.
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        assert!(self.in_band(i, j), "({i}, {j}) outside band");
        let o = self.offset(i, j);
        self.data[o] = value;
    }

    pub fn add(&mut self, i: usize, j: usize, value: f64) {
        assert!(self.in_band(i, j), "({i}, {j}) outside band");
        let o = self.offset(i, j);
        self.data[o] += value;
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku).min(self.n - 1);
                (lo..=hi).map(|j| self.get(i, j) * x[j]).sum()
            })
            .collect()
    }

    fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// LU factorization with partial pivoting; fails when the smallest pivot
    /// falls below `1e-14` of the largest entry.
    pub fn factor(self) -> Result<BandLu, NumericsError> {
        let scale = self.max_abs();
        let lu = self.factor_unchecked();
        let min_pivot = (0..lu.a.n)
            .map(|i| lu.a.data[lu.a.offset(i, i)].abs())
            .fold(f64::INFINITY, f64::min);
        let ratio = if scale > 0.0 { min_pivot / scale } else { 0.0 };
        if !(ratio > 1e-14) {
            return Err(NumericsError::Singular { ratio });
        }
        Ok(lu)
    }

    fn factor_unchecked(mut self) -> BandLu {
        let n = self.n;
        let kl = self.kl;
        // after pivoting, U may have up to kl + ku super-diagonals
        let ku_fill = kl + self.ku;
        let mut piv = vec![0usize; n];
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = self.data[self.offset(k, k)].abs();
            for i in k + 1..=last {
                let v = self.data[self.offset(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            piv[k] = p;
            let col_end = (k + ku_fill).min(n - 1);
            if p != k {
                for j in k..=col_end {
                    let a = self.offset(k, j);
                    let b = self.offset(p, j);
                    self.data.swap(a, b);
                }
            }
            let pivot = self.data[self.offset(k, k)];
            if pivot == 0.0 {
                continue;
            }
            for i in k + 1..=last {
                let oik = self.offset(i, k);
                let factor = self.data[oik] / pivot;
                self.data[oik] = factor;
                if factor != 0.0 {
                    for j in k + 1..=col_end {
                        let okj = self.offset(k, j);
                        let oij = self.offset(i, j);
                        self.data[oij] -= factor * self.data[okj];
                    }
                }
            }
        }
        self.ku = ku_fill;
        BandLu { a: self, piv }
    }
}

/// Factorized band matrix.
#[derive(Debug, Clone)]
pub struct BandLu {
    a: BandMatrix,
    piv: Vec<usize>,
}

impl BandLu {
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.a.n;
        let kl = self.a.kl;
        let mut x = rhs.to_vec();
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                x.swap(k, p);
            }
            let last = (k + kl).min(n - 1);
            let xk = x[k];
            for i in k + 1..=last {
                x[i] -= self.a.data[self.a.offset(i, k)] * xk;
            }
        }
        for k in (0..n).rev() {
            let end = (k + self.a.ku).min(n - 1);
            let mut s = x[k];
            for j in k + 1..=end {
                s -= self.a.data[self.a.offset(k, j)] * x[j];
            }
            x[k] = s / self.a.data[self.a.offset(k, k)];
        }
        x
    }
}

/// Root of `fcn` on a sign-changing bracket.
///
/// Bisection narrows the bracket to width `1e-8` (or `tol` if larger); a
/// safeguarded secant iteration then polishes until the bracket is no wider
/// than `tol` or the function vanishes exactly.
pub fn find_root<F>(fcn: F, bracket: (f64, f64), tol: f64) -> Result<f64, NumericsError>
where
    F: Fn(f64) -> f64,
{
    let (mut a, mut b) = if bracket.0 <= bracket.1 {
        bracket
    } else {
        (bracket.1, bracket.0)
    };
    let mut fa = fcn(a);
    let mut fb = fcn(b);
    if !fa.is_finite() {
        return Err(NumericsError::NonFinite(a));
    }
    if !fb.is_finite() {
        return Err(NumericsError::NonFinite(b));
    }
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(NumericsError::NoSignChange {
            lo: a,
            hi: b,
            f_lo: fa,
            f_hi: fb,
        });
    }
    let tol = tol.max(0.0);
    let coarse = tol.max(1e-8);
    while b - a > coarse {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let fm = fcn(m);
        if !fm.is_finite() {
            return Err(NumericsError::NonFinite(m));
        }
        if fm == 0.0 {
            return Ok(m);
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
            fb = fm;
        }
    }
    let floor = 4.0 * f64::EPSILON * a.abs().max(b.abs());
    for _ in 0..100 {
        if b - a <= tol.max(floor) {
            break;
        }
        let mut x = b - fb * (b - a) / (fb - fa);
        // keep secant iterates strictly inside the bracket
        let guard = 0.25 * tol.max(floor);
        if !(x > a + guard && x < b - guard) {
            x = 0.5 * (a + b);
        }
        let fx = fcn(x);
        if !fx.is_finite() {
            return Err(NumericsError::NonFinite(x));
        }
        if fx == 0.0 {
            return Ok(x);
        }
        if fx.signum() == fa.signum() {
            a = x;
            fa = fx;
        } else {
            b = x;
            fb = fx;
        }
        // probe just past the secant point to collapse the far endpoint
        let probe = if a == x {
            x + guard * 2.0
        } else {
            x - guard * 2.0
        };
        if probe > a && probe < b {
            let fp = fcn(probe);
            if !fp.is_finite() {
                return Err(NumericsError::NonFinite(probe));
            }
            if fp == 0.0 {
                return Ok(probe);
            }
            if fp.signum() == fa.signum() {
                a = probe;
                fa = fp;
            } else {
                b = probe;
                fb = fp;
            }
        }
    }
    Ok(if fa.abs() <= fb.abs() { a } else { b })
}

/// `integral(values * weights)` over the grid.
///
/// Composite Simpson for odd node counts; for even counts the last three
/// intervals use the Simpson 3/8 rule.
pub fn integrate_weighted(
    values: &[f64],
    weights: &[f64],
    grid: &UniformGrid1D,
) -> Result<f64, NumericsError> {
    let n = grid.n_points();
    if values.len() != n {
        return Err(NumericsError::LengthMismatch {
            expected: n,
            got: values.len(),
        });
    }
    if weights.len() != n {
        return Err(NumericsError::LengthMismatch {
            expected: n,
            got: weights.len(),
        });
    }
    let y: Vec<f64> = values.iter().zip(weights).map(|(v, w)| v * w).collect();
    Ok(simpson(&y, grid.spacing()))
}

/// Composite Simpson on equally spaced samples.
pub fn simpson(y: &[f64], h: f64) -> f64 {
    let n = y.len();
    match n {
        0 | 1 => 0.0,
        2 => 0.5 * h * (y[0] + y[1]),
        3 => h / 3.0 * (y[0] + 4.0 * y[1] + y[2]),
        _ if n % 2 == 1 => {
            let mut s = y[0] + y[n - 1];
            for (i, v) in y.iter().enumerate().take(n - 1).skip(1) {
                s += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
            }
            s * h / 3.0
        }
        _ => {
            let head = simpson(&y[..n - 3], h);
            let t = &y[n - 4..];
            head + 3.0 * h / 8.0 * (t[0] + 3.0 * t[1] + 3.0 * t[2] + t[3])
        }
    }
}

/// Simpson on spacings `h` and `2h` combined to cancel the `h⁴` term; plain
/// Simpson when the interval count is not a multiple of four.
pub fn simpson_extrapolated(y: &[f64], h: f64) -> f64 {
    let n = y.len();
    if n < 9 || !(n - 1).is_multiple_of(4) {
        return simpson(y, h);
    }
    let fine = simpson(y, h);
    let coarse: Vec<f64> = y.iter().step_by(2).copied().collect();
    richardson(simpson(&coarse, 2.0 * h), fine, 4)
}

/// Richardson extrapolation for an `h^order` leading error, given values on
/// spacing `h` and `h/2`.
pub fn richardson(coarse: f64, fine: f64, order: i32) -> f64 {
    let factor = 2f64.powi(order);
    (factor * fine - coarse) / (factor - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn laplacian_1d(n: usize) -> SymTridiag {
        SymTridiag::new(vec![2.0; n], vec![-1.0; n - 1]).unwrap()
    }

    /// Characteristic polynomial of the (2, -1) matrix by the three-term
    /// recurrence; independent of the Sturm count used by the solver.
    fn char_poly(n: usize, x: f64) -> f64 {
        let (mut p0, mut p1) = (1.0, 2.0 - x);
        for _ in 1..n {
            let p2 = (2.0 - x) * p1 - p0;
            p0 = p1;
            p1 = p2;
        }
        p1
    }

    #[test]
    fn laplacian_spectrum_closed_form() {
        let n = 40;
        let m = laplacian_1d(n);
        let pairs = sym_tridiag_eigs(&m, n).unwrap();
        for (j, p) in pairs.iter().enumerate() {
            let exact = 2.0 - 2.0 * ((j + 1) as f64 * PI / (n as f64 + 1.0)).cos();
            assert!(
                (p.value - exact).abs() < 1e-12,
                "{j}: {} vs {exact}",
                p.value
            );
            // the characteristic polynomial changes sign across the root
            let d = 1e-9;
            assert!(char_poly(n, exact - d) * char_poly(n, exact + d) <= 0.0);
            let r = residual_norm(&m, p.value, &p.vector);
            assert!(r <= 1e-10 * m.norm_inf());
            assert!((dot(&p.vector, &p.vector) - 1.0).abs() < 1e-12);
        }
        for i in 0..n {
            for j in 0..i {
                assert!(dot(&pairs[i].vector, &pairs[j].vector).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn one_by_one_and_zero_matrix() {
        let m = SymTridiag::new(vec![5.0], vec![]).unwrap();
        let p = sym_tridiag_eigs(&m, 1).unwrap();
        assert_eq!(p[0].value, 5.0);
        let z = SymTridiag::new(vec![0.0; 4], vec![0.0; 3]).unwrap();
        let p = sym_tridiag_eigs(&z, 4).unwrap();
        for pair in &p {
            assert_eq!(pair.value, 0.0);
            assert!((dot(&pair.vector, &pair.vector) - 1.0).abs() < 1e-12);
        }
        for i in 0..4 {
            for j in 0..i {
                assert!(dot(&p[i].vector, &p[j].vector).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn too_many_eigenpairs_rejected() {
        let m = laplacian_1d(3);
        assert!(matches!(
            sym_tridiag_eigs(&m, 4),
            Err(NumericsError::TooManyEigenpairs { .. })
        ));
    }

    #[test]
    fn root_examples() {
        // bisection oracle to 1e-12 for mu tanh mu = 1
        let g = |m: f64| m * m.tanh() - 1.0;
        let (mut a, mut b) = (0.5_f64, 2.0_f64);
        while b - a > 1e-13 {
            let m = 0.5 * (a + b);
            if g(m) < 0.0 {
                a = m
            } else {
                b = m
            }
        }
        let oracle = 0.5 * (a + b);
        let r = find_root(g, (0.5, 2.0), 1e-12).unwrap();
        assert!((r - oracle).abs() < 1e-11);
        assert!((r - 1.199679).abs() < 1e-6);

        let r = find_root(|x| x, (-1.0, 1.0), 1e-12).unwrap();
        assert!(r.abs() < 1e-12);
        let r = find_root(|x| x * x - 4.0, (0.0, 3.0), 1e-12).unwrap();
        assert!((r - 2.0).abs() < 1e-11);
    }

    #[test]
    fn root_without_sign_change() {
        let e = find_root(|x| x * x + 1.0, (-1.0, 1.0), 1e-10).unwrap_err();
        assert!(matches!(e, NumericsError::NoSignChange { .. }));
    }

    #[test]
    fn root_is_deterministic() {
        let g = |x: f64| (3.0 * x).sin() - 0.2;
        let a = find_root(g, (0.0, 0.5), 1e-13).unwrap();
        let b = find_root(g, (0.0, 0.5), 1e-13).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn quadrature_examples() {
        let grid = UniformGrid1D::unit(201).unwrap();
        let r = grid.nodes();
        let ones = vec![1.0; r.len()];
        let r2: Vec<f64> = r.iter().map(|x| x * x).collect();
        assert!((integrate_weighted(&ones, &r2, &grid).unwrap() - 1.0 / 3.0).abs() < 1e-10);
        assert!((integrate_weighted(&r2, &ones, &grid).unwrap() - 1.0 / 3.0).abs() < 1e-10);
        let s: Vec<f64> = r.iter().map(|x| (PI * x).sin()).collect();
        assert!((integrate_weighted(&s, &ones, &grid).unwrap() - 2.0 / PI).abs() < 1e-8);
        assert!((simpson_extrapolated(&s, grid.spacing()) - 2.0 / PI).abs() < 1e-13);
        let even = UniformGrid1D::unit(200).unwrap();
        let r = even.nodes();
        let s: Vec<f64> = r.iter().map(|x| (PI * x).sin()).collect();
        let ones = vec![1.0; r.len()];
        assert!((integrate_weighted(&s, &ones, &even).unwrap() - 2.0 / PI).abs() < 1e-8);
        assert!(matches!(
            integrate_weighted(&s[1..], &ones, &even),
            Err(NumericsError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn sphere_areas() {
        assert_eq!(BallGeometry::new(1).unwrap().omega_n, 2.0);
        assert!((BallGeometry::new(2).unwrap().omega_n - 2.0 * PI).abs() < 1e-14);
        assert!((BallGeometry::new(3).unwrap().omega_n - 4.0 * PI).abs() < 1e-13);
        assert!((BallGeometry::new(4).unwrap().omega_n - 2.0 * PI * PI).abs() < 1e-12);
    }

    #[test]
    fn band_solver_matches_dense() {
        let n = 30;
        let (kl, ku) = (3, 2);
        let mut m = BandMatrix::zeros(n, kl, ku);
        for i in 0..n {
            for j in i.saturating_sub(kl)..=(i + ku).min(n - 1) {
                let v = ((i * 7 + j * 13) % 11) as f64 - 5.0 + if i == j { 0.3 } else { 0.0 };
                m.set(i, j, v);
            }
        }
        let x: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let b = m.mul_vec(&x);
        let lu = m.factor().unwrap();
        let y = lu.solve(&b);
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn band_solver_reports_singularity() {
        let mut m = BandMatrix::zeros(3, 1, 1);
        m.set(0, 0, 1.0);
        m.set(0, 1, 1.0);
        m.set(1, 0, 1.0);
        m.set(1, 1, 1.0);
        m.set(2, 2, 1.0);
        assert!(matches!(m.factor(), Err(NumericsError::Singular { .. })));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn eigenvalue_sum_is_trace(
                diag in proptest::collection::vec(-5.0f64..5.0, 2..24),
                seed in proptest::collection::vec(-2.0f64..2.0, 23),
            ) {
                let n = diag.len();
                let off = seed[..n - 1].to_vec();
                let m = SymTridiag::new(diag, off).unwrap();
                let pairs = sym_tridiag_eigs(&m, n).unwrap();
                let sum: f64 = pairs.iter().map(|p| p.value).sum();
                prop_assert!((sum - m.trace()).abs() < 1e-9);
                for w in pairs.windows(2) {
                    prop_assert!(w[0].value <= w[1].value);
                }
            }

            #[test]
            fn quadrature_is_linear(
                a in -3.0f64..3.0,
                b in -3.0f64..3.0,
                n in 3usize..60,
            ) {
                let grid = UniformGrid1D::unit(n).unwrap();
                let x = grid.nodes();
                let u: Vec<f64> = x.iter().map(|t| t.exp()).collect();
                let v: Vec<f64> = x.iter().map(|t| t.cos()).collect();
                let w: Vec<f64> = x.iter().map(|t| 1.0 + t * t).collect();
                let comb: Vec<f64> = u.iter().zip(&v).map(|(p, q)| a * p + b * q).collect();
                let lhs = integrate_weighted(&comb, &w, &grid).unwrap();
                let rhs = a * integrate_weighted(&u, &w, &grid).unwrap()
                    + b * integrate_weighted(&v, &w, &grid).unwrap();
                prop_assert!((lhs - rhs).abs() < 1e-12 * (1.0 + lhs.abs()));
            }
        }
    }
}
