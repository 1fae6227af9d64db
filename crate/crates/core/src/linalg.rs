//! Small dense linear algebra over a generic [`Scalar`], plus a sparse
//! conjugate-gradient solver for large floating-point systems.
//!
//! Matrices here are tiny (boundary size or level-1 vertex count), so the
//! dense routines favor exactness and determinism over speed.

use crate::scalar::Scalar;
use crate::{Error, Result};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<S> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<S>,
}

impl<S: Scalar> Mat<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![S::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = S::one();
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<S>>) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        assert!(rows.iter().all(|row| row.len() == c));
        Mat {
            rows: r,
            cols: c,
            data: rows.into_iter().flatten().collect(),
        }
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<S> {
        (0..self.rows).map(|i| self[(i, j)].clone()).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)].clone();
            }
        }
        t
    }

    pub fn mat_vec(&self, v: &[S]) -> Vec<S> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|i| {
                let mut acc = S::zero();
                for j in 0..self.cols {
                    acc += self[(i, j)].clone() * v[j].clone();
                }
                acc
            })
            .collect()
    }

    pub fn mat_mul(&self, other: &Mat<S>) -> Mat<S> {
        assert_eq!(self.cols, other.rows);
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)].clone();
                if a.is_zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a.clone() * other[(k, j)].clone();
                }
            }
        }
        out
    }

    pub fn scale(&self, s: &S) -> Mat<S> {
        let mut out = self.clone();
        for x in &mut out.data {
            *x *= s.clone();
        }
        out
    }

    pub fn add(&self, other: &Mat<S>) -> Mat<S> {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut out = self.clone();
        for (x, y) in out.data.iter_mut().zip(&other.data) {
            *x += y.clone();
        }
        out
    }

    pub fn sub(&self, other: &Mat<S>) -> Mat<S> {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut out = self.clone();
        for (x, y) in out.data.iter_mut().zip(&other.data) {
            *x -= y.clone();
        }
        out
    }

    pub fn trace(&self) -> S {
        let mut acc = S::zero();
        for i in 0..self.rows.min(self.cols) {
            acc += self[(i, i)].clone();
        }
        acc
    }

    pub fn pow(&self, n: usize) -> Mat<S> {
        assert_eq!(self.rows, self.cols);
        let mut acc = Mat::identity(self.rows);
        let mut base = self.clone();
        let mut k = n;
        while k > 0 {
            if k & 1 == 1 {
                acc = acc.mat_mul(&base);
            }
            base = base.mat_mul(&base);
            k >>= 1;
        }
        acc
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|x| x.mag()).fold(0.0, f64::max)
    }

    /// Solve `A x = b` for each column of `b` by Gaussian elimination with
    /// magnitude pivoting. Exact for rational scalars.
    pub fn solve_multi(&self, rhs: &Mat<S>) -> Result<Mat<S>> {
        assert_eq!(self.rows, self.cols);
        assert_eq!(self.rows, rhs.rows);
        let n = self.rows;
        let k = rhs.cols;
        let mut a = self.clone();
        let mut b = rhs.clone();
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&i, &j| {
                    a[(i, col)]
                        .mag()
                        .partial_cmp(&a[(j, col)].mag())
                        .unwrap_or(std::cmp::Ordering::Equal)
                })
                .unwrap();
            if a[(pivot, col)].is_zero() {
                return Err(Error::SingularSystem(format!(
                    "zero pivot in column {col} of a {n}x{n} system"
                )));
            }
            if pivot != col {
                a.swap_rows(pivot, col);
                b.swap_rows(pivot, col);
            }
            let inv = a[(col, col)].clone().recip();
            for j in col..n {
                a[(col, j)] *= inv.clone();
            }
            for j in 0..k {
                b[(col, j)] *= inv.clone();
            }
            for i in 0..n {
                if i == col || a[(i, col)].is_zero() {
                    continue;
                }
                let f = a[(i, col)].clone();
                for j in col..n {
                    let t = f.clone() * a[(col, j)].clone();
                    a[(i, j)] -= t;
                }
                for j in 0..k {
                    let t = f.clone() * b[(col, j)].clone();
                    b[(i, j)] -= t;
                }
            }
        }
        Ok(b)
    }

    pub fn solve(&self, b: &[S]) -> Result<Vec<S>> {
        let rhs = Mat {
            rows: b.len(),
            cols: 1,
            data: b.to_vec(),
        };
        Ok(self.solve_multi(&rhs)?.data)
    }

    pub fn inverse(&self) -> Result<Mat<S>> {
        self.solve_multi(&Mat::identity(self.rows))
    }

    fn swap_rows(&mut self, i: usize, j: usize) {
        if i == j {
            return;
        }
        for col in 0..self.cols {
            self.data.swap(i * self.cols + col, j * self.cols + col);
        }
    }

    /// Row-reduce in place and return the pivot columns. `tol` is the
    /// relative magnitude below which entries count as zero (ignored in
    /// exact arithmetic).
    pub fn rref(&mut self, tol: f64) -> Vec<usize> {
        let scale = self.max_abs().max(1.0);
        let cutoff = if S::EXACT { 0.0 } else { scale * tol };
        let mut pivots = Vec::new();
        let mut r = 0;
        for col in 0..self.cols {
            if r == self.rows {
                break;
            }
            let pivot = (r..self.rows)
                .max_by(|&i, &j| {
                    self[(i, col)]
                        .mag()
                        .partial_cmp(&self[(j, col)].mag())
                        .unwrap_or(std::cmp::Ordering::Equal)
                })
                .unwrap();
            if self[(pivot, col)].is_zero() || self[(pivot, col)].mag() <= cutoff {
                continue;
            }
            self.swap_rows(pivot, r);
            let inv = self[(r, col)].clone().recip();
            for j in col..self.cols {
                self[(r, j)] *= inv.clone();
            }
            for i in 0..self.rows {
                if i == r || self[(i, col)].is_zero() {
                    continue;
                }
                let f = self[(i, col)].clone();
                for j in col..self.cols {
                    let t = f.clone() * self[(r, j)].clone();
                    self[(i, j)] -= t;
                }
            }
            pivots.push(col);
            r += 1;
        }
        pivots
    }

    /// Basis of the right nullspace, one vector per free column, each with
    /// its free coordinate set to one. Deterministic.
    pub fn nullspace(&self, tol: f64) -> Vec<Vec<S>> {
        let mut a = self.clone();
        let pivots = a.rref(tol);
        let mut basis = Vec::new();
        for free in 0..self.cols {
            if pivots.contains(&free) {
                continue;
            }
            let mut v = vec![S::zero(); self.cols];
            v[free] = S::one();
            for (row, &pc) in pivots.iter().enumerate() {
                v[pc] = -a[(row, free)].clone();
            }
            basis.push(v);
        }
        basis
    }

    /// Coefficients of `det(x I - A)`, lowest degree first, so the result
    /// has length `n + 1` and leading coefficient one.
    pub fn charpoly(&self) -> Vec<S> {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        let mut coeffs = vec![S::zero(); n + 1];
        coeffs[n] = S::one();
        let mut m = self.clone();
        for k in 1..=n {
            let c = -(m.trace() / S::from_i64(k as i64));
            coeffs[n - k] = c.clone();
            if k < n {
                for i in 0..n {
                    m[(i, i)] += c.clone();
                }
                m = self.mat_mul(&m);
            }
        }
        coeffs
    }
}

impl<S> std::ops::Index<(usize, usize)> for Mat<S> {
    type Output = S;
    fn index(&self, (i, j): (usize, usize)) -> &S {
        &self.data[i * self.cols + j]
    }
}

impl<S> std::ops::IndexMut<(usize, usize)> for Mat<S> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut S {
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    assert_eq!(a.len(), b.len());
    let mut acc = S::zero();
    for (x, y) in a.iter().zip(b) {
        acc += x.clone() * y.clone();
    }
    acc
}

pub fn axpy<S: Scalar>(alpha: &S, x: &[S], y: &mut [S]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha.clone() * xi.clone();
    }
}

/// Evaluate a polynomial given coefficients lowest-first.
pub fn poly_eval<S: Scalar>(coeffs: &[S], x: &S) -> S {
    let mut acc = S::zero();
    for c in coeffs.iter().rev() {
        acc = acc * x.clone() + c.clone();
    }
    acc
}

/// Divide by `(x - root)`, returning the quotient (lowest-first) and the
/// remainder (which is the value at the root).
pub fn poly_deflate<S: Scalar>(coeffs: &[S], root: &S) -> (Vec<S>, S) {
    let n = coeffs.len();
    assert!(n >= 2);
    let mut quot = vec![S::zero(); n - 1];
    let mut carry = coeffs[n - 1].clone();
    for k in (0..n - 1).rev() {
        quot[k] = carry.clone();
        carry = coeffs[k].clone() + carry * root.clone();
    }
    (quot, carry)
}

/// Real roots of `x^2 + b x + c` in exact arithmetic; errors when the
/// discriminant is negative or not a perfect square.
pub fn quadratic_roots_exact(b: &crate::Rational, c: &crate::Rational) -> Result<[crate::Rational; 2]> {
    use num_traits::Signed;
    let four = crate::Rational::from_i64(4);
    let disc = b.clone() * b.clone() - four * c.clone();
    if disc.is_negative() {
        return Err(Error::ComplexSpectrum(
            "negative discriminant in exact quadratic".into(),
        ));
    }
    let num = disc.numer().clone();
    let den = disc.denom().clone();
    let sn = num.sqrt();
    let sd = den.sqrt();
    if sn.clone() * sn.clone() != num || sd.clone() * sd.clone() != den {
        return Err(Error::RationalUnsupported(
            "irrational eigenvalue: discriminant is not a perfect square".into(),
        ));
    }
    let root = crate::Rational::new(sn, sd);
    let half = crate::Rational::from_ratio(1, 2);
    let r1 = (-b.clone() + root.clone()) * half.clone();
    let r2 = (-b.clone() - root) * half;
    Ok([r1, r2])
}

/// Real roots of `x^2 + b x + c` in floating point.
pub fn quadratic_roots_f64(b: f64, c: f64) -> Result<[f64; 2]> {
    let disc = b * b - 4.0 * c;
    if disc < -1e-12 * (b * b + c.abs() + 1.0) {
        return Err(Error::ComplexSpectrum(format!(
            "negative discriminant {disc:.3e} in quadratic"
        )));
    }
    let s = disc.max(0.0).sqrt();
    // Stable form: avoid cancellation on the smaller root.
    let q = -0.5 * (b + b.signum() * s);
    if q == 0.0 {
        return Ok([0.0, 0.0]);
    }
    Ok([q, c / q])
}

/// All roots of a monic real polynomial by Durand-Kerner iteration.
/// Returns `(re, im)` pairs, deterministically ordered by decreasing
/// modulus then by real part.
pub fn durand_kerner(coeffs: &[f64]) -> Vec<(f64, f64)> {
    let n = coeffs.len() - 1;
    if n == 0 {
        return Vec::new();
    }
    let cmul = |a: (f64, f64), b: (f64, f64)| (a.0 * b.0 - a.1 * b.1, a.0 * b.1 + a.1 * b.0);
    let csub = |a: (f64, f64), b: (f64, f64)| (a.0 - b.0, a.1 - b.1);
    let cdiv = |a: (f64, f64), b: (f64, f64)| {
        let d = b.0 * b.0 + b.1 * b.1;
        ((a.0 * b.0 + a.1 * b.1) / d, (a.1 * b.0 - a.0 * b.1) / d)
    };
    let peval = |z: (f64, f64)| {
        let mut acc = (0.0, 0.0);
        for c in coeffs.iter().rev() {
            acc = cmul(acc, z);
            acc.0 += c;
        }
        acc
    };
    let seed = (0.4, 0.9);
    let mut zs: Vec<(f64, f64)> = Vec::with_capacity(n);
    let mut cur = (1.0, 0.0);
    for _ in 0..n {
        cur = cmul(cur, seed);
        zs.push(cur);
    }
    for _ in 0..500 {
        let mut delta: f64 = 0.0;
        for i in 0..n {
            let mut denom = (1.0, 0.0);
            for j in 0..n {
                if j != i {
                    denom = cmul(denom, csub(zs[i], zs[j]));
                }
            }
            let step = cdiv(peval(zs[i]), denom);
            zs[i] = csub(zs[i], step);
            delta = delta.max(step.0.hypot(step.1));
        }
        if delta < 1e-14 {
            break;
        }
    }
    zs.sort_by(|a, b| {
        let (ma, mb) = (a.0.hypot(a.1), b.0.hypot(b.1));
        mb.partial_cmp(&ma)
            .unwrap()
            .then(b.0.partial_cmp(&a.0).unwrap())
            .then(a.1.partial_cmp(&b.1).unwrap())
    });
    zs
}

/// Compressed sparse row symmetric matrix for floating-point solves.
#[derive(Debug, Clone)]
pub struct Csr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl Csr {
    /// Build from (row, col, value) triplets; duplicates are summed.
    pub fn from_triplets(n: usize, triplets: &mut Vec<(usize, usize, f64)>) -> Csr {
        triplets.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_counts = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for &(r, c, v) in triplets.iter() {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_counts[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..n {
            row_counts[r + 1] += row_counts[r];
        }
        Csr {
            n,
            row_ptr: row_counts,
            col_idx,
            values,
        }
    }

    pub fn mat_vec(&self, x: &[f64], y: &mut [f64]) {
        for r in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            y[r] = acc;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for r in 0..self.n {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                if self.col_idx[k] == r {
                    d[r] += self.values[k];
                }
            }
        }
        d
    }
}

/// Jacobi-preconditioned conjugate gradients for SPD systems.
/// Deterministic: fixed iteration order, no randomization.
pub fn conjugate_gradient(a: &Csr, b: &[f64], tol: f64, max_iter: usize) -> Result<(Vec<f64>, usize, f64)> {
    let n = a.n;
    let norm_b = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm_b == 0.0 {
        return Ok((vec![0.0; n], 0, 0.0));
    }
    let diag = a.diagonal();
    let minv: Vec<f64> = diag
        .iter()
        .map(|&d| if d.abs() > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&minv).map(|(ri, mi)| ri * mi).collect();
    let mut p = z.clone();
    let mut rz = r.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>();
    let mut ap = vec![0.0; n];
    let target = tol * norm_b;
    for it in 0..max_iter {
        a.mat_vec(&p, &mut ap);
        let pap = p.iter().zip(&ap).map(|(a, b)| a * b).sum::<f64>();
        if pap <= 0.0 {
            return Err(Error::SolverDiverged(format!(
                "non-positive curvature at iteration {it}"
            )));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let res = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if res <= target {
            return Ok((x, it + 1, res / norm_b));
        }
        for i in 0..n {
            z[i] = r[i] * minv[i];
        }
        let rz_new = r.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::SolverDiverged(format!(
        "conjugate gradients: no convergence in {max_iter} iterations"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Rational;

    fn rq(n: i64, d: i64) -> Rational {
        Rational::from_ratio(n, d)
    }

    #[test]
    fn solve_exact_2x2() {
        let a = Mat::from_rows(vec![vec![rq(2, 1), rq(1, 1)], vec![rq(1, 1), rq(3, 1)]]);
        let x = a.solve(&[rq(5, 1), rq(10, 1)]).unwrap();
        assert_eq!(x, vec![rq(1, 1), rq(3, 1)]);
    }

    #[test]
    fn inverse_round_trip() {
        let a = Mat::from_rows(vec![
            vec![rq(2, 5), rq(2, 5), rq(1, 5)],
            vec![rq(0, 1), rq(1, 1), rq(0, 1)],
            vec![rq(1, 5), rq(2, 5), rq(2, 5)],
        ]);
        let inv = a.inverse().unwrap();
        assert_eq!(a.mat_mul(&inv), Mat::identity(3));
    }

    #[test]
    fn charpoly_of_known_matrix() {
        // SG extension matrix: eigenvalues 1, 3/5, 1/5.
        let m = Mat::from_rows(vec![
            vec![rq(1, 1), rq(0, 1), rq(0, 1)],
            vec![rq(2, 5), rq(2, 5), rq(1, 5)],
            vec![rq(2, 5), rq(1, 5), rq(2, 5)],
        ]);
        let p = m.charpoly();
        // (x-1)(x-3/5)(x-1/5) = x^3 - 9/5 x^2 + 23/25 x - 3/25
        assert_eq!(p, vec![rq(-3, 25), rq(23, 25), rq(-9, 5), rq(1, 1)]);
        let (q, rem) = poly_deflate(&p, &rq(1, 1));
        assert!(rem.is_zero());
        let (q2, rem2) = poly_deflate(&q, &rq(3, 5));
        assert!(rem2.is_zero());
        assert_eq!(q2.len(), 2);
        // remaining root -c0/c1
        let root = -(q2[0].clone() / q2[1].clone());
        assert_eq!(root, rq(1, 5));
    }

    #[test]
    fn quadratic_exact_and_float() {
        // x^2 - 8/15 x + 7/225 = (x - 7/15)(x - 1/15)
        let roots = quadratic_roots_exact(&rq(-8, 15), &rq(7, 225)).unwrap();
        assert!(roots.contains(&rq(7, 15)) && roots.contains(&rq(1, 15)));
        assert!(quadratic_roots_exact(&rq(0, 1), &rq(-2, 1)).is_err());
        let fr = quadratic_roots_f64(-1.0, 0.21).unwrap();
        let mut v = fr.to_vec();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((v[0] - 0.3).abs() < 1e-12 && (v[1] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn durand_kerner_cubic() {
        // (x-1)(x-1/3)(x+1/4) = x^3 - 13/12 x^2 + 1/12
        let roots = durand_kerner(&[1.0 / 12.0, 0.0, -13.0 / 12.0, 1.0]);
        assert_eq!(roots.len(), 3);
        assert!((roots[0].0 - 1.0).abs() < 1e-10 && roots[0].1.abs() < 1e-10);
        assert!((roots[1].0 - 1.0 / 3.0).abs() < 1e-10);
        assert!((roots[2].0 + 0.25).abs() < 1e-10);
    }

    #[test]
    fn nullspace_exact() {
        // rank-1 matrix, nullspace dimension 2
        let a = Mat::from_rows(vec![
            vec![rq(1, 1), rq(2, 1), rq(3, 1)],
            vec![rq(2, 1), rq(4, 1), rq(6, 1)],
        ]);
        let ns = a.nullspace(1e-12);
        assert_eq!(ns.len(), 2);
        for v in ns {
            let r = a.mat_vec(&v);
            assert!(r.iter().all(|x| x.is_zero()));
        }
    }

    #[test]
    fn cg_matches_dense_solve() {
        // 1-D path graph Laplacian with Dirichlet ends, n = 50
        let n = 50;
        let mut trips = Vec::new();
        for i in 0..n {
            trips.push((i, i, 2.0));
            if i + 1 < n {
                trips.push((i, i + 1, -1.0));
                trips.push((i + 1, i, -1.0));
            }
        }
        let a = Csr::from_triplets(n, &mut trips);
        let b = vec![1.0; n];
        let (x, _, res) = conjugate_gradient(&a, &b, 1e-13, 10_000).unwrap();
        assert!(res < 1e-12);
        // exact discrete solution: x_i = (i+1)(n-i)/2
        for i in 0..n {
            let exact = (i as f64 + 1.0) * (n - i) as f64 / 2.0;
            assert!((x[i] - exact).abs() < 1e-8);
        }
    }

    #[test]
    fn csr_duplicate_triplets_are_summed() {
        let mut trips = vec![(0, 0, 1.0), (0, 0, 2.0), (1, 1, 5.0), (0, 1, -1.0), (1, 0, -1.0)];
        let a = Csr::from_triplets(2, &mut trips);
        let mut y = vec![0.0; 2];
        a.mat_vec(&[1.0, 1.0], &mut y);
        assert_eq!(y, vec![2.0, 4.0]);
    }
}
