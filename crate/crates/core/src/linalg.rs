//! Small dense linear algebra: a row-major matrix, an LU solver, and a
//! real eigenvalue solver (Householder reduction to Hessenberg form followed
//! by Francis double-shift QR with deflation).
//!
//! Everything here targets matrices of dimension at most a few dozen; the
//! eigen-solver is capped at [`MAX_EIGEN_DIM`].

use std::ops::{Index, IndexMut};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_EIGEN_DIM: usize = 16;

/// Iterations allowed per eigenvalue before giving up.
const MAX_QR_ITER_PER_EIGENVALUE: usize = 60;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::LengthMismatch {
                    expected: c,
                    actual: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Matrix {
            rows: r,
            cols: c,
            data,
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Matrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|i| self.row(i).iter().sum()).collect()
    }

    /// Max absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
///
/// Returns `None` when a pivot falls below `1e-13 · max|a_ij|`.
pub fn solve_linear(a: &Matrix, b: &[f64]) -> Option<Vec<f64>> {
    solve_linear_with_scale(a, b, 0.0)
}

/// As [`solve_linear`], with the pivot threshold taken relative to
/// `max(max|a_ij|, reference)`.
pub fn solve_linear_with_scale(a: &Matrix, b: &[f64], reference: f64) -> Option<Vec<f64>> {
    let n = a.rows();
    if !a.is_square() || b.len() != n {
        return None;
    }
    let scale = a.data.iter().fold(reference.abs(), |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return None;
    }
    let tol = 1e-13 * scale;
    let mut m = a.clone();
    let mut x = b.to_vec();
    for k in 0..n {
        let (piv, pval) = (k..n)
            .map(|i| (i, m[(i, k)].abs()))
            .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pval < tol {
            return None;
        }
        if piv != k {
            for j in 0..n {
                m.data.swap(k * n + j, piv * n + j);
            }
            x.swap(k, piv);
        }
        for i in k + 1..n {
            let f = m[(i, k)] / m[(k, k)];
            if f != 0.0 {
                for j in k..n {
                    m[(i, j)] -= f * m[(k, j)];
                }
                x[i] -= f * x[k];
            }
        }
    }
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|j| m[(k, j)] * x[j]).sum();
        x[k] = (x[k] - s) / m[(k, k)];
    }
    Some(x)
}

/// All eigenvalues of a real square matrix of dimension at most
/// [`MAX_EIGEN_DIM`], sorted by real part then imaginary part.
///
/// Complex eigenvalues come in exact conjugate pairs.
pub fn eigenvalues(a: &Matrix) -> Result<Vec<Complex64>> {
    if !a.is_square() {
        return Err(Error::OutOfRange(format!(
            "eigenvalues need a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if a.rows() > MAX_EIGEN_DIM {
        return Err(Error::OutOfRange(format!(
            "matrix dimension {} exceeds {}",
            a.rows(),
            MAX_EIGEN_DIM
        )));
    }
    if !a.is_finite() {
        return Err(Error::OutOfRange("matrix has non-finite entries".into()));
    }
    let n = a.rows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut h = a.clone();
    hessenberg_reduce(&mut h);
    let mut ev = hessenberg_qr(&mut h)?;
    sort_spectrum(&mut ev);
    Ok(ev)
}

pub fn sort_spectrum(ev: &mut [Complex64]) {
    ev.sort_by(|x, y| {
        x.re.partial_cmp(&y.re)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(x.im.partial_cmp(&y.im).unwrap_or(std::cmp::Ordering::Equal))
    });
}

/// An eigenvalue together with a unit eigenvector recovered by inverse
/// iteration and the residual `‖A v − λ v‖`.
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub value: Complex64,
    pub vector: Vec<Complex64>,
    pub residual: f64,
}

/// Eigenvalues plus inverse-iteration eigenvectors.
pub fn eigenpairs(a: &Matrix) -> Result<Vec<EigenPair>> {
    let values = eigenvalues(a)?;
    Ok(values
        .into_iter()
        .map(|value| {
            let vector = inverse_iteration(a, value);
            let residual = eigen_residual(a, value, &vector);
            EigenPair {
                value,
                vector,
                residual,
            }
        })
        .collect())
}

fn eigen_residual(a: &Matrix, lambda: Complex64, v: &[Complex64]) -> f64 {
    let n = a.rows();
    let mut acc = 0.0;
    for i in 0..n {
        let mut s = Complex64::new(0.0, 0.0);
        for j in 0..n {
            s += v[j] * a[(i, j)];
        }
        s -= lambda * v[i];
        acc += s.norm_sqr();
    }
    acc.sqrt()
}

fn inverse_iteration(a: &Matrix, lambda: Complex64) -> Vec<Complex64> {
    let n = a.rows();
    let norm = a.norm_inf().max(f64::MIN_POSITIVE);
    // slight shift off the eigenvalue keeps the factorization nonsingular
    let shift = lambda + Complex64::new(norm * 1e-10, norm * 1e-10);
    let mut m: Vec<Complex64> = (0..n * n)
        .map(|k| {
            let (i, j) = (k / n, k % n);
            let d = if i == j { shift } else { Complex64::new(0.0, 0.0) };
            Complex64::new(a[(i, j)], 0.0) - d
        })
        .collect();
    let mut perm: Vec<usize> = (0..n).collect();
    let tiny = f64::EPSILON * norm;
    for k in 0..n {
        let piv = (k..n)
            .max_by(|&x, &y| m[x * n + k].norm().total_cmp(&m[y * n + k].norm()))
            .unwrap_or(k);
        if piv != k {
            for j in 0..n {
                m.swap(k * n + j, piv * n + j);
            }
            perm.swap(k, piv);
        }
        if m[k * n + k].norm() < tiny {
            m[k * n + k] = Complex64::new(tiny, 0.0);
        }
        for i in k + 1..n {
            let f = m[i * n + k] / m[k * n + k];
            m[i * n + k] = f;
            for j in k + 1..n {
                let t = m[k * n + j];
                m[i * n + j] -= f * t;
            }
        }
    }
    let solve = |rhs: &[Complex64]| -> Vec<Complex64> {
        let mut y: Vec<Complex64> = perm.iter().map(|&p| rhs[p]).collect();
        for i in 0..n {
            for j in 0..i {
                let t = m[i * n + j] * y[j];
                y[i] -= t;
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                let t = m[i * n + j] * y[j];
                y[i] -= t;
            }
            y[i] /= m[i * n + i];
        }
        y
    };
    let mut v: Vec<Complex64> = (0..n)
        .map(|i| Complex64::new(1.0 + 0.1 * i as f64, 0.05 * (i % 3) as f64))
        .collect();
    for _ in 0..4 {
        v = solve(&v);
        let nv = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if nv == 0.0 || !nv.is_finite() {
            break;
        }
        for z in &mut v {
            *z /= nv;
        }
    }
    v
}

/// Orthogonal similarity reduction to upper Hessenberg form.
fn hessenberg_reduce(h: &mut Matrix) {
    let n = h.rows();
    if n < 3 {
        return;
    }
    let high = n - 1;
    let mut ort = vec![0.0; n];
    for m in 1..high {
        let scale: f64 = (m..=high).map(|i| h[(i, m - 1)].abs()).sum();
        if scale == 0.0 {
            continue;
        }
        let mut hh = 0.0;
        for i in (m..=high).rev() {
            ort[i] = h[(i, m - 1)] / scale;
            hh += ort[i] * ort[i];
        }
        let mut g = hh.sqrt();
        if ort[m] > 0.0 {
            g = -g;
        }
        hh -= ort[m] * g;
        ort[m] -= g;
        for j in m..n {
            let mut f = 0.0;
            for i in (m..=high).rev() {
                f += ort[i] * h[(i, j)];
            }
            f /= hh;
            for i in m..=high {
                h[(i, j)] -= f * ort[i];
            }
        }
        for i in 0..=high {
            let mut f = 0.0;
            for j in (m..=high).rev() {
                f += ort[j] * h[(i, j)];
            }
            f /= hh;
            for j in m..=high {
                h[(i, j)] -= f * ort[j];
            }
        }
        ort[m] *= scale;
        h[(m, m - 1)] = scale * g;
        for i in m + 1..=high {
            h[(i, m - 1)] = 0.0;
        }
    }
}

/// Francis double-shift QR on an upper Hessenberg matrix, eigenvalues only.
#[allow(unused_assignments)]
fn hessenberg_qr(h: &mut Matrix) -> Result<Vec<Complex64>> {
    let nn = h.rows();
    let mut re = vec![0.0; nn];
    let mut im = vec![0.0; nn];
    let eps = f64::EPSILON;
    let mut exshift = 0.0;
    let (mut p, mut q, mut r, mut s, mut z) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let (mut w, mut x, mut y);

    let mut norm = 0.0;
    for i in 0..nn {
        for j in i.saturating_sub(1)..nn {
            norm += h[(i, j)].abs();
        }
    }

    let mut n = nn as isize - 1;
    let mut iter = 0usize;
    let mut total_iter = 0usize;
    while n >= 0 {
        let nu = n as usize;
        // look for a single small subdiagonal element
        let mut l = nu;
        while l > 0 {
            s = h[(l - 1, l - 1)].abs() + h[(l, l)].abs();
            if s == 0.0 {
                s = norm;
            }
            if h[(l, l - 1)].abs() < eps * s {
                break;
            }
            l -= 1;
        }

        if l == nu {
            // one root
            h[(nu, nu)] += exshift;
            re[nu] = h[(nu, nu)];
            im[nu] = 0.0;
            n -= 1;
            iter = 0;
        } else if l + 1 == nu {
            // two roots
            w = h[(nu, nu - 1)] * h[(nu - 1, nu)];
            p = (h[(nu - 1, nu - 1)] - h[(nu, nu)]) / 2.0;
            q = p * p + w;
            z = q.abs().sqrt();
            h[(nu, nu)] += exshift;
            h[(nu - 1, nu - 1)] += exshift;
            x = h[(nu, nu)];
            if q >= 0.0 {
                z = if p >= 0.0 { p + z } else { p - z };
                re[nu - 1] = x + z;
                re[nu] = re[nu - 1];
                if z != 0.0 {
                    re[nu] = x - w / z;
                }
                im[nu - 1] = 0.0;
                im[nu] = 0.0;
            } else {
                re[nu - 1] = x + p;
                re[nu] = x + p;
                im[nu - 1] = z;
                im[nu] = -z;
            }
            n -= 2;
            iter = 0;
        } else {
            x = h[(nu, nu)];
            y = h[(nu - 1, nu - 1)];
            w = h[(nu, nu - 1)] * h[(nu - 1, nu)];

            // exceptional shifts
            if iter == 10 {
                exshift += x;
                for i in 0..=nu {
                    h[(i, i)] -= x;
                }
                s = h[(nu, nu - 1)].abs() + h[(nu - 1, nu - 2)].abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            if iter == 30 {
                s = (y - x) / 2.0;
                s = s * s + w;
                if s > 0.0 {
                    s = s.sqrt();
                    if y < x {
                        s = -s;
                    }
                    s = x - w / ((y - x) / 2.0 + s);
                    for i in 0..=nu {
                        h[(i, i)] -= s;
                    }
                    exshift += s;
                    x = 0.964;
                    y = x;
                    w = x;
                }
            }
            iter += 1;
            total_iter += 1;
            if iter > MAX_QR_ITER_PER_EIGENVALUE {
                return Err(Error::EigenNonConvergence {
                    iterations: total_iter,
                });
            }

            // look for two consecutive small subdiagonal elements
            let mut m = nu - 2;
            loop {
                z = h[(m, m)];
                r = x - z;
                s = y - z;
                p = (r * s - w) / h[(m + 1, m)] + h[(m, m + 1)];
                q = h[(m + 1, m + 1)] - z - r - s;
                r = h[(m + 2, m + 1)];
                s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                if h[(m, m - 1)].abs() * (q.abs() + r.abs())
                    < eps * (p.abs() * (h[(m - 1, m - 1)].abs() + z.abs() + h[(m + 1, m + 1)].abs()))
                {
                    break;
                }
                m -= 1;
            }
            for i in m + 2..=nu {
                h[(i, i - 2)] = 0.0;
                if i > m + 2 {
                    h[(i, i - 3)] = 0.0;
                }
            }

            // double QR step on rows l..=n, columns m..=n
            for k in m..nu {
                let notlast = k != nu - 1;
                if k != m {
                    p = h[(k, k - 1)];
                    q = h[(k + 1, k - 1)];
                    r = if notlast { h[(k + 2, k - 1)] } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x == 0.0 {
                        continue;
                    }
                    p /= x;
                    q /= x;
                    r /= x;
                }
                s = (p * p + q * q + r * r).sqrt();
                if p < 0.0 {
                    s = -s;
                }
                if s != 0.0 {
                    if k != m {
                        h[(k, k - 1)] = -s * x;
                    } else if l != m {
                        h[(k, k - 1)] = -h[(k, k - 1)];
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    z = r / s;
                    q /= p;
                    r /= p;

                    for j in k..nn {
                        p = h[(k, j)] + q * h[(k + 1, j)];
                        if notlast {
                            p += r * h[(k + 2, j)];
                            h[(k + 2, j)] -= p * z;
                        }
                        h[(k, j)] -= p * x;
                        h[(k + 1, j)] -= p * y;
                    }
                    for i in 0..=nu.min(k + 3) {
                        p = x * h[(i, k)] + y * h[(i, k + 1)];
                        if notlast {
                            p += z * h[(i, k + 2)];
                            h[(i, k + 2)] -= p * r;
                        }
                        h[(i, k)] -= p;
                        h[(i, k + 1)] -= p * q;
                    }
                }
            }
        }
    }
    Ok(re
        .into_iter()
        .zip(im)
        .map(|(a, b)| Complex64::new(a, b))
        .collect())
}

/// Greedy multiset matching of two spectra: returns the largest distance
/// between paired eigenvalues, or `None` when the lengths differ.
pub fn spectrum_distance(a: &[Complex64], b: &[Complex64]) -> Option<f64> {
    if a.len() != b.len() {
        return None;
    }
    let mut used = vec![false; b.len()];
    let mut worst = 0.0f64;
    let mut order: Vec<usize> = (0..a.len()).collect();
    // pair the most isolated eigenvalues first
    order.sort_by(|&i, &j| a[i].re.total_cmp(&a[j].re));
    for i in order {
        let (best, d) = b
            .iter()
            .enumerate()
            .filter(|(k, _)| !used[*k])
            .map(|(k, z)| (k, (z - a[i]).norm()))
            .min_by(|x, y| x.1.total_cmp(&y.1))?;
        used[best] = true;
        worst = worst.max(d);
    }
    Some(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn diagonal() {
        let a = Matrix::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 2.0, 0.0], vec![0.0, 0.0, 3.0]])
            .unwrap();
        let ev = eigenvalues(&a).unwrap();
        assert_eq!(ev, vec![c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0)]);
    }

    #[test]
    fn rotation_generator() {
        let a = Matrix::from_rows(&[vec![0.0, -1.0], vec![1.0, 0.0]]).unwrap();
        let ev = eigenvalues(&a).unwrap();
        assert_eq!(ev.len(), 2);
        assert!((ev[0] - c(0.0, -1.0)).norm() < 1e-15);
        assert!((ev[1] - c(0.0, 1.0)).norm() < 1e-15);
        assert_eq!(ev[0], ev[1].conj());
    }

    #[test]
    fn three_cluster_symmetric_block() {
        // λ(λ + 1)^2
        let t = 1.0 / 3.0;
        let a = Matrix::from_rows(&[
            vec![-2.0 * t, t, t],
            vec![t, -2.0 * t, t],
            vec![t, t, -2.0 * t],
        ])
        .unwrap();
        let ev = eigenvalues(&a).unwrap();
        let expected = [c(-1.0, 0.0), c(-1.0, 0.0), c(0.0, 0.0)];
        assert!(spectrum_distance(&ev, &expected).unwrap() < 1e-12);
    }

    #[test]
    fn companion_matrix_roots() {
        // x^4 - 10x^3 + 35x^2 - 50x + 24 = (x-1)(x-2)(x-3)(x-4)
        let a = Matrix::from_rows(&[
            vec![10.0, -35.0, 50.0, -24.0],
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 0.0],
        ])
        .unwrap();
        let ev = eigenvalues(&a).unwrap();
        let expected: Vec<_> = (1..=4).map(|k| c(k as f64, 0.0)).collect();
        assert!(spectrum_distance(&ev, &expected).unwrap() < 1e-10);
    }

    #[test]
    fn rejects_oversized_and_non_finite() {
        assert!(eigenvalues(&Matrix::identity(17)).is_err());
        let mut a = Matrix::identity(2);
        a[(0, 1)] = f64::NAN;
        assert!(eigenvalues(&a).is_err());
        assert!(eigenvalues(&Matrix::zeros(0, 0)).unwrap().is_empty());
    }

    #[test]
    fn linear_solve() {
        let a = Matrix::from_rows(&[vec![0.0, 2.0], vec![3.0, 1.0]]).unwrap();
        let x = solve_linear(&a, &[4.0, 5.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 2.0).abs() < 1e-15);
        let singular = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        assert!(solve_linear(&singular, &[1.0, 1.0]).is_none());
    }

    fn arb_matrix() -> impl Strategy<Value = Matrix> {
        (1usize..=12).prop_flat_map(|n| {
            prop::collection::vec(-3.0f64..3.0, n * n).prop_map(move |d| Matrix {
                rows: n,
                cols: n,
                data: d,
            })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn agrees_with_nalgebra(a in arb_matrix()) {
            let ours = eigenvalues(&a).unwrap();
            let na = nalgebra::DMatrix::from_row_slice(a.rows(), a.cols(), &a.data);
            let theirs: Vec<Complex64> = na
                .complex_eigenvalues()
                .iter()
                .map(|z| Complex64::new(z.re, z.im))
                .collect();
            prop_assert!(spectrum_distance(&ours, &theirs).unwrap() < 1e-8 * (1.0 + a.norm_inf()));
        }

        #[test]
        fn residuals_and_conjugate_pairing(a in arb_matrix()) {
            let pairs = eigenpairs(&a).unwrap();
            let bound = 1e-8 * a.frobenius_norm().max(1e-300);
            for p in &pairs {
                prop_assert!(p.residual <= bound, "residual {} > {}", p.residual, bound);
            }
            let values: Vec<_> = pairs.iter().map(|p| p.value).collect();
            for z in values.iter().filter(|z| z.im != 0.0) {
                prop_assert!(values.iter().any(|w| *w == z.conj()));
            }
        }
    }
}
