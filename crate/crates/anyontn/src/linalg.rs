//! Small dense complex linear algebra: matrix products, one-sided Jacobi SVD,
//! and a cyclic Jacobi Hermitian eigensolver.
//!
//! The charge-block structure of symmetric tensors keeps every dense block
//! small (rarely beyond a few hundred rows), so simple deterministic kernels
//! are preferred over an external BLAS/LAPACK dependency. All routines are
//! single-threaded and bit-stable for identical inputs.

use num_complex::Complex64 as C64;

/// Row-major complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CMat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<C64>,
}

impl CMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMat { rows, cols, data: vec![C64::new(0.0, 0.0); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = CMat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_rows(rows: usize, cols: usize, data: Vec<C64>) -> Self {
        assert_eq!(rows * cols, data.len());
        CMat { rows, cols, data }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> C64 {
        self.data[r * self.cols + c]
    }

    pub fn dagger(&self) -> CMat {
        let mut out = CMat::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out[(c, r)] = self.at(r, c).conj();
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest absolute entry of `self - other`.
    pub fn max_abs_diff(&self, other: &CMat) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

impl std::ops::Index<(usize, usize)> for CMat {
    type Output = C64;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        &self.data[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMat {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        &mut self.data[r * self.cols + c]
    }
}

/// c += alpha * a * b on raw row-major slices.
pub fn zgemm_acc(
    m: usize,
    k: usize,
    n: usize,
    alpha: C64,
    a: &[C64],
    b: &[C64],
    c: &mut [C64],
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || k == 0 || n == 0 {
        return;
    }
    // num_complex::Complex64 is repr(C) with [re, im] layout, matching
    // matrixmultiply's CGemmOption scalar [f64; 2].
    unsafe {
        matrixmultiply::zgemm(
            matrixmultiply::CGemmOption::Standard,
            matrixmultiply::CGemmOption::Standard,
            m,
            k,
            n,
            [alpha.re, alpha.im],
            a.as_ptr() as *const [f64; 2],
            k as isize,
            1,
            b.as_ptr() as *const [f64; 2],
            n as isize,
            1,
            [1.0, 0.0],
            c.as_mut_ptr() as *mut [f64; 2],
            n as isize,
            1,
        );
    }
}

pub fn matmul(a: &CMat, b: &CMat) -> CMat {
    assert_eq!(a.cols, b.rows);
    let mut c = CMat::zeros(a.rows, b.cols);
    zgemm_acc(a.rows, a.cols, b.cols, C64::new(1.0, 0.0), &a.data, &b.data, &mut c.data);
    c
}

/// Result of a singular value decomposition `a = u * diag(s) * vt`.
///
/// `u` is `rows x r`, `vt` is `r x cols` with `r = min(rows, cols)`; singular
/// values are returned in descending order.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: CMat,
    pub s: Vec<f64>,
    pub vt: CMat,
}

/// One-sided Jacobi SVD.
///
/// Works on the (implicitly formed) Gram matrix by orthogonalizing column
/// pairs; deterministic sweep order, converges quadratically once the columns
/// decouple.
pub fn svd(a: &CMat) -> Svd {
    let transposed = a.rows < a.cols;
    let work = if transposed { a.dagger() } else { a.clone() };
    let m = work.rows;
    let n = work.cols;
    // Column-major copy of the working matrix for cheap column rotations.
    let mut col: Vec<Vec<C64>> = (0..n).map(|j| (0..m).map(|i| work.at(i, j)).collect()).collect();
    let mut v = CMat::identity(n); // accumulates right rotations: columns of V

    let eps = 1e-14;
    let max_sweeps = 60;
    for _sweep in 0..max_sweeps {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                let mut app = 0.0;
                let mut aqq = 0.0;
                let mut apq = C64::new(0.0, 0.0);
                for i in 0..m {
                    app += col[p][i].norm_sqr();
                    aqq += col[q][i].norm_sqr();
                    apq += col[p][i].conj() * col[q][i];
                }
                let denom = (app * aqq).sqrt();
                if denom == 0.0 || apq.norm() <= eps * denom {
                    continue;
                }
                off = off.max(apq.norm() / denom);
                // 2x2 Hermitian eigenproblem [[app, apq], [conj(apq), aqq]].
                let phase = apq / apq.norm();
                let tau = (aqq - app) / (2.0 * apq.norm());
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let cth = 1.0 / (1.0 + t * t).sqrt();
                let sth = cth * t;
                // [cp, cq] <- [cp*c - cq*s*conj(phase), cp*s*phase + cq*c]
                for i in 0..m {
                    let xp = col[p][i];
                    let xq = col[q][i];
                    col[p][i] = xp * cth - xq * sth * phase.conj();
                    col[q][i] = xp * sth * phase + xq * cth;
                }
                for i in 0..n {
                    let vp = v.at(i, p);
                    let vq = v.at(i, q);
                    v[(i, p)] = vp * cth - vq * sth * phase.conj();
                    v[(i, q)] = vp * sth * phase + vq * cth;
                }
            }
        }
        if off <= eps {
            break;
        }
    }

    // Singular values and left vectors.
    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<f64> = col.iter().map(|c| c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap().then(i.cmp(&j)));

    let r = n.min(m);
    let mut s = Vec::with_capacity(r);
    let mut u = CMat::zeros(m, r);
    let mut vt = CMat::zeros(r, n);
    for (k, &j) in order.iter().take(r).enumerate() {
        let sv = norms[j];
        s.push(sv);
        if sv > 0.0 {
            for i in 0..m {
                u[(i, k)] = col[j][i] / sv;
            }
        }
        for i in 0..n {
            vt[(k, i)] = v.at(i, j).conj();
        }
    }

    if transposed {
        // a = (work)^dagger = (U S Vt)^dagger = V S U^dagger
        Svd { u: vt.dagger(), s, vt: u.dagger() }
    } else {
        Svd { u, s, vt }
    }
}

/// Eigendecomposition of a Hermitian matrix: `a = vecs * diag(vals) * vecs^dagger`.
///
/// Eigenvalues ascend; eigenvectors are the columns of `vecs`. Cyclic complex
/// Jacobi rotations, deterministic order.
pub fn eigh(a: &CMat) -> (Vec<f64>, CMat) {
    assert_eq!(a.rows, a.cols);
    let n = a.rows;
    let mut h = a.clone();
    let mut v = CMat::identity(n);
    let eps = 1e-15;
    let scale = a.frobenius_norm().max(1e-300);
    for _sweep in 0..80 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                let hpq = h.at(p, q);
                if hpq.norm() <= eps * scale {
                    continue;
                }
                off = off.max(hpq.norm());
                let phase = hpq / hpq.norm();
                let tau = (h.at(q, q).re - h.at(p, p).re) / (2.0 * hpq.norm());
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                // Givens update: rows/cols p and q.
                for i in 0..n {
                    let hip = h.at(i, p);
                    let hiq = h.at(i, q);
                    h[(i, p)] = hip * c - hiq * s * phase.conj();
                    h[(i, q)] = hip * s * phase + hiq * c;
                }
                for i in 0..n {
                    let hpi = h.at(p, i);
                    let hqi = h.at(q, i);
                    h[(p, i)] = hpi * c - hqi * s * phase;
                    h[(q, i)] = hpi * s * phase.conj() + hqi * c;
                }
                for i in 0..n {
                    let vip = v.at(i, p);
                    let viq = v.at(i, q);
                    v[(i, p)] = vip * c - viq * s * phase.conj();
                    v[(i, q)] = vip * s * phase + viq * c;
                }
            }
        }
        if off <= eps * scale {
            break;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|i| h.at(i, i).re).collect();
    order.sort_by(|&i, &j| diag[i].partial_cmp(&diag[j]).unwrap().then(i.cmp(&j)));
    let vals: Vec<f64> = order.iter().map(|&i| diag[i]).collect();
    let mut vecs = CMat::zeros(n, n);
    for (k, &j) in order.iter().enumerate() {
        for i in 0..n {
            vecs[(i, k)] = v.at(i, j);
        }
    }
    (vals, vecs)
}

/// Ordinary least squares fit y = a + b x; returns (a, b, max residual).
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    assert_eq!(xs.len(), ys.len());
    assert!(xs.len() >= 2);
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let det = n * sxx - sx * sx;
    let b = (n * sxy - sx * sy) / det;
    let a = (sy - b * sx) / n;
    let resid = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - a - b * x).abs())
        .fold(0.0, f64::max);
    (a, b, resid)
}
