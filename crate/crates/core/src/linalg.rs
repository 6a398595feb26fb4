//! Small dense linear algebra: column-pivoted Householder QR for least squares and
//! Cholesky for the symmetric positive definite systems that appear in the
//! logistic and multivariate code paths.

use crate::error::{MedError, Result};
use crate::scalar::{dot, Scalar};

/// Largest accepted relative condition number of a Gram matrix `AᵀA`.
pub const GRAM_CONDITION_LIMIT: f64 = 1e12;

/// Rank-revealing QR factorization of an `n × p` design given by columns.
///
/// Columns are equilibrated to unit Euclidean norm before factoring so the
/// condition estimate is invariant to column scaling.
#[derive(Debug, Clone)]
pub struct PivotedQr<T> {
    n: usize,
    p: usize,
    /// Householder vectors, one per step, each of length `n - k`.
    reflectors: Vec<Vec<T>>,
    taus: Vec<T>,
    /// Upper-triangular factor, row-major `p × p`, in pivoted column order.
    r: Vec<T>,
    /// `perm[k]` = original index of the column at pivoted position `k`.
    perm: Vec<usize>,
    col_norms: Vec<T>,
    gram_condition: T,
}

impl<T: Scalar> PivotedQr<T> {
    /// Factor the design whose columns are `cols`; fails with `SingularDesign` when
    /// the estimated Gram condition number exceeds [`GRAM_CONDITION_LIMIT`].
    pub fn new(cols: &[&[T]]) -> Result<Self> {
        let p = cols.len();
        let n = cols.first().map_or(0, |c| c.len());
        if cols.iter().any(|c| c.len() != n) {
            return Err(MedError::InvalidData("design columns differ in length".into()));
        }
        if p > n {
            return Err(MedError::SingularDesign(format!(
                "{p} columns but only {n} rows"
            )));
        }
        let mut col_norms = Vec::with_capacity(p);
        let mut work: Vec<Vec<T>> = Vec::with_capacity(p);
        for (j, c) in cols.iter().enumerate() {
            let nrm = dot(c, c).sqrt();
            if !(nrm > T::zero()) || !nrm.is_finite() {
                return Err(MedError::SingularDesign(format!("column {j} is identically zero")));
            }
            col_norms.push(nrm);
            work.push(c.iter().map(|&x| x / nrm).collect());
        }

        let mut perm: Vec<usize> = (0..p).collect();
        let mut reflectors = Vec::with_capacity(p);
        let mut taus = Vec::with_capacity(p);
        let mut r = vec![T::zero(); p * p];

        for k in 0..p {
            // pivot on the largest remaining column norm
            let mut best = k;
            let mut best_norm = -T::one();
            for (j, col) in work.iter().enumerate().skip(k) {
                let s = dot(&col[k..], &col[k..]);
                if s > best_norm {
                    best_norm = s;
                    best = j;
                }
            }
            work.swap(k, best);
            perm.swap(k, best);
            // earlier rows of R must follow the swap as well
            for i in 0..k {
                r.swap(i * p + k, i * p + best);
            }

            let x = &work[k][k..];
            let xnorm = dot(x, x).sqrt();
            let mut v: Vec<T> = x.to_vec();
            let alpha = if v[0] >= T::zero() { -xnorm } else { xnorm };
            let tau;
            if xnorm == T::zero() {
                tau = T::zero();
            } else {
                v[0] = v[0] - alpha;
                let vtv = dot(&v, &v);
                tau = if vtv > T::zero() { T::lit(2.0) / vtv } else { T::zero() };
            }
            r[k * p + k] = alpha;
            for col in work.iter_mut().skip(k + 1) {
                let seg = &mut col[k..];
                let s = tau * dot(&v, seg);
                for (a, &vi) in seg.iter_mut().zip(&v) {
                    *a = *a - s * vi;
                }
            }
            for j in (k + 1)..p {
                r[k * p + j] = work[j][k];
            }
            reflectors.push(v);
            taus.push(tau);
        }

        let gram_condition = if p == 0 {
            T::one()
        } else {
            let first = r[0].abs();
            let last = r[(p - 1) * p + (p - 1)].abs();
            if last == T::zero() {
                T::infinity()
            } else {
                let c = first / last;
                c * c
            }
        };
        if !(gram_condition <= T::lit(GRAM_CONDITION_LIMIT)) {
            return Err(MedError::SingularDesign(format!(
                "Gram condition estimate {:e} exceeds {GRAM_CONDITION_LIMIT:e}",
                gram_condition.as_f64()
            )));
        }

        Ok(Self {
            n,
            p,
            reflectors,
            taus,
            r,
            perm,
            col_norms,
            gram_condition,
        })
    }

    pub fn nrows(&self) -> usize {
        self.n
    }

    pub fn ncols(&self) -> usize {
        self.p
    }

    pub fn gram_condition(&self) -> T {
        self.gram_condition
    }

    fn apply_qt(&self, y: &mut [T]) {
        for (k, (v, &tau)) in self.reflectors.iter().zip(&self.taus).enumerate() {
            let seg = &mut y[k..];
            let s = tau * dot(v, seg);
            for (a, &vi) in seg.iter_mut().zip(v) {
                *a = *a - s * vi;
            }
        }
    }

    fn apply_q(&self, y: &mut [T]) {
        for (k, (v, &tau)) in self.reflectors.iter().zip(&self.taus).enumerate().rev() {
            let seg = &mut y[k..];
            let s = tau * dot(v, seg);
            for (a, &vi) in seg.iter_mut().zip(v) {
                *a = *a - s * vi;
            }
        }
    }

    /// Least-squares coefficients and residual of `y` on the factored columns.
    /// Coefficients are returned in the original column order and scale.
    pub fn solve(&self, y: &[T]) -> (Vec<T>, Vec<T>) {
        assert_eq!(y.len(), self.n, "response length mismatch");
        let p = self.p;
        let mut qty = y.to_vec();
        self.apply_qt(&mut qty);
        // back substitution on R b = (Qᵀy)[..p]
        let mut b = vec![T::zero(); p];
        for i in (0..p).rev() {
            let mut s = qty[i];
            for j in (i + 1)..p {
                s = s - self.r[i * p + j] * b[j];
            }
            b[i] = s / self.r[i * p + i];
        }
        let mut coef = vec![T::zero(); p];
        for (k, &orig) in self.perm.iter().enumerate() {
            coef[orig] = b[k] / self.col_norms[orig];
        }
        let mut resid = qty;
        for x in resid.iter_mut().take(p) {
            *x = T::zero();
        }
        self.apply_q(&mut resid);
        (coef, resid)
    }

    /// Residual of `y` after projecting out the column space.
    pub fn residual(&self, y: &[T]) -> Vec<T> {
        self.solve(y).1
    }
}

/// Dense square matrix stored row-major; only used for the small `p × p` systems.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix<T> {
    dim: usize,
    data: Vec<T>,
}

impl<T: Scalar> SquareMatrix<T> {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![T::zero(); dim * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.dim + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.dim + j] = v;
    }

    /// `Σ_rows w_i · d_i d_iᵀ / n` for row vectors `d_i` taken from columns.
    pub fn weighted_mean_outer(cols: &[&[T]], weights: Option<&[T]>) -> Self {
        let p = cols.len();
        let n = cols.first().map_or(0, |c| c.len());
        let mut m = Self::zeros(p);
        for a in 0..p {
            for b in a..p {
                let mut s = T::zero();
                for i in 0..n {
                    let w = weights.map_or(T::one(), |w| w[i]);
                    s = s + w * cols[a][i] * cols[b][i];
                }
                let v = s / T::from_usize_lossy(n.max(1));
                m.set(a, b, v);
                m.set(b, a, v);
            }
        }
        m
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        (0..self.dim)
            .map(|i| dot(&self.data[i * self.dim..(i + 1) * self.dim], x))
            .collect()
    }

    /// Lower Cholesky factor; `SingularDesign` if the matrix is not numerically SPD.
    pub fn cholesky(&self) -> Result<Self> {
        let n = self.dim;
        let mut l = Self::zeros(n);
        let scale = (0..n).fold(T::zero(), |m, i| m.max(self.get(i, i).abs()));
        let floor = scale * T::lit(1e-14);
        for j in 0..n {
            let mut d = self.get(j, j);
            for k in 0..j {
                d = d - l.get(j, k) * l.get(j, k);
            }
            if !(d > floor) {
                return Err(MedError::SingularDesign(
                    "matrix is not positive definite".into(),
                ));
            }
            let djj = d.sqrt();
            l.set(j, j, djj);
            for i in (j + 1)..n {
                let mut s = self.get(i, j);
                for k in 0..j {
                    s = s - l.get(i, k) * l.get(j, k);
                }
                l.set(i, j, s / djj);
            }
        }
        Ok(l)
    }

    /// Solve `A x = b` for symmetric positive definite `A`.
    pub fn solve_spd(&self, b: &[T]) -> Result<Vec<T>> {
        let l = self.cholesky()?;
        Ok(cholesky_solve(&l, b))
    }

    /// Inverse of a symmetric positive definite matrix.
    pub fn inverse_spd(&self) -> Result<Self> {
        let l = self.cholesky()?;
        let n = self.dim;
        let mut inv = Self::zeros(n);
        let mut e = vec![T::zero(); n];
        for j in 0..n {
            e.iter_mut().for_each(|x| *x = T::zero());
            e[j] = T::one();
            let col = cholesky_solve(&l, &e);
            for (i, v) in col.into_iter().enumerate() {
                inv.set(i, j, v);
            }
        }
        Ok(inv)
    }
}

fn cholesky_solve<T: Scalar>(l: &SquareMatrix<T>, b: &[T]) -> Vec<T> {
    let n = l.dim();
    let mut y = vec![T::zero(); n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s = s - l.get(i, k) * y[k];
        }
        y[i] = s / l.get(i, i);
    }
    let mut x = vec![T::zero(); n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s = s - l.get(k, i) * x[k];
        }
        x[i] = s / l.get(i, i);
    }
    x
}
