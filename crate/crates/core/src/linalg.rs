//! Small dense complex linear algebra.
//!
//! Matrices here are at most a few antennas wide (one AP's array), so plain
//! row-major storage with Cholesky solves and a cyclic Jacobi eigensolver is
//! all that is needed.

use num_complex::Complex;
use num_traits::{One, Zero};

use crate::scalar::{Cplx, Real};

/// `a^H b`.
#[inline]
pub fn dot_h<T: Real>(a: &[Cplx<T>], b: &[Cplx<T>]) -> Cplx<T> {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .fold(Complex::zero(), |acc, (x, y)| acc + x.conj() * y)
}

#[inline]
pub fn norm_sqr<T: Real>(a: &[Cplx<T>]) -> T {
    a.iter().map(|x| x.norm_sqr()).sum()
}

pub fn scale<T: Real>(a: &[Cplx<T>], s: T) -> Vec<Cplx<T>> {
    a.iter().map(|x| x.scale(s)).collect()
}

/// Rotates `v` so its first entry above `rel_threshold * max|v_i|` is real
/// and positive. Zero vectors are left untouched.
pub fn fix_phase<T: Real>(v: &mut [Cplx<T>], rel_threshold: T) {
    let peak = v.iter().map(|x| x.norm()).fold(T::zero(), T::max);
    if peak <= T::zero() {
        return;
    }
    if let Some(pivot) = v.iter().find(|x| x.norm() > rel_threshold * peak) {
        let rot = pivot.conj().unscale(pivot.norm());
        for x in v.iter_mut() {
            *x *= rot;
        }
    }
}

/// Square complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix<T> {
    n: usize,
    data: Vec<Cplx<T>>,
}

impl<T: Real> CMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![Complex::zero(); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        m.add_diag(T::one());
        m
    }

    pub fn from_rows(rows: &[Vec<Cplx<T>>]) -> Self {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), n, "matrix must be square");
            m.data[i * n..(i + 1) * n].copy_from_slice(row);
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Cplx<T> {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: Cplx<T>) {
        self.data[i * self.n + j] = v;
    }

    /// `self += s * v v^H`
    pub fn add_outer(&mut self, v: &[Cplx<T>], s: T) {
        let n = self.n;
        for i in 0..n {
            let vi = v[i].scale(s);
            for j in 0..n {
                self.data[i * n + j] += vi * v[j].conj();
            }
        }
    }

    pub fn add_diag(&mut self, s: T) {
        for i in 0..self.n {
            self.data[i * self.n + i] += Complex::new(s, T::zero());
        }
    }

    pub fn mul_vec(&self, v: &[Cplx<T>]) -> Vec<Cplx<T>> {
        (0..self.n)
            .map(|i| dot_plain(&self.data[i * self.n..(i + 1) * self.n], v))
            .collect()
    }

    pub fn matmul(&self, other: &Self) -> Self {
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                for j in 0..n {
                    out.data[i * n + j] += a * other.get(k, j);
                }
            }
        }
        out
    }

    /// Lower Cholesky factor of a Hermitian positive-definite matrix.
    /// Returns `None` when a pivot is not strictly positive.
    pub fn cholesky(&self) -> Option<Cholesky<T>> {
        let n = self.n;
        let mut l = vec![Complex::zero(); n * n];
        for j in 0..n {
            let mut d = self.get(j, j).re;
            for k in 0..j {
                d -= l[j * n + k].norm_sqr();
            }
            if !(d > T::zero()) {
                return None;
            }
            let djj = d.sqrt();
            l[j * n + j] = Complex::new(djj, T::zero());
            for i in j + 1..n {
                let mut s = self.get(i, j);
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k].conj();
                }
                l[i * n + j] = s.unscale(djj);
            }
        }
        Some(Cholesky { n, l })
    }

    /// Eigen-decomposition of a Hermitian matrix by cyclic Jacobi rotations.
    /// Eigenvalues are returned in ascending order.
    pub fn eigh(&self) -> HermitianEigen<T> {
        let n = self.n;
        let mut a = self.clone();
        let mut v = Self::identity(n);
        let eps = T::epsilon();
        let scale = self
            .data
            .iter()
            .map(|x| x.norm_sqr())
            .sum::<T>()
            .sqrt()
            .max(T::min_positive_value());

        for _sweep in 0..64 {
            let off: T = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a.get(i, j).norm_sqr())
                .sum();
            if off.sqrt() <= eps * scale {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    let apq = a.get(p, q);
                    let mag = apq.norm();
                    if mag <= T::min_positive_value() {
                        continue;
                    }
                    let app = a.get(p, p).re;
                    let aqq = a.get(q, q).re;
                    let phase = apq.unscale(mag);
                    let tau = (aqq - app) / (T::lit(2.0) * mag);
                    let t = if tau >= T::zero() {
                        T::one() / (tau + (T::one() + tau * tau).sqrt())
                    } else {
                        -T::one() / (-tau + (T::one() + tau * tau).sqrt())
                    };
                    let c = T::one() / (T::one() + t * t).sqrt();
                    let s = t * c;
                    // J restricted to (p, q): [[c, s], [-s e^{-i phi}, c e^{-i phi}]]
                    let jpp = Complex::new(c, T::zero());
                    let jpq = Complex::new(s, T::zero());
                    let jqp = phase.conj().scale(-s);
                    let jqq = phase.conj().scale(c);
                    for i in 0..n {
                        let aip = a.get(i, p);
                        let aiq = a.get(i, q);
                        a.set(i, p, aip * jpp + aiq * jqp);
                        a.set(i, q, aip * jpq + aiq * jqq);
                        let vip = v.get(i, p);
                        let viq = v.get(i, q);
                        v.set(i, p, vip * jpp + viq * jqp);
                        v.set(i, q, vip * jpq + viq * jqq);
                    }
                    for j in 0..n {
                        let apj = a.get(p, j);
                        let aqj = a.get(q, j);
                        a.set(p, j, jpp.conj() * apj + jqp.conj() * aqj);
                        a.set(q, j, jpq.conj() * apj + jqq.conj() * aqj);
                    }
                    a.set(p, q, Complex::zero());
                    a.set(q, p, Complex::zero());
                }
            }
        }

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| a.get(i, i).re.partial_cmp(&a.get(j, j).re).unwrap());
        HermitianEigen {
            values: order.iter().map(|&i| a.get(i, i).re).collect(),
            vectors: order
                .iter()
                .map(|&j| (0..n).map(|i| v.get(i, j)).collect())
                .collect(),
        }
    }
}

/// Largest eigenpair of the Hermitian-definite pencil `(a, b)`, i.e. the
/// maximizer of `x^H a x / x^H b x`, via Cholesky whitening of `b`.
/// Returns `None` when `b` is not positive definite.
pub fn generalized_max_eig<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>) -> Option<(T, Vec<Cplx<T>>)> {
    let n = a.dim();
    let chol = b.cholesky()?;
    // C = L^{-1} A L^{-H}, built column by column.
    let mut tmp = CMatrix::zeros(n);
    for j in 0..n {
        let col: Vec<_> = (0..n).map(|i| a.get(i, j)).collect();
        for (i, x) in chol.forward(&col).into_iter().enumerate() {
            tmp.set(i, j, x);
        }
    }
    let mut c = CMatrix::zeros(n);
    for i in 0..n {
        let row: Vec<_> = (0..n).map(|j| tmp.get(i, j).conj()).collect();
        for (j, x) in chol.forward(&row).into_iter().enumerate() {
            c.set(i, j, x.conj());
        }
    }
    let eig = c.eigh();
    let top = eig.values.len() - 1;
    let x = chol.backward(&eig.vectors[top]);
    Some((eig.values[top], x))
}

#[inline]
fn dot_plain<T: Real>(a: &[Cplx<T>], b: &[Cplx<T>]) -> Cplx<T> {
    a.iter()
        .zip(b)
        .fold(Complex::zero(), |acc, (x, y)| acc + x * y)
}

/// `A = L L^H` with `L` lower triangular.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    n: usize,
    l: Vec<Cplx<T>>,
}

impl<T: Real> Cholesky<T> {
    /// Solves `L y = b`.
    pub fn forward(&self, b: &[Cplx<T>]) -> Vec<Cplx<T>> {
        let n = self.n;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l[i * n + k] * y[k];
            }
            y[i] = s / self.l[i * n + i];
        }
        y
    }

    /// Solves `L^H x = y`.
    pub fn backward(&self, y: &[Cplx<T>]) -> Vec<Cplx<T>> {
        let n = self.n;
        let mut x = y.to_vec();
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n {
                s -= self.l[k * n + i].conj() * x[k];
            }
            x[i] = s / self.l[i * n + i].conj();
        }
        x
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[Cplx<T>]) -> Vec<Cplx<T>> {
        self.backward(&self.forward(b))
    }

    /// Explicit inverse `A^{-1}`, column by column.
    pub fn inverse(&self) -> CMatrix<T> {
        let n = self.n;
        let mut inv = CMatrix::zeros(n);
        for j in 0..n {
            let mut e = vec![Complex::zero(); n];
            e[j] = Complex::one();
            let col = self.solve(&e);
            for (i, x) in col.into_iter().enumerate() {
                inv.set(i, j, x);
            }
        }
        inv
    }
}

#[derive(Debug, Clone)]
pub struct HermitianEigen<T> {
    /// Ascending.
    pub values: Vec<T>,
    /// `vectors[i]` is the unit eigenvector of `values[i]`.
    pub vectors: Vec<Vec<Cplx<T>>>,
}
