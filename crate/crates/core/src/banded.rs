//! Banded matrices and an LU factorization with partial pivoting.
//!
//! Storage is row-major: row `i` keeps columns `i - kl ..= i + ku`. The LU
//! factor carries `kl` extra superdiagonals for pivoting fill, as in LAPACK's
//! `gbtrf`.

use nalgebra::{ComplexField, DMatrix};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Banded<T> {
    n: usize,
    kl: usize,
    ku: usize,
    data: Vec<T>,
}

impl<T: ComplexField<RealField = f64> + Copy> Banded<T> {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        Self { n, kl, ku, data: vec![T::zero(); n * (kl + ku + 1)] }
    }

    /// Build from `(row, col, value)` triplets; duplicates are summed and the
    /// bandwidths are taken from the entries present.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, T)]) -> Self {
        let mut kl = 0;
        let mut ku = 0;
        for &(i, j, _) in triplets {
            assert!(i < n && j < n, "triplet ({i}, {j}) outside {n} x {n}");
            if j < i {
                kl = kl.max(i - j);
            } else {
                ku = ku.max(j - i);
            }
        }
        let mut b = Self::zeros(n, kl, ku);
        for &(i, j, v) in triplets {
            b.add(i, j, v);
        }
        b
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    fn in_band(&self, i: usize, j: usize) -> bool {
        j + self.kl >= i && j <= i + self.ku
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        if i < self.n && j < self.n && self.in_band(i, j) {
            self.data[i * (self.kl + self.ku + 1) + j + self.kl - i]
        } else {
            T::zero()
        }
    }

    pub fn add(&mut self, i: usize, j: usize, v: T) {
        assert!(self.in_band(i, j), "entry ({i}, {j}) outside the band");
        let w = self.kl + self.ku + 1;
        let k = i * w + j + self.kl - i;
        self.data[k] += v;
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) {
        assert!(self.in_band(i, j), "entry ({i}, {j}) outside the band");
        let w = self.kl + self.ku + 1;
        self.data[i * w + j + self.kl - i] = v;
    }

    /// Column range stored for row `i`.
    pub fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        i.saturating_sub(self.kl)..(i + self.ku + 1).min(self.n)
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.n);
        let w = self.kl + self.ku + 1;
        (0..self.n)
            .map(|i| {
                let row = &self.data[i * w..(i + 1) * w];
                let mut s = T::zero();
                for j in self.row_range(i) {
                    s += row[j + self.kl - i] * x[j];
                }
                s
            })
            .collect()
    }

    pub fn mul_vec_transpose(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.n);
        let w = self.kl + self.ku + 1;
        let mut y = vec![T::zero(); self.n];
        for i in 0..self.n {
            let row = &self.data[i * w..(i + 1) * w];
            for j in self.row_range(i) {
                y[j] += row[j + self.kl - i] * x[i];
            }
        }
        y
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.n, self.ku, self.kl);
        for i in 0..self.n {
            for j in self.row_range(i) {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    /// `a * self + b * I`.
    pub fn scale_shift(&self, a: T, b: T) -> Self {
        let mut out = self.clone();
        for v in out.data.iter_mut() {
            *v *= a;
        }
        for i in 0..self.n {
            out.add(i, i, b);
        }
        out
    }

    pub fn map<U: ComplexField<RealField = f64> + Copy>(&self, f: impl Fn(T) -> U) -> Banded<U> {
        Banded { n: self.n, kl: self.kl, ku: self.ku, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn to_dense(&self) -> DMatrix<T> {
        let mut d = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for j in self.row_range(i) {
                d[(i, j)] = self.get(i, j);
            }
        }
        d
    }

    /// Max absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.n)
            .map(|i| self.row_range(i).map(|j| self.get(i, j).modulus()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn lu(&self) -> Result<BandedLu<T>> {
        BandedLu::factor(self)
    }
}

#[derive(Debug, Clone)]
pub struct BandedLu<T> {
    n: usize,
    kl: usize,
    /// Upper bandwidth of U, `ku + kl`.
    ku: usize,
    data: Vec<T>,
    piv: Vec<usize>,
}

impl<T: ComplexField<RealField = f64> + Copy> BandedLu<T> {
    fn width(&self) -> usize {
        self.kl + self.ku + 1
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.width() + j + self.kl - i
    }

    fn factor(a: &Banded<T>) -> Result<Self> {
        let n = a.n;
        let kl = a.kl;
        let ku = a.ku + a.kl;
        let mut lu = Self { n, kl, ku, data: vec![T::zero(); n * (2 * kl + a.ku + 1)], piv: vec![0; n] };
        for i in 0..n {
            for j in a.row_range(i) {
                let k = lu.idx(i, j);
                lu.data[k] = a.get(i, j);
            }
        }
        let scale = a.norm_inf().max(f64::MIN_POSITIVE);
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = lu.data[lu.idx(k, k)].modulus();
            for i in k + 1..=last {
                let v = lu.data[lu.idx(i, k)].modulus();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            lu.piv[k] = p;
            if best <= 1e-300 * scale {
                return Err(Error::Singular(k));
            }
            let jmax = (k + ku).min(n - 1);
            if p != k {
                for j in k..=jmax {
                    let (a1, a2) = (lu.idx(k, j), lu.idx(p, j));
                    lu.data.swap(a1, a2);
                }
            }
            let pivot = lu.data[lu.idx(k, k)];
            for i in k + 1..=last {
                let ik = lu.idx(i, k);
                let l = lu.data[ik] / pivot;
                lu.data[ik] = l;
                if l == T::zero() {
                    continue;
                }
                for j in k + 1..=jmax {
                    let kj = lu.data[lu.idx(k, j)];
                    let ij = lu.idx(i, j);
                    lu.data[ij] -= l * kj;
                }
            }
        }
        Ok(lu)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, b: &mut [T]) {
        let n = self.n;
        assert_eq!(b.len(), n);
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            for i in k + 1..=(k + self.kl).min(n - 1) {
                b[i] -= self.data[self.idx(i, k)] * bk;
            }
        }
        for k in (0..n).rev() {
            let mut s = b[k];
            for j in k + 1..=(k + self.ku).min(n - 1) {
                s -= self.data[self.idx(k, j)] * b[j];
            }
            b[k] = s / self.data[self.idx(k, k)];
        }
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    /// Solves `A^T x = b` with the factors of `A`.
    pub fn solve_transpose_in_place(&self, b: &mut [T]) {
        let n = self.n;
        assert_eq!(b.len(), n);
        for k in 0..n {
            let mut s = b[k];
            for j in k.saturating_sub(self.ku)..k {
                s -= self.data[self.idx(j, k)] * b[j];
            }
            b[k] = s / self.data[self.idx(k, k)];
        }
        for k in (0..n).rev() {
            let mut s = b[k];
            for i in k + 1..=(k + self.kl).min(n - 1) {
                s -= self.data[self.idx(i, k)] * b[i];
            }
            b[k] = s;
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
        }
    }

    pub fn solve_transpose(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        self.solve_transpose_in_place(&mut x);
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    fn sample(n: usize, kl: usize, ku: usize) -> Banded<f64> {
        let mut t = Vec::new();
        for i in 0..n {
            for j in i.saturating_sub(kl)..(i + ku + 1).min(n) {
                let v = ((i * 7 + j * 13) % 11) as f64 - 5.0 + if i == j { 0.5 } else { 0.0 };
                t.push((i, j, v));
            }
        }
        Banded::from_triplets(n, &t)
    }

    #[test]
    fn lu_matches_dense_solve() {
        let a = sample(40, 3, 2);
        let b: Vec<f64> = (0..40).map(|i| (i as f64).sin()).collect();
        let x = a.lu().unwrap().solve(&b);
        let xd = a.to_dense().lu().solve(&DVector::from_vec(b.clone())).unwrap();
        for i in 0..40 {
            assert!((x[i] - xd[i]).abs() < 1e-9 * (1.0 + xd[i].abs()));
        }
        let xt = a.lu().unwrap().solve_transpose(&b);
        let xtd = a.to_dense().transpose().lu().solve(&DVector::from_vec(b)).unwrap();
        for i in 0..40 {
            assert!((xt[i] - xtd[i]).abs() < 1e-9 * (1.0 + xtd[i].abs()));
        }
    }

    #[test]
    fn transpose_product_is_consistent() {
        let a = sample(17, 1, 4);
        let x: Vec<f64> = (0..17).map(|i| i as f64 * 0.3 - 1.0).collect();
        let y = a.transpose().mul_vec(&x);
        let z = a.mul_vec_transpose(&x);
        for i in 0..17 {
            assert!((y[i] - z[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_matrix_is_reported() {
        let a = Banded::<f64>::zeros(5, 1, 1);
        assert!(matches!(a.lu(), Err(Error::Singular(0))));
    }
}
