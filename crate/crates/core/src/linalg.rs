//! Sparse and banded linear algebra used by the field and structural solvers.

use crate::error::{Error, Result};

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from `(row, col, value)` triplets. Duplicates are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nrows];
        for &(i, j, v) in triplets {
            if i >= nrows || j >= ncols {
                return Err(Error::invalid(format!(
                    "triplet ({i}, {j}) outside a {nrows}x{ncols} matrix"
                )));
            }
            rows[i].push((j, v));
        }
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        indptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(j, _)| j);
            let mut last: Option<usize> = None;
            for (j, v) in row {
                if last == Some(j) {
                    *values.last_mut().unwrap() += v;
                } else {
                    indices.push(j);
                    values.push(v);
                    last = Some(j);
                }
            }
            indptr.push(indices.len());
        }
        Ok(Self { nrows, ncols, indptr, indices, values })
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Entries of row `i` as `(col, value)` pairs.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.indptr[i]..self.indptr[i + 1];
        self.indices[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    /// Entry `(i, j)`, zero if not stored.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.indptr[i]..self.indptr[i + 1];
        match self.indices[r.clone()].binary_search(&j) {
            Ok(k) => self.values[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows).map(|i| self.get(i, i)).collect()
    }

    /// y = A x
    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.indptr[i]..self.indptr[i + 1] {
                s += self.values[k] * x[self.indices[k]];
            }
            *yi = s;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// Returns `scale * self + diag(d)`. Diagonal entries missing from the
    /// pattern are inserted.
    pub fn scaled_plus_diagonal(&self, scale: f64, d: &[f64]) -> CsrMatrix {
        assert_eq!(d.len(), self.nrows);
        let mut trip = Vec::with_capacity(self.nnz() + self.nrows);
        for (i, &di) in d.iter().enumerate() {
            for (j, v) in self.row(i) {
                trip.push((i, j, scale * v));
            }
            trip.push((i, i, di));
        }
        CsrMatrix::from_triplets(self.nrows, self.ncols, &trip).expect("indices in range")
    }

    /// Principal submatrix on the rows/columns where `keep` is true, with
    /// the map from old to new indices.
    pub fn principal_submatrix(&self, keep: &[bool]) -> (CsrMatrix, Vec<Option<usize>>) {
        let mut map = vec![None; self.nrows];
        let mut n = 0;
        for (i, &k) in keep.iter().enumerate() {
            if k {
                map[i] = Some(n);
                n += 1;
            }
        }
        let mut trip = Vec::new();
        for i in 0..self.nrows {
            let Some(ii) = map[i] else { continue };
            for (j, v) in self.row(i) {
                if let Some(jj) = map[j] {
                    trip.push((ii, jj, v));
                }
            }
        }
        (CsrMatrix::from_triplets(n, n, &trip).expect("indices in range"), map)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Outcome of a converged conjugate-gradient solve.
#[derive(Debug, Clone, Copy)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
}

/// Jacobi-preconditioned conjugate gradients for symmetric positive
/// definite `a`. `x` holds the initial guess and receives the solution.
/// Convergence is declared when `|r| <= tol * |b|`.
pub fn pcg(a: &CsrMatrix, b: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> Result<SolveStats> {
    let n = b.len();
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats { iterations: 0, residual: 0.0 });
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .into_iter()
        .map(|d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();

    let mut r = a.mul_vec(x);
    r.iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut rel = norm2(&r) / bnorm;

    for it in 0..max_iter {
        if rel <= tol {
            return Ok(SolveStats { iterations: it, residual: rel });
        }
        a.mul_vec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::LinearSolver { iterations: it, residual: rel });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rel = norm2(&r) / bnorm;
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    if rel <= tol {
        Ok(SolveStats { iterations: max_iter, residual: rel })
    } else {
        Err(Error::LinearSolver { iterations: max_iter, residual: rel })
    }
}

/// Square band matrix with `kl` sub- and `ku` super-diagonals.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    // row-major, each row holds columns i-kl ..= i+kl+ku (extra room for pivoting fill)
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        Self { n, kl, ku, data: vec![0.0; n * (2 * kl + ku + 1)] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn width(&self) -> usize {
        2 * self.kl + self.ku + 1
    }

    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let off = j as isize - i as isize + self.kl as isize;
        if off < 0 || off as usize >= self.width() || i >= self.n || j >= self.n {
            None
        } else {
            Some(i * self.width() + off as usize)
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |k| self.data[k])
    }

    /// Adds `v` at `(i, j)`. Panics outside the declared band.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(
            j + self.kl >= i && j <= i + self.ku,
            "entry ({i}, {j}) outside band kl={} ku={}",
            self.kl,
            self.ku
        );
        let k = self.slot(i, j).expect("inside band");
        self.data[k] += v;
    }

    /// Zeroes row `i` and puts `d` on its diagonal.
    pub fn set_identity_row(&mut self, i: usize, d: f64) {
        let w = self.width();
        self.data[i * w..(i + 1) * w].iter_mut().for_each(|v| *v = 0.0);
        let k = self.slot(i, i).unwrap();
        self.data[k] = d;
    }

    /// Zeroes column `j` within the band and puts `d` on its diagonal.
    pub fn set_identity_col(&mut self, j: usize, d: f64) {
        let lo = j.saturating_sub(self.ku);
        let hi = (j + self.kl).min(self.n - 1);
        for i in lo..=hi {
            if let Some(k) = self.slot(i, j) {
                self.data[k] = if i == j { d } else { 0.0 };
            }
        }
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

    /// Solves `A x = b` by LU with partial pivoting, consuming the matrix.
    pub fn solve(mut self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.n;
        let (kl, ku) = (self.kl, self.ku);
        let w = self.width();
        let mut x = b.to_vec();
        let scale = self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return Err(Error::invalid("singular band matrix"));
        }
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let (mut p, mut pv) = (k, 0.0);
            for i in k..=last {
                let v = self.get(i, k).abs();
                if v > pv {
                    p = i;
                    pv = v;
                }
            }
            if pv <= 1e-14 * scale {
                return Err(Error::invalid(format!("singular band matrix at pivot {k}")));
            }
            let cmax = (k + kl + ku).min(n - 1);
            if p != k {
                for j in k..=cmax {
                    let a = self.slot(k, j).unwrap();
                    let c = self.slot(p, j).unwrap();
                    self.data.swap(a, c);
                }
                x.swap(k, p);
            }
            let piv = self.get(k, k);
            for i in (k + 1)..=last {
                let s = self.slot(i, k).unwrap();
                let m = self.data[s] / piv;
                if m == 0.0 {
                    continue;
                }
                self.data[s] = 0.0;
                for j in (k + 1)..=cmax {
                    let src = self.data[k * w + (j + kl - k)];
                    if let Some(d) = self.slot(i, j) {
                        self.data[d] -= m * src;
                    }
                }
                x[i] -= m * x[k];
            }
        }
        for k in (0..n).rev() {
            let cmax = (k + kl + ku).min(n - 1);
            let mut s = x[k];
            for (j, xj) in x.iter().enumerate().take(cmax + 1).skip(k + 1) {
                s -= self.get(k, j) * xj;
            }
            x[k] = s / self.get(k, k);
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    fn laplacian_1d(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, n, &t).unwrap()
    }

    #[test]
    fn triplet_duplicates_are_summed() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 0, 2.5), (1, 0, -1.0)]).unwrap();
        assert_eq!(a.get(0, 0), 3.5);
        assert_eq!(a.get(1, 0), -1.0);
        assert_eq!(a.get(1, 1), 0.0);
        assert_eq!(a.nnz(), 2);
    }

    #[test]
    fn out_of_range_triplet_rejected() {
        assert!(CsrMatrix::from_triplets(2, 2, &[(2, 0, 1.0)]).is_err());
    }

    #[test]
    fn pcg_matches_dense_solve() {
        let n = 40;
        let a = laplacian_1d(n).scaled_plus_diagonal(1.0, &vec![0.1; n]);
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut x = vec![0.0; n];
        let stats = pcg(&a, &b, &mut x, 1e-12, 1000).unwrap();
        assert!(stats.residual <= 1e-12);

        let dense = DMatrix::from_fn(n, n, |i, j| a.get(i, j));
        let exact = dense.lu().solve(&DVector::from_vec(b)).unwrap();
        for i in 0..n {
            assert!((x[i] - exact[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn pcg_reports_non_convergence() {
        let a = laplacian_1d(200);
        let b = vec![1.0; 200];
        let mut x = vec![0.0; 200];
        let err = pcg(&a, &b, &mut x, 1e-14, 3).unwrap_err();
        assert!(err.is_non_convergence());
    }

    #[test]
    fn band_lu_matches_dense() {
        let n = 30;
        let (kl, ku) = (3, 2);
        let mut band = BandMatrix::zeros(n, kl, ku);
        let mut dense = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i.saturating_sub(kl)..=(i + ku).min(n - 1) {
                // deliberately weak diagonal so pivoting kicks in
                let v = ((i * 7 + j * 13) % 11) as f64 - 5.0 + if i == j { 0.5 } else { 0.0 };
                band.add(i, j, v);
                dense[(i, j)] = v;
            }
        }
        let b: Vec<f64> = (0..n).map(|i| 1.0 + i as f64).collect();
        let y = band.mul_vec(&b);
        let yd = &dense * DVector::from_vec(b.clone());
        for i in 0..n {
            assert!((y[i] - yd[i]).abs() < 1e-12);
        }
        let x = band.solve(&b).unwrap();
        let exact = dense.lu().solve(&DVector::from_vec(b)).unwrap();
        for i in 0..n {
            assert!((x[i] - exact[i]).abs() < 1e-8 * exact.amax().max(1.0), "{i}");
        }
    }

    #[test]
    fn band_identity_rows() {
        let mut band = BandMatrix::zeros(4, 1, 1);
        for i in 0..4 {
            band.add(i, i, 2.0);
        }
        band.add(1, 0, 1.0);
        band.set_identity_row(1, 1.0);
        band.set_identity_col(1, 1.0);
        let x = band.solve(&[2.0, 3.0, 4.0, 6.0]).unwrap();
        assert_eq!(x, vec![1.0, 3.0, 2.0, 3.0]);
    }
}
