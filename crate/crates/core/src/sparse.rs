//! Compressed-row matrices and a sparse LU wrapper.

use faer::linalg::solvers::SolveCore;
use faer::sparse::linalg::solvers::Lu;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Conj, MatMut};
use rayon::prelude::*;

#[derive(Debug, thiserror::Error)]
pub enum SparseError {
    #[error("sparse factorization failed: {0}")]
    Factor(String),
    #[error("dimension mismatch: {0}")]
    Shape(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Csr {
    pub nrows: usize,
    pub ncols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub data: Vec<f64>,
}

impl Csr {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Csr { nrows, ncols, indptr: vec![0; nrows + 1], indices: Vec::new(), data: Vec::new() }
    }

    /// Sums duplicate entries; explicit zeros are kept so sparsity patterns
    /// stay independent of the coefficient values.
    pub fn from_triplets(nrows: usize, ncols: usize, mut t: Vec<(usize, usize, f64)>) -> Self {
        t.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut indptr = vec![0; nrows + 1];
        let mut indices = Vec::with_capacity(t.len());
        let mut data: Vec<f64> = Vec::with_capacity(t.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in t {
            debug_assert!(i < nrows && j < ncols);
            if last == Some((i, j)) {
                *data.last_mut().unwrap() += v;
            } else {
                indices.push(j);
                data.push(v);
                indptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..nrows {
            indptr[i + 1] += indptr[i];
        }
        Csr { nrows, ncols, indptr, indices, data }
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.indptr[i]..self.indptr[i + 1]).map(move |k| (self.indices[k], self.data[k]))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).filter(|(c, _)| *c == j).map(|(_, v)| v).sum()
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        (0..self.nrows).flat_map(|i| self.row(i).map(move |(j, v)| (i, j, v))).collect()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows).into_par_iter().map(|i| self.row(i).map(|(j, v)| v * x[j]).sum()).collect()
    }

    pub fn matvec_transpose(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows);
        let mut y = vec![0.0; self.ncols];
        for i in 0..self.nrows {
            if x[i] != 0.0 {
                for (j, v) in self.row(i) {
                    y[j] += v * x[i];
                }
            }
        }
        y
    }

    pub fn transpose(&self) -> Csr {
        Csr::from_triplets(self.ncols, self.nrows, self.triplets().into_iter().map(|(i, j, v)| (j, i, v)).collect())
    }

    pub fn add(&self, other: &Csr) -> Csr {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut t = self.triplets();
        t.extend(other.triplets());
        Csr::from_triplets(self.nrows, self.ncols, t)
    }

    pub fn scale(&self, s: f64) -> Csr {
        let mut m = self.clone();
        m.data.iter_mut().for_each(|v| *v *= s);
        m
    }

    /// `x^T M y`.
    pub fn form(&self, x: &[f64], y: &[f64]) -> f64 {
        (0..self.nrows).map(|i| if x[i] == 0.0 { 0.0 } else { x[i] * self.row(i).map(|(j, v)| v * y[j]).sum::<f64>() }).sum()
    }

    /// Submatrix on the given rows and columns (global-to-local maps).
    pub fn select(&self, rows: &[Option<usize>], nr: usize, cols: &[Option<usize>], nc: usize) -> Csr {
        let mut t = Vec::new();
        for i in 0..self.nrows {
            if let Some(li) = rows[i] {
                for (j, v) in self.row(i) {
                    if let Some(lj) = cols[j] {
                        t.push((li, lj, v));
                    }
                }
            }
        }
        Csr::from_triplets(nr, nc, t)
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.triplets() {
            m[(i, j)] += v;
        }
        m
    }

    pub fn max_abs_diff(&self, other: &Csr) -> f64 {
        let d = self.add(&other.scale(-1.0));
        d.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Writes `row col value` lines (zero-based).
    pub fn write_coo(&self, w: &mut impl std::io::Write) -> std::io::Result<()> {
        writeln!(w, "{} {} {}", self.nrows, self.ncols, self.nnz())?;
        for (i, j, v) in self.triplets() {
            writeln!(w, "{i} {j} {v:?}")?;
        }
        Ok(())
    }
}

/// Sparse LU factorization (partial pivoting) of a square matrix.
pub struct SparseLu {
    n: usize,
    lu: Lu<usize, f64>,
}

impl std::fmt::Debug for SparseLu {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "SparseLu(n={})", self.n)
    }
}

impl SparseLu {
    pub fn new(m: &Csr) -> Result<Self, SparseError> {
        if m.nrows != m.ncols {
            return Err(SparseError::Shape(format!("{}x{} is not square", m.nrows, m.ncols)));
        }
        let t: Vec<Triplet<usize, usize, f64>> = m.triplets().into_iter().map(|(i, j, v)| Triplet::new(i, j, v)).collect();
        let a = SparseColMat::<usize, f64>::try_new_from_triplets(m.nrows, m.ncols, &t)
            .map_err(|e| SparseError::Factor(format!("{e:?}")))?;
        let lu = a.sp_lu().map_err(|e| SparseError::Factor(format!("{e:?}")))?;
        Ok(SparseLu { n: m.nrows, lu })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.lu.solve_in_place_with_conj(Conj::No, MatMut::from_column_major_slice_mut(&mut x, self.n, 1));
        x
    }

    pub fn solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.lu.solve_transpose_in_place_with_conj(Conj::No, MatMut::from_column_major_slice_mut(&mut x, self.n, 1));
        x
    }

    /// Solves for several right-hand sides stored column-major.
    pub fn solve_many(&self, b: &mut [f64], k: usize) {
        self.lu.solve_in_place_with_conj(Conj::No, MatMut::from_column_major_slice_mut(b, self.n, k));
    }
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += a * xi);
}

pub fn sub(x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(a, b)| a - b).collect()
}

pub fn add(x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(a, b)| a + b).collect()
}

pub fn scaled(a: f64, x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| a * v).collect()
}

pub fn max_abs(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}
