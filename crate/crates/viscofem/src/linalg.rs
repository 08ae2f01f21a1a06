//! Thin helpers over `sprs` CSR matrices and the LDLᵀ direct solver.

use sprs::{CsMat, FillInReduction, SymmetryCheck, TriMat};
use sprs_ldl::{Ldl, LdlNumeric};

use crate::error::{Error, Result};

pub type SpMat = CsMat<f64>;

/// Builds a CSR matrix from triplets; duplicates are summed in input order.
pub fn from_triplets(rows: usize, cols: usize, entries: &[(usize, usize, f64)]) -> SpMat {
    let mut tri = TriMat::with_capacity((rows, cols), entries.len());
    for &(i, j, v) in entries {
        tri.add_triplet(i, j, v);
    }
    tri.to_csr()
}

pub fn identity(n: usize) -> SpMat {
    CsMat::eye(n)
}

pub fn zeros(rows: usize, cols: usize) -> SpMat {
    CsMat::zero((rows, cols))
}

/// `y = A x` for CSR `A`.
pub fn matvec(a: &SpMat, x: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.cols(), x.len());
    let csr;
    let a = if a.is_csr() {
        a
    } else {
        csr = a.to_csr();
        &csr
    };
    a.outer_iterator().map(|row| row.iter().map(|(j, v)| v * x[j]).sum()).collect()
}

/// `y = Aᵀ x` for CSR `A`.
pub fn matvec_t(a: &SpMat, x: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.rows(), x.len());
    let mut y = vec![0.0; a.cols()];
    for (i, row) in a.outer_iterator().enumerate() {
        let xi = x[i];
        if xi == 0.0 {
            continue;
        }
        for (j, v) in row.iter() {
            y[j] += v * xi;
        }
    }
    y
}

pub fn transpose(a: &SpMat) -> SpMat {
    a.transpose_view().to_csr()
}

pub fn mul(a: &SpMat, b: &SpMat) -> SpMat {
    (a * b).to_csr()
}

/// `Lᵀ A R`.
pub fn sandwich(left: &SpMat, a: &SpMat, right: &SpMat) -> SpMat {
    let lt = transpose(left);
    mul(&lt, &mul(a, right))
}

/// `A + s B` with matching shapes.
pub fn add_scaled(a: &SpMat, s: f64, b: &SpMat) -> SpMat {
    let scaled = b.map(|v| v * s);
    (a + &scaled).to_csr()
}

/// Block-expands a scalar operator to `ncomp` interleaved components.
pub fn kron_identity(a: &SpMat, ncomp: usize) -> SpMat {
    if ncomp == 1 {
        return a.clone();
    }
    let mut entries = Vec::with_capacity(a.nnz() * ncomp);
    for (i, row) in a.outer_iterator().enumerate() {
        for (j, v) in row.iter() {
            for c in 0..ncomp {
                entries.push((i * ncomp + c, j * ncomp + c, *v));
            }
        }
    }
    from_triplets(a.rows() * ncomp, a.cols() * ncomp, &entries)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

/// `vᵀ A v`.
pub fn quad_form(a: &SpMat, v: &[f64]) -> f64 {
    dot(v, &matvec(a, v))
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

pub fn is_symmetric(a: &SpMat, tol: f64) -> bool {
    let t = transpose(a);
    let diff = (a - &t).to_csr();
    diff.data().iter().all(|v| v.abs() <= tol)
}

/// Sparse LDLᵀ factorization of an SPD matrix.
pub struct Factor {
    n: usize,
    ldl: Option<LdlNumeric<f64, usize>>,
}

impl Factor {
    pub fn new(a: &SpMat) -> Result<Self> {
        let n = a.rows();
        if n != a.cols() {
            return Err(Error::LinearSolveFailure(format!("non-square matrix {}x{}", n, a.cols())));
        }
        if n == 0 {
            return Ok(Factor { n, ldl: None });
        }
        // the reordering needs exact symmetry; assembly leaves roundoff asymmetry
        let sym = add_scaled(a, 1.0, &transpose(a)).map(|v| 0.5 * v);
        let csr = sym.to_csr();
        let ldl = Ldl::new()
            .fill_in_reduction(FillInReduction::ReverseCuthillMcKee)
            .check_symmetry(SymmetryCheck::DontCheckSymmetry)
            .numeric(csr.view())
            .map_err(|e| Error::LinearSolveFailure(format!("{e:?}")))?;
        if let Some(d) = ldl.d().iter().find(|d| !(**d > 0.0) || !d.is_finite()) {
            return Err(Error::LinearSolveFailure(format!("non-positive pivot {d}")));
        }
        Ok(Factor { n, ldl: Some(ldl) })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        match &self.ldl {
            None => Vec::new(),
            Some(ldl) => ldl.solve(rhs),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ldl_solves_tridiagonal() {
        let n = 5;
        let mut e = Vec::new();
        for i in 0..n {
            e.push((i, i, 2.0));
            if i + 1 < n {
                e.push((i, i + 1, -1.0));
                e.push((i + 1, i, -1.0));
            }
        }
        let a = from_triplets(n, n, &e);
        let f = Factor::new(&a).unwrap();
        let x = f.solve(&[1.0; 5]);
        let r = matvec(&a, &x);
        for v in r {
            assert_relative_eq!(v, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn sandwich_matches_dense() {
        let a = from_triplets(2, 2, &[(0, 0, 2.0), (1, 1, 3.0), (0, 1, 1.0), (1, 0, 1.0)]);
        let e = from_triplets(2, 1, &[(0, 0, 1.0), (1, 0, 0.5)]);
        let s = sandwich(&e, &a, &e);
        assert_relative_eq!(s.get(0, 0).copied().unwrap(), 2.0 + 1.0 + 0.75, epsilon = 1e-14);
    }
}
