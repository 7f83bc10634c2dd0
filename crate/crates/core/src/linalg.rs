//! Sparse direct solves (faer LU), a dense reference solver, and a Lanczos
//! estimate of the smallest generalized singular value of a constraint block.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, MatMut, Side};

use crate::error::{Error, Result};
use crate::sparse::{dot, norm2, SparseMatrix, TripletBuilder};

/// Relative residual above which a solve is refined.
pub const REFINE_THRESHOLD: f64 = 1e-10;
const MAX_REFINEMENT: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearSolveReport {
    pub relative_residual: f64,
    pub refinement_steps: usize,
    pub nnz: usize,
}

/// LU factorization of a square sparse matrix, reusable across right-hand sides.
pub struct Factorization {
    matrix: SparseMatrix,
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
}

impl std::fmt::Debug for Factorization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Factorization")
            .field("n", &self.matrix.nrows())
            .field("nnz", &self.matrix.nnz())
            .finish()
    }
}

impl Factorization {
    pub fn new(a: &SparseMatrix) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::InvalidArgument(format!(
                "cannot factor a {}x{} matrix",
                a.nrows(),
                a.ncols()
            )));
        }
        let n = a.nrows();
        let triplets: Vec<_> = a.triplets().map(|(r, c, v)| Triplet::new(r, c, v)).collect();
        let csc = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets)
            .map_err(|e| Error::InvalidArgument(format!("sparse matrix construction failed: {e:?}")))?;
        let lu = csc.sp_lu().map_err(|e| match e {
            faer::sparse::linalg::LuError::SymbolicSingular { index } => Error::SingularSystem {
                pivot: Some(index),
                detail: "structurally singular".into(),
            },
            other => Error::SingularSystem {
                pivot: None,
                detail: format!("{other:?}"),
            },
        })?;
        let fac = Self { matrix: a.clone(), lu };
        // Numerically singular factors show up as non-finite or inaccurate solves.
        let probe: Vec<f64> = (0..n).map(|i| 1.0 + (i % 7) as f64 * 0.125).collect();
        let b = a.mul_vec(&probe);
        let x = fac.raw_solve(&b);
        let ax = a.mul_vec(&x);
        let res: Vec<f64> = b.iter().zip(&ax).map(|(u, v)| u - v).collect();
        let rel = norm2(&res) / norm2(&b).max(f64::MIN_POSITIVE);
        if !rel.is_finite() || rel > 1e-6 {
            return Err(Error::SingularSystem {
                pivot: None,
                detail: format!("probe solve residual {rel:e}"),
            });
        }
        Ok(fac)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    fn raw_solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        let n = x.len();
        self.lu.solve_in_place(MatMut::from_column_major_slice_mut(&mut x, n, 1));
        x
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.solve_with_report(b).map(|(x, _)| x)
    }

    /// Solves and refines while the relative residual exceeds [`REFINE_THRESHOLD`].
    pub fn solve_with_report(&self, b: &[f64]) -> Result<(Vec<f64>, LinearSolveReport)> {
        if b.len() != self.dim() {
            return Err(Error::InvalidArgument(format!(
                "right-hand side has length {}, expected {}",
                b.len(),
                self.dim()
            )));
        }
        let bnorm = norm2(b).max(f64::MIN_POSITIVE);
        let mut x = self.raw_solve(b);
        let mut steps = 0;
        let mut rel;
        loop {
            let ax = self.matrix.mul_vec(&x);
            let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
            rel = norm2(&r) / bnorm;
            if !rel.is_finite() {
                return Err(Error::SingularSystem {
                    pivot: None,
                    detail: "non-finite solution".into(),
                });
            }
            if rel <= REFINE_THRESHOLD || steps == MAX_REFINEMENT || norm2(b) == 0.0 {
                break;
            }
            let dx = self.raw_solve(&r);
            x.iter_mut().zip(&dx).for_each(|(a, d)| *a += d);
            steps += 1;
        }
        Ok((
            x,
            LinearSolveReport {
                relative_residual: rel,
                refinement_steps: steps,
                nnz: self.matrix.nnz(),
            },
        ))
    }
}

pub fn solve_sparse(a: &SparseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    Factorization::new(a)?.solve(b)
}

/// Gaussian elimination with partial pivoting; a reference for small systems.
pub fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    for k in 0..n {
        let p = (k..n)
            .max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))
            .unwrap();
        if a[p][k].abs() <= 1e-14 * scale {
            return Err(Error::SingularSystem {
                pivot: Some(k),
                detail: "zero pivot in dense elimination".into(),
            });
        }
        a.swap(k, p);
        b.swap(k, p);
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            if f == 0.0 {
                continue;
            }
            for j in k..n {
                a[i][j] -= f * a[k][j];
            }
            b[i] -= f * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|j| a[k][j] * x[j]).sum();
        x[k] = (b[k] - s) / a[k][k];
    }
    Ok(x)
}

/// Symmetric positive definite operator given by its action.
pub trait SymmetricOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64]) -> Vec<f64>;
}

impl SymmetricOperator for SparseMatrix {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.mul_vec(x)
    }
}

/// `y ↦ C^T A^{-1} C y` for SPD `A`.
pub struct SchurOperator {
    coupling: SparseMatrix,
    inner: Factorization,
}

impl SchurOperator {
    /// `coupling` has shape `dim(A) x k`.
    pub fn new(coupling: SparseMatrix, a: &SparseMatrix) -> Result<Self> {
        Ok(Self {
            inner: Factorization::new(a)?,
            coupling,
        })
    }
}

impl SymmetricOperator for SchurOperator {
    fn dim(&self) -> usize {
        self.coupling.ncols()
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let t = self.inner.solve(&self.coupling.mul_vec(x)).expect("schur inner solve");
        self.coupling.mul_vec_transposed(&t)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SingularValueEstimate {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Smallest `β` with `β² = min_y (y^T B Mx^{-1} B^T y) / (y^T My y)`.
///
/// Runs Lanczos with full reorthogonalization on `S^{-1} My`, which is
/// self-adjoint in the `My` inner product; its largest eigenvalue is `1/β²`.
/// `S^{-1}` is applied through the saddle point matrix `[Mx B^T; B 0]`.
pub fn smallest_generalized_singular_value(
    b: &SparseMatrix,
    mx: &SparseMatrix,
    my: &dyn SymmetricOperator,
    tol: f64,
    max_iter: usize,
) -> Result<SingularValueEstimate> {
    let (ny, nx) = (b.nrows(), b.ncols());
    if mx.nrows() != nx || my.dim() != ny {
        return Err(Error::InvalidArgument("inner product sizes do not match the constraint".into()));
    }
    if ny == 0 {
        return Err(Error::InvalidArgument("empty constraint space".into()));
    }
    let mut builder = TripletBuilder::new(nx + ny, nx + ny);
    builder.add_block(0, 0, mx, 1.0);
    builder.add_block_transposed(0, nx, b, 1.0);
    builder.add_block(nx, 0, b, 1.0);
    let saddle = Factorization::new(&builder.build())?;
    let schur_inverse = |r: &[f64]| -> Result<Vec<f64>> {
        let mut rhs = vec![0.0; nx + ny];
        rhs[nx..].iter_mut().zip(r).for_each(|(a, b)| *a = -b);
        Ok(saddle.solve(&rhs)?[nx..].to_vec())
    };

    let max_iter = max_iter.min(ny);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut my_basis: Vec<Vec<f64>> = Vec::new();
    let (mut alpha, mut beta) = (Vec::new(), Vec::new());
    // Deterministic start vector with components in every direction.
    let mut v: Vec<f64> = (0..ny).map(|i| 1.0 + ((i * 7919) % 13) as f64 / 13.0).collect();
    let mut mv = my.apply(&v);
    let nrm = dot(&v, &mv).sqrt();
    v.iter_mut().for_each(|x| *x /= nrm);
    mv.iter_mut().for_each(|x| *x /= nrm);
    let mut previous = f64::NAN;
    let mut estimate = SingularValueEstimate {
        value: f64::NAN,
        iterations: 0,
        converged: false,
    };
    for k in 0..max_iter {
        basis.push(v.clone());
        my_basis.push(mv.clone());
        let mut w = schur_inverse(&mv)?;
        let a = dot(&w, &mv);
        alpha.push(a);
        // Full reorthogonalization (twice) in the My inner product.
        for _ in 0..2 {
            for (q, mq) in basis.iter().zip(&my_basis) {
                let c = dot(&w, mq);
                w.iter_mut().zip(q).for_each(|(wi, qi)| *wi -= c * qi);
            }
        }
        let theta = largest_tridiagonal_eigenvalue(&alpha, &beta)?;
        let value = (1.0 / theta).sqrt();
        estimate = SingularValueEstimate {
            value,
            iterations: k + 1,
            converged: false,
        };
        if (value - previous).abs() <= tol * value {
            estimate.converged = true;
            break;
        }
        previous = value;
        let mw = my.apply(&w);
        let bnext = dot(&w, &mw).max(0.0).sqrt();
        if bnext <= 1e-13 * theta {
            // Invariant subspace found: the Ritz value is exact.
            estimate.converged = true;
            break;
        }
        beta.push(bnext);
        v = w.iter().map(|x| x / bnext).collect();
        mv = mw.iter().map(|x| x / bnext).collect();
    }
    if estimate.iterations == ny {
        estimate.converged = true;
    }
    Ok(estimate)
}

fn largest_tridiagonal_eigenvalue(alpha: &[f64], beta: &[f64]) -> Result<f64> {
    let n = alpha.len();
    let t = Mat::<f64>::from_fn(n, n, |i, j| {
        if i == j {
            alpha[i]
        } else if i == j + 1 {
            beta[j]
        } else if j == i + 1 {
            beta[i]
        } else {
            0.0
        }
    });
    let eig = t
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|_| Error::NoConvergence {
            iterations: n,
            residual: f64::NAN,
        })?;
    Ok(eig[n - 1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn laplacian_1d(n: usize) -> SparseMatrix {
        let mut e = Vec::new();
        for i in 0..n {
            e.push((i, i, 2.0));
            if i + 1 < n {
                e.push((i, i + 1, -1.0));
                e.push((i + 1, i, -1.0));
            }
        }
        SparseMatrix::from_triplets(n, n, &e)
    }

    #[test]
    fn sparse_matches_dense() {
        let a = laplacian_1d(20).add_scaled(&SparseMatrix::from_triplets(20, 20, &[(0, 5, 0.3)]), 1.0);
        let b: Vec<f64> = (0..20).map(|i| (i as f64).sin()).collect();
        let x = solve_sparse(&a, &b).unwrap();
        let y = dense_solve(a.to_dense(), b.clone()).unwrap();
        for (u, v) in x.iter().zip(&y) {
            assert!((u - v).abs() < 1e-12);
        }
        let (_, report) = Factorization::new(&a).unwrap().solve_with_report(&b).unwrap();
        assert!(report.relative_residual < 1e-12);
        assert_eq!(report.nnz, a.nnz());
    }

    #[test]
    fn singular_matrices_are_reported() {
        let a = SparseMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)]);
        assert!(matches!(Factorization::new(&a), Err(Error::SingularSystem { .. })));
        let z = SparseMatrix::from_triplets(2, 2, &[(0, 0, 1.0)]);
        assert!(matches!(Factorization::new(&z), Err(Error::SingularSystem { .. })));
        assert!(dense_solve(a.to_dense(), vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn wrong_rhs_length_is_rejected() {
        let f = Factorization::new(&SparseMatrix::identity(3)).unwrap();
        assert!(matches!(f.solve(&[1.0]), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn singular_value_of_diagonal_constraint() {
        // B = [I 0], Mx = diag(d), My = I: S = diag(1/d_i), beta^2 = 1/max d.
        let d = [1.0, 4.0, 2.0, 9.0, 3.0];
        let mx = SparseMatrix::from_diagonal(&d);
        let b = SparseMatrix::from_triplets(3, 5, &[(0, 0, 1.0), (1, 1, 1.0), (2, 3, 1.0)]);
        let est = smallest_generalized_singular_value(&b, &mx, &SparseMatrix::identity(3), 1e-12, 50).unwrap();
        assert!((est.value - (1.0f64 / 9.0).sqrt()).abs() < 1e-10);
        assert!(est.converged);
    }

    #[test]
    fn schur_operator_matches_explicit_product() {
        let a = laplacian_1d(6);
        let c = SparseMatrix::from_triplets(6, 2, &[(0, 0, 1.0), (3, 1, 1.0), (5, 1, 2.0)]);
        let op = SchurOperator::new(c.clone(), &a).unwrap();
        let y = [0.5, -1.0];
        let t = dense_solve(a.to_dense(), c.mul_vec(&y)).unwrap();
        let expected = c.mul_vec_transposed(&t);
        for (u, v) in op.apply(&y).iter().zip(&expected) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn singular_value_matches_dense_eigenvalue(
            diag in prop::collection::vec(1.0f64..5.0, 4),
            off in prop::collection::vec(-0.5f64..0.5, 8),
        ) {
            // My = I, Mx = I, B 2x4: beta = smallest singular value of B.
            let b = SparseMatrix::from_triplets(2, 4, &[
                (0, 0, diag[0]), (0, 1, off[0]), (0, 2, off[1]), (0, 3, off[2]),
                (1, 0, off[3]), (1, 1, diag[1]), (1, 2, off[4]), (1, 3, off[5]),
            ]);
            let bb = b.to_dense();
            let g = |i: usize, j: usize| (0..4).map(|k| bb[i][k] * bb[j][k]).sum::<f64>();
            let (a, c, d) = (g(0, 0), g(0, 1), g(1, 1));
            let lmin = 0.5 * (a + d) - (0.25 * (a - d) * (a - d) + c * c).sqrt();
            let est = smallest_generalized_singular_value(&b, &SparseMatrix::identity(4), &SparseMatrix::identity(2), 1e-12, 10).unwrap();
            prop_assert!((est.value - lmin.sqrt()).abs() < 1e-9 * lmin.sqrt().max(1.0));
        }
    }
}
