//! Dense and iterative symmetric eigen-solvers used throughout the crate.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Eigenvalues (ascending) and matching eigenvectors (columns) of a
/// symmetric matrix.
pub fn eigh(a: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(a);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| {
        eig.eigenvectors[(r, order[c])]
    });
    (values, vectors)
}

pub fn cholesky(b: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(b.clone())
        .ok_or_else(|| Error::SolverFailure(format!("{what} is not positive definite")))
}

/// Ascending eigenvalues and `b`-orthonormal eigenvectors of `a x = λ b x`
/// with `b` symmetric positive definite.
pub fn gen_eigh(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let chol = cholesky(b, "mass matrix")?;
    let l = chol.l();
    let y = l
        .solve_lower_triangular(a)
        .ok_or_else(|| Error::SolverFailure("triangular solve".into()))?;
    let c = l
        .solve_lower_triangular(&y.transpose())
        .ok_or_else(|| Error::SolverFailure("triangular solve".into()))?;
    let c = (&c + c.transpose()) * 0.5;
    let (values, z) = eigh(c);
    let x = l
        .transpose()
        .solve_upper_triangular(&z)
        .ok_or_else(|| Error::SolverFailure("triangular solve".into()))?;
    Ok((values, x))
}

/// Largest eigenvalue of `a x = λ b x`, i.e. `sup xᵀax / xᵀbx`.
pub fn gen_max(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    let (values, _) = gen_eigh(a, b)?;
    Ok(values.last().copied().unwrap_or(0.0))
}

/// Ascending eigenvalues of `a x = λ diag(d) x` by symmetric reduction.
pub fn gen_eigh_diag(a: &DMatrix<f64>, d: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
    let s: Vec<f64> = d.iter().map(|v| 1.0 / v.sqrt()).collect();
    let c = DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| s[i] * a[(i, j)] * s[j]);
    let c = (&c + c.transpose()) * 0.5;
    let (values, mut z) = eigh(c);
    for (i, si) in s.iter().enumerate() {
        z.row_mut(i).scale_mut(*si);
    }
    (values, z)
}

/// A symmetric generalized eigenproblem `A x = λ W x` accessed only through
/// matrix-vector products, together with a Krylov generator.
///
/// The generator must be self-adjoint in the `W` inner product with the
/// wanted eigenvectors at the top of its spectrum, for instance
/// `(A + sW)⁻¹W` for the smallest eigenvalues or `W⁻¹A` for the largest.
pub trait Pencil {
    fn dim(&self) -> usize;
    fn apply_a(&self, x: &DVector<f64>) -> DVector<f64>;
    fn apply_w(&self, x: &DVector<f64>) -> DVector<f64>;
    fn generate(&self, x: &DVector<f64>) -> Result<DVector<f64>>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Which {
    Smallest,
    Largest,
}

#[derive(Clone, Debug)]
pub struct KrylovOptions {
    pub block: usize,
    pub max_dim: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        Self {
            block: 8,
            max_dim: 400,
            tol: 1e-10,
            seed: 0x5eed,
        }
    }
}

pub struct RitzPairs {
    pub values: Vec<f64>,
    pub vectors: Vec<DVector<f64>>,
    pub residuals: Vec<f64>,
    pub basis_dim: usize,
}

/// Block Krylov iteration with full `W`-orthogonalisation and
/// Rayleigh–Ritz extraction on the pencil.
pub fn block_krylov<P: Pencil + ?Sized>(
    pencil: &P,
    k: usize,
    which: Which,
    opts: &KrylovOptions,
) -> Result<RitzPairs> {
    let n = pencil.dim();
    if k == 0 || n == 0 {
        return Ok(RitzPairs {
            values: vec![],
            vectors: vec![],
            residuals: vec![],
            basis_dim: 0,
        });
    }
    let k = k.min(n);
    let block = opts.block.max(k).min(n);
    let max_dim = opts.max_dim.max(2 * block + k).min(n);

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut q: Vec<DVector<f64>> = Vec::new();
    let mut wq: Vec<DVector<f64>> = Vec::new();
    let mut h = DMatrix::<f64>::zeros(0, 0);

    let mut pending: Vec<DVector<f64>> = (0..block)
        .map(|_| DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)))
        .collect();

    loop {
        let mut fresh = Vec::new();
        for mut v in pending.drain(..) {
            let norm0 = w_norm(pencil, &v);
            if norm0 == 0.0 || !norm0.is_finite() {
                continue;
            }
            for _ in 0..2 {
                for (qi, wqi) in q.iter().zip(&wq) {
                    let coef = wqi.dot(&v);
                    v.axpy(-coef, qi, 1.0);
                }
            }
            let wv = pencil.apply_w(&v);
            let norm = wv.dot(&v).max(0.0).sqrt();
            if norm <= 1e-10 * norm0 || q.len() >= n {
                continue;
            }
            v /= norm;
            let wv = wv / norm;
            q.push(v);
            wq.push(wv);
            fresh.push(q.len() - 1);
        }

        if !fresh.is_empty() {
            let dim = q.len();
            let mut grown = DMatrix::<f64>::zeros(dim, dim);
            grown.view_mut((0, 0), (h.nrows(), h.ncols())).copy_from(&h);
            for &j in &fresh {
                let aq = pencil.apply_a(&q[j]);
                for i in 0..dim {
                    let val = q[i].dot(&aq);
                    grown[(i, j)] = val;
                    grown[(j, i)] = val;
                }
            }
            h = grown;
        }

        let dim = q.len();
        let (values, s) = eigh((&h + h.transpose()) * 0.5);
        let picks: Vec<usize> = match which {
            Which::Smallest => (0..k.min(dim)).collect(),
            Which::Largest => (0..k.min(dim)).map(|i| dim - 1 - i).collect(),
        };
        let mut out_values = Vec::with_capacity(picks.len());
        let mut out_vectors = Vec::with_capacity(picks.len());
        let mut residuals = Vec::with_capacity(picks.len());
        let spread = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for &p in &picks {
            let mut y = DVector::zeros(n);
            for (i, qi) in q.iter().enumerate() {
                y.axpy(s[(i, p)], qi, 1.0);
            }
            let ay = pencil.apply_a(&y);
            let wy = pencil.apply_w(&y);
            let theta = values[p];
            let r = &ay - &wy * theta;
            let scale = (spread + theta.abs()) * wy.norm();
            residuals.push(if scale > 0.0 { r.norm() / scale } else { 0.0 });
            out_values.push(theta);
            out_vectors.push(y);
        }

        let converged = picks.len() == k && residuals.iter().all(|&r| r <= opts.tol);
        let exhausted = fresh.is_empty() || dim >= max_dim || dim >= n;
        if converged || exhausted {
            if !converged && dim < n && residuals.iter().any(|&r| r > opts.tol.sqrt()) {
                return Err(Error::SolverFailure(format!(
                    "block Krylov stalled at dimension {dim} (worst residual {:.2e})",
                    residuals.iter().cloned().fold(0.0, f64::max)
                )));
            }
            return Ok(RitzPairs {
                values: out_values,
                vectors: out_vectors,
                residuals,
                basis_dim: dim,
            });
        }

        for j in fresh {
            pending.push(pencil.generate(&q[j])?);
        }
    }
}

fn w_norm<P: Pencil + ?Sized>(pencil: &P, v: &DVector<f64>) -> f64 {
    pencil.apply_w(v).dot(v).max(0.0).sqrt()
}

/// Compressed sparse row matrix, only what the iterative paths need.
#[derive(Clone, Debug)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from `(row, col, value)` triplets, summing duplicates.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by_key(|t| (t.0, t.1));
        let mut row_ptr = vec![0; n + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut prev: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if prev == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
                continue;
            }
            prev = Some((r, c));
            cols.push(c);
            vals.push(v);
            row_ptr[r + 1] += 1;
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.n, |i, _| {
            (self.row_ptr[i]..self.row_ptr[i + 1])
                .map(|p| self.vals[p] * x[self.cols[p]])
                .sum()
        })
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                (self.row_ptr[i]..self.row_ptr[i + 1])
                    .find(|&p| self.cols[p] == i)
                    .map_or(0.0, |p| self.vals[p])
            })
            .collect()
    }
}

/// Jacobi-preconditioned conjugate gradients for an SPD operator.
pub fn pcg(
    apply: impl Fn(&DVector<f64>) -> DVector<f64>,
    diag: &[f64],
    b: &DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<DVector<f64>> {
    let n = b.len();
    let mut x = DVector::zeros(n);
    let bnorm = b.norm();
    if bnorm == 0.0 {
        return Ok(x);
    }
    let precond = |r: &DVector<f64>| DVector::from_fn(n, |i, _| r[i] / diag[i]);
    let mut r = b.clone();
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = r.dot(&z);
    for _ in 0..max_iter {
        let ap = apply(&p);
        let alpha = rz / p.dot(&ap);
        x.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &ap, 1.0);
        if r.norm() <= tol * bnorm {
            return Ok(x);
        }
        z = precond(&r);
        let rz_next = r.dot(&z);
        p = &z + &p * (rz_next / rz);
        rz = rz_next;
    }
    Err(Error::SolverFailure(format!(
        "conjugate gradients did not reach {tol:e} in {max_iter} iterations"
    )))
}
