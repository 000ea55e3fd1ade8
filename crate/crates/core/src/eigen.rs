//! Smallest eigenpairs of a hermitian positive (semi)definite block-sparse
//! matrix by block Krylov iteration on the shifted inverse.

use crate::sparse::{factor, BlockMatrix, CholeskyFactor, Symbolic};
use crate::{Error, Result};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

type C64 = Complex64;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EigenOptions {
    /// Number of wanted eigenpairs.
    pub nev: usize,
    /// Block width; must be at least `nev`.
    pub block: usize,
    /// Krylov blocks generated per restart.
    pub depth: usize,
    pub max_restarts: usize,
    /// Residual tolerance relative to the Gershgorin bound of the matrix.
    pub tol: f64,
    /// Leading pairs held to `tol`; the remaining wanted pairs only need
    /// `tol_loose`, enough for eigenvalue accuracy since the Ritz value
    /// error is quadratic in the residual.
    pub strict: usize,
    pub tol_loose: f64,
    /// First shift tried for the factorization of A + σI.
    pub shift: f64,
    pub seed: u64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            nev: 3,
            block: 4,
            depth: 3,
            max_restarts: 40,
            tol: 1e-9,
            strict: 2,
            tol_loose: 1e-6,
            shift: 1e-3,
            seed: 7,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EigenResult {
    /// Ascending Ritz values, `block` of them.
    pub values: Vec<f64>,
    /// Euclidean-orthonormal Ritz vectors matching `values`.
    pub vectors: Vec<Vec<C64>>,
    /// ‖A x − θ x‖ for each Ritz pair.
    pub residuals: Vec<f64>,
    pub converged: bool,
    pub restarts: usize,
    /// Shift actually used by the factorization.
    pub shift: f64,
    /// Gershgorin bound of A.
    pub norm: f64,
}

pub(crate) fn dot(a: &[C64], b: &[C64]) -> C64 {
    let mut s = [C64::new(0.0, 0.0); 2];
    let mut it = a.chunks_exact(2).zip(b.chunks_exact(2));
    for (x, y) in &mut it {
        s[0] += x[0].conj() * y[0];
        s[1] += x[1].conj() * y[1];
    }
    let mut tot = s[0] + s[1];
    if a.len() % 2 == 1 {
        let n = a.len() - 1;
        tot += a[n].conj() * b[n];
    }
    tot
}

fn norm(a: &[C64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn axpy(alpha: C64, x: &[C64], y: &mut [C64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Orthogonalizes `v` against `basis` twice and normalizes it. Returns
/// false when `v` is numerically inside span(basis).
fn orthonormalize_against(v: &mut [C64], basis: &[Vec<C64>]) -> bool {
    let before = norm(v);
    if before == 0.0 {
        return false;
    }
    for _ in 0..2 {
        for q in basis {
            let c = dot(q, v);
            axpy(-c, q, v);
        }
    }
    let after = norm(v);
    if after <= 1e-10 * before {
        return false;
    }
    v.iter_mut().for_each(|z| *z /= after);
    true
}

fn random_vector(n: usize, rng: &mut ChaCha8Rng) -> Vec<C64> {
    (0..n)
        .map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
        .collect()
}

/// Factors A + σI, quadrupling σ until the factorization succeeds.
pub fn shifted_factor(sym: &Symbolic, a: &BlockMatrix<C64>, shift: f64) -> Result<(CholeskyFactor<C64>, f64)> {
    let mut s = shift.max(1e-14);
    for _ in 0..24 {
        match factor(sym, a, s) {
            Ok(f) => return Ok((f, s)),
            Err(Error::Factorization(_)) => s *= 4.0,
            Err(e) => return Err(e),
        }
    }
    Err(Error::Factorization(format!(
        "no positive definite shift up to {s:.3e}"
    )))
}

/// Lowest `opts.block` eigenpairs of `a`. `start` seeds the first block
/// (warm start); missing columns are filled with seeded random vectors.
pub fn smallest_eigenpairs(
    sym: &Symbolic,
    a: &BlockMatrix<C64>,
    opts: &EigenOptions,
    start: &[Vec<C64>],
) -> Result<EigenResult> {
    if opts.block < opts.nev || opts.nev == 0 {
        return Err(Error::InvalidParameter("block width must cover nev".into()));
    }
    let n = a.dim();
    let p = opts.block;
    if n < p * (opts.depth + 1) {
        return Err(Error::InvalidParameter("matrix too small for the Krylov basis".into()));
    }
    let anorm = a.norm_bound();
    let (fac, shift) = shifted_factor(sym, a, opts.shift)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let mut x: Vec<Vec<C64>> = Vec::with_capacity(p);
    for v in start.iter().take(p) {
        let mut v = v.clone();
        if v.len() == n && orthonormalize_against(&mut v, &x) {
            x.push(v);
        }
    }
    while x.len() < p {
        let mut v = random_vector(n, &mut rng);
        if orthonormalize_against(&mut v, &x) {
            x.push(v);
        }
    }

    let mut rhs = vec![C64::new(0.0, 0.0); n * p];
    let mut last = EigenResult {
        values: vec![],
        vectors: vec![],
        residuals: vec![],
        converged: false,
        restarts: 0,
        shift,
        norm: anorm,
    };
    for restart in 0..opts.max_restarts.max(1) {
        let mut basis: Vec<Vec<C64>> = x.clone();
        let mut block_start = 0;
        for _ in 0..opts.depth {
            let block: Vec<Vec<C64>> = basis[block_start..].to_vec();
            let m = block.len();
            if m == 0 {
                break;
            }
            block_start = basis.len();
            let r = &mut rhs[..n * m];
            for (q, v) in block.iter().enumerate() {
                for (d, z) in v.iter().enumerate() {
                    r[d * m + q] = *z;
                }
            }
            fac.solve_in_place(r, m);
            for q in 0..m {
                let mut w: Vec<C64> = (0..n).map(|d| r[d * m + q]).collect();
                if orthonormalize_against(&mut w, &basis) {
                    basis.push(w);
                }
            }
        }

        let nb = basis.len();
        let mut av = vec![vec![C64::new(0.0, 0.0); n]; nb];
        for (v, out) in basis.iter().zip(av.iter_mut()) {
            a.matvec(v, out);
        }
        let mut h = DMatrix::<C64>::zeros(nb, nb);
        for i in 0..nb {
            for j in i..nb {
                let z = dot(&basis[i], &av[j]);
                h[(i, j)] = z;
                h[(j, i)] = z.conj();
            }
            h[(i, i)] = C64::new(h[(i, i)].re, 0.0);
        }
        let eig = nalgebra::SymmetricEigen::new(h);
        let mut order: Vec<usize> = (0..nb).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));

        let mut values = Vec::with_capacity(p);
        let mut vectors = Vec::with_capacity(p);
        let mut residuals = Vec::with_capacity(p);
        for &col in order.iter().take(p) {
            let theta = eig.eigenvalues[col];
            let mut v = vec![C64::new(0.0, 0.0); n];
            let mut w = vec![C64::new(0.0, 0.0); n];
            for j in 0..nb {
                let c = eig.eigenvectors[(j, col)];
                axpy(c, &basis[j], &mut v);
                axpy(c, &av[j], &mut w);
            }
            axpy(C64::new(-theta, 0.0), &v, &mut w);
            values.push(theta);
            residuals.push(norm(&w));
            vectors.push(v);
        }
        let converged = residuals[..opts.nev].iter().enumerate().all(|(i, &r)| {
            let tol = if i < opts.strict {
                opts.tol
            } else {
                opts.tol.max(opts.tol_loose)
            };
            r <= tol * anorm
        });
        // Ritz vectors lose orthogonality only at roundoff level; restore it
        // before they seed the next cycle or leave the solver.
        let mut ortho: Vec<Vec<C64>> = Vec::with_capacity(p);
        for mut v in vectors {
            if !orthonormalize_against(&mut v, &ortho) {
                v = random_vector(n, &mut rng);
                orthonormalize_against(&mut v, &ortho);
            }
            ortho.push(v);
        }
        last = EigenResult {
            values,
            vectors: ortho.clone(),
            residuals,
            converged,
            restarts: restart,
            shift,
            norm: anorm,
        };
        if converged {
            break;
        }
        x = ortho;
    }
    Ok(last)
}

/// Dense reference: all eigenvalues of `a`, ascending.
pub fn dense_eigenvalues(a: &BlockMatrix<C64>) -> Vec<f64> {
    let n = a.dim();
    let d = a.to_dense();
    let m = DMatrix::from_row_slice(n, n, &d);
    let mut ev: Vec<f64> = nalgebra::SymmetricEigen::new(m).eigenvalues.iter().cloned().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::GridTopology;
    use std::sync::Arc;

    fn laplacian(ni: usize, nt: usize, b: usize) -> BlockMatrix<C64> {
        let topo = Arc::new(GridTopology::new(ni, nt, true));
        let mut a = BlockMatrix::zeros(topo.clone(), b);
        for i in 0..ni {
            for t in 0..nt {
                let u = topo.node(i, t);
                for r in 0..b {
                    a.add_diagonal(u, r, 4.0 + 0.1 * r as f64 + 0.01 * i as f64);
                    if i + 1 < ni {
                        a.add_coupling(u, r, topo.node(i + 1, t), r, C64::new(-1.0, 0.0));
                    }
                    let ph = C64::from_polar(1.0, 0.3 + 0.1 * r as f64);
                    a.add_coupling(u, r, topo.node(i, (t + 1) % nt), r, -ph);
                }
                a.add_coupling(u, 0, u, 1, C64::new(0.2, 0.1));
            }
        }
        a
    }

    #[test]
    fn matches_dense_spectrum() {
        let a = laplacian(6, 5, 2);
        let sym = Symbolic::nested_dissection(a.topology().clone(), 4);
        let opts = EigenOptions {
            tol: 1e-11,
            strict: 3,
            ..Default::default()
        };
        let res = smallest_eigenpairs(&sym, &a, &opts, &[]).unwrap();
        assert!(res.converged);
        let dense = dense_eigenvalues(&a);
        for i in 0..3 {
            assert!((res.values[i] - dense[i]).abs() < 1e-9 * dense[i].abs().max(1.0));
        }
        for i in 0..3 {
            for j in 0..3 {
                let g = dot(&res.vectors[i], &res.vectors[j]);
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((g - C64::new(want, 0.0)).norm() < 1e-12);
            }
        }
    }
}
