//! Maximally symmetric spectral data: chain parameters, the closed-form
//! period lattice of the Jacobian, fixed points of the cyclic action and the
//! integer-lattice checks behind the classification.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use num_integer::Integer;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Residual above which rounding to integer lattice coordinates is rejected.
pub const ROUNDING_TOL: f64 = 1e-8;
/// Largest accepted condition number of a lattice basis.
pub const MAX_CONDITION: f64 = 1e8;

/// Discrete and continuous inputs of a chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainParams {
    pub k: usize,
    pub l: usize,
    pub c_abs: f64,
    pub c_phase: f64,
    pub beta: f64,
    pub m: usize,
    pub omega: Complex64,
}

impl ChainParams {
    /// Circumference of the cylinder in the x² direction.
    pub fn period(&self) -> f64 {
        2.0 * PI / self.beta
    }

    pub fn c(&self) -> Complex64 {
        Complex64::from_polar(self.c_abs, self.c_phase)
    }

    /// Principal k-th root of c.
    pub fn c_root(&self) -> Complex64 {
        Complex64::from_polar(self.c_abs.powf(1.0 / self.k as f64), self.c_phase / self.k as f64)
    }

    /// ω raised to an arbitrary integer power, reduced mod 2k first.
    pub fn omega_pow(&self, e: i64) -> Complex64 {
        let n = 2 * self.k as i64;
        let r = e.rem_euclid(n);
        Complex64::from_polar(1.0, PI * r as f64 / self.k as f64)
    }
}

/// Builds validated chain parameters; `l` is reduced mod `k`.
pub fn build_params(k: i64, l: i64, c_abs: f64, c_phase: f64, beta: f64) -> Result<ChainParams> {
    if k < 1 {
        return Err(Error::InvalidParameter(format!("k must be positive, got {k}")));
    }
    if !(c_abs > 0.0) || !c_abs.is_finite() {
        return Err(Error::InvalidParameter(format!("|c| must be positive, got {c_abs}")));
    }
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::InvalidParameter(format!("beta must be positive, got {beta}")));
    }
    if !c_phase.is_finite() {
        return Err(Error::InvalidParameter("c_phase must be finite".into()));
    }
    let l = l.rem_euclid(k) as usize;
    let k = k as usize;
    Ok(ChainParams {
        k,
        l,
        c_abs,
        c_phase,
        beta,
        m: split_charge(k, l),
        omega: Complex64::from_polar(1.0, PI / k as f64),
    })
}

/// gcd(k, l) with the convention gcd(k, 0) = k.
pub fn split_charge(k: usize, l: usize) -> usize {
    if l % k == 0 {
        k
    } else {
        k.gcd(&(l % k))
    }
}

/// Period-lattice data of the Jacobian of the symmetric spectral curve.
///
/// Vectors have k−1 complex components; for k = 1 every list is made of
/// zero-length vectors.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectralLattice {
    pub k: usize,
    /// Diagonal of ρ.
    pub rho: Vec<Complex64>,
    pub gamma: Vec<Vec<Complex64>>,
    pub pi: Vec<Vec<Complex64>>,
    pub fixed_points: Vec<Vec<Complex64>>,
}

impl SpectralLattice {
    pub fn dim(&self) -> usize {
        self.k.saturating_sub(1)
    }

    pub fn rho_matrix(&self) -> DMatrix<Complex64> {
        DMatrix::from_diagonal(&DVector::from_vec(self.rho.clone()))
    }

    /// ρ applied to a vector.
    pub fn apply_rho(&self, v: &[Complex64]) -> Vec<Complex64> {
        v.iter().zip(&self.rho).map(|(x, r)| x * r).collect()
    }
}

pub fn build_lattice(k: usize) -> Result<SpectralLattice> {
    if k < 1 {
        return Err(Error::InvalidParameter("k must be positive".into()));
    }
    let d = k - 1;
    let rho: Vec<Complex64> = (1..k)
        .map(|a| -Complex64::from_polar(1.0, -PI * a as f64 / k as f64))
        .collect();
    let pow = |i: usize| -> Vec<Complex64> { rho.iter().map(|r| r.powu(i as u32)).collect() };
    let gamma: Vec<Vec<Complex64>> = (0..2 * k).map(pow).collect();
    let pi: Vec<Vec<Complex64>> = (0..2 * k)
        .map(|i| {
            rho.iter()
                .map(|r| r.powu(i as u32) * (Complex64::new(1.0, 0.0) - r))
                .collect()
        })
        .collect();
    let fixed_points = (0..k)
        .map(|l| {
            (0..d)
                .map(|a| Complex64::new(l as f64, 0.0) / (Complex64::new(1.0, 0.0) - rho[a]))
                .collect()
        })
        .collect();
    Ok(SpectralLattice {
        k,
        rho,
        gamma,
        pi,
        fixed_points,
    })
}

/// Real embedding (real parts, then imaginary parts).
pub fn realify(v: &[Complex64]) -> DVector<f64> {
    let d = v.len();
    DVector::from_fn(2 * d, |r, _| if r < d { v[r].re } else { v[r - d].im })
}

/// A full-rank real lattice basis with a cached inverse.
pub struct LatticeBasis {
    basis: DMatrix<f64>,
    inverse: DMatrix<f64>,
    pub condition: f64,
}

impl LatticeBasis {
    pub fn new(vectors: &[Vec<Complex64>]) -> Result<Self> {
        let n = vectors.len();
        let dim = vectors.first().map_or(0, |v| 2 * v.len());
        if n != dim {
            return Err(Error::IllConditionedLattice(format!(
                "{n} generators in real dimension {dim}"
            )));
        }
        let mut basis = DMatrix::zeros(dim, n);
        for (c, v) in vectors.iter().enumerate() {
            basis.set_column(c, &realify(v));
        }
        if n == 0 {
            return Ok(Self {
                inverse: basis.clone(),
                basis,
                condition: 1.0,
            });
        }
        let sv = basis.clone().svd(false, false).singular_values;
        let smax = sv.max();
        let smin = sv.min();
        let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        if !(condition < MAX_CONDITION) {
            return Err(Error::IllConditionedLattice(format!("condition number {condition:e}")));
        }
        let inverse = basis
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::IllConditionedLattice("singular basis".into()))?;
        Ok(Self {
            basis,
            inverse,
            condition,
        })
    }

    /// Real coordinates of `v` in this basis.
    pub fn coordinates(&self, v: &[Complex64]) -> DVector<f64> {
        &self.inverse * realify(v)
    }

    /// Rounds coordinates to integers and returns them with the remainder
    /// `v − Σ nᵢ bᵢ` (sup norm over real components).
    pub fn reduce(&self, v: &[Complex64]) -> (Vec<i64>, f64) {
        let x = self.coordinates(v);
        let n: Vec<i64> = x.iter().map(|c| c.round() as i64).collect();
        let nf = DVector::from_iterator(n.len(), n.iter().map(|&c| c as f64));
        let r = realify(v) - &self.basis * nf;
        (n, r.amax())
    }

    /// Integer coordinates of a lattice member, or an error when the rounding
    /// residual is too large.
    pub fn integer_coordinates(&self, v: &[Complex64]) -> Result<Vec<i64>> {
        let (n, r) = self.reduce(v);
        if r > ROUNDING_TOL {
            return Err(Error::IllConditionedLattice(format!("rounding residual {r:e}")));
        }
        Ok(n)
    }

    pub fn contains(&self, v: &[Complex64]) -> bool {
        self.reduce(v).1 <= ROUNDING_TOL
    }
}

/// Basis Π₀..Π_{2k−3} of the Jacobian lattice.
pub fn pi_basis(lat: &SpectralLattice) -> Result<LatticeBasis> {
    LatticeBasis::new(&lat.pi[..2 * lat.dim()])
}

/// Basis Γ₀..Γ_{2k−3} of the lattice generated by all Γᵢ.
pub fn gamma_basis(lat: &SpectralLattice) -> Result<LatticeBasis> {
    LatticeBasis::new(&lat.gamma[..2 * lat.dim()])
}

/// Smith normal form of a square integer matrix.
///
/// Returns the diagonal and the left transform `u` with `u·a·v = diag`.
pub fn smith_normal_form(a: &[Vec<i64>]) -> (Vec<i64>, Vec<Vec<i64>>) {
    let n = a.len();
    let mut m: Vec<Vec<i128>> = a.iter().map(|r| r.iter().map(|&x| x as i128).collect()).collect();
    let mut u: Vec<Vec<i128>> = (0..n).map(|i| (0..n).map(|j| (i == j) as i128).collect()).collect();
    for t in 0..n {
        // Pivot: smallest nonzero entry of the trailing block.
        let mut best: Option<(usize, usize)> = None;
        for i in t..n {
            for j in t..n {
                if m[i][j] != 0 && best.is_none_or(|(bi, bj)| m[i][j].abs() < m[bi][bj].abs()) {
                    best = Some((i, j));
                }
            }
        }
        let Some((pi, pj)) = best else { break };
        m.swap(t, pi);
        u.swap(t, pi);
        for row in m.iter_mut() {
            row.swap(t, pj);
        }
        loop {
            let mut dirty = false;
            for i in t + 1..n {
                if m[i][t] != 0 {
                    let q = m[i][t].div_euclid(m[t][t]);
                    row_axpy(&mut m, i, t, -q);
                    row_axpy(&mut u, i, t, -q);
                    if m[i][t] != 0 {
                        m.swap(t, i);
                        u.swap(t, i);
                        dirty = true;
                    }
                }
            }
            for j in t + 1..n {
                if m[t][j] != 0 {
                    let q = m[t][j].div_euclid(m[t][t]);
                    for row in m.iter_mut() {
                        row[j] -= q * row[t];
                    }
                    if m[t][j] != 0 {
                        for row in m.iter_mut() {
                            row.swap(t, j);
                        }
                        dirty = true;
                    }
                }
            }
            if dirty {
                continue;
            }
            // Divisibility: fold an offending row into the pivot row.
            let p = m[t][t];
            let bad = (t + 1..n).find(|&i| (t + 1..n).any(|j| m[i][j] % p != 0));
            match bad {
                Some(i) => {
                    row_axpy(&mut m, t, i, 1);
                    row_axpy(&mut u, t, i, 1);
                }
                None => break,
            }
        }
        if m[t][t] < 0 {
            for x in m[t].iter_mut() {
                *x = -*x;
            }
            for x in u[t].iter_mut() {
                *x = -*x;
            }
        }
    }
    let diag = (0..n).map(|i| m[i][i] as i64).collect();
    let u = u.iter().map(|r| r.iter().map(|&x| x as i64).collect()).collect();
    (diag, u)
}

fn row_axpy(m: &mut [Vec<i128>], dst: usize, src: usize, q: i128) {
    for j in 0..m[dst].len() {
        let s = m[src][j];
        m[dst][j] += q * s;
    }
}

/// Structure of the finite group Γ/Π.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuotientStructure {
    pub invariant_factors: Vec<i64>,
    pub order: u64,
    /// Order of the class of Γ₀.
    pub gamma0_order: u64,
}

/// Integer matrix whose columns are the Γ-coordinates of Π₀..Π_{2k−3}.
pub fn inclusion_matrix(lat: &SpectralLattice) -> Result<Vec<Vec<i64>>> {
    let gb = gamma_basis(lat)?;
    let n = 2 * lat.dim();
    let cols: Vec<Vec<i64>> = (0..n)
        .map(|i| gb.integer_coordinates(&lat.pi[i]))
        .collect::<Result<_>>()?;
    Ok((0..n).map(|r| (0..n).map(|c| cols[c][r]).collect()).collect())
}

pub fn quotient_structure(lat: &SpectralLattice) -> Result<QuotientStructure> {
    if lat.k < 2 {
        return Ok(QuotientStructure {
            invariant_factors: vec![],
            order: 1,
            gamma0_order: 1,
        });
    }
    let a = inclusion_matrix(lat)?;
    let (diag, u) = smith_normal_form(&a);
    if diag.contains(&0) {
        return Err(Error::IllConditionedLattice("Π does not have full rank in Γ".into()));
    }
    let order = diag.iter().map(|d| d.unsigned_abs()).product();
    // Γ₀ has Γ-coordinates e₀; its image under u is the first column of u.
    let gamma0_order = diag
        .iter()
        .enumerate()
        .map(|(i, &d)| (d / d.gcd(&u[i][0])).unsigned_abs())
        .fold(1u64, |acc, x| acc.lcm(&x));
    Ok(QuotientStructure {
        invariant_factors: diag,
        order,
        gamma0_order,
    })
}

/// |Γ/Π|, computed with the Smith normal form of the inclusion Π ⊂ Γ.
pub fn group_order(lat: &SpectralLattice) -> Result<u64> {
    Ok(quotient_structure(lat)?.order)
}

/// ‖ρx − x + lΓ₀‖∞ reduced modulo the lattice spanned by Π₀..Π_{2k−3},
/// with x the l-th fixed point.
pub fn verify_fixed_point(lat: &SpectralLattice, l: usize) -> Result<f64> {
    if l >= lat.k {
        return Err(Error::InvalidParameter(format!("l = {l} outside 0..{}", lat.k)));
    }
    if lat.k < 2 {
        return Ok(0.0);
    }
    let x = &lat.fixed_points[l];
    let rx = lat.apply_rho(x);
    let v: Vec<Complex64> = (0..lat.dim())
        .map(|a| rx[a] - x[a] + lat.gamma[0][a] * l as f64)
        .collect();
    Ok(pi_basis(lat)?.reduce(&v).1)
}

/// Checks that ρx − x lies in the lattice spanned by the Γᵢ for every fixed
/// point, i.e. that the fixed-point equation holds in the quotient.
pub fn fixed_point_in_lattice(lat: &SpectralLattice, l: usize) -> Result<bool> {
    if lat.k < 2 {
        return Ok(true);
    }
    let x = &lat.fixed_points[l];
    let rx = lat.apply_rho(x);
    let v: Vec<Complex64> = rx.iter().zip(x).map(|(a, b)| a - b).collect();
    Ok(gamma_basis(lat)?.contains(&v))
}

/// Number of pairwise non-congruent fixed points modulo the Γ lattice.
pub fn distinct_fixed_points(lat: &SpectralLattice) -> Result<usize> {
    if lat.k < 2 {
        return Ok(1);
    }
    let gb = gamma_basis(lat)?;
    let mut reps: Vec<&Vec<Complex64>> = Vec::new();
    for x in &lat.fixed_points {
        let congruent = reps.iter().any(|y| {
            let d: Vec<Complex64> = x.iter().zip(y.iter()).map(|(a, b)| a - b).collect();
            gb.contains(&d)
        });
        if !congruent {
            reps.push(x);
        }
    }
    Ok(reps.len())
}

/// One admissible symmetry group in the classification.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SymmetryEntry {
    pub k: usize,
    pub l: usize,
    pub m: usize,
    pub group: String,
    /// Fixed point of ρ as (re, im) pairs.
    pub fixed_point: Vec<[f64; 2]>,
    pub group_order: u64,
    pub fixed_point_residual: f64,
    pub selected: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub k: usize,
    pub entries: Vec<SymmetryEntry>,
    /// The groups Z_{2k}^{(2l+1)} admit no symmetric spectral data.
    pub odd_groups_empty: bool,
    pub distinct_fixed_points: usize,
}

pub fn classify(params: &ChainParams) -> Result<ClassificationReport> {
    let k = params.k;
    let lat = build_lattice(k)?;
    let order = if k >= 2 { group_order(&lat)? } else { 1 };
    let entries = (0..k)
        .map(|l| {
            Ok(SymmetryEntry {
                k,
                l,
                m: split_charge(k, l),
                group: format!("Z_{{{}}}^{{({})}}", 2 * k, 2 * l),
                fixed_point: lat.fixed_points[l].iter().map(|z| [z.re, z.im]).collect(),
                group_order: order,
                fixed_point_residual: verify_fixed_point(&lat, l)?,
                selected: l == params.l,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ClassificationReport {
        k,
        entries,
        odd_groups_empty: true,
        distinct_fixed_points: distinct_fixed_points(&lat)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn params_reduce_and_split() {
        let p = build_params(4, 6, 1.0, 0.0, 1.0).unwrap();
        assert_eq!((p.l, p.m), (2, 2));
        assert_eq!(build_params(4, 0, 1.0, 0.0, 1.0).unwrap().m, 4);
        let p = build_params(1, 0, 1.0, 0.0, 1.0).unwrap();
        assert_eq!(p.m, 1);
        assert!((p.omega + 1.0).norm() < 1e-15);
        assert!(build_params(0, 0, 1.0, 0.0, 1.0).is_err());
        assert!(build_params(2, 0, -1.0, 0.0, 1.0).is_err());
        assert!(build_params(2, 0, 1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn k2_lattice_by_hand() {
        let lat = build_lattice(2).unwrap();
        let i = Complex64::i();
        assert!((lat.rho[0] - i).norm() < 1e-15);
        assert!((lat.gamma[0][0] - 1.0).norm() < 1e-15);
        assert!((lat.pi[0][0] - (1.0 - i)).norm() < 1e-15);
        assert!(lat.fixed_points[0][0].norm() == 0.0);
        assert!((lat.fixed_points[1][0] - (1.0 + i) / 2.0).norm() < 1e-15);
        let x = &lat.fixed_points[1];
        let d = lat.apply_rho(x)[0] - x[0];
        assert!((d + 1.0).norm() < 1e-14);
    }

    #[test]
    fn smith_form_small() {
        let (d, _) = smith_normal_form(&[vec![2, 4, 4], vec![-6, 6, 12], vec![10, -4, -16]]);
        assert_eq!(d, vec![2, 6, 12]);
        let (d, _) = smith_normal_form(&[vec![1, -1], vec![1, 1]]);
        assert_eq!(d, vec![1, 2]);
    }

    #[test]
    fn k1_is_trivial() {
        let lat = build_lattice(1).unwrap();
        assert_eq!(lat.dim(), 0);
        assert_eq!(lat.fixed_points.len(), 1);
        assert_eq!(verify_fixed_point(&lat, 0).unwrap(), 0.0);
        let p = build_params(1, 0, 1.0, 0.0, 1.0).unwrap();
        let rep = classify(&p).unwrap();
        assert_eq!(rep.entries.len(), 1);
        assert_eq!(rep.entries[0].m, 1);
    }
}
