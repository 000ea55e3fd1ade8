//! Closed-form cyclic Higgs-bundle data: the functions μ_j and φ_j, the
//! asymptotic slopes of the metric, the constant twist U and the cylinder
//! grid used by the later stages.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::spectral::ChainParams;

/// μ_j(s) = e^{−βs/k} − ω^{2j+1} e^{βs/k}.
pub fn mu(p: &ChainParams, j: usize, s: Complex64) -> Complex64 {
    let e = (s * (p.beta / p.k as f64)).exp();
    1.0 / e - p.omega_pow(2 * j as i64 + 1) * e
}

/// dμ_j/ds.
pub fn dmu(p: &ChainParams, j: usize, s: Complex64) -> Complex64 {
    let b = p.beta / p.k as f64;
    let e = (s * b).exp();
    -b / e - p.omega_pow(2 * j as i64 + 1) * b * e
}

/// Indices i ∈ ℤ_k with i·l ≡ j (mod k).
pub fn phi_factors(p: &ChainParams, j: usize) -> Vec<usize> {
    (0..p.k).filter(|&i| (i * p.l) % p.k == j % p.k).collect()
}

/// φ_j(s) = ∏ μ_i(s) over i·l ≡ j (mod k).
pub fn phi_component(p: &ChainParams, j: usize, s: Complex64) -> Complex64 {
    phi_factors(p, j)
        .into_iter()
        .fold(Complex64::new(1.0, 0.0), |acc, i| acc * mu(p, i, s))
}

/// dφ_j/ds by the product rule.
pub fn dphi_component(p: &ChainParams, j: usize, s: Complex64) -> Complex64 {
    let idx = phi_factors(p, j);
    let vals: Vec<Complex64> = idx.iter().map(|&i| mu(p, i, s)).collect();
    idx.iter()
        .enumerate()
        .map(|(a, &i)| {
            vals.iter()
                .enumerate()
                .filter(|&(b, _)| b != a)
                .fold(dmu(p, i, s), |acc, (_, v)| acc * v)
        })
        .sum()
}

/// Coefficient of |x¹| in ψ_j at large |x¹|.
pub fn asymptotic_slope(p: &ChainParams, j: usize) -> f64 {
    let m = p.m as f64;
    (2.0 * p.beta / p.k as f64) * ((m - 1.0) / 2.0 - (j % p.m) as f64)
}

pub fn slopes(p: &ChainParams) -> Vec<f64> {
    (0..p.k).map(|j| asymptotic_slope(p, j)).collect()
}

/// Diagonal entries d_j = ω^{−3l − 2m⌊j/m⌋} of the twist U = Σ^{2l} diag(d_j).
pub fn twist_diagonal(p: &ChainParams) -> Vec<Complex64> {
    (0..p.k)
        .map(|j| p.omega_pow(-3 * p.l as i64 - 2 * (p.m * (j / p.m)) as i64))
        .collect()
}

/// Cyclic shift Σ with Σe_j = e_{j+1}.
pub fn shift_matrix(k: usize) -> DMatrix<Complex64> {
    let mut s = DMatrix::zeros(k, k);
    for j in 0..k {
        s[((j + 1) % k, j)] = Complex64::new(1.0, 0.0);
    }
    s
}

pub fn twist_matrix(p: &ChainParams) -> DMatrix<Complex64> {
    let k = p.k;
    let d = twist_diagonal(p);
    let mut u = DMatrix::zeros(k, k);
    for j in 0..k {
        u[((j + 2 * p.l) % k, j)] = d[j];
    }
    u
}

/// U_j(s) evaluated from its defining product v(s)v(s+πi/β)w(s)⁻¹ω^{−4l}ω^{−2m⌊j/m⌋}
/// with v = e^{βls/k} and w = e^{2βls/k}.
pub fn twist_entry_from_gauge(p: &ChainParams, j: usize, s: Complex64) -> Complex64 {
    let lk = p.l as f64 / p.k as f64;
    let v = |s: Complex64| (s * (p.beta * lk)).exp();
    let w = (s * (2.0 * p.beta * lk)).exp();
    let half = Complex64::new(0.0, PI / p.beta);
    v(s) * v(s + half) / w * p.omega_pow(-4 * p.l as i64) * p.omega_pow(-2 * (p.m * (j / p.m)) as i64)
}

/// Largest deviation of the gauge-derived U_j(s) from the constant diagonal.
pub fn twist_s_dependence(p: &ChainParams, samples: &[Complex64]) -> f64 {
    let d = twist_diagonal(p);
    samples
        .iter()
        .flat_map(|&s| (0..p.k).map(move |j| (j, s)))
        .map(|(j, s)| (twist_entry_from_gauge(p, j, s) - d[j]).norm())
        .fold(0.0, f64::max)
}

/// Holomorphic-gauge Higgs field c^{1/k} Σ⁻¹ diag(φ_0, …, φ_{k−1}).
pub fn higgs_holomorphic(p: &ChainParams, s: Complex64) -> DMatrix<Complex64> {
    let k = p.k;
    let c = p.c_root();
    let mut phi = DMatrix::zeros(k, k);
    for j in 0..k {
        phi[((j + k - 1) % k, j)] = c * phi_component(p, j, s);
    }
    phi
}

/// Coefficients of det(ζ − A), lowest degree first (monic, length n+1),
/// by the Faddeev–LeVerrier recursion.
pub fn charpoly(a: &DMatrix<Complex64>) -> Vec<Complex64> {
    let n = a.nrows();
    let mut coef = vec![Complex64::new(0.0, 0.0); n + 1];
    coef[n] = Complex64::new(1.0, 0.0);
    let mut mk = DMatrix::<Complex64>::zeros(n, n);
    for step in 1..=n {
        let mut next = a * &mk;
        for i in 0..n {
            next[(i, i)] += coef[n - step + 1];
        }
        mk = next;
        let am = a * &mk;
        coef[n - step] = -am.trace() / step as f64;
    }
    coef
}

/// Max deviation of the characteristic-polynomial coefficients of φ(s) from
/// ζ^k − c(w + 1/w), w = e^{βs}, over the samples.
pub fn spectral_curve_check(p: &ChainParams, samples: &[Complex64]) -> f64 {
    let c = p.c();
    samples
        .iter()
        .map(|&s| {
            let cp = charpoly(&higgs_holomorphic(p, s));
            let w = (s * p.beta).exp();
            let mut r = (cp[0] + c * (w + 1.0 / w)).norm();
            for a in &cp[1..p.k] {
                r = r.max(a.norm());
            }
            r
        })
        .fold(0.0, f64::max)
}

/// |∏_j φ_j(s) − 2cosh(βs)|.
pub fn product_identity_residual(p: &ChainParams, s: Complex64) -> f64 {
    let prod = (0..p.k).fold(Complex64::new(1.0, 0.0), |acc, j| acc * phi_component(p, j, s));
    (prod - 2.0 * (s * p.beta).cosh()).norm()
}

/// Relative residual of φ_j(s + πi/β) = ω^{−m}φ_{j+l}(s) (j ≡ 0 mod m),
/// φ_{j+l}(s) otherwise.
pub fn shift_identity_residual(p: &ChainParams, j: usize, s: Complex64) -> f64 {
    let lhs = phi_component(p, j, s + Complex64::new(0.0, PI / p.beta));
    let mut rhs = phi_component(p, (j + p.l) % p.k, s);
    if j % p.m == 0 {
        rhs *= p.omega_pow(-(p.m as i64));
    }
    (lhs - rhs).norm() / lhs.norm().max(rhs.norm()).max(1e-300)
}

/// Zero s_p = (2p−1)πi/(2β) of 2cosh(βs) and the component expected to vanish there.
pub fn zero_assignment(p: &ChainParams, pidx: usize) -> (Complex64, usize) {
    let s = Complex64::new(0.0, (2.0 * pidx as f64 - 1.0) * PI / (2.0 * p.beta));
    let j = ((-(p.l as i64) * pidx as i64).rem_euclid(p.k as i64)) as usize;
    (s, j)
}

/// Evaluators bundled with their parameters.
#[derive(Clone, Debug)]
pub struct AnsatzFields {
    pub params: ChainParams,
    pub twist_u: DMatrix<Complex64>,
    pub slope: Vec<f64>,
}

impl AnsatzFields {
    pub fn new(params: &ChainParams) -> Self {
        Self {
            params: params.clone(),
            twist_u: twist_matrix(params),
            slope: slopes(params),
        }
    }

    pub fn mu(&self, j: usize, s: Complex64) -> Complex64 {
        mu(&self.params, j, s)
    }

    pub fn phi(&self, j: usize, s: Complex64) -> Complex64 {
        phi_component(&self.params, j, s)
    }
}

/// Uniform grid on [−L, L] × [0, 2π/β), periodic in x².
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CylinderGrid {
    pub half_length: f64,
    pub n_r: usize,
    pub n_t: usize,
    pub h_r: f64,
    pub h_t: f64,
}

impl CylinderGrid {
    pub fn new(half_length: f64, n_r: usize, n_t: usize, beta: f64) -> Result<Self> {
        if !(half_length > 0.0) || !half_length.is_finite() {
            return Err(Error::InvalidParameter("half length must be positive".into()));
        }
        if n_r < 4 || n_r % 2 != 0 {
            return Err(Error::InvalidParameter(format!("n_r must be even and >= 4, got {n_r}")));
        }
        if n_t < 3 {
            return Err(Error::InvalidParameter(format!("n_t must be >= 3, got {n_t}")));
        }
        Ok(Self {
            half_length,
            n_r,
            n_t,
            h_r: 2.0 * half_length / (n_r - 1) as f64,
            h_t: 2.0 * PI / beta / n_t as f64,
        })
    }

    pub fn x1(&self, i: usize) -> f64 {
        -self.half_length + i as f64 * self.h_r
    }

    pub fn x2(&self, t: usize) -> f64 {
        t as f64 * self.h_t
    }

    pub fn s(&self, i: usize, t: usize) -> Complex64 {
        Complex64::new(self.x1(i), self.x2(t))
    }

    pub fn len(&self) -> usize {
        self.n_r * self.n_t
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Trapezoid weight in x¹ times the periodic weight in x².
    pub fn weight(&self, i: usize) -> f64 {
        let w = if i == 0 || i + 1 == self.n_r { 0.5 } else { 1.0 };
        w * self.h_r * self.h_t
    }
}

/// Default half-length max(6/β, 3k/β).
pub fn default_half_length(p: &ChainParams) -> f64 {
    (6.0 / p.beta).max(3.0 * p.k as f64 / p.beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::build_params;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn mu_values() {
        let p = build_params(1, 0, 1.0, 0.0, 1.0).unwrap();
        assert!((mu(&p, 0, c(0.0, 0.0)) - 2.0).norm() < 1e-15);
        let p = build_params(2, 0, 1.0, 0.0, 1.0).unwrap();
        assert!((mu(&p, 0, c(0.0, 0.0)) - c(1.0, -1.0)).norm() < 1e-15);
    }

    #[test]
    fn factor_sets() {
        let p = build_params(4, 2, 1.0, 0.0, 1.0).unwrap();
        assert_eq!(phi_factors(&p, 0), vec![0, 2]);
        assert_eq!(phi_factors(&p, 2), vec![1, 3]);
        assert!(phi_factors(&p, 1).is_empty());
        let p = build_params(4, 0, 1.0, 0.0, 1.0).unwrap();
        assert_eq!(phi_factors(&p, 0), vec![0, 1, 2, 3]);
        assert!(phi_factors(&p, 3).is_empty());
    }

    #[test]
    fn slope_values() {
        let b = 2.0 * PI * 0.6;
        let p = build_params(4, 2, 1.0, 0.0, b).unwrap();
        assert!((asymptotic_slope(&p, 0) - b / 4.0).abs() < 1e-15);
        assert!((asymptotic_slope(&p, 1) + b / 4.0).abs() < 1e-15);
        let p = build_params(1, 0, 1.0, 0.0, b).unwrap();
        assert_eq!(asymptotic_slope(&p, 0), 0.0);
    }

    #[test]
    fn twist_small_cases() {
        let p = build_params(1, 0, 1.0, 0.0, 1.0).unwrap();
        assert!((twist_matrix(&p)[(0, 0)] - 1.0).norm() < 1e-15);
        let p = build_params(2, 0, 1.0, 0.0, 1.0).unwrap();
        let u = twist_matrix(&p);
        assert!((u - DMatrix::identity(2, 2)).iter().all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn dphi_matches_difference_quotient() {
        let p = build_params(4, 0, 1.0, 0.0, 2.0).unwrap();
        let s = c(0.3, 0.7);
        let h = 1e-6;
        for j in 0..4 {
            let fd = (phi_component(&p, j, s + h) - phi_component(&p, j, s - h)) / (2.0 * h);
            assert!((fd - dphi_component(&p, j, s)).norm() < 1e-6 * fd.norm().max(1.0));
        }
    }

    #[test]
    fn charpoly_of_diagonal() {
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(1.0, 0.0), c(2.0, 0.0)]));
        let cp = charpoly(&a);
        assert!((cp[0] - 2.0).norm() < 1e-14);
        assert!((cp[1] + 3.0).norm() < 1e-14);
        assert!((cp[2] - 1.0).norm() < 1e-14);
    }

    #[test]
    fn grid_spacing() {
        let g = CylinderGrid::new(3.0, 64, 32, 2.0).unwrap();
        assert!((g.x1(63) - 3.0).abs() < 1e-14);
        assert!((g.h_t * 32.0 - PI).abs() < 1e-14);
        assert!(CylinderGrid::new(3.0, 63, 32, 2.0).is_err());
    }
}
