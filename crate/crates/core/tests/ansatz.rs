use std::f64::consts::PI;

use monochain::ansatz::{
    higgs_holomorphic, phi_component, product_identity_residual, shift_identity_residual, slopes, spectral_curve_check,
    twist_matrix, twist_s_dependence, zero_assignment, CylinderGrid,
};
use monochain::spectral::{build_params, ChainParams};
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;

const CASES: [(i64, i64); 5] = [(1, 0), (2, 1), (3, 1), (4, 2), (4, 0)];

fn params(case: usize, beta: f64, c_abs: f64, phase: f64) -> ChainParams {
    let (k, l) = CASES[case];
    build_params(k, l, c_abs, phase, beta).unwrap()
}

fn point(p: &ChainParams, x: f64, t: f64) -> Complex64 {
    Complex64::new(x, t * 2.0 * PI / p.beta)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn product_identity(case in 0..5usize, beta in 0.5..7.0f64, x in -1.5..1.5f64, t in 0.0..1.0f64) {
        let p = params(case, beta, 1.0, 0.0);
        let s = point(&p, x, t);
        let scale = (2.0 * (s * p.beta).cosh()).norm().max(1.0);
        prop_assert!(product_identity_residual(&p, s) / scale < 1e-10);
    }

    #[test]
    fn shift_identity(case in 0..5usize, beta in 0.5..7.0f64, x in -1.5..1.5f64, t in 0.0..1.0f64) {
        let p = params(case, beta, 1.0, 0.0);
        let s = point(&p, x, t);
        for j in 0..p.k {
            prop_assert!(shift_identity_residual(&p, j, s) < 1e-10);
        }
    }

    #[test]
    fn characteristic_polynomial(case in 0..5usize, beta in 0.5..7.0f64, c in 0.1..4.0f64, ph in -3.0..3.0f64,
                                 x in -1.0..1.0f64, t in 0.0..1.0f64, zr in -2.0..2.0f64, zi in -2.0..2.0f64) {
        let p = params(case, beta, c, ph);
        let s = point(&p, x, t);
        let scale = (2.0 * (s * p.beta).cosh()).norm().max(1.0) * c;
        prop_assert!(spectral_curve_check(&p, &[s]) / scale < 1e-10);
        // det(ζ − φ) by LU against ζ^k − c(w + 1/w)
        let z = Complex64::new(zr, zi);
        let a = DMatrix::from_diagonal_element(p.k, p.k, z) - higgs_holomorphic(&p, s);
        let expect = z.powu(p.k as u32) - p.c() * 2.0 * (s * p.beta).cosh();
        let det = a.lu().determinant();
        prop_assert!((det - expect).norm() / (scale + z.norm().powi(p.k as i32)) < 1e-10);
    }

    #[test]
    fn twist_is_constant(case in 0..5usize, beta in 0.5..7.0f64, x in -1.5..1.5f64, t in 0.0..1.0f64) {
        let p = params(case, beta, 1.0, 0.0);
        prop_assert!(twist_s_dependence(&p, &[point(&p, x, t)]) < 1e-10);
    }
}

#[test]
fn zeros_sit_on_assigned_components() {
    for case in 0..5 {
        let p = params(case, 1.3, 1.0, 0.0);
        for q in 1..=2 * p.k {
            let (s, j) = zero_assignment(&p, q);
            assert!((2.0 * (s * p.beta).cosh()).norm() < 1e-12);
            assert!(phi_component(&p, j, s).norm() < 1e-12, "case {case} p={q}");
        }
    }
}

#[test]
fn twist_is_unitary_of_order_dividing_2k() {
    for case in 0..5 {
        let p = params(case, 2.0, 1.0, 0.0);
        let u = twist_matrix(&p);
        let id = DMatrix::<Complex64>::identity(p.k, p.k);
        assert!((u.adjoint() * &u - &id).norm() < 1e-12);
        let mut pow = id.clone();
        for _ in 0..2 * p.k {
            pow = &u * pow;
        }
        assert!((pow - id).norm() < 1e-12, "case {case}");
    }
}

#[test]
fn slopes_sum_to_zero() {
    for case in 0..5 {
        let p = params(case, 2.0, 1.0, 0.0);
        assert!(slopes(&p).iter().sum::<f64>().abs() < 1e-12);
    }
    let p = build_params(1, 0, 1.0, 0.0, 1.0).unwrap();
    assert_eq!(slopes(&p), vec![0.0]);
}

#[test]
fn grid_rejects_bad_sizes() {
    assert!(CylinderGrid::new(1.0, 3, 8, 1.0).is_err());
    assert!(CylinderGrid::new(-1.0, 8, 8, 1.0).is_err());
    let g = CylinderGrid::new(2.0, 8, 8, 1.0).unwrap();
    assert_eq!(g.len(), 64);
}
