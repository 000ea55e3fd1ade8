use monochain::spectral::{
    build_lattice, build_params, classify, distinct_fixed_points, group_order, inclusion_matrix, quotient_structure,
    realify, smith_normal_form, verify_fixed_point, SpectralLattice,
};
use monochain::Error;
use nalgebra::DMatrix;
use num_complex::Complex64;

/// Fraction-free Gaussian elimination, exact on i128.
fn bareiss_det(a: &[Vec<i64>]) -> i128 {
    let n = a.len();
    let mut m: Vec<Vec<i128>> = a.iter().map(|r| r.iter().map(|&x| x as i128).collect()).collect();
    let mut sign = 1;
    let mut prev = 1i128;
    for p in 0..n {
        if m[p][p] == 0 {
            match (p + 1..n).find(|&r| m[r][p] != 0) {
                Some(r) => {
                    m.swap(p, r);
                    sign = -sign;
                }
                None => return 0,
            }
        }
        for i in p + 1..n {
            for j in p + 1..n {
                m[i][j] = (m[i][j] * m[p][p] - m[i][p] * m[p][j]) / prev;
            }
        }
        prev = m[p][p];
    }
    sign * m[n - 1][n - 1]
}

/// Γ-coordinates of Π₀..Π_{2k−3} from an LU solve, independent of the
/// library's lattice basis.
fn oracle_inclusion(lat: &SpectralLattice) -> Vec<Vec<i64>> {
    let n = 2 * lat.dim();
    let g = DMatrix::from_fn(n, n, |r, c| realify(&lat.gamma[c])[r]);
    let lu = g.lu();
    let mut out = vec![vec![0i64; n]; n];
    for c in 0..n {
        let x = lu.solve(&realify(&lat.pi[c])).unwrap();
        for r in 0..n {
            let v = x[r];
            assert!((v - v.round()).abs() < 1e-9, "non-integral coordinate {v}");
            out[r][c] = v.round() as i64;
        }
    }
    out
}

fn gamma_coordinates(lat: &SpectralLattice, v: &[Complex64]) -> Vec<f64> {
    let n = 2 * lat.dim();
    let g = DMatrix::from_fn(n, n, |r, c| realify(&lat.gamma[c])[r]);
    g.lu().solve(&realify(v)).unwrap().iter().copied().collect()
}

#[test]
fn group_order_matches_determinant_oracle() {
    for k in 2..=8 {
        let lat = build_lattice(k).unwrap();
        let a = oracle_inclusion(&lat);
        assert_eq!(a, inclusion_matrix(&lat).unwrap(), "k={k}");
        assert_eq!(bareiss_det(&a).unsigned_abs(), k as u128, "k={k}");
        assert_eq!(group_order(&lat).unwrap(), k as u64);
        let q = quotient_structure(&lat).unwrap();
        assert_eq!(q.gamma0_order, k as u64, "Γ₀ generates the quotient, k={k}");
    }
}

#[test]
fn smith_diagonal_divides_and_multiplies_to_det() {
    let a = vec![vec![2, 4, 4], vec![-6, 6, 12], vec![10, -4, -16]];
    let (d, _) = smith_normal_form(&a);
    let prod: i64 = d.iter().product();
    assert_eq!(prod.unsigned_abs() as i128, bareiss_det(&a).abs());
    for w in d.windows(2) {
        assert_eq!(w[1] % w[0], 0);
    }
    assert_eq!(d.iter().map(|x| x.abs()).collect::<Vec<_>>(), vec![2, 6, 12]);
}

#[test]
fn fixed_points_are_fixed_and_distinct() {
    for k in 2..=8 {
        let lat = build_lattice(k).unwrap();
        for l in 0..k {
            assert!(verify_fixed_point(&lat, l).unwrap() < 1e-10, "k={k} l={l}");
        }
        assert_eq!(distinct_fixed_points(&lat).unwrap(), k);
        // oracle: x_l − x_l' has a non-integral Γ-coordinate for l ≠ l'
        for l in 0..k {
            for m in l + 1..k {
                let d: Vec<Complex64> = lat.fixed_points[l]
                    .iter()
                    .zip(&lat.fixed_points[m])
                    .map(|(a, b)| a - b)
                    .collect();
                let x = gamma_coordinates(&lat, &d);
                assert!(x.iter().any(|v| (v - v.round()).abs() > 1e-6), "k={k} {l}~{m}");
            }
        }
    }
}

#[test]
fn k2_fixed_point_by_hand() {
    let lat = build_lattice(2).unwrap();
    assert!((lat.rho[0] - Complex64::i()).norm() < 1e-15);
    assert!((lat.pi[0][0] - Complex64::new(1.0, -1.0)).norm() < 1e-15);
    assert!((lat.fixed_points[1][0] - Complex64::new(0.5, 0.5)).norm() < 1e-15);
    let x = lat.fixed_points[1][0];
    assert!((lat.rho[0] * x - x + 1.0).norm() < 1e-15);
}

#[test]
fn root_of_unity_sums_vanish() {
    for k in 2..=16 {
        let lat = build_lattice(k).unwrap();
        for parity in 0..2 {
            for a in 0..lat.dim() {
                let s: Complex64 = (0..k).map(|i| lat.gamma[2 * i + parity][a]).sum();
                assert!(s.norm() < 1e-12, "k={k}");
            }
        }
        for i in 0..2 * k - 1 {
            for a in 0..lat.dim() {
                assert!((lat.pi[i][a] - (lat.gamma[i][a] - lat.gamma[i + 1][a])).norm() < 1e-12);
            }
        }
    }
}

#[test]
fn gamma_generators_have_full_rank() {
    for k in 2..=8 {
        let lat = build_lattice(k).unwrap();
        let n = 2 * lat.dim();
        let mut g = DMatrix::from_fn(n, n, |r, c| realify(&lat.gamma[c])[r]);
        for mut row in g.row_iter_mut() {
            let norm = row.norm();
            row /= norm;
        }
        assert!(g.singular_values().min() > 1e-8, "k={k}");
    }
}

#[test]
fn classification_charges() {
    let rep = classify(&build_params(4, 1, 1.0, 0.0, 1.0).unwrap()).unwrap();
    let charges: Vec<usize> = rep.entries.iter().map(|e| e.m).collect();
    assert_eq!(charges, vec![4, 1, 2, 1]);
    assert!(rep.odd_groups_empty);
    assert_eq!(rep.entries.iter().filter(|e| e.selected).count(), 1);

    let rep = classify(&build_params(1, 0, 1.0, 0.0, 1.0).unwrap()).unwrap();
    assert_eq!(rep.entries.len(), 1);
    assert_eq!(rep.entries[0].m, 1);

    assert_eq!(build_params(6, 4, 1.0, 0.0, 1.0).unwrap().m, 2);
    assert_eq!(build_params(4, 6, 1.0, 0.0, 1.0).unwrap().l, 2);
    assert_eq!(build_params(4, -1, 1.0, 0.0, 1.0).unwrap().l, 3);
}

#[test]
fn invalid_inputs() {
    assert!(matches!(build_lattice(0), Err(Error::InvalidParameter(_))));
    assert!(build_params(0, 0, 1.0, 0.0, 1.0).is_err());
    assert!(build_params(2, 0, 0.0, 0.0, 1.0).is_err());
    assert!(build_params(2, 0, 1.0, 0.0, -1.0).is_err());
    let lat = build_lattice(3).unwrap();
    assert!(verify_fixed_point(&lat, 3).is_err());
}
