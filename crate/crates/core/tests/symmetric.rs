//! Elementary symmetric functions against independent oracles: subset
//! enumeration, principal minors of symmetric matrices, and golden spectra.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use proptest::prelude::*;
use serde::Deserialize;

use khessian::symmetric::{
    garding_pairing, generalized_spectrum, in_cone, maclaurin_ratio_chain, sigma, sigma_k_form_coefficient,
    ConeLevel, HermitianPair, Spectrum, SpectrumDump,
};

/// `σ_m` as a sum over all `m`-subsets.
fn sigma_by_subsets(values: &[f64], m: usize) -> f64 {
    let n = values.len();
    (0u32..1 << n)
        .filter(|mask| mask.count_ones() as usize == m)
        .map(|mask| (0..n).filter(|i| mask & (1 << i) != 0).map(|i| values[i]).product::<f64>())
        .sum()
}

/// Sum of the principal `m × m` minors of `a`.
fn principal_minor_sum(a: &DMatrix<f64>, m: usize) -> f64 {
    let n = a.nrows();
    if m == 0 {
        return 1.0;
    }
    (0u32..1 << n)
        .filter(|mask| mask.count_ones() as usize == m)
        .map(|mask| {
            let idx: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
            DMatrix::from_fn(m, m, |r, c| a[(idx[r], idx[c])]).determinant()
        })
        .sum()
}

fn values(n: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<f64>> {
    n.prop_flat_map(|n| prop::collection::vec(-3.0f64..3.0, n))
}

proptest! {
    #[test]
    fn recurrence_matches_subset_enumeration(v in values(2..=7), m in 0usize..=7) {
        let expected = sigma_by_subsets(&v, m);
        let got = sigma(&v, m);
        prop_assert!((got - expected).abs() <= 1e-11 * (1.0 + expected.abs()), "{got} vs {expected}");
    }

    #[test]
    fn sigma_of_eigenvalues_is_a_principal_minor_sum(entries in prop::collection::vec(-2.0f64..2.0, 36), n in 2usize..=6, m in 1usize..=6) {
        prop_assume!(m <= n);
        let a = DMatrix::from_fn(n, n, |i, j| entries[i.min(j) * 6 + i.max(j)]);
        let eig = SymmetricEigen::new(a.clone()).eigenvalues;
        let from_eig = sigma(eig.as_slice(), m);
        let from_minors = principal_minor_sum(&a, m);
        prop_assert!((from_eig - from_minors).abs() <= 1e-9 * (1.0 + from_minors.abs()));
    }

    #[test]
    fn permutations_leave_sigma_and_the_wedge_unchanged(v in values(2..=6), k in 1usize..=6, seed in any::<u64>()) {
        prop_assume!(k <= v.len());
        let mut shuffled = v.clone();
        let n = shuffled.len();
        let mut s = seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (s >> 33) as usize % (i + 1));
        }
        let level = ConeLevel::new(k).unwrap();
        let a = sigma_k_form_coefficient(&Spectrum::new(v).unwrap(), level).unwrap();
        let b = sigma_k_form_coefficient(&Spectrum::new(shuffled).unwrap(), level).unwrap();
        prop_assert!((a.sigma - b.sigma).abs() <= 1e-12 * (1.0 + a.sigma.abs()));
        prop_assert!((a.wedge - b.wedge).abs() <= 1e-12 * (1.0 + a.wedge.abs()));
    }

    #[test]
    fn maclaurin_and_garding_on_positive_spectra(v in prop::collection::vec(0.01f64..5.0, 2..=6), w in prop::collection::vec(0.01f64..5.0, 6), k in 1usize..=6) {
        prop_assume!(k <= v.len());
        let level = ConeLevel::new(k).unwrap();
        let lam = Spectrum::new(v.clone()).unwrap();
        let mu = Spectrum::new(w[..v.len()].to_vec()).unwrap();
        let chain = maclaurin_ratio_chain(&lam, level).unwrap();
        for pair in chain.windows(2) {
            prop_assert!(pair[1] <= pair[0] * (1.0 + 1e-12));
        }
        let g = garding_pairing(&lam, &mu, level).unwrap();
        prop_assert!(g.lhs >= g.rhs * (1.0 - 1e-12));
    }

    #[test]
    fn generalized_spectrum_matches_the_pencil_determinant(t in prop::collection::vec(-2.0f64..2.0, 9), b in prop::collection::vec(-1.0f64..1.0, 9)) {
        let tm = DMatrix::from_fn(3, 3, |i, j| t[i.min(j) * 3 + i.max(j)]);
        let bm = DMatrix::from_row_slice(3, 3, &b);
        let v = &bm * bm.transpose() + DMatrix::identity(3, 3);
        let spec = generalized_spectrum(&HermitianPair::real(tm.clone(), v.clone()).unwrap()).unwrap();
        for &l in spec.values() {
            let det = (&tm - &v * l).determinant();
            let scale = tm.norm().powi(3) + (v.norm() * l.abs()).powi(3) + 1.0;
            prop_assert!(det.abs() <= 1e-9 * scale, "det(T − λV) = {det} at λ = {l}");
        }
    }
}

#[derive(Deserialize)]
struct Golden {
    #[serde(flatten)]
    dump: SpectrumDump,
    sigma: f64,
    in_cone: bool,
}

#[test]
fn golden_spectra() {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/spectra.json")).unwrap();
    let cases: Vec<Golden> = serde_json::from_str(&text).unwrap();
    assert!(cases.len() >= 8);
    for case in cases {
        let (lam, m) = case.dump.spectrum().unwrap();
        let s = sigma(lam.values(), m.get());
        assert!((s - case.sigma).abs() < 1e-12, "{:?}: σ = {s}, expected {}", case.dump.lambda, case.sigma);
        assert_eq!(in_cone(&lam, m), case.in_cone, "{:?}", case.dump.lambda);
        let back: SpectrumDump = serde_json::from_str(&serde_json::to_string(&lam.dump(m)).unwrap()).unwrap();
        assert_eq!(back.spectrum().unwrap().0, lam);
    }
}

#[test]
fn complex_pencil_with_identity_metric_is_the_hermitian_spectrum() {
    let i = Complex64::i();
    let one = Complex64::from(1.0);
    let t = DMatrix::from_row_slice(2, 2, &[2.0 * one, i, -i, 2.0 * one]);
    let spec = generalized_spectrum(&HermitianPair::new(t, DMatrix::identity(2, 2)).unwrap()).unwrap();
    assert!((spec.values()[0] - 3.0).abs() < 1e-12);
    assert!((spec.values()[1] - 1.0).abs() < 1e-12);
}
