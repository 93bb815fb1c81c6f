//! Property tests for the channel algebra, bath combinatorics, quadrature,
//! and the variational iteration.

use num_bigint::BigUint;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dotmag::bath::{bath_weights, multiplicity_oracle, multiplicity_table, total_dimension};
use dotmag::channel::{
    amplitude_x, apply_n_dots, choi_matrix, coefficients_ae, dual_apply_n_dots, kraus_set,
};
use dotmag::estimation::{gauss_hermite_grid, Estimator, GaussianPrior};
use dotmag::linalg::{c, dm_from_pure, herm_eig, CMat, CVec, HermitianOperator};
use dotmag::material::{AlphaMode, Material};
use dotmag::optimize::{
    fingerprint, gauge_overlap, haar_random_state, iterate_once, mixed_label, Ansatz,
};

const G: f64 = -0.44;

fn spec_bath(n_bath: usize) -> dotmag::bath::BathSpec {
    let alpha = Material::gaas().alpha_rad_per_ns(AlphaMode::VarianceMatched, n_bath);
    bath_weights(n_bath, 1, alpha).unwrap()
}

fn estimator(n_bath: usize, b0_mt: f64, db_mt: f64, nodes: usize) -> Estimator {
    let prior = GaussianPrior::new(b0_mt * 1e-3, db_mt * 1e-3).unwrap();
    Estimator::new(spec_bath(n_bath), G, prior, nodes).unwrap()
}

fn random_hermitian(dim: usize, seed: u64) -> CMat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let psi = haar_random_state(dim * dim, &mut rng).unwrap();
    let v = psi.vector();
    let mut h = CMat::zeros(dim, dim);
    for i in 0..dim {
        for j in 0..dim {
            h[(i, j)] = v[i * dim + j];
        }
    }
    (&h + h.adjoint()).scale(0.5)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn channel_is_cptp_at_random_field_and_time(
        b in -1.0f64..1.0,
        t in 0.0f64..200.0,
    ) {
        let bath = spec_bath(49);
        let coeffs = coefficients_ae(&bath, b, t, G).unwrap();
        prop_assert!(coeffs.a >= -1e-12 && coeffs.a <= 1.0 + 1e-12);
        prop_assert!(coeffs.e.norm() <= coeffs.a + 1e-10);

        let kraus = kraus_set(&coeffs).unwrap();
        prop_assert!(kraus.completeness_defect() < 1e-10);

        let choi = choi_matrix(&coeffs);
        let (vals, _) = herm_eig(&choi).unwrap();
        prop_assert!(vals[0] >= -1e-10, "Choi eigenvalue {}", vals[0]);
    }

    #[test]
    fn field_sign_symmetry_is_bitwise(
        b in 1e-6f64..1.0,
        t in 0.0f64..120.0,
    ) {
        let bath = spec_bath(21);
        let plus = coefficients_ae(&bath, b, t, G).unwrap();
        let minus = coefficients_ae(&bath, -b, t, G).unwrap();
        prop_assert_eq!(plus.a.to_bits(), minus.a.to_bits());
        prop_assert_eq!(plus.e.re.to_bits(), minus.e.re.to_bits());
        prop_assert_eq!(plus.e.im.to_bits(), (-minus.e.im).to_bits());
    }

    #[test]
    fn heisenberg_dual_matches_schroedinger_map(
        b in -0.05f64..0.05,
        t in 0.0f64..60.0,
        n_qubits in 1usize..3,
        seed in any::<u64>(),
    ) {
        let bath = spec_bath(9);
        let coeffs = coefficients_ae(&bath, b, t, G).unwrap();
        let dim = 1usize << n_qubits;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rho = dm_from_pure(haar_random_state(dim, &mut rng).unwrap().vector()).unwrap();
        let x = HermitianOperator::new(random_hermitian(dim, seed ^ 0xabcd)).unwrap();

        let lhs = (apply_n_dots(&rho, &coeffs).unwrap().matrix() * x.matrix()).trace();
        let rhs = (rho.matrix() * dual_apply_n_dots(&x, &coeffs).unwrap().matrix()).trace();
        prop_assert!((lhs - rhs).norm() < 1e-12, "duality gap {}", (lhs - rhs).norm());
    }

    #[test]
    fn eigensolver_reconstructs_sorted_orthonormal(
        dim in 2usize..6,
        seed in any::<u64>(),
    ) {
        let h = random_hermitian(dim, seed);
        let (vals, vecs) = herm_eig(&h).unwrap();
        for i in 1..dim {
            prop_assert!(vals[i] >= vals[i - 1]);
        }
        let mut lam = CMat::zeros(dim, dim);
        for i in 0..dim {
            lam[(i, i)] = c(vals[i], 0.0);
        }
        let recon = &vecs * lam * vecs.adjoint();
        let err = (&recon - &h).iter().map(|z| z.norm()).fold(0.0, f64::max);
        prop_assert!(err < 1e-12 * (1.0 + vals.amax()), "reconstruction {err}");
        let gram = vecs.adjoint() * &vecs;
        let mut defect = 0.0f64;
        for i in 0..dim {
            for j in 0..dim {
                let target = if i == j { 1.0 } else { 0.0 };
                defect = defect.max((gram[(i, j)] - c(target, 0.0)).norm());
            }
        }
        prop_assert!(defect < 1e-12);
    }

    #[test]
    fn bath_weights_are_a_normalized_distribution(
        n in 1usize..60,
        twice_s in 1u32..4,
    ) {
        let bath = bath_weights(n, twice_s, 0.01).unwrap();
        prop_assert!((bath.total_weight() - 1.0).abs() < 1e-10);
        let table = multiplicity_table(n, twice_s).unwrap();
        let dim = total_dimension(&table);
        let expect = BigUint::from(twice_s as usize + 1).pow(n as u32);
        prop_assert_eq!(dim, expect);
    }

    #[test]
    fn multiplicities_match_the_convolution_oracle(
        n in 1usize..7,
        twice_s in 1u32..4,
    ) {
        let fast = multiplicity_table(n, twice_s).unwrap();
        let slow = multiplicity_oracle(n, twice_s).unwrap();
        prop_assert_eq!(fast, slow);
    }

    #[test]
    fn quadrature_reproduces_prior_moments(
        b0_mt in -50.0f64..50.0,
        db_mt in 0.1f64..20.0,
        nodes in 8usize..64,
    ) {
        let prior = GaussianPrior::new(b0_mt * 1e-3, db_mt * 1e-3).unwrap();
        let grid = gauss_hermite_grid(&prior, nodes).unwrap();
        let sum: f64 = grid.weights.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-12);
        let mean: f64 = grid
            .weights
            .iter()
            .zip(&grid.nodes_tesla)
            .map(|(w, x)| w * x)
            .sum();
        let scale = (b0_mt.abs().max(db_mt)) * 1e-3;
        prop_assert!((mean - b0_mt * 1e-3).abs() < 1e-12 * scale.max(1e-12));
        let var: f64 = grid
            .weights
            .iter()
            .zip(&grid.nodes_tesla)
            .map(|(w, x)| w * (x - mean).powi(2))
            .sum();
        prop_assert!((var - prior.variance()).abs() < 1e-10 * prior.variance());
    }

    #[test]
    fn block_amplitude_is_bounded_and_unit_at_t_zero(
        two_k in 0u32..13,
        m_index in 0usize..16,
        b in -1.0f64..1.0,
        t in 0.0f64..100.0,
    ) {
        // Valid projections run over 2m in {-2K-2, -2K, ..., 2K}.
        let tk = two_k as i64;
        let n_proj = (tk + 2) as usize;
        let two_m = -tk - 2 + 2 * (m_index % n_proj) as i64;
        let alpha = 0.0147;
        let x0 = amplitude_x(two_k, two_m, b, 0.0, alpha, G).unwrap();
        prop_assert_eq!(x0, Complex64::new(1.0, 0.0));
        let xt = amplitude_x(two_k, two_m, b, t, alpha, G).unwrap();
        prop_assert!(xt.norm() <= 1.0 + 1e-12);
    }

    #[test]
    fn gauge_moves_leave_the_overlap_at_one(
        n_qubits in 1usize..4,
        seed in any::<u64>(),
        flips in any::<u8>(),
        swap_low in any::<bool>(),
    ) {
        let dim = 1usize << n_qubits;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let psi = haar_random_state(dim, &mut rng).unwrap();

        // Apply per-qubit computational flips, an optional low-pair qubit
        // swap, and per-qubit z-phases: all exact symmetries of the
        // estimation problem that the overlap is meant to quotient out.
        let mask = (flips as usize) & (dim - 1);
        let mut v = CVec::zeros(dim);
        for i in 0..dim {
            let mut j = i ^ mask;
            if swap_low && n_qubits >= 2 {
                let b0 = j & 1;
                let b1 = (j >> 1) & 1;
                j = (j & !3) | (b0 << 1) | b1;
            }
            let mut phase = 0.0;
            for q in 0..n_qubits {
                if (i >> q) & 1 == 1 {
                    phase += 0.37 + 1.11 * q as f64;
                }
            }
            v[j] = psi.vector()[i] * Complex64::from_polar(1.0, phase);
        }
        let moved = dotmag::linalg::PureState::new(v).unwrap();
        let overlap = gauge_overlap(&psi, &moved).unwrap();
        prop_assert!((overlap - 1.0).abs() < 1e-10, "overlap {overlap}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn iteration_never_worsens_the_ratio(
        n_qubits in 1usize..3,
        t in 0.05f64..40.0,
        seed in any::<u64>(),
    ) {
        let est = estimator(9, 7.0, 4.0, 16);
        let family = est.family(t).unwrap();
        let dim = 1usize << n_qubits;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut psi = haar_random_state(dim, &mut rng).unwrap();
        let mut prev = est.evaluate_with_family(&psi, &family).unwrap().ratio;
        for _ in 0..5 {
            psi = iterate_once(&psi, &family).unwrap();
            let next = est.evaluate_with_family(&psi, &family).unwrap().ratio;
            prop_assert!(next <= prev + 1e-12, "ratio rose {prev} -> {next}");
            prev = next;
        }
    }

    #[test]
    fn ansatz_states_fingerprint_to_their_own_labels(
        n_qubits in 2usize..5,
        k_index in 0usize..8,
        g in 0.25f64..0.65,
    ) {
        let ghz = Ansatz::Ghz.state(n_qubits).unwrap();
        prop_assert_eq!(fingerprint(&ghz).unwrap().label, "ghz");

        let plus = Ansatz::PlusProduct.state(n_qubits).unwrap();
        let expect_plus = mixed_label(n_qubits, n_qubits);
        prop_assert_eq!(fingerprint(&plus).unwrap().label, expect_plus);

        let k = k_index % (n_qubits + 1);
        let mixed = Ansatz::MixedProduct(k).state(n_qubits).unwrap();
        prop_assert_eq!(fingerprint(&mixed).unwrap().label, mixed_label(n_qubits, k));

        let blend = Ansatz::GhzPlus(g).state(n_qubits).unwrap();
        let fp = fingerprint(&blend).unwrap();
        prop_assert_eq!(fp.label, "ghz_plus");
        let g_star = fp.g_star.unwrap();
        prop_assert!((g_star - g).abs() < 1e-6, "g* {g_star} vs g {g}");
    }
}
