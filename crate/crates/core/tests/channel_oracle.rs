//! Cross-checks the closed-form dephasing channel against brute-force
//! evolution of the full electron+bath Hamiltonian for small baths.

use dotmag::bath::{bath_weights, exact_reference_channel, ExactChannel};
use dotmag::channel::{apply_single, coefficients_ae, kraus_set};
use dotmag::linalg::{c, dm_from_pure, trace_distance, CMat, CVec, DensityMatrix};
use dotmag::material::{AlphaMode, Material};

const G: f64 = -0.44;

fn alpha_for(n_bath: usize) -> f64 {
    Material::gaas().alpha_rad_per_ns(AlphaMode::VarianceMatched, n_bath)
}

fn probe_states() -> Vec<CVec> {
    let zero = CVec::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]);
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let plus = CVec::from_vec(vec![c(r, 0.0), c(r, 0.0)]);
    let plus_i = CVec::from_vec(vec![c(r, 0.0), c(0.0, r)]);
    vec![zero, plus, plus_i]
}

#[test]
fn coefficients_match_brute_force_over_field_and_time() {
    let fields = [0.0, 1e-3, 7e-3, 0.05, 1.0];
    let times: Vec<f64> = (0..=12).map(|i| i as f64 * 200.0 / 12.0).collect();
    for n_bath in 2..=4 {
        let alpha = alpha_for(n_bath);
        let bath = bath_weights(n_bath, 1, alpha).unwrap();
        for &b in &fields {
            let exact = ExactChannel::new(n_bath, b, alpha, G).unwrap();
            for &t in &times {
                let coeffs = coefficients_ae(&bath, b, t, G).unwrap();
                let sample = exact.sample(t);
                assert!(
                    (coeffs.a - sample.a_exact).abs() < 1e-9,
                    "A mismatch n={n_bath} B={b} t={t}: {} vs {}",
                    coeffs.a,
                    sample.a_exact
                );
                assert!(
                    (coeffs.e.norm() - sample.e_exact.norm()).abs() < 1e-9,
                    "|E| mismatch n={n_bath} B={b} t={t}"
                );
                assert!(
                    (coeffs.e - sample.e_exact).norm() < 1e-8,
                    "E mismatch n={n_bath} B={b} t={t}: {} vs {}",
                    coeffs.e,
                    sample.e_exact
                );
            }
        }
    }
}

#[test]
fn channel_outputs_match_brute_force_in_trace_distance() {
    let fields = [0.0, 7e-3, 1.0];
    let times = [0.5, 3.0, 11.0, 40.0, 150.0];
    for n_bath in 2..=4 {
        let alpha = alpha_for(n_bath);
        let bath = bath_weights(n_bath, 1, alpha).unwrap();
        for &b in &fields {
            let exact = ExactChannel::new(n_bath, b, alpha, G).unwrap();
            for &t in &times {
                let coeffs = coefficients_ae(&bath, b, t, G).unwrap();
                for psi in probe_states() {
                    let rho_in = dm_from_pure(&psi).unwrap();
                    let closed = apply_single(&rho_in, &coeffs).unwrap();
                    let brute =
                        DensityMatrix::new(exact.reduced(rho_in.matrix(), t)).unwrap();
                    let d = trace_distance(&closed, &brute).unwrap();
                    assert!(d < 1e-8, "trace distance {d} at n={n_bath} B={b} t={t}");
                }
            }
        }
    }
}

#[test]
fn kraus_and_affine_forms_agree_with_the_oracle() {
    let n_bath = 3;
    let alpha = alpha_for(n_bath);
    let bath = bath_weights(n_bath, 1, alpha).unwrap();
    let sample = exact_reference_channel(n_bath, 7e-3, 9.0, alpha, G).unwrap();
    let coeffs = coefficients_ae(&bath, 7e-3, 9.0, G).unwrap();
    assert!((coeffs.a - sample.a_exact).abs() < 1e-10);

    let kraus = kraus_set(&coeffs).unwrap();
    assert!(kraus.completeness_defect() < 1e-12);
    for psi in probe_states() {
        let rho_in = dm_from_pure(&psi).unwrap();
        let via_affine = apply_single(&rho_in, &coeffs).unwrap();
        let via_kraus = kraus.apply(rho_in.matrix());
        let diff: CMat = via_affine.matrix() - &via_kraus;
        assert!(diff.iter().map(|z| z.norm()).fold(0.0, f64::max) < 1e-12);
    }
}

#[test]
fn strong_field_reduces_to_pure_gaussian_dephasing() {
    // At 1 T the flip-flop terms are far off-resonance: populations freeze
    // and |E| follows the Gaussian envelope set by the bath variance.
    let n_bath = 49;
    let m = Material::gaas();
    let alpha = m.alpha_rad_per_ns(AlphaMode::VarianceMatched, n_bath);
    let bath = bath_weights(n_bath, 1, alpha).unwrap();
    let t2 = dotmag::material::t2_star_ns(1, n_bath, alpha);
    for i in 0..=20 {
        let t = i as f64 * 2.0 * t2 / 20.0;
        let coeffs = coefficients_ae(&bath, 1.0, t, G).unwrap();
        assert!(1.0 - coeffs.a < 1e-2, "population leak at t={t}");
        let envelope = (-(t / t2).powi(2)).exp();
        assert!(
            (coeffs.e.norm() - envelope).abs() < 0.05,
            "|E| vs Gaussian at t={t}: {} vs {envelope}",
            coeffs.e.norm()
        );
    }
}
