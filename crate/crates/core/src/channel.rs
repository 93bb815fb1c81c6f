//! Closed-form single-dot decoherence channel and its N-dot extension.
//!
//! Each bath multiplet (K, m) contributes a two-level mixing block whose
//! evolution amplitude X_{K,m}(t) combines into the population retention
//! A(B, t) and the coherence factor E(B, t). The induced qubit map is
//! affine: rho00 -> A rho00 + (1-A) rho11 (and symmetrically), rho01 ->
//! E rho01. Kraus and Choi forms exist for verification and export.

use num_complex::Complex64;

use crate::bath::BathSpec;
use crate::error::{Error, Result};
use crate::linalg::{c, qubit_count, CMat, DensityMatrix, HermitianOperator};
use crate::material::{HBAR_UEV_NS, MU_B_UEV_PER_T};

/// Mixing parameters of one (K, m) block.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingData {
    pub two_k: u32,
    /// Doubled projection, in -2K-2 ..= 2K; the lower boundary is the
    /// degenerate one-dimensional block.
    pub two_m: i64,
    /// Half the spectral gap of the block, rad/ns; nonnegative.
    pub chi: f64,
    pub sin_theta: f64,
    pub cos_theta: f64,
    /// E_m = (Omega + alpha m)/2, rad/ns.
    pub e_m: f64,
    /// Off-diagonal coupling M_{K,m}, rad/ns.
    pub m_km: f64,
    /// Upper block eigenvalue shift E+_{K,m}, rad/ns.
    pub e_plus: f64,
}

fn check_mixing_args(two_k: u32, two_m: i64, alpha: f64) -> Result<()> {
    if !(alpha > 0.0) {
        return Err(Error::argument("coupling alpha must be positive"));
    }
    let tk = two_k as i64;
    if two_m < -tk - 2 || two_m > tk {
        return Err(Error::argument(format!(
            "projection 2m = {two_m} outside -2K-2 ..= 2K for 2K = {two_k}"
        )));
    }
    if (two_m - tk).rem_euclid(2) != 0 {
        return Err(Error::argument(format!(
            "projection 2m = {two_m} has wrong parity for 2K = {two_k}"
        )));
    }
    Ok(())
}

/// Diagonalizes the (K, m) block [[E_m, M], [M, -E_{m+1}]].
///
/// sin(theta) is the normalized eigenvector component M / sqrt(u^2 + M^2)
/// with u = (E_m + E_{m+1})/2 + chi >= 0. On the degenerate boundary both
/// M and u can vanish (M = 0 with E_m + E_{m+1} <= 0); there the surviving
/// basis state is the lower one, i.e. (sin, cos) = (1, 0), which keeps the
/// boundary amplitude a pure phase with the correct sign.
pub fn mixing(two_k: u32, two_m: i64, omega: f64, alpha: f64) -> Result<MixingData> {
    check_mixing_args(two_k, two_m, alpha)?;
    let m = two_m as f64 / 2.0;
    let e_m = (omega + alpha * m) / 2.0;
    let e_m1 = (omega + alpha * (m + 1.0)) / 2.0;
    let sigma = e_m + e_m1;
    // K(K+1) - m(m+1) in exact integer arithmetic (doubled units / 4).
    let tk = two_k as i64;
    let gap_num = tk * (tk + 2) - two_m * (two_m + 2);
    debug_assert!(gap_num >= 0);
    let m_km = 0.5 * alpha * (gap_num as f64 / 4.0).sqrt();
    let chi = 0.5 * (sigma * sigma + 4.0 * m_km * m_km).sqrt();
    let e_plus = -alpha / 4.0 + chi;
    let u = 0.5 * sigma + chi;
    let nrm = (u * u + m_km * m_km).sqrt();
    let (sin_theta, cos_theta) = if nrm == 0.0 {
        (1.0, 0.0)
    } else {
        (m_km / nrm, u / nrm)
    };
    Ok(MixingData {
        two_k,
        two_m,
        chi,
        sin_theta,
        cos_theta,
        e_m,
        m_km,
        e_plus,
    })
}

impl MixingData {
    /// Evolution amplitude X(t) = cos^2(theta) e^{-i chi t}
    /// + sin^2(theta) e^{+i chi t}.
    pub fn amplitude(&self, t_ns: f64) -> Complex64 {
        let (s, co) = (self.chi * t_ns).sin_cos();
        let c2 = self.cos_theta * self.cos_theta;
        let s2 = self.sin_theta * self.sin_theta;
        c(co, -s * c2 + s * s2)
    }
}

/// X_{K,m}(t) at a field given in Tesla.
pub fn amplitude_x(
    two_k: u32,
    two_m: i64,
    b_tesla: f64,
    t_ns: f64,
    alpha: f64,
    g_factor: f64,
) -> Result<Complex64> {
    let omega = -g_factor * MU_B_UEV_PER_T * b_tesla / HBAR_UEV_NS;
    Ok(mixing(two_k, two_m, omega, alpha)?.amplitude(t_ns))
}

/// The (A, E) pair defining the single-dot map at one (B, t).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelCoeffs {
    /// Population retention, in [0, 1].
    pub a: f64,
    /// Coherence multiplier, |E| <= A.
    pub e: Complex64,
    pub b_tesla: f64,
    pub t_ns: f64,
}

impl ChannelCoeffs {
    pub fn new(a: f64, e: Complex64, b_tesla: f64, t_ns: f64) -> Result<Self> {
        if !((-1e-12..=1.0 + 1e-12).contains(&a)) {
            return Err(Error::invariant(format!(
                "population retention {a} outside [0, 1]"
            )));
        }
        if e.norm() > a + 1e-10 {
            return Err(Error::invariant(format!(
                "|E| = {} exceeds A = {a}",
                e.norm()
            )));
        }
        Ok(ChannelCoeffs { a, e, b_tesla, t_ns })
    }

    pub fn identity(b_tesla: f64, t_ns: f64) -> Self {
        ChannelCoeffs {
            a: 1.0,
            e: c(1.0, 0.0),
            b_tesla,
            t_ns,
        }
    }
}

/// A(B, t) and E(B, t) summed over the bath multiplets.
///
/// The sum runs over m = -K ..= K; the trailing factor X_{K,m-1} at
/// m = -K uses the degenerate boundary block, which restores E(0) = 1.
/// Populations are even in B by construction (the sum is evaluated at
/// |Omega| and only E picks up a conjugation for Omega < 0), so
/// A(-B) == A(B) bit for bit.
pub fn coefficients_ae(
    bath: &BathSpec,
    b_tesla: f64,
    t_ns: f64,
    g_factor: f64,
) -> Result<ChannelCoeffs> {
    let omega_raw = -g_factor * MU_B_UEV_PER_T * b_tesla / HBAR_UEV_NS;
    let omega = omega_raw.abs();
    let alpha = bath.alpha;

    let mut a = 0.0f64;
    let mut e = c(0.0, 0.0);
    let mut xs: Vec<Complex64> = Vec::new();
    for mp in bath.multiplets() {
        let tk = mp.two_k as i64;
        xs.clear();
        let mut two_m = -tk - 2;
        while two_m <= tk {
            xs.push(mixing(mp.two_k, two_m, omega, alpha)?.amplitude(t_ns));
            two_m += 2;
        }
        let mut a_k = 0.0f64;
        let mut e_k = c(0.0, 0.0);
        for w in xs.windows(2) {
            a_k += w[1].norm_sqr();
            e_k += w[1] * w[0];
        }
        a += mp.p_per_m * a_k;
        e += c(mp.p_per_m, 0.0) * e_k;
    }
    if omega_raw < 0.0 {
        e = e.conj();
    }
    ChannelCoeffs::new(a, e, b_tesla, t_ns)
}

/// The four Kraus operators of the single-dot map.
#[derive(Debug, Clone, PartialEq)]
pub struct KrausSet {
    pub k1: CMat,
    pub k2: CMat,
    pub k3: CMat,
    pub k4: CMat,
}

/// Kraus form of the (A, E) map. The coherence phase E/|E| is folded into
/// the diagonal operators; at |E| = 0 the map is phase-independent and the
/// phase factor is set to 1.
pub fn kraus_set(coeffs: &ChannelCoeffs) -> Result<KrausSet> {
    let a = coeffs.a;
    let e_abs = coeffs.e.norm();
    if e_abs > a + 1e-10 {
        return Err(Error::invariant(format!(
            "|E| = {e_abs} exceeds A = {a}; coefficients are inconsistent"
        )));
    }
    let phase = if e_abs == 0.0 {
        c(1.0, 0.0)
    } else {
        coeffs.e / c(e_abs, 0.0)
    };
    let r2 = std::f64::consts::FRAC_1_SQRT_2;
    let f1 = (1.0 - a).max(0.0).sqrt();
    let f3 = r2 * (a + e_abs).max(0.0).sqrt();
    let f4 = r2 * (a - e_abs).max(0.0).sqrt();

    let mut k1 = CMat::zeros(2, 2);
    k1[(0, 1)] = c(f1, 0.0);
    let mut k2 = CMat::zeros(2, 2);
    k2[(1, 0)] = c(f1, 0.0);
    let mut k3 = CMat::zeros(2, 2);
    k3[(0, 0)] = phase * c(f3, 0.0);
    k3[(1, 1)] = c(f3, 0.0);
    let mut k4 = CMat::zeros(2, 2);
    k4[(0, 0)] = -phase * c(f4, 0.0);
    k4[(1, 1)] = c(f4, 0.0);
    Ok(KrausSet { k1, k2, k3, k4 })
}

impl KrausSet {
    pub fn operators(&self) -> [&CMat; 4] {
        [&self.k1, &self.k2, &self.k3, &self.k4]
    }

    /// Largest entrywise deviation of sum K_i^dagger K_i from the identity.
    pub fn completeness_defect(&self) -> f64 {
        let mut acc = CMat::zeros(2, 2);
        for k in self.operators() {
            acc += k.adjoint() * k;
        }
        (acc - CMat::identity(2, 2))
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    /// rho -> sum K_i rho K_i^dagger, for cross-checking the affine form.
    pub fn apply(&self, rho: &CMat) -> CMat {
        let mut out = CMat::zeros(2, 2);
        for k in self.operators() {
            out += k * rho * k.adjoint();
        }
        out
    }
}

/// Choi matrix sum_{ij} |i><j| (x) map(|i><j|) built from the affine form.
pub fn choi_matrix(coeffs: &ChannelCoeffs) -> CMat {
    let mut choi = CMat::zeros(4, 4);
    for i in 0..2 {
        for j in 0..2 {
            let mut eij = CMat::zeros(2, 2);
            eij[(i, j)] = c(1.0, 0.0);
            affine_map_inplace(&mut eij, 1, coeffs, false);
            for a in 0..2 {
                for b in 0..2 {
                    choi[(2 * i + a, 2 * j + b)] = eij[(a, b)];
                }
            }
        }
    }
    choi
}

/// Applies the single-dot map (or its dual) to qubit `q`-diagonal blocks of
/// an operator on `n_qubits` qubits, in place. The dual swaps E and its
/// conjugate on the coherences; populations mix identically.
pub(crate) fn affine_map_inplace(
    mat: &mut CMat,
    n_qubits: usize,
    coeffs: &ChannelCoeffs,
    dual: bool,
) {
    let dim = 1usize << n_qubits;
    debug_assert_eq!(mat.nrows(), dim);
    let a = coeffs.a;
    let e = if dual { coeffs.e.conj() } else { coeffs.e };
    let ec = e.conj();
    for q in 0..n_qubits {
        let bit = 1usize << (n_qubits - 1 - q);
        for i in 0..dim {
            if i & bit != 0 {
                continue;
            }
            let i1 = i | bit;
            for j in 0..dim {
                if j & bit != 0 {
                    continue;
                }
                let j1 = j | bit;
                let p00 = mat[(i, j)];
                let p01 = mat[(i, j1)];
                let p10 = mat[(i1, j)];
                let p11 = mat[(i1, j1)];
                mat[(i, j)] = p00.scale(a) + p11.scale(1.0 - a);
                mat[(i1, j1)] = p00.scale(1.0 - a) + p11.scale(a);
                mat[(i, j1)] = e * p01;
                mat[(i1, j)] = ec * p10;
            }
        }
    }
}

/// Single-qubit map in affine form.
pub fn apply_single(rho: &DensityMatrix, coeffs: &ChannelCoeffs) -> Result<DensityMatrix> {
    apply_n_dots(rho, coeffs)
}

/// Identical local map on every qubit of an N-qubit state, applied
/// qubit-by-qubit without materializing the 4^N Kraus terms.
pub fn apply_n_dots(rho: &DensityMatrix, coeffs: &ChannelCoeffs) -> Result<DensityMatrix> {
    let n = qubit_count(rho.dim())?;
    let mut mat = rho.matrix().clone();
    affine_map_inplace(&mut mat, n, coeffs, false);
    Ok(DensityMatrix::trusted(mat))
}

/// Dual (Heisenberg-picture) map on an observable: tr(map(rho) X) =
/// tr(rho dual(X)) for every rho.
pub fn dual_apply_n_dots(
    x: &HermitianOperator,
    coeffs: &ChannelCoeffs,
) -> Result<HermitianOperator> {
    let n = qubit_count(x.dim())?;
    let mut mat = x.matrix().clone();
    affine_map_inplace(&mut mat, n, coeffs, true);
    Ok(HermitianOperator::trusted(mat))
}
