//! Nuclear-bath combinatorics and the exact small-bath reference evolution.
//!
//! A maximally mixed bath of n spin-s nuclei decomposes into total-spin
//! multiplets (K, m) whose weights P_{K,m} drive the decoherence channel.
//! The multiplet multiplicities come from a closed-form alternating sum,
//! independently checked against iterated angular-momentum addition, and a
//! brute-force Hamiltonian evolution of small baths serves as the oracle
//! for the closed-form channel coefficients.

use std::collections::BTreeMap;

use num_bigint::{BigInt, BigUint, Sign};
use num_complex::Complex64;
use num_traits::{ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::linalg::{c, herm_eig, max_asymmetry, tensor, CMat};

/// Largest bath size the combinatorics accept.
pub const MAX_N_BATH: usize = 200;
/// Largest bath size the brute-force oracle accepts (dimension 2 * 2^n <= 128).
pub const MAX_N_ORACLE: usize = 6;

/// Multiplet multiplicities keyed by doubled total spin (2K).
pub type MultiplicityMap = BTreeMap<u32, BigUint>;

fn check_bath_args(n: usize, twice_s: u32) -> Result<()> {
    if n < 1 {
        return Err(Error::argument("bath needs at least one nucleus"));
    }
    if n > MAX_N_BATH {
        return Err(Error::argument(format!(
            "bath size {n} exceeds the supported maximum {MAX_N_BATH}"
        )));
    }
    if twice_s == 0 {
        return Err(Error::argument("bath spin must be a positive half-integer"));
    }
    Ok(())
}

/// C(a, b) with the convention that it vanishes for a < 0 or a < b.
fn binomial_big(a: i64, b: i64) -> BigInt {
    if b < 0 || a < 0 || a < b {
        return BigInt::zero();
    }
    let b = b.min(a - b);
    let mut acc = BigInt::from(1);
    for i in 0..b {
        acc = acc * BigInt::from(a - i) / BigInt::from(i + 1);
    }
    acc
}

/// Closed-form multiplet multiplicities of n coupled spin-s nuclei.
///
/// count(2K) = sum_i (-1)^i C(n,i) C((s+1)n - (2s+1)i - K - 2, n-2),
/// evaluated in exact integer arithmetic. The n = 1 bath is the single
/// multiplet K = s (the inner binomial is undefined at n - 2 < 0).
pub fn multiplicity_table(n: usize, twice_s: u32) -> Result<MultiplicityMap> {
    check_bath_args(n, twice_s)?;
    let mut table = MultiplicityMap::new();
    if n == 1 {
        table.insert(twice_s, BigUint::from(1u32));
        return Ok(table);
    }
    let ts = twice_s as i64;
    let n_i = n as i64;
    let two_k_max = ts * n_i;
    let two_k_min = two_k_max % 2;
    let mut two_k = two_k_min;
    while two_k <= two_k_max {
        // Doubled-unit numerator of (s+1)n - (2s+1)i - K - 2; always even
        // because 2K and 2sn share parity.
        let mut acc = BigInt::zero();
        for i in 0..=n_i {
            let upper2 = (ts * n_i - two_k) - 2 * i * (ts + 1) + 2 * n_i - 4;
            debug_assert_eq!(upper2 % 2, 0);
            let term = binomial_big(n_i, i) * binomial_big(upper2 / 2, n_i - 2);
            if i % 2 == 0 {
                acc += term;
            } else {
                acc -= term;
            }
        }
        match acc.sign() {
            Sign::Minus => {
                return Err(Error::invariant(format!(
                    "negative multiplicity at 2K = {two_k} for n = {n}"
                )))
            }
            Sign::NoSign => {}
            Sign::Plus => {
                table.insert(two_k as u32, acc.to_biguint().expect("checked sign"));
            }
        }
        two_k += 2;
    }
    Ok(table)
}

/// Multiplicities by iterated angular-momentum addition: couple one spin-s
/// at a time, each existing K branching into |K-s| ..= K+s with unit weight.
pub fn multiplicity_oracle(n: usize, twice_s: u32) -> Result<MultiplicityMap> {
    check_bath_args(n, twice_s)?;
    let mut cur = MultiplicityMap::new();
    cur.insert(twice_s, BigUint::from(1u32));
    for _ in 1..n {
        let mut next = MultiplicityMap::new();
        for (&two_k, count) in &cur {
            let lo = two_k.abs_diff(twice_s);
            let hi = two_k + twice_s;
            let mut tk = lo;
            while tk <= hi {
                *next.entry(tk).or_insert_with(BigUint::zero) += count;
                tk += 2;
            }
        }
        cur = next;
    }
    Ok(cur)
}

/// Total Hilbert dimension carried by a multiplicity map: sum count*(2K+1).
pub fn total_dimension(table: &MultiplicityMap) -> BigUint {
    let mut acc = BigUint::zero();
    for (&two_k, count) in table {
        acc += count * BigUint::from(two_k + 1);
    }
    acc
}

/// One total-spin multiplet of the bath with its per-m weight.
#[derive(Debug, Clone, PartialEq)]
pub struct Multiplet {
    /// Doubled total spin 2K.
    pub two_k: u32,
    /// Number of copies of this multiplet in the decomposition.
    pub count: BigUint,
    /// Probability of each (K, m) level, independent of m.
    pub p_per_m: f64,
}

/// Maximally mixed bath of n spin-s nuclei with per-nucleus coupling alpha.
#[derive(Debug, Clone, PartialEq)]
pub struct BathSpec {
    pub n_bath: usize,
    pub twice_s: u32,
    /// Per-nucleus hyperfine coupling, rad/ns.
    pub alpha: f64,
    multiplets: Vec<Multiplet>,
}

impl BathSpec {
    pub fn s(&self) -> f64 {
        self.twice_s as f64 / 2.0
    }

    pub fn multiplets(&self) -> &[Multiplet] {
        &self.multiplets
    }

    /// Flat (K, m, P) rows, m ascending within K ascending.
    pub fn weights(&self) -> Vec<(f64, f64, f64)> {
        let mut rows = Vec::new();
        for mp in &self.multiplets {
            let k = mp.two_k as f64 / 2.0;
            let mut two_m = -(mp.two_k as i64);
            while two_m <= mp.two_k as i64 {
                rows.push((k, two_m as f64 / 2.0, mp.p_per_m));
                two_m += 2;
            }
        }
        rows
    }

    /// Sum of all P_{K,m}; 1 up to rounding.
    pub fn total_weight(&self) -> f64 {
        self.multiplets
            .iter()
            .map(|mp| mp.p_per_m * (mp.two_k + 1) as f64)
            .sum()
    }
}

/// Weights P_{K,m} = count(K) / (2s+1)^n of the maximally mixed bath.
pub fn bath_weights(n: usize, twice_s: u32, alpha: f64) -> Result<BathSpec> {
    if !(alpha > 0.0) {
        return Err(Error::argument("coupling alpha must be positive"));
    }
    let table = multiplicity_table(n, twice_s)?;
    let dim = BigUint::from(twice_s as u64 + 1).pow(n as u32);
    let dim_f = dim
        .to_f64()
        .ok_or_else(|| Error::numerical("bath dimension overflows f64"))?;
    let multiplets = table
        .into_iter()
        .map(|(two_k, count)| {
            let count_f = count.to_f64().unwrap_or(f64::INFINITY);
            Multiplet {
                two_k,
                count,
                p_per_m: count_f / dim_f,
            }
        })
        .collect();
    Ok(BathSpec {
        n_bath: n,
        twice_s,
        alpha,
        multiplets,
    })
}

/// Channel coefficients measured on the brute-force evolution.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactChannelSample {
    /// Population retention A(B, t) in [0, 1].
    pub a_exact: f64,
    /// Coherence factor E(B, t), |E| <= A.
    pub e_exact: Complex64,
    pub b_tesla: f64,
    pub t_ns: f64,
}

/// Pre-diagonalized electron + spin-1/2 bath Hamiltonian at a fixed field,
/// for sampling the exact reduced dynamics at many times cheaply.
pub struct ExactChannel {
    n_bath: usize,
    /// Eigenvalues, rad/ns.
    evals: Vec<f64>,
    /// Eigenvector columns.
    evecs: CMat,
    b_tesla: f64,
}

fn spin_half_ops() -> (CMat, CMat, CMat) {
    let sz = CMat::from_row_slice(
        2,
        2,
        &[c(0.5, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-0.5, 0.0)],
    );
    let sp = CMat::from_row_slice(
        2,
        2,
        &[c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)],
    );
    let sm = sp.transpose();
    (sz, sp, sm)
}

/// Operator acting as `op` on bath site k (0-based) of n sites.
fn bath_site_op(op: &CMat, k: usize, n: usize) -> CMat {
    let mut factors = Vec::with_capacity(n);
    for i in 0..n {
        factors.push(if i == k {
            op.clone()
        } else {
            CMat::identity(2, 2)
        });
    }
    tensor(&factors).expect("nonempty factor list")
}

impl ExactChannel {
    /// Builds and diagonalizes H = Omega S^z + alpha S^z I^z
    /// + (alpha/2)(S^+ I^- + S^- I^+) on electron x bath, spin-1/2 nuclei.
    pub fn new(n_bath: usize, b_tesla: f64, alpha: f64, g_factor: f64) -> Result<Self> {
        if !(1..=MAX_N_ORACLE).contains(&n_bath) {
            return Err(Error::argument(format!(
                "oracle bath size must be 1..={MAX_N_ORACLE}, got {n_bath}"
            )));
        }
        let omega =
            -g_factor * crate::material::MU_B_UEV_PER_T * b_tesla / crate::material::HBAR_UEV_NS;
        let (sz, sp, sm) = spin_half_ops();
        let bath_dim = 1usize << n_bath;
        let mut iz = CMat::zeros(bath_dim, bath_dim);
        let mut ip = CMat::zeros(bath_dim, bath_dim);
        let mut im = CMat::zeros(bath_dim, bath_dim);
        for k in 0..n_bath {
            iz += bath_site_op(&sz, k, n_bath);
            ip += bath_site_op(&sp, k, n_bath);
            im += bath_site_op(&sm, k, n_bath);
        }
        let id_bath = CMat::identity(bath_dim, bath_dim);
        let h = tensor(&[sz.clone(), id_bath]).unwrap().scale(omega)
            + tensor(&[sz, iz]).unwrap().scale(alpha)
            + (tensor(&[sp, im]).unwrap() + tensor(&[sm, ip]).unwrap()).scale(alpha / 2.0);
        debug_assert!(max_asymmetry(&h) < 1e-12);
        let (evals, evecs) = herm_eig(&h)?;
        Ok(ExactChannel {
            n_bath,
            evals: evals.iter().copied().collect(),
            evecs,
            b_tesla,
        })
    }

    /// Evolves rho_el x (maximally mixed bath) for time t and traces the
    /// bath back out.
    pub fn reduced(&self, rho_el: &CMat, t_ns: f64) -> CMat {
        let bath_dim = 1usize << self.n_bath;
        let dim = 2 * bath_dim;
        let id_bath = CMat::identity(bath_dim, bath_dim).scale(1.0 / bath_dim as f64);
        let rho0 = tensor(&[rho_el.clone(), id_bath]).unwrap();
        // U rho U^dagger with U = V exp(-i Lambda t) V^dagger.
        let rho_eig = self.evecs.adjoint() * rho0 * &self.evecs;
        let mut evolved = CMat::zeros(dim, dim);
        for i in 0..dim {
            for j in 0..dim {
                let phase = c(0.0, -(self.evals[i] - self.evals[j]) * t_ns).exp();
                evolved[(i, j)] = phase * rho_eig[(i, j)];
            }
        }
        let rho_t = &self.evecs * evolved * self.evecs.adjoint();
        let mut out = CMat::zeros(2, 2);
        for a in 0..2 {
            for b in 0..2 {
                let mut acc = c(0.0, 0.0);
                for k in 0..bath_dim {
                    acc += rho_t[(a * bath_dim + k, b * bath_dim + k)];
                }
                out[(a, b)] = acc;
            }
        }
        out
    }

    /// Reads A off the |0><0| input and E off the |+><+| input.
    pub fn sample(&self, t_ns: f64) -> ExactChannelSample {
        let mut zero = CMat::zeros(2, 2);
        zero[(0, 0)] = c(1.0, 0.0);
        let a_exact = self.reduced(&zero, t_ns)[(0, 0)].re;

        let plus = CMat::from_element(2, 2, c(0.5, 0.0));
        let e_exact = self.reduced(&plus, t_ns)[(0, 1)] * c(2.0, 0.0);
        ExactChannelSample {
            a_exact,
            e_exact,
            b_tesla: self.b_tesla,
            t_ns,
        }
    }
}

/// One-shot brute-force channel sample for a spin-1/2 bath.
pub fn exact_reference_channel(
    n_bath: usize,
    b_tesla: f64,
    t_ns: f64,
    alpha: f64,
    g_factor: f64,
) -> Result<ExactChannelSample> {
    Ok(ExactChannel::new(n_bath, b_tesla, alpha, g_factor)?.sample(t_ns))
}
