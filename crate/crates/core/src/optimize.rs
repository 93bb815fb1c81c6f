//! Optimal initial states by fixed-point iteration, ansatz families, and
//! state fingerprinting.
//!
//! The iteration evaluates the optimal observable L for the current state,
//! then replaces the state by the eigenvector with the smallest eigenvalue
//! of M = sum_j w_j dual_map_j(L^2 - 2 B_j L); each step cannot increase
//! the posterior variance. Haar-random restarts guard against local optima.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::channel::affine_map_inplace;
use crate::error::{Error, Result};
use crate::estimation::{
    personick_core_centered, ratio_from_gain, ChannelFamily, EstimationOutcome, Estimator,
};
use crate::linalg::{c, herm_eig, tensor_vec, CMat, CVec, PureState};

pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_ITER: usize = 500;
pub const MAX_QUBITS: usize = 5;

/// Fidelity above which a state is tagged with an ansatz label.
pub const LABEL_THRESHOLD: f64 = 0.98;

/// Iteration and restart policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub restarts: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl OptimizerConfig {
    /// Default policy for a dot count: more restarts for the larger search
    /// spaces, where near-degenerate optima coexist close to transitions.
    pub fn default_for(n_qubits: usize) -> Self {
        OptimizerConfig {
            restarts: if n_qubits <= 3 { 30 } else { 60 },
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            seed: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.restarts < 1 {
            return Err(Error::argument("restarts must be at least 1"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::argument("tolerance must be positive"));
        }
        if self.max_iter < 1 {
            return Err(Error::argument("max_iter must be at least 1"));
        }
        Ok(())
    }
}

/// Splitmix64 stream derivation: decorrelated per-restart seeds from one
/// master seed.
pub(crate) fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master
        .wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Haar-random pure state: normalized complex-Gaussian vector.
pub fn haar_random_state<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Result<PureState> {
    if dim < 2 {
        return Err(Error::argument("state dimension must be at least 2"));
    }
    let mut v = CVec::zeros(dim);
    for k in 0..dim {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        v[k] = c(re, im);
    }
    PureState::normalized(v)
}

/// Initial-state families used as baselines and for regime labeling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ansatz {
    /// (|0...0> + |1...1>)/sqrt(2).
    Ghz,
    /// |+>^N.
    PlusProduct,
    /// |+>^k |0>^(N-k), the plus factors first.
    MixedProduct(usize),
    /// normalize(g GHZ + (1-g) |+>^N).
    GhzPlus(f64),
}

impl Ansatz {
    pub fn label(&self) -> String {
        match self {
            Ansatz::Ghz => "ghz".into(),
            Ansatz::PlusProduct => "plus_product".into(),
            Ansatz::MixedProduct(k) => format!("mixed_product({k})"),
            Ansatz::GhzPlus(g) => format!("ghz_plus({g:.4})"),
        }
    }

    pub fn state(&self, n_qubits: usize) -> Result<PureState> {
        if n_qubits == 0 || n_qubits > MAX_QUBITS {
            return Err(Error::argument("qubit count out of range"));
        }
        let dim = 1usize << n_qubits;
        match *self {
            Ansatz::Ghz => {
                let mut v = CVec::zeros(dim);
                let r = c(std::f64::consts::FRAC_1_SQRT_2, 0.0);
                v[0] = r;
                v[dim - 1] = r;
                PureState::new(v)
            }
            Ansatz::PlusProduct => Ansatz::MixedProduct(n_qubits).state(n_qubits),
            Ansatz::MixedProduct(k) => {
                if k > n_qubits {
                    return Err(Error::argument("mixed_product k exceeds qubit count"));
                }
                let amp = 0.5f64.powi(k as i32 / 2)
                    * if k % 2 == 1 {
                        std::f64::consts::FRAC_1_SQRT_2
                    } else {
                        1.0
                    };
                // Plus factors occupy the leading qubits (high bits); the
                // trailing n-k qubits are pinned to |0>.
                let low_mask = (1usize << (n_qubits - k)) - 1;
                let mut v = CVec::zeros(dim);
                for i in 0..dim {
                    if i & low_mask == 0 {
                        v[i] = c(amp, 0.0);
                    }
                }
                PureState::new(v)
            }
            Ansatz::GhzPlus(g) => {
                if !(0.0..=1.0).contains(&g) {
                    return Err(Error::argument("ghz_plus weight must lie in [0, 1]"));
                }
                if g == 1.0 {
                    return Ansatz::Ghz.state(n_qubits);
                }
                if g == 0.0 {
                    return Ansatz::PlusProduct.state(n_qubits);
                }
                let ghz = Ansatz::Ghz.state(n_qubits)?;
                let plus = Ansatz::PlusProduct.state(n_qubits)?;
                let v = ghz.vector().scale(g) + plus.vector().scale(1.0 - g);
                PureState::normalized(v)
            }
        }
    }
}

/// Short regime-style name for |+>^k |0>^(N-k): "plus" repeated k times then
/// "0" repeated N-k times; the full product is just "plus".
pub fn mixed_label(n_qubits: usize, k: usize) -> String {
    if k == n_qubits {
        "plus".into()
    } else {
        format!("{}{}", "plus".repeat(k), "0".repeat(n_qubits - k))
    }
}

/// One optimized or evaluated strategy: initial state plus its measurement
/// design.
#[derive(Debug, Clone)]
pub struct Strategy {
    pub state: PureState,
    pub outcome: EstimationOutcome,
    pub label: String,
    pub iterations: usize,
    pub converged: bool,
}

fn eval_core(psi: &PureState, family: &ChannelFamily) -> Result<(f64, CMat)> {
    let (bar, prime_c) = family.mean_states_centered(psi);
    let core =
        personick_core_centered(bar.matrix(), prime_c.matrix(), family.prior.b0_tesla)?;
    let (ratio, _) = ratio_from_gain(core.gain, &family.prior)?;
    Ok((ratio, core.l_centered))
}

/// M = sum_j w_j dual_map_j(L~^2 - 2 (B_j - B0) L~), Hermitized, for the
/// centered observable L~ = L - B0 I. This differs from the uncentered
/// sum_j w_j dual_map_j(L^2 - 2 B_j L) by a multiple of the identity (the
/// dual maps are unital), so the minimizing eigenvector is the same while
/// none of the entries carries the B0^2 scale that would drown the dB^2
/// structure at strong prior means.
fn variational_matrix(l_centered: &CMat, family: &ChannelFamily) -> CMat {
    let dim = l_centered.nrows();
    let n_qubits = dim.trailing_zeros() as usize;
    let l2 = l_centered * l_centered;
    let mut m = CMat::zeros(dim, dim);
    let mut scratch = CMat::zeros(dim, dim);
    for ((co, &w), &d) in family
        .coeffs
        .iter()
        .zip(&family.weights)
        .zip(&family.offsets_tesla)
    {
        scratch.copy_from(&l2);
        scratch.zip_apply(l_centered, |s, lij| *s -= lij.scale(2.0 * d));
        affine_map_inplace(&mut scratch, n_qubits, co, true);
        m.zip_apply(&scratch, |acc, v| *acc += v.scale(w));
    }
    (&m + m.adjoint()).scale(0.5)
}

fn step_from_l(l: &CMat, family: &ChannelFamily) -> Result<PureState> {
    let m = variational_matrix(l, family);
    let (vals, vecs) = herm_eig(&m)?;
    let n = vals.len();
    let scale = vals
        .iter()
        .map(|v| v.abs())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    // Cluster tolerance: relative to the spectrum, with an absolute floor at
    // the matrix's natural dB^2 scale. Near t = 0 the centered matrix is all
    // rounding noise far below that floor, and the floor is what recognizes
    // it as fully degenerate.
    let tol = (1e-11 * scale).max(1e-12 * family.prior.variance());
    let ground = vals.iter().filter(|&&v| v <= vals[0] + tol).count();
    if ground == 1 {
        return Ok(PureState::trusted(vecs.column(0).into_owned()));
    }
    // Degenerate ground space: individual eigenvectors are gauge noise, but
    // the projector onto the space is stable. Take the projection of the
    // first basis vector with significant weight in it; in the fully
    // degenerate case this is the first basis vector itself.
    for k in 0..n {
        let weight: f64 = (0..ground).map(|i| vecs[(k, i)].norm_sqr()).sum();
        if weight < 1e-6 {
            continue;
        }
        let mut v = CVec::zeros(n);
        for i in 0..ground {
            let col = vecs.column(i);
            let amp = col[k].conj();
            v.zip_apply(&col, |out, ci| *out += ci * amp);
        }
        v /= c(weight.sqrt(), 0.0);
        // Same phase convention as the eigenvector routine.
        if let Some(lead) = v.iter().find(|z| z.norm() > 1e-10).copied() {
            let ph = lead.conj() / c(lead.norm(), 0.0);
            v *= ph;
        }
        return Ok(PureState::trusted(v));
    }
    Ok(PureState::trusted(vecs.column(0).into_owned()))
}

/// One improvement step: the state's optimal L drives the variational
/// matrix whose ground eigenvector is the new state.
pub fn iterate_once(psi: &PureState, family: &ChannelFamily) -> Result<PureState> {
    let (_, l) = eval_core(psi, family)?;
    step_from_l(&l, family)
}

struct RunResult {
    state: PureState,
    ratio: f64,
    iterations: usize,
    converged: bool,
}

fn refine_from(
    start: &PureState,
    family: &ChannelFamily,
    cfg: &OptimizerConfig,
) -> Result<RunResult> {
    let (mut ratio, mut l) = eval_core(start, family)?;
    let mut best_ratio = ratio;
    let mut best_state = start.clone();
    let mut iterations = 0;
    let mut converged = false;
    for _ in 0..cfg.max_iter {
        let next = step_from_l(&l, family)?;
        let (next_ratio, next_l) = eval_core(&next, family)?;
        iterations += 1;
        if next_ratio < best_ratio {
            best_ratio = next_ratio;
            best_state = next.clone();
        }
        let rel = (ratio - next_ratio).abs() / ratio.abs().max(f64::MIN_POSITIVE);
        let worsened = next_ratio > ratio + 1e-12;
        ratio = next_ratio;
        l = next_l;
        if rel < cfg.tol {
            converged = true;
            break;
        }
        if worsened {
            // Numerical stall at the fixed point; keep the best state seen.
            break;
        }
    }
    Ok(RunResult {
        state: best_state,
        ratio: best_ratio,
        iterations,
        converged,
    })
}

/// Best strategy across Haar-random restarts plus optional warm starts,
/// all iterated to convergence at one evolution time.
pub fn optimize_with_family(
    family: &ChannelFamily,
    n_qubits: usize,
    cfg: &OptimizerConfig,
    warm_starts: &[PureState],
) -> Result<Strategy> {
    cfg.validate()?;
    if n_qubits == 0 || n_qubits > MAX_QUBITS {
        return Err(Error::argument("qubit count out of range"));
    }
    let dim = 1usize << n_qubits;
    let mut starts: Vec<PureState> = Vec::with_capacity(cfg.restarts + warm_starts.len());
    starts.extend_from_slice(warm_starts);
    for r in 0..cfg.restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, r as u64));
        starts.push(haar_random_state(dim, &mut rng)?);
    }
    let runs: Vec<RunResult> = starts
        .par_iter()
        .map(|s| refine_from(s, family, cfg))
        .collect::<Result<Vec<_>>>()?;
    let winner = runs
        .iter()
        .enumerate()
        .min_by(|(ia, a), (ib, b)| a.ratio.total_cmp(&b.ratio).then(ia.cmp(ib)))
        .map(|(i, _)| i)
        .expect("at least one restart");
    let run = &runs[winner];

    let (bar, prime_c) = family.mean_states_centered(&run.state);
    let outcome =
        crate::estimation::estimation_variance_centered(&bar, &prime_c, &family.prior)?;
    Ok(Strategy {
        state: run.state.clone(),
        outcome,
        label: "optimal".into(),
        iterations: run.iterations,
        converged: run.converged,
    })
}

/// Optimal initial state for N dots at time t under the estimator's prior.
pub fn optimize_state(
    est: &Estimator,
    n_qubits: usize,
    t_ns: f64,
    cfg: &OptimizerConfig,
) -> Result<Strategy> {
    let family = est.family(t_ns)?;
    optimize_with_family(&family, n_qubits, cfg, &[])
}

/// One Personick evaluation of a fixed initial state, no iteration.
pub fn evaluate_fixed_state(
    est: &Estimator,
    psi: &PureState,
    t_ns: f64,
    label: impl Into<String>,
) -> Result<Strategy> {
    let family = est.family(t_ns)?;
    evaluate_fixed_with_family(&family, psi, label)
}

pub fn evaluate_fixed_with_family(
    family: &ChannelFamily,
    psi: &PureState,
    label: impl Into<String>,
) -> Result<Strategy> {
    let (bar, prime_c) = family.mean_states_centered(psi);
    let outcome =
        crate::estimation::estimation_variance_centered(&bar, &prime_c, &family.prior)?;
    Ok(Strategy {
        state: psi.clone(),
        outcome,
        label: label.into(),
        iterations: 0,
        converged: true,
    })
}

/// Result of optimizing over the one-parameter GHZ/plus superposition.
#[derive(Debug, Clone)]
pub struct GhzPlusScan {
    pub strategy: Strategy,
    pub g_best: f64,
    /// (g, ratio) over the coarse grid, before refinement.
    pub grid: Vec<(f64, f64)>,
}

/// Best mixing weight over a grid, refined by golden-section search between
/// the best point's neighbors to 1e-4 resolution in g.
pub fn scan_ghz_plus(
    est: &Estimator,
    n_qubits: usize,
    t_ns: f64,
    g_grid: &[f64],
) -> Result<GhzPlusScan> {
    if g_grid.is_empty() {
        return Err(Error::argument("g grid must be nonempty"));
    }
    if g_grid.iter().any(|g| !(0.0..=1.0).contains(g)) {
        return Err(Error::argument("g grid values must lie in [0, 1]"));
    }
    let family = est.family(t_ns)?;
    let eval_g = |g: f64| -> Result<f64> {
        let psi = Ansatz::GhzPlus(g).state(n_qubits)?;
        Ok(eval_core(&psi, &family)?.0)
    };
    let mut grid = Vec::with_capacity(g_grid.len());
    for &g in g_grid {
        grid.push((g, eval_g(g)?));
    }
    let best_idx = grid
        .iter()
        .enumerate()
        .min_by(|(ia, a), (ib, b)| a.1.total_cmp(&b.1).then(ia.cmp(ib)))
        .map(|(i, _)| i)
        .expect("nonempty grid");
    let (mut g_best, mut r_best) = grid[best_idx];

    // Golden-section refinement between the best point's neighbors.
    let mut lo = if best_idx > 0 { grid[best_idx - 1].0 } else { g_best };
    let mut hi = if best_idx + 1 < grid.len() {
        grid[best_idx + 1].0
    } else {
        g_best
    };
    if hi > lo {
        const INV_PHI: f64 = 0.618_033_988_749_894_8;
        let mut x1 = hi - INV_PHI * (hi - lo);
        let mut x2 = lo + INV_PHI * (hi - lo);
        let mut f1 = eval_g(x1)?;
        let mut f2 = eval_g(x2)?;
        while hi - lo > 1e-4 {
            if f1 <= f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - INV_PHI * (hi - lo);
                f1 = eval_g(x1)?;
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + INV_PHI * (hi - lo);
                f2 = eval_g(x2)?;
            }
        }
        for (x, f) in [(x1, f1), (x2, f2)] {
            if f < r_best {
                r_best = f;
                g_best = x;
            }
        }
    }
    let psi = Ansatz::GhzPlus(g_best).state(n_qubits)?;
    let mut strategy =
        evaluate_fixed_with_family(&family, &psi, Ansatz::GhzPlus(g_best).label())?;
    strategy.converged = true;
    Ok(GhzPlusScan {
        strategy,
        g_best,
        grid,
    })
}

/// Best of `samples` random product states, drawn from one sequential RNG
/// so that a longer run extends a shorter one sample-for-sample.
pub fn random_product_baseline(
    est: &Estimator,
    n_qubits: usize,
    t_ns: f64,
    samples: usize,
    seed: u64,
) -> Result<Strategy> {
    if samples < 1 {
        return Err(Error::argument("baseline needs at least 1 sample"));
    }
    if n_qubits == 0 || n_qubits > MAX_QUBITS {
        return Err(Error::argument("qubit count out of range"));
    }
    let family = est.family(t_ns)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, PureState)> = None;
    for _ in 0..samples {
        let factors: Vec<CVec> = (0..n_qubits)
            .map(|_| haar_random_state(2, &mut rng).map(|s| s.vector().clone()))
            .collect::<Result<Vec<_>>>()?;
        let psi = PureState::normalized(tensor_vec(&factors)?)?;
        let (ratio, _) = eval_core(&psi, &family)?;
        if best.as_ref().is_none_or(|(r, _)| ratio < *r) {
            best = Some((ratio, psi));
        }
    }
    let (_, state) = best.expect("samples >= 1");
    let mut strategy = evaluate_fixed_with_family(&family, &state, "product_baseline")?;
    strategy.iterations = samples;
    Ok(strategy)
}

/// Gauge-orbit fidelities of a state against the ansatz families, with the
/// resulting regime label.
#[derive(Debug, Clone)]
pub struct Fingerprint {
    /// Fidelity with the GHZ orbit (free collective phase).
    pub f_ghz: f64,
    /// f_mixed[k]: fidelity with the |+>^k |0>^(N-k) orbit (free qubit
    /// placement and polar flips); f_mixed[N] is the plus-product fidelity.
    pub f_mixed: Vec<f64>,
    /// Fidelity with the span of GHZ and |+>^N.
    pub f_span: f64,
    /// GHZ weight of the projection onto that span, None for N = 1 where
    /// the span collapses.
    pub g_star: Option<f64>,
    pub label: String,
}

impl Fingerprint {
    pub fn f_plus(&self) -> f64 {
        *self.f_mixed.last().expect("k = N entry")
    }
}

fn abs_amplitudes(psi: &PureState) -> Vec<f64> {
    psi.vector().iter().map(|z| z.norm()).collect()
}

fn mixed_orbit_fidelity(a: &[f64], n: usize, k: usize) -> f64 {
    let dim = 1usize << n;
    let full = dim - 1;
    let amp = 0.5f64.powi(k as i32);
    let mut best = 0.0f64;
    for smask in 0..dim {
        if (smask as u32).count_ones() as usize != k {
            continue;
        }
        let comp = full & !smask;
        // Enumerate flip patterns on the polar qubits.
        let mut f = comp;
        loop {
            let mut sum = 0.0;
            for (i, ai) in a.iter().enumerate() {
                if i & comp == f {
                    sum += ai;
                }
            }
            best = best.max(sum * sum * amp);
            if f == 0 {
                break;
            }
            f = (f - 1) & comp;
        }
    }
    best.min(1.0)
}

/// Fingerprint of a normalized state; `n_qubits` must match its dimension.
pub fn fingerprint(psi: &PureState) -> Result<Fingerprint> {
    let n = psi.qubits()?;
    let a = abs_amplitudes(psi);
    let dim = a.len();

    let f_ghz = ((a[0] + a[dim - 1]).powi(2) / 2.0).min(1.0);
    let f_mixed: Vec<f64> = (0..=n).map(|k| mixed_orbit_fidelity(&a, n, k)).collect();
    let f_plus = f_mixed[n];

    // Projection onto span{GHZ, |+>^N} of the absolute-amplitude vector.
    let c1 = (a[0] + a[dim - 1]) * std::f64::consts::FRAC_1_SQRT_2;
    let c2 = a.iter().sum::<f64>() * 0.5f64.powi(n as i32 / 2)
        * if n % 2 == 1 {
            std::f64::consts::FRAC_1_SQRT_2
        } else {
            1.0
        };
    let (f_span, g_star) = if n == 1 {
        (f_plus, None)
    } else {
        let s = 2.0f64.powf(-0.5 * (n as f64 - 1.0));
        let det = 1.0 - s * s;
        let x1 = (c1 - s * c2) / det;
        let x2 = (c2 - s * c1) / det;
        let f = (c1 * x1 + c2 * x2).min(1.0);
        let g = if x1 + x2 > 1e-12 {
            Some((x1 / (x1 + x2)).clamp(0.0, 1.0))
        } else {
            None
        };
        (f, g)
    };

    let label = regime_label(n, f_ghz, f_plus, f_span, &f_mixed);
    Ok(Fingerprint {
        f_ghz,
        f_mixed,
        f_span,
        g_star,
        label,
    })
}

fn regime_label(n: usize, f_ghz: f64, f_plus: f64, f_span: f64, f_mixed: &[f64]) -> String {
    if n >= 2 && f_ghz > LABEL_THRESHOLD {
        return "ghz".into();
    }
    // Prefer the plain product over the span label unless the span fits
    // distinctly better (the product lies inside the span).
    if f_plus > LABEL_THRESHOLD && f_plus >= f_span - 0.005 {
        return mixed_label(n, n);
    }
    if n >= 2 && f_span > LABEL_THRESHOLD {
        return "ghz_plus".into();
    }
    for k in (0..n).rev() {
        if f_mixed[k] > LABEL_THRESHOLD {
            return mixed_label(n, k);
        }
    }
    "other".into()
}

fn heaps_permutations(n: usize) -> Vec<Vec<usize>> {
    let mut items: Vec<usize> = (0..n).collect();
    let mut out = Vec::new();
    fn rec(k: usize, items: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k <= 1 {
            out.push(items.clone());
            return;
        }
        for i in 0..k {
            rec(k - 1, items, out);
            if k.is_multiple_of(2) {
                items.swap(i, k - 1);
            } else {
                items.swap(0, k - 1);
            }
        }
    }
    rec(n, &mut items, &mut out);
    out
}

/// Gauge-insensitive overlap of two states: the maximum squared inner
/// product of their absolute-amplitude vectors over qubit permutations and
/// per-qubit polar flips. 1 on the same gauge orbit, small across regimes.
pub fn gauge_overlap(x: &PureState, y: &PureState) -> Result<f64> {
    if x.dim() != y.dim() {
        return Err(Error::argument("state dimensions differ"));
    }
    let n = x.qubits()?;
    let dim = 1usize << n;
    let ax = abs_amplitudes(x);
    let ay = abs_amplitudes(y);
    let mut best = 0.0f64;
    for perm in heaps_permutations(n) {
        // Index map for this qubit permutation on bit positions.
        let mut mapped = vec![0usize; dim];
        for (i, m) in mapped.iter_mut().enumerate() {
            let mut j = 0usize;
            for (p, &q) in perm.iter().enumerate() {
                j |= ((i >> q) & 1) << p;
            }
            *m = j;
        }
        for flip in 0..dim {
            let mut sum = 0.0;
            for i in 0..dim {
                sum += ax[i] * ay[mapped[i] ^ flip];
            }
            best = best.max(sum * sum);
        }
    }
    Ok(best.min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bath::bath_weights;
    use crate::estimation::GaussianPrior;
    use crate::linalg::{basis_vec, CMat};
    use crate::material::{AlphaMode, Material};
    use approx::assert_relative_eq;

    const G: f64 = -0.44;

    fn estimator(n_bath: usize, b0_mt: f64, db_mt: f64, nodes: usize) -> Estimator {
        let m = Material::gaas();
        let alpha = m.alpha_rad_per_ns(AlphaMode::VarianceMatched, n_bath);
        let bath = bath_weights(n_bath, 1, alpha).unwrap();
        let prior = GaussianPrior::new(b0_mt * 1e-3, db_mt * 1e-3).unwrap();
        Estimator::new(bath, G, prior, nodes).unwrap()
    }

    fn small_cfg(seed: u64, restarts: usize) -> OptimizerConfig {
        OptimizerConfig {
            restarts,
            tol: 1e-9,
            max_iter: 200,
            seed,
        }
    }

    #[test]
    fn ansatz_states_match_hand_forms() {
        let ghz = Ansatz::Ghz.state(2).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert_relative_eq!(ghz.vector()[0].re, r, epsilon = 1e-15);
        assert_relative_eq!(ghz.vector()[3].re, r, epsilon = 1e-15);
        assert_eq!(ghz.vector()[1], c(0.0, 0.0));

        let plus0 = Ansatz::MixedProduct(1).state(2).unwrap();
        assert_relative_eq!(plus0.vector()[0].re, r, epsilon = 1e-15);
        assert_relative_eq!(plus0.vector()[2].re, r, epsilon = 1e-15);
        assert_eq!(plus0.vector()[1], c(0.0, 0.0));
        assert_eq!(plus0.vector()[3], c(0.0, 0.0));

        let corner = Ansatz::MixedProduct(0).state(3).unwrap();
        assert_eq!(corner.vector()[0], c(1.0, 0.0));
        assert_eq!(corner.vector().iter().skip(1).map(|z| z.norm()).sum::<f64>(), 0.0);

        let plus = Ansatz::PlusProduct.state(2).unwrap();
        for k in 0..4 {
            assert_relative_eq!(plus.vector()[k].re, 0.5, epsilon = 1e-15);
        }

        assert!(Ansatz::MixedProduct(3).state(2).is_err());
        assert!(Ansatz::GhzPlus(1.5).state(2).is_err());
        assert!(Ansatz::Ghz.state(0).is_err());
    }

    #[test]
    fn ghz_plus_endpoints_are_exact() {
        for n in 1..=3 {
            let a = Ansatz::GhzPlus(1.0).state(n).unwrap();
            let b = Ansatz::Ghz.state(n).unwrap();
            assert_eq!(a.vector(), b.vector());
            let a = Ansatz::GhzPlus(0.0).state(n).unwrap();
            let b = Ansatz::PlusProduct.state(n).unwrap();
            assert_eq!(a.vector(), b.vector());
        }
    }

    #[test]
    fn ghz_plus_two_qubit_amplitudes_at_small_mixing() {
        // a GHZ(2) + b |++> with (a, b) = (0.07071, 0.63640) is the g = 0.1
        // member after normalization.
        let state = Ansatz::GhzPlus(0.1).state(2).unwrap();
        let ghz = Ansatz::Ghz.state(2).unwrap();
        let plus = Ansatz::PlusProduct.state(2).unwrap();
        let v = ghz.vector().scale(0.07071) + plus.vector().scale(0.63640);
        let reference = PureState::normalized(v).unwrap();
        let diff = (state.vector() - reference.vector())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        assert!(diff < 1e-4, "amplitude difference {diff}");
    }

    #[test]
    fn haar_states_are_deterministic_normalized_and_uniform() {
        let mut r1 = ChaCha8Rng::seed_from_u64(9);
        let mut r2 = ChaCha8Rng::seed_from_u64(9);
        let a = haar_random_state(4, &mut r1).unwrap();
        let b = haar_random_state(4, &mut r2).unwrap();
        assert_eq!(a.vector(), b.vector());
        assert_relative_eq!(a.vector().norm(), 1.0, epsilon = 1e-12);
        assert!(haar_random_state(1, &mut r1).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let draws = 10_000;
        let mut acc = 0.0;
        for _ in 0..draws {
            let s = haar_random_state(4, &mut rng).unwrap();
            acc += s.vector()[0].norm_sqr();
        }
        let mean = acc / draws as f64;
        // Beta(1, 3) moment: mean 1/4, three standard errors ~ 0.006.
        assert!((mean - 0.25).abs() < 0.006, "mean {mean}");
    }

    #[test]
    fn derived_seeds_are_distinct() {
        let mut seen = std::collections::HashSet::new();
        for s in 0..32u64 {
            assert!(seen.insert(derive_seed(7, s)));
        }
    }

    #[test]
    fn iteration_at_t_zero_returns_first_basis_vector() {
        let est = estimator(9, 7.0, 4.0, 16);
        let family = est.family(0.0).unwrap();
        let psi = Ansatz::PlusProduct.state(2).unwrap();
        let next = iterate_once(&psi, &family).unwrap();
        let e0 = basis_vec(4, 0);
        let diff = (next.vector() - &e0).norm();
        assert!(diff < 1e-12, "diff {diff}");
    }

    #[test]
    fn optimize_at_t_zero_keeps_ratio_one() {
        let est = estimator(9, 7.0, 4.0, 16);
        let s = optimize_state(&est, 1, 0.0, &small_cfg(3, 4)).unwrap();
        assert_relative_eq!(s.outcome.ratio, 1.0, epsilon = 1e-9);
        assert!(s.converged);
    }

    #[test]
    fn iteration_trace_is_monotone() {
        let est = estimator(15, 7.0, 4.0, 32);
        let family = est.family(6.0).unwrap();
        for seed in 0..5u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut psi = haar_random_state(2, &mut rng).unwrap();
            let mut prev = eval_core(&psi, &family).unwrap().0;
            for _ in 0..6 {
                psi = iterate_once(&psi, &family).unwrap();
                let cur = eval_core(&psi, &family).unwrap().0;
                assert!(
                    cur <= prev + 1e-12,
                    "ratio rose from {prev} to {cur} (seed {seed})"
                );
                prev = cur;
            }
        }
    }

    #[test]
    fn optimizer_dominates_ansatz_family_at_two_dots() {
        let est = estimator(15, 7.0, 4.0, 32);
        let t = 4.0;
        let s = optimize_state(&est, 2, t, &small_cfg(11, 8)).unwrap();
        assert!(s.converged);
        for ansatz in [
            Ansatz::Ghz,
            Ansatz::PlusProduct,
            Ansatz::MixedProduct(1),
            Ansatz::MixedProduct(0),
        ] {
            let fixed =
                evaluate_fixed_state(&est, &ansatz.state(2).unwrap(), t, ansatz.label())
                    .unwrap();
            assert!(
                s.outcome.ratio <= fixed.outcome.ratio + 1e-9,
                "{} beat the optimizer: {} < {}",
                fixed.label,
                fixed.outcome.ratio,
                s.outcome.ratio
            );
        }
    }

    #[test]
    fn fixed_state_curve_ordering_matches_two_dot_regimes() {
        let est = estimator(15, 7.0, 4.0, 32);
        let ghz = Ansatz::Ghz.state(2).unwrap();
        let plus = Ansatz::PlusProduct.state(2).unwrap();
        let early_ghz = evaluate_fixed_state(&est, &ghz, 1.0, "ghz").unwrap();
        let early_plus = evaluate_fixed_state(&est, &plus, 1.0, "plus").unwrap();
        assert!(early_ghz.outcome.ratio < early_plus.outcome.ratio);
        let late_ghz = evaluate_fixed_state(&est, &ghz, 6.0, "ghz").unwrap();
        let late_plus = evaluate_fixed_state(&est, &plus, 6.0, "plus").unwrap();
        assert!(late_plus.outcome.ratio < late_ghz.outcome.ratio);
    }

    #[test]
    fn optimize_is_deterministic_bit_for_bit() {
        let est = estimator(15, 7.0, 4.0, 32);
        let cfg = small_cfg(42, 6);
        let a = optimize_state(&est, 2, 5.0, &cfg).unwrap();
        let b = optimize_state(&est, 2, 5.0, &cfg).unwrap();
        assert_eq!(a.state.vector(), b.state.vector());
        assert_eq!(a.outcome.ratio.to_bits(), b.outcome.ratio.to_bits());
        assert_eq!(a.iterations, b.iterations);
    }

    #[test]
    fn single_qubit_optimum_is_equatorial_with_transverse_observable() {
        // Strong field, short time: the state lies in the equator, and L
        // generates rotations about an axis orthogonal to both z and the
        // Bloch vector of the measured (prior-averaged, precessed) state.
        // The input state itself precesses by arg E(B0) before measurement,
        // so orthogonality only holds in the measured frame.
        fn bloch_of(m: &CMat) -> [f64; 3] {
            [
                2.0 * m[(0, 1)].re,
                -2.0 * m[(0, 1)].im,
                (m[(0, 0)] - m[(1, 1)]).re,
            ]
        }
        fn unit_dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
            let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)
        }
        let est = estimator(9, 1000.0, 1.0, 16);

        // Very short time: the optimal state is equatorial.
        let s = optimize_state(&est, 1, 0.05, &small_cfg(5, 6)).unwrap();
        let rho = s.state.vector() * s.state.vector().adjoint();
        let bloch = bloch_of(&rho);
        let norm = (bloch.iter().map(|x| x * x).sum::<f64>()).sqrt();
        let tilt = (bloch[2] / norm).abs();
        assert!(tilt < (1.0f64).to_radians().sin(), "state tilt {tilt}");

        // Short time with enough dephasing contrast to fix L's axis: the
        // observable is equatorial and transverse to the measured state.
        let t = 0.5;
        let s = optimize_state(&est, 1, t, &small_cfg(5, 6)).unwrap();
        let rho = s.state.vector() * s.state.vector().adjoint();
        let bloch = bloch_of(&rho);
        assert!(
            (bloch[2]).abs() < (1.0f64).to_radians().sin(),
            "state tilt at t={t}"
        );
        let l = s.outcome.l.matrix();
        let axis = [
            l[(0, 1)].re,
            -l[(0, 1)].im,
            0.5 * (l[(0, 0)].re - l[(1, 1)].re),
        ];
        let a_norm = (axis.iter().map(|x| x * x).sum::<f64>()).sqrt();
        let two_deg = (2.0f64).to_radians().sin();
        assert!((axis[2] / a_norm).abs() < two_deg, "L tilt");
        let (rho_bar, _) = est.family(t).unwrap().mean_states(&s.state);
        let measured = bloch_of(rho_bar.matrix());
        let dot = unit_dot(&axis, &measured);
        assert!(dot.abs() < two_deg, "L not transverse to measured state: {dot}");
    }

    #[test]
    fn ghz_plus_scan_pins_ghz_at_short_times() {
        let est = estimator(15, 7.0, 4.0, 32);
        let grid: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
        let scan = scan_ghz_plus(&est, 2, 1.0, &grid).unwrap();
        assert!(scan.g_best > 0.9, "g_best {}", scan.g_best);
        let r_ghz = scan.grid.last().unwrap().1;
        let r_plus = scan.grid.first().unwrap().1;
        assert!(scan.strategy.outcome.ratio <= r_ghz + 1e-12);
        assert!(scan.strategy.outcome.ratio <= r_plus + 1e-12);
        assert!(scan_ghz_plus(&est, 2, 1.0, &[]).is_err());
        assert!(scan_ghz_plus(&est, 2, 1.0, &[1.5]).is_err());
    }

    #[test]
    fn product_baseline_matches_single_qubit_optimum() {
        let est = estimator(15, 7.0, 4.0, 32);
        let t = 5.9;
        let base = random_product_baseline(&est, 1, t, 500, 99).unwrap();
        let opt = optimize_state(&est, 1, t, &small_cfg(7, 10)).unwrap();
        let rel = (base.outcome.ratio - opt.outcome.ratio) / opt.outcome.ratio;
        assert!(rel >= -1e-9, "baseline beat the optimizer: {rel}");
        assert!(rel < 0.02, "baseline misses optimum by {rel}");

        // Longer runs extend shorter ones: the running minimum can only fall.
        let short = random_product_baseline(&est, 1, t, 100, 99).unwrap();
        assert!(base.outcome.ratio <= short.outcome.ratio + 1e-15);

        // Determinism.
        let again = random_product_baseline(&est, 1, t, 100, 99).unwrap();
        assert_eq!(short.state.vector(), again.state.vector());
    }

    #[test]
    fn fingerprints_label_the_ansatz_states() {
        let ghz = Ansatz::Ghz.state(2).unwrap();
        let fp = fingerprint(&ghz).unwrap();
        assert_relative_eq!(fp.f_ghz, 1.0, epsilon = 1e-12);
        assert_eq!(fp.label, "ghz");
        assert_relative_eq!(fp.f_plus(), 0.5, epsilon = 1e-12);

        let plus = Ansatz::PlusProduct.state(2).unwrap();
        let fp = fingerprint(&plus).unwrap();
        assert_eq!(fp.label, "plus");
        assert_relative_eq!(fp.f_plus(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(fp.f_span, 1.0, epsilon = 1e-12);

        let mixed = Ansatz::MixedProduct(1).state(2).unwrap();
        let fp = fingerprint(&mixed).unwrap();
        assert_eq!(fp.label, "plus0");

        let corner = Ansatz::MixedProduct(0).state(2).unwrap();
        let fp = fingerprint(&corner).unwrap();
        assert_eq!(fp.label, "00");

        let single_plus = Ansatz::PlusProduct.state(1).unwrap();
        let fp = fingerprint(&single_plus).unwrap();
        assert_eq!(fp.label, "plus");
        assert!(fp.g_star.is_none());
    }

    #[test]
    fn fingerprint_recovers_mixing_weight() {
        for g in [0.1, 0.3, 0.5, 0.75] {
            let psi = Ansatz::GhzPlus(g).state(2).unwrap();
            let fp = fingerprint(&psi).unwrap();
            assert_relative_eq!(fp.f_span, 1.0, epsilon = 1e-12);
            assert_relative_eq!(fp.g_star.unwrap(), g, epsilon = 1e-10);
        }
        let drift = Ansatz::GhzPlus(0.3).state(2).unwrap();
        assert_eq!(fingerprint(&drift).unwrap().label, "ghz_plus");
        // Near the plus end the span fits distinctly better than the plain
        // product, so the drift label persists.
        let near_plus = Ansatz::GhzPlus(0.1).state(2).unwrap();
        assert_eq!(fingerprint(&near_plus).unwrap().label, "ghz_plus");
    }

    #[test]
    fn gauge_overlap_identifies_orbits() {
        let ghz = Ansatz::Ghz.state(2).unwrap();
        assert_relative_eq!(gauge_overlap(&ghz, &ghz).unwrap(), 1.0, epsilon = 1e-12);

        // Per-qubit z rotation and polar flips leave the orbit.
        let mut v = ghz.vector().clone();
        v[0] *= c(0.0, 1.0);
        let rotated = PureState::new(v).unwrap();
        assert_relative_eq!(
            gauge_overlap(&ghz, &rotated).unwrap(),
            1.0,
            epsilon = 1e-12
        );

        let plus0 = Ansatz::MixedProduct(1).state(2).unwrap();
        // |+>|0> and |0>|+> sit on the same orbit via the qubit swap.
        let zero_plus = {
            let mut v = CVec::zeros(4);
            let r = std::f64::consts::FRAC_1_SQRT_2;
            v[0] = c(r, 0.0);
            v[1] = c(r, 0.0);
            PureState::new(v).unwrap()
        };
        assert_relative_eq!(
            gauge_overlap(&plus0, &zero_plus).unwrap(),
            1.0,
            epsilon = 1e-12
        );

        let corner = Ansatz::MixedProduct(0).state(2).unwrap();
        let plus = Ansatz::PlusProduct.state(2).unwrap();
        assert_relative_eq!(
            gauge_overlap(&corner, &plus).unwrap(),
            0.25,
            epsilon = 1e-12
        );
        assert!(gauge_overlap(&corner, &Ansatz::Ghz.state(3).unwrap()).is_err());
    }
}
