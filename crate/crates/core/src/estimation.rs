//! Bayesian estimation of the field from the decohered state family.
//!
//! A Gaussian prior is discretized by Gauss-Hermite quadrature; the
//! averaged states rho_bar and rho_bar' determine the optimal observable L
//! through the Sylvester relation (L rho_bar + rho_bar L)/2 = rho_bar',
//! whose eigenbasis is the optimal von Neumann measurement and whose gain
//! tr(rho_bar L^2) - B0^2 lowers the prior variance. The solve and the gain
//! are carried out about the prior mean (in terms of L - B0 I), which keeps
//! the dB^2-scale gain meaningful at B0 >> dB. A central-difference SLD
//! Fisher information feeds the Bayesian Cramer-Rao (Van Trees) bound used
//! as an independent floor under the achieved variance.

use crate::bath::BathSpec;
use crate::channel::{affine_map_inplace, coefficients_ae, ChannelCoeffs};
use crate::error::{Error, Result};
use crate::linalg::{c, herm_eig, CMat, DensityMatrix, HermitianOperator, PureState};

/// Relative support threshold: rho_bar eigenvalues below this times the
/// largest one are treated as kernel.
const SUPPORT_REL: f64 = 1e-12;

/// Gaussian prior over the field, Tesla.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianPrior {
    pub b0_tesla: f64,
    pub db_tesla: f64,
}

impl GaussianPrior {
    pub fn new(b0_tesla: f64, db_tesla: f64) -> Result<Self> {
        if !(db_tesla > 0.0) {
            return Err(Error::argument("prior width dB must be positive"));
        }
        Ok(GaussianPrior { b0_tesla, db_tesla })
    }

    pub fn variance(&self) -> f64 {
        self.db_tesla * self.db_tesla
    }
}

/// Discretized prior: field nodes with probability weights. `offsets_tesla`
/// holds B_j - B0 as the exact products sqrt(2) dB x_j; recomputing them by
/// subtraction would reintroduce the B0-scale rounding the centered
/// estimation path exists to avoid.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    pub nodes_tesla: Vec<f64>,
    pub offsets_tesla: Vec<f64>,
    pub weights: Vec<f64>,
    pub prior: GaussianPrior,
}

/// Gauss-Hermite discretization of the prior: B_j = B0 + sqrt(2) dB x_j,
/// w_j = h_j / sqrt(pi), exact for polynomial moments up to degree 2n-1.
///
/// Nodes and weights come from the symmetric tridiagonal Jacobi matrix
/// (Golub-Welsch); the node set is symmetrized afterwards so that
/// x_j = -x_{n-1-j} holds exactly, which makes even moments exact and
/// population-only information vanish identically at B0 = 0.
pub fn gauss_hermite_grid(prior: &GaussianPrior, n_nodes: usize) -> Result<QuadratureGrid> {
    if n_nodes < 2 {
        return Err(Error::argument("quadrature needs at least 2 nodes"));
    }
    let n = n_nodes;
    let mut jacobi = nalgebra::DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let beta = (k as f64 / 2.0).sqrt();
        jacobi[(k - 1, k)] = beta;
        jacobi[(k, k - 1)] = beta;
    }
    let eig = nalgebra::SymmetricEigen::new(jacobi);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let mut xs: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut ws: Vec<f64> = order
        .iter()
        .map(|&i| {
            let v0 = eig.eigenvectors[(0, i)];
            v0 * v0
        })
        .collect();
    // Enforce the exact +/- symmetry of Hermite nodes.
    for j in 0..n / 2 {
        let k = n - 1 - j;
        let x = 0.5 * (xs[j] - xs[k]);
        xs[j] = x;
        xs[k] = -x;
        let w = 0.5 * (ws[j] + ws[k]);
        ws[j] = w;
        ws[k] = w;
    }
    if n % 2 == 1 {
        xs[n / 2] = 0.0;
    }
    let scale = std::f64::consts::SQRT_2 * prior.db_tesla;
    let offsets_tesla: Vec<f64> = xs.iter().map(|x| scale * x).collect();
    let nodes_tesla = offsets_tesla.iter().map(|d| prior.b0_tesla + d).collect();
    Ok(QuadratureGrid {
        nodes_tesla,
        offsets_tesla,
        weights: ws,
        prior: *prior,
    })
}

/// Channel coefficients for every quadrature node at one evolution time.
/// Precomputing this once lets many states be evaluated per (t, prior).
#[derive(Debug, Clone)]
pub struct ChannelFamily {
    pub coeffs: Vec<ChannelCoeffs>,
    pub weights: Vec<f64>,
    pub nodes_tesla: Vec<f64>,
    /// Exact B_j - B0 per node; see [`QuadratureGrid::offsets_tesla`].
    pub offsets_tesla: Vec<f64>,
    pub prior: GaussianPrior,
    pub t_ns: f64,
}

pub fn channel_family(
    bath: &BathSpec,
    t_ns: f64,
    grid: &QuadratureGrid,
    g_factor: f64,
) -> Result<ChannelFamily> {
    let coeffs = grid
        .nodes_tesla
        .iter()
        .map(|&b| coefficients_ae(bath, b, t_ns, g_factor))
        .collect::<Result<Vec<_>>>()?;
    Ok(ChannelFamily {
        coeffs,
        weights: grid.weights.clone(),
        nodes_tesla: grid.nodes_tesla.clone(),
        offsets_tesla: grid.offsets_tesla.clone(),
        prior: grid.prior,
        t_ns,
    })
}

impl ChannelFamily {
    fn accumulate(&self, psi: &PureState, field_weights: &[f64]) -> (CMat, CMat) {
        let dim = psi.dim();
        let n_qubits = dim.trailing_zeros() as usize;
        let rho0 = psi.vector() * psi.vector().adjoint();
        let mut bar = CMat::zeros(dim, dim);
        let mut prime = CMat::zeros(dim, dim);
        let mut scratch = CMat::zeros(dim, dim);
        for ((co, &w), &f) in self.coeffs.iter().zip(&self.weights).zip(field_weights) {
            scratch.copy_from(&rho0);
            affine_map_inplace(&mut scratch, n_qubits, co, false);
            bar.zip_apply(&scratch, |acc, s| *acc += s.scale(w));
            prime.zip_apply(&scratch, |acc, s| *acc += s.scale(w * f));
        }
        let bar = (&bar + bar.adjoint()).scale(0.5);
        let prime = (&prime + prime.adjoint()).scale(0.5);
        (bar, prime)
    }

    /// rho_bar = sum_j w_j map_j(|psi><psi|) and the Tesla-weighted
    /// rho_bar' = sum_j w_j B_j map_j(|psi><psi|), both Hermitized.
    pub fn mean_states(&self, psi: &PureState) -> (DensityMatrix, HermitianOperator) {
        let (bar, prime) = self.accumulate(psi, &self.nodes_tesla);
        (DensityMatrix::trusted(bar), HermitianOperator::trusted(prime))
    }

    /// Like [`mean_states`](Self::mean_states) but with the prior-centered
    /// weight rho_bar'_c = sum_j w_j (B_j - B0) map_j(|psi><psi|), built
    /// from the exact node offsets. At large B0 / dB this is the only form
    /// whose estimation gain survives in floating point; the uncentered
    /// rho_bar' equals rho_bar'_c + B0 rho_bar.
    pub fn mean_states_centered(&self, psi: &PureState) -> (DensityMatrix, HermitianOperator) {
        let (bar, prime_c) = self.accumulate(psi, &self.offsets_tesla);
        (
            DensityMatrix::trusted(bar),
            HermitianOperator::trusted(prime_c),
        )
    }
}

/// Averaged state pair for an initial pure state evolved for time t under
/// every prior field node.
pub fn mean_states(
    psi0: &PureState,
    bath: &BathSpec,
    t_ns: f64,
    grid: &QuadratureGrid,
    g_factor: f64,
) -> Result<(DensityMatrix, HermitianOperator)> {
    let family = channel_family(bath, t_ns, grid, g_factor)?;
    Ok(family.mean_states(psi0))
}

pub(crate) struct PersonickCore {
    /// Full observable L, Tesla.
    pub l: CMat,
    /// L - b0 I, the part actually solved for.
    pub l_centered: CMat,
    pub gain: f64,
}

/// Solves the prior-centered Sylvester relation
/// (L~ rho + rho L~)/2 = rho'_c on the support of rho, where L~ = L - b0 I
/// and rho'_c = rho' - b0 rho; on the kernel L~ vanishes (the
/// zero-probability branch estimates the prior mean), with vanishing
/// support-kernel cross blocks. The gain tr(rho L^2) - b0^2 is assembled as
/// tr(rho L~^2) + 2 b0 tr(rho L~), which never forms b0^2-scale terms and so
/// keeps full precision even at b0 >> dB, where the textbook expression
/// loses everything to cancellation.
pub(crate) fn personick_core_centered(
    rho_bar: &CMat,
    rho_prime_c: &CMat,
    b0: f64,
) -> Result<PersonickCore> {
    let (vals, vecs) = herm_eig(rho_bar)?;
    let n = vals.len();
    let lam_max = vals[n - 1].max(0.0);
    let eps = SUPPORT_REL * lam_max;
    let r = vecs.adjoint() * rho_prime_c * &vecs;

    let mut l_eig = CMat::zeros(n, n);
    let mut gain2 = 0.0f64;
    let mut trl = 0.0f64;
    for i in 0..n {
        if vals[i] <= eps {
            continue;
        }
        for j in 0..n {
            if vals[j] <= eps {
                continue;
            }
            let lij = r[(i, j)].scale(2.0 / (vals[i] + vals[j]));
            l_eig[(i, j)] = lij;
            gain2 += vals[i] * lij.norm_sqr();
            if i == j {
                trl += vals[i] * lij.re;
            }
        }
    }
    let gain = gain2 + 2.0 * b0 * trl;
    let l_back = &vecs * l_eig * vecs.adjoint();
    let l_centered = (&l_back + l_back.adjoint()).scale(0.5);
    let mut l = l_centered.clone();
    for k in 0..n {
        l[(k, k)] += c(b0, 0.0);
    }
    Ok(PersonickCore {
        l,
        l_centered,
        gain,
    })
}

/// Uncentered entry point: centers rho' by subtraction. Callers holding the
/// exactly accumulated rho'_c should use the centered form instead; the
/// subtraction here costs O(eps b0^2 / dB^2) of the ratio at extreme priors.
pub(crate) fn personick_core(rho_bar: &CMat, rho_prime: &CMat, b0: f64) -> Result<PersonickCore> {
    let mut prime_c = rho_prime.clone();
    prime_c.zip_apply(rho_bar, |p, r| *p -= r.scale(b0));
    personick_core_centered(rho_bar, &prime_c, b0)
}

/// Optimal Bayesian observable for the averaged pair; `b0` is the prior
/// mean used on the kernel of rho_bar.
pub fn personick_observable(
    rho_bar: &DensityMatrix,
    rho_prime: &HermitianOperator,
    b0: f64,
) -> Result<HermitianOperator> {
    let tr = rho_bar.matrix().trace();
    if (tr.re - 1.0).abs() > 1e-9 {
        return Err(Error::invariant(format!(
            "averaged state trace {} is far from 1",
            tr.re
        )));
    }
    let core = personick_core(rho_bar.matrix(), rho_prime.matrix(), b0)?;
    Ok(HermitianOperator::trusted(core.l))
}

/// Max-norm of the Sylvester residual (L rho + rho L)/2 - rho', projected
/// onto the support of rho.
pub fn personick_residual(
    rho_bar: &DensityMatrix,
    rho_prime: &HermitianOperator,
    l: &HermitianOperator,
) -> Result<f64> {
    let (vals, vecs) = herm_eig(rho_bar.matrix())?;
    let n = vals.len();
    let eps = SUPPORT_REL * vals[n - 1].max(0.0);
    let resid = (l.matrix() * rho_bar.matrix() + rho_bar.matrix() * l.matrix()).scale(0.5)
        - rho_prime.matrix();
    let r = vecs.adjoint() * resid * vecs;
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            if vals[i] > eps && vals[j] > eps {
                worst = worst.max(r[(i, j)].norm());
            }
        }
    }
    Ok(worst)
}

/// Result of one Bayesian measurement design.
#[derive(Debug, Clone)]
pub struct EstimationOutcome {
    /// Optimal observable, Tesla.
    pub l: HermitianOperator,
    /// Its eigenvalues (the estimator's output values), ascending, Tesla.
    pub spectrum: Vec<f64>,
    /// Outcome probabilities aligned with `spectrum`.
    pub probabilities: Vec<f64>,
    /// Posterior mean-square error, Tesla^2.
    pub var_est: f64,
    /// var_est / prior variance, in [0, 1].
    pub ratio: f64,
    /// Variance reduction tr(rho_bar L^2) - B0^2, Tesla^2.
    pub gain: f64,
}

fn outcome_from_core(
    core: PersonickCore,
    rho_bar: &DensityMatrix,
    prior: &GaussianPrior,
) -> Result<EstimationOutcome> {
    let (ratio, var_est) = ratio_from_gain(core.gain, prior)?;
    // Diagonalize the centered part: same eigenvectors as L, and the
    // spectrum about B0 is resolved at its own scale instead of B0's.
    let (vals, vecs) = herm_eig(&core.l_centered)?;
    let n = vals.len();
    let mut probabilities = Vec::with_capacity(n);
    for k in 0..n {
        let col = vecs.column(k);
        let p = (col.adjoint() * rho_bar.matrix() * col)[(0, 0)].re;
        probabilities.push(p.max(0.0));
    }
    Ok(EstimationOutcome {
        l: HermitianOperator::trusted(core.l),
        spectrum: vals.iter().map(|v| v + prior.b0_tesla).collect(),
        probabilities,
        var_est,
        ratio,
        gain: core.gain,
    })
}

/// Posterior variance reached by the optimal measurement, with the
/// observable's spectrum and outcome probabilities. Centers rho' by
/// subtraction; with the exactly accumulated centered weight at hand,
/// prefer [`estimation_variance_centered`].
pub fn estimation_variance(
    rho_bar: &DensityMatrix,
    rho_prime: &HermitianOperator,
    prior: &GaussianPrior,
) -> Result<EstimationOutcome> {
    let core = personick_core(rho_bar.matrix(), rho_prime.matrix(), prior.b0_tesla)?;
    outcome_from_core(core, rho_bar, prior)
}

/// [`estimation_variance`] taking the prior-centered weight
/// rho'_c = rho' - B0 rho_bar, as returned by
/// [`ChannelFamily::mean_states_centered`]. This path stays accurate at
/// B0 >> dB where the uncentered gain cancels catastrophically.
pub fn estimation_variance_centered(
    rho_bar: &DensityMatrix,
    rho_prime_c: &HermitianOperator,
    prior: &GaussianPrior,
) -> Result<EstimationOutcome> {
    let core =
        personick_core_centered(rho_bar.matrix(), rho_prime_c.matrix(), prior.b0_tesla)?;
    outcome_from_core(core, rho_bar, prior)
}

/// Converts a gain into (ratio, var_est), rejecting values that leave
/// [0, 1] beyond numerical tolerance.
pub(crate) fn ratio_from_gain(gain: f64, prior: &GaussianPrior) -> Result<(f64, f64)> {
    let var_prior = prior.variance();
    let ratio_raw = 1.0 - gain / var_prior;
    if !(-1e-10..=1.0 + 1e-10).contains(&ratio_raw) {
        return Err(Error::numerical(format!(
            "variance ratio {ratio_raw} left [0, 1]"
        )));
    }
    let ratio = ratio_raw.clamp(0.0, 1.0);
    Ok((ratio, ratio * var_prior))
}

/// Gain and ratio of a prescribed orthonormal measurement basis with
/// optimal outcome labels.
#[derive(Debug, Clone, Copy)]
pub struct BasisGain {
    pub gain: f64,
    pub ratio: f64,
}

/// Variance reduction achieved by measuring in the given orthonormal basis
/// (columns of `basis`) and assigning each outcome its optimal estimate.
pub fn basis_gain(
    basis: &CMat,
    rho_bar: &DensityMatrix,
    rho_prime: &HermitianOperator,
    prior: &GaussianPrior,
) -> Result<BasisGain> {
    let n = rho_bar.dim();
    if basis.nrows() != n || basis.ncols() != n {
        return Err(Error::argument("basis dimension mismatch"));
    }
    let gram_defect = (basis.adjoint() * basis - CMat::identity(n, n))
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    if gram_defect > 1e-10 {
        return Err(Error::argument(format!(
            "basis is not orthonormal (defect {gram_defect:.3e})"
        )));
    }
    let (vals, _) = herm_eig(rho_bar.matrix())?;
    let eps = SUPPORT_REL * vals[n - 1].max(0.0);

    let mut gain = -prior.b0_tesla * prior.b0_tesla;
    for k in 0..n {
        let col = basis.column(k);
        let p = (col.adjoint() * rho_bar.matrix() * col)[(0, 0)].re;
        if p < eps {
            continue;
        }
        let num = (col.adjoint() * rho_prime.matrix() * col)[(0, 0)].re;
        gain += num * num / p;
    }
    let ratio = 1.0 - gain / prior.variance();
    Ok(BasisGain { gain, ratio })
}

/// SLD Fisher information estimate with its step-halving diagnostic.
#[derive(Debug, Clone, Copy)]
pub struct FisherEstimate {
    /// F at the requested step.
    pub value: f64,
    /// F recomputed at half the step.
    pub value_halved: f64,
    pub delta_b: f64,
}

impl FisherEstimate {
    pub fn rel_change(&self) -> f64 {
        let scale = self.value_halved.abs().max(1e-300);
        (self.value - self.value_halved).abs() / scale
    }

    /// False when halving the step moved F by more than 1%, i.e. the step
    /// was too large for the central difference.
    pub fn converged(&self) -> bool {
        self.rel_change() <= 1e-2
    }
}

fn fisher_at(
    psi0: &PureState,
    bath: &BathSpec,
    t_ns: f64,
    b_tesla: f64,
    delta_b: f64,
    g_factor: f64,
) -> Result<f64> {
    let n_qubits = psi0.dim().trailing_zeros() as usize;
    let rho0 = psi0.vector() * psi0.vector().adjoint();

    let evolve = |b: f64| -> Result<CMat> {
        let co = coefficients_ae(bath, b, t_ns, g_factor)?;
        let mut m = rho0.clone();
        affine_map_inplace(&mut m, n_qubits, &co, false);
        Ok(m)
    };
    let rho_b = evolve(b_tesla)?;
    let dplus = evolve(b_tesla + delta_b)?;
    let dminus = evolve(b_tesla - delta_b)?;
    let drho = (dplus - dminus).scale(1.0 / (2.0 * delta_b));

    let (vals, vecs) = herm_eig(&rho_b)?;
    let n = vals.len();
    let eps = SUPPORT_REL * vals[n - 1].max(0.0);
    let r = vecs.adjoint() * drho * vecs;
    let mut f = 0.0;
    for i in 0..n {
        if vals[i] <= eps {
            continue;
        }
        for j in 0..n {
            if vals[j] <= eps {
                continue;
            }
            let lij = r[(i, j)].scale(2.0 / (vals[i] + vals[j]));
            f += vals[i] * lij.norm_sqr();
        }
    }
    Ok(f)
}

/// Quantum Fisher information about B at a point field, from the SLD built
/// on a central finite difference of the evolved state.
pub fn sld_fisher(
    psi0: &PureState,
    bath: &BathSpec,
    t_ns: f64,
    b_tesla: f64,
    delta_b: f64,
    g_factor: f64,
) -> Result<FisherEstimate> {
    if !(delta_b > 0.0) {
        return Err(Error::argument("finite-difference step must be positive"));
    }
    let value = fisher_at(psi0, bath, t_ns, b_tesla, delta_b, g_factor)?;
    let value_halved = fisher_at(psi0, bath, t_ns, b_tesla, delta_b / 2.0, g_factor)?;
    Ok(FisherEstimate {
        value,
        value_halved,
        delta_b,
    })
}

/// Default Fisher finite-difference step for a prior width.
pub fn default_fisher_step(prior: &GaussianPrior) -> f64 {
    1e-3 * prior.db_tesla
}

/// Bayesian Cramer-Rao (Van Trees) floor on the posterior variance:
/// 1 / (sum_j w_j F(B_j) + 1/dB^2).
pub fn van_trees_bound(
    psi0: &PureState,
    bath: &BathSpec,
    t_ns: f64,
    grid: &QuadratureGrid,
    g_factor: f64,
) -> Result<f64> {
    let delta = default_fisher_step(&grid.prior);
    let mut info = 0.0;
    for (&b, &w) in grid.nodes_tesla.iter().zip(&grid.weights) {
        info += w * fisher_at(psi0, bath, t_ns, b, delta, g_factor)?;
    }
    Ok(1.0 / (info + 1.0 / grid.prior.variance()))
}

/// Bundled estimation context: bath, electron g-factor, prior, and its
/// quadrature grid.
#[derive(Debug, Clone)]
pub struct Estimator {
    pub bath: BathSpec,
    pub g_factor: f64,
    pub prior: GaussianPrior,
    pub grid: QuadratureGrid,
}

impl Estimator {
    pub fn new(bath: BathSpec, g_factor: f64, prior: GaussianPrior, n_nodes: usize) -> Result<Self> {
        let grid = gauss_hermite_grid(&prior, n_nodes)?;
        Ok(Estimator {
            bath,
            g_factor,
            prior,
            grid,
        })
    }

    pub fn family(&self, t_ns: f64) -> Result<ChannelFamily> {
        channel_family(&self.bath, t_ns, &self.grid, self.g_factor)
    }

    /// Full estimation outcome for a state at time t.
    pub fn evaluate(&self, psi: &PureState, t_ns: f64) -> Result<EstimationOutcome> {
        let family = self.family(t_ns)?;
        self.evaluate_with_family(psi, &family)
    }

    pub fn evaluate_with_family(
        &self,
        psi: &PureState,
        family: &ChannelFamily,
    ) -> Result<EstimationOutcome> {
        let (bar, prime_c) = family.mean_states_centered(psi);
        estimation_variance_centered(&bar, &prime_c, &self.prior)
    }

    pub fn van_trees(&self, psi: &PureState, t_ns: f64) -> Result<f64> {
        van_trees_bound(psi, &self.bath, t_ns, &self.grid, self.g_factor)
    }
}
