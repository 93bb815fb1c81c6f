//! Time sweeps of the optimal strategy, regime labeling, and detection of
//! the two kinds of transition in the optimal observable.
//!
//! A zeroth-kind transition jumps the spectrum of L together with the
//! optimal state (gauge-orbit overlap collapses); a first-kind transition
//! kinks the spectrum while the state moves continuously. Detection works
//! on adjacent-record differences against median-based thresholds, then
//! refines each event's bracket by re-running the optimizer inside it.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimation::{basis_gain, ChannelFamily, Estimator, GaussianPrior};
use crate::linalg::{CMat, PureState};
use crate::optimize::{
    evaluate_fixed_with_family, fingerprint, gauge_overlap, mixed_label, optimize_with_family,
    Ansatz, OptimizerConfig, Strategy,
};

/// Overlap below which adjacent optima are treated as different regimes.
pub const OVERLAP_BREAK: f64 = 0.9;
/// Zeroth-kind threshold: multiples of the median adjacent spectrum jump.
pub const JUMP_FACTOR: f64 = 5.0;
/// First-kind threshold: multiples of the median second difference.
pub const KINK_FACTOR: f64 = 10.0;
/// Refined bracket width target, relative to its midpoint time.
pub const BRACKET_REL_WIDTH: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridSpacing {
    Linear,
    Log,
}

/// Strictly increasing evaluation times, uniform in t or in log t.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    pub times: Vec<f64>,
    pub spacing: GridSpacing,
}

impl TimeGrid {
    pub fn linear(t_start: f64, t_end: f64, points: usize) -> Result<Self> {
        if points < 2 || !(t_end > t_start) || !(t_start >= 0.0) {
            return Err(Error::argument("bad linear time grid"));
        }
        let step = (t_end - t_start) / (points - 1) as f64;
        let times = (0..points).map(|i| t_start + step * i as f64).collect();
        Ok(TimeGrid {
            times,
            spacing: GridSpacing::Linear,
        })
    }

    pub fn log(t_start: f64, t_end: f64, points: usize) -> Result<Self> {
        if points < 2 || !(t_end > t_start) || !(t_start > 0.0) {
            return Err(Error::argument("bad log time grid"));
        }
        let (la, lb) = (t_start.ln(), t_end.ln());
        let step = (lb - la) / (points - 1) as f64;
        let times = (0..points).map(|i| (la + step * i as f64).exp()).collect();
        Ok(TimeGrid {
            times,
            spacing: GridSpacing::Log,
        })
    }
}

/// Classifies a strictly increasing time list as uniform or log-uniform
/// within a 1e-6 relative spread; anything else is rejected.
pub fn classify_grid(times: &[f64]) -> Result<GridSpacing> {
    if times.len() < 2 {
        return Err(Error::argument("time grid needs at least 2 points"));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::argument("time grid must be strictly increasing"));
    }
    let spread = |xs: &[f64]| -> f64 {
        let diffs: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
        let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
        let max = diffs.iter().cloned().fold(f64::MIN, f64::max);
        let min = diffs.iter().cloned().fold(f64::MAX, f64::min);
        (max - min) / mean
    };
    if spread(times) < 1e-6 {
        return Ok(GridSpacing::Linear);
    }
    if times[0] > 0.0 {
        let logs: Vec<f64> = times.iter().map(|t| t.ln()).collect();
        if spread(&logs) < 1e-6 {
            return Ok(GridSpacing::Log);
        }
    }
    Err(Error::argument(
        "time grid is neither uniform nor log-uniform",
    ))
}

/// Everything a sweep needs: the estimation context, the dot count, and
/// the optimizer policy.
#[derive(Debug, Clone)]
pub struct SweepContext {
    pub estimator: Estimator,
    pub n_qubits: usize,
    pub cfg: OptimizerConfig,
}

impl SweepContext {
    pub fn new(estimator: Estimator, n_qubits: usize, cfg: OptimizerConfig) -> Result<Self> {
        if n_qubits == 0 || n_qubits > crate::optimize::MAX_QUBITS {
            return Err(Error::argument("qubit count out of range"));
        }
        cfg.validate()?;
        Ok(SweepContext {
            estimator,
            n_qubits,
            cfg,
        })
    }
}

/// Fixed comparison states evaluated at every sweep time: GHZ, the full
/// plus product, and every |+>^k |0>^(N-k) down to the polar corner.
pub fn sweep_ansatz_set(n_qubits: usize) -> Result<Vec<(String, PureState)>> {
    let mut set = vec![
        ("ghz".to_string(), Ansatz::Ghz.state(n_qubits)?),
        (
            mixed_label(n_qubits, n_qubits),
            Ansatz::PlusProduct.state(n_qubits)?,
        ),
    ];
    for k in (0..n_qubits).rev() {
        set.push((
            mixed_label(n_qubits, k),
            Ansatz::MixedProduct(k).state(n_qubits)?,
        ));
    }
    Ok(set)
}

/// One sweep time: the merged optimum, the ansatz curves, and the optimal
/// observable's spectrum and outcome statistics.
#[derive(Debug, Clone)]
pub struct SweepRecord {
    pub t_ns: f64,
    pub ratio_opt: f64,
    /// label -> ratio in the fixed order of `sweep_ansatz_set`.
    pub ansatz_ratios: Vec<(String, f64)>,
    /// Eigenvalues of the optimal L, ascending, Tesla.
    pub spectrum: Vec<f64>,
    pub probabilities: Vec<f64>,
    /// Gauge-orbit fidelities of the optimal state: ghz, plus, ghz_plus
    /// span, then the mixed products.
    pub state_fidelities: Vec<(String, f64)>,
    pub regime_label: String,
    pub state: PureState,
    pub converged: bool,
    pub iterations: usize,
    /// GHZ weight of the span projection, when defined.
    pub g_star: Option<f64>,
}

impl SweepRecord {
    pub fn ansatz_ratio(&self, label: &str) -> Option<f64> {
        self.ansatz_ratios
            .iter()
            .find(|(l, _)| l == label)
            .map(|(_, r)| *r)
    }
}

fn record_from_best(
    ctx: &SweepContext,
    family: &ChannelFamily,
    best: Strategy,
    ansatz_ratios: Vec<(String, f64)>,
) -> Result<SweepRecord> {
    if ctx.estimator.prior.b0_tesla == 0.0 {
        assert_population_blind(ctx, family, &best.state)?;
    }
    let fp = fingerprint(&best.state)?;
    let mut fidelities = vec![
        ("ghz".to_string(), fp.f_ghz),
        (mixed_label(ctx.n_qubits, ctx.n_qubits), fp.f_plus()),
        ("ghz_plus".to_string(), fp.f_span),
    ];
    for k in (0..ctx.n_qubits).rev() {
        fidelities.push((mixed_label(ctx.n_qubits, k), fp.f_mixed[k]));
    }
    Ok(SweepRecord {
        t_ns: family.t_ns,
        ratio_opt: best.outcome.ratio,
        ansatz_ratios,
        spectrum: best.outcome.spectrum.clone(),
        probabilities: best.outcome.probabilities.clone(),
        state_fidelities: fidelities,
        regime_label: fp.label,
        state: best.state,
        converged: best.converged,
        iterations: best.iterations,
        g_star: fp.g_star,
    })
}

/// At a centered prior the channel obeys A(-B) = A(B), so populations carry
/// no field information; a violation indicates a numerical fault.
fn assert_population_blind(
    ctx: &SweepContext,
    family: &ChannelFamily,
    state: &PureState,
) -> Result<()> {
    let dim = state.dim();
    let (bar, prime) = family.mean_states(state);
    let population = CMat::identity(dim, dim);
    let bg = basis_gain(&population, &bar, &prime, &ctx.estimator.prior)?;
    if bg.gain.abs() >= 1e-10 {
        return Err(Error::numerical(format!(
            "population gain {} at zero-mean prior (t = {})",
            bg.gain, family.t_ns
        )));
    }
    Ok(())
}

fn best_of(mut candidates: Vec<Strategy>) -> Strategy {
    let winner = candidates
        .iter()
        .enumerate()
        .min_by(|(ia, a), (ib, b)| {
            a.outcome
                .ratio
                .total_cmp(&b.outcome.ratio)
                .then(ia.cmp(ib))
        })
        .map(|(i, _)| i)
        .expect("nonempty candidates");
    candidates.swap_remove(winner)
}

/// Sweeps the optimizer over a time grid. Pass one optimizes every time
/// independently with fresh restarts; pass two walks the grid warm-starting
/// from the previous optimum; each record keeps the better of the two and
/// of the fixed ansatz evaluations.
pub fn time_sweep(ctx: &SweepContext, grid: &TimeGrid) -> Result<Vec<SweepRecord>> {
    if grid.times.is_empty() {
        return Err(Error::argument("empty time grid"));
    }
    let families: Vec<ChannelFamily> = grid
        .times
        .par_iter()
        .map(|&t| ctx.estimator.family(t))
        .collect::<Result<Vec<_>>>()?;
    let ansatz = sweep_ansatz_set(ctx.n_qubits)?;

    let fresh: Vec<Strategy> = families
        .par_iter()
        .map(|fam| optimize_with_family(fam, ctx.n_qubits, &ctx.cfg, &[]))
        .collect::<Result<Vec<_>>>()?;

    let warm_cfg = OptimizerConfig {
        restarts: 1,
        ..ctx.cfg
    };
    let mut records = Vec::with_capacity(grid.times.len());
    let mut prev_state: Option<PureState> = None;
    for (fam, fresh_run) in families.iter().zip(fresh) {
        let mut candidates = vec![fresh_run];
        if let Some(ref prev) = prev_state {
            candidates.push(optimize_with_family(
                fam,
                ctx.n_qubits,
                &warm_cfg,
                std::slice::from_ref(prev),
            )?);
        }
        let mut ansatz_ratios = Vec::with_capacity(ansatz.len());
        for (label, state) in &ansatz {
            let s = evaluate_fixed_with_family(fam, state, label.clone())?;
            ansatz_ratios.push((label.clone(), s.outcome.ratio));
            candidates.push(s);
        }
        let best = best_of(candidates);
        let record = record_from_best(ctx, fam, best, ansatz_ratios)?;
        prev_state = Some(record.state.clone());
        records.push(record);
    }
    Ok(records)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransitionKind {
    /// The spectrum and the optimal state jump together.
    Zeroth,
    /// The spectrum kinks while the state moves continuously.
    First,
}

/// A detected regime change, bracketed in time.
#[derive(Debug, Clone)]
pub struct TransitionEvent {
    pub t_lo: f64,
    pub t_hi: f64,
    pub kind: TransitionKind,
    /// Sup-norm jump of the sorted spectrum across the original bracket,
    /// Tesla.
    pub spectrum_jump: f64,
    /// Largest step-normalized second difference of the spectrum, Tesla per
    /// squared grid unit.
    pub kink_score: f64,
    /// 1 - min gauge overlap of adjacent optima across the bracket.
    pub state_overlap_drop: f64,
}

fn median(xs: &[f64]) -> f64 {
    let mut v: Vec<f64> = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return 0.0;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn sup_jump(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Raw threshold crossings, before any bracket refinement. Grid must be
/// uniform or log-uniform; detection runs in the uniform coordinate.
pub fn detect_transition_candidates(records: &[SweepRecord]) -> Result<Vec<TransitionEvent>> {
    if records.len() < 5 {
        return Err(Error::argument("transition detection needs >= 5 records"));
    }
    let times: Vec<f64> = records.iter().map(|r| r.t_ns).collect();
    let spacing = classify_grid(&times)?;
    let coord: Vec<f64> = match spacing {
        GridSpacing::Linear => times.clone(),
        GridSpacing::Log => times.iter().map(|t| t.ln()).collect(),
    };
    let h = (coord[coord.len() - 1] - coord[0]) / (coord.len() - 1) as f64;
    let n = records.len();

    let jumps: Vec<f64> = (0..n - 1)
        .map(|i| sup_jump(&records[i].spectrum, &records[i + 1].spectrum))
        .collect();
    let overlaps: Vec<f64> = (0..n - 1)
        .map(|i| gauge_overlap(&records[i].state, &records[i + 1].state))
        .collect::<Result<Vec<_>>>()?;
    let kinks: Vec<f64> = (1..n - 1)
        .map(|i| {
            records[i]
                .spectrum
                .iter()
                .enumerate()
                .map(|(k, s)| {
                    (records[i + 1].spectrum[k] - 2.0 * s + records[i - 1].spectrum[k]).abs()
                        / (h * h)
                })
                .fold(0.0, f64::max)
        })
        .collect();

    let spectrum_scale = records
        .iter()
        .flat_map(|r| r.spectrum.iter())
        .map(|s| s.abs())
        .fold(0.0, f64::max);
    let jump_thresh = (JUMP_FACTOR * median(&jumps)).max(1e-14 * spectrum_scale);
    let kink_thresh = (KINK_FACTOR * median(&kinks)).max(1e-14 * spectrum_scale / (h * h));

    let mut events = Vec::new();

    // Zeroth kind: jump across edge i with the state orbit breaking.
    let zeroth_flag: Vec<bool> = (0..n - 1)
        .map(|i| jumps[i] > jump_thresh && overlaps[i] < OVERLAP_BREAK)
        .collect();
    let mut i = 0;
    while i < n - 1 {
        if zeroth_flag[i] {
            let start = i;
            while i + 1 < n - 1 && zeroth_flag[i + 1] {
                i += 1;
            }
            let edge_range = start..=i;
            events.push(TransitionEvent {
                t_lo: times[start],
                t_hi: times[i + 1],
                kind: TransitionKind::Zeroth,
                spectrum_jump: edge_range
                    .clone()
                    .map(|e| jumps[e])
                    .fold(0.0, f64::max),
                kink_score: 0.0,
                state_overlap_drop: 1.0
                    - edge_range.map(|e| overlaps[e]).fold(f64::MAX, f64::min),
            });
        }
        i += 1;
    }

    // First kind: kink at node i while the state stays on its orbit.
    let first_flag: Vec<bool> = (1..n - 1)
        .map(|i| {
            kinks[i - 1] > kink_thresh
                && overlaps[i - 1] >= OVERLAP_BREAK
                && overlaps[i] >= OVERLAP_BREAK
        })
        .collect();
    let mut i = 1;
    while i < n - 1 {
        if first_flag[i - 1] {
            let start = i;
            while i + 1 < n - 1 && first_flag[i] {
                i += 1;
            }
            let node_range = start..=i;
            events.push(TransitionEvent {
                t_lo: times[start - 1],
                t_hi: times[i + 1],
                kind: TransitionKind::First,
                spectrum_jump: (start - 1..=i)
                    .map(|e| jumps[e])
                    .fold(0.0, f64::max),
                kink_score: node_range
                    .map(|j| kinks[j - 1])
                    .fold(0.0, f64::max),
                state_overlap_drop: 1.0
                    - (start - 1..=i).map(|e| overlaps[e]).fold(f64::MAX, f64::min),
            });
        }
        i += 1;
    }

    events.sort_by(|a, b| a.t_lo.total_cmp(&b.t_lo));
    Ok(events)
}

fn optimize_at(
    ctx: &SweepContext,
    t_ns: f64,
    warm: &[PureState],
) -> Result<Strategy> {
    let family = ctx.estimator.family(t_ns)?;
    optimize_with_family(&family, ctx.n_qubits, &ctx.cfg, warm)
}

fn bracket_mid(spacing: GridSpacing, lo: f64, hi: f64) -> f64 {
    match spacing {
        GridSpacing::Linear => 0.5 * (lo + hi),
        GridSpacing::Log => (lo * hi).sqrt(),
    }
}

fn refine_zeroth(
    ctx: &SweepContext,
    spacing: GridSpacing,
    event: &mut TransitionEvent,
    mut state_lo: PureState,
    mut state_hi: PureState,
) -> Result<()> {
    for _ in 0..32 {
        let mid_t = bracket_mid(spacing, event.t_lo, event.t_hi);
        if event.t_hi - event.t_lo <= BRACKET_REL_WIDTH * mid_t {
            break;
        }
        let warm = [state_lo.clone(), state_hi.clone()];
        let mid = optimize_at(ctx, mid_t, &warm)?;
        if gauge_overlap(&state_lo, &mid.state)? < OVERLAP_BREAK {
            event.t_hi = mid_t;
            state_hi = mid.state;
        } else if gauge_overlap(&mid.state, &state_hi)? < OVERLAP_BREAK {
            event.t_lo = mid_t;
            state_lo = mid.state;
        } else {
            // The break dissolved at this resolution; keep the bracket.
            break;
        }
    }
    Ok(())
}

fn refine_first(
    ctx: &SweepContext,
    spacing: GridSpacing,
    event: &mut TransitionEvent,
    state_lo: PureState,
    state_hi: PureState,
) -> Result<()> {
    let to_coord = |t: f64| match spacing {
        GridSpacing::Linear => t,
        GridSpacing::Log => t.ln(),
    };
    let from_coord = |u: f64| match spacing {
        GridSpacing::Linear => u,
        GridSpacing::Log => u.exp(),
    };
    let warm = [state_lo, state_hi];
    for _ in 0..16 {
        let mid_t = bracket_mid(spacing, event.t_lo, event.t_hi);
        if event.t_hi - event.t_lo <= BRACKET_REL_WIDTH * mid_t {
            break;
        }
        let (u_lo, u_hi) = (to_coord(event.t_lo), to_coord(event.t_hi));
        let step = (u_hi - u_lo) / 4.0;
        let mut spectra = Vec::with_capacity(5);
        let mut ts = Vec::with_capacity(5);
        for j in 0..5 {
            let t = from_coord(u_lo + step * j as f64);
            let s = optimize_at(ctx, t, &warm)?;
            spectra.push(s.outcome.spectrum.clone());
            ts.push(t);
        }
        let mut best_j = 1;
        let mut best_score = f64::MIN;
        for j in 1..4 {
            let score = spectra[j]
                .iter()
                .enumerate()
                .map(|(k, s)| (spectra[j + 1][k] - 2.0 * s + spectra[j - 1][k]).abs())
                .fold(0.0, f64::max);
            if score > best_score {
                best_score = score;
                best_j = j;
            }
        }
        event.t_lo = ts[best_j - 1];
        event.t_hi = ts[best_j + 1];
    }
    Ok(())
}

/// Full transition detection: candidates from the grid, each refined by
/// re-running the optimizer until the bracket is at most 2% of t wide.
pub fn detect_transitions(
    records: &[SweepRecord],
    ctx: &SweepContext,
) -> Result<Vec<TransitionEvent>> {
    let mut events = detect_transition_candidates(records)?;
    let times: Vec<f64> = records.iter().map(|r| r.t_ns).collect();
    let spacing = classify_grid(&times)?;
    for event in &mut events {
        let lo_idx = times
            .iter()
            .position(|&t| t >= event.t_lo)
            .unwrap_or(0);
        let hi_idx = times
            .iter()
            .rposition(|&t| t <= event.t_hi)
            .unwrap_or(times.len() - 1);
        let state_lo = records[lo_idx].state.clone();
        let state_hi = records[hi_idx].state.clone();
        match event.kind {
            TransitionKind::Zeroth => {
                refine_zeroth(ctx, spacing, event, state_lo, state_hi)?
            }
            TransitionKind::First => {
                refine_first(ctx, spacing, event, state_lo, state_hi)?
            }
        }
    }
    Ok(events)
}

/// Best achievable ratio and its time for one dot count.
#[derive(Debug, Clone)]
pub struct NComparisonRow {
    pub n_qubits: usize,
    pub t_star_ns: f64,
    pub min_ratio: f64,
}

/// Sweeps each dot count over the grid and reports the minimum ratio and
/// its argmin time.
pub fn n_comparison(
    estimator: &Estimator,
    n_list: &[usize],
    grid: &TimeGrid,
    cfg: &OptimizerConfig,
) -> Result<Vec<NComparisonRow>> {
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let scaled = OptimizerConfig {
            restarts: if n <= 3 {
                cfg.restarts
            } else {
                cfg.restarts * 2
            },
            ..*cfg
        };
        let ctx = SweepContext::new(estimator.clone(), n, scaled)?;
        let records = time_sweep(&ctx, grid)?;
        let best = records
            .iter()
            .enumerate()
            .min_by(|(ia, a), (ib, b)| a.ratio_opt.total_cmp(&b.ratio_opt).then(ia.cmp(ib)))
            .map(|(_, r)| r)
            .expect("nonempty sweep");
        rows.push(NComparisonRow {
            n_qubits: n,
            t_star_ns: best.t_ns,
            min_ratio: best.ratio_opt,
        });
    }
    Ok(rows)
}

/// Minimum ratio for one (N, prior) pair.
#[derive(Debug, Clone)]
pub struct PriorScanRow {
    pub n_qubits: usize,
    pub b0_tesla: f64,
    pub db_tesla: f64,
    pub t_star_ns: f64,
    pub min_ratio: f64,
}

/// Grid of sweep minima over dot counts and priors; rows are emitted for
/// comparison plots, with no ordering asserted across priors.
pub fn prior_scan(
    template: &Estimator,
    n_list: &[usize],
    priors: &[GaussianPrior],
    grid: &TimeGrid,
    cfg: &OptimizerConfig,
) -> Result<Vec<PriorScanRow>> {
    if priors.is_empty() {
        return Err(Error::argument("prior list must be nonempty"));
    }
    let n_nodes = template.grid.nodes_tesla.len();
    let mut rows = Vec::with_capacity(n_list.len() * priors.len());
    for &n in n_list {
        for prior in priors {
            let est = Estimator::new(
                template.bath.clone(),
                template.g_factor,
                *prior,
                n_nodes,
            )?;
            let sub = n_comparison(&est, &[n], grid, cfg)?;
            let row = &sub[0];
            rows.push(PriorScanRow {
                n_qubits: n,
                b0_tesla: prior.b0_tesla,
                db_tesla: prior.db_tesla,
                t_star_ns: row.t_star_ns,
                min_ratio: row.min_ratio,
            });
        }
    }
    Ok(rows)
}
