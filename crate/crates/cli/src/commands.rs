//! Command implementations: each builds its tables from the library
//! contracts and hands them to the output writer.

use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};

use dotmag::bath::{multiplicity_oracle, multiplicity_table, total_dimension, ExactChannel};
use dotmag::channel::{apply_single, choi_matrix, coefficients_ae, kraus_set};
use dotmag::estimation::{basis_gain, personick_residual, van_trees_bound};
use dotmag::linalg::{c, dm_from_pure, herm_eig, trace_distance, CMat, CVec, DensityMatrix};
use dotmag::material::t2_star_ns;
use dotmag::optimize::{fingerprint, haar_random_state, optimize_state};
use dotmag::sweep::{
    detect_transitions, n_comparison, prior_scan, time_sweep, SweepContext, SweepRecord,
    TransitionKind,
};
use dotmag::estimation::GaussianPrior;

use crate::config::RunConfig;
use crate::output::{sig12, write_outputs, Table};

/// Sector table of the maximally mixed bath: K, exact multiplicity, and the
/// sector probability P_K = count * (2K+1) / (2s+1)^n.
pub fn bath_table(cfg: &RunConfig, out: &Path) -> Result<()> {
    let bath = cfg.bath()?;
    eprintln!(
        "[dotmag] bath-table: n_bath={} s={}",
        cfg.sim.n_bath,
        cfg.material.bath_spin_s
    );
    let mut table = Table::new(&["K", "count", "P_K"]);
    for m in bath.multiplets() {
        let k = m.two_k as f64 / 2.0;
        let p_k = m.p_per_m * (m.two_k as f64 + 1.0);
        table.push(vec![format!("{k}"), m.count.to_string(), sig12(p_k)]);
    }
    write_outputs(out, "bath_table", &table, "bath-table", cfg)?;
    Ok(())
}

/// Channel coefficient curves A(t), E(t) at one or more fields.
pub fn channel_curves(cfg: &RunConfig, out: &Path, b_mt: &[f64]) -> Result<()> {
    let bath = cfg.bath()?;
    let fields: Vec<f64> = if b_mt.is_empty() {
        vec![cfg.prior.b0_mt]
    } else {
        b_mt.to_vec()
    };
    let grid = cfg.time_grid()?;
    eprintln!(
        "[dotmag] channel-curves: {} fields x {} times",
        fields.len(),
        grid.times.len()
    );
    let mut table = Table::new(&["t_ns", "B_mT", "A", "re_E", "im_E", "abs_E"]);
    for &b in &fields {
        for &t in &grid.times {
            let coeffs = coefficients_ae(&bath, b * 1e-3, t, cfg.material.g_factor)?;
            table.push(vec![
                sig12(t),
                sig12(b),
                sig12(coeffs.a),
                sig12(coeffs.e.re),
                sig12(coeffs.e.im),
                sig12(coeffs.e.norm()),
            ]);
        }
    }
    write_outputs(out, "channel_curves", &table, "channel-curves", cfg)?;
    Ok(())
}

pub fn run_sweep(cfg: &RunConfig) -> Result<(SweepContext, Vec<SweepRecord>)> {
    let est = cfg.estimator()?;
    let grid = cfg.time_grid()?;
    let n = cfg.dots;
    let ctx = SweepContext::new(est, n, cfg.optimizer_config(n))?;
    eprintln!(
        "[dotmag] sweep: N={} over {} time points, {} restarts",
        n,
        grid.times.len(),
        ctx.cfg.restarts
    );
    let started = Instant::now();
    let records = time_sweep(&ctx, &grid)?;
    eprintln!(
        "[dotmag] sweep finished in {:.1} s",
        started.elapsed().as_secs_f64()
    );
    Ok((ctx, records))
}

pub fn sweep_table(records: &[SweepRecord]) -> Table {
    let dim = records
        .first()
        .map(|r| r.spectrum.len())
        .unwrap_or_default();
    let mut header: Vec<String> = vec!["t_ns".into(), "ratio_opt".into()];
    if let Some(first) = records.first() {
        for (label, _) in &first.ansatz_ratios {
            header.push(format!("ratio_{label}"));
        }
    }
    for i in 1..=dim {
        header.push(format!("lambda_{i}"));
    }
    for i in 1..=dim {
        header.push(format!("p_{i}"));
    }
    header.push("regime".into());

    let mut table = Table::with_header(header);
    for r in records {
        let mut row = vec![sig12(r.t_ns), sig12(r.ratio_opt)];
        for (_, ratio) in &r.ansatz_ratios {
            row.push(sig12(*ratio));
        }
        for lam in &r.spectrum {
            row.push(sig12(lam * 1e3));
        }
        for p in &r.probabilities {
            row.push(sig12(*p));
        }
        row.push(r.regime_label.clone());
        table.push(row);
    }
    table
}

/// Time sweep of the optimized strategy and the fixed ansatz curves.
pub fn sweep_cmd(cfg: &RunConfig, out: &Path) -> Result<()> {
    let (_, records) = run_sweep(cfg)?;
    let table = sweep_table(&records);
    write_outputs(out, "sweep", &table, "sweep", cfg)?;
    let stalled = records.iter().filter(|r| !r.converged).count();
    if stalled > 0 {
        eprintln!("[dotmag] warning: {stalled} records did not meet tolerance");
    }
    Ok(())
}

/// Optimal state and observable at a single time.
pub fn optimize_cmd(cfg: &RunConfig, out: &Path, t_ns: f64) -> Result<()> {
    let est = cfg.estimator()?;
    let n = cfg.dots;
    eprintln!("[dotmag] optimize: N={n} at t={t_ns} ns");
    let s = optimize_state(&est, n, t_ns, &cfg.optimizer_config(n))?;
    let fp = fingerprint(&s.state)?;
    let dim = s.state.dim();

    let mut header: Vec<String> = vec![
        "t_ns".into(),
        "ratio".into(),
        "var_mT2".into(),
        "gain_mT2".into(),
        "converged".into(),
        "iterations".into(),
        "regime".into(),
        "g_star".into(),
    ];
    for i in 1..=dim {
        header.push(format!("lambda_{i}"));
    }
    for i in 1..=dim {
        header.push(format!("p_{i}"));
    }
    for i in 0..dim {
        header.push(format!("re_amp_{i}"));
    }
    for i in 0..dim {
        header.push(format!("im_amp_{i}"));
    }
    let mut table = Table::with_header(header);
    let mut row = vec![
        sig12(t_ns),
        sig12(s.outcome.ratio),
        sig12(s.outcome.var_est * 1e6),
        sig12(s.outcome.gain * 1e6),
        format!("{}", s.converged),
        format!("{}", s.iterations),
        fp.label.clone(),
        fp.g_star.map(sig12).unwrap_or_default(),
    ];
    for lam in &s.outcome.spectrum {
        row.push(sig12(lam * 1e3));
    }
    for p in &s.outcome.probabilities {
        row.push(sig12(*p));
    }
    for amp in s.state.vector().iter() {
        row.push(sig12(amp.re));
    }
    for amp in s.state.vector().iter() {
        row.push(sig12(amp.im));
    }
    table.push(row);
    write_outputs(out, "optimize", &table, "optimize", cfg)?;
    Ok(())
}

/// Minimum ratio against dot count.
pub fn compare_n_cmd(cfg: &RunConfig, out: &Path, n_max: usize) -> Result<()> {
    if !(1..=5).contains(&n_max) {
        bail!("N out of supported range [1,5]");
    }
    let est = cfg.estimator()?;
    let grid = cfg.time_grid()?;
    let n_list: Vec<usize> = (1..=n_max).collect();
    eprintln!("[dotmag] compare-n: N = 1..={n_max}");
    let rows = n_comparison(&est, &n_list, &grid, &cfg.optimizer_config(1))?;
    let mut table = Table::new(&["n", "t_star_ns", "min_ratio"]);
    for r in &rows {
        table.push(vec![
            format!("{}", r.n_qubits),
            sig12(r.t_star_ns),
            sig12(r.min_ratio),
        ]);
    }
    write_outputs(out, "compare_n", &table, "compare-n", cfg)?;
    Ok(())
}

/// Sweep minima over a grid of Gaussian priors.
pub fn prior_scan_cmd(cfg: &RunConfig, out: &Path) -> Result<()> {
    let est = cfg.estimator()?;
    let grid = cfg.time_grid()?;
    let mut b0_list = vec![0.0, cfg.prior.b0_mt, 1000.0];
    b0_list.dedup_by(|a, b| a == b);
    let mut db_list = vec![1.0, cfg.prior.db_mt];
    db_list.dedup_by(|a, b| a == b);
    let mut priors = Vec::new();
    for &b0 in &b0_list {
        for &db in &db_list {
            priors.push(GaussianPrior::new(b0 * 1e-3, db * 1e-3)?);
        }
    }
    eprintln!(
        "[dotmag] prior-scan: N={} over {} priors",
        cfg.dots,
        priors.len()
    );
    let rows = prior_scan(
        &est,
        &[cfg.dots],
        &priors,
        &grid,
        &cfg.optimizer_config(cfg.dots),
    )?;
    let mut table = Table::new(&["n", "B0_mT", "dB_mT", "t_star_ns", "min_ratio"]);
    for r in &rows {
        table.push(vec![
            format!("{}", r.n_qubits),
            sig12(r.b0_tesla * 1e3),
            sig12(r.db_tesla * 1e3),
            sig12(r.t_star_ns),
            sig12(r.min_ratio),
        ]);
    }
    write_outputs(out, "prior_scan", &table, "prior-scan", cfg)?;
    Ok(())
}

/// Sweep plus transition detection; writes the refined event brackets.
pub fn transitions_cmd(cfg: &RunConfig, out: &Path) -> Result<()> {
    let (ctx, records) = run_sweep(cfg)?;
    eprintln!("[dotmag] refining transition brackets");
    let events = detect_transitions(&records, &ctx)?;
    let mut table = Table::new(&[
        "kind",
        "t_lo_ns",
        "t_hi_ns",
        "spectrum_jump_mT",
        "kink_score",
        "overlap_drop",
    ]);
    for e in &events {
        let kind = match e.kind {
            TransitionKind::Zeroth => "zeroth",
            TransitionKind::First => "first",
        };
        table.push(vec![
            kind.to_string(),
            sig12(e.t_lo),
            sig12(e.t_hi),
            sig12(e.spectrum_jump * 1e3),
            sig12(e.kink_score),
            sig12(e.state_overlap_drop),
        ]);
    }
    write_outputs(out, "transitions", &table, "transitions", cfg)?;
    eprintln!("[dotmag] {} events", events.len());
    Ok(())
}

struct Check {
    name: &'static str,
    outcome: Result<()>,
    seconds: f64,
}

fn run_check(name: &'static str, f: impl FnOnce() -> Result<()>) -> Check {
    let started = Instant::now();
    let outcome = f();
    Check {
        name,
        outcome,
        seconds: started.elapsed().as_secs_f64(),
    }
}

/// Oracle suite: re-derives the library's core quantities independently and
/// spot-checks a written CSV. Prints one line per check; Ok(false) if any
/// check failed.
pub fn validate_cmd(cfg: &RunConfig, out: &Path) -> Result<bool> {
    let mut checks = Vec::new();

    checks.push(run_check("multiplicity table vs spin-addition oracle", || {
        for (n_max, twice_s) in [(40usize, 1u32), (20, 3)] {
            for n in 1..=n_max {
                let fast = multiplicity_table(n, twice_s)?;
                let slow = multiplicity_oracle(n, twice_s)?;
                if fast != slow {
                    bail!("table mismatch at n={n}, 2s={twice_s}");
                }
                let dim = total_dimension(&fast);
                let expect = num_bigint::BigUint::from(twice_s as usize + 1).pow(n as u32);
                if dim != expect {
                    bail!("dimension mismatch at n={n}, 2s={twice_s}");
                }
            }
        }
        Ok(())
    }));

    checks.push(run_check("channel coefficients vs exact diagonalization", || {
        let g = cfg.material.g_factor;
        for n_bath in 2..=4usize {
            let alpha = cfg.material().alpha_rad_per_ns(
                dotmag::material::AlphaMode::VarianceMatched,
                n_bath,
            );
            let bath = dotmag::bath::bath_weights(n_bath, 1, alpha)?;
            for b_mt in [0.0, 1.0, 7.0, 50.0, 1000.0] {
                let b = b_mt * 1e-3;
                let exact = ExactChannel::new(n_bath, b, alpha, g)?;
                for i in 0..10 {
                    let t = i as f64 * 200.0 / 9.0;
                    let coeffs = coefficients_ae(&bath, b, t, g)?;
                    let sample = exact.sample(t);
                    if (coeffs.a - sample.a_exact).abs() >= 1e-9 {
                        bail!("A mismatch at n={n_bath} B={b_mt} mT t={t}");
                    }
                    if (coeffs.e.norm() - sample.e_exact.norm()).abs() >= 1e-9 {
                        bail!("|E| mismatch at n={n_bath} B={b_mt} mT t={t}");
                    }
                    let r = std::f64::consts::FRAC_1_SQRT_2;
                    for (name, vec) in [
                        ("|0>", vec![c(1.0, 0.0), c(0.0, 0.0)]),
                        ("|+>", vec![c(r, 0.0), c(r, 0.0)]),
                        ("|i+>", vec![c(r, 0.0), c(0.0, r)]),
                    ] {
                        let rho = dm_from_pure(&CVec::from_vec(vec))?;
                        let closed = apply_single(&rho, &coeffs)?;
                        let brute =
                            DensityMatrix::new(exact.reduced(rho.matrix(), t))?;
                        if trace_distance(&closed, &brute)? >= 1e-8 {
                            bail!("trace distance at n={n_bath} B={b_mt} mT t={t} {name}");
                        }
                    }
                }
            }
        }
        Ok(())
    }));

    checks.push(run_check("Kraus completeness and Choi positivity", || {
        let bath = cfg.bath()?;
        for i in 0..12 {
            let b = -0.02 + 1.02 * i as f64 / 11.0;
            for j in 0..12 {
                let t = j as f64 * 120.0 / 11.0;
                let coeffs = coefficients_ae(&bath, b, t, cfg.material.g_factor)?;
                let kraus = kraus_set(&coeffs)?;
                if kraus.completeness_defect() >= 1e-10 {
                    bail!("completeness defect at B={b} T t={t}");
                }
                let (vals, _) = herm_eig(&choi_matrix(&coeffs))?;
                if vals[0] < -1e-10 {
                    bail!("Choi eigenvalue {} at B={b} T t={t}", vals[0]);
                }
            }
        }
        Ok(())
    }));

    checks.push(run_check("Personick residual, unbiasedness, basis bound", || {
        use rand::SeedableRng;
        let est = cfg.estimator()?;
        let b0 = est.prior.b0_tesla;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for n_qubits in 1..=2usize {
            let dim = 1usize << n_qubits;
            for t in [1.0, 5.0, 20.0] {
                let family = est.family(t)?;
                let psi = haar_random_state(dim, &mut rng)?;
                let (bar, prime) = family.mean_states(&psi);
                let outcome = est.evaluate_with_family(&psi, &family)?;
                let resid = personick_residual(&bar, &prime, &outcome.l)?;
                if resid >= 1e-9 {
                    bail!("residual {resid} at N={n_qubits} t={t}");
                }
                let mean: f64 = outcome
                    .spectrum
                    .iter()
                    .zip(&outcome.probabilities)
                    .map(|(lam, p)| lam * p)
                    .sum();
                if (mean - b0).abs() >= 1e-10 {
                    bail!("tr(rho L) = {mean} != B0 at N={n_qubits} t={t}");
                }
                if !(0.0..=1.0 + 1e-10).contains(&outcome.ratio) {
                    bail!("ratio {} out of range", outcome.ratio);
                }
                // The optimal observable's gain dominates a fixed basis.
                let basis = CMat::identity(dim, dim);
                let bg = basis_gain(&basis, &bar, &prime, &est.prior)?;
                if bg.gain > outcome.gain + 1e-10 {
                    bail!("population basis beat the optimum at N={n_qubits} t={t}");
                }
            }
        }
        Ok(())
    }));

    checks.push(run_check("Van Trees bound at the sweep minimum", || {
        let est = cfg.estimator()?;
        let db2 = est.prior.variance();
        for t in [0.5, 3.0, 6.0, 15.0, 40.0] {
            let s = optimize_state(&est, 1, t, &cfg.optimizer_config(1))?;
            let bound = van_trees_bound(
                &s.state,
                &est.bath,
                t,
                &est.grid,
                est.g_factor,
            )?;
            if s.outcome.var_est < bound - 1e-9 * db2 {
                bail!("variance below the bound at t={t}");
            }
        }
        Ok(())
    }));

    checks.push(run_check("dephasing envelope at strong field", || {
        let bath = cfg.bath()?;
        let m = cfg.material();
        let t2 = t2_star_ns(m.twice_s, cfg.sim.n_bath, cfg.alpha_rad_per_ns());
        for i in 0..=10 {
            let t = i as f64 * 2.0 * t2 / 10.0;
            let coeffs = coefficients_ae(&bath, 1.0, t, m.g_factor)?;
            let envelope = (-(t / t2).powi(2)).exp();
            if (coeffs.e.norm() - envelope).abs() >= 0.05 {
                bail!("|E| departs from the Gaussian envelope at t={t}");
            }
        }
        Ok(())
    }));

    checks.push(run_check("post-write CSV reader on a short sweep", || {
        let mut small = cfg.clone();
        small.dots = 1;
        small.sweep.t_start_ns = 0.5;
        small.sweep.t_end_ns = 30.0;
        small.sweep.points = 10;
        small.sim.restarts = Some(4);
        let (ctx, records) = run_sweep(&small)?;
        let table = sweep_table(&records);
        let path = write_outputs(out, "validate_sweep", &table, "validate", &small)?;

        let mut rdr = csv::Reader::from_path(&path)?;
        let header: Vec<String> =
            rdr.headers()?.iter().map(|s| s.to_string()).collect();
        if header[0] != "t_ns" || header[1] != "ratio_opt" {
            bail!("unexpected header {header:?}");
        }
        let dim = 1usize << small.dots;
        let n_ansatz = header
            .iter()
            .filter(|h| h.starts_with("ratio_") && h.as_str() != "ratio_opt")
            .count();
        let mut prev_t = f64::NEG_INFINITY;
        let mut rows = 0usize;
        for rec in rdr.records() {
            let rec = rec?;
            let get = |i: usize| -> Result<f64> {
                rec.get(i)
                    .context("missing column")?
                    .parse::<f64>()
                    .context("non-numeric cell")
            };
            let t = get(0)?;
            if t <= prev_t {
                bail!("time column not increasing");
            }
            prev_t = t;
            let ratio_opt = get(1)?;
            if !(0.0..=1.0 + 1e-10).contains(&ratio_opt) {
                bail!("ratio_opt {ratio_opt} out of range");
            }
            for k in 0..n_ansatz {
                let r = get(2 + k)?;
                if ratio_opt > r + ctx.cfg.tol {
                    bail!("optimum worse than a fixed ansatz at t={t}");
                }
            }
            let p_base = 2 + n_ansatz + dim;
            let psum: f64 = (0..dim).map(|k| get(p_base + k)).sum::<Result<f64>>()?;
            if (psum - 1.0).abs() >= 1e-9 {
                bail!("probabilities sum to {psum} at t={t}");
            }
            rows += 1;
        }
        if rows != small.sweep.points {
            bail!("expected {} rows, read {rows}", small.sweep.points);
        }
        Ok(())
    }));

    let mut all_ok = true;
    println!("{:<52} {:>8} {:>9}", "check", "status", "time");
    for check in &checks {
        let (status, detail) = match &check.outcome {
            Ok(()) => ("PASS", String::new()),
            Err(e) => {
                all_ok = false;
                ("FAIL", format!("  <- {e:#}"))
            }
        };
        println!(
            "{:<52} {:>8} {:>8.1}s{}",
            check.name, status, check.seconds, detail
        );
    }
    Ok(all_ok)
}
