//! Run configuration: TOML sections with defaults, strict key checking, and
//! range validation.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use dotmag::bath::{bath_weights, BathSpec};
use dotmag::estimation::{Estimator, GaussianPrior};
use dotmag::material::{AlphaMode, Material};
use dotmag::optimize::OptimizerConfig;
use dotmag::sweep::TimeGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaModeKey {
    Literal,
    VarianceMatched,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpacingKey {
    Linear,
    Log,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaterialSection {
    #[serde(rename = "A_total_ueV")]
    pub a_total_uev: f64,
    pub n_phys: f64,
    pub g_factor: f64,
    /// Bath spin quantum number; half-integers only.
    pub bath_spin_s: f64,
}

impl Default for MaterialSection {
    fn default() -> Self {
        let m = Material::gaas();
        MaterialSection {
            a_total_uev: m.a_total_uev,
            n_phys: m.n_phys,
            g_factor: m.g_factor,
            bath_spin_s: m.twice_s as f64 / 2.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub n_bath: usize,
    pub alpha_mode: AlphaModeKey,
    pub quad_nodes: usize,
    /// Optimizer restarts; omitted = scaled by dot count.
    pub restarts: Option<usize>,
    pub seed: u64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SimSection {
    fn default() -> Self {
        SimSection {
            n_bath: 49,
            alpha_mode: AlphaModeKey::VarianceMatched,
            quad_nodes: 64,
            restarts: None,
            seed: 1,
            tol: 1e-9,
            max_iter: 500,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorSection {
    #[serde(rename = "B0_mT")]
    pub b0_mt: f64,
    #[serde(rename = "dB_mT")]
    pub db_mt: f64,
}

impl Default for PriorSection {
    fn default() -> Self {
        PriorSection {
            b0_mt: 7.0,
            db_mt: 4.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub t_start_ns: f64,
    pub t_end_ns: f64,
    pub points: usize,
    pub spacing: SpacingKey,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            t_start_ns: 0.1,
            t_end_ns: 2000.0,
            points: 200,
            spacing: SpacingKey::Log,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub material: MaterialSection,
    pub sim: SimSection,
    pub prior: PriorSection,
    /// Number of dots N.
    pub dots: usize,
    pub sweep: SweepSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            material: MaterialSection::default(),
            sim: SimSection::default(),
            prior: PriorSection::default(),
            dots: 1,
            sweep: SweepSection::default(),
        }
    }
}

/// Parses a TOML config, applying defaults for omitted keys and rejecting
/// unknown ones. Errors carry the parser's line/column report.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(text).context("config parse error")?;
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dots < 1 || self.dots > 5 {
            bail!("N out of supported range [1,5]");
        }
        let m = &self.material;
        if !(m.a_total_uev > 0.0) || !(m.n_phys > 0.0) {
            bail!("material constants must be positive");
        }
        if m.g_factor == 0.0 || !m.g_factor.is_finite() {
            bail!("g_factor must be finite and nonzero");
        }
        let twice_s = (2.0 * m.bath_spin_s).round();
        if (2.0 * m.bath_spin_s - twice_s).abs() > 1e-9 || twice_s < 1.0 {
            bail!("bath_spin_s must be a positive half-integer");
        }
        let s = &self.sim;
        if s.n_bath < 1 {
            bail!("n_bath must be at least 1");
        }
        if s.quad_nodes < 2 {
            bail!("quad_nodes must be at least 2");
        }
        if s.restarts == Some(0) {
            bail!("restarts must be at least 1");
        }
        if !(s.tol > 0.0) {
            bail!("tol must be positive");
        }
        if s.max_iter < 1 {
            bail!("max_iter must be at least 1");
        }
        if !(self.prior.db_mt > 0.0) {
            bail!("dB_mT must be positive");
        }
        let w = &self.sweep;
        if !(w.t_end_ns > w.t_start_ns) {
            bail!("sweep range must have t_end_ns > t_start_ns");
        }
        if w.t_start_ns < 0.0 || (w.spacing == SpacingKey::Log && w.t_start_ns <= 0.0) {
            bail!("sweep t_start_ns must be positive for log spacing");
        }
        if w.points < 2 {
            bail!("sweep points must be at least 2");
        }
        Ok(())
    }

    pub fn material(&self) -> Material {
        Material {
            a_total_uev: self.material.a_total_uev,
            n_phys: self.material.n_phys,
            g_factor: self.material.g_factor,
            twice_s: (2.0 * self.material.bath_spin_s).round() as u32,
        }
    }

    pub fn alpha_rad_per_ns(&self) -> f64 {
        let mode = match self.sim.alpha_mode {
            AlphaModeKey::Literal => AlphaMode::Literal,
            AlphaModeKey::VarianceMatched => AlphaMode::VarianceMatched,
        };
        self.material().alpha_rad_per_ns(mode, self.sim.n_bath)
    }

    pub fn bath(&self) -> Result<BathSpec> {
        let m = self.material();
        Ok(bath_weights(
            self.sim.n_bath,
            m.twice_s,
            self.alpha_rad_per_ns(),
        )?)
    }

    pub fn prior(&self) -> Result<GaussianPrior> {
        Ok(GaussianPrior::new(
            self.prior.b0_mt * 1e-3,
            self.prior.db_mt * 1e-3,
        )?)
    }

    pub fn estimator(&self) -> Result<Estimator> {
        Ok(Estimator::new(
            self.bath()?,
            self.material.g_factor,
            self.prior()?,
            self.sim.quad_nodes,
        )?)
    }

    pub fn time_grid(&self) -> Result<TimeGrid> {
        let w = &self.sweep;
        let grid = match w.spacing {
            SpacingKey::Linear => TimeGrid::linear(w.t_start_ns, w.t_end_ns, w.points)?,
            SpacingKey::Log => TimeGrid::log(w.t_start_ns, w.t_end_ns, w.points)?,
        };
        Ok(grid)
    }

    pub fn optimizer_config(&self, n_qubits: usize) -> OptimizerConfig {
        let mut cfg = OptimizerConfig::default_for(n_qubits);
        if let Some(r) = self.sim.restarts {
            cfg.restarts = r;
        }
        cfg.tol = self.sim.tol;
        cfg.max_iter = self.sim.max_iter;
        cfg.seed = self.sim.seed;
        cfg
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_gives_gaas_defaults() {
        let cfg = parse_config("").unwrap();
        assert_eq!(cfg.dots, 1);
        assert_eq!(cfg.sim.n_bath, 49);
        assert_eq!(cfg.sim.quad_nodes, 64);
        assert_eq!(cfg.prior.b0_mt, 7.0);
        assert_eq!(cfg.prior.db_mt, 4.0);
        assert_eq!(cfg.material.g_factor, -0.44);
        assert_eq!(cfg.sweep.points, 200);
        assert!(matches!(cfg.sweep.spacing, SpacingKey::Log));
    }

    #[test]
    fn dot_count_out_of_range_names_the_bound() {
        let err = parse_config("dots = 7").unwrap_err();
        assert_eq!(err.to_string(), "N out of supported range [1,5]");
    }

    #[test]
    fn unknown_keys_are_rejected_with_location() {
        let err = parse_config("[sim]\nn_baths = 3\n").unwrap_err();
        let msg = format!("{err:#}");
        assert!(msg.contains("unknown field"), "{msg}");
        assert!(msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn prior_width_round_trips_bit_exactly() {
        let cfg = parse_config("[prior]\ndB_mT = 4\n").unwrap();
        let text = toml::to_string(&cfg).unwrap();
        let back = parse_config(&text).unwrap();
        assert_eq!(cfg.prior.db_mt.to_bits(), back.prior.db_mt.to_bits());
        assert_eq!(cfg.prior.b0_mt.to_bits(), back.prior.b0_mt.to_bits());
    }

    #[test]
    fn validation_rejects_bad_ranges() {
        assert!(parse_config("[prior]\ndB_mT = 0.0").is_err());
        assert!(parse_config("[sim]\nquad_nodes = 1").is_err());
        assert!(parse_config("[sweep]\nt_start_ns = 5.0\nt_end_ns = 1.0").is_err());
        assert!(parse_config("[sim]\nalpha_mode = \"exotic\"").is_err());
        assert!(parse_config("[material]\nbath_spin_s = 0.3").is_err());
    }
}
