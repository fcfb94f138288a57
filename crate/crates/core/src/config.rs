//! Run configuration (TOML) and the bundled presets.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    TwoWell,
    ThreeWell,
    General,
    ChangingHierarchy,
    #[default]
    Auto,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::TwoWell => "two_well",
            Mode::ThreeWell => "three_well",
            Mode::General => "general",
            Mode::ChangingHierarchy => "changing_hierarchy",
            Mode::Auto => "auto",
        }
    }
}

/// Either a spatial system (`drift`, `diffusion`, `initial`, `domain`) or a
/// rate table (`v_table` or `v_table_file`, plus `g`).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub drift: Option<String>,
    pub diffusion: Option<String>,
    pub initial: Option<String>,
    pub domain: Option<[f64; 2]>,
    pub g_bounds: Option<[f64; 2]>,
    pub v_table: Option<String>,
    pub v_table_file: Option<PathBuf>,
    /// Initial levels at the equilibria, for rate tables.
    pub g: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Numerics {
    pub root_grid: usize,
    pub assumption_grid: usize,
    pub ellipticity_min: f64,
    pub lipschitz_max: f64,
    pub quad_rel_tol: f64,
    pub quad_abs_tol: f64,
    pub quad_max_subintervals: usize,
    pub curve_points: usize,
    pub stability_levels: usize,
    pub stability_tuples: usize,
    /// Strict genericity: coincident events and the full ordering chains are errors.
    pub strict: bool,
    pub max_events: usize,
    /// Right end of the sampled lambda range; derived from the profiles when absent.
    pub lambda_max: Option<f64>,
    pub sample_points: usize,
}

impl Default for Numerics {
    fn default() -> Self {
        Numerics {
            root_grid: 4096,
            assumption_grid: 201,
            ellipticity_min: 1e-6,
            lipschitz_max: 1e3,
            quad_rel_tol: 1e-11,
            quad_abs_tol: 1e-14,
            quad_max_subintervals: 400,
            curve_points: 257,
            stability_levels: 65,
            stability_tuples: 16,
            strict: false,
            max_events: 10_000,
            lambda_max: None,
            sample_points: 2001,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdeSection {
    pub space_points: usize,
    pub dt0: f64,
    /// Step growth ratio once the transient is resolved.
    pub growth: f64,
    pub dt_max: f64,
    pub dt_min: f64,
    pub fixed_point_tol: f64,
    pub fixed_point_max_iter: usize,
    pub max_steps: usize,
    /// Largest admissible horizon `exp(lambda / eps^2)`.
    pub time_budget: f64,
}

impl Default for PdeSection {
    fn default() -> Self {
        PdeSection {
            space_points: 801,
            dt0: 1e-3,
            growth: 1.01,
            dt_max: f64::INFINITY,
            dt_min: 1e-10,
            fixed_point_tol: 1e-10,
            fixed_point_max_iter: 60,
            max_steps: 200_000,
            time_budget: 1e9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SdeSection {
    pub enabled: bool,
    pub eps: f64,
    pub lambda: f64,
    /// Start point; `x0_index` picks a stable equilibrium instead.
    pub x0: Option<f64>,
    pub x0_index: Option<usize>,
    pub paths: usize,
    pub dt: f64,
    /// Allowed gap beyond the Monte-Carlo half-width in the duality check.
    pub tolerance: f64,
}

impl Default for SdeSection {
    fn default() -> Self {
        SdeSection {
            enabled: false,
            eps: 0.35,
            lambda: 0.5,
            x0: None,
            x0_index: Some(0),
            paths: 4000,
            dt: 2e-3,
            tolerance: 1e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerificationSection {
    /// Descending.
    pub eps: Vec<f64>,
    /// Ascending.
    pub lambda: Vec<f64>,
    /// Either one value or one per lambda.
    pub tolerance: Vec<f64>,
    /// Lambdas closer than this to a special point are skipped.
    pub margin: f64,
    pub lemma1_lambda: f64,
    pub lemma1_delta: f64,
    pub lemma1_eps: f64,
    pub pde: PdeSection,
    pub sde: SdeSection,
}

impl Default for VerificationSection {
    fn default() -> Self {
        VerificationSection {
            eps: vec![0.45, 0.35, 0.28],
            lambda: vec![0.3, 0.35, 0.45],
            tolerance: vec![0.12],
            margin: 0.03,
            lemma1_lambda: 0.2,
            lemma1_delta: 0.1,
            lemma1_eps: 0.28,
            pde: PdeSection::default(),
            sde: SdeSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub cache: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("out"),
            cache: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub mode: Mode,
    pub system: SystemSection,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default)]
    pub verification: VerificationSection,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: OutputSection,
}

pub const PRESETS: &[(&str, &str)] = &[
    ("two-well", include_str!("../presets/two-well.toml")),
    ("two-well-linear", include_str!("../presets/two-well-linear.toml")),
    ("linear-symmetric", include_str!("../presets/linear-symmetric.toml")),
    ("three-well", include_str!("../presets/three-well.toml")),
    ("general", include_str!("../presets/general.toml")),
    ("bifurcation", include_str!("../presets/bifurcation.toml")),
];

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|p| p.0).collect()
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Relative `v_table_file` paths are resolved against the config's directory.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = RunConfig::parse(&text)?;
        if let Some(f) = &cfg.system.v_table_file {
            if f.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                cfg.system.v_table_file = Some(base.join(f));
            }
        }
        Ok(cfg)
    }

    pub fn preset(name: &str) -> Result<RunConfig> {
        let text = PRESETS
            .iter()
            .find(|p| p.0 == name)
            .map(|p| p.1)
            .ok_or_else(|| Error::Config(format!("unknown preset {name:?}; available: {}", preset_names().join(", "))))?;
        RunConfig::parse(text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn is_table(&self) -> bool {
        self.system.v_table.is_some() || self.system.v_table_file.is_some()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let s = &self.system;
        let spatial = [&s.drift, &s.diffusion, &s.initial].iter().filter(|x| x.is_some()).count();
        if self.is_table() {
            if s.v_table.is_some() && s.v_table_file.is_some() {
                return bad("give either v_table or v_table_file, not both".into());
            }
            if spatial > 0 || s.domain.is_some() {
                return bad("a rate table excludes drift, diffusion, initial and domain".into());
            }
            match &s.g {
                None => return bad("a rate table needs the initial levels g".into()),
                Some(g) if g.iter().any(|v| !v.is_finite()) => return bad("g must be finite".into()),
                _ => {}
            }
        } else {
            if spatial != 3 || s.domain.is_none() {
                return bad("the system needs drift, diffusion, initial and domain (or a v_table)".into());
            }
            if s.g.is_some() {
                return bad("g is only used with a rate table; the initial data defines it otherwise".into());
            }
        }
        if let Some([lo, hi]) = s.g_bounds {
            if !(lo <= hi) {
                return bad(format!("g_bounds [{lo}, {hi}] is not an interval"));
            }
        }

        let n = &self.numerics;
        let positive = [
            ("numerics.ellipticity_min", n.ellipticity_min),
            ("numerics.lipschitz_max", n.lipschitz_max),
            ("numerics.quad_rel_tol", n.quad_rel_tol),
            ("numerics.quad_abs_tol", n.quad_abs_tol),
        ];
        let v = &self.verification;
        let p = &v.pde;
        let more = [
            ("verification.margin", v.margin),
            ("verification.lemma1_lambda", v.lemma1_lambda),
            ("verification.lemma1_delta", v.lemma1_delta),
            ("verification.pde.dt0", p.dt0),
            ("verification.pde.dt_max", p.dt_max),
            ("verification.pde.dt_min", p.dt_min),
            ("verification.pde.fixed_point_tol", p.fixed_point_tol),
            ("verification.pde.time_budget", p.time_budget),
            ("verification.sde.dt", v.sde.dt),
            ("verification.sde.tolerance", v.sde.tolerance),
        ];
        for (name, x) in positive.iter().chain(&more) {
            if !(*x > 0.0) {
                return bad(format!("{name} must be positive, got {x}"));
            }
        }
        if let Some(l) = n.lambda_max {
            if !(l > 0.0 && l.is_finite()) {
                return bad(format!("numerics.lambda_max must be positive, got {l}"));
            }
        }
        if n.curve_points < 3 || n.stability_levels < 2 || n.sample_points < 2 {
            return bad("curve_points >= 3, stability_levels >= 2 and sample_points >= 2 are required".into());
        }
        if !(p.growth >= 1.0 && p.growth <= 1.05) {
            return bad(format!("verification.pde.growth must lie in [1, 1.05], got {}", p.growth));
        }
        if p.space_points < 5 || p.fixed_point_max_iter == 0 || p.max_steps == 0 {
            return bad("space_points >= 5, fixed_point_max_iter >= 1 and max_steps >= 1 are required".into());
        }
        for &e in v.eps.iter().chain([&v.lemma1_eps, &v.sde.eps]) {
            if !(e > 0.0 && e < 1.0) {
                return bad(format!("eps values must lie in (0, 1), got {e}"));
            }
        }
        if v.eps.windows(2).any(|w| w[1] >= w[0]) {
            return bad("verification.eps must be strictly decreasing".into());
        }
        if v.lambda.windows(2).any(|w| w[1] <= w[0]) || v.lambda.iter().any(|l| !(*l > 0.0)) {
            return bad("verification.lambda must be positive and strictly increasing".into());
        }
        if !(v.tolerance.len() == 1 || v.tolerance.len() == v.lambda.len()) || v.tolerance.iter().any(|t| !(*t > 0.0)) {
            return bad("verification.tolerance needs one positive value or one per lambda".into());
        }
        if v.sde.enabled && v.sde.paths < 2 {
            return bad("verification.sde.paths must be at least 2".into());
        }
        Ok(())
    }

    pub fn tolerance_at(&self, k: usize) -> f64 {
        let t = &self.verification.tolerance;
        if t.len() == 1 {
            t[0]
        } else {
            t[k]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse() {
        for name in preset_names() {
            let c = RunConfig::preset(name).unwrap();
            assert_eq!(c.to_toml().is_empty(), false);
            assert_eq!(RunConfig::parse(&c.to_toml()).unwrap(), c, "{name}");
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(RunConfig::parse("mode = \"sideways\"\n[system]\n").is_err());
        assert!(RunConfig::parse("[system]\ndrift = \"-x\"\n").is_err());
        assert!(RunConfig::preset("nope").is_err());
        let base = RunConfig::preset("two-well").unwrap();
        let mut c = base.clone();
        c.numerics.quad_rel_tol = -1.0;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.verification.lambda = vec![0.4, 0.3];
        assert!(c.validate().is_err());
        let mut c = base;
        c.system.g = Some(vec![0.0, 1.0]);
        assert!(c.validate().is_err());
    }
}
