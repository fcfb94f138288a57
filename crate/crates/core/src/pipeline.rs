//! Equilibria, rates, hierarchy and profiles for one configuration.

use crate::config::{Mode, RunConfig};
use crate::curves::{curve_label, tabulate_cycle_curves, CurveProvenance};
use crate::error::{Error, Result};
use crate::hierarchy::Hierarchy;
use crate::mcurve::MCurve;
use crate::profile::{general_sweep, three_well_profile, two_well_profile, ProfileSet, SweepOptions};
use crate::quad::QuadOptions;
use crate::rates::{RateModel, SpatialRates, TableRates};
use crate::scenario::{run_changing_hierarchy, ScenarioInfo};
use crate::stability::{check_hierarchy_stability, hierarchy_at, StabilityReport};
use crate::system::{find_equilibria, validate_assumptions, AssumptionLimits, AssumptionReport, EquilibriumSet, RootOptions, SystemSpec};
use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

#[derive(Debug, Clone)]
pub struct SpatialInfo {
    pub spec: Arc<SystemSpec>,
    pub eq: EquilibriumSet,
    pub assumptions: AssumptionReport,
}

/// The rate model behind a configuration, with the levels `g(O_i)`.
#[derive(Clone)]
pub struct Model {
    pub rates: Arc<dyn RateModel>,
    pub spatial: Option<SpatialInfo>,
    pub g: Vec<f64>,
}

pub fn quad_options(cfg: &RunConfig) -> QuadOptions {
    QuadOptions {
        rel_tol: cfg.numerics.quad_rel_tol,
        abs_tol: cfg.numerics.quad_abs_tol,
        max_subintervals: cfg.numerics.quad_max_subintervals,
    }
}

pub fn spatial_spec(cfg: &RunConfig) -> Result<SystemSpec> {
    let s = &cfg.system;
    let (Some(drift), Some(diffusion), Some(initial), Some([lo, hi])) = (&s.drift, &s.diffusion, &s.initial, s.domain)
    else {
        return Err(Error::Config("the configuration describes a rate table, not a spatial system".into()));
    };
    let mut spec = SystemSpec::new(drift, diffusion, initial, (lo, hi))?;
    if let Some([a, b]) = s.g_bounds {
        spec = spec.with_g_bounds((a, b));
    }
    Ok(spec)
}

pub fn build_model(cfg: &RunConfig) -> Result<Model> {
    let s = &cfg.system;
    if cfg.is_table() {
        let text = match (&s.v_table, &s.v_table_file) {
            (Some(t), _) => t.clone(),
            (None, Some(f)) => std::fs::read_to_string(f)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", f.display())))?,
            _ => unreachable!("validated"),
        };
        let range = s.g_bounds.map(|[a, b]| (a, b));
        let table = TableRates::parse(&text, range)?;
        let g = s.g.clone().expect("validated");
        if g.len() != table.n() {
            return Err(Error::Config(format!("g has {} entries for {} equilibria", g.len(), table.n())));
        }
        let (lo, hi) = table.c_range();
        if g.iter().any(|&v| v < lo || v > hi) {
            return Err(Error::Config(format!("g = {g:?} leaves the table range [{lo}, {hi}]")));
        }
        return Ok(Model {
            rates: Arc::new(table),
            spatial: None,
            g,
        });
    }
    let spec = Arc::new(spatial_spec(cfg)?);
    let limits = AssumptionLimits {
        ellipticity_min: cfg.numerics.ellipticity_min,
        lipschitz_max: cfg.numerics.lipschitz_max,
    };
    let assumptions = validate_assumptions(&spec, cfg.numerics.assumption_grid, &limits);
    if !assumptions.passed() {
        return Err(Error::SystemAssumptions(assumptions.render()));
    }
    let eq = find_equilibria(
        &spec,
        &RootOptions {
            grid: cfg.numerics.root_grid,
            ..RootOptions::default()
        },
    )?;
    let g = eq.stable.iter().map(|&x| spec.g(x)).collect();
    let rates = SpatialRates {
        spec: spec.clone(),
        eq: eq.clone(),
        quad: quad_options(cfg),
    };
    Ok(Model {
        rates: Arc::new(rates),
        spatial: Some(SpatialInfo { spec, eq, assumptions }),
        g,
    })
}

#[derive(Clone)]
pub struct Analysis {
    pub model: Model,
    /// The construction actually used; never `Auto`.
    pub mode: Mode,
    pub stability: StabilityReport,
    /// Hierarchy below the threshold when it switches.
    pub hierarchy: Hierarchy,
    /// Curves by label; with a switch, labels carry a `below/` or `above/` prefix.
    pub curves: BTreeMap<String, Arc<MCurve>>,
    pub provenance: CurveProvenance,
    pub scenario: Option<ScenarioInfo>,
    pub profiles: ProfileSet,
    pub lambda_max: f64,
}

fn need_n(mode: Mode, n: usize, want: usize) -> Result<()> {
    if n != want {
        return Err(Error::Config(format!(
            "mode {} needs {want} stable equilibria, found {n}",
            mode.as_str()
        )));
    }
    Ok(())
}

fn need_stable(stability: &StabilityReport) -> Result<()> {
    if let Some(f) = stability.flips.first() {
        return Err(Error::HierarchyUnstable(format!(
            "the hierarchy changes near c = {:.6}; use mode changing_hierarchy or auto\n{}",
            f.threshold,
            stability.render()
        )));
    }
    Ok(())
}

/// Run the analysis. Curve tables are reused from and written to `cache_dir`.
pub fn analyze(cfg: &RunConfig, cache_dir: Option<&Path>) -> Result<Analysis> {
    let model = build_model(cfg)?;
    let rates = model.rates.clone();
    let n = rates.n();
    let range = rates.c_range();
    let num = &cfg.numerics;
    let stability = check_hierarchy_stability(rates.as_ref(), range, num.stability_levels, num.stability_tuples, cfg.seed)?;
    if stability.flips.is_empty() {
        if let Some((c, _)) = stability.failures.first() {
            // reproduce the tie as a typed error
            rates.vmatrix(*c).and_then(|v| crate::hierarchy::build_hierarchy(&v))?;
        }
    }
    let mode = match cfg.mode {
        Mode::Auto => match stability.flips.len() {
            0 => Mode::General,
            1 if n == 3 => Mode::ChangingHierarchy,
            1 => {
                return Err(Error::HierarchyUnstable(format!(
                    "the hierarchy switches once, which is supported for three stable points only (found {n})\n{}",
                    stability.render()
                )))
            }
            k => {
                return Err(Error::HierarchyUnstable(format!(
                    "{k} changes of the hierarchy; only a single switch is supported\n{}",
                    stability.render()
                )))
            }
        },
        m => m,
    };

    if mode == Mode::ChangingHierarchy {
        need_n(mode, n, 3)?;
        let g = [model.g[0], model.g[1], model.g[2]];
        let (profiles, info) =
            run_changing_hierarchy(rates.clone(), &stability, g, num.curve_points, num.strict, cache_dir)?;
        let curves = info.curves.clone();
        let lambda_max = lambda_max(cfg, &profiles);
        return Ok(Analysis {
            model,
            mode,
            stability,
            hierarchy: info.low.clone(),
            curves,
            provenance: info.provenance.clone(),
            scenario: Some(info),
            profiles,
            lambda_max,
        });
    }

    need_stable(&stability)?;
    let h = hierarchy_at(rates.as_ref(), range.0)?;
    let (by_id, provenance) = tabulate_cycle_curves(rates.clone(), &h, range, num.curve_points, Some(range), cache_dir)?;
    let id_of = |members: &[usize]| -> Result<usize> {
        h.distinct_cycles()
            .into_iter()
            .find(|d| d.members == members && d.nu.is_some())
            .map(|d| d.id)
            .ok_or_else(|| Error::HierarchyUnstable(format!("no cycle on {members:?}\n{}", h.render())))
    };
    let g = &model.g;
    let profiles = match mode {
        Mode::TwoWell => {
            need_n(mode, n, 2)?;
            two_well_profile(&by_id[&id_of(&[0])?], &by_id[&id_of(&[1])?], g[0], g[1])?
        }
        Mode::ThreeWell => {
            need_n(mode, n, 3)?;
            let pair = id_of(&[0, 1]).map_err(|_| {
                Error::HierarchyUnstable(format!(
                    "mode three_well expects {{1,2}} as the rank-one cycle; use mode general\n{}",
                    h.render()
                ))
            })?;
            three_well_profile(
                &by_id[&id_of(&[0])?],
                &by_id[&id_of(&[1])?],
                &by_id[&pair],
                &by_id[&id_of(&[2])?],
                [g[0], g[1], g[2]],
                num.strict,
            )?
        }
        _ => general_sweep(
            &h,
            &by_id,
            g,
            &SweepOptions {
                strict: num.strict,
                max_events: num.max_events,
            },
        )?,
    };
    let curves = by_id.iter().map(|(&id, c)| (curve_label(&h, id), c.clone())).collect();
    let lambda_max = lambda_max(cfg, &profiles);
    Ok(Analysis {
        model,
        mode,
        stability,
        hierarchy: h,
        curves,
        provenance,
        scenario: None,
        profiles,
        lambda_max,
    })
}

fn lambda_max(cfg: &RunConfig, p: &ProfileSet) -> f64 {
    cfg.numerics
        .lambda_max
        .unwrap_or_else(|| (1.25 * p.last_special()).max(1.0))
}
