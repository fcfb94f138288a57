//! Profile verification against the PDE, plus the full verification run.

use super::pde::{solve_pde, PdeOptions, StepStats};
use super::sde::{simulate_nonlinear_sde, EnsembleResult, SdeOptions};
use super::{check_lemma1, Lemma1Report};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::mcurve::content_hash;
use crate::pipeline::Model;
use crate::profile::{metastable_distribution, ProfileSet};
use crate::system::{EquilibriumSet, SystemSpec};
use rayon::prelude::*;
use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileCell {
    pub eps: f64,
    pub lambda: f64,
    /// 0-based equilibrium index.
    pub i: usize,
    pub predicted: f64,
    pub measured: f64,
    pub err: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    /// Ordered by lambda, then eps (descending), then equilibrium.
    pub cells: Vec<ProfileCell>,
    pub skipped: Vec<(f64, String)>,
    /// `(lambda, i, err non-increasing as eps decreases)`.
    pub monotone: Vec<(f64, usize, bool)>,
    pub tolerances: Vec<(f64, f64)>,
    pub eps: Vec<f64>,
    pub stats: Vec<(f64, StepStats)>,
}

impl VerificationReport {
    fn smallest_eps(&self) -> f64 {
        self.eps.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Every monotone flag holds and every error at the smallest eps is within tolerance.
    pub fn passed(&self) -> bool {
        let e = self.smallest_eps();
        self.monotone.iter().all(|m| m.2) && self.cells.iter().filter(|c| c.eps == e).all(|c| c.pass)
    }

    pub fn monotone_fraction(&self) -> f64 {
        if self.monotone.is_empty() {
            return 1.0;
        }
        self.monotone.iter().filter(|m| m.2).count() as f64 / self.monotone.len() as f64
    }

    pub fn max_error_at_smallest_eps(&self) -> f64 {
        let e = self.smallest_eps();
        self.cells.iter().filter(|c| c.eps == e).fold(0.0f64, |m, c| m.max(c.err))
    }

    pub fn render_csv(&self) -> String {
        let mut s = String::from("eps,lambda,i,predicted,measured,err,pass\n");
        for c in &self.cells {
            let _ = writeln!(
                s,
                "{},{},{},{:.12e},{:.12e},{:.12e},{}",
                c.eps,
                c.lambda,
                c.i + 1,
                c.predicted,
                c.measured,
                c.err,
                c.pass
            );
        }
        for (l, _) in &self.skipped {
            for &e in &self.eps {
                let _ = writeln!(s, "{e},{l},,,,,skipped");
            }
        }
        s
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "profile check over eps = {:?}", self.eps);
        for (l, i, ok) in &self.monotone {
            let errs: Vec<String> = self
                .cells
                .iter()
                .filter(|c| c.lambda == *l && c.i == *i)
                .map(|c| format!("{:.4}", c.err))
                .collect();
            let _ = writeln!(
                s,
                "  lambda {l:<6} O{}: err {}  {}",
                i + 1,
                errs.join(" -> "),
                if *ok { "monotone" } else { "NOT monotone" }
            );
        }
        for (l, why) in &self.skipped {
            let _ = writeln!(s, "  lambda {l:<6} skipped: {why}");
        }
        let _ = writeln!(
            s,
            "  max err at eps = {}: {:.4}; monotone cells {:.0}%; {}",
            self.smallest_eps(),
            self.max_error_at_smallest_eps(),
            100.0 * self.monotone_fraction(),
            if self.passed() { "PASS" } else { "FAIL" }
        );
        s
    }
}

/// Compare `u(T(lambda), O_i)` with the profiles over an eps ladder.
///
/// Lambdas within `margin` of a special point are skipped. `tolerances` has
/// one entry or one per lambda.
#[allow(clippy::too_many_arguments)]
pub fn verify_profile(
    spec: &SystemSpec,
    eq: &EquilibriumSet,
    profile: &ProfileSet,
    eps_list: &[f64],
    lambda_list: &[f64],
    tolerances: &[f64],
    margin: f64,
    opts: PdeOptions,
) -> Result<VerificationReport> {
    if profile.n != eq.n() {
        return Err(Error::Config(format!("profile has {} entries, system {}", profile.n, eq.n())));
    }
    let tol = |k: usize| if tolerances.len() == 1 { tolerances[0] } else { tolerances[k] };
    let specials = profile.special_points();
    let mut kept = Vec::new();
    let mut skipped = Vec::new();
    let mut tol_used = Vec::new();
    for (k, &l) in lambda_list.iter().enumerate() {
        match specials.iter().find(|&&p| (p - l).abs() < margin) {
            Some(p) => skipped.push((l, format!("within {margin} of the special point {p:.6}"))),
            None => {
                kept.push(l);
                tol_used.push((l, tol(k)));
            }
        }
    }
    let runs: Vec<Result<_>> = eps_list
        .par_iter()
        .map(|&e| solve_pde(spec, e, &kept, opts))
        .collect();
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;

    let mut cells = Vec::new();
    let mut monotone = Vec::new();
    for &(l, t) in &tol_used {
        let predicted = profile.values(l)?;
        for i in 0..eq.n() {
            let mut errs = Vec::new();
            for sol in &runs {
                let measured = sol.value(l, eq.stable[i]).expect("checkpoint requested");
                let err = (measured - predicted[i]).abs();
                errs.push(err);
                cells.push(ProfileCell {
                    eps: sol.eps,
                    lambda: l,
                    i,
                    predicted: predicted[i],
                    measured,
                    err,
                    pass: err <= t,
                });
            }
            monotone.push((l, i, errs.windows(2).all(|w| w[1] <= w[0] + 1e-12)));
        }
    }
    Ok(VerificationReport {
        cells,
        skipped,
        monotone,
        tolerances: tol_used,
        eps: eps_list.to_vec(),
        stats: runs.iter().map(|r| (r.eps, r.stats.clone())).collect(),
    })
}

/// Seed of a named sub-stream of the run seed.
pub fn substream_seed(seed: u64, name: &str) -> u64 {
    let h = content_hash(&format!("{seed}/{name}"));
    u64::from_str_radix(&h[..16], 16).expect("hex digest")
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdeCheck {
    pub ensemble: EnsembleResult,
    pub duality_pass: bool,
    /// Limit weights from the profile and whether the ensemble matches them
    /// within three half-widths; two wells only.
    pub predicted_weights: Option<Vec<f64>>,
    pub weights_pass: Option<bool>,
    pub tolerance: f64,
    /// The PDE run behind the ensemble, as a checkpoint table.
    pub pde_checkpoints: String,
}

impl SdeCheck {
    pub fn passed(&self) -> bool {
        self.duality_pass && self.weights_pass != Some(false)
    }

    pub fn summary(&self) -> String {
        let e = &self.ensemble;
        let mut s = format!(
            "sde ensemble: eps {} lambda {} x0 {:.6} paths {} steps {}\n  E g(X_T) = {:.5} +- {:.5}, u(T, x0) = {:.5}, gap {:.5} (allowed {}) {}\n  basin weights {:?} +- {:?}\n",
            e.eps,
            e.lambda,
            e.x0,
            e.paths,
            e.steps,
            e.mean_g,
            e.half_width,
            e.u_pde,
            (e.mean_g - e.u_pde).abs(),
            self.tolerance,
            if self.duality_pass { "PASS" } else { "FAIL" },
            e.weights.iter().map(|w| (w * 1e4).round() / 1e4).collect::<Vec<_>>(),
            e.weight_half_widths.iter().map(|w| (w * 1e4).round() / 1e4).collect::<Vec<_>>(),
        );
        if let (Some(p), Some(ok)) = (&self.predicted_weights, self.weights_pass) {
            let _ = writeln!(s, "  limit weights {:?} {}", p, if ok { "PASS" } else { "FAIL" });
        }
        s
    }
}

/// Ensemble from the configured start point, checked against the PDE value
/// and, with two wells and a profile, against the limit weights.
pub fn sde_check(cfg: &RunConfig, spec: &SystemSpec, eq: &EquilibriumSet, profile: Option<&ProfileSet>, g: &[f64]) -> Result<SdeCheck> {
    let sc = &cfg.verification.sde;
    let x0 = match (sc.x0, sc.x0_index) {
        (Some(x), _) => x,
        (None, Some(k)) => *eq
            .stable
            .get(k)
            .ok_or_else(|| Error::Config(format!("x0_index {k} exceeds the {} equilibria", eq.n())))?,
        (None, None) => return Err(Error::Config("the ensemble needs x0 or x0_index".into())),
    };
    let mut opts = PdeOptions::from(&cfg.verification.pde);
    opts.record_history = true;
    let sol = solve_pde(spec, sc.eps, &[sc.lambda], opts)?;
    let sde = SdeOptions {
        paths: sc.paths,
        dt: sc.dt,
        seed: substream_seed(cfg.seed, "sde"),
        ..SdeOptions::default()
    };
    let ensemble = simulate_nonlinear_sde(spec, eq, sc.eps, sc.lambda, x0, &sol, &sde)?;
    let duality_pass = (ensemble.mean_g - ensemble.u_pde).abs() <= ensemble.half_width + sc.tolerance;
    let mut predicted_weights = None;
    let mut weights_pass = None;
    if let (Some(p), Some(k), 2) = (profile, sc.x0_index, eq.n()) {
        let level = p.value(k, sc.lambda)?;
        let (a1, a2) = metastable_distribution(level, g[0], g[1])?;
        let ok = [a1, a2]
            .iter()
            .zip(&ensemble.weights)
            .zip(&ensemble.weight_half_widths)
            .all(|((p, w), hw)| (p - w).abs() <= 3.0 * hw);
        predicted_weights = Some(vec![a1, a2]);
        weights_pass = Some(ok);
    }
    Ok(SdeCheck {
        ensemble,
        duality_pass,
        predicted_weights,
        weights_pass,
        tolerance: sc.tolerance,
        pde_checkpoints: sol.render_tsv(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationRun {
    pub profile: Option<VerificationReport>,
    /// Why the profile comparison did not run.
    pub profile_note: Option<String>,
    pub lemma1: Lemma1Report,
    pub sde: Option<SdeCheck>,
}

impl VerificationRun {
    pub fn passed(&self) -> bool {
        self.profile.as_ref().is_none_or(|p| p.passed())
            && self.lemma1.pass
            && self.sde.as_ref().is_none_or(|s| s.passed())
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        match (&self.profile, &self.profile_note) {
            (Some(p), _) => s.push_str(&p.summary()),
            (None, Some(n)) => {
                let _ = writeln!(s, "profile check not run: {n}");
            }
            (None, None) => {}
        }
        let l = &self.lemma1;
        let _ = writeln!(
            s,
            "plateau check: eps {} lambda {} delta {}: max deviation {:.5} {}",
            l.eps,
            l.lambda,
            l.delta,
            l.max_deviation,
            if l.pass { "PASS" } else { "FAIL" }
        );
        if let Some(sde) = &self.sde {
            s.push_str(&sde.summary());
        }
        let _ = writeln!(s, "overall: {}", if self.passed() { "PASS" } else { "FAIL" });
        s
    }
}

/// PDE ladder against the profiles (when given), the plateau check and the
/// optional ensemble. Needs a spatial system.
pub fn run_verification(cfg: &RunConfig, model: &Model, profile: Option<&ProfileSet>, note: Option<String>) -> Result<VerificationRun> {
    let sp = model
        .spatial
        .as_ref()
        .ok_or_else(|| Error::Config("verification needs a spatial system, not a rate table".into()))?;
    let v = &cfg.verification;
    let opts = PdeOptions::from(&v.pde);
    let report = match profile {
        Some(p) => Some(verify_profile(&sp.spec, &sp.eq, p, &v.eps, &v.lambda, &v.tolerance, v.margin, opts)?),
        None => None,
    };
    let sol = solve_pde(&sp.spec, v.lemma1_eps, &[v.lemma1_lambda], opts)?;
    let lemma1 = check_lemma1(&sol, &sp.eq, v.lemma1_delta, v.lemma1_lambda)?;
    let sde = if v.sde.enabled {
        Some(sde_check(cfg, &sp.spec, &sp.eq, profile, &model.g)?)
    } else {
        None
    };
    Ok(VerificationRun {
        profile: report,
        profile_note: note,
        lemma1,
        sde,
    })
}
