//! Implicit solver for `u_t = (eps^2 / 2) a(x, u) u_xx + b(x) u_x` with
//! reflecting ends.
//!
//! Space: uniform grid, exponentially fitted (Il'in) central differences, so
//! the matrix is an M-matrix for any `eps`. Time: backward Euler with the
//! coefficient `a(x, u)` lagged and iterated to a fixed point; steps grow
//! geometrically and are halved when the iteration fails.

use crate::config::PdeSection;
use crate::error::{Error, Result};
use crate::system::SystemSpec;
use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdeOptions {
    pub space_points: usize,
    pub dt0: f64,
    pub growth: f64,
    pub dt_max: f64,
    pub dt_min: f64,
    pub fixed_point_tol: f64,
    pub fixed_point_max_iter: usize,
    pub max_steps: usize,
    pub time_budget: f64,
    /// Keep every accepted step, as needed by the SDE stage.
    pub record_history: bool,
}

impl Default for PdeOptions {
    fn default() -> Self {
        PdeOptions::from(&PdeSection::default())
    }
}

impl From<&PdeSection> for PdeOptions {
    fn from(p: &PdeSection) -> Self {
        PdeOptions {
            space_points: p.space_points,
            dt0: p.dt0,
            growth: p.growth,
            dt_max: p.dt_max,
            dt_min: p.dt_min,
            fixed_point_tol: p.fixed_point_tol,
            fixed_point_max_iter: p.fixed_point_max_iter,
            max_steps: p.max_steps,
            time_budget: p.time_budget,
            record_history: false,
        }
    }
}

/// Everything needed to continue a run.
#[derive(Debug, Clone, PartialEq)]
pub struct PdeState {
    pub t: f64,
    pub dt: f64,
    pub u: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub lambda: f64,
    pub t: f64,
    pub u: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepStats {
    pub accepted: usize,
    pub halvings: usize,
    pub fixed_point_iterations: usize,
    /// Steps whose new values left `[min, max]` of the old ones.
    pub max_principle_violations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdeSolution {
    pub eps: f64,
    pub x: Vec<f64>,
    pub checkpoints: Vec<Checkpoint>,
    /// `(t, u)` after every accepted step, starting with `t = 0`; empty unless recorded.
    pub history: Vec<(f64, Vec<f64>)>,
    pub stats: StepStats,
    pub state: PdeState,
}

pub struct PdeSolver<'a> {
    spec: &'a SystemSpec,
    eps: f64,
    x: Vec<f64>,
    h: f64,
    b: Vec<f64>,
    opts: PdeOptions,
}

/// `rho coth(rho)`, the Il'in fitting factor.
fn fitting(rho: f64) -> f64 {
    let r = rho.abs();
    if r < 1e-4 {
        1.0 + r * r / 3.0
    } else {
        r / r.tanh()
    }
}

/// Solve a tridiagonal system in place; `lo[0]` and `up[n-1]` are ignored.
fn thomas(lo: &[f64], diag: &[f64], up: &[f64], rhs: &mut [f64], scratch: &mut [f64]) {
    let n = diag.len();
    scratch[0] = up[0] / diag[0];
    rhs[0] /= diag[0];
    for j in 1..n {
        let m = diag[j] - lo[j] * scratch[j - 1];
        scratch[j] = if j + 1 < n { up[j] / m } else { 0.0 };
        rhs[j] = (rhs[j] - lo[j] * rhs[j - 1]) / m;
    }
    for j in (0..n - 1).rev() {
        rhs[j] -= scratch[j] * rhs[j + 1];
    }
}

impl<'a> PdeSolver<'a> {
    pub fn new(spec: &'a SystemSpec, eps: f64, opts: PdeOptions) -> Result<PdeSolver<'a>> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::Config(format!("eps must lie in (0, 1), got {eps}")));
        }
        if opts.space_points < 5 {
            return Err(Error::Config("at least 5 space points are required".into()));
        }
        let (lo, hi) = spec.domain;
        let n = opts.space_points;
        let h = (hi - lo) / (n - 1) as f64;
        let x: Vec<f64> = (0..n).map(|j| if j + 1 == n { hi } else { lo + h * j as f64 }).collect();
        let b = x.iter().map(|&xi| spec.b(xi)).collect();
        Ok(PdeSolver { spec, eps, x, h, b, opts })
    }

    pub fn grid(&self) -> &[f64] {
        &self.x
    }

    pub fn initial_state(&self) -> PdeState {
        PdeState {
            t: 0.0,
            dt: self.opts.dt0,
            u: self.x.iter().map(|&x| self.spec.g(x)).collect(),
        }
    }

    /// One backward Euler step of size `dt`; `None` if the fixed point is not reached.
    fn step(&self, u_old: &[f64], dt: f64, stats: &mut StepStats) -> Option<Vec<f64>> {
        let n = self.x.len();
        let (h, e2) = (self.h, 0.5 * self.eps * self.eps);
        let mut lo = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut up = vec![0.0; n];
        let mut scratch = vec![0.0; n];
        let mut iterate = u_old.to_vec();
        let iters = if self.spec.is_linear() { 1 } else { self.opts.fixed_point_max_iter };
        for _ in 0..iters {
            stats.fixed_point_iterations += 1;
            for j in 0..n {
                let d = e2 * self.spec.a(self.x[j], iterate[j]);
                if !(d > 0.0 && d.is_finite()) {
                    return None;
                }
                let bj = self.b[j];
                let dfit = d * fitting(bj * h / (2.0 * d));
                let l = dfit / (h * h) - bj / (2.0 * h);
                let r = dfit / (h * h) + bj / (2.0 * h);
                // reflecting ends: the ghost value mirrors the first interior node
                let (l, r) = if j == 0 {
                    (0.0, l + r)
                } else if j + 1 == n {
                    (l + r, 0.0)
                } else {
                    (l, r)
                };
                lo[j] = -dt * l;
                up[j] = -dt * r;
                diag[j] = 1.0 + dt * (l + r);
            }
            let mut next = u_old.to_vec();
            thomas(&lo, &diag, &up, &mut next, &mut scratch);
            if next.iter().any(|v| !v.is_finite()) {
                return None;
            }
            let change = next.iter().zip(&iterate).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            iterate = next;
            if change < self.opts.fixed_point_tol || self.spec.is_linear() {
                return Some(iterate);
            }
        }
        None
    }

    /// Advance `state` to exactly `t_target`. `record` sees every accepted step.
    pub fn advance(
        &self,
        state: &mut PdeState,
        t_target: f64,
        stats: &mut StepStats,
        record: &mut dyn FnMut(f64, &[f64]),
    ) -> Result<()> {
        if t_target > self.opts.time_budget {
            return Err(Error::BudgetExceeded {
                t_final: t_target,
                max_steps: self.opts.max_steps,
            });
        }
        while state.t < t_target {
            if stats.accepted >= self.opts.max_steps {
                return Err(Error::BudgetExceeded {
                    t_final: t_target,
                    max_steps: self.opts.max_steps,
                });
            }
            let remaining = t_target - state.t;
            let last = state.dt >= remaining * (1.0 - 1e-12);
            let dt = if last { remaining } else { state.dt };
            match self.step(&state.u, dt, stats) {
                Some(u) => {
                    let (mn, mx) = state.u.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
                    let slack = 1e-12 * (1.0 + mn.abs().max(mx.abs()));
                    if u.iter().any(|&v| v < mn - slack || v > mx + slack) {
                        stats.max_principle_violations += 1;
                    }
                    state.u = u;
                    state.t = if last { t_target } else { state.t + dt };
                    stats.accepted += 1;
                    if !last {
                        state.dt = (state.dt * self.opts.growth).min(self.opts.dt_max);
                    }
                    record(state.t, &state.u);
                }
                None => {
                    stats.halvings += 1;
                    state.dt = 0.5 * dt;
                    if state.dt < self.opts.dt_min {
                        return Err(Error::StepFailure {
                            t: state.t,
                            dt_min: self.opts.dt_min,
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

/// `T(lambda) = exp(lambda / eps^2)`.
pub fn horizon(lambda: f64, eps: f64) -> f64 {
    (lambda / (eps * eps)).exp()
}

/// Integrate from `g` and record `u` at `t = exp(lambda / eps^2)` for every
/// requested lambda (any order; reported in increasing order).
pub fn solve_pde(spec: &SystemSpec, eps: f64, lambdas: &[f64], opts: PdeOptions) -> Result<PdeSolution> {
    let solver = PdeSolver::new(spec, eps, opts)?;
    let mut ls: Vec<f64> = lambdas.to_vec();
    ls.sort_by(f64::total_cmp);
    ls.dedup();
    if let Some(&l) = ls.last() {
        let t = horizon(l, eps);
        if !(t <= opts.time_budget) {
            return Err(Error::BudgetExceeded {
                t_final: t,
                max_steps: opts.max_steps,
            });
        }
    }
    let mut state = solver.initial_state();
    let mut stats = StepStats::default();
    let mut history = Vec::new();
    if opts.record_history {
        history.push((0.0, state.u.clone()));
    }
    let mut checkpoints = Vec::with_capacity(ls.len());
    for &l in &ls {
        let t = horizon(l, eps);
        solver.advance(&mut state, t, &mut stats, &mut |t, u| {
            if opts.record_history {
                history.push((t, u.to_vec()));
            }
        })?;
        checkpoints.push(Checkpoint { lambda: l, t, u: state.u.clone() });
    }
    Ok(PdeSolution {
        eps,
        x: solver.x.clone(),
        checkpoints,
        history,
        stats,
        state,
    })
}

fn interp_x(x: &[f64], u: &[f64], at: f64) -> f64 {
    let n = x.len();
    let h = (x[n - 1] - x[0]) / (n - 1) as f64;
    let s = ((at - x[0]) / h).clamp(0.0, (n - 1) as f64);
    let k = (s.floor() as usize).min(n - 2);
    let w = s - k as f64;
    (1.0 - w) * u[k] + w * u[k + 1]
}

impl PdeSolution {
    pub fn checkpoint(&self, lambda: f64) -> Option<&Checkpoint> {
        self.checkpoints.iter().find(|c| (c.lambda - lambda).abs() <= 1e-12 * (1.0 + lambda.abs()))
    }

    /// `u(exp(lambda / eps^2), x)` by linear interpolation in `x`.
    pub fn value(&self, lambda: f64, x: f64) -> Option<f64> {
        self.checkpoint(lambda).map(|c| interp_x(&self.x, &c.u, x))
    }

    /// Bilinear interpolation in the recorded history. `hint` caches the
    /// time bracket for monotone queries.
    pub fn interp(&self, t: f64, x: f64, hint: &mut usize) -> f64 {
        let hs = &self.history;
        let last = hs.len() - 1;
        let t = t.clamp(0.0, hs[last].0);
        let mut k = (*hint).min(last.saturating_sub(1));
        while k > 0 && hs[k].0 > t {
            k -= 1;
        }
        while k + 1 < last && hs[k + 1].0 < t {
            k += 1;
        }
        *hint = k;
        if last == 0 {
            return interp_x(&self.x, &hs[0].1, x);
        }
        let (t0, t1) = (hs[k].0, hs[k + 1].0);
        let w = if t1 > t0 { ((t - t0) / (t1 - t0)).clamp(0.0, 1.0) } else { 1.0 };
        (1.0 - w) * interp_x(&self.x, &hs[k].1, x) + w * interp_x(&self.x, &hs[k + 1].1, x)
    }

    /// Checkpoints as a tab-separated table: a header block, then one row per node.
    pub fn render_tsv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# metastable pde checkpoints");
        let _ = writeln!(s, "# eps = {:e}", self.eps);
        let _ = writeln!(s, "# steps = {}", self.stats.accepted);
        let lam: Vec<String> = self.checkpoints.iter().map(|c| format!("{:e}", c.lambda)).collect();
        let ts: Vec<String> = self.checkpoints.iter().map(|c| format!("{:e}", c.t)).collect();
        let _ = writeln!(s, "# lambda = {}", lam.join(" "));
        let _ = writeln!(s, "# t = {}", ts.join(" "));
        let mut head = vec!["x".to_string()];
        head.extend(self.checkpoints.iter().map(|c| format!("u@{:e}", c.lambda)));
        let _ = writeln!(s, "{}", head.join("\t"));
        for (j, x) in self.x.iter().enumerate() {
            let _ = write!(s, "{x:.17e}");
            for c in &self.checkpoints {
                let _ = write!(s, "\t{:.17e}", c.u[j]);
            }
            s.push('\n');
        }
        s
    }

    /// Inverse of [`PdeSolution::render_tsv`]; statistics, history and state are not stored.
    pub fn parse_tsv(text: &str) -> Result<PdeSolution> {
        let bad = |m: &str| Error::Config(format!("pde checkpoint table: {m}"));
        let mut eps = None;
        let mut lambdas = Vec::new();
        let mut ts = Vec::new();
        let mut x = Vec::new();
        let mut cols: Vec<Vec<f64>> = Vec::new();
        let nums = |v: &str| -> Result<Vec<f64>> {
            v.split_whitespace()
                .map(|w| w.parse::<f64>().map_err(|_| bad("bad number")))
                .collect()
        };
        for line in text.lines() {
            if let Some(h) = line.strip_prefix('#') {
                let h = h.trim();
                if let Some(v) = h.strip_prefix("eps =") {
                    eps = Some(v.trim().parse::<f64>().map_err(|_| bad("bad eps"))?);
                } else if let Some(v) = h.strip_prefix("lambda =") {
                    lambdas = nums(v)?;
                } else if let Some(v) = h.strip_prefix("t =") {
                    ts = nums(v)?;
                }
                continue;
            }
            if line.trim().is_empty() || line.starts_with('x') {
                continue;
            }
            let row = nums(line)?;
            if row.len() != lambdas.len() + 1 {
                return Err(bad("row width does not match the header"));
            }
            x.push(row[0]);
            if cols.is_empty() {
                cols = vec![Vec::new(); lambdas.len()];
            }
            for (k, v) in row[1..].iter().enumerate() {
                cols[k].push(*v);
            }
        }
        let eps = eps.ok_or_else(|| bad("missing eps"))?;
        if ts.len() != lambdas.len() || x.len() < 2 {
            return Err(bad("incomplete table"));
        }
        let last = cols.last().cloned().unwrap_or_default();
        Ok(PdeSolution {
            eps,
            checkpoints: lambdas
                .iter()
                .zip(&ts)
                .zip(cols)
                .map(|((&lambda, &t), u)| Checkpoint { lambda, t, u })
                .collect(),
            x,
            history: Vec::new(),
            stats: StepStats::default(),
            state: PdeState {
                t: ts.last().copied().unwrap_or(0.0),
                dt: 0.0,
                u: last,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> PdeOptions {
        PdeOptions {
            space_points: 201,
            ..PdeOptions::default()
        }
    }

    #[test]
    fn thomas_matches_dense_solution() {
        // [2 -1 0; -1 2 -1; 0 -1 2] x = [1 0 1] has x = [1 1 1]
        let mut rhs = vec![1.0, 0.0, 1.0];
        let mut s = vec![0.0; 3];
        thomas(&[0.0, -1.0, -1.0], &[2.0, 2.0, 2.0], &[-1.0, -1.0, 0.0], &mut rhs, &mut s);
        for v in rhs {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn constants_are_preserved_exactly() {
        let spec = SystemSpec::new("x - x^3", "1 + c", "0.3", (-2.0, 2.0)).unwrap();
        let sol = solve_pde(&spec, 0.35, &[0.2, 0.5], quick()).unwrap();
        for c in &sol.checkpoints {
            assert!(c.u.iter().all(|v| (v - 0.3).abs() < 1e-13), "{}", c.lambda);
        }
        assert_eq!(sol.stats.max_principle_violations, 0);
    }

    #[test]
    fn restart_matches_direct_run() {
        let spec = SystemSpec::new("x - x^3", "1 + c", "min(max(x + 0.5, 0), 1)", (-2.0, 2.0)).unwrap();
        let opts = quick();
        let solver = PdeSolver::new(&spec, 0.4, opts).unwrap();
        let (t1, t2) = (3.0, 20.0);
        let mut direct = solver.initial_state();
        let mut stats = StepStats::default();
        solver.advance(&mut direct, t1, &mut stats, &mut |_, _| {}).unwrap();
        let mut resumed = direct.clone();
        let mut fresh = direct.clone();
        solver.advance(&mut direct, t2, &mut stats, &mut |_, _| {}).unwrap();
        solver.advance(&mut resumed, t2, &mut stats, &mut |_, _| {}).unwrap();
        let gap = |a: &PdeState, b: &PdeState| a.u.iter().zip(&b.u).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        assert!(gap(&direct, &resumed) <= 10.0 * opts.fixed_point_tol);
        // a fresh step-size controller only changes the time discretisation
        fresh.dt = opts.dt0;
        solver.advance(&mut fresh, t2, &mut stats, &mut |_, _| {}).unwrap();
        assert!(gap(&direct, &fresh) < 1e-2, "{}", gap(&direct, &fresh));
        assert_eq!(stats.max_principle_violations, 0);
    }

    #[test]
    fn budget_and_table_round_trip() {
        let spec = SystemSpec::new("x - x^3", "1", "min(max(x + 0.5, 0), 1)", (-2.0, 2.0)).unwrap();
        let opts = PdeOptions {
            time_budget: 100.0,
            ..quick()
        };
        assert!(matches!(solve_pde(&spec, 0.3, &[1.0], opts), Err(Error::BudgetExceeded { .. })));
        let sol = solve_pde(&spec, 0.45, &[0.1, 0.3], quick()).unwrap();
        let back = PdeSolution::parse_tsv(&sol.render_tsv()).unwrap();
        assert_eq!(back.x, sol.x);
        assert_eq!(back.checkpoints, sol.checkpoints);
    }
}
