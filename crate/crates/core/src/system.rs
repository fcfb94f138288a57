//! One-dimensional gradient-like systems: drift `b(x)`, state-dependent
//! diffusion `a(x, c)` and initial data `g(x)` on a truncated interval.

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::roots::{bisect, golden_min};

/// Samples used to bound the range of `g` when no explicit bounds are given.
const G_BOUND_SAMPLES: usize = 8193;

#[derive(Debug, Clone)]
pub struct SystemSpec {
    pub drift: Expr,
    pub diffusion: Expr,
    pub initial: Expr,
    pub domain: (f64, f64),
    pub g_bounds: (f64, f64),
}

impl SystemSpec {
    /// Compile the three expressions. `g_bounds` is estimated by dense sampling.
    pub fn new(drift: &str, diffusion: &str, initial: &str, domain: (f64, f64)) -> Result<SystemSpec> {
        let (lo, hi) = domain;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Config(format!("invalid domain [{lo}, {hi}]")));
        }
        let drift = Expr::parse(drift, &["x"])?;
        let diffusion = Expr::parse(diffusion, &["x", "c"])?;
        let initial = Expr::parse(initial, &["x"])?;
        let mut gmin = f64::INFINITY;
        let mut gmax = f64::NEG_INFINITY;
        for k in 0..G_BOUND_SAMPLES {
            let x = lo + (hi - lo) * k as f64 / (G_BOUND_SAMPLES - 1) as f64;
            let g = initial.eval(&[x]);
            if !g.is_finite() {
                return Err(Error::Config(format!("initial data is not finite at x = {x}")));
            }
            gmin = gmin.min(g);
            gmax = gmax.max(g);
        }
        Ok(SystemSpec {
            drift,
            diffusion,
            initial,
            domain,
            g_bounds: (gmin, gmax),
        })
    }

    pub fn with_g_bounds(mut self, bounds: (f64, f64)) -> SystemSpec {
        self.g_bounds = bounds;
        self
    }

    #[inline]
    pub fn b(&self, x: f64) -> f64 {
        self.drift.eval(&[x])
    }

    #[inline]
    pub fn a(&self, x: f64, c: f64) -> f64 {
        self.diffusion.eval(&[x, c])
    }

    #[inline]
    pub fn g(&self, x: f64) -> f64 {
        self.initial.eval(&[x])
    }

    /// True when `a` does not read its second argument.
    pub fn is_linear(&self) -> bool {
        self.diffusion.independent_of(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumSet {
    pub stable: Vec<f64>,
    pub unstable: Vec<f64>,
    pub basins: Vec<(f64, f64)>,
}

impl EquilibriumSet {
    pub fn n(&self) -> usize {
        self.stable.len()
    }

    /// Index of the basin containing `x`; separatrix points go to the right basin.
    pub fn basin_of(&self, x: f64) -> usize {
        self.unstable.partition_point(|&u| u <= x)
    }

    /// All equilibria, stable and unstable, in increasing order.
    pub fn all_points(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.stable.iter().chain(&self.unstable).copied().collect();
        v.sort_by(f64::total_cmp);
        v
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RootOptions {
    pub grid: usize,
    pub tol: f64,
}

impl Default for RootOptions {
    fn default() -> Self {
        RootOptions {
            grid: 4096,
            tol: 1e-12,
        }
    }
}

/// Locate the zeros of `b` by sign scan plus bisection and assemble basins.
pub fn find_equilibria(spec: &SystemSpec, opts: &RootOptions) -> Result<EquilibriumSet> {
    let (lo, hi) = spec.domain;
    let n = opts.grid.max(8);
    let xs: Vec<f64> = (0..=n).map(|k| lo + (hi - lo) * k as f64 / n as f64).collect();
    let bs: Vec<f64> = xs.iter().map(|&x| spec.b(x)).collect();
    let bmax = bs.iter().fold(0.0f64, |m, b| m.max(b.abs()));
    let tangent_tol = 1e-9 * (1.0 + bmax);

    let mut roots: Vec<(f64, bool)> = Vec::new(); // (position, stable)
    let sgn = |v: f64| {
        if v > 0.0 {
            1
        } else if v < 0.0 {
            -1
        } else {
            0
        }
    };
    let mut k = 0;
    while k < n {
        let (s0, s1) = (sgn(bs[k]), sgn(bs[k + 1]));
        if s0 != 0 && s1 != 0 && s0 != s1 {
            let r = bisect(|x| spec.b(x), xs[k], xs[k + 1], opts.tol)?;
            roots.push((r, s0 > 0));
        } else if s1 == 0 && k + 1 < n {
            // exact zero on a grid node: classify by the neighbours
            let s2 = sgn(bs[k + 2]);
            if s0 != 0 && s2 != 0 && s0 != s2 {
                roots.push((xs[k + 1], s0 > 0));
                k += 1;
            } else {
                return Err(Error::TangentRoot { x: xs[k + 1] });
            }
        }
        k += 1;
    }

    // roots without a sign change show up as small local minima of |b|
    for k in 1..n {
        let (l, m, r) = (bs[k - 1], bs[k], bs[k + 1]);
        if sgn(l) == sgn(m) && sgn(m) == sgn(r) && m != 0.0 && m.abs() <= l.abs() && m.abs() <= r.abs() {
            let (x, v) = golden_min(|x| spec.b(x).abs(), xs[k - 1], xs[k + 1], 1e-13);
            if v <= tangent_tol {
                return Err(Error::TangentRoot { x });
            }
        }
    }

    let stable: Vec<f64> = roots.iter().filter(|r| r.1).map(|r| r.0).collect();
    let unstable: Vec<f64> = roots.iter().filter(|r| !r.1).map(|r| r.0).collect();
    if stable.is_empty() {
        return Err(Error::NoStableEquilibrium);
    }
    if !(roots.first().is_some_and(|r| r.1) && roots.last().is_some_and(|r| r.1)) {
        return Err(Error::Config(
            "drift must point inward at both domain ends (b(x_lo) > 0 > b(x_hi))".into(),
        ));
    }
    let mut edges = vec![lo];
    edges.extend(&unstable);
    edges.push(hi);
    let basins = edges.windows(2).map(|w| (w[0], w[1])).collect();
    Ok(EquilibriumSet {
        stable,
        unstable,
        basins,
    })
}

/// `{x in D : dist(x, boundary of D) >= delta, |x| <= 1/delta}` for an interval `D`.
pub fn shrunk_basin(basin: (f64, f64), delta: f64) -> Result<(f64, f64)> {
    let lo = (basin.0 + delta).max(-1.0 / delta);
    let hi = (basin.1 - delta).min(1.0 / delta);
    if !(delta > 0.0) || lo > hi {
        return Err(Error::EmptyShrunkBasin { basin: 0, delta });
    }
    Ok((lo, hi))
}

#[derive(Debug, Clone, Copy)]
pub struct AssumptionLimits {
    pub ellipticity_min: f64,
    pub lipschitz_max: f64,
}

impl Default for AssumptionLimits {
    fn default() -> Self {
        AssumptionLimits {
            ellipticity_min: 1e-6,
            lipschitz_max: 1e3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    pub min_a: f64,
    pub min_a_at: (f64, f64),
    pub lip_b: f64,
    pub lip_a_x: f64,
    pub lip_a_c: f64,
    pub lip_g: f64,
    pub ellipticity_ok: bool,
    pub lipschitz_ok: bool,
    pub confinement_ok: bool,
    pub finite_ok: bool,
}

impl AssumptionReport {
    pub fn passed(&self) -> bool {
        self.ellipticity_ok && self.lipschitz_ok && self.confinement_ok && self.finite_ok
    }

    pub fn render(&self) -> String {
        let flag = |b: bool| if b { "pass" } else { "FAIL" };
        format!(
            "ellipticity   {}  min a = {:.6e} at (x, c) = ({:.6}, {:.6})\n\
             lipschitz     {}  b: {:.4e}  a/x: {:.4e}  a/c: {:.4e}  g: {:.4e}\n\
             confinement   {}\n\
             finite        {}\n",
            flag(self.ellipticity_ok),
            self.min_a,
            self.min_a_at.0,
            self.min_a_at.1,
            flag(self.lipschitz_ok),
            self.lip_b,
            self.lip_a_x,
            self.lip_a_c,
            self.lip_g,
            flag(self.confinement_ok),
            flag(self.finite_ok),
        )
    }
}

/// Sample `a`, `b`, `g` on a `grid_n x grid_n` mesh of domain x `[g_min, g_max]`.
pub fn validate_assumptions(spec: &SystemSpec, grid_n: usize, limits: &AssumptionLimits) -> AssumptionReport {
    let n = grid_n.max(2);
    let (lo, hi) = spec.domain;
    let (cl, ch) = spec.g_bounds;
    let xs: Vec<f64> = (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect();
    let cs: Vec<f64> = (0..n).map(|k| cl + (ch - cl) * k as f64 / (n - 1) as f64).collect();
    let hx = (hi - lo) / (n - 1) as f64;
    let hc = (ch - cl) / (n - 1) as f64;

    let mut finite = true;
    let lip = |f: &dyn Fn(f64) -> f64, pts: &[f64], h: f64, finite: &mut bool| -> f64 {
        let vals: Vec<f64> = pts.iter().map(|&p| f(p)).collect();
        if vals.iter().any(|v| !v.is_finite()) {
            *finite = false;
        }
        if h <= 0.0 {
            return 0.0;
        }
        vals.windows(2).fold(0.0f64, |m, w| m.max((w[1] - w[0]).abs() / h))
    };
    let lip_b = lip(&|x| spec.b(x), &xs, hx, &mut finite);
    let lip_g = lip(&|x| spec.g(x), &xs, hx, &mut finite);

    let mut min_a = f64::INFINITY;
    let mut min_a_at = (lo, cl);
    let mut lip_a_x = 0.0f64;
    let mut lip_a_c = 0.0f64;
    let grid: Vec<Vec<f64>> = xs
        .iter()
        .map(|&x| cs.iter().map(|&c| spec.a(x, c)).collect())
        .collect();
    for (i, row) in grid.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if !v.is_finite() {
                finite = false;
            }
            if v < min_a {
                min_a = v;
                min_a_at = (xs[i], cs[j]);
            }
            if i + 1 < n {
                lip_a_x = lip_a_x.max((grid[i + 1][j] - v).abs() / hx);
            }
            if j + 1 < n && hc > 0.0 {
                lip_a_c = lip_a_c.max((row[j + 1] - v).abs() / hc);
            }
        }
    }
    let confinement_ok = spec.b(lo) > 0.0 && spec.b(hi) < 0.0;
    AssumptionReport {
        min_a,
        min_a_at,
        lip_b,
        lip_a_x,
        lip_a_c,
        lip_g,
        ellipticity_ok: min_a >= limits.ellipticity_min,
        lipschitz_ok: [lip_b, lip_a_x, lip_a_c, lip_g]
            .iter()
            .all(|&l| l <= limits.lipschitz_max),
        confinement_ok,
        finite_ok: finite,
    }
}
