//! Quasi-potentials in one dimension and the brute-force action oracle.

use crate::error::{Error, Result};
use crate::quad::{gauss_legendre, integrate, QuadOptions};
use crate::roots::golden_min;
use crate::system::{EquilibriumSet, SystemSpec};

/// Value of the second argument of `a` along a path.
#[derive(Debug, Clone, Copy)]
pub enum Levels<'a> {
    Uniform(f64),
    /// One constant per basin, indexed like `EquilibriumSet::basins`.
    PerBasin(&'a [f64]),
}

impl Levels<'_> {
    fn at(&self, eq: &EquilibriumSet, x: f64) -> f64 {
        match self {
            Levels::Uniform(c) => *c,
            Levels::PerBasin(v) => v[eq.basin_of(x)],
        }
    }
}

/// `V_ij` at a fixed level assignment. Row `i` holds the costs out of `O_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct VMatrixAtC {
    pub c: f64,
    pub v: Vec<Vec<f64>>,
}

impl VMatrixAtC {
    pub fn n(&self) -> usize {
        self.v.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.v[i][j]
    }

    pub fn from_rows(c: f64, v: Vec<Vec<f64>>) -> VMatrixAtC {
        VMatrixAtC { c, v }
    }
}

/// Cost `2 * integral of max(-sign(y - x) b, 0) / a` between `x` and `y`.
///
/// The range is split at every equilibrium so that each panel sees a smooth
/// integrand and a single basin.
pub fn quasipotential_1d(
    spec: &SystemSpec,
    eq: &EquilibriumSet,
    levels: Levels<'_>,
    x: f64,
    y: f64,
    opts: &QuadOptions,
) -> Result<f64> {
    if x == y {
        return Ok(0.0);
    }
    let dir = if y > x { 1.0 } else { -1.0 };
    let (lo, hi) = if x < y { (x, y) } else { (y, x) };
    let mut cuts = vec![lo];
    cuts.extend(eq.all_points().into_iter().filter(|&p| p > lo && p < hi));
    cuts.push(hi);
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let (a0, a1) = (w[0], w[1]);
        let c = levels.at(eq, 0.5 * (a0 + a1));
        let mut bad = None;
        let r = integrate(
            |s| {
                let push = (-dir * spec.b(s)).max(0.0);
                if push == 0.0 {
                    return 0.0;
                }
                let a = spec.a(s, c);
                if !(a > 0.0) {
                    bad = Some(s);
                }
                push / a
            },
            a0,
            a1,
            opts,
        )?;
        if let Some(s) = bad {
            return Err(Error::DegenerateData(format!(
                "diffusion is not positive at x = {s}, c = {c}"
            )));
        }
        total += r.value;
    }
    Ok(2.0 * total)
}

/// Adjacent climbs: `up[k]` is the cost `O_k -> O_{k+1}`, `down[k]` the cost `O_{k+1} -> O_k`.
pub fn climbs(
    spec: &SystemSpec,
    eq: &EquilibriumSet,
    levels: Levels<'_>,
    opts: &QuadOptions,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = eq.n();
    let mut up = Vec::with_capacity(n.saturating_sub(1));
    let mut down = Vec::with_capacity(n.saturating_sub(1));
    for k in 0..n.saturating_sub(1) {
        up.push(quasipotential_1d(spec, eq, levels, eq.stable[k], eq.stable[k + 1], opts)?);
        down.push(quasipotential_1d(spec, eq, levels, eq.stable[k + 1], eq.stable[k], opts)?);
    }
    Ok((up, down))
}

/// Assemble the full matrix from adjacent climbs; paths between non-adjacent
/// equilibria pass through the intermediate ones, so costs add.
pub fn vmatrix_from_climbs(c: f64, up: &[f64], down: &[f64]) -> VMatrixAtC {
    let n = up.len() + 1;
    let mut v = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            v[i][j] = up[i..j].iter().sum();
            v[j][i] = down[i..j].iter().sum();
        }
    }
    VMatrixAtC { c, v }
}

/// `V_ij` for all ordered pairs of stable equilibria at uniform level `c`.
pub fn vmatrix(spec: &SystemSpec, eq: &EquilibriumSet, c: f64, opts: &QuadOptions) -> Result<VMatrixAtC> {
    let (up, down) = climbs(spec, eq, Levels::Uniform(c), opts)?;
    Ok(vmatrix_from_climbs(c, &up, &down))
}

/// Same as [`vmatrix`] with one level per basin.
pub fn vmatrix_levels(
    spec: &SystemSpec,
    eq: &EquilibriumSet,
    levels: &[f64],
    opts: &QuadOptions,
) -> Result<VMatrixAtC> {
    let (up, down) = climbs(spec, eq, Levels::PerBasin(levels), opts)?;
    Ok(vmatrix_from_climbs(f64::NAN, &up, &down))
}

/// Check `V_ik = V_ij + V_jk` for ordered triples against direct quadrature.
pub fn check_additivity(
    spec: &SystemSpec,
    eq: &EquilibriumSet,
    c: f64,
    opts: &QuadOptions,
    tol: f64,
) -> Result<()> {
    let n = eq.n();
    let direct = |i: usize, k: usize| quasipotential_1d(spec, eq, Levels::Uniform(c), eq.stable[i], eq.stable[k], opts);
    for i in 0..n {
        for k in 0..n {
            let lo = i.min(k);
            let hi = i.max(k);
            for j in lo + 1..hi {
                let d = direct(i, k)?;
                let s = direct(i, j)? + direct(j, k)?;
                if (d - s).abs() > tol {
                    return Err(Error::Additivity {
                        i,
                        j,
                        k,
                        direct: d,
                        summed: s,
                    });
                }
            }
        }
    }
    Ok(())
}

/// Optimised piecewise-linear path returned by [`action_bruteforce`].
#[derive(Debug, Clone)]
pub struct ActionPath {
    pub action: f64,
    pub knots: Vec<f64>,
    pub durations: Vec<f64>,
}

/// Upper bound on the quasi-potential from an explicit path search.
///
/// The path is piecewise linear through `n_knots` points from `x` to `y`.
/// For fixed knots each segment duration has a closed-form optimum, so only
/// the knot positions are searched, one coordinate at a time.
pub fn action_bruteforce(
    spec: &SystemSpec,
    c: f64,
    x: f64,
    y: f64,
    n_knots: usize,
    n_iters: usize,
) -> ActionPath {
    let n_knots = n_knots.max(3);
    if x == y {
        return ActionPath {
            action: 0.0,
            knots: vec![x; n_knots],
            durations: vec![0.0; n_knots - 1],
        };
    }
    let (gx, gw) = gauss_legendre(12);
    let seg = |p: f64, q: f64| -> (f64, f64) { segment_action(spec, c, p, q, &gx, &gw) };
    let mut knots: Vec<f64> = (0..n_knots)
        .map(|k| x + (y - x) * k as f64 / (n_knots - 1) as f64)
        .collect();
    let total = |k: &[f64]| -> f64 { k.windows(2).map(|w| seg(w[0], w[1]).0).sum() };
    let mut best = total(&knots);
    for _ in 0..n_iters {
        for k in 1..n_knots - 1 {
            let (l, r) = (knots[k - 1], knots[k + 1]);
            let local = |p: f64| seg(l, p).0 + seg(p, r).0;
            let (p, v) = golden_min(local, l.min(r), l.max(r), 1e-10 * (1.0 + (r - l).abs()));
            if v < local(knots[k]) {
                knots[k] = p;
            }
        }
        let now = total(&knots);
        if best - now <= 1e-13 * best.abs() {
            best = now;
            break;
        }
        best = now;
    }
    let durations = knots.windows(2).map(|w| seg(w[0], w[1]).1).collect();
    ActionPath {
        action: best,
        knots,
        durations,
    }
}

// Minimum over tau of (1/2) int_0^tau (d/tau - b)^2 / a dt along a straight
// segment, with the position integrals done by Gauss-Legendre in theta.
fn segment_action(spec: &SystemSpec, c: f64, p: f64, q: f64, gx: &[f64], gw: &[f64]) -> (f64, f64) {
    let d = q - p;
    if d == 0.0 {
        return (0.0, 0.0);
    }
    let (mut i0, mut i1, mut i2) = (0.0, 0.0, 0.0);
    for (t, w) in gx.iter().zip(gw) {
        let s = p + d * 0.5 * (t + 1.0);
        let b = spec.b(s);
        let a = spec.a(s, c);
        i0 += 0.5 * w / a;
        i1 += 0.5 * w * b / a;
        i2 += 0.5 * w * b * b / a;
    }
    if i2 <= 0.0 {
        // no drift along the segment: the action decays like d^2 I0 / (2 tau)
        return (0.0, f64::INFINITY);
    }
    let action = (d.abs() * (i0 * i2).sqrt() - d * i1).max(0.0);
    (action, d.abs() * (i0 / i2).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{find_equilibria, RootOptions};

    fn dw(a: &str) -> (SystemSpec, EquilibriumSet) {
        let s = SystemSpec::new("x - x^3", a, "min(max(x + 0.5, 0), 1)", (-2.0, 2.0)).unwrap();
        let e = find_equilibria(&s, &RootOptions::default()).unwrap();
        (s, e)
    }

    #[test]
    fn double_well_barrier() {
        let (s, e) = dw("1");
        let o = QuadOptions::default();
        let v = quasipotential_1d(&s, &e, Levels::Uniform(0.0), -1.0, 0.0, &o).unwrap();
        assert!((v - 0.5).abs() < 1e-10);
        assert_eq!(quasipotential_1d(&s, &e, Levels::Uniform(0.0), 0.3, 0.3, &o).unwrap(), 0.0);
        // descent is free
        let v = quasipotential_1d(&s, &e, Levels::Uniform(0.0), 0.0, 1.0, &o).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn scaling_by_constant_diffusion() {
        let (s, e) = dw("1 + c");
        let o = QuadOptions::default();
        let v = quasipotential_1d(&s, &e, Levels::Uniform(1.0), -1.0, 0.0, &o).unwrap();
        assert!((v - 0.25).abs() < 1e-10);
        let m = vmatrix(&s, &e, 1.0, &o).unwrap();
        assert!((m.get(0, 1) - 0.25).abs() < 1e-10 && (m.get(1, 0) - 0.25).abs() < 1e-10);
    }

    #[test]
    fn single_equilibrium_matrix() {
        let s = SystemSpec::new("-x", "1", "0", (-2.0, 2.0)).unwrap();
        let e = find_equilibria(&s, &RootOptions::default()).unwrap();
        let m = vmatrix(&s, &e, 0.0, &QuadOptions::default()).unwrap();
        assert_eq!(m.v, vec![vec![0.0]]);
    }

    #[test]
    fn brute_force_bounds() {
        let (s, _) = dw("1");
        let r = action_bruteforce(&s, 0.0, -1.0, 0.0, 64, 20);
        assert!(r.action >= 0.5 - 1e-9 && r.action <= 0.52, "{}", r.action);
        assert_eq!(action_bruteforce(&s, 0.0, 0.2, 0.2, 8, 4).action, 0.0);
        let r = action_bruteforce(&s, 0.0, 0.0, 1.0, 64, 20);
        assert!(r.action <= 1e-3, "{}", r.action);
    }
}
