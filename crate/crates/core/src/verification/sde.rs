//! Euler–Maruyama ensemble for the nonlinear perturbation, with the level
//! `u(t - s, X_s)` read from a recorded PDE run.

use super::pde::{horizon, PdeSolution};
use crate::error::{Error, Result};
use crate::system::{EquilibriumSet, SystemSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959963984540054;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdeOptions {
    pub paths: usize,
    pub dt: f64,
    pub seed: u64,
    /// Smallest step the controller may reach before giving up.
    pub dt_min: f64,
}

impl Default for SdeOptions {
    fn default() -> Self {
        SdeOptions {
            paths: 4000,
            dt: 2e-3,
            seed: 0,
            dt_min: 1e-7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult {
    pub eps: f64,
    pub lambda: f64,
    pub x0: f64,
    pub t: f64,
    pub paths: usize,
    pub steps: usize,
    /// Fraction of paths ending in each basin.
    pub weights: Vec<f64>,
    pub weight_half_widths: Vec<f64>,
    /// Sample mean of `g(X_T)` and its 95% half-width.
    pub mean_g: f64,
    pub half_width: f64,
    /// `u(T, x0)` from the PDE run.
    pub u_pde: f64,
}

impl EnsembleResult {
    /// `|E g(X_T) - u(T, x0)| - half-width`, the gap left for the scheme.
    pub fn duality_gap(&self) -> f64 {
        (self.mean_g - self.u_pde).abs() - self.half_width
    }
}

fn reflect(x: f64, (lo, hi): (f64, f64)) -> f64 {
    let mut y = x;
    for _ in 0..4 {
        if y < lo {
            y = 2.0 * lo - y;
        } else if y > hi {
            y = 2.0 * hi - y;
        } else {
            return y;
        }
    }
    y.clamp(lo, hi)
}

/// Paths of `dX = b(X) ds + eps sqrt(a(X, u(T - s, X))) dW` from `x0` up to
/// `T = exp(lambda / eps^2)`. Path `k` draws from its own ChaCha stream, so
/// the result does not depend on scheduling.
pub fn simulate_nonlinear_sde(
    spec: &SystemSpec,
    eq: &EquilibriumSet,
    eps: f64,
    lambda: f64,
    x0: f64,
    sol: &PdeSolution,
    opts: &SdeOptions,
) -> Result<EnsembleResult> {
    let t = horizon(lambda, eps);
    let (lo, hi) = spec.domain;
    if !(x0 >= lo && x0 <= hi) {
        return Err(Error::Config(format!("x0 = {x0} lies outside the domain")));
    }
    if sol.history.is_empty() || sol.history.last().unwrap().0 < t * (1.0 - 1e-12) {
        return Err(Error::Config("the PDE run does not cover [0, T] with a recorded history".into()));
    }
    if (sol.eps - eps).abs() > 0.0 {
        return Err(Error::Config(format!("PDE run has eps = {}, ensemble asks for {eps}", sol.eps)));
    }
    if opts.paths < 2 || !(opts.dt > 0.0) {
        return Err(Error::Config("need at least two paths and a positive step".into()));
    }
    let steps = (t / opts.dt).ceil().max(1.0) as usize;
    let dt = t / steps as f64;
    if dt < opts.dt_min {
        return Err(Error::StabilityFailure(format!("step {dt} is below the minimum {}", opts.dt_min)));
    }
    let sq = dt.sqrt();
    let finals: Vec<std::result::Result<f64, String>> = (0..opts.paths)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(k as u64);
            let mut x = x0;
            let mut hint = sol.history.len();
            for m in 0..steps {
                let s = m as f64 * dt;
                let level = sol.interp(t - s, x, &mut hint);
                let a = spec.a(x, level);
                if !(a > 0.0 && a.is_finite()) {
                    return Err(format!("diffusion {a} at x = {x}, level {level}"));
                }
                let xi: f64 = StandardNormal.sample(&mut rng);
                let next = x + spec.b(x) * dt + eps * a.sqrt() * sq * xi;
                if !next.is_finite() {
                    return Err(format!("path {k} diverged at s = {s}"));
                }
                x = reflect(next, (lo, hi));
            }
            Ok(x)
        })
        .collect();
    let finals: Vec<f64> = finals
        .into_iter()
        .collect::<std::result::Result<_, _>>()
        .map_err(Error::StabilityFailure)?;

    let n = finals.len() as f64;
    let mut counts = vec![0usize; eq.n()];
    let (mut sum, mut sum2) = (0.0, 0.0);
    for &x in &finals {
        counts[eq.basin_of(x)] += 1;
        let g = spec.g(x);
        sum += g;
        sum2 += g * g;
    }
    let mean = sum / n;
    let var = ((sum2 - n * mean * mean) / (n - 1.0)).max(0.0);
    let weights: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
    let weight_half_widths = weights.iter().map(|p| Z95 * (p * (1.0 - p) / n).sqrt()).collect();
    let mut hint = 0;
    let u_pde = sol.interp(t, x0, &mut hint);
    Ok(EnsembleResult {
        eps,
        lambda,
        x0,
        t,
        paths: opts.paths,
        steps,
        weights,
        weight_half_widths,
        mean_g: mean,
        half_width: Z95 * (var / n).sqrt(),
        u_pde,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{find_equilibria, RootOptions};
    use crate::verification::pde::{solve_pde, PdeOptions};

    #[test]
    fn reflection_stays_inside() {
        assert_eq!(reflect(-2.5, (-2.0, 2.0)), -1.5);
        assert_eq!(reflect(2.25, (-2.0, 2.0)), 1.75);
        assert_eq!(reflect(0.3, (-2.0, 2.0)), 0.3);
    }

    #[test]
    fn paths_stay_put_before_any_transition() {
        let spec = SystemSpec::new("x - x^3", "1 + c", "min(max(x + 0.5, 0), 1)", (-2.0, 2.0)).unwrap();
        let eq = find_equilibria(&spec, &RootOptions::default()).unwrap();
        let (eps, lambda) = (0.2, 0.1);
        let opts = PdeOptions {
            space_points: 201,
            record_history: true,
            ..PdeOptions::default()
        };
        let sol = solve_pde(&spec, eps, &[lambda], opts).unwrap();
        let sde = SdeOptions {
            paths: 400,
            dt: 5e-3,
            seed: 9,
            ..SdeOptions::default()
        };
        let r = simulate_nonlinear_sde(&spec, &eq, eps, lambda, eq.stable[0], &sol, &sde).unwrap();
        assert!(r.weights[0] >= 0.99, "{:?}", r.weights);
        let again = simulate_nonlinear_sde(&spec, &eq, eps, lambda, eq.stable[0], &sol, &sde).unwrap();
        assert_eq!(r, again);
    }
}
