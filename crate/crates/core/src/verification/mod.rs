//! Numerical checks of the limit profiles: the parabolic problem, the
//! plateau lemma and the coupled diffusion.

pub mod pde;
pub mod report;
pub mod sde;

use crate::error::{Error, Result};
use crate::system::{shrunk_basin, EquilibriumSet};
use pde::PdeSolution;

#[derive(Debug, Clone, PartialEq)]
pub struct Lemma1Report {
    pub eps: f64,
    pub lambda: f64,
    pub delta: f64,
    /// Per basin: the shrunk basin and the largest `|u(x) - u(O_i)|` on it.
    pub basins: Vec<((f64, f64), f64)>,
    pub max_deviation: f64,
    pub pass: bool,
}

/// Largest deviation of `u(T(lambda), .)` from its value at the equilibrium
/// over every shrunk basin.
pub fn check_lemma1(sol: &PdeSolution, eq: &EquilibriumSet, delta: f64, lambda: f64) -> Result<Lemma1Report> {
    let cp = sol
        .checkpoint(lambda)
        .ok_or_else(|| Error::Config(format!("no checkpoint at lambda = {lambda}")))?;
    let (dlo, dhi) = (sol.x[0], *sol.x.last().unwrap());
    let mut basins = Vec::with_capacity(eq.n());
    for (i, &b) in eq.basins.iter().enumerate() {
        let (lo, hi) = shrunk_basin(b, delta).map_err(|_| Error::EmptyShrunkBasin { basin: i, delta })?;
        let (lo, hi) = (lo.max(dlo), hi.min(dhi));
        let centre = sol.value(lambda, eq.stable[i]).expect("checkpoint exists");
        let dev = sol
            .x
            .iter()
            .zip(&cp.u)
            .filter(|(x, _)| **x >= lo && **x <= hi)
            .fold(0.0f64, |m, (_, u)| m.max((u - centre).abs()));
        basins.push(((lo, hi), dev));
    }
    let max_deviation = basins.iter().fold(0.0f64, |m, b| m.max(b.1));
    Ok(Lemma1Report {
        eps: sol.eps,
        lambda,
        delta,
        basins,
        max_deviation,
        pass: max_deviation <= delta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{find_equilibria, RootOptions, SystemSpec};
    use pde::{solve_pde, PdeOptions};

    #[test]
    fn constant_data_has_no_deviation() {
        let spec = SystemSpec::new("x - x^3", "1 + c", "0.7", (-2.0, 2.0)).unwrap();
        let eq = find_equilibria(&spec, &RootOptions::default()).unwrap();
        let opts = PdeOptions {
            space_points: 201,
            ..PdeOptions::default()
        };
        let sol = solve_pde(&spec, 0.35, &[0.2], opts).unwrap();
        let r = check_lemma1(&sol, &eq, 0.1, 0.2).unwrap();
        assert!(r.max_deviation < 1e-13 && r.pass);
        assert!(check_lemma1(&sol, &eq, 0.1, 0.3).is_err());
    }
}
