//! Sources of rate matrices `V_ij(c)`: a spatial system or a loaded table.

use crate::error::{Error, Result};
use crate::interp::Pchip;
use crate::quad::QuadOptions;
use crate::quasipotential::{climbs, vmatrix_from_climbs, Levels, VMatrixAtC};
use crate::system::{EquilibriumSet, SystemSpec};
use std::fmt::Write as _;
use std::sync::Arc;

pub trait RateModel: Send + Sync {
    fn n(&self) -> usize;

    /// `[g_min, g_max]`, the range of levels the profiles can take.
    fn c_range(&self) -> (f64, f64);

    fn vmatrix(&self, c: f64) -> Result<VMatrixAtC>;

    /// Matrix for one level per basin, if the model supports it.
    fn vmatrix_levels(&self, levels: &[f64]) -> Option<Result<VMatrixAtC>>;

    /// Canonical text used for content hashing.
    fn fingerprint(&self) -> String;
}

#[derive(Debug, Clone)]
pub struct SpatialRates {
    pub spec: Arc<SystemSpec>,
    pub eq: EquilibriumSet,
    pub quad: QuadOptions,
}

impl RateModel for SpatialRates {
    fn n(&self) -> usize {
        self.eq.n()
    }

    fn c_range(&self) -> (f64, f64) {
        self.spec.g_bounds
    }

    fn vmatrix(&self, c: f64) -> Result<VMatrixAtC> {
        let (up, down) = climbs(&self.spec, &self.eq, Levels::Uniform(c), &self.quad)?;
        Ok(vmatrix_from_climbs(c, &up, &down))
    }

    fn vmatrix_levels(&self, levels: &[f64]) -> Option<Result<VMatrixAtC>> {
        Some(
            climbs(&self.spec, &self.eq, Levels::PerBasin(levels), &self.quad)
                .map(|(up, down)| vmatrix_from_climbs(f64::NAN, &up, &down)),
        )
    }

    fn fingerprint(&self) -> String {
        format!(
            "spatial\ndrift={}\ndiffusion={}\ndomain={:?}\nstable={:?}\nunstable={:?}\nquad={:e},{:e},{}\n",
            self.spec.drift.source(),
            self.spec.diffusion.source(),
            self.spec.domain,
            self.eq.stable,
            self.eq.unstable,
            self.quad.rel_tol,
            self.quad.abs_tol,
            self.quad.max_subintervals
        )
    }
}

/// Rates tabulated against a single level `c`, interpolated in between.
#[derive(Debug, Clone)]
pub struct TableRates {
    n: usize,
    grid: Vec<f64>,
    rows: Vec<Vec<f64>>,
    interp: Vec<Pchip>,
    range: (f64, f64),
}

impl TableRates {
    /// `rows[k]` holds the `n(n-1)` off-diagonal entries at `grid[k]`, row-major.
    pub fn new(n: usize, grid: Vec<f64>, rows: Vec<Vec<f64>>, range: Option<(f64, f64)>) -> Result<TableRates> {
        if grid.len() < 2 || grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("v-table grid must be strictly increasing with at least two rows".into()));
        }
        let m = n * (n - 1);
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::Config(format!("v-table rows must have {m} entries")));
        }
        if rows.iter().flatten().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config("v-table entries must be finite and non-negative".into()));
        }
        let interp = (0..m)
            .map(|e| Pchip::new(grid.clone(), rows.iter().map(|r| r[e]).collect()))
            .collect();
        let range = range.unwrap_or((grid[0], *grid.last().unwrap()));
        Ok(TableRates {
            n,
            grid,
            rows,
            interp,
            range,
        })
    }

    pub fn parse(text: &str, range: Option<(f64, f64)>) -> Result<TableRates> {
        let mut n = None;
        let mut grid = Vec::new();
        let mut rows = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if let Some(h) = line.strip_prefix('#') {
                if let Some(v) = h.trim().strip_prefix("n =") {
                    n = Some(
                        v.trim()
                            .parse::<usize>()
                            .map_err(|_| Error::Config(format!("bad v-table header {line:?}")))?,
                    );
                }
                continue;
            }
            if line.is_empty() || line.starts_with('c') {
                continue;
            }
            let vals: std::result::Result<Vec<f64>, _> = line.split_whitespace().map(str::parse::<f64>).collect();
            let vals = vals.map_err(|_| Error::Config(format!("bad v-table row {line:?}")))?;
            grid.push(vals[0]);
            rows.push(vals[1..].to_vec());
        }
        // Without a header, n(n - 1) columns fix n.
        let n = match (n, rows.first()) {
            (Some(n), _) => n,
            (None, Some(r)) => (2..=32)
                .find(|k| k * (k - 1) == r.len())
                .ok_or_else(|| Error::Config(format!("{} rate columns is not n(n - 1) for any n", r.len())))?,
            (None, None) => return Err(Error::Config("empty v-table".into())),
        };
        TableRates::new(n, grid, rows, range)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# metastable v-table");
        let _ = writeln!(s, "# n = {}", self.n);
        let mut head = vec!["c".to_string()];
        for i in 0..self.n {
            for j in 0..self.n {
                if i != j {
                    head.push(format!("V{}_{}", i + 1, j + 1));
                }
            }
        }
        let _ = writeln!(s, "{}", head.join("\t"));
        for (c, r) in self.grid.iter().zip(&self.rows) {
            let cells: Vec<String> = std::iter::once(*c).chain(r.iter().copied()).map(|v| format!("{v:.17e}")).collect();
            let _ = writeln!(s, "{}", cells.join("\t"));
        }
        s
    }
}

impl RateModel for TableRates {
    fn n(&self) -> usize {
        self.n
    }

    fn c_range(&self) -> (f64, f64) {
        self.range
    }

    fn vmatrix(&self, c: f64) -> Result<VMatrixAtC> {
        let mut v = vec![vec![0.0; self.n]; self.n];
        let mut e = 0;
        for (i, row) in v.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                if i != j {
                    *cell = self.interp[e].eval(c);
                    e += 1;
                }
            }
        }
        Ok(VMatrixAtC::from_rows(c, v))
    }

    fn vmatrix_levels(&self, _levels: &[f64]) -> Option<Result<VMatrixAtC>> {
        None
    }

    fn fingerprint(&self) -> String {
        format!("table\n{}", self.render())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_roundtrip() {
        let t = TableRates::new(2, vec![0.0, 0.5, 1.0], vec![vec![1.0, 2.0], vec![1.5, 2.5], vec![2.0, 3.0]], None).unwrap();
        let back = TableRates::parse(&t.render(), None).unwrap();
        assert_eq!(back.render(), t.render());
        let m = back.vmatrix(0.25).unwrap();
        assert!((m.get(0, 1) - 1.25).abs() < 1e-12);
        assert!((m.get(1, 0) - 2.25).abs() < 1e-12);
        assert_eq!(back.c_range(), (0.0, 1.0));
    }
}
