//! Hierarchy of cycles built from a rate matrix.
//!
//! Rank 0 holds the singletons. At each rank every cycle points at the
//! equilibrium it is cheapest to reach (`nu`); periodic orbits of the induced
//! map on cycles merge into one cycle of the next rank and the remaining
//! cycles are carried over unchanged.

use crate::error::{Error, Result};
use crate::quasipotential::VMatrixAtC;
use std::fmt::Write as _;

/// Rate differences below this are treated as ties.
pub const TIE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Cycle {
    pub id: usize,
    pub rank: usize,
    /// Sorted equilibrium indices (0-based).
    pub members: Vec<usize>,
    /// Constituent cycles of the previous rank, in orbit order.
    pub children: Vec<usize>,
    pub next_equilibrium: Option<usize>,
    pub next_cycle: Option<usize>,
    /// `(j, V_{cycle, O_j})` for every `j` outside the cycle, sorted by `j`.
    pub exit_rates: Vec<(usize, f64)>,
}

impl Cycle {
    pub fn contains(&self, i: usize) -> bool {
        self.members.binary_search(&i).is_ok()
    }

    pub fn exit_rate(&self, j: usize) -> Option<f64> {
        self.exit_rates.iter().find(|e| e.0 == j).map(|e| e.1)
    }

    /// `V_{cycle, nu(cycle)}`, the rate that governs its exit.
    pub fn main_rate(&self) -> Option<f64> {
        self.next_equilibrium.and_then(|j| self.exit_rate(j))
    }

    /// True for a cycle carried over unchanged from the previous rank.
    pub fn is_promoted(&self) -> bool {
        self.children.len() == 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hierarchy {
    pub n: usize,
    pub cycles: Vec<Cycle>,
    /// `levels[r]` lists the ids of the rank-`r` cycles.
    pub levels: Vec<Vec<usize>>,
}

/// A cycle viewed as a set of equilibria. Copies carried to higher ranks are
/// folded into one entry.
#[derive(Debug, Clone, PartialEq)]
pub struct DistinctCycle {
    /// Id of the lowest-rank copy.
    pub id: usize,
    pub members: Vec<usize>,
    pub min_rank: usize,
    pub max_rank: usize,
    pub nu: Option<usize>,
    /// Distinct ids of the constituents, in orbit order; empty for singletons.
    pub children: Vec<usize>,
    /// Smallest distinct cycle strictly containing this one.
    pub parent: Option<usize>,
}

/// Structural fingerprint: per rank, the member sets and their `nu`.
pub type Signature = Vec<Vec<(Vec<usize>, Option<usize>)>>;

pub fn set_label(members: &[usize]) -> String {
    let inner: Vec<String> = members.iter().map(|m| (m + 1).to_string()).collect();
    format!("{{{}}}", inner.join(","))
}

impl Hierarchy {
    pub fn top_rank(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn cycle(&self, id: usize) -> &Cycle {
        &self.cycles[id]
    }

    /// Id of the rank-`rank` cycle containing equilibrium `i`.
    pub fn cycle_at(&self, rank: usize, i: usize) -> usize {
        *self.levels[rank]
            .iter()
            .find(|&&id| self.cycles[id].contains(i))
            .expect("levels partition the equilibria")
    }

    pub fn label(&self, id: usize) -> String {
        set_label(&self.cycles[id].members)
    }

    pub fn signature(&self) -> Signature {
        self.levels
            .iter()
            .map(|lvl| {
                let mut v: Vec<_> = lvl
                    .iter()
                    .map(|&id| (self.cycles[id].members.clone(), self.cycles[id].next_equilibrium))
                    .collect();
                v.sort();
                v
            })
            .collect()
    }

    /// Id of the lowest-rank copy of cycle `id`.
    pub fn canonical(&self, id: usize) -> usize {
        let mut cur = id;
        while self.cycles[cur].is_promoted() {
            cur = self.cycles[cur].children[0];
        }
        cur
    }

    /// All distinct cycles, ordered by the id of their lowest-rank copy.
    pub fn distinct_cycles(&self) -> Vec<DistinctCycle> {
        let mut out: Vec<DistinctCycle> = Vec::new();
        for c in &self.cycles {
            let canon = self.canonical(c.id);
            if let Some(d) = out.iter_mut().find(|d| d.id == canon) {
                d.max_rank = d.max_rank.max(c.rank);
                continue;
            }
            out.push(DistinctCycle {
                id: canon,
                members: c.members.clone(),
                min_rank: c.rank,
                max_rank: c.rank,
                nu: c.next_equilibrium,
                children: c.children.iter().map(|&ch| self.canonical(ch)).collect(),
                parent: None,
            });
        }
        for k in 0..out.len() {
            let size = out[k].members.len();
            let parent = out
                .iter()
                .filter(|o| o.members.len() > size && out[k].members.iter().all(|m| o.members.binary_search(m).is_ok()))
                .min_by_key(|o| o.members.len())
                .map(|o| o.id);
            out[k].parent = parent;
        }
        out
    }

    /// Exit rates recomputed for a new matrix, keeping every `nu` fixed.
    pub fn rates_at(&self, v: &VMatrixAtC) -> Vec<Vec<(usize, f64)>> {
        let mut out: Vec<Vec<(usize, f64)>> = Vec::with_capacity(self.cycles.len());
        for cyc in &self.cycles {
            let rates = if cyc.children.is_empty() {
                let i = cyc.members[0];
                (0..self.n).filter(|&j| j != i).map(|j| (j, v.get(i, j))).collect()
            } else if cyc.children.len() == 1 {
                out[cyc.children[0]].clone()
            } else {
                let parts: Vec<(&Vec<(usize, f64)>, f64)> = cyc
                    .children
                    .iter()
                    .map(|&ch| {
                        let nu = self.cycles[ch].next_equilibrium.expect("merged child has nu");
                        let r = &out[ch];
                        (r, lookup(r, nu))
                    })
                    .collect();
                merged_rates(self.n, &cyc.members, &parts)
            };
            out.push(rates);
        }
        out
    }

    /// `M_cycle = V_{cycle, nu(cycle)}` under matrix `v` with the structure held fixed.
    pub fn main_rate_at(&self, id: usize, v: &VMatrixAtC) -> Option<f64> {
        let nu = self.cycles[id].next_equilibrium?;
        Some(lookup(&self.rates_at(v)[id], nu))
    }

    /// Rank-indented text rendering.
    pub fn render(&self) -> String {
        let mut s = String::new();
        for (r, lvl) in self.levels.iter().enumerate() {
            let _ = writeln!(s, "rank {r}");
            for &id in lvl {
                let c = &self.cycles[id];
                let _ = write!(s, "{}cycle {}", "  ".repeat(r + 1), set_label(&c.members));
                if c.is_promoted() {
                    let _ = write!(s, " (carried)");
                } else if c.children.len() > 1 {
                    let orbit: Vec<String> = c.children.iter().map(|&ch| self.label(ch)).collect();
                    let _ = write!(s, " orbit {}", orbit.join(" -> "));
                }
                let _ = writeln!(s);
                let ind = "  ".repeat(r + 2);
                match (c.next_equilibrium, c.next_cycle) {
                    (Some(nu), Some(nc)) => {
                        let _ = writeln!(s, "{ind}nu = O{}  next = {}", nu + 1, self.label(nc));
                    }
                    _ => {
                        let _ = writeln!(s, "{ind}nu = none (top)");
                    }
                }
                for (j, rate) in &c.exit_rates {
                    let _ = writeln!(s, "{ind}V -> O{} = {:.12}", j + 1, rate);
                }
            }
        }
        s
    }
}

fn lookup(rates: &[(usize, f64)], j: usize) -> f64 {
    rates.iter().find(|e| e.0 == j).map(|e| e.1).expect("rate present")
}

fn merged_rates(n: usize, members: &[usize], parts: &[(&Vec<(usize, f64)>, f64)]) -> Vec<(usize, f64)> {
    let slowest = parts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    (0..n)
        .filter(|j| members.binary_search(j).is_err())
        .map(|j| {
            let best = parts
                .iter()
                .map(|(r, own)| lookup(r, j) - own)
                .fold(f64::INFINITY, f64::min);
            (j, slowest + best)
        })
        .collect()
}

fn pick_next(rates: &[(usize, f64)], label: &str, c: f64) -> Result<usize> {
    let min = rates.iter().map(|e| e.1).fold(f64::INFINITY, f64::min);
    let tied: Vec<usize> = rates
        .iter()
        .filter(|e| e.1 - min <= TIE_TOL)
        .map(|e| e.0)
        .collect();
    if tied.len() > 1 {
        return Err(Error::AssumptionAViolation {
            cycle: label.to_string(),
            tied,
            c,
        });
    }
    Ok(tied[0])
}

/// Build the full hierarchy. Fails when some argmin is not unique.
pub fn build_hierarchy(v: &VMatrixAtC) -> Result<Hierarchy> {
    let n = v.n();
    let mut cycles: Vec<Cycle> = (0..n)
        .map(|i| Cycle {
            id: i,
            rank: 0,
            members: vec![i],
            children: vec![],
            next_equilibrium: None,
            next_cycle: None,
            exit_rates: (0..n).filter(|&j| j != i).map(|j| (j, v.get(i, j))).collect(),
        })
        .collect();
    let mut levels = vec![(0..n).collect::<Vec<usize>>()];

    loop {
        let level = levels.last().unwrap().clone();
        if level.len() <= 1 {
            break;
        }
        let rank = levels.len() - 1;
        for &id in &level {
            let nu = pick_next(&cycles[id].exit_rates, &set_label(&cycles[id].members), v.c)?;
            let nc = *level.iter().find(|&&o| cycles[o].contains(nu)).unwrap();
            cycles[id].next_equilibrium = Some(nu);
            cycles[id].next_cycle = Some(nc);
        }
        // periodic orbits of the next-cycle map
        let mut on_orbit = vec![false; cycles.len()];
        let mut orbits: Vec<Vec<usize>> = Vec::new();
        for &start in &level {
            let mut seen = vec![start];
            let mut cur = cycles[start].next_cycle.unwrap();
            while !seen.contains(&cur) {
                seen.push(cur);
                cur = cycles[cur].next_cycle.unwrap();
            }
            if cur == start && !on_orbit[start] {
                // start lies on an orbit; rotate so the smallest id leads
                let pos = seen.iter().enumerate().min_by_key(|e| e.1).unwrap().0;
                let mut orbit = seen[pos..].to_vec();
                orbit.extend_from_slice(&seen[..pos]);
                for &o in &orbit {
                    on_orbit[o] = true;
                }
                orbits.push(orbit);
            }
        }
        let mut next_level = Vec::new();
        let mut pending: Vec<(Vec<usize>, Vec<usize>)> = Vec::new();
        for &id in &level {
            if let Some(orbit) = orbits.iter().find(|o| o[0] == id) {
                let mut members: Vec<usize> = orbit.iter().flat_map(|&o| cycles[o].members.clone()).collect();
                members.sort();
                pending.push((members, orbit.clone()));
            } else if !on_orbit[id] {
                pending.push((cycles[id].members.clone(), vec![id]));
            }
        }
        pending.sort();
        for (members, children) in pending {
            let exit_rates = if children.len() == 1 {
                cycles[children[0]].exit_rates.clone()
            } else {
                let parts: Vec<(&Vec<(usize, f64)>, f64)> = children
                    .iter()
                    .map(|&ch| {
                        let c = &cycles[ch];
                        (&c.exit_rates, c.main_rate().unwrap())
                    })
                    .collect();
                merged_rates(n, &members, &parts)
            };
            let id = cycles.len();
            cycles.push(Cycle {
                id,
                rank: rank + 1,
                members,
                children,
                next_equilibrium: None,
                next_cycle: None,
                exit_rates,
            });
            next_level.push(id);
        }
        levels.push(next_level);
    }
    Ok(Hierarchy { n, cycles, levels })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(n: usize, entries: &[((usize, usize), f64)]) -> VMatrixAtC {
        let mut v = vec![vec![0.0; n]; n];
        for &((i, j), x) in entries {
            v[i - 1][j - 1] = x;
        }
        VMatrixAtC::from_rows(0.0, v)
    }

    #[test]
    fn worked_three_state_example() {
        let v = table(
            3,
            &[((1, 2), 2.0), ((2, 1), 3.0), ((1, 3), 6.0), ((2, 3), 5.0), ((3, 1), 7.0), ((3, 2), 4.0)],
        );
        let h = build_hierarchy(&v).unwrap();
        assert_eq!(h.top_rank(), 2);
        let pair = h.cycle_at(1, 0);
        assert_eq!(h.cycle(pair).members, vec![0, 1]);
        assert_eq!(h.cycle(pair).exit_rate(2), Some(5.0));
        let single = h.cycle_at(1, 2);
        assert!(h.cycle(single).is_promoted());
        assert_eq!(h.cycle(single).next_equilibrium, Some(1));
        assert_eq!(h.cycle(h.levels[2][0]).members, vec![0, 1, 2]);
        assert_eq!(h.cycles[0].next_equilibrium, Some(1));
        assert_eq!(h.cycles[1].next_equilibrium, Some(0));
    }

    #[test]
    fn two_states_and_one_state() {
        let h = build_hierarchy(&table(2, &[((1, 2), 0.7), ((2, 1), 0.3)])).unwrap();
        assert_eq!(h.top_rank(), 1);
        assert_eq!(h.cycle(h.levels[1][0]).members, vec![0, 1]);
        let h = build_hierarchy(&VMatrixAtC::from_rows(0.0, vec![vec![0.0]])).unwrap();
        assert_eq!(h.top_rank(), 0);
    }

    #[test]
    fn ties_are_reported() {
        let v = table(
            3,
            &[((1, 2), 2.0), ((2, 1), 3.0), ((1, 3), 6.0), ((2, 3), 3.0), ((3, 1), 7.0), ((3, 2), 4.0)],
        );
        match build_hierarchy(&v) {
            Err(Error::AssumptionAViolation { cycle, tied, .. }) => {
                assert_eq!(cycle, "{2}");
                assert_eq!(tied, vec![0, 2]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rates_at_reproduces_build() {
        let v = table(
            3,
            &[((1, 2), 2.0), ((2, 1), 3.0), ((1, 3), 6.0), ((2, 3), 5.0), ((3, 1), 7.0), ((3, 2), 4.0)],
        );
        let h = build_hierarchy(&v).unwrap();
        let r = h.rates_at(&v);
        for c in &h.cycles {
            assert_eq!(r[c.id], c.exit_rates);
        }
        assert!(h.render().contains("V -> O3 = 5.000000000000"));
    }
}
