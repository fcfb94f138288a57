//! Inductive sweep over the special points for a hierarchy that does not
//! depend on the levels.
//!
//! Special points come in four kinds: exhaustion levels `A_cycle` (known
//! once a cycle has equilibrated), local maxima of the rate curves, crossings
//! of the curves of a cycle and a cycle in the rest of its parent, and rate
//! curves evaluated at the level `a_cycle` of a target. The first and last
//! kinds are scheduled as the sweep discovers them.

use super::{clamp_with, BreakKind, Breakpoint, CycleState, CycleStateLedger, Interval, Piece, ProfileSet, LEVEL_MATCH};
use crate::error::{Error, Result};
use crate::hierarchy::{set_label, Hierarchy};
use crate::mcurve::{MCurve, Reach, Trend};
use crate::roots::brent_with;
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

/// `|M(level) - lambda|` below this (times `1 + lambda`) counts as engaged.
const ENGAGED_TOL: f64 = 1e-8;
/// A level within this of a crossing or target level sits on it.
const AT_LEVEL_TOL: f64 = 1e-6;
/// Tracking toward a local maximum loses accuracy like a square root.
const AT_MAX_TOL: f64 = 1e-4;
const COINCIDE_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct SweepOptions {
    /// Treat coinciding special points, identical curves and tangencies as errors.
    pub strict: bool,
    pub max_events: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            strict: false,
            max_events: 10_000,
        }
    }
}

struct Node {
    label: String,
    members: Vec<usize>,
    min_rank: usize,
    max_rank: usize,
    nu: Option<usize>,
    children: Vec<usize>,
    parent: Option<usize>,
    curve: Option<Arc<MCurve>>,
}

impl Node {
    fn contains(&self, i: usize) -> bool {
        self.members.binary_search(&i).is_ok()
    }

    fn m(&self) -> &MCurve {
        self.curve.as_deref().expect("non-top cycle has a curve")
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Event {
    Exhaustion(usize),
    LocalMax(usize, f64),
    /// Unordered pair of cycles and the crossing level.
    Crossing(usize, usize, f64),
    /// `M_x(a_y)` for a cycle `x` whose `nu` lies in `y`.
    Target(usize, usize),
}

impl Event {
    fn order(&self) -> u8 {
        match self {
            Event::Exhaustion(_) => 1,
            Event::LocalMax(..) => 2,
            Event::Crossing(..) => 3,
            Event::Target(..) => 4,
        }
    }

    fn kind(&self) -> BreakKind {
        match self {
            Event::Exhaustion(_) => BreakKind::Exhaustion,
            Event::LocalMax(..) => BreakKind::LocalMax,
            Event::Crossing(..) => BreakKind::Crossing,
            Event::Target(..) => BreakKind::TargetLevel,
        }
    }
}

#[derive(Debug, Clone)]
struct Scheduled {
    lambda: f64,
    event: Event,
}

#[derive(Debug, Clone, PartialEq)]
struct State {
    s: Vec<f64>,
    types: Vec<CycleState>,
}

#[derive(Debug, Clone, Copy)]
struct Equilibrated {
    lambda: f64,
    level: f64,
}

struct Sweep<'a> {
    nodes: Vec<Node>,
    top: usize,
    g: &'a [f64],
    opts: &'a SweepOptions,
    notes: Vec<String>,
    uniform: Vec<Option<Equilibrated>>,
    /// First common level of each cycle, reported as its merge level.
    first_uniform: Vec<Option<Equilibrated>>,
    queue: Vec<Scheduled>,
    inert: Vec<(f64, String)>,
}

/// Profiles from the inductive construction over all special points.
///
/// `curves` maps the id of every distinct non-top cycle (see
/// [`Hierarchy::distinct_cycles`]) to its rate curve `M_cycle`.
pub fn general_sweep(
    h: &Hierarchy,
    curves: &BTreeMap<usize, Arc<MCurve>>,
    g: &[f64],
    opts: &SweepOptions,
) -> Result<ProfileSet> {
    if g.len() != h.n {
        return Err(Error::Config(format!("expected {} initial levels, got {}", h.n, g.len())));
    }
    let distinct = h.distinct_cycles();
    let index: BTreeMap<usize, usize> = distinct.iter().enumerate().map(|(k, d)| (d.id, k)).collect();
    let mut nodes = Vec::with_capacity(distinct.len());
    for d in &distinct {
        let curve = match d.nu {
            Some(_) => Some(
                curves
                    .get(&d.id)
                    .cloned()
                    .ok_or_else(|| Error::Config(format!("no rate curve for cycle {}", set_label(&d.members))))?,
            ),
            None => None,
        };
        nodes.push(Node {
            label: set_label(&d.members),
            members: d.members.clone(),
            min_rank: d.min_rank,
            max_rank: d.max_rank,
            nu: d.nu,
            children: d.children.iter().map(|c| index[c]).collect(),
            parent: d.parent.map(|p| index[&p]),
            curve,
        });
    }
    let top = nodes
        .iter()
        .position(|n| n.members.len() == h.n)
        .ok_or_else(|| Error::SweepInconsistency {
            lambda: 0.0,
            detail: "hierarchy has no all-inclusive cycle".into(),
        })?;
    let mut sw = Sweep {
        uniform: vec![None; nodes.len()],
        first_uniform: vec![None; nodes.len()],
        nodes,
        top,
        g,
        opts,
        notes: vec![],
        queue: vec![],
        inert: vec![],
    };
    sw.run()
}

fn toggle(t: CycleState) -> CycleState {
    match t {
        CycleState::Engaged => CycleState::Active,
        CycleState::Active => CycleState::Engaged,
        CycleState::Passive => CycleState::Passive,
    }
}

fn pieces_equivalent(a: &[Piece], b: &[Piece]) -> bool {
    let close = |x: f64, y: f64| (x - y).abs() <= LEVEL_MATCH;
    a.iter().zip(b).all(|pair| match pair {
        (Piece::Constant { value: x }, Piece::Constant { value: y }) => close(*x, *y),
        (
            Piece::FirstRoot { curve: c1, lo: l1, hi: h1, cap: k1 },
            Piece::FirstRoot { curve: c2, lo: l2, hi: h2, cap: k2 },
        )
        | (
            Piece::LastRoot { curve: c1, lo: l1, hi: h1, floor: k1 },
            Piece::LastRoot { curve: c2, lo: l2, hi: h2, floor: k2 },
        ) => c1.label == c2.label && close(*l1, *l2) && close(*h1, *h2) && close(*k1, *k2),
        _ => false,
    })
}

impl Sweep<'_> {
    fn non_top(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(move |&k| k != self.top)
    }

    fn genericity(&mut self, lambda: f64, detail: String) -> Result<()> {
        if self.opts.strict {
            Err(Error::GenericityViolation { lambda, detail })
        } else {
            self.notes.push(format!("lambda = {lambda:.12}: {detail}"));
            Ok(())
        }
    }

    fn describe(&self, e: &Event) -> String {
        let l = |k: usize| self.nodes[k].label.clone();
        match e {
            Event::Exhaustion(k) => format!("A{}", l(*k)),
            Event::LocalMax(k, c) => format!("max of M{} at c = {c:.9}", l(*k)),
            Event::Crossing(a, b, c) => format!("M{} = M{} at c = {c:.9}", l(*a), l(*b)),
            Event::Target(x, y) => format!("M{}(a{})", l(*x), l(*y)),
        }
    }

    fn run(&mut self) -> Result<ProfileSet> {
        self.static_events()?;
        let mut st = State {
            s: self.g.to_vec(),
            types: vec![CycleState::Passive; self.nodes.len()],
        };
        let g0 = self.g.to_vec();
        self.update_uniform(0.0, &g0, &mut st)?;

        let mut breakpoints = vec![Breakpoint {
            lambda: 0.0,
            kinds: vec![BreakKind::Origin],
            note: String::new(),
        }];
        let mut pieces = self.interval_pieces(&st)?;
        let mut intervals: Vec<Interval> = vec![];
        let mut ledger = CycleStateLedger {
            states: vec![self.state_map(&st)],
            q: vec![self.g.to_vec()],
            s: vec![self.g.to_vec()],
        };
        let mut lo = 0.0;
        let mut processed = 0usize;

        while let Some(next) = self.queue.iter().map(|e| e.lambda).min_by(f64::total_cmp) {
            let tol = COINCIDE_TOL * (1.0 + next.abs());
            let (mut batch, rest): (Vec<Scheduled>, Vec<Scheduled>) =
                self.queue.drain(..).partition(|e| e.lambda - next <= tol);
            self.queue = rest;
            processed += batch.len();
            if processed > self.opts.max_events {
                return Err(Error::SweepInconsistency {
                    lambda: next,
                    detail: format!("more than {} special points", self.opts.max_events),
                });
            }
            batch.sort_by_key(|e| e.event.order());
            let lambda = next;

            let q: Vec<f64> = pieces.iter().map(|p| p.eval(lambda)).collect::<Result<_>>()?;
            let prev = st.types.clone();
            let start = State { s: q.clone(), types: prev.clone() };
            let events: Vec<Event> = batch.iter().map(|b| b.event.clone()).collect();
            let (after, effective) = self.apply_batch(&events, lambda, &start)?;
            let labels: Vec<String> = events.iter().map(|e| self.describe(e)).collect();
            if events.len() > 1 {
                let detail = format!("coinciding special points: {}", labels.join(", "));
                if self.opts.strict {
                    return Err(Error::GenericityViolation { lambda, detail });
                }
                let rev: Vec<Event> = events.iter().rev().cloned().collect();
                let (alt, _) = self.apply_batch(&rev, lambda, &start)?;
                if !pieces_equivalent(&self.interval_pieces(&after)?, &self.interval_pieces(&alt)?) {
                    return Err(Error::GenericityViolation {
                        lambda,
                        detail: format!("{detail}; the outcome depends on their order"),
                    });
                }
                self.notes.push(format!("lambda = {lambda:.12}: {detail} (order-independent)"));
            }
            st = after;
            self.update_uniform(lambda, &q, &mut st)?;
            self.settle(lambda, &mut st)?;

            intervals.push(Interval {
                lo,
                hi: lambda,
                pieces: pieces.clone(),
            });
            pieces = self.interval_pieces(&st)?;
            let mut kinds: Vec<BreakKind> = vec![];
            for e in &events {
                let k = e.kind();
                if !kinds.contains(&k) {
                    kinds.push(k);
                }
            }
            let note: Vec<String> = labels
                .iter()
                .zip(&effective)
                .map(|(l, eff)| if *eff { l.clone() } else { format!("{l} (no effect)") })
                .collect();
            breakpoints.push(Breakpoint {
                lambda,
                kinds,
                note: note.join("; "),
            });
            ledger.states.push(self.state_map(&st));
            ledger.q.push(q);
            ledger.s.push(st.s.clone());
            lo = lambda;
        }
        intervals.push(Interval {
            lo,
            hi: f64::INFINITY,
            pieces,
        });

        if self.uniform[self.top].is_none() {
            let stuck = (0..self.nodes.len())
                .filter(|&k| self.uniform[k].is_none())
                .min_by_key(|&k| self.nodes[k].members.len())
                .unwrap_or(self.top);
            return Err(Error::LambdaGammaUnbounded {
                cycle: self.nodes[stuck].label.clone(),
            });
        }

        let mut out = ProfileSet {
            construction: "general-sweep".into(),
            n: self.g.len(),
            g: self.g.to_vec(),
            g_bounds: (
                self.g.iter().copied().fold(f64::INFINITY, f64::min),
                self.g.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            ),
            breakpoints,
            intervals,
            ledger,
            merge_levels: vec![],
            notes: vec![],
        };
        out.breakpoints.push(Breakpoint {
            lambda: f64::INFINITY,
            kinds: vec![BreakKind::Infinity],
            note: String::new(),
        });
        self.insert_inert(&mut out)?;
        for (k, node) in self.nodes.iter().enumerate() {
            if node.members.len() > 1 {
                if let Some(u) = self.first_uniform[k] {
                    out.merge_levels.push((format!("a{}", node.label), u.level));
                    self.notes.push(format!("cycle {} at a common level from lambda = {:.12}", node.label, u.lambda));
                }
            }
        }
        out.notes = std::mem::take(&mut self.notes);
        Ok(out)
    }

    /// An engaged cycle that already sits at the level of its `nu` has
    /// finished its transit once `lambda` passes `M` there.
    fn settle(&self, lambda: f64, st: &mut State) -> Result<()> {
        for k in self.non_top().collect::<Vec<_>>() {
            let node = &self.nodes[k];
            if st.types[k] != CycleState::Engaged || !self.is_flat(k, st) {
                continue;
            }
            let level = st.s[node.members[0]];
            let arrived = node.nu.is_some_and(|j| (st.s[j] - level).abs() <= LEVEL_MATCH);
            if arrived && node.m().eval(level)? < lambda - ENGAGED_TOL * (1.0 + lambda) {
                st.types[k] = CycleState::Active;
            }
        }
        Ok(())
    }

    fn state_map(&self, st: &State) -> Vec<(String, CycleState)> {
        self.non_top().map(|k| (self.nodes[k].label.clone(), st.types[k])).collect()
    }

    fn push(&mut self, lambda: f64, event: Event) {
        if !self.queue.iter().any(|e| e.event == event) {
            self.queue.push(Scheduled { lambda, event });
        }
    }

    fn static_events(&mut self) -> Result<()> {
        let ids: Vec<usize> = self.non_top().collect();
        for &k in &ids {
            let maxima = self.nodes[k].m().local_maxima.clone();
            for (c, m) in maxima {
                self.push(m, Event::LocalMax(k, c));
            }
        }
        let mut seen = BTreeSet::new();
        for &a in &ids {
            let Some(p) = self.nodes[a].parent else { continue };
            for &b in &ids {
                let inside = b != a
                    && self.nodes[b]
                        .members
                        .iter()
                        .all(|m| self.nodes[p].contains(*m) && !self.nodes[a].contains(*m));
                if inside && seen.insert((a.min(b), a.max(b))) {
                    self.crossings(a.min(b), a.max(b))?;
                }
            }
        }
        Ok(())
    }

    fn crossings(&mut self, a: usize, b: usize) -> Result<()> {
        let ma = self.nodes[a].curve.clone().expect("non-top cycle");
        let mb = self.nodes[b].curve.clone().expect("non-top cycle");
        let lo = ma.lo.max(mb.lo);
        let hi = ma.hi.min(mb.hi);
        if lo >= hi {
            return Ok(());
        }
        let lookup = |m: &MCurve, c: f64| -> Result<f64> {
            match m.samples.binary_search_by(|s| s.0.total_cmp(&c)) {
                Ok(k) => Ok(m.samples[k].1),
                Err(_) => m.eval(c),
            }
        };
        let mut grid: Vec<f64> = ma
            .samples
            .iter()
            .chain(&mb.samples)
            .map(|s| s.0)
            .filter(|c| *c >= lo && *c <= hi)
            .collect();
        grid.push(lo);
        grid.push(hi);
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        let d: Vec<f64> = grid
            .iter()
            .map(|&c| Ok(lookup(&ma, c)? - lookup(&mb, c)?))
            .collect::<Result<_>>()?;
        let scale = 1.0 + ma.max_sample().abs().max(mb.max_sample().abs());
        let zero = 1e-12 * scale;
        let pair = format!("M{} and M{}", self.nodes[a].label, self.nodes[b].label);
        if d.iter().all(|x| x.abs() <= zero) {
            return self.genericity(0.0, format!("{pair} coincide on [{lo}, {hi}]; their crossing set is not finite and is skipped"));
        }
        let mut found = vec![];
        let mut last: Option<(usize, f64)> = None;
        let mut touched = false;
        for (k, &x) in d.iter().enumerate() {
            if x.abs() <= zero {
                touched = true;
                continue;
            }
            if let Some((kl, xl)) = last {
                if xl.signum() != x.signum() {
                    let (l, r) = (grid[kl], grid[k]);
                    let mut err = None;
                    let mut f = |c: f64| match (ma.eval(c), mb.eval(c)) {
                        (Ok(u), Ok(v)) => u - v,
                        (Err(e), _) | (_, Err(e)) => {
                            err = Some(e);
                            0.0
                        }
                    };
                    let c = brent_with(&mut f, l, r, xl, x, 1e-14)?;
                    if let Some(e) = err {
                        return Err(e);
                    }
                    found.push(c);
                } else if touched {
                    self.genericity(0.0, format!("{pair} touch without crossing near c = {}", grid[k]))?;
                }
            }
            touched = false;
            last = Some((k, x));
        }
        for c in found {
            let level = self.nodes[a].m().eval(c)?;
            self.push(level, Event::Crossing(a, b, c));
        }
        Ok(())
    }

    /// `q` holds the left limits at `lambda`; a cycle whose common level
    /// jumps there is re-registered at its new level.
    fn update_uniform(&mut self, lambda: f64, q: &[f64], st: &mut State) -> Result<()> {
        let mut order: Vec<usize> = (0..self.nodes.len()).collect();
        order.sort_by_key(|&k| self.nodes[k].members.len());
        for k in order {
            let members = &self.nodes[k].members;
            let first = st.s[members[0]];
            let flat = members.iter().all(|&m| (st.s[m] - first).abs() <= LEVEL_MATCH);
            match (self.uniform[k].is_some(), flat) {
                (false, true) => {
                    for &m in members {
                        st.s[m] = first;
                    }
                    self.equilibrated(k, lambda, first, false, &st.s)?;
                }
                (true, true) => {
                    let old = self.uniform[k].expect("uniform").level;
                    // a new rest level: reached by a jump, or by tracking that has stopped
                    let jumped = members.iter().any(|&m| (q[m] - st.s[m]).abs() > LEVEL_MATCH);
                    let mut still = true;
                    for &m in members {
                        still = still && self.piece_for(m, st, 0)?.is_constant();
                    }
                    let resting = jumped || still;
                    if resting && (first - old).abs() > LEVEL_MATCH {
                        self.queue.retain(|e| match e.event {
                            Event::Exhaustion(x) => x != k,
                            Event::Target(_, y) => y != k,
                            _ => true,
                        });
                        self.equilibrated(k, lambda, first, true, &st.s)?;
                    }
                }
                (true, false) => {
                    self.uniform[k] = None;
                    self.queue.retain(|e| match e.event {
                        Event::Exhaustion(x) => x != k,
                        Event::Target(_, y) => y != k,
                        _ => true,
                    });
                    self.notes.push(format!(
                        "lambda = {lambda:.12}: cycle {} is no longer at a common level",
                        self.nodes[k].label
                    ));
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// With `moved`, an exhaustion level already passed is recorded without
    /// scheduling it.
    fn equilibrated(&mut self, k: usize, lambda: f64, level: f64, moved: bool, s: &[f64]) -> Result<()> {
        let tol = COINCIDE_TOL * (1.0 + lambda.abs());
        if k != self.top {
            let a = self.nodes[k].m().eval(level)?;
            if a > lambda + tol {
                self.push(a, Event::Exhaustion(k));
            } else if !moved {
                return Err(Error::GenericityViolation {
                    lambda,
                    detail: format!(
                        "cycle {} reaches the common level {level} with A = {a}, not above the current lambda",
                        self.nodes[k].label
                    ),
                });
            }
        }
        self.uniform[k] = Some(Equilibrated { lambda, level });
        if self.first_uniform[k].is_none() {
            self.first_uniform[k] = self.uniform[k];
        }
        let targets: Vec<usize> = self
            .non_top()
            .filter(|&x| {
                let n = &self.nodes[x];
                n.nu.is_some_and(|j| self.nodes[k].contains(j)) && self.nodes[k].min_rank <= n.max_rank
            })
            .collect();
        for x in targets {
            // already there: its own exhaustion covers the event
            if self.nodes[x].members.iter().all(|&o| (s[o] - level).abs() <= LEVEL_MATCH) {
                // later on this is forced by the merge itself
                if lambda == 0.0 {
                    let what = format!("{} coincides with A{}", self.describe(&Event::Target(x, k)), self.nodes[x].label);
                    self.genericity(lambda, what)?;
                }
                continue;
            }
            let l = self.nodes[x].m().eval(level)?;
            if l > lambda + tol {
                self.push(l, Event::Target(x, k));
            } else {
                let what = self.describe(&Event::Target(x, k));
                self.inert.push((l, what));
            }
        }
        Ok(())
    }

    fn apply_batch(&self, events: &[Event], lambda: f64, start: &State) -> Result<(State, Vec<bool>)> {
        let mut st = start.clone();
        let mut effective = vec![];
        for e in events {
            let before = st.clone();
            match e {
                Event::Exhaustion(k) => self.release(*k, None, lambda, start, &mut st)?,
                Event::LocalMax(k, c) => self.release(*k, Some(*c), lambda, start, &mut st)?,
                Event::Crossing(a, b, c) => self.crossing(*a, *b, *c, start, &mut st),
                Event::Target(x, y) => self.target(*x, *y, start, &mut st)?,
            }
            effective.push(st != before);
        }
        Ok((st, effective))
    }

    fn classify(&self, k: usize, level: f64, lambda: f64) -> Result<CycleState> {
        let m = self.nodes[k].m().eval(level)?;
        Ok(if (m - lambda).abs() <= ENGAGED_TOL * (1.0 + lambda) {
            CycleState::Engaged
        } else if m < lambda {
            CycleState::Active
        } else {
            CycleState::Passive
        })
    }

    /// Move every member of `k` toward `target` with the right-limit clamp.
    fn move_cycle(&self, k: usize, from: Option<f64>, target: f64, lambda: f64, st: &mut State) -> Result<()> {
        let node = &self.nodes[k];
        for &o in &node.members {
            let start = from.unwrap_or(st.s[o]);
            let mut v = clamp_with(start, target, lambda, node.m(), Reach::Open)?;
            if (v - target).abs() <= 1e-12 * (1.0 + target.abs()) {
                v = target;
            }
            st.s[o] = v;
        }
        st.types[k] = self.classify(k, st.s[node.members[0]], lambda)?;
        Ok(())
    }

    /// Exhaustion of `k`, or its release over a local maximum at `at_max`.
    fn release(&self, k: usize, at_max: Option<f64>, lambda: f64, start: &State, st: &mut State) -> Result<()> {
        if self.uniform[k].is_none() {
            return Ok(());
        }
        let node = &self.nodes[k];
        if let Some(c) = at_max {
            let on_it = node.members.iter().all(|&o| (st.s[o] - c).abs() <= AT_MAX_TOL);
            if start.types[k] != CycleState::Engaged || !on_it {
                return Ok(());
            }
        }
        let nu = node.nu.expect("non-top cycle");
        self.move_cycle(k, at_max, st.s[nu], lambda, st)?;
        self.cluster(k, lambda, &start.types, st)
    }

    /// Right limits and types in the cluster connected to `root`.
    fn cluster(&self, root: usize, lambda: f64, prev: &[CycleState], st: &mut State) -> Result<()> {
        let mut assigned = vec![false; self.g.len()];
        for &o in &self.nodes[root].members {
            assigned[o] = true;
        }
        loop {
            let cands: Vec<usize> = self
                .non_top()
                .filter(|&x| {
                    let n = &self.nodes[x];
                    prev[x] != CycleState::Passive
                        && n.members.iter().all(|&o| !assigned[o])
                        && n.nu.is_some_and(|j| assigned[j])
                })
                .collect();
            let maximal: Vec<usize> = cands
                .iter()
                .copied()
                .filter(|&x| {
                    !cands.iter().any(|&y| {
                        y != x
                            && self.nodes[y].members.len() > self.nodes[x].members.len()
                            && self.nodes[x].members.iter().all(|&o| self.nodes[y].contains(o))
                    })
                })
                .collect();
            if maximal.is_empty() {
                return Ok(());
            }
            for x in maximal {
                let nu = self.nodes[x].nu.expect("non-top cycle");
                self.move_cycle(x, None, st.s[nu], lambda, st)?;
                for &o in &self.nodes[x].members {
                    assigned[o] = true;
                }
            }
        }
    }

    /// Whether `from` reaches `to` through `nu` steps that pass only active cycles.
    fn active_chain(&self, from: usize, to: usize, prev: &[CycleState]) -> bool {
        let mut seen = vec![false; self.g.len()];
        let mut stack: Vec<usize> = self.nodes[from].nu.into_iter().collect();
        while let Some(p) = stack.pop() {
            if self.nodes[to].contains(p) {
                return true;
            }
            if std::mem::replace(&mut seen[p], true) {
                continue;
            }
            for x in self.non_top() {
                if x != from && x != to && prev[x] == CycleState::Active && self.nodes[x].contains(p) {
                    stack.extend(self.nodes[x].nu);
                }
            }
        }
        false
    }

    fn crossing(&self, a: usize, b: usize, c: f64, start: &State, st: &mut State) {
        let both: Vec<usize> = self.nodes[a].members.iter().chain(&self.nodes[b].members).copied().collect();
        if !both.iter().all(|&o| (st.s[o] - c).abs() <= AT_LEVEL_TOL) {
            return;
        }
        let prev = &start.types;
        let ab = self.active_chain(a, b, prev);
        let ba = self.active_chain(b, a, prev);
        let before = st.types.clone();
        if prev[a] == CycleState::Engaged && prev[b] == CycleState::Engaged && ab && ba {
            st.types[a] = CycleState::Active;
            st.types[b] = CycleState::Active;
        } else if ab && !ba && prev[b] != CycleState::Passive {
            st.types[a] = toggle(prev[a]);
        } else if ba && !ab && prev[a] != CycleState::Passive {
            st.types[b] = toggle(prev[b]);
        }
        if st.types != before {
            for o in both {
                st.s[o] = c;
            }
        }
    }

    fn target(&self, x: usize, y: usize, start: &State, st: &mut State) -> Result<()> {
        let Some(u) = self.uniform[y] else { return Ok(()) };
        let node = &self.nodes[x];
        let on_it = node.members.iter().all(|&o| (st.s[o] - u.level).abs() <= AT_LEVEL_TOL);
        // the target still holds the level when x gets there
        let held = node.nu.is_some_and(|j| (st.s[j] - u.level).abs() <= AT_LEVEL_TOL);
        if start.types[x] == CycleState::Engaged && on_it && held {
            st.types[x] = CycleState::Active;
            for &o in &node.members {
                st.s[o] = u.level;
            }
        }
        Ok(())
    }

    fn is_flat(&self, k: usize, st: &State) -> bool {
        let m = &self.nodes[k].members;
        m.iter().all(|&o| (st.s[o] - st.s[m[0]]).abs() <= LEVEL_MATCH)
    }

    fn interval_pieces(&self, st: &State) -> Result<Vec<Piece>> {
        (0..self.g.len()).map(|i| self.piece_for(i, st, 0)).collect()
    }

    fn piece_for(&self, i: usize, st: &State, depth: usize) -> Result<Piece> {
        let si = st.s[i];
        if depth > self.nodes.len() {
            return Err(Error::SweepInconsistency {
                lambda: f64::NAN,
                detail: format!("active cycles around O{} form a loop", i + 1),
            });
        }
        let enclosing = (0..self.nodes.len())
            .filter(|&k| self.nodes[k].contains(i) && !self.is_flat(k, st))
            .min_by_key(|&k| self.nodes[k].members.len());
        let Some(gamma) = enclosing else {
            return Ok(Piece::Constant { value: si });
        };
        let kids = &self.nodes[gamma].children;
        let first = kids
            .iter()
            .position(|&c| self.nodes[c].contains(i))
            .expect("children partition the cycle");
        let mut prev_kid = kids[first];
        for step in 0..kids.len() {
            let kid = kids[(first + step) % kids.len()];
            if step > 0 && !self.is_flat(kid, st) {
                let nu = self.nodes[prev_kid].nu.expect("child has nu");
                return self.piece_for(nu, st, depth + 1);
            }
            match st.types[kid] {
                CycleState::Active => prev_kid = kid,
                CycleState::Passive => return Ok(Piece::Constant { value: si }),
                CycleState::Engaged => return Ok(self.track(kid, si, st)),
            }
        }
        Err(Error::SweepInconsistency {
            lambda: f64::NAN,
            detail: format!("every constituent of {} is active", self.nodes[gamma].label),
        })
    }

    /// `C(from, +-inf, lambda, M)` with the direction given by the local trend.
    fn track(&self, k: usize, from: f64, st: &State) -> Piece {
        let node = &self.nodes[k];
        let curve = node.curve.clone().expect("non-top cycle");
        let toward = node.nu.map(|j| st.s[j]).unwrap_or(from);
        let dir = if toward >= from { 1.0 } else { -1.0 };
        match curve.trend_at(from, dir) {
            Trend::Increasing => Piece::FirstRoot {
                lo: from,
                hi: curve.hi,
                cap: curve.hi,
                curve,
            },
            Trend::Decreasing => Piece::LastRoot {
                lo: curve.lo,
                hi: from,
                floor: curve.lo,
                curve,
            },
            Trend::Flat => Piece::Constant { value: from },
        }
    }

    /// Special points that fall into intervals already built split them without changing anything.
    fn insert_inert(&mut self, out: &mut ProfileSet) -> Result<()> {
        let inert = std::mem::take(&mut self.inert);
        for (l, what) in inert {
            if !(l > 0.0) {
                continue;
            }
            if let Some(b) = out
                .breakpoints
                .iter_mut()
                .find(|b| (b.lambda - l).abs() <= COINCIDE_TOL * (1.0 + l))
            {
                if !b.kinds.contains(&BreakKind::TargetLevel) {
                    b.kinds.push(BreakKind::TargetLevel);
                }
                b.note = if b.note.is_empty() { format!("{what} (no effect)") } else { format!("{}; {what} (no effect)", b.note) };
                continue;
            }
            let k = out.interval_index(l);
            let values = out.values(l)?;
            let mut right = out.intervals[k].clone();
            right.lo = l;
            out.intervals[k].hi = l;
            out.intervals.insert(k + 1, right);
            out.breakpoints.insert(
                k + 1,
                Breakpoint {
                    lambda: l,
                    kinds: vec![BreakKind::TargetLevel],
                    note: format!("{what} (no effect)"),
                },
            );
            let states = out.ledger.states[k].clone();
            out.ledger.states.insert(k + 1, states);
            out.ledger.q.insert(k + 1, values.clone());
            out.ledger.s.insert(k + 1, values);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::build_hierarchy;
    use crate::quasipotential::VMatrixAtC;

    fn curve(label: &str, f: fn(f64) -> f64) -> Arc<MCurve> {
        Arc::new(MCurve::tabulate(label, 0.0, 1.0, 257, Arc::new(move |c| Ok(f(c)))).unwrap())
    }

    fn pair(m12: fn(f64) -> f64, m21: fn(f64) -> f64) -> (Hierarchy, BTreeMap<usize, Arc<MCurve>>) {
        let h = build_hierarchy(&VMatrixAtC::from_rows(0.5, vec![vec![0.0, m12(0.5)], vec![m21(0.5), 0.0]])).unwrap();
        let mut curves = BTreeMap::new();
        curves.insert(h.cycle_at(0, 0), curve("M{1}", m12));
        curves.insert(h.cycle_at(0, 1), curve("M{2}", m21));
        (h, curves)
    }

    #[test]
    fn two_wells_with_decreasing_rates() {
        let (h, curves) = pair(|c| 0.5 / (1.0 + c), |c| 0.5 / (1.0 + c));
        let p = general_sweep(&h, &curves, &[0.0, 1.0], &SweepOptions::default()).unwrap();
        for &l in &[0.1, 0.3, 0.4, 0.49, 0.6, 3.0] {
            let v = p.values(l).unwrap();
            let c2 = if l < 0.25 { 1.0 } else if l < 0.5 { 0.5 / l - 1.0 } else { 0.0 };
            assert!(v[0].abs() < 1e-12, "{l}: {v:?}");
            assert!((v[1] - c2).abs() < 1e-9, "{l}: {v:?}");
        }
        assert_eq!(p.special_points(), vec![0.25, 0.5]);
        assert!(p.breakpoints[1].kinds.contains(&BreakKind::Exhaustion));
    }

    #[test]
    fn tracks_meet_at_a_crossing() {
        // O1 climbs along an increasing rate, O2 descends along a decreasing one
        let (h, curves) = pair(|c| 0.2 + c, |c| 1.3 - c);
        let p = general_sweep(&h, &curves, &[0.0, 1.0], &SweepOptions::default()).unwrap();
        let v = p.values(0.4).unwrap();
        assert!((v[0] - 0.2).abs() < 1e-9 && (v[1] - 0.9).abs() < 1e-9, "{v:?}");
        let v = p.values(0.8).unwrap();
        assert!((v[0] - 0.55).abs() < 1e-9 && (v[1] - 0.55).abs() < 1e-9, "{v:?}");
        let cross = p.breakpoints.iter().find(|b| b.kinds.contains(&BreakKind::Crossing)).unwrap();
        assert!((cross.lambda - 0.75).abs() < 1e-9);
        let k = p.breakpoints.iter().position(|b| b.lambda == cross.lambda).unwrap();
        assert!(p.ledger.states[k].iter().all(|s| s.1 == CycleState::Active));
    }

    #[test]
    fn constant_initial_data_stays_constant() {
        let (h, curves) = pair(|c| 0.3 + 0.1 * c, |c| 0.6 - 0.1 * c);
        let p = general_sweep(&h, &curves, &[0.4, 0.4], &SweepOptions::default()).unwrap();
        assert!(p.intervals.iter().all(|iv| iv.pieces.iter().all(|pc| pc.is_constant())));
        let a: Vec<f64> = vec![0.3 + 0.04, 0.6 - 0.04];
        let pts = p.special_points();
        assert_eq!(pts.len(), 2);
        assert!(pts.iter().zip(&a).all(|(x, y)| (x - y).abs() < 1e-12));
        assert!(general_sweep(&h, &curves, &[0.4, 0.4], &SweepOptions { strict: true, ..Default::default() }).is_err());
    }
}
