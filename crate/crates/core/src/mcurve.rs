//! Rate curves `M(c)` with their monotone pieces and local extrema.
//!
//! A curve keeps a sample table (used to find the pieces) and an evaluator
//! that is called for every equation solve.

use crate::error::{Error, Result};
use crate::interp::Pchip;
use crate::roots::{brent_with, golden_max, golden_min};
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::sync::Arc;

pub type CurveFn = Arc<dyn Fn(f64) -> Result<f64> + Send + Sync>;

/// Values within this of the target count as hitting it.
pub const LEVEL_TOL: f64 = 1e-10;
const ROOT_TOL: f64 = 1e-14;
const EXTREMUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trend {
    Increasing,
    Decreasing,
    Flat,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub lo: f64,
    pub hi: f64,
    pub trend: Trend,
}

/// How the boundary of `{c : M(c) >= lambda}` is treated when scanning.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reach {
    /// `M(c) >= lambda`, the closed set in the clamp definition.
    Closed,
    /// `M(c) > lambda`; used for right limits just after a breakpoint.
    Open,
}

#[derive(Clone)]
pub struct MCurve {
    pub label: String,
    pub lo: f64,
    pub hi: f64,
    pub samples: Vec<(f64, f64)>,
    pub local_maxima: Vec<(f64, f64)>,
    pub local_minima: Vec<(f64, f64)>,
    pub segments: Vec<Segment>,
    eval: CurveFn,
}

impl std::fmt::Debug for MCurve {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MCurve")
            .field("label", &self.label)
            .field("range", &(self.lo, self.hi))
            .field("local_maxima", &self.local_maxima)
            .field("segments", &self.segments)
            .finish()
    }
}

impl MCurve {
    /// Sample `f` on `n` uniform points of `[lo, hi]` and analyse the shape.
    pub fn tabulate(label: impl Into<String>, lo: f64, hi: f64, n: usize, f: CurveFn) -> Result<MCurve> {
        let n = n.max(3);
        let grid: Vec<f64> = (0..n)
            .map(|k| if k + 1 == n { hi } else { lo + (hi - lo) * k as f64 / (n - 1) as f64 })
            .collect();
        let vals: Result<Vec<f64>> = grid.par_iter().map(|&c| f(c)).collect();
        let samples = grid.into_iter().zip(vals?).collect();
        MCurve::with_samples(label, samples, f)
    }

    /// Build from precomputed samples (for example a cache hit) and a live evaluator.
    pub fn with_samples(label: impl Into<String>, samples: Vec<(f64, f64)>, f: CurveFn) -> Result<MCurve> {
        if samples.len() < 2 {
            return Err(Error::DegenerateData("curve needs at least two samples".into()));
        }
        if samples.iter().any(|s| !s.1.is_finite()) {
            return Err(Error::DegenerateData("curve has non-finite samples".into()));
        }
        let lo = samples[0].0;
        let hi = samples.last().unwrap().0;
        let mut curve = MCurve {
            label: label.into(),
            lo,
            hi,
            samples,
            local_maxima: vec![],
            local_minima: vec![],
            segments: vec![],
            eval: f,
        };
        curve.analyse()?;
        Ok(curve)
    }

    /// Curve defined only by its table, evaluated by monotone cubic interpolation.
    pub fn interpolated(label: impl Into<String>, samples: Vec<(f64, f64)>) -> Result<MCurve> {
        let p = Pchip::new(
            samples.iter().map(|s| s.0).collect(),
            samples.iter().map(|s| s.1).collect(),
        );
        MCurve::with_samples(label, samples, Arc::new(move |c| Ok(p.eval(c))))
    }

    /// A constant curve.
    pub fn constant(label: impl Into<String>, lo: f64, hi: f64, value: f64) -> MCurve {
        MCurve::with_samples(label, vec![(lo, value), (hi, value)], Arc::new(move |_| Ok(value)))
            .expect("constant curve")
    }

    #[inline]
    pub fn eval(&self, c: f64) -> Result<f64> {
        (self.eval)(c)
    }

    pub fn evaluator(&self) -> CurveFn {
        self.eval.clone()
    }

    pub fn max_sample(&self) -> f64 {
        self.samples.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_sample(&self) -> f64 {
        self.samples.iter().map(|s| s.1).fold(f64::INFINITY, f64::min)
    }

    fn analyse(&mut self) -> Result<()> {
        let v: Vec<f64> = self.samples.iter().map(|s| s.1).collect();
        let scale = 1.0 + v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let spread = self.max_sample() - self.min_sample();
        if spread <= 1e-12 * scale {
            self.segments = vec![Segment {
                lo: self.lo,
                hi: self.hi,
                trend: Trend::Flat,
            }];
            return Ok(());
        }
        let flat = 1e-14 * scale;
        let signs: Vec<i8> = v
            .windows(2)
            .map(|w| {
                let d = w[1] - w[0];
                if d > flat {
                    1
                } else if d < -flat {
                    -1
                } else {
                    0
                }
            })
            .collect();
        // turning points: a change between consecutive non-zero slope signs
        let mut cuts: Vec<(f64, f64, bool)> = Vec::new(); // (c, M, is_max)
        let mut last: Option<(usize, i8)> = None;
        for (k, &s) in signs.iter().enumerate() {
            if s == 0 {
                continue;
            }
            if let Some((kl, sl)) = last {
                if sl != s {
                    let a = self.samples[kl].0;
                    let b = self.samples[k + 1].0;
                    let ev = self.eval.clone();
                    let mut err = None;
                    let mut f = |c: f64| match ev(c) {
                        Ok(m) => m,
                        Err(e) => {
                            err = Some(e);
                            f64::NAN
                        }
                    };
                    let (c, m) = if sl > 0 {
                        golden_max(&mut f, a, b, EXTREMUM_TOL)
                    } else {
                        golden_min(&mut f, a, b, EXTREMUM_TOL)
                    };
                    if let Some(e) = err {
                        return Err(e);
                    }
                    cuts.push((c, m, sl > 0));
                }
            }
            last = Some((k, s));
        }
        let first_sign = signs.iter().copied().find(|&s| s != 0).unwrap_or(0);
        let mut segs = Vec::new();
        let mut start = self.lo;
        let mut trend = if first_sign > 0 { Trend::Increasing } else { Trend::Decreasing };
        for &(c, m, is_max) in &cuts {
            if is_max {
                self.local_maxima.push((c, m));
            } else {
                self.local_minima.push((c, m));
            }
            if c > start {
                segs.push(Segment { lo: start, hi: c, trend });
                start = c;
            }
            trend = if is_max { Trend::Decreasing } else { Trend::Increasing };
        }
        segs.push(Segment {
            lo: start,
            hi: self.hi,
            trend,
        });
        self.segments = segs;
        Ok(())
    }

    /// Trend of the piece containing `c`; at a boundary, the piece on side `dir`.
    pub fn trend_at(&self, c: f64, dir: f64) -> Trend {
        for s in &self.segments {
            let inside = if dir >= 0.0 { c >= s.lo && c < s.hi } else { c > s.lo && c <= s.hi };
            if inside {
                return s.trend;
            }
        }
        if dir >= 0.0 {
            Trend::Flat
        } else {
            self.segments.first().map(|s| s.trend).unwrap_or(Trend::Flat)
        }
    }

    /// `M(c)`, read from the table when `c` is a grid point.
    fn value_at(&self, c: f64) -> Result<f64> {
        match self.samples.binary_search_by(|s| s.0.total_cmp(&c)) {
            Ok(k) => Ok(self.samples[k].1),
            Err(_) => self.eval(c),
        }
    }

    fn solve_in(&self, l: f64, r: f64, fl: f64, fr: f64, lambda: f64) -> Result<f64> {
        // narrow to one grid cell; l and r bound a single monotone piece
        let (mut l, mut r, mut fl, mut fr) = (l, r, fl, fr);
        let from = self.samples.partition_point(|s| s.0 <= l);
        for &(c, m) in self.samples[from..].iter().take_while(|s| s.0 < r) {
            let g = m - lambda;
            if g == 0.0 {
                return Ok(c);
            }
            if g.signum() == fl.signum() {
                (l, fl) = (c, g);
            } else {
                (r, fr) = (c, g);
                break;
            }
        }
        let mut err = None;
        let ev = &self.eval;
        let mut f = |c: f64| match ev(c) {
            Ok(m) => m - lambda,
            Err(e) => {
                err = Some(e);
                0.0
            }
        };
        let root = brent_with(&mut f, l, r, fl, fr, ROOT_TOL)?;
        if let Some(e) = err {
            return Err(e);
        }
        Ok(root)
    }

    fn pieces(&self, lo: f64, hi: f64) -> impl DoubleEndedIterator<Item = (f64, f64, Trend)> + '_ {
        self.segments.iter().filter_map(move |s| {
            let l = s.lo.max(lo);
            let r = s.hi.min(hi);
            (l <= r).then_some((l, r, s.trend))
        })
    }

    /// Smallest `c` in `[lo, hi]` with `M(c) = lambda`.
    pub fn first_root(&self, lo: f64, hi: f64, lambda: f64) -> Result<Option<f64>> {
        for (l, r, _) in self.pieces(lo, hi) {
            let fl = self.value_at(l)? - lambda;
            if fl.abs() <= LEVEL_TOL {
                return Ok(Some(l));
            }
            let fr = self.value_at(r)? - lambda;
            if fl * fr < 0.0 {
                return self.solve_in(l, r, fl, fr, lambda).map(Some);
            }
            if fr.abs() <= LEVEL_TOL {
                return Ok(Some(r));
            }
        }
        Ok(None)
    }

    /// Largest `c` in `[lo, hi]` with `M(c) = lambda`.
    pub fn last_root(&self, lo: f64, hi: f64, lambda: f64) -> Result<Option<f64>> {
        for (l, r, _) in self.pieces(lo, hi).rev() {
            let fr = self.value_at(r)? - lambda;
            if fr.abs() <= LEVEL_TOL {
                return Ok(Some(r));
            }
            let fl = self.value_at(l)? - lambda;
            if fl * fr < 0.0 {
                return self.solve_in(l, r, fl, fr, lambda).map(Some);
            }
            if fl.abs() <= LEVEL_TOL {
                return Ok(Some(l));
            }
        }
        Ok(None)
    }

    fn hits(m: f64, lambda: f64, mode: Reach) -> bool {
        match mode {
            Reach::Closed => m >= lambda - LEVEL_TOL,
            Reach::Open => m > lambda + LEVEL_TOL,
        }
    }

    // crossing of lambda between a missed end `near` and a hit end `far`
    fn crossing(&self, near: f64, far: f64, f_near: f64, f_far: f64, lambda: f64) -> Result<f64> {
        let (gn, gf) = (f_near - lambda, f_far - lambda);
        if gn >= 0.0 {
            return Ok(near);
        }
        if gf <= 0.0 {
            return Ok(far);
        }
        let (l, r, gl, gr) = if near < far { (near, far, gn, gf) } else { (far, near, gf, gn) };
        self.solve_in(l, r, gl, gr, lambda)
    }

    /// `inf { c in [from, bound] : M(c) >= lambda }` (or `>` for [`Reach::Open`]).
    pub fn reach_up(&self, from: f64, bound: f64, lambda: f64, mode: Reach) -> Result<Option<f64>> {
        for (l, r, trend) in self.pieces(from, bound) {
            if r <= from && l < r {
                continue;
            }
            let fl = self.eval(l)?;
            if Self::hits(fl, lambda, mode) {
                return Ok(Some(l));
            }
            if trend == Trend::Increasing && l < r {
                let fr = self.eval(r)?;
                if Self::hits(fr, lambda, mode) {
                    return self.crossing(l, r, fl, fr, lambda).map(Some);
                }
            }
        }
        Ok(None)
    }

    /// `sup { c in [bound, from] : M(c) >= lambda }` (or `>` for [`Reach::Open`]).
    pub fn reach_down(&self, from: f64, bound: f64, lambda: f64, mode: Reach) -> Result<Option<f64>> {
        for (l, r, trend) in self.pieces(bound, from).rev() {
            if l >= from && l < r {
                continue;
            }
            let fr = self.eval(r)?;
            if Self::hits(fr, lambda, mode) {
                return Ok(Some(r));
            }
            if trend == Trend::Decreasing && l < r {
                let fl = self.eval(l)?;
                if Self::hits(fl, lambda, mode) {
                    return self.crossing(r, l, fr, fl, lambda).map(Some);
                }
            }
        }
        Ok(None)
    }

    /// Largest value on `[lo, hi]`, from the samples refined at interior maxima.
    pub fn sup_on(&self, lo: f64, hi: f64) -> Result<f64> {
        let mut best = self.eval(lo)?.max(self.eval(hi)?);
        for &(c, m) in &self.local_maxima {
            if c > lo && c < hi {
                best = best.max(m);
            }
        }
        Ok(best)
    }

    /// Self-describing cache/table text.
    pub fn render(&self, hash: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# metastable m-curve");
        let _ = writeln!(s, "# label = {}", self.label);
        let _ = writeln!(s, "# hash = {hash}");
        let _ = writeln!(s, "# points = {}", self.samples.len());
        let _ = writeln!(s, "c\tM");
        for (c, m) in &self.samples {
            let _ = writeln!(s, "{c:.17e}\t{m:.17e}");
        }
        s
    }
}

/// Parsed cache file: label, hash and samples.
pub struct CurveTable {
    pub label: String,
    pub hash: String,
    pub samples: Vec<(f64, f64)>,
}

pub fn parse_curve_table(text: &str) -> Result<CurveTable> {
    let mut label = String::new();
    let mut hash = String::new();
    let mut samples = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if let Some(h) = line.strip_prefix('#') {
            let h = h.trim();
            if let Some(v) = h.strip_prefix("label =") {
                label = v.trim().to_string();
            } else if let Some(v) = h.strip_prefix("hash =") {
                hash = v.trim().to_string();
            }
            continue;
        }
        if line.is_empty() || line.starts_with('c') {
            continue;
        }
        let mut it = line.split_whitespace().map(str::parse::<f64>);
        match (it.next(), it.next()) {
            (Some(Ok(c)), Some(Ok(m))) => samples.push((c, m)),
            _ => return Err(Error::Config(format!("bad curve row {line:?}"))),
        }
    }
    Ok(CurveTable { label, hash, samples })
}

pub fn content_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(f: fn(f64) -> f64) -> MCurve {
        MCurve::tabulate("t", 0.0, 1.0, 512, Arc::new(move |c| Ok(f(c)))).unwrap()
    }

    #[test]
    fn decreasing_curve() {
        let m = curve(|c| 1.0 / (2.0 * (1.0 + c)));
        assert!(m.local_maxima.is_empty());
        assert_eq!(m.segments.len(), 1);
        assert_eq!(m.segments[0].trend, Trend::Decreasing);
        let r = m.first_root(0.0, 1.0, 0.4).unwrap().unwrap();
        assert!((r - 0.25).abs() < 1e-12);
        assert!(m.first_root(0.0, 1.0, 0.6).unwrap().is_none());
    }

    #[test]
    fn interior_minimum() {
        let m = curve(|c| 1.0 / (1.0 + (c - 0.5) * (c - 0.5)));
        // 1/a has a maximum where a has its minimum
        assert_eq!(m.local_maxima.len(), 1);
        assert!((m.local_maxima[0].0 - 0.5).abs() < 1e-6);
        let m = curve(|c| 1.0 + (c - 0.5) * (c - 0.5));
        assert!(m.local_maxima.is_empty());
        assert_eq!(m.local_minima.len(), 1);
        assert_eq!(m.segments.len(), 2);
        assert_eq!(m.last_root(0.0, 1.0, 1.04).unwrap().map(|r| (r - 0.7).abs() < 1e-10), Some(true));
        assert_eq!(m.first_root(0.0, 1.0, 1.04).unwrap().map(|r| (r - 0.3).abs() < 1e-10), Some(true));
    }

    #[test]
    fn constant_curve() {
        let m = MCurve::constant("k", 0.0, 1.0, 0.5);
        assert_eq!(m.segments.len(), 1);
        assert_eq!(m.segments[0].trend, Trend::Flat);
        assert_eq!(m.first_root(0.0, 1.0, 0.5).unwrap(), Some(0.0));
        assert_eq!(m.last_root(0.0, 1.0, 0.5).unwrap(), Some(1.0));
        assert_eq!(m.reach_up(0.2, 1.0, 0.5, Reach::Closed).unwrap(), Some(0.2));
        assert_eq!(m.reach_up(0.2, 1.0, 0.5, Reach::Open).unwrap(), None);
    }

    #[test]
    fn reach_semantics() {
        let m = curve(|c| 0.2 + c);
        assert!((m.reach_up(0.0, 1.0, 0.7, Reach::Closed).unwrap().unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(m.reach_up(0.0, 0.4, 0.7, Reach::Closed).unwrap(), None);
        assert_eq!(m.reach_down(1.0, 0.0, 0.7, Reach::Closed).unwrap(), Some(1.0));
        let d = curve(|c| 1.0 - c);
        assert_eq!(d.reach_up(0.2, 1.0, 0.5, Reach::Closed).unwrap(), Some(0.2));
        assert_eq!(d.reach_up(0.6, 1.0, 0.5, Reach::Closed).unwrap(), None);
        assert!((d.reach_down(1.0, 0.0, 0.5, Reach::Closed).unwrap().unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn table_roundtrip() {
        let m = curve(|c| 0.3 + c * c);
        let text = m.render("abc");
        let t = parse_curve_table(&text).unwrap();
        assert_eq!(t.hash, "abc");
        assert_eq!(t.samples, m.samples);
        let back = MCurve::interpolated("t", t.samples).unwrap();
        assert!((back.eval(0.123).unwrap() - (0.3 + 0.123f64 * 0.123)).abs() < 1e-7);
    }
}
