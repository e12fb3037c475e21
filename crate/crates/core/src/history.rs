//! Trajectory storage and history segments `u_t(theta) = u(t + theta)`.
//!
//! Segments interpolate piecewise linearly between knots. A segment may
//! borrow a prefix of a [`HistoryBuffer`] and append a few owned knots, which
//! is how the stepper builds trial segments without copying history.

use std::borrow::Cow;
use std::io::Write;

use crate::error::{Condition, Error, Result};
use crate::spectral::SpectralOperator;
use crate::state::{Representation, StateVector};

/// Relative slack on window endpoints, absorbing rounding in `t + theta`.
const TIME_SLACK: f64 = 1e-12;

fn slack(scale: f64) -> f64 {
    TIME_SLACK * scale.abs().max(1.0)
}

/// A stored state with both spectral and nodal values.
#[derive(Debug, Clone, PartialEq)]
pub struct Knot {
    pub time: f64,
    pub spectral: StateVector,
    pub nodal: StateVector,
}

impl Knot {
    pub fn new(op: &SpectralOperator, time: f64, spectral: StateVector) -> Result<Self> {
        let nodal = op.to_collocation(&spectral)?;
        Ok(Self { time, spectral, nodal })
    }

    fn lerp(a: &Knot, b: &Knot, time: f64) -> Knot {
        let w = (time - a.time) / (b.time - a.time);
        Knot {
            time,
            spectral: StateVector::lerp(&a.spectral, &b.spectral, w),
            nodal: StateVector::lerp(&a.nodal, &b.nodal, w),
        }
    }
}

fn check_increasing<'k>(mut knots: impl Iterator<Item = &'k Knot>) -> Result<()> {
    let Some(first) = knots.next() else {
        return Ok(());
    };
    let mut prev = first.time;
    for k in knots {
        if !(k.time > prev) {
            return Err(Error::invalid(format!(
                "knot times must be strictly increasing ({} after {prev})",
                k.time
            )));
        }
        prev = k.time;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Segment<'a> {
    anchor: f64,
    horizon: f64,
    base: Cow<'a, [Knot]>,
    tail: Vec<Knot>,
}

impl<'a> Segment<'a> {
    /// Segment anchored at the last knot's time.
    pub fn new(horizon: f64, knots: Vec<Knot>) -> Result<Segment<'static>> {
        Segment::from_parts(horizon, Cow::Owned(knots), Vec::new())
    }

    fn from_parts(horizon: f64, base: Cow<'a, [Knot]>, tail: Vec<Knot>) -> Result<Segment<'a>> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::invalid(format!("delay horizon must be positive, got {horizon}")));
        }
        check_increasing(base.iter().chain(tail.iter()))?;
        let first = base.first().or(tail.first()).ok_or(Error::Coverage {
            start: f64::NAN,
            end: f64::NAN,
        })?;
        let last = tail.last().or(base.last()).expect("nonempty");
        let anchor = last.time;
        if first.time > anchor - horizon + slack(anchor) {
            return Err(Error::Coverage {
                start: anchor - horizon,
                end: anchor,
            });
        }
        Ok(Segment {
            anchor,
            horizon,
            base,
            tail,
        })
    }

    /// Segment sampled from a function of `theta` at `n_knots >= 2` equispaced knots.
    pub fn from_fn(
        op: &SpectralOperator,
        anchor: f64,
        horizon: f64,
        n_knots: usize,
        mut f: impl FnMut(f64) -> StateVector,
    ) -> Result<Segment<'static>> {
        if n_knots < 2 {
            return Err(Error::invalid("a segment needs at least two knots"));
        }
        let mut knots = Vec::with_capacity(n_knots);
        for i in 0..n_knots {
            let theta = if i + 1 == n_knots {
                0.0
            } else {
                -horizon + horizon * i as f64 / (n_knots - 1) as f64
            };
            knots.push(Knot::new(op, anchor + theta, f(theta))?);
        }
        Segment::new(horizon, knots)
    }

    /// Spatially and temporally constant history.
    pub fn constant(op: &SpectralOperator, anchor: f64, horizon: f64, value: StateVector) -> Result<Segment<'static>> {
        Segment::from_fn(op, anchor, horizon, 2, |_| value.clone())
    }

    pub fn anchor(&self) -> f64 {
        self.anchor
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.base.len() + self.tail.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn knot(&self, i: usize) -> &Knot {
        let nb = self.base.len();
        if i < nb {
            &self.base[i]
        } else {
            &self.tail[i - nb]
        }
    }

    pub fn knots(&self) -> impl Iterator<Item = &Knot> + '_ {
        self.base.iter().chain(self.tail.iter())
    }

    pub fn head(&self) -> &Knot {
        self.knot(self.len() - 1)
    }

    /// Largest index whose knot time is `<= time`.
    fn floor_index(&self, time: f64) -> usize {
        let (mut lo, mut hi) = (0usize, self.len());
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.knot(mid).time <= time {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    fn check_theta(&self, theta: f64) -> Result<f64> {
        let s = slack(self.horizon);
        if !(theta >= -self.horizon - s && theta <= s) {
            return Err(Error::invalid(format!(
                "theta = {theta} outside [-{}, 0]",
                self.horizon
            )));
        }
        let time = (self.anchor + theta).max(self.knot(0).time).min(self.anchor);
        Ok(time)
    }

    fn at_time(&self, time: f64) -> Cow<'_, Knot> {
        let i = self.floor_index(time);
        let k = self.knot(i);
        if k.time == time || i + 1 == self.len() {
            Cow::Borrowed(k)
        } else {
            Cow::Owned(Knot::lerp(k, self.knot(i + 1), time))
        }
    }

    /// Spectral value at `theta in [-r, 0]`; knots are reproduced exactly.
    pub fn eval(&self, theta: f64) -> Result<StateVector> {
        let time = self.check_theta(theta)?;
        Ok(match self.at_time(time) {
            Cow::Borrowed(k) => k.spectral.clone(),
            Cow::Owned(k) => k.spectral,
        })
    }

    /// Collocation value at `theta in [-r, 0]`.
    pub fn eval_nodal(&self, theta: f64) -> Result<StateVector> {
        let time = self.check_theta(theta)?;
        Ok(match self.at_time(time) {
            Cow::Borrowed(k) => k.nodal.clone(),
            Cow::Owned(k) => k.nodal,
        })
    }

    /// Knot times strictly inside `(anchor + lo, anchor + hi)`, as offsets.
    pub(crate) fn interior_breaks(&self, lo: f64, hi: f64) -> Vec<f64> {
        let (a, b) = (self.anchor + lo, self.anchor + hi);
        let start = self.floor_index(a);
        (start..self.len())
            .map(|i| self.knot(i).time)
            .take_while(|&t| t < b)
            .filter(|&t| t > a)
            .map(|t| t - self.anchor)
            .collect()
    }

    /// Exact integral over `[lo, hi]` (offsets) of the nodal interpolant.
    pub fn integrate_nodal(&self, lo: f64, hi: f64) -> Result<StateVector> {
        if !(lo <= hi) {
            return Err(Error::invalid(format!("empty window [{lo}, {hi}]")));
        }
        let left = self.eval_nodal(lo)?;
        let mut acc = left.scaled(0.0);
        let mut prev_t = self.check_theta(lo)?;
        let mut prev = left;
        let end_t = self.check_theta(hi)?;
        let start = self.floor_index(prev_t) + 1;
        for i in start..self.len() {
            let k = self.knot(i);
            if k.time >= end_t {
                break;
            }
            let dt = k.time - prev_t;
            acc.axpy(0.5 * dt, &prev);
            acc.axpy(0.5 * dt, &k.nodal);
            prev_t = k.time;
            prev = k.nodal.clone();
        }
        let right = self.eval_nodal(hi)?;
        let dt = end_t - prev_t;
        acc.axpy(0.5 * dt, &prev);
        acc.axpy(0.5 * dt, &right);
        Ok(acc)
    }

    /// Max of the state norm over the knots in `[t - r, t]` plus the left endpoint.
    pub fn sup_norm(&self, op: &SpectralOperator) -> f64 {
        let start = self.anchor - self.horizon;
        let lo = self.floor_index(start);
        let mut best = match self.eval(-self.horizon) {
            Ok(v) => op.norm(&v),
            Err(_) => 0.0,
        };
        for i in lo..self.len() {
            let k = self.knot(i);
            if k.time >= start {
                best = best.max(op.norm(&k.spectral));
            }
        }
        best
    }

    /// View restricted to `theta in [-r, -eta_ign]`.
    pub fn truncated(&self, eta_ign: f64) -> Result<TruncatedSegment<'_, 'a>> {
        if !(eta_ign > 0.0 && eta_ign <= self.horizon + slack(self.horizon)) {
            return Err(Error::invalid(format!(
                "ignore interval must lie in (0, {}], got {eta_ign}",
                self.horizon
            )));
        }
        Ok(TruncatedSegment {
            segment: self,
            upper: -eta_ign,
        })
    }

    /// Unrestricted view; only for deliberately non-conforming functionals.
    pub fn full_view(&self) -> TruncatedSegment<'_, 'a> {
        TruncatedSegment {
            segment: self,
            upper: 0.0,
        }
    }

    pub fn to_owned_segment(&self) -> Segment<'static> {
        Segment {
            anchor: self.anchor,
            horizon: self.horizon,
            base: Cow::Owned(self.knots().cloned().collect()),
            tail: Vec::new(),
        }
    }

    /// Same knots with `extra` knots appended; the anchor moves to the last one.
    pub fn extended(&self, extra: Vec<Knot>) -> Result<Segment<'_>> {
        let base: Cow<'_, [Knot]> = match (&self.base, self.tail.is_empty()) {
            (Cow::Borrowed(b), true) => Cow::Borrowed(b),
            _ => Cow::Owned(self.knots().cloned().collect()),
        };
        Segment::from_parts(self.horizon, base, extra)
    }
}

/// A segment that rejects evaluation in `(-eta_ign, 0]`.
#[derive(Debug, Clone, Copy)]
pub struct TruncatedSegment<'s, 'a> {
    segment: &'s Segment<'a>,
    upper: f64,
}

impl<'s, 'a> TruncatedSegment<'s, 'a> {
    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn anchor(&self) -> f64 {
        self.segment.anchor
    }

    pub fn horizon(&self) -> f64 {
        self.segment.horizon
    }

    fn check(&self, theta: f64) -> Result<()> {
        if theta > self.upper + slack(self.segment.horizon) * 1e-3 {
            return Err(Error::contract(
                Condition::IgnoreInterval,
                format!(
                    "functional read theta = {theta}, but only [-{}, {}] is visible",
                    self.segment.horizon, self.upper
                ),
            ));
        }
        Ok(())
    }

    pub fn eval(&self, theta: f64) -> Result<StateVector> {
        self.check(theta)?;
        self.segment.eval(theta)
    }

    pub fn eval_nodal(&self, theta: f64) -> Result<StateVector> {
        self.check(theta)?;
        self.segment.eval_nodal(theta)
    }

    pub fn integrate_nodal(&self, lo: f64, hi: f64) -> Result<StateVector> {
        self.check(hi)?;
        self.segment.integrate_nodal(lo, hi)
    }
}

/// Sup over `[-r, 0]` of the distance between two segments with equal horizon,
/// sampled at the union of their knots.
pub fn sup_distance(a: &Segment<'_>, b: &Segment<'_>, op: &SpectralOperator) -> Result<f64> {
    let r = a.horizon.min(b.horizon);
    let mut thetas: Vec<f64> = vec![-r, 0.0];
    thetas.extend(a.interior_breaks(-r, 0.0));
    thetas.extend(b.interior_breaks(-r, 0.0));
    let mut best = 0.0_f64;
    for th in thetas {
        let d = a.eval(th)?.sub(&b.eval(th)?);
        best = best.max(op.norm(&d));
    }
    Ok(best)
}

/// Extension of `phi` by its head value: `phi_bar(s) = phi(0)` for `s > a`.
pub fn constant_extension(phi: &Segment<'_>, t: f64) -> Result<Segment<'static>> {
    let a = phi.anchor;
    if !(t >= a) {
        return Err(Error::invalid(format!("extension time {t} precedes anchor {a}")));
    }
    let mut knots: Vec<Knot> = phi.knots().cloned().collect();
    if t > a {
        let head = phi.head().clone();
        knots.push(Knot { time: t, ..head });
    }
    Segment::new(phi.horizon, knots)
}

/// Append-only trajectory store.
#[derive(Debug, Clone)]
pub struct HistoryBuffer {
    horizon: f64,
    knots: Vec<Knot>,
}

impl HistoryBuffer {
    pub fn new(horizon: f64) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::invalid(format!("delay horizon must be positive, got {horizon}")));
        }
        Ok(Self {
            horizon,
            knots: Vec::new(),
        })
    }

    pub fn from_segment(phi: &Segment<'_>) -> Self {
        Self {
            horizon: phi.horizon,
            knots: phi.knots().cloned().collect(),
        }
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn knots(&self) -> &[Knot] {
        &self.knots
    }

    pub fn last(&self) -> Option<&Knot> {
        self.knots.last()
    }

    pub fn push(&mut self, knot: Knot) -> Result<()> {
        if let Some(last) = self.knots.last() {
            if !(knot.time > last.time) {
                return Err(Error::invalid(format!(
                    "append time {} does not exceed last time {}",
                    knot.time, last.time
                )));
            }
        }
        self.knots.push(knot);
        Ok(())
    }

    pub fn covers(&self, t: f64) -> bool {
        match (self.knots.first(), self.knots.last()) {
            (Some(f), Some(l)) => f.time <= t - self.horizon + slack(t) && l.time >= t - slack(t),
            _ => false,
        }
    }

    fn floor_index(&self, time: f64) -> usize {
        self.knots.partition_point(|k| k.time <= time).saturating_sub(1)
    }

    /// The segment `u_t`, defined iff the buffer covers `[t - r, t]`.
    pub fn segment_at(&self, t: f64) -> Result<Segment<'_>> {
        if !self.covers(t) {
            return Err(Error::Coverage {
                start: t - self.horizon,
                end: t,
            });
        }
        let lo = self.floor_index(t - self.horizon);
        let hi = self.floor_index(t);
        let k = &self.knots[hi];
        if k.time == t || hi + 1 == self.knots.len() {
            Segment::from_parts(self.horizon, Cow::Borrowed(&self.knots[lo..=hi]), Vec::new())
        } else {
            let end = Knot::lerp(k, &self.knots[hi + 1], t);
            Segment::from_parts(self.horizon, Cow::Borrowed(&self.knots[lo..=hi]), vec![end])
        }
    }

    /// The segment at the last knot's time with trial knots appended.
    pub fn segment_with(&self, extra: Vec<Knot>) -> Result<Segment<'_>> {
        let last = self.knots.last().ok_or(Error::Coverage {
            start: f64::NAN,
            end: f64::NAN,
        })?;
        let anchor = extra.last().map(|k| k.time).unwrap_or(last.time);
        let lo = self.floor_index(anchor - self.horizon);
        Segment::from_parts(self.horizon, Cow::Borrowed(&self.knots[lo..]), extra)
    }

    /// Interpolated spectral value at an absolute time within the stored range.
    pub fn value_at(&self, time: f64) -> Result<StateVector> {
        let (first, last) = match (self.knots.first(), self.knots.last()) {
            (Some(f), Some(l)) => (f.time, l.time),
            _ => return Err(Error::Coverage { start: time, end: time }),
        };
        if time < first - slack(time) || time > last + slack(time) {
            return Err(Error::Coverage { start: time, end: time });
        }
        let time = time.clamp(first, last);
        let i = self.floor_index(time);
        let k = &self.knots[i];
        if k.time == time || i + 1 == self.knots.len() {
            Ok(k.spectral.clone())
        } else {
            Ok(Knot::lerp(k, &self.knots[i + 1], time).spectral)
        }
    }

    /// CSV with header `time,species,mode_or_point,value`, one row per
    /// coefficient (spectral) or node value (collocation) per knot.
    pub fn write_csv<W: Write>(&self, out: W, repr: Representation, preamble: Option<&str>) -> Result<()> {
        let mut out = out;
        if let Some(line) = preamble {
            writeln!(out, "# {line}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time", "species", "mode_or_point", "value"])?;
        for k in &self.knots {
            let v = match repr {
                Representation::Spectral => &k.spectral,
                Representation::Collocation => &k.nodal,
            };
            for s in 0..v.n_species() {
                for (j, x) in v.species(s).iter().enumerate() {
                    w.write_record(&[k.time.to_string(), s.to_string(), j.to_string(), x.to_string()])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}
