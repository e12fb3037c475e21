//! The delay functional `F(t, psi) = int_{-r}^0 p(t, psi(theta)) dg(theta, t, psi)`.
//!
//! The measure `g` is a finite list of atoms at `theta = -eta_k` with jumps
//! `h_k`, plus an optional absolutely continuous density `xi`. Atom
//! functionals only ever see a [`TruncatedSegment`], so they cannot read the
//! most recent `eta_ign(t)` of history unless an atom is explicitly flagged to
//! bypass the restriction (used to test the structural checks).

use rand::{Rng, RngExt};
use serde::{Deserialize, Serialize};

use crate::error::{Condition, Error, Result};
use crate::history::{sup_distance, Knot, Segment, TruncatedSegment};
use crate::profile::{Modulus, Profile, Table};
use crate::quadrature::{breakpoints, gauss_legendre, GaussRule, DEFAULT_NODES};
use crate::spectral::SpectralOperator;
use crate::state::{Representation, StateVector};

fn default_nodes() -> usize {
    DEFAULT_NODES
}

/// Output nonlinearity applied to a window mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Squash {
    Identity,
    /// Clamp to `[-c, c]`.
    Clip(f64),
    Tanh,
    /// `max(0, x - c)`.
    Excess(f64),
}

impl Squash {
    fn apply(&self, x: f64) -> f64 {
        match self {
            Squash::Identity => x,
            Squash::Clip(c) => x.clamp(-c, *c),
            Squash::Tanh => x.tanh(),
            Squash::Excess(c) => (x - c).max(0.0),
        }
    }
}

/// `base + scale * squash(mean)`, where `mean` averages one species over the
/// collocation nodes and over a window of `theta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateMean {
    /// `[lo, hi]` in `theta`; defaults to `[-r, -eta_ign(t)]`.
    #[serde(default)]
    pub window: Option<[f64; 2]>,
    #[serde(default)]
    pub species: usize,
    pub base: f64,
    pub scale: f64,
    pub squash: Squash,
}

fn spatial_mean(v: &StateVector, species: usize) -> Result<f64> {
    if species >= v.n_species() {
        return Err(Error::invalid(format!(
            "species index {species} out of range ({} species)",
            v.n_species()
        )));
    }
    let s = v.species(species);
    Ok(s.iter().sum::<f64>() / s.len() as f64)
}

impl StateMean {
    fn window_mean(&self, view: &TruncatedSegment<'_, '_>) -> Result<f64> {
        let [lo, hi] = self.window.unwrap_or([-view.horizon(), view.upper()]);
        if hi - lo <= 0.0 {
            return spatial_mean(&view.eval_nodal(lo)?, self.species);
        }
        let integral = view.integrate_nodal(lo, hi)?;
        Ok(spatial_mean(&integral, self.species)? / (hi - lo))
    }

    fn eval(&self, view: &TruncatedSegment<'_, '_>) -> Result<f64> {
        Ok(self.base + self.scale * self.squash.apply(self.window_mean(view)?))
    }

    fn validate(&self) -> Result<()> {
        if let Some([lo, hi]) = self.window {
            if !(lo <= hi && hi <= 0.0) {
                return Err(Error::invalid(format!(
                    "state_mean window [{lo}, {hi}] must satisfy lo <= hi <= 0"
                )));
            }
        }
        if !(self.base.is_finite() && self.scale.is_finite()) {
            return Err(Error::invalid("state_mean base and scale must be finite"));
        }
        Ok(())
    }
}

/// A scalar functional of `(t, truncated history)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AtomFunctional {
    Constant(f64),
    TimeDependent(Table),
    StateMean(StateMean),
    /// `base + scale * mean_x psi_species(0, x)`. Reading `theta = 0` is only
    /// possible on an atom flagged `full_segment`.
    HeadValue {
        species: usize,
        base: f64,
        scale: f64,
    },
}

impl AtomFunctional {
    pub fn eval(&self, t: f64, view: &TruncatedSegment<'_, '_>) -> Result<f64> {
        match self {
            AtomFunctional::Constant(c) => Ok(*c),
            AtomFunctional::TimeDependent(tab) => Ok(tab.eval(t)),
            AtomFunctional::StateMean(m) => m.eval(view),
            AtomFunctional::HeadValue { species, base, scale } => {
                Ok(base + scale * spatial_mean(&view.eval_nodal(0.0)?, *species)?)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            AtomFunctional::Constant(c) if !c.is_finite() => Err(Error::invalid("atom constant must be finite")),
            AtomFunctional::Constant(_) | AtomFunctional::HeadValue { .. } => Ok(()),
            AtomFunctional::TimeDependent(t) => t.validate(),
            AtomFunctional::StateMean(m) => m.validate(),
        }
    }

    /// Upper bound of `|value|` when it is independent of the state.
    fn constant_bound(&self) -> Option<f64> {
        match self {
            AtomFunctional::Constant(c) => Some(c.abs()),
            AtomFunctional::TimeDependent(t) => Some(t.y.iter().fold(0.0, |m, v| m.max(v.abs()))),
            _ => None,
        }
    }
}

/// Jump of size `h(t, psi)` at `theta = -eta(t, psi)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayAtom {
    pub eta: AtomFunctional,
    pub weight: AtomFunctional,
    /// Let the functionals read the whole segment. Breaks the ignore-interval
    /// condition on purpose; exists only to exercise the structural check.
    #[serde(default)]
    pub full_segment: bool,
}

impl DelayAtom {
    pub fn constant(eta: f64, weight: f64) -> Self {
        Self {
            eta: AtomFunctional::Constant(eta),
            weight: AtomFunctional::Constant(weight),
            full_segment: false,
        }
    }

    fn view<'s, 'a>(&self, psi: &'s Segment<'a>, eta_ign: f64) -> Result<TruncatedSegment<'s, 'a>> {
        if self.full_segment {
            Ok(psi.full_view())
        } else {
            psi.truncated(eta_ign)
        }
    }
}

/// Density `xi(theta, t, psi) = s(t, psi) * f(theta)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityKind {
    Constant(f64),
    /// `xi = table(theta)`.
    Table(Table),
    /// `xi = level * (1 + amplitude * sin(frequency * t + phase))`.
    TimeModulated {
        level: f64,
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
    /// `xi = level * (1 + gain * tanh(window mean of one species))`.
    StateModulated {
        level: f64,
        gain: f64,
        #[serde(default)]
        window: Option<[f64; 2]>,
        #[serde(default)]
        species: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayDensity {
    pub kind: DensityKind,
    /// Declared bound on `int |xi|`.
    pub variation_hint: f64,
    /// Let the density read the whole segment instead of the truncated one.
    #[serde(default)]
    pub full_segment: bool,
}

/// A density frozen at one `(t, psi)`.
#[derive(Debug, Clone, Copy)]
pub struct PreparedDensity<'m> {
    pub scale: f64,
    pub shape: Option<&'m Table>,
}

impl<'m> PreparedDensity<'m> {
    pub fn eval(&self, theta: f64) -> f64 {
        match self.shape {
            Some(t) => self.scale * t.eval(theta),
            None => self.scale,
        }
    }

    /// Kinks and sign changes of `f` inside `(lo, hi)`.
    fn breaks(&self, lo: f64, hi: f64) -> Vec<f64> {
        let Some(t) = self.shape else {
            return Vec::new();
        };
        let mut b: Vec<f64> = t.x.clone();
        for i in 0..t.x.len().saturating_sub(1) {
            let (y0, y1) = (t.y[i], t.y[i + 1]);
            if y0 * y1 < 0.0 {
                b.push(t.x[i] + (t.x[i + 1] - t.x[i]) * y0 / (y0 - y1));
            }
        }
        b.retain(|x| *x > lo && *x < hi);
        b
    }
}

impl DelayDensity {
    pub fn constant(value: f64) -> Self {
        Self {
            kind: DensityKind::Constant(value),
            variation_hint: value.abs(),
            full_segment: false,
        }
    }

    pub fn prepare(&self, t: f64, view: &TruncatedSegment<'_, '_>) -> Result<PreparedDensity<'_>> {
        let (scale, shape) = match &self.kind {
            DensityKind::Constant(c) => (*c, None),
            DensityKind::Table(tab) => (1.0, Some(tab)),
            DensityKind::TimeModulated {
                level,
                amplitude,
                frequency,
                phase,
            } => (level * (1.0 + amplitude * (frequency * t + phase).sin()), None),
            DensityKind::StateModulated {
                level,
                gain,
                window,
                species,
            } => {
                let mean = StateMean {
                    window: *window,
                    species: *species,
                    base: 0.0,
                    scale: 1.0,
                    squash: Squash::Tanh,
                };
                (level * (1.0 + gain * mean.eval(view)?), None)
            }
        };
        Ok(PreparedDensity { scale, shape })
    }

    fn view<'s, 'a>(&self, psi: &'s Segment<'a>, eta_ign: f64) -> Result<TruncatedSegment<'s, 'a>> {
        if self.full_segment {
            Ok(psi.full_view())
        } else {
            psi.truncated(eta_ign)
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.variation_hint >= 0.0) {
            return Err(Error::invalid("density variation_hint must be >= 0"));
        }
        match &self.kind {
            DensityKind::Table(t) => t.validate(),
            DensityKind::StateModulated {
                window: Some([lo, hi]), ..
            } if !(lo <= hi && *hi <= 0.0) => Err(Error::invalid("density window must satisfy lo <= hi <= 0")),
            _ => Ok(()),
        }
    }
}

/// The generating function `g` with its declared constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayMeasure {
    #[serde(default)]
    pub atoms: Vec<DelayAtom>,
    #[serde(default)]
    pub density: Option<DelayDensity>,
    /// Bound on the total variation.
    pub m_vg: f64,
    pub eta_ign: Profile,
    /// Lipschitz constant of the density's variation in `(t, psi)`.
    #[serde(default)]
    pub l_vgc: f64,
    /// Gauss-Legendre nodes per knot interval.
    #[serde(default = "default_nodes")]
    pub quad_nodes: usize,
}

impl DelayMeasure {
    pub fn atoms_only(atoms: Vec<DelayAtom>, m_vg: f64, eta_ign: f64) -> Self {
        Self {
            atoms,
            density: None,
            m_vg,
            eta_ign: Profile::Constant(eta_ign),
            l_vgc: 0.0,
            quad_nodes: DEFAULT_NODES,
        }
    }

    pub fn density_only(density: DelayDensity, m_vg: f64, eta_ign: f64, l_vgc: f64) -> Self {
        Self {
            atoms: Vec::new(),
            density: Some(density),
            m_vg,
            eta_ign: Profile::Constant(eta_ign),
            l_vgc,
            quad_nodes: DEFAULT_NODES,
        }
    }

    pub fn validate(&self, horizon: f64) -> Result<()> {
        if !(self.m_vg > 0.0 && self.m_vg.is_finite()) {
            return Err(Error::invalid(format!("m_vg must be positive, got {}", self.m_vg)));
        }
        if !(self.l_vgc >= 0.0 && self.l_vgc.is_finite()) {
            return Err(Error::invalid(format!("l_vgc must be >= 0, got {}", self.l_vgc)));
        }
        if self.quad_nodes == 0 {
            return Err(Error::invalid("quad_nodes must be positive"));
        }
        self.eta_ign.validate()?;
        let floor = match &self.eta_ign {
            Profile::Constant(c) => *c,
            Profile::Table(t) => t.min(),
        };
        if !(floor > 0.0) {
            return Err(Error::invalid(format!(
                "eta_ign must be strictly positive, got minimum {floor}"
            )));
        }
        if floor > horizon {
            return Err(Error::invalid(format!(
                "eta_ign ({floor}) exceeds the delay horizon {horizon}"
            )));
        }
        for a in &self.atoms {
            a.eta.validate()?;
            a.weight.validate()?;
        }
        if let Some(d) = &self.density {
            d.validate()?;
        }
        Ok(())
    }

    pub fn eta_ign_at(&self, t: f64) -> Result<f64> {
        let e = self.eta_ign.eval(t);
        if !(e > 0.0) {
            return Err(Error::contract(
                Condition::IgnoreInterval,
                format!("eta_ign({t}) = {e} is not positive"),
            ));
        }
        Ok(e)
    }

    fn rule(&self) -> std::sync::Arc<GaussRule> {
        gauss_legendre(self.quad_nodes)
    }
}

/// The inner map `p`, applied pointwise at the collocation nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointMap {
    Identity,
    /// `p(w) = p1 * w * exp(-w)` per species.
    Nicholson {
        p1: f64,
    },
    /// Pick out one species.
    Select {
        species: usize,
    },
}

impl PointMap {
    pub fn out_species(&self, n_in: usize) -> usize {
        match self {
            PointMap::Select { .. } => 1,
            _ => n_in,
        }
    }

    /// Pointwise Lipschitz constant `L_p` (on `w >= 0` for Nicholson).
    pub fn lipschitz(&self) -> f64 {
        match self {
            PointMap::Nicholson { p1 } => p1.abs(),
            _ => 1.0,
        }
    }

    /// Pointwise growth constants `(C1, C2)` with `|p(w)| <= C1 |w| + C2`
    /// (on `w >= 0` for Nicholson).
    pub fn growth(&self) -> (f64, f64) {
        match self {
            PointMap::Nicholson { p1 } => (0.0, p1.abs() / std::f64::consts::E),
            _ => (1.0, 0.0),
        }
    }

    /// `(C1, C2)` for the state norm: `||p(u)|| <= C1 ||u|| + C2`.
    pub fn norm_growth(&self, op: &SpectralOperator, n_in: usize) -> (f64, f64) {
        let (c1, c2) = self.growth();
        (c1, c2 * op.unit_constant_norm(self.out_species(n_in)))
    }

    pub fn validate(&self, n_species: usize) -> Result<()> {
        match self {
            PointMap::Select { species } if *species >= n_species => Err(Error::invalid(format!(
                "point map selects species {species} but the model has {n_species}"
            ))),
            PointMap::Nicholson { p1 } if !p1.is_finite() => Err(Error::invalid("p1 must be finite")),
            _ => Ok(()),
        }
    }

    /// Species-major input with `n_points` per species into `out`.
    pub fn apply_slice(&self, n_points: usize, input: &[f64], out: &mut [f64]) {
        match self {
            PointMap::Identity => out.copy_from_slice(input),
            PointMap::Nicholson { p1 } => {
                for (o, w) in out.iter_mut().zip(input) {
                    *o = p1 * w * (-w).exp();
                }
            }
            PointMap::Select { species } => {
                out.copy_from_slice(&input[species * n_points..(species + 1) * n_points]);
            }
        }
    }

    pub fn apply(&self, _t: f64, u: &StateVector) -> Result<StateVector> {
        if u.representation() != Representation::Collocation {
            return Err(Error::invalid("point map expects collocation values"));
        }
        self.validate(u.n_species())?;
        let n = u.n_points();
        let mut out = StateVector::zeros(self.out_species(u.n_species()), n, Representation::Collocation);
        self.apply_slice(n, u.values(), out.values_mut());
        Ok(out)
    }
}

fn zero_output(p: &PointMap, psi: &Segment<'_>) -> StateVector {
    let head = &psi.head().nodal;
    StateVector::zeros(
        p.out_species(head.n_species()),
        head.n_points(),
        Representation::Collocation,
    )
}

/// Atom positions and weights at `(t, psi)`, range-checked.
pub fn atom_values(m: &DelayMeasure, t: f64, psi: &Segment<'_>) -> Result<Vec<(f64, f64)>> {
    let r = psi.horizon();
    let eta_ign = m.eta_ign_at(t)?;
    let s = 1e-12 * r.max(1.0);
    m.atoms
        .iter()
        .enumerate()
        .map(|(k, atom)| {
            let view = atom.view(psi, eta_ign)?;
            let eta = atom.eta.eval(t, &view)?;
            if !(eta >= eta_ign - s && eta <= r + s) {
                return Err(Error::contract(
                    Condition::DelayRange,
                    format!("atom {k} at t = {t}: eta = {eta} outside [{eta_ign}, {r}]"),
                ));
            }
            let h = atom.weight.eval(t, &view)?;
            if !h.is_finite() {
                return Err(Error::invalid(format!("atom {k} weight is not finite at t = {t}")));
            }
            Ok((eta.clamp(eta_ign.min(r), r), h))
        })
        .collect()
}

/// Discrete part `F_d = sum_k h_k p(t, psi(-eta_k))`, at the collocation nodes.
pub fn eval_fd(m: &DelayMeasure, p: &PointMap, t: f64, psi: &Segment<'_>) -> Result<StateVector> {
    let mut acc = zero_output(p, psi);
    for (eta, h) in atom_values(m, t, psi)? {
        let v = p.apply(t, &psi.eval_nodal(-eta)?)?;
        acc.axpy(h, &v);
    }
    Ok(acc)
}

/// Continuous part `F_c = int p(t, psi(theta)) xi(theta) dtheta` by composite
/// Gauss-Legendre on the knot intervals of `psi`.
pub fn eval_fc(m: &DelayMeasure, p: &PointMap, t: f64, psi: &Segment<'_>) -> Result<StateVector> {
    let mut acc = zero_output(p, psi);
    let Some(density) = &m.density else {
        return Ok(acc);
    };
    let r = psi.horizon();
    let eta_ign = m.eta_ign_at(t)?;
    let view = density.view(psi, eta_ign)?;
    let xi = density.prepare(t, &view)?;
    let mut interior = psi.interior_breaks(-r, 0.0);
    interior.extend(xi.breaks(-r, 0.0));
    let breaks = breakpoints(-r, 0.0, interior);
    let rule = m.rule();

    let head = &psi.head().nodal;
    let n_points = head.n_points();
    p.validate(head.n_species())?;
    let mut scratch = vec![0.0; head.values().len()];
    let mut mapped = vec![0.0; acc.values().len()];
    let mut left = psi.eval_nodal(breaks[0])?;
    for w in breaks.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let right = psi.eval_nodal(hi)?;
        for (theta, wt) in rule.on(lo, hi) {
            let s = (theta - lo) / (hi - lo);
            for ((x, a), b) in scratch.iter_mut().zip(left.values()).zip(right.values()) {
                *x = a + s * (b - a);
            }
            p.apply_slice(n_points, &scratch, &mut mapped);
            let c = wt * xi.eval(theta);
            for (o, v) in acc.values_mut().iter_mut().zip(&mapped) {
                *o += c * v;
            }
        }
        left = right;
    }
    Ok(acc)
}

/// `(F_c, F_d)`.
pub fn split_f(m: &DelayMeasure, p: &PointMap, t: f64, psi: &Segment<'_>) -> Result<(StateVector, StateVector)> {
    Ok((eval_fc(m, p, t, psi)?, eval_fd(m, p, t, psi)?))
}

/// `F = F_c + F_d` at the collocation nodes.
pub fn eval_f(m: &DelayMeasure, p: &PointMap, t: f64, psi: &Segment<'_>) -> Result<StateVector> {
    let (fc, fd) = split_f(m, p, t, psi)?;
    Ok(fc.add(&fd))
}

fn density_abs_integral(m: &DelayMeasure, xi: &PreparedDensity<'_>, r: f64) -> f64 {
    let breaks = breakpoints(-r, 0.0, xi.breaks(-r, 0.0));
    m.rule().composite(&breaks, |th| xi.eval(th).abs())
}

/// Total variation `sum |h_k| + int |xi|` at `(t, psi)`.
pub fn total_variation(m: &DelayMeasure, t: f64, psi: &Segment<'_>) -> Result<f64> {
    let atoms: f64 = atom_values(m, t, psi)?.iter().map(|(_, h)| h.abs()).sum();
    let dens = match &m.density {
        Some(d) => {
            let view = d.view(psi, m.eta_ign_at(t)?)?;
            density_abs_integral(m, &d.prepare(t, &view)?, psi.horizon())
        }
        None => 0.0,
    };
    Ok(atoms + dens)
}

#[derive(Debug, Clone)]
pub struct VariationProbe {
    pub time: f64,
    pub variation: std::result::Result<f64, String>,
}

#[derive(Debug, Clone)]
pub struct VariationReport {
    pub m_vg: f64,
    pub probes: Vec<VariationProbe>,
}

impl VariationReport {
    pub fn max_variation(&self) -> f64 {
        self.probes
            .iter()
            .filter_map(|p| p.variation.as_ref().ok())
            .fold(0.0, |m, v| m.max(*v))
    }

    /// Probes whose variation exceeds `M_Vg` or could not be evaluated.
    pub fn flagged(&self) -> Vec<usize> {
        self.probes
            .iter()
            .enumerate()
            .filter(|(_, p)| match &p.variation {
                Ok(v) => *v > self.m_vg * (1.0 + 1e-12),
                Err(_) => true,
            })
            .map(|(i, _)| i)
            .collect()
    }

    pub fn passed(&self) -> bool {
        !self.probes.is_empty() && self.flagged().is_empty()
    }
}

/// Sampled bounded-variation check.
pub fn check_a1(m: &DelayMeasure, probes: &[(f64, Segment<'_>)]) -> VariationReport {
    VariationReport {
        m_vg: m.m_vg,
        probes: probes
            .iter()
            .map(|(t, psi)| VariationProbe {
                time: *t,
                variation: total_variation(m, *t, psi).map_err(|e| e.to_string()),
            })
            .collect(),
    }
}

#[derive(Debug, Clone)]
pub struct LipschitzPair {
    pub variation: f64,
    pub bound: f64,
}

#[derive(Debug, Clone)]
pub struct LipschitzReport {
    pub l_vgc: f64,
    /// No density: the condition holds vacuously.
    pub vacuous: bool,
    pub pairs: Vec<LipschitzPair>,
}

impl LipschitzReport {
    pub fn flagged(&self) -> Vec<usize> {
        self.pairs
            .iter()
            .enumerate()
            .filter(|(_, p)| p.variation > p.bound + 1e-12)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn passed(&self) -> bool {
        self.flagged().is_empty()
    }
}

/// A probe time with its history.
pub type Probe<'a> = (f64, Segment<'a>);

/// Sampled Lipschitz check of the density's variation,
/// `int |xi(., t1, psi1) - xi(., t2, psi2)| <= L_Vgc (|t1 - t2| + ||psi1 - psi2||_C)`.
pub fn check_a4(m: &DelayMeasure, op: &SpectralOperator, pairs: &[(Probe<'_>, Probe<'_>)]) -> Result<LipschitzReport> {
    let Some(density) = &m.density else {
        return Ok(LipschitzReport {
            l_vgc: m.l_vgc,
            vacuous: true,
            pairs: Vec::new(),
        });
    };
    let rule = m.rule();
    let mut out = Vec::with_capacity(pairs.len());
    for ((t1, psi1), (t2, psi2)) in pairs {
        let r = psi1.horizon().min(psi2.horizon());
        let v1 = density.view(psi1, m.eta_ign_at(*t1)?)?;
        let v2 = density.view(psi2, m.eta_ign_at(*t2)?)?;
        let x1 = density.prepare(*t1, &v1)?;
        let x2 = density.prepare(*t2, &v2)?;
        let mut interior = x1.breaks(-r, 0.0);
        interior.extend(x2.breaks(-r, 0.0));
        let breaks = breakpoints(-r, 0.0, interior);
        let variation = rule.composite(&breaks, |th| (x1.eval(th) - x2.eval(th)).abs());
        let bound = m.l_vgc * ((t1 - t2).abs() + sup_distance(psi1, psi2, op)?);
        out.push(LipschitzPair { variation, bound });
    }
    Ok(LipschitzReport {
        l_vgc: m.l_vgc,
        vacuous: false,
        pairs: out,
    })
}

/// Which atom functional disagreed under a mutation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AtomQuantity {
    Eta,
    Weight,
}

#[derive(Debug, Clone)]
pub struct StructuralViolation {
    pub mutation: usize,
    pub atom: usize,
    pub quantity: AtomQuantity,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct StructuralReport {
    pub mutations: usize,
    pub atoms: usize,
    pub violations: Vec<StructuralViolation>,
}

impl StructuralReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// `psi` with a knot inserted at `theta = cut` (no change to its values).
fn refined_at(psi: &Segment<'_>, cut: f64) -> Result<Segment<'static>> {
    let time = psi.anchor() + cut;
    let mut knots: Vec<Knot> = psi.knots().cloned().collect();
    if !knots.iter().any(|k| k.time == time) && time > knots[0].time {
        let knot = Knot {
            time,
            spectral: psi.eval(cut)?,
            nodal: psi.eval_nodal(cut)?,
        };
        let pos = knots.partition_point(|k| k.time < time);
        knots.insert(pos, knot);
    }
    Segment::new(psi.horizon(), knots)
}

/// Random state with coefficients uniform in `[-amp, amp]`.
pub fn random_state(op: &SpectralOperator, amp: f64, rng: &mut impl Rng) -> StateVector {
    let mut v = op.zeros();
    for c in v.values_mut() {
        *c = rng.random_range(-amp..=amp);
    }
    v
}

/// `psi` with its values on `(t - eta_ign, t]` replaced by random data.
/// Knots at or before `t - eta_ign` are kept bit for bit.
pub fn mutate_recent(
    op: &SpectralOperator,
    psi: &Segment<'_>,
    eta_ign: f64,
    rng: &mut impl Rng,
) -> Result<Segment<'static>> {
    let cut = psi.anchor() - eta_ign;
    let amp = 1.0 + psi.knots().fold(0.0_f64, |m, k| m.max(k.spectral.max_abs()));
    let mut knots: Vec<Knot> = psi.knots().take_while(|k| k.time <= cut).cloned().collect();
    let n_extra = rng.random_range(0..4usize);
    let mut times: Vec<f64> = (0..n_extra)
        .map(|_| cut + (psi.anchor() - cut) * rng.random_range(0.05..0.95))
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    times.push(psi.anchor());
    for time in times {
        if knots.last().is_some_and(|k| k.time >= time) {
            continue;
        }
        knots.push(Knot::new(op, time, random_state(op, amp, rng))?);
    }
    Segment::new(psi.horizon(), knots)
}

/// Randomly rewrites `psi` on `(-eta_ign(t), 0]` and requires that every
/// atom's `eta` and `h` stay bit-identical.
pub fn check_a5_structural(
    m: &DelayMeasure,
    op: &SpectralOperator,
    t: f64,
    psi: &Segment<'_>,
    n_mutations: usize,
    rng: &mut impl Rng,
) -> Result<StructuralReport> {
    if n_mutations == 0 {
        return Err(Error::invalid("n_mutations must be >= 1"));
    }
    let mut report = StructuralReport {
        mutations: n_mutations,
        atoms: m.atoms.len(),
        violations: Vec::new(),
    };
    if m.atoms.is_empty() {
        return Ok(report);
    }
    let eta_ign = m.eta_ign_at(t)?.min(psi.horizon());
    let base = refined_at(psi, -eta_ign)?;
    let values = |seg: &Segment<'_>, atom: &DelayAtom| -> [std::result::Result<f64, String>; 2] {
        let view = match atom.view(seg, eta_ign) {
            Ok(v) => v,
            Err(e) => return [Err(e.to_string()), Err(e.to_string())],
        };
        [
            atom.eta.eval(t, &view).map_err(|e| e.to_string()),
            atom.weight.eval(t, &view).map_err(|e| e.to_string()),
        ]
    };
    let reference: Vec<_> = m.atoms.iter().map(|a| values(&base, a)).collect();
    for (k, refs) in reference.iter().enumerate() {
        for (q, r) in refs.iter().enumerate() {
            if let Err(e) = r {
                report.violations.push(StructuralViolation {
                    mutation: 0,
                    atom: k,
                    quantity: if q == 0 {
                        AtomQuantity::Eta
                    } else {
                        AtomQuantity::Weight
                    },
                    detail: format!("unmutated evaluation failed: {e}"),
                });
            }
        }
    }
    if !report.violations.is_empty() {
        return Ok(report);
    }
    for i in 0..n_mutations {
        let mutated = mutate_recent(op, &base, eta_ign, rng)?;
        for (k, atom) in m.atoms.iter().enumerate() {
            let got = values(&mutated, atom);
            for q in 0..2 {
                let same = matches!((&reference[k][q], &got[q]), (Ok(a), Ok(b)) if a.to_bits() == b.to_bits());
                if !same {
                    report.violations.push(StructuralViolation {
                        mutation: i + 1,
                        atom: k,
                        quantity: if q == 0 {
                            AtomQuantity::Eta
                        } else {
                            AtomQuantity::Weight
                        },
                        detail: format!("{:?} became {:?}", reference[k][q], got[q]),
                    });
                }
            }
        }
    }
    Ok(report)
}

/// Moduli of continuity for the single-atom perturbation estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationModuli {
    /// `|eta(t, psi1) - eta(t, psi2)| <= omega_eta(delta)`.
    pub eta: Modulus,
    /// `|h(t, psi1) - h(t, psi2)| <= omega_h(delta)`.
    pub weight: Modulus,
    /// Modulus of continuity in time of `psi1`.
    pub history: Modulus,
}

impl PerturbationModuli {
    pub fn zero_with_history(history: Modulus) -> Self {
        Self {
            eta: Modulus::Zero,
            weight: Modulus::Zero,
            history,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PerturbationBound {
    pub delta: f64,
    pub bound: f64,
    pub measured: f64,
}

impl PerturbationBound {
    pub fn holds(&self) -> bool {
        self.measured <= self.bound + 1e-9
    }
}

/// `||F_d(t, psi1) - F_d(t, psi2)|| <= L_p M_Vg [delta + omega_psi(omega_eta(delta))]
/// + (C1 ||psi1||_C + C2) omega_h(delta)` for a single atom.
pub fn fd_perturbation_bound(
    m: &DelayMeasure,
    p: &PointMap,
    op: &SpectralOperator,
    t: f64,
    psi1: &Segment<'_>,
    psi2: &Segment<'_>,
    moduli: &PerturbationModuli,
) -> Result<PerturbationBound> {
    if m.atoms.len() != 1 {
        return Err(Error::Inapplicable(format!(
            "the perturbation estimate covers exactly one atom, found {}",
            m.atoms.len()
        )));
    }
    for md in [&moduli.eta, &moduli.weight, &moduli.history] {
        md.validate()?;
    }
    let delta = sup_distance(psi1, psi2, op)?;
    let (c1, c2) = p.norm_growth(op, psi1.head().nodal.n_species());
    let bound = p.lipschitz() * m.m_vg * (delta + moduli.history.eval(moduli.eta.eval(delta)))
        + (c1 * psi1.sup_norm(op) + c2) * moduli.weight.eval(delta);
    let measured = op.norm(&eval_fd(m, p, t, psi1)?.sub(&eval_fd(m, p, t, psi2)?));
    Ok(PerturbationBound { delta, bound, measured })
}

/// Signed totals of the measure at one probe.
#[derive(Debug, Clone, Copy)]
pub struct WeightSummary {
    pub atom_total: f64,
    pub density_total: f64,
    pub min_atom_weight: f64,
    pub min_density: f64,
}

impl WeightSummary {
    pub fn total(&self) -> f64 {
        self.atom_total + self.density_total
    }
}

pub fn weight_summary(m: &DelayMeasure, t: f64, psi: &Segment<'_>) -> Result<WeightSummary> {
    let atoms = atom_values(m, t, psi)?;
    let atom_total = atoms.iter().map(|(_, h)| h).sum();
    let min_atom_weight = atoms.iter().map(|(_, h)| *h).fold(f64::INFINITY, f64::min);
    let (density_total, min_density) = match &m.density {
        Some(d) => {
            let r = psi.horizon();
            let view = d.view(psi, m.eta_ign_at(t)?)?;
            let xi = d.prepare(t, &view)?;
            let breaks = breakpoints(-r, 0.0, xi.breaks(-r, 0.0));
            let total = m.rule().composite(&breaks, |th| xi.eval(th));
            let min = breaks.iter().map(|th| xi.eval(*th)).fold(f64::INFINITY, f64::min);
            (total, min)
        }
        None => (0.0, f64::INFINITY),
    };
    Ok(WeightSummary {
        atom_total,
        density_total,
        min_atom_weight,
        min_density,
    })
}

/// Normalized and nondecreasing: all weights `>= 0` and total weight `1 +- tol`.
pub fn check_normalization(m: &DelayMeasure, t: f64, psi: &Segment<'_>, tol: f64) -> Result<WeightSummary> {
    let s = weight_summary(m, t, psi)?;
    if s.min_atom_weight < 0.0 || s.min_density < 0.0 {
        return Err(Error::contract(
            Condition::Normalization,
            format!(
                "measure has negative mass (min atom weight {}, min density {})",
                s.min_atom_weight, s.min_density
            ),
        ));
    }
    if (s.total() - 1.0).abs() > tol {
        return Err(Error::contract(
            Condition::Normalization,
            format!("total weight {} differs from 1", s.total()),
        ));
    }
    Ok(s)
}

/// Structural (state-independent) nonnegativity and unit mass, for
/// rejecting a measure before any probe is run.
pub fn static_normalization(m: &DelayMeasure, horizon: f64) -> Result<()> {
    let mut total = 0.0;
    let mut exact = true;
    for (k, a) in m.atoms.iter().enumerate() {
        match &a.weight {
            AtomFunctional::Constant(h) if *h < 0.0 => {
                return Err(Error::contract(
                    Condition::Normalization,
                    format!("atom {k} has weight {h} < 0"),
                ))
            }
            AtomFunctional::TimeDependent(t) if t.min() < 0.0 => {
                return Err(Error::contract(
                    Condition::Normalization,
                    format!("atom {k} weight table dips below 0"),
                ))
            }
            AtomFunctional::Constant(h) => total += h,
            _ => exact = false,
        }
    }
    if let Some(d) = &m.density {
        match &d.kind {
            DensityKind::Constant(c) if *c < 0.0 => {
                return Err(Error::contract(Condition::Normalization, "density is negative"))
            }
            DensityKind::Constant(c) => total += c * horizon,
            DensityKind::Table(t) => {
                if t.min() < 0.0 {
                    return Err(Error::contract(Condition::Normalization, "density table dips below 0"));
                }
                let xi = PreparedDensity {
                    scale: 1.0,
                    shape: Some(t),
                };
                total += density_abs_integral(m, &xi, horizon);
            }
            _ => exact = false,
        }
    }
    if exact && (total - 1.0).abs() > 1e-12 {
        return Err(Error::contract(
            Condition::Normalization,
            format!("total weight {total} differs from 1"),
        ));
    }
    Ok(())
}

/// A state-independent bound on `sum |h_k|`, when one exists.
pub fn static_atom_variation(m: &DelayMeasure) -> Option<f64> {
    m.atoms.iter().map(|a| a.weight.constant_bound()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::SpatialGrid;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn op() -> SpectralOperator {
        SpectralOperator::laplacian(SpatialGrid::point(), &[0.0]).unwrap()
    }

    fn seg(f: impl Fn(f64) -> f64, n: usize) -> Segment<'static> {
        Segment::from_fn(&op(), 0.0, 1.0, n, |th| StateVector::scalar(&[f(th)])).unwrap()
    }

    fn scalar(v: &StateVector) -> f64 {
        v.values()[0]
    }

    #[test]
    fn constant_atom_reads_delayed_value() {
        let m = DelayMeasure::atoms_only(vec![DelayAtom::constant(1.0, 1.0)], 1.0, 0.5);
        let psi = seg(|th| 2.0 + th, 5);
        let f = eval_f(&m, &PointMap::Identity, 0.0, &psi).unwrap();
        assert_eq!(scalar(&f), 1.0);
        let (fc, fd) = split_f(&m, &PointMap::Identity, 0.0, &psi).unwrap();
        assert_eq!(scalar(&fc), 0.0);
        assert_eq!(fd, f);
    }

    #[test]
    fn averaging_density_reproduces_constant() {
        let m = DelayMeasure::density_only(DelayDensity::constant(1.0), 1.0, 0.5, 0.0);
        let psi = seg(|_| 0.375, 7);
        let f = eval_f(&m, &PointMap::Identity, 0.0, &psi).unwrap();
        assert!((scalar(&f) - 0.375).abs() < 1e-15);
        let (_, fd) = split_f(&m, &PointMap::Identity, 0.0, &psi).unwrap();
        assert_eq!(scalar(&fd), 0.0);
    }

    #[test]
    fn atom_below_ignore_interval_is_rejected() {
        let m = DelayMeasure::atoms_only(vec![DelayAtom::constant(0.25, 1.0)], 1.0, 0.5);
        let err = eval_f(&m, &PointMap::Identity, 0.0, &seg(|th| th, 3)).unwrap_err();
        assert!(err.is_contract(Condition::DelayRange));
    }

    #[test]
    fn variation_examples() {
        let psi = seg(|th| th, 3);
        let m = DelayMeasure::atoms_only(vec![DelayAtom::constant(1.0, 1.0)], 2.0, 0.5);
        let rep = check_a1(&m, &[(0.0, psi.clone())]);
        assert!(rep.passed());
        assert_eq!(rep.max_variation(), 1.0);
        let d = DelayMeasure::density_only(DelayDensity::constant(1.0), 2.0, 0.5, 0.0);
        assert!((check_a1(&d, &[(0.0, psi.clone())]).max_variation() - 1.0).abs() < 1e-14);
        let heavy = DelayMeasure::atoms_only(vec![DelayAtom::constant(1.0, 3.0)], 2.0, 0.5);
        assert_eq!(check_a1(&heavy, &[(0.0, psi)]).flagged(), vec![0]);
    }

    #[test]
    fn sign_changing_density_table_variation() {
        // xi = 2 theta + 1 on [-1, 0]: int |xi| = 1/2
        let tab = Table::new(vec![-1.0, 0.0], vec![-1.0, 1.0]).unwrap();
        let density = DelayDensity {
            kind: DensityKind::Table(tab),
            variation_hint: 0.5,
            full_segment: false,
        };
        let m = DelayMeasure::density_only(density, 1.0, 0.5, 0.0);
        let v = total_variation(&m, 0.0, &seg(|_| 1.0, 2)).unwrap();
        assert!((v - 0.5).abs() < 1e-14);
    }

    #[test]
    fn head_reading_atom_needs_escape_hatch() {
        let reader = DelayAtom {
            eta: AtomFunctional::Constant(0.75),
            weight: AtomFunctional::HeadValue {
                species: 0,
                base: 1.0,
                scale: 0.0,
            },
            full_segment: false,
        };
        let m = DelayMeasure::atoms_only(vec![reader.clone()], 2.0, 0.5);
        let err = eval_f(&m, &PointMap::Identity, 0.0, &seg(|th| th, 3)).unwrap_err();
        assert!(err.is_contract(Condition::IgnoreInterval));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rep = check_a5_structural(&m, &op(), 0.0, &seg(|th| th, 3), 5, &mut rng).unwrap();
        assert!(!rep.passed());
    }

    #[test]
    fn mutation_keeps_truncated_window() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let psi = refined_at(&seg(|th| (3.0 * th).sin(), 9), -0.4).unwrap();
        for _ in 0..20 {
            let mu = mutate_recent(&op(), &psi, 0.4, &mut rng).unwrap();
            for i in 0..=30 {
                let th = -1.0 + 0.6 * i as f64 / 30.0;
                assert_eq!(psi.eval(th).unwrap(), mu.eval(th).unwrap());
            }
        }
    }

    #[test]
    fn normalization_rejects_signed_or_heavy_measures() {
        let ok = DelayMeasure::atoms_only(
            vec![DelayAtom::constant(0.5, 0.25), DelayAtom::constant(1.0, 0.75)],
            1.0,
            0.5,
        );
        static_normalization(&ok, 1.0).unwrap();
        let signed = DelayMeasure::atoms_only(
            vec![DelayAtom::constant(0.5, -1.0), DelayAtom::constant(1.0, 2.0)],
            3.0,
            0.5,
        );
        assert!(static_normalization(&signed, 1.0)
            .unwrap_err()
            .is_contract(Condition::Normalization));
        let heavy = DelayMeasure::atoms_only(vec![DelayAtom::constant(1.0, 2.0)], 3.0, 0.5);
        assert!(static_normalization(&heavy, 1.0).is_err());
    }

    #[test]
    fn multi_atom_perturbation_bound_is_inapplicable() {
        let m = DelayMeasure::atoms_only(
            vec![DelayAtom::constant(0.5, 0.5), DelayAtom::constant(1.0, 0.5)],
            1.0,
            0.5,
        );
        let psi = seg(|th| th, 3);
        let moduli = PerturbationModuli::zero_with_history(Modulus::Linear(1.0));
        let err = fd_perturbation_bound(&m, &PointMap::Identity, &op(), 0.0, &psi, &psi, &moduli).unwrap_err();
        assert!(matches!(err, Error::Inapplicable(_)));
    }
}
