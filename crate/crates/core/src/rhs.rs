//! The right-hand side `B(t, psi) = G(t, psi(0), F(t, psi))`.
//!
//! `F` may consist of several channels, each a delay measure with its own
//! inner map; channel outputs are stacked along the species axis before `G`
//! sees them. A single channel is the common case; the Lotka-Volterra model
//! uses one channel per species pair.

use serde::{Deserialize, Serialize};

use crate::delay::{self, DelayMeasure, PointMap};
use crate::error::{Error, Result};
use crate::history::Segment;
use crate::profile::Table;
use crate::spectral::SpectralOperator;
use crate::state::{Representation, StateVector};

/// Pointwise linear-growth constants: `|G(t, u, v)| <= k1 (|u| + |v|) + k2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Growth {
    pub k1: f64,
    pub k2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OuterKind {
    /// `G = v - d u`.
    Affine {
        d: f64,
    },
    /// `G^i = b_i u^i (1 - sum_j c_ij v^{ij})`, with `v` holding the
    /// `m * m` channel outputs row-major.
    LotkaVolterra {
        b: Vec<f64>,
        c: Vec<Vec<f64>>,
    },
    Zero,
    /// `G^i = values[i]`.
    Constant(Vec<f64>),
    /// `G = a u^2`.
    Quadratic {
        a: f64,
    },
    /// `G = table(v) - d u`.
    CustomTable {
        table: Table,
        d: f64,
    },
}

/// The outer map `G`, applied pointwise at the collocation nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OuterMap {
    pub kind: OuterKind,
    /// Overrides the kind's own growth constants.
    #[serde(default)]
    pub growth: Option<Growth>,
}

impl From<OuterKind> for OuterMap {
    fn from(kind: OuterKind) -> Self {
        Self { kind, growth: None }
    }
}

impl OuterMap {
    pub fn affine(d: f64) -> Self {
        OuterKind::Affine { d }.into()
    }

    /// Number of `F` components `G` expects for `m` state species.
    pub fn f_species(&self, m: usize) -> usize {
        match self.kind {
            OuterKind::LotkaVolterra { .. } => m * m,
            _ => m,
        }
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        match &self.kind {
            OuterKind::Affine { d } | OuterKind::CustomTable { d, .. } if !d.is_finite() => {
                Err(Error::invalid("outer map coefficient d must be finite"))
            }
            OuterKind::CustomTable { table, .. } => table.validate(),
            OuterKind::LotkaVolterra { b, c } => {
                if b.len() != m || c.len() != m || c.iter().any(|row| row.len() != m) {
                    return Err(Error::invalid(format!(
                        "Lotka-Volterra needs b of length {m} and c of shape {m}x{m}"
                    )));
                }
                if b.iter().chain(c.iter().flatten()).any(|x| !(*x > 0.0 && x.is_finite())) {
                    return Err(Error::invalid(
                        "Lotka-Volterra coefficients b_i and c_ij must be positive",
                    ));
                }
                Ok(())
            }
            OuterKind::Constant(v) if v.len() != m => Err(Error::invalid(format!(
                "constant outer map has {} values for {m} species",
                v.len()
            ))),
            _ => Ok(()),
        }
    }

    /// Growth constants, if the map admits linear growth.
    pub fn growth(&self) -> Option<Growth> {
        self.growth.or(match &self.kind {
            OuterKind::Affine { d } => Some(Growth {
                k1: d.abs().max(1.0),
                k2: 0.0,
            }),
            OuterKind::Zero => Some(Growth { k1: 0.0, k2: 0.0 }),
            OuterKind::Constant(v) => Some(Growth {
                k1: 0.0,
                k2: v.iter().fold(0.0, |m, x| m.max(x.abs())),
            }),
            OuterKind::CustomTable { table, d } => Some(Growth {
                k1: d.abs(),
                k2: table.y.iter().fold(0.0, |m, x| m.max(x.abs())),
            }),
            OuterKind::LotkaVolterra { .. } | OuterKind::Quadratic { .. } => None,
        })
    }

    /// Pointwise Lipschitz constant `L_{G,R}` in `(u, v)` on `|u|, |v| <= R`.
    pub fn lipschitz(&self, radius: f64) -> f64 {
        match &self.kind {
            OuterKind::Affine { d } => d.abs().max(1.0),
            OuterKind::Zero | OuterKind::Constant(_) => 0.0,
            OuterKind::Quadratic { a } => 2.0 * a.abs() * radius,
            OuterKind::CustomTable { table, d } => {
                let slope = table
                    .x
                    .windows(2)
                    .zip(table.y.windows(2))
                    .map(|(x, y)| ((y[1] - y[0]) / (x[1] - x[0])).abs())
                    .fold(0.0, f64::max);
                slope.max(d.abs())
            }
            OuterKind::LotkaVolterra { b, c } => b
                .iter()
                .zip(c)
                .map(|(bi, row)| {
                    let s: f64 = row.iter().sum();
                    let cmax = row.iter().cloned().fold(0.0, f64::max);
                    bi * (1.0 + s * radius + cmax * radius)
                })
                .fold(0.0, f64::max),
        }
    }

    /// `G(t, u, v)` on collocation values.
    pub fn apply(&self, _t: f64, u: &StateVector, v: &StateVector) -> Result<StateVector> {
        let m = u.n_species();
        let n = u.n_points();
        if v.n_species() != self.f_species(m) || v.n_points() != n {
            return Err(Error::Shape {
                expected: format!("{}x{n} delay term", self.f_species(m)),
                found: format!("{}x{}", v.n_species(), v.n_points()),
            });
        }
        let mut out = StateVector::zeros(m, n, Representation::Collocation);
        match &self.kind {
            OuterKind::Affine { d } => {
                for ((o, a), b) in out.values_mut().iter_mut().zip(u.values()).zip(v.values()) {
                    *o = b - d * a;
                }
            }
            OuterKind::CustomTable { table, d } => {
                for ((o, a), b) in out.values_mut().iter_mut().zip(u.values()).zip(v.values()) {
                    *o = table.eval(*b) - d * a;
                }
            }
            OuterKind::Quadratic { a } => {
                for (o, x) in out.values_mut().iter_mut().zip(u.values()) {
                    *o = a * x * x;
                }
            }
            OuterKind::Zero => {}
            OuterKind::Constant(c) => {
                for (s, value) in c.iter().enumerate() {
                    out.species_mut(s).iter_mut().for_each(|o| *o = *value);
                }
            }
            OuterKind::LotkaVolterra { b, c } => {
                for i in 0..m {
                    for x in 0..n {
                        let ui = u.species(i)[x];
                        let comp: f64 = (0..m).map(|j| c[i][j] * v.species(i * m + j)[x]).sum();
                        out.species_mut(i)[x] = b[i] * ui * (1.0 - comp);
                    }
                }
            }
        }
        Ok(out)
    }
}

/// One delay functional `F_c(t, psi) = int p_c(t, psi(theta)) dg_c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Channel {
    pub measure: DelayMeasure,
    pub p: PointMap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelayRhs {
    pub channels: Vec<Channel>,
    pub outer: OuterMap,
}

impl DelayRhs {
    pub fn new(measure: DelayMeasure, p: PointMap, outer: OuterMap) -> Self {
        Self {
            channels: vec![Channel { measure, p }],
            outer,
        }
    }

    pub fn validate(&self, m: usize, horizon: f64) -> Result<()> {
        if self.channels.is_empty() {
            return Err(Error::invalid("right-hand side needs at least one delay channel"));
        }
        let mut f_species = 0;
        for ch in &self.channels {
            ch.measure.validate(horizon)?;
            ch.p.validate(m)?;
            f_species += ch.p.out_species(m);
        }
        if f_species != self.outer.f_species(m) {
            return Err(Error::invalid(format!(
                "delay channels produce {f_species} components but G expects {}",
                self.outer.f_species(m)
            )));
        }
        self.outer.validate(m)
    }

    /// The single channel, if there is exactly one.
    pub fn single(&self) -> Option<&Channel> {
        match self.channels.as_slice() {
            [c] => Some(c),
            _ => None,
        }
    }

    pub fn has_atoms(&self) -> bool {
        self.channels.iter().any(|c| !c.measure.atoms.is_empty())
    }

    /// Smallest `eta_ign` over channels with atoms on `[a, b]`, the step bound.
    pub fn step_bound(&self, a: f64, b: f64) -> Option<f64> {
        self.channels
            .iter()
            .filter(|c| !c.measure.atoms.is_empty())
            .map(|c| c.measure.eta_ign.min_on(a, b))
            .reduce(f64::min)
    }

    /// Stacked `(F_c, F_d)` over channels.
    pub fn split_f(&self, t: f64, psi: &Segment<'_>) -> Result<(StateVector, StateVector)> {
        let mut fc = Vec::with_capacity(self.channels.len());
        let mut fd = Vec::with_capacity(self.channels.len());
        for ch in &self.channels {
            let (c, d) = delay::split_f(&ch.measure, &ch.p, t, psi)?;
            fc.push(c);
            fd.push(d);
        }
        Ok((StateVector::stack(&fc)?, StateVector::stack(&fd)?))
    }

    /// Stacked discrete parts only.
    pub fn eval_fd(&self, t: f64, psi: &Segment<'_>) -> Result<StateVector> {
        let parts = self
            .channels
            .iter()
            .map(|ch| delay::eval_fd(&ch.measure, &ch.p, t, psi))
            .collect::<Result<Vec<_>>>()?;
        StateVector::stack(&parts)
    }

    pub fn eval_f(&self, t: f64, psi: &Segment<'_>) -> Result<StateVector> {
        let (fc, fd) = self.split_f(t, psi)?;
        Ok(fc.add(&fd))
    }

    /// `G(t, psi(0), F_c + F_d)` at the collocation nodes.
    pub fn eval_b_from_parts(
        &self,
        t: f64,
        psi: &Segment<'_>,
        fc: &StateVector,
        fd: &StateVector,
    ) -> Result<StateVector> {
        self.outer.apply(t, &psi.head().nodal, &fc.add(fd))
    }

    /// `B(t, psi)` at the collocation nodes.
    pub fn eval_b_nodal(&self, t: f64, psi: &Segment<'_>) -> Result<StateVector> {
        let (fc, fd) = self.split_f(t, psi)?;
        self.eval_b_from_parts(t, psi, &fc, &fd)
    }

    /// `B(t, psi)` in spectral coefficients.
    pub fn eval_b(&self, op: &SpectralOperator, t: f64, psi: &Segment<'_>) -> Result<StateVector> {
        op.to_spectral(&self.eval_b_nodal(t, psi)?)
    }

    /// `L_Fc = L_p M_Vg + L_Vgc (C1 R + C2)` for one channel on the ball of radius `R`.
    pub fn l_fc(&self, op: &SpectralOperator, radius: f64) -> Result<f64> {
        let ch = self
            .single()
            .ok_or_else(|| Error::Inapplicable("the Lipschitz constant of F is assembled for one channel".into()))?;
        let (c1, c2) = ch.p.norm_growth(op, op.n_species());
        Ok(ch.p.lipschitz() * ch.measure.m_vg + ch.measure.l_vgc * (c1 * radius + c2))
    }

    /// `L_{G,R} (1 + L_Fc)`, the Lipschitz constant of `B` in `psi`.
    pub fn lipschitz_b(&self, op: &SpectralOperator, radius: f64) -> Result<f64> {
        Ok(self.outer.lipschitz(radius) * (1.0 + self.l_fc(op, radius)?))
    }
}

#[derive(Debug, Clone)]
pub struct GrowthReport {
    pub growth: Growth,
    /// `||G|| / (k1 (||u|| + ||v||) + k2)` per probe.
    pub ratios: Vec<f64>,
}

impl GrowthReport {
    pub fn max_ratio(&self) -> f64 {
        self.ratios.iter().cloned().fold(0.0, f64::max)
    }

    pub fn flagged(&self) -> Vec<usize> {
        self.ratios
            .iter()
            .enumerate()
            .filter(|(_, r)| **r > 1.0 + 1e-12)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn passed(&self) -> bool {
        self.flagged().is_empty()
    }
}

/// Sampled linear-growth check of `G` on collocation probes `(t, u, v)`.
pub fn linear_growth_probe(
    rhs: &DelayRhs,
    op: &SpectralOperator,
    probes: &[(f64, StateVector, StateVector)],
) -> Result<GrowthReport> {
    let growth = rhs
        .outer
        .growth()
        .ok_or_else(|| Error::Inapplicable("outer map declares no linear growth constants".into()))?;
    let mut ratios = Vec::with_capacity(probes.len());
    for (t, u, v) in probes {
        let g = rhs.outer.apply(*t, u, v)?;
        let k2 = growth.k2 * op.unit_constant_norm(g.n_species());
        let bound = growth.k1 * (op.norm(u) + op.norm(v)) + k2;
        let size = op.norm(&g);
        ratios.push(if bound > 0.0 {
            size / bound
        } else if size == 0.0 {
            0.0
        } else {
            f64::INFINITY
        });
    }
    Ok(GrowthReport { growth, ratios })
}

#[derive(Debug, Clone)]
pub struct QuasipositivityProbe {
    pub species: usize,
    /// Minimum of `B^i` over the nodes.
    pub min_value: f64,
}

#[derive(Debug, Clone)]
pub struct QuasipositivityReport {
    pub tol: f64,
    pub probes: Vec<QuasipositivityProbe>,
}

impl QuasipositivityReport {
    pub fn flagged(&self) -> Vec<usize> {
        self.probes
            .iter()
            .enumerate()
            .filter(|(_, p)| p.min_value < -self.tol)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn passed(&self) -> bool {
        self.flagged().is_empty()
    }
}

pub const QUASIPOSITIVITY_TOL: f64 = 1e-12;

/// For nonnegative segments whose species `i` vanishes at `theta = 0`,
/// checks `B^i(t, psi) >= -tol` at every collocation node.
pub fn quasipositivity_probe(rhs: &DelayRhs, probes: &[(f64, Segment<'_>, usize)]) -> Result<QuasipositivityReport> {
    let tol = QUASIPOSITIVITY_TOL;
    let mut out = Vec::with_capacity(probes.len());
    for (k, (t, psi, species)) in probes.iter().enumerate() {
        let head = &psi.head().nodal;
        if *species >= head.n_species() {
            return Err(Error::invalid(format!("probe {k}: species {species} out of range")));
        }
        if psi.knots().any(|kn| kn.nodal.values().iter().any(|x| *x < -tol)) {
            return Err(Error::invalid(format!("probe {k}: segment is not nonnegative")));
        }
        if head.species(*species).iter().any(|x| x.abs() > tol) {
            return Err(Error::invalid(format!(
                "probe {k}: species {species} does not vanish at theta = 0"
            )));
        }
        let b = rhs.eval_b_nodal(*t, psi)?;
        let min_value = b.species(*species).iter().cloned().fold(f64::INFINITY, f64::min);
        out.push(QuasipositivityProbe {
            species: *species,
            min_value,
        });
    }
    Ok(QuasipositivityReport { tol, probes: out })
}
