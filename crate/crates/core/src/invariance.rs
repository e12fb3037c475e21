//! Closed convex constraint sets `D(t)` and the numerical invariance criteria.
//!
//! Constraints act pointwise at the collocation nodes. Distances use the same
//! discrete L2 weighting as the state norm, so for a point domain they are
//! Euclidean.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::history::Segment;
use crate::profile::Profile;
use crate::rhs::DelayRhs;
use crate::spectral::SpectralOperator;
use crate::state::{Representation, StateVector};
use crate::stepper::SolveResult;

fn default_tolerance() -> f64 {
    1e-10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    /// `u >= 0` componentwise.
    NonnegCone,
    /// `lower_i <= u_i <= upper_i`.
    Box { lower: Vec<f64>, upper: Vec<f64> },
    /// A box whose bounds are functions of time.
    TimeIndexedBox { lower: Vec<Profile>, upper: Vec<Profile> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSet {
    pub kind: ConstraintKind,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

impl ConstraintSet {
    pub fn nonneg_cone() -> Self {
        Self {
            kind: ConstraintKind::NonnegCone,
            tolerance: default_tolerance(),
        }
    }

    pub fn boxed(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        Self {
            kind: ConstraintKind::Box { lower, upper },
            tolerance: default_tolerance(),
        }
    }

    pub fn is_time_invariant(&self) -> bool {
        !matches!(self.kind, ConstraintKind::TimeIndexedBox { .. })
    }

    pub fn validate(&self, n_species: usize) -> Result<()> {
        if !(self.tolerance >= 0.0) {
            return Err(Error::invalid("constraint tolerance must be >= 0"));
        }
        let check_len = |l: usize, u: usize| {
            if l != n_species || u != n_species {
                Err(Error::invalid(format!("box bounds need {n_species} entries per side")))
            } else {
                Ok(())
            }
        };
        match &self.kind {
            ConstraintKind::NonnegCone => Ok(()),
            ConstraintKind::Box { lower, upper } => {
                check_len(lower.len(), upper.len())?;
                if lower.iter().zip(upper).any(|(l, u)| !(l <= u)) {
                    return Err(Error::invalid("box lower bound exceeds upper bound"));
                }
                Ok(())
            }
            ConstraintKind::TimeIndexedBox { lower, upper } => {
                check_len(lower.len(), upper.len())?;
                lower.iter().chain(upper).try_for_each(Profile::validate)
            }
        }
    }

    /// Per-species bounds at time `t`.
    fn bounds(&self, t: f64, species: usize) -> (f64, f64) {
        match &self.kind {
            ConstraintKind::NonnegCone => (0.0, f64::INFINITY),
            ConstraintKind::Box { lower, upper } => (lower[species], upper[species]),
            ConstraintKind::TimeIndexedBox { lower, upper } => (lower[species].eval(t), upper[species].eval(t)),
        }
    }

    /// Nearest point of `D(t)` to the collocation values `x`.
    pub fn project(&self, t: f64, x: &StateVector) -> Result<StateVector> {
        if x.representation() != Representation::Collocation {
            return Err(Error::invalid("projection expects collocation values"));
        }
        let declared = match &self.kind {
            ConstraintKind::NonnegCone => None,
            ConstraintKind::Box { lower, .. } => Some(lower.len()),
            ConstraintKind::TimeIndexedBox { lower, .. } => Some(lower.len()),
        };
        if let Some(n) = declared.filter(|n| *n != x.n_species()) {
            return Err(Error::invalid(format!(
                "constraint has {n} species, state has {}",
                x.n_species()
            )));
        }
        let mut out = x.clone();
        for s in 0..x.n_species() {
            let (lo, hi) = self.bounds(t, s);
            out.species_mut(s).iter_mut().for_each(|v| *v = v.clamp(lo, hi));
        }
        Ok(out)
    }

    /// `d(x; D(t))` in the discrete norm; spectral input is synthesized first.
    pub fn distance(&self, op: &SpectralOperator, t: f64, x: &StateVector) -> Result<f64> {
        let nodal = op.to_collocation(x)?;
        let proj = self.project(t, &nodal)?;
        Ok(op.norm(&nodal.sub(&proj)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Satisfied,
    Violated,
    Inconclusive,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Satisfied => "satisfied",
            Verdict::Violated => "violated",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

/// Ratios at or below this are treated as zero when judging monotonicity.
pub const RATIO_FLOOR: f64 = 1e-10;
pub const SATISFIED_BELOW: f64 = 1e-6;
pub const VIOLATED_ABOVE: f64 = 1e-2;

pub fn default_h_ladder() -> Vec<f64> {
    (2..=7).map(|k| 10f64.powi(-k)).collect()
}

/// Three-way verdict on a ratio sequence for decreasing `h`.
pub fn verdict(ratios: &[f64]) -> Verdict {
    let Some(&last) = ratios.last() else {
        return Verdict::Inconclusive;
    };
    let non_increasing = ratios.windows(2).all(|w| w[1] <= w[0].max(RATIO_FLOOR) * (1.0 + 1e-9));
    let non_decreasing = ratios.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-9));
    if last < SATISFIED_BELOW && non_increasing {
        Verdict::Satisfied
    } else if last > VIOLATED_ABOVE && non_decreasing {
        Verdict::Violated
    } else {
        Verdict::Inconclusive
    }
}

#[derive(Debug, Clone)]
pub struct SubtangencyReport {
    pub time: f64,
    pub h_values: Vec<f64>,
    pub ratios: Vec<f64>,
    pub verdict: Verdict,
}

fn check_ladder(h_values: &[f64]) -> Result<()> {
    if h_values.is_empty() {
        return Err(Error::invalid("h ladder is empty"));
    }
    if h_values.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::invalid("h ladder must be strictly decreasing"));
    }
    if *h_values.last().unwrap() < 1e-8 {
        return Err(Error::invalid("smallest h must be >= 1e-8"));
    }
    Ok(())
}

/// Requires `psi(theta) in D(t + theta)` at every knot.
fn check_admissible(set: &ConstraintSet, op: &SpectralOperator, psi: &Segment<'_>) -> Result<()> {
    for k in psi.knots() {
        let d = set.distance(op, k.time, &k.nodal)?;
        if d > set.tolerance {
            return Err(Error::invalid(format!(
                "history leaves the constraint set at time {} (distance {d:e})",
                k.time
            )));
        }
    }
    Ok(())
}

/// `ratio(h) = d(T(h) psi(0) + phi1(h) B(t, psi); D(t + h)) / h`.
pub fn subtangential_check(
    set: &ConstraintSet,
    op: &SpectralOperator,
    rhs: &DelayRhs,
    t: f64,
    psi: &Segment<'_>,
    h_values: &[f64],
) -> Result<SubtangencyReport> {
    check_ladder(h_values)?;
    check_admissible(set, op, psi)?;
    let b = rhs.eval_b(op, t, psi)?;
    let head = &psi.head().spectral;
    let ratios = h_values
        .iter()
        .map(|&h| {
            let x = op.semigroup_apply(h, head)?.add(&op.phi1_apply(h, &b)?);
            Ok(set.distance(op, t + h, &x)? / h)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(SubtangencyReport {
        time: t,
        h_values: h_values.to_vec(),
        verdict: verdict(&ratios),
        ratios,
    })
}

/// `ratio(h) = d(psi(0) + h B(t, psi); K) / h` for a time-invariant `K`.
pub fn corollary_condition_b(
    set: &ConstraintSet,
    op: &SpectralOperator,
    rhs: &DelayRhs,
    t: f64,
    psi: &Segment<'_>,
    h_values: &[f64],
) -> Result<SubtangencyReport> {
    if !set.is_time_invariant() {
        return Err(Error::invalid("the Euler criterion needs a time-invariant set"));
    }
    check_ladder(h_values)?;
    check_admissible(set, op, psi)?;
    let b = rhs.eval_b(op, t, psi)?;
    let head = &psi.head().spectral;
    let ratios = h_values
        .iter()
        .map(|&h| {
            let mut x = head.clone();
            x.axpy(h, &b);
            Ok(set.distance(op, t + h, &x)? / h)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(SubtangencyReport {
        time: t,
        h_values: h_values.to_vec(),
        verdict: verdict(&ratios),
        ratios,
    })
}

#[derive(Debug, Clone)]
pub struct SemigroupReport {
    pub tolerance: f64,
    /// `(probe, t, distance)` per sample.
    pub samples: Vec<(usize, f64, f64)>,
}

impl SemigroupReport {
    pub fn max_excursion(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.2))
    }

    pub fn passed(&self) -> bool {
        self.max_excursion() <= self.tolerance
    }
}

/// Distance of `T(t) x` from `K` over probes and times.
pub fn semigroup_preserves_k(
    set: &ConstraintSet,
    op: &SpectralOperator,
    probes: &[StateVector],
    t_values: &[f64],
) -> Result<SemigroupReport> {
    if !set.is_time_invariant() {
        return Err(Error::invalid("semigroup invariance needs a time-invariant set"));
    }
    let mut samples = Vec::with_capacity(probes.len() * t_values.len());
    for (i, x) in probes.iter().enumerate() {
        let spectral = op.to_spectral(x)?;
        for &t in t_values {
            let y = op.semigroup_apply(t, &spectral)?;
            samples.push((i, t, set.distance(op, 0.0, &y)?));
        }
    }
    Ok(SemigroupReport {
        tolerance: set.tolerance,
        samples,
    })
}

pub const SCHEME_TOLERANCE: f64 = 1e-7;

#[derive(Debug, Clone)]
pub struct MonitorReport {
    /// `(time, distance)` per knot.
    pub distances: Vec<(f64, f64)>,
    pub tolerance: f64,
}

impl MonitorReport {
    pub fn max_distance(&self) -> f64 {
        self.distances.iter().fold(0.0, |m, d| m.max(d.1))
    }

    /// Time of the largest excursion.
    pub fn worst_time(&self) -> Option<f64> {
        self.distances.iter().max_by(|a, b| a.1.total_cmp(&b.1)).map(|d| d.0)
    }

    pub fn passed(&self) -> bool {
        self.max_distance() <= self.tolerance
    }
}

/// Distance to `D(t)` at every knot of a (possibly partial) solve.
pub fn monitor_trajectory(set: &ConstraintSet, op: &SpectralOperator, result: &SolveResult) -> Result<MonitorReport> {
    let distances = result
        .buffer
        .knots()
        .iter()
        .map(|k| Ok((k.time, set.distance(op, k.time, &k.nodal)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(MonitorReport {
        distances,
        tolerance: set.tolerance + SCHEME_TOLERANCE,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delay::{DelayAtom, DelayMeasure, PointMap};
    use crate::rhs::{OuterKind, OuterMap};
    use crate::spectral::SpatialGrid;

    fn op() -> SpectralOperator {
        SpectralOperator::laplacian(SpatialGrid::point(), &[0.0]).unwrap()
    }

    fn constant_rhs(c: f64) -> DelayRhs {
        DelayRhs::new(
            DelayMeasure::atoms_only(vec![DelayAtom::constant(1.0, 1.0)], 1.0, 1.0),
            PointMap::Identity,
            OuterMap::from(OuterKind::Constant(vec![c])),
        )
    }

    fn head_at(x: f64) -> Segment<'static> {
        Segment::from_fn(&op(), 0.0, 1.0, 3, |th| StateVector::scalar(&[x - th])).unwrap()
    }

    #[test]
    fn distance_examples() {
        let cone = ConstraintSet::nonneg_cone();
        assert_eq!(cone.distance(&op(), 0.0, &StateVector::scalar(&[2.0])).unwrap(), 0.0);
        assert_eq!(cone.distance(&op(), 0.0, &StateVector::scalar(&[-3.0])).unwrap(), 3.0);
        let b = ConstraintSet::boxed(vec![0.0], vec![1.0]);
        assert_eq!(b.distance(&op(), 0.0, &StateVector::scalar(&[1.5])).unwrap(), 0.5);
    }

    #[test]
    fn subtangential_examples() {
        let cone = ConstraintSet::nonneg_cone();
        let h = default_h_ladder();
        let up = subtangential_check(&cone, &op(), &constant_rhs(1.0), 0.0, &head_at(0.0), &h).unwrap();
        assert!(up.ratios.iter().all(|r| *r == 0.0));
        assert_eq!(up.verdict, Verdict::Satisfied);
        let down = subtangential_check(&cone, &op(), &constant_rhs(-1.0), 0.0, &head_at(0.0), &h).unwrap();
        assert_eq!(down.verdict, Verdict::Violated);
        assert!(down.ratios.iter().all(|r| (r - 1.0).abs() < 1e-12));
        let interior = subtangential_check(&cone, &op(), &constant_rhs(-5.0), 0.0, &head_at(1.0), &h).unwrap();
        assert_eq!(interior.verdict, Verdict::Satisfied);
        for rhs in [constant_rhs(1.0), constant_rhs(-1.0)] {
            let e = corollary_condition_b(&cone, &op(), &rhs, 0.0, &head_at(0.0), &h).unwrap();
            let s = subtangential_check(&cone, &op(), &rhs, 0.0, &head_at(0.0), &h).unwrap();
            assert_eq!(e.verdict, s.verdict);
        }
        assert!(subtangential_check(&cone, &op(), &constant_rhs(1.0), 0.0, &head_at(-1.0), &h).is_err());
    }

    #[test]
    fn monitor_locates_excursion() {
        let op = op();
        let mut buf = crate::history::HistoryBuffer::new(1.0).unwrap();
        for (t, v) in [(-1.0, 0.0), (0.0, 0.0), (0.5, -1.0), (1.0, 0.0)] {
            buf.push(crate::history::Knot::new(&op, t, StateVector::scalar(&[v])).unwrap())
                .unwrap();
        }
        let result = SolveResult {
            buffer: buf,
            status: crate::stepper::SolveStatus::Completed,
            diagnostics: Vec::new(),
            extension_checks: 0,
        };
        let rep = monitor_trajectory(&ConstraintSet::nonneg_cone(), &op, &result).unwrap();
        assert!(!rep.passed());
        assert_eq!(rep.worst_time(), Some(0.5));
        assert_eq!(rep.max_distance(), 1.0);
    }

    #[test]
    fn verdict_thresholds() {
        assert_eq!(verdict(&[0.5, 0.1, 1e-7]), Verdict::Satisfied);
        assert_eq!(verdict(&[0.5, 0.6, 0.6]), Verdict::Violated);
        assert_eq!(verdict(&[0.5, 0.1, 1e-3]), Verdict::Inconclusive);
    }
}
