//! Time stepping of the mild-solution equation
//! `u(t) = T(t - a) phi(0) + int_a^t T(t - s) B(s, u_s) ds`.
//!
//! Two schemes share the exact semigroup weights: the frozen-coefficient
//! step holds `B` at its step-start value, and the Picard step iterates the
//! variation-of-constants map on the nodes `{t, t + h/2, t + h}` with `B`
//! interpolated linearly between nodes. When the measure has atoms the step
//! never exceeds `eta_ign`, so every atom lookup lands in history that is
//! already final.

use serde::{Deserialize, Serialize};

use crate::error::{Condition, Error, Result};
use crate::history::{constant_extension, sup_distance, HistoryBuffer, Knot, Segment};
use crate::rhs::DelayRhs;
use crate::spectral::SpectralOperator;
use crate::state::StateVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    FrozenB,
    Picard,
}

fn default_tol() -> f64 {
    1e-10
}
fn default_iter() -> usize {
    50
}
fn default_blowup() -> f64 {
    1e8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepperConfig {
    pub dt: f64,
    pub scheme: Scheme,
    #[serde(default = "default_tol")]
    pub picard_tol: f64,
    #[serde(default = "default_iter")]
    pub picard_max_iter: usize,
    #[serde(default = "default_blowup")]
    pub blowup_norm: f64,
    pub end_time: f64,
}

impl StepperConfig {
    pub fn new(scheme: Scheme, dt: f64, end_time: f64) -> Self {
        Self {
            dt,
            scheme,
            picard_tol: default_tol(),
            picard_max_iter: default_iter(),
            blowup_norm: default_blowup(),
            end_time,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.picard_tol > 0.0) || self.picard_max_iter == 0 {
            return Err(Error::invalid("picard_tol must be > 0 and picard_max_iter >= 1"));
        }
        if !(self.blowup_norm > 0.0) {
            return Err(Error::invalid("blowup_norm must be positive"));
        }
        if !self.end_time.is_finite() {
            return Err(Error::invalid("end_time must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SolveStatus {
    Completed,
    /// `||u_t||_C` exceeded the blowup threshold at this time.
    Blowup {
        time: f64,
    },
    ContractViolation {
        step: usize,
        time: f64,
        detail: String,
    },
    /// Picard iteration failed even after halving the step.
    NonConvergence {
        step: usize,
        time: f64,
        detail: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDiagnostic {
    pub time: f64,
    pub h: f64,
    pub iterations: usize,
    pub residual: f64,
    pub halved: bool,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub buffer: HistoryBuffer,
    pub status: SolveStatus,
    pub diagnostics: Vec<StepDiagnostic>,
    /// Steps at which `F_d(t, u_t) = F_d(t, phi_bar_t)` was confirmed bit for bit.
    pub extension_checks: usize,
}

impl SolveResult {
    pub fn completed(&self) -> bool {
        self.status == SolveStatus::Completed
    }

    pub fn final_value(&self) -> &StateVector {
        &self.buffer.last().expect("a solve keeps the initial segment").spectral
    }
}

/// `T(h) u(t) + phi1(h) B(t, u_t)`.
pub fn step_frozen(
    op: &SpectralOperator,
    rhs: &DelayRhs,
    t: f64,
    h: f64,
    buffer: &HistoryBuffer,
) -> Result<StateVector> {
    let seg = buffer.segment_at(t)?;
    let b = rhs.eval_b(op, t, &seg)?;
    Ok(op.semigroup_apply(h, &seg.head().spectral)?.add(&op.phi1_apply(h, &b)?))
}

#[derive(Debug, Clone)]
pub struct PicardStep {
    pub mid: StateVector,
    pub end: StateVector,
    pub iterations: usize,
    pub residual: f64,
}

/// One sub-interval of the mild-solution map with `B` linear between
/// `b_left` and `b_right`.
fn vc_update(
    op: &SpectralOperator,
    h: f64,
    u: &StateVector,
    b_left: &StateVector,
    b_right: &StateVector,
) -> Result<StateVector> {
    let mut out = op.semigroup_apply(h, u)?;
    out.axpy(1.0, &op.phi1_apply(h, b_left)?);
    out.axpy(1.0, &op.ramp_apply(h, &b_right.sub(b_left))?);
    Ok(out)
}

/// Picard iteration on `[t, t + h]`; the buffer must end at `t`.
pub fn step_picard(
    op: &SpectralOperator,
    rhs: &DelayRhs,
    t: f64,
    h: f64,
    buffer: &HistoryBuffer,
    cfg: &StepperConfig,
) -> Result<PicardStep> {
    let last = buffer.last().ok_or(Error::Coverage { start: t, end: t })?;
    if last.time != t {
        return Err(Error::invalid(format!(
            "Picard step from t = {t} but history ends at {}",
            last.time
        )));
    }
    let half = 0.5 * h;
    let (t_mid, t_end) = (t + half, t + h);
    let u0 = &last.spectral;
    let b0 = rhs.eval_b(op, t, &buffer.segment_at(t)?)?;
    let mut mid = op.semigroup_apply(half, u0)?.add(&op.phi1_apply(half, &b0)?);
    let mut end = op.semigroup_apply(h, u0)?.add(&op.phi1_apply(h, &b0)?);
    let mut residual = f64::INFINITY;
    for iteration in 1..=cfg.picard_max_iter {
        let k_mid = Knot::new(op, t_mid, mid.clone())?;
        let k_end = Knot::new(op, t_end, end.clone())?;
        let b1 = rhs.eval_b(op, t_mid, &buffer.segment_with(vec![k_mid.clone()])?)?;
        let b2 = rhs.eval_b(op, t_end, &buffer.segment_with(vec![k_mid, k_end])?)?;
        let new_mid = vc_update(op, half, u0, &b0, &b1)?;
        let new_end = vc_update(op, half, &new_mid, &b1, &b2)?;
        residual = op.norm(&new_mid.sub(&mid)).max(op.norm(&new_end.sub(&end)));
        mid = new_mid;
        end = new_end;
        if !residual.is_finite() {
            break;
        }
        if residual < cfg.picard_tol {
            return Ok(PicardStep {
                mid,
                end,
                iterations: iteration,
                residual,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: cfg.picard_max_iter,
        residual,
    })
}

/// Step times `a, a + dt, ..., end` with the last step shortened to land on `end`.
fn step_times(a: f64, end: f64, dt: f64) -> Vec<f64> {
    let span = end - a;
    if span <= 0.0 {
        return vec![a];
    }
    let n = ((span / dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    let mut times: Vec<f64> = (0..n).map(|i| a + i as f64 * dt).collect();
    times.push(end);
    times
}

/// Marches the mild solution from the initial segment `phi` anchored at `a`.
pub fn solve(
    op: &SpectralOperator,
    rhs: &DelayRhs,
    phi: &Segment<'_>,
    a: f64,
    cfg: &StepperConfig,
) -> Result<SolveResult> {
    cfg.validate()?;
    if (phi.anchor() - a).abs() > 1e-12 * a.abs().max(1.0) {
        return Err(Error::invalid(format!(
            "initial segment is anchored at {} but a = {a}",
            phi.anchor()
        )));
    }
    if cfg.end_time < a {
        return Err(Error::invalid(format!("end_time {} precedes a = {a}", cfg.end_time)));
    }
    rhs.validate(op.n_species(), phi.horizon())?;
    if let Some(bound) = rhs.step_bound(a, cfg.end_time.max(a)) {
        if cfg.dt > bound * (1.0 + 1e-12) {
            return Err(Error::contract(
                Condition::StepBound,
                format!("dt = {} exceeds eta_ign = {bound}", cfg.dt),
            ));
        }
    }
    let mut result = SolveResult {
        buffer: HistoryBuffer::from_segment(phi),
        status: SolveStatus::Completed,
        diagnostics: Vec::new(),
        extension_checks: 0,
    };
    if phi.sup_norm(op) > cfg.blowup_norm {
        result.status = SolveStatus::Blowup { time: a };
        return Ok(result);
    }
    let times = step_times(a, cfg.end_time, cfg.dt);
    for (step, w) in times.windows(2).enumerate() {
        let (t, t_next) = (w[0], w[1]);
        match check_extension(rhs, phi, a, t, &result.buffer) {
            Ok(true) => result.extension_checks += 1,
            Ok(false) => {}
            Err(e) => {
                result.status = SolveStatus::ContractViolation {
                    step,
                    time: t,
                    detail: e.to_string(),
                };
                return Ok(result);
            }
        }
        let outcome = match cfg.scheme {
            Scheme::FrozenB => advance_frozen(op, rhs, t, t_next, &mut result),
            Scheme::Picard => advance_picard(op, rhs, t, t_next, cfg, &mut result),
        };
        match outcome {
            Ok(()) => {}
            Err(e @ Error::Contract { .. }) => {
                result.status = SolveStatus::ContractViolation {
                    step,
                    time: t,
                    detail: e.to_string(),
                };
                return Ok(result);
            }
            Err(e @ Error::NonConvergence { .. }) => {
                result.status = SolveStatus::NonConvergence {
                    step,
                    time: t,
                    detail: e.to_string(),
                };
                return Ok(result);
            }
            Err(e) => return Err(e),
        }
        let head = result.final_value();
        if !head.is_finite() || op.norm(head) > cfg.blowup_norm {
            result.status = SolveStatus::Blowup { time: t_next };
            return Ok(result);
        }
    }
    Ok(result)
}

/// Within the first `eta_ign` window, compares `F_d` on the running solution
/// with `F_d` on the constant extension of `phi`. Returns whether a check ran.
fn check_extension(rhs: &DelayRhs, phi: &Segment<'_>, a: f64, t: f64, buffer: &HistoryBuffer) -> Result<bool> {
    let mut ran = false;
    for ch in rhs.channels.iter().filter(|c| !c.measure.atoms.is_empty()) {
        if t - a > ch.measure.eta_ign_at(t)? {
            continue;
        }
        let running = crate::delay::eval_fd(&ch.measure, &ch.p, t, &buffer.segment_at(t)?)?;
        let extended = crate::delay::eval_fd(&ch.measure, &ch.p, t, &constant_extension(phi, t)?)?;
        let same = running
            .values()
            .iter()
            .zip(extended.values())
            .all(|(x, y)| x.to_bits() == y.to_bits());
        if !same {
            return Err(Error::contract(
                Condition::IgnoreInterval,
                format!("F_d on the solution differs from F_d on the extended initial history at t = {t}"),
            ));
        }
        ran = true;
    }
    Ok(ran)
}

fn advance_frozen(op: &SpectralOperator, rhs: &DelayRhs, t: f64, t_next: f64, result: &mut SolveResult) -> Result<()> {
    let u = step_frozen(op, rhs, t, t_next - t, &result.buffer)?;
    result.buffer.push(Knot::new(op, t_next, u)?)?;
    result.diagnostics.push(StepDiagnostic {
        time: t,
        h: t_next - t,
        iterations: 0,
        residual: 0.0,
        halved: false,
    });
    Ok(())
}

fn push_picard(
    op: &SpectralOperator,
    t: f64,
    t_next: f64,
    s: PicardStep,
    halved: bool,
    result: &mut SolveResult,
) -> Result<()> {
    let h = t_next - t;
    result.buffer.push(Knot::new(op, t + 0.5 * h, s.mid)?)?;
    result.buffer.push(Knot::new(op, t_next, s.end)?)?;
    result.diagnostics.push(StepDiagnostic {
        time: t,
        h,
        iterations: s.iterations,
        residual: s.residual,
        halved,
    });
    Ok(())
}

fn advance_picard(
    op: &SpectralOperator,
    rhs: &DelayRhs,
    t: f64,
    t_next: f64,
    cfg: &StepperConfig,
    result: &mut SolveResult,
) -> Result<()> {
    match step_picard(op, rhs, t, t_next - t, &result.buffer, cfg) {
        Ok(s) => push_picard(op, t, t_next, s, false, result),
        Err(Error::NonConvergence { .. }) => {
            let t_half = t + 0.5 * (t_next - t);
            let first = step_picard(op, rhs, t, t_half - t, &result.buffer, cfg)?;
            push_picard(op, t, t_half, first, true, result)?;
            let second = step_picard(op, rhs, t_half, t_next - t_half, &result.buffer, cfg)?;
            push_picard(op, t_half, t_next, second, true, result)
        }
        Err(e) => Err(e),
    }
}

/// `sup_{s in [lo, hi]} ||u(s) - v(s)||`, sampled at the union of knot times.
pub fn trajectory_distance(
    op: &SpectralOperator,
    u: &HistoryBuffer,
    v: &HistoryBuffer,
    lo: f64,
    hi: f64,
) -> Result<f64> {
    let mut times: Vec<f64> = u
        .knots()
        .iter()
        .chain(v.knots())
        .map(|k| k.time)
        .filter(|s| *s >= lo && *s <= hi)
        .collect();
    times.push(lo);
    times.push(hi);
    let mut best = 0.0_f64;
    for s in times {
        best = best.max(op.norm(&u.value_at(s)?.sub(&v.value_at(s)?)));
    }
    Ok(best)
}

#[derive(Debug, Clone)]
pub struct DependenceRow {
    pub initial_distance: f64,
    pub solution_distance: f64,
    /// `None` when the perturbation is exactly zero.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct DependenceReport {
    /// Gronwall constant, when it is computable for this right-hand side.
    pub c_t: Option<f64>,
    /// Radius of the ball containing all trajectories.
    pub radius: f64,
    pub rows: Vec<DependenceRow>,
    /// Perturbed solves that did not complete.
    pub failures: Vec<(usize, SolveStatus)>,
}

impl DependenceReport {
    pub fn max_ratio(&self) -> f64 {
        self.rows.iter().filter_map(|r| r.ratio).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty()
            && match self.c_t {
                Some(c) => self.rows.iter().filter_map(|r| r.ratio).all(|r| r <= c * (1.0 + 1e-9)),
                None => true,
            }
    }
}

/// Gronwall constant `e^{w tau} exp(L_G (1 + L_Fc) e^{w tau} tau)` with
/// `tau = T - a`, for right-hand sides where it is available.
pub fn dependence_constant(op: &SpectralOperator, rhs: &DelayRhs, radius: f64, tau: f64) -> Option<f64> {
    let growth = (op.omega() * tau).exp();
    let l_g = rhs.outer.lipschitz(radius);
    if l_g == 0.0 {
        return Some(growth);
    }
    let ch = rhs.single()?;
    if !ch.measure.atoms.is_empty() {
        return None;
    }
    let l_fc = rhs.l_fc(op, radius).ok()?;
    Some(growth * (l_g * (1.0 + l_fc) * growth * tau).exp())
}

/// Solves from `phi` and from every perturbation and reports
/// `sup_t ||u_t - u^n_t||_C / ||phi - phi^n||_C`.
pub fn continuous_dependence_experiment(
    op: &SpectralOperator,
    rhs: &DelayRhs,
    phi: &Segment<'_>,
    perturbations: &[Segment<'_>],
    a: f64,
    end: f64,
    cfg: &StepperConfig,
) -> Result<DependenceReport> {
    let cfg = StepperConfig {
        end_time: end,
        ..cfg.clone()
    };
    let base = solve(op, rhs, phi, a, &cfg)?;
    if !base.completed() {
        return Err(Error::invalid(format!(
            "unperturbed solve did not complete: {:?}",
            base.status
        )));
    }
    let r = phi.horizon();
    let sup = |buf: &HistoryBuffer| buf.knots().iter().fold(0.0_f64, |m, k| m.max(op.norm(&k.spectral)));
    let mut radius = sup(&base.buffer);
    let mut rows = Vec::with_capacity(perturbations.len());
    let mut failures = Vec::new();
    for (i, pert) in perturbations.iter().enumerate() {
        let sol = solve(op, rhs, pert, a, &cfg)?;
        if !sol.completed() {
            failures.push((i, sol.status.clone()));
            continue;
        }
        radius = radius.max(sup(&sol.buffer));
        let initial_distance = sup_distance(phi, pert, op)?;
        let solution_distance = trajectory_distance(op, &base.buffer, &sol.buffer, a - r, end)?;
        let ratio = (initial_distance > 0.0).then(|| solution_distance / initial_distance);
        rows.push(DependenceRow {
            initial_distance,
            solution_distance,
            ratio,
        });
    }
    Ok(DependenceReport {
        c_t: dependence_constant(op, rhs, radius, end - a),
        radius,
        rows,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delay::{DelayAtom, DelayMeasure, PointMap};
    use crate::rhs::{OuterKind, OuterMap};
    use crate::spectral::SpatialGrid;

    fn scalar_op(lambda: f64) -> SpectralOperator {
        SpectralOperator::with_eigenvalues(SpatialGrid::point(), 1, vec![lambda]).unwrap()
    }

    fn delayed(d: f64) -> DelayRhs {
        DelayRhs::new(
            DelayMeasure::atoms_only(vec![DelayAtom::constant(1.0, 1.0)], 1.0, 1.0),
            PointMap::Identity,
            OuterMap::affine(d),
        )
    }

    fn constant_rhs(c: f64) -> DelayRhs {
        let mut rhs = delayed(0.0);
        rhs.outer = OuterKind::Constant(vec![c]).into();
        rhs
    }

    fn ones(op: &SpectralOperator) -> Segment<'static> {
        Segment::constant(op, 0.0, 1.0, StateVector::scalar(&[1.0])).unwrap()
    }

    #[test]
    fn frozen_step_examples() {
        let op = scalar_op(1.0);
        let mut zero = delayed(0.0);
        zero.outer = OuterKind::Zero.into();
        let buf = HistoryBuffer::from_segment(&ones(&op));
        let u = step_frozen(&op, &zero, 0.0, 1.0, &buf).unwrap();
        assert!((u.values()[0] - (-1f64).exp()).abs() < 1e-15);

        let op0 = scalar_op(0.0);
        let buf = HistoryBuffer::from_segment(&ones(&op0));
        assert_eq!(
            step_frozen(&op0, &constant_rhs(1.0), 0.0, 0.25, &buf).unwrap().values()[0],
            1.25
        );
        assert_eq!(
            step_frozen(&op0, &delayed(0.0), 0.0, 0.5, &buf).unwrap().values()[0],
            1.5
        );
    }

    #[test]
    fn picard_step_examples() {
        let op = scalar_op(0.7);
        let mut zero = delayed(0.0);
        zero.outer = OuterKind::Zero.into();
        let cfg = StepperConfig::new(Scheme::Picard, 0.1, 1.0);
        let buf = HistoryBuffer::from_segment(&ones(&op));
        let s = step_picard(&op, &zero, 0.0, 0.1, &buf, &cfg).unwrap();
        assert_eq!(s.iterations, 1);
        assert!((s.end.values()[0] - (-0.07f64).exp()).abs() < 1e-15);

        let op0 = scalar_op(0.0);
        let buf = HistoryBuffer::from_segment(&ones(&op0));
        let eq = step_picard(&op0, &delayed(1.0), 0.0, 0.1, &buf, &cfg).unwrap();
        assert!((eq.end.values()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn linear_benchmark_first_window() {
        let op = scalar_op(0.0);
        let cfg = StepperConfig::new(Scheme::Picard, 0.1, 1.0);
        let res = solve(&op, &delayed(0.0), &ones(&op), 0.0, &cfg).unwrap();
        assert!(res.completed());
        assert!((res.final_value().values()[0] - 2.0).abs() < 1e-6);
        assert!(res.extension_checks >= 10);
    }

    #[test]
    fn trivial_horizon_returns_initial_history() {
        let op = scalar_op(0.0);
        let cfg = StepperConfig::new(Scheme::FrozenB, 0.1, 0.0);
        let res = solve(&op, &delayed(0.0), &ones(&op), 0.0, &cfg).unwrap();
        assert_eq!(res.buffer.knots().len(), 2);
        assert!(res.completed());
    }

    #[test]
    fn step_bound_is_enforced() {
        let op = scalar_op(0.0);
        let mut rhs = delayed(0.0);
        rhs.channels[0].measure.eta_ign = crate::profile::Profile::Constant(0.5);
        let cfg = StepperConfig::new(Scheme::FrozenB, 0.75, 2.0);
        let err = solve(&op, &rhs, &ones(&op), 0.0, &cfg).unwrap_err();
        assert!(err.is_contract(Condition::StepBound));
    }

    #[test]
    fn blowup_is_detected() {
        let op = scalar_op(-5.0);
        let mut cfg = StepperConfig::new(Scheme::FrozenB, 0.1, 100.0);
        cfg.blowup_norm = 1e3;
        let res = solve(&op, &constant_rhs(0.0), &ones(&op), 0.0, &cfg).unwrap();
        assert!(matches!(res.status, SolveStatus::Blowup { .. }));
    }

    #[test]
    fn pure_semigroup_constant() {
        let op = scalar_op(0.0);
        let mut zero = delayed(0.0);
        zero.outer = OuterKind::Zero.into();
        assert_eq!(dependence_constant(&op, &zero, 1.0, 1.0), Some(1.0));
        assert_eq!(dependence_constant(&op, &delayed(0.0), 1.0, 1.0), None);
    }
}
