//! Brute-force reference solutions by waveform relaxation.
//!
//! A sweep evaluates `B` along the whole previous iterate and rebuilds
//! `u(t_i) = T(t_i - a) phi(0) + int_a^{t_i} T(t_i - s) B(s) ds` on a uniform
//! grid, with `B` linear between grid points and the semigroup integrated
//! exactly per mode. Nothing here calls into the stepper: the weights, the
//! time grid and the interpolation used for comparison are computed locally.

use crate::error::{Error, Result};
use crate::history::{HistoryBuffer, Knot, Segment};
use crate::rhs::DelayRhs;
use crate::spectral::SpectralOperator;
use crate::state::StateVector;

pub const MIN_GRID: usize = 64;

#[derive(Debug, Clone)]
pub struct ReferenceSolution {
    /// History of `phi` followed by the grid values on `(a, T]`.
    pub buffer: HistoryBuffer,
    pub sweeps: usize,
    /// Sup-change of each sweep, in order.
    pub residuals: Vec<f64>,
}

impl ReferenceSolution {
    /// Ratios of consecutive residuals.
    pub fn contraction_ratios(&self) -> Vec<f64> {
        self.residuals.windows(2).map(|w| w[1] / w[0]).collect()
    }
}

/// Weights `(w0, w1)` with `int_0^d e^{-l (d - s)} [(1 - s/d) f0 + (s/d) f1] ds = w0 f0 + w1 f1`.
pub fn linear_weights(lambda: f64, d: f64) -> (f64, f64) {
    let z = lambda * d;
    if z.abs() < 0.125 {
        // w1/d = sum (-z)^k / (k+2)!, w0/d = sum (k+1) (-z)^k / (k+2)!
        let (mut w0, mut w1) = (0.0, 0.0);
        let mut term = 0.5;
        for k in 0..16 {
            w1 += term;
            w0 += (k + 1) as f64 * term;
            term *= -z / (k + 3) as f64;
        }
        (w0 * d, w1 * d)
    } else {
        let e = (-z).exp();
        let w1 = (z - 1.0 + e) / (lambda * z);
        let w0 = (1.0 - e * (1.0 + z)) / (lambda * z);
        (w0, w1)
    }
}

fn decay(op: &SpectralOperator, t: f64, v: &StateVector) -> StateVector {
    let mut out = v.clone();
    for (c, l) in out.values_mut().iter_mut().zip(op.eigenvalues()) {
        *c *= (-l * t).exp();
    }
    out
}

fn weighted_sum(op: &SpectralOperator, w0: &[f64], b0: &StateVector, w1: &[f64], b1: &StateVector) -> StateVector {
    let mut out = op.zeros();
    for (i, c) in out.values_mut().iter_mut().enumerate() {
        *c = w0[i] * b0.values()[i] + w1[i] * b1.values()[i];
    }
    out
}

/// Waveform relaxation on `[a, end]` with `grid_n` uniform intervals.
///
/// When the right-hand side has atoms, `end - a` must not exceed `eta_ign`
/// so that delay evaluations only ever look into `phi`.
#[allow(clippy::too_many_arguments)]
pub fn solve_reference(
    op: &SpectralOperator,
    rhs: &DelayRhs,
    phi: &Segment<'_>,
    a: f64,
    end: f64,
    grid_n: usize,
    tol: f64,
    max_sweeps: usize,
) -> Result<ReferenceSolution> {
    if grid_n < MIN_GRID {
        return Err(Error::invalid(format!("grid_n must be >= {MIN_GRID}, got {grid_n}")));
    }
    if !(end > a) {
        return Err(Error::invalid(format!("end {end} must exceed a = {a}")));
    }
    if !(tol > 0.0) || max_sweeps == 0 {
        return Err(Error::invalid("tol must be > 0 and max_sweeps >= 1"));
    }
    if (phi.anchor() - a).abs() > 1e-12 * a.abs().max(1.0) {
        return Err(Error::invalid(format!(
            "initial segment is anchored at {} but a = {a}",
            phi.anchor()
        )));
    }
    rhs.validate(op.n_species(), phi.horizon())?;
    if let Some(bound) = rhs.step_bound(a, end) {
        if end - a > bound * (1.0 + 1e-12) {
            return Err(Error::invalid(format!(
                "window length {} exceeds eta_ign = {bound}; chain windows instead",
                end - a
            )));
        }
    }
    let d = (end - a) / grid_n as f64;
    let times: Vec<f64> = (0..=grid_n)
        .map(|i| if i == grid_n { end } else { a + i as f64 * d })
        .collect();
    let (w0, w1): (Vec<f64>, Vec<f64>) = op.eigenvalues().iter().map(|l| linear_weights(*l, d)).unzip();
    let u0 = phi.head().spectral.clone();

    let mut iterate: Vec<StateVector> = times.iter().map(|t| decay(op, t - a, &u0)).collect();
    let mut residuals = Vec::new();
    loop {
        let buffer = assemble(op, phi, &times, &iterate)?;
        let b: Vec<StateVector> = times
            .iter()
            .map(|t| rhs.eval_b(op, *t, &buffer.segment_at(*t)?))
            .collect::<Result<_>>()?;
        let mut next = Vec::with_capacity(times.len());
        let mut integral = op.zeros();
        next.push(u0.clone());
        for i in 0..grid_n {
            integral = decay(op, d, &integral).add(&weighted_sum(op, &w0, &b[i], &w1, &b[i + 1]));
            next.push(decay(op, times[i + 1] - a, &u0).add(&integral));
        }
        let change = next
            .iter()
            .zip(&iterate)
            .map(|(x, y)| op.norm(&x.sub(y)))
            .fold(0.0, f64::max);
        residuals.push(change);
        iterate = next;
        if !change.is_finite() {
            return Err(Error::NonConvergence {
                iterations: residuals.len(),
                residual: change,
            });
        }
        if change < tol {
            return Ok(ReferenceSolution {
                buffer: assemble(op, phi, &times, &iterate)?,
                sweeps: residuals.len(),
                residuals,
            });
        }
        if residuals.len() >= max_sweeps {
            return Err(Error::NonConvergence {
                iterations: residuals.len(),
                residual: change,
            });
        }
    }
}

fn assemble(op: &SpectralOperator, phi: &Segment<'_>, times: &[f64], values: &[StateVector]) -> Result<HistoryBuffer> {
    let mut buffer = HistoryBuffer::from_segment(phi);
    for (t, v) in times.iter().zip(values).skip(1) {
        buffer.push(Knot::new(op, *t, v.clone())?)?;
    }
    Ok(buffer)
}

/// Reference solution on `[a, end]` built window by window, each window no
/// longer than the smallest `eta_ign` and carrying `grid_n` intervals.
#[allow(clippy::too_many_arguments)]
pub fn solve_reference_chained(
    op: &SpectralOperator,
    rhs: &DelayRhs,
    phi: &Segment<'_>,
    a: f64,
    end: f64,
    grid_n: usize,
    tol: f64,
    max_sweeps: usize,
) -> Result<ReferenceSolution> {
    let window = rhs.step_bound(a, end).unwrap_or(end - a);
    let mut total = HistoryBuffer::from_segment(phi);
    let mut sweeps = 0;
    let mut residuals = Vec::new();
    let mut start = a;
    while start < end - 1e-12 * end.abs().max(1.0) {
        let stop = (start + window).min(end);
        let stop = if end - stop < 1e-9 * window { end } else { stop };
        let seg = total.segment_at(start)?.to_owned_segment();
        let piece = solve_reference(op, rhs, &seg, start, stop, grid_n, tol, max_sweeps)?;
        for k in piece.buffer.knots().iter().filter(|k| k.time > start) {
            total.push(k.clone())?;
        }
        sweeps += piece.sweeps;
        residuals.extend(piece.residuals);
        start = stop;
    }
    Ok(ReferenceSolution {
        buffer: total,
        sweeps,
        residuals,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompareNorm {
    /// Max over the union of knot times of the spatial norm of the difference.
    Sup,
    /// `sqrt(int ||u - v||^2 dt)` over the common range.
    L2Time,
}

/// Piecewise-linear value of `buffer` at `t`, located by bisection.
fn interpolate(buffer: &HistoryBuffer, t: f64) -> StateVector {
    let knots = buffer.knots();
    let i = knots.partition_point(|k| k.time <= t);
    if i == 0 {
        return knots[0].spectral.clone();
    }
    if i == knots.len() {
        return knots[i - 1].spectral.clone();
    }
    let (k0, k1) = (&knots[i - 1], &knots[i]);
    if k0.time == t {
        return k0.spectral.clone();
    }
    StateVector::lerp(&k0.spectral, &k1.spectral, (t - k0.time) / (k1.time - k0.time))
}

/// Discrepancy between two solutions over `[lo, hi]`, clipped to their common range.
pub fn compare_on(
    op: &SpectralOperator,
    u: &HistoryBuffer,
    v: &HistoryBuffer,
    norm: CompareNorm,
    lo: f64,
    hi: f64,
) -> Result<f64> {
    let (Some(uf), Some(ul), Some(vf), Some(vl)) =
        (u.knots().first(), u.knots().last(), v.knots().first(), v.knots().last())
    else {
        return Err(Error::Coverage { start: lo, end: hi });
    };
    let lo = lo.max(uf.time).max(vf.time);
    let hi = hi.min(ul.time).min(vl.time);
    if !(hi >= lo) {
        return Err(Error::Coverage { start: lo, end: hi });
    }
    let mut times: Vec<f64> = u
        .knots()
        .iter()
        .chain(v.knots())
        .map(|k| k.time)
        .filter(|t| *t > lo && *t < hi)
        .collect();
    times.push(lo);
    times.push(hi);
    times.sort_by(f64::total_cmp);
    times.dedup();
    let diff = |t: f64| op.norm(&interpolate(u, t).sub(&interpolate(v, t)));
    Ok(match norm {
        CompareNorm::Sup => times.iter().map(|t| diff(*t)).fold(0.0, f64::max),
        CompareNorm::L2Time => {
            // the difference is linear on each piece, so Simpson is exact for its square
            let mut acc = 0.0;
            for w in times.windows(2) {
                let (x, y) = (w[0], w[1]);
                acc += (y - x) / 6.0 * (diff(x).powi(2) + 4.0 * diff(0.5 * (x + y)).powi(2) + diff(y).powi(2));
            }
            acc.sqrt()
        }
    })
}

/// Discrepancy over the whole common range.
pub fn compare(
    op: &SpectralOperator,
    oracle: &HistoryBuffer,
    stepper: &HistoryBuffer,
    norm: CompareNorm,
) -> Result<f64> {
    compare_on(op, oracle, stepper, norm, f64::NEG_INFINITY, f64::INFINITY)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delay::{DelayAtom, DelayMeasure, PointMap};
    use crate::models::{preset_linear_benchmark, LinearParams};
    use crate::rhs::{OuterKind, OuterMap};
    use crate::spectral::{Boundary, SpatialGrid};

    #[test]
    fn weights_match_quadrature() {
        for (l, d) in [(0.0, 0.1), (1e-3, 0.5), (3.0, 0.2), (40.0, 0.01), (-0.5, 0.3)] {
            let (w0, w1) = linear_weights(l, d);
            let n = 20000;
            let (mut q0, mut q1) = (0.0, 0.0);
            for j in 0..n {
                let s = (j as f64 + 0.5) / n as f64 * d;
                let k = (-l * (d - s)).exp() * d / n as f64;
                q0 += k * (1.0 - s / d);
                q1 += k * s / d;
            }
            assert!((w0 - q0).abs() < 1e-8 * d, "{l} {d}");
            assert!((w1 - q1).abs() < 1e-8 * d, "{l} {d}");
        }
    }

    #[test]
    fn zero_rhs_converges_in_one_sweep() {
        let op = SpectralOperator::laplacian(SpatialGrid::interval(1.0, 8, Boundary::Dirichlet), &[0.2]).unwrap();
        let rhs = crate::rhs::DelayRhs::new(
            DelayMeasure::atoms_only(vec![DelayAtom::constant(1.0, 1.0)], 1.0, 1.0),
            PointMap::Identity,
            OuterMap::from(OuterKind::Zero),
        );
        let mut modes = vec![0.0; 8];
        modes[0] = 1.0;
        let u0 = op.state_from_modes(&[modes]).unwrap();
        let phi = Segment::constant(&op, 0.0, 1.0, u0.clone()).unwrap();
        let r = solve_reference(&op, &rhs, &phi, 0.0, 1.0, 64, 1e-12, 5).unwrap();
        assert_eq!(r.sweeps, 1);
        let end = r.buffer.last().unwrap();
        let expect = (-op.eigenvalues()[0]).exp();
        assert!((end.spectral.values()[0] - expect).abs() < 1e-14);
    }

    #[test]
    fn linear_benchmark_first_window() {
        let m = preset_linear_benchmark(&LinearParams::default()).unwrap();
        let phi = m.phi(2).unwrap();
        let r = solve_reference(&m.op, &m.rhs, &phi, 0.0, 1.0, 64, 1e-13, 10).unwrap();
        assert!((r.buffer.last().unwrap().spectral.values()[0] - 2.0).abs() < 2.0 / 64.0);
        let chained = solve_reference_chained(&m.op, &m.rhs, &phi, 0.0, 2.0, 256, 1e-13, 20).unwrap();
        assert!((chained.buffer.value_at(2.0).unwrap().values()[0] - 3.5).abs() < 1e-4);
    }

    #[test]
    fn long_atom_window_is_rejected() {
        let m = preset_linear_benchmark(&LinearParams::default()).unwrap();
        let phi = m.phi(2).unwrap();
        assert!(solve_reference(&m.op, &m.rhs, &phi, 0.0, 1.5, 64, 1e-12, 5).is_err());
    }

    #[test]
    fn compare_examples() {
        let op = SpectralOperator::laplacian(SpatialGrid::point(), &[0.0]).unwrap();
        let mut u = HistoryBuffer::new(1.0).unwrap();
        let mut v = HistoryBuffer::new(1.0).unwrap();
        for i in 0..=10 {
            let t = i as f64 * 0.1;
            u.push(Knot::new(&op, t, op.constant_state(&[t * t]).unwrap()).unwrap())
                .unwrap();
        }
        for i in 0..=7 {
            let t = i as f64 / 7.0;
            v.push(Knot::new(&op, t, op.constant_state(&[0.25 + t]).unwrap()).unwrap())
                .unwrap();
        }
        assert_eq!(compare(&op, &u, &u, CompareNorm::Sup).unwrap(), 0.0);
        let mut w = HistoryBuffer::new(1.0).unwrap();
        for k in u.knots() {
            let s = k.spectral.add(&op.constant_state(&[0.3]).unwrap());
            w.push(Knot::new(&op, k.time, s).unwrap()).unwrap();
        }
        assert!((compare(&op, &u, &w, CompareNorm::Sup).unwrap() - 0.3).abs() < 1e-12);
        assert!((compare(&op, &u, &w, CompareNorm::L2Time).unwrap() - 0.3).abs() < 1e-12);
        assert!(compare(&op, &u, &v, CompareNorm::Sup).unwrap() > 0.0);
        let mut late = HistoryBuffer::new(1.0).unwrap();
        late.push(Knot::new(&op, 5.0, op.zeros()).unwrap()).unwrap();
        late.push(Knot::new(&op, 6.0, op.zeros()).unwrap()).unwrap();
        assert!(matches!(
            compare(&op, &u, &late, CompareNorm::Sup),
            Err(Error::Coverage { .. })
        ));
    }
}
