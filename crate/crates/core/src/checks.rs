//! Assumption-check suite run against a model on seeded random probes.

use std::fmt;

use rand::{Rng, RngExt};

use crate::delay;
use crate::error::{Error, Result};
use crate::history::Segment;
use crate::models::{boundary_history, Model};
use crate::rhs::{linear_growth_probe, quasipositivity_probe};
use crate::state::StateVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    Fail,
    Skipped,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Pass => "PASS",
            Outcome::Fail => "FAIL",
            Outcome::Skipped => "SKIP",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckLine {
    pub name: String,
    pub outcome: Outcome,
    pub detail: String,
}

impl CheckLine {
    fn new(name: impl Into<String>, outcome: Outcome, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            outcome,
            detail: detail.into(),
        }
    }

    fn verdict(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self::new(name, if passed { Outcome::Pass } else { Outcome::Fail }, detail)
    }
}

impl fmt::Display for CheckLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.outcome, self.name, self.detail)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChecksConfig {
    pub n_probes: usize,
    pub n_mutations: usize,
    pub n_knots: usize,
    /// Amplitude of random histories.
    pub scale: f64,
    /// Probe times are drawn from `[a, a + t_span]`.
    pub t_span: f64,
    pub normalization_tol: f64,
}

impl Default for ChecksConfig {
    fn default() -> Self {
        Self {
            n_probes: 20,
            n_mutations: 100,
            n_knots: 33,
            scale: 2.0,
            t_span: 10.0,
            normalization_tol: 1e-12,
        }
    }
}

pub fn all_passed(lines: &[CheckLine]) -> bool {
    lines.iter().all(|l| l.outcome != Outcome::Fail)
}

fn probes(model: &Model, cfg: &ChecksConfig, rng: &mut impl Rng) -> Result<Vec<(f64, Segment<'static>)>> {
    (0..cfg.n_probes)
        .map(|_| {
            let t = model.a + rng.random_range(0.0..=cfg.t_span);
            Ok((t, model.random_history(rng, t, cfg.n_knots, cfg.scale)?))
        })
        .collect()
}

/// Runs every applicable check; a failing check is reported, not returned as an error.
pub fn run_checks(model: &Model, cfg: &ChecksConfig, rng: &mut impl Rng) -> Result<Vec<CheckLine>> {
    if cfg.n_probes == 0 || cfg.n_mutations == 0 || cfg.n_knots < 2 {
        return Err(Error::invalid(
            "checks need n_probes >= 1, n_mutations >= 1 and n_knots >= 2",
        ));
    }
    let op = &model.op;
    let mut lines = Vec::new();
    let multi = model.rhs.channels.len() > 1;
    for (c, ch) in model.rhs.channels.iter().enumerate() {
        let tag = |name: &str| {
            if multi {
                format!("{name}[{c}]")
            } else {
                name.to_string()
            }
        };
        let m = &ch.measure;

        let samples = probes(model, cfg, rng)?;
        let rep = delay::check_a1(m, &samples);
        let errors: Vec<&String> = rep.probes.iter().filter_map(|p| p.variation.as_ref().err()).collect();
        lines.push(CheckLine::verdict(
            tag("bounded_variation"),
            rep.passed(),
            match errors.first() {
                Some(e) => format!("{} probe(s) failed to evaluate: {e}", errors.len()),
                None => format!("max variation {:.6e} <= M_Vg {}", rep.max_variation(), rep.m_vg),
            },
        ));

        if m.density.is_some() {
            let a = probes(model, cfg, rng)?;
            let b = probes(model, cfg, rng)?;
            let pairs: Vec<_> = a.into_iter().zip(b).collect();
            let rep = delay::check_a4(m, op, &pairs)?;
            let worst = rep
                .pairs
                .iter()
                .map(|p| p.variation - p.bound)
                .fold(f64::NEG_INFINITY, f64::max);
            lines.push(CheckLine::verdict(
                tag("variation_lipschitz"),
                rep.passed(),
                format!(
                    "L_Vgc {}, {} pairs, max excess {:.3e}",
                    rep.l_vgc,
                    rep.pairs.len(),
                    worst
                ),
            ));
        } else {
            lines.push(CheckLine::new(
                tag("variation_lipschitz"),
                Outcome::Skipped,
                "no density part",
            ));
        }

        if m.atoms.is_empty() {
            lines.push(CheckLine::new(
                tag("ignore_interval_structural"),
                Outcome::Skipped,
                "no atoms",
            ));
        } else {
            let t = model.a + rng.random_range(0.0..=cfg.t_span);
            let psi = model.random_history(rng, t, cfg.n_knots, cfg.scale)?;
            let rep = delay::check_a5_structural(m, op, t, &psi, cfg.n_mutations, rng)?;
            lines.push(CheckLine::verdict(
                tag("ignore_interval_structural"),
                rep.passed(),
                match rep.violations.first() {
                    Some(v) => format!("{} violation(s), first: {}", rep.violations.len(), v.detail),
                    None => format!("{} mutations x {} atoms bit-identical", rep.mutations, rep.atoms),
                },
            ));
        }

        if model.name == "lotka_volterra" {
            let mut worst: f64 = 0.0;
            let mut failure = None;
            for (t, psi) in probes(model, cfg, rng)? {
                match delay::check_normalization(m, t, &psi, cfg.normalization_tol) {
                    Ok(s) => worst = worst.max((s.total() - 1.0).abs()),
                    Err(e) => {
                        failure = Some(e.to_string());
                        break;
                    }
                }
            }
            lines.push(match failure {
                Some(e) => CheckLine::verdict(tag("normalization"), false, e),
                None => CheckLine::verdict(tag("normalization"), true, format!("max |total - 1| = {worst:.3e}")),
            });
        }
    }

    let boundary: Vec<(f64, Segment<'static>, usize)> = (0..cfg.n_probes)
        .map(|k| {
            let species = k % op.n_species();
            let t = model.a + rng.random_range(0.0..=cfg.t_span);
            Ok((
                t,
                boundary_history(op, rng, t, model.horizon, cfg.n_knots, cfg.scale, species)?,
                species,
            ))
        })
        .collect::<Result<_>>()?;
    let rep = quasipositivity_probe(&model.rhs, &boundary)?;
    let min = rep.probes.iter().map(|p| p.min_value).fold(f64::INFINITY, f64::min);
    lines.push(CheckLine::verdict(
        "quasipositivity",
        rep.passed(),
        format!("{} boundary probes, min B^i = {min:.3e}", rep.probes.len()),
    ));

    let growth_probes: Vec<(f64, StateVector, StateVector)> = probes(model, cfg, rng)?
        .into_iter()
        .map(|(t, psi)| Ok((t, psi.head().nodal.clone(), model.rhs.eval_f(t, &psi)?)))
        .collect::<Result<_>>()?;
    lines.push(match linear_growth_probe(&model.rhs, op, &growth_probes) {
        Ok(rep) => CheckLine::verdict(
            "linear_growth",
            rep.passed(),
            format!(
                "k1 = {}, k2 = {}, max ratio {:.6}",
                rep.growth.k1,
                rep.growth.k2,
                rep.max_ratio()
            ),
        ),
        Err(Error::Inapplicable(why)) => CheckLine::new("linear_growth", Outcome::Skipped, why),
        Err(e) => return Err(e),
    });
    Ok(lines)
}
