//! Batch front end behind the `sddsim` binary.
//!
//! Exit status: 0 when every check passes, 1 when any is flagged, 2 on
//! input errors. Every CSV starts with a `# seed=... model=...` line.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::checks::{self, Outcome};
use crate::config::{OutputRepresentation, RunConfig};
use crate::delay::{DelayAtom, DelayMeasure, PointMap};
use crate::error::{Error, Result};
use crate::history::{Knot, Segment};
use crate::invariance::{self, default_h_ladder, ConstraintSet, Verdict};
use crate::models::{boundary_history, random_history, Model};
use crate::oracle::{self, CompareNorm};
use crate::rhs::{DelayRhs, OuterKind, OuterMap};
use crate::state::Representation;
use crate::stepper::{self, SolveResult, SolveStatus, StepperConfig};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FLAGGED: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Subcommand {
    Solve,
    Verify,
    Invariance,
    Dependence,
    Checks,
}

impl Subcommand {
    fn name(self) -> &'static str {
        match self {
            Subcommand::Solve => "solve",
            Subcommand::Verify => "verify",
            Subcommand::Invariance => "invariance",
            Subcommand::Dependence => "dependence",
            Subcommand::Checks => "checks",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "sddsim", about = "Semilinear parabolic PDEs with state-dependent delays")]
pub struct Args {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, value_enum)]
    pub subcommand: Subcommand,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

/// What a subcommand produced: a human-readable report and whether it passed.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub passed: bool,
    pub text: String,
}

impl RunReport {
    pub fn exit_code(&self) -> i32 {
        if self.passed {
            EXIT_PASS
        } else {
            EXIT_FLAGGED
        }
    }
}

struct Context<'c> {
    cfg: &'c RunConfig,
    model: Model,
    seed: u64,
    out: &'c Path,
    subcommand: Subcommand,
}

impl Context<'_> {
    fn preamble(&self) -> String {
        format!(
            "seed={} model={} subcommand={}",
            self.seed,
            self.model.name,
            self.subcommand.name()
        )
    }

    fn stepper(&self) -> StepperConfig {
        self.cfg
            .stepper
            .clone()
            .unwrap_or_else(|| self.model.default_stepper(self.model.a + 10.0))
    }

    fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }

    fn representation(&self) -> Representation {
        match self.cfg.output.representation {
            OutputRepresentation::Collocation => Representation::Collocation,
            OutputRepresentation::Spectral => Representation::Spectral,
        }
    }

    /// CSV with the preamble line, header and rows.
    fn write_table(&self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let mut file = fs::File::create(self.out.join(name))?;
        writeln!(file, "# {}", self.preamble())?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }

    fn write_trajectory(&self, name: &str, result: &SolveResult) -> Result<()> {
        let file = fs::File::create(self.out.join(name))?;
        result.buffer.write_csv(
            std::io::BufWriter::new(file),
            self.representation(),
            Some(&self.preamble()),
        )
    }

    fn constraint(&self) -> Option<ConstraintSet> {
        self.cfg.constraint.clone().or_else(|| self.model.constraint.clone())
    }
}

fn status_line(status: &SolveStatus) -> String {
    match status {
        SolveStatus::Completed => "completed".into(),
        SolveStatus::Blowup { time } => format!("blowup at t = {time}"),
        SolveStatus::ContractViolation { step, time, detail } => {
            format!("contract violation at step {step}, t = {time}: {detail}")
        }
        SolveStatus::NonConvergence { step, time, detail } => {
            format!("non-convergence at step {step}, t = {time}: {detail}")
        }
    }
}

fn f(x: f64) -> String {
    x.to_string()
}

fn run_solve(ctx: &Context<'_>) -> Result<RunReport> {
    let cfg = ctx.stepper();
    let phi = ctx.model.phi(ctx.cfg.history_knots)?;
    let result = stepper::solve(&ctx.model.op, &ctx.model.rhs, &phi, ctx.model.a, &cfg)?;
    ctx.write_trajectory("trajectory.csv", &result)?;
    let rows: Vec<Vec<String>> = result
        .diagnostics
        .iter()
        .map(|d| {
            vec![
                f(d.time),
                f(d.h),
                d.iterations.to_string(),
                f(d.residual),
                d.halved.to_string(),
            ]
        })
        .collect();
    ctx.write_table(
        "diagnostics.csv",
        &["time", "h", "iterations", "residual", "halved"],
        &rows,
    )?;
    let mut text = String::new();
    writeln!(text, "model: {}", ctx.model.description).ok();
    writeln!(
        text,
        "scheme: {:?}, dt = {}, end_time = {}",
        cfg.scheme, cfg.dt, cfg.end_time
    )
    .ok();
    writeln!(text, "status: {}", status_line(&result.status)).ok();
    writeln!(text, "steps: {}", result.diagnostics.len()).ok();
    writeln!(text, "extension checks: {}", result.extension_checks).ok();
    let head = result.buffer.last().expect("buffer is never empty");
    writeln!(text, "final time: {}", head.time).ok();
    writeln!(text, "final norm: {}", ctx.model.op.norm(&head.spectral)).ok();
    Ok(RunReport {
        passed: result.completed(),
        text,
    })
}

fn run_verify(ctx: &Context<'_>) -> Result<RunReport> {
    let v = &ctx.cfg.verify;
    let base = ctx.stepper();
    let end = v.end_time.unwrap_or(base.end_time);
    let (op, rhs, a) = (&ctx.model.op, &ctx.model.rhs, ctx.model.a);
    let phi = ctx.model.phi(ctx.cfg.history_knots)?;
    let reference = oracle::solve_reference_chained(op, rhs, &phi, a, end, v.grid_n, v.tol, v.max_sweeps)?;
    let mut rows = Vec::new();
    let mut text = String::new();
    let mut passed = true;
    writeln!(
        text,
        "oracle: grid_n = {} per window, {} sweeps, final residual {:e}",
        v.grid_n,
        reference.sweeps,
        reference.residuals.last().copied().unwrap_or(0.0)
    )
    .ok();
    for scheme in &v.schemes {
        let mut previous: Option<(f64, f64)> = None;
        for &dt in &v.dts {
            let cfg = StepperConfig {
                scheme: *scheme,
                dt,
                end_time: end,
                ..base.clone()
            };
            let result = stepper::solve(op, rhs, &phi, a, &cfg)?;
            if !result.completed() {
                passed = false;
                writeln!(text, "{scheme:?} dt = {dt}: {}", status_line(&result.status)).ok();
                rows.push(vec![
                    format!("{scheme:?}"),
                    f(dt),
                    "nan".into(),
                    "nan".into(),
                    String::new(),
                ]);
                continue;
            }
            let sup = oracle::compare_on(op, &reference.buffer, &result.buffer, CompareNorm::Sup, a, end)?;
            let l2 = oracle::compare_on(op, &reference.buffer, &result.buffer, CompareNorm::L2Time, a, end)?;
            let order = previous.map(|(pdt, perr)| (perr / sup).ln() / (pdt / dt).ln());
            if v.max_discrepancy.is_some_and(|m| !(sup <= m)) {
                passed = false;
            }
            writeln!(
                text,
                "{scheme:?} dt = {dt}: sup {sup:.6e}, l2_time {l2:.6e}{}",
                order.map(|o| format!(", order {o:.3}")).unwrap_or_default()
            )
            .ok();
            rows.push(vec![
                format!("{scheme:?}"),
                f(dt),
                f(sup),
                f(l2),
                order.map(f).unwrap_or_default(),
            ]);
            previous = Some((dt, sup));
        }
    }
    ctx.write_table("verify.csv", &["scheme", "dt", "sup", "l2_time", "order_sup"], &rows)?;
    Ok(RunReport { passed, text })
}

fn run_invariance(ctx: &Context<'_>) -> Result<RunReport> {
    let set = ctx
        .constraint()
        .ok_or_else(|| Error::invalid("invariance needs a constraint set (preset or [constraint])"))?;
    let ic = &ctx.cfg.invariance;
    let model = &ctx.model;
    let op = &model.op;
    let h_values = ic.h_values.clone().unwrap_or_else(default_h_ladder);
    let cfg = ctx.stepper();
    let mut rng = ctx.rng();
    let mut text = String::new();
    let mut passed = true;

    let mut histories = vec![model.phi(ctx.cfg.history_knots)?];
    for _ in 0..ic.n_trajectories {
        histories.push(random_history(
            op,
            &mut rng,
            model.a,
            model.horizon,
            ic.n_knots,
            ic.scale,
            true,
        )?);
    }
    let mut monitor_rows = Vec::new();
    for (k, phi) in histories.iter().enumerate() {
        let result = stepper::solve(op, &model.rhs, phi, model.a, &cfg)?;
        let rep = invariance::monitor_trajectory(&set, op, &result)?;
        let ok = result.completed() && rep.passed();
        passed &= ok;
        writeln!(
            text,
            "{} trajectory {k}: {}, max distance {:.3e} (tolerance {:e})",
            if ok { "PASS" } else { "FAIL" },
            status_line(&result.status),
            rep.max_distance(),
            rep.tolerance
        )
        .ok();
        monitor_rows.extend(rep.distances.iter().map(|(t, d)| vec![k.to_string(), f(*t), f(*d)]));
    }
    ctx.write_table("monitor.csv", &["trajectory", "time", "distance"], &monitor_rows)?;

    let mut header: Vec<String> = vec!["probe".into(), "time".into(), "species".into(), "verdict".into()];
    header.extend(h_values.iter().map(|h| format!("ratio_h={h:e}")));
    header.push("euler_verdict".into());
    let mut rows = Vec::new();
    let mut satisfied = 0;
    for p in 0..ic.n_probes {
        let species = p % op.n_species();
        let t = model.a + rand::RngExt::random_range(&mut rng, 0.0..=10.0);
        let psi = boundary_history(op, &mut rng, t, model.horizon, ic.n_knots, ic.scale, species)?;
        let rep = invariance::subtangential_check(&set, op, &model.rhs, t, &psi, &h_values)?;
        let euler = if set.is_time_invariant() {
            invariance::corollary_condition_b(&set, op, &model.rhs, t, &psi, &h_values)?
                .verdict
                .to_string()
        } else {
            String::new()
        };
        if rep.verdict == Verdict::Satisfied {
            satisfied += 1;
        }
        let mut row = vec![p.to_string(), f(t), species.to_string(), rep.verdict.to_string()];
        row.extend(rep.ratios.iter().map(|r| f(*r)));
        row.push(euler);
        rows.push(row);
    }
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    ctx.write_table("subtangency.csv", &header_refs, &rows)?;
    let probes_ok = satisfied == ic.n_probes;
    passed &= probes_ok;
    writeln!(
        text,
        "{} boundary probes: {satisfied}/{} satisfied",
        if probes_ok { "PASS" } else { "FAIL" },
        ic.n_probes
    )
    .ok();

    if ic.control {
        let rep = negative_control(model, &set, &h_values, &mut rng, ic.n_knots, ic.scale)?;
        let ok = rep.verdict == Verdict::Violated;
        passed &= ok;
        writeln!(
            text,
            "{} control probe with B = -1: {} (last ratio {:.3e})",
            if ok { "PASS" } else { "FAIL" },
            rep.verdict,
            rep.ratios.last().copied().unwrap_or(f64::NAN)
        )
        .ok();
    }
    Ok(RunReport { passed, text })
}

/// Subtangency of the synthetic `B = -1` at a history whose head is on the boundary.
pub fn negative_control(
    model: &Model,
    set: &ConstraintSet,
    h_values: &[f64],
    rng: &mut ChaCha8Rng,
    n_knots: usize,
    scale: f64,
) -> Result<invariance::SubtangencyReport> {
    let m = model.op.n_species();
    let rhs = DelayRhs::new(
        DelayMeasure::atoms_only(vec![DelayAtom::constant(model.horizon, 1.0)], 1.0, model.horizon),
        PointMap::Identity,
        OuterMap::from(OuterKind::Constant(vec![-1.0; m])),
    );
    let psi = boundary_history(&model.op, rng, model.a, model.horizon, n_knots, scale, 0)?;
    let head = psi.head().clone();
    let mut zeroed = head.spectral.clone();
    zeroed.values_mut().iter_mut().for_each(|x| *x = 0.0);
    let mut knots: Vec<Knot> = psi.knots().cloned().collect();
    *knots.last_mut().expect("segment has knots") = Knot::new(&model.op, head.time, zeroed)?;
    let psi = Segment::new(model.horizon, knots)?;
    invariance::subtangential_check(set, &model.op, &rhs, model.a, &psi, h_values)
}

fn run_dependence(ctx: &Context<'_>) -> Result<RunReport> {
    let dc = &ctx.cfg.dependence;
    let model = &ctx.model;
    let op = &model.op;
    let n = ctx.cfg.history_knots;
    let end = dc.end_time.unwrap_or(model.a + model.horizon);
    let phi = model.phi(n)?;
    let mut rng = ctx.rng();
    let perturbations = perturbations(model, &phi, n, dc.n_perturbations, dc.magnitude, &mut rng)?;
    let report =
        stepper::continuous_dependence_experiment(op, &model.rhs, &phi, &perturbations, model.a, end, &ctx.stepper())?;
    let c_t = report.c_t.map(f).unwrap_or_default();
    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .enumerate()
        .map(|(k, r)| {
            vec![
                k.to_string(),
                f(r.initial_distance),
                f(r.solution_distance),
                r.ratio.map(f).unwrap_or_default(),
                c_t.clone(),
            ]
        })
        .collect();
    ctx.write_table(
        "dependence.csv",
        &["perturbation", "initial_distance", "solution_distance", "ratio", "c_t"],
        &rows,
    )?;
    let mut text = String::new();
    writeln!(text, "horizon T - a = {}, radius {:.6}", end - model.a, report.radius).ok();
    match report.c_t {
        Some(c) => writeln!(text, "C_T = {c:.6}"),
        None => writeln!(text, "C_T not available for this right-hand side"),
    }
    .ok();
    writeln!(
        text,
        "max ratio {:.6} over {} perturbations",
        report.max_ratio(),
        report.rows.len()
    )
    .ok();
    for (i, s) in &report.failures {
        writeln!(text, "perturbation {i}: {}", status_line(s)).ok();
    }
    writeln!(text, "{}", if report.passed() { "PASS" } else { "FAIL" }).ok();
    Ok(RunReport {
        passed: report.passed(),
        text,
    })
}

/// `phi + delta` with random smooth `delta` of sup norm `magnitude`, sampled on `phi`'s knot grid.
pub fn perturbations(
    model: &Model,
    phi: &Segment<'_>,
    n_knots: usize,
    count: usize,
    magnitude: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Segment<'static>>> {
    let op = &model.op;
    (0..count)
        .map(|_| {
            let delta = random_history(op, rng, model.a, model.horizon, n_knots, 1.0, false)?;
            let s = magnitude / delta.sup_norm(op);
            let knots = phi
                .knots()
                .zip(delta.knots())
                .map(|(p, d)| {
                    let mut v = p.spectral.clone();
                    v.axpy(s, &d.spectral);
                    Knot::new(op, p.time, v)
                })
                .collect::<Result<Vec<_>>>()?;
            Segment::new(model.horizon, knots)
        })
        .collect()
}

fn run_checks(ctx: &Context<'_>) -> Result<RunReport> {
    let mut rng = ctx.rng();
    let lines = checks::run_checks(&ctx.model, &ctx.cfg.checks.to_config(), &mut rng)?;
    let rows: Vec<Vec<String>> = lines
        .iter()
        .map(|l| vec![l.name.clone(), l.outcome.to_string(), l.detail.clone()])
        .collect();
    ctx.write_table("checks.csv", &["check", "outcome", "detail"], &rows)?;
    let mut text = String::new();
    for l in &lines {
        writeln!(text, "{l}").ok();
    }
    let flagged = lines.iter().filter(|l| l.outcome == Outcome::Fail).count();
    writeln!(text, "{flagged} flagged").ok();
    Ok(RunReport {
        passed: checks::all_passed(&lines),
        text,
    })
}

/// Runs one subcommand; the report is also written to `<out>/<subcommand>.txt`.
pub fn run(cfg: &RunConfig, subcommand: Subcommand, out: &Path, seed: Option<u64>) -> Result<RunReport> {
    let model = cfg.model.build()?;
    if let Some(c) = &cfg.constraint {
        c.validate(model.op.n_species())?;
    }
    fs::create_dir_all(out)?;
    let ctx = Context {
        cfg,
        model,
        seed: seed.unwrap_or(cfg.seed),
        out,
        subcommand,
    };
    let report = match subcommand {
        Subcommand::Solve => run_solve(&ctx),
        Subcommand::Verify => run_verify(&ctx),
        Subcommand::Invariance => run_invariance(&ctx),
        Subcommand::Dependence => run_dependence(&ctx),
        Subcommand::Checks => run_checks(&ctx),
    }?;
    let mut text = format!("# {}\n", ctx.preamble());
    text.push_str(&report.text);
    fs::write(out.join(format!("{}.txt", subcommand.name())), &text)?;
    Ok(RunReport {
        passed: report.passed,
        text,
    })
}

/// Entry point for the binary; returns the process exit code.
pub fn main_with_args(args: Args) -> i32 {
    let outcome = RunConfig::load(&args.config).and_then(|cfg| run(&cfg, args.subcommand, &args.out, args.seed));
    match outcome {
        Ok(report) => {
            print!("{}", report.text);
            report.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INPUT
        }
    }
}
