//! Ready-made systems: diffusive Nicholson blowflies, delayed Lotka-Volterra
//! competition, and two scalar benchmarks with hand-computable solutions.

use std::f64::consts::PI;

use rand::{Rng, RngExt};
use serde::{Deserialize, Serialize};

use crate::delay::{self, AtomFunctional, DelayAtom, DelayDensity, DelayMeasure, PointMap, Squash, StateMean};
use crate::error::{Condition, Error, Result};
use crate::history::{Knot, Segment};
use crate::invariance::ConstraintSet;
use crate::rhs::{Channel, DelayRhs, OuterKind, OuterMap};
use crate::spectral::{Boundary, Domain, SpatialGrid, SpectralOperator};
use crate::state::{Representation, StateVector};
use crate::stepper::{Scheme, StepperConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    Point,
    Interval,
}

/// Spatial discretization as written in a config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub kind: GridKind,
    pub length: f64,
    pub n_modes: usize,
    /// Defaults to `2 * n_modes`.
    pub n_collocation: Option<usize>,
    pub boundary: Boundary,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            kind: GridKind::Point,
            length: 1.0,
            n_modes: 32,
            n_collocation: None,
            boundary: Boundary::Neumann,
        }
    }
}

impl GridSpec {
    pub fn interval(length: f64, n_modes: usize, boundary: Boundary) -> Self {
        Self {
            kind: GridKind::Interval,
            length,
            n_modes,
            n_collocation: None,
            boundary,
        }
    }

    pub fn to_grid(&self) -> SpatialGrid {
        match self.kind {
            GridKind::Point => SpatialGrid::point(),
            GridKind::Interval => {
                let mut g = SpatialGrid::interval(self.length, self.n_modes, self.boundary);
                if let Some(n) = self.n_collocation {
                    g.n_collocation = n;
                }
                g
            }
        }
    }
}

/// Initial history `phi`, spatially constant unless given by modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialHistory {
    /// `phi^i(theta, x) = values[i]`.
    Constant(Vec<f64>),
    /// `phi^i(theta, x) = head[i] + slope[i] * theta`.
    Affine { head: Vec<f64>, slope: Vec<f64> },
    /// Time-independent spectral coefficients per species.
    Modes(Vec<Vec<f64>>),
}

impl InitialHistory {
    pub fn segment(&self, op: &SpectralOperator, a: f64, horizon: f64, n_knots: usize) -> Result<Segment<'static>> {
        let m = op.n_species();
        let check = |v: &Vec<f64>| {
            if v.len() == m {
                Ok(())
            } else {
                Err(Error::invalid(format!(
                    "initial history has {} species, model has {m}",
                    v.len()
                )))
            }
        };
        match self {
            InitialHistory::Constant(v) => {
                check(v)?;
                let c = op.constant_state(v)?;
                Segment::from_fn(op, a, horizon, n_knots, |_| c.clone())
            }
            InitialHistory::Affine { head, slope } => {
                check(head)?;
                check(slope)?;
                let h = op.constant_state(head)?;
                let s = op.constant_state(slope)?;
                Segment::from_fn(op, a, horizon, n_knots, |th| {
                    let mut v = h.clone();
                    v.axpy(th, &s);
                    v
                })
            }
            InitialHistory::Modes(modes) => {
                let v = op.state_from_modes(modes)?;
                Segment::from_fn(op, a, horizon, n_knots, |_| v.clone())
            }
        }
    }
}

/// A fully assembled model.
#[derive(Debug, Clone)]
pub struct Model {
    pub name: String,
    pub description: String,
    pub op: SpectralOperator,
    pub rhs: DelayRhs,
    pub horizon: f64,
    pub a: f64,
    pub initial: InitialHistory,
    pub constraint: Option<ConstraintSet>,
    /// Random probes are drawn from nonnegative histories.
    pub nonnegative: bool,
}

impl Model {
    pub fn phi(&self, n_knots: usize) -> Result<Segment<'static>> {
        self.initial.segment(&self.op, self.a, self.horizon, n_knots)
    }

    pub fn default_stepper(&self, end_time: f64) -> StepperConfig {
        let dt = self.rhs.step_bound(self.a, end_time).map_or(0.01, |b| b.min(0.01));
        StepperConfig::new(Scheme::Picard, dt, end_time)
    }

    pub fn validate(&self) -> Result<()> {
        self.rhs.validate(self.op.n_species(), self.horizon)?;
        if let Some(c) = &self.constraint {
            c.validate(self.op.n_species())?;
        }
        Ok(())
    }

    /// Random history anchored at `t`; nonnegative when the model asks for it.
    pub fn random_history(&self, rng: &mut impl Rng, t: f64, n_knots: usize, scale: f64) -> Result<Segment<'static>> {
        random_history(&self.op, rng, t, self.horizon, n_knots, scale, self.nonnegative)
    }
}

/// One smooth random field; nonnegative variants stay `>= c0 / 2`.
fn random_field(op: &SpectralOperator, rng: &mut impl Rng, scale: f64, nonnegative: bool) -> Result<StateVector> {
    let m = op.n_species();
    let mut v = op.zeros();
    let grid = op.grid();
    for s in 0..m {
        let c0 = scale * rng.random_range(0.2..1.0);
        let coeffs = v.species_mut(s);
        match (grid.domain, grid.boundary) {
            (Domain::Point, _) => {
                coeffs[0] = if nonnegative {
                    c0
                } else {
                    scale * rng.random_range(-1.0..1.0)
                };
            }
            (Domain::Interval { .. }, Boundary::Dirichlet) => {
                // c sin(y) + a sin(3y) >= 0 on [0, pi] when |a| <= c / 3
                coeffs[0] = c0;
                if coeffs.len() > 2 {
                    coeffs[2] = rng.random_range(-c0 / 3.0..c0 / 3.0);
                }
                if !nonnegative {
                    coeffs[0] *= if rng.random_range(0.0..1.0) < 0.5 { -1.0 } else { 1.0 };
                }
            }
            (Domain::Interval { .. }, _) => {
                coeffs[0] = if nonnegative {
                    c0
                } else {
                    scale * rng.random_range(-1.0..1.0)
                };
                for c in coeffs.iter_mut().skip(1).take(3) {
                    *c = rng.random_range(-c0 / 6.0..c0 / 6.0);
                }
            }
        }
    }
    Ok(v)
}

/// Random history `phi(theta) = field * (1 + 0.4 sin(w theta + c))`.
pub fn random_history(
    op: &SpectralOperator,
    rng: &mut impl Rng,
    t: f64,
    horizon: f64,
    n_knots: usize,
    scale: f64,
    nonnegative: bool,
) -> Result<Segment<'static>> {
    let field = random_field(op, rng, scale, nonnegative)?;
    let w = rng.random_range(0.5..4.0);
    let c = rng.random_range(0.0..2.0 * PI);
    Segment::from_fn(op, t, horizon, n_knots.max(2), |th| {
        field.scaled(1.0 + 0.4 * (w * th + c).sin())
    })
}

/// Nonnegative random history whose species `species` vanishes at `theta = 0`.
pub fn boundary_history(
    op: &SpectralOperator,
    rng: &mut impl Rng,
    t: f64,
    horizon: f64,
    n_knots: usize,
    scale: f64,
    species: usize,
) -> Result<Segment<'static>> {
    let base = random_history(op, rng, t, horizon, n_knots, scale, true)?;
    let mut knots: Vec<Knot> = base.knots().cloned().collect();
    let head = knots.last_mut().expect("segment has knots");
    let mut nodal = head.nodal.clone();
    nodal.species_mut(species).iter_mut().for_each(|x| *x = 0.0);
    let mut spectral = head.spectral.clone();
    spectral.species_mut(species).iter_mut().for_each(|x| *x = 0.0);
    head.nodal = nodal;
    head.spectral = spectral;
    Segment::new(horizon, knots)
}

fn check_eta_range(lo: f64, hi: f64, eta_ign: f64, horizon: f64) -> Result<()> {
    if lo < eta_ign || hi > horizon {
        return Err(Error::contract(
            Condition::DelayRange,
            format!("delay range [{lo}, {hi}] is not inside [eta_ign, r] = [{eta_ign}, {horizon}]"),
        ));
    }
    Ok(())
}

/// How the Nicholson birth term is delayed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NicholsonDelay {
    /// A single atom at `eta = r`.
    ConstantAtom,
    /// `eta = base + scale * tanh(mean)` over a window ending at or before `-eta_ign`.
    StateMean {
        base: f64,
        scale: f64,
        eta_ign: f64,
        #[serde(default)]
        window: Option<[f64; 2]>,
    },
    /// Uniform density `1 / r`.
    Density,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NicholsonParams {
    pub p1: f64,
    pub d: f64,
    pub diffusivity: f64,
    pub horizon: f64,
    pub grid: GridSpec,
    pub delay: NicholsonDelay,
    pub initial: Option<InitialHistory>,
}

impl Default for NicholsonParams {
    fn default() -> Self {
        Self {
            p1: 2.0,
            d: 1.0,
            diffusivity: 0.1,
            horizon: 1.0,
            grid: GridSpec::default(),
            delay: NicholsonDelay::ConstantAtom,
            initial: None,
        }
    }
}

pub fn preset_nicholson(params: &NicholsonParams) -> Result<Model> {
    let r = params.horizon;
    if !(r > 0.0) {
        return Err(Error::invalid(format!("delay horizon must be positive, got {r}")));
    }
    if !(params.d >= 0.0 && params.diffusivity >= 0.0) {
        return Err(Error::invalid("d and diffusivity must be >= 0"));
    }
    let grid = params.grid.to_grid();
    let diff = if grid.is_point() { 0.0 } else { params.diffusivity };
    let op = SpectralOperator::laplacian(grid, &[diff])?;
    let measure = match &params.delay {
        NicholsonDelay::ConstantAtom => DelayMeasure::atoms_only(vec![DelayAtom::constant(r, 1.0)], 1.0, r),
        NicholsonDelay::StateMean {
            base,
            scale,
            eta_ign,
            window,
        } => {
            check_eta_range(base - scale.abs(), base + scale.abs(), *eta_ign, r)?;
            let atom = DelayAtom {
                eta: AtomFunctional::StateMean(StateMean {
                    window: *window,
                    species: 0,
                    base: *base,
                    scale: *scale,
                    squash: Squash::Tanh,
                }),
                weight: AtomFunctional::Constant(1.0),
                full_segment: false,
            };
            DelayMeasure::atoms_only(vec![atom], 1.0, *eta_ign)
        }
        NicholsonDelay::Density => DelayMeasure::density_only(DelayDensity::constant(1.0 / r), 1.0, r, 0.0),
    };
    let model = Model {
        name: "nicholson".into(),
        description: "diffusive Nicholson blowflies equation u_t = d_u Lap u - d u + p1 F(u_t) e^{-F}, \
                      birth function p(w) = p1 w exp(-w)"
            .into(),
        op,
        rhs: DelayRhs::new(
            measure,
            PointMap::Nicholson { p1: params.p1 },
            OuterMap::affine(params.d),
        ),
        horizon: r,
        a: 0.0,
        initial: params.initial.clone().unwrap_or(InitialHistory::Constant(vec![0.5])),
        constraint: Some(ConstraintSet::nonneg_cone()),
        nonnegative: true,
    };
    model.validate()?;
    Ok(model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LotkaVolterraParams {
    pub b: Vec<f64>,
    pub c: Vec<Vec<f64>>,
    pub diffusivities: Vec<f64>,
    pub horizon: f64,
    pub grid: GridSpec,
    /// Measures `g_ij`, row-major; defaults to a unit atom at `eta = r`.
    pub measures: Option<Vec<Vec<DelayMeasure>>>,
    pub initial: Option<InitialHistory>,
}

impl Default for LotkaVolterraParams {
    fn default() -> Self {
        Self {
            b: vec![1.0, 1.0],
            c: vec![vec![1.0, 0.5], vec![0.5, 1.0]],
            diffusivities: vec![0.0, 0.0],
            horizon: 1.0,
            grid: GridSpec::default(),
            measures: None,
            initial: None,
        }
    }
}

pub fn preset_lotka_volterra(params: &LotkaVolterraParams) -> Result<Model> {
    let m = params.b.len();
    let r = params.horizon;
    if m == 0 {
        return Err(Error::invalid("Lotka-Volterra needs at least one species"));
    }
    if !(r > 0.0) {
        return Err(Error::invalid(format!("delay horizon must be positive, got {r}")));
    }
    let grid = params.grid.to_grid();
    if !grid.is_point() && grid.boundary != Boundary::Neumann {
        return Err(Error::invalid("Lotka-Volterra uses Neumann boundary conditions"));
    }
    if params.diffusivities.len() != m {
        return Err(Error::invalid(format!(
            "{} diffusivities for {m} species",
            params.diffusivities.len()
        )));
    }
    let diff: Vec<f64> = if grid.is_point() {
        vec![0.0; m]
    } else {
        params.diffusivities.clone()
    };
    let op = SpectralOperator::laplacian(grid, &diff)?;
    let measures = match &params.measures {
        Some(ms) => {
            if ms.len() != m || ms.iter().any(|row| row.len() != m) {
                return Err(Error::invalid(format!("measures must be a {m}x{m} array")));
            }
            ms.clone()
        }
        None => vec![vec![DelayMeasure::atoms_only(vec![DelayAtom::constant(r, 1.0)], 1.0, r); m]; m],
    };
    let mut channels = Vec::with_capacity(m * m);
    for (i, row) in measures.into_iter().enumerate() {
        for (j, measure) in row.into_iter().enumerate() {
            delay::static_normalization(&measure, r).map_err(|e| match e {
                Error::Contract { condition, detail } => Error::Contract {
                    condition,
                    detail: format!("g_{i}{j}: {detail}"),
                },
                other => other,
            })?;
            channels.push(Channel {
                measure,
                p: PointMap::Select { species: j },
            });
        }
    }
    let model = Model {
        name: "lotka_volterra".into(),
        description:
            "diffusive Lotka-Volterra competition u^i_t = d_i Lap u^i + b_i u^i (1 - sum_j c_ij int u^j dg_ij)".into(),
        op,
        rhs: DelayRhs {
            channels,
            outer: OuterKind::LotkaVolterra {
                b: params.b.clone(),
                c: params.c.clone(),
            }
            .into(),
        },
        horizon: r,
        a: 0.0,
        initial: params.initial.clone().unwrap_or(InitialHistory::Constant(vec![0.5; m])),
        constraint: Some(ConstraintSet::nonneg_cone()),
        nonnegative: true,
    };
    model.validate()?;
    Ok(model)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearVariant {
    /// `u'(t) = u(t - 1)`.
    Atom,
    /// `u'(t) = int_{-1}^0 u(t + theta) dtheta`.
    Density,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearParams {
    pub variant: LinearVariant,
}

impl Default for LinearParams {
    fn default() -> Self {
        Self {
            variant: LinearVariant::Atom,
        }
    }
}

/// Scalar `u' = u(t - 1)`, `phi = 1`, `r = eta_ign = 1`; piecewise-polynomial exact solution.
pub fn preset_linear_benchmark(params: &LinearParams) -> Result<Model> {
    let op = SpectralOperator::laplacian(SpatialGrid::point(), &[0.0])?;
    let (measure, description) = match params.variant {
        LinearVariant::Atom => (
            DelayMeasure::atoms_only(vec![DelayAtom::constant(1.0, 1.0)], 1.0, 1.0),
            "scalar u'(t) = u(t - 1) with u = 1 on [-1, 0]",
        ),
        LinearVariant::Density => (
            DelayMeasure::density_only(DelayDensity::constant(1.0), 1.0, 1.0, 0.0),
            "scalar u'(t) = int_{-1}^0 u(t + s) ds with u = 1 on [-1, 0]",
        ),
    };
    Ok(Model {
        name: "linear_benchmark".into(),
        description: description.into(),
        op,
        rhs: DelayRhs::new(measure, PointMap::Identity, OuterMap::affine(0.0)),
        horizon: 1.0,
        a: 0.0,
        initial: InitialHistory::Constant(vec![1.0]),
        constraint: None,
        nonnegative: false,
    })
}

/// Exact solution of `u' = u(t - 1)`, `u = 1` on `[-1, 0]`:
/// `u(t) = sum_{k=0}^{n+1} (t - k + 1)^k / k!` on `[n, n + 1]`.
pub fn linear_benchmark_exact(t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    let n = t.floor() as i64;
    let mut sum = 0.0;
    let mut fact = 1.0;
    for k in 0..=(n + 1) {
        if k > 0 {
            fact *= k as f64;
        }
        let x = t - k as f64 + 1.0;
        if x > 0.0 {
            sum += x.powi(k as i32) / fact;
        }
    }
    sum
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SddWeight {
    /// `h = 1`.
    Unit,
    /// `h = max(0, mean - threshold)`, letting the atom vanish and reappear.
    Excess(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SddParams {
    pub eta_ign: f64,
    pub weight: SddWeight,
    pub initial: Option<InitialHistory>,
}

impl Default for SddParams {
    fn default() -> Self {
        Self {
            eta_ign: 0.25,
            weight: SddWeight::Unit,
            initial: None,
        }
    }
}

pub const SDD_WINDOW: [f64; 2] = [-1.0, -0.5];

/// Scalar `u' = -u + u(t - eta)` with `eta = 0.5 + 0.25 tanh(mean of u_t over [-1, -0.5])`.
pub fn preset_sdd_benchmark(params: &SddParams) -> Result<Model> {
    let r = 1.0;
    check_eta_range(0.25, 0.75, params.eta_ign, r)?;
    if -params.eta_ign < SDD_WINDOW[1] {
        return Err(Error::contract(
            Condition::IgnoreInterval,
            format!(
                "eta_ign = {} hides part of the mean window {:?}",
                params.eta_ign, SDD_WINDOW
            ),
        ));
    }
    let mean = |base: f64, scale: f64, squash: Squash| {
        AtomFunctional::StateMean(StateMean {
            window: Some(SDD_WINDOW),
            species: 0,
            base,
            scale,
            squash,
        })
    };
    let weight = match params.weight {
        SddWeight::Unit => AtomFunctional::Constant(1.0),
        SddWeight::Excess(c) => mean(0.0, 1.0, Squash::Excess(c)),
    };
    let atom = DelayAtom {
        eta: mean(0.5, 0.25, Squash::Tanh),
        weight,
        full_segment: false,
    };
    let m_vg = match params.weight {
        SddWeight::Unit => 1.0,
        // |h| <= sup |psi| on the window; the declared budget covers |psi| <= 2 + c
        SddWeight::Excess(_) => 2.0,
    };
    let op = SpectralOperator::laplacian(SpatialGrid::point(), &[0.0])?;
    let model = Model {
        name: "sdd_benchmark".into(),
        description: "scalar u' = -u + u(t - eta(u_t)), eta = 0.5 + 0.25 tanh(mean of u over [t-1, t-0.5])".into(),
        op,
        rhs: DelayRhs::new(
            DelayMeasure::atoms_only(vec![atom], m_vg, params.eta_ign),
            PointMap::Identity,
            OuterMap::affine(1.0),
        ),
        horizon: r,
        a: 0.0,
        initial: params.initial.clone().unwrap_or(InitialHistory::Affine {
            head: vec![0.0],
            slope: vec![1.0],
        }),
        constraint: None,
        nonnegative: false,
    };
    model.validate()?;
    Ok(model)
}

/// Preset selection as written in a config: `[model.<name>]` with optional parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelConfig {
    Nicholson(NicholsonParams),
    LotkaVolterra(LotkaVolterraParams),
    LinearBenchmark(LinearParams),
    SddBenchmark(SddParams),
}

impl ModelConfig {
    pub fn build(&self) -> Result<Model> {
        match self {
            ModelConfig::Nicholson(p) => preset_nicholson(p),
            ModelConfig::LotkaVolterra(p) => preset_lotka_volterra(p),
            ModelConfig::LinearBenchmark(p) => preset_linear_benchmark(p),
            ModelConfig::SddBenchmark(p) => preset_sdd_benchmark(p),
        }
    }

    /// Every preset with its default parameters.
    pub fn all_defaults() -> Vec<ModelConfig> {
        vec![
            ModelConfig::Nicholson(NicholsonParams::default()),
            ModelConfig::LotkaVolterra(LotkaVolterraParams::default()),
            ModelConfig::LinearBenchmark(LinearParams::default()),
            ModelConfig::LinearBenchmark(LinearParams {
                variant: LinearVariant::Density,
            }),
            ModelConfig::SddBenchmark(SddParams::default()),
        ]
    }
}

/// Spectral state with the given per-species constants.
pub fn constant(op: &SpectralOperator, values: &[f64]) -> Result<StateVector> {
    op.constant_state(values)
}

/// Nodal copy of a spectral state.
pub fn nodal(op: &SpectralOperator, v: &StateVector) -> Result<StateVector> {
    match v.representation() {
        Representation::Collocation => Ok(v.clone()),
        Representation::Spectral => op.to_collocation(v),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_linear_solution() {
        assert_eq!(linear_benchmark_exact(0.0), 1.0);
        assert_eq!(linear_benchmark_exact(1.0), 2.0);
        assert!((linear_benchmark_exact(2.0) - 3.5).abs() < 1e-15);
        assert!((linear_benchmark_exact(0.5) - 1.5).abs() < 1e-15);
        // on [2, 3]: 1 + t + (t-1)^2/2 + (t-2)^3/6
        assert!((linear_benchmark_exact(3.0) - (1.0 + 3.0 + 2.0 + 1.0 / 6.0)).abs() < 1e-14);
    }

    #[test]
    fn presets_build_with_defaults() {
        for cfg in ModelConfig::all_defaults() {
            let m = cfg.build().unwrap();
            m.phi(17).unwrap();
        }
    }

    #[test]
    fn state_mean_delay_outside_range_is_rejected() {
        let p = NicholsonParams {
            delay: NicholsonDelay::StateMean {
                base: 0.5,
                scale: 0.3,
                eta_ign: 0.25,
                window: None,
            },
            ..Default::default()
        };
        assert!(preset_nicholson(&p).unwrap_err().is_contract(Condition::DelayRange));
    }

    #[test]
    fn signed_lotka_volterra_measure_is_rejected() {
        let bad = DelayMeasure::atoms_only(
            vec![DelayAtom::constant(0.5, 1.5), DelayAtom::constant(1.0, -0.5)],
            2.0,
            0.5,
        );
        let p = LotkaVolterraParams {
            b: vec![1.0],
            c: vec![vec![1.0]],
            diffusivities: vec![0.0],
            measures: Some(vec![vec![bad]]),
            ..Default::default()
        };
        assert!(preset_lotka_volterra(&p)
            .unwrap_err()
            .is_contract(Condition::Normalization));
    }

    #[test]
    fn random_histories_are_nonnegative() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for boundary in [Boundary::Neumann, Boundary::Dirichlet] {
            let op = SpectralOperator::laplacian(SpatialGrid::interval(1.0, 16, boundary), &[0.1]).unwrap();
            for _ in 0..20 {
                let s = random_history(&op, &mut rng, 0.0, 1.0, 9, 2.0, true).unwrap();
                assert!(s.knots().all(|k| k.nodal.values().iter().all(|x| *x >= 0.0)));
                let b = boundary_history(&op, &mut rng, 0.0, 1.0, 9, 2.0, 0).unwrap();
                assert!(b.head().nodal.values().iter().all(|x| *x == 0.0));
            }
        }
    }
}
