//! The linear part `A` in a diagonalizing basis.
//!
//! On an interval the generator is `-d_i * Laplacian` with Dirichlet (sine
//! basis) or Neumann (cosine basis) conditions; on a point domain it is a
//! diagonal matrix over species. Nonlinear terms are evaluated at collocation
//! nodes, so the operator also owns the discrete transforms between the two
//! representations and the discrete L2 norm.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::{Representation, StateVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Interval { length: f64 },
    Point,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Dirichlet,
    Neumann,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpatialGrid {
    pub domain: Domain,
    pub n_modes: usize,
    pub n_collocation: usize,
    pub boundary: Boundary,
}

impl SpatialGrid {
    /// Interval grid with the default `n_collocation = 2 * n_modes`.
    pub fn interval(length: f64, n_modes: usize, boundary: Boundary) -> Self {
        Self {
            domain: Domain::Interval { length },
            n_modes,
            n_collocation: 2 * n_modes,
            boundary,
        }
    }

    pub fn point() -> Self {
        Self {
            domain: Domain::Point,
            n_modes: 1,
            n_collocation: 1,
            boundary: Boundary::None,
        }
    }

    pub fn is_point(&self) -> bool {
        matches!(self.domain, Domain::Point)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_modes == 0 {
            return Err(Error::invalid("n_modes must be positive"));
        }
        if self.n_collocation < self.n_modes {
            return Err(Error::invalid(format!(
                "n_collocation ({}) must be >= n_modes ({})",
                self.n_collocation, self.n_modes
            )));
        }
        match (self.domain, self.boundary) {
            (Domain::Point, Boundary::None) => {
                if self.n_modes != 1 || self.n_collocation != 1 {
                    return Err(Error::invalid("a point domain has exactly one mode and one node"));
                }
            }
            (Domain::Point, b) => {
                return Err(Error::invalid(format!(
                    "point domain requires boundary = none, got {b:?}"
                )))
            }
            (Domain::Interval { .. }, Boundary::None) => {
                return Err(Error::invalid(
                    "interval domain requires a dirichlet or neumann boundary",
                ))
            }
            (Domain::Interval { length }, _) => {
                if !(length > 0.0 && length.is_finite()) {
                    return Err(Error::invalid(format!(
                        "interval length must be positive, got {length}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Collocation node coordinates (empty-length interval for a point).
    pub fn nodes(&self) -> Vec<f64> {
        let n = self.n_collocation;
        match (self.domain, self.boundary) {
            (Domain::Interval { length }, Boundary::Dirichlet) => {
                (0..n).map(|j| (j + 1) as f64 * length / (n + 1) as f64).collect()
            }
            (Domain::Interval { length }, _) => (0..n).map(|j| (j as f64 + 0.5) * length / n as f64).collect(),
            (Domain::Point, _) => vec![0.0],
        }
    }

    /// Quadrature weight of one collocation node in the discrete L2 norm.
    fn node_weight(&self) -> f64 {
        let n = self.n_collocation as f64;
        match (self.domain, self.boundary) {
            (Domain::Interval { length }, Boundary::Dirichlet) => length / (n + 1.0),
            (Domain::Interval { length }, _) => length / n,
            (Domain::Point, _) => 1.0,
        }
    }
}

/// `(1 - exp(-lambda h)) / lambda`, with the `lambda = 0` limit `h`.
pub fn phi1(lambda: f64, h: f64) -> f64 {
    if lambda == 0.0 {
        h
    } else {
        -(-lambda * h).exp_m1() / lambda
    }
}

/// `int_0^h exp(-lambda (h - s)) (s / h) ds`, the weight of a field that
/// ramps linearly from 0 to 1 across the step.
pub fn ramp_weight(lambda: f64, h: f64) -> f64 {
    let x = lambda * h;
    if x.abs() < 0.5 {
        // h * sum_{n>=0} (-x)^n / (n + 2)!
        let mut term = 0.5;
        let mut sum = 0.0;
        for n in 0..30 {
            sum += term;
            term *= -x / (n as f64 + 3.0);
            if term.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        h * sum
    } else {
        (h - phi1(lambda, h)) / x
    }
}

#[derive(Debug, Clone)]
pub struct SpectralOperator {
    grid: SpatialGrid,
    n_species: usize,
    eigenvalues: Vec<f64>,
    omega: f64,
    /// Basis functions at the nodes, `n_collocation x n_modes` row-major.
    synthesis: Vec<f64>,
    /// Per-mode scale of the discrete analysis transform.
    analysis_scale: Vec<f64>,
    /// Per-mode squared L2 norm of the basis function.
    mode_mass: Vec<f64>,
}

impl SpectralOperator {
    /// `A = -d_i * Laplacian` per species on the grid's domain.
    pub fn laplacian(grid: SpatialGrid, diffusivities: &[f64]) -> Result<Self> {
        grid.validate()?;
        if diffusivities.is_empty() {
            return Err(Error::invalid("at least one species is required"));
        }
        if let Some(d) = diffusivities.iter().find(|d| !(**d >= 0.0) || !d.is_finite()) {
            return Err(Error::invalid(format!("diffusivity must be >= 0, got {d}")));
        }
        let m = grid.n_modes;
        let mut eigenvalues = Vec::with_capacity(diffusivities.len() * m);
        for &d in diffusivities {
            for k in 0..m {
                let lambda = match (grid.domain, grid.boundary) {
                    (Domain::Interval { length }, Boundary::Dirichlet) => {
                        let w = (k + 1) as f64 * PI / length;
                        d * w * w
                    }
                    (Domain::Interval { length }, _) => {
                        let w = k as f64 * PI / length;
                        d * w * w
                    }
                    (Domain::Point, _) => 0.0,
                };
                eigenvalues.push(lambda);
            }
        }
        Self::with_eigenvalues(grid, diffusivities.len(), eigenvalues)
    }

    /// Operator with explicitly given eigenvalues (species-major, one per mode).
    pub fn with_eigenvalues(grid: SpatialGrid, n_species: usize, eigenvalues: Vec<f64>) -> Result<Self> {
        grid.validate()?;
        if n_species == 0 {
            return Err(Error::invalid("at least one species is required"));
        }
        if eigenvalues.len() != n_species * grid.n_modes {
            return Err(Error::Shape {
                expected: format!("{} eigenvalues", n_species * grid.n_modes),
                found: format!("{}", eigenvalues.len()),
            });
        }
        if eigenvalues.iter().any(|l| !l.is_finite()) {
            return Err(Error::invalid("eigenvalues must be finite"));
        }
        let omega = eigenvalues.iter().fold(0.0_f64, |w, l| w.max(-l));
        let (synthesis, analysis_scale, mode_mass) = Self::transforms(&grid);
        Ok(Self {
            grid,
            n_species,
            eigenvalues,
            omega,
            synthesis,
            analysis_scale,
            mode_mass,
        })
    }

    fn transforms(grid: &SpatialGrid) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = grid.n_collocation;
        let m = grid.n_modes;
        match (grid.domain, grid.boundary) {
            (Domain::Interval { length }, Boundary::Dirichlet) => {
                let mut s = vec![0.0; n * m];
                for j in 0..n {
                    for k in 0..m {
                        s[j * m + k] = ((k + 1) as f64 * PI * (j + 1) as f64 / (n + 1) as f64).sin();
                    }
                }
                (s, vec![2.0 / (n + 1) as f64; m], vec![0.5 * length; m])
            }
            (Domain::Interval { length }, _) => {
                let mut s = vec![0.0; n * m];
                for j in 0..n {
                    for k in 0..m {
                        s[j * m + k] = (k as f64 * PI * (j as f64 + 0.5) / n as f64).cos();
                    }
                }
                let scale = (0..m)
                    .map(|k| if k == 0 { 1.0 / n as f64 } else { 2.0 / n as f64 })
                    .collect();
                let mass = (0..m).map(|k| if k == 0 { length } else { 0.5 * length }).collect();
                (s, scale, mass)
            }
            (Domain::Point, _) => (vec![1.0], vec![1.0], vec![1.0]),
        }
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn n_species(&self) -> usize {
        self.n_species
    }

    pub fn n_modes(&self) -> usize {
        self.grid.n_modes
    }

    pub fn n_nodes(&self) -> usize {
        self.grid.n_collocation
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn zeros(&self) -> StateVector {
        StateVector::zeros(self.n_species, self.n_modes(), Representation::Spectral)
    }

    fn check_spectral(&self, v: &StateVector) -> Result<()> {
        if v.representation() != Representation::Spectral
            || v.n_species() != self.n_species
            || v.n_points() != self.n_modes()
        {
            return Err(Error::Shape {
                expected: format!("{}x{} Spectral", self.n_species, self.n_modes()),
                found: format!("{}x{} {:?}", v.n_species(), v.n_points(), v.representation()),
            });
        }
        Ok(())
    }

    /// `T(t) v = exp(-A t) v`, forward in time only.
    pub fn semigroup_apply(&self, t: f64, v: &StateVector) -> Result<StateVector> {
        if !(t >= 0.0) {
            return Err(Error::invalid(format!("semigroup time must be >= 0, got {t}")));
        }
        self.check_spectral(v)?;
        let mut out = v.clone();
        for (c, l) in out.values_mut().iter_mut().zip(&self.eigenvalues) {
            *c *= (-l * t).exp();
        }
        Ok(out)
    }

    /// `int_0^h T(h - s) ds v`, exact per mode.
    pub fn phi1_apply(&self, h: f64, v: &StateVector) -> Result<StateVector> {
        if !(h > 0.0) {
            return Err(Error::invalid(format!("step must be > 0, got {h}")));
        }
        self.check_spectral(v)?;
        let mut out = v.clone();
        for (c, l) in out.values_mut().iter_mut().zip(&self.eigenvalues) {
            *c *= phi1(*l, h);
        }
        Ok(out)
    }

    /// `int_0^h T(h - s) (s / h) ds v`, exact per mode.
    pub fn ramp_apply(&self, h: f64, v: &StateVector) -> Result<StateVector> {
        if !(h > 0.0) {
            return Err(Error::invalid(format!("step must be > 0, got {h}")));
        }
        self.check_spectral(v)?;
        let mut out = v.clone();
        for (c, l) in out.values_mut().iter_mut().zip(&self.eigenvalues) {
            *c *= ramp_weight(*l, h);
        }
        Ok(out)
    }

    /// Spectral coefficients to node values; collocation input is returned as is.
    pub fn to_collocation(&self, v: &StateVector) -> Result<StateVector> {
        if v.representation() == Representation::Collocation {
            return Ok(v.clone());
        }
        self.check_spectral(v)?;
        let n = self.n_nodes();
        let m = self.n_modes();
        let mut out = StateVector::zeros(self.n_species, n, Representation::Collocation);
        for s in 0..self.n_species {
            let coeffs = v.species(s);
            let dst = out.species_mut(s);
            for (j, d) in dst.iter_mut().enumerate() {
                let row = &self.synthesis[j * m..(j + 1) * m];
                *d = row.iter().zip(coeffs).map(|(b, c)| b * c).sum();
            }
        }
        Ok(out)
    }

    /// Node values to spectral coefficients (discrete projection onto the
    /// retained modes); spectral input is returned as is.
    pub fn to_spectral(&self, v: &StateVector) -> Result<StateVector> {
        if v.representation() == Representation::Spectral {
            self.check_spectral(v)?;
            return Ok(v.clone());
        }
        let n = self.n_nodes();
        let m = self.n_modes();
        if v.n_points() != n {
            return Err(Error::Shape {
                expected: format!("{n} collocation nodes"),
                found: format!("{}", v.n_points()),
            });
        }
        let ns = v.n_species();
        let mut out = StateVector::zeros(ns, m, Representation::Spectral);
        for s in 0..ns {
            let nodal = v.species(s);
            let dst = out.species_mut(s);
            for (k, d) in dst.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (j, u) in nodal.iter().enumerate() {
                    acc += self.synthesis[j * m + k] * u;
                }
                *d = self.analysis_scale[k] * acc;
            }
        }
        Ok(out)
    }

    /// Discrete L2 norm (Euclidean for a point domain), in either representation.
    pub fn norm(&self, v: &StateVector) -> f64 {
        match v.representation() {
            Representation::Spectral => {
                let m = self.n_modes();
                v.values()
                    .iter()
                    .enumerate()
                    .map(|(i, c)| self.mode_mass[i % m] * c * c)
                    .sum::<f64>()
                    .sqrt()
            }
            Representation::Collocation => {
                let w = self.grid.node_weight();
                (w * v.values().iter().map(|u| u * u).sum::<f64>()).sqrt()
            }
        }
    }

    /// Norm of the field that equals 1 in every one of `n_species` components;
    /// converts pointwise growth constants into norm constants.
    pub fn unit_constant_norm(&self, n_species: usize) -> f64 {
        let measure = match self.grid.domain {
            Domain::Interval { length } => length,
            Domain::Point => 1.0,
        };
        (measure * n_species as f64).sqrt()
    }

    /// Spatially constant field with the given per-species value.
    pub fn constant_state(&self, values: &[f64]) -> Result<StateVector> {
        let n = self.n_nodes();
        let mut nodal = StateVector::zeros(values.len(), n, Representation::Collocation);
        for (s, &c) in values.iter().enumerate() {
            nodal.species_mut(s).iter_mut().for_each(|u| *u = c);
        }
        self.to_spectral(&nodal)
    }

    /// Spectral state from per-species coefficient lists (missing modes are zero).
    pub fn state_from_modes(&self, modes: &[Vec<f64>]) -> Result<StateVector> {
        if modes.len() != self.n_species {
            return Err(Error::Shape {
                expected: format!("{} species", self.n_species),
                found: format!("{}", modes.len()),
            });
        }
        let mut v = self.zeros();
        for (s, coeffs) in modes.iter().enumerate() {
            if coeffs.len() > self.n_modes() {
                return Err(Error::invalid(format!(
                    "species {s} has {} coefficients but only {} modes are retained",
                    coeffs.len(),
                    self.n_modes()
                )));
            }
            v.species_mut(s)[..coeffs.len()].copy_from_slice(coeffs);
        }
        Ok(v)
    }
}
