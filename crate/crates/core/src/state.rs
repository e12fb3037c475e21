//! Discrete state values, stored species-major.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Representation {
    /// Coefficients in the operator eigenbasis.
    Spectral,
    /// Point values at the collocation nodes.
    Collocation,
}

/// Values of `n_species` fields, each with `n_points` entries (modes or
/// collocation nodes depending on the representation).
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_species: usize,
    n_points: usize,
    repr: Representation,
    values: Vec<f64>,
}

impl StateVector {
    pub fn zeros(n_species: usize, n_points: usize, repr: Representation) -> Self {
        Self {
            n_species,
            n_points,
            repr,
            values: vec![0.0; n_species * n_points],
        }
    }

    pub fn from_values(n_species: usize, n_points: usize, repr: Representation, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_species * n_points {
            return Err(Error::Shape {
                expected: format!("{n_species}x{n_points}"),
                found: format!("{} values", values.len()),
            });
        }
        Ok(Self {
            n_species,
            n_points,
            repr,
            values,
        })
    }

    /// A 0-D state (one point per species).
    pub fn scalar(values: &[f64]) -> Self {
        Self {
            n_species: values.len(),
            n_points: 1,
            repr: Representation::Spectral,
            values: values.to_vec(),
        }
    }

    pub fn n_species(&self) -> usize {
        self.n_species
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn representation(&self) -> Representation {
        self.repr
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn species(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_points..(i + 1) * self.n_points]
    }

    pub fn species_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.n_points..(i + 1) * self.n_points]
    }

    pub fn same_shape(&self, other: &StateVector) -> bool {
        self.n_species == other.n_species && self.n_points == other.n_points && self.repr == other.repr
    }

    pub fn check_shape(&self, other: &StateVector) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Shape {
                expected: format!("{}x{} {:?}", self.n_species, self.n_points, self.repr),
                found: format!("{}x{} {:?}", other.n_species, other.n_points, other.repr),
            })
        }
    }

    /// `self += alpha * x`.
    pub fn axpy(&mut self, alpha: f64, x: &StateVector) {
        debug_assert!(self.same_shape(x));
        for (s, v) in self.values.iter_mut().zip(&x.values) {
            *s += alpha * v;
        }
    }

    pub fn scaled(&self, alpha: f64) -> StateVector {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= alpha);
        out
    }

    pub fn add(&self, other: &StateVector) -> StateVector {
        let mut out = self.clone();
        out.axpy(1.0, other);
        out
    }

    pub fn sub(&self, other: &StateVector) -> StateVector {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    /// `(1 - w) * a + w * b`, the linear interpolant between two knots.
    pub fn lerp(a: &StateVector, b: &StateVector, w: f64) -> StateVector {
        debug_assert!(a.same_shape(b));
        let values = a.values.iter().zip(&b.values).map(|(x, y)| x + w * (y - x)).collect();
        StateVector {
            n_species: a.n_species,
            n_points: a.n_points,
            repr: a.repr,
            values,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &StateVector) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Stack several states along the species axis.
    pub fn stack(parts: &[StateVector]) -> Result<StateVector> {
        let first = parts
            .first()
            .ok_or_else(|| Error::invalid("cannot stack an empty list of states"))?;
        let n_points = first.n_points;
        let repr = first.repr;
        let mut values = Vec::new();
        let mut n_species = 0;
        for p in parts {
            if p.n_points != n_points || p.repr != repr {
                return Err(Error::Shape {
                    expected: format!("{n_points} points {repr:?}"),
                    found: format!("{} points {:?}", p.n_points, p.repr),
                });
            }
            values.extend_from_slice(&p.values);
            n_species += p.n_species;
        }
        Ok(StateVector {
            n_species,
            n_points,
            repr,
            values,
        })
    }
}
