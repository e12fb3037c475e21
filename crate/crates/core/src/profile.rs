//! Scalar functions of one variable given by constants or tables.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Piecewise-linear table, held constant beyond its ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Table {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl Table {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let t = Table { x, y };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.is_empty() || self.x.len() != self.y.len() {
            return Err(Error::invalid(format!(
                "table needs matching nonempty x/y columns (got {} and {})",
                self.x.len(),
                self.y.len()
            )));
        }
        if self.x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("table abscissae must be strictly increasing"));
        }
        if self.y.iter().chain(&self.x).any(|v| !v.is_finite()) {
            return Err(Error::invalid("table entries must be finite"));
        }
        Ok(())
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.x.len();
        if x <= self.x[0] {
            return self.y[0];
        }
        if x >= self.x[n - 1] {
            return self.y[n - 1];
        }
        let i = self.x.partition_point(|v| *v <= x) - 1;
        let w = (x - self.x[i]) / (self.x[i + 1] - self.x[i]);
        self.y[i] + w * (self.y[i + 1] - self.y[i])
    }

    pub fn min(&self) -> f64 {
        self.y.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// A scalar function of time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Constant(f64),
    Table(Table),
}

impl Profile {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Profile::Constant(c) => *c,
            Profile::Table(tab) => tab.eval(t),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Profile::Constant(c) if !c.is_finite() => Err(Error::invalid("profile constant must be finite")),
            Profile::Constant(_) => Ok(()),
            Profile::Table(t) => t.validate(),
        }
    }

    /// Minimum over `[a, b]`; exact for piecewise-linear tables.
    pub fn min_on(&self, a: f64, b: f64) -> f64 {
        match self {
            Profile::Constant(c) => *c,
            Profile::Table(t) => {
                t.x.iter()
                    .filter(|x| **x > a && **x < b)
                    .map(|x| t.eval(*x))
                    .fold(t.eval(a).min(t.eval(b)), f64::min)
            }
        }
    }
}

/// Modulus of continuity `delta -> omega(delta)`, nondecreasing with
/// `omega(0) >= 0`. Tables extrapolate linearly past their last sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modulus {
    Zero,
    Linear(f64),
    Table(Table),
}

impl Modulus {
    pub fn validate(&self) -> Result<()> {
        match self {
            Modulus::Zero => Ok(()),
            Modulus::Linear(l) if *l >= 0.0 && l.is_finite() => Ok(()),
            Modulus::Linear(l) => Err(Error::invalid(format!("Lipschitz modulus must be >= 0, got {l}"))),
            Modulus::Table(t) => {
                t.validate()?;
                if t.x[0] != 0.0 || t.y[0] < 0.0 || t.y.windows(2).any(|w| w[1] < w[0]) {
                    return Err(Error::invalid("modulus table must start at 0 and be nondecreasing"));
                }
                Ok(())
            }
        }
    }

    pub fn eval(&self, delta: f64) -> f64 {
        match self {
            Modulus::Zero => 0.0,
            Modulus::Linear(l) => l * delta,
            Modulus::Table(t) => {
                let n = t.x.len();
                if n > 1 && delta > t.x[n - 1] {
                    let slope = (t.y[n - 1] - t.y[n - 2]) / (t.x[n - 1] - t.x[n - 2]);
                    t.y[n - 1] + slope * (delta - t.x[n - 1])
                } else {
                    t.eval(delta)
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_interpolates_and_clamps() {
        let t = Table::new(vec![0.0, 1.0, 3.0], vec![1.0, 3.0, 2.0]).unwrap();
        assert_eq!(t.eval(-1.0), 1.0);
        assert_eq!(t.eval(0.5), 2.0);
        assert_eq!(t.eval(2.0), 2.5);
        assert_eq!(t.eval(10.0), 2.0);
        assert!(Table::new(vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn profile_minimum_over_interval() {
        let p = Profile::Table(Table::new(vec![0.0, 1.0, 2.0], vec![0.5, 0.2, 0.6]).unwrap());
        assert_eq!(p.min_on(0.0, 2.0), 0.2);
        assert!((p.min_on(1.5, 2.0) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn modulus_extrapolates() {
        let m = Modulus::Table(Table::new(vec![0.0, 0.1], vec![0.0, 0.2]).unwrap());
        m.validate().unwrap();
        assert!((m.eval(0.3) - 0.6).abs() < 1e-15);
        assert!(Modulus::Table(Table::new(vec![0.0, 1.0], vec![1.0, 0.5]).unwrap())
            .validate()
            .is_err());
    }
}
