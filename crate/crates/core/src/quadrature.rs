//! Composite Gauss-Legendre rules.

use std::collections::HashMap;
use std::num::NonZeroUsize;
use std::sync::{Arc, Mutex, OnceLock};

use gauss_quad::legendre::GaussLegendre;

/// Nodes and weights on `[-1, 1]`, ordered by node.
#[derive(Debug)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

pub const DEFAULT_NODES: usize = 32;

/// Cached rule with `n >= 1` nodes.
pub fn gauss_legendre(n: usize) -> Arc<GaussRule> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussRule>>>> = OnceLock::new();
    let n = n.max(1);
    let mut cache = CACHE
        .get_or_init(Default::default)
        .lock()
        .expect("quadrature cache poisoned");
    cache
        .entry(n)
        .or_insert_with(|| {
            let rule = GaussLegendre::new(NonZeroUsize::new(n).expect("n >= 1"));
            let mut pairs: Vec<(f64, f64)> = rule.iter().map(|(x, w)| (*x, *w)).collect();
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            Arc::new(GaussRule {
                nodes: pairs.iter().map(|p| p.0).collect(),
                weights: pairs.iter().map(|p| p.1).collect(),
            })
        })
        .clone()
}

impl GaussRule {
    /// Mapped nodes and weights on `[a, b]`.
    pub fn on(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(x, w)| (mid + half * x, half * w))
    }

    /// `int_a^b f` over the pieces delimited by sorted `breaks` (which must
    /// include both ends).
    pub fn composite(&self, breaks: &[f64], mut f: impl FnMut(f64) -> f64) -> f64 {
        breaks
            .windows(2)
            .filter(|w| w[1] > w[0])
            .map(|w| self.on(w[0], w[1]).map(|(x, wt)| wt * f(x)).sum::<f64>())
            .sum()
    }
}

/// Sorted, deduplicated breakpoints clipped to `[lo, hi]` with both ends present.
pub fn breakpoints(lo: f64, hi: f64, interior: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut b: Vec<f64> = interior.into_iter().filter(|x| *x > lo && *x < hi).collect();
    b.push(lo);
    b.push(hi);
    b.sort_by(f64::total_cmp);
    b.dedup();
    b
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomials_exactly() {
        let rule = gauss_legendre(4);
        let v = rule.composite(&[0.0, 2.0], |x| x.powi(7));
        assert!((v - 32.0).abs() < 1e-12);
        let rule = gauss_legendre(DEFAULT_NODES);
        let v = rule.composite(&breakpoints(-1.0, 0.0, [-0.3, -0.7]), |x| (3.0 * x).cos());
        assert!((v - (3f64).sin() / 3.0).abs() < 1e-14);
    }
}
