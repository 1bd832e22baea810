//! Gaussian quadrature rules for expectations under the standard normal law.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Smallest accepted Gauss-Hermite order.
pub const MIN_ORDER: usize = 8;
/// Default number of Gauss-Hermite nodes per axis.
pub const DEFAULT_ORDER: usize = 96;

/// Nodes beyond this many standard deviations carry less than 1e-32 mass.
const TRUNCATION: f64 = 12.0;
const PANEL_ORDER: usize = 24;
/// Integrand features wider than this are resolved by plain Gauss-Hermite.
pub(crate) const SMOOTH_WIDTH: f64 = 0.5;

/// Gauss-Hermite rule normalized to the standard normal density:
/// `E f(g) ~ sum_i weights[i] f(nodes[i])` for `g ~ N(0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    order: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Default for QuadratureGrid {
    fn default() -> Self {
        Self::new(DEFAULT_ORDER).expect("default order is valid")
    }
}

impl QuadratureGrid {
    pub fn new(order: usize) -> Result<Self> {
        if order < MIN_ORDER {
            return Err(Error::InvalidArgument(format!(
                "quadrature order {order} is below the minimum of {MIN_ORDER}"
            )));
        }
        let (x, w) = gauss_hermite_physicists(order);
        let nodes = x.iter().map(|v| v * 2f64.sqrt()).collect();
        let weights = w.iter().map(|v| v / PI.sqrt()).collect();
        Ok(Self {
            order,
            nodes,
            weights,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(*x))
            .sum()
    }
}

/// Nodes and weights for the weight `exp(-x^2)` by Newton iteration on the
/// orthonormal Hermite recurrence.
fn gauss_hermite_physicists(m: usize) -> (Vec<f64>, Vec<f64>) {
    let pim4 = PI.powf(-0.25);
    let mut x = vec![0.0; m];
    let mut w = vec![0.0; m];
    let mf = m as f64;
    let mut z = 0.0;
    for i in 0..m.div_ceil(2) {
        z = match i {
            0 => (2.0 * mf + 1.0).sqrt() - 1.85575 * (2.0 * mf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * mf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 1.0;
        for _ in 0..100 {
            let (p1, p2) = hermite_pair(m, z, pim4);
            pp = (2.0 * mf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        let (_, p2) = hermite_pair(m, z, pim4);
        pp = if pp != 0.0 { (2.0 * mf).sqrt() * p2 } else { pp };
        x[i] = z;
        x[m - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[m - 1 - i] = w[i];
    }
    (x, w)
}

fn hermite_pair(m: usize, z: f64, pim4: f64) -> (f64, f64) {
    let mut p1 = pim4;
    let mut p2 = 0.0;
    for j in 0..m {
        let p3 = p2;
        p2 = p1;
        let jf = j as f64;
        p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
    }
    (p1, p2)
}

/// Gauss-Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub(crate) struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub(crate) fn new(m: usize) -> Self {
        let mut nodes = vec![0.0; m];
        let mut weights = vec![0.0; m];
        let mf = m as f64;
        for i in 0..m.div_ceil(2) {
            let mut z = (PI * (i as f64 + 0.75) / (mf + 0.5)).cos();
            let mut pp = 1.0;
            for _ in 0..100 {
                let mut p1 = 1.0;
                let mut p2 = 0.0;
                for j in 0..m {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = ((2.0 * jf + 1.0) * z * p2 - jf * p3) / (jf + 1.0);
                }
                pp = mf * (z * p1 - p2) / (z * z - 1.0);
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-16 {
                    break;
                }
            }
            nodes[i] = -z;
            nodes[m - 1 - i] = z;
            weights[i] = 2.0 / ((1.0 - z * z) * pp * pp);
            weights[m - 1 - i] = weights[i];
        }
        Self { nodes, weights }
    }
}

fn panel_rule() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(PANEL_ORDER))
}

#[inline]
pub(crate) fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Standard normal CDF.
#[inline]
pub(crate) fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Nodes and normal-density weights for `int_lo^hi f(g) phi(g) dg`, using
/// Gauss-Legendre panels that shrink geometrically towards `center`, where
/// the integrand varies on the length scale `width`.
pub(crate) fn refined_normal_rule(lo: f64, hi: f64, center: f64, width: f64) -> Vec<(f64, f64)> {
    let lo = lo.max(-TRUNCATION);
    let hi = hi.min(TRUNCATION);
    if hi <= lo {
        return Vec::new();
    }
    let width = width.max(1e-14);
    let mut breaks = vec![lo, hi];
    if center > lo && center < hi {
        breaks.push(center);
    }
    let mut off = width;
    while off < hi - lo {
        for b in [center - off, center + off] {
            if b > lo && b < hi {
                breaks.push(b);
            }
        }
        off *= 2.0;
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let gl = panel_rule();
    let mut out = Vec::with_capacity(breaks.len() * PANEL_ORDER * 2);
    for pair in breaks.windows(2) {
        let pieces = ((pair[1] - pair[0]) / 1.0).ceil().max(1.0) as usize;
        let step = (pair[1] - pair[0]) / pieces as f64;
        for k in 0..pieces {
            let a = pair[0] + step * k as f64;
            let half = 0.5 * step;
            let mid = a + half;
            for (t, w) in gl.nodes.iter().zip(&gl.weights) {
                let x = mid + half * t;
                out.push((x, half * w * normal_pdf(x)));
            }
        }
    }
    out
}

/// Rule for `E f(g)` over the whole line with a feature of size `width` at `center`.
pub(crate) fn normal_rule(grid: &QuadratureGrid, center: f64, width: f64) -> Vec<(f64, f64)> {
    if width >= SMOOTH_WIDTH {
        grid.nodes
            .iter()
            .copied()
            .zip(grid.weights.iter().copied())
            .collect()
    } else {
        refined_normal_rule(-TRUNCATION, TRUNCATION, center, width)
    }
}

/// `int_0^inf f(g) phi(g) dg`, where `f` varies on the scale `width` near the origin.
pub(crate) fn half_line_expectation(width: f64, f: impl Fn(f64) -> f64) -> f64 {
    refined_normal_rule(0.0, TRUNCATION, 0.0, width.min(SMOOTH_WIDTH))
        .into_iter()
        .map(|(x, w)| w * f(x))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_are_normalized() {
        for order in [8, 20, 64, 96, 128] {
            let g = QuadratureGrid::new(order).unwrap();
            let s: f64 = g.weights().iter().sum();
            assert!((s - 1.0).abs() <= 1e-12, "order {order}: sum {s}");
            assert!(g.weights().iter().all(|w| *w > 0.0));
        }
    }

    #[test]
    fn rejects_low_order() {
        assert!(QuadratureGrid::new(7).is_err());
    }

    #[test]
    fn reproduces_gaussian_moments() {
        let g = QuadratureGrid::default();
        assert!(g.expect(|x| x).abs() < 1e-13);
        assert!((g.expect(|x| x * x) - 1.0).abs() < 1e-12);
        assert!((g.expect(|x| x.powi(4)) - 3.0).abs() < 1e-11);
        assert!((g.expect(|x| x.powi(6)) - 15.0).abs() < 1e-10);
        // E cos(g) = exp(-1/2)
        assert!((g.expect(f64::cos) - (-0.5f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn legendre_integrates_polynomials() {
        let gl = GaussLegendre::new(24);
        let s: f64 = gl.weights.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
        let x4: f64 = gl.nodes.iter().zip(&gl.weights).map(|(x, w)| w * x.powi(4)).sum();
        assert!((x4 - 0.4).abs() < 1e-14);
    }

    #[test]
    fn refined_rule_handles_kinks() {
        // E|g| = sqrt(2/pi); the kink at 0 defeats plain Gauss-Hermite
        let rule = refined_normal_rule(-TRUNCATION, TRUNCATION, 0.0, 1e-3);
        let s: f64 = rule.iter().map(|(x, w)| w * x.abs()).sum();
        assert!((s - (2.0 / PI).sqrt()).abs() < 1e-14, "{s}");
        let mass: f64 = rule.iter().map(|(_, w)| w).sum();
        assert!((mass - 1.0).abs() < 1e-13);
        let half = half_line_expectation(0.01, |_| 1.0);
        assert!((half - 0.5).abs() < 1e-14);
    }

    #[test]
    fn normal_cdf_values() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-16);
        let q = normal_cdf(1.959963984540054);
        assert!((q - 0.975).abs() < 1e-14, "{q:e}");
        assert!(normal_cdf(-40.0) >= 0.0 && normal_cdf(-40.0) < 1e-300);
        assert_eq!(normal_cdf(f64::INFINITY), 1.0);
    }
}
