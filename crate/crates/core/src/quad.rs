//! Fixed-rule quadrature: Gauss–Legendre panels and the trapezoid rule.

use crate::sum::{ComplexNeumaier, Neumaier};
use alloc::vec::Vec;
use core::f64::consts::PI;
use num_complex::Complex64;

/// Gauss–Legendre nodes and weights on [-1, 1], found by Newton iteration.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        let mut nodes = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for i in 0..n {
            let mut x = libm::cos(PI * (i as f64 + 0.75) / (n as f64 + 0.5));
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            nodes.push(x);
            weights.push(2.0 / ((1.0 - x * x) * dp * dp));
        }
        Self { nodes, weights }
    }

    pub fn gl15() -> Self {
        Self::new(15)
    }

    /// ∫_a^b f on one panel.
    pub fn panel<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = Neumaier::new();
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc.add(w * f(mid + half * x));
        }
        half * acc.value()
    }

    /// ∫_a^b f split into `panels` equal panels.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, panels: usize, mut f: F) -> f64 {
        let panels = panels.max(1);
        let h = (b - a) / panels as f64;
        let mut acc = Neumaier::new();
        for i in 0..panels {
            let lo = a + h * i as f64;
            acc.add(self.panel(lo, lo + h, &mut f));
        }
        acc.value()
    }

    pub fn integrate_complex<F: FnMut(f64) -> Complex64>(
        &self,
        a: f64,
        b: f64,
        panels: usize,
        mut f: F,
    ) -> Complex64 {
        let panels = panels.max(1);
        let h = (b - a) / panels as f64;
        let mut acc = ComplexNeumaier::new();
        for i in 0..panels {
            let lo = a + h * i as f64;
            let half = 0.5 * h;
            let mid = lo + half;
            for (x, w) in self.nodes.iter().zip(&self.weights) {
                acc.add(f(mid + half * x) * (w * half));
            }
        }
        acc.value()
    }

    /// Absolute nodes and weights for `panels` equal panels on [a, b].
    pub fn grid(&self, a: f64, b: f64, panels: usize) -> (Vec<f64>, Vec<f64>) {
        let panels = panels.max(1);
        let h = (b - a) / panels as f64;
        let mut xs = Vec::with_capacity(panels * self.nodes.len());
        let mut ws = Vec::with_capacity(panels * self.nodes.len());
        for i in 0..panels {
            let mid = a + h * (i as f64 + 0.5);
            for (x, w) in self.nodes.iter().zip(&self.weights) {
                xs.push(mid + 0.5 * h * x);
                ws.push(0.5 * h * w);
            }
        }
        (xs, ws)
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for j in 2..=n {
        let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Trapezoid rule with `n` intervals; spectrally accurate for integrands that
/// vanish smoothly at both ends.
pub fn trapezoid<F: FnMut(f64) -> f64>(a: f64, b: f64, n: usize, mut f: F) -> f64 {
    let n = n.max(1);
    let h = (b - a) / n as f64;
    let mut acc = Neumaier::new();
    acc.add(0.5 * f(a));
    for i in 1..n {
        acc.add(f(a + h * i as f64));
    }
    acc.add(0.5 * f(b));
    h * acc.value()
}

/// Composite Simpson rule with `n` (rounded up to even) intervals.
pub fn simpson<F: FnMut(f64) -> f64>(a: f64, b: f64, n: usize, mut f: F) -> f64 {
    let n = (n.max(2) + 1) & !1;
    let h = (b - a) / n as f64;
    let mut acc = Neumaier::new();
    acc.add(f(a));
    acc.add(f(b));
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc.add(w * f(a + h * i as f64));
    }
    h / 3.0 * acc.value()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gl15_integrates_polynomials_exactly() {
        let g = GaussLegendre::gl15();
        let s: f64 = g.weights.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
        for d in 0..30u32 {
            let v = g.panel(0.0, 1.0, |x| libm::pow(x, d as f64));
            assert!((v - 1.0 / (d as f64 + 1.0)).abs() < 1e-14, "degree {d}");
        }
    }

    #[test]
    fn smooth_integrals() {
        let g = GaussLegendre::gl15();
        let v = g.integrate(0.0, PI, 4, libm::sin);
        assert!((v - 2.0).abs() < 1e-14);
        let t = trapezoid(-10.0, 10.0, 200, |x| libm::exp(-x * x));
        assert!((t - libm::sqrt(PI)).abs() < 1e-13);
        let s = simpson(0.0, 1.0, 100, libm::exp);
        assert!((s - (core::f64::consts::E - 1.0)).abs() < 1e-9);
    }
}
