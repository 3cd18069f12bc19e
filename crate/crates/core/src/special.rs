//! Complex log-gamma and the Riemann zeta function.

use alloc::vec::Vec;
use num_complex::Complex64;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

// B_{2j} / (2j (2j - 1)) for j = 1..=10
const STIRLING: [f64; 10] = [
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360360.0,
    1.0 / 156.0,
    -3617.0 / 122400.0,
    43867.0 / 244188.0,
    -174611.0 / 125400.0,
];

/// Principal-branch log Γ(z) for Re z > 0 (continuous along vertical lines).
pub fn ln_gamma(z: Complex64) -> Complex64 {
    let mut shift = Complex64::new(0.0, 0.0);
    let mut w = z;
    while w.norm() < 15.0 || w.re < 8.0 {
        shift += w.ln();
        w += 1.0;
    }
    let inv = w.inv();
    let inv2 = inv * inv;
    let mut series = Complex64::new(0.0, 0.0);
    let mut pow = inv;
    for c in STIRLING {
        series += pow * c;
        pow *= inv2;
    }
    (w - 0.5) * w.ln() - w + LN_SQRT_2PI + series - shift
}

pub fn ln_gamma_real(x: f64) -> f64 {
    libm::lgamma(x)
}

/// Borwein's acceleration of the alternating zeta series.
#[derive(Debug, Clone)]
pub struct Zeta {
    coeffs: Vec<f64>,
}

impl Zeta {
    pub fn new(terms: usize) -> Self {
        let n = terms.max(8);
        // d_k = n Σ_{i≤k} (n+i−1)! 4^i / ((n−i)! (2i)!)
        let mut d = Vec::with_capacity(n + 1);
        let mut term = 1.0 / n as f64;
        let mut acc = 0.0;
        for i in 0..=n {
            if i > 0 {
                let fi = i as f64;
                term *= 4.0 * (n as f64 + fi - 1.0) * (n as f64 - fi + 1.0) / ((2.0 * fi - 1.0) * (2.0 * fi));
            }
            acc += term;
            d.push(n as f64 * acc);
        }
        let dn = d[n];
        let coeffs = (0..n)
            .map(|k| {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                sign * (dn - d[k]) / dn
            })
            .collect();
        Self { coeffs }
    }

    /// ζ(s) for s ≠ 1; accurate for |Im s| up to about 40.
    pub fn eval(&self, s: Complex64) -> Complex64 {
        let mut eta = Complex64::new(0.0, 0.0);
        for (k, &c) in self.coeffs.iter().enumerate().rev() {
            let ln = libm::log(k as f64 + 1.0);
            eta += (-s * ln).exp() * c;
        }
        let two = (Complex64::new(1.0, 0.0) - s) * core::f64::consts::LN_2;
        eta / (Complex64::new(1.0, 0.0) - two.exp())
    }

    /// ζ(s) with the Euler factors at `primes` removed.
    pub fn eval_removed(&self, s: Complex64, primes: &[u64]) -> Complex64 {
        let mut z = self.eval(s);
        for &p in primes {
            let ps = (-s * libm::log(p as f64)).exp();
            z *= Complex64::new(1.0, 0.0) - ps;
        }
        z
    }
}

impl Default for Zeta {
    fn default() -> Self {
        Self::new(72)
    }
}

/// Γ(x) for real x > 0.
pub fn gamma(x: f64) -> f64 {
    libm::tgamma(x)
}
