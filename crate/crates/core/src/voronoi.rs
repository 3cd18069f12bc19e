//! Two-sided Voronoi summation for additively twisted coefficient sums.

use crate::arith::{gcd, inverse_mod, Twiddle};
use crate::bessel::{jn, WindowH, WindowKind, WINDOW_HI, WINDOW_LO};
use crate::error::{Error, Result};
use crate::modforms::Newform;
use crate::par::Parallel;
use crate::sum::{ComplexNeumaier, Neumaier};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use num_complex::Complex64;

#[derive(Debug, Clone, Copy)]
pub struct VoronoiInstance<'a> {
    pub f: &'a Newform,
    pub a: i64,
    pub q: u64,
    pub n2: u64,
    pub eta: Option<Complex64>,
}

impl<'a> VoronoiInstance<'a> {
    pub fn new(f: &'a Newform, a: i64, q: u64) -> Result<Self> {
        if q == 0 {
            return Err(Error::InvalidModulus);
        }
        if gcd(a.unsigned_abs(), q) != 1 {
            return Err(Error::InvalidArgument(format!("a = {a} is not coprime to q = {q}")));
        }
        Ok(Self {
            f,
            a,
            q,
            n2: f.level / gcd(f.level, q),
            eta: None,
        })
    }

    /// \overline{aN₂} mod q.
    fn dual_residue(&self) -> u64 {
        inverse_mod(self.a * self.n2 as i64, self.q).expect("a and N₂ are units mod q")
    }
}

/// Σ_n λ(n) e(na/q) h(n/X).
pub fn voronoi_lhs(inst: &VoronoiInstance, h: &WindowH, x: f64) -> Result<Complex64> {
    if !(x >= 1.0) {
        return Err(Error::Domain(format!("scale X = {x} must be ≥ 1")));
    }
    let need = libm::ceil(3.0 * x) as u64;
    if inst.f.n_max() < need {
        return Err(Error::Range {
            requested: need,
            available: inst.f.n_max(),
        });
    }
    if h.is_zero() {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let lam = inst.f.coefficients.normalized();
    let tw = Twiddle::new(inst.q);
    let a = inst.a.rem_euclid(inst.q as i64) as u64;
    let lo = libm::floor(WINDOW_LO * x) as u64 + 1;
    let hi = libm::ceil(WINDOW_HI * x) as u64;
    let mut acc = ComplexNeumaier::new();
    for n in lo..=hi {
        let w = h.eval(n as f64 / x);
        if w != 0.0 {
            acc.add(tw.get(n % inst.q * a) * (lam[n as usize] * w));
        }
    }
    Ok(acc.value())
}

/// Dual-side length for the window scale X.
pub fn dual_truncation(q: u64, n2: u64, x: f64) -> usize {
    libm::ceil(6000.0 * (q * q * n2) as f64 / x) as usize + 20
}

/// X∫ h(t) J_{k−1}(4π√(nXt)/(q√N₂)) dt for n = 1..=T; independent of a.
#[derive(Debug, Clone)]
pub struct DualKernel {
    pub q: u64,
    pub n2: u64,
    pub x: f64,
    pub truncation: usize,
    /// Slot n holds the integral for index n; slot 0 unused.
    pub values: Vec<f64>,
}

impl DualKernel {
    pub fn new<P: Parallel>(par: &P, weight: u32, q: u64, n2: u64, h: &WindowH, x: f64, truncation: usize) -> Self {
        let lo = libm::sqrt(WINDOW_LO);
        let hi = libm::sqrt(WINDOW_HI);
        let scale = 4.0 * PI * libm::sqrt(x) / (q as f64 * libm::sqrt(n2 as f64));
        let beta_max = scale * libm::sqrt(truncation as f64);
        // trapezoid in w = √t; the integrand vanishes to all orders at both ends
        let m = 96 + libm::ceil(8.0 * beta_max * (hi - lo) / (2.0 * PI)) as usize;
        let dw = (hi - lo) / m as f64;
        let nodes: Vec<(f64, f64)> = (1..m)
            .map(|i| {
                let w = lo + dw * i as f64;
                (w, 2.0 * w * h.eval(w * w))
            })
            .filter(|&(_, g)| g != 0.0)
            .collect();
        let order = weight - 1;
        let mut values = par.map_collect(truncation + 1, |n| {
            if n == 0 {
                return 0.0;
            }
            let beta = scale * libm::sqrt(n as f64);
            let mut acc = Neumaier::new();
            for &(w, g) in &nodes {
                acc.add(g * jn(order, beta * w));
            }
            x * dw * acc.value()
        });
        values[0] = 0.0;
        Self {
            q,
            n2,
            x,
            truncation,
            values,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhsValue {
    pub value: Complex64,
    /// |S(T) − S(T/2)| for the dual sum; estimates the truncation error.
    pub tail_estimate: f64,
}

/// (2πη/(q√N₂)) Σ_{n≤T} λ(n) e(−n·\overline{aN₂}/q) · kernel(n), with f* = f.
pub fn voronoi_rhs_with(inst: &VoronoiInstance, kernel: &DualKernel, eta: Complex64) -> Result<RhsValue> {
    if kernel.q != inst.q || kernel.n2 != inst.n2 {
        return Err(Error::InvalidArgument("dual kernel built for another modulus".into()));
    }
    let t = kernel.truncation as u64;
    if inst.f.n_max() < t {
        return Err(Error::Range {
            requested: t,
            available: inst.f.n_max(),
        });
    }
    let lam = inst.f.coefficients.normalized();
    let tw = Twiddle::new(inst.q);
    let b = inst.dual_residue();
    let mut acc = ComplexNeumaier::new();
    let mut half = Complex64::new(0.0, 0.0);
    for n in 1..=t {
        let phase = tw.get((inst.q - n % inst.q) % inst.q * b);
        acc.add(phase * (lam[n as usize] * kernel.values[n as usize]));
        if n == t / 2 {
            half = acc.value();
        }
    }
    let pref = eta * (2.0 * PI / (inst.q as f64 * libm::sqrt(inst.n2 as f64)));
    let full = acc.value();
    Ok(RhsValue {
        value: pref * full,
        tail_estimate: (pref * (full - half)).norm(),
    })
}

pub fn voronoi_rhs<P: Parallel>(
    par: &P,
    inst: &VoronoiInstance,
    h: &WindowH,
    x: f64,
    eta: Complex64,
) -> Result<RhsValue> {
    if !(x >= 1.0) {
        return Err(Error::Domain(format!("scale X = {x} must be ≥ 1")));
    }
    if h.is_zero() || eta == Complex64::new(0.0, 0.0) {
        return Ok(RhsValue {
            value: Complex64::new(0.0, 0.0),
            tail_estimate: 0.0,
        });
    }
    let t = dual_truncation(inst.q, inst.n2, x);
    let kernel = DualKernel::new(par, inst.f.weight, inst.q, inst.n2, h, x, t);
    voronoi_rhs_with(inst, &kernel, eta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EtaFit {
    pub eta: Complex64,
    pub residuals: Vec<f64>,
    pub lhs: Vec<Complex64>,
    pub rhs: Vec<Complex64>,
}

/// Fits η on the first window and reports relative residuals on the others.
pub fn eta_fit<P: Parallel>(par: &P, inst: &VoronoiInstance, windows: &[(WindowH, f64)]) -> Result<EtaFit> {
    let kernels: Vec<DualKernel> = windows
        .iter()
        .map(|(h, x)| DualKernel::new(par, inst.f.weight, inst.q, inst.n2, h, *x, dual_truncation(inst.q, inst.n2, *x)))
        .collect();
    eta_fit_with(inst, windows, &kernels)
}

/// As [`eta_fit`] with precomputed dual kernels (one per window).
pub fn eta_fit_with(inst: &VoronoiInstance, windows: &[(WindowH, f64)], kernels: &[DualKernel]) -> Result<EtaFit> {
    if windows.len() < 2 || kernels.len() != windows.len() {
        return Err(Error::InvalidArgument("η fit needs at least two windows with kernels".into()));
    }
    let mut lhs = Vec::with_capacity(windows.len());
    let mut rhs = Vec::with_capacity(windows.len());
    for ((h, x), k) in windows.iter().zip(kernels) {
        lhs.push(voronoi_lhs(inst, h, *x)?);
        rhs.push(voronoi_rhs_with(inst, k, Complex64::new(1.0, 0.0))?.value);
    }
    if lhs[0].norm() < 1e-8 {
        return Err(Error::IllConditioned(lhs[0].norm()));
    }
    let eta = lhs[0] / rhs[0];
    let residuals = lhs
        .iter()
        .zip(&rhs)
        .skip(1)
        .map(|(l, r)| (l - eta * r).norm() / l.norm())
        .collect();
    Ok(EtaFit { eta, residuals, lhs, rhs })
}

/// Base scale max(50, 8q²N₂) and four windows: the fitting one plus three held out.
pub fn default_windows(q: u64, n2: u64) -> Vec<(WindowH, f64)> {
    let x0 = (8 * q * q * n2).max(50) as f64;
    vec![
        (WindowH::bump(), x0),
        (WindowH::new(WindowKind::Tilt(0.4)), 1.25 * x0),
        (WindowH::new(WindowKind::Power(2)), 1.5 * x0),
        (WindowH::bump(), 2.0 * x0),
    ]
}

/// Largest coefficient index any default window for moduli ≤ q_max touches.
pub fn coefficients_needed(level: u64, q_max: u64) -> u64 {
    (1..=q_max)
        .map(|q| {
            let n2 = level / gcd(level, q);
            default_windows(q, n2)
                .iter()
                .map(|(_, x)| (libm::ceil(3.0 * x) as u64).max(dual_truncation(q, n2, *x) as u64))
                .max()
                .unwrap_or(0)
        })
        .max()
        .unwrap_or(0)
}
