//! Bessel-J kernels, the W_k split of J_k and the oscillatory integrals I and J.

use crate::deltamethod::DeltaSymbol;
use crate::error::{Error, Result};
use crate::quad::GaussLegendre;
use crate::shifted::BiWindow;
use crate::special::ln_gamma;
use crate::sum::Neumaier;
use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::{E, PI};
use num_complex::Complex64;

pub const MAX_ORDER: u32 = 60;
pub const WINDOW_LO: f64 = 0.5;
pub const WINDOW_HI: f64 = 2.5;

/// exp(−1/((t−1/2)(5/2−t))) on (1/2, 5/2), scaled to peak 1 at t = 3/2.
#[inline]
pub fn canonical_bump(t: f64) -> f64 {
    if t <= WINDOW_LO || t >= WINDOW_HI {
        return 0.0;
    }
    let p = (t - WINDOW_LO) * (WINDOW_HI - t);
    E * libm::exp(-1.0 / p)
}

#[derive(Debug, Clone, Copy)]
pub enum WindowKind {
    Zero,
    Bump,
    /// bump(t)·(1 + c(t − 3/2))
    Tilt(f64),
    /// bump(t)^p
    Power(u32),
    Custom(fn(f64) -> f64),
}

/// Smooth weight supported in [1/2, 5/2] with a table of derivative bounds.
#[derive(Debug, Clone, Copy)]
pub struct WindowH {
    pub kind: WindowKind,
    pub derivative_bounds: [f64; 5],
}

impl WindowH {
    pub fn new(kind: WindowKind) -> Self {
        let mut w = Self {
            kind,
            derivative_bounds: [0.0; 5],
        };
        let sups = derivative_sups(|t| w.eval(t), 4000);
        for (b, s) in w.derivative_bounds.iter_mut().zip(sups) {
            *b = 1.5 * s + 1e-12;
        }
        w
    }

    pub fn bump() -> Self {
        Self::new(WindowKind::Bump)
    }

    pub fn zero() -> Self {
        Self::new(WindowKind::Zero)
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        if t <= WINDOW_LO || t >= WINDOW_HI {
            return 0.0;
        }
        match self.kind {
            WindowKind::Zero => 0.0,
            WindowKind::Bump => canonical_bump(t),
            WindowKind::Tilt(c) => canonical_bump(t) * (1.0 + c * (t - 1.5)),
            WindowKind::Power(p) => libm::pow(canonical_bump(t), p as f64),
            WindowKind::Custom(f) => f(t),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, WindowKind::Zero)
    }
}

/// sup |f^{(j)}| over the support for j = 0..=4, by central differences.
pub fn derivative_sups<F: Fn(f64) -> f64>(f: F, points: usize) -> [f64; 5] {
    let h = (WINDOW_HI - WINDOW_LO) / points as f64;
    let vals: Vec<f64> = (0..=points + 8)
        .map(|i| f(WINDOW_LO + h * (i as f64 - 4.0)))
        .collect();
    let mut out = [0.0f64; 5];
    for i in 4..=points + 4 {
        let v = |o: isize| vals[(i as isize + o) as usize];
        let d = [
            v(0),
            (v(1) - v(-1)) / (2.0 * h),
            (v(1) - 2.0 * v(0) + v(-1)) / (h * h),
            (v(2) - 2.0 * v(1) + 2.0 * v(-1) - v(-2)) / (2.0 * h * h * h),
            (v(2) - 4.0 * v(1) + 6.0 * v(0) - 4.0 * v(-1) + v(-2)) / (h * h * h * h),
        ];
        for j in 0..5 {
            out[j] = out[j].max(d[j].abs());
        }
    }
    out
}

/// J_n(x) for 0 ≤ n ≤ 60 and x ≥ 0.
pub fn bessel_j(order: u32, x: f64) -> Result<f64> {
    if order > MAX_ORDER {
        return Err(Error::UnsupportedOrder(order));
    }
    if !(x >= 0.0) {
        return Err(Error::Domain(format!("Bessel argument {x} must be non-negative")));
    }
    Ok(jn(order, x))
}

/// Unchecked J_n(x) for hot loops.
#[inline]
pub fn jn(order: u32, x: f64) -> f64 {
    match order {
        0 => libm::j0(x),
        1 => libm::j1(x),
        _ => libm::jn(order as i32, x),
    }
}

/// J_ν for a fixed order: Hankel's expansion above a cutoff, libm below it.
#[derive(Debug, Clone)]
pub struct BesselJ {
    order: u32,
    cutoff: f64,
    phase: f64,
    /// (−1)^k a_{2k}(ν)
    even: Vec<f64>,
    /// (−1)^k a_{2k+1}(ν)
    odd: Vec<f64>,
}

impl BesselJ {
    pub fn new(order: u32) -> Self {
        let mu = 4.0 * (order as f64) * (order as f64);
        let mut a = Vec::from([1.0]);
        for k in 1..=40u32 {
            let j = (2 * k - 1) as f64;
            let prev = a[a.len() - 1];
            a.push(prev * (mu - j * j) / (8.0 * k as f64));
        }
        // smallest cutoff where the terms fall below 1e-17 before they turn around
        let mut cutoff = 16.0;
        let terms = loop {
            let mut best = None;
            let mut last = f64::INFINITY;
            for (k, &c) in a.iter().enumerate().skip(1) {
                let t = c.abs() / libm::pow(cutoff, k as f64);
                if t > last {
                    break;
                }
                last = t;
                if t < 1e-17 {
                    best = Some(k);
                    break;
                }
            }
            match best {
                Some(k) => break k,
                None => cutoff *= 1.25,
            }
        };
        let mut even = Vec::new();
        let mut odd = Vec::new();
        for (k, &c) in a.iter().enumerate().take(terms + 1) {
            let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
            if k % 2 == 0 {
                even.push(sign * c);
            } else {
                odd.push(sign * c);
            }
        }
        Self {
            order,
            cutoff,
            phase: (order as f64 / 2.0 + 0.25) * PI,
            even,
            odd,
        }
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        if x < self.cutoff {
            return jn(self.order, x);
        }
        let w = 1.0 / x;
        let w2 = w * w;
        let p = self.even.iter().rev().fold(0.0, |acc, &c| acc * w2 + c);
        let q = w * self.odd.iter().rev().fold(0.0, |acc, &c| acc * w2 + c);
        let (s, c) = libm::sincos(x - self.phase);
        libm::sqrt(2.0 / (PI * x)) * (p * c - q * s)
    }
}

/// W_k(x) with J_k(x) = 2 Re(e^{ix} W_k(x)), from the Laguerre-type integral.
pub fn wk_decompose(k: u32, x: f64) -> Result<Complex64> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!("W_k needs x > 0, got {x}")));
    }
    if k == 0 || k > MAX_ORDER {
        return Err(Error::UnsupportedOrder(k));
    }
    let nu = k as f64 - 0.5;
    let lg = ln_gamma(Complex64::new(k as f64 + 0.5, 0.0)).re;
    // y = t²: ∫ e^{-y}(y(1+iy/2x))^{ν} dy = 2∫ t^{2k} e^{-t²} (1+it²/2x)^{ν} dt
    let tmax = libm::sqrt(8.0 * k as f64 + 160.0);
    let gl = GaussLegendre::gl15();
    let integral = gl.integrate_complex(0.0, tmax, 96, |t| {
        if t == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        let y = t * t;
        let z = Complex64::new(1.0, y / (2.0 * x));
        let log = z.ln() * nu + (2.0 * k as f64 * libm::log(t) - y - lg);
        log.exp() * 2.0
    });
    let phase = Complex64::from_polar(1.0, -(PI / 2.0 * k as f64 + PI / 4.0));
    Ok(phase * integral * (0.5 * libm::sqrt(2.0 / (PI * x))))
}

/// Sizes of the two Bessel frequencies in I: α = 4πa√x, β = 4πb√y.
fn check_positive(vals: &[(&str, f64)]) -> Result<()> {
    for (name, v) in vals {
        if !(*v > 0.0) {
            return Err(Error::Domain(format!("{name} must be positive, got {v}")));
        }
    }
    Ok(())
}

/// ∫ h(ξ) J_{κ−1}(4πa√(xξ)) J_{k−1}(4πb√(yξ)) dξ.
pub fn integral_i(a: f64, b: f64, x: f64, y: f64, kappa: u32, k: u32, h: &WindowH) -> Result<f64> {
    integral_i_with_error(a, b, x, y, kappa, k, h).map(|(v, _)| v)
}

/// As [`integral_i`], also returning |I(n panels) − I(2n panels)|.
pub fn integral_i_with_error(
    a: f64,
    b: f64,
    x: f64,
    y: f64,
    kappa: u32,
    k: u32,
    h: &WindowH,
) -> Result<(f64, f64)> {
    check_positive(&[("a", a), ("b", b), ("x", x), ("y", y)])?;
    if kappa < 2 || k < 2 || kappa > MAX_ORDER + 1 || k > MAX_ORDER + 1 {
        return Err(Error::UnsupportedOrder(kappa.max(k)));
    }
    if h.is_zero() {
        return Ok((0.0, 0.0));
    }
    let alpha = 4.0 * PI * a * libm::sqrt(x);
    let beta = 4.0 * PI * b * libm::sqrt(y);
    Ok(integral_i_kernel(alpha, beta, kappa - 1, k - 1, |t| h.eval(t)))
}

/// 2∫ g(w²) w J_{n1}(αw) J_{n2}(βw) dw over the support, with a halving error estimate.
pub fn integral_i_kernel<G: Fn(f64) -> f64>(alpha: f64, beta: f64, n1: u32, n2: u32, g: G) -> (f64, f64) {
    let lo = libm::sqrt(WINDOW_LO);
    let hi = libm::sqrt(WINDOW_HI);
    let freq = alpha.max(beta);
    // half a Bessel period per panel at worst, never fewer than 8 panels
    let panels = 8usize.max(libm::ceil((hi - lo) * freq / PI) as usize);
    let gl = GaussLegendre::gl15();
    let f = |w: f64| 2.0 * g(w * w) * w * jn(n1, alpha * w) * jn(n2, beta * w);
    let coarse = gl.integrate(lo, hi, panels, f);
    let fine = gl.integrate(lo, hi, 2 * panels, f);
    (fine, (fine - coarse).abs())
}

/// The double integral of F(x/X, y/Y) h(q/Q, (xP+ℓ−y)/Q²) J_{k−1}(4πa√x) J_{k−1}(4πb√y).
#[allow(clippy::too_many_arguments)]
pub fn integral_j(
    a: f64,
    b: f64,
    q: u64,
    big_q: f64,
    p: u64,
    ell: i64,
    f: &BiWindow,
    k: u32,
    delta: &DeltaSymbol,
) -> Result<f64> {
    integral_j_with_error(a, b, q, big_q, p, ell, f, k, delta).map(|(v, _)| v)
}

#[allow(clippy::too_many_arguments)]
pub fn integral_j_with_error(
    a: f64,
    b: f64,
    q: u64,
    big_q: f64,
    p: u64,
    ell: i64,
    f: &BiWindow,
    k: u32,
    delta: &DeltaSymbol,
) -> Result<(f64, f64)> {
    check_positive(&[("a", a), ("b", b), ("Q", big_q - 1.0)])?;
    if q == 0 || p == 0 {
        return Err(Error::InvalidModulus);
    }
    if ell == 0 {
        return Err(Error::InvalidArgument("shift ℓ must be non-zero".into()));
    }
    if k < 2 || k > MAX_ORDER + 1 {
        return Err(Error::UnsupportedOrder(k));
    }
    if (delta.q() - big_q).abs() > 1e-12 * big_q {
        return Err(Error::InvalidArgument(format!(
            "delta symbol built for Q = {} but J requested with Q = {big_q}",
            delta.q()
        )));
    }
    if f.is_zero() {
        return Ok((0.0, 0.0));
    }
    let (xs, ys) = (f.x, f.y);
    let hx = q as f64 / big_q;
    let q2 = big_q * big_q;
    let alpha = 4.0 * PI * a;
    let beta = 4.0 * PI * b;
    // panel counts: Bessel oscillation, F's own scale, h's scale qQ in xP − y
    let nx = |refine: f64| -> usize {
        let osc = alpha * (libm::sqrt(2.5 * xs) - libm::sqrt(0.5 * xs)) / PI;
        let hh = 2.0 * xs * p as f64 / (q as f64 * big_q);
        (refine * (8.0 + f.zx * 2.0 + osc + hh)) as usize
    };
    let ny = |refine: f64| -> usize {
        let osc = beta * (libm::sqrt(2.5 * ys) - libm::sqrt(0.5 * ys)) / PI;
        let hh = 2.0 * ys / (q as f64 * big_q);
        (refine * (8.0 + f.zy * 2.0 + osc + hh)) as usize
    };
    let gl = GaussLegendre::gl15();
    let eval = |refine: f64| -> f64 {
        let (xn, xw) = gl.grid(0.5 * xs, 2.5 * xs, nx(refine));
        let (yn, yw) = gl.grid(0.5 * ys, 2.5 * ys, ny(refine));
        let jx: Vec<f64> = xn.iter().map(|&x| jn(k - 1, alpha * libm::sqrt(x))).collect();
        let jy: Vec<f64> = yn.iter().map(|&y| jn(k - 1, beta * libm::sqrt(y))).collect();
        let mut acc = Neumaier::new();
        for (i, &x) in xn.iter().enumerate() {
            let mut row = Neumaier::new();
            for (j, &y) in yn.iter().enumerate() {
                let fv = f.eval(x / xs, y / ys);
                if fv == 0.0 {
                    continue;
                }
                let hv = delta.h_unchecked(hx, (x * p as f64 + ell as f64 - y) / q2);
                row.add(yw[j] * fv * hv * jy[j]);
            }
            acc.add(xw[i] * jx[i] * row.value());
        }
        acc.value()
    };
    let coarse = eval(1.0);
    let fine = eval(2.0);
    Ok((fine, (fine - coarse).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;
    use num_rational::BigRational;
    use num_traits::{One, ToPrimitive, Zero};
    use proptest::prelude::*;

    /// Σ_j (−1)^j (x/2)^{2j+n} / (j!(j+n)!) in exact rational arithmetic.
    fn series_oracle(n: u32, x: BigRational, terms: u32) -> f64 {
        let half = x / BigRational::from_integer(BigInt::from(2));
        let h2 = &half * &half;
        let mut term = BigRational::one();
        for i in 1..=n {
            term = term * &half / BigRational::from_integer(BigInt::from(i));
        }
        let mut acc = BigRational::zero();
        for j in 0..terms {
            if j % 2 == 0 {
                acc += &term;
            } else {
                acc -= &term;
            }
            term = term * &h2 / BigRational::from_integer(BigInt::from((j + 1) * (j + 1 + n)));
        }
        acc.to_f64().unwrap()
    }

    fn rat(num: i64, den: i64) -> BigRational {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }

    #[test]
    fn bessel_examples() {
        assert_eq!(bessel_j(1, 0.0).unwrap(), 0.0);
        assert_eq!(bessel_j(0, 0.0).unwrap(), 1.0);
        let v = bessel_j(3, 1.0).unwrap();
        let o = series_oracle(3, rat(1, 1), 40);
        assert!((v - o).abs() <= 1e-10 * o.abs());
        assert!(bessel_j(61, 1.0).is_err());
        assert!(bessel_j(2, -1.0).is_err());
    }

    #[test]
    fn bessel_against_series_oracle() {
        for n in [0u32, 1, 2, 5, 11, 23, 40, 60] {
            for (p, q) in [(1i64, 8i64), (3, 2), (7, 1), (29, 2), (25, 1)] {
                let x = p as f64 / q as f64;
                let o = series_oracle(n, rat(p, q), 120);
                let v = jn(n, x);
                assert!((v - o).abs() <= 1e-10 * o.abs().max(1e-300) + 1e-15, "n={n} x={x}: {v} vs {o}");
            }
        }
    }

    #[test]
    fn bessel_large_argument_reference() {
        // mpmath.besselj at 30 digits
        let cases = [
            (0u32, 1000.0, 0.024786686152420175),
            (11, 1234.5, -0.017537652455356084),
            (3, 9876.0, 0.0074516825341256065),
            (60, 80.0, -0.086173789844633471),
            (1, 5000.0, -0.0091174057136461595),
        ];
        for (n, x, o) in cases {
            let v = jn(n, x);
            assert!((v - o).abs() <= 1e-10 * o.abs(), "n={n} x={x}: {v} vs {o}");
        }
    }

    #[test]
    fn wk_examples() {
        let w = wk_decompose(3, 5.0).unwrap();
        let r = jn(3, 5.0) - 2.0 * (Complex64::from_polar(1.0, 5.0) * w).re;
        assert!(r.abs() <= 1e-8 * jn(3, 5.0).abs().max(1.0));
        // W_k = e^{-ix}(J_k + iY_k)/2
        let w2 = wk_decompose(2, 1.0).unwrap();
        let oracle = Complex64::from_polar(0.5, -1.0) * Complex64::new(libm::jn(2, 1.0), libm::yn(2, 1.0));
        assert!((w2 - oracle).norm() < 1e-8);
        assert!(wk_decompose(3, 0.0).is_err());
    }

    #[test]
    fn wk_reconstruction_on_log_grid() {
        // for larger k the Y_k part of W_k near 0 is so big that doubles cannot cancel it
        for (k, lo) in [(2u32, -1.0), (3, -1.0), (4, -1.0), (5, 0.0), (11, 0.5)] {
            for i in 0..100 {
                let x = libm::pow(10.0, lo + (3.0 - lo) * i as f64 / 99.0);
                let w = wk_decompose(k, x).unwrap();
                let j = jn(k, x);
                let r = j - 2.0 * (Complex64::from_polar(1.0, x) * w).re;
                assert!(r.abs() <= 1e-8 * j.abs().max(1.0), "k={k} x={x} r={r}");
            }
        }
    }

    #[test]
    fn wk_envelope_ratio_finite() {
        let mut worst: f64 = 0.0;
        for i in 0..200 {
            let x = libm::pow(10.0, -1.0 + 3.0 * i as f64 / 199.0);
            let w = wk_decompose(3, x).unwrap();
            worst = worst.max(w.norm() * libm::pow(1.0 + x, 1.5) / x);
        }
        assert!(worst.is_finite());
    }

    #[test]
    fn window_invariants() {
        for w in [WindowH::bump(), WindowH::new(WindowKind::Tilt(0.4)), WindowH::new(WindowKind::Power(2))] {
            assert_eq!(w.eval(0.5), 0.0);
            assert_eq!(w.eval(2.5), 0.0);
            assert_eq!(w.eval(3.0), 0.0);
            let sups = derivative_sups(|t| w.eval(t), 1000);
            for j in 0..5 {
                assert!(sups[j] <= w.derivative_bounds[j], "order {j}");
            }
        }
        assert!((canonical_bump(1.5) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn integral_i_symmetric_case_matches_simpson() {
        let h = WindowH::bump();
        for (a, x, n) in [(0.3, 2.0, 2u32), (1.1, 7.0, 4), (0.05, 100.0, 12)] {
            let v = integral_i(a, a, x, x, n, n, &h).unwrap();
            let c = 4.0 * PI * a * libm::sqrt(x);
            let s = crate::quad::simpson(libm::sqrt(0.5), libm::sqrt(2.5), 100_000, |w| {
                2.0 * h.eval(w * w) * w * jn(n - 1, c * w) * jn(n - 1, c * w)
            });
            assert!((v - s).abs() < 1e-8, "{v} vs {s}");
        }
    }

    #[test]
    fn integral_i_zero_window_and_errors() {
        assert_eq!(integral_i(1.0, 1.0, 1.0, 1.0, 2, 2, &WindowH::zero()).unwrap(), 0.0);
        assert!(integral_i(0.0, 1.0, 1.0, 1.0, 2, 2, &WindowH::bump()).is_err());
    }

    #[test]
    fn integral_i_decays_with_separation() {
        let h = WindowH::bump();
        // magnitudes around 20, separations s and 4s with s = 2
        for base in [20.0, 40.0] {
            let at = |s: f64| {
                let u = base + s / 2.0;
                let v = base - s / 2.0;
                integral_i(u / (4.0 * PI), v / (4.0 * PI), 1.0, 1.0, 4, 4, &h).unwrap().abs()
            };
            assert!(at(8.0) < at(2.0));
        }
    }

    proptest! {
        #[test]
        fn three_term_recurrence(k in 1u32..=20, x in 0.5f64..100.0) {
            let l = jn(k - 1, x) + jn(k + 1, x);
            let r = 2.0 * k as f64 / x * jn(k, x);
            let scale = jn(k - 1, x).abs().max(jn(k + 1, x).abs()).max(r.abs());
            prop_assert!((l - r).abs() <= 1e-8 * scale + 1e-14);
        }

        #[test]
        fn integral_i_halving_within_error(a in 0.01f64..0.5, b in 0.01f64..0.5, x in 1.0f64..50.0, y in 1.0f64..50.0) {
            let h = WindowH::bump();
            let (v, e) = integral_i_with_error(a, b, x, y, 4, 2, &h).unwrap();
            prop_assert!(e < 1e-8);
            let alpha = 4.0 * PI * a * libm::sqrt(x);
            let beta = 4.0 * PI * b * libm::sqrt(y);
            let gl = GaussLegendre::gl15();
            let finer = gl.integrate(libm::sqrt(0.5), libm::sqrt(2.5), 200, |w| {
                2.0 * h.eval(w * w) * w * jn(3, alpha * w) * jn(1, beta * w)
            });
            prop_assert!((finer - v).abs() <= e.max(1e-12) * 10.0);
        }
    }

    #[test]
    fn hankel_branch_matches_libm() {
        for order in [0u32, 1, 3, 11, 30, 60] {
            let j = BesselJ::new(order);
            let c = j.cutoff();
            let mut x = c;
            while x < c + 400.0 {
                let (fast, slow) = (j.eval(x), jn(order, x));
                assert!((fast - slow).abs() < 2e-14 * (1.0 + libm::sqrt(x)), "{order} {x} {fast} {slow}");
                x += 0.37;
            }
            assert_eq!(j.eval(0.5 * c), jn(order, 0.5 * c));
        }
    }
}
