//! Shifted convolution sums S_{X,Y}(ℓ) and the delta → Voronoi(m) → Voronoi(n) pipeline.

use crate::arith::{gcd, inverse_mod, is_prime, kloosterman_row_with, modp, GcdClassRows, Twiddle, UnitTable};
use crate::bessel::{BesselJ, WINDOW_HI, WINDOW_LO};
use crate::deltamethod::DeltaSymbol;
use crate::error::{Error, Result};
use crate::fft::Dft;
use crate::modforms::Newform;
use crate::par::Parallel;
use crate::sum::Neumaier;
use crate::voronoi::{coefficients_needed, default_windows, eta_fit, VoronoiInstance};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use num_complex::Complex64;

/// Largest allowed x^i y^j ∂^i∂^j F / (Z Zx^i Zy^j) over i, j ≤ 2.
pub const ENVELOPE_CONSTANT: f64 = 10.0;
/// Steepness c of the default profile exp(c − c/((t−1/2)(5/2−t))).
pub const STANDARD_STEEPNESS: f64 = 4.0;
/// ε in the reported envelopes.
pub const EPSILON: f64 = 0.01;
const FD_STEPS: usize = 400;

#[inline]
pub fn profile_bump(c: f64, t: f64) -> f64 {
    if t <= WINDOW_LO || t >= WINDOW_HI {
        return 0.0;
    }
    let p = (t - WINDOW_LO) * (WINDOW_HI - t);
    libm::exp(c - c / p)
}

#[derive(Debug, Clone, Copy)]
pub enum BiProfile {
    Zero,
    /// g_c(u)·g_c(v)
    Product(f64),
    /// g_c(u)·g_c(v)·(1 + s(u − v))
    Tilted(f64, f64),
    Custom(fn(f64, f64) -> f64),
}

/// F(u, v) on [1/2, 5/2]² with its scales X, Y and derivative sizes Z, Zx, Zy.
#[derive(Debug, Clone, Copy)]
pub struct BiWindow {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub zx: f64,
    pub zy: f64,
    pub profile: BiProfile,
    /// max over i, j ≤ 2 of the sampled derivative over Z·Zx^i·Zy^j.
    pub envelope_ratio: f64,
}

impl BiWindow {
    /// Samples the partials on a grid and picks the smallest Zx, Zy ≥ 1 (then Z = sup|F|)
    /// meeting the envelope with constant [`ENVELOPE_CONSTANT`].
    pub fn new(x: f64, y: f64, profile: BiProfile) -> Result<Self> {
        if !(x >= 1.0 && y >= 1.0) {
            return Err(Error::Domain(format!("window scales must be ≥ 1, got X = {x}, Y = {y}")));
        }
        let mut w = Self {
            x,
            y,
            z: 0.0,
            zx: 1.0,
            zy: 1.0,
            profile,
            envelope_ratio: 0.0,
        };
        let d = derivative_table(|u, v| w.eval(u, v));
        let z = d[0][0];
        if z == 0.0 {
            return Ok(w);
        }
        let c = ENVELOPE_CONSTANT;
        let axis = |i: usize, di: f64| -> f64 {
            if i == 0 {
                1.0
            } else {
                libm::pow(di / (c * z), 1.0 / i as f64)
            }
        };
        let zx0 = (1..=2).map(|i| axis(i, d[i][0])).fold(1.0, f64::max);
        let zy0 = (1..=2).map(|j| axis(j, d[0][j])).fold(1.0, f64::max);
        let mut s: f64 = 1.0;
        for (i, row) in d.iter().enumerate().skip(1) {
            for (j, &dij) in row.iter().enumerate().skip(1) {
                let need = dij / (c * z * libm::pow(zx0, i as f64) * libm::pow(zy0, j as f64));
                s = s.max(libm::pow(need, 1.0 / (i + j) as f64));
            }
        }
        w.z = z;
        w.zx = zx0 * s;
        w.zy = zy0 * s;
        let mut ratio: f64 = 0.0;
        for (i, row) in d.iter().enumerate() {
            for (j, &dij) in row.iter().enumerate() {
                ratio = ratio.max(dij / (z * libm::pow(w.zx, i as f64) * libm::pow(w.zy, j as f64)));
            }
        }
        w.envelope_ratio = ratio;
        Ok(w)
    }

    pub fn product(x: f64, y: f64) -> Result<Self> {
        Self::new(x, y, BiProfile::Product(STANDARD_STEEPNESS))
    }

    pub fn zero(x: f64, y: f64) -> Result<Self> {
        Self::new(x, y, BiProfile::Zero)
    }

    #[inline]
    pub fn eval(&self, u: f64, v: f64) -> f64 {
        if u <= WINDOW_LO || u >= WINDOW_HI || v <= WINDOW_LO || v >= WINDOW_HI {
            return 0.0;
        }
        match self.profile {
            BiProfile::Zero => 0.0,
            BiProfile::Product(c) => profile_bump(c, u) * profile_bump(c, v),
            BiProfile::Tilted(c, s) => profile_bump(c, u) * profile_bump(c, v) * (1.0 + s * (u - v)),
            BiProfile::Custom(f) => f(u, v),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.profile, BiProfile::Zero) || self.z == 0.0
    }
}

/// sup |u^i v^j ∂_u^i ∂_v^j F| for i, j ≤ 2 by central differences.
fn derivative_table<F: Fn(f64, f64) -> f64>(f: F) -> [[f64; 3]; 3] {
    let n = FD_STEPS + 1;
    let h = (WINDOW_HI - WINDOW_LO) / FD_STEPS as f64;
    let t = |i: usize| WINDOW_LO + h * i as f64;
    let mut g = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            g[i * n + j] = f(t(i), t(j));
        }
    }
    // order-o difference along one axis; boundary entries stay 0 (F is flat there)
    let diff = |src: &[f64], o: usize, along_u: bool| -> Vec<f64> {
        if o == 0 {
            return src.to_vec();
        }
        let mut out = vec![0.0; n * n];
        for i in 1..n - 1 {
            for j in 1..n - 1 {
                let (a, b, c) = if along_u {
                    (src[(i - 1) * n + j], src[i * n + j], src[(i + 1) * n + j])
                } else {
                    (src[i * n + j - 1], src[i * n + j], src[i * n + j + 1])
                };
                out[i * n + j] = if o == 1 { (c - a) / (2.0 * h) } else { (c - 2.0 * b + a) / (h * h) };
            }
        }
        out
    };
    let mut d = [[0.0; 3]; 3];
    for (i, row) in d.iter_mut().enumerate() {
        let gu = diff(&g, i, true);
        for (j, slot) in row.iter_mut().enumerate() {
            let guv = diff(&gu, j, false);
            let mut m: f64 = 0.0;
            for a in 0..n {
                for b in 0..n {
                    let w = libm::pow(t(a), i as f64) * libm::pow(t(b), j as f64);
                    m = m.max((w * guv[a * n + b]).abs());
                }
            }
            *slot = m;
        }
    }
    d
}

#[derive(Debug, Clone, Copy)]
pub struct ShiftInstance<'a> {
    pub p: u64,
    pub ell: i64,
    pub f1: &'a Newform,
    pub f2: &'a Newform,
    pub window: BiWindow,
    pub big_q: f64,
}

impl<'a> ShiftInstance<'a> {
    pub fn new(p: u64, ell: i64, f1: &'a Newform, f2: &'a Newform, window: BiWindow, big_q: f64) -> Result<Self> {
        if !is_prime(p) {
            return Err(Error::InvalidArgument(format!("P = {p} is not prime")));
        }
        if ell == 0 {
            return Err(Error::InvalidArgument("shift ℓ must be non-zero".into()));
        }
        let reach = 10.0 * (window.x * p as f64 + window.y);
        if ell.unsigned_abs() as f64 > reach {
            return Err(Error::InvalidArgument(format!("|ℓ| = {} exceeds 10(XP + Y) = {reach}", ell.unsigned_abs())));
        }
        if f1.level != p || f2.level != p || f1.weight != f2.weight {
            return Err(Error::InvalidArgument(format!(
                "forms must share weight and have level P = {p} (got {}/{} and {}/{})",
                f1.level, f1.weight, f2.level, f2.weight
            )));
        }
        if !(big_q > 1.0) {
            return Err(Error::Domain(format!("Q must exceed 1, got {big_q}")));
        }
        Ok(Self {
            p,
            ell,
            f1,
            f2,
            window,
            big_q,
        })
    }

    pub fn with_ell(&self, ell: i64) -> Result<Self> {
        Self::new(self.p, ell, self.f1, self.f2, self.window, self.big_q)
    }

    fn n_range(&self) -> (u64, u64) {
        let x = self.window.x;
        (libm::floor(WINDOW_LO * x) as u64 + 1, libm::ceil(WINDOW_HI * x) as u64)
    }

    /// max |xP + ℓ − y| over the support.
    fn shift_reach(&self) -> f64 {
        let (x, y, p, l) = (self.window.x, self.window.y, self.p as f64, self.ell as f64);
        let a = WINDOW_LO * x * p + l - WINDOW_HI * y;
        let b = WINDOW_HI * x * p + l - WINDOW_LO * y;
        a.abs().max(b.abs())
    }

    /// Largest modulus with h(q/Q, ·) non-zero somewhere on the support.
    pub fn q_max(&self) -> u64 {
        let q = self.big_q;
        libm::floor(q * 1.0_f64.max(2.0 * self.shift_reach() / (q * q))) as u64
    }
}

fn require(f: &Newform, n: u64) -> Result<()> {
    if f.n_max() < n {
        return Err(Error::Range {
            requested: n,
            available: f.n_max(),
        });
    }
    Ok(())
}

/// Σ_{m = nP + ℓ} λ₁(n) λ₂(m) F(n/X, m/Y).
pub fn direct_shifted_sum(s: &ShiftInstance) -> Result<f64> {
    let w = &s.window;
    require(s.f1, libm::ceil(3.0 * w.x) as u64)?;
    require(s.f2, libm::ceil(3.0 * w.y) as u64)?;
    if w.is_zero() {
        return Ok(0.0);
    }
    let l1 = s.f1.coefficients.normalized();
    let l2 = s.f2.coefficients.normalized();
    let (lo, hi) = s.n_range();
    let mut acc = Neumaier::new();
    for n in lo..=hi {
        let m = n as i64 * s.p as i64 + s.ell;
        if m < 1 {
            continue;
        }
        let v = w.eval(n as f64 / w.x, m as f64 / w.y);
        if v != 0.0 {
            acc.add(l1[n as usize] * l2[m as usize] * v);
        }
    }
    Ok(acc.value())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Envelope {
    pub q_star: f64,
    pub bound: f64,
}

pub fn shifted_envelope(x: f64, y: f64, p: f64, z: f64, zx: f64, zy: f64) -> Result<Envelope> {
    if !(x > 0.0 && y > 0.0 && p > 0.0 && z > 0.0) || zx < 1.0 || zy < 1.0 {
        return Err(Error::Domain("envelope needs positive X, Y, P, Z and Zx, Zy ≥ 1".into()));
    }
    let big = (x * p).max(y);
    let zm = zx.max(zy);
    Ok(Envelope {
        q_star: libm::sqrt(big / zm),
        bound: libm::pow(x * y * p, EPSILON) * p * z * libm::sqrt(zx * zy) * libm::pow(big, 0.75) * libm::pow(zm, 1.25),
    })
}

/// The Kloosterman product S_α(n, m, ℓ; q) from the n-Voronoi step.
pub fn s_alpha(alpha: u32, n: i64, m: i64, ell: i64, q: u64, p: u64) -> Result<Complex64> {
    if q == 0 || p < 2 {
        return Err(Error::InvalidModulus);
    }
    let pa = gcd(q, p * p);
    let expect = match alpha {
        0 => 1,
        1 => p,
        2 => p * p,
        _ => return Err(Error::Case(format!("α = {alpha} is not in {{0, 1, 2}}"))),
    };
    if pa != expect {
        return Err(Error::Case(format!("(q, P²) = {pa} does not match α = {alpha}")));
    }
    let kl = crate::arith::kloosterman;
    match alpha {
        0 => {
            let pbar2 = inverse_mod((p * p % q) as i64, q)? as i64;
            kl(ell, mulmod(m * p as i64 - n, pbar2, q), q)
        }
        1 => {
            let r = q / p;
            let pbar = inverse_mod(p as i64, r)? as i64;
            let rbar = inverse_mod(r as i64, p)? as i64;
            let a = kl(mulmod(ell, pbar, r), mulmod(m - n, pbar, r), r)?;
            let b = kl(mulmod(ell, rbar, p), mulmod(m, rbar, p), p)?;
            Ok(a * b)
        }
        _ => kl(ell, m - n * p as i64, q),
    }
}

#[inline]
fn mulmod(a: i64, b: i64, q: u64) -> i64 {
    (modp(a, q) as u128 * modp(b, q) as u128 % q as u128) as i64
}

/// Voronoi constants of one form for moduli prime to P and divisible by P.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EtaPair {
    pub coprime: Complex64,
    pub divisible: Complex64,
}

impl EtaPair {
    pub const ONE: EtaPair = EtaPair {
        coprime: Complex64::new(1.0, 0.0),
        divisible: Complex64::new(1.0, 0.0),
    };

    #[inline]
    pub fn get(&self, q: u64, p: u64) -> Complex64 {
        if q % p == 0 {
            self.divisible
        } else {
            self.coprime
        }
    }
}

/// Fits η at q = 1 and q = P on the default Voronoi windows.
pub fn fit_eta_pair<P: Parallel>(par: &P, f: &Newform) -> Result<EtaPair> {
    let p = f.level;
    require(f, coefficients_needed(p, p))?;
    let fit = |q: u64, a: i64| -> Result<Complex64> {
        let inst = VoronoiInstance::new(f, a, q)?;
        Ok(eta_fit(par, &inst, &default_windows(q, inst.n2))?.eta)
    };
    Ok(EtaPair {
        coprime: fit(1, 0)?,
        divisible: fit(p, 1)?,
    })
}

/// Multipliers replacing (XYP)^ε in the truncations and the grid density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageOptions {
    /// κ_H on the Y/(qQ) and XP/(qQ) terms.
    pub kernel_reach: f64,
    /// κ_F on the Zx and Zy terms.
    pub window_reach: f64,
    /// Nodes per half-period of the fastest integrand component.
    pub oversample: f64,
    /// Restrict the sum to one modulus (diagnostics).
    pub only_q: Option<u64>,
}

impl StageOptions {
    pub fn with_kernel_reach(kernel_reach: f64) -> Self {
        Self {
            kernel_reach,
            ..Self::default()
        }
    }
}

/// Separate reaches for the two Voronoi stages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineOptions {
    pub vm: StageOptions,
    pub vn: StageOptions,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            vm: StageOptions::with_kernel_reach(40.0),
            vn: StageOptions::with_kernel_reach(20.0),
        }
    }
}

impl Default for StageOptions {
    fn default() -> Self {
        Self {
            kernel_reach: 20.0,
            window_reach: 2.0,
            oversample: 1.25,
            only_q: None,
        }
    }
}

/// (P^α, P_q) for the modulus q.
#[inline]
fn p_parts(q: u64, p: u64) -> (u64, u64) {
    let pa = gcd(q, p * p);
    let pq = if q % p == 0 { 1 } else { p };
    (pa, pq)
}

/// T₁ = q²P_q/(P^α X)·(κ_F Zx + κ_H XP/(qQ))².
pub fn truncation_t1(s: &ShiftInstance, q: u64, opts: &StageOptions) -> f64 {
    let (pa, pq) = p_parts(q, s.p);
    let w = &s.window;
    let qf = q as f64;
    let inner = opts.window_reach * w.zx + opts.kernel_reach * w.x * s.p as f64 / (qf * s.big_q);
    qf * qf * pq as f64 / (pa as f64 * w.x) * inner * inner
}

/// T₂ = q²P_q/Y·(κ_F Zy + κ_H Y/(qQ))².
pub fn truncation_t2(s: &ShiftInstance, q: u64, opts: &StageOptions) -> f64 {
    let (_, pq) = p_parts(q, s.p);
    let w = &s.window;
    let qf = q as f64;
    let inner = opts.window_reach * w.zy + opts.kernel_reach * w.y / (qf * s.big_q);
    qf * qf * pq as f64 / w.y * inner * inner
}

/// Coefficient ranges (for f₁, f₂) the pipeline touches at these options.
pub fn pipeline_coefficients_needed(s: &ShiftInstance, opts: &PipelineOptions) -> (u64, u64) {
    let mut n1 = libm::ceil(3.0 * s.window.x) as u64;
    let mut n2 = libm::ceil(3.0 * s.window.y) as u64;
    for q in 1..=s.q_max() {
        n1 = n1.max(libm::floor(truncation_t1(s, q, &opts.vn)) as u64);
        for o in [&opts.vm, &opts.vn] {
            n2 = n2.max(libm::floor(truncation_t2(s, q, o)) as u64);
        }
    }
    (n1, n2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageValue {
    pub value: f64,
    /// |S(T) − S(T/2)| plus the trapezoid halving difference.
    pub error: f64,
    /// Contribution of each modulus q = 1..=q_max (slot q−1).
    pub per_q: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineTrace {
    pub ell: i64,
    pub direct: f64,
    pub stage_delta: f64,
    pub stage_vm: f64,
    pub stage_vn: f64,
    /// [delta, vm, vn]
    pub stage_errors: [f64; 3],
    pub eta1: EtaPair,
    pub eta2: EtaPair,
    pub q_max: u64,
}

fn check_delta(s: &ShiftInstance, d: &DeltaSymbol) -> Result<()> {
    if (d.q() - s.big_q).abs() > 1e-12 * s.big_q {
        return Err(Error::InvalidArgument(format!(
            "delta symbol built for Q = {} but the instance uses Q = {}",
            d.q(),
            s.big_q
        )));
    }
    Ok(())
}

/// (c_Q/Q²) Σ_q Σ*_a e(aℓ/q) Σ_n λ₁(n) e(anP/q) Σ_m λ₂(m) e(−am/q) F h.
pub fn stage_delta<P: Parallel>(par: &P, s: &ShiftInstance, d: &DeltaSymbol) -> Result<StageValue> {
    check_delta(s, d)?;
    let w = &s.window;
    require(s.f1, libm::ceil(3.0 * w.x) as u64)?;
    require(s.f2, libm::ceil(3.0 * w.y) as u64)?;
    let q_max = s.q_max();
    if w.is_zero() {
        return Ok(StageValue {
            value: 0.0,
            error: 0.0,
            per_q: vec![0.0; q_max as usize],
        });
    }
    let l1 = s.f1.coefficients.normalized();
    let l2 = s.f2.coefficients.normalized();
    let (n_lo, n_hi) = s.n_range();
    let ns: Vec<u64> = (n_lo..=n_hi).collect();
    let m_lo = libm::floor(WINDOW_LO * w.y) as u64 + 1;
    let m_hi = libm::ceil(WINDOW_HI * w.y) as u64;
    let ms: Vec<u64> = (m_lo..=m_hi).collect();
    let fv: Vec<f64> = ns
        .iter()
        .flat_map(|&n| ms.iter().map(move |&m| (n, m)))
        .map(|(n, m)| w.eval(n as f64 / w.x, m as f64 / w.y))
        .collect();
    let (p, ell) = (s.p as i64, s.ell);
    let shift_lo = n_lo as i64 * p + ell - m_hi as i64;
    let shift_hi = n_hi as i64 * p + ell - m_lo as i64;
    let q2 = s.big_q * s.big_q;
    let parts = par.map_collect(q_max as usize, |qi| {
        let q = qi as u64 + 1;
        let x0 = q as f64 / s.big_q;
        let hv: Vec<f64> = (shift_lo..=shift_hi).map(|t| d.h_unchecked(x0, t as f64 / q2)).collect();
        // R[n][r] = Σ_{m ≡ r} λ₂(m) F h
        let qu = q as usize;
        let mut r = vec![0.0; ns.len() * qu];
        for (i, &n) in ns.iter().enumerate() {
            for (j, &m) in ms.iter().enumerate() {
                let f = fv[i * ms.len() + j];
                if f == 0.0 {
                    continue;
                }
                let h = hv[(n as i64 * p + ell - m as i64 - shift_lo) as usize];
                r[i * qu + (m % q) as usize] += l2[m as usize] * f * h;
            }
        }
        let tw = Twiddle::new(q);
        let mut total = Neumaier::new();
        let mut mag = 0.0;
        for a in (0..q).filter(|&a| gcd(a, q) == 1 || q == 1) {
            let mut inner = Complex64::new(0.0, 0.0);
            for (i, &n) in ns.iter().enumerate() {
                let row = &r[i * qu..(i + 1) * qu];
                let mut z = Complex64::new(0.0, 0.0);
                for (res, &v) in row.iter().enumerate() {
                    if v != 0.0 {
                        z += tw.get((q - res as u64) % q * a) * v;
                    }
                }
                inner += tw.get(modp(n as i64 * p, q) * a) * (l1[n as usize] * z);
            }
            let t = tw.get(modp(ell, q) * a) * inner;
            total.add(t.re);
            mag += t.norm();
        }
        (total.value(), mag)
    });
    let scale = d.c_q() / q2;
    let per_q: Vec<f64> = parts.iter().map(|&(v, _)| scale * v).collect();
    let mag: f64 = parts.iter().map(|&(_, m)| m).sum();
    Ok(StageValue {
        value: crate::sum::sum(&per_q),
        error: 64.0 * f64::EPSILON * scale * mag,
        per_q,
    })
}

/// Uniform trapezoid nodes strictly inside [lo, hi] with an even panel count.
struct Grid {
    lo: f64,
    step: f64,
    panels: usize,
}

impl Grid {
    fn new(lo: f64, hi: f64, max_step: f64, min_panels: usize) -> Self {
        let mut panels = (libm::ceil((hi - lo) / max_step) as usize).max(min_panels);
        panels += panels % 2;
        Self {
            lo,
            step: (hi - lo) / panels as f64,
            panels,
        }
    }

    /// Interior node i = 1..panels−1 sits at slot i−1.
    fn nodes(&self) -> Vec<f64> {
        (1..self.panels).map(|i| self.lo + self.step * i as f64).collect()
    }
}

/// Σ_{n ≤ t, n ≡ s (mod modulus)} λ(n) J_{k−1}(scale·√(n·node)) for every residue s, and the same over n ≤ t/2.
struct ResidueTable {
    len: usize,
    full: Vec<f64>,
    half: Vec<f64>,
}

impl ResidueTable {
    fn new(lam: &[f64], order: u32, t: usize, modulus: u64, scale: f64, nodes: &[f64]) -> Self {
        let len = nodes.len();
        let sq: Vec<f64> = nodes.iter().map(|&x| libm::sqrt(x)).collect();
        let bj = BesselJ::new(order);
        let mut full = vec![0.0; modulus as usize * len];
        let mut half = Vec::new();
        for n in 1..=t {
            let c = scale * libm::sqrt(n as f64);
            let l = lam[n];
            if l != 0.0 {
                let row = &mut full[(n as u64 % modulus) as usize * len..][..len];
                for (slot, &s) in row.iter_mut().zip(&sq) {
                    *slot += l * bj.eval(c * s);
                }
            }
            if n == t / 2 {
                half = full.clone();
            }
        }
        if half.is_empty() {
            half = vec![0.0; full.len()];
        }
        Self { len, full, half }
    }

    #[inline]
    fn row(&self, s: usize, half: bool) -> &[f64] {
        let src = if half { &self.half } else { &self.full };
        &src[s * self.len..(s + 1) * self.len]
    }
}

/// [full, T/2, coarse grid] contributions of one modulus, times its prefactor.
type QParts = [Complex64; 3];

fn finish(parts: Vec<Result<QParts>>, scale: f64) -> Result<StageValue> {
    let mut per_q = Vec::with_capacity(parts.len());
    let mut full = Neumaier::new();
    let mut half = Neumaier::new();
    let mut coarse = Neumaier::new();
    for p in parts {
        let p = p?;
        per_q.push(scale * p[0].re);
        full.add(scale * p[0].re);
        half.add(scale * p[1].re);
        coarse.add(scale * p[2].re);
    }
    let v = full.value();
    Ok(StageValue {
        value: v,
        error: (v - half.value()).abs() + (v - coarse.value()).abs(),
        per_q,
    })
}

/// Step bound from the Bessel frequency at the truncation point.
fn bessel_step(t: f64, scale: f64, node_min: f64, oversample: f64) -> f64 {
    // d/dx [scale √(t x)] at the left end of the support
    let omega = 0.5 * scale * libm::sqrt(t / node_min);
    PI / (oversample * omega.max(1e-300))
}

/// Σ_q (2πη₂/(q√P_q)) Σ_n Σ_m λ₁λ₂ S(ℓ+nP, m\overline{P_q}; q) ∫ F h J_{k−1}(4π√(my)/(q√P_q)) dy, times c_Q/Q².
pub fn stage_voronoi_m<P: Parallel>(
    par: &P,
    s: &ShiftInstance,
    d: &DeltaSymbol,
    eta2: &EtaPair,
    opts: &StageOptions,
) -> Result<StageValue> {
    Ok(stage_voronoi_m_multi(par, s, &[s.ell], d, eta2, opts)?.remove(0))
}

/// [`stage_voronoi_m`] for several shifts sharing the ℓ-free Bessel tables.
pub fn stage_voronoi_m_multi<P: Parallel>(
    par: &P,
    s: &ShiftInstance,
    ells: &[i64],
    d: &DeltaSymbol,
    eta2: &EtaPair,
    opts: &StageOptions,
) -> Result<Vec<StageValue>> {
    check_delta(s, d)?;
    let insts: Vec<ShiftInstance> = ells.iter().map(|&l| s.with_ell(l)).collect::<Result<_>>()?;
    let q_max = insts.iter().map(ShiftInstance::q_max).max().unwrap_or(1);
    let w = &s.window;
    if w.is_zero() {
        return Ok(ells
            .iter()
            .map(|_| StageValue {
                value: 0.0,
                error: 0.0,
                per_q: vec![0.0; q_max as usize],
            })
            .collect());
    }
    let t2_max = (1..=q_max).map(|q| truncation_t2(s, q, opts) as u64).max().unwrap_or(0);
    require(s.f1, libm::ceil(3.0 * w.x) as u64)?;
    require(s.f2, t2_max.max(libm::ceil(3.0 * w.y) as u64))?;
    let l1 = s.f1.coefficients.normalized();
    let l2 = s.f2.coefficients.normalized();
    let (n_lo, n_hi) = s.n_range();
    let order = s.f2.weight - 1;
    let p = s.p;
    let q2 = s.big_q * s.big_q;
    let parts = par.map_collect(q_max as usize, |qi| -> Result<Vec<QParts>> {
        let q = qi as u64 + 1;
        if opts.only_q.is_some_and(|o| o != q) {
            return Ok(vec![[Complex64::new(0.0, 0.0); 3]; insts.len()]);
        }
        let (_, pq) = p_parts(q, p);
        let x0 = q as f64 / s.big_q;
        let t2 = libm::floor(truncation_t2(s, q, opts)).max(1.0) as usize;
        let beta = 4.0 * PI / (q as f64 * libm::sqrt(pq as f64));
        let ylo = WINDOW_LO * w.y;
        let grid = Grid::new(ylo, WINDOW_HI * w.y, bessel_step(t2 as f64, beta, ylo, opts.oversample), 64);
        let ys = grid.nodes();
        let dy = grid.step;
        let table = ResidueTable::new(l2, order, t2, q, beta, &ys);
        let rows = GcdClassRows::new(q)?;
        let pbar = if q == 1 { 0 } else { inverse_mod(pq as i64, q)? as i64 };
        let pref = eta2.get(q, p) * (2.0 * PI / (q as f64 * libm::sqrt(pq as f64)));
        let mut out = Vec::with_capacity(insts.len());
        let mut krow = vec![0.0; ys.len()];
        for inst in &insts {
            let ell = inst.ell;
            let mut acc = [Neumaier::new(), Neumaier::new(), Neumaier::new()];
            for n in n_lo..=n_hi {
                let u = n as f64 / w.x;
                let shift = n as f64 * p as f64 + ell as f64;
                let mut any = false;
                for (k, &y) in krow.iter_mut().zip(&ys) {
                    let f = w.eval(u, y / w.y);
                    *k = if f == 0.0 { 0.0 } else { f * d.h_unchecked(x0, (shift - y) / q2) };
                    any |= *k != 0.0;
                }
                if !any {
                    continue;
                }
                let class = rows.class_of(ell + n as i64 * p as i64);
                let mut sums = [0.0; 3];
                for r in 0..q as usize {
                    let kl = rows.get(class, r as i64 * pbar).re;
                    if kl.abs() < 1e-9 {
                        continue;
                    }
                    let full = table.row(r, false);
                    let half = table.row(r, true);
                    let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
                    for (j, &k) in krow.iter().enumerate() {
                        a += k * full[j];
                        b += k * half[j];
                        // node j sits at panel index j+1; keep odd slots for the 2·dy grid
                        if j % 2 == 1 {
                            c += k * full[j];
                        }
                    }
                    sums[0] += kl * a * dy;
                    sums[1] += kl * b * dy;
                    sums[2] += kl * c * 2.0 * dy;
                }
                for (acc, v) in acc.iter_mut().zip(sums) {
                    acc.add(l1[n as usize] * v);
                }
            }
            out.push([pref * acc[0].value(), pref * acc[1].value(), pref * acc[2].value()]);
        }
        Ok(out)
    });
    let parts: Vec<Vec<QParts>> = parts.into_iter().collect::<Result<_>>()?;
    let scale = d.c_q() / q2;
    (0..ells.len())
        .map(|i| finish(parts.iter().map(|p| Ok(p[i])).collect(), scale))
        .collect()
}

/// Σ_q (2π)²η₁η₂√(P^α)/(q²P_q) Σ_{n ≤ T₁} Σ_{m ≤ T₂} λ₁λ₂ S_α J_α, times c_Q/Q².
pub fn stage_voronoi_n<P: Parallel>(
    par: &P,
    s: &ShiftInstance,
    d: &DeltaSymbol,
    eta1: &EtaPair,
    eta2: &EtaPair,
    opts: &StageOptions,
) -> Result<StageValue> {
    Ok(stage_voronoi_n_multi(par, s, &[s.ell], d, eta1, eta2, opts)?.remove(0))
}

/// Kloosterman factors S_α(s, r, ℓ; q) for n-residues s mod q_n and m-residues r mod q.
struct AlphaSums {
    q: u64,
    values: Vec<f64>,
}

impl AlphaSums {
    fn new(alpha: u32, ell: i64, q: u64, p: u64) -> Result<Self> {
        let row = |n: i64, c: u64| -> Result<Vec<f64>> {
            if c == 1 {
                return Ok(vec![1.0]);
            }
            let units = UnitTable::new(c)?;
            let tw = Twiddle::new(c);
            let dft = Dft::new(c as usize);
            Ok(kloosterman_row_with(&units, &tw, &dft, n).iter().map(|z| z.re).collect())
        };
        let qn = if alpha == 0 { q } else { q / p };
        let mut values = vec![0.0; (qn * q) as usize];
        match alpha {
            0 => {
                let base = row(ell, q)?;
                let pbar2 = if q == 1 { 0 } else { inverse_mod((p * p % q) as i64, q)? as i64 };
                for sres in 0..qn as i64 {
                    for r in 0..q as i64 {
                        values[(sres as u64 * q + r as u64) as usize] = base[mulmod(r * p as i64 - sres, pbar2, q.max(1)) as usize];
                    }
                }
            }
            1 => {
                let rq = q / p;
                let pbar = if rq == 1 { 0 } else { inverse_mod(p as i64, rq)? as i64 };
                let rbar = inverse_mod((rq % p) as i64, p)? as i64;
                let a = row(mulmod(ell, pbar, rq), rq)?;
                let b = row(mulmod(ell, rbar, p), p)?;
                for sres in 0..qn as i64 {
                    for r in 0..q as i64 {
                        let ia = mulmod(r - sres, pbar, rq) as usize;
                        let ib = mulmod(r, rbar, p) as usize;
                        values[(sres as u64 * q + r as u64) as usize] = a[ia] * b[ib];
                    }
                }
            }
            _ => {
                let base = row(ell, q)?;
                for sres in 0..qn as i64 {
                    for r in 0..q as i64 {
                        values[(sres as u64 * q + r as u64) as usize] = base[modp(r - sres * p as i64, q) as usize];
                    }
                }
            }
        }
        Ok(Self { q, values })
    }

    #[inline]
    fn get(&self, s: usize, r: usize) -> f64 {
        self.values[s * self.q as usize + r]
    }
}

/// F(x_i, y_j) = Σ_t a_t(x_i) b_t(y_j) when the profile splits that way.
fn separable_terms(w: &BiWindow, xs: &[f64], ys: &[f64]) -> Option<Vec<(Vec<f64>, Vec<f64>)>> {
    let gx = |c: f64, f: &dyn Fn(f64) -> f64| xs.iter().map(|&x| profile_bump(c, x / w.x) * f(x / w.x)).collect::<Vec<_>>();
    let gy = |c: f64, f: &dyn Fn(f64) -> f64| ys.iter().map(|&y| profile_bump(c, y / w.y) * f(y / w.y)).collect::<Vec<_>>();
    match w.profile {
        BiProfile::Product(c) => Some(vec![(gx(c, &|_| 1.0), gy(c, &|_| 1.0))]),
        BiProfile::Tilted(c, sl) => Some(vec![
            (gx(c, &|u| 1.0 + sl * u), gy(c, &|_| 1.0)),
            (gx(c, &|_| -sl), gy(c, &|v| v)),
        ]),
        _ => None,
    }
}

/// Trapezoid contraction in y done as a Toeplitz product through the FFT.
fn toeplitz_contract(hv: &[f64], terms: &[(Vec<f64>, Vec<f64>)], tb: &ResidueTable, q: usize, nx: usize, ny: usize) -> Vec<[f64; 3]> {
    // circular length ≥ nx + ny keeps outputs k ∈ [ny, ny + nx) free of wrap-around
    let len = (nx + ny + 1).next_power_of_two();
    let dft = Dft::new(len);
    let mut hbuf = vec![Complex64::new(0.0, 0.0); len];
    for (b, &h) in hbuf.iter_mut().zip(hv) {
        b.re = h;
    }
    let hf = dft.transform(&hbuf, false);
    let inv = 1.0 / len as f64;
    let conv = |buf: Vec<Complex64>| -> Vec<Complex64> {
        let mut f = dft.transform(&buf, false);
        for (a, b) in f.iter_mut().zip(&hf) {
            *a *= *b;
        }
        dft.transform(&f, true)
    };
    let mut kb = vec![[0.0f64; 3]; q * nx];
    for r in 0..q {
        let full = tb.row(r, false);
        let half = tb.row(r, true);
        for (ax, by) in terms {
            let mut pair = vec![Complex64::new(0.0, 0.0); len];
            let mut odd = vec![Complex64::new(0.0, 0.0); len];
            for j in 0..ny {
                pair[j] = Complex64::new(by[j] * full[j], by[j] * half[j]);
                if j % 2 == 1 {
                    odd[j].re = by[j] * full[j];
                }
            }
            let a = conv(pair);
            let c = conv(odd);
            for i in 0..nx {
                let k = i + ny;
                let slot = &mut kb[r * nx + i];
                slot[0] += ax[i] * a[k].re * inv;
                slot[1] += ax[i] * a[k].im * inv;
                slot[2] += ax[i] * c[k].re * inv;
            }
        }
    }
    kb
}

fn direct_contract(hv: &[f64], w: &BiWindow, xs: &[f64], ys: &[f64], tb: &ResidueTable, q: usize) -> Vec<[f64; 3]> {
    let (nx, ny) = (xs.len(), ys.len());
    let mut kb = vec![[0.0f64; 3]; q * nx];
    let mut krow = vec![0.0; ny];
    for i in 0..nx {
        let mut any = false;
        for j in 0..ny {
            let f = w.eval(xs[i] / w.x, ys[j] / w.y);
            krow[j] = if f == 0.0 { 0.0 } else { f * hv[i + ny - j] };
            any |= krow[j] != 0.0;
        }
        if !any {
            continue;
        }
        for r in 0..q {
            let full = tb.row(r, false);
            let half = tb.row(r, true);
            let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
            for j in 0..ny {
                let k = krow[j];
                a += k * full[j];
                b += k * half[j];
                if j % 2 == 1 {
                    c += k * full[j];
                }
            }
            kb[r * nx + i] = [a, b, c];
        }
    }
    kb
}

/// [`stage_voronoi_n`] for several shifts sharing the Bessel tables.
#[allow(clippy::too_many_arguments)]
pub fn stage_voronoi_n_multi<P: Parallel>(
    par: &P,
    s: &ShiftInstance,
    ells: &[i64],
    d: &DeltaSymbol,
    eta1: &EtaPair,
    eta2: &EtaPair,
    opts: &StageOptions,
) -> Result<Vec<StageValue>> {
    check_delta(s, d)?;
    let insts: Vec<ShiftInstance> = ells.iter().map(|&l| s.with_ell(l)).collect::<Result<_>>()?;
    let q_max = insts.iter().map(ShiftInstance::q_max).max().unwrap_or(1);
    let w = &s.window;
    if w.is_zero() {
        return Ok(ells
            .iter()
            .map(|_| StageValue {
                value: 0.0,
                error: 0.0,
                per_q: vec![0.0; q_max as usize],
            })
            .collect());
    }
    let t1_max = (1..=q_max).map(|q| truncation_t1(s, q, opts) as u64).max().unwrap_or(0);
    let t2_max = (1..=q_max).map(|q| truncation_t2(s, q, opts) as u64).max().unwrap_or(0);
    require(s.f1, t1_max)?;
    require(s.f2, t2_max)?;
    let l1 = s.f1.coefficients.normalized();
    let l2 = s.f2.coefficients.normalized();
    let order = s.f1.weight - 1;
    let p = s.p;
    let pf = p as f64;
    let q2 = s.big_q * s.big_q;
    let parts = par.map_collect(q_max as usize, |qi| -> Result<Vec<QParts>> {
        let q = qi as u64 + 1;
        if opts.only_q.is_some_and(|o| o != q) {
            return Ok(vec![[Complex64::new(0.0, 0.0); 3]; insts.len()]);
        }
        let (pa, pq) = p_parts(q, p);
        let alpha = match pa {
            1 => 0,
            x if x == p => 1,
            _ => 2,
        };
        let qn = if alpha == 0 { q } else { q / p };
        let x0 = q as f64 / s.big_q;
        let t1 = libm::floor(truncation_t1(s, q, opts)).max(1.0) as usize;
        let t2 = libm::floor(truncation_t2(s, q, opts)).max(1.0) as usize;
        let qf = q as f64;
        // a_n = √(n P^α)/(q√P_q), b_m = √m/(q√P_q)
        let alpha_scale = 4.0 * PI * libm::sqrt(pa as f64) / (qf * libm::sqrt(pq as f64));
        let beta_scale = 4.0 * PI / (qf * libm::sqrt(pq as f64));
        let (xlo, ylo) = (WINDOW_LO * w.x, WINDOW_LO * w.y);
        let dx_need = bessel_step(t1 as f64, alpha_scale, xlo, opts.oversample);
        let dy_need = bessel_step(t2 as f64, beta_scale, ylo, opts.oversample);
        // dy = P·dx keeps xP − y on one lattice, so h is a function of i − j
        let xgrid = Grid::new(xlo, WINDOW_HI * w.x, dx_need.min(dy_need / pf), 64);
        let dx = xgrid.step;
        let dy = pf * dx;
        let ny = libm::ceil(2.0 * w.y / dy) as usize;
        let ny = ny + ny % 2;
        let xs = xgrid.nodes();
        let ys: Vec<f64> = (1..ny).map(|j| ylo + dy * j as f64).collect();
        let ta = ResidueTable::new(l1, order, t1, qn, alpha_scale, &xs);
        let tb = ResidueTable::new(l2, order, t2, q, beta_scale, &ys);
        let terms = separable_terms(w, &xs, &ys);
        let eta = eta1.get(qn, p) * eta2.get(q, p);
        let pref = eta * ((2.0 * PI) * (2.0 * PI) * libm::sqrt(pa as f64) / (qf * qf * pq as f64));
        let mut out = Vec::with_capacity(insts.len());
        let (nx, nyy) = (xs.len(), ys.len());
        for inst in &insts {
            let ell = inst.ell as f64;
            // h at x_i P + ℓ − y_j = c0 + (i − j)·dy, with node i at x = xlo + (i+1)dx
            let c0 = xlo * pf + ell - ylo;
            let hv: Vec<f64> = (0..nx + nyy + 1)
                .map(|k| {
                    let diff = k as f64 - nyy as f64;
                    d.h_unchecked(x0, (c0 + diff * dy) / q2)
                })
                .collect();
            let sums = AlphaSums::new(alpha, inst.ell, q, p)?;
            // KB[r][i] = Σ_j F(x_i, y_j) h(i − j) B_r(y_j) for full, half-T and coarse grid
            let kb = match &terms {
                Some(terms) => toeplitz_contract(&hv, terms, &tb, q as usize, nx, nyy),
                None => direct_contract(&hv, w, &xs, &ys, &tb, q as usize),
            };
            let mut acc = [Neumaier::new(), Neumaier::new(), Neumaier::new()];
            for sres in 0..qn as usize {
                let af = ta.row(sres, false);
                let ah = ta.row(sres, true);
                for r in 0..q as usize {
                    let kl = sums.get(sres, r);
                    if kl.abs() < 1e-9 {
                        continue;
                    }
                    let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
                    for i in 0..nx {
                        let v = kb[r * nx + i];
                        a += af[i] * v[0];
                        b += ah[i] * v[1];
                        if i % 2 == 1 {
                            c += af[i] * v[2];
                        }
                    }
                    acc[0].add(kl * a * dx * dy);
                    acc[1].add(kl * b * dx * dy);
                    acc[2].add(kl * c * 4.0 * dx * dy);
                }
            }
            out.push([pref * acc[0].value(), pref * acc[1].value(), pref * acc[2].value()]);
        }
        Ok(out)
    });
    let parts: Vec<Vec<QParts>> = parts.into_iter().collect::<Result<_>>()?;
    let scale = d.c_q() / q2;
    (0..ells.len())
        .map(|i| finish(parts.iter().map(|p| Ok(p[i])).collect(), scale))
        .collect()
}

/// All four values for each shift, with η fitted once per form.
pub fn pipeline_traces<P: Parallel>(
    par: &P,
    s: &ShiftInstance,
    ells: &[i64],
    d: &DeltaSymbol,
    opts: &PipelineOptions,
) -> Result<Vec<PipelineTrace>> {
    let eta1 = fit_eta_pair(par, s.f1)?;
    let eta2 = if s.f2.label == s.f1.label { eta1 } else { fit_eta_pair(par, s.f2)? };
    let vm = stage_voronoi_m_multi(par, s, ells, d, &eta2, &opts.vm)?;
    let vn = stage_voronoi_n_multi(par, s, ells, d, &eta1, &eta2, &opts.vn)?;
    let mut out = Vec::with_capacity(ells.len());
    for (i, &ell) in ells.iter().enumerate() {
        let inst = s.with_ell(ell)?;
        let sd = stage_delta(par, &inst, d)?;
        out.push(PipelineTrace {
            ell,
            direct: direct_shifted_sum(&inst)?,
            stage_delta: sd.value,
            stage_vm: vm[i].value,
            stage_vn: vn[i].value,
            stage_errors: [sd.error, vm[i].error, vn[i].error],
            eta1,
            eta2,
            q_max: inst.q_max(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    extern crate std;
    use super::*;
    use crate::arith::e_frac;
    use crate::deltamethod::build_delta;
    use crate::modforms::builtin_form;
    use crate::par::Sequential;
    use proptest::prelude::*;

    /// Σ*_a e(aℓ/q) e(ā P̄_q m/q) e(−n \overline{a' P_c}/c) with aP/q = a'/c in lowest terms.
    fn opened(n: i64, m: i64, ell: i64, q: u64, p: u64) -> Complex64 {
        let g = gcd(q, p);
        let c = q / g;
        let pq = if q % p == 0 { 1 } else { p };
        let pc = if c % p == 0 { 1 } else { p };
        let mut acc = Complex64::new(0.0, 0.0);
        for a in 0..q as i64 {
            if gcd(a as u64, q) != 1 {
                continue;
            }
            let abar = if q == 1 { 0 } else { inverse_mod(a * pq as i64, q).unwrap() as i64 };
            let a1 = a * (p / g) as i64;
            let nbar = if c == 1 { 0 } else { inverse_mod(modp(a1 * pc as i64, c) as i64, c).unwrap() as i64 };
            acc += e_frac(modp(a * ell + abar * m, q) as i64, q) * e_frac(modp(-n * nbar, c) as i64, c);
        }
        acc
    }

    fn alpha_of(q: u64, p: u64) -> u32 {
        match gcd(q, p * p) {
            1 => 0,
            x if x == p => 1,
            _ => 2,
        }
    }

    #[test]
    fn s_alpha_matches_opened_sum() {
        for p in [3u64, 5] {
            for q in 1..=60u64 {
                for (n, m, ell) in [(1, 1, 1), (2, 7, -1), (13, 4, 3), (0, 5, 2)] {
                    let got = s_alpha(alpha_of(q, p), n, m, ell, q, p).unwrap();
                    let want = opened(n, m, ell, q, p);
                    assert!((got - want).norm() < 1e-9, "p={p} q={q} ({n},{m},{ell}) {got} {want}");
                }
            }
        }
    }

    #[test]
    fn s_alpha_case_checks() {
        assert!(matches!(s_alpha(0, 1, 1, 1, 10, 5), Err(Error::Case(_))));
        assert!(matches!(s_alpha(2, 1, 1, 1, 15, 5), Err(Error::Case(_))));
        assert!(matches!(s_alpha(3, 1, 1, 1, 7, 5), Err(Error::Case(_))));
        assert!(s_alpha(2, 1, 1, 1, 50, 5).is_ok());
    }

    #[test]
    fn window_envelope_and_scales() {
        let w = BiWindow::product(40.0, 240.0).unwrap();
        assert!(w.zx >= 1.0 && w.zy >= 1.0);
        assert!(w.envelope_ratio <= ENVELOPE_CONSTANT * (1.0 + 1e-9));
        assert!((w.z - 1.0).abs() < 1e-3);
        let t = BiWindow::new(40.0, 240.0, BiProfile::Tilted(4.0, 0.3)).unwrap();
        assert!(t.envelope_ratio <= ENVELOPE_CONSTANT * (1.0 + 1e-9));
        assert!(BiWindow::zero(4.0, 4.0).unwrap().is_zero());
        assert!(BiWindow::product(0.5, 4.0).is_err());
    }

    #[test]
    fn envelope_values() {
        let e = shifted_envelope(40.0, 240.0, 5.0, 1.0, 1.0, 1.0).unwrap();
        assert!((e.q_star - 240f64.sqrt()).abs() < 1e-12);
        let want = libm::pow(48000.0, 0.01) * 5.0 * libm::pow(240.0, 0.75);
        assert!((e.bound / want - 1.0).abs() < 1e-12);
        assert!(shifted_envelope(40.0, 240.0, 5.0, 1.0, 0.5, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn envelope_monotone(x in 1.0f64..500.0, y in 1.0f64..500.0, zx in 1.0f64..20.0, zy in 1.0f64..20.0, f in 1.01f64..3.0) {
            let a = shifted_envelope(x, y, 5.0, 1.0, zx, zy).unwrap();
            let b = shifted_envelope(x * f, y * f, 5.0, 1.0, zx, zy).unwrap();
            let c = shifted_envelope(x, y, 5.0, 1.0, zx * f, zy).unwrap();
            prop_assert!(b.bound > a.bound && b.q_star > a.q_star);
            prop_assert!(c.bound > a.bound);
        }
    }

    fn small_case(p: u64, x: f64, y: f64) -> (Newform, BiWindow, f64) {
        let f = builtin_form(&format!("{p}.4.eta"), 4000).unwrap();
        let w = BiWindow::product(x, y).unwrap();
        let e = shifted_envelope(x, y, p as f64, w.z, w.zx, w.zy).unwrap();
        (f, w, e.q_star)
    }

    #[test]
    fn instance_validation() {
        let (f, w, q) = small_case(5, 8.0, 40.0);
        assert!(ShiftInstance::new(4, 1, &f, &f, w, q).is_err());
        assert!(ShiftInstance::new(5, 0, &f, &f, w, q).is_err());
        assert!(ShiftInstance::new(5, 100_000, &f, &f, w, q).is_err());
        assert!(ShiftInstance::new(5, 1, &f, &f, w, 1.0).is_err());
        let g = builtin_form("11.2.eta", 100).unwrap();
        assert!(ShiftInstance::new(5, 1, &f, &g, w, q).is_err());
        let tiny = builtin_form("5.4.eta", 10).unwrap();
        let s = ShiftInstance::new(5, 1, &tiny, &tiny, w, q).unwrap();
        assert!(matches!(direct_shifted_sum(&s), Err(Error::Range { .. })));
    }

    #[test]
    fn zero_window_vanishes_at_every_stage() {
        let (f, _, q) = small_case(5, 8.0, 40.0);
        let w = BiWindow::zero(8.0, 40.0).unwrap();
        let s = ShiftInstance::new(5, 1, &f, &f, w, q).unwrap();
        let d = build_delta(q).unwrap();
        let opts = PipelineOptions::default();
        let tr = pipeline_traces(&Sequential, &s, &[1], &d, &opts).unwrap();
        let t = &tr[0];
        assert_eq!([t.direct, t.stage_delta, t.stage_vm, t.stage_vn], [0.0; 4]);
    }

    #[test]
    fn delta_stage_is_exact_and_q_independent() {
        let (f, w, q) = small_case(5, 8.0, 40.0);
        for ell in [1i64, -2, 5] {
            for big_q in [q, 2.0 * q] {
                let s = ShiftInstance::new(5, ell, &f, &f, w, big_q).unwrap();
                let d = build_delta(big_q).unwrap();
                let direct = direct_shifted_sum(&s).unwrap();
                let sd = stage_delta(&Sequential, &s, &d).unwrap();
                assert!((sd.value - direct).abs() < 1e-9 * direct.abs().max(1.0), "{ell} {big_q}");
                assert_eq!(sd.per_q.len() as u64, s.q_max());
            }
        }
        let s = ShiftInstance::new(5, 1, &f, &f, w, q).unwrap();
        assert!(stage_delta(&Sequential, &s, &build_delta(q + 1.0).unwrap()).is_err());
    }

    fn sized(f: &Newform, w: BiWindow, q: f64, opts: &PipelineOptions) -> Newform {
        let s = ShiftInstance::new(5, 3, f, f, w, q).unwrap();
        let (a, b) = pipeline_coefficients_needed(&s, opts);
        builtin_form("5.4.eta", a.max(b) as usize).unwrap()
    }

    #[test]
    fn voronoi_stages_track_direct_on_small_instance() {
        let (f, w, q) = small_case(5, 8.0, 40.0);
        let opts = PipelineOptions {
            vm: StageOptions::with_kernel_reach(20.0),
            vn: StageOptions::with_kernel_reach(10.0),
        };
        let f = sized(&f, w, q, &opts);
        let s = ShiftInstance::new(5, 1, &f, &f, w, q).unwrap();
        let d = build_delta(q).unwrap();
        let tr = pipeline_traces(&Sequential, &s, &[1, 3], &d, &opts).unwrap();
        for t in tr {
            let scale = t.direct.abs().max(1.0);
            assert!((t.stage_delta - t.direct).abs() < 1e-9 * scale);
            assert!((t.stage_vm - t.direct).abs() < 1e-2 * scale, "{t:?}");
            assert!((t.stage_vn - t.direct).abs() < 3e-2 * scale, "{t:?}");
        }
    }

    #[test]
    fn multi_shift_matches_single() {
        let (f, w, q) = small_case(5, 8.0, 40.0);
        let d = build_delta(q).unwrap();
        let eta = fit_eta_pair(&Sequential, &f).unwrap();
        let opts = StageOptions::with_kernel_reach(8.0);
        let f = sized(&f, w, q, &PipelineOptions { vm: opts, vn: opts });
        let s = ShiftInstance::new(5, 1, &f, &f, w, q).unwrap();
        let multi = stage_voronoi_m_multi(&Sequential, &s, &[1, -3], &d, &eta, &opts).unwrap();
        let single = stage_voronoi_m(&Sequential, &s.with_ell(-3).unwrap(), &d, &eta, &opts).unwrap();
        assert_eq!(multi[1].value.to_bits(), single.value.to_bits());
        let multi = stage_voronoi_n_multi(&Sequential, &s, &[1, -3], &d, &eta, &eta, &opts).unwrap();
        let single = stage_voronoi_n(&Sequential, &s.with_ell(-3).unwrap(), &d, &eta, &eta, &opts).unwrap();
        assert_eq!(multi[1].value.to_bits(), single.value.to_bits());
    }

    #[test]
    fn fft_contraction_matches_direct_loop() {
        let w = BiWindow::new(4.0, 20.0, BiProfile::Tilted(4.0, 0.2)).unwrap();
        let xs: Vec<f64> = (1..40).map(|i| 2.0 + 0.2 * i as f64).collect();
        let ys: Vec<f64> = (1..30).map(|j| 10.0 + 1.0 * j as f64).collect();
        let hv: Vec<f64> = (0..xs.len() + ys.len() + 1).map(|k| libm::cos(0.3 * k as f64) / (1.0 + k as f64)).collect();
        let lam: Vec<f64> = (0..50).map(|n| libm::sin(n as f64)).collect();
        let tb = ResidueTable::new(&lam, 3, 49, 3, 0.7, &ys);
        let terms = separable_terms(&w, &xs, &ys).unwrap();
        let a = toeplitz_contract(&hv, &terms, &tb, 3, xs.len(), ys.len());
        let b = direct_contract(&hv, &w, &xs, &ys, &tb, 3);
        for (u, v) in a.iter().zip(&b) {
            for k in 0..3 {
                assert!((u[k] - v[k]).abs() < 1e-11, "{u:?} {v:?}");
            }
        }
    }

    #[test]
    fn truncations_grow_with_reach() {
        let (f, w, q) = small_case(5, 40.0, 240.0);
        let s = ShiftInstance::new(5, 1, &f, &f, w, q).unwrap();
        let lo = StageOptions::with_kernel_reach(10.0);
        let hi = StageOptions::with_kernel_reach(20.0);
        for qq in [1u64, 5, 7, 25] {
            assert!(truncation_t1(&s, qq, &hi) > truncation_t1(&s, qq, &lo));
            assert!(truncation_t2(&s, qq, &hi) > truncation_t2(&s, qq, &lo));
        }
        assert_eq!(p_parts(25, 5), (25, 1));
        assert_eq!(p_parts(10, 5), (5, 1));
        assert_eq!(p_parts(7, 5), (1, 5));
    }

    #[test]
    fn eta_pair_is_unimodular() {
        let f = builtin_form("5.4.eta", 4000).unwrap();
        let e = fit_eta_pair(&Sequential, &f).unwrap();
        assert!((e.coprime.norm() - 1.0).abs() < 1e-4);
        assert!((e.divisible.norm() - 1.0).abs() < 1e-4);
        assert_eq!(e.get(7, 5), e.coprime);
        assert_eq!(e.get(10, 5), e.divisible);
    }
}
