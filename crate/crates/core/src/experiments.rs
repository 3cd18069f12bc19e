//! L(1/2, f⊗g) through the approximate functional equation, smooth dyadic
//! partitions, and the two sides of the Petersson second moment
//!
//!   S_f(X) = Σ_g ω_g⁻¹ |Σ_n λ_f(n) λ_g(n) h(n/X)|².

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use num_complex::Complex64;

use crate::arith::{crt_twists, factorize, gcd, is_prime, is_squarefree, kloosterman_re, LocalKloosterman, Twiddle, UnitTable};
use crate::bessel::{integral_i, BesselJ, WindowH, WINDOW_HI, WINDOW_LO};
use crate::error::{Error, Result};
use crate::modforms::Newform;
use crate::par::Parallel;
use crate::quad::GaussLegendre;
use crate::special::{ln_gamma, Zeta};
use crate::spectral::{dim1_extract, tail_bound, TailMode};
use crate::sum::Neumaier;

/// ε in every envelope of the bound ledger.
pub const LEDGER_EPS: f64 = 0.01;

/// f of prime level P and g of square-free level M with (P, M) = 1.
#[derive(Debug, Clone)]
pub struct LPair {
    pub f: Newform,
    pub g: Newform,
    /// 𝒬 = (PM)²
    pub conductor: u64,
}

impl LPair {
    pub fn new(f: Newform, g: Newform) -> Result<Self> {
        if !is_prime(f.level) {
            return Err(Error::InvalidArgument(format!("level of f must be prime, got {}", f.level)));
        }
        if !is_squarefree(g.level) {
            return Err(Error::InvalidArgument(format!("level of g must be square-free, got {}", g.level)));
        }
        if gcd(f.level, g.level) != 1 {
            return Err(Error::InvalidArgument(format!("levels {} and {} share a factor", f.level, g.level)));
        }
        if f.weight % 2 != 0 || g.weight % 2 != 0 {
            return Err(Error::InvalidArgument("weights must be even".into()));
        }
        let pm = f.level * g.level;
        let conductor = pm.checked_mul(pm).ok_or_else(|| Error::Overflow("forming the conductor".into()))?;
        Ok(Self { f, g, conductor })
    }

    /// The same L-function with the roles of f and g exchanged.
    pub fn swapped(&self) -> Result<Self> {
        Self::new(self.g.clone(), self.f.clone())
    }

    /// Primes dividing PM.
    pub fn bad_primes(&self) -> Vec<u64> {
        let mut ps: Vec<u64> = factorize(self.f.level * self.g.level).into_iter().map(|(p, _)| p).collect();
        ps.sort_unstable();
        ps
    }

    /// log L_∞(s) − log L_∞(1/2) with L_∞(s) = Γ_ℂ(s + |k−κ|/2) Γ_ℂ(s + (k+κ)/2 − 1).
    pub fn ln_gamma_ratio(&self, s: Complex64) -> Complex64 {
        let (k, kappa) = (self.f.weight as f64, self.g.weight as f64);
        let a = libm::fabs(k - kappa) / 2.0;
        let b = (k + kappa) / 2.0 - 1.0;
        let half = Complex64::new(0.5, 0.0);
        let two_pi = libm::log(2.0 * PI);
        -(s - half) * (2.0 * two_pi) + ln_gamma(s + a) - ln_gamma(half + a) + ln_gamma(s + b) - ln_gamma(half + b)
    }
}

/// Contour data for W(y).
#[derive(Debug, Clone, PartialEq)]
pub struct AfeSpec {
    pub a: u32,
    /// Re u on the contour; any value in (0, 2A) gives the same W.
    pub contour_sigma: f64,
    /// The integral over Im u is cut at ±T.
    pub contour_truncation: f64,
    pub zeta_removed_primes: Vec<u64>,
}

impl AfeSpec {
    pub fn new(a: u32, pair: &LPair) -> Self {
        Self {
            a,
            contour_sigma: 1.0,
            contour_truncation: 8.0,
            zeta_removed_primes: pair.bad_primes(),
        }
    }

    pub fn with_truncation(mut self, t: f64) -> Self {
        self.contour_truncation = t;
        self
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.contour_sigma = sigma;
        self
    }

    fn validate(&self, pair: &LPair) -> Result<()> {
        if self.a == 0 {
            return Err(Error::InvalidArgument("A must be a positive integer".into()));
        }
        let s = self.contour_sigma;
        if !(s > 0.0 && s < 2.0 * self.a as f64) {
            return Err(Error::InvalidArgument(format!("contour abscissa {s} outside (0, 2A)")));
        }
        let t = self.contour_truncation;
        // the zeta evaluation is only trusted up to |Im s| = 40
        if !(t > 0.0 && t <= 20.0) {
            return Err(Error::InvalidArgument(format!("contour truncation {t} outside (0, 20]")));
        }
        let pm = pair.f.level * pair.g.level;
        if let Some(&p) = self.zeta_removed_primes.iter().find(|&&p| !is_prime(p) || pm % p != 0) {
            return Err(Error::InvalidArgument(format!("removed prime {p} does not divide PM = {pm}")));
        }
        Ok(())
    }
}

/// G(u)·L_∞(1/2+u)/L_∞(1/2)·ζ^{(PM)}(1+2u)/u.
fn afe_integrand(spec: &AfeSpec, pair: &LPair, zeta: &Zeta, u: Complex64) -> Complex64 {
    let a = spec.a as f64;
    let lg = -16.0 * a * (u * (PI / (4.0 * a))).cos().ln();
    let lr = pair.ln_gamma_ratio(u + 0.5);
    let z = zeta.eval_removed(u * 2.0 + 1.0, &spec.zeta_removed_primes);
    (lg + lr).exp() * z / u
}

/// Quadrature of W(y) = (1/π) Re ∫_0^T φ(σ+it) y^{−σ−it} dt with the nodes folded in.
#[derive(Debug, Clone)]
pub struct AfeKernel {
    sigma: f64,
    ts: Vec<f64>,
    cs: Vec<Complex64>,
}

impl AfeKernel {
    /// Nodes resolving y^{−it} for |log y| ≤ `log_span`.
    pub fn new(spec: &AfeSpec, pair: &LPair, log_span: f64) -> Result<Self> {
        Self::with_panel_scale(spec, pair, log_span, 1)
    }

    fn with_panel_scale(spec: &AfeSpec, pair: &LPair, log_span: f64, scale: usize) -> Result<Self> {
        spec.validate(pair)?;
        let zeta = Zeta::default();
        let sigma = spec.contour_sigma;
        let t_max = spec.contour_truncation;
        let width = 0.25f64.min(4.0 / log_span.max(1.0));
        let panels = scale * libm::ceil(t_max / width) as usize;
        let (ts, ws) = GaussLegendre::gl15().grid(0.0, t_max, panels);
        let mut cs = Vec::with_capacity(ts.len());
        let mut peak = 0.0f64;
        for (&t, &w) in ts.iter().zip(&ws) {
            let phi = afe_integrand(spec, pair, &zeta, Complex64::new(sigma, t));
            peak = peak.max(phi.norm());
            cs.push(phi * w);
        }
        let edge = afe_integrand(spec, pair, &zeta, Complex64::new(sigma, t_max)).norm();
        if !(edge <= 1e-12 * peak) {
            return Err(Error::Truncation { suggested: 2.0 * t_max });
        }
        Ok(Self { sigma, ts, cs })
    }

    pub fn eval(&self, y: f64) -> f64 {
        let ly = libm::log(y);
        let mut acc = Neumaier::new();
        for (&t, c) in self.ts.iter().zip(&self.cs) {
            let (s, co) = libm::sincos(t * ly);
            // c·e^{−it log y}
            acc.add(c.re * co + c.im * s);
        }
        libm::exp(-self.sigma * ly) * acc.value() / PI
    }
}

/// W(y) for the pair.
pub fn afe_weight(spec: &AfeSpec, pair: &LPair, y: f64) -> Result<f64> {
    afe_weight_with_error(spec, pair, y).map(|(w, _)| w)
}

/// W(y) and its change when the quadrature panels are halved.
pub fn afe_weight_with_error(spec: &AfeSpec, pair: &LPair, y: f64) -> Result<(f64, f64)> {
    if !(y > 0.0 && y.is_finite()) {
        return Err(Error::Domain(format!("W(y) needs y > 0, got {y}")));
    }
    let span = libm::fabs(libm::log(y));
    let w = AfeKernel::new(spec, pair, span)?.eval(y);
    let fine = AfeKernel::with_panel_scale(spec, pair, span, 2)?.eval(y);
    Ok((fine, libm::fabs(fine - w)))
}

const CHEB_NODES: usize = 16;

/// Piecewise Chebyshev interpolant of W in log y.
#[derive(Debug, Clone)]
pub struct AfeTable {
    lo: f64,
    width: f64,
    segments: Vec<[f64; CHEB_NODES]>,
    /// Largest |interpolant − W| seen at the segment midpoints.
    pub max_interp_error: f64,
}

impl AfeTable {
    pub fn new<P: Parallel>(par: &P, spec: &AfeSpec, pair: &LPair, y_min: f64, y_max: f64) -> Result<Self> {
        if !(y_min > 0.0 && y_max > y_min) {
            return Err(Error::InvalidArgument(format!("bad interpolation range [{y_min}, {y_max}]")));
        }
        let (lo, hi) = (libm::log(y_min) - 1e-9, libm::log(y_max) + 1e-9);
        let span = libm::fabs(lo).max(libm::fabs(hi));
        let kernel = AfeKernel::new(spec, pair, span)?;
        let width = 0.25;
        let count = libm::ceil((hi - lo) / width) as usize;
        let segments = par.map_collect(count, |i| {
            let a = lo + width * i as f64;
            let mut vals = [0.0; CHEB_NODES];
            for (j, v) in vals.iter_mut().enumerate() {
                let x = libm::cos(PI * (j as f64 + 0.5) / CHEB_NODES as f64);
                *v = kernel.eval(libm::exp(a + 0.5 * width * (x + 1.0)));
            }
            cheb_coefficients(&vals)
        });
        let errs = par.map_collect(count, |i| {
            let z = lo + width * (i as f64 + 0.37);
            let y = libm::exp(z);
            libm::fabs(kernel.eval(y) - cheb_eval(&segments[i], 2.0 * 0.37 - 1.0))
        });
        let max_interp_error = errs.into_iter().fold(0.0, f64::max);
        Ok(Self {
            lo,
            width,
            segments,
            max_interp_error,
        })
    }

    pub fn eval(&self, y: f64) -> f64 {
        let z = libm::log(y);
        let pos = (z - self.lo) / self.width;
        let i = (libm::floor(pos) as isize).clamp(0, self.segments.len() as isize - 1) as usize;
        let x = 2.0 * (pos - i as f64) - 1.0;
        cheb_eval(&self.segments[i], x)
    }
}

fn cheb_coefficients(vals: &[f64; CHEB_NODES]) -> [f64; CHEB_NODES] {
    let n = CHEB_NODES as f64;
    let mut c = [0.0; CHEB_NODES];
    for (k, ck) in c.iter_mut().enumerate() {
        let mut s = 0.0;
        for (j, v) in vals.iter().enumerate() {
            s += v * libm::cos(PI * k as f64 * (j as f64 + 0.5) / n);
        }
        *ck = 2.0 * s / n;
    }
    c[0] *= 0.5;
    c
}

fn cheb_eval(c: &[f64; CHEB_NODES], x: f64) -> f64 {
    let (mut b1, mut b2) = (0.0, 0.0);
    for &ck in c.iter().skip(1).rev() {
        let b0 = 2.0 * x * b1 - b2 + ck;
        b2 = b1;
        b1 = b0;
    }
    x * b1 - b2 + c[0]
}

#[derive(Debug, Clone, PartialEq)]
pub struct AfeValue {
    pub value: f64,
    /// Number of Dirichlet coefficients used.
    pub terms: u64,
    /// |value − value with half the terms|; not a rigorous bound.
    pub tail_estimate: f64,
}

fn check_coefficients(pair: &LPair, n: u64) -> Result<()> {
    for f in [&pair.f, &pair.g] {
        if f.n_max() < n {
            return Err(Error::Range {
                requested: n,
                available: f.n_max(),
            });
        }
    }
    Ok(())
}

fn afe_terms<P: Parallel>(par: &P, spec: &AfeSpec, pair: &LPair, n_max: u64) -> Result<Vec<f64>> {
    if n_max < 2 {
        return Err(Error::InvalidArgument("need at least two terms".into()));
    }
    check_coefficients(pair, n_max)?;
    let sq = libm::sqrt(pair.conductor as f64);
    let table = AfeTable::new(par, spec, pair, 0.5 / sq, (n_max as f64 + 1.0) / sq)?;
    let lf = pair.f.lambdas(n_max)?;
    let lg = pair.g.lambdas(n_max)?;
    let chunk = 4096usize;
    let chunks = (n_max as usize).div_ceil(chunk);
    let parts = par.map_collect(chunks, |c| {
        let lo = 1 + c * chunk;
        let hi = ((c + 1) * chunk).min(n_max as usize);
        (lo..=hi)
            .map(|n| {
                let x = n as f64;
                lf[n] * lg[n] / libm::sqrt(x) * table.eval(x / sq)
            })
            .collect::<Vec<f64>>()
    });
    Ok(parts.concat())
}

/// 2 Σ_{n ≤ n_max} λ_f(n)λ_g(n) n^{−1/2} W(n/√𝒬).
pub fn afe_central<P: Parallel>(par: &P, spec: &AfeSpec, pair: &LPair, n_max: u64) -> Result<AfeValue> {
    let terms = afe_terms(par, spec, pair, n_max)?;
    let mut acc = Neumaier::new();
    let mut half = 0.0;
    for (i, &t) in terms.iter().enumerate() {
        acc.add(t);
        if i + 1 == terms.len() / 2 {
            half = acc.value();
        }
    }
    let value = 2.0 * acc.value();
    Ok(AfeValue {
        value,
        terms: n_max,
        tail_estimate: libm::fabs(value - 2.0 * half),
    })
}

/// The central value regrouped as 2 Σ_X L_X/√X over dyadic X = 2^ν, ν ≥ −1, where
/// L_X = Σ_n λ_f(n)λ_g(n) (X/n)^{1/2} W(n/√𝒬) η_X(n). Only blocks whose support
/// fits below `n_max` are used.
#[derive(Debug, Clone, PartialEq)]
pub struct DyadicAfe {
    pub value: f64,
    /// (X, L_X)
    pub blocks: Vec<(f64, f64)>,
}

pub fn afe_central_dyadic<P: Parallel>(par: &P, spec: &AfeSpec, pair: &LPair, n_max: u64) -> Result<DyadicAfe> {
    let terms = afe_terms(par, spec, pair, n_max)?;
    let mut blocks = Vec::new();
    let mut total = Neumaier::new();
    let mut x = 0.5;
    while 2.0 * x <= n_max as f64 {
        let b = DyadicBlock::new(x)?;
        let (lo, hi) = b.support();
        let mut acc = Neumaier::new();
        for n in (libm::ceil(lo) as u64).max(1)..=(libm::floor(hi) as u64).min(n_max) {
            let w = b.eta(n as f64);
            if w != 0.0 {
                acc.add(terms[n as usize - 1] * libm::sqrt(x) * w);
            }
        }
        let lx = acc.value();
        blocks.push((x, lx));
        total.add(lx / libm::sqrt(x));
        x *= 2.0;
    }
    Ok(DyadicAfe {
        value: 2.0 * total.value(),
        blocks,
    })
}

/// exp(−1/x) for x > 0, else 0.
fn flat(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        libm::exp(-1.0 / x)
    }
}

/// Smooth step: 0 for t ≤ 1, 1 for t ≥ 2.
pub fn smooth_step(t: f64) -> f64 {
    let a = flat(t - 1.0);
    let b = flat(2.0 - t);
    if a + b == 0.0 {
        return if t >= 2.0 { 1.0 } else { 0.0 };
    }
    a / (a + b)
}

/// η_D(x) = s(2x/D) − s(x/D), supported on [D/2, 2D] ⊂ [D/2, 5D/2].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DyadicBlock {
    pub d: f64,
}

impl DyadicBlock {
    pub fn new(d: f64) -> Result<Self> {
        if !(d > 0.0 && d.is_finite()) {
            return Err(Error::InvalidArgument(format!("dyadic scale must be positive, got {d}")));
        }
        Ok(Self { d })
    }

    pub fn eta(&self, x: f64) -> f64 {
        smooth_step(2.0 * x / self.d) - smooth_step(x / self.d)
    }

    pub fn support(&self) -> (f64, f64) {
        (0.5 * self.d, 2.0 * self.d)
    }
}

/// Blocks D = base·2^ν for ν = 0..count; they sum to 1 on [base, base·2^{count−1}].
pub fn dyadic_blocks(base: f64, count: usize) -> Result<Vec<DyadicBlock>> {
    (0..count).map(|nu| DyadicBlock::new(base * libm::ldexp(1.0, nu as i32))).collect()
}

/// The n-side of the off-diagonal: u_n = λ_f(n) h(n/X) on the window and all
/// pairs n ≤ m with their multiplicity.
#[derive(Debug, Clone)]
pub struct OffDiagonal {
    level: u64,
    kappa: u32,
    ns: Vec<u64>,
    us: Vec<f64>,
    /// (n, m, 2 − [n = m] times u_n u_m, √(nm))
    pairs: Vec<(u64, u64, f64, f64)>,
}

impl OffDiagonal {
    pub fn new(f: &Newform, level: u64, kappa: u32, x: f64, h: &WindowH) -> Result<Self> {
        if level == 0 {
            return Err(Error::InvalidModulus);
        }
        if kappa < 2 || kappa % 2 != 0 {
            return Err(Error::InvalidArgument(format!("κ must be even and ≥ 2, got {kappa}")));
        }
        if !(x >= 1.0) {
            return Err(Error::InvalidArgument(format!("X must be ≥ 1, got {x}")));
        }
        let lo = libm::floor(WINDOW_LO * x) as u64 + 1;
        let hi = libm::ceil(WINDOW_HI * x) as u64 - 1;
        if hi > f.n_max() {
            return Err(Error::Range {
                requested: hi,
                available: f.n_max(),
            });
        }
        let mut ns = Vec::new();
        let mut us = Vec::new();
        for n in lo..=hi {
            let u = f.lambda(n)? * h.eval(n as f64 / x);
            if u != 0.0 {
                ns.push(n);
                us.push(u);
            }
        }
        let mut pairs = Vec::new();
        for i in 0..ns.len() {
            for j in i..ns.len() {
                let mult = if i == j { 1.0 } else { 2.0 };
                pairs.push((ns[i], ns[j], mult * us[i] * us[j], libm::sqrt((ns[i] * ns[j]) as f64)));
            }
        }
        Ok(Self {
            level,
            kappa,
            ns,
            us,
            pairs,
        })
    }

    /// Σ_n u_n².
    pub fn diagonal(&self) -> f64 {
        let mut acc = Neumaier::new();
        for u in &self.us {
            acc.add(u * u);
        }
        acc.value()
    }

    pub fn ns(&self) -> &[u64] {
        &self.ns
    }

    pub fn weights(&self) -> &[f64] {
        &self.us
    }

    fn term_with<K: Fn(u64, u64) -> f64>(&self, bj: &BesselJ, d: u64, kl: K) -> f64 {
        let df = d as f64;
        let mut acc = Neumaier::new();
        for &(n, m, w, s) in &self.pairs {
            acc.add(w * kl(n, m) * bj.eval(4.0 * PI * s / df));
        }
        acc.value() / df
    }

    /// T(d) = (1/d) Σ_{n,m} u_n u_m S(n, m; d) J_{κ−1}(4π√(nm)/d) summing each
    /// Kloosterman sum over the units.
    pub fn term_direct(&self, d: u64) -> Result<f64> {
        let units = UnitTable::new(d)?;
        let tw = Twiddle::new(d);
        let bj = BesselJ::new(self.kappa - 1);
        Ok(self.term_with(&bj, d, |n, m| kloosterman_re(&units, &tw, n, m)))
    }

    /// T(d) for every multiple d of the level in [d_lo, d_hi], in increasing d.
    ///
    /// Kloosterman sums are assembled from prime-power tables; moduli are grouped by
    /// the prime factor of d/M above √(d_hi/M) so each large table lives in one task.
    pub fn terms<P: Parallel>(&self, par: &P, d_lo: u64, d_hi: u64) -> Result<Vec<(u64, f64)>> {
        let lvl = self.level;
        let t_lo = d_lo.div_ceil(lvl).max(1);
        let t_hi = d_hi / lvl;
        if t_hi < t_lo {
            return Ok(Vec::new());
        }
        let level_primes: Vec<u64> = factorize(lvl).into_iter().map(|(p, _)| p).collect();
        let b = libm::sqrt(t_hi as f64) as u64 + 1;
        let is_large = |p: u64| p > b && !level_primes.contains(&p);
        let mut small_powers = Vec::new();
        let mut large = Vec::new();
        let mut sieve = vec![true; (t_hi + 1) as usize];
        for p in 2..=t_hi.max(*level_primes.iter().max().unwrap_or(&1)) {
            let prime = if p <= t_hi { sieve[p as usize] } else { is_prime(p) };
            if !prime {
                continue;
            }
            if p <= t_hi {
                let mut j = p * p;
                while j <= t_hi {
                    sieve[j as usize] = false;
                    j += p;
                }
            }
            if is_large(p) {
                large.push(p);
                continue;
            }
            let limit = if level_primes.contains(&p) { d_hi } else { t_hi };
            let mut e = 1u32;
            let mut q = p;
            while q <= limit {
                small_powers.push((p, e));
                e += 1;
                q = match q.checked_mul(p) {
                    Some(v) => v,
                    None => break,
                };
            }
        }
        let built = par.map_collect(small_powers.len(), |i| {
            let (p, e) = small_powers[i];
            LocalKloosterman::new(p, e)
        });
        let mut small = BTreeMap::new();
        for t in built {
            let t = t?;
            small.insert(t.modulus(), t);
        }
        // moduli without a large prime factor, in chunks
        let smooth: Vec<u64> = (t_lo..=t_hi)
            .filter(|&t| factorize(t).iter().all(|&(p, _)| !is_large(p)))
            .collect();
        let chunk = 256usize;
        let n_chunks = smooth.len().div_ceil(chunk);
        let large_groups: Vec<u64> = large.into_iter().filter(|&p| t_hi / p >= t_lo.div_ceil(p).max(1)).collect();
        let bj = BesselJ::new(self.kappa - 1);
        let tasks = n_chunks + large_groups.len();
        let results = par.map_collect(tasks, |i| -> Result<Vec<(u64, f64)>> {
            let (ts, extra): (Vec<u64>, Option<LocalKloosterman>) = if i < n_chunks {
                (smooth[i * chunk..((i + 1) * chunk).min(smooth.len())].to_vec(), None)
            } else {
                let p = large_groups[i - n_chunks];
                let ts = (t_lo.div_ceil(p).max(1)..=t_hi / p).map(|j| p * j).collect();
                (ts, Some(LocalKloosterman::new(p, 1)?))
            };
            let mut out = Vec::with_capacity(ts.len());
            for t in ts {
                let d = lvl * t;
                let locals: Vec<(&LocalKloosterman, u64)> = crt_twists(d)
                    .into_iter()
                    .map(|(q, c)| match &extra {
                        Some(x) if x.modulus() == q => (x, c),
                        _ => (&small[&q], c),
                    })
                    .collect();
                let v = self.term_with(&bj, d, |n, m| {
                    let mut prod = 1.0;
                    for &(tab, c) in &locals {
                        let q = tab.modulus();
                        prod *= tab.value(n % q * c % q, m % q * c % q);
                    }
                    prod
                });
                out.push((d, v));
            }
            Ok(out)
        });
        let mut all = Vec::new();
        for r in results {
            all.extend(r?);
        }
        all.sort_unstable_by_key(|&(d, _)| d);
        Ok(all)
    }

    /// Rigorous bound for Σ_{d > d0, M | d} |T(d)|: the smaller of a per-pair Weil
    /// bound and, once d0 exceeds the spread of the n-window, a large-sieve bound
    /// |Σ_{n,m} v_n v_m S(n,m;d)| ≤ d Σ v_n² applied to each term of the J-series.
    pub fn tail_bound(&self, d0: u64) -> f64 {
        let lvl = self.level;
        let cutoff = (d0 / lvl) * lvl;
        let mut weil = Neumaier::new();
        for &(n, m, w, _) in &self.pairs {
            weil.add(libm::fabs(w) * tail_bound(self.kappa, lvl, n, m, cutoff) / (2.0 * PI));
        }
        let weil = weil.value();
        let spread = match (self.ns.first(), self.ns.last()) {
            (Some(&a), Some(&b)) => b - a,
            _ => return 0.0,
        };
        let t0 = (cutoff / lvl) as f64;
        if cutoff <= spread || t0 < 1.0 {
            return weil;
        }
        let nu = (self.kappa - 1) as f64;
        let n_top = *self.ns.last().unwrap() as f64;
        let mut sieve = 0.0;
        let mut fact = 0.0; // log(j! (j+ν)!)
        let mut lf_nu = crate::special::ln_gamma_real(nu + 1.0);
        for j in 0..200 {
            if j > 0 {
                fact += libm::log(j as f64);
                lf_nu += libm::log(j as f64 + nu);
            }
            let s = 2.0 * j as f64 + nu;
            if s <= 1.0 {
                // Σ d^{−1} diverges; only Weil applies
                return weil;
            }
            let mut norm = 0.0;
            for (&n, &u) in self.ns.iter().zip(&self.us) {
                let v = u * libm::pow(n as f64, j as f64 + nu / 2.0);
                norm += v * v;
            }
            let log_term = s * libm::log(2.0 * PI / lvl as f64) + (1.0 - s) * libm::log(t0) - libm::log(s - 1.0)
                - fact
                - lf_nu;
            let term = norm * libm::exp(log_term);
            sieve += term;
            let ratio = libm::pow(2.0 * PI * n_top / (lvl as f64 * t0), 2.0);
            if j > 0 && ratio < 0.5 && term < 1e-18 * sieve {
                // remaining terms shrink at least geometrically
                sieve += term;
                break;
            }
        }
        weil.min(sieve)
    }
}

/// Σ_d T(d) η_D(d) for the precomputed terms.
pub fn block_sum(terms: &[(u64, f64)], block: &DyadicBlock) -> f64 {
    let (lo, hi) = block.support();
    let mut acc = Neumaier::new();
    for &(d, t) in terms {
        let x = d as f64;
        if x > lo && x < hi {
            acc.add(t * block.eta(x));
        }
    }
    acc.value()
}

/// R_{f,D}(X) = Σ_{n,m} u_n u_m Σ_{M | d} S(n,m;d)/d J_{κ−1}(4π√(nm)/d) η_D(d).
pub fn r_fd<P: Parallel>(
    par: &P,
    f: &Newform,
    level: u64,
    kappa: u32,
    x: f64,
    block: &DyadicBlock,
    h: &WindowH,
) -> Result<f64> {
    if block.d < level as f64 {
        return Err(Error::InvalidArgument(format!(
            "dyadic scale {} below the level {level}",
            block.d
        )));
    }
    let off = OffDiagonal::new(f, level, kappa, x, h)?;
    let (lo, hi) = block.support();
    let terms = off.terms(par, libm::floor(lo) as u64, libm::ceil(hi) as u64)?;
    Ok(block_sum(&terms, block))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentReport {
    pub x: f64,
    pub kappa: u32,
    pub spectral_side: Option<f64>,
    /// Propagated from the eigenvalue and weight errors.
    pub spectral_error: f64,
    pub diagonal: f64,
    /// (D, R_{f,D}(X)) for D = M·2^ν
    pub offdiagonal_blocks: Vec<(f64, f64)>,
    /// The partition covers d ≤ cutoff.
    pub cutoff: u64,
    /// [d-tail beyond the cutoff, scaled by 2π]
    pub tail_certificates: Vec<f64>,
}

impl MomentReport {
    /// 2π i^{−κ}
    pub fn offdiagonal_factor(&self) -> f64 {
        let sign = if (self.kappa / 2) % 2 == 0 { 1.0 } else { -1.0 };
        2.0 * PI * sign
    }

    pub fn geometric_side(&self) -> f64 {
        let mut acc = Neumaier::new();
        for &(_, r) in &self.offdiagonal_blocks {
            acc.add(r);
        }
        self.diagonal + self.offdiagonal_factor() * acc.value()
    }

    /// Total certified error of the geometric side.
    pub fn geometric_error(&self) -> f64 {
        self.tail_certificates.iter().sum()
    }
}

#[derive(Debug, Clone)]
pub struct MomentOptions {
    pub h: WindowH,
    /// Largest modulus the d-sum may reach.
    pub d_max: u64,
    /// Absolute tolerance for the Petersson eigenvalue extraction.
    pub spectral_tol: f64,
    pub spectral_c_max: u64,
}

impl Default for MomentOptions {
    fn default() -> Self {
        Self {
            h: WindowH::bump(),
            d_max: 400_000,
            spectral_tol: 1e-6,
            spectral_c_max: 2_000_000,
        }
    }
}

/// Both sides of S_f(X) for the one-dimensional family S_κ(M); the geometric d-sum
/// runs over blocks D = M·2^ν until the certified tail is ≤ tol.
pub fn second_moment<P: Parallel>(
    par: &P,
    f: &Newform,
    level: u64,
    kappa: u32,
    x: f64,
    tol: f64,
    opts: &MomentOptions,
) -> Result<MomentReport> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    if gcd(f.level, level) != 1 {
        return Err(Error::InvalidArgument(format!("levels {} and {level} share a factor", f.level)));
    }
    let off = OffDiagonal::new(f, level, kappa, x, &opts.h)?;
    let n_top = off.ns().last().copied().unwrap_or(1);

    let ext = dim1_extract(
        par,
        kappa,
        level,
        n_top,
        opts.spectral_tol,
        TailMode::Certified {
            c_max: opts.spectral_c_max,
        },
    )?;
    let mut s = Neumaier::new();
    let mut s_err = 0.0;
    for (&n, &u) in off.ns().iter().zip(off.weights()) {
        s.add(u * ext.lambdas[n as usize]);
        s_err += libm::fabs(u) * ext.errors[n as usize];
    }
    let s = s.value();
    let inv_omega = 1.0 / ext.omega;
    // G(1,1) = 1/ω carries half of errors[1]/ω
    let inv_omega_err = ext.errors[1] / (2.0 * ext.omega);
    let spectral = inv_omega * s * s;
    let spectral_error = inv_omega * (2.0 * libm::fabs(s) * s_err + s_err * s_err) + inv_omega_err * s * s;

    let two_pi = 2.0 * PI;
    let mut count = 1usize;
    let top = |c: usize| level * (1u64 << (c - 1));
    while two_pi * off.tail_bound(top(count)) > tol {
        if 2 * top(count + 1) > opts.d_max {
            let c = top(count);
            return Err(Error::TailBudget {
                requested: tol,
                achievable: two_pi * off.tail_bound(c),
                cutoff: c,
            });
        }
        count += 1;
    }
    let cutoff = top(count);
    let blocks = dyadic_blocks(level as f64, count)?;
    let terms = off.terms(par, level, 2 * cutoff)?;
    let offdiagonal_blocks = blocks.iter().map(|b| (b.d, block_sum(&terms, b))).collect();
    Ok(MomentReport {
        x,
        kappa,
        spectral_side: Some(spectral),
        spectral_error,
        diagonal: off.diagonal(),
        offdiagonal_blocks,
        cutoff,
        tail_certificates: vec![two_pi * off.tail_bound(cutoff)],
    })
}

/// I_d(n, m) = h(n/X) ∫ h(ξ/X) J_{κ−1}(4π√(nξ)/d) J_{k−1}(4π√(mξ)/(d√L)) dξ.
#[allow(clippy::too_many_arguments)]
pub fn kernel_i(n: u64, m: u64, d: u64, l: u64, x: f64, kappa: u32, k: u32, h: &WindowH) -> Result<f64> {
    let hn = h.eval(n as f64 / x);
    if hn == 0.0 || m == 0 {
        return Ok(0.0);
    }
    let a = 1.0 / d as f64;
    let b = 1.0 / (d as f64 * libm::sqrt(l as f64));
    Ok(hn * x * integral_i(a, b, n as f64 * x, m as f64 * x, kappa, k, h)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaValue {
    pub value: f64,
    /// Change when the m-window is halved.
    pub certificate: f64,
    /// Half-width of the m-window around nL.
    pub window: u64,
}

/// Σ_d(L; c) = Σ_n Σ_{m ≡ nL (c)} λ_f(n) λ_f(m) I_d(n, m) over |m − nL| ≤ W with
/// W = reach·dL(1 + d/X); f has real coefficients so f* = f.
#[allow(clippy::too_many_arguments)]
pub fn sigma_d(
    f: &Newform,
    kappa: u32,
    l: u64,
    c: u64,
    d: u64,
    x: f64,
    reach: f64,
    h: &WindowH,
) -> Result<SigmaValue> {
    if c == 0 || d == 0 || d % c != 0 {
        return Err(Error::InvalidArgument(format!("c = {c} must divide d = {d}")));
    }
    if l == 0 || f.level % l != 0 {
        return Err(Error::InvalidArgument(format!("L = {l} must divide the level {}", f.level)));
    }
    if !(reach > 0.0) {
        return Err(Error::InvalidArgument("window reach must be positive".into()));
    }
    let df = d as f64;
    let window = libm::ceil(reach * df * l as f64 * (1.0 + df / x)) as u64;
    let lo = libm::floor(WINDOW_LO * x) as u64 + 1;
    let hi = libm::ceil(WINDOW_HI * x) as u64 - 1;
    let m_top = hi * l + window;
    if m_top > f.n_max() {
        return Err(Error::Range {
            requested: m_top,
            available: f.n_max(),
        });
    }
    let sum_with = |w: u64| -> Result<f64> {
        let mut acc = Neumaier::new();
        for n in lo..=hi {
            let ln = f.lambda(n)?;
            if ln == 0.0 || h.eval(n as f64 / x) == 0.0 {
                continue;
            }
            let centre = n * l;
            let start = centre.saturating_sub(w).max(1);
            // first m ≥ start with m ≡ centre (mod c)
            let mut m = start + (centre + c - start % c) % c;
            while m <= centre + w {
                let lm = f.lambda(m)?;
                if lm != 0.0 {
                    acc.add(ln * lm * kernel_i(n, m, d, l, x, kappa, f.weight, h)?);
                }
                m += c;
            }
        }
        Ok(acc.value())
    };
    let value = sum_with(window)?;
    let coarse = sum_with(window / 2)?;
    Ok(SigmaValue {
        value,
        certificate: libm::fabs(value - coarse),
        window,
    })
}

/// Σ_n λ_f(n) λ_f(nP) I_d(n, nP), the zero shift of Σ_d(P; c).
pub fn zero_shift(f: &Newform, kappa: u32, d: u64, x: f64, h: &WindowH) -> Result<f64> {
    let p = f.level;
    let lo = libm::floor(WINDOW_LO * x) as u64 + 1;
    let hi = libm::ceil(WINDOW_HI * x) as u64 - 1;
    let mut acc = Neumaier::new();
    for n in lo..=hi {
        let ln = f.lambda(n)?;
        if ln != 0.0 {
            acc.add(ln * f.lambda(n * p)? * kernel_i(n, n * p, d, p, x, kappa, f.weight, h)?);
        }
    }
    Ok(acc.value())
}

/// P^{−1/2} Σ_{(d,P)=1, M | d} η_D(d)/d Σ_{bc=d} b⁻¹ |zero shift|; the inner sum
/// does not depend on c, so Σ_{bc=d} 1/b = σ(d)/d.
pub fn zero_shift_contribution(f: &Newform, level: u64, kappa: u32, x: f64, block: &DyadicBlock, h: &WindowH) -> Result<f64> {
    let p = f.level;
    let (lo, hi) = block.support();
    let mut acc = Neumaier::new();
    let mut d = (libm::floor(lo) as u64 / level + 1) * level;
    while (d as f64) < hi {
        if d % p != 0 {
            let eta = block.eta(d as f64);
            if eta != 0.0 {
                let sigma: u64 = crate::arith::divisors(d).iter().sum();
                let z = zero_shift(f, kappa, d, x, h)?;
                acc.add(eta / d as f64 * (sigma as f64 / d as f64) * libm::fabs(z));
            }
        }
        d += level;
    }
    Ok(acc.value() / libm::sqrt(p as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LedgerRow {
    pub name: String,
    pub value: f64,
}

/// Envelope values from the second-moment bounds with ε = 0.01; constants are not asserted.
pub fn bound_ledger(p: u64, m: u64, x: f64, delta: f64) -> Result<Vec<LedgerRow>> {
    if p < 2 || m < 2 || !(x > 0.0) || !(delta > 0.0) {
        return Err(Error::InvalidArgument("ledger inputs must be positive (P, M ≥ 2)".into()));
    }
    let (pf, mf) = (p as f64, m as f64);
    let q = (pf * mf) * (pf * mf);
    let qe = libm::pow(q, LEDGER_EPS);
    let eta = libm::log(pf) / libm::log(mf);
    let d_special = x * libm::pow(q, -delta);
    let rows = [
        ("conductor", q),
        ("eta", eta),
        ("diagonal", x * qe),
        ("trivial_r", x * libm::pow(pf, 1.5) * qe),
        ("special_r", x * pf * qe * d_special / (libm::sqrt(pf) * mf)),
        ("l_equals_one", x * x / (pf * mf) * qe),
        ("zero_shift", x * x / (pf * mf) * qe),
        ("convexity_moment", x * pf * qe),
        (
            "moment_bound",
            x * pf
                * qe
                * (1.0 / pf
                    + libm::pow(q, -delta)
                    + libm::pow(q, 1.25 * delta) * libm::pow(pf, 21.0 / 8.0) / libm::pow(mf, 0.25)
                    + libm::pow(q, 3.0 * delta) * pf * pf / libm::pow(mf, 0.25)),
        ),
        ("saving_exp1", saving_exponents(eta).0),
        ("saving_exp2", saving_exponents(eta).1),
    ];
    Ok(rows
        .into_iter()
        .map(|(name, value)| LedgerRow {
            name: name.into(),
            value,
        })
        .collect())
}

/// The two saving exponents η/(2(1+η)) and (2 − 21η)/(64(1+η)).
pub fn saving_exponents(eta: f64) -> (f64, f64) {
    (eta / (2.0 * (1.0 + eta)), (2.0 - 21.0 * eta) / (64.0 * (1.0 + eta)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modforms::builtin_form;
    use crate::par::Sequential;
    use proptest::prelude::*;

    fn pair(n: usize) -> LPair {
        LPair::new(builtin_form("5.4.eta", n).unwrap(), builtin_form("11.2.eta", n).unwrap()).unwrap()
    }

    #[test]
    fn pair_validation() {
        let p = pair(10);
        assert_eq!(p.conductor, 3025);
        assert_eq!(p.bad_primes(), vec![5, 11]);
        assert_eq!(p.swapped().unwrap().conductor, 3025);
        let d = builtin_form("1.12.delta", 10).unwrap();
        assert!(LPair::new(d.clone(), p.g.clone()).is_err());
        let f = p.f.clone();
        assert!(LPair::new(f.clone(), f).is_err());
    }

    #[test]
    fn gamma_ratio_against_real_lgamma() {
        let p = pair(10);
        assert!(p.ln_gamma_ratio(Complex64::new(0.5, 0.0)).norm() < 1e-14);
        // k = 4, κ = 2: Γ_ℂ(s + 1) Γ_ℂ(s + 2)
        for s in [0.7, 1.5, 3.0] {
            let lg = libm::lgamma;
            let want = -2.0 * (s - 0.5) * libm::log(2.0 * PI) + lg(s + 1.0) - lg(1.5) + lg(s + 2.0) - lg(2.5);
            let got = p.ln_gamma_ratio(Complex64::new(s, 0.0));
            assert!((got.re - want).abs() < 1e-12 && got.im.abs() < 1e-14, "{s}");
        }
    }

    // independent oracle: arbitrary-precision quadrature of the same contour
    // integral with Γ((s+a)/2)Γ((s+a+1)/2)Γ((s+b)/2)Γ((s+b−1)/2) π^{−2s} as L_∞
    const W_ORACLE: [(u32, f64, f64); 8] = [
        (2, 0.001, 2.3014293006134863),
        (2, 1.0, 0.15199305375723407),
        (2, 10.0, 0.020254969450574853),
        (2, 1000.0, 4.508055064800912e-05),
        (3, 0.001, 2.312545941233312),
        (3, 1.0, 0.0992966662272917),
        (3, 10.0, 0.007123068849929904),
        (3, 1000.0, 1.5463504035453733e-06),
    ];

    #[test]
    fn weight_matches_oracle() {
        let p = pair(10);
        for (a, y, want) in W_ORACLE {
            let (w, err) = afe_weight_with_error(&AfeSpec::new(a, &p), &p, y).unwrap();
            assert!((w - want).abs() < 1e-12 * want.abs().max(1e-3), "A={a} y={y}: {w} vs {want}");
            assert!(err < 1e-12);
        }
    }

    #[test]
    fn weight_is_independent_of_the_abscissa() {
        let p = pair(10);
        for y in [0.01, 1.0, 30.0] {
            let base = afe_weight(&AfeSpec::new(2, &p), &p, y).unwrap();
            for s in [0.5, 1.5, 2.0] {
                let w = afe_weight(&AfeSpec::new(2, &p).with_sigma(s), &p, y).unwrap();
                assert!((w - base).abs() < 1e-9, "σ={s} y={y}: {w} vs {base}");
            }
        }
    }

    #[test]
    fn plateau_is_stable_under_truncation_doubling() {
        let p = pair(10);
        for y in [1e-4, 1e-3] {
            let spec = AfeSpec::new(2, &p);
            let w = afe_weight(&spec, &p, y).unwrap();
            let w2 = afe_weight(&spec.clone().with_truncation(16.0), &p, y).unwrap();
            assert!((w - w2).abs() < 1e-6);
        }
    }

    #[test]
    fn weight_decays_but_depends_on_a() {
        let p = pair(10);
        let s2 = AfeSpec::new(2, &p);
        let s3 = AfeSpec::new(3, &p);
        let mut last = f64::INFINITY;
        for y in [1.0, 10.0, 100.0, 1000.0] {
            let w = afe_weight(&s2, &p, y).unwrap();
            assert!(w > 0.0 && w < last);
            last = w;
        }
        let r = afe_weight(&s2, &p, 10.0).unwrap() / afe_weight(&s2, &p, 1.0).unwrap();
        assert!(r > 0.1 && r < 0.2, "W(10)/W(1) = {r}");
        let gap = afe_weight(&s2, &p, 1.0).unwrap() - afe_weight(&s3, &p, 1.0).unwrap();
        assert!(gap > 0.05);
    }

    #[test]
    fn short_contour_is_rejected() {
        let p = pair(10);
        let spec = AfeSpec::new(2, &p).with_truncation(1.0);
        assert_eq!(afe_weight(&spec, &p, 1.0), Err(Error::Truncation { suggested: 2.0 }));
        assert!(afe_weight(&AfeSpec::new(2, &p).with_sigma(4.0), &p, 1.0).is_err());
        assert!(afe_weight(&AfeSpec::new(2, &p), &p, 0.0).is_err());
        let mut bad = AfeSpec::new(2, &p);
        bad.zeta_removed_primes = vec![7];
        assert!(afe_weight(&bad, &p, 1.0).is_err());
    }

    #[test]
    fn table_interpolates_the_kernel() {
        let p = pair(10);
        let spec = AfeSpec::new(2, &p);
        let t = AfeTable::new(&Sequential, &spec, &p, 0.01, 100.0).unwrap();
        assert!(t.max_interp_error < 1e-12);
        let k = AfeKernel::new(&spec, &p, libm::log(100.0)).unwrap();
        for y in [0.013, 0.5, 1.0, 7.7, 99.0] {
            assert!((t.eval(y) - k.eval(y)).abs() < 1e-12);
        }
    }

    #[test]
    fn central_value_is_symmetric_in_the_pair() {
        let p = pair(4000);
        let spec = AfeSpec::new(2, &p);
        let a = afe_central(&Sequential, &spec, &p, 4000).unwrap();
        let q = p.swapped().unwrap();
        let b = afe_central(&Sequential, &AfeSpec::new(2, &q), &q, 4000).unwrap();
        assert_eq!(a.value, b.value);
        assert!(afe_central(&Sequential, &spec, &p, 5000).is_err());
    }

    #[test]
    fn dyadic_route_regroups_the_sum() {
        let p = pair(20_000);
        let spec = AfeSpec::new(3, &p);
        let d = afe_central_dyadic(&Sequential, &spec, &p, 20_000).unwrap();
        let v = afe_central(&Sequential, &spec, &p, 20_000).unwrap();
        assert!((d.value - v.value).abs() < 1e-3, "{} vs {}", d.value, v.value);
        assert_eq!(d.blocks[0].0, 0.5);
        // roughly the central value already at twenty thousand terms
        assert!((v.value - 4.5146).abs() < 1e-3);
    }

    #[test]
    fn smooth_step_and_blocks() {
        assert_eq!(smooth_step(1.0), 0.0);
        assert_eq!(smooth_step(2.0), 1.0);
        assert!((smooth_step(1.5) - 0.5).abs() < 1e-15);
        let b = DyadicBlock::new(8.0).unwrap();
        assert_eq!(b.eta(4.0), 0.0);
        assert_eq!(b.eta(16.0), 0.0);
        assert!((b.eta(8.0) - 1.0).abs() < 1e-15);
        assert!(DyadicBlock::new(0.0).is_err());
    }

    #[test]
    fn blocks_partition_unity() {
        let blocks = dyadic_blocks(5.0, 12).unwrap();
        let top = 5.0 * 2048.0;
        let mut x = 5.0;
        while x <= top {
            let s: f64 = blocks.iter().map(|b| b.eta(x)).sum();
            assert!((s - 1.0).abs() < 1e-10, "x={x}: {s}");
            x *= 1.013;
        }
    }

    fn reference() -> (Newform, OffDiagonal) {
        let f = builtin_form("11.2.eta", 100).unwrap();
        let off = OffDiagonal::new(&f, 5, 4, 16.0, &WindowH::bump()).unwrap();
        (f, off)
    }

    #[test]
    fn batched_terms_match_direct_kloosterman() {
        let (_, off) = reference();
        let terms = off.terms(&Sequential, 5, 2500).unwrap();
        assert_eq!(terms.len(), 500);
        for &(d, t) in terms.iter().step_by(7) {
            let direct = off.term_direct(d).unwrap();
            assert!((t - direct).abs() < 1e-8 * (1.0 + direct.abs()), "d={d}");
        }
    }

    #[test]
    fn tail_bound_survives_doubling() {
        let (_, off) = reference();
        for d0 in [200u64, 1000, 4000] {
            let terms = off.terms(&Sequential, d0 + 1, 2 * d0).unwrap();
            let seen: f64 = terms.iter().map(|t| t.1.abs()).sum();
            let bound = off.tail_bound(d0);
            assert!(seen <= bound, "d0={d0}: {seen} > {bound}");
            assert!(bound >= off.tail_bound(2 * d0));
        }
    }

    #[test]
    fn r_fd_examples() {
        let (f, off) = reference();
        let zero = r_fd(&Sequential, &f, 5, 4, 16.0, &DyadicBlock::new(40.0).unwrap(), &WindowH::zero()).unwrap();
        assert_eq!(zero, 0.0);
        let far = DyadicBlock::new(5.0 * 1024.0).unwrap();
        let v = r_fd(&Sequential, &f, 5, 4, 16.0, &far, &WindowH::bump()).unwrap();
        assert!(v.abs() <= off.tail_bound(far.d as u64 / 2));
        let d8 = r_fd(&Sequential, &f, 5, 4, 16.0, &DyadicBlock::new(8.0).unwrap(), &WindowH::bump()).unwrap();
        let direct: f64 = (1..=3u64).map(|t| off.term_direct(5 * t).unwrap() * DyadicBlock { d: 8.0 }.eta(5.0 * t as f64)).sum();
        assert!((d8 - direct).abs() < 1e-8);
        assert!(r_fd(&Sequential, &f, 5, 4, 16.0, &DyadicBlock::new(4.0).unwrap(), &WindowH::bump()).is_err());
    }

    #[test]
    fn second_moment_sides_agree_on_a_small_window() {
        let f = builtin_form("11.2.eta", 100).unwrap();
        let r = second_moment(&Sequential, &f, 5, 4, 8.0, 1e-3, &MomentOptions::default()).unwrap();
        let spec = r.spectral_side.unwrap();
        let geo = r.geometric_side();
        assert!(r.tail_certificates.iter().all(|&c| c >= 0.0 && c <= 1e-3));
        assert!((spec - geo).abs() <= r.spectral_error + r.geometric_error() + 1e-9, "{spec} vs {geo}");
    }

    #[test]
    fn diagonal_grows_linearly() {
        let f = builtin_form("11.2.eta", 200).unwrap();
        let h = WindowH::bump();
        let d16 = OffDiagonal::new(&f, 5, 4, 16.0, &h).unwrap().diagonal();
        let d32 = OffDiagonal::new(&f, 5, 4, 32.0, &h).unwrap().diagonal();
        let r = d32 / d16;
        assert!((1.2..=3.0).contains(&r), "{r}");
    }

    #[test]
    fn unsupported_family_is_reported() {
        let f = builtin_form("11.2.eta", 100).unwrap();
        let e = second_moment(&Sequential, &f, 7, 4, 8.0, 1e-3, &MomentOptions::default());
        assert!(matches!(e, Err(Error::UnsupportedSpace { .. })));
    }

    #[test]
    fn kernel_matches_plain_quadrature() {
        let h = WindowH::bump();
        let (n, m, d, l, x) = (20u64, 230u64, 30u64, 11u64, 16.0);
        let got = kernel_i(n, m, d, l, x, 4, 2, &h).unwrap();
        let steps = 40_000;
        let (a, b) = (0.5 * x, 2.5 * x);
        let dx = (b - a) / steps as f64;
        let mut want = 0.0;
        for i in 1..steps {
            let xi = a + dx * i as f64;
            want += h.eval(xi / x)
                * libm::jn(3, 4.0 * PI * libm::sqrt(n as f64 * xi) / d as f64)
                * libm::jn(1, 4.0 * PI * libm::sqrt(m as f64 * xi) / (d as f64 * libm::sqrt(l as f64)));
        }
        want *= dx * h.eval(n as f64 / x);
        assert!((got - want).abs() < 1e-9 * want.abs().max(1e-3), "{got} vs {want}");
    }

    #[test]
    fn sigma_examples() {
        let f = builtin_form("11.2.eta", 3000).unwrap();
        let h = WindowH::bump();
        assert_eq!(sigma_d(&f, 4, 1, 5, 5, 16.0, 1.0, &WindowH::zero()).unwrap().value, 0.0);
        // a modulus wider than the m-window pins m = n
        let (d, x) = (10u64, 16.0);
        let s = sigma_d(&f, 4, 1, d, d, x, 0.4, &h).unwrap();
        assert!(s.window < d);
        let direct: f64 = (9..40u64).map(|n| f.lambda(n).unwrap().powi(2) * kernel_i(n, n, d, 1, x, 4, 2, &h).unwrap()).sum();
        assert!((s.value - direct).abs() < 1e-6);
        let t = sigma_d(&f, 4, 11, 5, 10, x, 4.0, &h).unwrap();
        assert!(t.value.is_finite() && t.certificate >= 0.0);
        assert!(sigma_d(&f, 4, 3, 5, 10, x, 4.0, &h).is_err());
        assert!(sigma_d(&f, 4, 1, 3, 10, x, 4.0, &h).is_err());
    }

    #[test]
    fn zero_shift_under_envelope() {
        let f = builtin_form("11.2.eta", 1000).unwrap();
        let h = WindowH::bump();
        let x = 16.0;
        let env = x * x * libm::pow(3025.0, LEDGER_EPS) / 55.0;
        for d in [20.0, 40.0, 80.0] {
            let z = zero_shift_contribution(&f, 5, 4, x, &DyadicBlock::new(d).unwrap(), &h).unwrap();
            assert!(z.is_finite() && z >= 0.0 && z <= env, "D={d}: {z} vs {env}");
        }
    }

    #[test]
    fn ledger_examples() {
        assert!(saving_exponents(2.0 / 21.0).1.abs() < 1e-15);
        assert!((saving_exponents(0.0).1 - 1.0 / 32.0).abs() < 1e-15);
        let rows = bound_ledger(5, 11, 55.0, 0.01).unwrap();
        let envelopes = rows.iter().filter(|r| !r.name.starts_with("saving"));
        assert!(envelopes.clone().count() >= 8);
        assert!(envelopes.into_iter().all(|r| r.value.is_finite() && r.value > 0.0), "{rows:?}");
        assert!(bound_ledger(5, 11, 0.0, 0.01).is_err());
    }

    proptest! {
        #[test]
        fn partition_holds_everywhere(x in 3.0f64..5000.0) {
            let blocks = dyadic_blocks(3.0, 12).unwrap();
            let s: f64 = blocks.iter().map(|b| b.eta(x)).sum();
            prop_assert!((s - 1.0).abs() < 1e-10);
        }

        #[test]
        fn step_is_monotone(a in 0.5f64..2.5, b in 0.5f64..2.5) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(smooth_step(lo) <= smooth_step(hi));
        }

        #[test]
        fn saving_exponent_falls_with_eta(a in 0.0f64..0.5, b in 0.0f64..0.5) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(saving_exponents(lo).1 >= saving_exponents(hi).1);
        }
    }
}
