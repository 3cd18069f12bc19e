//! Exact integer arithmetic and complete exponential sums.

use crate::error::{Error, Result};
use crate::fft::Dft;
use crate::sum::{ComplexNeumaier, Neumaier};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use num_complex::Complex64;

pub fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

pub fn gcd_i64(a: i64, b: i64) -> u64 {
    gcd(a.unsigned_abs(), b.unsigned_abs())
}

/// Returns (g, x, y) with a·x + b·y = g = gcd(a, b) ≥ 0.
pub fn ext_gcd(a: i64, b: i64) -> (i64, i64, i64) {
    let (mut r0, mut r1) = (a as i128, b as i128);
    let (mut s0, mut s1) = (1i128, 0i128);
    let (mut t0, mut t1) = (0i128, 1i128);
    while r1 != 0 {
        let q = r0.div_euclid(r1);
        (r0, r1) = (r1, r0 - q * r1);
        (s0, s1) = (s1, s0 - q * s1);
        (t0, t1) = (t1, t0 - q * t1);
    }
    if r0 < 0 {
        (r0, s0, t0) = (-r0, -s0, -t0);
    }
    (r0 as i64, s0 as i64, t0 as i64)
}

/// Inverse of `a` modulo `m`, in `0..m`.
pub fn inverse_mod(a: i64, m: u64) -> Result<u64> {
    if m == 0 {
        return Err(Error::InvalidModulus);
    }
    if m == 1 {
        return Ok(0);
    }
    let ar = a.rem_euclid(m as i64);
    let (g, x, _) = ext_gcd(ar, m as i64);
    if g != 1 {
        return Err(Error::NotInvertible(a, m));
    }
    Ok(x.rem_euclid(m as i64) as u64)
}

/// Reduces `a` into `0..m`.
#[inline]
pub fn modp(a: i64, m: u64) -> u64 {
    a.rem_euclid(m as i64) as u64
}

/// Prime factorization by trial division, primes in increasing order.
pub fn factorize(mut n: u64) -> Vec<(u64, u32)> {
    let mut out = Vec::new();
    if n <= 1 {
        return out;
    }
    let mut p = 2u64;
    while p * p <= n {
        if n % p == 0 {
            let mut e = 0;
            while n % p == 0 {
                n /= p;
                e += 1;
            }
            out.push((p, e));
        }
        p += if p == 2 { 1 } else { 2 };
    }
    if n > 1 {
        out.push((n, 1));
    }
    out
}

/// Positive divisors in increasing order.
pub fn divisors(n: u64) -> Vec<u64> {
    let mut ds = vec![1u64];
    for (p, e) in factorize(n) {
        let len = ds.len();
        let mut pk = 1;
        for _ in 0..e {
            pk *= p;
            for i in 0..len {
                ds.push(ds[i] * pk);
            }
        }
    }
    ds.sort_unstable();
    ds
}

pub fn is_prime(n: u64) -> bool {
    n >= 2 && factorize(n).len() == 1 && factorize(n)[0].1 == 1
}

pub fn is_squarefree(n: u64) -> bool {
    n >= 1 && factorize(n).iter().all(|&(_, e)| e == 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MultFunctions {
    pub mobius: i32,
    pub euler_phi: u64,
    pub divisor_count: u64,
}

pub fn mult_functions(n: u64) -> Result<MultFunctions> {
    if n == 0 {
        return Err(Error::InvalidArgument("multiplicative functions need n ≥ 1".into()));
    }
    let f = factorize(n);
    let mobius = if f.iter().any(|&(_, e)| e > 1) {
        0
    } else if f.len() % 2 == 0 {
        1
    } else {
        -1
    };
    let mut phi = n;
    let mut tau = 1;
    for &(p, e) in &f {
        phi = phi / p * (p - 1);
        tau *= e as u64 + 1;
    }
    Ok(MultFunctions {
        mobius,
        euler_phi: phi,
        divisor_count: tau,
    })
}

pub fn mobius(n: u64) -> i32 {
    mult_functions(n).map(|m| m.mobius).unwrap_or(0)
}

pub fn euler_phi(n: u64) -> u64 {
    mult_functions(n).map(|m| m.euler_phi).unwrap_or(0)
}

pub fn divisor_count(n: u64) -> u64 {
    mult_functions(n).map(|m| m.divisor_count).unwrap_or(0)
}

/// A fraction a/q in lowest terms with q ≥ 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReducedFraction {
    numerator: i64,
    denominator: u64,
}

impl ReducedFraction {
    pub fn new(numerator: i64, denominator: u64) -> Result<Self> {
        if denominator == 0 {
            return Err(Error::InvalidModulus);
        }
        let g = gcd(numerator.unsigned_abs(), denominator).max(1);
        Ok(Self {
            numerator: numerator / g as i64,
            denominator: denominator / g,
        })
    }

    pub fn numerator(&self) -> i64 {
        self.numerator
    }

    pub fn denominator(&self) -> u64 {
        self.denominator
    }

    /// e(a/q) with a reduced modulo q before any floating point.
    pub fn phase(&self) -> Complex64 {
        e_frac(self.numerator, self.denominator)
    }
}

/// e(num/den) = exp(2πi·num/den), the numerator reduced exactly first.
pub fn e_frac(num: i64, den: u64) -> Complex64 {
    let r = modp(num, den);
    e_reduced(r, den)
}

#[inline]
fn e_reduced(r: u64, den: u64) -> Complex64 {
    // map to (-den/2, den/2] so the angle stays within [-π, π]
    let s = if 2 * r > den { r as i64 - den as i64 } else { r as i64 };
    let t = 2.0 * PI * (s as f64) / (den as f64);
    Complex64::new(libm::cos(t), libm::sin(t))
}

/// Table of e(j/c) for j in 0..c.
#[derive(Debug, Clone)]
pub struct Twiddle {
    c: u64,
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
}

impl Twiddle {
    pub fn new(c: u64) -> Self {
        // e(j/c) = e(hi·B/c)·e(lo/c) with two tables of about √c entries
        let b = (libm::sqrt(c as f64) as u64).max(1);
        let lo: Vec<Complex64> = (0..b).map(|j| e_reduced(j, c)).collect();
        let hi: Vec<Complex64> = (0..c.div_ceil(b)).map(|j| e_reduced(j * b % c, c)).collect();
        let mut cos = Vec::with_capacity(c as usize);
        let mut sin = Vec::with_capacity(c as usize);
        for j in 0..c {
            let z = hi[(j / b) as usize] * lo[(j % b) as usize];
            cos.push(z.re);
            sin.push(z.im);
        }
        Self { c, cos, sin }
    }

    pub fn modulus(&self) -> u64 {
        self.c
    }

    #[inline]
    pub fn get(&self, j: u64) -> Complex64 {
        let k = (j % self.c) as usize;
        Complex64::new(self.cos[k], self.sin[k])
    }
}

/// Units modulo c with their inverses (batch inversion, one extended Euclid).
#[derive(Debug, Clone)]
pub struct UnitTable {
    c: u64,
    pub units: Vec<u32>,
    pub inverses: Vec<u32>,
}

impl UnitTable {
    pub fn new(c: u64) -> Result<Self> {
        if c == 0 {
            return Err(Error::InvalidModulus);
        }
        if c > u32::MAX as u64 {
            return Err(Error::InvalidArgument(format!("modulus {c} too large for unit tables")));
        }
        if c == 1 {
            return Ok(Self {
                c,
                units: vec![0],
                inverses: vec![0],
            });
        }
        let mut coprime = vec![true; c as usize];
        coprime[0] = false;
        for (p, _) in factorize(c) {
            let mut j = p;
            while j < c {
                coprime[j as usize] = false;
                j += p;
            }
        }
        let units: Vec<u32> = (1..c as u32).filter(|&a| coprime[a as usize]).collect();
        let mut prefix = Vec::with_capacity(units.len());
        let mut acc = 1u64;
        for &u in &units {
            acc = acc * u as u64 % c;
            prefix.push(acc);
        }
        let mut inv_acc = inverse_mod(acc as i64, c)?;
        let mut inverses = vec![0u32; units.len()];
        for i in (0..units.len()).rev() {
            let before = if i == 0 { 1 } else { prefix[i - 1] };
            inverses[i] = (inv_acc * before % c) as u32;
            inv_acc = inv_acc * units[i] as u64 % c;
        }
        Ok(Self { c, units, inverses })
    }

    pub fn modulus(&self) -> u64 {
        self.c
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }
}

/// S(n, m; c) by direct summation over units.
pub fn kloosterman(n: i64, m: i64, c: u64) -> Result<Complex64> {
    if c == 0 {
        return Err(Error::InvalidModulus);
    }
    let units = UnitTable::new(c)?;
    let tw = Twiddle::new(c);
    Ok(kloosterman_with(&units, &tw, n, m))
}

/// S(n, m; c) reusing precomputed tables for the modulus.
pub fn kloosterman_with(units: &UnitTable, tw: &Twiddle, n: i64, m: i64) -> Complex64 {
    let c = units.c;
    let nr = modp(n, c);
    let mr = modp(m, c);
    let mut acc = ComplexNeumaier::new();
    for (&a, &ai) in units.units.iter().zip(&units.inverses) {
        let k = (nr * a as u64 + mr * ai as u64) % c;
        acc.add(Complex64::new(tw.cos[k as usize], tw.sin[k as usize]));
    }
    acc.value()
}

/// Real part of S(n, m; c) (the sum is real), plain accumulation for hot loops.
#[inline]
pub fn kloosterman_re(units: &UnitTable, tw: &Twiddle, n: u64, m: u64) -> f64 {
    let c = units.c;
    let nr = n % c;
    let mr = m % c;
    let mut acc = Neumaier::new();
    for (&a, &ai) in units.units.iter().zip(&units.inverses) {
        let k = (nr * a as u64 + mr * ai as u64) % c;
        acc.add(tw.cos[k as usize]);
    }
    acc.value()
}

/// Row m ↦ S(n, m; c) for m = 0..c−1 via one DFT over the units.
pub fn kloosterman_row(n: i64, c: u64) -> Result<Vec<Complex64>> {
    let units = UnitTable::new(c)?;
    let tw = Twiddle::new(c);
    let dft = Dft::new(c as usize);
    Ok(kloosterman_row_with(&units, &tw, &dft, n))
}

pub fn kloosterman_row_with(units: &UnitTable, tw: &Twiddle, dft: &Dft, n: i64) -> Vec<Complex64> {
    let c = units.c;
    let nr = modp(n, c);
    let mut v = vec![Complex64::new(0.0, 0.0); c as usize];
    for (&a, &ai) in units.units.iter().zip(&units.inverses) {
        v[ai as usize] = tw.get(nr * a as u64);
    }
    dft.transform(&v, true)
}

/// Every S(n, m; c) for one modulus from τ(c) DFT rows.
///
/// For g = (n, c) pick a unit u with n ≡ g·u (mod c); then S(n, m; c) = S(g, u·m; c).
#[derive(Debug, Clone)]
pub struct GcdClassRows {
    c: u64,
    divisors: Vec<u64>,
    rows: Vec<Vec<Complex64>>,
}

impl GcdClassRows {
    pub fn new(c: u64) -> Result<Self> {
        let units = UnitTable::new(c)?;
        let tw = Twiddle::new(c);
        let dft = Dft::new(c as usize);
        let divisors = divisors(c);
        let rows = divisors
            .iter()
            .map(|&g| kloosterman_row_with(&units, &tw, &dft, g as i64))
            .collect();
        Ok(Self { c, divisors, rows })
    }

    pub fn modulus(&self) -> u64 {
        self.c
    }

    /// (row index, unit multiplier) for the first argument n.
    pub fn class_of(&self, n: i64) -> (usize, u64) {
        let c = self.c;
        let (g, u) = unit_class(n, c);
        let idx = self.divisors.binary_search(&g).expect("gcd divides modulus");
        (idx, u)
    }

    #[inline]
    pub fn get(&self, class: (usize, u64), m: i64) -> Complex64 {
        let c = self.c;
        let k = (class.1 as u128 * modp(m, c) as u128 % c as u128) as usize;
        self.rows[class.0][k]
    }

    pub fn value(&self, n: i64, m: i64) -> Complex64 {
        self.get(self.class_of(n), m)
    }
}

/// Real Kloosterman sums S(n, m; c) for many pairs at one modulus.
///
/// Each pair is reduced to a key (g, r) with S(n, m; c) = S(g, r; c), g = (n, c);
/// keys are deduplicated and walked in sorted order so consecutive r share work.
pub fn kloosterman_batch(c: u64, pairs: &[(i64, i64)]) -> Result<Vec<f64>> {
    let units = UnitTable::new(c)?;
    let tw = Twiddle::new(c);
    Ok(kloosterman_batch_with(&units, &tw, pairs))
}

pub fn kloosterman_batch_with(units: &UnitTable, tw: &Twiddle, pairs: &[(i64, i64)]) -> Vec<f64> {
    let c = units.c;
    if c == 1 {
        return vec![1.0; pairs.len()];
    }
    let mut keyed: Vec<(u64, u64, usize)> = pairs
        .iter()
        .enumerate()
        .map(|(i, &(n, m))| {
            let (g, u) = unit_class(n, c);
            let r = ((u as u128 * modp(m, c) as u128) % c as u128) as u64;
            (g, r, i)
        })
        .collect();
    keyed.sort_unstable();
    let mut out = vec![0.0; pairs.len()];
    let mut start = 0;
    while start < keyed.len() {
        let g = keyed[start].0;
        let mut end = start;
        while end < keyed.len() && keyed[end].0 == g {
            end += 1;
        }
        let mut rs: Vec<u64> = keyed[start..end].iter().map(|k| k.1).collect();
        rs.dedup();
        let sums = class_sums(units, tw, g, &rs);
        for &(_, r, i) in &keyed[start..end] {
            out[i] = sums[rs.binary_search(&r).expect("key present")];
        }
        start = end;
    }
    out
}

/// Σ_α cos(2π(gα + rᾱ)/c) for sorted distinct r.
///
/// Phases e((gα + rᾱ)/c) are kept per unit and advanced to the next r by
/// multiplying with e(ᾱ/c); long gaps and every 32nd key reload the phase from
/// the exact table. Per-key totals are summed plainly within blocks of units
/// and the block totals combined with compensation.
fn class_sums(units: &UnitTable, tw: &Twiddle, g: u64, rs: &[u64]) -> Vec<f64> {
    const BLOCK: usize = 256;
    let c = units.c;
    let gm = g % c;
    let mut out = vec![Neumaier::new(); rs.len()];
    let mut zr = [0.0f64; BLOCK];
    let mut zi = [0.0f64; BLOCK];
    let mut wr = [0.0f64; BLOCK];
    let mut wi = [0.0f64; BLOCK];
    for (ua, ui) in units.units.chunks(BLOCK).zip(units.inverses.chunks(BLOCK)) {
        let len = ua.len();
        for (t, &ai) in ui.iter().enumerate() {
            wr[t] = tw.cos[ai as usize];
            wi[t] = tw.sin[ai as usize];
        }
        let mut prev = 0u64;
        for (j, &r) in rs.iter().enumerate() {
            let d = r - prev;
            if j % 32 == 0 || d > 4 {
                for t in 0..len {
                    let k = ((gm * ua[t] as u64 + r * ui[t] as u64) % c) as usize;
                    zr[t] = tw.cos[k];
                    zi[t] = tw.sin[k];
                }
            } else {
                for _ in 0..d {
                    for t in 0..len {
                        let (a, b) = (zr[t], zi[t]);
                        zr[t] = a * wr[t] - b * wi[t];
                        zi[t] = a * wi[t] + b * wr[t];
                    }
                }
            }
            let mut lanes = [0.0f64; 4];
            let mut quads = zr[..len].chunks_exact(4);
            for q in &mut quads {
                for l in 0..4 {
                    lanes[l] += q[l];
                }
            }
            for (l, &v) in quads.remainder().iter().enumerate() {
                lanes[l] += v;
            }
            out[j].add((lanes[0] + lanes[1]) + (lanes[2] + lanes[3]));
            prev = r;
        }
    }
    out.iter().map(Neumaier::value).collect()
}

/// (g, u) with g = (n, c) (g = c when c | n) and n ≡ g·u (mod c), u a unit.
pub fn unit_class(n: i64, c: u64) -> (u64, u64) {
    let nr = modp(n, c);
    let g = if nr == 0 { c } else { gcd(nr, c) };
    let step = c / g;
    let mut u = (nr / g) % step;
    if c == 1 {
        return (1, 0);
    }
    while gcd(u, c) != 1 {
        u += step;
    }
    (g, u % c)
}

/// c_q(n) as an exact integer, Σ_{d | (n,q)} d·μ(q/d).
pub fn ramanujan_exact(n: i64, q: u64) -> Result<i64> {
    if q == 0 {
        return Err(Error::InvalidModulus);
    }
    let g = gcd(n.unsigned_abs(), q);
    let g = if g == 0 { q } else { g };
    Ok(divisors(g)
        .into_iter()
        .map(|d| d as i64 * mobius(q / d) as i64)
        .sum())
}

pub fn ramanujan(n: i64, q: u64) -> Result<f64> {
    ramanujan_exact(n, q).map(|v| v as f64)
}

/// Right-hand side of the Weil bound (n, m, c)^{1/2} c^{1/2} τ(c).
pub fn weil_bound(n: i64, m: i64, c: u64) -> f64 {
    let g = gcd(gcd(n.unsigned_abs(), m.unsigned_abs()), c);
    let g = if g == 0 { c } else { g };
    libm::sqrt(g as f64) * libm::sqrt(c as f64) * divisor_count(c) as f64
}

/// Largest |S(n,m;c)| / Weil bound over 1 ≤ n, m ≤ nm_max for each c ≤ c_max,
/// evaluated with [`GcdClassRows`]. Returns the worst ratio and where it occurs.
pub fn weil_scan(nm_max: i64, c_max: u64) -> Result<(f64, (i64, i64, u64))> {
    let mut worst = (0.0, (0, 0, 0));
    for c in 1..=c_max {
        let rows = GcdClassRows::new(c)?;
        let tau = divisor_count(c) as f64;
        let sc = libm::sqrt(c as f64);
        for n in 1..=nm_max {
            let class = rows.class_of(n);
            for m in 1..=nm_max {
                let s = rows.get(class, m).norm();
                let g = gcd(gcd(n as u64, m as u64), c);
                let r = s / (libm::sqrt(g as f64) * sc * tau);
                if r > worst.0 {
                    worst = (r, (n, m, c));
                }
            }
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone)]
enum LocalRows {
    /// S(1, t; p) for t mod p
    Prime(Vec<f64>),
    Power(GcdClassRows),
}

/// Kloosterman sums modulo one prime power q = p^e.
///
/// Composite moduli are assembled with [`crt_twists`]:
/// S(n, m; d) = ∏_q S(n·c_q, m·c_q; q) with c_q the inverse of d/q modulo q.
#[derive(Debug, Clone)]
pub struct LocalKloosterman {
    q: u64,
    rows: LocalRows,
}

impl LocalKloosterman {
    pub fn new(p: u64, e: u32) -> Result<Self> {
        if !is_prime(p) || e == 0 {
            return Err(Error::InvalidArgument(format!("{p}^{e} is not a prime power")));
        }
        let q = p
            .checked_pow(e)
            .filter(|&q| q <= u32::MAX as u64)
            .ok_or_else(|| Error::InvalidArgument(format!("{p}^{e} too large")))?;
        let rows = if e == 1 {
            let units = UnitTable::new(q)?;
            let tw = Twiddle::new(q);
            let dft = Dft::new(q as usize);
            LocalRows::Prime(kloosterman_row_with(&units, &tw, &dft, 1).iter().map(|z| z.re).collect())
        } else {
            LocalRows::Power(GcdClassRows::new(q)?)
        };
        Ok(Self { q, rows })
    }

    pub fn modulus(&self) -> u64 {
        self.q
    }

    /// S(n, m; q) for n, m already reduced modulo q.
    #[inline]
    pub fn value(&self, n: u64, m: u64) -> f64 {
        match &self.rows {
            LocalRows::Prime(row) => {
                let p = self.q;
                if n == 0 {
                    if m == 0 { (p - 1) as f64 } else { -1.0 }
                } else {
                    row[(n * m % p) as usize]
                }
            }
            LocalRows::Power(rows) => rows.value(n as i64, m as i64).re,
        }
    }
}

/// (q, c_q) for each prime power q ‖ d, where c_q·(d/q) ≡ 1 (mod q).
pub fn crt_twists(d: u64) -> Vec<(u64, u64)> {
    factorize(d)
        .into_iter()
        .map(|(p, e)| {
            let q = p.pow(e);
            let c = inverse_mod(((d / q) % q) as i64, q).expect("cofactor is a unit");
            (q, c)
        })
        .collect()
}
