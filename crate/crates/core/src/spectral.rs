//! The Petersson formula as an engine: geometric sides with certified tails,
//! dimension-zero vanishing, eigenvalue extraction and the large-sieve ratio.

use crate::arith::{divisor_count, gcd, kloosterman_batch_with, GcdClassRows, Twiddle, UnitTable};
use crate::bessel::{canonical_bump, jn};
use crate::error::{Error, Result};
use crate::modforms::cusp_dimension;
use crate::par::Parallel;
use crate::special::ln_gamma_real;
use crate::sum::Neumaier;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use num_complex::Complex64;

/// Moduli handled per task; fixed so partial sums never depend on the worker count.
const CHUNK: u64 = 48;
pub const DEFAULT_C_MAX: u64 = 200_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralFamily {
    pub k: u32,
    pub level: u64,
    pub dimension: Option<u32>,
    pub tail_cutoff: u64,
    pub tail_bound: f64,
}

impl SpectralFamily {
    pub fn new(k: u32, level: u64) -> Result<Self> {
        if k < 2 || k % 2 != 0 {
            return Err(Error::InvalidArgument(alloc::format!("weight {k} must be even and ≥ 2")));
        }
        if level == 0 {
            return Err(Error::InvalidModulus);
        }
        Ok(Self {
            k,
            level,
            dimension: cusp_dimension(k, level),
            tail_cutoff: 0,
            tail_bound: f64::INFINITY,
        })
    }

    /// i^{−k} = (−1)^{k/2}.
    pub fn sign(&self) -> f64 {
        if (self.k / 2) % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }
}

/// How the discarded moduli c > C are accounted for.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TailMode {
    /// Weil bound times the Bessel majorant; C grows until the bound meets tol.
    Certified { c_max: u64 },
    /// Fixed cutoff; the error is estimated as |G(C) − G(C/2)| (not a proof).
    DoublingEstimate { cutoff: u64 },
}

impl Default for TailMode {
    fn default() -> Self {
        TailMode::Certified { c_max: DEFAULT_C_MAX }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometricValue {
    pub value: f64,
    pub tail_bound: f64,
    pub cutoff: u64,
    pub certified: bool,
}

/// Σ_{t > T} τ(t) t^{−s} ≤ s T^{1−s}[(ln T + 1)/(s − 1) + 1/(s − 1)²], T ≥ 1, s > 1.
pub fn divisor_tail(t: f64, s: f64) -> f64 {
    let t = t.max(1.0);
    let lt = libm::log(t);
    s * libm::pow(t, 1.0 - s) * ((lt + 1.0) / (s - 1.0) + 1.0 / ((s - 1.0) * (s - 1.0)))
}

/// Rigorous bound for 2π Σ_{c > C, N | c} |S(n,m;c)/c · J_{k−1}(4π√(nm)/c)|.
pub fn tail_bound(k: u32, level: u64, n: u64, m: u64, cutoff: u64) -> f64 {
    let s = k as f64 - 0.5;
    let g = gcd(n, m) as f64;
    let z = 2.0 * PI * libm::sqrt((n * m) as f64);
    // |J_ν(x)| ≤ (x/2)^ν/ν!, Weil, and τ(Nt) ≤ τ(N)τ(t)
    let log_j = (k as f64 - 1.0) * libm::log(z) - ln_gamma_real(k as f64);
    let t = (cutoff / level) as f64;
    2.0 * PI * libm::sqrt(g) * libm::exp(log_j) * divisor_count(level) as f64 * libm::pow(level as f64, -s)
        * divisor_tail(t, s)
}

/// Smallest multiple of `level` whose certified tail is ≤ tol for every pair.
pub fn certified_cutoff(k: u32, level: u64, pairs: &[(u64, u64)], tol: f64, c_max: u64) -> Result<u64> {
    let worst = |c: u64| pairs.iter().map(|&(n, m)| tail_bound(k, level, n, m, c)).fold(0.0, f64::max);
    let top = (c_max / level).max(1) * level;
    if worst(top) > tol {
        return Err(Error::TailBudget {
            requested: tol,
            achievable: worst(top),
            cutoff: top,
        });
    }
    let (mut lo, mut hi) = (1u64, top / level);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if worst(mid * level) <= tol {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(lo * level)
}

/// Partial geometric c-sums Σ_{c ≤ C, N | c} S(n,m;c)/c·J_{k−1}(4π√(nm)/c), one per pair,
/// also returning the partial sums at C/2 for doubling diagnostics.
pub fn kloosterman_bessel_sums<P: Parallel>(
    par: &P,
    k: u32,
    level: u64,
    pairs: &[(u64, u64)],
    cutoff: u64,
) -> (Vec<f64>, Vec<f64>) {
    let half = cutoff / 2;
    let ipairs: Vec<(i64, i64)> = pairs.iter().map(|&(n, m)| (n as i64, m as i64)).collect();
    let roots: Vec<f64> = pairs.iter().map(|&(n, m)| 4.0 * PI * libm::sqrt((n * m) as f64)).collect();
    let count = cutoff / level;
    let tasks = count.div_ceil(CHUNK) as usize;
    let parts = par.map_collect(tasks, |t| {
        let mut full = vec![Neumaier::new(); pairs.len()];
        let mut lower = vec![Neumaier::new(); pairs.len()];
        let first = t as u64 * CHUNK + 1;
        let last = ((t as u64 + 1) * CHUNK).min(count);
        for j in first..=last {
            let c = j * level;
            let units = UnitTable::new(c).expect("positive modulus");
            let tw = Twiddle::new(c);
            let ks = kloosterman_batch_with(&units, &tw, &ipairs);
            for (i, s) in ks.into_iter().enumerate() {
                let v = s / c as f64 * jn(k - 1, roots[i] / c as f64);
                full[i].add(v);
                if c <= half {
                    lower[i].add(v);
                }
            }
        }
        (full, lower)
    });
    let mut full = vec![Neumaier::new(); pairs.len()];
    let mut lower = vec![Neumaier::new(); pairs.len()];
    for (f, l) in parts {
        for i in 0..pairs.len() {
            full[i].add(f[i].value());
            lower[i].add(l[i].value());
        }
    }
    (
        full.iter().map(Neumaier::value).collect(),
        lower.iter().map(Neumaier::value).collect(),
    )
}

/// δ(n,m) + 2π i^{−k} Σ_c S(n,m;c)/c J_{k−1}(4π√(nm)/c) for a batch of pairs.
pub fn petersson_geometric_batch<P: Parallel>(
    par: &P,
    fam: &SpectralFamily,
    pairs: &[(u64, u64)],
    tol: f64,
    mode: TailMode,
) -> Result<Vec<GeometricValue>> {
    if pairs.iter().any(|&(n, m)| n == 0 || m == 0) {
        return Err(Error::InvalidArgument("n and m must be positive".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    let (cutoff, certified) = match mode {
        TailMode::Certified { c_max } => (certified_cutoff(fam.k, fam.level, pairs, tol, c_max)?, true),
        TailMode::DoublingEstimate { cutoff } => ((cutoff / fam.level).max(2) * fam.level, false),
    };
    let (full, lower) = kloosterman_bessel_sums(par, fam.k, fam.level, pairs, cutoff);
    let pref = 2.0 * PI * fam.sign();
    Ok(pairs
        .iter()
        .enumerate()
        .map(|(i, &(n, m))| {
            let delta = if n == m { 1.0 } else { 0.0 };
            let tail = if certified {
                tail_bound(fam.k, fam.level, n, m, cutoff)
            } else {
                (pref * (full[i] - lower[i])).abs()
            };
            GeometricValue {
                value: delta + pref * full[i],
                tail_bound: tail,
                cutoff,
                certified,
            }
        })
        .collect())
}

pub fn petersson_geometric<P: Parallel>(
    par: &P,
    fam: &mut SpectralFamily,
    n: u64,
    m: u64,
    tol: f64,
) -> Result<GeometricValue> {
    let v = petersson_geometric_batch(par, fam, &[(n, m)], tol, TailMode::default())?[0];
    fam.tail_cutoff = v.cutoff;
    fam.tail_bound = v.tail_bound;
    Ok(v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dim0Report {
    pub max_abs: f64,
    pub worst_pair: (u64, u64),
    pub cutoff: u64,
    pub max_tail: f64,
}

/// max |geometric side| over n, m ≤ n_max at level 1 for a weight with no cusp forms.
pub fn dim0_check<P: Parallel>(par: &P, k: u32, n_max: u64, tol: f64, c_max: u64) -> Result<Dim0Report> {
    if !matches!(k, 4 | 6 | 8 | 10) {
        return Err(Error::UnsupportedSpace { k, level: 1 });
    }
    let fam = SpectralFamily::new(k, 1)?;
    let pairs: Vec<(u64, u64)> = (1..=n_max).flat_map(|n| (n..=n_max).map(move |m| (n, m))).collect();
    // the tail eats half the budget, the computed part must show the rest
    let vals = petersson_geometric_batch(par, &fam, &pairs, tol / 2.0, TailMode::Certified { c_max })?;
    let mut rep = Dim0Report {
        max_abs: 0.0,
        worst_pair: (1, 1),
        cutoff: vals.first().map_or(0, |v| v.cutoff),
        max_tail: 0.0,
    };
    for (v, &p) in vals.iter().zip(&pairs) {
        rep.max_tail = rep.max_tail.max(v.tail_bound);
        if v.value.abs() > rep.max_abs {
            rep.max_abs = v.value.abs();
            rep.worst_pair = p;
        }
    }
    Ok(rep)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dim1Extract {
    pub omega: f64,
    /// λ(n) at index n; slot 0 unused.
    pub lambdas: Vec<f64>,
    /// Propagated error per λ(n).
    pub errors: Vec<f64>,
    pub cutoff: u64,
    pub certified: bool,
}

/// ω and λ(n) ≤ n_max for a one-dimensional space from the geometric sides G(n, 1).
pub fn dim1_extract<P: Parallel>(
    par: &P,
    k: u32,
    level: u64,
    n_max: u64,
    tol: f64,
    mode: TailMode,
) -> Result<Dim1Extract> {
    let fam = SpectralFamily::new(k, level)?;
    if fam.dimension != Some(1) {
        return Err(Error::UnsupportedSpace { k, level });
    }
    let pairs: Vec<(u64, u64)> = (1..=n_max).map(|n| (n, 1)).collect();
    let vals = petersson_geometric_batch(par, &fam, &pairs, tol, mode)?;
    let g11 = vals[0].value;
    if !(g11 > 0.0) {
        return Err(Error::IllConditioned(g11));
    }
    let omega = 1.0 / g11;
    let mut lambdas = vec![0.0];
    let mut errors = vec![0.0];
    for v in &vals {
        lambdas.push(v.value * omega);
        // first-order propagation through G(n,1)/G(1,1)
        let rel = vals[0].tail_bound * omega;
        errors.push((v.tail_bound + (v.value * rel).abs()) * omega);
    }
    Ok(Dim1Extract {
        omega,
        lambdas,
        errors,
        cutoff: vals[0].cutoff,
        certified: vals[0].certified,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LargeSieveRatio {
    pub lhs: f64,
    pub envelope: f64,
    pub ratio: f64,
}

/// |Σ_n Σ_m x_n y_m Σ_{N|c} η(c/C)/c S(n,m;c) J_{k−1}(4π√(nm)/c)| against the envelope
/// C^ε (√(XY)/C)^{1/2} (1 + X/N)^{1/2} (1 + Y/N)^{1/2} ‖x‖ ‖y‖, ε = 0.01; x_n is x[n−1].
pub fn large_sieve_ratio<P: Parallel>(
    par: &P,
    x: &[Complex64],
    y: &[Complex64],
    level: u64,
    c_scale: f64,
    k: u32,
) -> Result<LargeSieveRatio> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::InvalidArgument("large sieve needs non-empty sequences".into()));
    }
    if level == 0 || !(c_scale > 0.0) || k < 2 {
        return Err(Error::InvalidArgument("need N ≥ 1, C > 0, k ≥ 2".into()));
    }
    let lo = (libm::ceil(0.5 * c_scale / level as f64) as u64).max(1);
    let hi = libm::floor(2.5 * c_scale / level as f64) as u64;
    let terms = par.map_collect((hi + 1).saturating_sub(lo) as usize, |i| {
        let c = (lo + i as u64) * level;
        let eta = canonical_bump(c as f64 / c_scale);
        if eta == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        let rows = GcdClassRows::new(c).expect("positive modulus");
        let mut acc = crate::sum::ComplexNeumaier::new();
        for (i, xn) in x.iter().enumerate() {
            let n = i as i64 + 1;
            let class = rows.class_of(n);
            for (j, ym) in y.iter().enumerate() {
                let m = j as i64 + 1;
                let s = rows.get(class, m).re;
                let z = 4.0 * PI * libm::sqrt((n * m) as f64) / c as f64;
                acc.add(xn * ym * (s * jn(k - 1, z)));
            }
        }
        acc.value() * (eta / c as f64)
    });
    let mut acc = crate::sum::ComplexNeumaier::new();
    for t in terms {
        acc.add(t);
    }
    let lhs = acc.value().norm();
    let nx = libm::sqrt(x.iter().map(|v| v.norm_sqr()).sum::<f64>());
    let ny = libm::sqrt(y.iter().map(|v| v.norm_sqr()).sum::<f64>());
    let (bx, by, bn) = (x.len() as f64, y.len() as f64, level as f64);
    let envelope = libm::pow(c_scale, 0.01)
        * libm::sqrt(libm::sqrt(bx * by) / c_scale)
        * libm::sqrt(1.0 + bx / bn)
        * libm::sqrt(1.0 + by / bn)
        * nx
        * ny;
    Ok(LargeSieveRatio {
        lhs,
        envelope,
        ratio: lhs / envelope,
    })
}
