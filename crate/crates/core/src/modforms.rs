//! Newforms as coefficient tables: eta products, ingested q-expansions, relation checks.

use crate::arith::{divisor_count, divisors, factorize, gcd, is_squarefree};
use crate::error::{Error, Result};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

pub const BUILTIN_LABELS: [&str; 3] = ["1.12.delta", "5.4.eta", "11.2.eta"];
pub const MAX_BUILTIN_TERMS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    EtaProduct,
    Ingested,
    PeterssonExtracted,
}

/// a(n) and λ(n) = a(n)/n^{(k−1)/2}, indexed from 1 (slot 0 unused).
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientTable {
    arithmetic: Option<Vec<i128>>,
    normalized: Vec<f64>,
}

impl CoefficientTable {
    pub fn from_arithmetic(a: Vec<i128>, weight: u32) -> Self {
        let half = (weight as f64 - 1.0) / 2.0;
        let normalized = a
            .iter()
            .enumerate()
            .map(|(n, &v)| if n == 0 { 0.0 } else { v as f64 / libm::pow(n as f64, half) })
            .collect();
        Self {
            arithmetic: Some(a),
            normalized,
        }
    }

    pub fn from_normalized(mut l: Vec<f64>) -> Self {
        if l.is_empty() {
            l.push(0.0);
        }
        Self {
            arithmetic: None,
            normalized: l,
        }
    }

    pub fn n_max(&self) -> u64 {
        self.normalized.len() as u64 - 1
    }

    pub fn arithmetic(&self) -> Option<&[i128]> {
        self.arithmetic.as_deref()
    }

    pub fn normalized(&self) -> &[f64] {
        &self.normalized
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Newform {
    pub level: u64,
    pub weight: u32,
    pub label: String,
    pub coefficients: CoefficientTable,
    pub source: Source,
}

impl Newform {
    pub fn n_max(&self) -> u64 {
        self.coefficients.n_max()
    }

    pub fn lambda(&self, n: u64) -> Result<f64> {
        lambda(self, n)
    }

    /// λ(1..=n) as a slice, slot 0 unused.
    pub fn lambdas(&self, n: u64) -> Result<&[f64]> {
        if n > self.n_max() {
            return Err(Error::Range {
                requested: n,
                available: self.n_max(),
            });
        }
        Ok(&self.coefficients.normalized[..=n as usize])
    }
}

pub fn lambda(f: &Newform, n: u64) -> Result<f64> {
    if n == 0 || n > f.n_max() {
        return Err(Error::Range {
            requested: n,
            available: f.n_max(),
        });
    }
    Ok(f.coefficients.normalized[n as usize])
}

/// ∏_{n≥1}(1 − q^{step·n})^3 as a sparse list (Jacobi's identity).
fn euler_cube(step: usize, len: usize) -> Vec<(usize, i128)> {
    let mut out = Vec::new();
    let mut m = 0usize;
    loop {
        let e = step * (m * (m + 1) / 2);
        if e >= len {
            break;
        }
        let c = (2 * m + 1) as i128;
        out.push((e, if m % 2 == 0 { c } else { -c }));
        m += 1;
    }
    out
}

/// ∏_{n≥1}(1 − q^{step·n}) as a sparse list (pentagonal numbers).
fn euler_single(step: usize, len: usize) -> Vec<(usize, i128)> {
    let mut out = vec![(0usize, 1i128)];
    let mut k = 1usize;
    loop {
        let mut any = false;
        let sign = if k % 2 == 0 { 1 } else { -1 };
        for g in [k * (3 * k - 1) / 2, k * (3 * k + 1) / 2] {
            if step * g < len {
                out.push((step * g, sign));
                any = true;
            }
        }
        if !any {
            break;
        }
        k += 1;
    }
    out.sort_unstable();
    out
}

fn mul_sparse(dense: &[i128], sparse: &[(usize, i128)]) -> Result<Vec<i128>> {
    let len = dense.len();
    let mut out = vec![0i128; len];
    for &(e, c) in sparse {
        for i in 0..len - e.min(len) {
            let t = c.checked_mul(dense[i]).ok_or_else(|| Error::Overflow("expanding an eta product".into()))?;
            out[i + e] = out[i + e]
                .checked_add(t)
                .ok_or_else(|| Error::Overflow("expanding an eta product".into()))?;
        }
    }
    Ok(out)
}

/// q^{shift} ∏_d ∏_n (1 − q^{dn})^{r_d}, coefficients 0..=n_max.
pub fn eta_product(factors: &[(usize, u32)], shift: usize, n_max: usize) -> Result<Vec<i128>> {
    let len = n_max + 1;
    let mut c = vec![0i128; len];
    c[0] = 1;
    for &(d, r) in factors {
        let cube = euler_cube(d, len);
        let single = euler_single(d, len);
        for _ in 0..r / 3 {
            c = mul_sparse(&c, &cube)?;
        }
        for _ in 0..r % 3 {
            c = mul_sparse(&c, &single)?;
        }
    }
    let mut out = vec![0i128; len];
    out[shift..].copy_from_slice(&c[..len - shift]);
    Ok(out)
}

/// Expands one of the built-in eta-product newforms to `n_max` terms.
pub fn builtin_form(label: &str, n_max: usize) -> Result<Newform> {
    if n_max == 0 || n_max > MAX_BUILTIN_TERMS {
        return Err(Error::InvalidArgument(format!("n_max must be in 1..=10^6, got {n_max}")));
    }
    let (level, weight, factors): (u64, u32, &[(usize, u32)]) = match label {
        "1.12.delta" => (1, 12, &[(1, 24)]),
        "5.4.eta" => (5, 4, &[(1, 4), (5, 4)]),
        "11.2.eta" => (11, 2, &[(1, 2), (11, 2)]),
        _ => return Err(Error::UnsupportedForm(label.to_string())),
    };
    let a = eta_product(factors, 1, n_max)?;
    Ok(Newform {
        level,
        weight,
        label: label.to_string(),
        coefficients: CoefficientTable::from_arithmetic(a, weight),
        source: Source::EtaProduct,
    })
}

/// Newform from extracted eigenvalues (λ, not a), e.g. out of the Petersson formula.
pub fn from_eigenvalues(label: &str, level: u64, weight: u32, lambdas: Vec<f64>) -> Newform {
    Newform {
        level,
        weight,
        label: label.to_string(),
        coefficients: CoefficientTable::from_normalized(lambdas),
        source: Source::PeterssonExtracted,
    }
}

/// Parses the q-expansion text format and checks every relation on the result.
///
/// ```text
/// #newform level=<N> weight=<k> label=<text> normalization=arithmetic
/// 1	1
/// 2	-24
/// ```
pub fn parse_qexp(text: &str) -> Result<Newform> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "empty file, expected #newform header".into(),
    })?;
    let header = header.trim();
    let rest = header.strip_prefix("#newform").ok_or(Error::Parse {
        line: 1,
        msg: "missing #newform header".into(),
    })?;
    let mut level = None;
    let mut weight = None;
    let mut label = None;
    let mut norm = None;
    for field in rest.split_whitespace() {
        let (k, v) = field.split_once('=').ok_or_else(|| Error::Parse {
            line: 1,
            msg: format!("header field {field:?} is not key=value"),
        })?;
        let bad = |what: &str| Error::Parse {
            line: 1,
            msg: format!("header {k}={v:?}: expected {what}"),
        };
        match k {
            "level" => level = Some(v.parse::<u64>().map_err(|_| bad("a positive integer"))?),
            "weight" => weight = Some(v.parse::<u32>().map_err(|_| bad("a positive even integer"))?),
            "label" => label = Some(v.to_string()),
            "normalization" => norm = Some(v.to_string()),
            _ => {
                return Err(Error::Parse {
                    line: 1,
                    msg: format!("unknown header field {k:?}"),
                })
            }
        }
    }
    let missing = |what: &str| Error::Parse {
        line: 1,
        msg: format!("header lacks {what}"),
    };
    let level = level.ok_or_else(|| missing("level"))?;
    let weight = weight.ok_or_else(|| missing("weight"))?;
    let label = label.ok_or_else(|| missing("label"))?;
    if norm.as_deref() != Some("arithmetic") {
        return Err(Error::Parse {
            line: 1,
            msg: "normalization must be arithmetic".into(),
        });
    }
    if level == 0 || !is_squarefree(level) {
        return Err(Error::Parse {
            line: 1,
            msg: format!("level {level} is not a positive square-free integer"),
        });
    }
    if weight == 0 || weight % 2 != 0 {
        return Err(Error::Parse {
            line: 1,
            msg: format!("weight {weight} is not a positive even integer"),
        });
    }
    let mut a = vec![0i128];
    for (i, raw) in lines {
        let line = i + 1;
        let s = raw.trim();
        if s.is_empty() {
            continue;
        }
        let (ns, vs) = s.split_once('\t').ok_or_else(|| Error::Parse {
            line,
            msg: "expected <n><TAB><a_n>".into(),
        })?;
        let n: u64 = ns.trim().parse().map_err(|_| Error::Parse {
            line,
            msg: format!("index {ns:?} is not an integer"),
        })?;
        let v: i128 = vs.trim().parse().map_err(|_| Error::Parse {
            line,
            msg: format!("coefficient {vs:?} is not an integer"),
        })?;
        if n != a.len() as u64 {
            return Err(Error::Parse {
                line,
                msg: format!("expected index {}, found {n}", a.len()),
            });
        }
        a.push(v);
    }
    if a.len() < 2 {
        return Err(Error::Parse {
            line: 2,
            msg: "no coefficients".into(),
        });
    }
    let f = Newform {
        level,
        weight,
        label,
        coefficients: CoefficientTable::from_arithmetic(a, weight),
        source: Source::Ingested,
    };
    verify(&f)?;
    Ok(f)
}

/// Serializes a form with integer coefficients in the q-expansion format.
pub fn format_qexp(f: &Newform) -> Option<String> {
    let a = f.coefficients.arithmetic()?;
    let mut out = format!(
        "#newform level={} weight={} label={} normalization=arithmetic\n",
        f.level, f.weight, f.label
    );
    for (n, v) in a.iter().enumerate().skip(1) {
        out.push_str(&format!("{n}\t{v}\n"));
    }
    Some(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelationReport {
    pub hecke_max_residual: f64,
    /// Index where the worst Hecke residual occurs (mn).
    pub hecke_worst_at: u64,
    /// Smallest mn whose residual exceeds the source's exactness tolerance.
    pub hecke_first_failure: Option<u64>,
    pub deligne_margin_min: f64,
    pub deligne_worst_at: u64,
    pub fricke_ok: bool,
}

/// Σ_{d | (m,n)} d^{k−1} a(mn/d²) − a(m)a(n) in exact integers, None on overflow.
fn hecke_residual_exact(a: &[i128], k: u32, m: u64, n: u64) -> Option<i128> {
    let lhs = a[m as usize].checked_mul(a[n as usize])?;
    let mut rhs = 0i128;
    for d in divisors(gcd(m, n)) {
        let dk = (d as i128).checked_pow(k - 1)?;
        rhs = rhs.checked_add(dk.checked_mul(a[(m * n / (d * d)) as usize])?)?;
    }
    Some(lhs - rhs)
}

/// Residuals of the Hecke relations for coprime-to-level pairs with mn ≤ limit,
/// the Deligne margin τ(n) − |λ(n)| for n ≤ limit, and |λ(p)| = p^{−1/2} at p | N.
pub fn relation_checks_up_to(f: &Newform, limit: u64) -> RelationReport {
    let limit = limit.min(f.n_max());
    let lam = f.coefficients.normalized();
    let half = (f.weight as f64 - 1.0) / 2.0;
    let mut worst = (0.0f64, 0u64);
    let exact_source = f.coefficients.arithmetic().is_some();
    let mut first: Option<u64> = None;
    for m in 1..=limit {
        if gcd(m, f.level) != 1 {
            continue;
        }
        for n in m..=limit / m {
            if gcd(n, f.level) != 1 {
                continue;
            }
            let exact = f
                .coefficients
                .arithmetic()
                .and_then(|a| hecke_residual_exact(a, f.weight, m, n));
            let r = match exact {
                Some(0) => 0.0,
                Some(v) => (v as f64 / libm::pow((m * n) as f64, half)).abs(),
                None => {
                    let s: f64 = divisors(gcd(m, n))
                        .into_iter()
                        .map(|d| lam[(m * n / (d * d)) as usize])
                        .sum();
                    (lam[m as usize] * lam[n as usize] - s).abs()
                }
            };
            if r > worst.0 {
                worst = (r, m * n);
            }
            let fails = if exact_source { r != 0.0 } else { r > 1e-6 };
            if fails && first.map_or(true, |x| m * n < x) {
                first = Some(m * n);
            }
        }
    }
    let mut margin = (f64::INFINITY, 0u64);
    for n in 1..=limit {
        let d = divisor_count(n) as f64 - lam[n as usize].abs();
        if d < margin.0 {
            margin = (d, n);
        }
    }
    let fricke_ok = factorize(f.level).iter().all(|&(p, _)| {
        if p > f.n_max() {
            return true;
        }
        if let Some(a) = f.coefficients.arithmetic() {
            // |λ(p)| = p^{-1/2} ⇔ a(p)² = p^{k−2}
            (p as i128)
                .checked_pow(f.weight - 2)
                .and_then(|pk| a[p as usize].checked_mul(a[p as usize]).map(|s| s == pk))
                .unwrap_or(false)
        } else {
            (lam[p as usize].abs() - 1.0 / libm::sqrt(p as f64)).abs() <= 1e-12
        }
    });
    RelationReport {
        hecke_max_residual: worst.0,
        hecke_worst_at: worst.1,
        hecke_first_failure: first,
        deligne_margin_min: margin.0,
        deligne_worst_at: margin.1,
        fricke_ok,
    }
}

pub fn relation_checks(f: &Newform) -> RelationReport {
    relation_checks_up_to(f, f.n_max())
}

/// Load-time integrity: normalization, Hecke relations, Deligne bound, Fricke.
pub fn verify(f: &Newform) -> Result<()> {
    let lam = f.coefficients.normalized();
    if lam.len() < 2 || (lam[1] - 1.0).abs() > 1e-12 {
        return Err(Error::Integrity {
            relation: "normalization λ(1) = 1".into(),
            n: 1,
        });
    }
    let r = relation_checks(f);
    if let Some(n) = r.hecke_first_failure {
        return Err(Error::Integrity {
            relation: "Hecke relation λ(m)λ(n) = Σ λ(mn/d²)".into(),
            n,
        });
    }
    if r.deligne_margin_min < 0.0 {
        return Err(Error::Integrity {
            relation: "Deligne bound |λ(n)| ≤ τ(n)".into(),
            n: r.deligne_worst_at,
        });
    }
    if !r.fricke_ok {
        let p = factorize(f.level).first().map(|x| x.0).unwrap_or(1);
        return Err(Error::Integrity {
            relation: "Fricke relation |λ(p)| = p^{-1/2}".into(),
            n: p,
        });
    }
    Ok(())
}

/// dim S_k(Γ₀(N)) (or its new part) where the toolkit needs it.
pub fn cusp_dimension(k: u32, level: u64) -> Option<u32> {
    if k % 2 != 0 {
        return None;
    }
    match level {
        1 => {
            if k < 12 || k == 14 {
                Some(0)
            } else if k % 12 == 2 {
                Some(k / 12 - 1)
            } else {
                Some(k / 12)
            }
        }
        11 if k == 2 => Some(1),
        5 if k == 4 => Some(1),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;
    use num_traits::{ToPrimitive, Zero};
    use proptest::prelude::*;

    /// Dense big-integer product of (1 − q^{dn}) factors, the slow route.
    fn naive_eta(factors: &[(usize, u32)], n_max: usize) -> Vec<BigInt> {
        let len = n_max + 1;
        let mut c = vec![BigInt::zero(); len];
        c[0] = BigInt::from(1);
        for &(d, r) in factors {
            for _ in 0..r {
                let mut n = d;
                while n < len {
                    for i in (n..len).rev() {
                        let t = c[i - n].clone();
                        c[i] -= t;
                    }
                    n += d;
                }
            }
        }
        let mut out = vec![BigInt::zero(); len];
        for i in 1..len {
            out[i] = c[i - 1].clone();
        }
        out
    }

    #[test]
    fn delta_known_coefficients() {
        let f = builtin_form("1.12.delta", 10).unwrap();
        let tau = [1i128, -24, 252, -1472, 4830, -6048, -16744, 84480, -113643, -115920];
        assert_eq!(&f.coefficients.arithmetic().unwrap()[1..], &tau);
        assert!((f.lambda(2).unwrap() + 0.530_330_085_889_910_6).abs() < 1e-12);
    }

    #[test]
    fn builtins_match_dense_bigint_expansion() {
        for (label, factors) in [
            ("1.12.delta", &[(1usize, 24u32)][..]),
            ("5.4.eta", &[(1, 4), (5, 4)][..]),
            ("11.2.eta", &[(1, 2), (11, 2)][..]),
        ] {
            let f = builtin_form(label, 400).unwrap();
            let o = naive_eta(factors, 400);
            for n in 1..=400 {
                assert_eq!(f.coefficients.arithmetic().unwrap()[n], o[n].to_i128().unwrap(), "{label} n={n}");
            }
        }
    }

    #[test]
    fn small_level_examples() {
        let g = builtin_form("5.4.eta", 12).unwrap();
        assert_eq!(&g.coefficients.arithmetic().unwrap()[1..], &[1, -4, 2, 8, -5, -8, 6, 0, -23, 20, 32, 16]);
        let e = builtin_form("11.2.eta", 12).unwrap();
        assert_eq!(&e.coefficients.arithmetic().unwrap()[1..], &[1, -2, -1, 2, 1, 2, -2, 0, -2, -2, 1, -2]);
        assert!((e.lambda(11).unwrap().abs() - 1.0 / libm::sqrt(11.0)).abs() < 1e-15);
        // 5 | level: ψ(25) = ψ(5)²
        let g = builtin_form("5.4.eta", 30).unwrap();
        assert!((g.lambda(25).unwrap() - g.lambda(5).unwrap().powi(2)).abs() < 1e-14);
        for l in BUILTIN_LABELS {
            assert_eq!(builtin_form(l, 3).unwrap().lambda(1).unwrap(), 1.0);
        }
        assert!(matches!(builtin_form("2.2.x", 3), Err(Error::UnsupportedForm(_))));
        assert!(matches!(g.lambda(31), Err(Error::Range { requested: 31, available: 30 })));
    }

    #[test]
    fn relation_reports_for_builtins() {
        for l in BUILTIN_LABELS {
            let f = builtin_form(l, 2000).unwrap();
            let r = relation_checks(&f);
            assert_eq!(r.hecke_max_residual, 0.0, "{l}");
            assert!(r.deligne_margin_min >= 0.0);
            assert!(r.fricke_ok);
        }
    }

    #[test]
    fn qexp_round_trip_and_rejections() {
        let f = builtin_form("1.12.delta", 100).unwrap();
        let text = format_qexp(&f).unwrap();
        let g = parse_qexp(&text).unwrap();
        assert_eq!(g.n_max(), 100);
        assert_eq!(g.coefficients, f.coefficients);
        assert_eq!(g.source, Source::Ingested);

        let bad = text.replacen("6\t-6048", "6\t-6047", 1);
        match parse_qexp(&bad) {
            Err(Error::Integrity { n, .. }) => assert_eq!(n, 6),
            other => panic!("expected integrity error, got {other:?}"),
        }
        let headless: String = text.lines().skip(1).map(|l| format!("{l}\n")).collect();
        assert!(matches!(parse_qexp(&headless), Err(Error::Parse { line: 1, .. })));
        let gap = text.replacen("3\t252\n", "", 1);
        assert!(matches!(parse_qexp(&gap), Err(Error::Parse { line: 4, .. })));
    }

    #[test]
    fn dimension_table() {
        for k in [4, 6, 8, 10] {
            assert_eq!(cusp_dimension(k, 1), Some(0));
        }
        for k in [12, 16, 18, 20, 22, 26] {
            assert_eq!(cusp_dimension(k, 1), Some(1));
        }
        assert_eq!(cusp_dimension(2, 11), Some(1));
        assert_eq!(cusp_dimension(4, 5), Some(1));
        assert_eq!(cusp_dimension(24, 1), Some(2));
    }

    #[test]
    fn coprime_multiplicativity() {
        for l in BUILTIN_LABELS {
            let f = builtin_form(l, 3600).unwrap();
            let a = f.coefficients.arithmetic().unwrap();
            for m in 1..60u64 {
                for n in 1..60u64 {
                    if gcd(m, n) == 1 && gcd(m * n, f.level) == 1 {
                        assert_eq!(a[(m * n) as usize], a[m as usize] * a[n as usize]);
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn normalized_matches_arithmetic(n in 1u64..400) {
            let f = builtin_form("5.4.eta", 400).unwrap();
            let a = f.coefficients.arithmetic().unwrap()[n as usize] as f64;
            let l = f.lambda(n).unwrap();
            prop_assert!((l - a / libm::pow(n as f64, 1.5)).abs() <= 1e-12);
        }
    }
}
