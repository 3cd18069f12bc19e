//! The smooth delta symbol: h(x, y), the constant c_Q and detection of n = 0.

use crate::arith::{euler_phi, ramanujan_exact};
use crate::bessel::canonical_bump;
use crate::error::{Error, Result};
use crate::quad::GaussLegendre;
use crate::sum::Neumaier;
use alloc::format;

/// Bump on [1/2, 1]: the canonical bump pulled back by t ↦ 1/2 + 4(t − 1/2).
#[inline]
fn w_raw(t: f64) -> f64 {
    canonical_bump(0.5 + 4.0 * (t - 0.5))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaSymbol {
    q: f64,
    w_scale: f64,
    c_q: f64,
    series_cutoff: u64,
}

/// Builds the delta symbol for `q` and calibrates c_Q at n = 0.
pub fn build_delta(q: f64) -> Result<DeltaSymbol> {
    if !(q > 1.0) || !q.is_finite() {
        return Err(Error::Domain(format!("delta symbol needs Q > 1, got {q}")));
    }
    // normalize ∫ w = 1
    let mass = GaussLegendre::gl15().integrate(0.5, 1.0, 16, w_raw);
    let mut d = DeltaSymbol {
        q,
        w_scale: 1.0 / mass,
        c_q: 1.0,
        series_cutoff: libm::floor(q) as u64,
    };
    let mut acc = Neumaier::new();
    for qq in 1..=d.series_cutoff {
        acc.add(euler_phi(qq) as f64 * d.h_unchecked(qq as f64 / q, 0.0));
    }
    d.c_q = q * q / acc.value();
    Ok(d)
}

impl DeltaSymbol {
    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn c_q(&self) -> f64 {
        self.c_q
    }

    /// Largest modulus that contributes at n = 0.
    pub fn series_cutoff(&self) -> u64 {
        self.series_cutoff
    }

    /// The bump w on [1/2, 1], normalized to unit mass.
    #[inline]
    pub fn w(&self, t: f64) -> f64 {
        self.w_scale * w_raw(t)
    }

    pub fn w_peak(&self) -> f64 {
        self.w_scale
    }

    pub fn h_eval(&self, x: f64, y: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::Domain(format!("h(x, y) needs x > 0, got {x}")));
        }
        Ok(self.h_unchecked(x, y))
    }

    /// Σ_j (xj)^{-1}[w(xj) − w(|y|/(xj))], j ≤ max(1/x, 2|y|/x).
    pub fn h_unchecked(&self, x: f64, y: f64) -> f64 {
        let ay = y.abs();
        if x > 1.0_f64.max(2.0 * ay) {
            return 0.0;
        }
        let jmax = libm::floor(1.0_f64.max(2.0 * ay) / x) as u64 + 1;
        let mut acc = Neumaier::new();
        for j in 1..=jmax {
            let xj = x * j as f64;
            let v = self.w(xj) - self.w(ay / xj);
            if v != 0.0 {
                acc.add(v / xj);
            }
        }
        acc.value()
    }

    /// Largest modulus that contributes to detect(n).
    pub fn q_cutoff(&self, n: i64) -> u64 {
        let y = n.unsigned_abs() as f64 / (self.q * self.q);
        libm::floor(self.q * 1.0_f64.max(2.0 * y)) as u64
    }

    /// (c_Q/Q²) Σ_q c_q(n) h(q/Q, n/Q²).
    pub fn detect(&self, n: i64) -> Result<f64> {
        let q2 = self.q * self.q;
        if n.unsigned_abs() as f64 > 10.0 * q2 {
            return Err(Error::InvalidArgument(format!("|n| = {} exceeds 10·Q²", n.unsigned_abs())));
        }
        let y = n as f64 / q2;
        let mut acc = Neumaier::new();
        for qq in 1..=self.q_cutoff(n) {
            let h = self.h_unchecked(qq as f64 / self.q, y);
            if h != 0.0 {
                acc.add(ramanujan_exact(n, qq)? as f64 * h);
            }
        }
        Ok(self.c_q / q2 * acc.value())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::gcd;
    use core::f64::consts::PI;
    use proptest::prelude::*;

    #[test]
    fn build_examples() {
        let d = build_delta(10.0).unwrap();
        assert!((0.9..=1.1).contains(&d.c_q()));
        assert_eq!(d.h_eval(2.0, 0.5).unwrap(), 0.0);
        // x = 1/2 puts both surviving terms on the endpoints of w's support
        assert_eq!(d.h_eval(0.5, 0.0).unwrap(), 0.0);
        assert!(d.h_eval(0.6, 0.0).unwrap() > 0.0);
        assert!(build_delta(1.0).is_err());
        assert!(d.h_eval(0.0, 0.1).is_err());
    }

    #[test]
    fn c_q_close_to_one() {
        for q in [10.0, 13.7, 20.0, 40.0] {
            assert!((build_delta(q).unwrap().c_q() - 1.0).abs() <= 0.1);
        }
    }

    #[test]
    fn y_flatness_and_evenness() {
        let d = build_delta(10.0).unwrap();
        assert_eq!(d.h_eval(0.3, 0.1).unwrap(), d.h_eval(0.3, -0.1).unwrap());
        // flat in y for |y| ≤ x/2
        let h0 = d.h_eval(0.3, 0.0).unwrap();
        for y in [0.01, 0.05, 0.1, 0.15] {
            assert!((d.h_eval(0.3, y).unwrap() - h0).abs() < 1e-14);
        }
    }

    #[test]
    fn support_and_boundedness_grid() {
        let d = build_delta(10.0).unwrap();
        let mut worst: f64 = 0.0;
        for i in 0..200 {
            let x = 0.01 + 3.0 * i as f64 / 199.0;
            for j in 0..200 {
                let y = -3.0 + 6.0 * j as f64 / 199.0;
                let h = d.h_unchecked(x, y);
                if x > 1.0_f64.max(2.0 * y.abs()) {
                    assert_eq!(h, 0.0);
                }
                worst = worst.max((x * h).abs());
            }
        }
        assert!(worst <= 4.0 * d.w_peak());
    }

    #[test]
    fn x_h_majorized_on_unit_interval() {
        let d = build_delta(10.0).unwrap();
        for i in 0..1000 {
            let x = 0.01 + 0.99 * i as f64 / 999.0;
            assert!((x * d.h_unchecked(x, 0.0)).abs() <= 4.0 * d.w_peak());
        }
    }

    #[test]
    fn detect_examples() {
        let d = build_delta(10.0).unwrap();
        assert!((d.detect(0).unwrap() - 1.0).abs() < 1e-12);
        assert!(d.detect(7).unwrap().abs() < 1e-8);
        assert!(d.detect(-50).unwrap().abs() < 1e-8);
        assert!(d.detect(1001).is_err());
    }

    #[test]
    fn detect_matches_unfolded_a_sum() {
        let d = build_delta(6.5).unwrap();
        let q2 = d.q() * d.q();
        for n in [-40i64, -3, 0, 1, 11, 42] {
            let mut acc = 0.0;
            for qq in 1..=d.q_cutoff(n) {
                let h = d.h_unchecked(qq as f64 / d.q(), n as f64 / q2);
                for a in 0..qq {
                    if gcd(a, qq) == 1 {
                        acc += libm::cos(2.0 * PI * (a as f64) * (n as f64) / qq as f64) * h;
                    }
                }
            }
            let direct = d.c_q() / q2 * acc;
            assert!((direct - d.detect(n).unwrap()).abs() < 1e-10);
        }
    }

    #[test]
    fn detection_for_q_10_and_20() {
        for q in [10.0, 20.0] {
            let d = build_delta(q).unwrap();
            let lim = (q * q) as i64;
            for n in -lim..=lim {
                let e = if n == 0 { 1.0 } else { 0.0 };
                assert!((d.detect(n).unwrap() - e).abs() <= 1e-8, "Q={q} n={n}");
            }
        }
    }

    proptest! {
        #[test]
        fn detect_is_even(n in 0i64..400) {
            let d = build_delta(10.0).unwrap();
            prop_assert!((d.detect(n).unwrap() - d.detect(-n).unwrap()).abs() <= 1e-12);
        }
    }
}
