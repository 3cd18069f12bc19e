//! Complex DFT of arbitrary length: iterative radix-2 for powers of two,
//! Bluestein's chirp-z reduction otherwise.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use num_complex::Complex64;

#[derive(Debug, Clone)]
struct Radix2 {
    n: usize,
    bits: u32,
    // e^{-2πi k/n} for k < n/2
    roots: Vec<Complex64>,
}

impl Radix2 {
    fn new(n: usize) -> Self {
        debug_assert!(n.is_power_of_two());
        let roots = (0..n / 2)
            .map(|k| {
                let t = -2.0 * PI * (k as f64) / (n as f64);
                Complex64::new(libm::cos(t), libm::sin(t))
            })
            .collect();
        Self {
            n,
            bits: n.trailing_zeros(),
            roots,
        }
    }

    fn run(&self, x: &mut [Complex64], inverse: bool) {
        let n = self.n;
        if n <= 1 {
            return;
        }
        for i in 0..n {
            let j = i.reverse_bits() >> (usize::BITS - self.bits);
            if j > i {
                x.swap(i, j);
            }
        }
        let mut len = 2;
        while len <= n {
            let step = n / len;
            let half = len / 2;
            for start in (0..n).step_by(len) {
                for k in 0..half {
                    let mut w = self.roots[k * step];
                    if inverse {
                        w = w.conj();
                    }
                    let u = x[start + k];
                    let v = x[start + k + half] * w;
                    x[start + k] = u + v;
                    x[start + k + half] = u - v;
                }
            }
            len <<= 1;
        }
    }
}

#[derive(Debug, Clone)]
enum Plan {
    Pow2(Radix2),
    Bluestein {
        inner: Radix2,
        // w_j = e^{-πi j²/n}
        chirp: Vec<Complex64>,
        // FFT of the conjugate chirp, wrapped for circular convolution
        kernel: Vec<Complex64>,
    },
}

/// Reusable DFT plan for one length.
#[derive(Debug, Clone)]
pub struct Dft {
    n: usize,
    plan: Plan,
}

impl Dft {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "DFT length must be positive");
        if n.is_power_of_two() {
            return Self {
                n,
                plan: Plan::Pow2(Radix2::new(n)),
            };
        }
        let m = (2 * n - 1).next_power_of_two();
        let inner = Radix2::new(m);
        let two_n = 2 * n as u128;
        let chirp: Vec<Complex64> = (0..n)
            .map(|j| {
                let r = ((j as u128 * j as u128) % two_n) as f64;
                let t = -PI * r / n as f64;
                Complex64::new(libm::cos(t), libm::sin(t))
            })
            .collect();
        let mut kernel = vec![Complex64::new(0.0, 0.0); m];
        kernel[0] = chirp[0].conj();
        for j in 1..n {
            kernel[j] = chirp[j].conj();
            kernel[m - j] = chirp[j].conj();
        }
        inner.run(&mut kernel, false);
        Self {
            n,
            plan: Plan::Bluestein {
                inner,
                chirp,
                kernel,
            },
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Returns X_k = Σ_j x_j e^{∓2πi jk/n}; `inverse` selects the + sign.
    /// No 1/n scaling is applied in either direction.
    pub fn transform(&self, x: &[Complex64], inverse: bool) -> Vec<Complex64> {
        assert_eq!(x.len(), self.n);
        match &self.plan {
            Plan::Pow2(r) => {
                let mut y = x.to_vec();
                r.run(&mut y, inverse);
                y
            }
            Plan::Bluestein {
                inner,
                chirp,
                kernel,
            } => {
                let m = inner.n;
                let w = |j: usize| if inverse { chirp[j].conj() } else { chirp[j] };
                let mut a = vec![Complex64::new(0.0, 0.0); m];
                for j in 0..self.n {
                    a[j] = x[j] * w(j);
                }
                inner.run(&mut a, false);
                if inverse {
                    // kernel of the conjugate chirp is the mirrored conjugate spectrum
                    for k in 0..m {
                        let kk = if k == 0 { 0 } else { m - k };
                        a[k] *= kernel[kk].conj();
                    }
                } else {
                    for k in 0..m {
                        a[k] *= kernel[k];
                    }
                }
                inner.run(&mut a, true);
                let scale = 1.0 / m as f64;
                (0..self.n).map(|k| a[k] * scale * w(k)).collect()
            }
        }
    }
}

/// One-shot DFT; see [`Dft::transform`].
pub fn dft(x: &[Complex64], inverse: bool) -> Vec<Complex64> {
    Dft::new(x.len()).transform(x, inverse)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(x: &[Complex64], inverse: bool) -> Vec<Complex64> {
        let n = x.len();
        let s = if inverse { 1.0 } else { -1.0 };
        (0..n)
            .map(|k| {
                let mut acc = Complex64::new(0.0, 0.0);
                for (j, &xj) in x.iter().enumerate() {
                    let r = ((j * k) % n) as f64;
                    let t = s * 2.0 * PI * r / n as f64;
                    acc += xj * Complex64::new(libm::cos(t), libm::sin(t));
                }
                acc
            })
            .collect()
    }

    #[test]
    fn matches_naive_all_small_lengths() {
        for n in 1..=70usize {
            let x: Vec<Complex64> = (0..n)
                .map(|j| Complex64::new(libm::sin(j as f64 * 1.3 + 0.2), libm::cos(j as f64 * 0.7)))
                .collect();
            for inv in [false, true] {
                let a = dft(&x, inv);
                let b = naive(&x, inv);
                for k in 0..n {
                    assert!((a[k] - b[k]).norm() < 1e-11 * n as f64, "n={n} k={k}");
                }
            }
        }
    }

    #[test]
    fn roundtrip_prime_length() {
        let n = 1009;
        let x: Vec<Complex64> = (0..n).map(|j| Complex64::new(j as f64, -(j as f64) * 0.5)).collect();
        let plan = Dft::new(n);
        let y = plan.transform(&plan.transform(&x, false), true);
        for j in 0..n {
            assert!((y[j] / n as f64 - x[j]).norm() < 1e-9);
        }
    }
}
