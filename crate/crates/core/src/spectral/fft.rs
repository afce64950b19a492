//! Forward complex DFT of arbitrary length.
//!
//! Lengths whose prime factors are all <= [`MAX_DIRECT_RADIX`] use a
//! recursive mixed-radix decimation-in-time transform; anything else goes
//! through Bluestein's chirp-z algorithm on a power-of-two inner transform.
//! Convention: `X_k = sum_n x_n exp(-2 pi i n k / N)`, unnormalized.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

/// Largest prime handled by the O(p^2) generic butterfly.
pub const MAX_DIRECT_RADIX: usize = 97;

#[derive(Debug, Clone)]
pub struct FftPlan {
    len: usize,
    kind: Kind,
}

#[derive(Debug, Clone)]
enum Kind {
    Trivial,
    Mixed {
        /// `(radix, remaining length)` pairs, outermost first.
        stages: Vec<(usize, usize)>,
        twiddles: Vec<Complex64>,
    },
    Bluestein {
        inner: Box<FftPlan>,
        chirp: Vec<Complex64>,
        kernel: Vec<Complex64>,
    },
}

fn unit(angle: f64) -> Complex64 {
    Complex64::new(libm::cos(angle), libm::sin(angle))
}

fn factorize(mut n: usize) -> Vec<usize> {
    let mut out = Vec::new();
    while n % 4 == 0 {
        out.push(4);
        n /= 4;
    }
    let mut p = 2;
    while n > 1 {
        while n % p == 0 {
            out.push(p);
            n /= p;
        }
        p = if p == 2 { 3 } else { p + 2 };
        if p * p > n && n > 1 {
            out.push(n);
            break;
        }
    }
    out
}

impl FftPlan {
    pub fn new(len: usize) -> Self {
        if len <= 1 {
            return Self { len, kind: Kind::Trivial };
        }
        let radices = factorize(len);
        if radices.iter().all(|&p| p <= MAX_DIRECT_RADIX) {
            let mut remaining = len;
            let stages = radices
                .iter()
                .map(|&p| {
                    remaining /= p;
                    (p, remaining)
                })
                .collect();
            let twiddles = (0..len).map(|i| unit(-2.0 * PI * i as f64 / len as f64)).collect();
            return Self {
                len,
                kind: Kind::Mixed { stages, twiddles },
            };
        }
        Self::bluestein(len)
    }

    fn bluestein(len: usize) -> Self {
        let inner_len = (2 * len - 1).next_power_of_two();
        let inner = FftPlan::new(inner_len);
        // n^2 mod 2N keeps the chirp argument small and exact.
        let two_n = 2 * len as u128;
        let chirp: Vec<Complex64> = (0..len)
            .map(|n| {
                let sq = (n as u128 * n as u128) % two_n;
                unit(-PI * sq as f64 / len as f64)
            })
            .collect();
        let mut kernel = vec![Complex64::new(0.0, 0.0); inner_len];
        kernel[0] = chirp[0].conj();
        for n in 1..len {
            kernel[n] = chirp[n].conj();
            kernel[inner_len - n] = chirp[n].conj();
        }
        inner.process(&mut kernel);
        Self {
            len,
            kind: Kind::Bluestein {
                inner: Box::new(inner),
                chirp,
                kernel,
            },
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// In-place forward transform. Panics if `data.len() != self.len()`.
    pub fn process(&self, data: &mut [Complex64]) {
        assert_eq!(data.len(), self.len, "buffer length does not match plan");
        match &self.kind {
            Kind::Trivial => {}
            Kind::Mixed { stages, twiddles } => {
                let input = data.to_vec();
                let mut scratch = Vec::new();
                mixed(data, &input, 0, 1, stages, twiddles, &mut scratch);
            }
            Kind::Bluestein { inner, chirp, kernel } => {
                let m = inner.len();
                let mut buf = vec![Complex64::new(0.0, 0.0); m];
                for n in 0..self.len {
                    buf[n] = data[n] * chirp[n];
                }
                inner.process(&mut buf);
                for (b, k) in buf.iter_mut().zip(kernel) {
                    *b = (*b * k).conj();
                }
                // Inverse via conjugation: ifft(x) = conj(fft(conj(x))) / m.
                inner.process(&mut buf);
                let scale = 1.0 / m as f64;
                for k in 0..self.len {
                    data[k] = buf[k].conj() * scale * chirp[k];
                }
            }
        }
    }
}

fn mixed(
    out: &mut [Complex64],
    input: &[Complex64],
    offset: usize,
    stride: usize,
    stages: &[(usize, usize)],
    twiddles: &[Complex64],
    scratch: &mut Vec<Complex64>,
) {
    let (p, m) = stages[0];
    if m == 1 {
        for (k, o) in out.iter_mut().enumerate().take(p) {
            *o = input[offset + k * stride];
        }
    } else {
        for k in 0..p {
            mixed(
                &mut out[k * m..(k + 1) * m],
                input,
                offset + k * stride,
                stride * p,
                &stages[1..],
                twiddles,
                scratch,
            );
        }
    }
    butterfly(out, stride, p, m, twiddles, scratch);
}

fn butterfly(out: &mut [Complex64], stride: usize, p: usize, m: usize, twiddles: &[Complex64], scratch: &mut Vec<Complex64>) {
    let n = twiddles.len();
    if p == 2 {
        for u in 0..m {
            let t = out[u + m] * twiddles[u * stride];
            out[u + m] = out[u] - t;
            out[u] += t;
        }
        return;
    }
    if p == 4 {
        for u in 0..m {
            let a0 = out[u];
            let a1 = out[u + m] * twiddles[u * stride];
            let a2 = out[u + 2 * m] * twiddles[2 * u * stride];
            let a3 = out[u + 3 * m] * twiddles[3 * u * stride];
            let s02 = a0 + a2;
            let d02 = a0 - a2;
            let s13 = a1 + a3;
            // -i (a1 - a3)
            let d13 = a1 - a3;
            let d13 = Complex64::new(d13.im, -d13.re);
            out[u] = s02 + s13;
            out[u + m] = d02 + d13;
            out[u + 2 * m] = s02 - s13;
            out[u + 3 * m] = d02 - d13;
        }
        return;
    }
    scratch.clear();
    scratch.resize(p, Complex64::new(0.0, 0.0));
    for u in 0..m {
        for q in 0..p {
            scratch[q] = out[u + q * m];
        }
        let mut k = u;
        for _ in 0..p {
            let mut acc = scratch[0];
            let mut tw = 0;
            for s in scratch.iter().skip(1) {
                tw += stride * k;
                if tw >= n {
                    tw %= n;
                }
                acc += s * twiddles[tw];
            }
            out[k] = acc;
            k += m;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(x: &[Complex64]) -> Vec<Complex64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(j, v)| v * unit(-2.0 * PI * ((j * k) % n) as f64 / n as f64))
                    .sum()
            })
            .collect()
    }

    fn signal(n: usize) -> Vec<Complex64> {
        (0..n)
            .map(|i| Complex64::new(libm::sin(0.37 * i as f64 + 0.1) + 0.2, libm::cos(1.3 * i as f64 * i as f64 / 7.0)))
            .collect()
    }

    #[test]
    fn matches_naive_dft_for_many_lengths() {
        for n in [1usize, 2, 3, 4, 5, 6, 7, 8, 12, 15, 16, 30, 49, 97, 100, 101, 125, 211, 250, 256, 360, 997, 1000] {
            let x = signal(n);
            let mut y = x.clone();
            FftPlan::new(n).process(&mut y);
            let reference = naive(&x);
            let scale = reference.iter().map(|c| c.norm()).fold(1.0, f64::max);
            for (a, b) in y.iter().zip(&reference) {
                assert!((a - b).norm() < 1e-11 * scale, "n={n}");
            }
        }
    }

    #[test]
    fn factorization_covers_reference_trace_length() {
        assert_eq!(factorize(4000).iter().product::<usize>(), 4000);
        assert!(matches!(FftPlan::new(4000).kind, Kind::Mixed { .. }));
        assert!(matches!(FftPlan::new(2 * 101 * 103).kind, Kind::Bluestein { .. }));
    }

    proptest::proptest! {
        #[test]
        fn parseval_and_linearity(
            x in proptest::collection::vec(-10.0f64..10.0, 1..300),
            a in -3.0f64..3.0,
        ) {
            let n = x.len();
            let plan = FftPlan::new(n);
            let mut y: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
            plan.process(&mut y);
            let time: f64 = x.iter().map(|v| v * v).sum();
            let freq: f64 = y.iter().map(|c| c.norm_sqr()).sum::<f64>() / n as f64;
            proptest::prop_assert!((time - freq).abs() <= 1e-10 * time.max(1.0));

            let mut z: Vec<Complex64> = x.iter().map(|&v| Complex64::new(a * v, 0.0)).collect();
            plan.process(&mut z);
            let scale = y.iter().map(|c| c.norm()).fold(1.0, f64::max);
            for (u, v) in z.iter().zip(&y) {
                proptest::prop_assert!((u - v * a).norm() <= 1e-10 * scale * a.abs().max(1.0));
            }
        }
    }
}
