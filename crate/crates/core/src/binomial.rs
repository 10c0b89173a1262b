//! Binomial probabilities in log space.
//!
//! Point masses use Loader's saddle-point expansion (Stirling remainder plus
//! the `bd0` deviance term), which stays accurate to a few ulps for any
//! `n`, unlike differences of `lgamma` values. Tail sums start at the
//! largest term in the tail and walk outward with the pmf ratio, so no
//! catastrophic cancellation happens on the small side.

use crate::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `ln(n!) - ((n + 1/2) ln n - n + ln sqrt(2 pi))` for integer `n >= 0`.
fn stirlerr(n: f64) -> f64 {
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    if n <= 15.0 {
        if n == 0.0 {
            return 0.0;
        }
        return libm::lgamma(n + 1.0) - (n + 0.5) * libm::log(n) + n - 0.5 * LN_2PI;
    }
    let nn = n * n;
    if n > 500.0 {
        (S0 - S1 / nn) / n
    } else if n > 80.0 {
        (S0 - (S1 - S2 / nn) / nn) / n
    } else if n > 35.0 {
        (S0 - (S1 - (S2 - S3 / nn) / nn) / nn) / n
    } else {
        (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / n
    }
}

/// Deviance term `x ln(x / np) + np - x`, evaluated without cancellation
/// when `x` is close to `np`.
fn bd0(x: f64, np: f64) -> f64 {
    if (x - np).abs() < 0.1 * (x + np) {
        let mut v = (x - np) / (x + np);
        let mut s = (x - np) * v;
        let mut ej = 2.0 * x * v;
        v *= v;
        for j in 1..1000 {
            ej *= v;
            let s1 = s + ej / f64::from(2 * j + 1);
            if s1 == s {
                return s1;
            }
            s = s1;
        }
        return s;
    }
    x * libm::log(x / np) + np - x
}

/// `ln P[Bin(n, p) = k]` for `0 < p < 1`.
pub fn ln_pmf(k: u64, n: u64, p: f64) -> f64 {
    debug_assert!(k <= n && p > 0.0 && p < 1.0);
    let q = 1.0 - p;
    let (kf, nf) = (k as f64, n as f64);
    if k == 0 {
        return nf * libm::log1p(-p);
    }
    if k == n {
        return nf * libm::log(p);
    }
    let lc = stirlerr(nf) - stirlerr(kf) - stirlerr(nf - kf) - bd0(kf, nf * p) - bd0(nf - kf, nf * q);
    let lf = LN_2PI + libm::log(kf) + libm::log1p(-kf / nf);
    lc - 0.5 * lf
}

/// `P[Bin(n, p) <= k]`.
pub fn cdf(k: u64, n: u64, p: f64) -> Result<f64> {
    if k > n {
        return Err(Error::CountExceedsTotal { count: k as usize, total: n as usize });
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter { name: "success probability", value: p, expected: "[0, 1]" });
    }
    if k == n || p == 0.0 {
        return Ok(1.0);
    }
    if p == 1.0 {
        return Ok(0.0);
    }
    let odds = p / (1.0 - p);
    let mean = n as f64 * p;
    if (k as f64) < mean {
        // Lower tail: terms decrease as i walks down from k.
        let head = ln_pmf(k, n, p);
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut i = k;
        while i > 0 {
            term *= i as f64 / ((n - i + 1) as f64 * odds);
            sum += term;
            if term < sum * 1e-17 {
                break;
            }
            i -= 1;
        }
        Ok(libm::exp(head + libm::log(sum)).min(1.0))
    } else {
        // Upper tail from k + 1 upward, then complement.
        let start = k + 1;
        let head = ln_pmf(start, n, p);
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut i = start;
        while i < n {
            term *= (n - i) as f64 * odds / (i + 1) as f64;
            sum += term;
            if term < sum * 1e-17 {
                break;
            }
            i += 1;
        }
        Ok((1.0 - libm::exp(head + libm::log(sum))).clamp(0.0, 1.0))
    }
}


#[cfg(test)]
mod tests {
    use super::*;

    // ln Gamma via direct factorial products is only usable for tiny n.
    fn pmf_by_products(k: u64, n: u64, p: f64) -> f64 {
        let mut choose: u128 = 1;
        for i in 0..k {
            choose = choose * u128::from(n - i) / u128::from(i + 1);
        }
        let mut v = choose as f64;
        for _ in 0..k {
            v *= p;
        }
        for _ in 0..(n - k) {
            v *= 1.0 - p;
        }
        v
    }

    #[test]
    fn stirlerr_small_table() {
        // Reference values of ln(n!) - (n + 1/2) ln n + n - ln sqrt(2 pi).
        let table = [
            (1.0, 0.081_061_466_795_327_26),
            (2.0, 0.041_340_695_955_409_29),
            (5.0, 0.016_644_691_189_821_19),
            (10.0, 0.008_330_563_433_362_87),
            (15.0, 0.005_554_733_551_962_801),
        ];
        for (n, want) in table {
            assert!((stirlerr(n) - want).abs() < 1e-14, "n = {n}");
        }
        // Series branch continuity around the cut.
        let exact16 = libm::lgamma(17.0) - 16.5 * libm::log(16.0) + 16.0 - 0.5 * LN_2PI;
        assert!((stirlerr(16.0) - exact16).abs() < 1e-13);
    }

    #[test]
    fn pmf_matches_products() {
        for n in [1u64, 2, 7, 20, 33] {
            for k in 0..=n {
                for p in [0.03, 0.3, 0.5, 0.9] {
                    let want = pmf_by_products(k, n, p);
                    let got = libm::exp(ln_pmf(k, n, p));
                    assert!((got - want).abs() <= 1e-13 * want.max(1e-300), "{k} {n} {p}: {got} vs {want}");
                }
            }
        }
    }

    #[test]
    fn cdf_exact_cases() {
        assert!((cdf(2, 10, 0.5).unwrap() - 56.0 / 1024.0).abs() < 1e-15);
        assert_eq!(cdf(10, 10, 0.5).unwrap(), 1.0);
        let brute: f64 = (0..=14).map(|i| pmf_by_products(i, 20, 0.9)).sum();
        assert!((cdf(14, 20, 0.9).unwrap() - brute).abs() < 1e-12);
        assert!(cdf(11, 10, 0.5).is_err());
    }

    #[test]
    fn cdf_large_n_tails() {
        // Far lower tail is tiny but positive and monotone in k.
        let a = cdf(100, 1_000_000, 0.001).unwrap();
        let b = cdf(900, 1_000_000, 0.001).unwrap();
        let c = cdf(1000, 1_000_000, 0.001).unwrap();
        assert!(a > 0.0 && a < b && b < c && c < 1.0);
        // Median of a symmetric binomial: P[X <= n/2] = 1/2 + pmf(n/2)/2.
        let n = 1_000_000u64;
        let half = 0.5 + 0.5 * libm::exp(ln_pmf(n / 2, n, 0.5));
        assert!((cdf(n / 2, n, 0.5).unwrap() - half).abs() < 1e-12);
    }
}
