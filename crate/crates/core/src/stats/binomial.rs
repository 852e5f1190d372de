//! Binomial probabilities and the exact two-sided test.
//!
//! The pmf uses Loader's saddle-point expansion, accurate to a few ulps for
//! every `n`, so tail sums keep full relative precision far into the tails.

use crate::error::{Error, Result};

/// Relative slack when comparing pmf values for ties in the two-sided test.
pub const PMF_TIE_TOLERANCE: f64 = 1e-12;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

// Stirling series coefficients: 1/12, 1/360, 1/1260, 1/1680, 1/1188.
const S0: f64 = 1.0 / 12.0;
const S1: f64 = 1.0 / 360.0;
const S2: f64 = 1.0 / 1260.0;
const S3: f64 = 1.0 / 1680.0;
const S4: f64 = 1.0 / 1188.0;

/// ln(n!) - [(n + 1/2) ln n - n + ln(2 pi)/2] for integer n in 0..=15.
const STIRLERR_SMALL: [f64; 16] = [
    0.0,
    0.081_061_466_795_327_258_219_670_2,
    0.041_340_695_955_409_294_093_822_1,
    0.027_677_925_684_998_339_148_789_29,
    0.020_790_672_103_765_093_111_522_77,
    0.016_644_691_189_821_192_163_194_87,
    0.013_876_128_823_070_747_998_745_73,
    0.011_896_709_945_891_770_095_055_72,
    0.010_411_265_261_972_096_497_478_567,
    0.009_255_462_182_712_732_917_728_637,
    0.008_330_563_433_362_871_256_469_318,
    0.007_573_675_487_951_840_794_972_024,
    0.006_942_840_107_209_529_865_664_152,
    0.006_408_994_188_004_207_068_439_631,
    0.005_951_370_112_758_847_735_624_416,
    0.005_554_733_551_962_801_371_038_690,
];

fn stirlerr(n: u64) -> f64 {
    if n <= 15 {
        return STIRLERR_SMALL[n as usize];
    }
    let n = n as f64;
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

/// Deviance term x ln(x/np) + np - x, computed without cancellation.
fn bd0(x: f64, np: f64) -> f64 {
    if (x - np).abs() < 0.1 * (x + np) {
        let v = (x - np) / (x + np);
        let mut s = (x - np) * v;
        let mut ej = 2.0 * x * v;
        let v2 = v * v;
        for j in 1..1000 {
            ej *= v2;
            let s1 = s + ej / (2 * j + 1) as f64;
            if s1 == s {
                return s1;
            }
            s = s1;
        }
        s
    } else {
        x * (x / np).ln() + np - x
    }
}

fn pmf_unchecked(k: u64, n: u64, p: f64) -> f64 {
    let q = 1.0 - p;
    if k == 0 {
        return (n as f64 * (-p).ln_1p()).exp();
    }
    if k == n {
        return (n as f64 * p.ln()).exp();
    }
    let (kf, nf) = (k as f64, n as f64);
    let lc = stirlerr(n) - stirlerr(k) - stirlerr(n - k) - bd0(kf, nf * p) - bd0(nf - kf, nf * q);
    let lf = LN_2PI + kf.ln() + (-kf / nf).ln_1p();
    (lc - 0.5 * lf).exp()
}

fn check(k: u64, n: u64, p: f64) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!("success probability {p} not in (0, 1)")));
    }
    if k > n {
        return Err(Error::invalid(format!("k = {k} exceeds n = {n}")));
    }
    Ok(())
}

/// P(X = k) for X ~ Binomial(n, p).
pub fn binomial_pmf(k: u64, n: u64, p: f64) -> Result<f64> {
    check(k, n, p)?;
    Ok(pmf_unchecked(k, n, p))
}

/// P(X >= k).
pub fn upper_tail(k: u64, n: u64, p: f64) -> Result<f64> {
    check(k.min(n), n, p)?;
    if k > n {
        return Ok(0.0);
    }
    Ok((k..=n).map(|i| pmf_unchecked(i, n, p)).sum::<f64>().min(1.0))
}

/// P(X <= k).
pub fn lower_tail(k: u64, n: u64, p: f64) -> Result<f64> {
    check(k.min(n), n, p)?;
    Ok((0..=k.min(n)).map(|i| pmf_unchecked(i, n, p)).sum::<f64>().min(1.0))
}

/// Smallest k with P(X <= k) >= prob.
pub fn binomial_quantile(prob: f64, n: u64, p: f64) -> Result<u64> {
    check(0, n, p)?;
    if !(0.0..=1.0).contains(&prob) {
        return Err(Error::invalid(format!("probability {prob} not in [0, 1]")));
    }
    let mut cdf = 0.0;
    for k in 0..=n {
        cdf += pmf_unchecked(k, n, p);
        if cdf >= prob {
            return Ok(k);
        }
    }
    Ok(n)
}

/// Exact two-sided binomial test by the minimum-likelihood rule: the p-value is
/// the total probability of all outcomes no more likely than the observed one.
pub fn binomial_two_sided(k: u64, n: u64, p0: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("binomial test needs n >= 1"));
    }
    check(k, n, p0)?;
    let threshold = pmf_unchecked(k, n, p0) * (1.0 + PMF_TIE_TOLERANCE);
    let mut total = 0.0;
    let mut included = 0u64;
    for i in 0..=n {
        let d = pmf_unchecked(i, n, p0);
        if d <= threshold {
            total += d;
            included += 1;
        }
    }
    if included == n + 1 {
        return Ok(1.0);
    }
    Ok(total.min(1.0))
}
