//! Normal and Beta distribution functions.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Standard normal distribution function.
pub fn normal_cdf<T: Real>(x: T) -> T {
    T::lit(0.5) * (-x / T::SQRT_2()).erfc()
}

/// Standard normal quantile: rational approximation refined by Halley steps
/// on the complementary error function.
pub fn normal_quantile<T: Real>(p: T) -> Result<T> {
    if !(p > T::zero() && p < T::one()) {
        return Err(Error::DomainError(format!(
            "normal quantile needs p in (0, 1), got {p}"
        )));
    }
    if p > T::lit(0.5) {
        return Ok(-lower_quantile(T::one() - p));
    }
    Ok(lower_quantile(p))
}

fn lower_quantile<T: Real>(q: T) -> T {
    let mut x = T::lit(acklam(q.approx_f64()));
    for _ in 0..2 {
        let e = T::lit(0.5) * (-x / T::SQRT_2()).erfc() - q;
        let u = e * (T::TAU()).sqrt() * (x * x / T::lit(2.0)).exp();
        if !u.is_finite() {
            break;
        }
        x = x - u / (T::one() + x * u / T::lit(2.0));
    }
    x
}

/// `Φ(x)` in double precision by Hart's rational approximation with the
/// continued-fraction tail. Used on hot paths where the generic
/// complementary error function is too slow.
pub(crate) fn normal_cdf_fast(x: f64) -> f64 {
    let z = x.abs();
    let tail = if z > 37.0 {
        0.0
    } else {
        let e = (-0.5 * z * z).exp();
        if z < 7.071_067_811_865_47 {
            const N: [f64; 7] = [
                3.526_249_659_989_11e-2,
                0.700_383_064_443_688,
                6.373_962_203_531_65,
                33.912_866_078_383,
                112.079_291_497_871,
                221.213_596_169_931,
                220.206_867_912_376,
            ];
            const D: [f64; 8] = [
                8.838_834_764_831_84e-2,
                1.755_667_163_182_64,
                16.064_177_579_207,
                86.780_732_202_946_1,
                296.564_248_779_674,
                637.333_633_378_831,
                793.826_512_519_948,
                440.413_735_824_752,
            ];
            let num = N.iter().fold(0.0, |acc, c| acc * z + c);
            let den = D.iter().fold(0.0, |acc, c| acc * z + c);
            e * num / den
        } else {
            let mut b = z + 0.65;
            b = z + 4.0 / b;
            b = z + 3.0 / b;
            b = z + 2.0 / b;
            b = z + 1.0 / b;
            e / b / 2.506_628_274_631
        }
    };
    if x > 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Acklam's rational approximation to the normal quantile (relative error
/// about `1.15e-9`). Returns `±∞` at the endpoints.
pub(crate) fn acklam(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.02425;
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}

fn check_shapes<T: Real>(a: T, b: T) -> Result<()> {
    if !(a > T::zero() && b > T::zero() && a.is_finite() && b.is_finite()) {
        return Err(Error::DomainError(format!(
            "Beta shapes must be positive and finite, got ({a}, {b})"
        )));
    }
    Ok(())
}

fn ln_beta<T: Real>(a: T, b: T) -> T {
    a.ln_gamma() + b.ln_gamma() - (a + b).ln_gamma()
}

/// Regularised incomplete beta function `I_x(a, b)`.
pub fn beta_cdf<T: Real>(x: T, a: T, b: T) -> Result<T> {
    check_shapes(a, b)?;
    if x.is_nan() {
        return Err(Error::DomainError("beta_cdf evaluated at NaN".into()));
    }
    Ok(beta_cdf_unchecked(x, a, b, ln_beta(a, b)))
}

pub(crate) fn beta_cdf_unchecked<T: Real>(x: T, a: T, b: T, lnb: T) -> T {
    if x <= T::zero() {
        return T::zero();
    }
    if x >= T::one() {
        return T::one();
    }
    let front = (a * x.ln() + b * (-x).ln_1p() - lnb).exp();
    if x < (a + T::one()) / (a + b + T::lit(2.0)) {
        front * beta_cf(a, b, x) / a
    } else {
        T::one() - front * beta_cf(b, a, T::one() - x) / b
    }
}

/// Continued fraction for the incomplete beta function (modified Lentz).
fn beta_cf<T: Real>(a: T, b: T, x: T) -> T {
    let tiny = T::min_positive_value() / T::epsilon();
    let eps = T::special_tol();
    let one = T::one();
    let two = T::lit(2.0);
    let qab = a + b;
    let qap = a + one;
    let qam = a - one;
    let mut c = one;
    let mut d = one - qab * x / qap;
    if d.abs() < tiny {
        d = tiny;
    }
    d = d.recip();
    let mut h = d;
    for m in 1..20_000u32 {
        let m = T::from_count(u64::from(m));
        let m2 = two * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = one + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = one + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = d.recip();
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = one + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = one + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = d.recip();
        let del = d * c;
        h *= del;
        if (del - one).abs() <= eps {
            break;
        }
    }
    h
}

/// Quantile of `Beta(a, b)`: Newton iterations safeguarded by bisection.
pub fn beta_quantile<T: Real>(a: T, b: T, p: T) -> Result<T> {
    check_shapes(a, b)?;
    if !(p > T::zero() && p < T::one()) {
        return Err(Error::DomainError(format!(
            "beta quantile needs p in (0, 1), got {p}"
        )));
    }
    let lnb = ln_beta(a, b);
    let one = T::one();
    let x = initial_guess(a.approx_f64(), b.approx_f64(), p.approx_f64());
    let (mut lo, mut hi) = (T::zero(), one);
    let mut xt = T::lit(x.clamp(1e-300, 1.0 - 1e-16));
    if !(xt > lo && xt < hi) {
        xt = T::lit(0.5);
    }
    for _ in 0..400 {
        let err = beta_cdf_unchecked(xt, a, b, lnb) - p;
        if err == T::zero() {
            return Ok(xt);
        }
        if err < T::zero() {
            lo = xt;
        } else {
            hi = xt;
        }
        let dens = ((a - one) * xt.ln() + (b - one) * (-xt).ln_1p() - lnb).exp();
        let mut next = xt - err / dens;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = (lo + hi) / T::lit(2.0);
        }
        let done = (next - xt).abs()
            <= T::epsilon() * T::lit(4.0) * xt.max(T::min_positive_value())
            || hi - lo <= T::epsilon() * hi;
        xt = next;
        if done {
            break;
        }
    }
    Ok(xt)
}

fn initial_guess(a: f64, b: f64, p: f64) -> f64 {
    if a >= 1.0 && b >= 1.0 {
        let pp = if p < 0.5 { p } else { 1.0 - p };
        let t = (-2.0 * pp.ln()).sqrt();
        let mut x = (2.30753 + t * 0.27061) / (1.0 + t * (0.99229 + t * 0.04481)) - t;
        if p < 0.5 {
            x = -x;
        }
        let al = (x * x - 3.0) / 6.0;
        let h = 2.0 / (1.0 / (2.0 * a - 1.0) + 1.0 / (2.0 * b - 1.0));
        let w = x * (al + h).sqrt() / h
            - (1.0 / (2.0 * b - 1.0) - 1.0 / (2.0 * a - 1.0)) * (al + 5.0 / 6.0 - 2.0 / (3.0 * h));
        a / (a + b * (2.0 * w).exp())
    } else {
        let lna = (a / (a + b)).ln();
        let lnb = (b / (a + b)).ln();
        let t = (a * lna).exp() / a;
        let u = (b * lnb).exp() / b;
        let w = t + u;
        if p < t / w {
            (a * w * p).powf(1.0 / a)
        } else {
            1.0 - (b * w * (1.0 - p)).powf(1.0 / b)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_quantile_round_trip() {
        for &p in &[
            1e-12,
            1e-6,
            0.001,
            0.025,
            0.3,
            0.5,
            0.7,
            0.975,
            0.999,
            1.0 - 1e-9,
        ] {
            let x: f64 = normal_quantile(p).unwrap();
            let back = normal_cdf(x);
            assert!(((back - p) / p.min(1.0 - p)).abs() < 1e-10, "p={p}");
        }
        assert!((normal_quantile(0.975f64).unwrap() - 1.959_963_984_540_054).abs() < 1e-12);
        assert!(normal_quantile(0.0f64).is_err());
    }

    #[test]
    fn uniform_and_symmetric_quantiles() {
        for &p in &[0.01, 0.2, 0.5, 0.9] {
            assert!((beta_quantile(1.0f64, 1.0, p).unwrap() - p).abs() < 1e-13);
        }
        assert!((beta_quantile(2.0f64, 2.0, 0.5).unwrap() - 0.5).abs() < 1e-13);
    }

    #[test]
    fn beta_cdf_closed_forms() {
        // I_x(a, 1) = x^a and I_x(1, b) = 1 − (1−x)^b
        let x = 0.37f64;
        assert!((beta_cdf(x, 3.5, 1.0).unwrap() - x.powf(3.5)).abs() < 1e-14);
        assert!((beta_cdf(x, 1.0, 2.5).unwrap() - (1.0 - (1.0 - x).powf(2.5))).abs() < 1e-14);
        assert_eq!(beta_cdf(0.0f64, 2.0, 3.0).unwrap(), 0.0);
        assert_eq!(beta_cdf(1.0f64, 2.0, 3.0).unwrap(), 1.0);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for &(a, b) in &[
            (16.0, 4.0),
            (0.3, 0.7),
            (270.0, 67.0),
            (0.05, 30.0),
            (30.0, 0.5),
        ] {
            for &p in &[1e-6, 0.0025, 0.025, 0.5, 0.975, 0.9975] {
                let x: f64 = beta_quantile(a, b, p).unwrap();
                assert!(x > 0.0 && x < 1.0);
                let back = beta_cdf(x, a, b).unwrap();
                assert!(
                    (back - p).abs() < 1e-12 * (1.0 + 1.0 / p),
                    "a={a} b={b} p={p} back={back}"
                );
                let mirror = beta_quantile(b, a, 1.0 - p).unwrap();
                assert!((x - (1.0 - mirror)).abs() < 1e-10, "a={a} b={b} p={p}");
            }
        }
    }

    #[test]
    fn invalid_inputs() {
        assert!(beta_quantile(0.0f64, 1.0, 0.5).is_err());
        assert!(beta_quantile(1.0f64, 1.0, 1.0).is_err());
        assert!(beta_cdf(0.5f64, -1.0, 1.0).is_err());
    }

    #[test]
    fn fast_cdf_agrees() {
        for i in -400..=400 {
            let x = f64::from(i) * 0.025;
            let (a, b) = (normal_cdf_fast(x), normal_cdf(x));
            assert!((a - b).abs() <= 1e-14 + 1e-12 * b, "x={x}");
        }
    }

    #[test]
    fn works_in_f32() {
        let q = beta_quantile(2.0f32, 5.0, 0.3).unwrap();
        assert!((beta_cdf(q, 2.0, 5.0).unwrap() - 0.3).abs() < 1e-5);
        assert!((normal_quantile(0.975f32).unwrap() - 1.959_964).abs() < 1e-4);
    }
}
