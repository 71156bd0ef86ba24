//! Probability kernel: regularized incomplete beta and the t / F tail areas
//! built on it. Everything here reduces to `regularized_incomplete_beta`,
//! evaluated by a modified-Lentz continued fraction with the usual symmetry
//! switch at `x > (a + 1) / (a + b + 2)`.

use crate::error::{Error, Result};

const CF_MAX_ITER: usize = 500;
const CF_EPS: f64 = 1e-16;
const CF_TINY: f64 = 1e-300;

/// Stirling-series correction `delta(z) = ln Gamma(z) - [(z - 1/2) ln z - z
/// + ln sqrt(2 pi)]`, valid to ~1e-16 for `z >= 10`.
fn stirling_delta(z: f64) -> f64 {
    debug_assert!(z >= 10.0);
    let r = 1.0 / z;
    let r2 = r * r;
    r * (1.0 / 12.0
        + r2 * (-1.0 / 360.0
            + r2 * (1.0 / 1260.0
                + r2 * (-1.0 / 1680.0
                    + r2 * (1.0 / 1188.0
                        + r2 * (-691.0 / 360_360.0 + r2 * (1.0 / 156.0)))))))
}

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    assert!(x > 0.0 && x.is_finite(), "ln_gamma domain: x > 0");
    const HALF_LN_TAU: f64 = 0.918_938_533_204_672_74; // ln(2 pi) / 2
    if x >= 10.0 {
        return (x - 0.5) * x.ln() - x + HALF_LN_TAU + stirling_delta(x);
    }
    // Push the argument above 10 and subtract the product of skipped terms.
    let mut shift = 0.0;
    let mut z = x;
    while z < 10.0 {
        shift += z.ln();
        z += 1.0;
    }
    (z - 0.5) * z.ln() - z + HALF_LN_TAU + stirling_delta(z) - shift
}

/// `ln( x^a (1-x)^b / B(a, b) )`, arranged so the dominant terms cancel
/// analytically for large `a`, `b` instead of in floating point.
fn ln_beta_prefactor(x: f64, a: f64, b: f64) -> f64 {
    debug_assert!(x > 0.0 && x < 1.0);
    const HALF_LN_TAU: f64 = 0.918_938_533_204_672_74;
    if a >= 15.0 && b >= 15.0 {
        let s = a + b;
        // ln(x / (a/s)) and ln((1-x) / (b/s)) via ln1p around the mode.
        let u = (x * s - a) / a;
        let v = ((1.0 - x) * s - b) / b;
        let delta = stirling_delta(a) + stirling_delta(b) - stirling_delta(s);
        a * u.ln_1p() + b * v.ln_1p() + 0.5 * ((a * b / s).ln() - 2.0 * HALF_LN_TAU)
            - delta
    } else {
        let ln_b = ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b);
        a * x.ln() + b * (1.0 - x).ln() - ln_b
    }
}

/// Continued fraction for `I_x(a, b)` by the modified Lentz method. Valid
/// (rapidly convergent) for `x <= (a + 1) / (a + b + 2)`.
fn betainc_cf(x: f64, a: f64, b: f64) -> Result<f64> {
    let prefix = (ln_beta_prefactor(x, a, b) - a.ln()).exp();
    if prefix == 0.0 {
        return Ok(0.0);
    }

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;

    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < CF_TINY {
        d = CF_TINY;
    }
    d = 1.0 / d;
    let mut h = d;

    for m in 1..=CF_MAX_ITER {
        let m_f = m as f64;
        let m2 = 2.0 * m_f;

        // Even step
        let aa = m_f * (b - m_f) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        h *= d * c;

        // Odd step
        let aa = -(a + m_f) * (qab + m_f) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;

        if (delta - 1.0).abs() < CF_EPS {
            return Ok(prefix * h);
        }
    }
    Err(Error::Domain(format!(
        "incomplete beta continued fraction did not converge for x={x}, a={a}, b={b}"
    )))
}

/// Regularized incomplete beta function `I_x(a, b)`.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0) || !(b > 0.0) || !a.is_finite() || !b.is_finite() {
        return Err(Error::Domain(format!(
            "incomplete beta requires a > 0 and b > 0, got a={a}, b={b}"
        )));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!(
            "incomplete beta requires 0 <= x <= 1, got x={x}"
        )));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == 1.0 {
        return Ok(1.0);
    }
    if x > (a + 1.0) / (a + b + 2.0) {
        Ok(1.0 - betainc_cf(1.0 - x, b, a)?)
    } else {
        betainc_cf(x, a, b)
    }
}

/// Student-t cumulative distribution function.
pub fn t_cdf(t: f64, df: f64) -> Result<f64> {
    if !(df > 0.0) || !df.is_finite() {
        return Err(Error::Domain(format!("t_cdf requires df > 0, got {df}")));
    }
    if !t.is_finite() {
        return Err(Error::Domain(format!("t_cdf requires finite t, got {t}")));
    }
    if t == 0.0 {
        return Ok(0.5);
    }
    let x = df / (df + t * t);
    let tail = 0.5 * regularized_incomplete_beta(x, 0.5 * df, 0.5)?;
    Ok(if t > 0.0 { 1.0 - tail } else { tail })
}

fn t_pdf(t: f64, df: f64) -> f64 {
    let half = 0.5 * (df + 1.0);
    (ln_gamma(half)
        - ln_gamma(0.5 * df)
        - 0.5 * (df * std::f64::consts::PI).ln()
        - half * (t * t / df).ln_1p())
    .exp()
}

/// Student-t quantile: the `t` with `t_cdf(t, df) = p`. Newton iteration on
/// the CDF with a bisection safeguard.
pub fn t_quantile(p: f64, df: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!(
            "t_quantile requires 0 < p < 1, got {p}"
        )));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    // Solve in the upper half and mirror.
    let target = p.max(1.0 - p);
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    while t_cdf(hi, df)? < target {
        lo = hi;
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::Domain(format!(
                "t_quantile bracket failed for p={p}, df={df}"
            )));
        }
    }
    let mut t = 0.5 * (lo + hi);
    for _ in 0..200 {
        let err = t_cdf(t, df)? - target;
        if err > 0.0 {
            hi = t;
        } else {
            lo = t;
        }
        if err.abs() < 1e-15 {
            break;
        }
        let step = err / t_pdf(t, df);
        let next = t - step;
        t = if next > lo && next < hi {
            next
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo < 1e-14 * (1.0 + hi.abs()) {
            break;
        }
    }
    Ok(if p >= 0.5 { t } else { -t })
}

/// Upper tail probability `P(F' >= f)` of the F distribution.
pub fn f_sf(f: f64, df1: f64, df2: f64) -> Result<f64> {
    if !(df1 > 0.0) || !(df2 > 0.0) || !df1.is_finite() || !df2.is_finite() {
        return Err(Error::Domain(format!(
            "f_sf requires df1 > 0 and df2 > 0, got df1={df1}, df2={df2}"
        )));
    }
    if !(f >= 0.0) || !f.is_finite() {
        return Err(Error::Domain(format!("f_sf requires f >= 0, got {f}")));
    }
    let x = df2 / (df2 + df1 * f);
    regularized_incomplete_beta(x, 0.5 * df2, 0.5 * df1)
}
