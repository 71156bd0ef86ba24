//! Quadrature oracle for the probability kernel: the t and F tail areas and
//! the incomplete beta are checked against adaptive Simpson integration of
//! the corresponding densities. The oracle shares no code with the
//! continued-fraction implementation (it has its own Lanczos log-gamma).

use effsize_core::regression::{coefficient_intervals, fit_ols};
use effsize_core::special::{f_sf, regularized_incomplete_beta, t_cdf, t_quantile};
use effsize_core::{dataio::Design, linalg::Matrix};

/// Lanczos (g = 7, 9 terms) log-gamma, independent of the crate's
/// Stirling-based implementation.
fn lanczos_ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    assert!(x > 0.0);
    let z = x - 1.0;
    let mut a = COEFFS[0];
    for (i, &c) in COEFFS.iter().enumerate().skip(1) {
        a += c / (z + i as f64);
    }
    let t = z + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (z + 0.5) * t.ln() - t + a.ln()
}

fn simpson(fa: f64, fm: f64, fb: f64, h: f64) -> f64 {
    h / 6.0 * (fa + 4.0 * fm + fb)
}

fn adaptive_step(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(fa, flm, fm, m - a);
    let right = simpson(fm, frm, fb, b - m);
    let delta = left + right - whole;
    // The relative floor stops the recursion once delta is dominated by the
    // integrand's own evaluation noise rather than Simpson error.
    if depth == 0
        || delta.abs() <= 15.0 * tol
        || delta.abs() <= 1e-11 * (left.abs() + right.abs())
    {
        left + right + delta / 15.0
    } else {
        adaptive_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + adaptive_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
}

fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = simpson(fa, fm, fb, b - a);
    adaptive_step(f, a, b, fa, fm, fb, whole, tol, 60)
}

fn beta_pdf(x: f64, a: f64, b: f64) -> f64 {
    // Endpoint guards keep 0 * ln(0) from poisoning the recursion; the
    // test grid stays at a, b > 1 where the density vanishes there.
    assert!(a > 1.0 && b > 1.0);
    if x == 0.0 || x == 1.0 {
        return 0.0;
    }
    let ln_b = lanczos_ln_gamma(a) + lanczos_ln_gamma(b) - lanczos_ln_gamma(a + b);
    ((a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln() - ln_b).exp()
}

fn t_pdf(t: f64, df: f64) -> f64 {
    let half = 0.5 * (df + 1.0);
    (lanczos_ln_gamma(half)
        - lanczos_ln_gamma(0.5 * df)
        - 0.5 * (df * std::f64::consts::PI).ln()
        - half * (1.0 + t * t / df).ln())
    .exp()
}

fn f_pdf(x: f64, d1: f64, d2: f64) -> f64 {
    assert!(d1 >= 2.0, "grid avoids the d1 < 2 endpoint singularity");
    if x == 0.0 {
        // Limit at zero: 1 for d1 = 2, otherwise 0.
        return if d1 == 2.0 { 1.0 } else { 0.0 };
    }
    let ln_b = lanczos_ln_gamma(0.5 * d1) + lanczos_ln_gamma(0.5 * d2)
        - lanczos_ln_gamma(0.5 * (d1 + d2));
    (0.5 * d1 * (d1 / d2).ln() + (0.5 * d1 - 1.0) * x.ln()
        - 0.5 * (d1 + d2) * (1.0 + d1 * x / d2).ln()
        - ln_b)
        .exp()
}

fn t_cdf_quadrature(t: f64, df: f64) -> f64 {
    let sign = t.signum();
    let tail = integrate(&|u| t_pdf(u, df), 0.0, t.abs(), 1e-13);
    0.5 + sign * tail
}

fn f_sf_quadrature(f: f64, d1: f64, d2: f64) -> f64 {
    1.0 - integrate(&|u| f_pdf(u, d1, d2), 0.0, f, 1e-13)
}

#[test]
fn incomplete_beta_matches_quadrature() {
    // Includes the (2, 5) point at x = 0.3, resolved to <= 1e-10.
    let cases = [
        (0.3, 2.0, 5.0),
        (0.1, 1.5, 3.0),
        (0.5, 2.5, 2.5),
        (0.75, 4.0, 1.5),
        (0.9, 6.0, 3.0),
        (0.2, 10.0, 30.0),
        (0.65, 22.0, 14.0),
    ];
    for &(x, a, b) in &cases {
        let got = regularized_incomplete_beta(x, a, b).unwrap();
        let want = integrate(&|u| beta_pdf(u, a, b), 0.0, x, 1e-14);
        assert!(
            (got - want).abs() < 1e-10,
            "I_{x}({a},{b}) = {got}, quadrature {want}"
        );
    }
}

#[test]
fn incomplete_beta_matches_quadrature_at_large_shape() {
    // Sharp peak near the mode; exercises the large-argument prefactor.
    for &(x, a, b) in &[(0.5, 1e4, 1e4), (0.25, 2500.0, 7500.0), (0.251, 2500.0, 7500.0)] {
        let got = regularized_incomplete_beta(x, a, b).unwrap();
        let lo = (a / (a + b) - 30.0 * (0.25 / (a + b)).sqrt()).max(0.0);
        assert!(x > lo, "test point below integration window");
        let want = integrate(&|u| beta_pdf(u, a, b), lo, x, 2e-13);
        assert!(
            (got - want).abs() < 5e-12,
            "I_{x}({a},{b}) = {got:e}, quadrature {want:e}, diff {:e}",
            (got - want).abs()
        );
    }
}

#[test]
fn t_cdf_matches_quadrature_grid() {
    let statistics = [0.31, 1.0, 1.96, 2.8, 4.5];
    let dfs = [1.0, 2.0, 5.0, 12.0, 37.0, 120.0];
    for &t in &statistics {
        for &df in &dfs {
            let got = t_cdf(t, df).unwrap();
            let want = t_cdf_quadrature(t, df);
            assert!(
                (got - want).abs() < 1e-10,
                "t_cdf({t}, {df}) = {got}, quadrature {want}"
            );
            let neg = t_cdf(-t, df).unwrap();
            assert!((neg - (1.0 - want)).abs() < 1e-10);
        }
    }
}

#[test]
fn f_sf_matches_quadrature_grid() {
    let statistics = [0.2, 1.0, 2.5, 4.0, 7.5];
    let d1s = [2.0, 3.0, 6.0];
    let d2s = [4.0, 10.0, 96.0];
    for &f in &statistics {
        for &d1 in &d1s {
            for &d2 in &d2s {
                let got = f_sf(f, d1, d2).unwrap();
                let want = f_sf_quadrature(f, d1, d2);
                assert!(
                    (got - want).abs() < 1e-10,
                    "f_sf({f}, {d1}, {d2}) = {got}, quadrature {want}"
                );
            }
        }
    }
}

/// Bisection on t_cdf: the independent route to the t quantile.
fn t_quantile_bisect(p: f64, df: f64) -> f64 {
    let (mut lo, mut hi) = (-1e6, 1e6);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if t_cdf(mid, df).unwrap() < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn quantile_agrees_with_bisection_oracle() {
    for &df in &[3.0, 4.0, 10.0, 50.0] {
        for &p in &[0.6, 0.9, 0.975, 0.995] {
            let got = t_quantile(p, df).unwrap();
            let want = t_quantile_bisect(p, df);
            assert!(
                (got - want).abs() < 1e-8,
                "quantile({p}, {df}) = {got}, bisection {want}"
            );
        }
    }
}

#[test]
fn interval_endpoints_match_bisection_oracle() {
    // 6x2 fixture; endpoints recomputed with the bisection quantile.
    let x: Vec<f64> = (1..=6).map(|v| v as f64).collect();
    let y = [1.1, 1.9, 3.2, 3.9, 5.1, 5.8];
    let design = Design {
        names: vec!["intercept".into(), "x".into()],
        matrix: Matrix::from_columns(&[vec![1.0; 6], x]),
    };
    let fit = fit_ols(&design, &y).unwrap();
    let level = 0.95;
    let got = coefficient_intervals(&fit, level).unwrap();
    let t_star = t_quantile_bisect(0.5 * (1.0 + level), fit.df_residual as f64);
    for (iv, (&beta, &se)) in got
        .iter()
        .zip(fit.coefficients.iter().zip(&fit.std_errors))
    {
        assert!((iv.low - (beta - t_star * se)).abs() < 1e-8, "{iv:?}");
        assert!((iv.high - (beta + t_star * se)).abs() < 1e-8, "{iv:?}");
    }
}

#[test]
fn quantile_round_trip_tight() {
    for &df in &[2.0, 7.0, 31.0, 200.0] {
        for i in 1..20 {
            let p = i as f64 / 20.0;
            let t = t_quantile(p, df).unwrap();
            assert!((t_cdf(t, df).unwrap() - p).abs() < 1e-9);
        }
    }
}
