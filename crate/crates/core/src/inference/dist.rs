//! Special functions behind the test p-values: log-gamma, regularized
//! incomplete beta and gamma, and the t / normal / chi-square CDFs.
//!
//! Hand-rolled so the accuracy budget stays under our control; the tests pin
//! every function against independently computed reference values and the
//! closed forms available at low degrees of freedom.

use std::f64::consts::{PI, SQRT_2};

// Lanczos approximation with g = 7 and 9 coefficients, accurate to ~1e-14
// in relative terms over the positive reals.
const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEFFS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

const MAX_ITER: usize = 400;
const CF_EPS: f64 = 1e-16;
const FPMIN: f64 = 1e-300;

/// Natural log of the gamma function for x > 0.
pub fn ln_gamma(x: f64) -> f64 {
    assert!(x > 0.0, "ln_gamma requires a positive argument, got {x}");
    if x < 0.5 {
        // Reflection keeps the Lanczos series in its accurate range.
        PI.ln() - (PI * x).sin().ln() - ln_gamma(1.0 - x)
    } else {
        let z = x - 1.0;
        let mut sum = LANCZOS_COEFFS[0];
        for (i, &c) in LANCZOS_COEFFS.iter().enumerate().skip(1) {
            sum += c / (z + i as f64);
        }
        let base = z + LANCZOS_G + 0.5;
        0.5 * (2.0 * PI).ln() + (z + 0.5) * base.ln() - base + sum.ln()
    }
}

/// Regularized incomplete beta function I_x(a, b), via the Lentz continued
/// fraction with the usual symmetry switch for fast convergence.
pub fn inc_beta(a: f64, b: f64, x: f64) -> f64 {
    assert!(a > 0.0 && b > 0.0, "inc_beta requires positive shape parameters");
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_beta = ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b);
    let front = (a * x.ln() + b * (1.0 - x).ln() - ln_beta).exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < FPMIN {
        d = FPMIN;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < CF_EPS {
            break;
        }
    }
    h
}

/// Regularized lower incomplete gamma P(a, x).
pub fn inc_gamma_p(a: f64, x: f64) -> f64 {
    assert!(a > 0.0 && x >= 0.0, "inc_gamma requires a > 0 and x >= 0");
    if x == 0.0 {
        0.0
    } else if x < a + 1.0 {
        gamma_series(a, x)
    } else {
        1.0 - gamma_cf(a, x)
    }
}

/// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x).
pub fn inc_gamma_q(a: f64, x: f64) -> f64 {
    assert!(a > 0.0 && x >= 0.0, "inc_gamma requires a > 0 and x >= 0");
    if x == 0.0 {
        1.0
    } else if x < a + 1.0 {
        1.0 - gamma_series(a, x)
    } else {
        gamma_cf(a, x)
    }
}

fn gamma_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut del = 1.0 / a;
    let mut sum = del;
    for _ in 0..MAX_ITER {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del.abs() < sum.abs() * CF_EPS {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

fn gamma_cf(a: f64, x: f64) -> f64 {
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / FPMIN;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..=MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = b + an / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < CF_EPS {
            break;
        }
    }
    h * (-x + a * x.ln() - ln_gamma(a)).exp()
}

/// CDF of Student's t-distribution with `df` degrees of freedom.
/// Absolute error is well below 1e-10 across the real line.
pub fn t_cdf(x: f64, df: f64) -> f64 {
    assert!(df > 0.0, "t_cdf requires df > 0, got {df}");
    if x == 0.0 {
        return 0.5;
    }
    if x.is_infinite() {
        return if x > 0.0 { 1.0 } else { 0.0 };
    }
    let t = df / (df + x * x);
    let tail = 0.5 * inc_beta(0.5 * df, 0.5, t);
    if x > 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Standard normal CDF, via erfc(t) = Q(1/2, t^2).
pub fn normal_cdf(x: f64) -> f64 {
    let t = x / SQRT_2;
    if x >= 0.0 {
        1.0 - 0.5 * inc_gamma_q(0.5, t * t)
    } else {
        0.5 * inc_gamma_q(0.5, t * t)
    }
}

/// Survival function of the chi-square distribution.
pub fn chi_square_sf(x: f64, df: f64) -> f64 {
    assert!(df > 0.0, "chi_square_sf requires df > 0");
    if x <= 0.0 {
        return 1.0;
    }
    inc_gamma_q(0.5 * df, 0.5 * x)
}

/// Two-sided p-value of a t statistic.
pub fn two_sided_t_pvalue(statistic: f64, df: f64) -> f64 {
    (2.0 * (1.0 - t_cdf(statistic.abs(), df))).clamp(0.0, 1.0)
}

/// Two-sided p-value of a standard-normal statistic.
pub fn two_sided_normal_pvalue(statistic: f64) -> f64 {
    (2.0 * (1.0 - normal_cdf(statistic.abs()))).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values computed independently with scipy.stats (v1.15).
    const T_CDF_REFERENCE: &[(f64, f64, f64)] = &[
        (0.0, 1.0, 0.5),
        (1.0, 1.0, 0.7500000000000002),
        (-1.0, 1.0, 0.24999999999999978),
        (0.70711, 2.0, 0.7236076120514168),
        (2.5, 3.0, 0.9561466764959673),
        (-0.75, 5.0, 0.2435121240296545),
        (1.25, 10.0, 0.8801196948723322),
        (3.0, 7.0, 0.9900289369340037),
        (-2.0, 30.0, 0.02731252248149155),
        (0.5, 100.0, 0.6909132170845567),
        (4.2, 2.5, 0.9825178456371593),
        (-3.7, 1.5, 0.05009756576498408),
        (0.001, 8.0, 0.5003866989484553),
        (10.0, 4.0, 0.9997189981886421),
        (-12.0, 6.0, 1.0153703097686606e-5),
    ];

    const NORMAL_CDF_REFERENCE: &[(f64, f64)] = &[
        (0.0, 0.5),
        (0.5, 0.6914624612740131),
        (-0.5, 0.3085375387259869),
        (1.0, 0.8413447460685429),
        (1.96, 0.9750021048517795),
        (-1.96, 0.024997895148220435),
        (3.0, 0.9986501019683699),
        (-4.5, 3.3976731247300535e-6),
        (6.0, 0.9999999990134123),
        (0.70711, 0.7602509389796533),
    ];

    const CHI2_SF_REFERENCE: &[(f64, f64, f64)] = &[
        (3.84, 1.0, 0.05004352124870519),
        (10.0, 5.0, 0.07523524614651217),
        (30.0, 19.0, 0.05179845889302389),
        (5.0, 7.0, 0.6599632296942824),
        (42.3, 25.0, 0.016683038350273807),
    ];

    #[test]
    fn t_cdf_matches_reference_values() {
        for &(x, df, want) in T_CDF_REFERENCE {
            let got = t_cdf(x, df);
            assert!(
                (got - want).abs() <= 1e-12,
                "t_cdf({x}, {df}) = {got}, want {want}"
            );
        }
    }

    #[test]
    fn t_cdf_matches_df1_closed_form() {
        // F(x; 1) = 1/2 + atan(x)/pi
        for i in 0..1000 {
            let x = -40.0 + 80.0 * i as f64 / 999.0;
            let want = 0.5 + x.atan() / PI;
            assert!((t_cdf(x, 1.0) - want).abs() <= 1e-10, "x = {x}");
        }
    }

    #[test]
    fn t_cdf_matches_df2_closed_form() {
        // F(x; 2) = 1/2 + x / (2 sqrt(2 + x^2))
        for i in 0..1000 {
            let x = -40.0 + 80.0 * i as f64 / 999.0;
            let want = 0.5 + x / (2.0 * (2.0 + x * x).sqrt());
            assert!((t_cdf(x, 2.0) - want).abs() <= 1e-10, "x = {x}");
        }
    }

    #[test]
    fn t_cdf_is_monotone_and_symmetric() {
        for df in [0.5, 1.0, 3.0, 17.0, 250.0] {
            let mut last = 0.0;
            for i in 0..200 {
                let x = -8.0 + 16.0 * i as f64 / 199.0;
                let v = t_cdf(x, df);
                assert!(v >= last, "not monotone at x = {x}, df = {df}");
                let sym = t_cdf(-x, df);
                assert!((v + sym - 1.0).abs() < 1e-14, "asymmetric at x = {x}");
                last = v;
            }
        }
    }

    #[test]
    fn t_cdf_approaches_normal_for_large_df() {
        for i in 0..200 {
            let x = -5.0 + 10.0 * i as f64 / 199.0;
            let t = t_cdf(x, 1e6);
            let n = normal_cdf(x);
            assert!((t - n).abs() <= 1e-6, "x = {x}: t = {t}, normal = {n}");
        }
    }

    #[test]
    fn normal_cdf_matches_reference_values() {
        for &(x, want) in NORMAL_CDF_REFERENCE {
            let got = normal_cdf(x);
            assert!(
                (got - want).abs() <= 1e-13,
                "normal_cdf({x}) = {got}, want {want}"
            );
        }
    }

    #[test]
    fn chi_square_sf_matches_reference_values() {
        for &(x, df, want) in CHI2_SF_REFERENCE {
            let got = chi_square_sf(x, df);
            assert!(
                (got - want).abs() <= 1e-12,
                "chi_square_sf({x}, {df}) = {got}, want {want}"
            );
        }
    }

    #[test]
    fn ln_gamma_recurrence_holds() {
        // Gamma(x + 1) = x Gamma(x)
        for x in [0.1, 0.7, 1.3, 4.5, 20.0, 123.4] {
            let lhs = ln_gamma(x + 1.0);
            let rhs = x.ln() + ln_gamma(x);
            assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0), "x = {x}");
        }
        assert!((ln_gamma(5.0) - 24.0f64.ln()).abs() < 1e-13);
    }

    #[test]
    fn two_sided_pvalues_are_clamped_and_symmetric() {
        assert_eq!(two_sided_t_pvalue(0.0, 5.0), 1.0);
        assert_eq!(two_sided_normal_pvalue(0.0), 1.0);
        for stat in [0.3, 1.7, 2.9] {
            assert_eq!(two_sided_t_pvalue(stat, 7.0), two_sided_t_pvalue(-stat, 7.0));
            let p = two_sided_t_pvalue(stat, 7.0);
            assert!(p > 0.0 && p < 1.0);
        }
    }
}
