//! F distribution via the regularized incomplete beta function, plus a
//! one-sample Kolmogorov-Smirnov test used by the validation suites.

use crate::error::{check_level, Result};

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
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

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // Reflection.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// `log C(n, k)`, exact summation so that `log C(n, n) == 0`.
pub fn ln_choose(n: usize, k: usize) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    let k = k.min(n - k);
    (0..k).map(|i| ((n - i) as f64 / (i + 1) as f64).ln()).sum()
}

/// Continued fraction for the incomplete beta (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn beta_inc(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// CDF of the F distribution with `(d1, d2)` degrees of freedom.
pub fn f_cdf(d1: f64, d2: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x.is_infinite() {
        return 1.0;
    }
    beta_inc(0.5 * d1, 0.5 * d2, d1 * x / (d1 * x + d2))
}

/// Quantile of the F distribution: the `q` with `f_cdf(d1, d2, q) == level`.
pub fn f_quantile(d1: usize, d2: usize, level: f64) -> Result<f64> {
    check_level(level)?;
    let (a, b) = (0.5 * d1 as f64, 0.5 * d2 as f64);
    // Bisection on the beta scale, where the cdf lives on a bounded bracket.
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if beta_inc(a, b, mid) < level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let z = 0.5 * (lo + hi);
    Ok(d2 as f64 * z / (d1 as f64 * (1.0 - z)))
}

/// Kolmogorov-Smirnov statistic of `samples` against a continuous `cdf`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s: Vec<f64> = samples.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i as f64 + 1.0) / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic p-value of a KS statistic `d` from `n` samples (Stephens' correction).
pub fn ks_pvalue(n: usize, d: f64) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..200 {
        let k = k as f64;
        let term = sign * (-2.0 * k * k * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_gamma_known_values() {
        assert!(ln_gamma(1.0).abs() < 1e-14);
        assert!(ln_gamma(2.0).abs() < 1e-14);
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() < 1e-13);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-13);
    }

    #[test]
    fn ln_choose_values() {
        assert_eq!(ln_choose(10, 10), 0.0);
        assert_eq!(ln_choose(10, 0), 0.0);
        assert!((ln_choose(10, 3) - 120f64.ln()).abs() < 1e-12);
        assert!((ln_choose(1000, 2) - 499_500f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn beta_inc_symmetry_and_closed_forms() {
        // I_x(1, 1) = x; I_x(a, 1) = x^a.
        assert!((beta_inc(1.0, 1.0, 0.3) - 0.3).abs() < 1e-14);
        assert!((beta_inc(2.5, 1.0, 0.4) - 0.4f64.powf(2.5)).abs() < 1e-13);
        let v = beta_inc(3.0, 7.5, 0.2);
        assert!((v - (1.0 - beta_inc(7.5, 3.0, 0.8))).abs() < 1e-13);
    }

    #[test]
    fn f_quantile_lower_limit_and_errors() {
        assert!(f_quantile(3, 20, 1e-12).unwrap() < 1e-3);
        assert!(f_quantile(3, 20, 0.0).is_err());
        assert!(f_quantile(3, 20, 1.0).is_err());
    }

    #[test]
    fn f_quantile_monotone_in_level() {
        let mut prev = 0.0;
        for k in 1..100 {
            let q = f_quantile(4, 30, k as f64 / 100.0).unwrap();
            assert!(q > prev);
            prev = q;
        }
    }

    #[test]
    fn quantile_and_cdf_are_inverse() {
        for &d1 in &[1usize, 2, 3, 5, 12, 40] {
            for &d2 in &[1usize, 4, 10, 37, 100, 995] {
                for &lv in &[0.01, 0.1, 0.5, 0.9, 0.95, 0.975, 0.999] {
                    let q = f_quantile(d1, d2, lv).unwrap();
                    let back = f_cdf(d1 as f64, d2 as f64, q);
                    assert!((back - lv).abs() < 1e-8, "d1={d1} d2={d2} level={lv}: {back}");
                }
            }
        }
    }

    #[test]
    fn ks_pvalue_behaviour() {
        assert!(ks_pvalue(100, 0.0) > 0.999);
        // Critical value at 5% for large n is ~1.358 / sqrt(n).
        let p = ks_pvalue(10_000, 1.358 / 100.0);
        assert!((p - 0.05).abs() < 0.005, "{p}");
        let uniform: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        assert!(ks_statistic(&uniform, |x| x) <= 0.0005 + 1e-12);
    }
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, m: usize) -> f64 {
        let h = (b - a) / m as f64;
        let mut s = f(a) + f(b);
        for k in 1..m {
            s += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn f_quantile_matches_integrated_density() {
        // P(F(1, 10) <= q) = P(|T_10| <= sqrt q), integrated from the t density.
        let q = f_quantile(1, 10, 0.95).unwrap();
        let nu = 10.0f64;
        let c = (ln_gamma((nu + 1.0) / 2.0) - ln_gamma(nu / 2.0)).exp() / (nu * std::f64::consts::PI).sqrt();
        let t_pdf = |t: f64| c * (1.0 + t * t / nu).powf(-(nu + 1.0) / 2.0);
        let mass = 2.0 * simpson(t_pdf, 0.0, q.sqrt(), 20_000);
        assert!((mass - 0.95).abs() < 1e-9, "{mass}");
        assert!((q - 4.964602743).abs() < 1e-6);

        // F(3, 37) density, finite at the origin.
        let (d1, d2) = (3.0f64, 37.0f64);
        let q = f_quantile(3, 37, 0.95).unwrap();
        let ln_b = ln_gamma(d1 / 2.0) + ln_gamma(d2 / 2.0) - ln_gamma((d1 + d2) / 2.0);
        let f_pdf = |x: f64| {
            if x == 0.0 {
                return 0.0;
            }
            ((d1 / 2.0) * (d1 / d2).ln() + (d1 / 2.0 - 1.0) * x.ln() - ((d1 + d2) / 2.0) * (1.0 + d1 * x / d2).ln() - ln_b).exp()
        };
        let mass = simpson(f_pdf, 0.0, q, 200_000);
        assert!((mass - 0.95).abs() < 1e-6, "{mass}");
    }

    #[test]
    fn f_with_one_numerator_df_is_squared_t() {
        // two-sided 95% t quantiles
        for (nu, t) in [(10usize, 2.228138851986274), (24, 2.063898561628021), (37, 2.026192463029109)] {
            let q = f_quantile(1, nu, 0.95).unwrap();
            assert!((q - t * t).abs() < 1e-8 * q, "nu = {nu}: {q} vs {}", t * t);
        }
    }
}
