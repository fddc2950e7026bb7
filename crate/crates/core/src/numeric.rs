//! Special functions shared by the interval and test modules: log-gamma,
//! regularized incomplete gamma/beta, the normal distribution and its
//! quantile, beta quantiles and Student-t tails.

use std::f64::consts::{PI, SQRT_2};

const EPS: f64 = 1e-16;
const FPMIN: f64 = 1e-300;
const MAX_ITER: usize = 10_000;

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
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// `ln C(n, k)`.
pub fn ln_choose(n: u64, k: u64) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

fn guard(v: f64) -> f64 {
    if v.abs() < FPMIN {
        FPMIN
    } else {
        v
    }
}

fn inc_gamma_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut del = 1.0 / a;
    let mut sum = del;
    for _ in 0..MAX_ITER {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del.abs() < sum.abs() * EPS {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

fn inc_gamma_cont_frac(a: f64, x: f64) -> f64 {
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / FPMIN;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = 1.0 / guard(an * d + b);
        c = guard(b + an / c);
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x < a + 1.0 {
        inc_gamma_series(a, x)
    } else {
        1.0 - inc_gamma_cont_frac(a, x)
    }
}

/// Regularized upper incomplete gamma `Q(a, x) = 1 - P(a, x)`, computed
/// without cancellation in the upper tail.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else if x < a + 1.0 {
        1.0 - inc_gamma_series(a, x)
    } else {
        inc_gamma_cont_frac(a, x)
    }
}

/// Complementary error function.
pub fn erfc(x: f64) -> f64 {
    if x >= 0.0 {
        gamma_q(0.5, x * x)
    } else {
        2.0 - gamma_q(0.5, x * x)
    }
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Standard normal CDF, accurate in both tails.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Upper tail `1 - Phi(x)`.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

/// Inverse standard normal CDF.
///
/// Starts from the Abramowitz-Stegun 26.2.23 rational approximation
/// (|error| < 4.5e-4) and polishes with Halley steps against the exact CDF,
/// which brings the result to ~1e-15.
pub fn normal_quantile(p: f64) -> f64 {
    if p.is_nan() || !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    if p == 0.5 {
        return 0.0;
    }
    // Solve in the lower tail, Phi(y) = q with q <= 0.5, then reflect.
    let q = p.min(1.0 - p);
    let t = (-2.0 * q.ln()).sqrt();
    let num = 2.515_517 + 0.802_853 * t + 0.010_328 * t * t;
    let den = 1.0 + 1.432_788 * t + 0.189_269 * t * t + 0.001_308 * t * t * t;
    let mut y = -(t - num / den);
    for _ in 0..50 {
        let u = (normal_cdf(y) - q) / normal_pdf(y);
        let step = u / (1.0 + 0.5 * y * u);
        y -= step;
        if step.abs() <= 1e-15 * y.abs().max(1.0) {
            break;
        }
    }
    if p < 0.5 {
        y
    } else {
        -y
    }
}

fn beta_cont_frac(a: f64, b: f64, x: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 / guard(1.0 - qab * x / qap);
    let mut h = d;
    for m in 1..MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 / guard(1.0 + aa * d);
        c = guard(1.0 + aa / c);
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 / guard(1.0 + aa * d);
        c = guard(1.0 + aa / c);
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta function `I_x(a, b)`.
pub fn beta_inc(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let front = (ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln()).exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cont_frac(a, b, x) / a
    } else {
        1.0 - front * beta_cont_frac(b, a, 1.0 - x) / b
    }
}

/// Quantile of the Beta(a, b) distribution by bisection on `beta_inc`.
/// The bracket is shrunk until its width is below 1e-14.
pub fn beta_quantile(p: f64, a: f64, b: f64) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while hi - lo > 1e-14 {
        let mid = 0.5 * (lo + hi);
        if beta_inc(a, b, mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Two-sided tail probability `P(|T| >= |t|)` for Student's t with `df`
/// degrees of freedom.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return 0.0;
    }
    beta_inc(0.5 * df, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
}

/// Upper tail of the chi-square distribution with one degree of freedom.
pub fn chi2_1_sf(x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else {
        erfc((0.5 * x).sqrt())
    }
}

/// Two-sided normal p-value for a z statistic.
pub fn normal_two_sided(z: f64) -> f64 {
    (2.0 * normal_sf(z.abs())).min(1.0)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance with the `n - 1` denominator. Needs `xs.len() >= 2`.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use statrs::distribution::{Beta, ContinuousCDF, Normal, StudentsT};

    #[test]
    fn ln_gamma_matches_factorials() {
        let mut fact = 1.0_f64;
        for n in 1..30 {
            fact *= n as f64;
            assert_relative_eq!(ln_gamma(n as f64 + 1.0), fact.ln(), max_relative = 1e-13);
        }
        assert_relative_eq!(ln_gamma(0.5), PI.sqrt().ln(), max_relative = 1e-13);
    }

    #[test]
    fn normal_cdf_against_statrs() {
        let n = Normal::new(0.0, 1.0).unwrap();
        for i in -80..=80 {
            let x = i as f64 * 0.1;
            // statrs itself drifts around 1e-10 in the far tail.
            assert_relative_eq!(normal_cdf(x), n.cdf(x), max_relative = 1e-9);
        }
        // 30-digit reference values.
        let reference = [
            (-8.0, 6.220_960_574_271_784e-16),
            (-5.0, 2.866_515_718_791_939e-7),
            (-4.5, 3.397_673_124_730_060_4e-6),
            (-2.0, 0.022_750_131_948_179_207),
            (-0.5, 0.308_537_538_725_986_9),
            (0.3, 0.617_911_422_188_952_6),
            (1.7, 0.955_434_537_241_457),
            (5.0, 0.999_999_713_348_428_1),
        ];
        for (x, p) in reference {
            assert_relative_eq!(normal_cdf(x), p, max_relative = 1e-13);
        }
    }

    #[test]
    fn quantile_inverts_cdf() {
        for &p in &[1e-12, 1e-6, 0.001, 0.025, 0.1, 0.3, 0.5, 0.7, 0.95, 0.975, 0.999_999] {
            let x = normal_quantile(p);
            assert_relative_eq!(normal_cdf(x), p, max_relative = 1e-12);
        }
        assert_relative_eq!(normal_quantile(0.975), 1.959_963_984_540_054, epsilon = 1e-12);
        assert_relative_eq!(normal_quantile(0.95), 1.644_853_626_951_472_2, epsilon = 1e-12);
    }

    #[test]
    fn beta_inc_against_statrs() {
        for &(a, b) in &[(0.5, 0.5), (1.0, 3.0), (2.5, 7.0), (24.0, 13.0), (300.0, 20.0)] {
            let dist = Beta::new(a, b).unwrap();
            for i in 1..20 {
                let x = i as f64 / 20.0;
                assert_relative_eq!(beta_inc(a, b, x), dist.cdf(x), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn beta_quantile_inverts() {
        for &(p, a, b) in &[(0.025, 23.0, 13.0), (0.975, 24.0, 12.0), (0.5, 1.0, 1.0), (0.025, 1.0, 10.0)] {
            let x = beta_quantile(p, a, b);
            assert!((beta_inc(a, b, x) - p).abs() < 1e-10);
        }
    }

    #[test]
    fn t_tail_against_statrs() {
        for &df in &[1.0, 4.0, 9.0, 14.0, 99.0] {
            let dist = StudentsT::new(0.0, 1.0, df).unwrap();
            for &t in &[0.0, 0.3, 1.0, 2.0, 2.776, 5.0] {
                let expected = 2.0 * (1.0 - dist.cdf(t));
                assert_relative_eq!(student_t_two_sided(t, df), expected, epsilon = 1e-11);
            }
        }
    }

    #[test]
    fn chi2_tail_matches_normal() {
        assert_relative_eq!(chi2_1_sf(3.841_458_820_694_124), 0.05, epsilon = 1e-12);
        assert_eq!(chi2_1_sf(0.0), 1.0);
    }
}
