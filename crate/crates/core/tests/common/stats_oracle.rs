//! Reference statistics written from textbook formulas, sharing no code with
//! the library: own log-gamma, incomplete beta, t and F distributions, and a
//! general n x k two-way ANOVA.

use choroidseg::volume::Surface;

/// Lanczos approximation (g = 7, n = 9).
pub fn ln_gamma(x: f64) -> f64 {
    const C: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + 7.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Continued fraction for the incomplete beta (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    let tiny = 1e-300;
    let mut c = 1.0;
    let mut d = 1.0 - (a + b) * x / (a + 1.0);
    if d.abs() < tiny {
        d = tiny;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..100_000 {
        let m = m as f64;
        let num = m * (b - m) * x / ((a + 2.0 * m - 1.0) * (a + 2.0 * m));
        d = 1.0 + num * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = 1.0 + num / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        h *= d * c;
        let num = -(a + m) * (a + b + m) * x / ((a + 2.0 * m) * (a + 2.0 * m + 1.0));
        d = 1.0 + num * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = 1.0 + num / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let step = d * c;
        h *= step;
        if (step - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front =
        ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_cf(a, b, x) / a
    } else {
        1.0 - ln_front.exp() * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Two-sided p of a t statistic.
pub fn t_two_sided_p(t: f64, df: f64) -> f64 {
    inc_beta(df / 2.0, 0.5, df / (df + t * t))
}

pub fn f_cdf(x: f64, d1: f64, d2: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    inc_beta(d1 / 2.0, d2 / 2.0, d1 * x / (d1 * x + d2))
}

/// Quantile by bracketing then bisection to the last representable bit.
pub fn f_inv(q: f64, d1: f64, d2: f64) -> f64 {
    let mut hi = 1.0;
    while f_cdf(hi, d1, d2) < q {
        hi *= 4.0;
    }
    let mut lo = 0.0;
    loop {
        let mid = lo + (hi - lo) / 2.0;
        if mid == lo || mid == hi {
            return mid;
        }
        if f_cdf(mid, d1, d2) < q {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Welford running variance, `n - 1` denominator.
pub fn sd(v: &[f64]) -> f64 {
    let (mut m, mut s2) = (0.0, 0.0);
    for (i, &x) in v.iter().enumerate() {
        let d = x - m;
        m += d / (i + 1) as f64;
        s2 += d * (x - m);
    }
    (s2 / (v.len() - 1) as f64).sqrt()
}

pub fn diffs(pairs: &[(f64, f64)]) -> Vec<f64> {
    pairs.iter().map(|p| p.0 - p.1).collect()
}

/// `(t, p)`, or `None` for zero variance.
pub fn paired_t(pairs: &[(f64, f64)]) -> Option<(f64, f64)> {
    let d = diffs(pairs);
    let s = sd(&d);
    if s == 0.0 {
        return None;
    }
    let t = mean(&d) * (d.len() as f64).sqrt() / s;
    Some((t, t_two_sided_p(t, (d.len() - 1) as f64)))
}

/// `(mean difference, lower, upper)`.
pub fn limits_of_agreement(pairs: &[(f64, f64)]) -> (f64, f64, f64) {
    let d = diffs(pairs);
    let (m, s) = (mean(&d), sd(&d));
    (m, m - 1.96 * s, m + 1.96 * s)
}

pub fn repeatability(pairs: &[(f64, f64)]) -> f64 {
    1.96 * sd(&diffs(pairs))
}

pub fn cv_percent(pairs: &[(f64, f64)]) -> f64 {
    let per: Vec<f64> = pairs
        .iter()
        .filter(|p| p.0 + p.1 != 0.0)
        .map(|p| sd(&[p.0, p.1]) / ((p.0 + p.1) / 2.0).abs())
        .collect();
    100.0 * mean(&per)
}

/// `(icc, ci)` for an `n x k` table via total/row/column sums of squares.
pub fn icc_2_1(table: &[Vec<f64>]) -> (f64, Option<(f64, f64)>) {
    let n = table.len() as f64;
    let k = table[0].len() as f64;
    let all: Vec<f64> = table.iter().flatten().copied().collect();
    let g = mean(&all);
    let sst: f64 = all.iter().map(|v| (v - g).powi(2)).sum();
    let ssr: f64 = table.iter().map(|r| k * (mean(r) - g).powi(2)).sum();
    let ssc: f64 = (0..k as usize)
        .map(|j| {
            let col: Vec<f64> = table.iter().map(|r| r[j]).collect();
            n * (mean(&col) - g).powi(2)
        })
        .sum();
    let sse = (sst - ssr - ssc).max(0.0);
    let msr = ssr / (n - 1.0);
    let msc = ssc / (k - 1.0);
    let mse = sse / ((n - 1.0) * (k - 1.0));
    let icc = (msr - mse) / (msr + (k - 1.0) * mse + k / n * (msc - mse));
    if mse <= 0.0 {
        return (icc, None);
    }
    let a = k * icc / (n * (1.0 - icc));
    let b = 1.0 + k * icc * (n - 1.0) / (n * (1.0 - icc));
    let v = (a * msc + b * mse).powi(2)
        / ((a * msc).powi(2) / (k - 1.0) + (b * mse).powi(2) / ((n - 1.0) * (k - 1.0)));
    let f_low = f_inv(0.975, n - 1.0, v);
    let f_up = f_inv(0.975, v, n - 1.0);
    let lower = n * (msr - f_low * mse) / (f_low * (k * msc + (k * n - k - n) * mse) + n * msr);
    let upper = n * (f_up * msr - mse) / (k * msc + (k * n - k - n) * mse + n * f_up * msr);
    (icc, Some((lower, upper)))
}

/// `(mean unsigned, mean signed)` over columns where `keep(x, y)`.
pub fn border(test: &Surface, reference: &Surface, dz: f64, keep: &dyn Fn(usize, usize) -> bool) -> (f64, f64) {
    let (mut u, mut s, mut n) = (0.0, 0.0, 0.0);
    for x in 0..test.nx {
        for y in 0..test.ny {
            if keep(x, y) {
                let e = test.get(x, y) * dz - reference.get(x, y) * dz;
                u += e.abs();
                s += e;
                n += 1.0;
            }
        }
    }
    (u / n, s / n)
}

pub fn thickness(
    test: (&Surface, &Surface),
    reference: (&Surface, &Surface),
    dz: f64,
    keep: &dyn Fn(usize, usize) -> bool,
) -> (f64, f64) {
    let (mut u, mut s, mut n) = (0.0, 0.0, 0.0);
    for x in 0..test.0.nx {
        for y in 0..test.0.ny {
            if keep(x, y) {
                let tt = dz * (test.1.get(x, y) - test.0.get(x, y));
                let tr = dz * (reference.1.get(x, y) - reference.0.get(x, y));
                u += (tt - tr).abs();
                s += tt - tr;
                n += 1.0;
            }
        }
    }
    (u / n, s / n)
}

/// Inclusion-exclusion on per-column intervals.
pub fn dice(a: (&Surface, &Surface), b: (&Surface, &Surface)) -> f64 {
    let (mut inter, mut sum) = (0.0, 0.0);
    for x in 0..a.0.nx {
        for y in 0..a.0.ny {
            let (a0, a1, b0, b1) = (a.0.get(x, y), a.1.get(x, y), b.0.get(x, y), b.1.get(x, y));
            let la = a1 - a0;
            let lb = b1 - b0;
            let hull = a1.max(b1) - a0.min(b0);
            inter += (la + lb - hull).max(0.0);
            sum += la + lb;
        }
    }
    if sum == 0.0 {
        1.0
    } else {
        2.0 * inter / sum
    }
}
