//! Special functions backing the copula machinery.
//!
//! Everything here is evaluated in `f64` regardless of the crate's scalar
//! parameter: the copula axioms are checked at 1e-9 and `f32` cannot carry
//! that. All routines are built from series / continued fractions with
//! explicitly derivable coefficients rather than opaque constant tables.

use std::f64::consts::{FRAC_1_SQRT_2, PI, TAU};

const SQRT_PI: f64 = 1.772_453_850_905_516;

/// Error function. Power series below `|x| < 2`, Laplace continued fraction
/// for the complement above.
pub fn erf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    let ax = x.abs();
    if ax < 2.0 {
        erf_series(x)
    } else {
        let tail = erfc_cf(ax);
        if x > 0.0 {
            1.0 - tail
        } else {
            tail - 1.0
        }
    }
}

/// Complementary error function, accurate in the far tail.
pub fn erfc(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x >= 2.0 {
        erfc_cf(x)
    } else if x <= -2.0 {
        2.0 - erfc_cf(-x)
    } else {
        1.0 - erf_series(x)
    }
}

/// erf via its Maclaurin series; adequate for `|x| < 2`.
fn erf_series(x: f64) -> f64 {
    let x2 = x * x;
    let mut coeff = x; // (-x^2)^n * x / n!
    let mut sum = x;
    for n in 1..200 {
        coeff *= -x2 / n as f64;
        let term = coeff / (2 * n + 1) as f64;
        sum += term;
        if term.abs() < sum.abs() * 1e-18 {
            break;
        }
    }
    2.0 / SQRT_PI * sum
}

/// erfc for `x >= 2` via the Laplace continued fraction
/// `sqrt(pi) e^{x^2} erfc(x) = 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))`
/// evaluated with the modified Lentz scheme.
fn erfc_cf(x: f64) -> f64 {
    const FPMIN: f64 = 1e-300;
    let mut c = f64::INFINITY;
    let mut d = x;
    let mut h = 1.0 / x;
    for k in 1..300 {
        let a = k as f64 / 2.0;
        d = x + a / d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = x + a / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        let delta = c / d;
        h *= delta;
        if (delta - 1.0).abs() < 1e-17 {
            break;
        }
    }
    (-x * x).exp() / SQRT_PI * h
}

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal density.
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / TAU.sqrt()
}

/// Standard normal quantile: bracketed Newton on [`norm_cdf`], so it is
/// consistent with the CDF to near machine precision.
pub fn norm_quantile(p: f64) -> f64 {
    assert!((0.0..=1.0).contains(&p), "probability out of range: {p}");
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    let (mut lo, mut hi) = (-40.0f64, 40.0f64);
    // Crude logistic start keeps Newton in its quadratic regime.
    let mut x = 0.625 * (p / (1.0 - p)).ln();
    for _ in 0..100 {
        let f = norm_cdf(x) - p;
        if f > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let step = f / norm_pdf(x).max(1e-300);
        let mut next = x - step;
        if !(lo..=hi).contains(&next) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-15 * (1.0 + x.abs()) {
            return next;
        }
        x = next;
    }
    x
}

/// Natural log of the gamma function: Stirling series after lifting the
/// argument above 10 with the recursion `ln G(x) = ln G(x+1) - ln x`.
pub fn ln_gamma(x: f64) -> f64 {
    assert!(x > 0.0, "ln_gamma needs a positive argument, got {x}");
    let mut shift = 0.0;
    let mut z = x;
    while z < 10.0 {
        shift -= z.ln();
        z += 1.0;
    }
    let inv = 1.0 / z;
    let inv2 = inv * inv;
    // Bernoulli coefficients B_{2n} / (2n (2n-1)).
    let series = inv
        * (1.0 / 12.0
            + inv2
                * (-1.0 / 360.0
                    + inv2
                        * (1.0 / 1260.0
                            + inv2
                                * (-1.0 / 1680.0
                                    + inv2
                                        * (1.0 / 1188.0
                                            + inv2
                                                * (-691.0 / 360_360.0
                                                    + inv2 * (1.0 / 156.0)))))));
    shift + (z - 0.5) * z.ln() - z + 0.5 * TAU.ln() + series
}

/// Regularized incomplete beta function `I_x(a, b)` via the standard
/// continued fraction with the symmetry swap at `x = (a+1)/(a+b+2)`.
pub fn reg_inc_beta(a: f64, b: f64, x: f64) -> f64 {
    assert!(a > 0.0 && b > 0.0, "shape parameters must be positive");
    assert!((0.0..=1.0).contains(&x), "x out of range: {x}");
    if x == 0.0 {
        return 0.0;
    }
    if x == 1.0 {
        return 1.0;
    }
    let ln_front = a * x.ln() + b * (1.0 - x).ln() - ln_gamma(a) - ln_gamma(b) + ln_gamma(a + b);
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_cf(a, b, x) / a
    } else {
        1.0 - ln_front.exp() * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Lentz evaluation of the incomplete beta continued fraction.
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const FPMIN: f64 = 1e-300;
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
    for m in 1..400 {
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
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, computed by Newton
/// iteration on the Legendre recurrence (no constant tables).
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 2);
    let mut out = vec![(0.0, 0.0); n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let step = p / d;
            x -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out[i] = (-x, w);
        out[n - 1 - i] = (x, w);
    }
    out
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Bivariate standard normal CDF `P(X <= h, Y <= k)` with correlation `rho`.
///
/// Uses the single-integral representation
/// `Phi(h) Phi(k) + (1/2pi) \int_0^{asin rho} exp(-(h^2 - 2 h k sin t + k^2)
/// / (2 cos^2 t)) dt`, integrated with Gauss-Legendre panels that refine
/// geometrically toward the endpoint when `|rho|` is close to 1 (the
/// integrand develops a boundary layer there).
pub fn bvn_cdf(h: f64, k: f64, rho: f64) -> f64 {
    assert!((-1.0..=1.0).contains(&rho), "correlation out of range: {rho}");
    if h.is_infinite() || k.is_infinite() || h.abs() >= 40.0 || k.abs() >= 40.0 {
        if h <= -40.0 || k <= -40.0 {
            return 0.0;
        }
        if h >= 40.0 {
            return norm_cdf(k);
        }
        return norm_cdf(h);
    }
    if rho == 1.0 {
        return norm_cdf(h.min(k));
    }
    if rho == -1.0 {
        return (norm_cdf(h) + norm_cdf(k) - 1.0).max(0.0);
    }
    let phi = rho.asin();
    let gl = gauss_legendre(24);
    let mut integral = 0.0;
    let panel = |a: f64, b: f64| {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = 0.0;
        for &(node, weight) in &gl {
            let t = mid + half * node;
            let cos_t = t.cos();
            let arg = -(h * h - 2.0 * h * k * t.sin() + k * k) / (2.0 * cos_t * cos_t);
            acc += weight * arg.exp();
        }
        acc * half
    };
    let edge = 1.3f64.min(phi.abs());
    let head = edge.copysign(phi);
    for j in 0..3 {
        let a = head * j as f64 / 3.0;
        let b = head * (j + 1) as f64 / 3.0;
        integral += panel(a, b);
    }
    if phi.abs() > edge {
        // Geometric refinement toward the endpoint.
        let mut a = head;
        let remaining = phi - head;
        let mut frac = 1.0;
        while frac > 1e-18 {
            frac *= 0.5;
            let b = phi - remaining * frac;
            integral += panel(a, b);
            a = b;
        }
        integral += panel(a, phi);
    }
    (norm_cdf(h) * norm_cdf(k) + integral / TAU).clamp(0.0, 1.0)
}

/// Multivariate standard normal CDF with covariance factor `chol` (lower
/// Cholesky of the correlation matrix), evaluated by quasi-Monte Carlo with
/// the sequential-conditioning transform. Absolute accuracy is about 1e-5
/// for moderate dimension; documented as 1e-4.
pub fn mvn_cdf_qmc(upper: &[f64], chol: &[Vec<f64>], points: usize) -> f64 {
    let d = upper.len();
    assert!(d >= 1 && chol.len() == d);
    if d == 1 {
        return norm_cdf(upper[0] / chol[0][0]);
    }
    // Richtmyer lattice: w_k[j] = frac((k + 1) sqrt(p_j)).
    let primes = first_primes(d - 1);
    let roots: Vec<f64> = primes.iter().map(|&p| (p as f64).sqrt()).collect();
    let mut total = 0.0;
    let mut y = vec![0.0f64; d];
    for kpt in 0..points {
        let mut weight = norm_cdf(upper[0] / chol[0][0]);
        let mut prev = weight;
        for i in 1..d {
            let w = ((kpt + 1) as f64 * roots[i - 1]).fract();
            let u = (w * prev).clamp(1e-300, 1.0 - 1e-16);
            y[i - 1] = norm_quantile(u);
            let mut shift = 0.0;
            for j in 0..i {
                shift += chol[i][j] * y[j];
            }
            prev = norm_cdf((upper[i] - shift) / chol[i][i]);
            weight *= prev;
        }
        total += weight;
    }
    (total / points as f64).clamp(0.0, 1.0)
}

fn first_primes(n: usize) -> Vec<u64> {
    let mut primes = Vec::with_capacity(n);
    let mut candidate = 2u64;
    while primes.len() < n {
        if primes.iter().all(|&p| !candidate.is_multiple_of(p)) {
            primes.push(candidate);
        }
        candidate += 1;
    }
    primes
}
