//! Slow reference implementations used to validate the fast paths.
//!
//! Everything here is built from different primitives than the code it
//! checks: the Gaussian tail comes from adaptive quadrature instead of
//! `erfc`, inverses come from bisection instead of Newton, and the
//! Student-t quantile comes from the incomplete beta continued
//! fraction. Only tests and dependent test suites should call these;
//! they are orders of magnitude slower than the production routines.

use crate::terrain::TerrainModel;

/// max of |u| exp(-u^2/2), attained at u = 1.
const INV_SQRT_E: f64 = 0.6065306597126334;
const SQRT_2PI: f64 = 2.5066282746310002;

fn normal_pdf(t: f64) -> f64 {
    libm::exp(-0.5 * t * t) / SQRT_2PI
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

fn adaptive_simpson(
    f: &impl Fn(f64) -> f64,
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
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        adaptive_simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + adaptive_simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
}

/// Gaussian tail probability by adaptive Simpson quadrature of the
/// density; shares nothing with the `erfc`-based production version.
pub fn q_quadrature(x: f64) -> f64 {
    if x < 0.0 {
        return 1.0 - q_quadrature(-x);
    }
    // the integrand below 1e-350 contributes nothing representable
    let hi = 40.0;
    if x >= hi {
        return 0.0;
    }
    let f = normal_pdf;
    let fa = f(x);
    let fb = f(hi);
    let m = 0.5 * (x + hi);
    let fm = f(m);
    let whole = simpson(x, hi, fa, fm, fb);
    adaptive_simpson(&f, x, hi, fa, fm, fb, whole, 1e-16, 60)
}

/// Gaussian tail inverse by bisection over [`q_quadrature`].
pub fn q_inv_bisect(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0);
    let mut lo = -40.0;
    let mut hi = 40.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if q_quadrature(mid) > p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 * (1.0 + lo.abs()) {
            break;
        }
    }
    0.5 * (lo + hi)
}

fn ln_gamma(x: f64) -> f64 {
    libm::lgamma_r(x).0
}

/// Continued fraction for the regularized incomplete beta (Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const FPMIN: f64 = 1e-300;
    const EPS: f64 = 1e-16;
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
    for m in 1..=300 {
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
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta function I_x(a, b).
pub fn incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let front = libm::exp(
        ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b)
            + a * libm::log(x)
            + b * libm::log(1.0 - x),
    );
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Student-t distribution function with `df` degrees of freedom.
pub fn student_t_cdf(df: f64, t: f64) -> f64 {
    let tail = 0.5 * incomplete_beta(0.5 * df, 0.5, df / (df + t * t));
    if t >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Student-t quantile by bisection over [`student_t_cdf`].
pub fn student_t_quantile(df: f64, p: f64) -> f64 {
    debug_assert!(df > 0.0 && p > 0.0 && p < 1.0);
    if p == 0.5 {
        return 0.0;
    }
    if p < 0.5 {
        return -student_t_quantile(df, 1.0 - p);
    }
    let mut hi = 1.0;
    while student_t_cdf(df, hi) < p && hi < 1e12 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if student_t_cdf(df, mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 * (1.0 + lo) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Upper bound on the gradient magnitude of a terrain model's surface.
/// Each component's contribution peaks at one sigma from its center
/// with magnitude |h| e^{-1/2} / min(sigma_x, sigma_y); the sum bounds
/// the mixture. Useful for certifying clearance margins of sampled
/// line-of-sight paths.
pub fn gradient_bound(model: &TerrainModel) -> f64 {
    model
        .components
        .iter()
        .map(|c| c.height.abs() * INV_SQRT_E / c.sigma_x.min(c.sigma_y))
        .sum()
}
