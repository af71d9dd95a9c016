//! Scalar numerics: Gaussian tail function, its inverse, golden-section
//! line search, and angle wrapping.

#[allow(unused_imports)]
use num_traits::Float;

/// sqrt(2*pi), the Gaussian normalization constant.
const SQRT_2PI: f64 = 2.5066282746310002;

/// Standard normal density.
fn phi(x: f64) -> f64 {
    (-0.5 * x * x).exp() / SQRT_2PI
}

/// Gaussian right-tail probability Q(x) = P(N(0,1) > x), computed as
/// `0.5 * erfc(x / sqrt(2))`.
pub fn q(x: f64) -> f64 {
    0.5 * libm::erfc(x / core::f64::consts::SQRT_2)
}

/// Inverse of [`q`]: returns x with Q(x) = p.
///
/// Newton iteration with a bisection safeguard on the bracket [-40, 40];
/// converges so that Q(x) matches p to about 1e-13 relative. The caller
/// must pass p strictly inside (0, 1); boundary or non-finite values are
/// rejected by the validation layers that sit above this function.
pub fn q_inv(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0, "q_inv needs p in (0,1), got {p}");
    let mut lo = -40.0_f64;
    let mut hi = 40.0_f64;
    let mut x = 0.0_f64;
    for _ in 0..200 {
        let f = q(x) - p;
        if f == 0.0 {
            return x;
        }
        // q is decreasing, so a positive residual means x is left of the root.
        if f > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let d = phi(x);
        let mut next = if d > 0.0 { x + f / d } else { 0.5 * (lo + hi) };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-15 * x.abs().max(1.0) {
            return next;
        }
        x = next;
    }
    x
}

/// Golden-section minimization of `f` on [a, b].
///
/// Runs a fixed number of interval reductions (each shrinks the bracket by
/// the golden ratio, so 60 iterations resolve the minimizer to ~1e-13 of
/// the original width) and returns the best sampled point and its value.
pub fn golden_section_min<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, iters: u32) -> (f64, f64) {
    const INVPHI: f64 = 0.6180339887498949;
    let (mut a, mut b) = (a, b);
    let mut c = b - INVPHI * (b - a);
    let mut d = a + INVPHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..iters {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INVPHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INVPHI * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Wraps an angle to the half-open interval (-pi, pi].
///
/// Values already inside the interval pass through unchanged, which makes
/// the function idempotent bit for bit.
pub fn wrap_angle(theta: f64) -> f64 {
    use core::f64::consts::PI;
    if theta > -PI && theta <= PI {
        return theta;
    }
    let two_pi = 2.0 * PI;
    let mut r = (theta + PI) % two_pi;
    if r <= 0.0 {
        r += two_pi;
    }
    r - PI
}
