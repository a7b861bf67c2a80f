//! Small numerical kernels: root bracketing, double-exponential quadrature
//! and a compensated (double-double) accumulator.

/// Bisection on a sign change of `f` in `[lo, hi]`. `f(lo) <= 0 < f(hi)` is
/// assumed; stops when `hi - lo <= rel_tol * max(|hi|, tiny)`.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, rel_tol: f64) -> f64 {
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= rel_tol * hi.abs().max(1e-300) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Tanh-sinh quadrature of `f` over the open interval `(0, 1)`.
///
/// `f` receives `(x, 1 - x)` with both computed to full relative precision.
/// Integrable endpoint singularities are handled by the double-exponential
/// change of variables; `f` is never evaluated at 0 or 1. Levels are refined
/// until two successive estimates agree to `abs_tol` (or 12 levels).
pub fn integrate_unit(f: impl Fn(f64, f64) -> f64, abs_tol: f64) -> f64 {
    // x = (1 + tanh(pi/2 sinh t)) / 2 ; the complement 1 - x is computed
    // directly to keep precision near x = 1.
    let half_pi = std::f64::consts::FRAC_PI_2;
    let node = |t: f64| -> Option<(f64, f64, f64)> {
        let u = half_pi * t.sinh();
        let cu = u.cosh();
        let e = (-2.0 * u.abs()).exp();
        // (1 - tanh|u|)/2 = e/(1+e)
        let small = e / (1.0 + e);
        let (x, one_minus_x) = if u >= 0.0 { (1.0 - small, small) } else { (small, 1.0 - small) };
        let w = 0.5 * half_pi * t.cosh() / (cu * cu);
        if x <= 0.0 || one_minus_x <= 0.0 || !w.is_finite() {
            None
        } else {
            Some((x, one_minus_x, w))
        }
    };
    let eval = |t: f64| -> f64 {
        match node(t) {
            Some((x, xc, w)) if w > 0.0 => {
                let v = f(x, xc) * w;
                if v.is_finite() { v } else { 0.0 }
            }
            _ => 0.0,
        }
    };
    let t_max = 6.5;
    let mut h = 0.5;
    let mut sum = eval(0.0);
    let mut k = 1;
    while (k as f64) * h <= t_max {
        let t = k as f64 * h;
        sum += eval(t) + eval(-t);
        k += 1;
    }
    let mut estimate = sum * h;
    for _ in 0..12 {
        h *= 0.5;
        let mut k = 1;
        while (k as f64) * h <= t_max {
            let t = k as f64 * h;
            sum += eval(t) + eval(-t);
            k += 2;
        }
        let next = sum * h;
        if (next - estimate).abs() <= abs_tol {
            return next;
        }
        estimate = next;
    }
    estimate
}

/// Error-free double-double number (`hi + lo`), enough to evaluate
/// telescoping identities without cancellation noise.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DoubleDouble {
    pub hi: f64,
    pub lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl DoubleDouble {
    pub fn from_f64(x: f64) -> Self {
        Self { hi: x, lo: 0.0 }
    }

    pub fn mul_f64(self, b: f64) -> Self {
        let (p, e) = two_prod(self.hi, b);
        let e = e + self.lo * b;
        let (hi, lo) = two_sum(p, e);
        Self { hi, lo }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }
}

impl std::ops::Add for DoubleDouble {
    type Output = Self;

    fn add(self, other: Self) -> Self {
        let (s, e) = two_sum(self.hi, other.hi);
        let e = e + self.lo + other.lo;
        let (hi, lo) = two_sum(s, e);
        Self { hi, lo }
    }
}

impl std::ops::Sub for DoubleDouble {
    type Output = Self;

    fn sub(self, other: Self) -> Self {
        self + Self { hi: -other.hi, lo: -other.lo }
    }
}

impl std::ops::Mul for DoubleDouble {
    type Output = Self;

    fn mul(self, other: Self) -> Self {
        let (p, e) = two_prod(self.hi, other.hi);
        let e = e + self.hi * other.lo + self.lo * other.hi;
        let (hi, lo) = two_sum(p, e);
        Self { hi, lo }
    }
}
