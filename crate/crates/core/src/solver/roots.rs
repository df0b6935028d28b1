//! Closed-form roots of real polynomials up to degree four.

use nalgebra::Complex;

/// Imaginary parts up to `IMAG_TOL·max(1, |re|)` are treated as numerical noise.
pub const IMAG_TOL: f64 = 1e-6;

pub fn is_effectively_real(z: &Complex<f64>) -> bool {
    z.im.abs() <= IMAG_TOL * z.re.abs().max(1.0)
}

fn c(re: f64, im: f64) -> Complex<f64> {
    Complex::new(re, im)
}

/// Roots of `a x² + b x + c` with the cancellation-free formula.
pub fn quadratic_roots(a: f64, b: f64, c0: f64) -> Vec<Complex<f64>> {
    if a == 0.0 {
        return linear_roots(b, c0);
    }
    let disc = b * b - 4.0 * a * c0;
    if disc >= 0.0 {
        let q = -0.5 * (b + b.signum() * disc.sqrt());
        if q == 0.0 {
            return vec![c(0.0, 0.0), c(0.0, 0.0)];
        }
        vec![c(q / a, 0.0), c(c0 / q, 0.0)]
    } else {
        let re = -b / (2.0 * a);
        let im = (-disc).sqrt() / (2.0 * a).abs();
        vec![c(re, im), c(re, -im)]
    }
}

fn linear_roots(a: f64, b: f64) -> Vec<Complex<f64>> {
    if a == 0.0 {
        Vec::new()
    } else {
        vec![c(-b / a, 0.0)]
    }
}

/// Roots of the monic cubic `x³ + a x² + b x + c`.
pub fn monic_cubic_roots(a: f64, b: f64, c0: f64) -> Vec<Complex<f64>> {
    let q = (a * a - 3.0 * b) / 9.0;
    let r = (2.0 * a * a * a - 9.0 * a * b + 27.0 * c0) / 54.0;
    let shift = a / 3.0;
    let q3 = q * q * q;
    if r * r < q3 {
        let theta = (r / q3.sqrt()).clamp(-1.0, 1.0).acos();
        let s = -2.0 * q.sqrt();
        let two_pi = 2.0 * std::f64::consts::PI;
        (0..3)
            .map(|k| c(s * ((theta + two_pi * k as f64) / 3.0).cos() - shift, 0.0))
            .collect()
    } else {
        let big_a = -r.signum() * (r.abs() + (r * r - q3).sqrt()).cbrt();
        let big_b = if big_a == 0.0 { 0.0 } else { q / big_a };
        let re = -0.5 * (big_a + big_b) - shift;
        let im = 0.5 * 3f64.sqrt() * (big_a - big_b);
        vec![c(big_a + big_b - shift, 0.0), c(re, im), c(re, -im)]
    }
}

/// Roots of `a x⁴ + b x³ + c x² + d x + e` (`a ≠ 0`) by Ferrari's method.
pub fn quartic_roots(a: f64, b: f64, c0: f64, d: f64, e: f64) -> Vec<Complex<f64>> {
    let (b, c0, d, e) = (b / a, c0 / a, d / a, e / a);
    // Depressed quartic t⁴ + p t² + q t + r with x = t - b/4.
    let shift = -0.25 * b;
    let b2 = b * b;
    let p = c0 - 0.375 * b2;
    let q = d - 0.5 * b * c0 + 0.125 * b2 * b;
    let r = e - 0.25 * b * d + b2 * c0 / 16.0 - 3.0 * b2 * b2 / 256.0;

    // Resolvent m³ + p m² + (p²/4 − r) m − q²/8 = 0 always has a root m ≥ 0.
    let m = monic_cubic_roots(p, 0.25 * p * p - r, -0.125 * q * q)
        .into_iter()
        .filter(|z| z.im == 0.0)
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    let scale = p.abs().max(r.abs().sqrt()).max(f64::MIN_POSITIVE);

    let roots_t: Vec<Complex<f64>> = if m > 1e-12 * scale {
        let s = (2.0 * m).sqrt();
        let k = 0.5 * p + m;
        let h = q / (2.0 * s);
        let mut out = quadratic_roots(1.0, -s, k + h);
        out.extend(quadratic_roots(1.0, s, k - h));
        out
    } else {
        // Biquadratic: t² = z with z² + p z + r = 0.
        let disc = Complex::new(p * p - 4.0 * r, 0.0).sqrt();
        let mut out = Vec::with_capacity(4);
        for z in [(-p + disc) * 0.5, (-p - disc) * 0.5] {
            let t = z.sqrt();
            out.push(t);
            out.push(-t);
        }
        out
    };
    roots_t.into_iter().map(|t| t + shift).collect()
}

/// Complex roots of a polynomial given by descending coefficients, degree ≤ 4.
///
/// Leading coefficients that are negligible relative to the largest one are
/// dropped and the lower-degree formula is used instead.
pub fn polynomial_roots(desc: &[f64]) -> Vec<Complex<f64>> {
    let scale = desc.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return Vec::new();
    }
    let start = desc
        .iter()
        .position(|v| v.abs() > 1e-14 * scale)
        .unwrap_or(desc.len());
    let p = &desc[start..];
    match p.len() {
        0 | 1 => Vec::new(),
        2 => linear_roots(p[0], p[1]),
        3 => quadratic_roots(p[0], p[1], p[2]),
        4 => monic_cubic_roots(p[1] / p[0], p[2] / p[0], p[3] / p[0]),
        5 => quartic_roots(p[0], p[1], p[2], p[3], p[4]),
        n => panic!("degree {} exceeds closed-form range", n - 1),
    }
}

fn horner(desc: &[f64], x: f64) -> (f64, f64) {
    let mut value = 0.0;
    let mut deriv = 0.0;
    for &coef in desc {
        deriv = deriv * x + value;
        value = value * x + coef;
    }
    (value, deriv)
}

/// Real roots (with multiplicity), each refined by a couple of Newton steps.
pub fn real_roots(desc: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = polynomial_roots(desc)
        .iter()
        .filter(|z| is_effectively_real(z))
        .map(|z| polish(desc, z.re))
        .collect();
    out.sort_by(f64::total_cmp);
    out
}

fn polish(desc: &[f64], mut x: f64) -> f64 {
    let (mut fx, _) = horner(desc, x);
    for _ in 0..3 {
        let (_, dfx) = horner(desc, x);
        if dfx == 0.0 || fx == 0.0 {
            break;
        }
        let next = x - fx / dfx;
        let (fn_, _) = horner(desc, next);
        if fn_.abs() < fx.abs() {
            x = next;
            fx = fn_;
        } else {
            break;
        }
    }
    x
}
