//! Named quadratic fixtures, resolved by Newton refinement of their defining
//! equations.

use crate::polycore::MonicPolynomial;
use num_complex::Complex64;

/// Newton on c^3 + 2c^2 + c + 1 (the period-3 centers, c ≠ 0).
pub fn period3_center(seed: Complex64) -> Complex64 {
    let mut c = seed;
    for _ in 0..100 {
        let p = ((c + 2.0) * c + 1.0) * c + 1.0;
        let dp = (3.0 * c + 4.0) * c + 1.0;
        let s = p / dp;
        c -= s;
        if s.norm() < 1e-17 {
            break;
        }
    }
    c
}

pub fn c_rabbit() -> Complex64 {
    period3_center(Complex64::new(-0.12, 0.75))
}

pub fn c_airplane() -> Complex64 {
    let c = period3_center(Complex64::new(-1.75, 0.0));
    Complex64::new(c.re, 0.0)
}

pub fn basilica() -> MonicPolynomial {
    MonicPolynomial::quadratic(Complex64::new(-1.0, 0.0))
}

pub fn rabbit() -> MonicPolynomial {
    MonicPolynomial::quadratic(c_rabbit())
}

pub fn airplane() -> MonicPolynomial {
    MonicPolynomial::quadratic(c_airplane())
}

pub fn by_name(name: &str) -> Option<MonicPolynomial> {
    match name {
        "basilica" => Some(basilica()),
        "rabbit" => Some(rabbit()),
        "airplane" => Some(airplane()),
        "z2" | "power2" => Some(MonicPolynomial::power(2)),
        _ => None,
    }
}

/// Repelling fixed point α of z^2 + c (the root of z^2 - z + c with |2z| > 1
/// whose rays are not 0).
pub fn alpha_fixed_point(c: Complex64) -> Complex64 {
    let s = (Complex64::new(1.0, 0.0) - 4.0 * c).sqrt();
    (Complex64::new(1.0, 0.0) - s) / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centers_are_period_three() {
        for c in [c_rabbit(), c_airplane()] {
            let f = MonicPolynomial::quadratic(c);
            assert!(f.iterate(Complex64::new(0.0, 0.0), 3).norm() < 1e-14);
        }
        assert!(c_rabbit().im > 0.0);
        assert!((c_airplane().re + 1.754_877_666_246_693).abs() < 1e-12);
    }
}
