//! Platform-stable normal CDF for table construction.
//!
//! Coding tables must be identical on the encoder and decoder, so Φ is
//! built only from IEEE basic arithmetic and `libm::exp` (a portable
//! software implementation) instead of the platform `erf`.
//!
//! erf(x) ≈ 1 − (a₁t + a₂t² + a₃t³ + a₄t⁴ + a₅t⁵)·e^{−x²}, t = 1/(1 + p·x)
//! for x ≥ 0 (Abramowitz & Stegun 7.1.26, |error| ≤ 1.5e−7), extended as an
//! odd function.

const P: f64 = 0.327_591_1;
const A: [f64; 5] = [0.254_829_592, -0.284_496_736, 1.421_413_741, -1.453_152_027, 1.061_405_429];

pub fn erf_fixed(x: f64) -> f64 {
    // The fit leaves erf(0) at 1e−9; pin it so the function is exactly odd.
    if x == 0.0 {
        return 0.0;
    }
    let ax = x.abs();
    let t = 1.0 / (1.0 + P * ax);
    let poly = t * (A[0] + t * (A[1] + t * (A[2] + t * (A[3] + t * A[4]))));
    let y = 1.0 - poly * libm::exp(-ax * ax);
    if x < 0.0 {
        -y
    } else {
        y
    }
}

pub fn phi_fixed(x: f64) -> f64 {
    0.5 * (1.0 + erf_fixed(x * std::f64::consts::FRAC_1_SQRT_2))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn close_to_libm_erf() {
        let mut worst: f64 = 0.0;
        for i in -6000..=6000 {
            let x = i as f64 / 1000.0;
            worst = worst.max((erf_fixed(x) - libm::erf(x)).abs());
        }
        assert!(worst < 1.5e-7, "{worst}");
    }

    #[test]
    fn odd_and_bounded() {
        for &x in &[0.0, 0.3, 1.7, 4.0, 30.0] {
            assert_eq!(erf_fixed(-x), -erf_fixed(x));
            assert!(erf_fixed(x).abs() <= 1.0);
        }
        assert_eq!(phi_fixed(0.0), 0.5);
    }
}
