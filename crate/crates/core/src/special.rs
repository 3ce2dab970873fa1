//! Special functions used by the likelihoods and distribution functions.
//!
//! `ln_gamma`, `digamma` and the regularized incomplete gamma functions come
//! from `statrs`, `erfc` from `libm` (the statrs version loses about four
//! digits). Trigamma and the Stirling remainder are implemented here.

use std::f64::consts::{PI, SQRT_2};

pub use libm::erfc;
pub use statrs::function::erf::erfc_inv;
pub use statrs::function::gamma::{digamma, ln_gamma};

/// `ln √(2π)`
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Regularized lower incomplete gamma `P(a, x)`, extended by 0 for `x <= 0`
/// and 1 at `x = ∞`.
pub fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x == f64::INFINITY {
        1.0
    } else {
        statrs::function::gamma::gamma_lr(a, x)
    }
}

/// Regularized upper incomplete gamma `Q(a, x) = 1 - P(a, x)`.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else if x == f64::INFINITY {
        0.0
    } else {
        statrs::function::gamma::gamma_ur(a, x)
    }
}

/// Polygamma of order one, `ψ'(x)`, for `x > 0`.
pub fn trigamma(mut x: f64) -> f64 {
    debug_assert!(x > 0.0);
    let mut acc = 0.0;
    while x < 10.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let r = 1.0 / x;
    let r2 = r * r;
    // asymptotic series with Bernoulli numbers B2..B12
    let tail = r2
        * (1.0 / 6.0
            - r2 * (1.0 / 30.0
                - r2 * (1.0 / 42.0 - r2 * (1.0 / 30.0 - r2 * (5.0 / 66.0 - r2 * 691.0 / 2730.0)))));
    acc + r + 0.5 * r2 + r * tail
}

/// Stirling remainder `ln Γ(x) - (x - ½) ln x + x - ln √(2π)` expressed in
/// `r = 1/x`, so that `r = 0` (the limit `x → ∞`) is representable.
pub fn stirling_remainder_inv(r: f64) -> f64 {
    debug_assert!(r >= 0.0);
    if r <= 0.1 {
        let r2 = r * r;
        r * (1.0 / 12.0
            - r2 * (1.0 / 360.0
                - r2 * (1.0 / 1260.0
                    - r2 * (1.0 / 1680.0 - r2 * (1.0 / 1188.0 - r2 * (691.0 / 360_360.0 - r2 / 156.0))))))
    } else {
        let x = 1.0 / r;
        ln_gamma(x) - (x - 0.5) * x.ln() + x - LN_SQRT_2PI
    }
}

/// Derivative of the Stirling remainder with respect to `x`, again in `r = 1/x`.
pub fn stirling_remainder_deriv_inv(r: f64) -> f64 {
    debug_assert!(r >= 0.0);
    if r <= 0.1 {
        let r2 = r * r;
        -r2 * (1.0 / 12.0
            - r2 * (1.0 / 120.0
                - r2 * (1.0 / 252.0
                    - r2 * (1.0 / 240.0 - r2 * (1.0 / 132.0 - r2 * (691.0 / 32_760.0 - r2 / 12.0))))))
    } else {
        let x = 1.0 / r;
        digamma(x) - x.ln() + 0.5 * r
    }
}

/// Standard normal distribution function.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        f64::NEG_INFINITY
    } else if p >= 1.0 {
        f64::INFINITY
    } else {
        -SQRT_2 * erfc_inv(2.0 * p)
    }
}

/// Standard normal density.
pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// Inverse of `x ↦ P(a, x)`.
pub fn gamma_p_inv(a: f64, p: f64) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    // Wilson-Hilferty start
    let z = normal_quantile(p);
    let c = 1.0 / (9.0 * a);
    let mut x = (a * (1.0 - c + z * c.sqrt()).powi(3)).max(1e-300);
    if !x.is_finite() || x <= 0.0 {
        x = a;
    }
    let (mut lo, mut hi) = (0.0, f64::INFINITY);
    let ln_norm = ln_gamma(a);
    for _ in 0..200 {
        let f = gamma_p(a, x) - p;
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let dens = ((a - 1.0) * x.ln() - x - ln_norm).exp();
        let mut next = x - f / dens;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = if hi.is_finite() { 0.5 * (lo + hi) } else { 2.0 * x.max(lo) + 1.0 };
        }
        if (next - x).abs() <= 1e-15 * x.abs() {
            return next;
        }
        x = next;
    }
    x
}

/// Neumaier-compensated sum; the result does not depend on how many terms
/// were large or small relative to the running total.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(terms: I) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for t in terms {
        let s = sum + t;
        if sum.abs() >= t.abs() {
            comp += (sum - s) + t;
        } else {
            comp += (t - s) + sum;
        }
        sum = s;
    }
    sum + comp
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn log_gamma_reference_values() {
        assert_relative_eq!(ln_gamma(0.5), PI.sqrt().ln(), max_relative = 1e-12);
        assert_relative_eq!(ln_gamma(5.0), 24f64.ln(), max_relative = 1e-12);
        assert_relative_eq!(ln_gamma(21.0), 2_432_902_008_176_640_000f64.ln(), max_relative = 1e-12);
    }

    #[test]
    fn digamma_reference_values() {
        let euler = 0.577_215_664_901_532_9;
        assert_relative_eq!(digamma(1.0), -euler, max_relative = 1e-12);
        assert_relative_eq!(digamma(0.5), -euler - 2.0 * 2f64.ln(), max_relative = 1e-12);
        assert_relative_eq!(digamma(4.0), -euler + 1.0 + 0.5 + 1.0 / 3.0, max_relative = 1e-12);
    }

    #[test]
    fn trigamma_reference_values() {
        assert_relative_eq!(trigamma(1.0), PI * PI / 6.0, max_relative = 1e-13);
        assert_relative_eq!(trigamma(0.5), PI * PI / 2.0, max_relative = 1e-13);
        assert_relative_eq!(trigamma(3.0), PI * PI / 6.0 - 1.0 - 0.25, max_relative = 1e-13);
        // central difference of digamma
        for x in [0.7, 2.5, 9.9, 10.1, 40.0] {
            let h = 1e-5 * x;
            let fd = (digamma(x + h) - digamma(x - h)) / (2.0 * h);
            assert_relative_eq!(trigamma(x), fd, max_relative = 1e-7);
        }
    }

    #[test]
    fn stirling_remainder_branches_agree() {
        for x in [9.0, 10.0, 11.0, 25.0] {
            let direct = ln_gamma(x) - (x - 0.5) * x.ln() + x - LN_SQRT_2PI;
            assert_relative_eq!(stirling_remainder_inv(1.0 / x), direct, max_relative = 1e-10);
            let deriv = digamma(x) - x.ln() + 0.5 / x;
            assert_relative_eq!(stirling_remainder_deriv_inv(1.0 / x), deriv, max_relative = 1e-9);
        }
        assert_eq!(stirling_remainder_inv(0.0), 0.0);
    }

    #[test]
    fn incomplete_gamma_closed_forms() {
        for x in [0.01, 0.3, 1.0, 4.0, 30.0] {
            assert_relative_eq!(gamma_p(1.0, x), 1.0 - (-x).exp(), max_relative = 1e-12);
            let erf = 1.0 - erfc(x.sqrt());
            assert_relative_eq!(gamma_p(0.5, x), erf, max_relative = 1e-12);
            assert_relative_eq!(gamma_p(2.0, x), 1.0 - (1.0 + x) * (-x).exp(), max_relative = 1e-11);
        }
        assert_eq!(gamma_p(2.0, 0.0), 0.0);
        assert_eq!(gamma_p(2.0, f64::INFINITY), 1.0);
    }

    #[test]
    fn gamma_p_inverse_round_trips() {
        for a in [0.3, 1.0, 3.583, 20.0] {
            for p in [1e-6, 0.01, 0.5, 0.9, 0.999_999] {
                let x = gamma_p_inv(a, p);
                assert_relative_eq!(gamma_p(a, x), p, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn normal_quantile_inverts_cdf() {
        for p in [1e-8, 0.025, 0.5, 0.8] {
            assert_relative_eq!(normal_cdf(normal_quantile(p)), p, max_relative = 1e-12);
        }
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let terms = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(terms), 2.0);
    }
}
