//! Log-space Gamma, Beta, factorial and double-factorial helpers.

pub use statrs::function::gamma::ln_gamma;

pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

pub fn beta(a: f64, b: f64) -> f64 {
    ln_beta(a, b).exp()
}

/// `ln(k!)`; exact zero at `k = 0, 1`.
pub fn ln_factorial(k: usize) -> f64 {
    if k < 64 {
        (2..=k).map(|i| (i as f64).ln()).sum()
    } else {
        ln_gamma(k as f64 + 1.0)
    }
}

/// `ln(k!!)` with the conventions `0!! = (-1)!! = 1`.
pub fn ln_double_factorial(k: i64) -> f64 {
    if k <= 0 {
        return 0.0;
    }
    let k = k as usize;
    if k.is_multiple_of(2) {
        // (2j)!! = 2^j j!
        let j = k / 2;
        j as f64 * std::f64::consts::LN_2 + ln_factorial(j)
    } else {
        // (2j+1)!! = (2j+1)! / (2^j j!)
        let j = (k - 1) / 2;
        ln_factorial(k) - j as f64 * std::f64::consts::LN_2 - ln_factorial(j)
    }
}

/// `ln C(n, k)` for `k <= n`.
pub fn ln_binomial(n: usize, k: usize) -> f64 {
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn double_factorials() {
        let cases = [
            (-1, 1.0),
            (0, 1.0),
            (1, 1.0),
            (2, 2.0),
            (5, 15.0),
            (8, 384.0),
            (9, 945.0),
        ];
        for (k, v) in cases {
            assert!((ln_double_factorial(k).exp() - v).abs() < 1e-9 * v, "{k}");
        }
    }

    #[test]
    fn beta_values() {
        assert!((beta(1.0, 0.5) - 2.0).abs() < 1e-13);
        assert!((beta(1.5, 0.5) - std::f64::consts::FRAC_PI_2).abs() < 1e-13);
        assert!((ln_binomial(10, 3).exp() - 120.0).abs() < 1e-9);
        assert_eq!(ln_factorial(0), 0.0);
        assert_eq!(ln_factorial(1), 0.0);
    }
}
