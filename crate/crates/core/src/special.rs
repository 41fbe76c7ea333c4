//! Small numeric helpers: log-factorials, binomials and Poisson tails.

/// `ln(n!)`, exact summation below 256 and Stirling series above.
pub fn ln_factorial(n: usize) -> f64 {
    if n < 2 {
        return 0.0;
    }
    if n < 256 {
        return (2..=n).map(|k| (k as f64).ln()).sum();
    }
    let x = n as f64 + 1.0;
    (x - 0.5) * x.ln() - x + 0.5 * std::f64::consts::TAU.ln() + 1.0 / (12.0 * x)
        - 1.0 / (360.0 * x.powi(3))
}

/// Table of `ln(k!)` for `k = 0..=n`.
pub fn ln_factorial_table(n: usize) -> Vec<f64> {
    let mut t = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    t.push(0.0);
    for k in 1..=n {
        acc += (k as f64).ln();
        t.push(acc);
    }
    t
}

pub fn binomial(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0;
    for i in 0..k {
        acc *= (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

pub fn factorial(n: u32) -> f64 {
    (2..=n).fold(1.0, |acc, k| acc * k as f64)
}

pub fn poisson_pmf(lambda: f64, k: usize) -> f64 {
    if lambda == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    (-lambda + k as f64 * lambda.ln() - ln_factorial(k)).exp()
}

/// Poisson pmf for `k = 0..=kmax` by forward recursion.
pub fn poisson_table(lambda: f64, kmax: usize) -> Vec<f64> {
    let mut t = Vec::with_capacity(kmax + 1);
    let mut cur = (-lambda).exp();
    t.push(cur);
    for k in 1..=kmax {
        cur *= lambda / k as f64;
        t.push(cur);
    }
    t
}

/// `P(X >= k)` for `X ~ Poisson(lambda)`, summed upward so tiny tails keep full
/// relative precision.
pub fn poisson_upper_tail(lambda: f64, k: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if lambda == 0.0 {
        return 0.0;
    }
    if (k as f64) <= lambda {
        // tail is O(1); complement is accurate enough here
        let below: f64 = poisson_table(lambda, k - 1).iter().sum();
        return (1.0 - below).max(0.0);
    }
    let mut term = poisson_pmf(lambda, k);
    let mut sum = 0.0;
    let mut j = k;
    while term > sum * 1e-17 && term > 0.0 {
        sum += term;
        j += 1;
        term *= lambda / j as f64;
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_factorial_matches_direct() {
        assert!((ln_factorial(10) - 3_628_800f64.ln()).abs() < 1e-12);
        let stirling = ln_factorial(300);
        let direct: f64 = (2..=300).map(|k| (k as f64).ln()).sum();
        assert!((stirling - direct).abs() < 1e-9);
        let t = ln_factorial_table(20);
        assert!((t[20] - ln_factorial(20)).abs() < 1e-12);
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(5, 2), 10.0);
        assert_eq!(binomial(5, 0), 1.0);
        assert_eq!(binomial(3, 4), 0.0);
        assert_eq!(factorial(5), 120.0);
    }

    #[test]
    fn tail_consistent_with_table() {
        let lambda = 2.5;
        let t = poisson_table(lambda, 60);
        for k in [0usize, 1, 3, 7, 15] {
            let direct: f64 = t[k..].iter().sum();
            assert!((poisson_upper_tail(lambda, k) - direct).abs() < 1e-14);
        }
        assert!(poisson_upper_tail(4.0, 40) < 1e-15);
    }
}
