//! Draws from the standard distributions used by the samplers.

use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma, StandardNormal};

/// `InvGamma(shape, scale)`: density ∝ x^(-shape-1) exp(-scale/x).
pub fn inv_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, scale: f64) -> f64 {
    debug_assert!(shape > 0.0 && scale > 0.0);
    let g: f64 = Gamma::new(shape, 1.0).expect("positive shape").sample(rng);
    scale / g
}

/// `Gamma(shape, rate)`: density ∝ x^(shape-1) exp(-rate x).
pub fn gamma_rate<R: Rng + ?Sized>(rng: &mut R, shape: f64, rate: f64) -> f64 {
    debug_assert!(shape > 0.0 && rate > 0.0);
    let g: f64 = Gamma::new(shape, 1.0).expect("positive shape").sample(rng);
    g / rate
}

/// Exponential with the given mean.
pub fn exponential_mean<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> f64 {
    let e: f64 = Exp::new(1.0).expect("unit rate").sample(rng);
    e * mean
}

pub fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Shortest interval containing `mass` of the sample.
pub fn hpd_interval(draws: &[f64], mass: f64) -> (f64, f64) {
    let mut s = draws.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let n = s.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let width = ((mass * n as f64).ceil() as usize).clamp(1, n);
    let (mut lo, mut hi) = (s[0], s[width - 1]);
    for i in 1..=(n - width) {
        if s[i + width - 1] - s[i] < hi - lo {
            lo = s[i];
            hi = s[i + width - 1];
        }
    }
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn inv_gamma_mean() {
        let mut rng = stream(1, &[]);
        let (a, b) = (6.0, 10.0);
        let n = 200_000;
        let m = (0..n).map(|_| inv_gamma(&mut rng, a, b)).sum::<f64>() / n as f64;
        // mean b/(a-1) = 2, sd of the mean ~ 2/sqrt(4 n)
        assert!((m - 2.0).abs() < 4.0 * 2.0 / (4.0 * n as f64).sqrt());
    }

    #[test]
    fn hpd_of_uniform_grid() {
        let xs: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let (lo, hi) = hpd_interval(&xs, 0.95);
        assert_eq!(hi - lo, 94.0);
    }

    #[test]
    fn hpd_prefers_dense_region() {
        let mut xs = vec![0.0; 96];
        xs.extend([100.0, 200.0, 300.0, 400.0]);
        assert_eq!(hpd_interval(&xs, 0.95), (0.0, 0.0));
    }
}
