//! Scalar loss functions, their derivatives, and dataset-level metrics.
//!
//! The classification loss is the cross-entropy (logistic) loss
//! `l(z) = log(1 + exp(-z))` on the margin `z = y * f(x)`. The squared hinge
//! loss is used only by the last-hidden-layer gradient-flow procedure.

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::network::{forward, WeightStack};

/// Numerically stable `log(1 + exp(-z))`.
///
/// For z < -30 the result is -z plus an exp(z) correction; for z > 30 it is
/// exp(-z); both branches preserve full precision without overflow.
#[inline]
pub fn cross_entropy(z: f64) -> f64 {
    if z < -30.0 {
        -z + z.exp()
    } else if z > 30.0 {
        (-z).exp()
    } else {
        (-z).exp().ln_1p()
    }
}

/// Derivative of the cross-entropy loss: `l'(z) = -1 / (1 + exp(z))`.
/// Always in (-1, 0); satisfies -l'(z) <= min(1, l(z)).
#[inline]
pub fn cross_entropy_prime(z: f64) -> f64 {
    if z >= 0.0 {
        let e = (-z).exp();
        -e / (1.0 + e)
    } else {
        -1.0 / (1.0 + z.exp())
    }
}

/// Squared hinge loss `(max(lambda - z, 0))^2` and its derivative
/// `-2 max(lambda - z, 0)`. The derivative satisfies l' = -2 sqrt(l).
pub fn squared_hinge(z: f64, lambda: f64) -> Result<(f64, f64)> {
    if lambda <= 0.0 {
        return Err(Error::InvalidInput(format!("hinge margin lambda must be positive, got {lambda}")));
    }
    let gap = (lambda - z).max(0.0);
    Ok((gap * gap, -2.0 * gap))
}

/// Dataset-level metrics at a fixed weight configuration.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct DatasetMetrics {
    /// Average cross-entropy training loss.
    pub loss: f64,
    /// 0-1 error; a score of exactly zero counts as an error.
    pub err01: f64,
    /// Surrogate error: average of -l'(y * f(x)).
    pub surrogate: f64,
}

/// Metrics from precomputed margins `z_i = y_i * f(x_i)`.
pub fn metrics_from_margins(margins: &[f64]) -> Result<DatasetMetrics> {
    if margins.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = margins.len() as f64;
    let mut loss = 0.0;
    let mut errs = 0usize;
    let mut surrogate = 0.0;
    for &z in margins {
        loss += cross_entropy(z);
        surrogate += -cross_entropy_prime(z);
        if z <= 0.0 {
            errs += 1;
        }
    }
    Ok(DatasetMetrics { loss: loss / n, err01: errs as f64 / n, surrogate: surrogate / n })
}

/// Evaluate loss, 0-1 error, and surrogate error of a network on a dataset.
pub fn dataset_metrics(weights: &WeightStack, data: &LabeledDataset) -> Result<DatasetMetrics> {
    if data.n() == 0 {
        return Err(Error::EmptyDataset);
    }
    let margins = margins_of(weights, data)?;
    metrics_from_margins(&margins)
}

/// Margins `y_i * f_W(x_i)` for every example.
pub fn margins_of(weights: &WeightStack, data: &LabeledDataset) -> Result<Vec<f64>> {
    (0..data.n())
        .map(|i| forward(weights, data.x(i)).map(|c| data.y(i) * c.score))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_margin_dataset;
    use crate::network::{init_weights, NetworkShape};
    use crate::rng::Rng;

    #[test]
    fn cross_entropy_at_zero() {
        assert!((cross_entropy(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn cross_entropy_negative_tail_is_stable() {
        let v = cross_entropy(-100.0);
        assert!(v.is_finite());
        assert!((v - 100.0).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_of_log_inverse_eps() {
        // l(log(1/eps)) = log(1 + eps) <= eps
        let eps = 1e-3f64;
        let v = cross_entropy((1.0 / eps).ln());
        assert!((v - (1.0 + eps).ln()).abs() < 1e-15);
        assert!(v <= eps);
    }

    #[test]
    fn prime_at_zero_and_tail() {
        assert!((cross_entropy_prime(0.0) + 0.5).abs() < 1e-15);
        let v = cross_entropy_prime(100.0);
        assert!(v < 0.0, "must stay strictly negative");
        assert!((v + (-100.0f64).exp()).abs() < 1e-50);
    }

    #[test]
    fn prime_bounded_by_loss_on_grid() {
        // -l'(z) <= min(1, l(z)) over z in [-50, 50] on a 1e-2 grid.
        let mut z = -50.0;
        while z <= 50.0 {
            let neg_prime = -cross_entropy_prime(z);
            assert!(neg_prime <= 1.0);
            assert!(neg_prime <= cross_entropy(z) + 1e-15, "z={z}");
            z += 1e-2;
        }
    }

    #[test]
    fn prime_in_open_interval() {
        for z in [-30.0, -1.0, 0.0, 1.0, 30.0, 300.0] {
            let p = cross_entropy_prime(z);
            assert!(p > -1.0 && p < 0.0, "z={z} p={p}");
        }
        // Far in the negative tail the true value -1 + exp(z) rounds to -1.
        assert_eq!(cross_entropy_prime(-700.0), -1.0);
    }

    #[test]
    fn convexity_witness() {
        let mut rng = Rng::new(11);
        for _ in 0..10_000 {
            let z1 = 40.0 * (rng.uniform() - 0.5);
            let z2 = 40.0 * (rng.uniform() - 0.5);
            let t = rng.uniform();
            let lhs = cross_entropy(t * z1 + (1.0 - t) * z2);
            let rhs = t * cross_entropy(z1) + (1.0 - t) * cross_entropy(z2);
            assert!(lhs <= rhs + 1e-12);
        }
    }

    #[test]
    fn hinge_kink_and_values() {
        let (l, dl) = squared_hinge(2.0, 2.0).unwrap();
        assert_eq!((l, dl), (0.0, 0.0));
        let (l, dl) = squared_hinge(0.0, 2.0).unwrap();
        assert_eq!((l, dl), (4.0, -4.0));
        assert!(squared_hinge(0.0, -1.0).is_err());
    }

    #[test]
    fn hinge_derivative_matches_finite_differences() {
        let mut rng = Rng::new(5);
        let lambda = 1.5;
        let h = 1e-6;
        for _ in 0..200 {
            let z = 6.0 * (rng.uniform() - 0.5);
            if (lambda - z).abs() < 1e-3 {
                continue; // away from the kink
            }
            let (_, dl) = squared_hinge(z, lambda).unwrap();
            let (lp, _) = squared_hinge(z + h, lambda).unwrap();
            let (lm, _) = squared_hinge(z - h, lambda).unwrap();
            let fd = (lp - lm) / (2.0 * h);
            let denom = dl.abs().max(1e-8);
            assert!((fd - dl).abs() / denom < 1e-6, "z={z} fd={fd} dl={dl}");
        }
    }

    #[test]
    fn hinge_prime_is_minus_two_sqrt_loss() {
        for z in [-3.0, 0.0, 0.9, 1.0, 2.5] {
            let (l, dl) = squared_hinge(z, 1.0).unwrap();
            assert!((dl + 2.0 * l.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn metrics_zero_weights() {
        let shape = NetworkShape { d: 4, m: 8, l: 3 };
        let mut w = init_weights(shape, 1);
        for layer in &mut w.layers {
            layer.scale(0.0);
        }
        let data = gen_margin_dataset(16, 4, 0.1, 2).unwrap();
        let m = dataset_metrics(&w, &data).unwrap();
        assert_eq!(m.err01, 1.0);
        assert!((m.loss - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((m.surrogate - 0.5).abs() < 1e-12);
    }

    #[test]
    fn metrics_large_margin() {
        let margins = vec![20.0; 10];
        let m = metrics_from_margins(&margins).unwrap();
        assert_eq!(m.err01, 0.0);
        assert!(m.loss <= 3e-9);
    }

    #[test]
    fn err_bounded_by_twice_surrogate() {
        let shape = NetworkShape { d: 6, m: 16, l: 3 };
        let w = init_weights(shape, 3);
        let data = gen_margin_dataset(32, 6, 0.05, 4).unwrap();
        let m = dataset_metrics(&w, &data).unwrap();
        assert!(m.err01 <= 2.0 * m.surrogate + 1e-12);
    }

    #[test]
    fn empty_dataset_rejected() {
        assert!(metrics_from_margins(&[]).is_err());
    }
}
