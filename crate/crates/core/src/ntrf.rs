//! Tangent random feature model at initialization.
//!
//! For a reference weight stack W0 the model class is the set of linear
//! functions F(x) = f_{W0}(x) + <grad f_{W0}(x), W - W0> with the
//! displacement W - W0 constrained to a per-layer Frobenius ball of radius
//! R * m^{-1/2}. Fitting the cross-entropy loss over this class is convex;
//! the achieved minimum is the data-difficulty measure eps_ntrf used as a
//! training target downstream. The module also hosts the squared-hinge
//! gradient flow restricted to the last hidden layer.

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::losses::{cross_entropy, cross_entropy_prime, squared_hinge};
use crate::matrix::{axpy, dot, norm2};
use crate::network::{forward, network_gradient, NetworkShape, WeightStack};
use crate::rng::Rng;

/// Gradient features at initialization: per example an offset
/// `f0_i = f_{W0}(x_i)` and a flattened gradient stack `G_i`.
#[derive(Debug, Clone)]
pub struct NtrfFeatures {
    pub shape: NetworkShape,
    pub offsets: Vec<f64>,
    /// n * flat_len, example-major.
    pub feats: Vec<f64>,
}

impl NtrfFeatures {
    pub fn n(&self) -> usize {
        self.offsets.len()
    }

    #[inline]
    pub fn feat(&self, i: usize) -> &[f64] {
        let len = self.shape.flat_len();
        &self.feats[i * len..(i + 1) * len]
    }
}

/// A point of the tangent model class: a flattened displacement from W0
/// together with the dimensionless ball radius it was fitted under.
#[derive(Debug, Clone)]
pub struct NtrfModel {
    pub shape: NetworkShape,
    pub delta: Vec<f64>,
    pub radius: f64,
}

impl NtrfModel {
    pub fn zeros(shape: NetworkShape, radius: f64) -> Self {
        NtrfModel { shape, delta: vec![0.0; shape.flat_len()], radius }
    }

    /// Per-layer Frobenius norms of the displacement.
    pub fn layer_norms(&self) -> Vec<f64> {
        self.shape
            .layer_ranges()
            .into_iter()
            .map(|r| norm2(&self.delta[r]))
            .collect()
    }

    /// max_l ||delta_l||_F <= R * m^{-1/2} + 1e-10.
    pub fn in_ball(&self) -> bool {
        let cap = self.radius / (self.shape.m as f64).sqrt() + 1e-10;
        self.layer_norms().iter().all(|&v| v <= cap)
    }

    /// W0 + delta as a weight stack.
    pub fn apply_to(&self, w0: &WeightStack) -> Result<WeightStack> {
        let disp = WeightStack::from_flat(self.shape, &self.delta)?;
        let mut w = w0.clone();
        w.add_scaled(1.0, &disp);
        Ok(w)
    }
}

#[derive(Debug, Clone)]
pub struct NtrfFitResult {
    pub model: NtrfModel,
    pub eps_ntrf: f64,
    pub loss_curve: Vec<f64>,
}

/// Compute offsets and gradient features of every example at W0.
pub fn extract_features(w0: &WeightStack, data: &LabeledDataset) -> Result<NtrfFeatures> {
    if data.n() == 0 {
        return Err(Error::EmptyDataset);
    }
    if data.dim() != w0.shape.d {
        return Err(Error::DimensionMismatch(format!(
            "dataset dimension {} != network d={}",
            data.dim(),
            w0.shape.d
        )));
    }
    let len = w0.shape.flat_len();
    let mut offsets = Vec::with_capacity(data.n());
    let mut feats = Vec::with_capacity(data.n() * len);
    for i in 0..data.n() {
        let cache = forward(w0, data.x(i))?;
        offsets.push(cache.score);
        let g = network_gradient(w0, &cache)?;
        for layer in &g.layers {
            feats.extend_from_slice(&layer.data);
        }
    }
    Ok(NtrfFeatures { shape: w0.shape, offsets, feats })
}

/// F(x_i) = f0_i + <G_i, delta>.
pub fn predict(features: &NtrfFeatures, i: usize, model: &NtrfModel) -> Result<f64> {
    if i >= features.n() {
        return Err(Error::InvalidInput(format!("example index {i} out of range (n={})", features.n())));
    }
    Ok(features.offsets[i] + dot(features.feat(i), &model.delta))
}

fn average_loss(features: &NtrfFeatures, labels: &[f64], delta: &[f64]) -> f64 {
    let n = features.n();
    let mut loss = 0.0;
    for i in 0..n {
        let z = labels[i] * (features.offsets[i] + dot(features.feat(i), delta));
        loss += cross_entropy(z);
    }
    loss / n as f64
}

/// Rescale each per-layer block of `delta` independently onto the ball of
/// radius `cap`.
fn project_layers(shape: NetworkShape, delta: &mut [f64], cap: f64) {
    for range in shape.layer_ranges() {
        let block = &mut delta[range];
        let norm = norm2(block);
        if norm > cap {
            let s = if cap == 0.0 { 0.0 } else { cap / norm };
            for v in block.iter_mut() {
                *v *= s;
            }
        }
    }
}

/// Largest eigenvalue of the n x n Gram matrix of the gradient features,
/// divided by n, estimated by power iteration in feature space.
pub fn gram_top_eigenvalue(features: &NtrfFeatures) -> f64 {
    let n = features.n();
    let len = features.shape.flat_len();
    let mut rng = Rng::substream(0x9A11, 0);
    let mut v = rng.normal_vec(len);
    let nv = norm2(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let mut lambda = 0.0;
    let mut next = vec![0.0; len];
    for _ in 0..50 {
        next.iter_mut().for_each(|x| *x = 0.0);
        for i in 0..n {
            let g = features.feat(i);
            let c = dot(g, &v);
            axpy(c, g, &mut next);
        }
        lambda = norm2(&next);
        if lambda == 0.0 {
            break;
        }
        for (vi, ni) in v.iter_mut().zip(&next) {
            *vi = ni / lambda;
        }
    }
    lambda / n as f64
}

/// Projected gradient descent on the average cross-entropy of the tangent
/// model over the per-layer ball of radius R * m^{-1/2}.
///
/// `lr = None` selects the safe step 1/(4 * lambda_max) with lambda_max the
/// power-iteration Gram estimate, which guarantees monotone descent on this
/// convex 1/4-smooth objective. The reported eps_ntrf is the best achieved
/// loss, an upper bound on the true infimum; the loss curve is best-so-far
/// and therefore non-increasing.
pub fn fit_projected_gd(
    features: &NtrfFeatures,
    r: f64,
    labels: &[f64],
    steps: usize,
    lr: Option<f64>,
) -> Result<NtrfFitResult> {
    if r < 0.0 {
        return Err(Error::InvalidInput(format!("radius must be >= 0, got {r}")));
    }
    if steps < 1 {
        return Err(Error::InvalidInput("need at least one fitting step".into()));
    }
    if labels.len() != features.n() {
        return Err(Error::DimensionMismatch(format!(
            "label count {} != feature count {}",
            labels.len(),
            features.n()
        )));
    }
    let lr = match lr {
        Some(v) if v > 0.0 => v,
        Some(v) => return Err(Error::InvalidInput(format!("lr must be positive, got {v}"))),
        None => {
            let lambda = gram_top_eigenvalue(features);
            if lambda <= 0.0 {
                return Err(Error::DegenerateFeatures);
            }
            1.0 / (4.0 * lambda)
        }
    };
    let shape = features.shape;
    let n = features.n();
    let len = shape.flat_len();
    let cap = r / (shape.m as f64).sqrt();
    let mut delta = vec![0.0; len];
    let mut grad = vec![0.0; len];
    let mut best = average_loss(features, labels, &delta);
    let mut best_delta = delta.clone();
    let mut curve = Vec::with_capacity(steps);
    for step in 0..steps {
        grad.iter_mut().for_each(|x| *x = 0.0);
        for i in 0..n {
            let y = labels[i];
            let z = y * (features.offsets[i] + dot(features.feat(i), &delta));
            let c = cross_entropy_prime(z) * y / n as f64;
            axpy(c, features.feat(i), &mut grad);
        }
        axpy(-lr, &grad, &mut delta);
        project_layers(shape, &mut delta, cap);
        let loss = average_loss(features, labels, &delta);
        if !loss.is_finite() || loss > 10.0 * best {
            return Err(Error::Divergence {
                step,
                message: format!("fit loss {loss} exceeds 10x best {best} (lr={lr})"),
            });
        }
        if loss < best {
            best = loss;
            best_delta.copy_from_slice(&delta);
        }
        curve.push(best);
    }
    Ok(NtrfFitResult {
        model: NtrfModel { shape, delta: best_delta, radius: r },
        eps_ntrf: best,
        loss_curve: curve,
    })
}

#[derive(Debug, Clone)]
pub struct HingeFlowResult {
    /// Full flattened displacement; only the last-hidden-layer block is
    /// nonzero.
    pub delta: Vec<f64>,
    /// Average squared-hinge loss per Euler step (including the start).
    pub losses: Vec<f64>,
    /// Final margins y_i * F(x_i).
    pub margins: Vec<f64>,
    pub dt: f64,
}

/// Default Euler step for the hinge flow, resolving the decay rate
/// 4Cm*phi/n^3 with at least ~100 steps per e-folding.
pub fn default_hinge_dt(n: usize, m: usize, phi: f64) -> Result<f64> {
    if phi <= 0.0 || n == 0 || m == 0 {
        return Err(Error::InvalidInput(format!(
            "need n, m >= 1 and phi > 0; got n={n}, m={m}, phi={phi}"
        )));
    }
    Ok((n as f64).powi(3) / (8.0 * m as f64 * phi))
}

/// Forward-Euler discretization of the squared-hinge gradient flow on the
/// tangent model, updating only the last hidden layer's displacement block.
///
/// `stop_when_max_le`: stop early once every per-example squared-hinge loss
/// drops to the given level.
pub fn hinge_flow_last_hidden(
    features: &NtrfFeatures,
    labels: &[f64],
    lambda: f64,
    dt: f64,
    steps: usize,
    stop_when_max_le: Option<f64>,
) -> Result<HingeFlowResult> {
    if dt <= 0.0 {
        return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
    }
    if labels.len() != features.n() {
        return Err(Error::DimensionMismatch(format!(
            "label count {} != feature count {}",
            labels.len(),
            features.n()
        )));
    }
    let shape = features.shape;
    let n = features.n();
    let block = shape.layer_ranges()[shape.l - 2].clone();
    let mut delta = vec![0.0; shape.flat_len()];
    let mut grad_block = vec![0.0; block.len()];
    let mut losses = Vec::with_capacity(steps + 1);
    let mut margins = vec![0.0; n];

    let eval = |delta: &[f64], margins: &mut [f64]| -> Result<(f64, f64)> {
        let mut total = 0.0;
        let mut max_l = 0.0f64;
        for i in 0..n {
            let z = labels[i] * (features.offsets[i] + dot(features.feat(i), delta));
            margins[i] = z;
            let (l, _) = squared_hinge(z, lambda)?;
            total += l;
            max_l = max_l.max(l);
        }
        Ok((total / n as f64, max_l))
    };

    let (mut loss, mut max_l) = eval(&delta, &mut margins)?;
    losses.push(loss);
    for step in 0..steps {
        if loss == 0.0 {
            break;
        }
        if let Some(tol) = stop_when_max_le {
            if max_l <= tol {
                break;
            }
        }
        grad_block.iter_mut().for_each(|x| *x = 0.0);
        for i in 0..n {
            let (_, dl) = squared_hinge(margins[i], lambda)?;
            if dl != 0.0 {
                let g = &features.feat(i)[block.clone()];
                axpy(dl * labels[i] / n as f64, g, &mut grad_block);
            }
        }
        axpy(-dt, &grad_block, &mut delta[block.clone()]);
        let (next, next_max) = eval(&delta, &mut margins)?;
        if !next.is_finite() || next > 2.0 * loss.max(1e-300) {
            return Err(Error::StepSize(format!(
                "hinge flow unstable at step {step}: loss {loss} -> {next} with dt={dt}"
            )));
        }
        loss = next;
        max_l = next_max;
        losses.push(loss);
    }
    Ok(HingeFlowResult { delta, losses, margins, dt })
}

/// Run the hinge flow with the default dt, halving by 100 and retrying when
/// the Euler step is unstable. Returns the successful run.
pub fn hinge_flow_auto_dt(
    features: &NtrfFeatures,
    labels: &[f64],
    lambda: f64,
    phi: f64,
    steps: usize,
    stop_when_max_le: Option<f64>,
) -> Result<HingeFlowResult> {
    let mut dt = default_hinge_dt(features.n(), features.shape.m, phi)?;
    let mut last_err = None;
    for _ in 0..6 {
        match hinge_flow_last_hidden(features, labels, lambda, dt, steps, stop_when_max_le) {
            Ok(res) => return Ok(res),
            Err(e @ Error::StepSize(_)) => {
                last_err = Some(e);
                dt /= 100.0;
            }
            Err(e) => return Err(e),
        }
    }
    Err(last_err.unwrap_or_else(|| Error::StepSize("hinge flow never stabilized".into())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_margin_dataset;
    use crate::network::init_weights;

    fn tiny_setup(seed: u64) -> (WeightStack, LabeledDataset, NtrfFeatures) {
        let shape = NetworkShape { d: 4, m: 8, l: 3 };
        let w0 = init_weights(shape, seed);
        let data = gen_margin_dataset(12, 4, 0.1, seed + 1).unwrap();
        let feats = extract_features(&w0, &data).unwrap();
        (w0, data, feats)
    }

    #[test]
    fn zero_delta_reproduces_offsets() {
        let (w0, data, feats) = tiny_setup(3);
        let model = NtrfModel::zeros(w0.shape, 1.0);
        for i in 0..data.n() {
            let p = predict(&feats, i, &model).unwrap();
            assert_eq!(p, feats.offsets[i]);
            let direct = forward(&w0, data.x(i)).unwrap().score;
            assert_eq!(p, direct);
        }
    }

    #[test]
    fn features_ignore_labels() {
        let (_, data, feats) = tiny_setup(4);
        let xs: Vec<f64> = (0..data.n()).flat_map(|i| data.x(i).to_vec()).collect();
        let ys: Vec<i8> = data.labels().iter().map(|&y| -y).collect();
        let flipped = LabeledDataset::new(data.dim(), xs, ys, 0).unwrap();
        let w0 = init_weights(feats.shape, 4);
        let f2 = extract_features(&w0, &flipped).unwrap();
        assert_eq!(feats.offsets, f2.offsets);
        assert_eq!(feats.feats, f2.feats);
    }

    #[test]
    fn directional_derivative_oracle() {
        let (w0, data, feats) = tiny_setup(5);
        let shape = w0.shape;
        let mut rng = Rng::new(99);
        let dir = rng.normal_vec(shape.flat_len());
        let t = 1e-6;
        for i in 0..data.n() {
            let lin = dot(feats.feat(i), &dir);
            let mut shifted = w0.flatten();
            axpy(t, &dir, &mut shifted);
            let ws = WeightStack::from_flat(shape, &shifted).unwrap();
            let fd = (forward(&ws, data.x(i)).unwrap().score - feats.offsets[i]) / t;
            let denom = lin.abs().max(1e-8);
            assert!((lin - fd).abs() / denom < 1e-3, "i={i}: {lin} vs {fd}");
        }
    }

    #[test]
    fn predict_linearity_exact() {
        let (w0, _, feats) = tiny_setup(6);
        let mut rng = Rng::new(7);
        let delta = rng.normal_vec(w0.shape.flat_len());
        let m1 = NtrfModel { shape: w0.shape, delta: delta.clone(), radius: 1.0 };
        let m2 = NtrfModel {
            shape: w0.shape,
            delta: delta.iter().map(|v| 2.0 * v).collect(),
            radius: 1.0,
        };
        for i in 0..feats.n() {
            // Doubling is exact on the linear part itself.
            let s1 = dot(feats.feat(i), &m1.delta);
            let s2 = dot(feats.feat(i), &m2.delta);
            assert_eq!(s2, 2.0 * s1);
            // Through predict the offset addition rounds once each way.
            let p1 = predict(&feats, i, &m1).unwrap() - feats.offsets[i];
            let p2 = predict(&feats, i, &m2).unwrap() - feats.offsets[i];
            assert!((p2 - 2.0 * p1).abs() <= 1e-12 * p1.abs().max(1.0));
        }
    }

    #[test]
    fn hand_case_two_layer() {
        // d=2, m=1, L=2: W1 = [1, 0], W2 = [2]; x = (1, 0).
        // f = sqrt(1) * 2 * relu(1) = 2; G_W1 = [2, 0]; G_W2 = [1].
        let shape = NetworkShape { d: 2, m: 1, l: 2 };
        let mut w0 = WeightStack::zeros(shape);
        w0.layers[0].data.copy_from_slice(&[1.0, 0.0]);
        w0.layers[1].data[0] = 2.0;
        let data = LabeledDataset::new(2, vec![1.0, 0.0], vec![1], 0).unwrap();
        let feats = extract_features(&w0, &data).unwrap();
        assert_eq!(feats.offsets, vec![2.0]);
        assert_eq!(feats.feat(0), &[2.0, 0.0, 1.0]);
        let model = NtrfModel { shape, delta: vec![0.5, 1.0, -1.0], radius: 10.0 };
        // 2 + (2*0.5 + 0*1 + 1*(-1)) = 2.
        assert_eq!(predict(&feats, 0, &model).unwrap(), 2.0);
    }

    #[test]
    fn predict_index_out_of_range() {
        let (w0, _, feats) = tiny_setup(8);
        let model = NtrfModel::zeros(w0.shape, 1.0);
        assert!(predict(&feats, feats.n(), &model).is_err());
    }

    #[test]
    fn fit_radius_zero_is_init_loss() {
        let (_, data, feats) = tiny_setup(9);
        let labels: Vec<f64> = (0..data.n()).map(|i| data.y(i)).collect();
        let init_loss: f64 = (0..data.n())
            .map(|i| cross_entropy(labels[i] * feats.offsets[i]))
            .sum::<f64>()
            / data.n() as f64;
        let fit = fit_projected_gd(&feats, 0.0, &labels, 5, None).unwrap();
        assert_eq!(fit.eps_ntrf, init_loss);
        assert!(fit.model.delta.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fit_separable_reaches_small_loss() {
        let shape = NetworkShape { d: 6, m: 64, l: 2 };
        let w0 = init_weights(shape, 10);
        let data = gen_margin_dataset(32, 6, 0.3, 11).unwrap();
        let feats = extract_features(&w0, &data).unwrap();
        let labels: Vec<f64> = (0..data.n()).map(|i| data.y(i)).collect();
        let fit = fit_projected_gd(&feats, 50.0, &labels, 2000, None).unwrap();
        assert!(fit.eps_ntrf < 1e-2, "eps={}", fit.eps_ntrf);
        assert!(fit.model.in_ball());
    }

    #[test]
    fn fit_curve_monotone_and_step_doubling() {
        let (_, data, feats) = tiny_setup(12);
        let labels: Vec<f64> = (0..data.n()).map(|i| data.y(i)).collect();
        let short = fit_projected_gd(&feats, 5.0, &labels, 100, None).unwrap();
        let long = fit_projected_gd(&feats, 5.0, &labels, 200, None).unwrap();
        assert!(long.eps_ntrf <= short.eps_ntrf + 1e-15);
        for w in long.loss_curve.windows(2) {
            assert!(w[1] <= w[0] + 1e-10);
        }
        assert_eq!(*long.loss_curve.last().unwrap(), long.eps_ntrf);
    }

    #[test]
    fn raw_descent_monotone_with_safe_lr() {
        // With the safe lr the per-step (not just best-so-far) losses
        // decrease; check via a fresh fit and the curve equality best==raw.
        let (_, data, feats) = tiny_setup(13);
        let labels: Vec<f64> = (0..data.n()).map(|i| data.y(i)).collect();
        let lambda = gram_top_eigenvalue(&feats);
        assert!(lambda > 0.0);
        let fit = fit_projected_gd(&feats, 3.0, &labels, 300, Some(1.0 / (4.0 * lambda))).unwrap();
        for w in fit.loss_curve.windows(2) {
            assert!(w[1] <= w[0] + 1e-10);
        }
    }

    #[test]
    fn fit_divergence_detected() {
        let (_, data, feats) = tiny_setup(14);
        let labels: Vec<f64> = (0..data.n()).map(|i| data.y(i)).collect();
        let err = fit_projected_gd(&feats, 1e4, &labels, 200, Some(1e8)).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }), "got {err:?}");
    }

    #[test]
    fn ball_invariant_after_fit() {
        let (_, data, feats) = tiny_setup(15);
        let labels: Vec<f64> = (0..data.n()).map(|i| data.y(i)).collect();
        for r in [0.0, 0.5, 2.0, 10.0] {
            let fit = fit_projected_gd(&feats, r, &labels, 50, None).unwrap();
            assert!(fit.model.in_ball(), "r={r}");
        }
    }

    #[test]
    fn hinge_flat_region_constant() {
        let (_, data, feats) = tiny_setup(16);
        let labels: Vec<f64> = (0..data.n()).map(|i| data.y(i)).collect();
        // lambda tiny enough that every margin already clears it? Margins at
        // init can be negative, so construct the flat case with lambda below
        // every margin by shifting labels to match offset signs.
        let aligned: Vec<f64> = feats.offsets.iter().map(|&o| if o >= 0.0 { 1.0 } else { -1.0 }).collect();
        let min_margin = feats
            .offsets
            .iter()
            .zip(&aligned)
            .map(|(&o, &y)| y * o)
            .fold(f64::MAX, f64::min);
        assert!(min_margin >= 0.0);
        let lambda = (min_margin * 0.5).max(1e-6);
        if min_margin <= lambda {
            return;
        }
        let res = hinge_flow_last_hidden(&feats, &aligned, lambda, 0.1, 20, None).unwrap();
        assert!(res.losses.iter().all(|&l| l == 0.0));
        assert!(res.delta.iter().all(|&v| v == 0.0));
        let _ = labels;
        let _ = data;
    }

    #[test]
    fn hinge_decreasing_and_log_linear() {
        let shape = NetworkShape { d: 6, m: 64, l: 3 };
        let w0 = init_weights(shape, 17);
        let data = gen_margin_dataset(24, 6, 0.2, 18).unwrap();
        let feats = extract_features(&w0, &data).unwrap();
        let labels: Vec<f64> = (0..data.n()).map(|i| data.y(i)).collect();
        let res = hinge_flow_auto_dt(&feats, &labels, 2.0, 0.5, 4000, None).unwrap();
        for w in res.losses.windows(2) {
            assert!(
                w[1] < w[0] || w[0] == 0.0,
                "loss must strictly decrease: {} -> {}",
                w[0],
                w[1]
            );
        }
        // Mid-trajectory log-loss vs time close to a straight line.
        let positive: Vec<f64> = res.losses.iter().copied().take_while(|&l| l > 0.0).collect();
        let res_losses = positive;
        let res = HingeFlowResult { losses: res_losses, ..res };
        let k = res.losses.len();
        let lo = k / 4;
        let hi = 3 * k / 4;
        let pts: Vec<(f64, f64)> = (lo..hi).map(|t| (t as f64, res.losses[t].ln())).collect();
        let nn = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / nn;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / nn;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        let slope = sxy / sxx;
        let max_rel_dev = pts
            .iter()
            .map(|p| ((p.1 - (my + slope * (p.0 - mx))) / my.abs().max(1e-12)).abs())
            .fold(0.0f64, f64::max);
        assert!(slope < 0.0);
        assert!(max_rel_dev < 0.2, "max relative deviation {max_rel_dev}");
    }

    #[test]
    fn hinge_small_final_loss_controls_cross_entropy() {
        let shape = NetworkShape { d: 6, m: 64, l: 3 };
        let w0 = init_weights(shape, 19);
        let data = gen_margin_dataset(24, 6, 0.2, 20).unwrap();
        let feats = extract_features(&w0, &data).unwrap();
        let labels: Vec<f64> = (0..data.n()).map(|i| data.y(i)).collect();
        let lambda = (1.0f64 / 1e-3).ln() + 1.0;
        let res = hinge_flow_auto_dt(&feats, &labels, lambda, 0.5, 60_000, Some(1.0)).unwrap();
        let max_hinge = res
            .margins
            .iter()
            .map(|&z| squared_hinge(z, lambda).unwrap().0)
            .fold(0.0f64, f64::max);
        assert!(max_hinge <= 1.0, "max hinge {max_hinge}");
        for &z in &res.margins {
            assert!(z >= lambda - 1.0);
            assert!(cross_entropy(z) <= 1.01 * (-(lambda - 1.0)).exp());
        }
    }

    #[test]
    fn hinge_dt_too_large_errors() {
        let (_, data, feats) = tiny_setup(21);
        let labels: Vec<f64> = (0..data.n()).map(|i| data.y(i)).collect();
        let err = hinge_flow_last_hidden(&feats, &labels, 2.0, 1e9, 50, None).unwrap_err();
        assert!(matches!(err, Error::StepSize(_)), "got {err:?}");
    }

    #[test]
    fn default_dt_formula() {
        assert_eq!(default_hinge_dt(10, 4, 0.5).unwrap(), 1000.0 / 16.0);
        assert!(default_hinge_dt(10, 4, 0.0).is_err());
    }

    #[test]
    fn init_output_magnitude_width_independent() {
        // median over 20 seeds of max_i |f0_i| at n=256 changes by < 2x
        // between m=64 and m=1024.
        let mut medians = Vec::new();
        for m in [64usize, 1024] {
            let shape = NetworkShape { d: 10, m, l: 2 };
            let mut vals = Vec::new();
            for seed in 0..20u64 {
                let w0 = init_weights(shape, 400 + seed);
                let data = gen_margin_dataset(256, 10, 0.05, 500 + seed).unwrap();
                let mut max_abs = 0.0f64;
                for i in 0..data.n() {
                    max_abs = max_abs.max(forward(&w0, data.x(i)).unwrap().score.abs());
                }
                vals.push(max_abs);
            }
            vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
            medians.push(vals[vals.len() / 2]);
        }
        let ratio = (medians[1] / medians[0]).max(medians[0] / medians[1]);
        assert!(ratio < 2.0, "medians {medians:?}");
    }

    use crate::data::LabeledDataset;
}
