//! Measurement instruments for the quantities driving the analysis:
//! the linearization defect eps_app(tau) and gradient bound M(tau) over a
//! per-layer Frobenius ball around initialization, the initialization output
//! magnitude, and the per-step descent-inequality audit along recorded
//! trajectories.
//!
//! The sup over the uncountable ball is approximated from below by a
//! documented candidate strategy: trained iterates plus random radial
//! samples. Estimates are reported as lower estimates, never as the sup.

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::network::{forward, network_gradient, WeightStack};
use crate::rng::Rng;
use crate::trainer::Trajectory;

#[derive(Debug, Clone)]
pub struct BallSpec {
    pub center: WeightStack,
    /// Per-layer Frobenius radius.
    pub tau: f64,
}

impl BallSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau >= 0.0) {
            return Err(Error::InvalidInput(format!("tau must be >= 0, got {}", self.tau)));
        }
        Ok(())
    }

    /// Whether `w` lies in the ball up to slack 1 + 1e-12.
    pub fn contains(&self, w: &WeightStack) -> bool {
        w.layer_dists(&self.center)
            .iter()
            .all(|&d| d <= self.tau * (1.0 + 1e-12) + 1e-300)
    }

    /// Clip `w` onto the ball by rescaling each layer's displacement
    /// independently; returns whether any layer needed clipping.
    pub fn clip(&self, w: &WeightStack) -> (WeightStack, bool) {
        let mut out = w.clone();
        let mut clipped = false;
        for (idx, dist) in w.layer_dists(&self.center).iter().enumerate() {
            if *dist > self.tau {
                clipped = true;
                let s = if *dist == 0.0 { 0.0 } else { self.tau / dist };
                let c = &self.center.layers[idx];
                let layer = &mut out.layers[idx];
                for (v, &cv) in layer.data.iter_mut().zip(&c.data) {
                    *v = cv + (*v - cv) * s;
                }
            }
        }
        (out, clipped)
    }

    /// A random point at per-layer Frobenius radius `r` from the center:
    /// i.i.d. Gaussian direction per layer, normalized to radius r.
    pub fn sample_at_radius(&self, r: f64, rng: &mut Rng) -> WeightStack {
        let mut out = self.center.clone();
        for layer in out.layers.iter_mut() {
            let dir = rng.normal_vec(layer.data.len());
            let norm = crate::matrix::norm2(&dir);
            if norm > 0.0 {
                let s = r / norm;
                for (v, d) in layer.data.iter_mut().zip(&dir) {
                    *v += s * d;
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ProbeReport {
    pub eps_app_hat: f64,
    pub m_hat: f64,
    pub init_out_max: f64,
    pub candidates_evaluated: usize,
    pub clip_warnings: usize,
}

/// Linearization defect of one ordered pair: base point's gradients are
/// taken once per example and dotted against the flat displacement.
fn pair_defect(
    base: &WeightStack,
    base_flat: &[f64],
    other_flats: &[&[f64]],
    data: &LabeledDataset,
    other_scores: &mut [Vec<f64>],
) -> Result<f64> {
    let mut max_defect = 0.0f64;
    for i in 0..data.n() {
        let cache = forward(base, data.x(i))?;
        let grad = network_gradient(base, &cache)?.flatten();
        for (k, flat) in other_flats.iter().enumerate() {
            let lin: f64 = grad
                .iter()
                .zip(flat.iter().zip(base_flat))
                .map(|(g, (b, a))| g * (b - a))
                .sum();
            let defect = (other_scores[k][i] - cache.score - lin).abs();
            max_defect = max_defect.max(defect);
        }
    }
    Ok(max_defect)
}

fn scores_of(w: &WeightStack, data: &LabeledDataset) -> Result<Vec<f64>> {
    (0..data.n()).map(|i| forward(w, data.x(i)).map(|c| c.score)).collect()
}

/// Lower estimate of eps_app(tau): maximum linearization defect over all
/// ordered pairs from {center} + clipped candidates, plus `random_budget`
/// random ordered pairs at radii tau/2 and tau.
pub fn approx_error_probe(
    ball: &BallSpec,
    data: &LabeledDataset,
    candidates: &[WeightStack],
    random_budget: usize,
    seed: u64,
) -> Result<(f64, usize, usize)> {
    ball.validate()?;
    if data.n() == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut clip_warnings = 0usize;
    let mut points: Vec<WeightStack> = vec![ball.center.clone()];
    for c in candidates {
        let (clipped, warned) = ball.clip(c);
        if warned {
            clip_warnings += 1;
        }
        points.push(clipped);
    }
    debug_assert!(points.iter().all(|p| ball.contains(p)));

    let flats: Vec<Vec<f64>> = points.iter().map(|p| p.flatten()).collect();
    let scores: Vec<Vec<f64>> = points
        .iter()
        .map(|p| scores_of(p, data))
        .collect::<Result<_>>()?;

    let mut max_defect = 0.0f64;
    let mut evaluated = 0usize;
    // All ordered pairs among the candidate pool: one gradient sweep per
    // base point, dotted against every partner.
    for a in 0..points.len() {
        let other_flats: Vec<&[f64]> = (0..points.len())
            .filter(|&b| b != a)
            .map(|b| flats[b].as_slice())
            .collect();
        let mut other_scores: Vec<Vec<f64>> = (0..points.len())
            .filter(|&b| b != a)
            .map(|b| scores[b].clone())
            .collect();
        if !other_flats.is_empty() {
            let d = pair_defect(&points[a], &flats[a], &other_flats, data, &mut other_scores)?;
            max_defect = max_defect.max(d);
            evaluated += other_flats.len();
        }
    }
    // Random radial pairs at the extreme radii.
    let mut rng = Rng::substream(seed, 0xBA11);
    for k in 0..random_budget {
        let ra = if k % 2 == 0 { ball.tau } else { ball.tau / 2.0 };
        let rb = if k % 2 == 0 { ball.tau / 2.0 } else { ball.tau };
        let pa = ball.sample_at_radius(ra, &mut rng);
        let pb = ball.sample_at_radius(rb, &mut rng);
        let fa = pa.flatten();
        let fb = pb.flatten();
        let sa = scores_of(&pa, data)?;
        let sb = scores_of(&pb, data)?;
        // Both orderings: the defect is asymmetric in the gradient base.
        let d1 = pair_defect(&pa, &fa, &[fb.as_slice()], data, &mut [sb.clone()])?;
        let d2 = pair_defect(&pb, &fb, &[fa.as_slice()], data, &mut [sa])?;
        max_defect = max_defect.max(d1).max(d2);
        evaluated += 2;
    }
    Ok((max_defect, clip_warnings, evaluated))
}

/// Lower estimate of M(tau): maximum per-layer gradient Frobenius norm over
/// {center} + clipped candidates + random radial samples.
pub fn grad_bound_probe(
    ball: &BallSpec,
    data: &LabeledDataset,
    candidates: &[WeightStack],
    random_budget: usize,
    seed: u64,
) -> Result<(f64, usize, usize)> {
    ball.validate()?;
    if data.n() == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut clip_warnings = 0usize;
    let mut points: Vec<WeightStack> = vec![ball.center.clone()];
    for c in candidates {
        let (clipped, warned) = ball.clip(c);
        if warned {
            clip_warnings += 1;
        }
        points.push(clipped);
    }
    let mut rng = Rng::substream(seed, 0x6BAD);
    for k in 0..random_budget {
        let r = if k % 2 == 0 { ball.tau } else { ball.tau / 2.0 };
        points.push(ball.sample_at_radius(r, &mut rng));
    }
    debug_assert!(points.iter().all(|p| ball.contains(p)));
    let mut m_hat = 0.0f64;
    for p in &points {
        for i in 0..data.n() {
            let cache = forward(p, data.x(i))?;
            let grad = network_gradient(p, &cache)?;
            m_hat = m_hat.max(grad.max_layer_norm());
        }
    }
    Ok((m_hat, clip_warnings, points.len()))
}

/// max_i |f_{W0}(x_i)|.
pub fn init_output_probe(w0: &WeightStack, data: &LabeledDataset) -> Result<f64> {
    if data.n() == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut out = 0.0f64;
    for i in 0..data.n() {
        out = out.max(forward(w0, data.x(i))?.score.abs());
    }
    Ok(out)
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct AuditReport {
    /// One residual lhs - rhs per audited snapshot interval.
    pub residuals: Vec<f64>,
    pub lhs_sum: f64,
    pub rhs_sum: f64,
    /// Telescoped margin = lhs_sum - rhs_sum = sum of residuals.
    pub margin: f64,
    pub pass: bool,
    /// Set when the factor 3/2 - 4*eps_app_hat is not positive.
    pub warning: Option<String>,
}

/// Audit the per-step descent inequality in telescoped form over consecutive
/// snapshot intervals of a recorded trajectory:
///
///   lhs = ||W^(a) - W*||_F^2 - ||W^(b) - W*||_F^2
///   rhs = sum over steps t in [a, b) of
///         (3/2 - 4*eps_app_hat) * eta * L_S(W^(t)) - 2 * eta * eps_ntrf
///
/// The inequality telescopes over any sub-partition of consecutive
/// snapshots, so skipping steps between snapshots is valid. The audit uses
/// the probed eps_app_hat (an under-estimate of the sup), so a pass is
/// evidence, not proof.
pub fn lemma51_audit(
    traj: &Trajectory,
    wstar: &WeightStack,
    eta: f64,
    eps_app_hat: f64,
    eps_ntrf: f64,
) -> Result<AuditReport> {
    if traj.snapshots.len() < 2 {
        return Err(Error::MissingSnapshots);
    }
    let factor = 1.5 - 4.0 * eps_app_hat;
    let warning = if factor <= 0.0 {
        Some(format!(
            "degenerate factor 3/2 - 4*eps_app_hat = {factor} <= 0; inequality carries no force"
        ))
    } else {
        None
    };
    let loss_by_step: std::collections::HashMap<usize, f64> =
        traj.records.iter().map(|r| (r.step, r.loss)).collect();
    let mut residuals = Vec::new();
    let mut lhs_sum = 0.0;
    let mut rhs_sum = 0.0;
    for pair in traj.snapshots.windows(2) {
        let (step_a, ref w_a) = pair[0];
        let (step_b, ref w_b) = pair[1];
        let lhs = w_a.dist_sq(wstar) - w_b.dist_sq(wstar);
        let mut rhs = 0.0;
        for t in step_a..step_b {
            let loss = *loss_by_step.get(&t).ok_or(Error::MissingSnapshots)?;
            rhs += factor * eta * loss - 2.0 * eta * eps_ntrf;
        }
        residuals.push(lhs - rhs);
        lhs_sum += lhs;
        rhs_sum += rhs;
    }
    let margin = lhs_sum - rhs_sum;
    Ok(AuditReport { residuals, lhs_sum, rhs_sum, margin, pass: margin >= 0.0, warning })
}
