//! Full-batch gradient descent and single-pass online SGD with trajectory
//! recording, early stopping, and periodic weight snapshots.

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::losses::cross_entropy;
use crate::losses::cross_entropy_prime;
use crate::network::{accumulate_gradient, dataset_pass, forward, GradientStack, NetworkShape, WeightStack};
use crate::rng::Rng;
use std::io::Write;

#[derive(Debug, Clone, Copy)]
pub struct TrainConfig {
    pub eta: f64,
    /// Iteration budget.
    pub steps: usize,
    pub seed: u64,
    /// 0 = never snapshot.
    pub snapshot_every: usize,
    /// Early stop once the training loss reaches this level.
    pub target_loss: Option<f64>,
    /// Additionally require err01 = 0 before the early stop triggers.
    pub require_zero_err: bool,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta >= 0.0) {
            return Err(Error::InvalidInput(format!("eta must be >= 0, got {}", self.eta)));
        }
        if self.steps < 1 {
            return Err(Error::InvalidInput("iteration budget must be >= 1".into()));
        }
        Ok(())
    }
}

/// Metrics of one recorded iterate.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub loss: f64,
    pub err01: f64,
    pub surrogate: f64,
    /// Per-layer Frobenius distance from the initialization.
    pub dist: Vec<f64>,
    pub best_loss: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub records: Vec<StepRecord>,
    /// (step, weights) pairs at the snapshot cadence; always includes step 0
    /// and the final step when snapshotting is enabled.
    pub snapshots: Vec<(usize, WeightStack)>,
    pub final_weights: WeightStack,
    pub best_loss: f64,
    pub best_step: usize,
}

impl Trajectory {
    /// Stream records as JSONL, one object per line.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for rec in &self.records {
            serde_json::to_writer(&mut out, rec).map_err(|e| Error::Container(e.to_string()))?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn final_record(&self) -> &StepRecord {
        self.records.last().expect("trajectory has at least the initial record")
    }
}

pub enum TrainMode {
    Gd,
    Sgd { r: f64, n: usize, eps_ntrf: f64 },
}

/// Prescribed step sizes: GD eta = c/(L*m); SGD
/// eta = c*min(L*R^2/(n*eps), 1/L)/m, with the 1/L branch taken when
/// eps = 0.
pub fn default_step_size(shape: NetworkShape, mode: TrainMode, c_eta: f64) -> f64 {
    let l = shape.l as f64;
    let m = shape.m as f64;
    match mode {
        TrainMode::Gd => c_eta / (l * m),
        TrainMode::Sgd { r, n, eps_ntrf } => {
            let branch = if eps_ntrf > 0.0 {
                (l * r * r / (n as f64 * eps_ntrf)).min(1.0 / l)
            } else {
                1.0 / l
            };
            c_eta * branch / m
        }
    }
}

fn should_stop(cfg: &TrainConfig, loss: f64, err01: f64) -> bool {
    match cfg.target_loss {
        Some(t) => loss <= t && (!cfg.require_zero_err || err01 == 0.0),
        None => false,
    }
}

/// Full-batch gradient descent: W <- W - eta * grad L_S(W).
pub fn gd_train(w0: &WeightStack, data: &LabeledDataset, cfg: &TrainConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let mut w = w0.clone();
    let mut records = Vec::new();
    let mut snapshots = Vec::new();
    let mut best_loss = f64::INFINITY;
    let mut best_step = 0;
    let mut stopped = false;
    let mut last_step = 0;
    for step in 0..=cfg.steps {
        let pass = dataset_pass(&w, data)?;
        if !pass.loss.is_finite() || !w.is_finite() {
            return Err(Error::Divergence {
                step,
                message: format!("non-finite loss or weights; last valid step {}", step.saturating_sub(1)),
            });
        }
        if pass.loss < best_loss {
            best_loss = pass.loss;
            best_step = step;
        }
        records.push(StepRecord {
            step,
            loss: pass.loss,
            err01: pass.err01,
            surrogate: pass.surrogate,
            dist: w.layer_dists(w0),
            best_loss,
        });
        if cfg.snapshot_every > 0 && step % cfg.snapshot_every == 0 {
            snapshots.push((step, w.clone()));
        }
        last_step = step;
        if should_stop(cfg, pass.loss, pass.err01) {
            stopped = true;
            break;
        }
        if step == cfg.steps {
            break;
        }
        w.add_scaled(-cfg.eta, &grad_as_stack(pass.grad));
    }
    if cfg.snapshot_every > 0 && snapshots.last().map(|s| s.0) != Some(last_step) {
        snapshots.push((last_step, w.clone()));
    }
    let _ = stopped;
    Ok(Trajectory { records, snapshots, final_weights: w, best_loss, best_step })
}

fn grad_as_stack(g: GradientStack) -> WeightStack {
    WeightStack { shape: g.shape, layers: g.layers }
}

/// Online SGD over an ordered stream: one update per example, iterates
/// W^(0)..W^(n-1) with the returned iterate drawn uniformly from them
/// before training starts (seeded by cfg.seed).
///
/// Per-step metrics are online: each record holds the loss/error of the
/// current iterate on the example about to be consumed, not full-dataset
/// statistics.
pub fn sgd_train(
    w0: &WeightStack,
    stream: &LabeledDataset,
    cfg: &TrainConfig,
) -> Result<(Trajectory, WeightStack)> {
    cfg.validate()?;
    let n = stream.n();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut rng = Rng::substream(cfg.seed, 0x56D);
    let chosen_index = rng.below(n);
    let mut chosen = None;
    let mut w = w0.clone();
    let mut records = Vec::with_capacity(n);
    let mut snapshots = Vec::new();
    let mut best_loss = f64::INFINITY;
    let mut best_step = 0;
    for i in 0..n {
        if i == chosen_index {
            chosen = Some(w.clone());
        }
        if cfg.snapshot_every > 0 && i % cfg.snapshot_every == 0 {
            snapshots.push((i, w.clone()));
        }
        let cache = forward(&w, stream.x(i))?;
        let y = stream.y(i);
        let z = y * cache.score;
        if !z.is_finite() || !w.is_finite() {
            return Err(Error::Divergence {
                step: i,
                message: format!("non-finite score or weights; last valid step {}", i.saturating_sub(1)),
            });
        }
        let loss = cross_entropy(z);
        let lp = cross_entropy_prime(z);
        if loss < best_loss {
            best_loss = loss;
            best_step = i;
        }
        records.push(StepRecord {
            step: i,
            loss,
            err01: if z <= 0.0 { 1.0 } else { 0.0 },
            surrogate: -lp,
            dist: w.layer_dists(w0),
            best_loss,
        });
        let mut grad = GradientStack::zeros(w.shape);
        accumulate_gradient(&w, &cache, lp * y, &mut grad);
        w.add_scaled(-cfg.eta, &grad_as_stack(grad));
    }
    if cfg.snapshot_every > 0 && snapshots.last().map(|s| s.0) != Some(n - 1) {
        snapshots.push((n - 1, w.clone()));
    }
    let chosen = chosen.expect("chosen index below n");
    Ok((
        Trajectory { records, snapshots, final_weights: w, best_loss, best_step },
        chosen,
    ))
}
