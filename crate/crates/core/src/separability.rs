//! Dataset-difficulty diagnostics: tangent-feature margin, shallow
//! two-layer NTK margin estimated by Monte Carlo, cross-class minimum
//! distance, and the constructive first-layer witness for two-layer
//! networks.

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::matrix::{axpy, dot, norm2, Matrix};
use crate::network::{forward, network_gradient, WeightStack};
use crate::ntrf::NtrfFeatures;
use crate::rng::Rng;

/// Exact minimum distance between examples of opposite class.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct PhiReport {
    pub phi: f64,
    pub witness: (usize, usize),
}

pub fn class_distance(data: &LabeledDataset) -> Result<PhiReport> {
    let n = data.n();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let labels = data.labels();
    if labels.iter().all(|&y| y == labels[0]) {
        return Err(Error::SingleClass);
    }
    let mut best = f64::INFINITY;
    let mut witness = (0, 0);
    for i in 0..n {
        for j in (i + 1)..n {
            if labels[i] == labels[j] {
                continue;
            }
            let dist_sq: f64 = data
                .x(i)
                .iter()
                .zip(data.x(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if dist_sq < best {
                best = dist_sq;
                witness = (i, j);
            }
        }
    }
    Ok(PhiReport { phi: best.sqrt(), witness })
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct NtrfMarginReport {
    /// Margin at the selected violation level, normalized by sqrt(m).
    pub gamma_hat: f64,
    /// Fraction of examples strictly below gamma_hat.
    pub rho_hat: f64,
    /// (rho, gamma at that rho) over the configured grid.
    pub grid: Vec<(f64, f64)>,
    /// Unit-Frobenius flattened direction.
    pub ustar: Vec<f64>,
}

pub const RHO_GRID: [f64; 4] = [0.0, 0.01, 0.05, 0.1];

/// Maximize a soft-min of normalized margins y_i <G_i, U> / sqrt(m) over
/// the unit-Frobenius-sum sphere by projected gradient ascent with an
/// annealed log-sum-exp temperature.
///
/// All internal scales (initial temperature, step length) are tied to the
/// feature magnitude, so scaling every feature by c > 0 scales gamma_hat by
/// exactly c and leaves the argmax direction unchanged.
pub fn ntrf_margin(
    features: &NtrfFeatures,
    labels: &[f64],
    iterations: usize,
) -> Result<NtrfMarginReport> {
    let n = features.n();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if labels.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "label count {} != feature count {n}",
            labels.len()
        )));
    }
    let len = features.shape.flat_len();
    let sqrt_m = (features.shape.m as f64).sqrt();
    let scale = (0..n)
        .map(|i| norm2(features.feat(i)) / sqrt_m)
        .fold(0.0f64, f64::max);
    if scale == 0.0 {
        return Err(Error::DegenerateFeatures);
    }

    // Warm start: the mean label-weighted feature direction.
    let mut u = vec![0.0; len];
    for i in 0..n {
        axpy(labels[i], features.feat(i), &mut u);
    }
    let un = norm2(&u);
    if un > 0.0 {
        u.iter_mut().for_each(|v| *v /= un);
    } else {
        u[0] = 1.0;
    }

    let margins = |u: &[f64]| -> Vec<f64> {
        (0..n).map(|i| labels[i] * dot(features.feat(i), u) / sqrt_m).collect()
    };

    let anneal_every = (iterations / 5).max(1);
    let mut temp = scale;
    let mut grad = vec![0.0; len];
    for it in 0..iterations {
        if it > 0 && it % anneal_every == 0 {
            temp *= 0.5;
        }
        let h = margins(&u);
        let h_min = h.iter().cloned().fold(f64::MAX, f64::min);
        // Softmax of -h/temp, stabilized at the minimum.
        let mut wsum = 0.0;
        let weights: Vec<f64> = h
            .iter()
            .map(|&hi| {
                let w = (-(hi - h_min) / temp).exp();
                wsum += w;
                w
            })
            .collect();
        grad.iter_mut().for_each(|g| *g = 0.0);
        for i in 0..n {
            axpy(weights[i] / wsum * labels[i] / sqrt_m, features.feat(i), &mut grad);
        }
        let gn = norm2(&grad);
        if gn == 0.0 {
            break;
        }
        let step = (temp / scale).min(0.5);
        axpy(step / gn, &grad, &mut u);
        let un = norm2(&u);
        u.iter_mut().for_each(|v| *v /= un);
    }

    let mut h = margins(&u);
    let mut sorted = h.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let grid: Vec<(f64, f64)> = RHO_GRID
        .iter()
        .map(|&rho| {
            let k = ((rho * n as f64).floor() as usize).min(n - 1);
            (rho, sorted[k])
        })
        .collect();
    // Headline: the smallest violation level with a positive margin, else
    // the raw minimum.
    let (rho_sel, gamma_hat) = grid
        .iter()
        .cloned()
        .find(|&(_, g)| g > 0.0)
        .unwrap_or(grid[0]);
    let rho_hat = h.iter().filter(|&&m| m < gamma_hat).count() as f64 / n as f64;
    h.clear();
    let _ = rho_sel;
    Ok(NtrfMarginReport { gamma_hat, rho_hat, grid, ustar: u })
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ShallowMarginReport {
    pub gamma_hat: f64,
    pub k: usize,
    /// One vector u_j per Monte Carlo sample, each with norm <= 1.
    pub umap: Vec<Vec<f64>>,
}

/// Monte Carlo shallow NTK margin: draw k Gaussian samples z_j and maximize
/// min_i y_i (1/k) sum_j 1{<z_j,x_i> > 0} <u_j, x_i> over ||u_j|| <= 1.
pub fn shallow_ntk_margin(
    data: &LabeledDataset,
    k: usize,
    seed: u64,
    iterations: usize,
) -> Result<ShallowMarginReport> {
    if k < 1 {
        return Err(Error::InvalidInput("need k >= 1 Monte Carlo samples".into()));
    }
    let d = data.dim();
    let mut rng = Rng::substream(seed, 0x54A1);
    let zs: Vec<Vec<f64>> = (0..k).map(|_| rng.normal_vec(d)).collect();
    shallow_margin_with_samples(data, &zs, iterations)
}

/// Same optimization with caller-provided activation samples. The ReLU
/// derivative only depends on the sign of <z, x>, so any set of direction
/// vectors (for instance the first-layer rows of a real initialization)
/// serves as the sample set.
pub fn shallow_margin_with_samples(
    data: &LabeledDataset,
    zs: &[Vec<f64>],
    iterations: usize,
) -> Result<ShallowMarginReport> {
    let n = data.n();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let k = zs.len();
    if k == 0 {
        return Err(Error::InvalidInput("need at least one sample direction".into()));
    }
    let d = data.dim();
    // Activation pattern a[j][i] packed as i-major per sample j.
    let active: Vec<Vec<bool>> = zs
        .iter()
        .map(|z| (0..n).map(|i| dot(z, data.x(i)) > 0.0).collect())
        .collect();

    // Warm start: per-sample normalized label-weighted mean of active x_i.
    let mut umap: Vec<Vec<f64>> = Vec::with_capacity(k);
    for j in 0..k {
        let mut u = vec![0.0; d];
        for i in 0..n {
            if active[j][i] {
                axpy(data.y(i), data.x(i), &mut u);
            }
        }
        let norm = norm2(&u);
        if norm > 0.0 {
            u.iter_mut().for_each(|v| *v /= norm);
        }
        umap.push(u);
    }

    let margins = |umap: &[Vec<f64>]| -> Vec<f64> {
        (0..n)
            .map(|i| {
                let mut s = 0.0;
                for j in 0..k {
                    if active[j][i] {
                        s += dot(&umap[j], data.x(i));
                    }
                }
                data.y(i) * s / k as f64
            })
            .collect()
    };

    let anneal_every = (iterations / 5).max(1);
    let mut temp = 1.0f64;
    for it in 0..iterations {
        if it > 0 && it % anneal_every == 0 {
            temp *= 0.5;
        }
        let h = margins(&umap);
        let h_min = h.iter().cloned().fold(f64::MAX, f64::min);
        let mut wsum = 0.0;
        let weights: Vec<f64> = h
            .iter()
            .map(|&hi| {
                let w = (-(hi - h_min) / temp).exp();
                wsum += w;
                w
            })
            .collect();
        let step = temp.min(1.0) * k as f64;
        for j in 0..k {
            let mut g = vec![0.0; d];
            for i in 0..n {
                if active[j][i] {
                    axpy(weights[i] / wsum * data.y(i) / k as f64, data.x(i), &mut g);
                }
            }
            axpy(step, &g, &mut umap[j]);
            let norm = norm2(&umap[j]);
            if norm > 1.0 {
                umap[j].iter_mut().for_each(|v| *v /= norm);
            }
        }
    }

    let h = margins(&umap);
    let gamma_hat = h.into_iter().fold(f64::MAX, f64::min);
    Ok(ShallowMarginReport { gamma_hat, k, umap })
}

#[derive(Debug, Clone)]
pub struct WitnessReport {
    /// The m x d first-layer direction.
    pub u: Matrix,
    /// Per-example first-layer-feature margins y_i <grad_W1 f(x_i), U>.
    pub margins: Vec<f64>,
    /// Surviving row count |S|.
    pub survivors: usize,
}

/// Constructive first-layer witness for a two-layer network: rows j with
/// |w2_j| >= 0.47 m^{-1/2} survive; on those rows v_j = u_j / w2_j, and
/// U = V / sqrt(m |S|). The 0.47 threshold encodes
/// P(|N(0,1)| >= 0.47) >= 1/2 for the N(0, 1/m) output layer and is not
/// configurable. ||U||_F <= 1/0.47 <= 2.2 always holds.
pub fn shallow_witness(
    w0: &WeightStack,
    umap: &[Vec<f64>],
    data: &LabeledDataset,
) -> Result<WitnessReport> {
    let shape = w0.shape;
    if shape.l != 2 {
        return Err(Error::InvalidInput(format!(
            "witness construction requires a 2-layer network, got L={}",
            shape.l
        )));
    }
    if umap.len() != shape.m {
        return Err(Error::DimensionMismatch(format!(
            "umap has {} entries, need one per hidden unit (m={})",
            umap.len(),
            shape.m
        )));
    }
    for (j, u) in umap.iter().enumerate() {
        if u.len() != shape.d {
            return Err(Error::DimensionMismatch(format!("umap[{j}] has wrong dimension")));
        }
        if norm2(u) > 1.0 + 1e-8 {
            return Err(Error::InvalidInput(format!("umap[{j}] exceeds the unit ball")));
        }
    }
    let m = shape.m;
    let threshold = 0.47 / (m as f64).sqrt();
    let w2 = w0.layers[1].row(0);
    let survivors: Vec<usize> = (0..m).filter(|&j| w2[j].abs() >= threshold).collect();
    if survivors.is_empty() {
        return Err(Error::EmptySurvivors);
    }
    let s = survivors.len();
    let norm_factor = 1.0 / ((m * s) as f64).sqrt();
    let mut u = Matrix::zeros(m, d_of(shape));
    for &j in &survivors {
        let row = u.row_mut(j);
        for (rv, &uv) in row.iter_mut().zip(&umap[j]) {
            *rv = uv / w2[j] * norm_factor;
        }
    }
    let mut margins = Vec::with_capacity(data.n());
    for i in 0..data.n() {
        let cache = forward(w0, data.x(i))?;
        let grad = network_gradient(w0, &cache)?;
        margins.push(data.y(i) * dot(&grad.layers[0].data, &u.data));
    }
    Ok(WitnessReport { u, margins, survivors: s })
}

fn d_of(shape: crate::network::NetworkShape) -> usize {
    shape.d
}
