//! Labeled datasets: synthetic generators with guaranteed separability
//! structure, CSV ingestion with unit-norm enforcement, and a binary
//! container for bit-exact persistence.
//!
//! Every dataset leaving this module satisfies the invariants: unit-norm
//! inputs (within 1e-9) and labels in {-1, +1}.

use crate::container::{Reader, Writer};
use crate::error::{Error, Result};
use crate::matrix::{dot, norm2};
use crate::rng::Rng;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write as _};
use std::path::Path;

const REJECTION_BUDGET: usize = 1_000_000;
const DATASET_MAGIC: &[u8; 4] = b"NTKD";
const DATASET_VERSION: u32 = 1;

/// Binary classification dataset with unit-norm inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    d: usize,
    xs: Vec<f64>, // row-major, n x d
    ys: Vec<i8>,
    /// Seed the dataset was generated from; 0 for external data.
    pub seed: u64,
}

impl LabeledDataset {
    pub fn new(d: usize, xs: Vec<f64>, ys: Vec<i8>, seed: u64) -> Result<Self> {
        let data = LabeledDataset { d, xs, ys, seed };
        data.validate()?;
        Ok(data)
    }

    /// Construct without the unit-norm check (for data that will be
    /// projected afterwards). Labels are still validated.
    pub fn new_unnormalized(d: usize, xs: Vec<f64>, ys: Vec<i8>, seed: u64) -> Result<Self> {
        if xs.len() != ys.len() * d {
            return Err(Error::DimensionMismatch(format!(
                "{} coordinates for {} examples of dimension {}",
                xs.len(),
                ys.len(),
                d
            )));
        }
        if let Some(i) = ys.iter().position(|&y| y != 1 && y != -1) {
            return Err(Error::InvalidInput(format!("label at row {i} not in {{-1,+1}}")));
        }
        Ok(LabeledDataset { d, xs, ys, seed })
    }

    pub fn n(&self) -> usize {
        self.ys.len()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn x(&self, i: usize) -> &[f64] {
        &self.xs[i * self.d..(i + 1) * self.d]
    }

    #[inline]
    pub fn y(&self, i: usize) -> f64 {
        self.ys[i] as f64
    }

    pub fn label(&self, i: usize) -> i8 {
        self.ys[i]
    }

    pub fn labels(&self) -> &[i8] {
        &self.ys
    }

    /// Check the module invariants: unit norms within 1e-9, labels in {-1,+1}.
    pub fn validate(&self) -> Result<()> {
        if self.xs.len() != self.ys.len() * self.d {
            return Err(Error::DimensionMismatch(format!(
                "{} coordinates for {} examples of dimension {}",
                self.xs.len(),
                self.ys.len(),
                self.d
            )));
        }
        for i in 0..self.n() {
            let n = norm2(self.x(i));
            if (n - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidInput(format!("row {i} has norm {n}, expected 1")));
            }
            if self.ys[i] != 1 && self.ys[i] != -1 {
                return Err(Error::InvalidInput(format!("label at row {i} not in {{-1,+1}}")));
            }
        }
        Ok(())
    }

    /// Take the first `k` examples.
    pub fn head(&self, k: usize) -> LabeledDataset {
        let k = k.min(self.n());
        LabeledDataset {
            d: self.d,
            xs: self.xs[..k * self.d].to_vec(),
            ys: self.ys[..k].to_vec(),
            seed: self.seed,
        }
    }

    /// Split into the first `k` examples and the rest. Both halves come from
    /// the same generating stream, so a generated dataset can be split into
    /// train and test sets that share the underlying distribution.
    pub fn split_at(&self, k: usize) -> (LabeledDataset, LabeledDataset) {
        let k = k.min(self.n());
        let head = self.head(k);
        let tail = LabeledDataset {
            d: self.d,
            xs: self.xs[k * self.d..].to_vec(),
            ys: self.ys[k..].to_vec(),
            seed: self.seed,
        };
        (head, tail)
    }
}

/// Sample points uniformly from the unit sphere, keep those with
/// teacher margin |<w, x>| >= gamma, and label by the sign. The hidden
/// teacher is itself drawn from the seed.
pub fn gen_margin_dataset(n: usize, d: usize, gamma: f64, seed: u64) -> Result<LabeledDataset> {
    if d < 2 {
        return Err(Error::InvalidInput(format!("need d >= 2, got {d}")));
    }
    if !(0.0 < gamma && gamma < 1.0) {
        return Err(Error::InvalidInput(format!("need 0 < gamma < 1, got {gamma}")));
    }
    let mut rng = Rng::substream(seed, 0xDA7A);
    let teacher = rng.unit_vector(d);
    let mut xs = Vec::with_capacity(n * d);
    let mut ys = Vec::with_capacity(n);
    let mut rejections = 0usize;
    while ys.len() < n {
        let x = rng.unit_vector(d);
        let margin = dot(&teacher, &x);
        if margin.abs() >= gamma {
            xs.extend_from_slice(&x);
            ys.push(if margin >= 0.0 { 1 } else { -1 });
        } else {
            rejections += 1;
            if rejections > REJECTION_BUDGET {
                return Err(Error::BudgetExceeded(format!(
                    "margin sampler rejected {rejections} points at gamma={gamma}, d={d}"
                )));
            }
        }
    }
    LabeledDataset::new(d, xs, ys, seed)
}

/// Flip exactly floor(rho * n) labels, chosen uniformly without replacement.
/// Flipping twice with the same seed restores the original labels.
pub fn flip_labels(data: &LabeledDataset, rho: f64, seed: u64) -> Result<LabeledDataset> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::InvalidInput(format!("need 0 <= rho < 1, got {rho}")));
    }
    let k = (rho * data.n() as f64).floor() as usize;
    let mut rng = Rng::substream(seed, 0xF11B);
    let idx = rng.choose_indices(data.n(), k);
    let mut out = data.clone();
    for i in idx {
        out.ys[i] = -out.ys[i];
    }
    Ok(out)
}

/// Random-label dataset with guaranteed cross-class separation: every pair
/// of examples with opposite labels is at Euclidean distance >= phi.
pub fn gen_phi_dataset(n: usize, d: usize, phi: f64, seed: u64) -> Result<LabeledDataset> {
    if !(0.0 < phi && phi < 2.0) {
        return Err(Error::InvalidInput(format!("need 0 < phi < 2, got {phi}")));
    }
    let mut rng = Rng::substream(seed, 0x0411);
    let mut xs: Vec<f64> = Vec::with_capacity(n * d);
    let mut ys: Vec<i8> = Vec::with_capacity(n);
    let mut rejections = 0usize;
    while ys.len() < n {
        let x = rng.unit_vector(d);
        // Alternate labels so both classes are present and the class-distance
        // constraint actually binds; purely random labels can starve one class
        // and silently fill the dataset with the other.
        let y: i8 = if ys.len() % 2 == 0 { 1 } else { -1 };
        let phi_sq = phi * phi;
        let ok = (0..ys.len()).all(|j| {
            if ys[j] == y {
                return true;
            }
            let xj = &xs[j * d..(j + 1) * d];
            let dist_sq: f64 = x.iter().zip(xj).map(|(a, b)| (a - b) * (a - b)).sum();
            dist_sq >= phi_sq
        });
        if ok {
            xs.extend_from_slice(&x);
            ys.push(y);
        } else {
            rejections += 1;
            if rejections > REJECTION_BUDGET {
                return Err(Error::BudgetExceeded(format!(
                    "phi sampler rejected {rejections} points at phi={phi}, d={d}, placed {}",
                    ys.len()
                )));
            }
        }
    }
    LabeledDataset::new(d, xs, ys, seed)
}

/// Rescale every input to unit norm. Zero-norm rows are rejected.
pub fn project_unit(data: &LabeledDataset) -> Result<LabeledDataset> {
    let mut xs = data.xs.clone();
    for i in 0..data.n() {
        let row = &mut xs[i * data.d..(i + 1) * data.d];
        let n = norm2(row);
        if n < 1e-12 {
            return Err(Error::InvalidInput(format!("zero-norm row at index {i}")));
        }
        row.iter_mut().for_each(|v| *v /= n);
    }
    LabeledDataset::new(data.d, xs, data.ys.clone(), data.seed)
}

/// Load a dataset from CSV with header `x0,...,x{d-1},y`.
/// Inputs are not projected; run `project_unit` for external data.
pub fn load_csv(path: &Path) -> Result<LabeledDataset> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Parse { line: 1, message: "empty file".into() })?;
    let header = header?;
    let cols: Vec<&str> = header.trim().split(',').collect();
    if cols.len() < 2 || cols.last() != Some(&"y") {
        return Err(Error::Parse { line: 1, message: format!("bad header: {header}") });
    }
    let d = cols.len() - 1;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (lineno, line) in lines {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != d + 1 {
            return Err(Error::Parse {
                line: lineno + 1,
                message: format!("expected {} fields, got {}", d + 1, fields.len()),
            });
        }
        for f in &fields[..d] {
            let v: f64 = f.trim().parse().map_err(|e| Error::Parse {
                line: lineno + 1,
                message: format!("bad float {f:?}: {e}"),
            })?;
            xs.push(v);
        }
        let y: i64 = fields[d].trim().parse().map_err(|e| Error::Parse {
            line: lineno + 1,
            message: format!("bad label {:?}: {e}", fields[d]),
        })?;
        if y != 1 && y != -1 {
            return Err(Error::Parse {
                line: lineno + 1,
                message: format!("label {y} not in {{-1,+1}}"),
            });
        }
        ys.push(y as i8);
    }
    LabeledDataset::new_unnormalized(d, xs, ys, 0)
}

/// Save a dataset as CSV (lossless float formatting; parses back bit-exact).
pub fn save_csv(data: &LabeledDataset, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let header: Vec<String> = (0..data.d).map(|i| format!("x{i}")).collect();
    writeln!(w, "{},y", header.join(","))?;
    for i in 0..data.n() {
        let row: Vec<String> = data.x(i).iter().map(|v| format!("{v:?}")).collect();
        writeln!(w, "{},{}", row.join(","), data.ys[i])?;
    }
    w.flush()?;
    Ok(())
}

/// Save to the versioned binary container (bit-exact round trip).
pub fn save_bin(data: &LabeledDataset, path: &Path) -> Result<()> {
    let mut w = Writer::new(BufWriter::new(File::create(path)?), DATASET_MAGIC, DATASET_VERSION)?;
    w.put_u64(data.n() as u64)?;
    w.put_u64(data.d as u64)?;
    w.put_u64(data.seed)?;
    w.put_f64_slice(&data.xs)?;
    w.put_i8_slice(&data.ys)?;
    w.finish()
}

pub fn load_bin(path: &Path) -> Result<LabeledDataset> {
    let mut r = Reader::new(BufReader::new(File::open(path)?), DATASET_MAGIC, DATASET_VERSION)?;
    let n = r.get_u64()? as usize;
    let d = r.get_u64()? as usize;
    let seed = r.get_u64()?;
    let xs = r.get_f64_slice()?;
    let ys = r.get_i8_slice()?;
    if xs.len() != n * d || ys.len() != n {
        return Err(Error::Container("section lengths disagree with header".into()));
    }
    LabeledDataset::new(d, xs, ys, seed)
}
