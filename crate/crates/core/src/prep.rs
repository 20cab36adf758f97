//! Repetition averaging, window averaging and fold-wise z-scoring.
//!
//! All sums run over ascending sample (or repetition) index with a plain
//! accumulator, so results are bit-reproducible regardless of how epochs are
//! distributed across threads.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{BrainResponse, Epoch};
use crate::error::{Error, Result};

/// Element-wise mean over repetitions of one (subject, sentence, position).
/// The result carries repetition 0.
pub fn average_repetitions(epochs: &[Epoch]) -> Result<Epoch> {
    let mut sorted: Vec<&Epoch> = epochs.iter().collect();
    sorted.sort_by_key(|e| e.repetition);
    let first = *sorted
        .first()
        .ok_or_else(|| Error::invalid("cannot average zero repetitions"))?;
    let shape = first.samples.shape();
    for e in &sorted {
        if e.samples.shape() != shape {
            return Err(Error::shape(
                format!("repetition {} of ({}, {})", e.repetition, e.sentence_id, e.position),
                format!("{shape:?}"),
                format!("{:?}", e.samples.shape()),
            ));
        }
        if e.subject_id != first.subject_id || e.sentence_id != first.sentence_id || e.position != first.position {
            return Err(Error::invalid(format!(
                "averaging mixes stimuli ({}, {}) and ({}, {})",
                first.sentence_id, first.position, e.sentence_id, e.position
            )));
        }
    }
    let n = sorted.len() as f64;
    let mut acc = DMatrix::zeros(shape.0, shape.1);
    for e in &sorted {
        acc += &e.samples;
    }
    acc /= n;
    Ok(Epoch {
        repetition: 0,
        samples: acc,
        ..first.clone()
    })
}

/// Group epochs by (subject, sentence, position) and average each group.
/// Output is sorted by that key.
pub fn average_all(epochs: &[Epoch]) -> Result<Vec<Epoch>> {
    let mut groups: BTreeMap<(String, String, usize), Vec<Epoch>> = BTreeMap::new();
    for e in epochs {
        groups
            .entry((e.subject_id.clone(), e.sentence_id.clone(), e.position))
            .or_default()
            .push(e.clone());
    }
    groups.values().map(|g| average_repetitions(g)).collect()
}

/// Samples per window, or an error when the window does not tile the epoch.
pub fn window_samples(n_samples: usize, sample_rate: f64, window_ms: f64) -> Result<usize> {
    let k = window_ms * sample_rate / 1000.0;
    if !(k >= 1.0) || (k - k.round()).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "{window_ms} ms at {sample_rate} Hz is not a whole number of samples"
        )));
    }
    let k = k.round() as usize;
    if !n_samples.is_multiple_of(k) {
        return Err(Error::invalid(format!(
            "epoch of {n_samples} samples is not divisible into windows of {k} samples"
        )));
    }
    Ok(k)
}

/// Mean over non-overlapping windows: column `w` averages samples
/// `[w*k, (w+1)*k)` of each sensor.
pub fn window_average(epoch: &Epoch, window_ms: f64) -> Result<BrainResponse> {
    let (sensors, t) = epoch.samples.shape();
    let k = window_samples(t, epoch.sample_rate, window_ms)?;
    let windows = t / k;
    let mut values = DMatrix::zeros(sensors, windows);
    for s in 0..sensors {
        for w in 0..windows {
            let mut sum = 0.0;
            for i in w * k..(w + 1) * k {
                sum += epoch.samples[(s, i)];
            }
            values[(s, w)] = sum / k as f64;
        }
    }
    Ok(BrainResponse {
        subject_id: epoch.subject_id.clone(),
        sentence_id: epoch.sentence_id.clone(),
        position: epoch.position,
        repetition: epoch.repetition,
        values,
    })
}

/// Per-feature z-scoring statistics computed on a training fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormalizationStats {
    /// Population statistics over the rows of `train` (samples x features).
    pub fn fit(train: &DMatrix<f64>) -> Result<Self> {
        let (n, d) = train.shape();
        if n < 2 {
            return Err(Error::invalid(format!(
                "normalization needs at least 2 training samples, got {n}"
            )));
        }
        let mut mean = vec![0.0; d];
        let mut std = vec![0.0; d];
        for j in 0..d {
            let mut sum = 0.0;
            for i in 0..n {
                sum += train[(i, j)];
            }
            let m = sum / n as f64;
            let mut ss = 0.0;
            for i in 0..n {
                let dv = train[(i, j)] - m;
                ss += dv * dv;
            }
            mean[j] = m;
            std[j] = (ss / n as f64).sqrt();
        }
        Ok(Self { mean, std })
    }

    pub fn fit_responses(train: &[&BrainResponse]) -> Result<Self> {
        Self::fit(&crate::data::response_matrix(train)?)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// A feature is degenerate when its spread is at rounding level relative
    /// to its magnitude.
    fn degenerate(&self, j: usize) -> bool {
        self.std[j] <= 1e-12 * self.mean[j].abs().max(1.0)
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.dim() {
            return Err(Error::shape("normalization width", self.dim(), x.ncols()));
        }
        Ok(DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| {
            if self.degenerate(j) {
                0.0
            } else {
                (x[(i, j)] - self.mean[j]) / self.std[j]
            }
        }))
    }

    /// Map normalized values back to the original scale. Degenerate features
    /// return their training mean.
    pub fn invert(&self, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if z.ncols() != self.dim() {
            return Err(Error::shape("normalization width", self.dim(), z.ncols()));
        }
        Ok(DMatrix::from_fn(z.nrows(), z.ncols(), |i, j| {
            if self.degenerate(j) {
                self.mean[j]
            } else {
                z[(i, j)] * self.std[j] + self.mean[j]
            }
        }))
    }

    pub fn apply_response(&self, r: &BrainResponse) -> Result<BrainResponse> {
        let flat = DMatrix::from_row_slice(1, r.sensors() * r.windows(), &r.flatten());
        let z = self.apply(&flat)?;
        BrainResponse::from_flat(r, z.as_slice(), r.sensors(), r.windows())
    }
}
