use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::MapKind;
use crate::error::{Error, Result};

/// Cells per room axis; position labels are `0..GRID`.
pub const GRID: usize = 15;

/// Provenance of a dataset, kept alongside the binary file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub map: MapKind,
    pub crop_size: usize,
    pub checkpoint_id: String,
    pub seed: u64,
}

/// Activations of one tap with the agent's room position at the time.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationDataset {
    pub tap: String,
    pub dim: usize,
    pub margin: u8,
    /// `[len, dim]`, row-major.
    pub activations: Vec<f32>,
    pub xs: Vec<u8>,
    pub ys: Vec<u8>,
    pub meta: Option<DatasetMeta>,
}

impl ActivationDataset {
    pub fn new(tap: impl Into<String>, dim: usize) -> Self {
        Self {
            tap: tap.into(),
            dim,
            margin: 0,
            activations: Vec::new(),
            xs: Vec::new(),
            ys: Vec::new(),
            meta: None,
        }
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn push(&mut self, activation: &[f32], x: u8, y: u8) -> Result<()> {
        if activation.len() != self.dim {
            return Err(Error::Dataset(format!(
                "record of dim {} in `{}` (dim {})",
                activation.len(),
                self.tap,
                self.dim
            )));
        }
        if x as usize >= GRID || y as usize >= GRID {
            return Err(Error::Dataset(format!("position ({x}, {y}) outside the room")));
        }
        self.activations.extend_from_slice(activation);
        self.xs.push(x);
        self.ys.push(y);
        Ok(())
    }

    pub fn record(&self, i: usize) -> &[f32] {
        &self.activations[i * self.dim..(i + 1) * self.dim]
    }

    /// A new dataset holding records `idx`, in that order.
    pub fn select(&self, idx: &[usize]) -> Self {
        let mut out = Self {
            activations: Vec::with_capacity(idx.len() * self.dim),
            xs: Vec::with_capacity(idx.len()),
            ys: Vec::with_capacity(idx.len()),
            ..Self::new(self.tap.clone(), self.dim)
        };
        out.margin = self.margin;
        out.meta = self.meta.clone();
        for &i in idx {
            out.activations.extend_from_slice(self.record(i));
            out.xs.push(self.xs[i]);
            out.ys.push(self.ys[i]);
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.xs.len();
        if self.ys.len() != n || self.activations.len() != n * self.dim {
            return Err(Error::Dataset("record arrays disagree in length".into()));
        }
        let m = self.margin as usize;
        let ok = |c: u8| (m..GRID - m).contains(&(c as usize));
        if !self.xs.iter().chain(&self.ys).all(|&c| ok(c)) {
            return Err(Error::Dataset(format!("coordinate outside {m}..{}", GRID - 1 - m)));
        }
        Ok(())
    }
}

/// Drops records within `margin` cells of any room edge.
pub fn filter_boundary(ds: &ActivationDataset, margin: u8) -> Result<ActivationDataset> {
    if margin > 2 {
        return Err(Error::OutOfRange { what: "margin", value: margin as usize, limit: 2 });
    }
    let (lo, hi) = (margin, (GRID - 1) as u8 - margin);
    let keep: Vec<usize> = (0..ds.len())
        .filter(|&i| (lo..=hi).contains(&ds.xs[i]) && (lo..=hi).contains(&ds.ys[i]))
        .collect();
    if keep.is_empty() {
        return Err(Error::Dataset(format!("no records survive margin {margin}")));
    }
    let mut out = ds.select(&keep);
    out.margin = margin.max(ds.margin);
    Ok(out)
}

/// Train/test counts for `available` records: the requested sizes when they
/// fit, otherwise the same ratio scaled down (floored).
pub fn split_sizes(available: usize, n_train: usize, n_test: usize) -> Result<(usize, usize)> {
    let want = n_train + n_test;
    let (tr, te) = if want <= available {
        (n_train, n_test)
    } else {
        let a = available as u128;
        (
            (a * n_train as u128 / want as u128) as usize,
            (a * n_test as u128 / want as u128) as usize,
        )
    };
    if tr == 0 || te == 0 {
        return Err(Error::Dataset(format!(
            "{available} records cannot be split into {n_train} train / {n_test} test"
        )));
    }
    Ok((tr, te))
}

/// Seeded shuffle, then the first `train` records train and the next
/// `test` records test.
pub fn split_dataset(
    ds: &ActivationDataset,
    n_train: usize,
    n_test: usize,
    seed: u64,
) -> Result<(ActivationDataset, ActivationDataset)> {
    let (tr, te) = split_sizes(ds.len(), n_train, n_test)?;
    let mut idx: Vec<usize> = (0..ds.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok((ds.select(&idx[..tr]), ds.select(&idx[tr..tr + te])))
}
