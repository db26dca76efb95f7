//! Random collocation datasets and per-iteration batch draws.
//!
//! Interior points are uniform over the open unit hypercube; boundary
//! points are uniform over the faces (faces picked uniformly — all have
//! equal area — with the in-face coordinates drawn from the open
//! interval, so corners and edges are never emitted). Datasets are fixed
//! once sampled; training iterates over them in shuffled epochs, or, in
//! fresh mode, draws new points every step.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DgmError, Result};

/// Densely packed list of `dim`-dimensional points.
#[derive(Clone, Debug, PartialEq)]
pub struct PointSet {
    dim: usize,
    data: Vec<f64>,
}

impl PointSet {
    pub fn new(dim: usize) -> Self {
        PointSet { dim, data: Vec::new() }
    }

    pub fn with_capacity(dim: usize, n: usize) -> Self {
        PointSet {
            dim,
            data: Vec::with_capacity(dim * n),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn push(&mut self, x: &[f64]) {
        debug_assert_eq!(x.len(), self.dim);
        self.data.extend_from_slice(x);
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    /// Copy the rows at `indices` into a new set.
    pub fn select(&self, indices: &[usize]) -> PointSet {
        let mut out = PointSet::with_capacity(self.dim, indices.len());
        for &i in indices {
            out.push(self.get(i));
        }
        out
    }
}

/// A fixed collocation dataset: interior and boundary points plus the
/// seed that generated them.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub dim: usize,
    pub interior: PointSet,
    pub boundary: PointSet,
    pub seed: u64,
}

impl Dataset {
    /// Sample `total` points: `ceil(boundary_fraction * total)` on the
    /// boundary, the rest interior. Identical `(dim, total, fraction,
    /// seed)` reproduce the dataset exactly.
    pub fn sample(dim: usize, total: usize, boundary_fraction: f64, seed: u64) -> Result<Dataset> {
        if dim < 2 || dim > 3 {
            return Err(DgmError::Config(format!("dataset dimension must be 2 or 3, got {dim}")));
        }
        if total < 2 {
            return Err(DgmError::Config("dataset needs at least 2 points".into()));
        }
        if !(boundary_fraction > 0.0 && boundary_fraction < 1.0) {
            return Err(DgmError::Config(format!(
                "boundary_fraction must lie in (0,1), got {boundary_fraction}"
            )));
        }
        let n_boundary = (boundary_fraction * total as f64).ceil() as usize;
        let n_interior = total - n_boundary;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        let mut interior = PointSet::with_capacity(dim, n_interior);
        let mut buf = vec![0.0; dim];
        for _ in 0..n_interior {
            sample_interior(&mut rng, &mut buf);
            interior.push(&buf);
        }
        let mut boundary = PointSet::with_capacity(dim, n_boundary);
        for _ in 0..n_boundary {
            sample_face(&mut rng, &mut buf);
            boundary.push(&buf);
        }
        Ok(Dataset {
            dim,
            interior,
            boundary,
            seed,
        })
    }

    pub fn total(&self) -> usize {
        self.interior.len() + self.boundary.len()
    }

    /// The stock dataset-size family: 2D sizes 1000/2000/4000/8000,
    /// 3D sizes 1200/2400/4800/9600 for `k` in 1..=4.
    pub fn stock_size(dim: usize, k: usize) -> Result<usize> {
        let base = match dim {
            2 => 1000,
            3 => 1200,
            d => return Err(DgmError::Config(format!("stock datasets are 2D or 3D, got {d}"))),
        };
        if !(1..=4).contains(&k) {
            return Err(DgmError::Config(format!("dataset index must be 1..=4, got {k}")));
        }
        Ok(base << (k - 1))
    }

    /// Write as CSV: one point per row, coordinates then a region tag.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let header: &str = match self.dim {
            2 => "x,y,region",
            _ => "x,y,z,region",
        };
        writeln!(w, "{header}")?;
        for p in self.interior.iter() {
            for c in p {
                write!(w, "{c},")?;
            }
            writeln!(w, "interior")?;
        }
        for p in self.boundary.iter() {
            for c in p {
                write!(w, "{c},")?;
            }
            writeln!(w, "boundary")?;
        }
        Ok(())
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    /// Read a dataset written by [`Dataset::write_csv`].
    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Dataset> {
        let reader = BufReader::new(r);
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| DgmError::Parse("empty dataset file".into()))??;
        let dim = match header.trim() {
            "x,y,region" => 2,
            "x,y,z,region" => 3,
            other => return Err(DgmError::Parse(format!("unrecognized dataset header '{other}'"))),
        };
        let mut interior = PointSet::new(dim);
        let mut boundary = PointSet::new(dim);
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.trim().split(',').collect();
            if fields.len() != dim + 1 {
                return Err(DgmError::Parse(format!(
                    "dataset line {}: expected {} fields, got {}",
                    lineno + 2,
                    dim + 1,
                    fields.len()
                )));
            }
            let mut point = vec![0.0; dim];
            for (c, field) in point.iter_mut().zip(&fields) {
                *c = field
                    .parse()
                    .map_err(|e| DgmError::Parse(format!("dataset line {}: {e}", lineno + 2)))?;
            }
            match fields[dim] {
                "interior" => interior.push(&point),
                "boundary" => boundary.push(&point),
                other => return Err(DgmError::Parse(format!("unknown region tag '{other}'"))),
            }
        }
        Ok(Dataset {
            dim,
            interior,
            boundary,
            seed: 0,
        })
    }

    pub fn read_csv_file(path: &Path) -> Result<Dataset> {
        Dataset::read_csv(std::fs::File::open(path)?)
    }
}

fn sample_interior(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    for c in out.iter_mut() {
        // gen_range(0.0..1.0) can return exactly 0.0; redraw so the
        // point stays strictly inside
        *c = loop {
            let v: f64 = rng.gen_range(0.0..1.0);
            if v > 0.0 {
                break v;
            }
        };
    }
}

fn sample_face(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    let d = out.len();
    let face = rng.gen_range(0..2 * d);
    let axis = face / 2;
    for (j, c) in out.iter_mut().enumerate() {
        if j == axis {
            *c = if face % 2 == 0 { 0.0 } else { 1.0 };
        } else {
            *c = loop {
                let v: f64 = rng.gen_range(0.0..1.0);
                if v > 0.0 {
                    break v;
                }
            };
        }
    }
}

/// Whether training iterates over the fixed dataset or draws brand-new
/// points every step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMode {
    Fixed,
    Fresh,
}

impl Default for SamplingMode {
    fn default() -> Self {
        SamplingMode::Fixed
    }
}

/// Without-replacement epoch iterator over `0..n`: each epoch is a fresh
/// deterministic shuffle of the index range.
#[derive(Clone, Debug)]
pub struct BatchStream {
    indices: Vec<usize>,
    pos: usize,
    rng: ChaCha8Rng,
}

impl BatchStream {
    pub fn new(n: usize, seed: u64) -> Self {
        let mut s = BatchStream {
            indices: (0..n).collect(),
            pos: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        s.reshuffle();
        s
    }

    fn reshuffle(&mut self) {
        self.indices.shuffle(&mut self.rng);
        self.pos = 0;
    }

    /// The next `k` indices of the current epoch; reshuffles when fewer
    /// than `k` remain.
    pub fn next_indices(&mut self, k: usize) -> Result<&[usize]> {
        if self.indices.is_empty() {
            return Err(DgmError::EmptyBatch("batch stream over an empty set"));
        }
        if k > self.indices.len() {
            return Err(DgmError::Config(format!(
                "batch size {k} exceeds dataset size {}",
                self.indices.len()
            )));
        }
        if self.pos + k > self.indices.len() {
            self.reshuffle();
        }
        let out = &self.indices[self.pos..self.pos + k];
        self.pos += k;
        Ok(out)
    }
}

/// Batch source for the training loop: paired interior/boundary draws
/// from a fixed dataset, or freshly sampled points each call.
pub struct BatchSampler<'a> {
    dataset: &'a Dataset,
    mode: SamplingMode,
    interior: BatchStream,
    boundary: BatchStream,
    fresh_rng: ChaCha8Rng,
}

impl<'a> BatchSampler<'a> {
    pub fn new(dataset: &'a Dataset, mode: SamplingMode, seed: u64) -> Self {
        BatchSampler {
            dataset,
            mode,
            interior: BatchStream::new(dataset.interior.len(), seed.wrapping_add(0x9e37_79b9)),
            boundary: BatchStream::new(dataset.boundary.len(), seed.wrapping_add(0x85eb_ca6b)),
            fresh_rng: ChaCha8Rng::seed_from_u64(seed.wrapping_add(0xc2b2_ae35)),
        }
    }

    pub fn next_batch(&mut self, n_interior: usize, n_boundary: usize) -> Result<(PointSet, PointSet)> {
        match self.mode {
            SamplingMode::Fixed => {
                let xi = self.interior.next_indices(n_interior)?.to_vec();
                let ri = self.boundary.next_indices(n_boundary)?.to_vec();
                Ok((self.dataset.interior.select(&xi), self.dataset.boundary.select(&ri)))
            }
            SamplingMode::Fresh => {
                let dim = self.dataset.dim;
                let mut buf = vec![0.0; dim];
                let mut interior = PointSet::with_capacity(dim, n_interior);
                for _ in 0..n_interior {
                    sample_interior(&mut self.fresh_rng, &mut buf);
                    interior.push(&buf);
                }
                let mut boundary = PointSet::with_capacity(dim, n_boundary);
                for _ in 0..n_boundary {
                    sample_face(&mut self.fresh_rng, &mut buf);
                    boundary.push(&buf);
                }
                Ok((interior, boundary))
            }
        }
    }
}
