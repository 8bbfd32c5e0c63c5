//! Toy dataset generators, the MNIST IDX loader, CSV import/export, and
//! epoch batching.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Test,
}

impl fmt::Display for SplitTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitTag::Train => "train",
            SplitTag::Test => "test",
        })
    }
}

/// Points plus one label vector per hierarchy level (coarse to fine) and a
/// per-row split tag.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    pub points: Matrix,
    pub labels: Vec<Vec<usize>>,
    pub split: Vec<SplitTag>,
}

impl LabeledDataset {
    /// Validates lengths and that each finer level refines the coarser one:
    /// every fine class must map into exactly one coarse class.
    pub fn new(points: Matrix, labels: Vec<Vec<usize>>, split: Vec<SplitTag>) -> Result<Self> {
        let n = points.rows();
        if labels.is_empty() {
            return Err(Error::invalid("dataset needs at least one label level"));
        }
        for (k, level) in labels.iter().enumerate() {
            if level.len() != n {
                return Err(Error::invalid(format!(
                    "label level {k} has {} entries for {n} points",
                    level.len()
                )));
            }
        }
        if split.len() != n {
            return Err(Error::invalid(format!(
                "split has {} entries for {n} points",
                split.len()
            )));
        }
        for k in 1..labels.len() {
            let mut fine_to_coarse: Vec<Option<usize>> = Vec::new();
            for (&fine, &coarse) in labels[k].iter().zip(&labels[k - 1]) {
                if fine_to_coarse.len() <= fine {
                    fine_to_coarse.resize(fine + 1, None);
                }
                match fine_to_coarse[fine] {
                    None => fine_to_coarse[fine] = Some(coarse),
                    Some(c) if c == coarse => {}
                    Some(c) => {
                        return Err(Error::invalid(format!(
                            "level {k} class {fine} maps to coarse classes {c} and {coarse}"
                        )))
                    }
                }
            }
        }
        Ok(LabeledDataset {
            points,
            labels,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.points.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.cols()
    }

    pub fn levels(&self) -> usize {
        self.labels.len()
    }

    /// Number of classes at a level (max label + 1).
    pub fn num_classes(&self, level: usize) -> usize {
        self.labels[level].iter().max().map_or(0, |&m| m + 1)
    }

    pub fn select(&self, idx: &[usize]) -> Result<LabeledDataset> {
        let points = self.points.select_rows(idx)?;
        let labels = self
            .labels
            .iter()
            .map(|lv| idx.iter().map(|&i| lv[i]).collect())
            .collect();
        let split = idx.iter().map(|&i| self.split[i]).collect();
        Ok(LabeledDataset {
            points,
            labels,
            split,
        })
    }

    pub fn subset(&self, tag: SplitTag) -> Result<LabeledDataset> {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| self.split[i] == tag).collect();
        self.select(&idx)
    }

    /// First n rows, in order.
    pub fn take(&self, n: usize) -> Result<LabeledDataset> {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.select(&idx)
    }

    /// Randomly retag rows so that `train_fraction` of them are Train.
    pub fn assign_split(&mut self, train_fraction: f64, rng: &mut Rng) -> Result<()> {
        if !(0.0..=1.0).contains(&train_fraction) {
            return Err(Error::invalid(format!(
                "train fraction {train_fraction} outside [0, 1]"
            )));
        }
        let n = self.len();
        let mut idx: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut idx);
        let n_train = (train_fraction * n as f64).round() as usize;
        for (rank, &i) in idx.iter().enumerate() {
            self.split[i] = if rank < n_train {
                SplitTag::Train
            } else {
                SplitTag::Test
            };
        }
        Ok(())
    }

    /// CSV with columns `x_0..x_{D-1}, label_0..label_{K-1}, split`.
    /// Floats are written in shortest round-trip form.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for d in 0..self.dim() {
            out.push_str(&format!("x_{d},"));
        }
        for k in 0..self.levels() {
            out.push_str(&format!("label_{k},"));
        }
        out.push_str("split\n");
        for i in 0..self.len() {
            for &v in self.points.row(i) {
                out.push_str(&format!("{v},"));
            }
            for level in &self.labels {
                out.push_str(&format!("{},", level[i]));
            }
            out.push_str(&format!("{}\n", self.split[i]));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<LabeledDataset> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::format("header", "empty file"))?;
        let cols: Vec<&str> = header.split(',').collect();
        let dim = cols.iter().filter(|c| c.starts_with("x_")).count();
        let levels = cols.iter().filter(|c| c.starts_with("label_")).count();
        if dim == 0 || levels == 0 || cols.last() != Some(&"split") {
            return Err(Error::format(
                "header",
                "expected x_* columns, label_* columns, and a trailing split column",
            ));
        }
        let mut data = Vec::new();
        let mut labels: Vec<Vec<usize>> = vec![Vec::new(); levels];
        let mut split = Vec::new();
        for (lineno, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != dim + levels + 1 {
                return Err(Error::format(
                    format!("row {}", lineno + 2),
                    format!("expected {} fields, got {}", dim + levels + 1, fields.len()),
                ));
            }
            for f in &fields[..dim] {
                let v: f64 = f.parse().map_err(|_| {
                    Error::format(format!("row {}", lineno + 2), format!("bad float {f:?}"))
                })?;
                data.push(v);
            }
            for (k, f) in fields[dim..dim + levels].iter().enumerate() {
                let v: usize = f.parse().map_err(|_| {
                    Error::format(format!("row {}", lineno + 2), format!("bad label {f:?}"))
                })?;
                labels[k].push(v);
            }
            split.push(match fields[dim + levels] {
                "train" => SplitTag::Train,
                "test" => SplitTag::Test,
                other => {
                    return Err(Error::format(
                        format!("row {}", lineno + 2),
                        format!("bad split tag {other:?}"),
                    ))
                }
            });
        }
        let n = split.len();
        let points = Matrix::from_vec(n, dim, data)?;
        LabeledDataset::new(points, labels, split)
    }
}

fn ring_a_point(t: f64) -> [f64; 3] {
    [t.cos(), t.sin(), 0.0]
}

fn ring_b_point(t: f64) -> [f64; 3] {
    [1.0 + t.cos(), 0.0, t.sin()]
}

/// Two unit circles in orthogonal planes with centers offset by 1: the
/// minimal linked (Hopf pair) configuration. Ring A is `(cos t, sin t, 0)`,
/// ring B is `(1 + cos t, 0, sin t)`, t uniform on [0, 2pi); optional
/// Gaussian noise per coordinate; one label level, ring id 0 or 1.
pub fn gen_entangled_rings(
    n_per_ring: usize,
    noise_variance: f64,
    rng: &mut Rng,
) -> Result<LabeledDataset> {
    if n_per_ring < 3 {
        return Err(Error::invalid("rings: need at least 3 points per ring"));
    }
    if noise_variance < 0.0 {
        return Err(Error::invalid("rings: negative noise variance"));
    }
    let n = 2 * n_per_ring;
    let sd = noise_variance.sqrt();
    let mut data = Vec::with_capacity(n * 3);
    let mut labels = Vec::with_capacity(n);
    for ring in 0..2 {
        for _ in 0..n_per_ring {
            let t = rng.uniform(0.0, std::f64::consts::TAU);
            let p = if ring == 0 {
                ring_a_point(t)
            } else {
                ring_b_point(t)
            };
            for coord in p {
                data.push(coord + if sd > 0.0 { rng.normal(0.0, sd) } else { 0.0 });
            }
            labels.push(ring);
        }
    }
    let points = Matrix::from_vec(n, 3, data)?;
    LabeledDataset::new(points, vec![labels], vec![SplitTag::Train; n])
}

/// Torus `((R + r cos theta) cos phi, (R + r cos theta) sin phi, r sin theta)`
/// with both angles uniform on [0, 2pi) and Gaussian coordinate noise.
/// Two label levels over the toroidal angle phi: halves then quarters, the
/// quarters refining the halves.
pub fn gen_torus(
    n: usize,
    big_radius: f64,
    small_radius: f64,
    noise_variance: f64,
    rng: &mut Rng,
) -> Result<LabeledDataset> {
    if n == 0 {
        return Err(Error::invalid("torus: need at least one point"));
    }
    if !(big_radius > small_radius && small_radius > 0.0) {
        return Err(Error::invalid(format!(
            "torus: need R > r > 0, got R={big_radius} r={small_radius}"
        )));
    }
    if noise_variance < 0.0 {
        return Err(Error::invalid("torus: negative noise variance"));
    }
    let sd = noise_variance.sqrt();
    let mut data = Vec::with_capacity(n * 3);
    let mut coarse = Vec::with_capacity(n);
    let mut fine = Vec::with_capacity(n);
    for _ in 0..n {
        let theta = rng.uniform(0.0, std::f64::consts::TAU);
        let phi = rng.uniform(0.0, std::f64::consts::TAU);
        let ring = big_radius + small_radius * theta.cos();
        let p = [
            ring * phi.cos(),
            ring * phi.sin(),
            small_radius * theta.sin(),
        ];
        for coord in p {
            data.push(coord + if sd > 0.0 { rng.normal(0.0, sd) } else { 0.0 });
        }
        // angular sectors: 2 halves refined into 4 quarters
        let quarter = ((phi / std::f64::consts::TAU) * 4.0).floor() as usize % 4;
        fine.push(quarter);
        coarse.push(quarter / 2);
    }
    let points = Matrix::from_vec(n, 3, data)?;
    LabeledDataset::new(points, vec![coarse, fine], vec![SplitTag::Train; n])
}

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;
const MNIST_SIDE: usize = 28;

fn read_u32_be(bytes: &[u8], offset: usize, field: &str) -> Result<u32> {
    let slice = bytes
        .get(offset..offset + 4)
        .ok_or_else(|| Error::format(field, "file truncated"))?;
    Ok(u32::from_be_bytes(slice.try_into().unwrap()))
}

/// Parse the big-endian IDX pair into a dataset: pixels scaled from
/// [0, 255] bytes to [0, 1] floats and flattened to 784 per row, one label
/// level 0-9.
pub fn load_mnist_idx(images_path: &Path, labels_path: &Path) -> Result<LabeledDataset> {
    let images = std::fs::read(images_path)?;
    let labels = std::fs::read(labels_path)?;
    parse_mnist_idx(&images, &labels)
}

pub fn parse_mnist_idx(images: &[u8], labels: &[u8]) -> Result<LabeledDataset> {
    let magic = read_u32_be(images, 0, "image magic")?;
    if magic != IMAGE_MAGIC {
        return Err(Error::format(
            "image magic",
            format!("expected 0x{IMAGE_MAGIC:08x}, got 0x{magic:08x}"),
        ));
    }
    let count = read_u32_be(images, 4, "image count")? as usize;
    let rows = read_u32_be(images, 8, "image dims")? as usize;
    let cols = read_u32_be(images, 12, "image dims")? as usize;
    if rows != MNIST_SIDE || cols != MNIST_SIDE {
        return Err(Error::format(
            "image dims",
            format!("expected 28x28, got {rows}x{cols}"),
        ));
    }
    let pixels = &images[16..];
    if pixels.len() != count * MNIST_SIDE * MNIST_SIDE {
        return Err(Error::format(
            "image data",
            format!(
                "expected {} pixel bytes for {count} images, got {}",
                count * MNIST_SIDE * MNIST_SIDE,
                pixels.len()
            ),
        ));
    }

    let lmagic = read_u32_be(labels, 0, "label magic")?;
    if lmagic != LABEL_MAGIC {
        return Err(Error::format(
            "label magic",
            format!("expected 0x{LABEL_MAGIC:08x}, got 0x{lmagic:08x}"),
        ));
    }
    let lcount = read_u32_be(labels, 4, "label count")? as usize;
    if lcount != count {
        return Err(Error::format(
            "count",
            format!("{count} images but {lcount} labels"),
        ));
    }
    let label_bytes = &labels[8..];
    if label_bytes.len() != lcount {
        return Err(Error::format(
            "label data",
            format!("expected {lcount} label bytes, got {}", label_bytes.len()),
        ));
    }
    if let Some(&bad) = label_bytes.iter().find(|&&b| b > 9) {
        return Err(Error::format(
            "label value",
            format!("label byte {bad} outside 0-9"),
        ));
    }

    let data: Vec<f64> = pixels.iter().map(|&b| b as f64 / 255.0).collect();
    let points = Matrix::from_vec(count, MNIST_SIDE * MNIST_SIDE, data)?;
    let labels: Vec<usize> = label_bytes.iter().map(|&b| b as usize).collect();
    LabeledDataset::new(points, vec![labels], vec![SplitTag::Train; count])
}

/// Re-serialize a 784-wide dataset to IDX bytes. Inverse of
/// [`parse_mnist_idx`] down to the byte level.
pub fn mnist_to_idx_bytes(ds: &LabeledDataset) -> Result<(Vec<u8>, Vec<u8>)> {
    if ds.dim() != MNIST_SIDE * MNIST_SIDE {
        return Err(Error::invalid(format!(
            "idx export: expected 784 columns, got {}",
            ds.dim()
        )));
    }
    let n = ds.len();
    let mut images = Vec::with_capacity(16 + n * ds.dim());
    images.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    images.extend_from_slice(&(n as u32).to_be_bytes());
    images.extend_from_slice(&(MNIST_SIDE as u32).to_be_bytes());
    images.extend_from_slice(&(MNIST_SIDE as u32).to_be_bytes());
    for &v in ds.points.data() {
        images.push((v * 255.0).round() as u8);
    }
    let mut labels = Vec::with_capacity(8 + n);
    labels.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    labels.extend_from_slice(&(n as u32).to_be_bytes());
    for &l in &ds.labels[0] {
        labels.push(l as u8);
    }
    Ok((images, labels))
}

/// Shuffled partition of `0..N` into consecutive batches; the final short
/// batch is kept. Deterministic given the RNG state.
pub fn make_batches(
    ds: &LabeledDataset,
    batch_size: usize,
    rng: &mut Rng,
) -> Result<Vec<Vec<usize>>> {
    let n = ds.len();
    if batch_size == 0 || batch_size > n {
        return Err(Error::invalid(format!(
            "batch size {batch_size} for {n} points"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut idx);
    Ok(idx.chunks(batch_size).map(|c| c.to_vec()).collect())
}
