//! Classification accuracy, isometry-quality diagnostics, and empirical
//! Lipschitz estimation.

use crate::datasets::LabeledDataset;
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Rng};
use crate::network::StackedLilNetwork;

/// Per-class summary of how well representation distances track input
/// distances. `pearson_r` is NaN when undefined (constant distances);
/// `empirical_k` is the largest observed expansion ratio.
#[derive(Clone, Debug)]
pub struct ClassIsometry {
    pub class: usize,
    pub pearson_r: f64,
    pub mean_abs_residual: f64,
    pub empirical_k: f64,
    pub n_pairs: usize,
}

#[derive(Clone, Debug, Default)]
pub struct IsometryReport {
    pub classes: Vec<ClassIsometry>,
    pub warnings: Vec<String>,
}

impl IsometryReport {
    /// CSV schema: `class,pearson_r,mean_abs_residual,empirical_K,n_pairs`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,pearson_r,mean_abs_residual,empirical_K,n_pairs\n");
        for c in &self.classes {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                c.class, c.pearson_r, c.mean_abs_residual, c.empirical_k, c.n_pairs
            ));
        }
        out
    }
}

/// Index of the row maximum; ties break toward the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Fraction of argmax-correct predictions at one hierarchy level; ties
/// break toward the lowest class index. Assumes the block-per-level layout
/// used throughout: block k classifies level k.
pub fn accuracy(net: &StackedLilNetwork, ds: &LabeledDataset, level: usize) -> Result<f64> {
    if level >= net.num_blocks() || level >= ds.levels() {
        return Err(Error::invalid(format!(
            "accuracy: level {level} outside network ({} blocks) or dataset ({} levels)",
            net.num_blocks(),
            ds.levels()
        )));
    }
    if ds.is_empty() {
        return Err(Error::invalid("accuracy: empty dataset"));
    }
    let traces = net.forward(&ds.points)?;
    let logits = &traces[level].logits;
    let labels = &ds.labels[level];
    let correct = (0..ds.len())
        .filter(|&i| argmax(logits.row(i)) == labels[i])
        .count();
    Ok(correct as f64 / ds.len() as f64)
}

fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    let denom = (sxx * syy).sqrt();
    if denom < 1e-300 {
        f64::NAN
    } else {
        (sxy / denom).clamp(-1.0, 1.0)
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    let mut sq = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        sq += (x - y) * (x - y);
    }
    sq.max(0.0).sqrt()
}

fn class_indices(labels: &[usize]) -> Vec<(usize, Vec<usize>)> {
    let mut out: Vec<(usize, Vec<usize>)> = Vec::new();
    for (i, &l) in labels.iter().enumerate() {
        match out.iter_mut().find(|(c, _)| *c == l) {
            Some((_, v)) => v.push(i),
            None => out.push((l, vec![i])),
        }
    }
    out.sort_by_key(|(c, _)| *c);
    out
}

fn summarize_class(
    class: usize,
    d_in: &[f64],
    d_repr: &[f64],
    warnings: &mut Vec<String>,
) -> ClassIsometry {
    let n_pairs = d_in.len();
    let pearson_r = pearson(d_in, d_repr);
    if pearson_r.is_nan() {
        warnings.push(format!(
            "class {class}: distance correlation undefined (zero variance)"
        ));
    }
    let mean_abs_residual = d_in
        .iter()
        .zip(d_repr)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / n_pairs as f64;
    let mut k = 0.0f64;
    let mut any_ratio = false;
    for (&a, &b) in d_in.iter().zip(d_repr) {
        if a > 1e-9 {
            k = k.max(b / a);
            any_ratio = true;
        }
    }
    if !any_ratio {
        warnings.push(format!(
            "class {class}: no pairs with positive input distance, K reported as 0"
        ));
    }
    ClassIsometry {
        class,
        pearson_r,
        mean_abs_residual,
        empirical_k: k,
        n_pairs,
    }
}

/// Exact per-class isometry summary over all within-class pairs.
pub fn isometry_report(x: &Matrix, phi: &Matrix, labels: &[usize]) -> Result<IsometryReport> {
    isometry_report_impl(x, phi, labels, None)
}

/// Like [`isometry_report`] but caps the number of pairs per class,
/// sampling deterministically when a class exceeds the cap.
pub fn isometry_report_sampled(
    x: &Matrix,
    phi: &Matrix,
    labels: &[usize],
    max_pairs_per_class: usize,
    rng: &mut Rng,
) -> Result<IsometryReport> {
    if max_pairs_per_class == 0 {
        return Err(Error::invalid("isometry report: zero pair budget"));
    }
    isometry_report_impl(x, phi, labels, Some((max_pairs_per_class, rng)))
}

fn isometry_report_impl(
    x: &Matrix,
    phi: &Matrix,
    labels: &[usize],
    mut sampling: Option<(usize, &mut Rng)>,
) -> Result<IsometryReport> {
    let n = x.rows();
    if phi.rows() != n || labels.len() != n {
        return Err(Error::invalid(format!(
            "isometry report: {} points, {} representations, {} labels",
            n,
            phi.rows(),
            labels.len()
        )));
    }
    let mut report = IsometryReport::default();
    for (class, idx) in class_indices(labels) {
        if idx.len() < 2 {
            report
                .warnings
                .push(format!("class {class}: fewer than 2 points, skipped"));
            continue;
        }
        let total_pairs = idx.len() * (idx.len() - 1) / 2;
        let mut d_in = Vec::new();
        let mut d_repr = Vec::new();
        match sampling {
            Some((cap, ref mut rng)) if total_pairs > cap => {
                for _ in 0..cap {
                    let a = idx[rng.index(idx.len())];
                    let b = loop {
                        let b = idx[rng.index(idx.len())];
                        if b != a {
                            break b;
                        }
                    };
                    d_in.push(euclidean(x.row(a), x.row(b)));
                    d_repr.push(euclidean(phi.row(a), phi.row(b)));
                }
            }
            _ => {
                for (p, &a) in idx.iter().enumerate() {
                    for &b in &idx[p + 1..] {
                        d_in.push(euclidean(x.row(a), x.row(b)));
                        d_repr.push(euclidean(phi.row(a), phi.row(b)));
                    }
                }
            }
        }
        report
            .classes
            .push(summarize_class(class, &d_in, &d_repr, &mut report.warnings));
    }
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DistanceSpace {
    Input,
    Repr,
}

impl DistanceSpace {
    fn as_str(self) -> &'static str {
        match self {
            DistanceSpace::Input => "input",
            DistanceSpace::Repr => "repr",
        }
    }
}

#[derive(Clone, Debug)]
pub struct HistogramRow {
    pub class: usize,
    pub space: DistanceSpace,
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub count: usize,
}

/// Render histogram rows with schema `class,space,bin_lo,bin_hi,count`.
pub fn histogram_csv(rows: &[HistogramRow]) -> String {
    let mut out = String::from("class,space,bin_lo,bin_hi,count\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.class,
            r.space.as_str(),
            r.bin_lo,
            r.bin_hi,
            r.count
        ));
    }
    out
}

/// Per-class histograms of within-class pairwise distances in input and
/// representation space, over shared log-spaced bin edges spanning the
/// class's joint range. Distances at or below the lowest edge (including
/// exact zeros) land in the first bin; the top edge is inclusive.
pub fn distance_histogram(
    x: &Matrix,
    phi: &Matrix,
    labels: &[usize],
    n_bins: usize,
) -> Result<Vec<HistogramRow>> {
    if n_bins == 0 {
        return Err(Error::invalid("histogram: need at least one bin"));
    }
    let n = x.rows();
    if phi.rows() != n || labels.len() != n {
        return Err(Error::invalid("histogram: row count mismatch"));
    }
    let mut rows = Vec::new();
    for (class, idx) in class_indices(labels) {
        if idx.len() < 2 {
            continue;
        }
        let mut d_in = Vec::new();
        let mut d_repr = Vec::new();
        for (p, &a) in idx.iter().enumerate() {
            for &b in &idx[p + 1..] {
                d_in.push(euclidean(x.row(a), x.row(b)));
                d_repr.push(euclidean(phi.row(a), phi.row(b)));
            }
        }
        let all = d_in.iter().chain(&d_repr);
        let hi = all.clone().cloned().fold(0.0f64, f64::max);
        let lo = all
            .filter(|&&v| v > 0.0)
            .cloned()
            .fold(f64::INFINITY, f64::min);
        let (lo, hi) = if !lo.is_finite() || hi <= lo {
            (hi, hi) // degenerate: everything in the first bin
        } else {
            (lo, hi)
        };
        let edges: Vec<f64> = if hi > lo {
            let (ln_lo, ln_hi) = (lo.ln(), hi.ln());
            (0..=n_bins)
                .map(|k| (ln_lo + (ln_hi - ln_lo) * k as f64 / n_bins as f64).exp())
                .collect()
        } else {
            vec![lo; n_bins + 1]
        };
        let bin_of = |d: f64| -> usize {
            if hi <= lo || d <= lo {
                return 0;
            }
            if d >= hi {
                return n_bins - 1;
            }
            let frac = (d.ln() - lo.ln()) / (hi.ln() - lo.ln());
            ((frac * n_bins as f64).floor() as usize).min(n_bins - 1)
        };
        for (space, dists) in [
            (DistanceSpace::Input, &d_in),
            (DistanceSpace::Repr, &d_repr),
        ] {
            let mut counts = vec![0usize; n_bins];
            for &d in dists.iter() {
                counts[bin_of(d)] += 1;
            }
            for (k, &count) in counts.iter().enumerate() {
                rows.push(HistogramRow {
                    class,
                    space,
                    bin_lo: edges[k],
                    bin_hi: edges[k + 1],
                    count,
                });
            }
        }
    }
    Ok(rows)
}

/// Max observed expansion ratio `d(net(x), net(y)) / d(x, y)` over sampled
/// same-class pairs at the finest label level, using the final block's
/// representation. A lower bound on the true within-class Lipschitz
/// constant.
pub fn empirical_lipschitz(
    net: &StackedLilNetwork,
    ds: &LabeledDataset,
    n_pairs: usize,
    rng: &mut Rng,
) -> Result<f64> {
    if n_pairs == 0 {
        return Err(Error::invalid("empirical_lipschitz: need n_pairs >= 1"));
    }
    if ds.len() < 2 {
        return Err(Error::invalid(
            "empirical_lipschitz: need at least 2 points",
        ));
    }
    let traces = net.forward(&ds.points)?;
    let phi = traces.last().unwrap().representation();
    let labels = &ds.labels[ds.levels() - 1];
    let mut best: Option<f64> = None;
    let mut collected = 0;
    let max_attempts = n_pairs.saturating_mul(200);
    for _ in 0..max_attempts {
        if collected == n_pairs {
            break;
        }
        let a = rng.index(ds.len());
        let b = rng.index(ds.len());
        if a == b || labels[a] != labels[b] {
            continue;
        }
        let dx = euclidean(ds.points.row(a), ds.points.row(b));
        if dx <= 1e-12 {
            continue;
        }
        let dphi = euclidean(phi.row(a), phi.row(b));
        let ratio = dphi / dx;
        best = Some(best.map_or(ratio, |b| b.max(ratio)));
        collected += 1;
    }
    best.ok_or_else(|| Error::invalid("empirical_lipschitz: no valid same-class pairs found"))
}
