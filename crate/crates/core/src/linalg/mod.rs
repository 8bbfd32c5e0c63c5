//! Dense matrices, seeded randomness, and pairwise Euclidean distances.

mod matrix;
mod rng;

pub use matrix::Matrix;
pub use rng::Rng;

use crate::error::{Error, Result};

/// Pairwise Euclidean distance matrix of the rows of `points`.
///
/// Output is symmetric with an exactly zero diagonal; the squared norm is
/// clamped at zero before the root so round-off cannot go negative.
pub fn pairwise_distances(points: &Matrix) -> Result<Matrix> {
    if points.rows() == 0 || points.cols() == 0 {
        return Err(Error::invalid("pairwise_distances: empty input"));
    }
    let n = points.rows();
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        let a = points.row(i);
        for j in (i + 1)..n {
            let b = points.row(j);
            let mut sq = 0.0;
            for (&x, &y) in a.iter().zip(b) {
                let d = x - y;
                sq += d * d;
            }
            let d = sq.max(0.0).sqrt();
            out.set(i, j, d);
            out.set(j, i, d);
        }
    }
    Ok(out)
}

/// Matrix of i.i.d. Gaussian draws, deterministic given the RNG state.
pub fn gaussian_sample(
    rng: &mut Rng,
    rows: usize,
    cols: usize,
    mean: f64,
    variance: f64,
) -> Result<Matrix> {
    if variance < 0.0 || !variance.is_finite() {
        return Err(Error::invalid(format!(
            "gaussian_sample: variance must be nonnegative, got {variance}"
        )));
    }
    let sd = variance.sqrt();
    let data = (0..rows * cols).map(|_| rng.normal(mean, sd)).collect();
    Matrix::from_vec(rows, cols, data)
}
