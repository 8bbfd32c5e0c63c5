//! Classification and isometry losses.
//!
//! The training objective is `alpha * L_cse + beta * L_iso`, where the
//! cross-entropy term separates classes and the isometry term pins the
//! within-class pairwise distances of the representation to those of the
//! raw inputs:
//!
//! `L_iso = (1/N^2) * || G .* D_in  -  G .* D_phi ||_F^2`
//!
//! with `D_in` the input-space distance matrix, `D_phi` the representation
//! distance matrix, and `G` a binary indexing matrix selecting same-class
//! pairs (or all pairs in global mode). The Frobenius norm runs over all
//! ordered pairs, so each unordered pair counts twice.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::network::ForwardTrace;

/// Representation distances below this threshold make the unit difference
/// vector undefined; such pairs are skipped in gradients (subgradient 0).
pub const DEGENERATE_PAIR_THRESHOLD: f64 = 1e-12;

/// Binary pair-selection matrix: entry (i, j) is 1 iff i != j and samples i
/// and j belong to the same class (or unconditionally in global mode).
/// Symmetric with a zero diagonal; the diagonal is excluded because a
/// self-pair has zero representation distance and would put 0/0 in the
/// gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct IndexingMatrix {
    g: Matrix,
}

impl IndexingMatrix {
    pub fn matrix(&self) -> &Matrix {
        &self.g
    }

    #[inline]
    pub fn selected(&self, i: usize, j: usize) -> bool {
        self.g.get(i, j) != 0.0
    }

    pub fn len(&self) -> usize {
        self.g.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.g.rows() == 0
    }
}

pub fn build_indexing_matrix(labels: &[usize], global_mode: bool) -> IndexingMatrix {
    let n = labels.len();
    let mut g = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j && (global_mode || labels[i] == labels[j]) {
                g.set(i, j, 1.0);
            }
        }
    }
    IndexingMatrix { g }
}

/// Weights of the two loss terms.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
}

impl LossWeights {
    pub fn new(alpha: f64, beta: f64) -> Result<LossWeights> {
        if !alpha.is_finite() || !beta.is_finite() || alpha < 0.0 || beta < 0.0 {
            return Err(Error::invalid(format!(
                "loss weights must be finite and nonnegative, got alpha={alpha} beta={beta}"
            )));
        }
        Ok(LossWeights { alpha, beta })
    }

    pub fn validate(&self) -> Result<()> {
        LossWeights::new(self.alpha, self.beta).map(|_| ())
    }
}

/// Mean negative log-likelihood under a softmax, with the gradient with
/// respect to the logits. Stabilized by max-subtraction.
pub fn softmax_cross_entropy(logits: &Matrix, targets: &[usize]) -> Result<(f64, Matrix)> {
    let n = logits.rows();
    let c = logits.cols();
    if targets.len() != n {
        return Err(Error::invalid(format!(
            "cross entropy: {} targets for {} rows",
            targets.len(),
            n
        )));
    }
    if n == 0 || c == 0 {
        return Err(Error::invalid("cross entropy: empty logits"));
    }
    if let Some(&t) = targets.iter().find(|&&t| t >= c) {
        return Err(Error::invalid(format!(
            "cross entropy: target {t} out of range for {c} classes"
        )));
    }
    let mut grad = Matrix::zeros(n, c);
    let mut loss = 0.0;
    let inv_n = 1.0 / n as f64;
    for i in 0..n {
        let row = logits.row(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for &z in row {
            denom += (z - max).exp();
        }
        let log_denom = denom.ln();
        loss += (log_denom - (row[targets[i]] - max)) * inv_n;
        let grad_row = grad.row_mut(i);
        for (g, &z) in grad_row.iter_mut().zip(row) {
            *g = (z - max).exp() / denom * inv_n;
        }
        grad_row[targets[i]] -= inv_n;
    }
    Ok((loss, grad))
}

/// The isometry loss and its gradient with respect to the representation.
///
/// Loss: `(1/N^2) * sum_{i,j} G(i,j) * (D_in(i,j) - d(phi_i, phi_j))^2`
/// over ordered pairs. Gradient row i:
/// `-(4/N^2) * sum_j G(i,j) * (D_in(i,j) - d(phi_i,phi_j)) * (phi_i - phi_j) / d(phi_i,phi_j)`,
/// with degenerate pairs (representation distance below
/// [`DEGENERATE_PAIR_THRESHOLD`]) skipped.
pub fn isometric_loss(d_in: &Matrix, phi: &Matrix, g: &IndexingMatrix) -> Result<(f64, Matrix)> {
    let n = phi.rows();
    if d_in.rows() != n || d_in.cols() != n || g.len() != n {
        return Err(Error::invalid(format!(
            "isometric loss: got {} points, distance matrix {}x{}, indexing {}x{}",
            n,
            d_in.rows(),
            d_in.cols(),
            g.len(),
            g.len()
        )));
    }
    let dim = phi.cols();
    let inv_n2 = 1.0 / (n as f64 * n as f64);
    let mut loss = 0.0;
    let mut grad = Matrix::zeros(n, dim);
    for i in 0..n {
        for j in (i + 1)..n {
            if !g.selected(i, j) {
                continue;
            }
            let pi = phi.row(i);
            let pj = phi.row(j);
            let mut sq = 0.0;
            for (&a, &b) in pi.iter().zip(pj) {
                let d = a - b;
                sq += d * d;
            }
            let d_phi = sq.max(0.0).sqrt();
            let residual = d_in.get(i, j) - d_phi;
            // ordered sum counts (i,j) and (j,i)
            loss += 2.0 * residual * residual * inv_n2;
            if d_phi < DEGENERATE_PAIR_THRESHOLD {
                continue;
            }
            let coeff = -4.0 * inv_n2 * residual / d_phi;
            for k in 0..dim {
                let diff = phi.get(i, k) - phi.get(j, k);
                grad.data_mut()[i * dim + k] += coeff * diff;
                grad.data_mut()[j * dim + k] -= coeff * diff;
            }
        }
    }
    Ok((loss, grad))
}

/// Combined loss value with per-term breakdown and both gradients.
#[derive(Clone, Debug)]
pub struct CombinedLoss {
    pub total: f64,
    pub cse: f64,
    pub iso: f64,
    pub d_logits: Matrix,
    pub d_phi: Matrix,
}

/// `alpha * L_cse + beta * L_iso` over one batch. With `beta == 0` the
/// isometry path is not evaluated at all, so training reduces exactly to
/// plain cross-entropy.
pub fn combined_loss(
    trace: &ForwardTrace,
    d_in: &Matrix,
    g: &IndexingMatrix,
    targets: &[usize],
    weights: &LossWeights,
) -> Result<CombinedLoss> {
    weights.validate()?;
    let phi = trace.representation();
    let (cse, cse_grad) = softmax_cross_entropy(&trace.logits, targets)?;
    let (iso, d_phi) = if weights.beta == 0.0 {
        (0.0, Matrix::zeros(phi.rows(), phi.cols()))
    } else {
        let (iso, iso_grad) = isometric_loss(d_in, phi, g)?;
        (iso, iso_grad.scale(weights.beta))
    };
    Ok(CombinedLoss {
        total: weights.alpha * cse + weights.beta * iso,
        cse,
        iso,
        d_logits: cse_grad.scale(weights.alpha),
        d_phi,
    })
}

/// One selected pair's terms in the closed-form gradient assembly.
#[derive(Clone, Debug)]
pub struct PairTerm {
    pub i: usize,
    pub j: usize,
    /// Unit difference vector `(phi_i - phi_j) / d(phi_i, phi_j)`.
    pub unit_diff: Vec<f64>,
    /// Jacobian difference `d phi/d x at x_j  -  d phi/d x at x_i`.
    pub bracket: Matrix,
}

/// Assembled terms of the closed-form isometry gradient: the residual
/// matrix H plus per-pair unit differences and Jacobian brackets.
#[derive(Clone, Debug)]
pub struct IsoGradTerms {
    /// `H(i,j) = D_in(i,j) - d(phi_i, phi_j)`, symmetric.
    pub residuals: Matrix,
    /// One entry per selected non-degenerate pair with i > j.
    pub pairs: Vec<PairTerm>,
}

pub fn iso_grad_terms(
    d_in: &Matrix,
    phi: &Matrix,
    g: &IndexingMatrix,
    jacobians: &[Matrix],
) -> Result<IsoGradTerms> {
    let n = phi.rows();
    if jacobians.len() != n {
        return Err(Error::invalid(format!(
            "iso_grad_terms: {} jacobians for {} samples",
            jacobians.len(),
            n
        )));
    }
    let d_phi_mat = crate::linalg::pairwise_distances(phi)?;
    let mut residuals = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                residuals.set(i, j, d_in.get(i, j) - d_phi_mat.get(i, j));
            }
        }
    }
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in 0..i {
            if !g.selected(i, j) {
                continue;
            }
            let d = d_phi_mat.get(i, j);
            if d < DEGENERATE_PAIR_THRESHOLD {
                continue;
            }
            let unit_diff: Vec<f64> = phi
                .row(i)
                .iter()
                .zip(phi.row(j))
                .map(|(&a, &b)| (a - b) / d)
                .collect();
            let bracket = jacobians[j].sub(&jacobians[i])?;
            pairs.push(PairTerm {
                i,
                j,
                unit_diff,
                bracket,
            });
        }
    }
    Ok(IsoGradTerms { residuals, pairs })
}

/// Closed-form input-space gradient of `beta * L_iso`, assembled from the
/// residuals H, the unit difference vectors J, and per-sample Jacobians of
/// the representation map. Independent of the reverse-mode path through the
/// network, but must agree with it.
///
/// Each selected unordered pair (i, j) contributes
/// `(4 beta / N^2) * H(i,j) * J(i,j)` contracted against the Jacobian at
/// x_j (added to row j) and at x_i (subtracted from row i); the factor 4
/// carries the ordered-pair double count of the Frobenius sum.
pub fn closed_form_input_gradient(
    x: &Matrix,
    phi: &Matrix,
    d_in: &Matrix,
    g: &IndexingMatrix,
    beta: f64,
    jacobians: &[Matrix],
) -> Result<Matrix> {
    let n = x.rows();
    let d = x.cols();
    if phi.rows() != n {
        return Err(Error::invalid(
            "closed_form_input_gradient: row count mismatch",
        ));
    }
    let mut grad = Matrix::zeros(n, d);
    if beta == 0.0 {
        return Ok(grad);
    }
    let terms = iso_grad_terms(d_in, phi, g, jacobians)?;
    let repr_dim = phi.cols();
    let scale = 4.0 * beta / (n as f64 * n as f64);
    for pair in &terms.pairs {
        let coeff = scale * terms.residuals.get(pair.i, pair.j);
        for (jac, row, sign) in [
            (&jacobians[pair.j], pair.j, 1.0),
            (&jacobians[pair.i], pair.i, -1.0),
        ] {
            if jac.rows() != repr_dim || jac.cols() != d {
                return Err(Error::invalid(format!(
                    "closed_form_input_gradient: jacobian is {}x{}, expected {}x{}",
                    jac.rows(),
                    jac.cols(),
                    repr_dim,
                    d
                )));
            }
            let out = grad.row_mut(row);
            for (c, &u) in pair.unit_diff.iter().enumerate() {
                let jac_row = jac.row(c);
                for (o, &jv) in out.iter_mut().zip(jac_row) {
                    *o += sign * coeff * u * jv;
                }
            }
        }
    }
    Ok(grad)
}
