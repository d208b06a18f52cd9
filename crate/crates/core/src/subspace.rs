//! Question-content subspace fitting and projection.
//!
//! Mean-pooled question-only hidden states carry a low-rank "what is this
//! question about" component that leaks into contrast vectors whenever a
//! problem's context terms do not cancel exactly. Fitting a truncated SVD to
//! the row-centered question matrix captures that component; steering
//! vectors are then projected onto its orthogonal complement. Projection is
//! linear (no centering), so projecting each hidden state and projecting the
//! per-problem difference give the same result.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{HiddenVector, Matrix};
use crate::vecmath;

/// Default number of retained singular directions.
pub const DEFAULT_RANK: usize = 4;

/// One question's pooled hidden state with an optional subject label.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuestionEmbedding {
    pub question_id: String,
    pub q: HiddenVector,
    pub subject: Option<String>,
}

/// Fitted content subspace: an orthonormal basis of the top singular
/// directions of the centered question matrix, plus the centroid so the
/// same split applies to held-out vectors.
#[derive(Debug, Clone)]
pub struct ContentSubspace {
    /// Basis vectors as rows (row j = j-th right singular vector, length D).
    pub basis: Matrix,
    /// Mean of the question matrix before centering.
    pub centroid: HiddenVector,
    /// Nonincreasing singular values, one per basis row.
    pub singular_values: Vec<f64>,
}

impl ContentSubspace {
    pub fn dim(&self) -> usize {
        self.centroid.len()
    }

    pub fn rank(&self) -> usize {
        self.basis.rows
    }

    /// Checks orthonormality of the basis, value ordering, and shape
    /// agreement; used after deserialization.
    pub fn validate(&self) -> Result<()> {
        if self.basis.rows == 0 {
            return Err(Error::Rank("subspace has no basis vectors".into()));
        }
        if self.basis.cols != self.centroid.len() {
            return Err(Error::Dimension {
                expected: self.centroid.len(),
                got: self.basis.cols,
                context: "subspace basis vs centroid".into(),
            });
        }
        if self.singular_values.len() != self.basis.rows {
            return Err(Error::Rank(format!(
                "{} singular values for {} basis vectors",
                self.singular_values.len(),
                self.basis.rows
            )));
        }
        if self.singular_values.windows(2).any(|w| w[0] + 1e-12 < w[1]) {
            return Err(Error::Rank("singular values not nonincreasing".into()));
        }
        for i in 0..self.basis.rows {
            for j in i..self.basis.rows {
                let d = vecmath::dot(self.basis.row(i), self.basis.row(j));
                let want = if i == j { 1.0 } else { 0.0 };
                if (d - want).abs() > 1e-8 {
                    return Err(Error::Rank(format!(
                        "basis rows {i},{j} not orthonormal (inner product {d:.3e})"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Subspace restricted to the first `k` directions. Singular directions
    /// are nested, so this equals refitting with the smaller rank.
    pub fn truncate(&self, k: usize) -> Result<ContentSubspace> {
        if k < 1 || k > self.rank() {
            return Err(Error::Rank(format!(
                "cannot truncate rank-{} subspace to k = {k}",
                self.rank()
            )));
        }
        let rows: Vec<Vec<f64>> = (0..k).map(|i| self.basis.row(i).to_vec()).collect();
        Ok(ContentSubspace {
            basis: Matrix::from_rows(&rows)?,
            centroid: self.centroid.clone(),
            singular_values: self.singular_values[..k].to_vec(),
        })
    }
}

/// Componentwise mean of question-only hidden-state rows.
pub fn pool_question_states<'a, I>(rows: I) -> Result<HiddenVector>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    vecmath::mean_rows(rows)
}

/// Fits the content subspace: row-center `q`, take the SVD, keep the top-`k`
/// right singular vectors. Requires at least two rows, `k` within
/// `min(N-1, D)`, and a centered matrix of rank at least `k`.
///
/// Each basis vector's sign is fixed by making its largest-magnitude entry
/// positive, so serialized subspaces are reproducible across runs.
pub fn fit_content_subspace(q: &Matrix, k: usize) -> Result<ContentSubspace> {
    let n = q.rows;
    let d = q.cols;
    if n < 2 {
        return Err(Error::Rank(format!(
            "need at least 2 question embeddings to fit a subspace, got {n}"
        )));
    }
    let max_k = (n - 1).min(d);
    if k < 1 || k > max_k {
        return Err(Error::Rank(format!(
            "k = {k} out of range [1, {max_k}] for a {n}x{d} question matrix"
        )));
    }

    let centroid = vecmath::mean_rows(q.iter_rows())?;
    let mut centered = DMatrix::<f64>::zeros(n, d);
    for i in 0..n {
        let row = q.row(i);
        for j in 0..d {
            centered[(i, j)] = row[j] - centroid[j];
        }
    }

    let svd = centered.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Rank("SVD did not produce right singular vectors".into()))?;
    let mut pairs: Vec<(f64, usize)> = svd
        .singular_values
        .iter()
        .copied()
        .enumerate()
        .map(|(i, s)| (s, i))
        .collect();
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));

    let sigma_max = pairs.first().map(|p| p.0).unwrap_or(0.0);
    let tol = sigma_max * n.max(d) as f64 * f64::EPSILON;
    let rank = pairs.iter().filter(|(s, _)| *s > tol).count();
    if rank < k {
        return Err(Error::Rank(format!(
            "centered question matrix has rank {rank} < k = {k}"
        )));
    }

    let mut basis_rows = Vec::with_capacity(k);
    let mut singular_values = Vec::with_capacity(k);
    for &(s, idx) in pairs.iter().take(k) {
        let mut row: Vec<f64> = (0..d).map(|j| v_t[(idx, j)]).collect();
        let lead = row
            .iter()
            .enumerate()
            .max_by(|a, b| {
                a.1.abs()
                    .partial_cmp(&b.1.abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .map(|(i, _)| i)
            .unwrap_or(0);
        if row[lead] < 0.0 {
            for x in &mut row {
                *x = -*x;
            }
        }
        basis_rows.push(row);
        singular_values.push(s);
    }

    let subspace = ContentSubspace {
        basis: Matrix::from_rows(&basis_rows)?,
        centroid,
        singular_values,
    };
    subspace.validate()?;
    Ok(subspace)
}

/// Removes the component of `v` inside the subspace: v − Σⱼ ⟨v,bⱼ⟩ bⱼ.
/// Purely linear — no centering — so it commutes with sums and scaling.
pub fn project_out(v: &[f64], s: &ContentSubspace) -> Result<HiddenVector> {
    if v.len() != s.dim() {
        return Err(Error::Dimension {
            expected: s.dim(),
            got: v.len(),
            context: "project_out input".into(),
        });
    }
    let mut out = v.to_vec();
    for j in 0..s.rank() {
        let b = s.basis.row(j);
        let c = vecmath::dot(v, b);
        vecmath::add_scaled(&mut out, -c, b);
    }
    Ok(out)
}

/// Splits `q - centroid` into its in-subspace and residual components.
/// The two parts sum back to `q - centroid` and are orthogonal.
pub fn split_components(q: &[f64], s: &ContentSubspace) -> Result<(HiddenVector, HiddenVector)> {
    if q.len() != s.dim() {
        return Err(Error::Dimension {
            expected: s.dim(),
            got: q.len(),
            context: "split_components input".into(),
        });
    }
    let x = vecmath::sub(q, &s.centroid);
    let mut parallel = vec![0.0; x.len()];
    for j in 0..s.rank() {
        let b = s.basis.row(j);
        let c = vecmath::dot(&x, b);
        vecmath::add_scaled(&mut parallel, c, b);
    }
    let perp = vecmath::sub(&x, &parallel);
    Ok((parallel, perp))
}
