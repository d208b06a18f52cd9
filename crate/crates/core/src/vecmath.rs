//! Small dense-vector helpers shared by every stage of the pipeline.
//!
//! All reductions run in ascending index order with f64 accumulators so the
//! same inputs always produce bitwise-identical results.

use crate::error::{Error, Result};

/// Dot product of two equal-length vectors.
pub fn dot(u: &[f64], v: &[f64]) -> f64 {
    debug_assert_eq!(u.len(), v.len());
    let mut acc = 0.0;
    for i in 0..u.len() {
        acc += u[i] * v[i];
    }
    acc
}

/// Euclidean norm.
pub fn l2_norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Returns `v / ||v||`.
///
/// Errors with [`Error::Normalization`] when the norm is zero or not finite,
/// so callers never silently produce garbage directions out of cancelled or
/// corrupted sums.
pub fn l2_normalize(v: &[f64]) -> Result<Vec<f64>> {
    let norm = l2_norm(v);
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::Normalization {
            norm,
            context: format!("l2_normalize on {}-dim vector", v.len()),
        });
    }
    Ok(v.iter().map(|x| x / norm).collect())
}

/// Cosine similarity, clamped to [-1, 1] against rounding overshoot.
///
/// Errors with [`Error::Normalization`] when either argument has zero or
/// non-finite norm.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Dimension {
            expected: u.len(),
            got: v.len(),
            context: "cosine".into(),
        });
    }
    let nu = l2_norm(u);
    let nv = l2_norm(v);
    if nu == 0.0 || !nu.is_finite() {
        return Err(Error::Normalization {
            norm: nu,
            context: "cosine, first argument".into(),
        });
    }
    if nv == 0.0 || !nv.is_finite() {
        return Err(Error::Normalization {
            norm: nv,
            context: "cosine, second argument".into(),
        });
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

/// Arithmetic mean of a nonempty collection of equal-length rows.
///
/// Rows are consumed in the order given (callers keep them in ascending
/// index order) and accumulated in f64.
pub fn mean_rows<'a, I>(rows: I) -> Result<Vec<f64>>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut iter = rows.into_iter();
    let first = iter
        .next()
        .ok_or_else(|| Error::EmptySet("mean_rows over zero rows".into()))?;
    let mut acc: Vec<f64> = first.to_vec();
    let mut count = 1usize;
    for row in iter {
        if row.len() != acc.len() {
            return Err(Error::Dimension {
                expected: acc.len(),
                got: row.len(),
                context: "mean_rows".into(),
            });
        }
        for i in 0..acc.len() {
            acc[i] += row[i];
        }
        count += 1;
    }
    let n = count as f64;
    for x in &mut acc {
        *x /= n;
    }
    Ok(acc)
}

/// `a - b` elementwise.
pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// `acc += c * v` in place.
pub fn add_scaled(acc: &mut [f64], c: f64, v: &[f64]) {
    debug_assert_eq!(acc.len(), v.len());
    for i in 0..acc.len() {
        acc[i] += c * v[i];
    }
}

/// `v * c` elementwise.
pub fn scale(v: &[f64], c: f64) -> Vec<f64> {
    v.iter().map(|x| x * c).collect()
}

/// True when every entry is finite.
pub fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_three_four() {
        let v = l2_normalize(&[3.0, 4.0]).unwrap();
        assert_eq!(v, vec![0.6, 0.8]);
    }

    #[test]
    fn normalize_ones() {
        let v = l2_normalize(&[1.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!(v, vec![0.5, 0.5, 0.5, 0.5]);
    }

    #[test]
    fn normalize_zero_vector_fails() {
        let err = l2_normalize(&[0.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::Normalization { .. }));
    }

    #[test]
    fn normalize_non_finite_fails() {
        let err = l2_normalize(&[f64::NAN, 1.0]).unwrap_err();
        assert!(matches!(err, Error::Normalization { .. }));
    }

    #[test]
    fn cosine_orthogonal_parallel_diagonal() {
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((cosine(&[2.0, 2.0], &[4.0, 4.0]).unwrap() - 1.0).abs() < 1e-12);
        let c = cosine(&[1.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!((c - 0.7071067811865475).abs() < 1e-15);
    }

    #[test]
    fn cosine_zero_argument_fails() {
        assert!(cosine(&[0.0, 0.0], &[1.0, 0.0]).is_err());
        assert!(cosine(&[1.0, 0.0], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn mean_rows_examples() {
        let rows: Vec<Vec<f64>> = vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]];
        let m = mean_rows(rows.iter().map(|r| r.as_slice())).unwrap();
        assert_eq!(m, vec![3.0, 4.0]);

        let single = vec![vec![7.0, -1.0]];
        let m = mean_rows(single.iter().map(|r| r.as_slice())).unwrap();
        assert_eq!(m, vec![7.0, -1.0]);
    }

    #[test]
    fn mean_rows_large_constant_is_stable() {
        let rows: Vec<Vec<f64>> = (0..10_000).map(|_| vec![1.0; 4]).collect();
        let m = mean_rows(rows.iter().map(|r| r.as_slice())).unwrap();
        assert_eq!(m, vec![1.0; 4]);
    }

    #[test]
    fn mean_rows_empty_fails() {
        let rows: Vec<Vec<f64>> = vec![];
        assert!(matches!(
            mean_rows(rows.iter().map(|r| r.as_slice())),
            Err(Error::EmptySet(_))
        ));
    }

    #[test]
    fn mean_rows_ragged_fails() {
        let rows: Vec<Vec<f64>> = vec![vec![1.0, 2.0], vec![3.0]];
        assert!(matches!(
            mean_rows(rows.iter().map(|r| r.as_slice())),
            Err(Error::Dimension { .. })
        ));
    }
}
