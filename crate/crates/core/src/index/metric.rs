//! Distance and similarity on embedding vectors.
//!
//! Components may be stored as `f32` or `f64`; all accumulation is in `f64`.

use super::IndexError;

pub fn l2_norm<T: Copy + Into<f64>>(v: &[T]) -> f64 {
    v.iter()
        .map(|&x| {
            let x: f64 = x.into();
            x * x
        })
        .sum::<f64>()
        .sqrt()
}

fn check_dims(a: usize, b: usize) -> Result<(), IndexError> {
    if a != b {
        return Err(IndexError::DimensionMismatch {
            expected: a,
            found: b,
        });
    }
    Ok(())
}

/// Euclidean distance `||a - b||_2`.
pub fn distance<T: Copy + Into<f64>>(a: &[T], b: &[T]) -> Result<f64, IndexError> {
    check_dims(a.len(), b.len())?;
    Ok(squared_distance_unchecked(a, b).sqrt())
}

pub(crate) fn squared_distance_unchecked<T: Copy + Into<f64>>(a: &[T], b: &[T]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x.into() - y.into();
            d * d
        })
        .sum()
}

/// Cosine of the angle between `a` and `b`.
pub fn cosine<T: Copy + Into<f64>>(a: &[T], b: &[T]) -> Result<f64, IndexError> {
    check_dims(a.len(), b.len())?;
    let dot: f64 = a.iter().zip(b).map(|(&x, &y)| x.into() * y.into()).sum();
    let denom = l2_norm(a) * l2_norm(b);
    if denom == 0.0 {
        return Err(IndexError::ZeroEmbedding);
    }
    Ok(dot / denom)
}

/// Maps a distance to the reported similarity score `1 / (1 + d)`.
pub fn similarity_from_distance(d: f64) -> f64 {
    1.0 / (1.0 + d)
}

/// Similarity score in `(0, 1]`; `1` iff the vectors coincide.
pub fn similarity<T: Copy + Into<f64>>(a: &[T], b: &[T]) -> Result<f64, IndexError> {
    Ok(similarity_from_distance(distance(a, b)?))
}
