use crate::error::{Error, Result};

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn normalize(v: &[f64]) -> Result<Vec<f64>> {
    let n = norm(v);
    if n == 0.0 || !n.is_finite() {
        return Err(Error::ZeroVector);
    }
    Ok(v.iter().map(|x| x / n).collect())
}

/// Cosine similarity, clamped to `[-1, 1]` against rounding.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("vector of length {}", a.len()),
            found: format!("length {}", b.len()),
        });
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Cosine between `probe` and a unit-norm `reference`, plus the gradient of
/// that cosine w.r.t. `probe`.
pub fn cosine_to_unit_with_grad(probe: &[f64], reference: &[f64]) -> Result<(f64, Vec<f64>)> {
    let n = norm(probe);
    if n == 0.0 {
        return Err(Error::ZeroVector);
    }
    let dot: f64 = probe.iter().zip(reference).map(|(x, y)| x * y).sum();
    let cos = dot / n;
    let grad = probe
        .iter()
        .zip(reference)
        .map(|(p, r)| r / n - cos * p / (n * n))
        .collect();
    Ok((cos, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reference_values() {
        let v = [0.3, -1.2, 2.0];
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        assert!((cosine_similarity(&v, &v).unwrap() - 1.0).abs() < 1e-15);
        assert!((cosine_similarity(&v, &neg).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn zero_vector_is_an_error() {
        assert!(matches!(
            cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]),
            Err(Error::ZeroVector)
        ));
        assert!(matches!(normalize(&[0.0]), Err(Error::ZeroVector)));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let reference = normalize(&[0.2, -0.5, 0.9, 0.1]).unwrap();
        let probe = [1.0, 0.4, -0.3, 2.0];
        let (_, grad) = cosine_to_unit_with_grad(&probe, &reference).unwrap();
        let eps = 1e-6;
        for i in 0..probe.len() {
            let mut p = probe;
            p[i] += eps;
            let mut m = probe;
            m[i] -= eps;
            let fd = (cosine_similarity(&p, &reference).unwrap()
                - cosine_similarity(&m, &reference).unwrap())
                / (2.0 * eps);
            assert!((fd - grad[i]).abs() < 1e-8);
        }
    }

    proptest! {
        #[test]
        fn symmetric_and_scale_invariant(
            a in prop::collection::vec(-10.0f64..10.0, 8),
            b in prop::collection::vec(-10.0f64..10.0, 8),
            alpha in 1e-3f64..1e3,
        ) {
            prop_assume!(norm(&a) > 1e-6 && norm(&b) > 1e-6);
            let c = cosine_similarity(&a, &b).unwrap();
            prop_assert!((-1.0..=1.0).contains(&c));
            prop_assert!((c - cosine_similarity(&b, &a).unwrap()).abs() < 1e-12);
            let scaled: Vec<f64> = a.iter().map(|x| alpha * x).collect();
            prop_assert!((cosine_similarity(&scaled, &b).unwrap() - c).abs() < 1e-9);
            let scaled_b: Vec<f64> = b.iter().map(|x| alpha * x).collect();
            prop_assert!((cosine_similarity(&a, &scaled_b).unwrap() - c).abs() < 1e-9);
        }
    }
}
