//! Net-load and voltage error metrics.

use super::SimError;

fn same_len(a: &[f64], b: &[f64]) -> Result<(), SimError> {
    if a.len() != b.len() {
        return Err(SimError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(())
}

/// Root-mean-square difference between two trajectories.
pub fn rmse(model: &[f64], truth: &[f64]) -> Result<f64, SimError> {
    same_len(model, truth)?;
    if truth.is_empty() {
        return Ok(0.0);
    }
    let ss: f64 = model.iter().zip(truth).map(|(m, t)| (m - t).powi(2)).sum();
    Ok((ss / truth.len() as f64).sqrt())
}

/// Mean absolute percentage error over steps where `|truth| ≥ ε`, with
/// `ε = eps_frac · max|truth|`. `None` when no step qualifies.
pub fn mape(model: &[f64], truth: &[f64], eps_frac: f64) -> Result<Option<f64>, SimError> {
    same_len(model, truth)?;
    let eps = eps_frac * truth.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let terms: Vec<f64> = model
        .iter()
        .zip(truth)
        .filter(|(_, t)| t.abs() >= eps && **t != 0.0)
        .map(|(m, t)| ((m - t) / t).abs())
        .collect();
    if terms.is_empty() {
        return Ok(None);
    }
    Ok(Some(100.0 * terms.iter().sum::<f64>() / terms.len() as f64))
}

/// Elementwise `|V_model − V_true|`, indexed `[step][bus]`.
pub fn voltage_deviation(
    model: &[Vec<f64>],
    truth: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>, SimError> {
    if model.len() != truth.len() {
        return Err(SimError::LengthMismatch {
            left: model.len(),
            right: truth.len(),
        });
    }
    model
        .iter()
        .zip(truth)
        .map(|(m, t)| {
            same_len(m, t)?;
            Ok(m.iter().zip(t).map(|(a, b)| (a - b).abs()).collect())
        })
        .collect()
}

/// Largest entry of a deviation matrix and its `(step, bus position)`.
pub fn max_deviation(dev: &[Vec<f64>]) -> (f64, Option<(usize, usize)>) {
    let mut best = (0.0, None);
    for (t, row) in dev.iter().enumerate() {
        for (i, &v) in row.iter().enumerate() {
            if v > best.0 {
                best = (v, Some((t, i)));
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rmse_cases() {
        let t = vec![1.0, 2.0, 3.0, 4.0];
        assert_eq!(rmse(&t, &t).unwrap(), 0.0);
        let shifted: Vec<f64> = t.iter().map(|x| x + 0.5).collect();
        assert!((rmse(&shifted, &t).unwrap() - 0.5).abs() < 1e-15);
        let half = vec![1.5, 2.0, 3.5, 4.0];
        assert!((rmse(&half, &t).unwrap() - 0.5 / 2f64.sqrt()).abs() < 1e-15);
        assert!(rmse(&t[..2], &t).is_err());
    }

    #[test]
    fn mape_cases() {
        let t = vec![100.0; 8];
        assert_eq!(mape(&t, &t, 0.05).unwrap(), Some(0.0));
        let m = vec![103.0; 8];
        assert!((mape(&m, &t, 0.05).unwrap().unwrap() - 3.0).abs() < 1e-12);
        // Steps near zero are excluded.
        let t = vec![100.0, 1.0, -100.0, 0.0];
        let m = vec![110.0, 50.0, -90.0, 7.0];
        assert!((mape(&m, &t, 0.05).unwrap().unwrap() - 10.0).abs() < 1e-12);
        assert_eq!(mape(&[1.0], &[0.0], 0.05).unwrap(), None);
    }

    #[test]
    fn deviation_cases() {
        let v = vec![vec![1.0, 0.98], vec![1.01, 0.97]];
        assert!(voltage_deviation(&v, &v)
            .unwrap()
            .iter()
            .flatten()
            .all(|x| *x == 0.0));
        let w = vec![vec![1.0, 0.99], vec![1.01, 0.97]];
        let d = voltage_deviation(&w, &v).unwrap();
        let (m, at) = max_deviation(&d);
        assert!((m - 0.01).abs() < 1e-12);
        assert_eq!(at, Some((0, 1)));
        assert!(voltage_deviation(&v[..1], &v).is_err());
    }
}
