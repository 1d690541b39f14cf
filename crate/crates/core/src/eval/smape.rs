use crate::{Error, Result};

/// `2/T * sum |A - F| / (|A| + |F|)`; a step where both are zero adds 0.
pub fn smape(truth: &[f64], pred: &[f64]) -> Result<f64> {
    if truth.len() != pred.len() {
        return Err(Error::Dimension(format!(
            "series of length {} and {}",
            truth.len(),
            pred.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::EmptyDataset("empty series".into()));
    }
    let sum: f64 = truth
        .iter()
        .zip(pred)
        .map(|(a, f)| {
            let den = a.abs() + f.abs();
            if den == 0.0 {
                0.0
            } else {
                (a - f).abs() / den
            }
        })
        .sum();
    Ok(2.0 * sum / truth.len() as f64)
}

/// Mean of the prey and predator sMAPEs.
pub fn smape_predprey(truth: (&[f64], &[f64]), pred: (&[f64], &[f64])) -> Result<f64> {
    Ok(0.5 * (smape(truth.0, pred.0)? + smape(truth.1, pred.1)?))
}
