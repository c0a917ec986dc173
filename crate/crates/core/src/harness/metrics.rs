use crate::error::{MaladyError, Result};

/// Fraction of `eval` indices where `predicted` matches `truth`.
///
/// An empty evaluation set scores 1.0; callers that care record that case separately.
pub fn accuracy(predicted: &[usize], truth: &[usize], eval: &[usize]) -> Result<f64> {
    if eval.is_empty() {
        return Ok(1.0);
    }
    let mut correct = 0usize;
    for &i in eval {
        let (Some(p), Some(t)) = (predicted.get(i), truth.get(i)) else {
            return Err(MaladyError::InvalidInput(format!(
                "evaluation index {i} is out of range"
            )));
        };
        correct += usize::from(p == t);
    }
    Ok(correct as f64 / eval.len() as f64)
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
