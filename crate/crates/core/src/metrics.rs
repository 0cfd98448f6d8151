use crate::error::{Result, RinoError};

/// Sup-norms below this are treated as an identically zero signal.
pub const ZERO_SIGNAL: f64 = 1e-300;

/// `mean_j (v_j − v̂_j)² / max_j |v_j|²`.
pub fn relative_mse(truth: &[f64], predicted: &[f64]) -> Result<f64> {
    if truth.len() != predicted.len() || truth.is_empty() {
        return Err(RinoError::ShapeMismatch(format!(
            "{} true values against {} predictions",
            truth.len(),
            predicted.len()
        )));
    }
    let sup = truth.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if sup < ZERO_SIGNAL {
        return Err(RinoError::ZeroSignal);
    }
    let mse = truth.iter().zip(predicted).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / truth.len() as f64;
    Ok(mse / (sup * sup))
}

/// Relative MSE of a residual against its signal, falling back to the
/// plain MSE when the signal is identically zero.
pub fn residual_error(signal: &[f64], residual: &[f64]) -> f64 {
    let sup = signal.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let mse = residual.iter().map(|r| r * r).sum::<f64>() / residual.len().max(1) as f64;
    if sup < ZERO_SIGNAL {
        mse
    } else {
        mse / (sup * sup)
    }
}

/// Mean of per-realization relative MSEs.
pub fn dataset_relative_mse<'a, I>(pairs: I) -> Result<f64>
where
    I: IntoIterator<Item = (&'a [f64], &'a [f64])>,
{
    let mut total = 0.0;
    let mut n = 0usize;
    for (t, p) in pairs {
        total += relative_mse(t, p)?;
        n += 1;
    }
    if n == 0 {
        return Err(RinoError::InvalidArgument("no realizations to score".into()));
    }
    Ok(total / n as f64)
}
