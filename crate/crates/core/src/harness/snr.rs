use super::{HarnessError, Result};
use crate::linalg::Matrix;

/// Mean squared entry, accumulated over several records.
pub fn mean_power<'a>(records: impl IntoIterator<Item = &'a Matrix>) -> f64 {
    let (mut sum, mut count) = (0.0, 0usize);
    for r in records {
        sum += r.norm_squared();
        count += r.len();
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Amplitude gain that brings a signal of power `signal_power` to
/// `10 log10(P_signal / P_reference) = target_db`.
pub fn snr_gain(signal_power: f64, reference_power: f64, target_db: f64) -> Result<f64> {
    if !(reference_power > 0.0 && reference_power.is_finite()) {
        return Err(HarnessError::ZeroPowerReference);
    }
    if !(signal_power > 0.0 && signal_power.is_finite()) {
        return Err(HarnessError::ZeroPowerSignal);
    }
    Ok((reference_power * 10f64.powf(target_db / 10.0) / signal_power).sqrt())
}

/// `signal` rescaled to sit `target_db` above `reference` in mean power.
pub fn scale_to_snr(signal: &Matrix, reference: &Matrix, target_db: f64) -> Result<Matrix> {
    let gain = snr_gain(mean_power([signal]), mean_power([reference]), target_db)?;
    Ok(signal * gain)
}
