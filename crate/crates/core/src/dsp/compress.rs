use crate::error::{Error, Result};

/// Default power-law exponent for magnitude compression.
pub const DEFAULT_COMPRESSION: f64 = 0.3;

fn check_exponent(exponent: f64) -> Result<()> {
    if !(exponent > 0.0 && exponent <= 1.0) {
        return Err(Error::config(format!(
            "compression exponent must lie in (0, 1], got {exponent}"
        )));
    }
    Ok(())
}

/// Elementwise `mag^exponent` for non-negative magnitudes.
pub fn compress(mag: &[f64], exponent: f64) -> Result<Vec<f64>> {
    check_exponent(exponent)?;
    mag.iter()
        .map(|&m| {
            if m >= 0.0 && m.is_finite() {
                Ok(m.powf(exponent))
            } else {
                Err(Error::validation(format!("cannot compress magnitude {m}")))
            }
        })
        .collect()
}

pub fn decompress(values: &[f64], exponent: f64) -> Result<Vec<f64>> {
    check_exponent(exponent)?;
    values
        .iter()
        .map(|&v| {
            if v >= 0.0 && v.is_finite() {
                Ok(v.powf(1.0 / exponent))
            } else {
                Err(Error::validation(format!("cannot decompress value {v}")))
            }
        })
        .collect()
}
