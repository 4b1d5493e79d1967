//! Distortion estimation for uniform quantization and measured distortion.
//!
//! With midpoint reconstruction, a bin of width `δᵢ` around density value
//! `P(mᵢ)` contributes `δᵢ³·P(mᵢ)/12` to the MSE on each side of a symmetric
//! error distribution, giving `MSE ≈ (1/6)·Σ δᵢ³·P(mᵢ)` over one side's bins.
//! For equal widths whose bins cover all errors this collapses to `δ²/12`, so
//! `PSNR = 20·log₁₀(vr/δ) + 10·log₁₀ 12` independent of the error distribution.
//! With `δ = 2·eb_abs` that is `20·log₁₀(vr/eb_abs) + 10·log₁₀ 3`, which
//! inverts to `eb_rel = √3·10^(−PSNR/20)`.
//!
//! The same reasoning applies to orthogonal-transform coders (the transform
//! preserves the l² norm), but no transform path is implemented here.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

fn require_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive and finite, got {v}")))
    }
}

/// Estimated PSNR (dB) for a value-range-relative bound `eb_rel`.
pub fn estimate_psnr_from_bound(eb_rel: f64) -> Result<f64> {
    require_positive("eb_rel", eb_rel)?;
    Ok(-20.0 * eb_rel.log10() + 10.0 * 3f64.log10())
}

/// Value-range-relative bound that yields `psnr_db` under uniform quantization.
pub fn bound_from_target_psnr(psnr_db: f64) -> Result<f64> {
    require_positive("target PSNR", psnr_db)?;
    Ok(3f64.sqrt() * 10f64.powf(-psnr_db / 20.0))
}

/// Estimated PSNR for a uniform bin width `bin_width` over value range `vr`.
pub fn estimate_psnr_from_bin_width(value_range: f64, bin_width: f64) -> Result<f64> {
    require_positive("value range", value_range)?;
    require_positive("bin width", bin_width)?;
    Ok(20.0 * (value_range / bin_width).log10() + 10.0 * 12f64.log10())
}

/// `(1/6)·Σ δᵢ³·P(mᵢ)` over the bins on one side of a symmetric distribution.
pub fn estimate_mse_general(bin_widths: &[f64], densities: &[f64]) -> Result<f64> {
    if bin_widths.len() != densities.len() {
        return Err(Error::DimensionMismatch {
            what: "bin widths vs density samples",
            expected: bin_widths.len(),
            actual: densities.len(),
        });
    }
    let mut sum = 0.0;
    for (&d, &p) in bin_widths.iter().zip(densities) {
        require_positive("bin width", d)?;
        if !(p >= 0.0 && p.is_finite()) {
            return Err(invalid(format!("density must be non-negative, got {p}")));
        }
        sum += d * d * d * p;
    }
    Ok(sum / 6.0)
}

/// PSNR from the general MSE estimate and the value range.
pub fn estimate_psnr_general(bin_widths: &[f64], densities: &[f64], value_range: f64) -> Result<f64> {
    require_positive("value range", value_range)?;
    let mse = estimate_mse_general(bin_widths, densities)?;
    Ok(if mse == 0.0 {
        f64::INFINITY
    } else {
        -20.0 * (mse.sqrt() / value_range).log10()
    })
}

/// Measured distortion between an original field and its reconstruction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Distortion {
    pub mse: f64,
    pub nrmse: f64,
    /// `+∞` when the reconstruction is exact.
    pub psnr: f64,
    pub max_abs_error: f64,
    pub value_range: f64,
}

/// MSE, NRMSE = √MSE / vr and PSNR = −20·log₁₀(NRMSE).
pub fn measured_psnr(original: &[f64], decompressed: &[f64]) -> Result<Distortion> {
    if original.len() != decompressed.len() {
        return Err(Error::DimensionMismatch {
            what: "original vs decompressed length",
            expected: original.len(),
            actual: decompressed.len(),
        });
    }
    if original.is_empty() {
        return Err(invalid("cannot measure distortion of an empty field"));
    }
    let value_range = value_range(original);
    if value_range == 0.0 {
        return Err(Error::UndefinedPsnr);
    }
    let mut sq = 0.0;
    let mut max_abs_error = 0.0f64;
    for (a, b) in original.iter().zip(decompressed) {
        let e = a - b;
        sq += e * e;
        max_abs_error = max_abs_error.max(e.abs());
    }
    let mse = sq / original.len() as f64;
    let nrmse = mse.sqrt() / value_range;
    let psnr = if mse == 0.0 {
        f64::INFINITY
    } else {
        -20.0 * nrmse.log10()
    };
    Ok(Distortion {
        mse,
        nrmse,
        psnr,
        max_abs_error,
        value_range,
    })
}

/// `max - min`, zero for empty input.
pub fn value_range(data: &[f64]) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let (lo, hi) = data
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    hi - lo
}
