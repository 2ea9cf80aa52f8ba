use crate::dsp::{SNR_MAX_DB, SNR_MIN_DB};

/// λ at the low-SNR end of the range.
pub const HEURISTIC_LAMBDA_MAX: f64 = 5e-5;
/// λ at the high-SNR end of the range.
pub const HEURISTIC_LAMBDA_MIN: f64 = 5e-7;

/// SNR-driven off-diagonal weight: `5e-5 / (9.9·s − 98)`.
///
/// Noisier views get the larger weight. The map is strictly decreasing and
/// sends 10 dB to 5e-5 and 20 dB to 5e-7. Inputs outside [10, 20] dB are
/// clamped with a warning.
pub fn heuristic_lambda(snr_db: f64) -> f64 {
    let s = if snr_db.is_nan() {
        log::warn!("heuristic_lambda: NaN SNR treated as {SNR_MIN_DB} dB");
        SNR_MIN_DB
    } else if !(SNR_MIN_DB..=SNR_MAX_DB).contains(&snr_db) {
        let c = snr_db.clamp(SNR_MIN_DB, SNR_MAX_DB);
        log::warn!("heuristic_lambda: SNR {snr_db} dB clamped to {c} dB");
        c
    } else {
        snr_db
    };
    HEURISTIC_LAMBDA_MAX / (9.9 * s - 98.0)
}
