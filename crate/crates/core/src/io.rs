//! Shared helpers for the text artifact formats.

/// Formats a value with the given number of significant digits, fixed-point.
///
/// Used by every CSV writer so artifact bytes are stable across runs.
pub fn format_sig(value: f64, sig_digits: u32) -> String {
    if value == 0.0 {
        return "0".to_string();
    }
    if !value.is_finite() {
        return value.to_string();
    }
    let exponent = value.abs().log10().floor() as i32;
    let decimals = (sig_digits as i32 - 1 - exponent).clamp(0, 40) as usize;
    format!("{value:.decimals$}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(format_sig(3.0, 9), "3.00000000");
        assert_eq!(format_sig(12.0, 9), "12.0000000");
        assert_eq!(format_sig(0.05, 9), "0.0500000000");
        assert_eq!(format_sig(-1.5707963267948966, 9), "-1.57079633");
        assert_eq!(format_sig(0.0, 9), "0");
        assert_eq!(format_sig(-0.0, 9), "0");
    }

    #[test]
    fn round_trips_within_relative_tolerance() {
        for &v in &[std::f64::consts::PI, 1234.5678, -0.000123456789, 9.87e-7] {
            let parsed: f64 = format_sig(v, 9).parse().unwrap();
            assert!(((parsed - v) / v).abs() < 1e-8, "{v} -> {parsed}");
        }
    }
}
