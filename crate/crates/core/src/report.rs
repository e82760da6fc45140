//! CSV formatting shared by the solver and study exports.

/// 17 significant digits, scientific notation: round-trips every f64 and is
/// stable across platforms.
pub fn format_float(x: f64) -> String {
    if x == 0.0 {
        // normalize −0 so that equal results hash equally
        return format!("{:.16e}", 0.0);
    }
    format!("{x:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips() {
        for x in [0.1, -3.25e-17, 1.0 / 3.0, 6.02e23, f64::MIN_POSITIVE] {
            let s = format_float(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
        }
        assert_eq!(format_float(-0.0), format_float(0.0));
    }
}
