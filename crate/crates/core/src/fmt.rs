//! Fixed float formatting for reproducible CSV/JSON output.

/// Formats with 6 significant digits, trailing zeros trimmed, no exponent
/// for magnitudes in `[1e-6, 1e15)`.
pub fn sig6(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let mag = x.abs().log10().floor() as i32;
    if !(-6..15).contains(&mag) {
        return format!("{x:.5e}");
    }
    let s = if mag > 5 {
        let scale = 10f64.powi(mag - 5);
        format!("{:.0}", (x / scale).round() * scale)
    } else {
        let decimals = (5 - mag) as usize;
        format!("{x:.decimals$}")
    };
    let s = if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    };
    if s == "-0" {
        "0".into()
    } else {
        s
    }
}

/// Round to 6 significant digits, for JSON numbers.
pub fn round6(x: f64) -> f64 {
    sig6(x).parse().unwrap_or(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples() {
        assert_eq!(sig6(0.0), "0");
        assert_eq!(sig6(1.0), "1");
        assert_eq!(sig6(2.0 / 3.0), "0.666667");
        assert_eq!(sig6(123456789.0), "123457000");
        assert_eq!(sig6(0.3), "0.3");
        assert_eq!(sig6(-0.125), "-0.125");
        assert_eq!(sig6(1e-9), "1.00000e-9");
        assert_eq!(round6(0.123456789), 0.123457);
    }
}
