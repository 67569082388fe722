//! Deterministic float formatting for tables and CSV output: 12 significant
//! digits, trailing zeros trimmed, scientific notation outside a readable
//! magnitude window (the usual `%.12g` behavior).

/// Formats `v` with 12 significant digits.
pub fn sig12(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let mag = v.abs().log10().floor() as i32;
    if (-5..12).contains(&mag) {
        let decimals = (11 - mag).max(0) as usize;
        let s = format!("{v:.decimals$}");
        trim_trailing_zeros(s)
    } else {
        let s = format!("{v:.11e}");
        // "1.20000000000e-7" -> "1.2e-7"
        match s.split_once('e') {
            Some((mantissa, exp)) => {
                format!("{}e{exp}", trim_trailing_zeros(mantissa.to_string()))
            }
            None => s,
        }
    }
}

fn trim_trailing_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    let trimmed = s.trim_end_matches('0').trim_end_matches('.');
    trimmed.to_string()
}
