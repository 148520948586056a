//! Fixed-point helpers. Money is integer cents everywhere; dimensionless
//! fractions (perception components, coefficients, tau, kappa, lambda)
//! are stored in micro units (1e-6) so that every rule comparison is
//! exact integer arithmetic with no float ties.

/// One unit in micro fixed point.
pub const MICRO: i64 = 1_000_000;

/// Money amount in integer cents.
pub type Cents = i64;

/// Convert a dimensionless f64 to micro units, rounding to nearest.
pub fn to_micro(x: f64) -> i64 {
    (x * MICRO as f64).round() as i64
}

/// Micro units back to f64.
pub fn from_micro(m: i64) -> f64 {
    m as f64 / MICRO as f64
}

/// Rounded division: numerator / denominator, half away from zero.
pub fn div_round(numer: i128, denom: i128) -> i128 {
    debug_assert!(denom > 0);
    if numer >= 0 {
        (numer + denom / 2) / denom
    } else {
        -((-numer + denom / 2) / denom)
    }
}

/// Format cents as a decimal currency string, e.g. 120000 -> "1200.00".
pub fn format_cents(cents: Cents) -> String {
    let sign = if cents < 0 { "-" } else { "" };
    let abs = cents.unsigned_abs();
    format!("{sign}{}.{:02}", abs / 100, abs % 100)
}

/// Format a micro fraction as a percentage with one decimal, e.g.
/// 100000 -> "10.0".
pub fn format_micro_pct(micro: i64) -> String {
    format!("{:.1}", from_micro(micro) * 100.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn micro_round_trips() {
        assert_eq!(to_micro(0.05), 50_000);
        assert_eq!(to_micro(-0.10), -100_000);
        assert_eq!(to_micro(0.025), 25_000);
        assert_eq!(from_micro(30_000), 0.03);
    }

    #[test]
    fn div_round_half_away_from_zero() {
        assert_eq!(div_round(5, 2), 3);
        assert_eq!(div_round(-5, 2), -3);
        assert_eq!(div_round(4, 2), 2);
        assert_eq!(div_round(0, 7), 0);
    }

    #[test]
    fn currency_formatting() {
        assert_eq!(format_cents(120_000), "1200.00");
        assert_eq!(format_cents(-150), "-1.50");
        assert_eq!(format_cents(5), "0.05");
        assert_eq!(format_micro_pct(100_000), "10.0");
    }
}
