use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeUnit {
    Nanoseconds,
    Microseconds,
}

impl TimeUnit {
    pub fn parse(s: &str) -> Option<TimeUnit> {
        match s {
            "ns" | "nanoseconds" => Some(TimeUnit::Nanoseconds),
            "us" | "µs" | "microseconds" => Some(TimeUnit::Microseconds),
            _ => None,
        }
    }
}

/// Timestamps at or above this magnitude are taken as nanoseconds. A
/// microsecond clock gets there only after three years of uptime, while
/// nanosecond epoch clocks are always beyond it.
const NS_MAGNITUDE: f64 = 1e17;

/// Guesses the unit from timestamp literals: any fractional part means
/// microseconds (nanosecond clocks are integral); otherwise very large
/// magnitudes mean nanoseconds and anything else microseconds, the
/// framework profiler's default.
pub fn detect_time_unit<'a>(literals: impl IntoIterator<Item = &'a str>) -> TimeUnit {
    let mut max = 0f64;
    for lit in literals {
        if lit.contains('.') || lit.contains('e') || lit.contains('E') {
            if let Ok(v) = lit.parse::<f64>() {
                if v.fract() != 0.0 {
                    return TimeUnit::Microseconds;
                }
                max = max.max(v);
            }
            continue;
        }
        if let Ok(v) = lit.parse::<f64>() {
            max = max.max(v);
        }
    }
    if max >= NS_MAGNITUDE {
        TimeUnit::Nanoseconds
    } else {
        TimeUnit::Microseconds
    }
}

/// Converts a decimal literal in `unit` to whole nanoseconds without going
/// through binary floating point. Digits below 1 ns round half up.
pub fn parse_decimal_ns(lit: &str, unit: TimeUnit) -> Option<u64> {
    let lit = lit.trim();
    if lit.starts_with('-') {
        return None;
    }
    if lit.contains(['e', 'E']) {
        let v: f64 = lit.parse().ok()?;
        let scaled = match unit {
            TimeUnit::Nanoseconds => v,
            TimeUnit::Microseconds => v * 1000.0,
        };
        return (scaled.is_finite() && scaled >= 0.0).then(|| scaled.round() as u64);
    }
    let lit = lit.strip_prefix('+').unwrap_or(lit);
    let (int, frac) = lit.split_once('.').unwrap_or((lit, ""));
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    if !int.bytes().all(|b| b.is_ascii_digit()) || !frac.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let int_v: u64 = if int.is_empty() { 0 } else { int.parse().ok()? };
    let shift = match unit {
        TimeUnit::Nanoseconds => 0,
        TimeUnit::Microseconds => 3,
    };
    let mut whole = int_v.checked_mul(10u64.pow(shift))?;
    let frac_digits: Vec<u8> = frac.bytes().map(|b| b - b'0').collect();
    for (i, &d) in frac_digits.iter().take(shift as usize).enumerate() {
        whole += d as u64 * 10u64.pow(shift - 1 - i as u32);
    }
    if frac_digits.get(shift as usize).is_some_and(|&d| d >= 5) {
        whole += 1;
    }
    Some(whole)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimal_microseconds_are_exact() {
        assert_eq!(parse_decimal_ns("1700000000123.456", TimeUnit::Microseconds), Some(1_700_000_000_123_456));
        assert_eq!(parse_decimal_ns("0.0015", TimeUnit::Microseconds), Some(2));
        assert_eq!(parse_decimal_ns("12", TimeUnit::Microseconds), Some(12_000));
        assert_eq!(parse_decimal_ns("12", TimeUnit::Nanoseconds), Some(12));
        assert_eq!(parse_decimal_ns("1.5e3", TimeUnit::Microseconds), Some(1_500_000));
        assert_eq!(parse_decimal_ns("-3", TimeUnit::Nanoseconds), None);
        assert_eq!(parse_decimal_ns("abc", TimeUnit::Nanoseconds), None);
    }

    #[test]
    fn unit_detection() {
        assert_eq!(detect_time_unit(["100.5", "200"]), TimeUnit::Microseconds);
        assert_eq!(detect_time_unit(["1700000000000000000"]), TimeUnit::Nanoseconds);
        assert_eq!(detect_time_unit(["1700000000000000"]), TimeUnit::Microseconds);
        assert_eq!(detect_time_unit(["1000", "2000"]), TimeUnit::Microseconds);
    }
}
