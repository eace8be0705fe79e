// SPDX-License-Identifier: Apache-2.0

//! UTC calendar helpers over epoch seconds.

use chrono::{DateTime, NaiveDate, NaiveDateTime, Utc};

use super::{Result, WflError};

pub fn hour_of_day(ts: i64) -> i64 {
    ts.rem_euclid(86_400) / 3600
}

/// ISO weekday: Monday = 1 ... Sunday = 7. Day 0 of the epoch is a Thursday.
pub fn day_of_week(ts: i64) -> i64 {
    (ts.div_euclid(86_400) + 3).rem_euclid(7) + 1
}

/// Accepts RFC 3339 (`2024-03-01T08:30:00Z`, offsets allowed),
/// `YYYY-MM-DD HH:MM:SS`, `YYYY-MM-DDTHH:MM:SS` (UTC) and `YYYY-MM-DD`.
pub fn parse_time(s: &str) -> Result<i64> {
    let s = s.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Ok(dt.timestamp());
    }
    for fmt in ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(dt.and_utc().timestamp());
        }
    }
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Ok(d.and_hms_opt(0, 0, 0).expect("midnight").and_utc().timestamp());
    }
    Err(WflError::Parse(s.to_string()))
}

pub fn format_time(ts: i64) -> Result<String> {
    let dt: DateTime<Utc> = DateTime::from_timestamp(ts, 0)
        .ok_or_else(|| WflError::BadParam(format!("timestamp {ts} out of range")))?;
    Ok(dt.format("%Y-%m-%dT%H:%M:%SZ").to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    /// Days-to-civil conversion written out by hand (proleptic Gregorian).
    fn civil(ts: i64) -> (i64, i64, i64, i64, i64, i64) {
        let days = ts.div_euclid(86_400);
        let secs = ts.rem_euclid(86_400);
        let z = days + 719_468;
        let era = z.div_euclid(146_097);
        let doe = z - era * 146_097;
        let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
        let mut y = yoe + era * 400;
        let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
        let mp = (5 * doy + 2) / 153;
        let d = doy - (153 * mp + 2) / 5 + 1;
        let m = if mp < 10 { mp + 3 } else { mp - 9 };
        if m <= 2 {
            y += 1;
        }
        (y, m, d, secs / 3600, secs % 3600 / 60, secs % 60)
    }

    /// Zeller-style weekday, independent of the epoch offset rule.
    fn weekday_iso(y: i64, m: i64, d: i64) -> i64 {
        let (y, m) = if m < 3 { (y - 1, m + 12) } else { (y, m) };
        let k = y.rem_euclid(100);
        let j = y.div_euclid(100);
        let h = (d + 13 * (m + 1) / 5 + k + k / 4 + j / 4 + 5 * j).rem_euclid(7);
        // h: 0 = Saturday, 1 = Sunday, 2 = Monday, ...
        (h + 5).rem_euclid(7) + 1
    }

    #[test]
    fn epoch_zero() {
        assert_eq!(day_of_week(0), 4);
        assert_eq!(hour_of_day(0), 0);
        assert_eq!(format_time(0).unwrap(), "1970-01-01T00:00:00Z");
        assert_eq!(hour_of_day(-1), 23);
        assert_eq!(day_of_week(-1), 3);
    }

    #[test]
    fn parse_forms() {
        assert_eq!(parse_time("1970-01-02").unwrap(), 86_400);
        assert_eq!(parse_time("1970-01-01T01:00:00+01:00").unwrap(), 0);
        assert_eq!(parse_time("1970-01-01 00:01:00").unwrap(), 60);
        assert!(matches!(parse_time("yesterday"), Err(WflError::Parse(_))));
    }

    #[test]
    fn random_timestamps_vs_hand_calendar() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10_000 {
            let ts: i64 = rng.gen_range(-2_000_000_000..4_000_000_000);
            let (y, mo, d, h, mi, s) = civil(ts);
            assert_eq!(hour_of_day(ts), h);
            assert_eq!(day_of_week(ts), weekday_iso(y, mo, d));
            let text = format_time(ts).unwrap();
            assert_eq!(text, format!("{y:04}-{mo:02}-{d:02}T{h:02}:{mi:02}:{s:02}Z"));
            assert_eq!(parse_time(&text).unwrap(), ts);
        }
    }
}
