//! `[[H:]M:]S[.ff]` benchmark time strings to seconds.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed time {text:?}: {reason}")]
pub struct MalformedTime {
    pub text: String,
    pub reason: &'static str,
}

/// Parses `08:12:51.00`, `33:30.77` or `2:02.86` into seconds. Minute and
/// second fields after the first must be below 60.
pub fn parse_time(text: &str) -> Result<f64, MalformedTime> {
    let bad = |reason| MalformedTime { text: text.to_string(), reason };
    let fields: Vec<&str> = text.split(':').collect();
    if fields.len() > 3 {
        return Err(bad("too many fields"));
    }
    let (last, leading) = fields.split_last().expect("split yields at least one field");
    let (whole, frac) = match last.split_once('.') {
        Some((w, f)) => (w, Some(f)),
        None => (*last, None),
    };
    let digits = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit());
    if !digits(whole) || !frac.is_none_or(digits) {
        return Err(bad("seconds are not a decimal number"));
    }
    let seconds: f64 = last.parse().map_err(|_| bad("seconds are not a decimal number"))?;
    let mut total = 0.0;
    for (i, f) in leading.iter().enumerate() {
        if !digits(f) {
            return Err(bad("hours and minutes must be integers"));
        }
        let v: f64 = f.parse().map_err(|_| bad("hours and minutes must be integers"))?;
        if i > 0 && v >= 60.0 {
            return Err(bad("minutes out of range"));
        }
        total = total * 60.0 + v;
    }
    if !leading.is_empty() && seconds >= 60.0 {
        return Err(bad("seconds out of range"));
    }
    // Rounded to the hundredth the tables carry, so sums stay exact.
    Ok(((total * 60.0 + seconds) * 100.0).round() / 100.0)
}
