//! Engineering-suffix number parsing (`0.8n`, `2k`, `10.5G`).

/// Parses a number with an optional SI suffix.
///
/// Suffixes are case-sensitive: `m` is milli and `M` is mega.
pub fn parse_eng(text: &str) -> Result<f64, String> {
    let t = text.trim();
    let (body, scale) = match t.chars().last() {
        Some(c) if c.is_ascii_alphabetic() => {
            let scale = match c {
                'f' => -15,
                'p' => -12,
                'n' => -9,
                'u' => -6,
                'm' => -3,
                'k' => 3,
                'M' => 6,
                'G' => 9,
                'T' => 12,
                _ => return Err(format!("unknown unit suffix '{c}' in '{t}'")),
            };
            (&t[..t.len() - 1], scale)
        }
        _ => (t, 0),
    };
    let body = body.trim();
    if body.contains(['e', 'E']) && scale != 0 {
        return Err(format!("'{t}' mixes an exponent with a unit suffix"));
    }
    // scaling via the exponent keeps "0.8n" exactly equal to 0.8e-9
    let text = if scale == 0 { body.to_string() } else { format!("{body}e{scale}") };
    let v: f64 = text
        .parse()
        .map_err(|_| format!("cannot parse '{t}' as a number"))?;
    if !v.is_finite() {
        return Err(format!("'{t}' is not finite"));
    }
    Ok(v)
}
