//! Plain-text rendering of sweep results.

use crate::protocol::SweepPoint;

pub const CSV_HEADER: &str = "p,i_ab,i_ae,key_rate,holevo,qber_raw,qber_sifted";

/// Formats like C's `%.12g`: 12 significant digits, trailing zeros dropped,
/// scientific notation outside `1e-4 ≤ |x| < 1e12`.
pub fn format_g12(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..12).contains(&exp) {
        let decimals = (11 - exp) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn csv_row(pt: &SweepPoint) -> String {
    let m = &pt.metrics;
    [
        pt.p,
        m.i_ab,
        m.i_ae,
        m.key_rate,
        m.holevo,
        m.qber_raw,
        m.qber_sifted,
    ]
    .iter()
    .map(|&v| format_g12(v))
    .collect::<Vec<_>>()
    .join(",")
}

/// Header plus one line per point, newline-terminated.
pub fn render_csv(points: &[SweepPoint]) -> String {
    let mut out = String::with_capacity(64 * (points.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for pt in points {
        out.push_str(&csv_row(pt));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g12_formatting() {
        assert_eq!(format_g12(0.0), "0");
        assert_eq!(format_g12(-0.0), "0");
        assert_eq!(format_g12(1.0), "1");
        assert_eq!(format_g12(0.5), "0.5");
        assert_eq!(format_g12(0.1), "0.1");
        assert_eq!(format_g12(1.0 / 3.0), "0.333333333333");
        assert_eq!(format_g12(-2.0 / 3.0), "-0.666666666667");
        assert_eq!(format_g12(0.311278124459), "0.311278124459");
        assert_eq!(format_g12(123456.7890123456), "123456.789012");
        assert_eq!(format_g12(1.5e-5), "1.5e-05");
        assert_eq!(format_g12(-2.5e-17), "-2.5e-17");
        assert_eq!(format_g12(0.00012345), "0.00012345");
        assert_eq!(format_g12(1e12), "1e+12");
        assert_eq!(format_g12(f64::NAN), "nan");
        // Rounding that carries into the next decade.
        assert_eq!(format_g12(0.9999999999999), "1");
        assert_eq!(format_g12(9.9999999999999e-5), "0.0001");
    }

    #[test]
    fn g12_round_trips_to_twelve_digits() {
        for &x in &[0.123456789012345, 7.0e-3, 0.8112781244591328, 1.0 - 1e-13] {
            let back: f64 = format_g12(x).parse().unwrap();
            assert!((back - x).abs() <= 5e-12 * x.abs());
        }
    }
}
