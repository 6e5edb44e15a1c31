//! Number formatting and CSV rows.

use msqkd::{KeyRateReport, Mode};

/// Formats `x` with nine significant digits, like C's `%.9g`.
pub fn sig9(x: f64) -> String {
    const DIGITS: i32 = 9;
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..DIGITS).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs());
    }
    let fixed = format!("{:.*}", (DIGITS - 1 - exp) as usize, x);
    trim_zeros(&fixed).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub const SWEEP_HEADER: [&str; 10] = [
    "q",
    "qf",
    "qr",
    "h_ae",
    "h_ab_noflip",
    "h_ab_flip",
    "rate_noflip",
    "rate_flip",
    "rate_best",
    "mode",
];

/// One sweep or key-rate row; `q`, `qf`, `qr` are blank when unknown.
pub fn report_row(
    q: Option<f64>,
    qf: Option<f64>,
    qr: Option<f64>,
    r: &KeyRateReport,
) -> Vec<String> {
    let opt = |v: Option<f64>| v.map(sig9).unwrap_or_default();
    vec![
        opt(q),
        opt(qf),
        opt(qr),
        sig9(r.h_ae_lower),
        sig9(r.h_ab_noflip),
        sig9(r.h_ab_flip),
        sig9(r.rate_noflip),
        sig9(r.rate_flip),
        sig9(r.best_rate()),
        mode_token(r.chosen_mode).into(),
    ]
}

pub fn mode_token(mode: Mode) -> &'static str {
    match mode {
        Mode::Flip => "FLIP",
        Mode::NoFlip => "NO-FLIP",
    }
}

/// Human-readable key-rate report.
pub fn report_text(r: &KeyRateReport) -> String {
    let mut s = String::new();
    let mut line = |k: &str, v: String| {
        s.push_str(k);
        s.push('=');
        s.push_str(&v);
        s.push('\n');
    };
    line("h_ae_lower", sig9(r.h_ae_lower));
    line("h_ab_flip", sig9(r.h_ab_flip));
    line("h_ab_noflip", sig9(r.h_ab_noflip));
    line("rate_flip", sig9(r.rate_flip));
    line("rate_noflip", sig9(r.rate_noflip));
    line("chosen_mode", mode_token(r.chosen_mode).into());
    line("rate_best", sig9(r.best_rate()));
    line(
        "splits",
        r.splits
            .iter()
            .map(|t| sig9(*t))
            .collect::<Vec<_>>()
            .join(" "),
    );
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_c_style_g_format() {
        let cases = [
            (1.0, "1"),
            (0.1, "0.1"),
            (0.468996173, "0.468996173"),
            (0.4689961728, "0.468996173"),
            (-0.058322956, "-0.058322956"),
            (123456789.0, "123456789"),
            (1234567890.0, "1.23456789e+09"),
            (0.00001234, "1.234e-05"),
            (0.0001234, "0.0001234"),
            (2.0 / 3.0, "0.666666667"),
            (0.9999999999, "1"),
            (-0.0, "0"),
        ];
        for (x, s) in cases {
            assert_eq!(sig9(x), s, "{x}");
        }
    }

    #[test]
    fn round_trips_to_nine_digits() {
        for x in [0.123456789123, 3.14159265358979, 1e-7 / 3.0] {
            let back: f64 = sig9(x).parse().unwrap();
            assert!(((back - x) / x).abs() < 1e-8);
        }
    }
}
