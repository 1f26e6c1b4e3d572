//! The metrics CSV contract.

use unlearn_prep::unlearn::TrajectoryRow;

pub const HEADER: &str = "step,epoch,phase,forget_loss,forget_acc,retain_acc,recovery_loss";

/// Renders `v` like C's `%.9g`.
pub fn sig9(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return if v.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    let sci = format!("{v:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent digits");
    if !(-4..9).contains(&exp) {
        let mantissa = trim_fraction(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (8 - exp) as usize;
        trim_fraction(&format!("{v:.decimals$}")).to_string()
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn cell(v: Option<f64>) -> String {
    v.map(sig9).unwrap_or_default()
}

/// Header plus one line per row; inapplicable fields are empty cells.
pub fn render(rows: &[TrajectoryRow<f64>]) -> String {
    let mut out = String::from(HEADER);
    out.push('\n');
    for r in rows {
        let epoch = r.epoch.map(|e| e.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.step,
            epoch,
            r.phase.as_str(),
            cell(r.forget_loss),
            cell(r.forget_acc),
            cell(r.retain_acc),
            cell(r.recovery_loss),
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use unlearn_prep::unlearn::Phase;

    #[test]
    fn sig9_matches_printf() {
        // Reference strings from printf("%.9g").
        let cases = [
            (0.1, "0.1"),
            (1.0 / 3.0, "0.333333333"),
            (123456789.0, "123456789"),
            (1234567890.0, "1.23456789e+09"),
            (1e-5, "1e-05"),
            (2.5e-7, "2.5e-07"),
            (0.0001, "0.0001"),
            (-2.3025851234, "-2.30258512"),
            (100.0, "100"),
            (0.99999999999, "1"),
            (9.999999999e8, "1e+09"),
        ];
        for (v, s) in cases {
            assert_eq!(sig9(v), s, "{v}");
        }
    }

    #[test]
    fn empty_log_is_header_only() {
        assert_eq!(render(&[]), format!("{HEADER}\n"));
    }

    #[test]
    fn row_round_trips_at_nine_digits() {
        let row = TrajectoryRow {
            step: 3,
            epoch: None,
            phase: Phase::Unlearning,
            forget_loss: Some(std::f64::consts::E),
            forget_acc: Some(0.125),
            retain_acc: None,
            recovery_loss: None,
        };
        let text = render(&[row]);
        let line = text.lines().nth(1).unwrap();
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells.len(), 7);
        assert_eq!(cells[2], "unlearning");
        let back: f64 = cells[3].parse().unwrap();
        assert!((back - std::f64::consts::E).abs() <= 5e-9 * 2.72);
        assert_eq!(sig9(back), cells[3]);
        assert_eq!(cells[1], "");
        assert_eq!(cells[5], "");
    }

    proptest::proptest! {
        #[test]
        fn sig9_keeps_nine_significant_digits(v in -1e12f64..1e12) {
            let s = sig9(v);
            let back: f64 = s.parse().unwrap();
            proptest::prop_assert!((back - v).abs() <= 5e-9 * v.abs().max(f64::MIN_POSITIVE));
        }
    }
}
