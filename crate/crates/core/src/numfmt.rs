//! Decimal text output shared by every CSV and sidecar writer.

/// Formats `x` with 9 significant digits, `%.9g` style: fixed notation for
/// decimal exponents in [-5, 9), scientific otherwise, trailing zeros trimmed.
pub fn sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{:.8e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim_zeros(format!("{:.*}", decimals, x))
    } else {
        format!("{}e{}", trim_zeros(mantissa.to_string()), exp)
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        let t = s.trim_end_matches('0').trim_end_matches('.');
        t.to_string()
    } else {
        s
    }
}

/// Shortest text that parses back to the identical `f64`; used where values must round-trip.
pub fn exact(x: f64) -> String {
    format!("{x:?}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(sig9(0.0), "0");
        assert_eq!(sig9(8.0), "8");
        assert_eq!(sig9(2.5), "2.5");
        assert_eq!(sig9(1.0 / 3.0), "0.333333333");
        assert_eq!(sig9(123456.789012), "123456.789");
        assert_eq!(sig9(-0.000123456789123), "-0.000123456789");
        assert_eq!(sig9(1.5e-7), "1.5e-7");
        assert_eq!(sig9(6.02214076e23), "6.02214076e23");
        assert_eq!(sig9(999999999.7), "1e9");
        assert_eq!(sig9(19.9999999999), "20");
    }

    #[test]
    fn exact_round_trips() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02e23] {
            assert_eq!(exact(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }
}
