//! Plain-text number formatting shared by the CSV and JSON writers.

/// `x` to 9 significant digits, fixed notation when that stays readable.
pub fn fmt9(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    if (-5..9).contains(&mag) {
        let decimals = (8 - mag).max(0) as usize;
        let s = format!("{x:.decimals$}");
        trim(&s)
    } else {
        format!("{x:.8e}")
    }
}

fn trim(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::fmt9;

    #[test]
    fn formats() {
        assert_eq!(fmt9(0.0), "0");
        assert_eq!(fmt9(0.2 / 0.488), "0.409836066");
        assert_eq!(fmt9(1.0), "1");
        assert_eq!(fmt9(1234.5), "1234.5");
        assert_eq!(fmt9(2.5e-12), "2.50000000e-12");
        assert_eq!(fmt9(-0.125), "-0.125");
    }
}
