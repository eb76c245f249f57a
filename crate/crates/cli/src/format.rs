//! Fixed-precision number formatting for byte-stable output.

use symmetra::linalg::C64;

/// `v` with `prec` decimals; values that round to zero print without a sign.
pub fn fixed(v: f64, prec: usize) -> String {
    if !v.is_finite() {
        return format!("{v}");
    }
    let s = format!("{v:.prec$}");
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}

/// Scientific notation with three significant decimals.
pub fn sci(v: f64) -> String {
    format!("{v:.3e}")
}

pub fn complex(z: C64, prec: usize) -> String {
    if z.im.abs() < 0.5 * 10f64.powi(-(prec as i32)) {
        fixed(z.re, prec)
    } else {
        let sign = if z.im < 0.0 { '-' } else { '+' };
        format!("{}{sign}{}i", fixed(z.re, prec), fixed(z.im.abs(), prec))
    }
}

pub fn list<T: std::fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn negative_zero_is_unsigned() {
        assert_eq!(fixed(-1e-12, 6), "0.000000");
        assert_eq!(fixed(-0.5, 2), "-0.50");
        assert_eq!(complex(C64::new(1.0, -2.0), 1), "1.0-2.0i");
        assert_eq!(complex(C64::new(1.0, 1e-9), 3), "1.000");
    }
}
