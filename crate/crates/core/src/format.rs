/// Renders `x` with at most six decimals and no trailing zeros.
pub fn trim(x: f64) -> String {
    let s = format!("{x:.6}");
    let s = if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s.as_str()
    };
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::trim;

    #[test]
    fn trims() {
        assert_eq!(trim(2.4425), "2.4425");
        assert_eq!(trim(0.8800000000000001), "0.88");
        assert_eq!(trim(1.0), "1");
        assert_eq!(trim(1.0 / 3.0), "0.333333");
        assert_eq!(trim(-0.0000001), "0");
    }
}
