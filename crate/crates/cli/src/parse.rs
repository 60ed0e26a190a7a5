//! Parsers for the compact list syntaxes accepted on the command line.

use rug::Float;

/// Partial quotients `"1,1,2"`; a trailing `...` repeats the listed digits
/// up to `depth`.
pub fn quotients(s: &str, depth: Option<usize>) -> Result<Vec<u64>, String> {
    let s = s.trim();
    let (body, repeat) = match s.strip_suffix("...") {
        Some(b) => (b.trim_end_matches([',', ' ']), true),
        None => (s, false),
    };
    let digits: Vec<u64> = body
        .split(',')
        .map(|d| d.trim().parse::<u64>().map_err(|e| format!("bad partial quotient {d:?}: {e}")))
        .collect::<Result<_, _>>()?;
    if digits.is_empty() || digits.contains(&0) {
        return Err("partial quotients must be positive integers".into());
    }
    let want = match (depth, repeat) {
        (Some(d), _) => d,
        (None, false) => digits.len(),
        (None, true) => return Err("a repeated pattern needs --depth".into()),
    };
    if want == 0 {
        return Err("depth must be positive".into());
    }
    Ok(digits.iter().cycle().take(want).copied().collect())
}

/// Half-widths: `2^-6:2^-18` (every integer exponent in between), or a
/// comma-separated list of numbers and powers of two.
pub fn scales(s: &str) -> Result<Vec<f64>, String> {
    let s = s.trim();
    if let Some((a, b)) = s.split_once(':') {
        let (ea, eb) = (pow2_exponent(a)?, pow2_exponent(b)?);
        let out: Vec<f64> = if ea >= eb {
            (eb..=ea).rev().map(|e| 2f64.powi(e)).collect()
        } else {
            (ea..=eb).map(|e| 2f64.powi(e)).collect()
        };
        return Ok(out);
    }
    s.split(',')
        .map(|p| {
            let p = p.trim();
            match pow2_exponent(p) {
                Ok(e) => Ok(2f64.powi(e)),
                Err(_) => p.parse::<f64>().map_err(|e| format!("bad scale {p:?}: {e}")),
            }
        })
        .collect()
}

fn pow2_exponent(s: &str) -> Result<i32, String> {
    let e = s.trim().strip_prefix("2^").ok_or_else(|| format!("expected 2^k, got {s:?}"))?;
    e.parse::<i32>().map_err(|err| format!("bad exponent in {s:?}: {err}"))
}

/// Levels: `4..12` or `4:12` (inclusive), `4:10:2` with a step, or a
/// comma-separated list.
pub fn levels(s: &str) -> Result<Vec<usize>, String> {
    let s = s.trim();
    let num = |p: &str| p.trim().parse::<usize>().map_err(|e| format!("bad level {p:?}: {e}"));
    let range = s.split_once("..").or_else(|| s.split_once(':'));
    let out: Vec<usize> = match range {
        Some((a, rest)) => {
            let (b, step) = match rest.split_once(':') {
                Some((b, st)) => (num(b)?, num(st)?),
                None => (num(rest)?, 1),
            };
            if step == 0 {
                return Err("level step must be positive".into());
            }
            (num(a)?..=b).step_by(step).collect()
        }
        None => s.split(',').map(num).collect::<Result<_, _>>()?,
    };
    if out.is_empty() {
        return Err(format!("no levels in {s:?}"));
    }
    if out.windows(2).any(|w| w[0] >= w[1]) {
        return Err("levels must be strictly increasing".into());
    }
    Ok(out)
}

/// A fraction `1/3` or a decimal, at `prec` bits.
pub fn fraction(s: &str, prec: u32) -> Result<Float, String> {
    let s = s.trim();
    let v = match s.split_once('/') {
        Some((a, b)) => {
            let a: u64 = a.trim().parse().map_err(|e| format!("bad numerator in {s:?}: {e}"))?;
            let b: u64 = b.trim().parse().map_err(|e| format!("bad denominator in {s:?}: {e}"))?;
            if b == 0 {
                return Err(format!("zero denominator in {s:?}"));
            }
            Float::with_val(prec, a) / b
        }
        None => flatcircle_core::map_core::parse_decimal(s, prec).map_err(|e| e.to_string())?,
    };
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quotient_patterns() {
        assert_eq!(quotients("1,2", None).unwrap(), vec![1, 2]);
        assert_eq!(quotients("1,2,...", Some(5)).unwrap(), vec![1, 2, 1, 2, 1]);
        assert_eq!(quotients("1,1,1", Some(2)).unwrap(), vec![1, 1]);
        assert!(quotients("1,0", None).is_err());
        assert!(quotients("1,...", None).is_err());
    }

    #[test]
    fn scale_ranges() {
        let s = scales("2^-6:2^-8").unwrap();
        assert_eq!(s, vec![2f64.powi(-6), 2f64.powi(-7), 2f64.powi(-8)]);
        assert_eq!(scales("0.01,2^-3").unwrap(), vec![0.01, 0.125]);
        assert!(scales("2^x:2^-3").is_err());
    }

    #[test]
    fn level_ranges() {
        assert_eq!(levels("4..6").unwrap(), vec![4, 5, 6]);
        assert_eq!(levels("4:10:2").unwrap(), vec![4, 6, 8, 10]);
        assert_eq!(levels("3,5").unwrap(), vec![3, 5]);
        assert!(levels("5,3").is_err());
        assert!(levels("4:10:0").is_err());
    }

    #[test]
    fn fractions() {
        assert_eq!(fraction("1/4", 64).unwrap(), 0.25);
        assert_eq!(fraction("0.5", 64).unwrap(), 0.5);
        assert!(fraction("1/0", 64).is_err());
    }
}
