//! Number formatting that mirrors R's `print`/`cat` output: round to a number
//! of significant digits, drop trailing zeros, and pick fixed or scientific
//! notation by whichever is narrower (fixed wins ties).

/// Formats `x` with at most `digits` significant digits.
pub fn format_significant(x: f64, digits: usize) -> String {
    let digits = digits.max(1);
    if x.is_nan() {
        return "NaN".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "Inf" } else { "-Inf" }.to_string();
    }
    if x == 0.0 {
        return "0".to_string();
    }

    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exponent) = sci.split_once('e').expect("exponent marker");
    let exponent: i32 = exponent.parse().expect("integer exponent");
    let negative = mantissa.starts_with('-');
    let mantissa_digits: String = mantissa.chars().filter(|c| c.is_ascii_digit()).collect();
    let significant = mantissa_digits.trim_end_matches('0');
    let significant = if significant.is_empty() { "0" } else { significant };
    let sign = if negative { "-" } else { "" };

    let sci_text = {
        let (head, tail) = significant.split_at(1);
        let mut s = format!("{sign}{head}");
        if !tail.is_empty() {
            s.push('.');
            s.push_str(tail);
        }
        let esign = if exponent < 0 { '-' } else { '+' };
        s.push_str(&format!("e{esign}{:02}", exponent.abs()));
        s
    };

    let fixed_text = {
        let k = significant.len() as i32;
        let mut s = String::from(sign);
        if exponent >= 0 {
            let int_len = (exponent + 1) as usize;
            if significant.len() <= int_len {
                s.push_str(significant);
                s.push_str(&"0".repeat(int_len - significant.len()));
            } else {
                s.push_str(&significant[..int_len]);
                s.push('.');
                s.push_str(&significant[int_len..]);
            }
        } else {
            s.push_str("0.");
            s.push_str(&"0".repeat((-exponent - 1) as usize));
            s.push_str(significant);
        }
        debug_assert!(k > 0);
        s
    };

    if fixed_text.len() <= sci_text.len() {
        fixed_text
    } else {
        sci_text
    }
}
