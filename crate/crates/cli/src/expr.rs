//! Linear functionals written as `2*b1 - 0.5*b3 + b7`.

/// Parses a linear combination of coefficients `b<i>` (1-based) into a
/// weight vector of length `p`.
pub fn parse_linear(expr: &str, p: usize) -> Result<Vec<f64>, String> {
    let mut weights = vec![0.0; p];
    let cleaned: String = expr.chars().filter(|c| !c.is_whitespace()).collect();
    if cleaned.is_empty() {
        return Err("empty functional".into());
    }
    let mut terms = Vec::new();
    let mut start = 0;
    let bytes = cleaned.as_bytes();
    for k in 1..bytes.len() {
        if (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E' | b'*') {
            terms.push(&cleaned[start..k]);
            start = k;
        }
    }
    terms.push(&cleaned[start..]);
    for term in terms {
        let (sign, body) = match term.as_bytes().first() {
            Some(b'-') => (-1.0, &term[1..]),
            Some(b'+') => (1.0, &term[1..]),
            _ => (1.0, term),
        };
        let (coef, var) = match body.split_once('*') {
            Some((c, v)) => (c.parse::<f64>().map_err(|_| format!("bad coefficient '{c}' in '{term}'"))?, v),
            None => (1.0, body),
        };
        let idx = var
            .strip_prefix('b')
            .and_then(|i| i.parse::<usize>().ok())
            .ok_or_else(|| format!("expected a term like 2*b3, got '{term}'"))?;
        if idx == 0 || idx > p {
            return Err(format!("coefficient index {idx} outside 1..={p}"));
        }
        weights[idx - 1] += sign * coef;
    }
    Ok(weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_terms() {
        assert_eq!(parse_linear("2*b1 - 0.5*b3 + b2", 3).unwrap(), vec![2.0, 1.0, -0.5]);
        assert_eq!(parse_linear("-b2", 2).unwrap(), vec![0.0, -1.0]);
        assert_eq!(parse_linear("1e-1*b1+b1", 1).unwrap(), vec![1.1]);
        assert!(parse_linear("b0", 3).is_err());
        assert!(parse_linear("b4", 3).is_err());
        assert!(parse_linear("x*b1", 3).is_err());
        assert!(parse_linear("b1*b2", 3).is_err());
    }
}
