//! Parsing of `--t-grid`, `--chart` and point lists.

use nalgebra::DMatrix;

/// `log:a:b:n`, `lin:a:b:n` or an explicit list `t1,t2,...`.
pub fn parse_t_grid(s: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let ts = match parts.as_slice() {
        [kind @ ("log" | "lin"), a, b, n] => {
            let a: f64 = a.parse().map_err(|e| format!("t-grid start `{a}`: {e}"))?;
            let b: f64 = b.parse().map_err(|e| format!("t-grid end `{b}`: {e}"))?;
            let n: usize = n.parse().map_err(|e| format!("t-grid count `{n}`: {e}"))?;
            if n < 2 || !(a > 0.0) || !(b > a) || !b.is_finite() {
                return Err(format!("t-grid `{s}` needs 0 < a < b and n >= 2"));
            }
            (0..n)
                .map(|i| {
                    let f = i as f64 / (n - 1) as f64;
                    if i == n - 1 {
                        b
                    } else if *kind == "log" {
                        a * (b / a).powf(f)
                    } else {
                        a + (b - a) * f
                    }
                })
                .collect()
        }
        [list] => parse_list(list)?,
        _ => return Err(format!("cannot parse t-grid `{s}`")),
    };
    if let Some(t) = ts.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
        return Err(format!("t-grid contains non-positive time {t}"));
    }
    Ok(ts)
}

pub fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}")))
        .collect()
}

/// Square chart matrix written row by row, rows separated by `;`.
pub fn parse_matrix(s: &str) -> Result<DMatrix<f64>, String> {
    let rows: Vec<Vec<f64>> = s.split(';').map(parse_list).collect::<Result<_, _>>()?;
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(format!("chart `{s}` is not square"));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

/// `lo1,lo2,..:hi1,hi2,..`.
pub fn parse_box(s: &str) -> Result<(Vec<f64>, Vec<f64>), String> {
    let (lo, hi) = s.split_once(':').ok_or(format!("box `{s}` needs the form lo,..:hi,.."))?;
    let (lo, hi) = (parse_list(lo)?, parse_list(hi)?);
    if lo.len() != hi.len() || lo.iter().zip(&hi).any(|(a, b)| !(a < b)) {
        return Err(format!("box `{s}` has mismatched or empty sides"));
    }
    Ok((lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_grid_hits_endpoints() {
        let g = parse_t_grid("log:1e-3:1e-1:20").unwrap();
        assert_eq!(g.len(), 20);
        assert_eq!(g[0], 1e-3);
        assert_eq!(g[19], 1e-1);
        assert!((g[1] / g[0] - g[19] / g[18]).abs() < 1e-12);
    }

    #[test]
    fn lists_and_errors() {
        assert_eq!(parse_t_grid("0.1,0.2").unwrap(), vec![0.1, 0.2]);
        assert_eq!(parse_t_grid("lin:1:2:3").unwrap(), vec![1.0, 1.5, 2.0]);
        assert!(parse_t_grid("log:1:0.5:4").is_err());
        assert!(parse_t_grid("0.1,-1").is_err());
        assert!(parse_t_grid("cubic:1:2:3").is_err());
    }

    #[test]
    fn matrices_and_boxes() {
        let m = parse_matrix("1,1;1,-1").unwrap();
        assert_eq!(m[(1, 1)], -1.0);
        assert!(parse_matrix("1,2,3;4,5").is_err());
        let (lo, hi) = parse_box("-3,-3:3,3").unwrap();
        assert_eq!((lo, hi), (vec![-3.0, -3.0], vec![3.0, 3.0]));
        assert!(parse_box("1:0").is_err());
    }
}
