use crate::error::{CliError, CliResult};

/// Parses `a,b,c` or `start:stop:count` (inclusive, evenly spaced).
pub fn parse_grid(spec: &str) -> CliResult<Vec<f64>> {
    let spec = spec.trim();
    if spec.is_empty() {
        return Err(CliError::usage("empty grid"));
    }
    let values = if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        let [start, stop, count] = parts[..] else {
            return Err(CliError::usage(format!("grid `{spec}` must be start:stop:count")));
        };
        let start = number(start)?;
        let stop = number(stop)?;
        let count: usize = count
            .trim()
            .parse()
            .map_err(|_| CliError::usage(format!("grid count `{count}` is not a positive integer")))?;
        match count {
            0 => return Err(CliError::usage("grid count must be at least 1")),
            1 => vec![start],
            _ => (0..count)
                .map(|i| start + (stop - start) * i as f64 / (count - 1) as f64)
                .collect(),
        }
    } else {
        spec.split(',').map(number).collect::<CliResult<Vec<_>>>()?
    };
    if let Some(v) = values.iter().find(|v| **v < 0.0) {
        return Err(CliError::usage(format!("grid values must be non-negative, got {v}")));
    }
    Ok(values)
}

fn number(s: &str) -> CliResult<f64> {
    let s = s.trim();
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| CliError::usage(format!("`{s}` is not a finite number")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn list_and_range() {
        assert_eq!(parse_grid("1, 2.5,4").unwrap(), vec![1.0, 2.5, 4.0]);
        assert_eq!(parse_grid("0:140:15").unwrap().len(), 15);
        assert_eq!(parse_grid("0:140:15").unwrap()[14], 140.0);
        assert_eq!(parse_grid("3:9:1").unwrap(), vec![3.0]);
    }

    #[test]
    fn rejects_bad_grids() {
        for bad in ["", "  ", "1,,2", "0:1", "0:1:0", "a:b:3", "-1,2", "1,inf"] {
            assert!(parse_grid(bad).is_err(), "{bad}");
        }
    }
}
