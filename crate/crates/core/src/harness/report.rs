//! Newline-delimited JSON records and CSV aggregate tables.

use serde::Serialize;

/// One JSON object per line.
pub fn to_jsonl<T: Serialize>(records: &[T]) -> Result<String, serde_json::Error> {
    let mut out = String::new();
    for r in records {
        out += &serde_json::to_string(r)?;
        out.push('\n');
    }
    Ok(out)
}

/// Header plus one row per item; field names become column names.
pub fn to_csv<T: Serialize>(rows: &[T]) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Median of a sample, `None` when empty.
pub fn median(values: &[usize]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_unstable();
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] as f64 } else { (v[n / 2 - 1] + v[n / 2]) as f64 / 2.0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Row {
        p: f64,
        hits: usize,
    }

    #[test]
    fn formats() {
        let rows = [Row { p: 0.5, hits: 3 }, Row { p: 0.25, hits: 1 }];
        assert_eq!(to_csv(&rows).unwrap(), "p,hits\n0.5,3\n0.25,1\n");
        assert_eq!(to_jsonl(&rows).unwrap(), "{\"p\":0.5,\"hits\":3}\n{\"p\":0.25,\"hits\":1}\n");
        assert_eq!(median(&[3, 1, 2]), Some(2.0));
        assert_eq!(median(&[4, 1, 2, 3]), Some(2.5));
        assert_eq!(median(&[]), None);
    }
}
