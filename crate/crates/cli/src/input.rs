use std::io::Read;

use spca_core::DataSet;

/// Parse numeric CSV. A leading row that does not parse as numbers is taken
/// as the header; a file whose first row is numeric has none.
pub fn parse_data<R: Read>(reader: R) -> Result<DataSet, String> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut seen_any = false;
    for (line, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| format!("malformed CSV: {e}"))?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        let parsed: Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(row) => rows.push(row),
            Err(_) if !seen_any => {}
            Err(e) => return Err(format!("line {}: {e}", line + 1)),
        }
        seen_any = true;
    }
    if !seen_any {
        return Err("input is empty".into());
    }
    DataSet::from_rows(&rows).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_is_optional() {
        let a = parse_data("x,y\n1,2\n3,4\n".as_bytes()).unwrap();
        let b = parse_data("1,2\n3,4\n".as_bytes()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n(), 2);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(parse_data("".as_bytes()).is_err());
        assert!(parse_data("x,y\n".as_bytes()).is_err());
        assert!(parse_data("x,y\n1,2\n3\n".as_bytes()).is_err());
        assert!(parse_data("x,y\n1,a\n".as_bytes()).is_err());
        assert!(parse_data("x,y\n1,nan\n".as_bytes()).is_err());
    }
}
