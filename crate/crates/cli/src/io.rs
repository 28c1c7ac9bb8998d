//! CSV input and output.

use std::path::Path;

use argmin_unique::report::csv_float;

fn open(path: &Path) -> Result<csv::Reader<std::fs::File>, String> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| format!("{}: {e}", path.display()))
}

/// One value per row; a non-numeric first row is taken as a header.
pub fn read_sample_csv(path: &Path) -> Result<Vec<f64>, String> {
    let mut out = Vec::new();
    for (i, rec) in open(path)?.records().enumerate() {
        let rec = rec.map_err(|e| format!("{}: {e}", path.display()))?;
        let field = rec.get(0).unwrap_or("");
        match field.parse::<f64>() {
            Ok(v) => out.push(v),
            Err(_) if i == 0 => continue,
            Err(_) => return Err(format!("{}: row {}: not a number: {field:?}", path.display(), i + 1)),
        }
    }
    Ok(out)
}

/// Header `y,x1,...,xd`; returns `(y, rows of x)`.
pub fn read_regression_csv(path: &Path) -> Result<(Vec<f64>, Vec<Vec<f64>>), String> {
    let mut reader = open(path)?;
    let mut records = reader.records();
    let header = records
        .next()
        .ok_or_else(|| format!("{}: empty file", path.display()))?
        .map_err(|e| e.to_string())?;
    let d = header.len().saturating_sub(1);
    let expected: Vec<String> = std::iter::once("y".to_string()).chain((1..=d).map(|k| format!("x{k}"))).collect();
    if d == 0 || header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(format!("{}: header must be y,x1,...,xd", path.display()));
    }
    let mut y = Vec::new();
    let mut rows = Vec::new();
    for (i, rec) in records.enumerate() {
        let rec = rec.map_err(|e| format!("{}: {e}", path.display()))?;
        let vals: Vec<f64> = rec
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| format!("{}: row {}: not a number: {f:?}", path.display(), i + 2)))
            .collect::<Result<_, _>>()?;
        if vals.len() != d + 1 {
            return Err(format!("{}: row {} has {} fields, expected {}", path.display(), i + 2, vals.len(), d + 1));
        }
        y.push(vals[0]);
        rows.push(vals[1..].to_vec());
    }
    Ok((y, rows))
}

/// CSV text with 12-significant-digit floats.
pub fn csv_text(header: &[&str], rows: &[Vec<f64>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r.iter().map(|v| csv_float(*v))).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn sample_with_and_without_header() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "z\n0.5\n-1.25\n3").unwrap();
        assert_eq!(read_sample_csv(f.path()).unwrap(), vec![0.5, -1.25, 3.0]);
        let mut g = tempfile::NamedTempFile::new().unwrap();
        writeln!(g, "1\nx").unwrap();
        assert!(read_sample_csv(g.path()).is_err());
    }

    #[test]
    fn regression_header_checked() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "y,x1,x2\n1,2,3\n4,5,6").unwrap();
        let (y, x) = read_regression_csv(f.path()).unwrap();
        assert_eq!(y, vec![1.0, 4.0]);
        assert_eq!(x, vec![vec![2.0, 3.0], vec![5.0, 6.0]]);
        let mut g = tempfile::NamedTempFile::new().unwrap();
        writeln!(g, "y,x2\n1,2").unwrap();
        assert!(read_regression_csv(g.path()).is_err());
    }

    #[test]
    fn csv_rounds_floats() {
        let s = csv_text(&["pi", "Q"], &[vec![0.1 + 0.2, -1.0]]);
        assert_eq!(s, "pi,Q\n0.3,-1\n");
    }
}
