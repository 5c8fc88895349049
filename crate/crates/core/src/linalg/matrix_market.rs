//! MatrixMarket coordinate format (real, general or symmetric).

use std::fmt::Write as _;
use std::path::Path;

use super::csr::CsrMatrix;
use crate::error::{Error, Result};

pub fn to_string(m: &CsrMatrix) -> String {
    let mut s = String::with_capacity(32 * m.nnz() + 64);
    s.push_str("%%MatrixMarket matrix coordinate real general\n");
    let _ = writeln!(s, "{} {} {}", m.n_rows(), m.n_cols(), m.nnz());
    for i in 0..m.n_rows() {
        let (cols, vals) = m.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            let _ = writeln!(s, "{} {} {:e}", i + 1, j + 1, v);
        }
    }
    s
}

pub fn from_str(text: &str) -> Result<CsrMatrix> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "empty MatrixMarket file".into(),
    })?;
    let header_lc = header.to_ascii_lowercase();
    if !header_lc.starts_with("%%matrixmarket matrix coordinate real") {
        return Err(Error::Parse {
            line: 1,
            message: format!("unsupported MatrixMarket header `{header}`"),
        });
    }
    let symmetric = header_lc.contains("symmetric");
    let mut size: Option<(usize, usize, usize)> = None;
    let mut triplets = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let parse_err = |message: String| Error::Parse { line: line_no, message };
        let fields: Vec<&str> = t.split_whitespace().collect();
        if size.is_none() {
            if fields.len() != 3 {
                return Err(parse_err("expected `rows cols nnz`".into()));
            }
            let p = |s: &str| s.parse::<usize>().map_err(|e| parse_err(e.to_string()));
            size = Some((p(fields[0])?, p(fields[1])?, p(fields[2])?));
            continue;
        }
        if fields.len() != 3 {
            return Err(parse_err("expected `i j value`".into()));
        }
        let i: usize = fields[0]
            .parse()
            .map_err(|e: std::num::ParseIntError| parse_err(e.to_string()))?;
        let j: usize = fields[1]
            .parse()
            .map_err(|e: std::num::ParseIntError| parse_err(e.to_string()))?;
        let v: f64 = fields[2]
            .parse()
            .map_err(|e: std::num::ParseFloatError| parse_err(e.to_string()))?;
        let (nr, nc, _) = size.unwrap();
        if i == 0 || j == 0 || i > nr || j > nc {
            return Err(parse_err(format!("entry ({i},{j}) out of range")));
        }
        triplets.push((i - 1, j - 1, v));
        if symmetric && i != j {
            triplets.push((j - 1, i - 1, v));
        }
    }
    let (nr, nc, _) = size.ok_or(Error::Parse {
        line: 0,
        message: "missing size line".into(),
    })?;
    Ok(CsrMatrix::from_triplets(nr, nc, &triplets))
}

pub fn write(m: &CsrMatrix, path: &Path) -> Result<()> {
    std::fs::write(path, to_string(m)).map_err(|e| Error::io(path, e))
}

pub fn read(path: &Path) -> Result<CsrMatrix> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let m = CsrMatrix::from_dense(&[vec![1.5, 0.0, -2.0], vec![0.0, 3.25e-17, 0.0]]);
        let back = from_str(&to_string(&m)).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn symmetric_expands() {
        let text = "%%MatrixMarket matrix coordinate real symmetric\n2 2 2\n1 1 2.0\n2 1 -1.0\n";
        let m = from_str(text).unwrap();
        assert_eq!(m.to_dense(), vec![vec![2.0, -1.0], vec![-1.0, 0.0]]);
    }

    #[test]
    fn bad_header() {
        assert!(from_str("%%MatrixMarket matrix array real general\n").is_err());
    }
}
