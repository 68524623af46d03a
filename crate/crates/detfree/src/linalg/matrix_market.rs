//! Matrix Market exchange format (coordinate, real, general or symmetric).
//!
//! Symmetric matrices are stored as their lower triangle and mirrored on
//! read. Values are written with 17 significant digits so that a
//! write/read round trip reproduces every f64 bit-for-bit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::{Error, Result};

use super::sparse::SparseMatrix;

pub fn write_matrix_market(path: &Path, m: &SparseMatrix) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    let kind = if m.is_symmetric() { "symmetric" } else { "general" };
    writeln!(w, "%%MatrixMarket matrix coordinate real {kind}")?;
    let entries: Vec<(usize, usize, f64)> = m
        .entries()
        .filter(|&(i, j, _)| !m.is_symmetric() || j <= i)
        .collect();
    writeln!(w, "{} {} {}", m.n_rows(), m.n_cols(), entries.len())?;
    for (i, j, v) in entries {
        writeln!(w, "{} {} {:.16e}", i + 1, j + 1, v)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix_market(path: &Path) -> Result<SparseMatrix> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let parse_err = |line: usize, message: &str| Error::Parse {
        line,
        message: message.to_string(),
    };

    let mut lines = reader.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty file"))
        .and_then(|(n, r)| r.map(|l| (n, l)).map_err(Error::from))?;
    let tokens: Vec<&str> = header.split_whitespace().collect();
    if tokens.len() != 5
        || !tokens[0].eq_ignore_ascii_case("%%MatrixMarket")
        || !tokens[1].eq_ignore_ascii_case("matrix")
        || !tokens[2].eq_ignore_ascii_case("coordinate")
        || !tokens[3].eq_ignore_ascii_case("real")
    {
        return Err(parse_err(
            1,
            "expected header '%%MatrixMarket matrix coordinate real <general|symmetric>'",
        ));
    }
    let symmetric = match tokens[4].to_ascii_lowercase().as_str() {
        "general" => false,
        "symmetric" => true,
        other => {
            return Err(Error::Parse {
                line: 1,
                message: format!("unsupported symmetry kind '{other}'"),
            })
        }
    };

    let mut size: Option<(usize, usize, usize)> = None;
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('%') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        match size {
            None => {
                if fields.len() != 3 {
                    return Err(parse_err(lineno, "size line must be 'rows cols nnz'"));
                }
                let rows: usize = fields[0]
                    .parse()
                    .map_err(|_| parse_err(lineno, "invalid row count"))?;
                let cols: usize = fields[1]
                    .parse()
                    .map_err(|_| parse_err(lineno, "invalid column count"))?;
                let nnz: usize = fields[2]
                    .parse()
                    .map_err(|_| parse_err(lineno, "invalid entry count"))?;
                if symmetric && rows != cols {
                    return Err(parse_err(lineno, "symmetric matrix must be square"));
                }
                triplets.reserve(if symmetric { 2 * nnz } else { nnz });
                size = Some((rows, cols, nnz));
            }
            Some((rows, cols, nnz)) => {
                if fields.len() != 3 {
                    return Err(parse_err(lineno, "entry line must be 'row col value'"));
                }
                if triplets.len() >= if symmetric { 2 * nnz } else { nnz } {
                    return Err(parse_err(lineno, "more entries than the size line declares"));
                }
                let i: usize = fields[0]
                    .parse()
                    .map_err(|_| parse_err(lineno, "invalid row index"))?;
                let j: usize = fields[1]
                    .parse()
                    .map_err(|_| parse_err(lineno, "invalid column index"))?;
                let v: f64 = fields[2]
                    .parse()
                    .map_err(|_| parse_err(lineno, "invalid value"))?;
                if i < 1 || i > rows || j < 1 || j > cols {
                    return Err(Error::Parse {
                        line: lineno,
                        message: format!("index ({i}, {j}) outside {rows} x {cols}"),
                    });
                }
                if symmetric && j > i {
                    return Err(parse_err(
                        lineno,
                        "symmetric files must store the lower triangle only",
                    ));
                }
                triplets.push((i - 1, j - 1, v));
                if symmetric && i != j {
                    triplets.push((j - 1, i - 1, v));
                }
            }
        }
    }
    let (rows, cols, nnz) = size.ok_or_else(|| parse_err(2, "missing size line"))?;
    let stored = if symmetric {
        triplets.iter().filter(|&&(i, j, _)| j <= i).count()
    } else {
        triplets.len()
    };
    if stored != nnz {
        return Err(Error::Parse {
            line: 0,
            message: format!("size line declares {nnz} entries but file has {stored}"),
        });
    }
    let m = SparseMatrix::from_triplets(rows, cols, &triplets)?;
    if symmetric {
        m.into_symmetric()
    } else {
        Ok(m)
    }
}
