//! Input parsers: promoter FASTA, expression TSV, gene lists.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::expression::ExpressionMatrix;
use crate::sequence::{Promoter, PromoterSet};

const IUPAC: &[u8] = b"ACGTURYSWKMBDHVN";

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))
}

pub fn parse_fasta_str(text: &str, path: &Path) -> Result<PromoterSet> {
    let mut records: Vec<(String, usize, Vec<u8>)> = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = line.trim_end_matches('\r');
        if let Some(header) = line.strip_prefix('>') {
            let id = header
                .split_whitespace()
                .next()
                .ok_or_else(|| Error::parse(path, lineno, "empty header"))?;
            if !seen.insert(id.to_string()) {
                return Err(Error::parse(path, lineno, format!("duplicate gene id {id:?}")));
            }
            records.push((id.to_string(), lineno, Vec::new()));
            continue;
        }
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let Some((_, _, seq)) = records.last_mut() else {
            return Err(Error::parse(path, lineno, "sequence data before first header"));
        };
        for (col, &b) in line.as_bytes().iter().enumerate() {
            let u = b.to_ascii_uppercase();
            if !IUPAC.contains(&u) {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!("invalid nucleotide {:?} at column {}", b as char, col + 1),
                ));
            }
            seq.push(u);
        }
    }
    if records.is_empty() {
        return Err(Error::parse(path, 1, "no FASTA records"));
    }
    let mut promoters = Vec::with_capacity(records.len());
    for (id, lineno, seq) in records {
        if seq.is_empty() {
            return Err(Error::parse(path, lineno, format!("empty sequence for {id:?}")));
        }
        promoters.push(Promoter::new(id, seq));
    }
    PromoterSet::new(promoters)
}

pub fn parse_fasta(path: &Path) -> Result<PromoterSet> {
    parse_fasta_str(&read(path)?, path)
}

pub fn parse_expression_str(text: &str, path: &Path) -> Result<ExpressionMatrix> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "empty expression file"))?;
    let labels: Vec<String> = header.split('\t').skip(1).map(str::to_string).collect();
    if labels.is_empty() {
        return Err(Error::parse(path, 1, "header has no sample columns"));
    }
    let t = labels.len();
    let mut ids = Vec::new();
    let mut values = Vec::new();
    for (lineno, line) in lines {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != t + 1 {
            return Err(Error::parse(
                path,
                lineno,
                format!("expected {} fields, found {}", t + 1, fields.len()),
            ));
        }
        ids.push(fields[0].to_string());
        for (j, f) in fields[1..].iter().enumerate() {
            let f = f.trim();
            if f.is_empty() {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!("missing value in column {} ({})", j + 2, labels[j]),
                ));
            }
            let v: f64 = f.parse().map_err(|_| {
                Error::parse(
                    path,
                    lineno,
                    format!("non-numeric value {f:?} in column {} ({})", j + 2, labels[j]),
                )
            })?;
            values.push(v);
        }
    }
    if ids.is_empty() {
        return Err(Error::parse(path, 2, "no gene rows"));
    }
    let g = ids.len();
    ExpressionMatrix::new(DMatrix::from_row_slice(g, t, &values), ids, labels)
}

pub fn parse_expression_tsv(path: &Path) -> Result<ExpressionMatrix> {
    parse_expression_str(&read(path)?, path)
}

/// One gene id per line; blank lines and `#` comments ignored.
pub fn parse_gene_list(path: &Path) -> Result<HashSet<String>> {
    Ok(read(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.split_whitespace().next().unwrap_or(l).to_string())
        .collect())
}

pub fn write_fasta(ps: &PromoterSet) -> String {
    let mut out = String::new();
    for p in ps {
        out.push('>');
        out.push_str(&p.gene_id);
        out.push('\n');
        for chunk in p.bases.chunks(70) {
            out.push_str(std::str::from_utf8(chunk).expect("ASCII bases"));
            out.push('\n');
        }
    }
    out
}

pub fn write_expression(y: &ExpressionMatrix) -> String {
    let mut out = String::from("gene");
    for s in &y.sample_labels {
        out.push('\t');
        out.push_str(s);
    }
    out.push('\n');
    for (g, id) in y.gene_ids.iter().enumerate() {
        out.push_str(id);
        for t in 0..y.samples() {
            out.push('\t');
            out.push_str(&y.values[(g, t)].to_string());
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequence::{locate_word, MotifWord, Scale};

    fn p() -> &'static Path {
        Path::new("in.txt")
    }

    #[test]
    fn two_records() {
        let ps = parse_fasta_str(">g1 some description\nACGT\nAC\n>g2\nTTTT\n", p()).unwrap();
        assert_eq!(ps.gene_ids(), vec!["g1", "g2"]);
        assert_eq!(ps.get(0).bases, b"ACGTAC".to_vec());
    }

    #[test]
    fn lowercase_folded() {
        let ps = parse_fasta_str(">g\nacgt\n", p()).unwrap();
        assert_eq!(ps.get(0).bases, b"ACGT".to_vec());
    }

    #[test]
    fn n_accepted_but_never_matches() {
        let ps = parse_fasta_str(">g\nAACGNNACGTT\n", p()).unwrap();
        let hits = locate_word(&MotifWord::new("ACGTT").unwrap(), &ps.get(0).bases, Scale::new(0));
        assert_eq!(hits.as_slice(), &[6]);
        let hits = locate_word(&MotifWord::new("AACGA").unwrap(), &ps.get(0).bases, Scale::new(0));
        assert!(hits.is_empty());
    }

    #[test]
    fn fasta_errors_carry_line_numbers() {
        let err = parse_fasta_str(">a\nACGT\n>a\nAC\n", p()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = parse_fasta_str(">a\nACGT\n>b\n>c\nAA\n", p()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = parse_fasta_str(">a\nAC\nAXGT\n", p()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        assert!(err.to_string().contains("column 2"));
        assert!(parse_fasta_str("ACGT\n", p()).is_err());
    }

    #[test]
    fn expression_well_formed() {
        let y = parse_expression_str("gene\tt1\tt2\na\t1\t2\nb\t3\t4.5\nc\t-1\t0\n", p()).unwrap();
        assert_eq!((y.genes(), y.samples()), (3, 2));
        assert_eq!(y.values[(1, 1)], 4.5);
        assert_eq!(y.sample_labels, vec!["t1", "t2"]);
    }

    #[test]
    fn expression_errors() {
        let err = parse_expression_str("gene\tt1\tt2\na\t1\t\n", p()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        assert!(err.to_string().contains("column 3"));
        let err = parse_expression_str("gene\tt1\tt2\na\t1\tx\n", p()).unwrap_err();
        assert!(err.to_string().contains("non-numeric"));
        let err = parse_expression_str("gene\tt1\tt2\na\t1\n", p()).unwrap_err();
        assert!(err.to_string().contains("expected 3 fields"));
    }

    #[test]
    fn strict_join_lists_missing() {
        let ps = parse_fasta_str(">a\nACGT\n>b\nACGT\n", p()).unwrap();
        let y = parse_expression_str("gene\tt\na\t1\nb\t2\nc\t3\n", p()).unwrap();
        let err = ps.aligned_to(&y.gene_ids).unwrap_err();
        assert!(err.to_string().contains('c'), "{err}");
    }

    #[test]
    fn writers_round_trip() {
        let ps = parse_fasta_str(&format!(">a\n{}\n>b\nAC\n", "ACGT".repeat(40)), p()).unwrap();
        assert_eq!(parse_fasta_str(&write_fasta(&ps), p()).unwrap(), ps);
        let y = parse_expression_str("gene\tt1\tt2\na\t1.25\t-2\nb\t3\t4e-3\n", p()).unwrap();
        assert_eq!(parse_expression_str(&write_expression(&y), p()).unwrap(), y);
    }
}
