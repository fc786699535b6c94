//! Corpus and matrix file ingestion: MatrixMarket coordinate files,
//! document-term triple files with TF-IDF weighting and document-frequency
//! thresholding, column normalization, and the anchor/vocabulary report
//! formats.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::dense::DenseMatrix;
use crate::error::{Result, XrayError};
use crate::sparse::{build_sparse, SparseMatrix};

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> XrayError {
    XrayError::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

/// Read a MatrixMarket `coordinate real general` file (1-based indices,
/// duplicates summed).
pub fn read_coordinate_matrix(path: impl AsRef<Path>) -> Result<SparseMatrix> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines().enumerate();

    let (line_no, header) = loop {
        match lines.next() {
            Some((i, line)) => {
                let line = line?;
                if !line.trim().is_empty() {
                    break (i + 1, line);
                }
            }
            None => return Err(parse_err(path, 1, "empty file, expected MatrixMarket header")),
        }
    };
    let tokens: Vec<String> = header.split_whitespace().map(|t| t.to_lowercase()).collect();
    let expected = ["%%matrixmarket", "matrix", "coordinate", "real", "general"];
    if tokens.len() != expected.len() || tokens.iter().zip(expected).any(|(a, b)| a != b) {
        return Err(parse_err(
            path,
            line_no,
            "malformed header, expected '%%MatrixMarket matrix coordinate real general'",
        ));
    }

    let mut dims: Option<(usize, usize, usize)> = None;
    let mut triples: Vec<(usize, usize, f64)> = Vec::new();
    let mut last_line = line_no;
    for (i, line) in lines {
        let line_no = i + 1;
        last_line = line_no;
        let line = line?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('%') {
            continue;
        }
        let fields: Vec<&str> = text.split_whitespace().collect();
        match dims {
            None => {
                if fields.len() != 3 {
                    return Err(parse_err(path, line_no, "size line must be 'rows cols nnz'"));
                }
                let m: usize = fields[0]
                    .parse()
                    .map_err(|_| parse_err(path, line_no, "non-numeric row count"))?;
                let n: usize = fields[1]
                    .parse()
                    .map_err(|_| parse_err(path, line_no, "non-numeric column count"))?;
                let nnz: usize = fields[2]
                    .parse()
                    .map_err(|_| parse_err(path, line_no, "non-numeric entry count"))?;
                dims = Some((m, n, nnz));
                triples.reserve(nnz);
            }
            Some((m, n, nnz)) => {
                if triples.len() == nnz {
                    return Err(parse_err(
                        path,
                        line_no,
                        format!("more than the declared {nnz} entries"),
                    ));
                }
                if fields.len() != 3 {
                    return Err(parse_err(path, line_no, "entry line must be 'row col value'"));
                }
                let row: usize = fields[0]
                    .parse()
                    .map_err(|_| parse_err(path, line_no, "non-numeric row index"))?;
                let col: usize = fields[1]
                    .parse()
                    .map_err(|_| parse_err(path, line_no, "non-numeric column index"))?;
                let value: f64 = fields[2]
                    .parse()
                    .map_err(|_| parse_err(path, line_no, "non-numeric value"))?;
                if !value.is_finite() {
                    return Err(parse_err(path, line_no, "non-finite value"));
                }
                if row < 1 || row > m || col < 1 || col > n {
                    return Err(parse_err(
                        path,
                        line_no,
                        format!("entry ({row}, {col}) outside declared {m}x{n} matrix"),
                    ));
                }
                triples.push((row - 1, col - 1, value));
            }
        }
    }
    let Some((m, n, nnz)) = dims else {
        return Err(parse_err(path, last_line, "missing size line"));
    };
    if triples.len() != nnz {
        return Err(parse_err(
            path,
            last_line,
            format!("declared {nnz} entries but found {}", triples.len()),
        ));
    }
    build_sparse(&triples, m, n)
}

fn write_mm_header<W: Write>(
    w: &mut W,
    n_rows: usize,
    n_cols: usize,
    nnz: usize,
) -> std::io::Result<()> {
    writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(w, "{n_rows} {n_cols} {nnz}")
}

/// Write a sparse matrix in MatrixMarket coordinate format, full precision,
/// entries in column-major order.
pub fn write_coordinate_matrix(m: &SparseMatrix, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_mm_header(&mut w, m.n_rows(), m.n_cols(), m.nnz())?;
    for j in 0..m.n_cols() {
        let (rows, vals) = m.col(j);
        for (&i, &v) in rows.iter().zip(vals) {
            writeln!(w, "{} {} {:.16e}", i + 1, j + 1, v)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Write a dense matrix in the same format; exact zeros are skipped.
pub fn write_coordinate_matrix_dense(m: &DenseMatrix, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_mm_header(&mut w, m.n_rows(), m.n_cols(), m.count_nonzero())?;
    for j in 0..m.n_cols() {
        for i in 0..m.n_rows() {
            let v = m.get(i, j);
            if v != 0.0 {
                writeln!(w, "{} {} {:.16e}", i + 1, j + 1, v)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Per-corpus bookkeeping: document/term counts, document frequencies, and
/// the term-id to label map (column j of X is `terms[j]`).
#[derive(Debug, Clone)]
pub struct CorpusStats {
    pub n_docs: usize,
    pub n_terms: usize,
    /// Documents containing each retained term.
    pub doc_freq: Vec<usize>,
    /// Column index to term label.
    pub terms: Vec<String>,
}

/// A `(doc id, term label, count)` record.
pub type DocTermTriple = (String, String, f64);

/// Read tab-separated `doc<TAB>term<TAB>count` lines; `#` lines are
/// comments. Counts must be positive and finite.
pub fn read_docterm_triples(path: impl AsRef<Path>) -> Result<Vec<DocTermTriple>> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let text = line.trim_end_matches(['\r', '\n']);
        if text.trim().is_empty() || text.trim_start().starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = text.split('\t').collect();
        if fields.len() != 3 {
            return Err(parse_err(
                path,
                line_no,
                "expected 'doc<TAB>term<TAB>count'",
            ));
        }
        let count: f64 = fields[2]
            .trim()
            .parse()
            .map_err(|_| parse_err(path, line_no, "non-numeric count"))?;
        if !(count > 0.0) || !count.is_finite() {
            return Err(parse_err(path, line_no, "count must be positive"));
        }
        out.push((fields[0].to_string(), fields[1].to_string(), count));
    }
    Ok(out)
}

/// Build the documents-by-terms TF-IDF matrix.
///
/// Terms with document frequency below `min_df` or above
/// `max_df_frac * n_docs` are dropped. Entries are `tf * ln(n_docs / df)`;
/// a term present in every document weighs zero and its column is kept but
/// structurally empty, so the term-id map stays stable. Documents and terms
/// are ordered by sorted label, which makes the result independent of the
/// input ordering.
pub fn build_docterm(
    triples: &[DocTermTriple],
    min_df: usize,
    max_df_frac: f64,
) -> Result<(SparseMatrix, CorpusStats)> {
    if triples.is_empty() {
        return Err(XrayError::EmptyCorpus("no document-term records".into()));
    }
    // (term, doc) -> summed count, keys sorted
    let mut counts: BTreeMap<(&str, &str), f64> = BTreeMap::new();
    let mut docs: std::collections::BTreeSet<&str> = std::collections::BTreeSet::new();
    for (doc, term, count) in triples {
        *counts.entry((term.as_str(), doc.as_str())).or_insert(0.0) += count;
        docs.insert(doc.as_str());
    }
    // rows follow sorted document ids
    let doc_index: BTreeMap<&str, usize> = docs
        .iter()
        .enumerate()
        .map(|(i, &d)| (d, i))
        .collect();
    let n_docs = doc_index.len();

    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for (term, _doc) in counts.keys() {
        *df.entry(term).or_insert(0) += 1;
    }

    let max_df = max_df_frac * n_docs as f64;
    let kept: Vec<(&str, usize)> = df
        .iter()
        .filter(|(_, &d)| d >= min_df && d as f64 <= max_df)
        .map(|(&t, &d)| (t, d))
        .collect();
    if kept.is_empty() {
        return Err(XrayError::EmptyCorpus(
            "no terms survive the document-frequency thresholds".into(),
        ));
    }
    let term_index: BTreeMap<&str, usize> = kept
        .iter()
        .enumerate()
        .map(|(j, &(t, _))| (t, j))
        .collect();

    let mut entries = Vec::with_capacity(counts.len());
    for (&(term, doc), &tf) in &counts {
        if let Some(&j) = term_index.get(term) {
            let d = kept[j].1;
            let idf = (n_docs as f64 / d as f64).ln();
            let v = tf * idf;
            if v != 0.0 {
                entries.push((doc_index[doc], j, v));
            }
        }
    }
    let x = build_sparse(&entries, n_docs, kept.len())?;
    let stats = CorpusStats {
        n_docs,
        n_terms: kept.len(),
        doc_freq: kept.iter().map(|&(_, d)| d).collect(),
        terms: kept.iter().map(|&(t, _)| t.to_string()).collect(),
    };
    Ok((x, stats))
}

/// Column normalization modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormalizationMode {
    None,
    L1,
    L2,
}

impl std::fmt::Display for NormalizationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NormalizationMode::None => "none",
            NormalizationMode::L1 => "l1",
            NormalizationMode::L2 => "l2",
        })
    }
}

impl std::str::FromStr for NormalizationMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "none" => Ok(NormalizationMode::None),
            "l1" => Ok(NormalizationMode::L1),
            "l2" => Ok(NormalizationMode::L2),
            other => Err(format!("unknown normalization '{other}' (none, l1, l2)")),
        }
    }
}

/// Normalize columns to unit l1 or l2 norm. Zero columns are left untouched
/// and their indices are returned alongside the matrix.
pub fn normalize_columns(x: &SparseMatrix, mode: NormalizationMode) -> (SparseMatrix, Vec<usize>) {
    let zero_cols: Vec<usize> = (0..x.n_cols()).filter(|&j| x.col_nnz(j) == 0).collect();
    if mode == NormalizationMode::None {
        return (x.clone(), zero_cols);
    }
    let norms: Vec<f64> = (0..x.n_cols())
        .into_par_iter()
        .map(|j| {
            let (_, vals) = x.col(j);
            match mode {
                NormalizationMode::L1 => vals.iter().map(|v| v.abs()).sum(),
                NormalizationMode::L2 => vals.iter().map(|v| v * v).sum::<f64>().sqrt(),
                NormalizationMode::None => unreachable!(),
            }
        })
        .collect();
    let scale: Vec<f64> = norms
        .iter()
        .map(|&s| if s > 0.0 { 1.0 / s } else { 1.0 })
        .collect();
    (x.scaled_columns(&scale), zero_cols)
}

/// Anchor report: one `rank<TAB>column<TAB>label` line per anchor, columns
/// 1-based, label blank when no vocabulary applies.
pub fn write_anchor_report(
    path: impl AsRef<Path>,
    anchors: &[usize],
    vocab: Option<&[String]>,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for (rank, &col) in anchors.iter().enumerate() {
        let label = vocab.and_then(|v| v.get(col)).map(String::as_str).unwrap_or("");
        writeln!(w, "{}\t{}\t{}", rank + 1, col + 1, label)?;
    }
    w.flush()?;
    Ok(())
}

/// Vocabulary file: `index<TAB>term` per line, 1-based, matching the anchor
/// report's column indices.
pub fn write_vocab(path: impl AsRef<Path>, terms: &[String]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for (j, term) in terms.iter().enumerate() {
        writeln!(w, "{}\t{}", j + 1, term)?;
    }
    w.flush()?;
    Ok(())
}

/// Read a vocabulary file written by [`write_vocab`].
pub fn read_vocab(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.splitn(2, '\t');
        let idx: usize = fields
            .next()
            .unwrap()
            .trim()
            .parse()
            .map_err(|_| parse_err(path, line_no, "non-numeric index"))?;
        let term = fields
            .next()
            .ok_or_else(|| parse_err(path, line_no, "expected 'index<TAB>term'"))?;
        if idx != out.len() + 1 {
            return Err(parse_err(path, line_no, "indices must be 1-based and consecutive"));
        }
        out.push(term.to_string());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use tempfile::tempdir;

    #[test]
    fn read_identity_matrix() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("id.mtx");
        std::fs::write(
            &path,
            "%%MatrixMarket matrix coordinate real general\n% a comment\n2 2 2\n1 1 1.0\n2 2 1.0\n",
        )
        .unwrap();
        let m = read_coordinate_matrix(&path).unwrap();
        assert_eq!((m.n_rows(), m.n_cols(), m.nnz()), (2, 2, 2));
        assert_eq!(m.get(0, 0), 1.0);
        assert_eq!(m.get(1, 1), 1.0);
    }

    #[test]
    fn out_of_range_entry_reports_line() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.mtx");
        std::fs::write(
            &path,
            "%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 5.0\n",
        )
        .unwrap();
        match read_coordinate_matrix(&path).unwrap_err() {
            XrayError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected: {other}"),
        }
    }

    #[test]
    fn malformed_header_and_value_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("h.mtx");
        std::fs::write(&path, "%%MatrixMarket matrix array real general\n2 2\n").unwrap();
        assert!(matches!(
            read_coordinate_matrix(&path),
            Err(XrayError::Parse { line: 1, .. })
        ));
        std::fs::write(
            &path,
            "%%MatrixMarket matrix coordinate real general\n1 1 1\n1 1 abc\n",
        )
        .unwrap();
        assert!(matches!(
            read_coordinate_matrix(&path),
            Err(XrayError::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn roundtrip_preserves_values() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("rt.mtx");
        let m = build_sparse(
            &[(0, 0, 0.1), (3, 1, -2.5e-17), (1, 2, 7.0 / 3.0)],
            4,
            3,
        )
        .unwrap();
        write_coordinate_matrix(&m, &path).unwrap();
        let back = read_coordinate_matrix(&path).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn empty_matrix_roundtrip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("empty.mtx");
        write_coordinate_matrix(&SparseMatrix::empty(3, 2), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(
            text,
            "%%MatrixMarket matrix coordinate real general\n3 2 0\n"
        );
        let back = read_coordinate_matrix(&path).unwrap();
        assert_eq!(back.nnz(), 0);
        assert_eq!((back.n_rows(), back.n_cols()), (3, 2));
    }

    #[test]
    fn docterm_idf_zero_column_is_kept_empty() {
        // term "both" appears in both docs: idf = ln(2/2) = 0, so the
        // column stays but holds no entries.
        let triples = vec![
            ("d1".into(), "both".into(), 1.0),
            ("d2".into(), "both".into(), 1.0),
            ("d1".into(), "only".into(), 2.0),
        ];
        let (x, stats) = build_docterm(&triples, 1, 1.0).unwrap();
        assert_eq!(stats.n_docs, 2);
        assert_eq!(stats.n_terms, 2);
        assert_eq!(stats.terms, vec!["both".to_string(), "only".to_string()]);
        assert_eq!(x.col_nnz(0), 0);
        let expected = 2.0 * (2.0f64).ln();
        assert!((x.get(0, 1) - expected).abs() < 1e-15);
    }

    #[test]
    fn docterm_tfidf_formula() {
        // term in 1 of 4 docs with tf 3: entry = 3 ln 4
        let triples = vec![
            ("a".into(), "rare".into(), 3.0),
            ("b".into(), "common".into(), 1.0),
            ("c".into(), "common".into(), 1.0),
            ("d".into(), "common".into(), 1.0),
            ("a".into(), "common".into(), 1.0),
        ];
        let (x, stats) = build_docterm(&triples, 1, 1.0).unwrap();
        let j = stats.terms.iter().position(|t| t == "rare").unwrap();
        let expected = 3.0 * (4.0f64).ln();
        assert!((x.get(0, j) - expected).abs() < 1e-15);
    }

    #[test]
    fn min_df_drops_singletons() {
        let triples = vec![
            ("a".into(), "shared".into(), 1.0),
            ("b".into(), "shared".into(), 2.0),
            ("a".into(), "solo".into(), 1.0),
        ];
        let (_, stats) = build_docterm(&triples, 2, 1.0).unwrap();
        assert_eq!(stats.n_terms, 1);
        assert_eq!(stats.terms, vec!["shared".to_string()]);
        // dropping everything is an error
        assert!(matches!(
            build_docterm(&triples, 3, 1.0),
            Err(XrayError::EmptyCorpus(_))
        ));
    }

    #[test]
    fn docterm_is_permutation_invariant() {
        let triples = vec![
            ("d2".into(), "beta".into(), 1.0),
            ("d1".into(), "alpha".into(), 2.0),
            ("d1".into(), "beta".into(), 3.0),
        ];
        let mut reversed = triples.clone();
        reversed.reverse();
        let (xa, sa) = build_docterm(&triples, 1, 1.0).unwrap();
        let (xb, sb) = build_docterm(&reversed, 1, 1.0).unwrap();
        assert_eq!(xa, xb);
        assert_eq!(sa.terms, sb.terms);
    }

    #[test]
    fn normalization_hand_cases() {
        let x = SparseMatrix::from_dense_columns(3, &[vec![3.0, 4.0, 0.0], vec![1.0, 1.0, 2.0]]);
        let (l2, zeros) = normalize_columns(&x, NormalizationMode::L2);
        assert!(zeros.is_empty());
        assert!((l2.get(0, 0) - 0.6).abs() < 1e-15);
        assert!((l2.get(1, 0) - 0.8).abs() < 1e-15);
        let (l1, _) = normalize_columns(&x, NormalizationMode::L1);
        assert!((l1.get(0, 1) - 0.25).abs() < 1e-15);
        assert!((l1.get(2, 1) - 0.5).abs() < 1e-15);
        let (same, _) = normalize_columns(&x, NormalizationMode::None);
        assert_eq!(same, x);
    }

    #[test]
    fn zero_columns_flagged_and_untouched() {
        let x = SparseMatrix::from_dense_columns(2, &[vec![0.0, 0.0], vec![5.0, 0.0]]);
        let (l1, zeros) = normalize_columns(&x, NormalizationMode::L1);
        assert_eq!(zeros, vec![0]);
        assert_eq!(l1.col_nnz(0), 0);
        assert_eq!(l1.get(0, 1), 1.0);
    }

    #[test]
    fn vocab_and_anchor_report_roundtrip() {
        let dir = tempdir().unwrap();
        let vpath = dir.path().join("vocab.tsv");
        let terms = vec!["alpha".to_string(), "beta".to_string()];
        write_vocab(&vpath, &terms).unwrap();
        assert_eq!(read_vocab(&vpath).unwrap(), terms);

        let apath = dir.path().join("anchors.tsv");
        write_anchor_report(&apath, &[1, 0], Some(&terms)).unwrap();
        let text = std::fs::read_to_string(&apath).unwrap();
        assert_eq!(text, "1\t2\tbeta\n2\t1\talpha\n");

        write_anchor_report(&apath, &[1], None).unwrap();
        let text = std::fs::read_to_string(&apath).unwrap();
        assert_eq!(text, "1\t2\t\n");
    }

    proptest! {
        // unit norms after normalization, to full precision
        #[test]
        fn normalized_columns_have_unit_norm(
            triples in proptest::collection::vec(
                (0usize..6, 0usize..4, -3.0f64..3.0), 1..30),
        ) {
            let x = build_sparse(&triples, 6, 4).unwrap();
            let (l1, _) = normalize_columns(&x, NormalizationMode::L1);
            let (l2, _) = normalize_columns(&x, NormalizationMode::L2);
            for j in 0..4 {
                if x.col_nnz(j) > 0 {
                    let s: f64 = l1.col(j).1.iter().map(|v| v.abs()).sum();
                    prop_assert!((s - 1.0).abs() <= 1e-12);
                    let q: f64 = l2.col(j).1.iter().map(|v| v * v).sum();
                    prop_assert!((q.sqrt() - 1.0).abs() <= 1e-12);
                }
            }
        }

        // write/read roundtrip preserves every value bit for bit
        #[test]
        fn matrix_market_roundtrip(
            triples in proptest::collection::vec(
                (0usize..5, 0usize..5, -1e3f64..1e3), 0..25),
        ) {
            let dir = tempdir().unwrap();
            let path = dir.path().join("prop.mtx");
            let m = build_sparse(&triples, 5, 5).unwrap();
            write_coordinate_matrix(&m, &path).unwrap();
            let back = read_coordinate_matrix(&path).unwrap();
            prop_assert_eq!(m, back);
        }
    }
}
