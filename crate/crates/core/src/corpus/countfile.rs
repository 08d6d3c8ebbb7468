//! Web-release style count files: `tok tok ... tok<TAB>count`, one order per
//! file, sorted bytewise by the token field. A `.gz` suffix means gzip.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use super::counts::{CountSource, NGramCountTable, OrderCounts};
use super::vocab::{TokenId, Vocabulary};

#[derive(Debug, thiserror::Error)]
pub enum CountFileError {
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {rejected} of {total} lines rejected (limit {limit:.3})")]
    TooManyRejections {
        path: PathBuf,
        rejected: usize,
        total: usize,
        limit: f64,
    },
    #[error("table has no order {0}")]
    MissingOrder(usize),
}

/// Why a single line was rejected.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LineRejection {
    Arity { found: usize },
    BadCount(String),
    MissingTab,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReadReport {
    pub lines: usize,
    pub accepted: usize,
    /// (1-based line number, reason)
    pub rejected: Vec<(usize, LineRejection)>,
}

#[derive(Debug, Clone, Copy)]
pub struct ReadOptions {
    /// Fraction of rejected lines above which the whole file fails.
    pub max_reject_ratio: f64,
}

impl Default for ReadOptions {
    fn default() -> Self {
        ReadOptions {
            max_reject_ratio: 0.01,
        }
    }
}

fn is_gz(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "gz")
}

pub(crate) fn open_maybe_gz(path: &Path) -> io::Result<Box<dyn BufRead>> {
    let file = File::open(path)?;
    let inner: Box<dyn Read> = if is_gz(path) {
        Box::new(MultiGzDecoder::new(file))
    } else {
        Box::new(file)
    };
    Ok(Box::new(BufReader::new(inner)))
}

/// Parses one order of counts from a reader. Tokens are interned into `vocab`.
pub fn parse_counts<R: BufRead>(
    input: R,
    expected_order: usize,
    vocab: &mut Vocabulary,
) -> io::Result<(OrderCounts, ReadReport)> {
    let mut report = ReadReport::default();
    let mut entries = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        report.lines += 1;
        let lineno = idx + 1;
        let Some((tokens, count)) = line.split_once('\t') else {
            report.rejected.push((lineno, LineRejection::MissingTab));
            continue;
        };
        let toks: Vec<&str> = tokens.split(' ').collect();
        if toks.len() != expected_order || toks.iter().any(|t| t.is_empty()) {
            report
                .rejected
                .push((lineno, LineRejection::Arity { found: toks.len() }));
            continue;
        }
        let count = match count.parse::<u64>() {
            Ok(c) if c > 0 => c,
            _ => {
                report
                    .rejected
                    .push((lineno, LineRejection::BadCount(count.to_string())));
                continue;
            }
        };
        let gram: Vec<TokenId> = toks.iter().map(|t| vocab.intern(t)).collect();
        entries.push((gram, count));
        report.accepted += 1;
    }
    Ok((OrderCounts::from_entries(expected_order, entries), report))
}

/// Reads a count file of a single order into a table flagged as external.
/// Only `expected_order` is populated; combine files with
/// [`NGramCountTable::assemble`].
pub fn read_count_file(
    path: &Path,
    expected_order: usize,
    vocab: &mut Vocabulary,
    options: ReadOptions,
) -> Result<(NGramCountTable, ReadReport), CountFileError> {
    let io_err = |source| CountFileError::Io {
        path: path.to_path_buf(),
        source,
    };
    let reader = open_maybe_gz(path).map_err(io_err)?;
    let (counts, report) = parse_counts(reader, expected_order, vocab).map_err(io_err)?;
    for (lineno, why) in &report.rejected {
        log::warn!("{}:{lineno}: rejected ({why:?})", path.display());
    }
    if report.lines > 0 {
        let ratio = report.rejected.len() as f64 / report.lines as f64;
        if ratio > options.max_reject_ratio {
            return Err(CountFileError::TooManyRejections {
                path: path.to_path_buf(),
                rejected: report.rejected.len(),
                total: report.lines,
                limit: options.max_reject_ratio,
            });
        }
    }
    let mut orders: Vec<OrderCounts> = (1..expected_order).map(OrderCounts::empty).collect();
    orders.push(counts);
    Ok((NGramCountTable::new(orders, CountSource::External), report))
}

/// Renders one order as sorted count-file lines.
pub fn format_counts(counts: &OrderCounts, vocab: &Vocabulary) -> Vec<String> {
    let mut lines: Vec<(String, u64)> = counts
        .iter()
        .map(|(gram, c)| {
            let toks: Vec<&str> = gram.iter().map(|&id| vocab.resolve(id)).collect();
            (toks.join(" "), c)
        })
        .collect();
    lines.sort_unstable_by(|a, b| a.0.as_bytes().cmp(b.0.as_bytes()));
    lines
        .into_iter()
        .map(|(toks, c)| format!("{toks}\t{c}"))
        .collect()
}

pub fn write_counts<W: Write>(mut out: W, counts: &OrderCounts, vocab: &Vocabulary) -> io::Result<()> {
    for line in format_counts(counts, vocab) {
        out.write_all(line.as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Writes order `order` of `table` to `path`, gzip-compressed if the path ends in `.gz`.
pub fn write_count_file(
    path: &Path,
    table: &NGramCountTable,
    order: usize,
    vocab: &Vocabulary,
) -> Result<(), CountFileError> {
    if order == 0 || order > table.max_order() {
        return Err(CountFileError::MissingOrder(order));
    }
    let io_err = |source| CountFileError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let counts = table.order(order);
    if is_gz(path) {
        let enc = GzEncoder::new(BufWriter::new(file), Compression::default());
        let mut enc = enc;
        write_counts(&mut enc, counts, vocab).map_err(io_err)?;
        enc.finish().and_then(|mut w| w.flush()).map_err(io_err)?;
    } else {
        write_counts(BufWriter::new(file), counts, vocab).map_err(io_err)?;
    }
    Ok(())
}
