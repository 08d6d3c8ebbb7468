//! Atomic artifact writes, input bookkeeping and run manifests.

use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::MultiGzDecoder;
use serde::Serialize;
use sha2::{Digest, Sha256};

use lmrescore::corpus::{read_count_file, write_count_file, CountSource, NGramCountTable, ReadOptions, Vocabulary};

use crate::error::{CliError, Result};

/// Marks a count directory whose tables are complete corpus counts.
pub const SOURCE_FILE: &str = "source.txt";

fn parent_of(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

/// Writes `path` through a temporary file in the same directory, renamed
/// into place only once `fill` has succeeded.
pub fn write_file(path: &Path, fill: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<()> {
    let dir = parent_of(path);
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let tmp = tempfile::Builder::new()
        .prefix(".lmrescore-")
        .tempfile_in(&dir)
        .map_err(|e| CliError::io(&dir, e))?;
    {
        let mut out = BufWriter::new(tmp.as_file());
        fill(&mut out).map_err(|e| CliError::io(path, e))?;
        out.flush().map_err(|e| CliError::io(path, e))?;
    }
    tmp.as_file().sync_all().map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

/// Builds a directory artifact in a temporary sibling and swaps it in.
pub fn write_dir(path: &Path, fill: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    let parent = parent_of(path);
    fs::create_dir_all(&parent).map_err(|e| CliError::io(&parent, e))?;
    let tmp = tempfile::Builder::new()
        .prefix(".lmrescore-")
        .tempdir_in(&parent)
        .map_err(|e| CliError::io(&parent, e))?;
    fill(tmp.path())?;
    let staged = tmp.keep();
    if path.exists() {
        let old = tempfile::Builder::new()
            .prefix(".lmrescore-old-")
            .tempdir_in(&parent)
            .map_err(|e| CliError::io(&parent, e))?
            .keep();
        let displaced = old.join("artifact");
        fs::rename(path, &displaced).map_err(|e| CliError::io(path, e))?;
        fs::rename(&staged, path).map_err(|e| CliError::io(path, e))?;
        fs::remove_dir_all(&old).map_err(|e| CliError::io(&old, e))?;
    } else {
        fs::rename(&staged, path).map_err(|e| CliError::io(path, e))?;
    }
    Ok(())
}

pub fn sha256_file(path: &Path) -> io::Result<String> {
    let mut hasher = Sha256::new();
    let mut file = File::open(path)?;
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

/// Hashes a file, or every file below a directory in name order.
fn hash_tree(path: &Path) -> io::Result<Vec<FileHash>> {
    if path.is_dir() {
        let mut names: Vec<PathBuf> = fs::read_dir(path)?.map(|e| e.map(|e| e.path())).collect::<io::Result<_>>()?;
        names.sort();
        let mut out = Vec::new();
        for p in names {
            out.extend(hash_tree(&p)?);
        }
        Ok(out)
    } else {
        Ok(vec![FileHash {
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
        }])
    }
}

#[derive(Debug, Serialize)]
struct Versions {
    lmrescore: &'static str,
    lmrescore_cli: &'static str,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    arguments: &'a [String],
    seed: u64,
    threads: usize,
    versions: Versions,
    inputs: Vec<FileHash>,
    outputs: Vec<FileHash>,
    results: &'a serde_json::Map<String, serde_json::Value>,
}

/// What one command read and wrote.
pub struct Run {
    pub command: String,
    pub arguments: Vec<String>,
    pub seed: u64,
    pub threads: usize,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    pub results: serde_json::Map<String, serde_json::Value>,
}

impl Run {
    pub fn new(command: &str, arguments: Vec<String>, seed: u64, threads: usize) -> Self {
        Run {
            command: command.to_string(),
            arguments,
            seed,
            threads,
            inputs: Vec::new(),
            outputs: Vec::new(),
            results: serde_json::Map::new(),
        }
    }

    /// Records an input after checking that it exists.
    pub fn input(&mut self, path: &Path) -> Result<PathBuf> {
        if !path.exists() {
            return Err(CliError::usage(format!("{}: no such file or directory", path.display())));
        }
        if !self.inputs.iter().any(|p| p == path) {
            self.inputs.push(path.to_path_buf());
        }
        Ok(path.to_path_buf())
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    pub fn result(&mut self, key: &str, value: impl Into<serde_json::Value>) {
        self.results.insert(key.to_string(), value.into());
    }

    /// Writes the manifest to `path`, or next to the first output.
    pub fn finish(&self, path: Option<&Path>) -> Result<()> {
        let target = match (path, self.outputs.first()) {
            (Some(p), _) => p.to_path_buf(),
            (None, Some(out)) => {
                let mut name = out.file_name().unwrap_or_default().to_os_string();
                name.push(".manifest.json");
                out.with_file_name(name)
            }
            (None, None) => return Ok(()),
        };
        let hash_all = |paths: &[PathBuf]| -> Result<Vec<FileHash>> {
            let mut out = Vec::new();
            for p in paths {
                out.extend(hash_tree(p).map_err(|e| CliError::io(p, e))?);
            }
            Ok(out)
        };
        let manifest = Manifest {
            command: &self.command,
            arguments: &self.arguments,
            seed: self.seed,
            threads: self.threads,
            versions: Versions {
                lmrescore: lmrescore::VERSION,
                lmrescore_cli: env!("CARGO_PKG_VERSION"),
            },
            inputs: hash_all(&self.inputs)?,
            outputs: hash_all(&self.outputs)?,
            results: &self.results,
        };
        let json = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::new(crate::error::Kind::Io, e.to_string()))?;
        write_file(&target, |out| writeln!(out, "{json}"))
    }
}

pub fn open(path: &Path) -> Result<Box<dyn BufRead>> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    if path.extension().is_some_and(|e| e == "gz") {
        Ok(Box::new(BufReader::new(MultiGzDecoder::new(file))))
    } else {
        Ok(Box::new(BufReader::new(file)))
    }
}

pub fn read_lines(path: &Path) -> Result<Vec<String>> {
    open(path)?
        .lines()
        .collect::<io::Result<Vec<String>>>()
        .map_err(|e| CliError::io(path, e))
}

/// The count file for order `k` inside a count directory.
pub fn count_file(dir: &Path, k: usize) -> Option<PathBuf> {
    [format!("{k}gms.txt"), format!("{k}gms.txt.gz")]
        .into_iter()
        .map(|name| dir.join(name))
        .find(|p| p.is_file())
}

/// Highest order whose count files are all present, starting from 1.
pub fn available_order(dir: &Path) -> usize {
    (1..).take_while(|&k| count_file(dir, k).is_some()).count()
}

pub fn count_source(dir: &Path) -> CountSource {
    match fs::read_to_string(dir.join(SOURCE_FILE)) {
        Ok(s) if s.trim() == "corpus" => CountSource::Corpus,
        _ => CountSource::External,
    }
}

/// Reads orders `1..=order` (all available when `None`) of a count directory.
pub fn read_count_dir(
    run: &mut Run,
    dir: &Path,
    order: Option<usize>,
    vocab: &mut Vocabulary,
    options: ReadOptions,
) -> Result<NGramCountTable> {
    run.input(dir)?;
    let available = available_order(dir);
    let n = order.unwrap_or(available);
    if n == 0 {
        return Err(CliError::usage(format!("{}: no count files (expected 1gms.txt)", dir.display())));
    }
    if n > available {
        return Err(CliError::usage(format!(
            "{}: order {n} requested but only orders 1..={available} are present",
            dir.display()
        )));
    }
    let mut parts = Vec::with_capacity(n);
    for k in 1..=n {
        let path = count_file(dir, k).expect("order checked above");
        let (table, _) = read_count_file(&path, k, vocab, options)?;
        parts.push(table);
    }
    Ok(NGramCountTable::assemble(parts, n, count_source(dir)))
}

/// Writes a count directory: one file per order plus the source marker.
pub fn write_count_dir(run: &mut Run, dir: &Path, table: &NGramCountTable, vocab: &Vocabulary, gzip: bool) -> Result<()> {
    write_dir(dir, |tmp| {
        for k in 1..=table.max_order() {
            let name = if gzip { format!("{k}gms.txt.gz") } else { format!("{k}gms.txt") };
            write_count_file(&tmp.join(name), table, k, vocab)?;
        }
        let source = match table.source() {
            CountSource::Corpus => "corpus",
            CountSource::External => "external",
        };
        fs::write(tmp.join(SOURCE_FILE), format!("{source}\n")).map_err(|e| CliError::io(&tmp.join(SOURCE_FILE), e))
    })?;
    run.output(dir);
    Ok(())
}
