//! `lmrescore`: counting, language model training, N-best rescoring,
//! weight optimization and evaluation.

mod artifacts;
mod commands;
mod error;
mod models;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use error::{CliError, Kind};

const AFTER_HELP: &str = "\
Exit status: 0 success, 1 i/o failure, 2 usage error, 3 malformed input, 4 numerical failure.
Every command writes its artifacts atomically and a manifest (<output>.manifest.json by default)
recording arguments, input and output SHA-256 hashes, seed, thread count and versions.
A --config TOML file may set defaults: keys of [common] apply to every command, keys of
[<command>] to that command; flags given on the command line win.";

#[derive(Parser, Debug)]
#[command(name = "lmrescore", version, about, after_help = AFTER_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Worker threads; outputs do not depend on it
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub threads: u64,
    /// Seed for randomized steps; recorded in every manifest
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// TOML file of default flag values
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Manifest path (default: next to the output)
    #[arg(long, value_name = "FILE")]
    pub manifest: Option<PathBuf>,
}

/// Token normalization applied to raw text.
#[derive(Args, Debug, Clone)]
pub struct Norm {
    /// Keep letter case
    #[arg(long)]
    pub keep_case: bool,
    /// Keep numeric tokens instead of mapping them to $number
    #[arg(long)]
    pub keep_numbers: bool,
    /// Remove punctuation tokens
    #[arg(long)]
    pub drop_punctuation: bool,
}

impl Norm {
    pub fn policy(&self) -> lmrescore::corpus::NormalizationPolicy {
        lmrescore::corpus::NormalizationPolicy {
            lowercase: !self.keep_case,
            map_numbers: !self.keep_numbers,
            keep_punctuation: !self.drop_punctuation,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct Search {
    /// Tag lattice beam: paths below this fraction of the best are pruned (0 disables)
    #[arg(long, default_value_t = lmrescore::taglm::DEFAULT_BEAM)]
    pub tag_beam: f64,
    /// Partial head assignments kept by the dependency search (0 = exhaustive)
    #[arg(long, default_value_t = lmrescore::chunkparse::DEFAULT_DEPENDENCY_BEAM)]
    pub dependency_beam: usize,
}

impl Search {
    pub fn beams(&self) -> models::Beams {
        models::Beams {
            tag: self.tag_beam,
            dependency: (self.dependency_beam > 0).then_some(self.dependency_beam),
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Count N-grams of raw text into a count directory
    #[command(after_help = commands::COUNT_HELP)]
    Count(commands::CountArgs),
    /// Sum several count directories
    #[command(after_help = commands::COUNT_HELP)]
    MergeCounts(commands::MergeArgs),
    /// Train an interpolated modified Kneser-Ney model and write ARPA
    #[command(after_help = commands::TRAIN_KN_HELP)]
    TrainKn(commands::TrainKnArgs),
    /// Fit the count-of-counts power law and fill in missing low counts
    #[command(after_help = commands::COC_HELP)]
    CocExtrapolate(commands::CocArgs),
    /// Estimate bucketed interpolation weights of a count-based model on held-out text
    #[command(after_help = commands::COUNTLM_HELP)]
    TrainCountlm(commands::CountLmArgs),
    /// Train the joint word/tag model from a tagged corpus
    #[command(after_help = commands::TAGLM_HELP)]
    TrainTaglm(commands::TagLmArgs),
    /// Train the baseNP gap tagger from a gold corpus
    #[command(after_help = commands::GOLD_HELP)]
    TrainChunker(commands::GoldArgs),
    /// Train the dependency link model from a gold corpus
    #[command(after_help = commands::GOLD_HELP)]
    TrainLinkmodel(commands::GoldArgs),
    /// Add language model features to an N-best file
    #[command(after_help = commands::SCORE_HELP)]
    Score(commands::ScoreArgs),
    /// Perplexity of a model (or static mixture) on text
    #[command(after_help = commands::PPL_HELP)]
    Ppl(commands::PplArgs),
    /// Select the best hypothesis per segment under log-linear weights
    #[command(after_help = commands::RERANK_HELP)]
    Rerank(commands::RerankArgs),
    /// Optimize log-linear weights for corpus BLEU by simplex search
    #[command(after_help = commands::MERT_HELP)]
    Mert(commands::MertArgs),
    /// Corpus BLEU-4 of candidates against single references
    #[command(after_help = commands::BLEU_HELP)]
    Bleu(commands::BleuArgs),
    /// Emit the linearized count-of-counts points and the fitted alpha
    #[command(after_help = commands::COC_HELP)]
    PlotCoc(commands::PlotCocArgs),
}

/// Splices `[common]` and `[<command>]` values from the config file into
/// `argv` right after the subcommand, skipping flags the user gave.
fn apply_config(argv: Vec<String>) -> Result<Vec<String>, CliError> {
    let Some(sub) = argv.get(1).filter(|a| !a.starts_with('-')).cloned() else {
        return Ok(argv);
    };
    let user = &argv[2..];
    let path = user.iter().enumerate().find_map(|(i, a)| {
        if a == "--config" {
            user.get(i + 1).cloned()
        } else {
            a.strip_prefix("--config=").map(String::from)
        }
    });
    let Some(path) = path else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::usage(format!("{path}: {e}")))?;
    let table: toml::Table = text
        .parse()
        .map_err(|e| CliError::usage(format!("{path}: {e}")))?;
    let given = |flag: &str| user.iter().any(|a| a == flag || a.starts_with(&format!("{flag}=")));
    let mut injected = Vec::new();
    for section in ["common", sub.as_str()] {
        let Some(entries) = table.get(section) else {
            continue;
        };
        let entries = entries
            .as_table()
            .ok_or_else(|| CliError::usage(format!("{path}: [{section}] must be a table")))?;
        for (key, value) in entries {
            let flag = format!("--{key}");
            if given(&flag) || key == "config" {
                continue;
            }
            let scalar = |v: &toml::Value| -> Result<String, CliError> {
                match v {
                    toml::Value::String(s) => Ok(s.clone()),
                    toml::Value::Integer(i) => Ok(i.to_string()),
                    toml::Value::Float(f) => Ok(f.to_string()),
                    _ => Err(CliError::usage(format!("{path}: unsupported value for {key}"))),
                }
            };
            match value {
                toml::Value::Boolean(true) => injected.push(flag),
                toml::Value::Boolean(false) => {}
                toml::Value::Array(items) => {
                    for item in items {
                        injected.push(flag.clone());
                        injected.push(scalar(item)?);
                    }
                }
                v => {
                    injected.push(flag);
                    injected.push(scalar(v)?);
                }
            }
        }
    }
    let mut out = vec![argv[0].clone(), sub];
    out.extend(injected);
    out.extend(user.iter().cloned());
    Ok(out)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let argv = match apply_config(std::env::args().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(Kind::Usage.exit_code() as u8);
        }
    };
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let arguments = argv[1..].to_vec();
    let result = match cli.command {
        Command::Count(a) => commands::count(a, arguments),
        Command::MergeCounts(a) => commands::merge_counts(a, arguments),
        Command::TrainKn(a) => commands::train_kn(a, arguments),
        Command::CocExtrapolate(a) => commands::coc_extrapolate(a, arguments),
        Command::TrainCountlm(a) => commands::train_countlm(a, arguments),
        Command::TrainTaglm(a) => commands::train_taglm(a, arguments),
        Command::TrainChunker(a) => commands::train_chunker(a, arguments),
        Command::TrainLinkmodel(a) => commands::train_linkmodel(a, arguments),
        Command::Score(a) => commands::score(a, arguments),
        Command::Ppl(a) => commands::ppl(a, arguments),
        Command::Rerank(a) => commands::rerank(a, arguments),
        Command::Mert(a) => commands::mert(a, arguments),
        Command::Bleu(a) => commands::bleu(a, arguments),
        Command::PlotCoc(a) => commands::plot_coc(a, arguments),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.kind.exit_code() as u8)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn config_values_fill_in_but_flags_win() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.toml");
        std::fs::write(&cfg, "[common]\nthreads = 3\nseed = 9\n[mert]\nrestarts = 2\nfree-decoder = true\n").unwrap();
        let argv = args(&format!("lmrescore mert --config {} --seed 4 --nbest n", cfg.display()));
        let out = apply_config(argv).unwrap();
        assert_eq!(out[..2], ["lmrescore", "mert"]);
        let injected = &out[2..out.len() - 6];
        assert_eq!(injected, ["--threads", "3", "--free-decoder", "--restarts", "2"]);
        assert!(out.ends_with(&args(&format!("--config {} --seed 4 --nbest n", cfg.display()))));
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
