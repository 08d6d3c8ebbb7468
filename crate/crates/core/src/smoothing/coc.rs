//! Counts-of-counts, the power-law fit `log F(c) - log F(c+1) = alpha / c`,
//! and extrapolation of missing low counts (typically singletons).

use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};

use crate::corpus::OrderCounts;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CocOrigin {
    Observed,
    /// Filled in from the fitted law; carries the alpha used when known.
    Extrapolated { alpha: Option<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CocEntry {
    pub frequency: f64,
    pub origin: CocOrigin,
}

/// F(c): number of distinct k-grams seen exactly c times, for one order k.
/// Frequencies are reals so law-generated tables can be represented exactly.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CountOfCounts {
    order: usize,
    entries: BTreeMap<u64, CocEntry>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CocError {
    #[error("ill-conditioned fit: F({c}) <= F({next}) gives a non-positive log difference", next = c + 1)]
    IllConditioned { c: u64 },
    #[error("F({c}) is not observed")]
    Missing { c: u64 },
    #[error("fit range must span at least two count values")]
    RangeTooShort,
    #[error("alpha must be positive and finite, got {0}")]
    InvalidAlpha(f64),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] IoError),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{0}")]
pub struct IoError(pub String);

impl From<io::Error> for CocError {
    fn from(e: io::Error) -> Self {
        CocError::Io(IoError(e.to_string()))
    }
}

impl CountOfCounts {
    pub fn new(order: usize) -> Self {
        CountOfCounts {
            order,
            entries: BTreeMap::new(),
        }
    }

    /// Tallies the counts of one order.
    pub fn from_order_counts(counts: &OrderCounts) -> Self {
        Self::from_counts(counts.order(), counts.iter().map(|(_, c)| c))
    }

    pub fn from_counts<I: IntoIterator<Item = u64>>(order: usize, counts: I) -> Self {
        let mut coc = CountOfCounts::new(order);
        for c in counts.into_iter().filter(|&c| c > 0) {
            coc.entries
                .entry(c)
                .or_insert(CocEntry {
                    frequency: 0.0,
                    origin: CocOrigin::Observed,
                })
                .frequency += 1.0;
        }
        coc
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn set_observed(&mut self, c: u64, frequency: f64) {
        self.entries.insert(
            c,
            CocEntry {
                frequency,
                origin: CocOrigin::Observed,
            },
        );
    }

    pub fn remove(&mut self, c: u64) -> Option<CocEntry> {
        self.entries.remove(&c)
    }

    pub fn entry(&self, c: u64) -> Option<&CocEntry> {
        self.entries.get(&c)
    }

    /// F(c), or 0 when absent.
    pub fn frequency(&self, c: u64) -> f64 {
        self.entries.get(&c).map_or(0.0, |e| e.frequency)
    }

    pub fn entries(&self) -> impl Iterator<Item = (u64, &CocEntry)> {
        self.entries.iter().map(|(&c, e)| (c, e))
    }

    pub fn smallest_observed(&self) -> Option<u64> {
        self.entries
            .iter()
            .find(|(_, e)| e.origin == CocOrigin::Observed && e.frequency > 0.0)
            .map(|(&c, _)| c)
    }

    fn observed_positive(&self, c: u64) -> Option<f64> {
        self.entries
            .get(&c)
            .filter(|e| e.origin == CocOrigin::Observed && e.frequency > 0.0)
            .map(|e| e.frequency)
    }

    fn positive(&self, c: u64) -> Option<f64> {
        self.entries.get(&c).map(|e| e.frequency).filter(|&f| f > 0.0)
    }

    /// Largest contiguous fit range starting at max(2, smallest observed) and
    /// capped at `max_c`, for which F(c) and F(c+1) are all observed.
    pub fn default_fit_range(&self, max_c: u64) -> Option<(u64, u64)> {
        let lo = self.smallest_observed()?.max(2);
        let mut hi = None;
        let mut c = lo;
        while c <= max_c && self.observed_positive(c).is_some() && self.observed_positive(c + 1).is_some() {
            hi = Some(c);
            c += 1;
        }
        hi.filter(|&h| h > lo).map(|h| (lo, h))
    }

    /// `order TAB count_value TAB frequency TAB observed|extrapolated`
    pub fn write<W: Write>(&self, mut out: W) -> io::Result<()> {
        for (c, e) in &self.entries {
            let origin = match e.origin {
                CocOrigin::Observed => "observed",
                CocOrigin::Extrapolated { .. } => "extrapolated",
            };
            writeln!(out, "{}\t{}\t{}\t{}", self.order, c, e.frequency, origin)?;
        }
        Ok(())
    }

    /// Reads a file that may hold several orders; returns them sorted by order.
    pub fn read_all<R: BufRead>(input: R) -> Result<Vec<CountOfCounts>, CocError> {
        let mut by_order: BTreeMap<usize, CountOfCounts> = BTreeMap::new();
        for (idx, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |msg: &str| CocError::Parse {
                line: idx + 1,
                msg: msg.to_string(),
            };
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(parse_err("expected 4 tab-separated fields"));
            }
            let order: usize = fields[0].parse().map_err(|_| parse_err("bad order"))?;
            let c: u64 = fields[1].parse().map_err(|_| parse_err("bad count value"))?;
            let frequency: f64 = fields[2]
                .parse()
                .ok()
                .filter(|f: &f64| f.is_finite() && *f >= 0.0)
                .ok_or_else(|| parse_err("bad frequency"))?;
            let origin = match fields[3] {
                "observed" => CocOrigin::Observed,
                "extrapolated" => CocOrigin::Extrapolated { alpha: None },
                _ => return Err(parse_err("origin must be observed or extrapolated")),
            };
            by_order
                .entry(order)
                .or_insert_with(|| CountOfCounts::new(order))
                .entries
                .insert(c, CocEntry { frequency, origin });
        }
        Ok(by_order.into_values().collect())
    }
}

/// Result of fitting alpha on `1 / (log F(c) - log F(c+1)) = c / alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaFit {
    pub alpha: f64,
    /// Fitted slope, i.e. 1 / alpha.
    pub slope: f64,
    pub residual_norm: f64,
    /// (c, 1 / (log F(c) - log F(c+1))) for every c in the range.
    pub points: Vec<(u64, f64)>,
}

/// The linearized points the fit uses. Extrapolated entries take part.
pub fn law_points(coc: &CountOfCounts, lo: u64, hi: u64) -> Result<Vec<(u64, f64)>, CocError> {
    (lo..=hi)
        .map(|c| {
            let f = coc.positive(c).ok_or(CocError::Missing { c })?;
            let g = coc.positive(c + 1).ok_or(CocError::Missing { c: c + 1 })?;
            let diff = f.ln() - g.ln();
            if diff <= 0.0 {
                return Err(CocError::IllConditioned { c });
            }
            Ok((c, 1.0 / diff))
        })
        .collect()
}

/// Least-squares slope through the origin of the linearized law over
/// c in `lo..=hi`; alpha is its reciprocal.
pub fn estimate_alpha(coc: &CountOfCounts, lo: u64, hi: u64) -> Result<AlphaFit, CocError> {
    if hi <= lo {
        return Err(CocError::RangeTooShort);
    }
    let points = law_points(coc, lo, hi)?;
    let (sxy, sxx) = points.iter().fold((0.0, 0.0), |(sxy, sxx), &(c, y)| {
        let x = c as f64;
        (sxy + x * y, sxx + x * x)
    });
    let slope = sxy / sxx;
    let residual_norm = points
        .iter()
        .map(|&(c, y)| (y - slope * c as f64).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(AlphaFit {
        alpha: 1.0 / slope,
        slope,
        residual_norm,
        points,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extrapolation {
    /// Number of entries filled.
    Filled(usize),
    /// `target_c` was not below the smallest observed count.
    NoOp,
}

/// Fills F(c) for every c from the smallest observed count down to
/// `target_c` via F(c) = F(c+1) * exp(alpha / c). The chain runs on the
/// unrounded values; stored frequencies are rounded, with a floor of 1.
pub fn extrapolate_count_of_counts(
    coc: &CountOfCounts,
    alpha: f64,
    target_c: u64,
) -> Result<(CountOfCounts, Extrapolation), CocError> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(CocError::InvalidAlpha(alpha));
    }
    let mut out = coc.clone();
    let Some(start) = coc.smallest_observed() else {
        return Err(CocError::Missing { c: target_c });
    };
    if target_c >= start || target_c == 0 {
        log::warn!("extrapolation target F({target_c}) is not below smallest observed F({start}); nothing to do");
        return Ok((out, Extrapolation::NoOp));
    }
    let mut value = coc.frequency(start);
    let mut filled = 0;
    for c in (target_c..start).rev() {
        value *= (alpha / c as f64).exp();
        out.entries.insert(
            c,
            CocEntry {
                frequency: value.round().max(1.0),
                origin: CocOrigin::Extrapolated { alpha: Some(alpha) },
            },
        );
        filled += 1;
    }
    Ok((out, Extrapolation::Filled(filled)))
}
