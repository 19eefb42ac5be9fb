//! Price panel ingestion: CSV parsing, date alignment and log returns.
//!
//! Input is long-format CSV (one row per observation) with date, ticker and
//! close columns. Dates are ISO-8601 strings treated as opaque ordered
//! labels; there is no trading-calendar logic. A freshly parsed panel may
//! have gaps (a ticker missing on some dates); [`align_panel`] resolves them
//! under an explicit policy before returns are computed.

use std::collections::BTreeMap;
use std::io::Read;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PanelError {
    #[error("csv error at line {line}: {msg}")]
    MalformedRow { line: u64, msg: String },
    #[error("missing column '{0}' in header")]
    MissingColumn(String),
    #[error("line {line}: unparseable date '{value}' (expected YYYY-MM-DD)")]
    BadDate { line: u64, value: String },
    #[error("line {line}: non-positive close {value} for ticker '{ticker}'")]
    NonPositivePrice { line: u64, ticker: String, value: f64 },
    #[error("line {line}: duplicate record for ({date}, {ticker})")]
    DuplicateRecord { line: u64, date: String, ticker: String },
    #[error("panel is empty")]
    Empty,
    #[error("ticker '{0}' has no observations")]
    EmptyTicker(String),
    #[error("aligned panel has {0} dates; at least 2 are required")]
    TooFewDates(usize),
    #[error("panel is not rectangular: ticker '{ticker}' is missing a price on {date}")]
    NotRectangular { ticker: String, date: String },
}

/// Column names of the long-format price CSV. All three must appear in the
/// header row; extra columns are ignored.
#[derive(Debug, Clone)]
pub struct CsvFormat {
    pub date_col: String,
    pub ticker_col: String,
    pub close_col: String,
}

impl Default for CsvFormat {
    fn default() -> Self {
        Self {
            date_col: "date".to_string(),
            ticker_col: "ticker".to_string(),
            close_col: "close".to_string(),
        }
    }
}

/// How [`align_panel`] resolves dates on which some ticker has no price.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MissingPolicy {
    /// Keep only dates where every ticker has a price.
    Intersect,
    /// Fill gaps with the last observed price. Dates before the last ticker's
    /// first observation are dropped (a leading gap cannot be filled).
    /// Filled days produce a zero return for that ticker, which depresses the
    /// day's sigma; a known bias of this policy.
    ForwardFill,
}

/// Date-aligned matrix of daily closing prices, `prices[stock][day]`.
///
/// Entries are `None` where a ticker has no observation; after
/// [`align_panel`] every entry is `Some` and all prices are strictly
/// positive. Dates are strictly increasing with no duplicates.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePanel {
    pub dates: Vec<String>,
    pub tickers: Vec<String>,
    pub prices: Vec<Vec<Option<f64>>>,
}

impl PricePanel {
    pub fn n_stocks(&self) -> usize {
        self.tickers.len()
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    /// True when every ticker has a price on every date.
    pub fn is_rectangular(&self) -> bool {
        self.prices.iter().all(|row| row.iter().all(|p| p.is_some()))
    }
}

/// Per-stock daily log returns, `returns[stock][day]`, with one column fewer
/// than the panel the matrix was derived from.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnMatrix {
    pub dates: Vec<String>,
    pub tickers: Vec<String>,
    pub returns: Vec<Vec<f64>>,
}

impl ReturnMatrix {
    pub fn n_stocks(&self) -> usize {
        self.tickers.len()
    }

    pub fn n_days(&self) -> usize {
        self.dates.len()
    }
}

/// Parses a long-format price CSV into a (possibly gappy) [`PricePanel`].
///
/// Dates are sorted lexicographically (ISO-8601 order) and tickers by first
/// appearance. Duplicate `(date, ticker)` pairs, non-positive closes and
/// unparseable dates or numbers are errors, reported with their line number.
pub fn parse_price_csv<R: Read>(source: R, format: &CsvFormat) -> Result<PricePanel, PanelError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);

    let headers = reader
        .headers()
        .map_err(|e| PanelError::MalformedRow { line: 1, msg: e.to_string() })?
        .clone();
    let col = |name: &str| -> Result<usize, PanelError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| PanelError::MissingColumn(name.to_string()))
    };
    let date_idx = col(&format.date_col)?;
    let ticker_idx = col(&format.ticker_col)?;
    let close_idx = col(&format.close_col)?;

    // (date -> (ticker -> price)); BTreeMap keeps dates in ISO order.
    let mut by_date: BTreeMap<String, BTreeMap<usize, f64>> = BTreeMap::new();
    let mut tickers: Vec<String> = Vec::new();
    let mut ticker_ids: BTreeMap<String, usize> = BTreeMap::new();

    for record in reader.records() {
        let record = record.map_err(|e| PanelError::MalformedRow {
            line: e.position().map_or(0, |p| p.line()),
            msg: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |idx: usize| -> Result<&str, PanelError> {
            record.get(idx).ok_or(PanelError::MalformedRow {
                line,
                msg: format!("row has {} fields, expected at least {}", record.len(), idx + 1),
            })
        };

        let date_raw = field(date_idx)?;
        if NaiveDate::parse_from_str(date_raw, "%Y-%m-%d").is_err() {
            return Err(PanelError::BadDate { line, value: date_raw.to_string() });
        }
        let ticker = field(ticker_idx)?.to_string();
        let close_raw = field(close_idx)?;
        let close: f64 = close_raw.parse().map_err(|_| PanelError::MalformedRow {
            line,
            msg: format!("unparseable close '{close_raw}'"),
        })?;
        if !close.is_finite() || close <= 0.0 {
            return Err(PanelError::NonPositivePrice { line, ticker, value: close });
        }

        let next_id = ticker_ids.len();
        let id = *ticker_ids.entry(ticker.clone()).or_insert(next_id);
        if id == tickers.len() {
            tickers.push(ticker.clone());
        }
        let day = by_date.entry(date_raw.to_string()).or_default();
        if day.insert(id, close).is_some() {
            return Err(PanelError::DuplicateRecord { line, date: date_raw.to_string(), ticker });
        }
    }

    if by_date.is_empty() || tickers.is_empty() {
        return Err(PanelError::Empty);
    }

    let dates: Vec<String> = by_date.keys().cloned().collect();
    let mut prices = vec![vec![None; dates.len()]; tickers.len()];
    for (t, day) in by_date.values().enumerate() {
        for (&id, &close) in day {
            prices[id][t] = Some(close);
        }
    }

    Ok(PricePanel { dates, tickers, prices })
}

/// Resolves gaps in a raw panel, producing a rectangular one.
///
/// Under [`MissingPolicy::Intersect`] only dates where every ticker has a
/// price are kept. Under [`MissingPolicy::ForwardFill`] the panel starts at
/// the first date on which every ticker has been observed at least once, and
/// later gaps carry the last observed price forward.
pub fn align_panel(raw: &PricePanel, policy: MissingPolicy) -> Result<PricePanel, PanelError> {
    for (a, row) in raw.prices.iter().enumerate() {
        if row.iter().all(|p| p.is_none()) {
            return Err(PanelError::EmptyTicker(raw.tickers[a].clone()));
        }
    }

    let n = raw.n_stocks();
    let t_raw = raw.n_dates();
    let mut keep: Vec<usize> = Vec::with_capacity(t_raw);
    let mut prices: Vec<Vec<Option<f64>>> = vec![Vec::new(); n];

    match policy {
        MissingPolicy::Intersect => {
            for t in 0..t_raw {
                if (0..n).all(|a| raw.prices[a][t].is_some()) {
                    keep.push(t);
                    for a in 0..n {
                        prices[a].push(raw.prices[a][t]);
                    }
                }
            }
        }
        MissingPolicy::ForwardFill => {
            let first_full = (0..t_raw)
                .find(|&t| (0..n).all(|a| raw.prices[a][..=t].iter().any(|p| p.is_some())))
                .expect("every ticker has at least one observation");
            let mut last: Vec<f64> = (0..n)
                .map(|a| {
                    raw.prices[a][..=first_full]
                        .iter()
                        .rev()
                        .find_map(|p| *p)
                        .expect("observation at or before first_full")
                })
                .collect();
            for t in first_full..t_raw {
                keep.push(t);
                for a in 0..n {
                    if let Some(p) = raw.prices[a][t] {
                        last[a] = p;
                    }
                    prices[a].push(Some(last[a]));
                }
            }
        }
    }

    if keep.len() < 2 {
        return Err(PanelError::TooFewDates(keep.len()));
    }

    Ok(PricePanel {
        dates: keep.iter().map(|&t| raw.dates[t].clone()).collect(),
        tickers: raw.tickers.clone(),
        prices,
    })
}

/// Computes per-stock daily log returns from a rectangular panel.
///
/// `returns[a][t] = ln(prices[a][t+1] / prices[a][t])`; the output date axis
/// drops the panel's first date.
pub fn compute_returns(panel: &PricePanel) -> Result<ReturnMatrix, PanelError> {
    if panel.n_dates() < 2 {
        return Err(PanelError::TooFewDates(panel.n_dates()));
    }
    let mut returns = Vec::with_capacity(panel.n_stocks());
    for (a, row) in panel.prices.iter().enumerate() {
        let mut r = Vec::with_capacity(panel.n_dates() - 1);
        for t in 0..panel.n_dates() - 1 {
            let (p0, p1) = match (row[t], row[t + 1]) {
                (Some(p0), Some(p1)) => (p0, p1),
                _ => {
                    let missing = if row[t].is_none() { t } else { t + 1 };
                    return Err(PanelError::NotRectangular {
                        ticker: panel.tickers[a].clone(),
                        date: panel.dates[missing].clone(),
                    });
                }
            };
            r.push((p1 / p0).ln());
        }
        returns.push(r);
    }
    Ok(ReturnMatrix {
        dates: panel.dates[1..].to_vec(),
        tickers: panel.tickers.clone(),
        returns,
    })
}
