//! Tabular time series: per-prosumer load and per-interval spot quotes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ScenarioError;
use crate::domain::{EnergyWh, PriceMc, ProsumerId};
use crate::fpp::SpotQuote;

#[derive(Debug, Deserialize)]
struct LoadRow {
    interval: u32,
    prosumer_id: u32,
    generation_wh: u64,
    demand_wh: u64,
}

#[derive(Debug, Deserialize)]
struct QuoteRow {
    interval: u32,
    forecast_mc: u64,
    actual_mc: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadPoint {
    pub generation: EnergyWh,
    pub demand: EnergyWh,
}

pub type LoadTable = BTreeMap<(u32, ProsumerId), LoadPoint>;

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(text.as_bytes())
}

fn row_error(file: &str, err: csv::Error) -> ScenarioError {
    let line = err.position().map(|p| p.line());
    ScenarioError::Series { file: file.to_string(), line, message: err.to_string() }
}

fn require_columns(file: &str, rdr: &mut csv::Reader<&[u8]>, columns: &[&str]) -> Result<(), ScenarioError> {
    let headers = rdr.headers().map_err(|e| row_error(file, e))?.clone();
    for col in columns {
        if !headers.iter().any(|h| h == *col) {
            return Err(ScenarioError::Series {
                file: file.to_string(),
                line: Some(1),
                message: format!("missing column `{col}`"),
            });
        }
    }
    Ok(())
}

/// Parses `interval,prosumer_id,generation_wh,demand_wh`.
pub fn parse_load(file: &str, text: &str) -> Result<LoadTable, ScenarioError> {
    let mut rdr = reader(text);
    require_columns(file, &mut rdr, &["interval", "prosumer_id", "generation_wh", "demand_wh"])?;
    let mut table = LoadTable::new();
    for result in rdr.deserialize::<LoadRow>() {
        let row = result.map_err(|e| row_error(file, e))?;
        let key = (row.interval, ProsumerId(row.prosumer_id));
        let point = LoadPoint { generation: EnergyWh(row.generation_wh), demand: EnergyWh(row.demand_wh) };
        if table.insert(key, point).is_some() {
            return Err(ScenarioError::Series {
                file: file.to_string(),
                line: None,
                message: format!("duplicate row for interval {} prosumer {}", row.interval, row.prosumer_id),
            });
        }
    }
    Ok(table)
}

/// Parses `interval,forecast_mc,actual_mc`; result is ordered by interval.
pub fn parse_quotes(file: &str, text: &str) -> Result<Vec<SpotQuote>, ScenarioError> {
    let mut rdr = reader(text);
    require_columns(file, &mut rdr, &["interval", "forecast_mc", "actual_mc"])?;
    let mut quotes: BTreeMap<u32, SpotQuote> = BTreeMap::new();
    for result in rdr.deserialize::<QuoteRow>() {
        let row = result.map_err(|e| row_error(file, e))?;
        let quote =
            SpotQuote { interval: row.interval, forecast: PriceMc(row.forecast_mc), actual: PriceMc(row.actual_mc) };
        if quotes.insert(row.interval, quote).is_some() {
            return Err(ScenarioError::Series {
                file: file.to_string(),
                line: None,
                message: format!("duplicate quote for interval {}", row.interval),
            });
        }
    }
    Ok(quotes.into_values().collect())
}
