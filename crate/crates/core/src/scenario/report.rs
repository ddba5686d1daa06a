//! Simulation reports and their JSON/CSV renderings.
//!
//! The CSV form has two blocks separated by a blank line: one row per
//! (interval, prosumer), then one summary row per interval with the columns
//! of the toy-example revenue table. Money is printed in dollars with two
//! decimals, energy in kWh with three, prices in cents.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::engine::{EnergyBalance, IntervalReport};
use super::{ScenarioConfig, ScenarioError};
use crate::domain::{div_round_half_even, EnergyWh, MarketChoice, MoneyMc, PriceMc, ProsumerId, RetailerId};
use crate::settlement::{improvement_factor, Improvement};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub interval: u32,
    /// Surplus pooled into the FPP across all retailers.
    pub total_surplus: EnergyWh,
    pub retail_price: PriceMc,
    pub spot_price: PriceMc,
    pub forecast: PriceMc,
    pub retail_market: bool,
    pub spot_market: bool,
    pub total_revenue: MoneyMc,
    pub retailer_revenue: MoneyMc,
    /// Mean FPP payout per contributor.
    pub prosumer_revenue: MoneyMc,
    /// Mean traditional P2P revenue per contributor.
    pub baseline_revenue: MoneyMc,
    pub improvement: Improvement,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub scenario: String,
    pub intervals: Vec<IntervalReport>,
    pub prosumer_ledgers: BTreeMap<ProsumerId, MoneyMc>,
    pub retailer_ledgers: BTreeMap<RetailerId, MoneyMc>,
    pub baseline_ledgers: BTreeMap<ProsumerId, MoneyMc>,
    pub cumulative_energy: EnergyBalance,
    pub final_battery: BTreeMap<ProsumerId, EnergyWh>,
    pub summary: Vec<SummaryRow>,
}

fn mean(total: MoneyMc, n: usize) -> MoneyMc {
    if n == 0 {
        MoneyMc::ZERO
    } else {
        MoneyMc(div_round_half_even(total.0 as i128, n as i128) as i64)
    }
}

pub(crate) fn summarize(config: &ScenarioConfig, intervals: &[IntervalReport]) -> Vec<SummaryRow> {
    intervals
        .iter()
        .map(|r| {
            let s = &r.settlements;
            let contributors = s.iter().map(|x| x.exported.len()).sum();
            let payouts: MoneyMc = s.iter().map(|x| x.total_payouts()).sum();
            let baseline: MoneyMc = s.iter().map(|x| x.total_baseline()).sum();
            let traded = s.iter().filter(|x| !x.quantity.is_zero());
            let markets: Vec<MarketChoice> = traded.map(|x| x.market).collect();
            SummaryRow {
                interval: r.interval,
                total_surplus: s.iter().flat_map(|x| x.offered.values()).copied().sum(),
                retail_price: config.retail_price,
                spot_price: r.quote.actual,
                forecast: r.quote.forecast,
                retail_market: markets.contains(&MarketChoice::Retail),
                spot_market: markets.contains(&MarketChoice::Spot),
                total_revenue: s.iter().map(|x| x.gross).sum(),
                retailer_revenue: s.iter().map(|x| x.retailer_commission).sum(),
                prosumer_revenue: mean(payouts, contributors),
                baseline_revenue: mean(baseline, contributors),
                improvement: improvement_factor(payouts, baseline),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum ReportFormat {
    #[default]
    Json,
    Csv,
}

const DETAIL_HEADER: [&str; 22] = [
    "interval",
    "prosumer_id",
    "retailer_id",
    "generation_kwh",
    "demand_kwh",
    "battery_start_kwh",
    "battery_end_kwh",
    "discharge_kwh",
    "charge_kwh",
    "p2p_sold_kwh",
    "p2p_bought_kwh",
    "grid_bought_kwh",
    "fpp_export_kwh",
    "spill_kwh",
    "p2p_income_usd",
    "p2p_cost_usd",
    "grid_cost_usd",
    "fpp_payout_usd",
    "baseline_payout_usd",
    "fees_usd",
    "ledger_delta_usd",
    "ledger_usd",
];

const SUMMARY_HEADER: [&str; 12] = [
    "case",
    "total_surplus_kwh",
    "retail_price_c_per_kwh",
    "spot_price_c_per_kwh",
    "forecast_c_per_kwh",
    "retail_market",
    "spot_market",
    "total_revenue_usd",
    "retailer_revenue_usd",
    "prosumer_revenue_usd",
    "traditional_p2p_revenue_usd",
    "improvement",
];

fn csv_block(header: &[&str], rows: Vec<Vec<String>>) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

fn render_csv(report: &SimulationReport) -> String {
    let kwh = |e: EnergyWh| e.to_kwh_string();
    let usd = |m: MoneyMc| m.to_dollars_string();
    let details = report
        .intervals
        .iter()
        .flat_map(|r| r.prosumers.iter().map(move |p| (r.interval, p)))
        .map(|(t, p)| {
            vec![
                t.to_string(),
                p.id.0.to_string(),
                p.retailer.0.to_string(),
                kwh(p.generation),
                kwh(p.demand),
                kwh(p.battery_start),
                kwh(p.battery_end),
                kwh(p.discharge),
                kwh(p.charge),
                kwh(p.p2p_sold),
                kwh(p.p2p_bought),
                kwh(p.grid_bought),
                kwh(p.fpp_export),
                kwh(p.spill),
                usd(p.p2p_income),
                usd(p.p2p_cost),
                usd(p.grid_cost),
                usd(p.fpp_payout),
                usd(p.baseline_payout),
                usd(p.subscription_fee + p.service_charge),
                usd(p.ledger_delta),
                usd(p.ledger),
            ]
        })
        .collect();
    let marker = |on: bool, label: &str| if on { label.to_string() } else { String::new() };
    let summary = report
        .summary
        .iter()
        .map(|s| {
            vec![
                s.interval.to_string(),
                kwh(s.total_surplus),
                s.retail_price.to_cents_string(),
                s.spot_price.to_cents_string(),
                s.forecast.to_cents_string(),
                marker(s.retail_market, "retail"),
                marker(s.spot_market, "spot"),
                usd(s.total_revenue),
                usd(s.retailer_revenue),
                usd(s.prosumer_revenue),
                usd(s.baseline_revenue),
                s.improvement.label(),
            ]
        })
        .collect();
    format!("{}\n{}", csv_block(&DETAIL_HEADER, details), csv_block(&SUMMARY_HEADER, summary))
}

pub fn render_report(report: &SimulationReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
        ReportFormat::Csv => render_csv(report),
    }
}

pub fn export_report(report: &SimulationReport, format: ReportFormat, path: &Path) -> Result<(), ScenarioError> {
    std::fs::write(path, render_report(report, format))
        .map_err(|source| ScenarioError::Io { path: path.to_path_buf(), source })
}
