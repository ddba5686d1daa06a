//! Scenario files, the per-interval pipeline and simulation reports.
//!
//! A scenario is a TOML document naming the prosumers, retailers and market
//! parameters, plus two CSV series referenced by path relative to the
//! scenario file:
//!
//! * load: `interval,prosumer_id,generation_wh,demand_wh`
//! * quotes: `interval,forecast_mc,actual_mc`
//!
//! One interval is simulated per quote row.

mod engine;
mod report;
mod series;
mod table2;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{EnergyWh, Fraction, MoneyMc, PriceMc, PriceRange, ProsumerId, ProsumerState, RetailerId};
use crate::fpp::SpotQuote;
use crate::local_market::{ClearingMechanism, OrderPricing, RebidParams};
use crate::multi_retailer::{NegotiationParams, RetailerOffer};
use crate::settlement::OwnershipMode;

pub use engine::{run_interval, run_simulation, EnergyBalance, IntervalReport, ProsumerInterval, SimulationFault};
pub use report::{export_report, render_report, ReportFormat, SimulationReport, SummaryRow};
pub use series::{parse_load, parse_quotes, LoadPoint, LoadTable};
pub use table2::{table2_scenario, TABLE2_LOAD, TABLE2_QUOTES, TABLE2_SCENARIO};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{origin}: {message}")]
    Parse { origin: String, message: String },
    #[error("invalid `{field}`: {message}")]
    Invalid { field: String, message: String },
    #[error("{file}{}: {message}", line.map(|l| format!(" line {l}")).unwrap_or_default())]
    Series { file: String, line: Option<u64>, message: String },
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid { field: field.into(), message: message.into() }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProsumerSpec {
    pub id: ProsumerId,
    pub battery_capacity: EnergyWh,
    pub initial_battery: EnergyWh,
    pub sell_range: PriceRange,
    pub buy_range: PriceRange,
}

impl ProsumerSpec {
    pub fn initial_state(&self) -> ProsumerState {
        ProsumerState {
            id: self.id,
            generation: EnergyWh::ZERO,
            demand: EnergyWh::ZERO,
            battery_level: self.initial_battery,
            battery_capacity: self.battery_capacity,
            sell_range: self.sell_range,
            buy_range: self.buy_range,
            ledger: MoneyMc::ZERO,
        }
    }
}

/// Inputs for one dispatch interval.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotInput {
    pub interval: u32,
    pub load: BTreeMap<ProsumerId, LoadPoint>,
    pub quote: SpotQuote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubscriptionParams {
    pub monthly_fee: MoneyMc,
    pub intervals_per_month: u32,
}

impl Default for SubscriptionParams {
    fn default() -> Self {
        SubscriptionParams { monthly_fee: MoneyMc::ZERO, intervals_per_month: DEFAULT_INTERVALS_PER_MONTH }
    }
}

/// Thirty days of half-hour intervals.
pub const DEFAULT_INTERVALS_PER_MONTH: u32 = 1440;

/// A validated scenario with its series loaded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioConfig {
    pub name: String,
    pub prosumers: Vec<ProsumerSpec>,
    pub retailers: Vec<RetailerOffer>,
    pub ownership: OwnershipMode,
    pub mechanism: ClearingMechanism,
    pub order_pricing: OrderPricing,
    pub retail_price: PriceMc,
    pub feed_in: PriceMc,
    pub bid_fraction: Fraction,
    pub fpp_battery_only: bool,
    pub subscription: SubscriptionParams,
    pub rebid: RebidParams,
    pub negotiation: NegotiationParams,
    pub interval_minutes: Option<u32>,
    pub slots: Vec<SlotInput>,
}

impl ScenarioConfig {
    /// Scenario with a single retailer and default parameters.
    pub fn new(name: impl Into<String>, prosumers: Vec<ProsumerSpec>, retail_price: PriceMc) -> Self {
        ScenarioConfig {
            name: name.into(),
            prosumers,
            retailers: vec![RetailerOffer {
                retailer: RetailerId(1),
                service_charge: MoneyMc::ZERO,
                profit_share: Fraction::new(1, 2),
                retail_price,
            }],
            ownership: OwnershipMode::default(),
            mechanism: ClearingMechanism::DoubleAuction,
            order_pricing: OrderPricing::default(),
            retail_price,
            feed_in: PriceMc(0),
            bid_fraction: Fraction::one(),
            fpp_battery_only: false,
            subscription: SubscriptionParams::default(),
            rebid: RebidParams::default(),
            negotiation: NegotiationParams::default(),
            interval_minutes: None,
            slots: Vec::new(),
        }
    }

    pub fn initial_states(&self) -> Vec<ProsumerState> {
        self.prosumers.iter().map(ProsumerSpec::initial_state).collect()
    }

    pub fn retailer(&self, id: RetailerId) -> Option<&RetailerOffer> {
        self.retailers.iter().find(|r| r.retailer == id)
    }

    /// Checks every invariant; field paths name the offending entry.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.prosumers.is_empty() {
            return Err(invalid("prosumers", "at least one prosumer is required"));
        }
        let mut ids = BTreeSet::new();
        for (i, p) in self.prosumers.iter().enumerate() {
            let field = |f: &str| format!("prosumers[{i}].{f}");
            if !ids.insert(p.id) {
                return Err(invalid(field("id"), format!("duplicate prosumer id {}", p.id.0)));
            }
            if p.initial_battery > p.battery_capacity {
                return Err(invalid(field("battery_level_wh"), "initial level exceeds battery capacity"));
            }
            if p.sell_range.min > p.sell_range.max {
                return Err(invalid(field("sell_range_mc"), "minimum above maximum"));
            }
            if p.buy_range.min > p.buy_range.max {
                return Err(invalid(field("buy_range_mc"), "minimum above maximum"));
            }
        }
        if self.feed_in > self.retail_price {
            return Err(invalid(
                "market.feed_in_mc",
                format!("feed-in {} exceeds retail price {}", self.feed_in.0, self.retail_price.0),
            ));
        }
        if !self.bid_fraction.is_unit_interval() {
            return Err(invalid("market.bid_fraction", "must lie in [0, 1]"));
        }
        if self.retailers.is_empty() {
            return Err(invalid("retailers", "at least one retailer is required"));
        }
        let mut rids = BTreeSet::new();
        for (i, r) in self.retailers.iter().enumerate() {
            if !rids.insert(r.retailer) {
                return Err(invalid(format!("retailers[{i}].id"), format!("duplicate retailer id {}", r.retailer.0)));
            }
            if !r.profit_share.is_unit_interval() {
                return Err(invalid(format!("retailers[{i}].profit_share"), "must lie in [0, 1]"));
            }
            if r.service_charge.0 < 0 {
                return Err(invalid(format!("retailers[{i}].service_charge_mc"), "must not be negative"));
            }
        }
        if self.subscription.monthly_fee.0 < 0 {
            return Err(invalid("subscription.monthly_fee_mc", "must not be negative"));
        }
        if self.subscription.intervals_per_month == 0 {
            return Err(invalid("subscription.intervals_per_month", "must be positive"));
        }
        if !self.rebid.step.is_unit_interval() {
            return Err(invalid("rebid.step", "must lie in [0, 1]"));
        }
        if self.negotiation.max_rounds == 0 {
            return Err(invalid("negotiation.max_rounds", "must be at least 1"));
        }
        if !self.negotiation.share_ceiling.is_unit_interval() {
            return Err(invalid("negotiation.share_ceiling", "must lie in [0, 1]"));
        }
        if self.negotiation.charge_step.0 < 0 {
            return Err(invalid("negotiation.charge_step_mc", "must not be negative"));
        }
        let mut last = None;
        for slot in &self.slots {
            if last.is_some_and(|l| slot.interval <= l) {
                return Err(invalid("series.quotes", format!("interval {} out of order", slot.interval)));
            }
            last = Some(slot.interval);
            if slot.quote.interval != slot.interval {
                return Err(invalid("series.quotes", format!("quote does not match interval {}", slot.interval)));
            }
            for p in &self.prosumers {
                if !slot.load.contains_key(&p.id) {
                    return Err(invalid(
                        "series.load",
                        format!("no row for prosumer {} in interval {}", p.id.0, slot.interval),
                    ));
                }
            }
            if let Some(extra) = slot.load.keys().find(|id| !ids.contains(id)) {
                return Err(invalid(
                    "series.load",
                    format!("unknown prosumer {} in interval {}", extra.0, slot.interval),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: Option<String>,
    #[serde(default)]
    ownership: OwnershipMode,
    #[serde(default = "default_mechanism")]
    mechanism: ClearingMechanism,
    #[serde(default)]
    order_pricing: OrderPricing,
    interval_minutes: Option<u32>,
    market: RawMarket,
    #[serde(default)]
    subscription: RawSubscription,
    #[serde(default)]
    rebid: RawRebid,
    #[serde(default)]
    negotiation: RawNegotiation,
    series: RawSeries,
    #[serde(default)]
    prosumers: Vec<RawProsumer>,
    #[serde(default)]
    retailers: Vec<RawRetailer>,
}

fn default_mechanism() -> ClearingMechanism {
    ClearingMechanism::DoubleAuction
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMarket {
    retail_price_mc: u64,
    #[serde(default)]
    feed_in_mc: u64,
    commission_rate: Option<Fraction>,
    bid_fraction: Option<Fraction>,
    #[serde(default)]
    fpp_battery_only: bool,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSubscription {
    #[serde(default)]
    monthly_fee_mc: i64,
    intervals_per_month: Option<u32>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRebid {
    step: Option<Fraction>,
    max_rounds: Option<u32>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNegotiation {
    share_step: Option<Fraction>,
    charge_step_mc: Option<i64>,
    share_ceiling: Option<Fraction>,
    max_rounds: Option<u32>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSeries {
    load: String,
    quotes: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProsumer {
    id: u32,
    #[serde(default)]
    battery_capacity_wh: u64,
    #[serde(default)]
    battery_level_wh: u64,
    sell_range_mc: [u64; 2],
    buy_range_mc: [u64; 2],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRetailer {
    id: u32,
    retail_price_mc: Option<u64>,
    profit_share: Option<Fraction>,
    #[serde(default)]
    service_charge_mc: i64,
}

/// Loads and validates a scenario file. Series paths are resolved against
/// the scenario's directory.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioConfig, ScenarioError> {
    let path = path.as_ref();
    let text =
        std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.to_path_buf(), source })?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    load_scenario_str(&text, &path.display().to_string(), |rel| {
        let p = base.join(rel);
        std::fs::read_to_string(&p).map_err(|source| ScenarioError::Io { path: p, source })
    })
}

/// Parses scenario text; `read_series` maps a series reference to its contents.
pub fn load_scenario_str(
    text: &str,
    origin: &str,
    read_series: impl Fn(&str) -> Result<String, ScenarioError>,
) -> Result<ScenarioConfig, ScenarioError> {
    let raw: RawScenario = toml::from_str(text)
        .map_err(|e| ScenarioError::Parse { origin: origin.to_string(), message: e.to_string() })?;

    let commission = raw.market.commission_rate.unwrap_or(Fraction::new(1, 2));
    if !commission.is_unit_interval() {
        return Err(invalid("market.commission_rate", "must lie in [0, 1]"));
    }
    let retail_price = PriceMc(raw.market.retail_price_mc);
    let prosumers = raw
        .prosumers
        .iter()
        .map(|p| ProsumerSpec {
            id: ProsumerId(p.id),
            battery_capacity: EnergyWh(p.battery_capacity_wh),
            initial_battery: EnergyWh(p.battery_level_wh),
            sell_range: PriceRange { min: PriceMc(p.sell_range_mc[0]), max: PriceMc(p.sell_range_mc[1]) },
            buy_range: PriceRange { min: PriceMc(p.buy_range_mc[0]), max: PriceMc(p.buy_range_mc[1]) },
        })
        .collect();
    let retailers = if raw.retailers.is_empty() {
        vec![RetailerOffer {
            retailer: RetailerId(1),
            service_charge: MoneyMc::ZERO,
            profit_share: commission.complement(),
            retail_price,
        }]
    } else {
        raw.retailers
            .iter()
            .map(|r| RetailerOffer {
                retailer: RetailerId(r.id),
                service_charge: MoneyMc(r.service_charge_mc),
                profit_share: r.profit_share.unwrap_or(commission.complement()),
                retail_price: r.retail_price_mc.map(PriceMc).unwrap_or(retail_price),
            })
            .collect()
    };

    let defaults = NegotiationParams::default();
    let negotiation = NegotiationParams {
        share_step: raw.negotiation.share_step.unwrap_or(defaults.share_step),
        charge_step: raw.negotiation.charge_step_mc.map(MoneyMc).unwrap_or(defaults.charge_step),
        share_ceiling: raw.negotiation.share_ceiling.unwrap_or(defaults.share_ceiling),
        max_rounds: raw.negotiation.max_rounds.unwrap_or(defaults.max_rounds),
    };
    let rebid_defaults = RebidParams::default();
    let rebid = RebidParams {
        step: raw.rebid.step.unwrap_or(rebid_defaults.step),
        max_rounds: raw.rebid.max_rounds.unwrap_or(rebid_defaults.max_rounds),
    };

    let load_text = read_series(&raw.series.load)?;
    let quotes_text = read_series(&raw.series.quotes)?;
    let load = parse_load(&raw.series.load, &load_text)?;
    let quotes = parse_quotes(&raw.series.quotes, &quotes_text)?;
    let slots = assemble_slots(load, quotes)?;

    let config = ScenarioConfig {
        name: raw.name.unwrap_or_else(|| origin.to_string()),
        prosumers,
        retailers,
        ownership: raw.ownership,
        mechanism: raw.mechanism,
        order_pricing: raw.order_pricing,
        retail_price,
        feed_in: PriceMc(raw.market.feed_in_mc),
        bid_fraction: raw.market.bid_fraction.unwrap_or(Fraction::one()),
        fpp_battery_only: raw.market.fpp_battery_only,
        subscription: SubscriptionParams {
            monthly_fee: MoneyMc(raw.subscription.monthly_fee_mc),
            intervals_per_month: raw.subscription.intervals_per_month.unwrap_or(DEFAULT_INTERVALS_PER_MONTH),
        },
        rebid,
        negotiation,
        interval_minutes: raw.interval_minutes,
        slots,
    };
    config.validate()?;
    Ok(config)
}

fn assemble_slots(load: LoadTable, quotes: Vec<SpotQuote>) -> Result<Vec<SlotInput>, ScenarioError> {
    let intervals: BTreeSet<u32> = quotes.iter().map(|q| q.interval).collect();
    if let Some(&(interval, _)) = load.keys().find(|(i, _)| !intervals.contains(i)) {
        return Err(invalid("series.load", format!("interval {interval} has no spot quote")));
    }
    let mut per_interval: BTreeMap<u32, BTreeMap<ProsumerId, LoadPoint>> = BTreeMap::new();
    for ((interval, id), point) in load {
        per_interval.entry(interval).or_default().insert(id, point);
    }
    Ok(quotes
        .into_iter()
        .map(|quote| SlotInput {
            interval: quote.interval,
            load: per_interval.remove(&quote.interval).unwrap_or_default(),
            quote,
        })
        .collect())
}
