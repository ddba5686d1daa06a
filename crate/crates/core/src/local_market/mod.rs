//! Local peer-to-peer market for one dispatch interval.
//!
//! Each prosumer first covers its own demand from generation and then from its
//! battery. What is left becomes tiered sell orders (solar surplus before
//! battery charge) or a buy order. Orders are cleared by a double auction or at
//! the mid-market rate, optionally re-bid, and buyers take whatever is still
//! unmatched from the retailer at the retail price.

mod auction;
mod mid_market;
mod rebid;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{trade_revenue, DomainError, EnergyWh, MoneyMc, PriceMc, ProsumerId, ProsumerState, SupplyTier};

pub use auction::clear_double_auction;
pub use mid_market::{clear_mid_market, mid_market_price};
pub use rebid::{rebid_loop, RebidParams};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MarketError {
    #[error("order from {0} has zero quantity")]
    EmptyOrder(ProsumerId),
    #[error("sell order from {0} is missing its supply tier")]
    MissingTier(ProsumerId),
    #[error("{0} appears on both sides of the market")]
    SelfTrade(ProsumerId),
    #[error("feed-in tariff {feed_in} exceeds retail price {retail}")]
    FeedInAboveRetail { feed_in: PriceMc, retail: PriceMc },
    #[error(transparent)]
    Arithmetic(#[from] DomainError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Sell,
    Buy,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Order {
    pub owner: ProsumerId,
    pub side: Side,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tier: Option<SupplyTier>,
    pub quantity: EnergyWh,
    pub limit_price: PriceMc,
}

impl Order {
    pub fn sell(owner: ProsumerId, tier: SupplyTier, quantity: EnergyWh, limit_price: PriceMc) -> Self {
        Order { owner, side: Side::Sell, tier: Some(tier), quantity, limit_price }
    }

    pub fn buy(owner: ProsumerId, quantity: EnergyWh, limit_price: PriceMc) -> Self {
        Order { owner, side: Side::Buy, tier: None, quantity, limit_price }
    }

    fn with_quantity(&self, quantity: EnergyWh) -> Order {
        Order { quantity, ..self.clone() }
    }

    fn sell_tier(&self) -> SupplyTier {
        self.tier.unwrap_or(SupplyTier::BatteryCharge)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trade {
    pub seller: ProsumerId,
    pub buyer: ProsumerId,
    pub tier: SupplyTier,
    pub quantity: EnergyWh,
    pub price: PriceMc,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarketOutcome {
    pub trades: Vec<Trade>,
    pub clearing_price: Option<PriceMc>,
    pub unmatched_sells: Vec<Order>,
    pub unmatched_buys: Vec<Order>,
    pub rebid_rounds_used: u32,
}

impl MarketOutcome {
    /// Outcome in which nothing trades.
    pub fn no_trade(sells: &[Order], buys: &[Order], clearing_price: Option<PriceMc>) -> Self {
        MarketOutcome {
            trades: Vec::new(),
            clearing_price,
            unmatched_sells: sells.to_vec(),
            unmatched_buys: buys.to_vec(),
            rebid_rounds_used: 0,
        }
    }

    pub fn traded_volume(&self) -> EnergyWh {
        self.trades.iter().map(|t| t.quantity).sum()
    }

    pub fn sold_by(&self, id: ProsumerId) -> EnergyWh {
        self.trades.iter().filter(|t| t.seller == id).map(|t| t.quantity).sum()
    }

    pub fn bought_by(&self, id: ProsumerId) -> EnergyWh {
        self.trades.iter().filter(|t| t.buyer == id).map(|t| t.quantity).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClearingMechanism {
    DoubleAuction,
    MidMarketRate,
}

/// Where within its preferred range each participant posts its limit price.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrderPricing {
    /// Sellers ask their minimum, buyers bid their maximum.
    #[default]
    Aggressive,
    /// Sellers ask their maximum, buyers bid their minimum.
    Conservative,
}

/// Prices needed by the clearing mechanisms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MarketPrices {
    pub retail: PriceMc,
    pub feed_in: PriceMc,
}

pub fn clear(
    mechanism: ClearingMechanism,
    sells: &[Order],
    buys: &[Order],
    prices: MarketPrices,
) -> Result<MarketOutcome, MarketError> {
    match mechanism {
        ClearingMechanism::DoubleAuction => clear_double_auction(sells, buys),
        ClearingMechanism::MidMarketRate => clear_mid_market(sells, buys, prices.retail, prices.feed_in),
    }
}

/// What remains of a prosumer's position after covering its own demand.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Residual {
    pub solar_surplus: EnergyWh,
    pub battery_surplus: EnergyWh,
    pub deficit: EnergyWh,
    /// Battery energy used to cover own demand.
    pub self_discharge: EnergyWh,
}

impl Residual {
    /// Positive for surplus, negative for deficit.
    pub fn net(&self) -> i128 {
        (self.solar_surplus.0 as i128 + self.battery_surplus.0 as i128) - self.deficit.0 as i128
    }

    pub fn surplus(&self) -> EnergyWh {
        self.solar_surplus + self.battery_surplus
    }
}

/// Covers demand from generation, then from the battery.
pub fn self_consume(state: &ProsumerState) -> (ProsumerState, Residual) {
    let mut next = state.clone();
    let from_solar = state.generation.0.min(state.demand.0);
    let solar_surplus = state.generation.0 - from_solar;
    let unmet = state.demand.0 - from_solar;
    let discharge = unmet.min(state.battery_level.0);
    next.battery_level = EnergyWh(state.battery_level.0 - discharge);
    let deficit = unmet - discharge;
    let residual = Residual {
        solar_surplus: EnergyWh(solar_surplus),
        battery_surplus: next.battery_level,
        deficit: EnergyWh(deficit),
        self_discharge: EnergyWh(discharge),
    };
    (next, residual)
}

/// Turns residual positions into orders. Output is ordered by owner, then tier.
pub fn collect_orders(positions: &[(ProsumerState, Residual)], pricing: OrderPricing) -> (Vec<Order>, Vec<Order>) {
    let mut sells = Vec::new();
    let mut buys = Vec::new();
    let mut sorted: Vec<&(ProsumerState, Residual)> = positions.iter().collect();
    sorted.sort_by_key(|(s, _)| s.id);
    for (state, residual) in sorted {
        let (ask, bid) = match pricing {
            OrderPricing::Aggressive => (state.sell_range.min, state.buy_range.max),
            OrderPricing::Conservative => (state.sell_range.max, state.buy_range.min),
        };
        if !residual.solar_surplus.is_zero() {
            sells.push(Order::sell(state.id, SupplyTier::SolarSurplus, residual.solar_surplus, ask));
        }
        if !residual.battery_surplus.is_zero() {
            sells.push(Order::sell(state.id, SupplyTier::BatteryCharge, residual.battery_surplus, ask));
        }
        if !residual.deficit.is_zero() {
            buys.push(Order::buy(state.id, residual.deficit, bid));
        }
    }
    (sells, buys)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdequacyReport {
    pub price: Option<PriceMc>,
    pub supply_at_price: EnergyWh,
    pub demand_at_price: EnergyWh,
    pub adequate: bool,
}

impl AdequacyReport {
    pub fn shortfall(&self) -> EnergyWh {
        self.demand_at_price.saturating_sub(self.supply_at_price)
    }
}

/// Checks whether supply offered at or below `price` covers demand bid at or
/// above it.
pub fn assess_adequacy(sells: &[Order], buys: &[Order], price: PriceMc) -> AdequacyReport {
    let supply: EnergyWh = sells.iter().filter(|o| o.limit_price <= price).map(|o| o.quantity).sum();
    let demand: EnergyWh = buys.iter().filter(|o| o.limit_price >= price).map(|o| o.quantity).sum();
    AdequacyReport { price: Some(price), supply_at_price: supply, demand_at_price: demand, adequate: supply >= demand }
}

/// Adequacy of a clearing outcome. Without a clearing price the market is
/// adequate only when nobody wants to buy.
pub fn outcome_adequacy(outcome: &MarketOutcome, sells: &[Order], buys: &[Order]) -> AdequacyReport {
    match outcome.clearing_price {
        Some(p) => assess_adequacy(sells, buys, p),
        None => {
            let demand: EnergyWh = buys.iter().map(|o| o.quantity).sum();
            AdequacyReport {
                price: None,
                supply_at_price: EnergyWh::ZERO,
                demand_at_price: demand,
                adequate: demand.is_zero(),
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridPurchase {
    pub buyer: ProsumerId,
    pub quantity: EnergyWh,
    pub cost: MoneyMc,
}

/// Supplies every unmatched buy from the retailer at the flat retail price.
/// One purchase per buyer, in ascending buyer order.
pub fn buy_residual_from_retailer(
    unmatched_buys: &[Order],
    retail_price: PriceMc,
) -> Result<Vec<GridPurchase>, DomainError> {
    let mut per_buyer: BTreeMap<ProsumerId, EnergyWh> = BTreeMap::new();
    for o in unmatched_buys.iter().filter(|o| !o.quantity.is_zero()) {
        *per_buyer.entry(o.owner).or_default() += o.quantity;
    }
    per_buyer
        .into_iter()
        .map(|(buyer, quantity)| Ok(GridPurchase { buyer, quantity, cost: trade_revenue(quantity, retail_price)? }))
        .collect()
}

fn validate_orders(sells: &[Order], buys: &[Order]) -> Result<(), MarketError> {
    for o in sells.iter().chain(buys) {
        if o.quantity.is_zero() {
            return Err(MarketError::EmptyOrder(o.owner));
        }
    }
    if let Some(o) = sells.iter().find(|o| o.tier.is_none()) {
        return Err(MarketError::MissingTier(o.owner));
    }
    if let Some(o) = sells.iter().find(|s| buys.iter().any(|b| b.owner == s.owner)) {
        return Err(MarketError::SelfTrade(o.owner));
    }
    Ok(())
}

/// Builds trades and residual orders from per-order allocations.
///
/// `sell_fill[i]` / `buy_fill[j]` are the quantities taken from `sells[i]` /
/// `buys[j]`; both must sum to the same volume. Sellers and buyers are paired
/// in the given `sell_order` / `buy_order` sequence.
fn settle_allocations(
    sells: &[Order],
    buys: &[Order],
    sell_order: &[usize],
    buy_order: &[usize],
    sell_fill: &[u64],
    buy_fill: &[u64],
    price: PriceMc,
) -> MarketOutcome {
    debug_assert_eq!(sell_fill.iter().sum::<u64>(), buy_fill.iter().sum::<u64>());
    let mut trades = Vec::new();
    let mut sell_left: Vec<u64> = sell_fill.to_vec();
    let mut buy_left: Vec<u64> = buy_fill.to_vec();
    let mut bi = 0;
    for &si in sell_order {
        while sell_left[si] > 0 {
            while bi < buy_order.len() && buy_left[buy_order[bi]] == 0 {
                bi += 1;
            }
            let Some(&bj) = buy_order.get(bi) else { break };
            let q = sell_left[si].min(buy_left[bj]);
            sell_left[si] -= q;
            buy_left[bj] -= q;
            trades.push(Trade {
                seller: sells[si].owner,
                buyer: buys[bj].owner,
                tier: sells[si].sell_tier(),
                quantity: EnergyWh(q),
                price,
            });
        }
    }
    let unmatched_sells = sells
        .iter()
        .zip(sell_fill)
        .filter(|(o, &f)| o.quantity.0 > f)
        .map(|(o, &f)| o.with_quantity(EnergyWh(o.quantity.0 - f)))
        .collect();
    let unmatched_buys = buys
        .iter()
        .zip(buy_fill)
        .filter(|(o, &f)| o.quantity.0 > f)
        .map(|(o, &f)| o.with_quantity(EnergyWh(o.quantity.0 - f)))
        .collect();
    MarketOutcome { trades, clearing_price: Some(price), unmatched_sells, unmatched_buys, rebid_rounds_used: 0 }
}

/// Fills `volume` from the orders at `indices`, in that order.
fn fill_in_sequence(orders: &[Order], indices: &[usize], volume: u64) -> Vec<u64> {
    let mut fill = vec![0u64; orders.len()];
    let mut left = volume;
    for &i in indices {
        let q = orders[i].quantity.0.min(left);
        fill[i] = q;
        left -= q;
    }
    debug_assert_eq!(left, 0);
    fill
}
