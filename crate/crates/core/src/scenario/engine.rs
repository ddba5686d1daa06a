use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::report::{summarize, SimulationReport};
use super::{ScenarioConfig, ScenarioError, SlotInput};
use crate::domain::{
    apportion, trade_revenue, DomainError, EnergyWh, MarketChoice, MoneyMc, ProsumerId, ProsumerState, RetailerId,
    SupplyTier,
};
use crate::fpp::{compute_bid, form_fpp, select_market, settle_gross, SpotQuote, UnsoldSurplus};
use crate::local_market::{
    buy_residual_from_retailer, collect_orders, rebid_loop, self_consume, GridPurchase, MarketError, MarketOutcome,
    MarketPrices, Residual,
};
use crate::multi_retailer::{negotiate, Assignment, NegotiationError, RetailerOffer};
use crate::settlement::{
    accrue_subscriptions, baseline_traditional, improvement_factor, split_revenue, SettlementError, SettlementReport,
    SplitPolicy,
};

#[derive(Debug, Error)]
pub enum SimulationFault {
    #[error("invalid scenario: {0}")]
    Scenario(#[from] ScenarioError),
    #[error("interval {interval}: {message}")]
    Interval { interval: u32, message: String },
}

fn fault(interval: u32) -> impl Fn(&dyn std::fmt::Display) -> SimulationFault {
    move |e| SimulationFault::Interval { interval, message: e.to_string() }
}

trait AtInterval<T> {
    fn at(self, interval: u32) -> Result<T, SimulationFault>;
}

macro_rules! at_interval {
    ($($err:ty),*) => {$(
        impl<T> AtInterval<T> for Result<T, $err> {
            fn at(self, interval: u32) -> Result<T, SimulationFault> {
                self.map_err(|e| fault(interval)(&e))
            }
        }
    )*};
}

at_interval!(DomainError, MarketError, SettlementError, NegotiationError);

/// Community-wide energy flows for one interval. Peer-to-peer transfers
/// cancel out and do not appear.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnergyBalance {
    pub generation: EnergyWh,
    pub discharge: EnergyWh,
    pub grid_imports: EnergyWh,
    pub demand: EnergyWh,
    pub charge: EnergyWh,
    pub fpp_exports: EnergyWh,
    /// Solar that could be neither sold nor stored and flowed to the grid
    /// unpaid.
    pub spill_exports: EnergyWh,
}

impl EnergyBalance {
    pub fn exports(&self) -> EnergyWh {
        self.fpp_exports + self.spill_exports
    }

    pub fn holds(&self) -> bool {
        self.generation + self.discharge + self.grid_imports == self.demand + self.charge + self.exports()
    }

    fn add(&mut self, other: &EnergyBalance) {
        self.generation += other.generation;
        self.discharge += other.discharge;
        self.grid_imports += other.grid_imports;
        self.demand += other.demand;
        self.charge += other.charge;
        self.fpp_exports += other.fpp_exports;
        self.spill_exports += other.spill_exports;
    }
}

/// One prosumer's flows in one interval.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProsumerInterval {
    pub id: ProsumerId,
    pub retailer: RetailerId,
    pub generation: EnergyWh,
    pub demand: EnergyWh,
    pub battery_start: EnergyWh,
    pub battery_end: EnergyWh,
    pub discharge: EnergyWh,
    pub charge: EnergyWh,
    pub p2p_sold: EnergyWh,
    pub p2p_bought: EnergyWh,
    pub grid_bought: EnergyWh,
    pub fpp_export: EnergyWh,
    pub spill: EnergyWh,
    pub p2p_income: MoneyMc,
    pub p2p_cost: MoneyMc,
    pub grid_cost: MoneyMc,
    pub fpp_payout: MoneyMc,
    pub baseline_payout: MoneyMc,
    pub subscription_fee: MoneyMc,
    pub service_charge: MoneyMc,
    pub ledger_delta: MoneyMc,
    pub ledger: MoneyMc,
}

impl ProsumerInterval {
    /// Energy in equals energy out for this prosumer.
    pub fn balanced(&self) -> bool {
        self.generation + self.discharge + self.p2p_bought + self.grid_bought
            == self.demand + self.charge + self.p2p_sold + self.fpp_export + self.spill
    }

    fn energy(&self) -> EnergyBalance {
        EnergyBalance {
            generation: self.generation,
            discharge: self.discharge,
            grid_imports: self.grid_bought,
            demand: self.demand,
            charge: self.charge,
            fpp_exports: self.fpp_export,
            spill_exports: self.spill,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntervalReport {
    pub interval: u32,
    pub quote: SpotQuote,
    /// Present only when several retailers competed for prosumers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assignment: Option<Assignment>,
    pub offers: Vec<RetailerOffer>,
    pub market: MarketOutcome,
    pub grid_purchases: Vec<GridPurchase>,
    pub settlements: Vec<SettlementReport>,
    pub prosumers: Vec<ProsumerInterval>,
    pub retailer_deltas: BTreeMap<RetailerId, MoneyMc>,
    pub energy: EnergyBalance,
    /// Money paid into the community by the spot and retail markets.
    pub external_income: MoneyMc,
}

impl IntervalReport {
    /// Prosumer and retailer ledger deltas sum to the external income.
    pub fn money_conserved(&self) -> bool {
        let prosumers: MoneyMc = self.prosumers.iter().map(|p| p.ledger_delta).sum();
        let retailers: MoneyMc = self.retailer_deltas.values().copied().sum();
        prosumers + retailers == self.external_income
    }
}

/// Runs the full pipeline for one interval: self-consumption, local clearing
/// with re-bids, residual retail supply, FPP formation and bidding, revenue
/// split, baseline and ledger updates.
pub fn run_interval(
    states: &[ProsumerState],
    slot: &SlotInput,
    config: &ScenarioConfig,
) -> Result<(Vec<ProsumerState>, IntervalReport), SimulationFault> {
    let t = slot.interval;
    let quote = slot.quote;

    let mut positions: Vec<(ProsumerState, Residual)> = Vec::with_capacity(states.len());
    let mut battery_start = BTreeMap::new();
    for s in states {
        let point = slot.load.get(&s.id).copied().ok_or_else(|| SimulationFault::Interval {
            interval: t,
            message: format!("no load for prosumer {}", s.id.0),
        })?;
        let mut s = s.clone();
        s.generation = point.generation;
        s.demand = point.demand;
        battery_start.insert(s.id, s.battery_level);
        positions.push(self_consume(&s));
    }

    // retailer selection
    let (assignment, offers) = if config.retailers.len() > 1 {
        let expected: BTreeMap<ProsumerId, EnergyWh> = positions
            .iter()
            .map(|(s, r)| (s.id, if config.fpp_battery_only { r.battery_surplus } else { r.surplus() }))
            .collect();
        let n = negotiate(&config.retailers, &expected, &quote, &config.negotiation).at(t)?;
        (Some(n.assignment), n.offers)
    } else {
        (None, config.retailers.clone())
    };
    let retailer_of = |id: ProsumerId| -> RetailerId {
        assignment.as_ref().and_then(|a| a.map.get(&id).copied()).unwrap_or(offers[0].retailer)
    };

    // local market
    let (sells, buys) = collect_orders(&positions, config.order_pricing);
    let post_consume: Vec<ProsumerState> = positions.iter().map(|(s, _)| s.clone()).collect();
    let prices = MarketPrices { retail: config.retail_price, feed_in: config.feed_in };
    let outcome = rebid_loop(&sells, &buys, &post_consume, config.mechanism, prices, config.rebid).at(t)?;

    let mut grid_purchases = Vec::new();
    for offer in &offers {
        let unmatched: Vec<_> =
            outcome.unmatched_buys.iter().filter(|o| retailer_of(o.owner) == offer.retailer).cloned().collect();
        grid_purchases.extend(buy_residual_from_retailer(&unmatched, offer.retail_price).at(t)?);
    }
    grid_purchases.sort_by_key(|g| g.buyer);

    let mut p2p_income: BTreeMap<ProsumerId, MoneyMc> = BTreeMap::new();
    let mut p2p_cost: BTreeMap<ProsumerId, MoneyMc> = BTreeMap::new();
    let mut sold: BTreeMap<(ProsumerId, SupplyTier), EnergyWh> = BTreeMap::new();
    for trade in &outcome.trades {
        let value = trade_revenue(trade.quantity, trade.price).at(t)?;
        *p2p_income.entry(trade.seller).or_default() += value;
        *p2p_cost.entry(trade.buyer).or_default() += value;
        *sold.entry((trade.seller, trade.tier)).or_default() += trade.quantity;
    }
    let sold_of = |id, tier| sold.get(&(id, tier)).copied().unwrap_or_default();

    let unsold: BTreeMap<ProsumerId, UnsoldSurplus> = positions
        .iter()
        .map(|(s, r)| {
            let u = UnsoldSurplus {
                solar: r.solar_surplus - sold_of(s.id, SupplyTier::SolarSurplus),
                battery: r.battery_surplus - sold_of(s.id, SupplyTier::BatteryCharge),
            };
            (s.id, u)
        })
        .collect();

    // FPP per retailer
    let mut settlements = Vec::new();
    let mut exported: BTreeMap<ProsumerId, EnergyWh> = BTreeMap::new();
    let mut fpp_payout: BTreeMap<ProsumerId, MoneyMc> = BTreeMap::new();
    let mut baseline: BTreeMap<ProsumerId, MoneyMc> = BTreeMap::new();
    let mut subscription_fee: BTreeMap<ProsumerId, MoneyMc> = BTreeMap::new();
    let mut service_charge: BTreeMap<ProsumerId, MoneyMc> = BTreeMap::new();
    let mut retailer_deltas: BTreeMap<RetailerId, MoneyMc> = BTreeMap::new();
    let mut external_income = MoneyMc::ZERO;
    for offer in &offers {
        let members: BTreeSet<ProsumerId> =
            positions.iter().map(|(s, _)| s.id).filter(|&id| retailer_of(id) == offer.retailer).collect();
        let group_unsold: BTreeMap<ProsumerId, UnsoldSurplus> =
            unsold.iter().filter(|(id, _)| members.contains(id)).map(|(&id, &u)| (id, u)).collect();
        let offered = form_fpp(&group_unsold, config.fpp_battery_only);
        let market = select_market(&quote, offer.retail_price);
        let bid = compute_bid(&offered, config.bid_fraction, market);
        let gross = settle_gross(&bid, &quote, offer.retail_price).at(t)?;
        let policy =
            SplitPolicy { commission_rate: offer.commission_rate(), applies_to: BTreeSet::from([MarketChoice::Spot]) };
        let split = split_revenue(gross, &policy, market, &bid.contributions).at(t)?;

        let mut baseline_payouts = BTreeMap::new();
        for (&id, &e) in &bid.contributions {
            baseline_payouts.insert(id, baseline_traditional(e, offer.retail_price).at(t)?);
        }
        let total_payout: MoneyMc = split.payouts.values().copied().sum();
        let total_baseline: MoneyMc = baseline_payouts.values().copied().sum();

        let subscription_income = accrue_subscriptions(
            members.len(),
            config.subscription.monthly_fee,
            config.subscription.intervals_per_month,
            config.ownership,
        )
        .at(t)?;
        let member_list: Vec<ProsumerId> = members.iter().copied().collect();
        let fees = apportion(subscription_income.0 as u128, &vec![1u128; member_list.len()]);
        for (&id, fee) in member_list.iter().zip(fees) {
            subscription_fee.insert(id, MoneyMc(fee as i64));
            service_charge.insert(id, offer.service_charge);
        }
        let service_total = MoneyMc(offer.service_charge.0 * member_list.len() as i64);

        let grid_sales: MoneyMc = grid_purchases.iter().filter(|g| members.contains(&g.buyer)).map(|g| g.cost).sum();
        *retailer_deltas.entry(offer.retailer).or_default() +=
            split.retailer + grid_sales + subscription_income + service_total;
        external_income += gross;

        exported.extend(bid.contributions.iter().map(|(&id, &e)| (id, e)));
        fpp_payout.extend(split.payouts.iter().map(|(&id, &m)| (id, m)));
        baseline.extend(baseline_payouts.iter().map(|(&id, &m)| (id, m)));

        settlements.push(SettlementReport {
            interval: t,
            retailer: offer.retailer,
            market,
            quantity: bid.quantity,
            gross,
            retailer_commission: split.retailer,
            prosumer_payouts: split.payouts,
            subscription_income,
            service_charges: service_total,
            offered,
            exported: bid.contributions,
            improvement_factor: improvement_factor(total_payout, total_baseline),
            baseline_payouts,
        });
    }

    // battery and ledger updates
    let grid_of: BTreeMap<ProsumerId, &GridPurchase> = grid_purchases.iter().map(|g| (g.buyer, g)).collect();
    let mut next_states = Vec::with_capacity(positions.len());
    let mut rows = Vec::with_capacity(positions.len());
    let mut energy = EnergyBalance::default();
    for (state, residual) in &positions {
        let id = state.id;
        let u = unsold[&id];
        let export = exported.get(&id).copied().unwrap_or_default();
        let from_solar = if config.fpp_battery_only { EnergyWh::ZERO } else { export.min(u.solar) };
        let from_battery = export - from_solar;
        let sold_battery = sold_of(id, SupplyTier::BatteryCharge);
        let solar_left = u.solar - from_solar;
        let mut level = state.battery_level - sold_battery - from_battery;
        let charge = EnergyWh(solar_left.0.min(state.battery_capacity.0 - level.0));
        level += charge;
        let spill = solar_left - charge;

        let grid = grid_of.get(&id);
        let money = |m: &BTreeMap<ProsumerId, MoneyMc>| m.get(&id).copied().unwrap_or_default();
        let grid_cost = grid.map(|g| g.cost).unwrap_or_default();
        let ledger_delta = money(&p2p_income) - money(&p2p_cost) - grid_cost + money(&fpp_payout)
            - money(&subscription_fee)
            - money(&service_charge);
        let ledger = state.ledger.checked_add(ledger_delta).at(t)?;

        let row = ProsumerInterval {
            id,
            retailer: retailer_of(id),
            generation: state.generation,
            demand: state.demand,
            battery_start: battery_start[&id],
            battery_end: level,
            discharge: residual.self_discharge + sold_battery + from_battery,
            charge,
            p2p_sold: outcome.sold_by(id),
            p2p_bought: outcome.bought_by(id),
            grid_bought: grid.map(|g| g.quantity).unwrap_or_default(),
            fpp_export: export,
            spill,
            p2p_income: money(&p2p_income),
            p2p_cost: money(&p2p_cost),
            grid_cost,
            fpp_payout: money(&fpp_payout),
            baseline_payout: money(&baseline),
            subscription_fee: money(&subscription_fee),
            service_charge: money(&service_charge),
            ledger_delta,
            ledger,
        };
        energy.add(&row.energy());
        rows.push(row);

        let mut next = state.clone();
        next.battery_level = level;
        next.ledger = ledger;
        next_states.push(next);
    }

    let report = IntervalReport {
        interval: t,
        quote,
        assignment,
        offers,
        market: outcome,
        grid_purchases,
        settlements,
        prosumers: rows,
        retailer_deltas,
        energy,
        external_income,
    };
    Ok((next_states, report))
}

/// Folds [`run_interval`] over every slot of the scenario.
pub fn run_simulation(config: &ScenarioConfig) -> Result<SimulationReport, SimulationFault> {
    config.validate()?;
    let mut states = config.initial_states();
    let mut intervals = Vec::with_capacity(config.slots.len());
    let mut retailer_ledgers: BTreeMap<RetailerId, MoneyMc> =
        config.retailers.iter().map(|r| (r.retailer, MoneyMc::ZERO)).collect();
    let mut baseline_ledgers: BTreeMap<ProsumerId, MoneyMc> = states.iter().map(|s| (s.id, MoneyMc::ZERO)).collect();
    let mut energy = EnergyBalance::default();
    for slot in &config.slots {
        let (next, report) = run_interval(&states, slot, config)?;
        for (rid, delta) in &report.retailer_deltas {
            let entry = retailer_ledgers.entry(*rid).or_default();
            *entry = entry.checked_add(*delta).at(slot.interval)?;
        }
        for row in &report.prosumers {
            let entry = baseline_ledgers.entry(row.id).or_default();
            *entry = entry.checked_add(row.baseline_payout).at(slot.interval)?;
        }
        energy.add(&report.energy);
        states = next;
        intervals.push(report);
    }
    let prosumer_ledgers = states.iter().map(|s| (s.id, s.ledger)).collect();
    let summary = summarize(config, &intervals);
    Ok(SimulationReport {
        scenario: config.name.clone(),
        intervals,
        prosumer_ledgers,
        retailer_ledgers,
        baseline_ledgers,
        cumulative_energy: energy,
        final_battery: states.iter().map(|s| (s.id, s.battery_level)).collect(),
        summary,
    })
}
