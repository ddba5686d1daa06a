use super::{settle_allocations, validate_orders, MarketError, MarketOutcome, Order};
use crate::domain::{apportion, PriceMc, SupplyTier};

/// Mean of the retail price and the feed-in tariff, half-even.
pub fn mid_market_price(retail_price: PriceMc, feed_in: PriceMc) -> Result<PriceMc, MarketError> {
    if feed_in > retail_price {
        return Err(MarketError::FeedInAboveRetail { feed_in, retail: retail_price });
    }
    Ok(retail_price.midpoint(feed_in))
}

/// Clears at the mid-market rate.
///
/// Only asks at or below the rate and bids at or above it take part. The
/// matched volume is `min(supply, demand)`. Buyers are served pro-rata; on the
/// sell side solar surplus is used up before battery charge, each tier
/// pro-rata within itself.
pub fn clear_mid_market(
    sells: &[Order],
    buys: &[Order],
    retail_price: PriceMc,
    feed_in: PriceMc,
) -> Result<MarketOutcome, MarketError> {
    let price = mid_market_price(retail_price, feed_in)?;
    validate_orders(sells, buys)?;

    let by_owner = |orders: &[Order], keep: &dyn Fn(&Order) -> bool| -> Vec<usize> {
        let mut idx: Vec<usize> = (0..orders.len()).filter(|&k| keep(&orders[k])).collect();
        idx.sort_by(|&a, &b| orders[a].owner.cmp(&orders[b].owner));
        idx
    };
    let solar = by_owner(sells, &|o| o.limit_price <= price && o.sell_tier() == SupplyTier::SolarSurplus);
    let battery = by_owner(sells, &|o| o.limit_price <= price && o.sell_tier() == SupplyTier::BatteryCharge);
    let eligible_buys = by_owner(buys, &|o| o.limit_price >= price);

    let total = |orders: &[Order], idx: &[usize]| -> u64 { idx.iter().map(|&k| orders[k].quantity.0).sum() };
    let solar_supply = total(sells, &solar);
    let battery_supply = total(sells, &battery);
    let demand = total(buys, &eligible_buys);
    let volume = (solar_supply + battery_supply).min(demand);
    if volume == 0 {
        return Ok(MarketOutcome::no_trade(sells, buys, Some(price)));
    }

    let mut sell_fill = vec![0u64; sells.len()];
    let from_solar = volume.min(solar_supply);
    pro_rata_into(&mut sell_fill, sells, &solar, from_solar);
    pro_rata_into(&mut sell_fill, sells, &battery, volume - from_solar);
    let mut buy_fill = vec![0u64; buys.len()];
    pro_rata_into(&mut buy_fill, buys, &eligible_buys, volume);

    let sell_seq: Vec<usize> = solar.iter().chain(&battery).copied().collect();
    Ok(settle_allocations(sells, buys, &sell_seq, &eligible_buys, &sell_fill, &buy_fill, price))
}

fn pro_rata_into(fill: &mut [u64], orders: &[Order], idx: &[usize], volume: u64) {
    let weights: Vec<u128> = idx.iter().map(|&k| orders[k].quantity.0 as u128).collect();
    for (&k, share) in idx.iter().zip(apportion(volume as u128, &weights)) {
        fill[k] = share as u64;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{EnergyWh, ProsumerId};

    fn ask(id: u32, tier: SupplyTier, q: u64, p: u64) -> Order {
        Order::sell(ProsumerId(id), tier, EnergyWh(q), PriceMc(p))
    }

    fn bid(id: u32, q: u64, p: u64) -> Order {
        Order::buy(ProsumerId(id), EnergyWh(q), PriceMc(p))
    }

    #[test]
    fn price_is_exact_mean() {
        assert_eq!(mid_market_price(PriceMc(7000), PriceMc(3000)).unwrap(), PriceMc(5000));
        // (7001 + 3000) / 2 = 5000.5 -> 5000
        assert_eq!(mid_market_price(PriceMc(7001), PriceMc(3000)).unwrap(), PriceMc(5000));
        assert_eq!(mid_market_price(PriceMc(7000), PriceMc(7000)).unwrap(), PriceMc(7000));
    }

    #[test]
    fn feed_in_above_retail_rejected() {
        let err = clear_mid_market(&[], &[], PriceMc(7000), PriceMc(8000)).unwrap_err();
        assert!(matches!(err, MarketError::FeedInAboveRetail { .. }));
    }

    #[test]
    fn no_supply_leaves_buys_unmatched() {
        let buys = vec![bid(1, 2000, 9000)];
        let out = clear_mid_market(&[], &buys, PriceMc(7000), PriceMc(3000)).unwrap();
        assert!(out.trades.is_empty());
        assert_eq!(out.unmatched_buys, buys);
    }

    #[test]
    fn excess_supply_split_pro_rata() {
        let sells = vec![ask(1, SupplyTier::SolarSurplus, 5000, 1000), ask(2, SupplyTier::SolarSurplus, 5000, 1000)];
        let buys = vec![bid(3, 4000, 9000)];
        let out = clear_mid_market(&sells, &buys, PriceMc(7000), PriceMc(3000)).unwrap();
        assert_eq!(out.traded_volume(), EnergyWh(4000));
        assert_eq!(out.sold_by(ProsumerId(1)), EnergyWh(2000));
        assert_eq!(out.sold_by(ProsumerId(2)), EnergyWh(2000));
        assert!(out.trades.iter().all(|t| t.price == PriceMc(5000)));
        let unmatched: u64 = out.unmatched_sells.iter().map(|o| o.quantity.0).sum();
        assert_eq!(unmatched, 6000);
    }

    #[test]
    fn solar_tier_before_battery() {
        let sells = vec![ask(1, SupplyTier::BatteryCharge, 3000, 1000), ask(2, SupplyTier::SolarSurplus, 2000, 1000)];
        let buys = vec![bid(3, 3000, 9000)];
        let out = clear_mid_market(&sells, &buys, PriceMc(7000), PriceMc(3000)).unwrap();
        assert_eq!(out.sold_by(ProsumerId(2)), EnergyWh(2000));
        assert_eq!(out.sold_by(ProsumerId(1)), EnergyWh(1000));
    }

    #[test]
    fn ineligible_limits_sit_out() {
        let sells = vec![ask(1, SupplyTier::SolarSurplus, 2000, 6000)];
        let buys = vec![bid(2, 2000, 9000)];
        let out = clear_mid_market(&sells, &buys, PriceMc(7000), PriceMc(3000)).unwrap();
        assert!(out.trades.is_empty());
        assert_eq!(out.clearing_price, Some(PriceMc(5000)));
    }

    #[test]
    fn scarce_supply_rations_buyers() {
        let sells = vec![ask(1, SupplyTier::SolarSurplus, 1000, 1000)];
        let buys = vec![bid(2, 1000, 9000), bid(3, 1000, 9000), bid(4, 1000, 9000)];
        let out = clear_mid_market(&sells, &buys, PriceMc(7000), PriceMc(3000)).unwrap();
        // 1000 / 3 -> 334, 333, 333; the extra unit goes to the lowest id
        assert_eq!(out.bought_by(ProsumerId(2)), EnergyWh(334));
        assert_eq!(out.bought_by(ProsumerId(3)), EnergyWh(333));
        assert_eq!(out.bought_by(ProsumerId(4)), EnergyWh(333));
    }
}
