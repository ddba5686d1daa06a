//! Federated power plant: the retailer pools what prosumers could not sell
//! locally and bids it, quantity only, into either the spot market or the
//! retail market for the interval.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::{
    apportion, trade_revenue, DomainError, EnergyWh, Fraction, MarketChoice, MoneyMc, PriceMc, ProsumerId,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpotQuote {
    pub interval: u32,
    pub forecast: PriceMc,
    pub actual: PriceMc,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FppBid {
    pub market: MarketChoice,
    pub quantity: EnergyWh,
    pub contributions: BTreeMap<ProsumerId, EnergyWh>,
    pub bid_fraction: Fraction,
}

/// Surplus a prosumer still holds once local trading is done.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnsoldSurplus {
    pub solar: EnergyWh,
    pub battery: EnergyWh,
}

/// Each prosumer's unsold surplus becomes its contribution. With
/// `battery_only`, unsold solar is left out. Zero contributions are omitted.
pub fn form_fpp(unsold: &BTreeMap<ProsumerId, UnsoldSurplus>, battery_only: bool) -> BTreeMap<ProsumerId, EnergyWh> {
    unsold
        .iter()
        .map(|(&id, u)| (id, if battery_only { u.battery } else { u.solar + u.battery }))
        .filter(|(_, e)| !e.is_zero())
        .collect()
}

/// Spot only when the forecast strictly exceeds the retail price.
pub fn select_market(quote: &SpotQuote, retail_price: PriceMc) -> MarketChoice {
    if quote.forecast > retail_price {
        MarketChoice::Spot
    } else {
        MarketChoice::Retail
    }
}

/// Bids `floor(total × fraction)` and spreads it back over contributors with
/// largest-remainder rounding.
pub fn compute_bid(
    contributions: &BTreeMap<ProsumerId, EnergyWh>,
    bid_fraction: Fraction,
    market: MarketChoice,
) -> FppBid {
    let total: EnergyWh = contributions.values().copied().sum();
    let quantity = bid_fraction.min(Fraction::one()).floor_energy(total);
    let weights: Vec<u128> = contributions.values().map(|e| e.0 as u128).collect();
    let shares = apportion(quantity.0 as u128, &weights);
    let scaled =
        contributions.keys().zip(shares).filter(|(_, s)| *s > 0).map(|(&id, s)| (id, EnergyWh(s as u64))).collect();
    FppBid { market, quantity, contributions: scaled, bid_fraction }
}

/// Gross revenue of the bid at the realised price of its market.
pub fn settle_gross(bid: &FppBid, quote: &SpotQuote, retail_price: PriceMc) -> Result<MoneyMc, DomainError> {
    let price = match bid.market {
        MarketChoice::Spot => quote.actual,
        MarketChoice::Retail => retail_price,
    };
    trade_revenue(bid.quantity, price)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unsold(entries: &[(u32, u64, u64)]) -> BTreeMap<ProsumerId, UnsoldSurplus> {
        entries
            .iter()
            .map(|&(id, s, b)| (ProsumerId(id), UnsoldSurplus { solar: EnergyWh(s), battery: EnergyWh(b) }))
            .collect()
    }

    fn quote(forecast: u64, actual: u64) -> SpotQuote {
        SpotQuote { interval: 1, forecast: PriceMc(forecast), actual: PriceMc(actual) }
    }

    #[test]
    fn five_equal_contributors() {
        let c = form_fpp(&unsold(&[(1, 0, 3000), (2, 0, 3000), (3, 0, 3000), (4, 0, 3000), (5, 0, 3000)]), false);
        assert_eq!(c.len(), 5);
        assert_eq!(c.values().copied().sum::<EnergyWh>(), EnergyWh(15000));
        assert!(c.values().all(|&e| e == EnergyWh(3000)));
    }

    #[test]
    fn sold_out_means_empty_plant() {
        assert!(form_fpp(&unsold(&[(1, 0, 0), (2, 0, 0)]), false).is_empty());
    }

    #[test]
    fn unequal_contributions_and_battery_only() {
        let u = unsold(&[(1, 2000, 4000), (2, 2250, 0), (3, 0, 2250), (4, 1000, 1250), (5, 2250, 0)]);
        let c = form_fpp(&u, false);
        assert_eq!(c.values().copied().sum::<EnergyWh>(), EnergyWh(15000));
        assert_eq!(c[&ProsumerId(1)], EnergyWh(6000));
        let c = form_fpp(&u, true);
        assert_eq!(c.len(), 3);
        assert_eq!(c.values().copied().sum::<EnergyWh>(), EnergyWh(7500));
    }

    #[test]
    fn market_selection() {
        assert_eq!(select_market(&quote(800_000, 800_000), PriceMc(7000)), MarketChoice::Spot);
        assert_eq!(select_market(&quote(6000, 800_000), PriceMc(7000)), MarketChoice::Retail);
        assert_eq!(select_market(&quote(7000, 0), PriceMc(7000)), MarketChoice::Retail);
    }

    #[test]
    fn bid_quantities() {
        let c: BTreeMap<_, _> = (1..=5).map(|i| (ProsumerId(i), EnergyWh(3000))).collect();
        let b = compute_bid(&c, Fraction::one(), MarketChoice::Spot);
        assert_eq!(b.quantity, EnergyWh(15000));
        assert_eq!(b.contributions, c);

        let b = compute_bid(&c, Fraction::zero(), MarketChoice::Spot);
        assert_eq!(b.quantity, EnergyWh(0));
        assert!(b.contributions.is_empty());

        let c: BTreeMap<_, _> =
            [(1, 6000), (2, 4500), (3, 4500)].iter().map(|&(i, e)| (ProsumerId(i), EnergyWh(e))).collect();
        let b = compute_bid(&c, Fraction::new(1, 3), MarketChoice::Retail);
        assert_eq!(b.quantity, EnergyWh(5000));
        let split: Vec<u64> = b.contributions.values().map(|e| e.0).collect();
        assert_eq!(split, vec![2000, 1500, 1500]);
    }

    #[test]
    fn gross_settlement() {
        let c: BTreeMap<_, _> = (1..=5).map(|i| (ProsumerId(i), EnergyWh(3000))).collect();
        let spot = compute_bid(&c, Fraction::one(), MarketChoice::Spot);
        assert_eq!(settle_gross(&spot, &quote(800_000, 800_000), PriceMc(7000)).unwrap(), MoneyMc(12_000_000));
        assert_eq!(settle_gross(&spot, &quote(400_000, 800_000), PriceMc(7000)).unwrap(), MoneyMc(12_000_000));
        let retail = compute_bid(&c, Fraction::one(), MarketChoice::Retail);
        assert_eq!(settle_gross(&retail, &quote(6000, 800_000), PriceMc(7000)).unwrap(), MoneyMc(105_000));
        let empty = compute_bid(&BTreeMap::new(), Fraction::one(), MarketChoice::Spot);
        assert_eq!(settle_gross(&empty, &quote(800_000, 800_000), PriceMc(7000)).unwrap(), MoneyMc(0));
    }

    proptest! {
        #[test]
        fn contributions_conserved(
            raw in proptest::collection::vec(0u64..50_000, 0..30),
            num in 0u64..=20, den in 1u64..=20,
        ) {
            let c: BTreeMap<_, _> = raw.iter().enumerate().map(|(i, &e)| (ProsumerId(i as u32), EnergyWh(e))).collect();
            let f = Fraction::new(num.min(den), den);
            let b = compute_bid(&c, f, MarketChoice::Spot);
            prop_assert_eq!(b.contributions.values().copied().sum::<EnergyWh>(), b.quantity);
            let total: u64 = raw.iter().sum();
            prop_assert_eq!(b.quantity.0, total * f.numer() / f.denom());
            for (id, e) in &b.contributions {
                prop_assert!(*e <= c[id]);
            }
        }

        #[test]
        fn selection_monotone_in_forecast(f in 0u64..2_000_000, bump in 0u64..1_000_000, r in 0u64..2_000_000) {
            let lo = select_market(&quote(f, 0), PriceMc(r));
            let hi = select_market(&quote(f + bump, 0), PriceMc(r));
            prop_assert!(!(lo == MarketChoice::Spot && hi == MarketChoice::Retail));
        }
    }
}
