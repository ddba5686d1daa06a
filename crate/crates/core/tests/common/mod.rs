#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use retailer_p2p::domain::{EnergyWh, Fraction, MoneyMc, PriceMc, PriceRange, ProsumerId, RetailerId};
use retailer_p2p::fpp::SpotQuote;
use retailer_p2p::local_market::{ClearingMechanism, OrderPricing, RebidParams};
use retailer_p2p::multi_retailer::{NegotiationParams, RetailerOffer};
use retailer_p2p::scenario::{LoadPoint, ProsumerSpec, ScenarioConfig, SlotInput};
use retailer_p2p::settlement::OwnershipMode;

pub fn fraction(rng: &mut ChaCha8Rng, denom: u64) -> Fraction {
    Fraction::new(rng.gen_range(0..=denom), denom)
}

pub fn range(rng: &mut ChaCha8Rng, lo: u64, hi: u64) -> PriceRange {
    let a = rng.gen_range(lo..=hi);
    let b = rng.gen_range(lo..=hi);
    PriceRange::new(PriceMc(a.min(b)), PriceMc(a.max(b)))
}

/// A valid scenario with random prosumers, prices and load. `max_retailers`
/// of 1 keeps a single retailer.
pub fn random_scenario(rng: &mut ChaCha8Rng, max_retailers: u32) -> ScenarioConfig {
    let n = rng.gen_range(1..=6u32);
    let prosumers = (1..=n)
        .map(|i| {
            let cap = rng.gen_range(0..=4u64) * 1000;
            ProsumerSpec {
                id: ProsumerId(i),
                battery_capacity: EnergyWh(cap),
                initial_battery: EnergyWh(rng.gen_range(0..=cap)),
                sell_range: range(rng, 1000, 8000),
                buy_range: range(rng, 4000, 12000),
            }
        })
        .collect();
    let retail = PriceMc(rng.gen_range(5000..=9000));
    let mut c = ScenarioConfig::new("random", prosumers, retail);
    c.retailers = (1..=rng.gen_range(1..=max_retailers))
        .map(|r| RetailerOffer {
            retailer: RetailerId(r),
            service_charge: MoneyMc(rng.gen_range(0..=200)),
            profit_share: fraction(rng, 10),
            retail_price: PriceMc(rng.gen_range(5000..=9000)),
        })
        .collect();
    c.ownership =
        if rng.gen_bool(0.5) { OwnershipMode::ThirdPartyPlatform } else { OwnershipMode::RetailerOwnedPlatform };
    c.mechanism = if rng.gen_bool(0.5) { ClearingMechanism::DoubleAuction } else { ClearingMechanism::MidMarketRate };
    c.order_pricing = if rng.gen_bool(0.5) { OrderPricing::Aggressive } else { OrderPricing::Conservative };
    c.feed_in = PriceMc(rng.gen_range(0..=retail.0));
    c.bid_fraction = fraction(rng, 4);
    c.fpp_battery_only = rng.gen_bool(0.25);
    c.subscription.monthly_fee = MoneyMc(rng.gen_range(0..=100_000));
    c.subscription.intervals_per_month = rng.gen_range(1..=100);
    c.rebid = RebidParams { step: fraction(rng, 4), max_rounds: rng.gen_range(0..=4) };
    c.negotiation = NegotiationParams {
        share_step: Fraction::new(rng.gen_range(0..=2), 20),
        charge_step: MoneyMc(rng.gen_range(0..=50)),
        share_ceiling: fraction(rng, 10),
        max_rounds: rng.gen_range(1..=6),
    };
    let intervals = rng.gen_range(1..=5u32);
    c.slots = (1..=intervals)
        .map(|t| {
            let load: BTreeMap<ProsumerId, LoadPoint> = (1..=n)
                .map(|i| {
                    let point = LoadPoint {
                        generation: EnergyWh(rng.gen_range(0..=6000)),
                        demand: EnergyWh(rng.gen_range(0..=6000)),
                    };
                    (ProsumerId(i), point)
                })
                .collect();
            let quote = SpotQuote {
                interval: t,
                forecast: PriceMc(rng.gen_range(0..=20_000)),
                actual: PriceMc(rng.gen_range(0..=20_000)),
            };
            SlotInput { interval: t, load, quote }
        })
        .collect();
    c.validate().expect("generated scenario is valid");
    c
}
