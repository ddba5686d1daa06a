use super::{fill_in_sequence, settle_allocations, validate_orders, MarketError, MarketOutcome, Order};
use crate::domain::PriceMc;

/// Uniform-price double auction.
///
/// Asks are walked in ascending price and bids in descending price until the
/// next bid falls below the next ask. The last matched ask and bid form the
/// marginal pair and the clearing price is their midpoint. The breakeven
/// volume is then filled from asks priced at or below the clearing price with
/// solar surplus ahead of battery charge, and from bids at or above it in
/// descending price order.
pub fn clear_double_auction(sells: &[Order], buys: &[Order]) -> Result<MarketOutcome, MarketError> {
    validate_orders(sells, buys)?;
    if sells.is_empty() || buys.is_empty() {
        return Ok(MarketOutcome::no_trade(sells, buys, None));
    }

    let mut asks: Vec<usize> = (0..sells.len()).collect();
    asks.sort_by(|&a, &b| {
        let (x, y) = (&sells[a], &sells[b]);
        x.limit_price.cmp(&y.limit_price).then(x.sell_tier().cmp(&y.sell_tier())).then(x.owner.cmp(&y.owner))
    });
    let mut bids: Vec<usize> = (0..buys.len()).collect();
    bids.sort_by(|&a, &b| {
        let (x, y) = (&buys[a], &buys[b]);
        y.limit_price.cmp(&x.limit_price).then(x.owner.cmp(&y.owner))
    });

    let (mut i, mut j) = (0, 0);
    let mut ask_left = sells[asks[0]].quantity.0;
    let mut bid_left = buys[bids[0]].quantity.0;
    let mut volume = 0u64;
    let mut marginal: Option<(PriceMc, PriceMc)> = None;
    while i < asks.len() && j < bids.len() {
        let ask = &sells[asks[i]];
        let bid = &buys[bids[j]];
        if bid.limit_price < ask.limit_price {
            break;
        }
        let q = ask_left.min(bid_left);
        volume += q;
        ask_left -= q;
        bid_left -= q;
        marginal = Some((ask.limit_price, bid.limit_price));
        if ask_left == 0 {
            i += 1;
            if let Some(&next) = asks.get(i) {
                ask_left = sells[next].quantity.0;
            }
        }
        if bid_left == 0 {
            j += 1;
            if let Some(&next) = bids.get(j) {
                bid_left = buys[next].quantity.0;
            }
        }
    }

    let Some((marginal_ask, marginal_bid)) = marginal else {
        return Ok(MarketOutcome::no_trade(sells, buys, None));
    };
    let price = marginal_ask.midpoint(marginal_bid);

    let mut sell_seq: Vec<usize> = (0..sells.len()).filter(|&k| sells[k].limit_price <= price).collect();
    sell_seq.sort_by(|&a, &b| {
        let (x, y) = (&sells[a], &sells[b]);
        x.sell_tier().cmp(&y.sell_tier()).then(x.limit_price.cmp(&y.limit_price)).then(x.owner.cmp(&y.owner))
    });
    let buy_seq: Vec<usize> = bids.iter().copied().filter(|&k| buys[k].limit_price >= price).collect();

    let sell_fill = fill_in_sequence(sells, &sell_seq, volume);
    let buy_fill = fill_in_sequence(buys, &buy_seq, volume);
    Ok(settle_allocations(sells, buys, &sell_seq, &buy_seq, &sell_fill, &buy_fill, price))
}
