use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{clear, outcome_adequacy, ClearingMechanism, MarketError, MarketOutcome, MarketPrices, Order};
use crate::domain::{Fraction, PriceMc, PriceRange, ProsumerId, ProsumerState, SupplyTier};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RebidParams {
    /// Fraction of the preferred range moved per round.
    pub step: Fraction,
    pub max_rounds: u32,
}

impl Default for RebidParams {
    fn default() -> Self {
        RebidParams { step: Fraction::new(1, 4), max_rounds: 3 }
    }
}

/// Clears, and while supply at the clearing price cannot cover demand, moves
/// every unmatched order one step toward the generous end of its owner's range
/// and clears again from scratch. Stops at adequacy, after `max_rounds`
/// adjustments, or once no order can move any further.
pub fn rebid_loop(
    sells: &[Order],
    buys: &[Order],
    states: &[ProsumerState],
    mechanism: ClearingMechanism,
    prices: MarketPrices,
    params: RebidParams,
) -> Result<MarketOutcome, MarketError> {
    let ranges: BTreeMap<ProsumerId, (PriceRange, PriceRange)> =
        states.iter().map(|s| (s.id, (s.sell_range, s.buy_range))).collect();
    let mut sells = sells.to_vec();
    let mut buys = buys.to_vec();
    let mut rounds = 0;
    loop {
        let mut outcome = clear(mechanism, &sells, &buys, prices)?;
        outcome.rebid_rounds_used = rounds;
        if rounds >= params.max_rounds || outcome_adequacy(&outcome, &sells, &buys).adequate {
            return Ok(outcome);
        }

        let open_sells: BTreeSet<(ProsumerId, Option<SupplyTier>)> =
            outcome.unmatched_sells.iter().map(|o| (o.owner, o.tier)).collect();
        let open_buys: BTreeSet<ProsumerId> = outcome.unmatched_buys.iter().map(|o| o.owner).collect();
        let mut moved = false;
        for o in sells.iter_mut().filter(|o| open_sells.contains(&(o.owner, o.tier))) {
            if let Some((range, _)) = ranges.get(&o.owner) {
                let next = PriceMc(o.limit_price.0.saturating_sub(step_size(range, params.step)).max(range.min.0));
                moved |= next != o.limit_price;
                o.limit_price = next;
            }
        }
        for o in buys.iter_mut().filter(|o| open_buys.contains(&o.owner)) {
            if let Some((_, range)) = ranges.get(&o.owner) {
                let next = PriceMc((o.limit_price.0 + step_size(range, params.step)).min(range.max.0));
                moved |= next != o.limit_price;
                o.limit_price = next;
            }
        }
        if !moved {
            return Ok(outcome);
        }
        rounds += 1;
    }
}

fn step_size(range: &PriceRange, step: Fraction) -> u64 {
    let width = range.width();
    if width == 0 {
        return 0;
    }
    step.round_u64(width).max(1)
}
