//! Several retailers competing for prosumers.
//!
//! Each retailer posts a service charge and the share of FPP profit it passes
//! on. Prosumers pick the offer with the best expected net revenue under the
//! spot forecast; retailers left without customers sweeten their offer and the
//! round repeats until selections settle or the round budget runs out.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{trade_revenue, DomainError, EnergyWh, Fraction, MoneyMc, PriceMc, ProsumerId, RetailerId};
use crate::fpp::SpotQuote;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NegotiationError {
    #[error("no retailer offers to choose from")]
    NoOffers,
    #[error(transparent)]
    Arithmetic(#[from] DomainError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetailerOffer {
    pub retailer: RetailerId,
    /// Charged to each assigned prosumer per interval.
    pub service_charge: MoneyMc,
    /// Fraction of spot gross passed on to prosumers.
    pub profit_share: Fraction,
    pub retail_price: PriceMc,
}

impl RetailerOffer {
    pub fn commission_rate(&self) -> Fraction {
        self.profit_share.complement()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub map: BTreeMap<ProsumerId, RetailerId>,
    pub rounds_used: u32,
}

impl Assignment {
    pub fn members(&self, retailer: RetailerId) -> impl Iterator<Item = ProsumerId> + '_ {
        self.map.iter().filter(move |(_, &r)| r == retailer).map(|(&p, _)| p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NegotiationParams {
    pub share_step: Fraction,
    pub charge_step: MoneyMc,
    pub share_ceiling: Fraction,
    pub max_rounds: u32,
}

impl Default for NegotiationParams {
    fn default() -> Self {
        NegotiationParams {
            share_step: Fraction::new(1, 20),
            charge_step: MoneyMc::ZERO,
            share_ceiling: Fraction::new(9, 10),
            max_rounds: 10,
        }
    }
}

/// Expected net revenue of `offer` for a prosumer contributing `contribution`.
///
/// When the forecast beats the retailer's price the prosumer expects its
/// share of spot revenue at the forecast; otherwise it expects the full
/// retail-price revenue. The service charge is always deducted.
pub fn evaluate_offer(
    contribution: EnergyWh,
    offer: &RetailerOffer,
    quote: &SpotQuote,
) -> Result<MoneyMc, DomainError> {
    let net = if quote.forecast > offer.retail_price {
        let gross = trade_revenue(contribution, quote.forecast)?;
        offer.profit_share.min(Fraction::one()).round_money(gross)?
    } else {
        trade_revenue(contribution, offer.retail_price)?
    };
    Ok(net - offer.service_charge)
}

/// Best offer for this prosumer; ties go to the lowest retailer id.
pub fn select_retailer(
    contribution: EnergyWh,
    offers: &[RetailerOffer],
    quote: &SpotQuote,
) -> Result<RetailerId, NegotiationError> {
    let mut best: Option<(MoneyMc, RetailerId)> = None;
    for offer in offers {
        let value = evaluate_offer(contribution, offer, quote)?;
        let better = match best {
            None => true,
            Some((v, id)) => value > v || (value == v && offer.retailer < id),
        };
        if better {
            best = Some((value, offer.retailer));
        }
    }
    best.map(|(_, id)| id).ok_or(NegotiationError::NoOffers)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Negotiation {
    pub assignment: Assignment,
    /// Offers the final selections were made against.
    pub offers: Vec<RetailerOffer>,
}

/// Iterates offers and selections. `prosumers` maps each participant to the
/// surplus it expects to contribute this interval.
pub fn negotiate(
    offers: &[RetailerOffer],
    prosumers: &BTreeMap<ProsumerId, EnergyWh>,
    quote: &SpotQuote,
    params: &NegotiationParams,
) -> Result<Negotiation, NegotiationError> {
    if offers.is_empty() {
        return Err(NegotiationError::NoOffers);
    }
    let mut offers = offers.to_vec();
    offers.sort_by_key(|o| o.retailer);
    let max_rounds = params.max_rounds.max(1);
    let mut previous: Option<BTreeMap<ProsumerId, RetailerId>> = None;
    let mut round = 0;
    loop {
        round += 1;
        let selection = prosumers
            .iter()
            .map(|(&p, &c)| Ok((p, select_retailer(c, &offers, quote)?)))
            .collect::<Result<BTreeMap<_, _>, NegotiationError>>()?;
        let stable = previous.as_ref() == Some(&selection);
        if stable || round >= max_rounds || !sweeten_unpicked(&mut offers, &selection, params) {
            return Ok(Negotiation { assignment: Assignment { map: selection, rounds_used: round }, offers });
        }
        previous = Some(selection);
    }
}

/// Raises the share and cuts the charge of every retailer nobody picked.
/// Returns whether any offer changed.
fn sweeten_unpicked(
    offers: &mut [RetailerOffer],
    selection: &BTreeMap<ProsumerId, RetailerId>,
    params: &NegotiationParams,
) -> bool {
    let mut changed = false;
    for offer in offers.iter_mut() {
        if selection.values().any(|&r| r == offer.retailer) {
            continue;
        }
        let raised = offer.profit_share.saturating_add(params.share_step).min(params.share_ceiling);
        if raised > offer.profit_share {
            offer.profit_share = raised;
            changed = true;
        }
        let cut = MoneyMc((offer.service_charge.0 - params.charge_step.0).max(0));
        if cut < offer.service_charge {
            offer.service_charge = cut;
            changed = true;
        }
    }
    changed
}

#[cfg(test)]
mod tests {
    use super::*;

    fn offer(id: u32, share: Fraction, charge: i64) -> RetailerOffer {
        RetailerOffer {
            retailer: RetailerId(id),
            service_charge: MoneyMc(charge),
            profit_share: share,
            retail_price: PriceMc(7000),
        }
    }

    fn quote(forecast: u64) -> SpotQuote {
        SpotQuote { interval: 1, forecast: PriceMc(forecast), actual: PriceMc(forecast) }
    }

    fn prosumers(n: u32) -> BTreeMap<ProsumerId, EnergyWh> {
        (1..=n).map(|i| (ProsumerId(i), EnergyWh(3000))).collect()
    }

    #[test]
    fn evaluate_examples() {
        let half = offer(1, Fraction::new(1, 2), 0);
        assert_eq!(evaluate_offer(EnergyWh(3000), &half, &quote(800_000)).unwrap(), MoneyMc(1_200_000));
        let full = offer(1, Fraction::one(), 0);
        assert_eq!(evaluate_offer(EnergyWh(3000), &full, &quote(7000)).unwrap(), MoneyMc(21_000));
        let charged = offer(1, Fraction::new(1, 2), 250);
        assert_eq!(evaluate_offer(EnergyWh(0), &charged, &quote(800_000)).unwrap(), MoneyMc(-250));
    }

    #[test]
    fn selection_examples() {
        let offers = vec![offer(1, Fraction::new(1, 2), 0), offer(2, Fraction::new(6, 10), 0)];
        assert_eq!(select_retailer(EnergyWh(3000), &offers, &quote(800_000)).unwrap(), RetailerId(2));
        assert_eq!(select_retailer(EnergyWh(3000), &offers[..1], &quote(800_000)).unwrap(), RetailerId(1));
        let same = vec![offer(2, Fraction::new(1, 2), 0), offer(1, Fraction::new(1, 2), 0)];
        assert_eq!(select_retailer(EnergyWh(3000), &same, &quote(800_000)).unwrap(), RetailerId(1));
        assert_eq!(select_retailer(EnergyWh(3000), &[], &quote(1)), Err(NegotiationError::NoOffers));
    }

    #[test]
    fn single_retailer_converges_immediately() {
        let n = negotiate(
            &[offer(1, Fraction::new(1, 2), 0)],
            &prosumers(4),
            &quote(800_000),
            &NegotiationParams::default(),
        )
        .unwrap();
        assert_eq!(n.assignment.rounds_used, 1);
        assert!(n.assignment.map.values().all(|&r| r == RetailerId(1)));
    }

    #[test]
    fn identical_retailers_oscillate_until_round_limit() {
        let params = NegotiationParams::default();
        let start = vec![offer(1, Fraction::new(1, 2), 0), offer(2, Fraction::new(1, 2), 0)];
        let n = negotiate(&start, &prosumers(3), &quote(800_000), &params).unwrap();

        // replay: the unpicked retailer gains 1/20 each round; ties favour R1
        let mut shares = [Fraction::new(1, 2), Fraction::new(1, 2)];
        let mut picked = 0;
        for round in 1..=params.max_rounds {
            picked = if shares[1] > shares[0] { 1 } else { 0 };
            if round == params.max_rounds {
                break;
            }
            let other = 1 - picked;
            shares[other] = shares[other].saturating_add(Fraction::new(1, 20)).min(Fraction::new(9, 10));
        }
        assert_eq!(n.assignment.rounds_used, params.max_rounds);
        let expected = RetailerId(picked as u32 + 1);
        assert!(n.assignment.map.values().all(|&r| r == expected));
        assert_eq!(n.offers[0].profit_share, shares[0]);
        assert_eq!(n.offers[1].profit_share, shares[1]);
        assert_eq!(expected, RetailerId(2));
    }

    #[test]
    fn capped_loser_stops_negotiation() {
        let params = NegotiationParams::default();
        let start = vec![offer(1, Fraction::one(), 0), offer(2, Fraction::new(9, 10), 0)];
        let n = negotiate(&start, &prosumers(2), &quote(800_000), &params).unwrap();
        assert_eq!(n.assignment.rounds_used, 1);
        assert_eq!(n.offers, start);
    }

    #[test]
    fn service_charges_fall_until_selections_settle() {
        let params = NegotiationParams { charge_step: MoneyMc(150), ..NegotiationParams::default() };
        // retail path: identical revenue, only the charge differs
        let start = vec![offer(1, Fraction::new(1, 2), 100), offer(2, Fraction::new(1, 2), 150)];
        let n = negotiate(&start, &prosumers(2), &quote(1000), &params).unwrap();
        // R1, R2 (after its cut), R1 (after its cut, tie), R1 again
        assert_eq!(n.assignment.rounds_used, 4);
        assert!(n.assignment.map.values().all(|&r| r == RetailerId(1)));
        assert_eq!(n.offers[0].service_charge, MoneyMc(0));
        assert_eq!(n.offers[1].service_charge, MoneyMc(0));
    }
}
