//! Revenue split between the retailer and FPP contributors, the traditional
//! P2P baseline, and subscription accrual.

use std::collections::{BTreeMap, BTreeSet};

use num_integer::Integer;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    apportion, div_round_half_even, trade_revenue, DomainError, EnergyWh, Fraction, MarketChoice, MoneyMc, PriceMc,
    ProsumerId, RetailerId,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SettlementError {
    #[error("gross revenue {0} has no contributors to pay out to")]
    NoContributors(MoneyMc),
    #[error("negative gross revenue {0}")]
    NegativeGross(MoneyMc),
    #[error(transparent)]
    Arithmetic(#[from] DomainError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPolicy {
    pub commission_rate: Fraction,
    pub applies_to: BTreeSet<MarketChoice>,
}

impl Default for SplitPolicy {
    fn default() -> Self {
        SplitPolicy { commission_rate: Fraction::new(1, 2), applies_to: BTreeSet::from([MarketChoice::Spot]) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevenueSplit {
    pub retailer: MoneyMc,
    pub payouts: BTreeMap<ProsumerId, MoneyMc>,
}

/// Takes the retailer's commission (if the market is subject to it) and
/// shares the rest in proportion to contributions. Payouts sum exactly to the
/// pool.
pub fn split_revenue(
    gross: MoneyMc,
    policy: &SplitPolicy,
    market: MarketChoice,
    contributions: &BTreeMap<ProsumerId, EnergyWh>,
) -> Result<RevenueSplit, SettlementError> {
    if gross.0 < 0 {
        return Err(SettlementError::NegativeGross(gross));
    }
    let retailer = if policy.applies_to.contains(&market) {
        policy.commission_rate.min(Fraction::one()).round_money(gross)?
    } else {
        MoneyMc::ZERO
    };
    let pool = gross - retailer;
    let weights: Vec<u128> = contributions.values().map(|e| e.0 as u128).collect();
    if pool.0 > 0 && weights.iter().all(|&w| w == 0) {
        return Err(SettlementError::NoContributors(gross));
    }
    let shares = apportion(pool.0 as u128, &weights);
    let payouts = contributions.keys().zip(shares).map(|(&id, s)| (id, MoneyMc(s as i64))).collect();
    Ok(RevenueSplit { retailer, payouts })
}

/// What the prosumer would have earned selling the same energy to the
/// retailer at the retail price.
pub fn baseline_traditional(contribution: EnergyWh, retail_price: PriceMc) -> Result<MoneyMc, DomainError> {
    trade_revenue(contribution, retail_price)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Improvement {
    /// Exact ratio `numer / denom`, reduced.
    Factor {
        numer: i64,
        denom: i64,
    },
    Same,
    Undefined,
}

impl Improvement {
    /// Ratio rounded half-even to a whole number.
    pub fn rounded(&self) -> Option<i64> {
        match *self {
            Improvement::Factor { numer, denom } => Some(div_round_half_even(numer as i128, denom as i128) as i64),
            Improvement::Same => Some(1),
            Improvement::Undefined => None,
        }
    }

    /// Table rendering: the rounded factor, `same`, or `n/a`.
    pub fn label(&self) -> String {
        match self {
            Improvement::Factor { .. } => self.rounded().unwrap_or_default().to_string(),
            Improvement::Same => "same".to_string(),
            Improvement::Undefined => "n/a".to_string(),
        }
    }
}

pub fn improvement_factor(proposed: MoneyMc, baseline: MoneyMc) -> Improvement {
    if baseline.0 <= 0 {
        return Improvement::Undefined;
    }
    if proposed == baseline {
        return Improvement::Same;
    }
    let g = proposed.0.gcd(&baseline.0);
    Improvement::Factor { numer: proposed.0 / g, denom: baseline.0 / g }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OwnershipMode {
    #[default]
    ThirdPartyPlatform,
    RetailerOwnedPlatform,
}

/// Per-interval subscription income; zero unless the retailer owns the
/// platform.
pub fn accrue_subscriptions(
    prosumer_count: usize,
    monthly_fee: MoneyMc,
    intervals_per_month: u32,
    mode: OwnershipMode,
) -> Result<MoneyMc, DomainError> {
    if mode == OwnershipMode::ThirdPartyPlatform || intervals_per_month == 0 {
        return Ok(MoneyMc::ZERO);
    }
    let total =
        (prosumer_count as i128).checked_mul(monthly_fee.0 as i128).ok_or(DomainError::Overflow("subscription"))?;
    let v = div_round_half_even(total, intervals_per_month as i128);
    i64::try_from(v).map(MoneyMc).map_err(|_| DomainError::Overflow("subscription"))
}

/// Money flows of one FPP settlement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SettlementReport {
    pub interval: u32,
    pub retailer: RetailerId,
    pub market: MarketChoice,
    pub quantity: EnergyWh,
    pub gross: MoneyMc,
    pub retailer_commission: MoneyMc,
    pub prosumer_payouts: BTreeMap<ProsumerId, MoneyMc>,
    pub subscription_income: MoneyMc,
    pub service_charges: MoneyMc,
    /// Unsold surplus pooled into the plant, before the bid fraction.
    pub offered: BTreeMap<ProsumerId, EnergyWh>,
    /// Each contributor's share of the bid quantity.
    pub exported: BTreeMap<ProsumerId, EnergyWh>,
    pub baseline_payouts: BTreeMap<ProsumerId, MoneyMc>,
    pub improvement_factor: Improvement,
}

impl SettlementReport {
    pub fn total_payouts(&self) -> MoneyMc {
        self.prosumer_payouts.values().copied().sum()
    }

    pub fn total_baseline(&self) -> MoneyMc {
        self.baseline_payouts.values().copied().sum()
    }

    pub fn is_balanced(&self) -> bool {
        self.retailer_commission + self.total_payouts() == self.gross
            && self.prosumer_payouts.values().all(|p| p.0 >= 0)
    }
}
