//! Value types shared across the simulator.
//!
//! All quantities are integers: energy in watt-hours, prices in milli-cents
//! per kWh and money in milli-cents. The only rounding point is
//! [`trade_revenue`], which divides by 1000 with half-even rounding.

use std::fmt;
use std::ops::{Add, AddAssign, Neg, Sub, SubAssign};
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::{One, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DomainError {
    #[error("arithmetic overflow while computing {0}")]
    Overflow(&'static str),
    #[error("invalid fraction `{0}`")]
    BadFraction(String),
}

/// Energy in watt-hours.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EnergyWh(pub u64);

impl EnergyWh {
    pub const ZERO: EnergyWh = EnergyWh(0);

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    pub fn saturating_sub(self, other: EnergyWh) -> EnergyWh {
        EnergyWh(self.0.saturating_sub(other.0))
    }

    /// Renders as kWh with exactly three decimals.
    pub fn to_kwh_string(self) -> String {
        format!("{}.{:03}", self.0 / 1000, self.0 % 1000)
    }
}

impl Add for EnergyWh {
    type Output = EnergyWh;
    fn add(self, rhs: EnergyWh) -> EnergyWh {
        EnergyWh(self.0 + rhs.0)
    }
}

impl AddAssign for EnergyWh {
    fn add_assign(&mut self, rhs: EnergyWh) {
        self.0 += rhs.0;
    }
}

impl Sub for EnergyWh {
    type Output = EnergyWh;
    fn sub(self, rhs: EnergyWh) -> EnergyWh {
        EnergyWh(self.0 - rhs.0)
    }
}

impl SubAssign for EnergyWh {
    fn sub_assign(&mut self, rhs: EnergyWh) {
        self.0 -= rhs.0;
    }
}

impl std::iter::Sum for EnergyWh {
    fn sum<I: Iterator<Item = EnergyWh>>(iter: I) -> EnergyWh {
        EnergyWh(iter.map(|e| e.0).sum())
    }
}

impl fmt::Display for EnergyWh {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} Wh", self.0)
    }
}

/// Price in milli-cents per kWh (7 c/kWh = 7000).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PriceMc(pub u64);

impl PriceMc {
    /// Renders as cents per kWh, trimming trailing zeros ("7", "800", "7.5").
    pub fn to_cents_string(self) -> String {
        let whole = self.0 / 1000;
        let frac = self.0 % 1000;
        if frac == 0 {
            whole.to_string()
        } else {
            let s = format!("{whole}.{frac:03}");
            s.trim_end_matches('0').to_string()
        }
    }

    /// Integer midpoint of two prices, half-even.
    pub fn midpoint(self, other: PriceMc) -> PriceMc {
        let sum = self.0 as i128 + other.0 as i128;
        PriceMc(div_round_half_even(sum, 2) as u64)
    }
}

impl fmt::Display for PriceMc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} mc/kWh", self.0)
    }
}

/// Signed amount of money in milli-cents ($1 = 100_000).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MoneyMc(pub i64);

impl MoneyMc {
    pub const ZERO: MoneyMc = MoneyMc(0);

    pub fn checked_add(self, rhs: MoneyMc) -> Result<MoneyMc, DomainError> {
        self.0.checked_add(rhs.0).map(MoneyMc).ok_or(DomainError::Overflow("money sum"))
    }

    /// Renders as dollars with two decimals, rounding half-even to the cent.
    pub fn to_dollars_string(self) -> String {
        let cents = div_round_half_even(self.0 as i128, 1000);
        let sign = if cents < 0 { "-" } else { "" };
        let abs = cents.unsigned_abs();
        format!("{sign}{}.{:02}", abs / 100, abs % 100)
    }
}

impl Add for MoneyMc {
    type Output = MoneyMc;
    fn add(self, rhs: MoneyMc) -> MoneyMc {
        MoneyMc(self.0 + rhs.0)
    }
}

impl AddAssign for MoneyMc {
    fn add_assign(&mut self, rhs: MoneyMc) {
        self.0 += rhs.0;
    }
}

impl Sub for MoneyMc {
    type Output = MoneyMc;
    fn sub(self, rhs: MoneyMc) -> MoneyMc {
        MoneyMc(self.0 - rhs.0)
    }
}

impl SubAssign for MoneyMc {
    fn sub_assign(&mut self, rhs: MoneyMc) {
        self.0 -= rhs.0;
    }
}

impl Neg for MoneyMc {
    type Output = MoneyMc;
    fn neg(self) -> MoneyMc {
        MoneyMc(-self.0)
    }
}

impl std::iter::Sum for MoneyMc {
    fn sum<I: Iterator<Item = MoneyMc>>(iter: I) -> MoneyMc {
        MoneyMc(iter.map(|m| m.0).sum())
    }
}

impl fmt::Display for MoneyMc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "${}", self.to_dollars_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProsumerId(pub u32);

impl fmt::Display for ProsumerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RetailerId(pub u32);

impl fmt::Display for RetailerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "R{}", self.0)
    }
}

/// Inclusive preferred price range for one side of the market.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriceRange {
    pub min: PriceMc,
    pub max: PriceMc,
}

impl PriceRange {
    pub fn new(min: PriceMc, max: PriceMc) -> Self {
        debug_assert!(min <= max);
        PriceRange { min, max }
    }

    pub fn contains(&self, p: PriceMc) -> bool {
        self.min <= p && p <= self.max
    }

    pub fn width(&self) -> u64 {
        self.max.0 - self.min.0
    }
}

/// Per-prosumer state carried between dispatch intervals.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProsumerState {
    pub id: ProsumerId,
    pub generation: EnergyWh,
    pub demand: EnergyWh,
    pub battery_level: EnergyWh,
    pub battery_capacity: EnergyWh,
    pub sell_range: PriceRange,
    pub buy_range: PriceRange,
    pub ledger: MoneyMc,
}

impl ProsumerState {
    pub fn is_valid(&self) -> bool {
        self.battery_level <= self.battery_capacity
            && self.sell_range.min <= self.sell_range.max
            && self.buy_range.min <= self.buy_range.max
    }
}

/// Source of energy offered by a seller. Ordering is allocation priority.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupplyTier {
    SolarSurplus,
    BatteryCharge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarketChoice {
    Spot,
    Retail,
}

impl fmt::Display for MarketChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MarketChoice::Spot => f.write_str("spot"),
            MarketChoice::Retail => f.write_str("retail"),
        }
    }
}

/// Revenue of a single trade: `quantity × price / 1000`, half-even.
pub fn trade_revenue(quantity: EnergyWh, price: PriceMc) -> Result<MoneyMc, DomainError> {
    let product = (quantity.0 as u128)
        .checked_mul(price.0 as u128)
        .and_then(|p| i128::try_from(p).ok())
        .ok_or(DomainError::Overflow("trade revenue"))?;
    let mc = div_round_half_even(product, 1000);
    i64::try_from(mc).map(MoneyMc).map_err(|_| DomainError::Overflow("trade revenue"))
}

/// `num / den` rounded to nearest, ties to even. `den` must be positive.
pub fn div_round_half_even(num: i128, den: i128) -> i128 {
    assert!(den > 0, "denominator must be positive");
    let q = num.div_euclid(den);
    let r = num.rem_euclid(den);
    match (2 * r).cmp(&den) {
        std::cmp::Ordering::Less => q,
        std::cmp::Ordering::Greater => q + 1,
        std::cmp::Ordering::Equal => {
            if q % 2 == 0 {
                q
            } else {
                q + 1
            }
        }
    }
}

/// Largest-remainder apportionment of `total` in proportion to `weights`.
///
/// The result sums exactly to `total`. Leftover units go to the largest
/// fractional remainders; equal remainders favour the lower index, so callers
/// pass weights in ascending id order. All-zero weights yield all zeros and
/// are only accepted with `total == 0`.
pub fn apportion(total: u128, weights: &[u128]) -> Vec<u128> {
    let sum: u128 = weights.iter().sum();
    if sum == 0 {
        assert_eq!(total, 0, "cannot apportion a positive total over zero weight");
        return vec![0; weights.len()];
    }
    let mut shares = Vec::with_capacity(weights.len());
    let mut remainders = Vec::with_capacity(weights.len());
    let mut assigned = 0u128;
    for (i, &w) in weights.iter().enumerate() {
        let num = total * w;
        shares.push(num / sum);
        remainders.push((num % sum, i));
        assigned += num / sum;
    }
    let mut leftover = total - assigned;
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for (rem, i) in remainders {
        if leftover == 0 {
            break;
        }
        if rem == 0 {
            continue;
        }
        shares[i] += 1;
        leftover -= 1;
    }
    debug_assert_eq!(leftover, 0);
    shares
}

/// Exact non-negative rational used for rates, shares and fractions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Fraction(Ratio<u64>);

impl Fraction {
    pub fn new(numer: u64, denom: u64) -> Self {
        Fraction(Ratio::new(numer, denom))
    }

    pub fn zero() -> Self {
        Fraction(Ratio::zero())
    }

    pub fn one() -> Self {
        Fraction(Ratio::one())
    }

    pub fn numer(&self) -> u64 {
        *self.0.numer()
    }

    pub fn denom(&self) -> u64 {
        *self.0.denom()
    }

    pub fn is_unit_interval(&self) -> bool {
        self.numer() <= self.denom()
    }

    /// `1 − self`; saturates at zero.
    pub fn complement(&self) -> Fraction {
        if self.0 >= Ratio::one() {
            Fraction::zero()
        } else {
            Fraction(Ratio::one() - self.0)
        }
    }

    pub fn saturating_add(&self, rhs: Fraction) -> Fraction {
        Fraction(self.0 + rhs.0)
    }

    pub fn min(self, other: Fraction) -> Fraction {
        if self <= other {
            self
        } else {
            other
        }
    }

    /// `floor(e × self)`.
    pub fn floor_energy(&self, e: EnergyWh) -> EnergyWh {
        let v = (e.0 as u128 * self.numer() as u128) / self.denom() as u128;
        EnergyWh(v as u64)
    }

    /// `round(m × self)` half-even.
    pub fn round_money(&self, m: MoneyMc) -> Result<MoneyMc, DomainError> {
        let num = (m.0 as i128).checked_mul(self.numer() as i128).ok_or(DomainError::Overflow("money scaling"))?;
        let v = div_round_half_even(num, self.denom() as i128);
        i64::try_from(v).map(MoneyMc).map_err(|_| DomainError::Overflow("money scaling"))
    }

    /// `round(v × self)` half-even on a plain unsigned quantity.
    pub fn round_u64(&self, v: u64) -> u64 {
        div_round_half_even(v as i128 * self.numer() as i128, self.denom() as i128) as u64
    }
}

impl Default for Fraction {
    fn default() -> Self {
        Fraction::zero()
    }
}

impl fmt::Display for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.denom() == 1 {
            write!(f, "{}", self.numer())
        } else {
            write!(f, "{}/{}", self.numer(), self.denom())
        }
    }
}

impl FromStr for Fraction {
    type Err = DomainError;

    /// Accepts `n`, `n/d` or a plain decimal such as `0.05`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || DomainError::BadFraction(s.to_string());
        let t = s.trim();
        if let Some((n, d)) = t.split_once('/') {
            let n: u64 = n.trim().parse().map_err(|_| bad())?;
            let d: u64 = d.trim().parse().map_err(|_| bad())?;
            if d == 0 {
                return Err(bad());
            }
            return Ok(Fraction::new(n, d));
        }
        if let Some((whole, frac)) = t.split_once('.') {
            if frac.is_empty() || frac.len() > 12 || !frac.bytes().all(|b| b.is_ascii_digit()) {
                return Err(bad());
            }
            let whole: u64 = if whole.is_empty() { 0 } else { whole.parse().map_err(|_| bad())? };
            let denom = 10u64.pow(frac.len() as u32);
            let frac: u64 = frac.parse().map_err(|_| bad())?;
            let numer = whole.checked_mul(denom).and_then(|w| w.checked_add(frac)).ok_or_else(bad)?;
            return Ok(Fraction::new(numer, denom));
        }
        let n: u64 = t.parse().map_err(|_| bad())?;
        Ok(Fraction::new(n, 1))
    }
}

impl Serialize for Fraction {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Fraction {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u64),
            Float(f64),
            Text(String),
        }
        let text = match Raw::deserialize(deserializer)? {
            Raw::Int(n) => return Ok(Fraction::new(n, 1)),
            // shortest round-trip decimal form, then parsed exactly
            Raw::Float(x) => format!("{x}"),
            Raw::Text(s) => s,
        };
        text.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn revenue_examples() {
        assert_eq!(trade_revenue(EnergyWh(15_000), PriceMc(800_000)).unwrap(), MoneyMc(12_000_000));
        assert_eq!(trade_revenue(EnergyWh(0), PriceMc(123_456)).unwrap(), MoneyMc(0));
        assert_eq!(trade_revenue(EnergyWh(3000), PriceMc(7000)).unwrap(), MoneyMc(21_000));
    }

    #[test]
    fn revenue_rounds_half_even() {
        // 1 Wh at 500 mc/kWh = 0.5 mc -> 0; 3 Wh at 500 = 1.5 -> 2
        assert_eq!(trade_revenue(EnergyWh(1), PriceMc(500)).unwrap(), MoneyMc(0));
        assert_eq!(trade_revenue(EnergyWh(3), PriceMc(500)).unwrap(), MoneyMc(2));
        assert_eq!(trade_revenue(EnergyWh(1), PriceMc(1500)).unwrap(), MoneyMc(2));
    }

    #[test]
    fn revenue_overflow_is_reported() {
        let err = trade_revenue(EnergyWh(u64::MAX), PriceMc(u64::MAX)).unwrap_err();
        assert!(matches!(err, DomainError::Overflow(_)));
    }

    #[test]
    fn half_even_negative() {
        assert_eq!(div_round_half_even(-5, 2), -2);
        assert_eq!(div_round_half_even(-7, 2), -4);
        assert_eq!(div_round_half_even(7, 2), 4);
        assert_eq!(div_round_half_even(-1, 3), 0);
    }

    #[test]
    fn rendering() {
        assert_eq!(MoneyMc(12_000_000).to_dollars_string(), "120.00");
        assert_eq!(MoneyMc(21_000).to_dollars_string(), "0.21");
        assert_eq!(MoneyMc(-21_500).to_dollars_string(), "-0.22");
        assert_eq!(EnergyWh(15_000).to_kwh_string(), "15.000");
        assert_eq!(EnergyWh(1_234).to_kwh_string(), "1.234");
        assert_eq!(PriceMc(7000).to_cents_string(), "7");
        assert_eq!(PriceMc(7500).to_cents_string(), "7.5");
        assert_eq!(PriceMc(800_000).to_cents_string(), "800");
    }

    #[test]
    fn fraction_parsing() {
        assert_eq!("1/2".parse::<Fraction>().unwrap(), Fraction::new(1, 2));
        assert_eq!("0.05".parse::<Fraction>().unwrap(), Fraction::new(1, 20));
        assert_eq!("1".parse::<Fraction>().unwrap(), Fraction::one());
        assert_eq!(".9".parse::<Fraction>().unwrap(), Fraction::new(9, 10));
        assert!("1/0".parse::<Fraction>().is_err());
        assert!("abc".parse::<Fraction>().is_err());
        assert!("-0.5".parse::<Fraction>().is_err());
    }

    #[test]
    fn apportion_largest_remainder() {
        assert_eq!(apportion(5000, &[6000, 4500, 4500]), vec![2000, 1500, 1500]);
        assert_eq!(apportion(10, &[1, 1, 1]), vec![4, 3, 3]);
        assert_eq!(apportion(0, &[0, 0]), vec![0, 0]);
        assert_eq!(apportion(2, &[1, 0, 1]), vec![1, 0, 1]);
    }

    proptest! {
        #[test]
        fn revenue_monotone(q in 0u64..10_000_000, p in 0u64..10_000_000, dq in 0u64..1000, dp in 0u64..1000) {
            let base = trade_revenue(EnergyWh(q), PriceMc(p)).unwrap();
            prop_assert!(trade_revenue(EnergyWh(q + dq), PriceMc(p)).unwrap() >= base);
            prop_assert!(trade_revenue(EnergyWh(q), PriceMc(p + dp)).unwrap() >= base);
        }

        #[test]
        fn revenue_additive_when_exact(a in 0u64..100_000, b in 0u64..100_000, p in 0u64..10_000_000) {
            let (qa, qb) = (a * 1000, b * 1000);
            let lhs = trade_revenue(EnergyWh(qa), PriceMc(p)).unwrap() + trade_revenue(EnergyWh(qb), PriceMc(p)).unwrap();
            prop_assert_eq!(lhs, trade_revenue(EnergyWh(qa + qb), PriceMc(p)).unwrap());
            let p2 = p / 1000 * 1000;
            let lhs = trade_revenue(EnergyWh(a), PriceMc(p2)).unwrap() + trade_revenue(EnergyWh(b), PriceMc(p2)).unwrap();
            prop_assert_eq!(lhs, trade_revenue(EnergyWh(a + b), PriceMc(p2)).unwrap());
        }

        #[test]
        fn apportion_sums_exactly(total in 0u128..1_000_000, weights in proptest::collection::vec(1u128..10_000, 1..20)) {
            let shares = apportion(total, &weights);
            prop_assert_eq!(shares.iter().sum::<u128>(), total);
            let sum: u128 = weights.iter().sum();
            for (s, w) in shares.iter().zip(&weights) {
                // |share − exact| < 1
                let exact_num = total * w;
                prop_assert!(s * sum + sum > exact_num);
                prop_assert!(exact_num + sum > s * sum);
            }
        }
    }
}
