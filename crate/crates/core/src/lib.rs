//! Simulator for a retailer-facilitated peer-to-peer electricity market.
//!
//! Prosumers trade surplus locally, the retailer pools what is left into a
//! federated power plant and bids it into the spot or retail market, and the
//! proceeds are split between retailer and contributors. All quantities are
//! integers: energy in Wh, prices in milli-cents per kWh, money in
//! milli-cents.

pub mod cli;
pub mod domain;
pub mod fpp;
pub mod local_market;
pub mod multi_retailer;
pub mod scenario;
pub mod settlement;
