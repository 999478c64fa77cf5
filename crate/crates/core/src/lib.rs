//! PPO portfolio allocation with post-hoc explanations.
//!
//! The pipeline runs market data ingestion ([`market_data`]), a portfolio
//! simulator ([`env`]), a Dirichlet policy network ([`policy`]), a PPO
//! trainer ([`ppo`]), trading-time decision capture ([`decision_log`]) and
//! model-agnostic explainers ([`explain`]).

pub mod decision_log;
pub mod env;
pub mod market_data;
pub mod policy;
pub mod ppo;
pub mod seed;
pub mod synthetic;
pub mod explain;
pub mod report;
