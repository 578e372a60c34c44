//! Security games for semi-quantum money.
//!
//! A game pits a strategy from [`adversary`] against a fresh bank, with the
//! [`referee`] in between counting mints `l`, verifications `v` and accepted
//! verifications `w` from the bank's own replies. [`runners`] plays many
//! trials, each with randomness derived from `(seed, trial)`.

pub mod adversary;
pub mod referee;
pub mod runners;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use runners::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Mini,
    Full,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Mini => "mini",
            Scheme::Full => "full",
        })
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mini" => Ok(Scheme::Mini),
            "full" => Ok(Scheme::Full),
            other => Err(format!("unknown scheme {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub trial: u64,
    pub w: u64,
    pub l: u64,
    pub v: u64,
    pub won: bool,
    pub void: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameReport {
    pub game: String,
    pub strategy: String,
    pub seed: u64,
    pub trials: u64,
    /// Trials won.
    pub wins: u64,
    /// Sum of `w` over trials.
    pub accepted: u64,
    /// Sum of `l`.
    pub minted: u64,
    /// Sum of `v`.
    pub verified: u64,
    pub voided: u64,
    /// Game-specific counters.
    pub checks: BTreeMap<String, u64>,
    pub outcomes: Vec<TrialOutcome>,
}

impl GameReport {
    pub fn from_outcomes(
        game: &str,
        strategy: &str,
        seed: u64,
        outcomes: Vec<TrialOutcome>,
        checks: BTreeMap<String, u64>,
    ) -> Self {
        let sum = |f: fn(&TrialOutcome) -> u64| outcomes.iter().map(f).sum();
        Self {
            game: game.to_string(),
            strategy: strategy.to_string(),
            seed,
            trials: outcomes.len() as u64,
            wins: sum(|o| o.won as u64),
            accepted: sum(|o| o.w),
            minted: sum(|o| o.l),
            verified: sum(|o| o.v),
            voided: sum(|o| o.void as u64),
            checks,
            outcomes,
        }
    }

    pub fn win_rate(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.wins as f64 / self.trials as f64
        }
    }

    pub fn check(&self, name: &str) -> u64 {
        self.checks.get(name).copied().unwrap_or(0)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One line for humans.
    pub fn summary(&self) -> String {
        format!(
            "{} [{}] seed={} trials={} wins={} rate={:.6} w={} l={} v={} void={}",
            self.game,
            self.strategy,
            self.seed,
            self.trials,
            self.wins,
            self.win_rate(),
            self.accepted,
            self.minted,
            self.verified,
            self.voided
        )
    }
}
