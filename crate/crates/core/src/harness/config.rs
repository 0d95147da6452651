//! Flat `key = value` scenario files.
//!
//! Lines hold one `key = value` pair; `#` starts a comment. Keys left out
//! keep their defaults (see [`ChainScenario::default`]). Unknown or repeated
//! keys are rejected.

use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::mac_analytics::{AsyncRule, SlotMode};
use crate::propagation::{db_to_linear, FadingModel, PathLoss};
use crate::safety_sim::{ChainScenario, Scheme, SensingRadius};

/// Data rate (Mbps) and the SIR threshold (dB) it needs.
pub const RATE_TABLE: [(f64, f64); 7] = [
    (3.0, 5.0),
    (4.5, 6.0),
    (6.0, 8.0),
    (9.0, 11.0),
    (12.0, 15.0),
    (18.0, 20.0),
    (24.0, 25.0),
];

/// Keys accepted in a scenario file.
pub const CONFIG_KEYS: [&str; 22] = [
    "vehicles",
    "spacing",
    "velocity",
    "speed",
    "decel_min",
    "decel_max",
    "reaction_mu",
    "reaction_sigma",
    "obstructions",
    "packet_bytes",
    "rate_mbps",
    "beta_db",
    "beta",
    "alpha",
    "fading",
    "m",
    "scheme",
    "slot_mode",
    "async_rule",
    "r_cs",
    "access",
    "head_access",
];

/// SIR threshold in dB for a data rate in Mbps.
pub fn beta_db_for_rate(mbps: f64) -> Option<f64> {
    RATE_TABLE
        .iter()
        .find(|(r, _)| (r - mbps).abs() < 1e-9)
        .map(|&(_, db)| db)
}

pub fn parse_config(path: &Path) -> Result<ChainScenario> {
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text)
}

struct Entry<'a> {
    line: usize,
    key: &'a str,
    value: &'a str,
}

impl Entry<'_> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line,
            key: self.key.to_string(),
            message: message.into(),
        }
    }

    fn num<T: FromStr>(&self) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.value
            .parse()
            .map_err(|e| self.err(format!("cannot read `{}`: {e}", self.value)))
    }

    fn word(&self, choices: &[&str]) -> Result<usize> {
        let v = self.value.to_ascii_lowercase();
        choices
            .iter()
            .position(|c| *c == v)
            .ok_or_else(|| self.err(format!("expected one of {}", choices.join(", "))))
    }
}

pub fn parse_config_str(text: &str) -> Result<ChainScenario> {
    let mut entries: Vec<Entry> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(Error::Parse {
                line,
                key: content.to_string(),
                message: "expected `key = value`".into(),
            });
        };
        let entry = Entry {
            line,
            key: key.trim(),
            value: value.trim(),
        };
        if !CONFIG_KEYS.contains(&entry.key) {
            return Err(entry.err("unknown key"));
        }
        if entries
            .iter()
            .any(|e| canonical(e.key) == canonical(entry.key))
        {
            return Err(entry.err("key given twice"));
        }
        entries.push(entry);
    }

    let mut sc = ChainScenario::default();
    let mut rate_mbps = 6.0;
    let mut beta_db = None;
    let mut beta_linear = None;
    let mut fading_kind = None;
    let mut m = None;
    for e in &entries {
        match e.key {
            "vehicles" => sc.vehicles = e.num()?,
            "spacing" => sc.spacing = e.num()?,
            "velocity" | "speed" => sc.speed = e.num()?,
            "decel_min" => sc.decel_min = e.num()?,
            "decel_max" => sc.decel_max = e.num()?,
            "reaction_mu" => sc.reaction.mu = e.num()?,
            "reaction_sigma" => sc.reaction.sigma = e.num()?,
            "obstructions" => sc.obstructions = e.num()?,
            "packet_bytes" => sc.packet_bits = 8.0 * e.num::<f64>()?,
            "rate_mbps" => rate_mbps = e.num()?,
            "beta_db" => beta_db = Some(e.num::<f64>()?),
            "beta" => beta_linear = Some(e.num::<f64>()?),
            "alpha" => {
                sc.path_loss =
                    PathLoss::new(e.num()?).map_err(|err| Error::Validation(err.to_string()))?
            }
            "fading" => fading_kind = Some(e.word(&["none", "rayleigh", "nakagami"])?),
            "m" => m = Some(e.num::<u32>()?),
            "scheme" => {
                sc.scheme = [
                    Scheme::Independent,
                    Scheme::CarrierSense,
                    Scheme::CarrierSense,
                ][e.word(&["independent", "carrier_sense", "cs"])?]
            }
            "slot_mode" => {
                sc.slot_mode = [
                    SlotMode::Synchronous,
                    SlotMode::Synchronous,
                    SlotMode::Asynchronous,
                    SlotMode::Asynchronous,
                ][e.word(&["synchronous", "sync", "asynchronous", "async"])?]
            }
            "async_rule" => {
                sc.async_rule =
                    [AsyncRule::Exact, AsyncRule::Doubled][e.word(&["exact", "doubled"])?]
            }
            "r_cs" => {
                sc.sensing_radius = if e.value.eq_ignore_ascii_case("optimal") {
                    SensingRadius::Optimal
                } else {
                    SensingRadius::Fixed(e.num()?)
                }
            }
            "access" => sc.access = e.num()?,
            "head_access" => sc.head_access = Some(e.num()?),
            _ => unreachable!("key list checked above"),
        }
    }

    check_positive("rate_mbps", rate_mbps)?;
    sc.data_rate = rate_mbps * 1e6;
    sc.beta = match (beta_db, beta_linear) {
        (Some(_), Some(_)) => {
            return Err(Error::Validation(
                "give either beta or beta_db, not both".into(),
            ))
        }
        (Some(db), None) => db_to_linear(db),
        (None, Some(b)) => b,
        (None, None) => db_to_linear(beta_db_for_rate(rate_mbps).ok_or_else(|| {
            Error::Validation(format!(
                "rate {rate_mbps} Mbps has no built-in SIR threshold; set beta or beta_db"
            ))
        })?),
    };
    sc.fading = match (fading_kind, m) {
        (Some(0), None) => FadingModel::NoFading,
        (Some(0), Some(_)) => {
            return Err(Error::Validation("m is meaningless without fading".into()))
        }
        (Some(1), Some(m)) if m != 1 => {
            return Err(Error::Validation(format!(
                "Rayleigh fading has m = 1, got m = {m}"
            )))
        }
        (Some(1), _) | (None, None) => FadingModel::RAYLEIGH,
        (Some(_), None) => return Err(Error::Validation("nakagami fading needs m".into())),
        (_, Some(m)) => {
            FadingModel::nakagami(m).map_err(|err| Error::Validation(err.to_string()))?
        }
    };
    sc.validate()?;
    Ok(sc)
}

fn canonical(key: &str) -> &str {
    if key == "speed" {
        "velocity"
    } else {
        key
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Validation(format!("{name} = {v} must be positive")))
    }
}
