use std::path::Path;

use anchor_est::{OverheadGrid, ScenarioConfig};
use serde::Deserialize;

use crate::failure::Failure;

/// Overhead grid as read from TOML. Each axis is either an integer array
/// or a string in the `--m`/`--n`/`--k` syntax.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    #[serde(deserialize_with = "values")]
    pub bs_antennas: Vec<u64>,
    #[serde(deserialize_with = "values")]
    pub irs_elements: Vec<u64>,
    #[serde(deserialize_with = "values")]
    pub users: Vec<u64>,
    pub tc_ms: f64,
    pub tu_ms: f64,
    pub symbol_rate: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        let s = ScenarioConfig::default();
        Self {
            bs_antennas: vec![s.bs_antennas as u64],
            irs_elements: vec![s.irs_elements as u64],
            users: vec![s.users as u64],
            tc_ms: s.tc_ms,
            tu_ms: s.tu_ms,
            symbol_rate: s.symbol_rate,
        }
    }
}

impl GridConfig {
    pub fn from_file(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
    }

    /// Coherence times converted to whole symbols, as the estimators use them.
    pub fn grid(&self) -> Result<OverheadGrid, Failure> {
        if !(self.tc_ms > 0.0 && self.tu_ms > 0.0 && self.symbol_rate > 0.0) {
            return Err(Failure::Config("coherence times and symbol rate must be positive".into()));
        }
        for (axis, v) in [("M", &self.bs_antennas), ("N", &self.irs_elements), ("K", &self.users)] {
            if v.is_empty() {
                return Err(Failure::Config(format!("no values for {axis}")));
            }
        }
        let timing = ScenarioConfig {
            tc_ms: self.tc_ms,
            tu_ms: self.tu_ms,
            symbol_rate: self.symbol_rate,
            ..ScenarioConfig::default()
        };
        Ok(OverheadGrid {
            bs_antennas: self.bs_antennas.clone(),
            irs_elements: self.irs_elements.clone(),
            users: self.users.clone(),
            tc: timing.tc_symbols(),
            tu: timing.tu_symbols(),
        })
    }
}

fn values<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Vec<u64>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        List(Vec<u64>),
        Text(String),
    }
    match Raw::deserialize(d)? {
        Raw::List(v) => Ok(v),
        Raw::Text(s) => parse_values(&s).map_err(serde::de::Error::custom),
    }
}

/// Comma-separated integers and inclusive ranges, e.g. `1..=10,20,40`.
/// An optional `:step` follows a range.
pub fn parse_values(text: &str) -> Result<Vec<u64>, Failure> {
    let bad = |part: &str| Failure::Config(format!("cannot parse `{part}` as a value or range"));
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once("..=") {
            Some((lo, rest)) => {
                let (hi, step) = match rest.split_once(':') {
                    Some((hi, step)) => (hi, step.trim().parse::<u64>().map_err(|_| bad(part))?),
                    None => (rest, 1),
                };
                let lo: u64 = lo.trim().parse().map_err(|_| bad(part))?;
                let hi: u64 = hi.trim().parse().map_err(|_| bad(part))?;
                if step == 0 || lo > hi {
                    return Err(bad(part));
                }
                out.extend((lo..=hi).step_by(step as usize));
            }
            None => out.push(part.parse().map_err(|_| bad(part))?),
        }
    }
    if out.is_empty() {
        return Err(Failure::Config("empty value list".into()));
    }
    Ok(out)
}
