//! Target timing parameters and their `key=value` configuration syntax.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

/// Datapath operation classes with a configurable combinational delay.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum OpKind {
    /// add, sub, neg
    Add,
    /// and, or, xor, not, logical not, predicate logic
    Logic,
    Compare,
    Shift,
    Mul,
    /// div, rem
    Div,
    /// phi-select multiplexer
    Select,
    Load,
    Store,
}

impl OpKind {
    pub const ALL: [OpKind; 9] = [
        OpKind::Add,
        OpKind::Logic,
        OpKind::Compare,
        OpKind::Shift,
        OpKind::Mul,
        OpKind::Div,
        OpKind::Select,
        OpKind::Load,
        OpKind::Store,
    ];

    pub fn key(self) -> &'static str {
        match self {
            OpKind::Add => "add",
            OpKind::Logic => "logic",
            OpKind::Compare => "compare",
            OpKind::Shift => "shift",
            OpKind::Mul => "mul",
            OpKind::Div => "div",
            OpKind::Select => "select",
            OpKind::Load => "load",
            OpKind::Store => "store",
        }
    }
}

/// Software-side instruction classes for the CPU cycle estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SwKind {
    /// Any single ALU instruction (add, compare, logic, shift).
    Simple,
    Mul,
    Div,
    Branch,
    Mem,
}

impl SwKind {
    pub const ALL: [SwKind; 5] = [SwKind::Simple, SwKind::Mul, SwKind::Div, SwKind::Branch, SwKind::Mem];

    pub fn key(self) -> &'static str {
        match self {
            SwKind::Simple => "simple",
            SwKind::Mul => "mul",
            SwKind::Div => "div",
            SwKind::Branch => "branch",
            SwKind::Mem => "mem",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostModel {
    pub f_cpu_hz: u64,
    pub f_accel_hz: u64,
    /// Fixed accelerator cycles per invocation.
    pub invocation_overhead_cycles: u64,
    /// Accelerator cycles per register read or write over the bus.
    pub reg_access_cycles: u64,
    /// Extra accelerator cycles for a state that accesses memory.
    pub mem_penalty_cycles: u64,
    /// Combinational delay units available per state.
    pub clock_budget: u32,
    pub op_delay: BTreeMap<OpKind, u32>,
    pub sw_cycles: BTreeMap<SwKind, u32>,
    pub min_speedup: BigRational,
}

impl Default for CostModel {
    fn default() -> Self {
        let op_delay = [
            (OpKind::Add, 2),
            (OpKind::Logic, 2),
            (OpKind::Compare, 2),
            (OpKind::Shift, 1),
            (OpKind::Mul, 6),
            (OpKind::Div, 20),
            (OpKind::Select, 1),
            (OpKind::Load, 2),
            (OpKind::Store, 2),
        ]
        .into_iter()
        .collect();
        let sw_cycles = [
            (SwKind::Simple, 1),
            (SwKind::Mul, 3),
            (SwKind::Div, 20),
            (SwKind::Branch, 2),
            (SwKind::Mem, 2),
        ]
        .into_iter()
        .collect();
        CostModel {
            f_cpu_hz: 666_000_000,
            f_accel_hz: 333_000_000,
            invocation_overhead_cycles: 50,
            reg_access_cycles: 14,
            mem_penalty_cycles: 4,
            clock_budget: 10,
            op_delay,
            sw_cycles,
            min_speedup: BigRational::one(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

/// Parses `3`, `0.49`, `3/2` into an exact rational.
pub fn parse_rational(s: &str) -> Result<BigRational, ConfigError> {
    let bad = || ConfigError(format!("invalid number '{s}'"));
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let n = BigInt::from_str(n.trim()).map_err(|_| bad())?;
        let d = BigInt::from_str(d.trim()).map_err(|_| bad())?;
        if d.is_zero() {
            return Err(bad());
        }
        return Ok(BigRational::new(n, d));
    }
    let (neg, digits) = match s.strip_prefix('-') {
        Some(r) => (true, r),
        None => (false, s),
    };
    let (int, frac) = digits.split_once('.').unwrap_or((digits, ""));
    if int.is_empty() && frac.is_empty() {
        return Err(bad());
    }
    if !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let mantissa = BigInt::from_str(&format!("{int}{frac}")).map_err(|_| bad())?;
    let scale = num_traits::pow(BigInt::from(10), frac.len());
    let r = BigRational::new(mantissa, scale);
    Ok(if neg { -r } else { r })
}

/// Renders a rational as a decimal with `digits` fractional digits
/// (rounded half away from zero).
pub fn format_decimal(r: &BigRational, digits: usize) -> String {
    let scale = num_traits::pow(BigInt::from(10), digits);
    let scaled = r * BigRational::from_integer(scale.clone());
    let rounded = scaled.round().to_integer();
    let neg = rounded.is_negative();
    let abs = rounded.abs();
    let int = &abs / &scale;
    let frac = &abs % &scale;
    let sign = if neg { "-" } else { "" };
    if digits == 0 {
        format!("{sign}{int}")
    } else {
        format!("{sign}{int}.{:0>width$}", frac.to_string(), width = digits)
    }
}

fn parse_u64(key: &str, v: &str) -> Result<u64, ConfigError> {
    v.trim()
        .parse()
        .map_err(|_| ConfigError(format!("{key}: expected a non-negative integer, found '{v}'")))
}

impl CostModel {
    pub fn delay(&self, k: OpKind) -> u32 {
        self.op_delay.get(&k).copied().unwrap_or(1)
    }

    pub fn sw(&self, k: SwKind) -> u32 {
        self.sw_cycles.get(&k).copied().unwrap_or(1)
    }

    /// Applies one configuration entry. Frequencies accept a `MHz` suffix.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let freq = |v: &str| -> Result<u64, ConfigError> {
            let v = v.trim();
            if let Some(m) = v.strip_suffix("MHz").or_else(|| v.strip_suffix("mhz")) {
                let r = parse_rational(m)? * BigRational::from_integer(BigInt::from(1_000_000));
                if !r.is_integer() {
                    return Err(ConfigError(format!("{key}: frequency must be a whole number of Hz")));
                }
                return r
                    .to_integer()
                    .try_into()
                    .map_err(|_| ConfigError(format!("{key}: frequency out of range")));
            }
            parse_u64(key, v)
        };
        match key {
            "f_cpu" => self.f_cpu_hz = freq(value)?,
            "f_accel" => self.f_accel_hz = freq(value)?,
            "invocation_overhead_cycles" => self.invocation_overhead_cycles = parse_u64(key, value)?,
            "reg_access_cycles" => self.reg_access_cycles = parse_u64(key, value)?,
            "mem_penalty_cycles" => self.mem_penalty_cycles = parse_u64(key, value)?,
            "clock_budget" => {
                self.clock_budget = parse_u64(key, value)?
                    .try_into()
                    .map_err(|_| ConfigError(format!("{key}: out of range")))?
            }
            "min_speedup" => self.min_speedup = parse_rational(value)?,
            _ => {
                if let Some(k) = key.strip_prefix("op_delay.") {
                    let Some(kind) = OpKind::ALL.into_iter().find(|o| o.key() == k) else {
                        return Err(ConfigError(format!("unknown operation class '{k}'")));
                    };
                    let d = parse_u64(key, value)?;
                    self.op_delay.insert(kind, d.try_into().map_err(|_| ConfigError(format!("{key}: out of range")))?);
                } else if let Some(k) = key.strip_prefix("sw_cycles.") {
                    let Some(kind) = SwKind::ALL.into_iter().find(|o| o.key() == k) else {
                        return Err(ConfigError(format!("unknown instruction class '{k}'")));
                    };
                    let d = parse_u64(key, value)?;
                    self.sw_cycles.insert(kind, d.try_into().map_err(|_| ConfigError(format!("{key}: out of range")))?);
                } else {
                    return Err(ConfigError(format!("unknown cost-model key '{key}'")));
                }
            }
        }
        Ok(())
    }

    /// Checks the positivity invariants.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.f_cpu_hz == 0 || self.f_accel_hz == 0 {
            return Err(ConfigError("clock frequencies must be positive".into()));
        }
        if self.clock_budget == 0 {
            return Err(ConfigError("clock_budget must be positive".into()));
        }
        if let Some((k, _)) = self.op_delay.iter().find(|(_, d)| **d == 0) {
            return Err(ConfigError(format!("op_delay.{} must be positive", k.key())));
        }
        if self.min_speedup.is_negative() {
            return Err(ConfigError("min_speedup must not be negative".into()));
        }
        Ok(())
    }

    /// Every entry in `key=value` form, one per line, in a fixed order.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("f_cpu={}\n", self.f_cpu_hz));
        out.push_str(&format!("f_accel={}\n", self.f_accel_hz));
        out.push_str(&format!("invocation_overhead_cycles={}\n", self.invocation_overhead_cycles));
        out.push_str(&format!("reg_access_cycles={}\n", self.reg_access_cycles));
        out.push_str(&format!("mem_penalty_cycles={}\n", self.mem_penalty_cycles));
        out.push_str(&format!("clock_budget={}\n", self.clock_budget));
        for (k, v) in &self.op_delay {
            out.push_str(&format!("op_delay.{}={v}\n", k.key()));
        }
        for (k, v) in &self.sw_cycles {
            out.push_str(&format!("sw_cycles.{}={v}\n", k.key()));
        }
        out.push_str(&format!("min_speedup={}\n", self.min_speedup));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rationals_parse_exactly() {
        assert_eq!(parse_rational("0.49").unwrap(), BigRational::new(49.into(), 100.into()));
        assert_eq!(parse_rational("3/2").unwrap(), BigRational::new(3.into(), 2.into()));
        assert_eq!(parse_rational("-2").unwrap(), BigRational::from_integer((-2).into()));
        assert!(parse_rational("1e3").is_err());
        assert!(parse_rational("1/0").is_err());
    }

    #[test]
    fn decimal_formatting_rounds() {
        let r = BigRational::new(62.into(), 126.into());
        assert_eq!(format_decimal(&r, 2), "0.49");
        assert_eq!(format_decimal(&BigRational::from_integer(3.into()), 0), "3");
    }

    #[test]
    fn kv_round_trip() {
        let mut m = CostModel::default();
        m.set("f_accel", "100MHz").unwrap();
        m.set("op_delay.mul", "4").unwrap();
        m.set("min_speedup", "0.5").unwrap();
        let mut back = CostModel::default();
        for line in m.to_kv().lines() {
            let (k, v) = line.split_once('=').unwrap();
            back.set(k, v).unwrap();
        }
        assert_eq!(back, m);
        assert!(m.set("bogus", "1").is_err());
    }
}
