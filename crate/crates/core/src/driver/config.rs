//! Driver configuration: cost-model entries plus selection and
//! verification knobs, read from `key=value` text (with `#` comments) and
//! overridable entry by entry.

use std::fmt::Write as _;

use crate::analyzer::RankKey;
use crate::ir::loops::DEFAULT_LOOP_COUNT;
use crate::synth::cost::ConfigError;
use crate::synth::CostModel;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Config {
    pub model: CostModel,
    /// Number of loops to select for synthesis.
    pub top_n: usize,
    pub rank: RankKey,
    pub seed: u64,
    /// Random trials per accelerator in the loop-level equivalence check.
    pub trials: u32,
    /// Whole-program runs, each compared with and without accelerators.
    pub program_trials: u32,
    /// Trip count assumed for loops whose bounds are not constant.
    pub default_loop_count: u64,
    /// Interpreter step limit for whole-program runs.
    pub max_steps: u64,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            model: CostModel::default(),
            top_n: 1,
            rank: RankKey::Total,
            seed: 1,
            trials: 1000,
            program_trials: 20,
            default_loop_count: DEFAULT_LOOP_COUNT,
            max_steps: 5_000_000,
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, ConfigError> {
    v.trim()
        .parse()
        .map_err(|_| ConfigError(format!("{key}: expected a non-negative integer, found '{}'", v.trim())))
}

impl Config {
    /// Applies one entry; unknown keys are errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let key = key.trim();
        match key {
            "top_n" => {
                let n: usize = num(key, value)?;
                if n == 0 {
                    return Err(ConfigError("top_n must be at least 1".into()));
                }
                self.top_n = n;
            }
            "rank" => self.rank = value.trim().parse().map_err(ConfigError)?,
            "seed" => self.seed = num(key, value)?,
            "trials" => self.trials = num(key, value)?,
            "program_trials" => self.program_trials = num(key, value)?,
            "default_loop_count" => self.default_loop_count = num(key, value)?,
            "max_steps" => self.max_steps = num(key, value)?,
            _ => self.model.set(key, value)?,
        }
        Ok(())
    }

    /// Applies every entry of a configuration text. Blank lines and
    /// everything after `#` are ignored.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(ConfigError(format!("line {}: expected key=value, found '{line}'", i + 1)));
            };
            self.set(k, v).map_err(|e| ConfigError(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.model.validate()
    }

    /// Every entry, one `key=value` line each; [`Config::apply_text`]
    /// reads it back.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "top_n={}", self.top_n);
        let _ = writeln!(
            s,
            "rank={}",
            match self.rank {
                RankKey::Total => "total",
                RankKey::TotalTimesStmts => "total-stmts",
            }
        );
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "trials={}", self.trials);
        let _ = writeln!(s, "program_trials={}", self.program_trials);
        let _ = writeln!(s, "default_loop_count={}", self.default_loop_count);
        let _ = writeln!(s, "max_steps={}", self.max_steps);
        s + &self.model.to_kv()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;
    use num_rational::BigRational;

    #[test]
    fn text_with_comments_and_overrides() {
        let mut c = Config::default();
        c.apply_text("# cost model\nf_accel = 100MHz\n\ntop_n=3 # three loops\nmin_speedup=0.5\n").unwrap();
        assert_eq!(c.model.f_accel_hz, 100_000_000);
        assert_eq!(c.top_n, 3);
        assert_eq!(c.model.min_speedup, BigRational::new(BigInt::from(1), BigInt::from(2)));
        // A later entry wins, which is how command-line overrides apply.
        c.set("top_n", "2").unwrap();
        assert_eq!(c.top_n, 2);
    }

    #[test]
    fn errors_name_the_line() {
        let mut c = Config::default();
        let e = c.apply_text("seed=1\nbogus\n").unwrap_err();
        assert!(e.0.starts_with("line 2:"), "{e}");
        let e = c.apply_text("colour=red\n").unwrap_err();
        assert!(e.0.contains("unknown"), "{e}");
        assert!(c.set("top_n", "0").is_err());
    }

    #[test]
    fn kv_round_trip() {
        let mut c = Config::default();
        c.set("op_delay.mul", "9").unwrap();
        c.set("rank", "total-stmts").unwrap();
        c.set("min_speedup", "3/7").unwrap();
        let mut d = Config::default();
        d.apply_text(&c.to_kv()).unwrap();
        assert_eq!(c, d);
    }
}
