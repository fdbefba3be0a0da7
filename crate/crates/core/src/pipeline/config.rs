use serde::Serialize;
use thiserror::Error;

use crate::predictor::PredictorConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SimConfig {
    pub fetch_width: usize,
    pub dispatch_width: usize,
    pub issue_width: usize,
    pub commit_width: usize,
    /// Fetched instructions waiting for dispatch.
    pub fetch_queue: usize,
    pub rob_size: usize,
    pub lq_size: usize,
    pub sq_size: usize,
    /// Maximum number of occupied UBT slots.
    pub ubt_size: usize,
    pub hit_latency: u64,
    pub miss_latency: u64,
    /// Direct-mapped lines of 64 bytes.
    pub cache_lines: usize,
    pub alu_latency: u64,
    pub mul_latency: u64,
    pub max_cycles: u64,
    /// Trap on accesses outside every declared region.
    pub check_sandbox: bool,
    pub trace: bool,
    pub predictor: PredictorConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            fetch_width: 4,
            dispatch_width: 4,
            issue_width: 4,
            commit_width: 4,
            fetch_queue: 16,
            rob_size: 64,
            lq_size: 24,
            sq_size: 16,
            ubt_size: 16,
            hit_latency: 2,
            miss_latency: 50,
            cache_lines: 4096,
            alu_latency: 1,
            mul_latency: 3,
            max_cycles: 2_000_000,
            check_sandbox: false,
            trace: false,
            predictor: PredictorConfig::default(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConfigError {
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("bad value `{value}` for `{key}`: {reason}")]
    BadValue {
        key: String,
        value: String,
        reason: String,
    },
}

impl SimConfig {
    /// Golden Cove-sized window.
    pub fn large_window() -> SimConfig {
        SimConfig {
            fetch_width: 6,
            dispatch_width: 6,
            issue_width: 6,
            commit_width: 6,
            fetch_queue: 24,
            rob_size: 512,
            lq_size: 192,
            sq_size: 114,
            ..SimConfig::default()
        }
    }

    /// Applies one `key=value` setting. `policy` is not a simulator key and
    /// is handled by the caller.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let bad = |reason: String| ConfigError::BadValue {
            key: key.to_string(),
            value: value.to_string(),
            reason,
        };
        let num = || value.parse::<u64>().map_err(|e| bad(e.to_string()));
        let flag = || value.parse::<bool>().map_err(|e| bad(e.to_string()));
        match key {
            "fetch_width" => self.fetch_width = num()? as usize,
            "dispatch_width" => self.dispatch_width = num()? as usize,
            "issue_width" => self.issue_width = num()? as usize,
            "commit_width" => self.commit_width = num()? as usize,
            "fetch_queue" => self.fetch_queue = num()? as usize,
            "rob_size" => self.rob_size = num()? as usize,
            "lq_size" => self.lq_size = num()? as usize,
            "sq_size" => self.sq_size = num()? as usize,
            "ubt_size" => self.ubt_size = num()? as usize,
            "cache.hit_latency" => self.hit_latency = num()?,
            "cache.miss_latency" => self.miss_latency = num()?,
            "cache.lines" => self.cache_lines = num()? as usize,
            "alu_latency" => self.alu_latency = num()?,
            "mul_latency" => self.mul_latency = num()?,
            "max_cycles" => self.max_cycles = num()?,
            "check_sandbox" => self.check_sandbox = flag()?,
            "trace" => self.trace = flag()?,
            "predictor.kind" => self.predictor.kind = value.parse().map_err(bad)?,
            "predictor.k" => self.predictor.k = num()? as u32,
            "predictor.history" => self.predictor.history = num()? as u32,
            "predictor.btb_bits" => self.predictor.btb_bits = num()? as u32,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        self.validate().map_err(bad)
    }

    pub fn validate(&self) -> Result<(), String> {
        let widths = [
            self.fetch_width,
            self.dispatch_width,
            self.issue_width,
            self.commit_width,
            self.fetch_queue,
            self.rob_size,
            self.lq_size,
            self.sq_size,
        ];
        if widths.contains(&0) {
            return Err("widths and queue sizes must be positive".into());
        }
        if !(1..=16).contains(&self.ubt_size) {
            return Err("ubt_size must be in 1..=16".into());
        }
        if !self.cache_lines.is_power_of_two() {
            return Err("cache.lines must be a power of two".into());
        }
        if self.hit_latency == 0 || self.miss_latency < self.hit_latency {
            return Err("need 0 < hit latency <= miss latency".into());
        }
        if self.alu_latency == 0 || self.mul_latency == 0 {
            return Err("latencies must be positive".into());
        }
        let pc = &self.predictor;
        if pc.k == 0 || pc.k > 24 || pc.history > 63 || pc.btb_bits > 16 {
            return Err("predictor sizes out of range".into());
        }
        Ok(())
    }
}
