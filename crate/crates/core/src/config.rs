//! Engine configuration.
//!
//! Config files are plain `key=value` lines; `#` starts a comment. CLI flags
//! overlay file values, which overlay the defaults below.

use crate::error::{Error, Result};

pub const DEFAULT_BATCH_SIZE_ROWS: usize = 65_536;
pub const DEFAULT_MEMORY_TOTAL_BYTES: u64 = 1 << 30;
pub const DEFAULT_NARROW_INDEX_LIMIT: u64 = i32::MAX as u64;

/// Which group-by strategy an aggregate uses when the config pins one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupStrategy {
    Hash,
    Sort,
}

#[derive(Debug, Clone)]
pub struct EngineConfig {
    /// Worker threads in the execution pool.
    pub workers: usize,
    /// Maximum rows per batch pushed between operators.
    pub batch_size_rows: usize,
    /// Force every aggregate onto one strategy instead of the per-plan choice.
    pub groupby_strategy_override: Option<GroupStrategy>,
    /// Largest row index the kernel-side (narrow) selection vectors accept.
    /// Test hook; production default is `i32::MAX`.
    pub narrow_index_limit: u64,
    /// Total memory budget, split 50/50 between the caching and processing
    /// regions unless the explicit region sizes below are set.
    pub memory_total_bytes: u64,
    pub caching_bytes: Option<u64>,
    pub processing_bytes: Option<u64>,
    /// Active kernel backend name: "vectorized" or "reference".
    pub backend: String,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            workers: 4,
            batch_size_rows: DEFAULT_BATCH_SIZE_ROWS,
            groupby_strategy_override: None,
            narrow_index_limit: DEFAULT_NARROW_INDEX_LIMIT,
            memory_total_bytes: DEFAULT_MEMORY_TOTAL_BYTES,
            caching_bytes: None,
            processing_bytes: None,
            backend: "vectorized".to_string(),
        }
    }
}

impl EngineConfig {
    /// Caching-region capacity after applying the 50/50 split or overrides.
    pub fn caching_capacity(&self) -> u64 {
        self.caching_bytes.unwrap_or(self.memory_total_bytes / 2)
    }

    /// Processing-region capacity after applying the 50/50 split or overrides.
    pub fn processing_capacity(&self) -> u64 {
        self.processing_bytes.unwrap_or(self.memory_total_bytes / 2)
    }

    pub fn parse_file(path: &std::path::Path) -> Result<EngineConfig> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = EngineConfig::default();
        cfg.apply_lines(&text)?;
        Ok(cfg)
    }

    /// Apply `key=value` lines on top of the current values.
    pub fn apply_lines(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Syntax(format!("config line {}: expected key=value", lineno + 1))
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::Syntax(format!("config key {key}: {what}: {value}"));
        match key {
            "workers" => {
                self.workers = value.parse().map_err(|_| bad("invalid count"))?;
                if self.workers == 0 {
                    return Err(bad("must be >= 1"));
                }
            }
            "batch_size_rows" => {
                self.batch_size_rows = value.parse().map_err(|_| bad("invalid count"))?;
                if self.batch_size_rows == 0 {
                    return Err(bad("must be >= 1"));
                }
            }
            "groupby_strategy_override" => {
                self.groupby_strategy_override = match value {
                    "hash" => Some(GroupStrategy::Hash),
                    "sort" => Some(GroupStrategy::Sort),
                    "none" | "" => None,
                    _ => return Err(bad("expected hash|sort|none")),
                }
            }
            "narrow_index_limit" => {
                self.narrow_index_limit = value.parse().map_err(|_| bad("invalid limit"))?;
            }
            "memory_total_bytes" => {
                self.memory_total_bytes = value.parse().map_err(|_| bad("invalid bytes"))?;
            }
            "caching_bytes" => {
                self.caching_bytes = Some(value.parse().map_err(|_| bad("invalid bytes"))?);
            }
            "processing_bytes" => {
                self.processing_bytes = Some(value.parse().map_err(|_| bad("invalid bytes"))?);
            }
            "backend" => match value {
                "vectorized" | "reference" => self.backend = value.to_string(),
                _ => return Err(bad("expected vectorized|reference")),
            },
            _ => return Err(Error::Syntax(format!("unknown config key: {key}"))),
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_split_memory_evenly() {
        let cfg = EngineConfig::default();
        assert_eq!(cfg.caching_capacity(), cfg.memory_total_bytes / 2);
        assert_eq!(cfg.processing_capacity(), cfg.memory_total_bytes / 2);
    }

    #[test]
    fn explicit_regions_override_split() {
        let mut cfg = EngineConfig::default();
        cfg.apply_lines("caching_bytes=100\nprocessing_bytes=7\n").unwrap();
        assert_eq!(cfg.caching_capacity(), 100);
        assert_eq!(cfg.processing_capacity(), 7);
    }

    #[test]
    fn rejects_unknown_keys_and_garbage() {
        let mut cfg = EngineConfig::default();
        assert!(cfg.apply_lines("no_such_key=1").is_err());
        assert!(cfg.apply_lines("workers").is_err());
        assert!(cfg.apply_lines("workers=zero").is_err());
    }

    #[test]
    fn comments_and_blanks_ignored() {
        let mut cfg = EngineConfig::default();
        cfg.apply_lines("# a comment\n\nworkers=2\n").unwrap();
        assert_eq!(cfg.workers, 2);
    }
}
