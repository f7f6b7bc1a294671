//! Line-oriented experiment files.
//!
//! ```text
//! # comment
//! kind = density
//! include = common.cfg      # path relative to this file
//! [walk]                    # following keys read as walk.<key>
//! cells = 100000
//! []                        # back to top level
//! ```
//!
//! Later assignments win, includes are expanded in place, and keys under
//! `manifest.` are dropped so that a run manifest can be fed back as a config.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const MAX_INCLUDE_DEPTH: usize = 16;

/// Keys that do not influence results and are left out of the config hash.
const UNHASHED: &[&str] = &["out", "threads"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ExperimentKind {
    Simulate,
    Render,
    CheckSystem,
    Defects,
    EntryTime,
    Density,
    Convergence,
    QualitativeMonitor,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 8] = [
        Self::Simulate,
        Self::Render,
        Self::CheckSystem,
        Self::Defects,
        Self::EntryTime,
        Self::Density,
        Self::Convergence,
        Self::QualitativeMonitor,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Simulate => "simulate",
            Self::Render => "render",
            Self::CheckSystem => "check-system",
            Self::Defects => "defects",
            Self::EntryTime => "entry-time",
            Self::Density => "density",
            Self::Convergence => "convergence",
            Self::QualitativeMonitor => "qualitative-monitor",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown experiment kind {s:?}")))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ExperimentConfig {
    entries: BTreeMap<String, String>,
}

fn valid_key(key: &str) -> bool {
    !key.is_empty() && key.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

impl ExperimentConfig {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut cfg = Self::new();
        let mut stack = Vec::new();
        cfg.read_file(path.as_ref(), &mut stack)?;
        Ok(cfg)
    }

    /// Parses text; includes resolve against `base` (or the working directory).
    pub fn parse(text: &str, base: Option<&Path>) -> Result<Self> {
        let mut cfg = Self::new();
        let mut stack = Vec::new();
        cfg.read_text(text, base.unwrap_or(Path::new(".")), "<text>", &mut stack)?;
        Ok(cfg)
    }

    fn read_file(&mut self, path: &Path, stack: &mut Vec<PathBuf>) -> Result<()> {
        let canonical = path
            .canonicalize()
            .map_err(|e| Error::Config(format!("cannot open config {}: {e}", path.display())))?;
        if stack.contains(&canonical) {
            return Err(Error::Config(format!("include cycle through {}", path.display())));
        }
        if stack.len() >= MAX_INCLUDE_DEPTH {
            return Err(Error::Config(format!("includes nested deeper than {MAX_INCLUDE_DEPTH}")));
        }
        let text = std::fs::read_to_string(&canonical)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let base = canonical.parent().map(Path::to_path_buf).unwrap_or_default();
        stack.push(canonical);
        self.read_text(&text, &base, &path.display().to_string(), stack)?;
        stack.pop();
        Ok(())
    }

    fn read_text(&mut self, text: &str, base: &Path, source: &str, stack: &mut Vec<PathBuf>) -> Result<()> {
        let mut section = String::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let at = || format!("{source}:{}", no + 1);
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim();
                if !name.is_empty() && !valid_key(name) {
                    return Err(Error::Config(format!("{}: bad section name {name:?}", at())));
                }
                section = name.to_string();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("{}: expected key = value, got {line:?}", at())))?;
            let (key, value) = (key.trim(), value.trim());
            if key == "include" {
                self.read_file(&base.join(value), stack)?;
                continue;
            }
            if !valid_key(key) {
                return Err(Error::Config(format!("{}: bad key {key:?}", at())));
            }
            let full = if section.is_empty() { key.to_string() } else { format!("{section}.{key}") };
            if !full.starts_with("manifest.") {
                self.entries.insert(full, value.to_string());
            }
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        let value = value.into();
        if !valid_key(key) || key == "include" {
            return Err(Error::Config(format!("bad key {key:?}")));
        }
        if value.contains('\n') {
            return Err(Error::Config(format!("value of {key} spans lines")));
        }
        self.entries.insert(key.to_string(), value.trim().to_string());
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, text: &str) -> Result<()> {
        let (k, v) = text.split_once('=').ok_or_else(|| Error::Config(format!("override {text:?} is not key=value")))?;
        self.set(k.trim(), v)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key).ok_or_else(|| Error::Config(format!("missing key {key:?}")))
    }

    pub fn kind(&self) -> Result<ExperimentKind> {
        self.require("kind")?.parse()
    }

    /// Typed value, or `default` if the key is absent.
    pub fn parse_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| Error::Config(format!("bad value {v:?} for {key}"))),
        }
    }

    pub fn parse_required<T: FromStr>(&self, key: &str) -> Result<T> {
        let v = self.require(key)?;
        v.parse().map_err(|_| Error::Config(format!("bad value {v:?} for {key}")))
    }

    pub fn seed(&self) -> Result<u64> {
        self.parse_or("seed", 0)
    }

    /// Time grid: `dyadic:K` for `1, 2, ..., 2^K`, `range:A..B` or a comma list.
    pub fn t_grid(&self, key: &str, default: &str) -> Result<Vec<u64>> {
        parse_grid(self.get(key).unwrap_or(default))
            .map_err(|e| Error::Config(format!("bad grid for {key}: {e}")))
    }

    /// Canonical text: one sorted `key = value` line per entry.
    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// SHA-256 of the canonical text without output-only keys.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.entries.iter().filter(|(k, _)| !UNHASHED.contains(&k.as_str())) {
            h.update(format!("{k} = {v}\n").as_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

fn parse_grid(text: &str) -> std::result::Result<Vec<u64>, String> {
    let text = text.trim();
    let grid: Vec<u64> = if let Some(k) = text.strip_prefix("dyadic:") {
        let k: u32 = k.trim().parse().map_err(|_| format!("bad exponent {k:?}"))?;
        if k > 40 {
            return Err(format!("exponent {k} too large"));
        }
        (0..=k).map(|e| 1u64 << e).collect()
    } else if let Some(r) = text.strip_prefix("range:") {
        let (a, b) = r.split_once("..").ok_or_else(|| format!("bad range {r:?}"))?;
        let a: u64 = a.trim().parse().map_err(|_| format!("bad start {a:?}"))?;
        let b: u64 = b.trim().parse().map_err(|_| format!("bad end {b:?}"))?;
        (a..=b).collect()
    } else {
        text.split(',').map(|t| t.trim().parse::<u64>().map_err(|_| format!("bad time {t:?}"))).collect::<std::result::Result<_, _>>()?
    };
    if grid.is_empty() || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err("grid must be nonempty and strictly increasing".into());
    }
    Ok(grid)
}
