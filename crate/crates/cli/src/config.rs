//! `key = value` config files, CLI-flag precedence, and run-id hashing.
//!
//! Every option resolves as: explicit CLI flag, else config-file key (the
//! flag name without leading dashes), else built-in default. All resolved
//! values are recorded; their canonical listing is hashed into the run id
//! so identical configurations land in identical run directories.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use sha2::{Digest, Sha256};

#[derive(Default)]
pub struct Resolver {
    file: BTreeMap<String, String>,
    effective: BTreeMap<String, String>,
}

impl Resolver {
    pub fn from_file(path: Option<&Path>) -> Result<Self> {
        let mut file = BTreeMap::new();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("config file {}", path.display()))?;
            for (idx, raw) in text.lines().enumerate() {
                let line = raw.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (key, value) = line
                    .split_once('=')
                    .ok_or_else(|| anyhow!("config line {}: expected `key = value`", idx + 1))?;
                file.insert(key.trim().to_string(), value.trim().to_string());
            }
        }
        Ok(Resolver {
            file,
            effective: BTreeMap::new(),
        })
    }

    /// Resolve one option and record its effective value.
    pub fn get<T>(&mut self, cli: Option<T>, key: &str, default: T) -> Result<T>
    where
        T: FromStr + Display,
        <T as FromStr>::Err: Display,
    {
        let value = match cli {
            Some(v) => v,
            None => match self.file.get(key) {
                Some(raw) => raw
                    .parse::<T>()
                    .map_err(|e| anyhow!("config key `{key}`: {e}"))?,
                None => default,
            },
        };
        self.effective.insert(key.to_string(), value.to_string());
        Ok(value)
    }

    /// Resolve the output base directory. It names where artifacts land,
    /// not what the run computes, so it stays out of the run-id hash.
    pub fn get_out(&mut self, cli: Option<PathBuf>, default: &str) -> Result<PathBuf> {
        Ok(match cli {
            Some(v) => v,
            None => match self.file.get("out") {
                Some(raw) => PathBuf::from(raw),
                None => PathBuf::from(default),
            },
        })
    }

    /// A required path that must already exist.
    pub fn require_path(&mut self, cli: Option<PathBuf>, key: &str) -> Result<PathBuf> {
        let path = match cli {
            Some(v) => v,
            None => PathBuf::from(
                self.file
                    .get(key)
                    .ok_or_else(|| anyhow!("missing required option `--{key}`"))?,
            ),
        };
        self.effective
            .insert(key.to_string(), path.display().to_string());
        ensure_exists(&path)?;
        Ok(path)
    }

    /// Run id: first 12 hex chars of sha256 over the canonical effective
    /// configuration.
    pub fn run_id(&self, subcommand: &str) -> String {
        let mut hasher = Sha256::new();
        hasher.update(subcommand.as_bytes());
        hasher.update(b"\n");
        for (k, v) in &self.effective {
            hasher.update(k.as_bytes());
            hasher.update(b"=");
            hasher.update(v.as_bytes());
            hasher.update(b"\n");
        }
        let digest = hasher.finalize();
        let mut id = String::with_capacity(12);
        for byte in digest.iter().take(6) {
            id.push_str(&format!("{byte:02x}"));
        }
        id
    }

    /// Create and return `<out>/<run-id>/`.
    pub fn run_dir(&self, out: &Path, subcommand: &str) -> Result<PathBuf> {
        let dir = out.join(self.run_id(subcommand));
        std::fs::create_dir_all(&dir)
            .with_context(|| format!("creating {}", dir.display()))?;
        Ok(dir)
    }
}

pub fn ensure_exists(path: &Path) -> Result<()> {
    if !path.exists() {
        bail!("file not found: {}", path.display());
    }
    Ok(())
}

/// Comma-separated positive integers (horizon lists).
pub fn parse_usize_list(s: &str) -> Result<Vec<usize>> {
    let list: Vec<usize> = s
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| anyhow!("`{p}` is not a positive integer"))
        })
        .collect::<Result<_>>()?;
    if list.is_empty() || list.contains(&0) {
        bail!("list must be nonempty positive integers, got `{s}`");
    }
    Ok(list)
}
