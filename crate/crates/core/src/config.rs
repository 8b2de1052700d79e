//! Flat `key = value` config files with `[section]` headers and `#`
//! comments. CLI flags override file values; a copy of the effective
//! config is written into the run's output directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    /// section -> key -> value; keys outside any section land in "".
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut sections: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        let mut current = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line.starts_with('[') {
                if !line.ends_with(']') || line.len() < 3 {
                    return Err(format!("line {}: malformed section header {line:?}", i + 1));
                }
                current = line[1..line.len() - 1].trim().to_string();
                sections.entry(current.clone()).or_default();
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(format!("line {}: expected `key = value`, found {line:?}", i + 1));
            };
            sections
                .entry(current.clone())
                .or_default()
                .insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(Self { sections })
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section).and_then(|s| s.get(key)).map(|v| v.as_str())
    }

    pub fn set(&mut self, section: &str, key: &str, value: impl ToString) {
        self.sections
            .entry(section.to_string())
            .or_default()
            .insert(key.to_string(), value.to_string());
    }

    pub fn parse_value<T: std::str::FromStr>(&self, section: &str, key: &str) -> Result<Option<T>, String>
    where
        T::Err: std::fmt::Display,
    {
        match self.get(section, key) {
            None => Ok(None),
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|e| format!("[{section}] {key} = {raw:?}: {e}")),
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        if let Some(root) = self.sections.get("") {
            for (k, v) in root {
                let _ = writeln!(out, "{k} = {v}");
            }
        }
        for (name, entries) in &self.sections {
            if name.is_empty() {
                continue;
            }
            let _ = writeln!(out, "[{name}]");
            for (k, v) in entries {
                let _ = writeln!(out, "{k} = {v}");
            }
        }
        out
    }

    /// FNV-1a over the canonical rendering; stamped into run manifests so a
    /// result can be traced back to its exact configuration.
    pub fn hash(&self) -> u64 {
        fnv1a(self.render().as_bytes())
    }
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_sections_and_values() {
        let text = "# a comment\nseed = 7\n[workload]\ncluster_size = 256\narrival_rate = 0.02\n";
        let cfg = ConfigFile::parse(text).unwrap();
        assert_eq!(cfg.get("", "seed"), Some("7"));
        assert_eq!(cfg.parse_value::<u32>("workload", "cluster_size").unwrap(), Some(256));
        assert_eq!(cfg.parse_value::<f64>("workload", "arrival_rate").unwrap(), Some(0.02));
        assert_eq!(cfg.get("workload", "missing"), None);
    }

    #[test]
    fn bad_lines_are_rejected() {
        assert!(ConfigFile::parse("[unclosed\n").is_err());
        assert!(ConfigFile::parse("no equals sign\n").is_err());
        assert!(ConfigFile::parse("x = y\n").unwrap().parse_value::<u32>("", "x").is_err());
    }

    #[test]
    fn render_round_trips() {
        let text = "seed = 7\n[workload]\ncluster_size = 256\n";
        let cfg = ConfigFile::parse(text).unwrap();
        let again = ConfigFile::parse(&cfg.render()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.hash(), again.hash());
    }
}
