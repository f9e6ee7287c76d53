//! Flat key=value config files and flag/file/default precedence.
//!
//! Flags win over file entries, file entries win over defaults. The resolved
//! values are echoed into the run record so every output names the exact
//! configuration that produced it.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::CliError;

#[derive(Debug, Clone, Default)]
pub struct FileConfig {
    entries: BTreeMap<String, String>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Env(format!("cannot read config {}: {e}", path.display())))?;
        let mut entries = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Usage(format!(
                    "config {} line {}: expected key=value, got {line:?}",
                    path.display(),
                    lineno + 1
                )));
            };
            entries.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(FileConfig { entries })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    /// flag > file > default.
    pub fn resolve<T>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, CliError>
    where
        T: FromStr,
    {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.get(key) {
            Some(raw) => raw
                .parse()
                .map_err(|_| CliError::Usage(format!("config key {key}: cannot parse {raw:?}"))),
            None => Ok(default),
        }
    }

    pub fn resolve_flag(&self, flag: bool, key: &str) -> Result<bool, CliError> {
        if flag {
            return Ok(true);
        }
        match self.get(key) {
            Some(raw) => raw
                .parse()
                .map_err(|_| CliError::Usage(format!("config key {key}: cannot parse {raw:?}"))),
            None => Ok(false),
        }
    }
}

/// Comma-separated positive integers (layer dims, rank sweeps, kappa lists).
pub fn parse_usize_list(raw: &str, what: &str) -> Result<Vec<usize>, CliError> {
    let mut out = Vec::new();
    for part in raw.split(',') {
        let part = part.trim();
        let v: usize = part.parse().map_err(|_| {
            CliError::Usage(format!("{what}: {part:?} is not a non-negative integer"))
        })?;
        out.push(v);
    }
    if out.is_empty() {
        return Err(CliError::Usage(format!("{what}: empty list")));
    }
    Ok(out)
}

/// Canonical `key=value` lines (sorted) and their content hash; the hash
/// names the run record file.
pub fn canonical_config(pairs: &[(String, String)]) -> (String, String) {
    let mut sorted: Vec<&(String, String)> = pairs.iter().collect();
    sorted.sort();
    let text: String = sorted.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
    let digest = {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update(text.as_bytes());
        let out = h.finalize();
        out.iter().map(|b| format!("{b:02x}")).collect::<String>()
    };
    (text, digest[..12].to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn precedence_is_flag_file_default() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "# comment\neta = 0.5\nrank=16").unwrap();
        drop(f);

        let cfg = FileConfig::load(Some(&path)).unwrap();
        assert_eq!(cfg.resolve(Some(0.25_f64), "eta", 0.01).unwrap(), 0.25);
        assert_eq!(cfg.resolve(None::<f64>, "eta", 0.01).unwrap(), 0.5);
        assert_eq!(cfg.resolve(None::<usize>, "tau", 16).unwrap(), 16);
        assert_eq!(cfg.resolve(None::<usize>, "rank", 8).unwrap(), 16);
    }

    #[test]
    fn malformed_lines_are_usage_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.cfg");
        std::fs::write(&path, "not a pair\n").unwrap();
        assert!(matches!(
            FileConfig::load(Some(&path)),
            Err(CliError::Usage(_))
        ));
    }

    #[test]
    fn hash_is_stable_and_order_free() {
        let a = vec![
            ("b".to_string(), "2".to_string()),
            ("a".to_string(), "1".to_string()),
        ];
        let b = vec![
            ("a".to_string(), "1".to_string()),
            ("b".to_string(), "2".to_string()),
        ];
        let (text_a, hash_a) = canonical_config(&a);
        let (_, hash_b) = canonical_config(&b);
        assert_eq!(hash_a, hash_b);
        assert_eq!(text_a, "a=1\nb=2\n");
        assert_eq!(hash_a.len(), 12);
    }
}
