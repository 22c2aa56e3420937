//! Flat `key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Lists are comma
//! separated. Each config type pulls its own keys out of a [`KvMap`]; whatever
//! is left over after all consumers ran is reported by [`KvMap::finish`].

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct KvMap {
    entries: BTreeMap<String, (usize, String)>,
}

impl KvMap {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Parse {
                    line: idx + 1,
                    msg: format!("expected `key = value`, got `{line}`"),
                });
            };
            let key = key.trim().to_string();
            if key.is_empty() {
                return Err(Error::Parse {
                    line: idx + 1,
                    msg: "empty key".into(),
                });
            }
            if entries
                .insert(key.clone(), (idx + 1, value.trim().to_string()))
                .is_some()
            {
                return Err(Error::Parse {
                    line: idx + 1,
                    msg: format!("duplicate key `{key}`"),
                });
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Removes `key` and parses it, or leaves `slot` untouched when absent.
    pub fn take<T>(&mut self, key: &str, slot: &mut T) -> Result<()>
    where
        T: FromStr,
        T::Err: Display,
    {
        if let Some((line, value)) = self.entries.remove(key) {
            *slot = value.parse().map_err(|e: T::Err| Error::Parse {
                line,
                msg: format!("`{key}`: {e}"),
            })?;
        }
        Ok(())
    }

    pub fn take_list<T>(&mut self, key: &str, slot: &mut Vec<T>) -> Result<()>
    where
        T: FromStr,
        T::Err: Display,
    {
        if let Some((line, value)) = self.entries.remove(key) {
            let mut out = Vec::new();
            for item in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                out.push(item.parse().map_err(|e: T::Err| Error::Parse {
                    line,
                    msg: format!("`{key}`: {e}"),
                })?);
            }
            *slot = out;
        }
        Ok(())
    }

    /// Fails if any key was never consumed.
    pub fn finish(self) -> Result<()> {
        if let Some((key, (line, _))) = self.entries.into_iter().next() {
            return Err(Error::Parse {
                line,
                msg: format!("unknown key `{key}`"),
            });
        }
        Ok(())
    }
}

/// Formats a list for writing back into a kv file.
pub fn join_list<T: Display>(items: &[T]) -> String {
    items
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_scalars_lists_and_comments() {
        let mut kv = KvMap::parse("# plant\n dt = 0.5\nduty_curve = 0.1, 0.9\n\n").unwrap();
        let mut dt = 0.25_f64;
        let mut curve: Vec<f64> = vec![];
        let mut seed = 3_u64;
        kv.take("dt", &mut dt).unwrap();
        kv.take_list("duty_curve", &mut curve).unwrap();
        kv.take("seed", &mut seed).unwrap();
        kv.finish().unwrap();
        assert_eq!(dt, 0.5);
        assert_eq!(curve, vec![0.1, 0.9]);
        assert_eq!(seed, 3);
    }

    #[test]
    fn rejects_unknown_and_duplicate_keys() {
        let kv = KvMap::parse("bogus = 1").unwrap();
        assert!(kv.finish().is_err());
        assert!(KvMap::parse("a = 1\na = 2").is_err());
        assert!(KvMap::parse("no equals sign").is_err());
    }

    #[test]
    fn reports_bad_values_with_line() {
        let mut kv = KvMap::parse("\n\ndt = fast").unwrap();
        let mut dt = 0.0_f64;
        match kv.take("dt", &mut dt) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }
}
