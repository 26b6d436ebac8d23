//! Flat `key=value` settings: config file first, command-line flags on top.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use anyhow::Result;
use glitchvit::{fsutil, Error};
use sha2::{Digest, Sha256};

pub struct Settings {
    values: BTreeMap<String, String>,
    used: RefCell<BTreeSet<String>>,
    effective: RefCell<BTreeMap<String, String>>,
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let values = match path {
            Some(p) => fsutil::parse_key_values(&fsutil::read_text(p)?, p)?,
            None => BTreeMap::new(),
        };
        Ok(Self {
            values,
            used: RefCell::default(),
            effective: RefCell::default(),
        })
    }

    /// A flag given on the command line wins over the file.
    pub fn flag<T: Display>(&mut self, key: &str, value: Option<T>) {
        if let Some(v) = value {
            self.values.insert(key.to_string(), v.to_string());
        }
    }

    pub fn get<T>(&self, key: &str, default: T) -> Result<T>
    where
        T: FromStr + Display,
    {
        let v = self.parse(key)?.unwrap_or(default);
        self.record(key, &v);
        Ok(v)
    }

    pub fn get_opt<T>(&self, key: &str) -> Result<Option<T>>
    where
        T: FromStr + Display,
    {
        let v = self.parse::<T>(key)?;
        match &v {
            Some(v) => self.record(key, v),
            None => {
                self.used.borrow_mut().insert(key.to_string());
            }
        }
        Ok(v)
    }

    fn parse<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
                Error::Invalid {
                    what: "config value",
                    reason: format!("`{key}={raw}` cannot be parsed"),
                }
                .into()
            }),
        }
    }

    /// Records a derived value so it appears in the echoed configuration.
    pub fn record(&self, key: &str, v: &dyn Display) {
        self.used.borrow_mut().insert(key.to_string());
        self.effective.borrow_mut().insert(key.to_string(), v.to_string());
    }

    /// Fails on keys that no part of the command consumed.
    pub fn reject_unknown(&self) -> Result<()> {
        let used = self.used.borrow();
        let unknown: Vec<&str> = self.values.keys().filter(|k| !used.contains(*k)).map(String::as_str).collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(Error::Invalid {
                what: "config",
                reason: format!("unknown key(s): {}", unknown.join(", ")),
            }
            .into())
        }
    }

    /// The effective configuration as sorted `key=value` lines.
    pub fn effective_text(&self) -> String {
        self.effective.borrow().iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn digest(&self) -> String {
        let d = Sha256::digest(self.effective_text().as_bytes());
        d.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// Echoes the effective configuration to the log.
    pub fn echo(&self, command: &str) {
        log::info!("effective config for `{command}`:");
        for line in self.effective_text().lines() {
            log::info!("  {line}");
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_and_unknown_keys_fail() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.cfg");
        std::fs::write(&p, "epochs=3\nlearning_rate=0.5\ntypo=1\n").unwrap();
        let mut s = Settings::load(Some(&p)).unwrap();
        s.flag("epochs", Some(7));
        assert_eq!(s.get("epochs", 15usize).unwrap(), 7);
        assert_eq!(s.get("learning_rate", 0.001f64).unwrap(), 0.5);
        assert_eq!(s.get("batch_size", 32usize).unwrap(), 32);
        assert!(s.reject_unknown().unwrap_err().to_string().contains("typo"));
        assert_eq!(s.effective_text(), "batch_size=32\nepochs=7\nlearning_rate=0.5\n");
    }

    #[test]
    fn bad_values_are_validation_errors() {
        let mut s = Settings::load(None).unwrap();
        s.flag("epochs", Some("many"));
        let err = s.get("epochs", 1usize).unwrap_err();
        assert!(matches!(err.downcast_ref::<Error>(), Some(Error::Invalid { .. })));
    }
}
