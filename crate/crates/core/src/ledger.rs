//! Named constants with their provenance.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    /// Closed-form expression taken from the theory.
    Formula,
    /// Fitted from measurements.
    Fitted,
    /// Computed from other ledger entries.
    Derived,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantEntry {
    pub value: f64,
    pub provenance: Provenance,
    pub note: String,
}

/// Append-only map from constant names to values.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstantLedger {
    pub entries: BTreeMap<String, ConstantEntry>,
}

impl ConstantLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records `name`; an existing entry is replaced only if the value is larger
    /// (constants in upper bounds may only grow).
    pub fn record(&mut self, name: &str, value: f64, provenance: Provenance, note: impl Into<String>) -> f64 {
        let e = ConstantEntry {
            value,
            provenance,
            note: note.into(),
        };
        match self.entries.get(name) {
            Some(old) if old.value >= value => old.value,
            _ => {
                self.entries.insert(name.to_string(), e);
                value
            }
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.entries.get(name).map(|e| e.value)
    }

    pub fn require(&self, name: &str) -> Result<f64> {
        self.get(name)
            .ok_or_else(|| Error::Data(format!("constant {name} missing from the ledger")))
    }

    /// Copies entries of `other` under `prefix`.
    pub fn absorb(&mut self, prefix: &str, other: &ConstantLedger) {
        for (k, v) in &other.entries {
            self.entries.insert(format!("{prefix}{k}"), v.clone());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_keeps_the_larger_value() {
        let mut l = ConstantLedger::new();
        l.record("c1", 2.0, Provenance::Fitted, "first");
        assert_eq!(l.record("c1", 1.0, Provenance::Fitted, "smaller"), 2.0);
        assert_eq!(l.record("c1", 3.0, Provenance::Fitted, "larger"), 3.0);
        assert!(l.require("c2").is_err());
    }
}
