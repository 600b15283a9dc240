//! Name-keyed registries of interchangeable strategies.
//!
//! Each strategy family is a trait; implementations register under a stable
//! name and are resolved at runtime from CLI flags.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Implemented by every registrable strategy.
pub trait Named {
    fn name(&self) -> &'static str;
}

pub struct Registry<T: ?Sized + Named> {
    kind: &'static str,
    entries: BTreeMap<&'static str, Arc<T>>,
    default: Option<&'static str>,
}

impl<T: ?Sized + Named> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Registry {
            kind,
            entries: BTreeMap::new(),
            default: None,
        }
    }

    /// Registers a strategy under its own name, replacing any previous
    /// entry with that name. The first registration becomes the default.
    pub fn register(&mut self, strategy: Arc<T>) -> &mut Self {
        let name = strategy.name();
        self.default.get_or_insert(name);
        self.entries.insert(name, strategy);
        self
    }

    pub fn with(mut self, strategy: Arc<T>) -> Self {
        self.register(strategy);
        self
    }

    pub fn set_default(&mut self, name: &str) -> Result<()> {
        let strategy = self.get(name)?;
        self.default = Some(strategy.name());
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<Arc<T>> {
        self.entries.get(name).cloned().ok_or_else(|| Error::UnknownStrategy {
            kind: self.kind,
            name: name.to_string(),
            available: self.names().join(", "),
        })
    }

    pub fn default_strategy(&self) -> Option<Arc<T>> {
        self.default.and_then(|n| self.entries.get(n).cloned())
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.keys().copied().collect()
    }

    pub fn kind(&self) -> &'static str {
        self.kind
    }
}
