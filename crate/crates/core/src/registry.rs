//! Name-indexed tables of interchangeable strategies.
//!
//! Each strategy family (pressure solvers, coupling schemes) exposes a
//! `&'static [Entry<F>]` table; configuration and the CLI select an entry by
//! name and call its constructor.

use crate::{Error, Result};

pub struct Entry<F: 'static> {
    pub name: &'static str,
    pub summary: &'static str,
    pub build: F,
}

pub struct Registry<F: 'static> {
    kind: &'static str,
    entries: &'static [Entry<F>],
}

impl<F: 'static> Registry<F> {
    pub const fn new(kind: &'static str, entries: &'static [Entry<F>]) -> Self {
        Self { kind, entries }
    }

    pub fn kind(&self) -> &'static str {
        self.kind
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.entries.iter().map(|e| e.name)
    }

    pub fn entries(&self) -> &'static [Entry<F>] {
        self.entries
    }

    pub fn lookup(&self, name: &str) -> Result<&'static Entry<F>> {
        self.entries
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| Error::UnknownStrategy {
                kind: self.kind,
                name: name.to_string(),
                available: self.names().collect::<Vec<_>>().join(", "),
            })
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.iter().any(|e| e.name == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    static TABLE: &[Entry<fn() -> u32>] = &[
        Entry {
            name: "one",
            summary: "",
            build: || 1,
        },
        Entry {
            name: "two",
            summary: "",
            build: || 2,
        },
    ];

    #[test]
    fn lookup_by_name() {
        let reg = Registry::new("number", TABLE);
        assert_eq!((reg.lookup("two").unwrap().build)(), 2);
        let err = reg.lookup("three").err().unwrap().to_string();
        assert!(err.contains("one, two"), "{err}");
    }
}
