use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ClassId, ClassRegistry};
use crate::{Error, Result};

pub const TIE_RULE_LEXICOGRAPHIC: &str = "lex";

/// Which side of a [`MetaSplit`] a pool is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    MetaTrain,
    MetaTest,
}

/// Partition of the registered classes into meta-train and meta-test sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetaSplit {
    meta_train: BTreeSet<ClassId>,
    meta_test: BTreeSet<ClassId>,
}

impl MetaSplit {
    pub fn new(
        registry: &ClassRegistry,
        meta_train: BTreeSet<ClassId>,
        meta_test: BTreeSet<ClassId>,
    ) -> Result<Self> {
        if let Some(id) = meta_train.intersection(&meta_test).next() {
            return Err(Error::Validation(format!(
                "class {:?} is on both sides of the split",
                registry.name(*id)
            )));
        }
        for id in registry.ids() {
            if !meta_train.contains(&id) && !meta_test.contains(&id) {
                return Err(Error::Validation(format!(
                    "class {:?} is on neither side of the split",
                    registry.name(id)
                )));
            }
        }
        if let Some(id) = meta_train
            .iter()
            .chain(&meta_test)
            .find(|id| id.0 >= registry.len())
        {
            return Err(Error::Validation(format!("unknown class id {id}")));
        }
        Ok(Self {
            meta_train,
            meta_test,
        })
    }

    pub fn meta_train(&self) -> &BTreeSet<ClassId> {
        &self.meta_train
    }

    pub fn meta_test(&self) -> &BTreeSet<ClassId> {
        &self.meta_test
    }

    pub fn classes(&self, side: Side) -> &BTreeSet<ClassId> {
        match side {
            Side::MetaTrain => &self.meta_train,
            Side::MetaTest => &self.meta_test,
        }
    }

    pub fn to_document(&self, registry: &ClassRegistry) -> SplitDocument {
        let names = |set: &BTreeSet<ClassId>| {
            let mut v: Vec<String> = set.iter().map(|&id| registry.name(id).to_owned()).collect();
            v.sort();
            v
        };
        SplitDocument {
            meta_train: names(&self.meta_train),
            meta_test: names(&self.meta_test),
            tie_rule: TIE_RULE_LEXICOGRAPHIC.to_owned(),
        }
    }

    pub fn from_document(doc: &SplitDocument, registry: &ClassRegistry) -> Result<Self> {
        let ids = |names: &[String]| {
            names
                .iter()
                .map(|n| {
                    registry
                        .id_of(n)
                        .ok_or_else(|| Error::Validation(format!("split names unknown class {n:?}")))
                })
                .collect::<Result<BTreeSet<_>>>()
        };
        Self::new(registry, ids(&doc.meta_train)?, ids(&doc.meta_test)?)
    }
}

/// On-disk form of a [`MetaSplit`], keyed by class name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitDocument {
    pub meta_train: Vec<String>,
    pub meta_test: Vec<String>,
    pub tie_rule: String,
}

impl SplitDocument {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self).expect("split document serializes");
        fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }
}

/// Sends the `n_test_classes` classes with the fewest instances to
/// meta-test (ties broken by class name, ascending) and all others to
/// meta-train.
pub fn split_by_scarcity(registry: &ClassRegistry, n_test_classes: usize) -> Result<MetaSplit> {
    if n_test_classes >= registry.len() {
        return Err(Error::Argument(format!(
            "n_test_classes ({n_test_classes}) must be smaller than the number of classes ({})",
            registry.len()
        )));
    }
    let mut order: Vec<ClassId> = registry.ids().collect();
    order.sort_by(|&a, &b| {
        registry
            .count(a)
            .cmp(&registry.count(b))
            .then_with(|| registry.name(a).cmp(registry.name(b)))
    });
    let meta_test: BTreeSet<ClassId> = order[..n_test_classes].iter().copied().collect();
    let meta_train: BTreeSet<ClassId> = order[n_test_classes..].iter().copied().collect();
    MetaSplit::new(registry, meta_train, meta_test)
}
