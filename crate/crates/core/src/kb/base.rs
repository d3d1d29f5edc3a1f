use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markup::{read_jsonl, write_jsonl};

/// One knowledge-base entry. The title is the entity identifier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityRecord {
    pub title: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub aliases: Vec<String>,
}

impl EntityRecord {
    pub fn new(title: impl Into<String>, description: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            description: description.into(),
            aliases: Vec::new(),
        }
    }
}

/// Entities in insertion order with a title index.
#[derive(Debug, Clone, Default)]
pub struct KnowledgeBase {
    entities: Vec<EntityRecord>,
    by_title: HashMap<String, usize>,
}

impl KnowledgeBase {
    pub fn build(entries: impl IntoIterator<Item = EntityRecord>) -> Result<Self> {
        let mut kb = Self::default();
        for e in entries {
            if e.title.trim().is_empty() {
                return Err(Error::InvalidEntry("empty title".into()));
            }
            if kb.by_title.contains_key(&e.title) {
                return Err(Error::DuplicateTitle(e.title));
            }
            kb.by_title.insert(e.title.clone(), kb.entities.len());
            kb.entities.push(e);
        }
        Ok(kb)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::build(read_jsonl::<EntityRecord>(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_jsonl(path, &self.entities)
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn get(&self, index: usize) -> &EntityRecord {
        &self.entities[index]
    }

    pub fn index_of(&self, title: &str) -> Option<usize> {
        self.by_title.get(title).copied()
    }

    pub fn contains(&self, title: &str) -> bool {
        self.by_title.contains_key(title)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, EntityRecord> {
        self.entities.iter()
    }

    pub fn titles(&self) -> impl Iterator<Item = &str> + '_ {
        self.entities.iter().map(|e| e.title.as_str())
    }
}
