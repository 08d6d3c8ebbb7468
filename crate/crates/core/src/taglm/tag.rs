//! Structured tags and the tag-inventory sidecar format.
//!
//! One tag per line:
//!
//! ```text
//! id|category|name=value,name=value|role:label:relation:modifiee;...|ordering
//! ```
//!
//! The feature field may be empty. Ids must be dense, starting at 0.

use std::collections::HashMap;
use std::fmt;
use std::io::{self, BufRead, Write};

use crate::corpus::normalize::is_punctuation;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RoleTuple {
    pub role: String,
    /// Functionality label.
    pub label: String,
    /// Position relation to the modifiee (e.g. `L` or `R`).
    pub relation: String,
    pub modifiee: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StructuredTag {
    pub category: String,
    pub features: Vec<(String, String)>,
    pub roles: Vec<RoleTuple>,
    /// Modifiee ordering constraint.
    pub ordering: String,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TagError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("tag has no role tuples")]
    NoRoles,
    #[error("punctuation tag {0:?} carries lexical features")]
    PunctuationFeatures(String),
    #[error("field {0:?} contains a reserved separator")]
    Separator(String),
    #[error("tag ids must be dense from 0; found {found} at position {expected}")]
    SparseIds { expected: usize, found: usize },
    #[error("tag {0} is defined twice")]
    Duplicate(usize),
    #[error("unknown tag id {0}")]
    UnknownTag(usize),
    #[error(transparent)]
    Io(#[from] IoMessage),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{0}")]
pub struct IoMessage(pub String);

impl From<io::Error> for TagError {
    fn from(e: io::Error) -> Self {
        TagError::Io(IoMessage(e.to_string()))
    }
}

fn check_field(s: &str, forbidden: &[char]) -> Result<(), TagError> {
    if s.chars().any(|c| c == '|' || c == '\n' || forbidden.contains(&c)) {
        Err(TagError::Separator(s.to_string()))
    } else {
        Ok(())
    }
}

impl StructuredTag {
    /// A bare tag for plain part-of-speech corpora: one role, no features.
    pub fn simple(category: &str) -> Self {
        StructuredTag {
            category: category.to_string(),
            features: Vec::new(),
            roles: vec![RoleTuple {
                role: "G".into(),
                label: category.to_string(),
                relation: "-".into(),
                modifiee: "-".into(),
            }],
            ordering: "-".into(),
        }
    }

    pub fn is_punctuation(&self) -> bool {
        is_punctuation(&self.category)
    }

    pub fn validate(&self) -> Result<(), TagError> {
        if self.roles.is_empty() {
            return Err(TagError::NoRoles);
        }
        if self.is_punctuation() && !self.features.is_empty() {
            return Err(TagError::PunctuationFeatures(self.category.clone()));
        }
        if self.category.is_empty() {
            return Err(TagError::Separator(String::new()));
        }
        check_field(&self.category, &[])?;
        for (k, v) in &self.features {
            check_field(k, &[',', '='])?;
            check_field(v, &[',', '='])?;
        }
        for r in &self.roles {
            for f in [&r.role, &r.label, &r.relation, &r.modifiee] {
                check_field(f, &[';', ':'])?;
            }
        }
        check_field(&self.ordering, &[])?;
        Ok(())
    }

    pub fn parse(s: &str) -> Result<Self, String> {
        let fields: Vec<&str> = s.split('|').collect();
        if fields.len() != 4 {
            return Err(format!("expected 4 '|'-separated fields, found {}", fields.len()));
        }
        let features = if fields[1].is_empty() {
            Vec::new()
        } else {
            fields[1]
                .split(',')
                .map(|kv| {
                    kv.split_once('=')
                        .map(|(k, v)| (k.to_string(), v.to_string()))
                        .ok_or_else(|| format!("feature {kv:?} is not name=value"))
                })
                .collect::<Result<_, _>>()?
        };
        let roles = fields[2]
            .split(';')
            .filter(|r| !r.is_empty())
            .map(|r| {
                let parts: Vec<&str> = r.split(':').collect();
                match parts[..] {
                    [role, label, relation, modifiee] => Ok(RoleTuple {
                        role: role.into(),
                        label: label.into(),
                        relation: relation.into(),
                        modifiee: modifiee.into(),
                    }),
                    _ => Err(format!("role tuple {r:?} needs 4 ':'-separated parts")),
                }
            })
            .collect::<Result<_, _>>()?;
        let tag = StructuredTag {
            category: fields[0].to_string(),
            features,
            roles,
            ordering: fields[3].to_string(),
        };
        tag.validate().map_err(|e| e.to_string())?;
        Ok(tag)
    }
}

impl fmt::Display for StructuredTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let feats: Vec<String> = self.features.iter().map(|(k, v)| format!("{k}={v}")).collect();
        let roles: Vec<String> = self
            .roles
            .iter()
            .map(|r| format!("{}:{}:{}:{}", r.role, r.label, r.relation, r.modifiee))
            .collect();
        write!(f, "{}|{}|{}|{}", self.category, feats.join(","), roles.join(";"), self.ordering)
    }
}

/// Dense, stable ids for distinct tag structures.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TagInventory {
    tags: Vec<StructuredTag>,
    ids: HashMap<StructuredTag, usize>,
}

impl TagInventory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, tag: StructuredTag) -> Result<usize, TagError> {
        if let Some(&id) = self.ids.get(&tag) {
            return Ok(id);
        }
        tag.validate()?;
        let id = self.tags.len();
        self.ids.insert(tag.clone(), id);
        self.tags.push(tag);
        Ok(id)
    }

    pub fn get(&self, id: usize) -> Option<&StructuredTag> {
        self.tags.get(id)
    }

    pub fn id_of(&self, tag: &StructuredTag) -> Option<usize> {
        self.ids.get(tag).copied()
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &StructuredTag)> {
        self.tags.iter().enumerate()
    }

    pub fn write<W: Write>(&self, mut out: W) -> io::Result<()> {
        for (id, tag) in self.iter() {
            writeln!(out, "{id}|{tag}")?;
        }
        out.flush()
    }

    pub fn read<R: BufRead>(input: R) -> Result<Self, TagError> {
        let mut inv = TagInventory::new();
        for (idx, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let err = |msg: String| TagError::Parse { line: idx + 1, msg };
            let (id, rest) = line.split_once('|').ok_or_else(|| err("missing tag id".into()))?;
            let id: usize = id.trim().parse().map_err(|_| err(format!("bad tag id {id:?}")))?;
            let tag = StructuredTag::parse(rest).map_err(err)?;
            if inv.ids.contains_key(&tag) {
                return Err(TagError::Duplicate(id));
            }
            if id != inv.len() {
                return Err(TagError::SparseIds {
                    expected: inv.len(),
                    found: id,
                });
            }
            inv.intern(tag)?;
        }
        Ok(inv)
    }
}
