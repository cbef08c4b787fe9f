//! The constraint language. A scenario file (`.lcs`) declares the
//! object classes that may appear, named regions (plain boxes or grids),
//! per-category instance bounds, and a list of named constraints. Each
//! constraint carries the anomaly category to report when it is
//! violated.
//!
//! ```text
//! # pushpin tray: one pin per compartment
//! scenario "pushpins" {
//!   classes: pushpin
//!   region compartments = grid(3, 5) over [0, 0, 1500, 900]
//!   maxcount pushpin = 15
//!   constraint pin_present violation="missing_pushpin" count(pushpin) >= 1 per compartments
//!   constraint pin_single violation="additional_pushpin" count(pushpin) <= 1 per compartments
//! }
//! ```
//!
//! [`parse`] builds a [`ScenarioSpec`] or reports the first error with
//! line and column. [`serialize`] prints a spec back to canonical text;
//! the pair round-trips.

mod lexer;
mod parser;
mod printer;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::BBox;

pub use parser::parse;
pub use printer::serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseErrorKind {
    Lex,
    Syntax,
    Semantic,
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("line {line}, col {col}: {message}")]
pub struct ParseError {
    pub line: u32,
    pub col: u32,
    pub kind: ParseErrorKind,
    pub message: String,
}

#[derive(Debug, Error)]
pub enum SpecFileError {
    #[error("failed to read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse { path: String, source: ParseError },
}

/// Comparison operator in count, distance, and size-ratio rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparator {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl Comparator {
    pub fn apply(&self, lhs: f64, rhs: f64) -> bool {
        match self {
            Comparator::Eq => lhs == rhs,
            Comparator::Ne => lhs != rhs,
            Comparator::Lt => lhs < rhs,
            Comparator::Le => lhs <= rhs,
            Comparator::Gt => lhs > rhs,
            Comparator::Ge => lhs >= rhs,
        }
    }

    pub fn symbol(&self) -> &'static str {
        match self {
            Comparator::Eq => "==",
            Comparator::Ne => "!=",
            Comparator::Lt => "<",
            Comparator::Le => "<=",
            Comparator::Gt => ">",
            Comparator::Ge => ">=",
        }
    }
}

impl std::fmt::Display for Comparator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationKind {
    LeftOf,
    RightOf,
    Above,
    Below,
    Inside,
    Overlaps,
}

impl RelationKind {
    pub const ALL: [RelationKind; 6] = [
        RelationKind::LeftOf,
        RelationKind::RightOf,
        RelationKind::Above,
        RelationKind::Below,
        RelationKind::Inside,
        RelationKind::Overlaps,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            RelationKind::LeftOf => "left_of",
            RelationKind::RightOf => "right_of",
            RelationKind::Above => "above",
            RelationKind::Below => "below",
            RelationKind::Inside => "inside",
            RelationKind::Overlaps => "overlaps",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|r| r.name() == name)
    }
}

impl std::fmt::Display for RelationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// `category` or `category[key=value]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Selector {
    pub category: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter: Option<AttrFilter>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AttrFilter {
    pub key: String,
    pub value: String,
}

impl Selector {
    pub fn category(cat: impl Into<String>) -> Self {
        Selector {
            category: cat.into(),
            filter: None,
        }
    }

    pub fn filtered(cat: impl Into<String>, key: impl Into<String>, value: impl Into<String>) -> Self {
        Selector {
            category: cat.into(),
            filter: Some(AttrFilter {
                key: key.into(),
                value: value.into(),
            }),
        }
    }

    pub fn matches(&self, obj: &crate::scene::ObjectInstance) -> bool {
        obj.category == self.category
            && self
                .filter
                .as_ref()
                .is_none_or(|f| obj.attr(&f.key) == Some(f.value.as_str()))
    }
}

impl std::fmt::Display for Selector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.filter {
            None => write!(f, "{}", self.category),
            Some(flt) => write!(f, "{}[{}={}]", self.category, flt.key, flt.value),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionDecl {
    pub name: String,
    pub shape: RegionShape,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionShape {
    Box(BBox),
    Grid { rows: u32, cols: u32, over: BBox },
}

impl RegionShape {
    pub fn envelope(&self) -> BBox {
        match self {
            RegionShape::Box(b) => *b,
            RegionShape::Grid { over, .. } => *over,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Rule {
    Count {
        selector: Selector,
        cmp: Comparator,
        threshold: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        region: Option<String>,
    },
    Relation {
        a: Selector,
        b: Selector,
        relation: RelationKind,
    },
    Distance {
        a: Selector,
        b: Selector,
        cmp: Comparator,
        threshold: f64,
    },
    SizeRatio {
        a: Selector,
        b: Selector,
        cmp: Comparator,
        threshold: f64,
    },
    AttributeIn {
        selector: Selector,
        key: String,
        allowed: Vec<String>,
    },
    Pairing {
        a: Selector,
        b: Selector,
        by_key: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        order_by: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub id: String,
    pub violation_category: String,
    pub rule: Rule,
}

/// A parsed scenario. Field order mirrors file order except
/// `maxcounts`, which is keyed by category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    /// Object categories allowed in scenes of this scenario.
    pub classes: Vec<String>,
    pub regions: Vec<RegionDecl>,
    /// Upper bound on instances per category. Required for rules that
    /// expand per object slot (`attribute`, `pairing`).
    pub maxcounts: BTreeMap<String, u32>,
    pub constraints: Vec<Constraint>,
}

impl ScenarioSpec {
    pub fn region(&self, name: &str) -> Option<&RegionDecl> {
        self.regions.iter().find(|r| r.name == name)
    }

    pub fn constraint(&self, id: &str) -> Option<&Constraint> {
        self.constraints.iter().find(|c| c.id == id)
    }

    /// Anomaly categories this scenario can report, in first-mention
    /// order over the constraint list.
    pub fn violation_categories(&self) -> Vec<String> {
        let mut seen = std::collections::BTreeSet::new();
        let mut out = Vec::new();
        for c in &self.constraints {
            if seen.insert(c.violation_category.as_str()) {
                out.push(c.violation_category.clone());
            }
        }
        out
    }
}

pub fn load_spec(path: impl AsRef<Path>) -> Result<ScenarioSpec, SpecFileError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| SpecFileError::Read {
        path: path.display().to_string(),
        source,
    })?;
    parse(&text).map_err(|source| SpecFileError::Parse {
        path: path.display().to_string(),
        source,
    })
}
