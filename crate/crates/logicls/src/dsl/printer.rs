//! Canonical text form. `parse(serialize(spec))` reconstructs the same
//! spec: statement order is classes, regions (file order), maxcounts
//! (sorted by category), constraints (file order).

use std::fmt::Write;

use super::{RegionShape, Rule, ScenarioSpec, Selector};
use crate::geometry::BBox;

pub fn serialize(spec: &ScenarioSpec) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "scenario {} {{", quoted(&spec.name));
    if !spec.classes.is_empty() {
        let _ = writeln!(out, "  classes: {}", spec.classes.join(", "));
    }
    for region in &spec.regions {
        match &region.shape {
            RegionShape::Box(b) => {
                let _ = writeln!(out, "  region {} = {}", region.name, bbox(b));
            }
            RegionShape::Grid { rows, cols, over } => {
                let _ = writeln!(
                    out,
                    "  region {} = grid({rows}, {cols}) over {}",
                    region.name,
                    bbox(over)
                );
            }
        }
    }
    for (category, bound) in &spec.maxcounts {
        let _ = writeln!(out, "  maxcount {category} = {bound}");
    }
    for c in &spec.constraints {
        let _ = write!(out, "  constraint {} violation={} ", c.id, quoted(&c.violation_category));
        match &c.rule {
            Rule::Count {
                selector,
                cmp,
                threshold,
                region,
            } => {
                let _ = write!(out, "count({}) {cmp} {threshold}", sel(selector));
                if let Some(r) = region {
                    let _ = write!(out, " per {r}");
                }
            }
            Rule::Relation { a, b, relation } => {
                let _ = write!(out, "relation({}, {}) is {relation}", sel(a), sel(b));
            }
            Rule::Distance { a, b, cmp, threshold } => {
                let _ = write!(out, "distance({}, {}) {cmp} {threshold}", sel(a), sel(b));
            }
            Rule::SizeRatio { a, b, cmp, threshold } => {
                let _ = write!(out, "size_ratio({}, {}) {cmp} {threshold}", sel(a), sel(b));
            }
            Rule::AttributeIn { selector, key, allowed } => {
                let values: Vec<String> = allowed.iter().map(|v| value_token(v)).collect();
                let _ = write!(out, "attribute({}, {key}) in {{{}}}", sel(selector), values.join(", "));
            }
            Rule::Pairing { a, b, by_key, order_by } => {
                let _ = write!(out, "pairing({}, {}) by {by_key}", sel(a), sel(b));
                if let Some(k) = order_by {
                    let _ = write!(out, " order_by {k}");
                }
            }
        }
        out.push('\n');
    }
    out.push_str("}\n");
    out
}

fn bbox(b: &BBox) -> String {
    format!("[{}, {}, {}, {}]", b.x1(), b.y1(), b.x2(), b.y2())
}

fn sel(s: &Selector) -> String {
    match &s.filter {
        None => s.category.clone(),
        Some(f) => format!("{}[{}={}]", s.category, f.key, value_token(&f.value)),
    }
}

fn is_bare_ident(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn is_bare_number(s: &str) -> bool {
    let mut parts = s.splitn(2, '.');
    let int = parts.next().unwrap_or("");
    if int.is_empty() || !int.chars().all(|c| c.is_ascii_digit()) {
        return false;
    }
    match parts.next() {
        None => true,
        Some(frac) => !frac.is_empty() && frac.chars().all(|c| c.is_ascii_digit()),
    }
}

/// Values that lex as identifiers or numbers print bare; anything else
/// is quoted.
fn value_token(v: &str) -> String {
    if is_bare_ident(v) || is_bare_number(v) {
        v.to_string()
    } else {
        quoted(v)
    }
}

fn quoted(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            other => out.push(other),
        }
    }
    out.push('"');
    out
}
