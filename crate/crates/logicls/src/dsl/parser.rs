//! Recursive descent over the token stream. Syntax errors point at the
//! offending token; semantic errors (undeclared names, duplicates, bad
//! geometry) point at the declaration or use site. Name resolution is
//! order-independent: a constraint may precede the `classes` line.

use std::collections::BTreeMap;

use super::lexer::{lex, Tok, Token};
use super::{
    AttrFilter, Comparator, Constraint, ParseError, ParseErrorKind, RegionDecl, RegionShape, Rule,
    ScenarioSpec, Selector,
};
use crate::geometry::BBox;

pub fn parse(src: &str) -> Result<ScenarioSpec, ParseError> {
    let tokens = lex(src)?;
    Parser {
        tokens,
        pos: 0,
        pending: Vec::new(),
    }
    .scenario()
}

enum NameCheck {
    ClassDeclared(String),
    RegionDeclared(String),
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    /// Use-site checks resolved once the whole file is parsed.
    pending: Vec<(u32, u32, NameCheck)>,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn semantic(line: u32, col: u32, message: impl Into<String>) -> ParseError {
        ParseError {
            line,
            col,
            kind: ParseErrorKind::Semantic,
            message: message.into(),
        }
    }

    fn expect(&mut self, want: &Tok) -> Result<Token, ParseError> {
        let t = self.next();
        if t.tok == *want {
            Ok(t)
        } else {
            Err(Self::syntax_at(
                t.line,
                t.col,
                format!("expected {}, found {}", want.describe(), t.tok.describe()),
            ))
        }
    }

    fn expect_ident(&mut self) -> Result<(String, u32, u32), ParseError> {
        let t = self.next();
        match t.tok {
            Tok::Ident(s) => Ok((s, t.line, t.col)),
            other => Err(Self::syntax_at(
                t.line,
                t.col,
                format!("expected identifier, found {}", other.describe()),
            )),
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        let (word, line, col) = self.expect_ident()?;
        if word == kw {
            Ok(())
        } else {
            Err(Self::syntax_at(line, col, format!("expected '{kw}', found '{word}'")))
        }
    }

    fn syntax_at(line: u32, col: u32, message: String) -> ParseError {
        ParseError {
            line,
            col,
            kind: ParseErrorKind::Syntax,
            message,
        }
    }

    fn skip_newlines(&mut self) {
        while matches!(self.peek().tok, Tok::Newline) {
            self.next();
        }
    }

    /// Statement terminator: newline(s) or the closing brace.
    fn end_statement(&mut self) -> Result<(), ParseError> {
        match &self.peek().tok {
            Tok::Newline => {
                self.skip_newlines();
                Ok(())
            }
            Tok::RBrace => Ok(()),
            other => {
                let t = self.peek();
                Err(Self::syntax_at(
                    t.line,
                    t.col,
                    format!("expected end of line, found {}", other.describe()),
                ))
            }
        }
    }

    fn scenario(mut self) -> Result<ScenarioSpec, ParseError> {
        self.skip_newlines();
        self.expect_keyword("scenario")?;
        let name_tok = self.next();
        let name = match name_tok.tok {
            Tok::Str(s) if !s.is_empty() => s,
            Tok::Str(_) => {
                return Err(Self::semantic(
                    name_tok.line,
                    name_tok.col,
                    "scenario name cannot be empty",
                ))
            }
            other => {
                return Err(Self::syntax_at(
                    name_tok.line,
                    name_tok.col,
                    format!("expected quoted scenario name, found {}", other.describe()),
                ))
            }
        };
        self.expect(&Tok::LBrace)?;
        self.skip_newlines();

        let mut spec = ScenarioSpec {
            name,
            classes: Vec::new(),
            regions: Vec::new(),
            maxcounts: BTreeMap::new(),
            constraints: Vec::new(),
        };
        let mut saw_classes = false;

        loop {
            self.skip_newlines();
            if matches!(self.peek().tok, Tok::RBrace) {
                self.next();
                break;
            }
            let (word, line, col) = self.expect_ident()?;
            match word.as_str() {
                "classes" => {
                    if saw_classes {
                        return Err(Self::semantic(line, col, "duplicate 'classes' statement"));
                    }
                    saw_classes = true;
                    self.classes_stmt(&mut spec)?;
                }
                "region" => self.region_stmt(&mut spec)?,
                "maxcount" => self.maxcount_stmt(&mut spec)?,
                "constraint" => self.constraint_stmt(&mut spec)?,
                other => {
                    return Err(Self::syntax_at(
                        line,
                        col,
                        format!("expected 'classes', 'region', 'maxcount', or 'constraint', found '{other}'"),
                    ))
                }
            }
            self.end_statement()?;
        }

        self.skip_newlines();
        let t = self.peek().clone();
        if !matches!(t.tok, Tok::Eof) {
            return Err(Self::syntax_at(
                t.line,
                t.col,
                format!("expected end of file, found {}", t.tok.describe()),
            ));
        }

        self.resolve_pending(&spec)?;
        Ok(spec)
    }

    fn classes_stmt(&mut self, spec: &mut ScenarioSpec) -> Result<(), ParseError> {
        self.expect(&Tok::Colon)?;
        loop {
            let (name, line, col) = self.expect_ident()?;
            if spec.classes.contains(&name) {
                return Err(Self::semantic(line, col, format!("duplicate class '{name}'")));
            }
            spec.classes.push(name);
            if matches!(self.peek().tok, Tok::Comma) {
                self.next();
            } else {
                break;
            }
        }
        Ok(())
    }

    fn region_stmt(&mut self, spec: &mut ScenarioSpec) -> Result<(), ParseError> {
        let (name, line, col) = self.expect_ident()?;
        if spec.region(&name).is_some() {
            return Err(Self::semantic(line, col, format!("duplicate region '{name}'")));
        }
        self.expect(&Tok::Assign)?;
        let shape = match &self.peek().tok {
            Tok::LBracket => RegionShape::Box(self.bbox_literal()?),
            Tok::Ident(w) if w == "grid" => {
                self.next();
                self.expect(&Tok::LParen)?;
                let (rows, rline, rcol) = self.int_literal("grid rows")?;
                self.expect(&Tok::Comma)?;
                let (cols, _, _) = self.int_literal("grid cols")?;
                self.expect(&Tok::RParen)?;
                self.expect_keyword("over")?;
                let over = self.bbox_literal()?;
                if rows == 0 || cols == 0 {
                    return Err(Self::semantic(rline, rcol, "grid dimensions must be at least 1"));
                }
                RegionShape::Grid { rows, cols, over }
            }
            other => {
                let t = self.peek();
                return Err(Self::syntax_at(
                    t.line,
                    t.col,
                    format!(
                        "expected '[x1, y1, x2, y2]' or 'grid(rows, cols) over [...]', found {}",
                        other.describe()
                    ),
                ));
            }
        };
        spec.regions.push(RegionDecl { name, shape });
        Ok(())
    }

    fn maxcount_stmt(&mut self, spec: &mut ScenarioSpec) -> Result<(), ParseError> {
        let (category, line, col) = self.expect_ident()?;
        if spec.maxcounts.contains_key(&category) {
            return Err(Self::semantic(
                line,
                col,
                format!("duplicate maxcount for '{category}'"),
            ));
        }
        self.pending
            .push((line, col, NameCheck::ClassDeclared(category.clone())));
        self.expect(&Tok::Assign)?;
        let (value, vline, vcol) = self.int_literal("maxcount")?;
        if value == 0 {
            return Err(Self::semantic(vline, vcol, "maxcount must be at least 1"));
        }
        spec.maxcounts.insert(category, value);
        Ok(())
    }

    fn constraint_stmt(&mut self, spec: &mut ScenarioSpec) -> Result<(), ParseError> {
        let (id, line, col) = self.expect_ident()?;
        if spec.constraint(&id).is_some() {
            return Err(Self::semantic(line, col, format!("duplicate constraint id '{id}'")));
        }
        self.expect_keyword("violation")?;
        self.expect(&Tok::Assign)?;
        let cat_tok = self.next();
        let violation_category = match cat_tok.tok {
            Tok::Str(s) if !s.is_empty() => s,
            Tok::Str(_) => {
                return Err(Self::semantic(
                    cat_tok.line,
                    cat_tok.col,
                    "violation category cannot be empty",
                ))
            }
            other => {
                return Err(Self::syntax_at(
                    cat_tok.line,
                    cat_tok.col,
                    format!("expected quoted violation category, found {}", other.describe()),
                ))
            }
        };
        if violation_category == crate::scene::NORMAL_LABEL {
            return Err(Self::semantic(
                cat_tok.line,
                cat_tok.col,
                "'normal' is reserved and cannot be a violation category",
            ));
        }
        let rule = self.rule()?;
        spec.constraints.push(Constraint {
            id,
            violation_category,
            rule,
        });
        Ok(())
    }

    fn rule(&mut self) -> Result<Rule, ParseError> {
        let (kind, line, col) = self.expect_ident()?;
        match kind.as_str() {
            "count" => {
                self.expect(&Tok::LParen)?;
                let selector = self.selector()?;
                self.expect(&Tok::RParen)?;
                let cmp = self.comparator()?;
                let (threshold, _, _) = self.int_literal("count threshold")?;
                let region = if matches!(&self.peek().tok, Tok::Ident(w) if w == "per") {
                    self.next();
                    let (name, rline, rcol) = self.expect_ident()?;
                    self.pending
                        .push((rline, rcol, NameCheck::RegionDeclared(name.clone())));
                    Some(name)
                } else {
                    None
                };
                Ok(Rule::Count {
                    selector,
                    cmp,
                    threshold,
                    region,
                })
            }
            "relation" => {
                let (a, b) = self.selector_pair()?;
                self.expect_keyword("is")?;
                let (name, rline, rcol) = self.expect_ident()?;
                let relation = super::RelationKind::from_name(&name).ok_or_else(|| {
                    Self::semantic(
                        rline,
                        rcol,
                        format!(
                            "unknown relation '{name}', expected one of: {}",
                            super::RelationKind::ALL.map(|r| r.name()).join(", ")
                        ),
                    )
                })?;
                Ok(Rule::Relation { a, b, relation })
            }
            "distance" => {
                let (a, b) = self.selector_pair()?;
                let cmp = self.comparator()?;
                let (threshold, _, _) = self.num_literal()?;
                Ok(Rule::Distance { a, b, cmp, threshold })
            }
            "size_ratio" => {
                let (a, b) = self.selector_pair()?;
                let cmp = self.comparator()?;
                let (threshold, _, _) = self.num_literal()?;
                Ok(Rule::SizeRatio { a, b, cmp, threshold })
            }
            "attribute" => {
                self.expect(&Tok::LParen)?;
                let selector = self.selector()?;
                self.expect(&Tok::Comma)?;
                let (key, _, _) = self.expect_ident()?;
                self.expect(&Tok::RParen)?;
                self.expect_keyword("in")?;
                self.expect(&Tok::LBrace)?;
                let mut allowed = Vec::new();
                loop {
                    let (value, vline, vcol) = self.value()?;
                    if allowed.contains(&value) {
                        return Err(Self::semantic(
                            vline,
                            vcol,
                            format!("duplicate value '{value}' in attribute set"),
                        ));
                    }
                    allowed.push(value);
                    match self.next() {
                        Token { tok: Tok::Comma, .. } => continue,
                        Token { tok: Tok::RBrace, .. } => break,
                        t => {
                            return Err(Self::syntax_at(
                                t.line,
                                t.col,
                                format!("expected ',' or '}}' in attribute set, found {}", t.tok.describe()),
                            ))
                        }
                    }
                }
                Ok(Rule::AttributeIn { selector, key, allowed })
            }
            "pairing" => {
                let (a, b) = self.selector_pair()?;
                self.expect_keyword("by")?;
                let (by_key, _, _) = self.expect_ident()?;
                let order_by = if matches!(&self.peek().tok, Tok::Ident(w) if w == "order_by") {
                    self.next();
                    Some(self.expect_ident()?.0)
                } else {
                    None
                };
                Ok(Rule::Pairing { a, b, by_key, order_by })
            }
            other => Err(Self::syntax_at(
                line,
                col,
                format!(
                    "expected rule ('count', 'relation', 'distance', 'size_ratio', 'attribute', 'pairing'), found '{other}'"
                ),
            )),
        }
    }

    fn selector_pair(&mut self) -> Result<(Selector, Selector), ParseError> {
        self.expect(&Tok::LParen)?;
        let a = self.selector()?;
        self.expect(&Tok::Comma)?;
        let b = self.selector()?;
        self.expect(&Tok::RParen)?;
        Ok((a, b))
    }

    fn selector(&mut self) -> Result<Selector, ParseError> {
        let (category, line, col) = self.expect_ident()?;
        self.pending
            .push((line, col, NameCheck::ClassDeclared(category.clone())));
        let filter = if matches!(self.peek().tok, Tok::LBracket) {
            self.next();
            let (key, _, _) = self.expect_ident()?;
            self.expect(&Tok::Assign)?;
            let (value, _, _) = self.value()?;
            self.expect(&Tok::RBracket)?;
            Some(AttrFilter { key, value })
        } else {
            None
        };
        Ok(Selector { category, filter })
    }

    /// Attribute values may be bare identifiers, quoted strings, or
    /// numbers (kept as written).
    fn value(&mut self) -> Result<(String, u32, u32), ParseError> {
        let t = self.next();
        match t.tok {
            Tok::Ident(s) => Ok((s, t.line, t.col)),
            Tok::Str(s) => Ok((s, t.line, t.col)),
            Tok::Num { raw, .. } => Ok((raw, t.line, t.col)),
            other => Err(Self::syntax_at(
                t.line,
                t.col,
                format!("expected attribute value, found {}", other.describe()),
            )),
        }
    }

    fn comparator(&mut self) -> Result<Comparator, ParseError> {
        let t = self.next();
        let cmp = match t.tok {
            Tok::CmpEq => Comparator::Eq,
            Tok::CmpNe => Comparator::Ne,
            Tok::CmpLt => Comparator::Lt,
            Tok::CmpLe => Comparator::Le,
            Tok::CmpGt => Comparator::Gt,
            Tok::CmpGe => Comparator::Ge,
            other => {
                return Err(Self::syntax_at(
                    t.line,
                    t.col,
                    format!("expected comparator (==, !=, <, <=, >, >=), found {}", other.describe()),
                ))
            }
        };
        Ok(cmp)
    }

    fn int_literal(&mut self, what: &str) -> Result<(u32, u32, u32), ParseError> {
        let t = self.next();
        match t.tok {
            Tok::Num { value, is_int: true, .. } if value <= u32::MAX as f64 => {
                Ok((value as u32, t.line, t.col))
            }
            Tok::Num { raw, .. } => Err(Self::semantic(
                t.line,
                t.col,
                format!("{what} must be a non-negative integer, got {raw}"),
            )),
            other => Err(Self::syntax_at(
                t.line,
                t.col,
                format!("expected integer {what}, found {}", other.describe()),
            )),
        }
    }

    fn num_literal(&mut self) -> Result<(f64, u32, u32), ParseError> {
        let t = self.next();
        match t.tok {
            Tok::Num { value, .. } => Ok((value, t.line, t.col)),
            other => Err(Self::syntax_at(
                t.line,
                t.col,
                format!("expected number, found {}", other.describe()),
            )),
        }
    }

    fn bbox_literal(&mut self) -> Result<BBox, ParseError> {
        let open = self.expect(&Tok::LBracket)?;
        let (x1, ..) = self.num_literal()?;
        self.expect(&Tok::Comma)?;
        let (y1, ..) = self.num_literal()?;
        self.expect(&Tok::Comma)?;
        let (x2, ..) = self.num_literal()?;
        self.expect(&Tok::Comma)?;
        let (y2, ..) = self.num_literal()?;
        self.expect(&Tok::RBracket)?;
        BBox::new(x1, y1, x2, y2).map_err(|e| Self::semantic(open.line, open.col, e.to_string()))
    }

    fn resolve_pending(&self, spec: &ScenarioSpec) -> Result<(), ParseError> {
        for (line, col, check) in &self.pending {
            match check {
                NameCheck::ClassDeclared(name) => {
                    if !spec.classes.contains(name) {
                        return Err(Self::semantic(
                            *line,
                            *col,
                            format!("undeclared class '{name}' (declared: {})", spec.classes.join(", ")),
                        ));
                    }
                }
                NameCheck::RegionDeclared(name) => {
                    if spec.region(name).is_none() {
                        return Err(Self::semantic(*line, *col, format!("undeclared region '{name}'")));
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::RelationKind;

    const PUSHPINS: &str = r#"
# one pin per compartment
scenario "pushpins" {
  classes: pushpin
  region compartments = grid(3, 5) over [0, 0, 1500, 900]
  maxcount pushpin = 15
  constraint pin_present violation="missing_pushpin" count(pushpin) >= 1 per compartments
  constraint pin_single violation="additional_pushpin" count(pushpin) <= 1 per compartments
}
"#;

    #[test]
    fn parses_grid_scenario() {
        let spec = parse(PUSHPINS).unwrap();
        assert_eq!(spec.name, "pushpins");
        assert_eq!(spec.classes, vec!["pushpin"]);
        assert_eq!(spec.constraints.len(), 2);
        assert_eq!(spec.maxcounts["pushpin"], 15);
        match &spec.regions[0].shape {
            RegionShape::Grid { rows, cols, .. } => assert_eq!((*rows, *cols), (3, 5)),
            other => panic!("unexpected shape {other:?}"),
        }
        assert_eq!(
            spec.violation_categories(),
            vec!["missing_pushpin", "additional_pushpin"]
        );
    }

    #[test]
    fn parses_every_rule_form() {
        let src = r#"
scenario "kitchen" {
  classes: bottle, cap, label, liquid, cable, terminal
  region shelf = [0, 0, 800, 600]
  maxcount liquid = 1
  maxcount cable = 3
  constraint c1 violation="wrong_fill" size_ratio(liquid, bottle) >= 0.55
  constraint c2 violation="cap_off" relation(cap, bottle) is above
  constraint c3 violation="label_far" distance(label, bottle) <= 200
  constraint c4 violation="bad_flavor" attribute(liquid, flavor) in {cherry, orange, banana}
  constraint c5 violation="miswired" pairing(cable, terminal) by link order_by slot
  constraint c6 violation="extra_caps" count(cap[state=loose]) == 0
}
"#;
        let spec = parse(src).unwrap();
        assert_eq!(spec.constraints.len(), 6);
        match &spec.constraints[1].rule {
            Rule::Relation { relation, .. } => assert_eq!(*relation, RelationKind::Above),
            other => panic!("unexpected {other:?}"),
        }
        match &spec.constraints[3].rule {
            Rule::AttributeIn { allowed, .. } => assert_eq!(allowed, &["cherry", "orange", "banana"]),
            other => panic!("unexpected {other:?}"),
        }
        match &spec.constraints[5].rule {
            Rule::Count { selector, .. } => {
                assert_eq!(selector.to_string(), "cap[state=loose]");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn undeclared_selector_class_is_semantic_error_with_position() {
        let src = r#"scenario "s" {
  classes: screw, nut
  constraint c violation="missing_washer" count(washer) >= 1
}"#;
        let err = parse(src).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::Semantic);
        assert_eq!(err.line, 3);
        assert!(err.message.contains("washer"), "{}", err.message);
    }

    #[test]
    fn use_before_declaration_is_fine() {
        let src = r#"scenario "s" {
  constraint c violation="none_found" count(widget) >= 1
  classes: widget
}"#;
        assert!(parse(src).is_ok());
    }

    #[test]
    fn unknown_relation_lists_options() {
        let src = r#"scenario "s" {
  classes: a, b
  constraint c violation="x" relation(a, b) is atop
}"#;
        let err = parse(src).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::Semantic);
        assert!(err.message.contains("left_of"));
    }

    #[test]
    fn duplicate_constraint_id_rejected() {
        let src = r#"scenario "s" {
  classes: a
  constraint c violation="x" count(a) >= 1
  constraint c violation="y" count(a) <= 3
}"#;
        let err = parse(src).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::Semantic);
        assert!(err.message.contains("duplicate constraint id"));
    }

    #[test]
    fn undeclared_region_rejected() {
        let src = r#"scenario "s" {
  classes: a
  constraint c violation="x" count(a) >= 1 per tray
}"#;
        let err = parse(src).unwrap_err();
        assert!(err.message.contains("undeclared region 'tray'"));
    }

    #[test]
    fn degenerate_region_box_rejected() {
        let src = r#"scenario "s" {
  classes: a
  region r = [100, 0, 50, 10]
}"#;
        let err = parse(src).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::Semantic);
    }

    #[test]
    fn fractional_count_threshold_rejected() {
        let src = r#"scenario "s" {
  classes: a
  constraint c violation="x" count(a) >= 1.5
}"#;
        let err = parse(src).unwrap_err();
        assert!(err.message.contains("integer"));
    }

    #[test]
    fn two_statements_on_one_line_rejected() {
        let src = r#"scenario "s" {
  classes: a maxcount a = 3
}"#;
        let err = parse(src).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::Syntax);
        assert!(err.message.contains("end of line"));
    }

    #[test]
    fn normal_is_reserved() {
        let src = r#"scenario "s" {
  classes: a
  constraint c violation="normal" count(a) >= 1
}"#;
        let err = parse(src).unwrap_err();
        assert!(err.message.contains("reserved"));
    }

    #[test]
    fn maxcount_zero_rejected() {
        let src = r#"scenario "s" {
  classes: a
  maxcount a = 0
}"#;
        assert!(parse(src).is_err());
    }

    #[test]
    fn trailing_garbage_rejected() {
        let err = parse("scenario \"s\" {\n}\nextra").unwrap_err();
        assert!(err.message.contains("end of file"));
    }
}
