//! Dependency strings with nested USE-conditional groups, e.g.
//! `>=sys-libs/ncurses-6.0 gtk? ( x11-libs/gtk+ !minimal? ( cat/extra ) )`.

use std::fmt;

use thiserror::Error;

use crate::atom::{is_valid_flag, AtomError, DependencyAtom, UseFlagSet};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DepError {
    #[error("unbalanced parenthesis at token {position}")]
    UnbalancedParenthesis { position: usize },
    #[error("conditional {flag:?} is not followed by '('")]
    DanglingConditional { flag: String },
    #[error("conditional {flag:?} has an empty group")]
    EmptyConditional { flag: String },
    #[error("malformed atom: {0}")]
    MalformedAtom(#[from] AtomError),
    #[error("unsupported construct {0:?}")]
    UnsupportedEbuildConstruct(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DependencyExpr {
    Atom(DependencyAtom),
    Cond { flag: String, negated: bool, children: Vec<DependencyExpr> },
    Group(Vec<DependencyExpr>),
}

#[derive(Debug, PartialEq, Eq)]
enum Token<'a> {
    Open,
    Close,
    Word(&'a str),
}

fn tokenize(text: &str) -> Vec<Token<'_>> {
    let mut tokens = Vec::new();
    for word in text.split_whitespace() {
        let mut rest = word;
        while !rest.is_empty() {
            match rest.find(['(', ')']) {
                Some(0) => {
                    tokens.push(if rest.starts_with('(') { Token::Open } else { Token::Close });
                    rest = &rest[1..];
                }
                Some(idx) => {
                    tokens.push(Token::Word(&rest[..idx]));
                    rest = &rest[idx..];
                }
                None => {
                    tokens.push(Token::Word(rest));
                    rest = "";
                }
            }
        }
    }
    tokens
}

struct Parser<'a> {
    tokens: Vec<Token<'a>>,
    pos: usize,
}

impl<'a> Parser<'a> {
    // Parses items until a closing parenthesis (consumed) or end of input.
    fn items(&mut self, nested: bool) -> Result<Vec<DependencyExpr>, DepError> {
        let mut out = Vec::new();
        loop {
            let Some(tok) = self.tokens.get(self.pos) else {
                return if nested {
                    Err(DepError::UnbalancedParenthesis { position: self.pos })
                } else {
                    Ok(out)
                };
            };
            self.pos += 1;
            match *tok {
                Token::Close => {
                    return if nested {
                        Ok(out)
                    } else {
                        Err(DepError::UnbalancedParenthesis { position: self.pos - 1 })
                    };
                }
                Token::Open => out.push(DependencyExpr::Group(self.items(true)?)),
                Token::Word("||") => return Err(DepError::UnsupportedEbuildConstruct("||".into())),
                Token::Word(word) => {
                    if let Some(cond) = word.strip_suffix('?') {
                        let (negated, flag) = match cond.strip_prefix('!') {
                            Some(f) => (true, f),
                            None => (false, cond),
                        };
                        if !is_valid_flag(flag) {
                            return Err(AtomError::MalformedFlag(flag.to_string()).into());
                        }
                        if self.tokens.get(self.pos) != Some(&Token::Open) {
                            return Err(DepError::DanglingConditional { flag: cond.to_string() });
                        }
                        self.pos += 1;
                        let children = self.items(true)?;
                        if children.is_empty() {
                            return Err(DepError::EmptyConditional { flag: cond.to_string() });
                        }
                        out.push(DependencyExpr::Cond { flag: flag.to_string(), negated, children });
                    } else {
                        out.push(DependencyExpr::Atom(DependencyAtom::parse(word)?));
                    }
                }
            }
        }
    }
}

/// Parses a whitespace-separated dependency string into a top-level group.
pub fn parse_dep_string(text: &str) -> Result<DependencyExpr, DepError> {
    let mut parser = Parser { tokens: tokenize(text), pos: 0 };
    Ok(DependencyExpr::Group(parser.items(false)?))
}

/// Flattens `expr` left to right, keeping the children of a conditional
/// iff its flag's presence in `enabled` differs from its negation.
pub fn eval_use_conditionals(expr: &DependencyExpr, enabled: &UseFlagSet) -> Vec<DependencyAtom> {
    let mut out = Vec::new();
    collect(expr, enabled, &mut out);
    out
}

fn collect(expr: &DependencyExpr, enabled: &UseFlagSet, out: &mut Vec<DependencyAtom>) {
    match expr {
        DependencyExpr::Atom(a) => out.push(a.clone()),
        DependencyExpr::Group(children) => children.iter().for_each(|c| collect(c, enabled, out)),
        DependencyExpr::Cond { flag, negated, children } => {
            if enabled.contains(flag) != *negated {
                children.iter().for_each(|c| collect(c, enabled, out));
            }
        }
    }
}

impl DependencyExpr {
    pub fn eval(&self, enabled: &UseFlagSet) -> Vec<DependencyAtom> {
        eval_use_conditionals(self, enabled)
    }

    /// Top-level items rendered individually; a top-level group yields its children.
    pub fn top_level_strings(&self) -> Vec<String> {
        match self {
            DependencyExpr::Group(children) => children
                .iter()
                .map(|c| match c {
                    DependencyExpr::Group(_) => format!("( {c} )"),
                    _ => c.to_string(),
                })
                .collect(),
            other => vec![other.to_string()],
        }
    }
}

// Nested groups are parenthesized; only the root group is rendered bare.
fn write_nested(f: &mut fmt::Formatter<'_>, expr: &DependencyExpr) -> fmt::Result {
    match expr {
        DependencyExpr::Atom(a) => write!(f, "{a}"),
        DependencyExpr::Cond { flag, negated, children } => {
            write!(f, "{}{flag}? (", if *negated { "!" } else { "" })?;
            for c in children {
                f.write_str(" ")?;
                write_nested(f, c)?;
            }
            f.write_str(" )")
        }
        DependencyExpr::Group(children) => {
            f.write_str("(")?;
            for c in children {
                f.write_str(" ")?;
                write_nested(f, c)?;
            }
            f.write_str(" )")
        }
    }
}

impl fmt::Display for DependencyExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DependencyExpr::Group(children) => {
                for (i, c) in children.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" ")?;
                    }
                    write_nested(f, c)?;
                }
                Ok(())
            }
            other => write_nested(f, other),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atom::Specifier;
    use proptest::prelude::*;

    fn atom(s: &str) -> DependencyExpr {
        DependencyExpr::Atom(DependencyAtom::parse(s).unwrap())
    }

    fn flags(f: &[&str]) -> UseFlagSet {
        UseFlagSet::from_flags(f).unwrap()
    }

    const NESTED: &str = "a? ( b? ( cat/p ) cat/q )";

    #[test]
    fn parses_versioned_atom() {
        let expr = parse_dep_string(">=sys-libs/ncurses-6.0").unwrap();
        let DependencyExpr::Group(items) = &expr else { panic!() };
        let DependencyExpr::Atom(a) = &items[0] else { panic!() };
        assert_eq!(a.specifier(), Specifier::GreaterEqual);
        assert_eq!(a.package().to_string(), "sys-libs/ncurses");
    }

    #[test]
    fn parses_conditionals() {
        assert_eq!(
            parse_dep_string("gtk? ( x11-libs/gtk+ )").unwrap(),
            DependencyExpr::Group(vec![DependencyExpr::Cond {
                flag: "gtk".into(),
                negated: false,
                children: vec![atom("x11-libs/gtk+")],
            }])
        );
        assert_eq!(
            parse_dep_string(NESTED).unwrap(),
            DependencyExpr::Group(vec![DependencyExpr::Cond {
                flag: "a".into(),
                negated: false,
                children: vec![
                    DependencyExpr::Cond { flag: "b".into(), negated: false, children: vec![atom("cat/p")] },
                    atom("cat/q"),
                ],
            }])
        );
        let neg = parse_dep_string("!minimal? ( cat/doc )").unwrap();
        assert!(matches!(&neg, DependencyExpr::Group(v) if matches!(&v[0], DependencyExpr::Cond { negated: true, .. })));
        // parentheses glued to words
        assert_eq!(parse_dep_string("gtk? (x11-libs/gtk+)").unwrap(), parse_dep_string("gtk? ( x11-libs/gtk+ )").unwrap());
    }

    #[test]
    fn empty_input_is_empty_group() {
        assert_eq!(parse_dep_string("").unwrap(), DependencyExpr::Group(vec![]));
        assert_eq!(parse_dep_string("  \n\t ").unwrap(), DependencyExpr::Group(vec![]));
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(parse_dep_string("a? ( cat/p"), Err(DepError::UnbalancedParenthesis { .. })));
        assert!(matches!(parse_dep_string("cat/p )"), Err(DepError::UnbalancedParenthesis { .. })));
        assert!(matches!(parse_dep_string("a? cat/p"), Err(DepError::DanglingConditional { .. })));
        assert!(matches!(parse_dep_string("a?"), Err(DepError::DanglingConditional { .. })));
        assert!(matches!(parse_dep_string(">=cat/p-x"), Err(DepError::MalformedAtom(_))));
        assert!(matches!(parse_dep_string("|| ( cat/a cat/b )"), Err(DepError::UnsupportedEbuildConstruct(_))));
        assert!(matches!(parse_dep_string("a? ( )"), Err(DepError::EmptyConditional { .. })));
    }

    #[test]
    fn evaluates_nested_conditionals() {
        let expr = parse_dep_string(NESTED).unwrap();
        let names = |f: &[&str]| -> Vec<String> { expr.eval(&flags(f)).iter().map(|a| a.to_string()).collect() };
        assert_eq!(names(&["a"]), vec!["cat/q"]);
        assert_eq!(names(&["a", "b"]), vec!["cat/p", "cat/q"]);
        assert!(names(&[]).is_empty());
        assert!(names(&["b"]).is_empty());
    }

    #[test]
    fn negation_and_duplicates() {
        let expr = parse_dep_string("cat/a !x? ( cat/a ) x? ( cat/b )").unwrap();
        let on: Vec<_> = expr.eval(&flags(&["x"])).iter().map(ToString::to_string).collect();
        let off: Vec<_> = expr.eval(&flags(&[])).iter().map(ToString::to_string).collect();
        assert_eq!(on, vec!["cat/a", "cat/b"]);
        assert_eq!(off, vec!["cat/a", "cat/a"]);
    }

    #[test]
    fn top_level_strings_split_items() {
        let expr = parse_dep_string(">=a/b-1  x? ( c/d  e/f )").unwrap();
        assert_eq!(expr.top_level_strings(), vec![">=a/b-1", "x? ( c/d e/f )"]);
    }

    fn arb_expr() -> impl Strategy<Value = DependencyExpr> {
        let leaf = (0..5usize, 0..3usize).prop_map(|(p, s)| {
            let text = match s {
                0 => format!("cat/p{p}"),
                1 => format!(">=cat/p{p}-1.{p}"),
                _ => format!("~cat/p{p}-2-r1"),
            };
            DependencyExpr::Atom(DependencyAtom::parse(&text).unwrap())
        });
        leaf.prop_recursive(4, 32, 4, |inner| {
            prop_oneof![
                (0..4usize, any::<bool>(), prop::collection::vec(inner.clone(), 1..4)).prop_map(|(f, negated, children)| {
                    DependencyExpr::Cond { flag: format!("f{f}"), negated, children }
                }),
                prop::collection::vec(inner, 0..3).prop_map(DependencyExpr::Group),
            ]
        })
    }

    proptest! {
        #[test]
        fn render_parse_identity(children in prop::collection::vec(arb_expr(), 0..4)) {
            let tree = DependencyExpr::Group(children);
            let rendered = tree.to_string();
            prop_assert_eq!(parse_dep_string(&rendered).unwrap(), tree);
        }
    }
}
