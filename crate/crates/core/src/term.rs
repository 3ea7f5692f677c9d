//! Content-language terms.
//!
//! A [`Term`] is the body of every message and the pattern carried by every
//! protocol transition. Concrete syntax:
//!
//! ```text
//! term     := constant | number | string | variable | compound
//! constant := [A-Za-z][A-Za-z0-9_]*
//! number   := -?[0-9]+
//! string   := '"' chars '"'          (escapes: \" \\ \n \t \r)
//! variable := '?' [A-Za-z][A-Za-z0-9_]*
//! compound := constant '(' term (',' term)* ')'
//! ```
//!
//! Whitespace between tokens is ignored on input. The canonical rendering
//! produced by [`Display`](std::fmt::Display) contains no whitespace outside
//! string literals.
//!
//! Matching is one-way: a pattern (which may contain variables) is matched
//! against a ground term under an existing [`BindingSet`]. Bindings are
//! write-once.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Const(String),
    Int(i64),
    Str(String),
    /// Variable name without the `?` sigil.
    Var(String),
    Compound(String, Vec<Term>),
}

/// Returns true if `s` matches `[A-Za-z][A-Za-z0-9_]*`.
pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl Term {
    pub fn constant(name: impl Into<String>) -> Self {
        Term::Const(name.into())
    }

    pub fn int(value: i64) -> Self {
        Term::Int(value)
    }

    pub fn string(value: impl Into<String>) -> Self {
        Term::Str(value.into())
    }

    pub fn var(name: impl Into<String>) -> Self {
        Term::Var(name.into())
    }

    pub fn compound(functor: impl Into<String>, args: Vec<Term>) -> Self {
        Term::Compound(functor.into(), args)
    }

    /// Checks the structural invariants that the constructors do not:
    /// identifier syntax for constants, variables and functors, and
    /// non-empty argument lists.
    pub fn is_well_formed(&self) -> bool {
        match self {
            Term::Const(s) | Term::Var(s) => is_identifier(s),
            Term::Int(_) | Term::Str(_) => true,
            Term::Compound(f, args) => {
                is_identifier(f) && !args.is_empty() && args.iter().all(Term::is_well_formed)
            }
        }
    }

    pub fn is_ground(&self) -> bool {
        match self {
            Term::Var(_) => false,
            Term::Compound(_, args) => args.iter().all(Term::is_ground),
            _ => true,
        }
    }

    /// Variable names in first-occurrence order, without duplicates.
    pub fn variables(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Term::Var(v) => {
                if !out.contains(&v.as_str()) {
                    out.push(v);
                }
            }
            Term::Compound(_, args) => args.iter().for_each(|a| a.collect_vars(out)),
            _ => {}
        }
    }

    /// Every subterm, including `self`, in pre-order.
    pub fn subterms(&self) -> Vec<&Term> {
        let mut out = vec![self];
        if let Term::Compound(_, args) = self {
            for a in args {
                out.extend(a.subterms());
            }
        }
        out
    }

    /// True if the constant `name` occurs anywhere in the term.
    pub fn mentions(&self, name: &str) -> bool {
        self.subterms()
            .iter()
            .any(|t| matches!(t, Term::Const(c) if c == name))
    }

    pub fn functor(&self) -> Option<&str> {
        match self {
            Term::Const(s) | Term::Compound(s, _) => Some(s),
            _ => None,
        }
    }

    pub fn args(&self) -> &[Term] {
        match self {
            Term::Compound(_, args) => args,
            _ => &[],
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Term::Int(n) => Some(*n),
            _ => None,
        }
    }

    pub fn as_const(&self) -> Option<&str> {
        match self {
            Term::Const(s) => Some(s),
            _ => None,
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Term::Compound(_, args) => 1 + args.iter().map(Term::depth).max().unwrap_or(0),
            _ => 1,
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Const(s) => f.write_str(s),
            Term::Int(n) => write!(f, "{n}"),
            Term::Var(v) => write!(f, "?{v}"),
            Term::Str(s) => {
                f.write_str("\"")?;
                for c in s.chars() {
                    match c {
                        '"' => f.write_str("\\\"")?,
                        '\\' => f.write_str("\\\\")?,
                        '\n' => f.write_str("\\n")?,
                        '\t' => f.write_str("\\t")?,
                        '\r' => f.write_str("\\r")?,
                        c => write!(f, "{c}")?,
                    }
                }
                f.write_str("\"")
            }
            Term::Compound(functor, args) => {
                write!(f, "{functor}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

/// Canonical rendering of a term.
pub fn format_term(t: &Term) -> String {
    t.to_string()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax error at byte {position}: {message}")]
pub struct TermSyntaxError {
    pub position: usize,
    pub message: String,
}

/// Parses a term from its concrete syntax.
pub fn parse_term(source: &str) -> Result<Term, TermSyntaxError> {
    let mut p = Parser {
        src: source,
        pos: 0,
    };
    p.skip_ws();
    if p.at_end() {
        return Err(p.error("empty input"));
    }
    let t = p.term()?;
    p.skip_ws();
    if !p.at_end() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(t)
}

impl FromStr for Term {
    type Err = TermSyntaxError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_term(s)
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl Parser<'_> {
    fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(c) if c.is_whitespace()) {
            self.bump();
        }
    }

    fn error(&self, message: impl Into<String>) -> TermSyntaxError {
        TermSyntaxError {
            position: self.pos,
            message: message.into(),
        }
    }

    fn identifier(&mut self) -> Option<&str> {
        let start = self.pos;
        match self.peek() {
            Some(c) if c.is_ascii_alphabetic() => {
                self.bump();
            }
            _ => return None,
        }
        while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || c == '_') {
            self.bump();
        }
        Some(&self.src[start..self.pos])
    }

    fn term(&mut self) -> Result<Term, TermSyntaxError> {
        self.skip_ws();
        match self.peek() {
            None => Err(self.error("expected a term")),
            Some('?') => {
                self.bump();
                match self.identifier() {
                    Some(name) => Ok(Term::Var(name.to_string())),
                    None => Err(self.error("bad variable name")),
                }
            }
            Some('"') => self.string(),
            Some(c) if c == '-' || c.is_ascii_digit() => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                let name = self.identifier().unwrap_or_default().to_string();
                self.skip_ws();
                if self.peek() == Some('(') {
                    self.bump();
                    let args = self.args()?;
                    Ok(Term::Compound(name, args))
                } else {
                    Ok(Term::Const(name))
                }
            }
            Some('(') => Err(self.error("empty functor")),
            Some(c) => Err(self.error(format!("unexpected character {c:?}"))),
        }
    }

    fn args(&mut self) -> Result<Vec<Term>, TermSyntaxError> {
        let mut args = Vec::new();
        self.skip_ws();
        if self.peek() == Some(')') {
            return Err(self.error("empty argument list"));
        }
        loop {
            args.push(self.term()?);
            self.skip_ws();
            match self.bump() {
                Some(',') => continue,
                Some(')') => return Ok(args),
                Some(_) => {
                    self.pos -= 1;
                    return Err(self.error("expected ',' or ')'"));
                }
                None => return Err(self.error("unbalanced parentheses")),
            }
        }
    }

    fn number(&mut self) -> Result<Term, TermSyntaxError> {
        let start = self.pos;
        if self.peek() == Some('-') {
            self.bump();
        }
        let digits = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
            self.bump();
        }
        if self.pos == digits {
            return Err(self.error("expected digits"));
        }
        self.src[start..self.pos]
            .parse::<i64>()
            .map(Term::Int)
            .map_err(|_| TermSyntaxError {
                position: start,
                message: "integer out of range".into(),
            })
    }

    fn string(&mut self) -> Result<Term, TermSyntaxError> {
        let start = self.pos;
        self.bump();
        let mut out = String::new();
        loop {
            match self.bump() {
                None => {
                    return Err(TermSyntaxError {
                        position: start,
                        message: "unterminated string".into(),
                    })
                }
                Some('"') => return Ok(Term::Str(out)),
                Some('\\') => match self.bump() {
                    Some('"') => out.push('"'),
                    Some('\\') => out.push('\\'),
                    Some('n') => out.push('\n'),
                    Some('t') => out.push('\t'),
                    Some('r') => out.push('\r'),
                    _ => return Err(self.error("bad escape sequence")),
                },
                Some(c) => out.push(c),
            }
        }
    }
}

/// Write-once map from variable name to ground term.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct BindingSet(BTreeMap<String, Term>);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BindError {
    #[error("value bound to ?{0} is not ground")]
    NotGround(String),
    #[error("?{name} is already bound to {existing}")]
    Conflict { name: String, existing: Term },
}

impl BindingSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, name: &str) -> Option<&Term> {
        self.0.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.0.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Term)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Binds `name` to `value`. Rebinding to an identical value is a no-op;
    /// rebinding to anything else fails and leaves the set unchanged.
    pub fn bind(&mut self, name: &str, value: Term) -> Result<(), BindError> {
        if !value.is_ground() {
            return Err(BindError::NotGround(name.to_string()));
        }
        match self.0.get(name) {
            Some(existing) if *existing == value => Ok(()),
            Some(existing) => Err(BindError::Conflict {
                name: name.to_string(),
                existing: existing.clone(),
            }),
            None => {
                self.0.insert(name.to_string(), value);
                Ok(())
            }
        }
    }

    pub(crate) fn release(&mut self, name: &str) {
        self.0.remove(name);
    }

    /// True if every binding in `other` is present, with the same value, in `self`.
    pub fn extends(&self, other: &BindingSet) -> bool {
        other.iter().all(|(k, v)| self.get(k) == Some(v))
    }
}

impl<K: Into<String>> FromIterator<(K, Term)> for BindingSet {
    /// Collects pairs into a binding set. Later duplicates of a name are ignored.
    fn from_iter<I: IntoIterator<Item = (K, Term)>>(iter: I) -> Self {
        let mut map = BTreeMap::new();
        for (k, v) in iter {
            map.entry(k.into()).or_insert(v);
        }
        BindingSet(map)
    }
}

impl fmt::Display for BindingSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (k, v)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{k}={v}")?;
        }
        f.write_str("}")
    }
}

/// Matches `pattern` against the ground term `ground`, extending `bindings`.
///
/// Returns `None` on any structural mismatch or binding conflict. The input
/// binding set is never modified.
pub fn match_pattern(pattern: &Term, ground: &Term, bindings: &BindingSet) -> Option<BindingSet> {
    let mut out = bindings.clone();
    match_into(pattern, ground, &mut out).then_some(out)
}

fn match_into(pattern: &Term, ground: &Term, b: &mut BindingSet) -> bool {
    match (pattern, ground) {
        (Term::Var(name), _) => b.bind(name, ground.clone()).is_ok(),
        (Term::Compound(f, args), Term::Compound(g, gargs)) => {
            f == g
                && args.len() == gargs.len()
                && args.iter().zip(gargs).all(|(p, g)| match_into(p, g, b))
        }
        (Term::Compound(..), _) => false,
        _ => pattern == ground,
    }
}

/// Replaces every bound variable in `t`; unbound variables are left in place.
pub fn substitute(t: &Term, bindings: &BindingSet) -> Term {
    match t {
        Term::Var(name) => bindings.get(name).cloned().unwrap_or_else(|| t.clone()),
        Term::Compound(f, args) => Term::Compound(
            f.clone(),
            args.iter().map(|a| substitute(a, bindings)).collect(),
        ),
        _ => t.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> Term {
        parse_term(s).unwrap()
    }

    fn binds(pairs: &[(&str, &str)]) -> BindingSet {
        pairs.iter().map(|(k, v)| (*k, t(v))).collect()
    }

    #[test]
    fn parses_constant() {
        assert_eq!(t("openAccount"), Term::constant("openAccount"));
    }

    #[test]
    fn parses_pattern_with_variables() {
        assert_eq!(
            t("openedAccount(?id,?amt)"),
            Term::compound("openedAccount", vec![Term::var("id"), Term::var("amt")])
        );
    }

    #[test]
    fn parses_with_whitespace() {
        assert_eq!(
            t("buy(acme, 10)"),
            Term::compound("buy", vec![Term::constant("acme"), Term::int(10)])
        );
        assert_eq!(t("  f ( a ,\n -3 )  "), t("f(a,-3)"));
    }

    #[test]
    fn formats_canonically() {
        assert_eq!(t("buy(acme, 10)").to_string(), "buy(acme,10)");
        assert_eq!(Term::var("amt").to_string(), "?amt");
        assert_eq!(
            Term::string("local:localhost").to_string(),
            "\"local:localhost\""
        );
        assert_eq!(Term::string("a\"b\\c").to_string(), r#""a\"b\\c""#);
    }

    #[test]
    fn string_escapes_round_trip() {
        let s = Term::string("tab\there\nnew \"q\" \\");
        assert_eq!(parse_term(&s.to_string()).unwrap(), s);
    }

    #[test]
    fn syntax_errors_carry_position() {
        let e = parse_term("f(a,b").unwrap_err();
        assert_eq!(e.message, "unbalanced parentheses");
        let e = parse_term("(a)").unwrap_err();
        assert_eq!((e.position, e.message.as_str()), (0, "empty functor"));
        let e = parse_term("f(?1x)").unwrap_err();
        assert_eq!((e.position, e.message.as_str()), (3, "bad variable name"));
        assert!(parse_term("f()").is_err());
        assert!(parse_term("").is_err());
        assert!(parse_term("a b").is_err());
        assert!(parse_term("99999999999999999999").is_err());
        assert!(parse_term("\"open").is_err());
    }

    #[test]
    fn groundness() {
        assert!(t("f(a,g(1,\"x\"))").is_ground());
        assert!(!t("f(a,g(1,?x))").is_ground());
    }

    #[test]
    fn match_identical_constants() {
        let b = match_pattern(&t("openAccount"), &t("openAccount"), &BindingSet::new());
        assert_eq!(b, Some(BindingSet::new()));
    }

    #[test]
    fn match_binds_variables() {
        let b = match_pattern(
            &t("openedAccount(?id,?amt)"),
            &t("openedAccount(acc1,10000)"),
            &BindingSet::new(),
        );
        assert_eq!(b, Some(binds(&[("id", "acc1"), ("amt", "10000")])));
    }

    #[test]
    fn match_respects_write_once() {
        let b = binds(&[("s", "ibex")]);
        assert_eq!(
            match_pattern(&t("price(?s,?p)"), &t("price(acme,17)"), &b),
            None
        );
        // same value is fine
        let ok = match_pattern(&t("price(?s,?p)"), &t("price(ibex,17)"), &b).unwrap();
        assert_eq!(ok, binds(&[("s", "ibex"), ("p", "17")]));
    }

    #[test]
    fn repeated_variable_must_agree() {
        let p = t("pair(?x,?x)");
        assert!(match_pattern(&p, &t("pair(a,a)"), &BindingSet::new()).is_some());
        assert!(match_pattern(&p, &t("pair(a,b)"), &BindingSet::new()).is_none());
    }

    #[test]
    fn mismatches() {
        let e = BindingSet::new();
        assert!(match_pattern(&t("f(a)"), &t("g(a)"), &e).is_none());
        assert!(match_pattern(&t("f(a)"), &t("f(a,b)"), &e).is_none());
        assert!(match_pattern(&t("f(a)"), &t("f"), &e).is_none());
        assert!(match_pattern(&t("1"), &t("\"1\""), &e).is_none());
        assert!(match_pattern(&t("Acme"), &t("acme"), &e).is_none());
    }

    #[test]
    fn substitution() {
        assert_eq!(
            substitute(&t("?amt"), &binds(&[("amt", "10000")])),
            t("10000")
        );
        assert_eq!(
            substitute(&t("buy(?s,?q)"), &binds(&[("s", "acme")])),
            t("buy(acme,?q)")
        );
        assert_eq!(substitute(&t("done"), &BindingSet::new()), t("done"));
    }

    #[test]
    fn binding_set_rejects_non_ground() {
        let mut b = BindingSet::new();
        assert_eq!(
            b.bind("x", t("f(?y)")),
            Err(BindError::NotGround("x".into()))
        );
        assert!(b.is_empty());
    }

    #[test]
    fn mentions_finds_nested_constants() {
        assert!(t("request(buy(bait1,2))").mentions("bait1"));
        assert!(!t("request(buy(bait12,2))").mentions("bait1"));
    }
}
