//! Reachability properties over feature predicates.
//!
//! Grammar (whitespace-insensitive):
//!
//! ```text
//! property  := "P" "=?" "[" "F" pred "]"
//!            | "P" cmp number "[" "F" pred "]"
//! pred      := conj ("|" conj)*
//! conj      := unary ("&" unary)*
//! unary     := "!" unary | "(" pred ")" | name cmp integer
//! cmp       := "=" | "!=" | "<" | "<=" | ">" | ">="
//! ```

use std::fmt;

use crate::error::PropertyError;
use crate::model::{FeatureSchema, StateVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Comparison {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl Comparison {
    pub fn holds<T: PartialOrd>(self, lhs: T, rhs: T) -> bool {
        match self {
            Comparison::Eq => lhs == rhs,
            Comparison::Ne => lhs != rhs,
            Comparison::Lt => lhs < rhs,
            Comparison::Le => lhs <= rhs,
            Comparison::Gt => lhs > rhs,
            Comparison::Ge => lhs >= rhs,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Comparison::Eq => "=",
            Comparison::Ne => "!=",
            Comparison::Lt => "<",
            Comparison::Le => "<=",
            Comparison::Gt => ">",
            Comparison::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Predicate {
    Atom { feature: String, cmp: Comparison, value: i64 },
    Not(Box<Predicate>),
    And(Box<Predicate>, Box<Predicate>),
    Or(Box<Predicate>, Box<Predicate>),
}

impl Predicate {
    pub fn atom(feature: &str, cmp: Comparison, value: i64) -> Self {
        Predicate::Atom { feature: feature.to_string(), cmp, value }
    }

    pub fn and(self, other: Predicate) -> Self {
        Predicate::And(Box::new(self), Box::new(other))
    }

    pub fn or(self, other: Predicate) -> Self {
        Predicate::Or(Box::new(self), Box::new(other))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(self) -> Self {
        Predicate::Not(Box::new(self))
    }

    /// Resolves feature names against `schema`.
    pub fn bind(&self, schema: &FeatureSchema) -> Result<BoundPredicate, PropertyError> {
        let node = match self {
            Predicate::Atom { feature, cmp, value } => {
                let index = schema
                    .index_of(feature)
                    .ok_or_else(|| PropertyError::UnknownFeature(feature.clone()))?;
                BoundPredicate::Atom { index, cmp: *cmp, value: *value }
            }
            Predicate::Not(p) => BoundPredicate::Not(Box::new(p.bind(schema)?)),
            Predicate::And(a, b) => {
                BoundPredicate::And(Box::new(a.bind(schema)?), Box::new(b.bind(schema)?))
            }
            Predicate::Or(a, b) => {
                BoundPredicate::Or(Box::new(a.bind(schema)?), Box::new(b.bind(schema)?))
            }
        };
        Ok(node)
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Nested binary operands are always parenthesized so that printing
        // and re-parsing reproduces the same tree.
        fn operand(f: &mut fmt::Formatter<'_>, p: &Predicate) -> fmt::Result {
            match p {
                Predicate::And(..) | Predicate::Or(..) => write!(f, "({p})"),
                _ => write!(f, "{p}"),
            }
        }
        match self {
            Predicate::Atom { feature, cmp, value } => write!(f, "{feature}{}{value}", cmp.symbol()),
            Predicate::Not(p) => match **p {
                Predicate::Atom { .. } | Predicate::Not(_) => write!(f, "!{p}"),
                _ => write!(f, "!({p})"),
            },
            Predicate::And(a, b) => {
                operand(f, a)?;
                write!(f, " & ")?;
                operand(f, b)
            }
            Predicate::Or(a, b) => {
                operand(f, a)?;
                write!(f, " | ")?;
                operand(f, b)
            }
        }
    }
}

/// A predicate whose feature references are resolved to indices.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundPredicate {
    Atom { index: usize, cmp: Comparison, value: i64 },
    Not(Box<BoundPredicate>),
    And(Box<BoundPredicate>, Box<BoundPredicate>),
    Or(Box<BoundPredicate>, Box<BoundPredicate>),
}

impl BoundPredicate {
    pub fn eval(&self, values: &[i64]) -> bool {
        match self {
            BoundPredicate::Atom { index, cmp, value } => cmp.holds(values[*index], *value),
            BoundPredicate::Not(p) => !p.eval(values),
            BoundPredicate::And(a, b) => a.eval(values) && b.eval(values),
            BoundPredicate::Or(a, b) => a.eval(values) || b.eval(values),
        }
    }

    pub fn holds(&self, s: &StateVector) -> bool {
        self.eval(s.values())
    }
}

/// Binds `pred` to `schema` and evaluates it on `s`.
pub fn bind_and_eval(
    pred: &Predicate,
    s: &StateVector,
    schema: &FeatureSchema,
) -> Result<bool, PropertyError> {
    Ok(pred.bind(schema)?.holds(s))
}

#[derive(Debug, Clone, PartialEq)]
pub enum QueryMode {
    /// `P=? [...]`: compute the probability.
    Query,
    /// `P~p [...]`: compare the probability against a bound.
    Threshold { cmp: Comparison, bound: f64 },
}

/// `P=? [ F pred ]` or `P~p [ F pred ]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PropertyQuery {
    pub mode: QueryMode,
    pub target: Predicate,
}

impl PropertyQuery {
    pub fn query(target: Predicate) -> Self {
        Self { mode: QueryMode::Query, target }
    }
}

impl fmt::Display for PropertyQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.mode {
            QueryMode::Query => write!(f, "P=?")?,
            QueryMode::Threshold { cmp, bound } => write!(f, "P{}{bound}", cmp.symbol())?,
        }
        write!(f, " [ F {} ]", self.target)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Ident(String),
    Number(String),
    Cmp(Comparison),
    QueryMark,
    Not,
    And,
    Or,
    LParen,
    RParen,
    LBracket,
    RBracket,
}

fn tokenize(text: &str) -> Result<Vec<(usize, Token)>, PropertyError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let start = i;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push((start, Token::Ident(chars[start..i].iter().collect())));
            continue;
        }
        if c.is_ascii_digit() || c == '.' || c == '-' {
            i += 1;
            while i < chars.len()
                && (chars[i].is_ascii_digit() || matches!(chars[i], '.' | 'e' | 'E'))
            {
                i += 1;
            }
            out.push((start, Token::Number(chars[start..i].iter().collect())));
            continue;
        }
        // Maximal run of operator characters, then classify it.
        if "=!<>?".contains(c) {
            while i < chars.len() && "=!<>?".contains(chars[i]) {
                i += 1;
            }
            let op: String = chars[start..i].iter().collect();
            let tok = match op.as_str() {
                "=" => Token::Cmp(Comparison::Eq),
                "!=" => Token::Cmp(Comparison::Ne),
                "<" => Token::Cmp(Comparison::Lt),
                "<=" => Token::Cmp(Comparison::Le),
                ">" => Token::Cmp(Comparison::Gt),
                ">=" => Token::Cmp(Comparison::Ge),
                "=?" => Token::QueryMark,
                _ if op.chars().all(|c| c == '!') => {
                    for k in 0..op.len() {
                        out.push((start + k, Token::Not));
                    }
                    continue;
                }
                _ => {
                    return Err(PropertyError::UnknownOperator { position: start, operator: op })
                }
            };
            out.push((start, tok));
            continue;
        }
        let tok = match c {
            '&' => Token::And,
            '|' => Token::Or,
            '(' => Token::LParen,
            ')' => Token::RParen,
            '[' => Token::LBracket,
            ']' => Token::RBracket,
            _ => {
                return Err(PropertyError::Syntax {
                    position: start,
                    message: format!("unexpected character {c:?}"),
                })
            }
        };
        out.push((start, tok));
        i += 1;
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<(usize, Token)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(_, t)| t)
    }

    fn position(&self) -> usize {
        self.tokens.get(self.pos).map(|(p, _)| *p).unwrap_or(self.end)
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T, PropertyError> {
        Err(PropertyError::Syntax { position: self.position(), message: message.into() })
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).map(|(_, t)| t.clone());
        self.pos += 1;
        t
    }

    fn expect(&mut self, want: Token, what: &str) -> Result<(), PropertyError> {
        if self.peek() == Some(&want) {
            self.pos += 1;
            Ok(())
        } else {
            self.error(format!("expected {what}"))
        }
    }

    fn property(&mut self) -> Result<PropertyQuery, PropertyError> {
        match self.peek() {
            Some(Token::Ident(s)) if s == "P" => self.pos += 1,
            _ => return self.error("expected `P`"),
        }
        let mode = match self.next() {
            Some(Token::QueryMark) => QueryMode::Query,
            Some(Token::Cmp(cmp)) => {
                let text = match self.next() {
                    Some(Token::Number(n)) => n,
                    _ => {
                        self.pos -= 1;
                        return self.error("expected probability bound");
                    }
                };
                let bound: f64 = match text.parse() {
                    Ok(b) => b,
                    Err(_) => {
                        self.pos -= 1;
                        return self.error(format!("invalid probability bound {text:?}"));
                    }
                };
                if !(0.0..=1.0).contains(&bound) {
                    return Err(PropertyError::BoundOutOfRange(bound));
                }
                QueryMode::Threshold { cmp, bound }
            }
            _ => {
                self.pos -= 1;
                return self.error("expected `=?` or a comparison operator after `P`");
            }
        };
        self.expect(Token::LBracket, "`[`")?;
        match self.peek() {
            Some(Token::Ident(s)) if s == "F" => self.pos += 1,
            _ => return self.error("expected `F`"),
        }
        if matches!(self.peek(), None | Some(Token::RBracket)) {
            return self.error("expected predicate");
        }
        let target = self.disjunction()?;
        self.expect(Token::RBracket, "`]`")?;
        if self.pos < self.tokens.len() {
            return self.error("unexpected trailing input");
        }
        Ok(PropertyQuery { mode, target })
    }

    fn disjunction(&mut self) -> Result<Predicate, PropertyError> {
        let mut lhs = self.conjunction()?;
        while self.peek() == Some(&Token::Or) {
            self.pos += 1;
            lhs = lhs.or(self.conjunction()?);
        }
        Ok(lhs)
    }

    fn conjunction(&mut self) -> Result<Predicate, PropertyError> {
        let mut lhs = self.unary()?;
        while self.peek() == Some(&Token::And) {
            self.pos += 1;
            lhs = lhs.and(self.unary()?);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Predicate, PropertyError> {
        match self.peek() {
            Some(Token::Not) => {
                self.pos += 1;
                Ok(self.unary()?.not())
            }
            Some(Token::LParen) => {
                self.pos += 1;
                let inner = self.disjunction()?;
                self.expect(Token::RParen, "`)`")?;
                Ok(inner)
            }
            Some(Token::Ident(_)) => {
                let Some(Token::Ident(feature)) = self.next() else { unreachable!() };
                let cmp = match self.next() {
                    Some(Token::Cmp(c)) => c,
                    _ => {
                        self.pos -= 1;
                        return self.error("expected comparison operator");
                    }
                };
                let value = match self.next() {
                    Some(Token::Number(n)) => match n.parse::<i64>() {
                        Ok(v) => v,
                        Err(_) => {
                            self.pos -= 1;
                            return self.error(format!("expected integer, found {n:?}"));
                        }
                    },
                    _ => {
                        self.pos -= 1;
                        return self.error("expected integer");
                    }
                };
                Ok(Predicate::Atom { feature, cmp, value })
            }
            _ => self.error("expected predicate"),
        }
    }
}

pub fn parse_property(text: &str) -> Result<PropertyQuery, PropertyError> {
    let tokens = tokenize(text)?;
    Parser { tokens, pos: 0, end: text.chars().count() }.property()
}

/// Parses a bare predicate such as `jobs_done=5 & done=1`.
pub fn parse_predicate(text: &str) -> Result<Predicate, PropertyError> {
    let tokens = tokenize(text)?;
    let mut p = Parser { tokens, pos: 0, end: text.chars().count() };
    let pred = p.disjunction()?;
    if p.pos < p.tokens.len() {
        return p.error("unexpected trailing input");
    }
    Ok(pred)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_query_with_conjunction() {
        let q = parse_property("P=? [ F jobs_done=5 & done=1 ]").unwrap();
        assert_eq!(q.mode, QueryMode::Query);
        assert_eq!(
            q.target,
            Predicate::atom("jobs_done", Comparison::Eq, 5).and(Predicate::atom("done", Comparison::Eq, 1))
        );
    }

    #[test]
    fn parses_threshold() {
        let q = parse_property("P>=1 [ F done=1 ]").unwrap();
        assert_eq!(q.mode, QueryMode::Threshold { cmp: Comparison::Ge, bound: 1.0 });
        let q = parse_property("P<0.1[F(x>=2|!y=0)]").unwrap();
        assert_eq!(q.mode, QueryMode::Threshold { cmp: Comparison::Lt, bound: 0.1 });
    }

    #[test]
    fn missing_predicate() {
        match parse_property("P=? [ F ]") {
            Err(PropertyError::Syntax { message, position }) => {
                assert_eq!(message, "expected predicate");
                assert_eq!(position, 8);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_operator_and_bad_bound() {
        assert!(matches!(
            parse_property("P=? [ F x => 1 ]"),
            Err(PropertyError::UnknownOperator { .. })
        ));
        assert!(matches!(
            parse_property("P>=1.5 [ F x=1 ]"),
            Err(PropertyError::BoundOutOfRange(_))
        ));
        assert!(parse_property("P=? [ F x=1.5 ]").is_err());
        assert!(parse_property("P=? [ F x=1 ] junk").is_err());
    }

    #[test]
    fn evaluation() {
        let schema =
            FeatureSchema::new([("fuel", 0, 14), ("jobs_done", 0, 5), ("done", 0, 1)]).unwrap();
        let s = StateVector::new(vec![0, 3, 1]);
        let done = parse_predicate("done=1").unwrap();
        assert!(bind_and_eval(&done, &s, &schema).unwrap());
        let p = parse_predicate("fuel>0 & !(jobs_done=5)").unwrap();
        assert!(!bind_and_eval(&p, &s, &schema).unwrap());
        let unknown = parse_predicate("speed>0").unwrap();
        assert_eq!(
            bind_and_eval(&unknown, &s, &schema),
            Err(PropertyError::UnknownFeature("speed".into()))
        );
    }

    fn arb_predicate() -> impl Strategy<Value = Predicate> {
        let cmp = prop_oneof![
            Just(Comparison::Eq),
            Just(Comparison::Ne),
            Just(Comparison::Lt),
            Just(Comparison::Le),
            Just(Comparison::Gt),
            Just(Comparison::Ge),
        ];
        let leaf = (prop_oneof![Just("a"), Just("b"), Just("c")], cmp, -3i64..4)
            .prop_map(|(f, c, v)| Predicate::atom(f, c, v));
        leaf.prop_recursive(4, 24, 2, |inner| {
            prop_oneof![
                inner.clone().prop_map(Predicate::not),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| a.and(b)),
                (inner.clone(), inner).prop_map(|(a, b)| a.or(b)),
            ]
        })
    }

    proptest! {
        #[test]
        fn print_parse_fixed_point(pred in arb_predicate(), threshold in proptest::option::of(0.0f64..=1.0)) {
            let q = PropertyQuery {
                mode: match threshold {
                    Some(b) => QueryMode::Threshold { cmp: Comparison::Ge, bound: b },
                    None => QueryMode::Query,
                },
                target: pred,
            };
            let once = parse_property(&q.to_string()).unwrap();
            prop_assert_eq!(&once, &q);
            prop_assert_eq!(parse_property(&once.to_string()).unwrap(), once);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn de_morgan(a in arb_predicate(), b in arb_predicate(), values in proptest::collection::vec(-4i64..5, 3)) {
            let schema = FeatureSchema::new([("a", -4, 4), ("b", -4, 4), ("c", -4, 4)]).unwrap();
            let s = StateVector::new(values);
            let lhs = a.clone().or(b.clone()).not();
            let rhs = a.clone().not().and(b.clone().not());
            let direct = !(bind_and_eval(&a, &s, &schema).unwrap() || bind_and_eval(&b, &s, &schema).unwrap());
            prop_assert_eq!(bind_and_eval(&lhs, &s, &schema).unwrap(), direct);
            prop_assert_eq!(bind_and_eval(&rhs, &s, &schema).unwrap(), direct);
        }
    }
}
