//! Recursive-descent parser for the rule DSL.
//!
//! ```text
//! rule     := conj ( "implies" conj )? EOF
//! conj     := atom ( "and" atom )*
//! atom     := "(" conj ")" | operand "->" "startswith" "(" STR ")" | operand OP rhs
//! operand  := IDENT | IDENT "->" "substring" "(" INT "," INT ")"
//! OP       := "=" | "!=" | "in" | "notIn"
//! rhs      := STR | "{"? "[" ( STR ( "," STR )* )? "]" "}"?
//! ```

use thiserror::Error;

use super::ast::{CmpOp, Literal, Operand, RuleExpr};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown operator `{name}` at offset {offset}")]
    UnknownOperator { name: String, offset: usize },
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Str(String),
    Int(usize),
    Op(String),
    Arrow,
    LParen,
    RParen,
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    Comma,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Str(s) => format!("string '{s}'"),
            Tok::Int(n) => format!("number {n}"),
            Tok::Op(s) => format!("operator `{s}`"),
            Tok::Arrow => "`->`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

/// Token plus its 1-based character offset.
type Spanned = (Tok, usize);

fn syntax(offset: usize, message: impl Into<String>) -> ParseError {
    ParseError::Syntax {
        offset,
        message: message.into(),
    }
}

fn tokenize(text: &str) -> Result<Vec<Spanned>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let at = i + 1;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let tok = match c {
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            '[' => Tok::LBracket,
            ']' => Tok::RBracket,
            '{' => Tok::LBrace,
            '}' => Tok::RBrace,
            ',' => Tok::Comma,
            '-' if chars.get(i + 1) == Some(&'>') => {
                i += 2;
                out.push((Tok::Arrow, at));
                continue;
            }
            '\'' | '"' => {
                let end = chars[i + 1..]
                    .iter()
                    .position(|&x| x == c)
                    .ok_or_else(|| syntax(at, "unterminated string literal"))?;
                let s: String = chars[i + 1..i + 1 + end].iter().collect();
                i += end + 2;
                out.push((Tok::Str(s), at));
                continue;
            }
            c if c.is_ascii_digit() => {
                let len = chars[i..].iter().take_while(|x| x.is_ascii_digit()).count();
                let s: String = chars[i..i + len].iter().collect();
                let n = s
                    .parse()
                    .map_err(|_| syntax(at, format!("number `{s}` out of range")))?;
                i += len;
                out.push((Tok::Int(n), at));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let len = chars[i..]
                    .iter()
                    .take_while(|x| x.is_ascii_alphanumeric() || **x == '_' || **x == '.')
                    .count();
                let s: String = chars[i..i + len].iter().collect();
                i += len;
                out.push((Tok::Ident(s), at));
                continue;
            }
            '=' | '!' | '<' | '>' | '~' | '-' => {
                let len = chars[i..]
                    .iter()
                    .take_while(|x| matches!(x, '=' | '!' | '<' | '>' | '~'))
                    .count()
                    .max(1);
                let s: String = chars[i..i + len].iter().collect();
                i += len;
                out.push((Tok::Op(s), at));
                continue;
            }
            other => return Err(syntax(at, format!("unexpected character `{other}`"))),
        };
        out.push((tok, at));
        i += 1;
    }
    out.push((Tok::Eof, chars.len() + 1));
    Ok(out)
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Spanned {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn expect(&mut self, want: Tok) -> Result<(), ParseError> {
        let (tok, at) = self.bump();
        if tok == want {
            Ok(())
        } else {
            Err(syntax(at, format!("expected {}, found {}", want.describe(), tok.describe())))
        }
    }

    fn rule(&mut self) -> Result<RuleExpr, ParseError> {
        let lhs = self.conj()?;
        let expr = if self.is_keyword("implies") {
            self.bump();
            let rhs = self.conj()?;
            RuleExpr::Implies(Box::new(lhs), Box::new(rhs))
        } else {
            lhs
        };
        match self.peek() {
            Tok::Eof => Ok(expr),
            Tok::Ident(s) if s == "implies" => Err(syntax(self.offset(), "chained `implies` is not allowed")),
            other => Err(syntax(self.offset(), format!("unexpected {}", other.describe()))),
        }
    }

    fn conj(&mut self) -> Result<RuleExpr, ParseError> {
        let mut items = Vec::new();
        push_flat(&mut items, self.atom()?);
        while self.is_keyword("and") {
            self.bump();
            push_flat(&mut items, self.atom()?);
        }
        Ok(if items.len() == 1 {
            items.pop().expect("one item")
        } else {
            RuleExpr::And(items)
        })
    }

    fn atom(&mut self) -> Result<RuleExpr, ParseError> {
        if *self.peek() == Tok::LParen {
            self.bump();
            let inner = self.conj()?;
            if self.is_keyword("implies") {
                return Err(syntax(self.offset(), "`implies` is only allowed at the top level"));
            }
            self.expect(Tok::RParen)?;
            return Ok(inner);
        }
        let (tok, at) = self.bump();
        let field = match tok {
            Tok::Ident(name) if !is_reserved(&name) => name,
            other => return Err(syntax(at, format!("expected field name, found {}", other.describe()))),
        };
        let mut operand = Operand::Field(field.clone());
        if *self.peek() == Tok::Arrow {
            self.bump();
            let (tok, at) = self.bump();
            let func = match tok {
                Tok::Ident(f) => f,
                other => return Err(syntax(at, format!("expected function name, found {}", other.describe()))),
            };
            match func.as_str() {
                "startswith" => {
                    self.expect(Tok::LParen)?;
                    let prefix = self.string()?;
                    self.expect(Tok::RParen)?;
                    return Ok(RuleExpr::StartsWith { operand, prefix });
                }
                "substring" => {
                    self.expect(Tok::LParen)?;
                    let (start, a_at) = self.int()?;
                    self.expect(Tok::Comma)?;
                    let (end, _) = self.int()?;
                    self.expect(Tok::RParen)?;
                    if start < 1 || start > end {
                        return Err(syntax(a_at, format!("substring({start},{end}) needs 1 <= a <= b")));
                    }
                    operand = Operand::Substring { field, start, end };
                }
                _ => return Err(ParseError::UnknownOperator { name: func, offset: at }),
            }
        }
        let (tok, at) = self.bump();
        let op = match tok {
            Tok::Op(s) if s == "=" => CmpOp::Eq,
            Tok::Op(s) if s == "!=" => CmpOp::NotEq,
            Tok::Ident(s) if s == "in" => CmpOp::In,
            Tok::Ident(s) if s == "notIn" => CmpOp::NotIn,
            Tok::Op(s) => return Err(ParseError::UnknownOperator { name: s, offset: at }),
            Tok::Ident(s) if !is_reserved(&s) => return Err(ParseError::UnknownOperator { name: s, offset: at }),
            other => return Err(syntax(at, format!("expected comparison operator, found {}", other.describe()))),
        };
        let rhs = if op.takes_list() {
            Literal::List(self.list()?)
        } else {
            Literal::Str(self.string()?)
        };
        Ok(RuleExpr::Compare { lhs: operand, op, rhs })
    }

    fn string(&mut self) -> Result<String, ParseError> {
        match self.bump() {
            (Tok::Str(s), _) => Ok(s),
            (other, at) => Err(syntax(at, format!("expected string literal, found {}", other.describe()))),
        }
    }

    fn int(&mut self) -> Result<(usize, usize), ParseError> {
        match self.bump() {
            (Tok::Int(n), at) => Ok((n, at)),
            (other, at) => Err(syntax(at, format!("expected integer, found {}", other.describe()))),
        }
    }

    fn list(&mut self) -> Result<Vec<String>, ParseError> {
        let braced = *self.peek() == Tok::LBrace;
        if braced {
            self.bump();
        }
        self.expect(Tok::LBracket)?;
        let mut items = Vec::new();
        if *self.peek() != Tok::RBracket {
            items.push(self.string()?);
            while *self.peek() == Tok::Comma {
                self.bump();
                items.push(self.string()?);
            }
        }
        self.expect(Tok::RBracket)?;
        if braced {
            self.expect(Tok::RBrace)?;
        }
        Ok(items)
    }
}

fn is_reserved(s: &str) -> bool {
    matches!(s, "and" | "implies" | "in" | "notIn")
}

fn push_flat(items: &mut Vec<RuleExpr>, e: RuleExpr) {
    match e {
        RuleExpr::And(inner) => items.extend(inner),
        other => items.push(other),
    }
}

/// Parses one rule expression.
pub fn parse_expr(text: &str) -> Result<RuleExpr, ParseError> {
    let toks = tokenize(text)?;
    Parser { toks, pos: 0 }.rule()
}
