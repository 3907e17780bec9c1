use std::fmt;

use serde::{Deserialize, Serialize};

/// Left-hand side of a comparison: a field or a character range of it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Operand {
    Field(String),
    /// 1-based inclusive character range `start..=end`.
    Substring { field: String, start: usize, end: usize },
}

impl Operand {
    pub fn field(&self) -> &str {
        match self {
            Operand::Field(f) | Operand::Substring { field: f, .. } => f,
        }
    }

    /// Applies the operand's projection to a field value.
    pub fn project<'a>(&self, value: &'a str) -> std::borrow::Cow<'a, str> {
        match self {
            Operand::Field(_) => value.into(),
            Operand::Substring { start, end, .. } => {
                value.chars().skip(start - 1).take(end + 1 - start).collect::<String>().into()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CmpOp {
    Eq,
    NotEq,
    In,
    NotIn,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::NotEq => "!=",
            CmpOp::In => "in",
            CmpOp::NotIn => "notIn",
        }
    }

    pub fn takes_list(self) -> bool {
        matches!(self, CmpOp::In | CmpOp::NotIn)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Literal {
    Str(String),
    List(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum RuleExpr {
    StartsWith {
        operand: Operand,
        prefix: String,
    },
    Compare {
        lhs: Operand,
        op: CmpOp,
        rhs: Literal,
    },
    And(Vec<RuleExpr>),
    /// Only valid as the top-level node.
    Implies(Box<RuleExpr>, Box<RuleExpr>),
}

impl RuleExpr {
    /// Field references in order of first occurrence, without duplicates.
    pub fn fields(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_fields(&mut out);
        out
    }

    fn collect_fields(&self, out: &mut Vec<String>) {
        let mut push = |f: &str| {
            if !out.iter().any(|x| x == f) {
                out.push(f.to_string());
            }
        };
        match self {
            RuleExpr::StartsWith { operand, .. } => push(operand.field()),
            RuleExpr::Compare { lhs, .. } => push(lhs.field()),
            RuleExpr::And(items) => items.iter().for_each(|e| e.collect_fields(out)),
            RuleExpr::Implies(a, b) => {
                a.collect_fields(out);
                b.collect_fields(out);
            }
        }
    }

    pub fn is_implication(&self) -> bool {
        matches!(self, RuleExpr::Implies(..))
    }
}

fn quote(s: &str) -> String {
    if s.contains('\'') {
        format!("\"{s}\"")
    } else {
        format!("'{s}'")
    }
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Field(name) => write!(f, "{name}"),
            Operand::Substring { field, start, end } => {
                write!(f, "{field}->substring({start},{end})")
            }
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Str(s) => write!(f, "{}", quote(s)),
            Literal::List(items) => {
                let parts: Vec<_> = items.iter().map(|s| quote(s)).collect();
                write!(f, "[{}]", parts.join(","))
            }
        }
    }
}

impl fmt::Display for RuleExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RuleExpr::StartsWith { operand, prefix } => {
                write!(f, "{operand}->startswith({})", quote(prefix))
            }
            RuleExpr::Compare { lhs, op, rhs } => write!(f, "{lhs} {} {rhs}", op.symbol()),
            RuleExpr::And(items) => {
                let parts: Vec<_> = items.iter().map(ToString::to_string).collect();
                write!(f, "{}", parts.join(" and "))
            }
            RuleExpr::Implies(a, b) => match a.as_ref() {
                RuleExpr::And(items) if items.len() > 1 => write!(f, "({a}) implies {b}"),
                _ => write!(f, "{a} implies {b}"),
            },
        }
    }
}
