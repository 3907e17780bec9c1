//! Boolean rule DSL, evaluation, and the versioned rule catalog.

mod ast;
pub mod catalog;
mod eval;
mod parser;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ast::{CmpOp, Literal, Operand, RuleExpr};
pub use catalog::{Catalog, CatalogDelta, ChangeType, Environment, VersionId};
pub use eval::{json_key, RuleOutcome, Subject};
pub use parser::{parse_expr, ParseError};

use crate::payload::{date_status, CancerCase, CancerMessage, DateStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleKind {
    Validation,
    Aggregation,
}

impl fmt::Display for RuleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RuleKind::Validation => "validation",
            RuleKind::Aggregation => "aggregation",
        })
    }
}

impl FromStr for RuleKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "validation" => Ok(RuleKind::Validation),
            "aggregation" => Ok(RuleKind::Aggregation),
            other => Err(format!("unknown rule kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scope {
    All,
    CancerType(String),
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scope::All => f.write_str("All"),
            Scope::CancerType(t) => f.write_str(t),
        }
    }
}

impl FromStr for Scope {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "" => Err("empty scope".into()),
            "All" => Ok(Scope::All),
            t => Ok(Scope::CancerType(t.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rule {
    pub id: String,
    pub kind: RuleKind,
    pub scope: Scope,
    pub expr: RuleExpr,
    required_fields: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RuleError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("`implies` may only be the top-level connective of a validation rule")]
    MisplacedImplies,
    #[error("malformed catalog line {line}: {reason}")]
    CatalogLine { line: usize, reason: String },
}

impl Rule {
    pub fn new(id: &str, kind: RuleKind, scope: Scope, expr: RuleExpr) -> Self {
        let required_fields = expr.fields();
        Self {
            id: id.to_string(),
            kind,
            scope,
            expr,
            required_fields,
        }
    }

    pub fn parse(text: &str, id: &str, kind: RuleKind, scope: Scope) -> Result<Self, RuleError> {
        let expr = parse_expr(text)?;
        Ok(Self::new(id, kind, scope, expr))
    }

    /// DSL field names referenced by the expression, in first-occurrence order.
    pub fn required_fields(&self) -> &[String] {
        &self.required_fields
    }

    pub fn with_expr(&self, expr: RuleExpr) -> Self {
        Self::new(&self.id, self.kind, self.scope.clone(), expr)
    }

    /// `ruleId|kind|scope|dsl`
    pub fn to_line(&self) -> String {
        format!("{}|{}|{}|{}", self.id, self.kind, self.scope, self.expr)
    }

    pub fn from_line(line: &str, line_no: usize) -> Result<Self, RuleError> {
        let bad = |reason: String| RuleError::CatalogLine { line: line_no, reason };
        let mut parts = line.splitn(4, '|');
        let (Some(id), Some(kind), Some(scope), Some(text)) =
            (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(bad("expected `id|kind|scope|rule`".into()));
        };
        let kind = kind.parse().map_err(bad)?;
        let scope = scope.parse().map_err(bad)?;
        Rule::parse(text, id, kind, scope)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleSet {
    pub version: VersionId,
    pub environment: Environment,
    pub validation_rules: Vec<Rule>,
    pub aggregation_rules: Vec<Rule>,
}

/// A case that went through every aggregation rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AggregatedCase {
    pub case_id: Option<String>,
    pub message_count: usize,
    pub satisfied: Vec<(String, bool)>,
}

/// Conditions under which aggregation cannot proceed; the registry maps these to 500.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AggregationFault {
    #[error("case diagnose date `{0}` is not a calendar date")]
    CaseDate(String),
    #[error("message {index} diagnose date `{value}` is not a calendar date")]
    MessageDate { index: usize, value: String },
    #[error("message {index} field `{field}` has the wrong type")]
    TypeConfusion { index: usize, field: &'static str },
}

impl RuleSet {
    pub fn empty(version: VersionId, environment: Environment) -> Self {
        Self {
            version,
            environment,
            validation_rules: Vec::new(),
            aggregation_rules: Vec::new(),
        }
    }

    pub fn counts(&self) -> (usize, usize) {
        (self.validation_rules.len(), self.aggregation_rules.len())
    }

    pub fn rules(&self) -> impl Iterator<Item = &Rule> {
        self.validation_rules.iter().chain(&self.aggregation_rules)
    }

    pub fn validate_message(&self, msg: &CancerMessage) -> Vec<(String, RuleOutcome)> {
        self.validation_rules
            .iter()
            .map(|r| (r.id.clone(), r.evaluate(Subject::Message(msg))))
            .collect()
    }

    pub fn aggregate_case(
        &self,
        case: &CancerCase,
    ) -> Result<(AggregatedCase, Vec<(String, RuleOutcome)>), AggregationFault> {
        if let Some(d) = case.diagnosedato() {
            if date_status(d) != DateStatus::Valid {
                return Err(AggregationFault::CaseDate(d.to_string()));
            }
        }
        for (index, m) in case.messages().iter().enumerate() {
            if let Some(field) = m.type_confused_field() {
                return Err(AggregationFault::TypeConfusion { index, field });
            }
            if let Some(d) = m.text(crate::payload::DIAGNOSEDATO) {
                if date_status(d) == DateStatus::CalendarInvalid {
                    return Err(AggregationFault::MessageDate {
                        index,
                        value: d.to_string(),
                    });
                }
            }
        }
        let outcomes: Vec<(String, RuleOutcome)> = self
            .aggregation_rules
            .iter()
            .map(|r| (r.id.clone(), r.evaluate(Subject::Case(case))))
            .collect();
        let satisfied = outcomes
            .iter()
            .map(|(id, o)| (id.clone(), matches!(o, RuleOutcome::Applied { satisfied: true })))
            .collect();
        Ok((
            AggregatedCase {
                case_id: case.case_id().map(str::to_string),
                message_count: case.messages().len(),
                satisfied,
            },
            outcomes,
        ))
    }

    /// One line per rule, validation rules first.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in self.rules() {
            out.push_str(&r.to_line());
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str, version: VersionId, environment: Environment) -> Result<Self, RuleError> {
        let mut set = Self::empty(version, environment);
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rule = Rule::from_line(line, i + 1)?;
            match rule.kind {
                RuleKind::Validation => set.validation_rules.push(rule),
                RuleKind::Aggregation => set.aggregation_rules.push(rule),
            }
        }
        Ok(set)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::payload::*;

    #[test]
    fn line_round_trip() {
        let r = Rule::parse("Meldingstype = 'K'", "R01", RuleKind::Validation, Scope::All).unwrap();
        let line = r.to_line();
        assert_eq!(line, "R01|validation|All|Meldingstype = 'K'");
        assert_eq!(Rule::from_line(&line, 1).unwrap(), r);
        assert!(Rule::from_line("R01|validation|All", 3).is_err());
        assert!(Rule::from_line("R01|bogus|All|A = 'x'", 3).is_err());
    }

    #[test]
    fn empty_ruleset_gives_no_outcomes() {
        let set = RuleSet::empty(VersionId::new(1).unwrap(), Environment::Dev);
        assert!(set.validate_message(&CancerMessage::new()).is_empty());
        let (agg, outcomes) = set.aggregate_case(&CancerCase::new("C", "2017-01-01")).unwrap();
        assert!(outcomes.is_empty());
        assert_eq!(agg.message_count, 0);
    }

    #[test]
    fn aggregation_faults() {
        let set = RuleSet::empty(VersionId::new(1).unwrap(), Environment::Dev);
        assert_eq!(
            set.aggregate_case(&CancerCase::new("C", "2017-13-45")).unwrap_err(),
            AggregationFault::CaseDate("2017-13-45".into())
        );
        let case = CancerCase::new("C", "2017-01-01")
            .with_message(CancerMessage::new().with(DIAGNOSEDATO, "2017-02-30"));
        assert!(matches!(set.aggregate_case(&case), Err(AggregationFault::MessageDate { index: 0, .. })));
        let case = CancerCase::new("C", "2017-01-01").with_message(CancerMessage::new().with(METASTASE, 1));
        assert!(matches!(set.aggregate_case(&case), Err(AggregationFault::TypeConfusion { .. })));
    }
}
