//! Rule evaluation against messages (validation) and cases (aggregation).

use serde::{Deserialize, Serialize};

use super::ast::{CmpOp, Literal, RuleExpr};
use super::{Rule, RuleKind, Scope};
use crate::payload::{is_date_format, CancerCase, CancerMessage, CANCER_TYPE, DIAGNOSEDATO};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "camelCase")]
pub enum RuleOutcome {
    Applied {
        satisfied: bool,
    },
    NotApplied {
        #[serde(rename = "blockingField")]
        blocking_field: String,
    },
}

impl RuleOutcome {
    pub fn is_applied(&self) -> bool {
        matches!(self, RuleOutcome::Applied { .. })
    }

    /// Human-readable rule message as returned by the registry.
    pub fn text(&self, rule_id: &str) -> String {
        match self {
            RuleOutcome::Applied { satisfied: true } => format!("Rule {rule_id} is satisfied"),
            RuleOutcome::Applied { satisfied: false } => format!("Rule {rule_id} is violated"),
            RuleOutcome::NotApplied { blocking_field } if blocking_field == DIAGNOSEDATO => {
                "This rule is not used because of diagnose date".to_string()
            }
            RuleOutcome::NotApplied { blocking_field } => {
                format!("This rule is not used because of {blocking_field}")
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Subject<'a> {
    Message(&'a CancerMessage),
    Case(&'a CancerCase),
}

const CASE_PREFIX: &str = "Case.";

/// Maps a DSL field name to its JSON key: `Topografi` -> `topografi`,
/// `Case.Diagnosedato` -> `case.diagnosedato`.
pub fn json_key(dsl_field: &str) -> String {
    match dsl_field.strip_prefix(CASE_PREFIX) {
        Some(rest) => format!("case.{}", lower_first(rest)),
        None => lower_first(dsl_field),
    }
}

fn lower_first(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_lowercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Field lookup for one evaluation: a message, optionally inside a case.
struct Env<'a> {
    message: Option<&'a CancerMessage>,
    case: Option<&'a CancerCase>,
}

impl Env<'_> {
    fn lookup(&self, dsl_field: &str) -> Option<&str> {
        match dsl_field.strip_prefix(CASE_PREFIX) {
            Some(rest) => self.case?.text(&lower_first(rest)),
            None => self.message?.text(&lower_first(dsl_field)),
        }
    }
}

/// Boolean evaluation. Atoms over absent fields are false.
fn eval(expr: &RuleExpr, env: &Env<'_>) -> bool {
    match expr {
        RuleExpr::StartsWith { operand, prefix } => env
            .lookup(operand.field())
            .is_some_and(|v| operand.project(v).starts_with(prefix.as_str())),
        RuleExpr::Compare { lhs, op, rhs } => {
            let Some(raw) = env.lookup(lhs.field()) else {
                return false;
            };
            let v = lhs.project(raw);
            match (op, rhs) {
                (CmpOp::Eq, Literal::Str(s)) => v == s.as_str(),
                (CmpOp::NotEq, Literal::Str(s)) => v != s.as_str(),
                (CmpOp::In, Literal::List(l)) => l.iter().any(|s| v == s.as_str()),
                (CmpOp::NotIn, Literal::List(l)) => !l.iter().any(|s| v == s.as_str()),
                // the parser never builds these shapes
                _ => false,
            }
        }
        RuleExpr::And(items) => items.iter().all(|e| eval(e, env)),
        RuleExpr::Implies(a, b) => !eval(a, env) || eval(b, env),
    }
}

impl Rule {
    pub fn evaluate(&self, subject: Subject<'_>) -> RuleOutcome {
        match (self.kind, subject) {
            (RuleKind::Validation, Subject::Message(m)) => self.validate(m),
            (RuleKind::Aggregation, Subject::Case(c)) => self.aggregate(c),
            // a lone message is aggregated as a case without case-level fields
            (RuleKind::Aggregation, Subject::Message(m)) => RuleOutcome::Applied {
                satisfied: self.scoped(m) || eval(&self.expr, &Env { message: Some(m), case: None }),
            },
            // validation rules have no case-level meaning
            (RuleKind::Validation, Subject::Case(_)) => RuleOutcome::NotApplied {
                blocking_field: crate::payload::MESSAGES_KEY.to_string(),
            },
        }
    }

    /// Validation: every rule is gated on a well-formed message diagnose date,
    /// then on scope, then on the fields it references.
    fn validate(&self, m: &CancerMessage) -> RuleOutcome {
        let blocked = |f: &str| RuleOutcome::NotApplied {
            blocking_field: f.to_string(),
        };
        if !m.text(DIAGNOSEDATO).is_some_and(is_date_format) {
            return blocked(DIAGNOSEDATO);
        }
        if let Scope::CancerType(t) = &self.scope {
            if m.cancer_type() != Some(t.as_str()) {
                return blocked(CANCER_TYPE);
            }
        }
        let env = Env {
            message: Some(m),
            case: None,
        };
        for field in &self.required_fields {
            if env.lookup(field).is_none() {
                return blocked(&json_key(field));
            }
        }
        RuleOutcome::Applied {
            satisfied: eval(&self.expr, &env),
        }
    }

    /// True when `m` falls outside this rule's scope.
    fn scoped(&self, m: &CancerMessage) -> bool {
        matches!(&self.scope, Scope::CancerType(t) if m.cancer_type() != Some(t.as_str()))
    }

    /// Aggregation: rules over case fields only are checked once; rules touching
    /// message fields must hold for every in-scope message (vacuously true for
    /// an empty case). Always applied.
    fn aggregate(&self, c: &CancerCase) -> RuleOutcome {
        let satisfied = if !self.references_messages() {
            eval(&self.expr, &Env { message: None, case: Some(c) })
        } else {
            c.messages()
                .iter()
                .filter(|m| !self.scoped(m))
                .all(|m| eval(&self.expr, &Env { message: Some(m), case: Some(c) }))
        };
        RuleOutcome::Applied { satisfied }
    }

    fn references_messages(&self) -> bool {
        self.required_fields.iter().any(|f| !f.starts_with(CASE_PREFIX))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::payload::*;

    fn prod_r03() -> Rule {
        Rule::parse(
            "Topografi ->startswith('50') implies Metastase in ['0','A','B','C','D','9']",
            "R03",
            RuleKind::Validation,
            Scope::CancerType("Breast".into()),
        )
        .unwrap()
    }

    fn breast(topografi: &str, date: &str) -> CancerMessage {
        CancerMessage::new()
            .with(TOPOGRAFI, topografi)
            .with(METASTASE, "A")
            .with(CANCER_TYPE, "Breast")
            .with(DIAGNOSEDATO, date)
    }

    #[test]
    fn hand_evaluated_examples() {
        let r = prod_r03();
        assert_eq!(
            r.evaluate(Subject::Message(&breast("509", "2017-12-01"))),
            RuleOutcome::Applied { satisfied: true }
        );
        // antecedent false: vacuous truth
        assert_eq!(
            r.evaluate(Subject::Message(&breast("600", "2017-12-01"))),
            RuleOutcome::Applied { satisfied: true }
        );
        assert_eq!(
            r.evaluate(Subject::Message(&breast("509", "notadate"))),
            RuleOutcome::NotApplied { blocking_field: "diagnosedato".into() }
        );
        let violating = breast("509", "2017-12-01").with(METASTASE, "5");
        assert_eq!(r.evaluate(Subject::Message(&violating)), RuleOutcome::Applied { satisfied: false });
    }

    #[test]
    fn scope_and_missing_fields_block() {
        let r = prod_r03();
        let lung = breast("509", "2017-12-01").with(CANCER_TYPE, "Lung");
        assert_eq!(
            r.evaluate(Subject::Message(&lung)),
            RuleOutcome::NotApplied { blocking_field: "cancerType".into() }
        );
        let mut m = breast("509", "2017-12-01");
        m.remove(METASTASE);
        assert_eq!(
            r.evaluate(Subject::Message(&m)),
            RuleOutcome::NotApplied { blocking_field: "metastase".into() }
        );
        let mut m = breast("509", "2017-12-01");
        m.set(TOPOGRAFI, 509);
        assert_eq!(
            r.evaluate(Subject::Message(&m)),
            RuleOutcome::NotApplied { blocking_field: "topografi".into() }
        );
        assert_eq!(
            RuleOutcome::NotApplied { blocking_field: "diagnosedato".into() }.text("R03"),
            "This rule is not used because of diagnose date"
        );
    }

    #[test]
    fn aggregation_is_universal_over_messages() {
        let r = Rule::parse(
            "Topografi->startswith('50') implies CancerType = 'Breast'",
            "A01",
            RuleKind::Aggregation,
            Scope::All,
        )
        .unwrap();
        let ok = CancerCase::new("C1", "2017-01-01")
            .with_message(breast("509", "2017-01-01"))
            .with_message(breast("340", "2017-01-01").with(CANCER_TYPE, "Lung"));
        assert_eq!(r.evaluate(Subject::Case(&ok)), RuleOutcome::Applied { satisfied: true });
        let bad = ok.clone().with_message(breast("501", "2017-01-01").with(CANCER_TYPE, "Lung"));
        assert_eq!(r.evaluate(Subject::Case(&bad)), RuleOutcome::Applied { satisfied: false });
        let empty = CancerCase::new("C2", "2017-01-01");
        assert_eq!(r.evaluate(Subject::Case(&empty)), RuleOutcome::Applied { satisfied: true });

        let case_rule =
            Rule::parse("Case.Diagnosedato->substring(1,4) in ['2017']", "A02", RuleKind::Aggregation, Scope::All)
                .unwrap();
        assert_eq!(case_rule.required_fields(), ["Case.Diagnosedato"]);
        assert_eq!(case_rule.evaluate(Subject::Case(&empty)), RuleOutcome::Applied { satisfied: true });
        let other_year = CancerCase::new("C3", "2019-01-01");
        assert_eq!(case_rule.evaluate(Subject::Case(&other_year)), RuleOutcome::Applied { satisfied: false });
    }

    #[test]
    fn json_keys() {
        assert_eq!(json_key("Topografi"), "topografi");
        assert_eq!(json_key("CancerType"), "cancerType");
        assert_eq!(json_key("Case.Diagnosedato"), "case.diagnosedato");
    }
}
