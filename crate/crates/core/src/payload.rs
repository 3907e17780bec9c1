//! Untrusted request payloads: cancer messages, cancer cases and date checks.
//!
//! Payloads are kept as raw JSON maps. Nothing is validated at construction;
//! the rule engine and the registry decide what a malformed field means.

use std::sync::LazyLock;

use chrono::NaiveDate;
use regex::Regex;
use serde_json::{Map, Value};

pub const MELDINGSTYPE: &str = "meldingstype";
pub const TOPOGRAFI: &str = "topografi";
pub const METASTASE: &str = "metastase";
pub const EKSTRALOKALISASJON: &str = "ekstralokalisasjon";
pub const DIAGNOSEDATO: &str = "diagnosedato";
pub const CANCER_TYPE: &str = "cancerType";
pub const CASE_ID: &str = "caseId";

/// JSON key holding the message list, both in validation bodies and inside a case.
pub const MESSAGES_KEY: &str = "cancerMessages";
/// JSON key wrapping the case in aggregation bodies.
pub const CASE_KEY: &str = "cancerCase";

/// Message fields that must be strings when present.
pub const MESSAGE_STRING_FIELDS: [&str; 6] = [
    MELDINGSTYPE,
    TOPOGRAFI,
    METASTASE,
    EKSTRALOKALISASJON,
    DIAGNOSEDATO,
    CANCER_TYPE,
];

static DATE_FORMAT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^[0-9]{4}-[0-9]{2}-[0-9]{2}$").expect("static regex"));

/// `YYYY-MM-DD` shape check only.
pub fn is_date_format(s: &str) -> bool {
    DATE_FORMAT.is_match(s)
}

/// Shape check plus a real calendar day.
pub fn is_calendar_date(s: &str) -> bool {
    is_date_format(s) && NaiveDate::parse_from_str(s, "%Y-%m-%d").is_ok()
}

/// How a single date value fares against the registry's checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DateStatus {
    Valid,
    /// Matches `YYYY-MM-DD` but is not a real day (e.g. `2017-02-30`).
    CalendarInvalid,
    FormatInvalid,
}

pub fn date_status(s: &str) -> DateStatus {
    if !is_date_format(s) {
        DateStatus::FormatInvalid
    } else if is_calendar_date(s) {
        DateStatus::Valid
    } else {
        DateStatus::CalendarInvalid
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CancerMessage {
    fields: Map<String, Value>,
}

impl CancerMessage {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns `None` when `value` is not a JSON object.
    pub fn from_json(value: Value) -> Option<Self> {
        match value {
            Value::Object(fields) => Some(Self { fields }),
            _ => None,
        }
    }

    pub fn with(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.fields.insert(key.to_string(), value.into());
        self
    }

    pub fn set(&mut self, key: &str, value: impl Into<Value>) {
        self.fields.insert(key.to_string(), value.into());
    }

    pub fn remove(&mut self, key: &str) -> Option<Value> {
        self.fields.remove(key)
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.fields.get(key)
    }

    /// The field as a string; absent and non-string values both yield `None`.
    pub fn text(&self, key: &str) -> Option<&str> {
        self.fields.get(key).and_then(Value::as_str)
    }

    pub fn cancer_type(&self) -> Option<&str> {
        self.text(CANCER_TYPE)
    }

    pub fn fields(&self) -> &Map<String, Value> {
        &self.fields
    }

    /// First known string field holding a non-string value.
    pub fn type_confused_field(&self) -> Option<&'static str> {
        MESSAGE_STRING_FIELDS
            .into_iter()
            .find(|k| matches!(self.fields.get(*k), Some(v) if !v.is_string()))
    }

    pub fn to_json(&self) -> Value {
        Value::Object(self.fields.clone())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CancerCase {
    fields: Map<String, Value>,
    messages: Vec<CancerMessage>,
}

impl CancerCase {
    pub fn new(case_id: &str, diagnosedato: &str) -> Self {
        let mut fields = Map::new();
        fields.insert(CASE_ID.into(), case_id.into());
        fields.insert(DIAGNOSEDATO.into(), diagnosedato.into());
        Self {
            fields,
            messages: Vec::new(),
        }
    }

    pub fn with_message(mut self, message: CancerMessage) -> Self {
        self.messages.push(message);
        self
    }

    /// Parses a case object. `Err` carries a reason when the shape is unusable
    /// (non-object case, non-array message list, non-object message).
    pub fn from_json(value: Value) -> Result<Self, String> {
        let Value::Object(mut fields) = value else {
            return Err("case is not an object".into());
        };
        let messages = match fields.remove(MESSAGES_KEY) {
            None | Some(Value::Null) => Vec::new(),
            Some(Value::Array(items)) => items
                .into_iter()
                .map(|m| CancerMessage::from_json(m).ok_or("message is not an object"))
                .collect::<Result<Vec<_>, _>>()?,
            Some(_) => return Err(format!("{MESSAGES_KEY} is not a list")),
        };
        Ok(Self { fields, messages })
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.fields.get(key)
    }

    pub fn text(&self, key: &str) -> Option<&str> {
        self.fields.get(key).and_then(Value::as_str)
    }

    pub fn case_id(&self) -> Option<&str> {
        self.text(CASE_ID)
    }

    pub fn diagnosedato(&self) -> Option<&str> {
        self.text(DIAGNOSEDATO)
    }

    pub fn messages(&self) -> &[CancerMessage] {
        &self.messages
    }

    pub fn to_json(&self) -> Value {
        let mut out = self.fields.clone();
        out.insert(
            MESSAGES_KEY.into(),
            Value::Array(self.messages.iter().map(CancerMessage::to_json).collect()),
        );
        Value::Object(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn date_checks() {
        assert_eq!(date_status("2017-12-01"), DateStatus::Valid);
        assert_eq!(date_status("2016-02-29"), DateStatus::Valid);
        assert_eq!(date_status("2017-02-29"), DateStatus::CalendarInvalid);
        assert_eq!(date_status("2017-13-45"), DateStatus::CalendarInvalid);
        assert_eq!(date_status("2017-02-30"), DateStatus::CalendarInvalid);
        assert_eq!(date_status("12/2017"), DateStatus::FormatInvalid);
        assert_eq!(date_status("notadate"), DateStatus::FormatInvalid);
        // non-ASCII digits never pass the format check
        assert_eq!(date_status("２０１７-12-01"), DateStatus::FormatInvalid);
    }

    #[test]
    fn case_parsing_rejects_bad_shapes() {
        assert!(CancerCase::from_json(json!([])).is_err());
        assert!(CancerCase::from_json(json!({"cancerMessages": 3})).is_err());
        assert!(CancerCase::from_json(json!({"cancerMessages": [1]})).is_err());
        let case = CancerCase::from_json(json!({"caseId": "C1", "cancerMessages": []})).unwrap();
        assert!(case.messages().is_empty());
        assert_eq!(case.case_id(), Some("C1"));
    }

    #[test]
    fn type_confusion_detected() {
        let m = CancerMessage::new().with(TOPOGRAFI, 509);
        assert_eq!(m.type_confused_field(), Some(TOPOGRAFI));
        let m = CancerMessage::new().with(TOPOGRAFI, "509").with("extra", 5);
        assert_eq!(m.type_confused_field(), None);
    }
}
