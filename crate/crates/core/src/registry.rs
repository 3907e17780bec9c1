//! The simulated registry: two POST endpoints over one immutable rule set.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::payload::{date_status, CancerCase, CancerMessage, DateStatus, CASE_KEY, DIAGNOSEDATO, MESSAGES_KEY};
use crate::rules::{Catalog, Environment, RuleOutcome, RuleSet, VersionId};

pub const STATUS_OK: u16 = 200;
pub const STATUS_REDIRECT: u16 = 302;
pub const STATUS_SERVER_ERROR: u16 = 500;

/// Where unauthenticated callers are sent.
pub const LOGIN_PATH: &str = "/login";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Endpoint {
    Validation,
    Aggregation,
}

impl Endpoint {
    pub const ALL: [Endpoint; 2] = [Endpoint::Validation, Endpoint::Aggregation];

    pub fn path(self) -> &'static str {
        match self {
            Endpoint::Validation => "/api/messages/validation",
            Endpoint::Aggregation => "/api/messages/aggregation",
        }
    }

    pub fn from_path(path: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.path() == path)
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Endpoint::Validation => "validation",
            Endpoint::Aggregation => "aggregation",
        })
    }
}

impl FromStr for Endpoint {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "validation" => Ok(Endpoint::Validation),
            "aggregation" => Ok(Endpoint::Aggregation),
            other => Err(format!("unknown endpoint `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiRequest {
    pub endpoint: Endpoint,
    /// Raw `Authorization` header value.
    pub authorization: Option<String>,
    pub body: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiResponse {
    pub status: u16,
    pub body: Value,
}

impl ApiResponse {
    pub fn is_success(&self) -> bool {
        self.status == STATUS_OK
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CounterSnapshot {
    pub total_hits: u64,
    pub applied: u64,
    pub not_applied: u64,
}

impl CounterSnapshot {
    /// Counts accumulated between `earlier` and `self`.
    pub fn since(&self, earlier: &CounterSnapshot) -> CounterSnapshot {
        CounterSnapshot {
            total_hits: self.total_hits - earlier.total_hits,
            applied: self.applied - earlier.applied,
            not_applied: self.not_applied - earlier.not_applied,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ServiceConfig {
    pub version_id: VersionId,
    pub environment: Environment,
    pub auth_token: String,
}

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("rule set is {found_version}/{found_env}, config asks for {version}/{env}")]
    RuleSetMismatch {
        version: VersionId,
        env: Environment,
        found_version: VersionId,
        found_env: Environment,
    },
}

/// Failure to obtain any response at all; never a status code.
#[derive(Debug, Error)]
pub enum TransportError {
    #[error("transport failure: {0}")]
    Io(String),
    #[error("unexpected response: {0}")]
    Protocol(String),
}

pub trait Transport: Send + Sync {
    fn send(&self, request: &ApiRequest) -> Result<ApiResponse, TransportError>;
    fn counters(&self) -> Result<CounterSnapshot, TransportError>;
}

impl<T: Transport + ?Sized> Transport for Arc<T> {
    fn send(&self, request: &ApiRequest) -> Result<ApiResponse, TransportError> {
        (**self).send(request)
    }
    fn counters(&self) -> Result<CounterSnapshot, TransportError> {
        (**self).counters()
    }
}

impl<T: Transport + ?Sized> Transport for &T {
    fn send(&self, request: &ApiRequest) -> Result<ApiResponse, TransportError> {
        (**self).send(request)
    }
    fn counters(&self) -> Result<CounterSnapshot, TransportError> {
        (**self).counters()
    }
}

#[derive(Debug)]
pub struct RegistryService {
    config: ServiceConfig,
    rules: Arc<RuleSet>,
    applied: AtomicU64,
    not_applied: AtomicU64,
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
struct RuleMessage<'a> {
    rule_id: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    message_index: Option<usize>,
    #[serde(flatten)]
    outcome: &'a RuleOutcome,
    text: String,
}

/// Why a request ends in 500. Kept internal; callers only see an error id.
#[derive(Debug)]
enum Fault {
    Unparseable,
    BadShape,
    TypeConfusion,
    Date,
    Aggregation,
}

impl RegistryService {
    pub fn new(config: ServiceConfig, rules: RuleSet) -> Result<Self, RegistryError> {
        if rules.version != config.version_id || rules.environment != config.environment {
            return Err(RegistryError::RuleSetMismatch {
                version: config.version_id,
                env: config.environment,
                found_version: rules.version,
                found_env: rules.environment,
            });
        }
        Ok(Self {
            config,
            rules: Arc::new(rules),
            applied: AtomicU64::new(0),
            not_applied: AtomicU64::new(0),
        })
    }

    pub fn from_catalog(config: ServiceConfig, catalog: &Catalog) -> Self {
        let rules = catalog.get(config.version_id, config.environment).clone();
        Self::new(config, rules).expect("catalog lookup matches config")
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn rules(&self) -> &RuleSet {
        &self.rules
    }

    pub fn snapshot_counters(&self) -> CounterSnapshot {
        let applied = self.applied.load(Ordering::SeqCst);
        let not_applied = self.not_applied.load(Ordering::SeqCst);
        CounterSnapshot {
            total_hits: applied + not_applied,
            applied,
            not_applied,
        }
    }

    fn authorized(&self, header: Option<&str>) -> bool {
        header
            .and_then(|h| h.strip_prefix("Bearer "))
            .is_some_and(|t| t == self.config.auth_token)
    }

    pub fn handle(&self, request: &ApiRequest) -> ApiResponse {
        if !self.authorized(request.authorization.as_deref()) {
            return ApiResponse {
                status: STATUS_REDIRECT,
                body: json!({ "redirect": LOGIN_PATH, "message": "authorization required" }),
            };
        }
        let result = match request.endpoint {
            Endpoint::Validation => self.validation(&request.body),
            Endpoint::Aggregation => self.aggregation(&request.body),
        };
        match result {
            Ok(body) => ApiResponse { status: STATUS_OK, body },
            Err(fault) => {
                log::debug!("{} request rejected: {fault:?}", request.endpoint);
                ApiResponse {
                    status: STATUS_SERVER_ERROR,
                    body: json!({ "errorId": error_id(&request.body) }),
                }
            }
        }
    }

    pub fn handle_validation(&self, authorization: Option<&str>, body: &[u8]) -> ApiResponse {
        self.handle(&ApiRequest {
            endpoint: Endpoint::Validation,
            authorization: authorization.map(str::to_string),
            body: body.to_vec(),
        })
    }

    pub fn handle_aggregation(&self, authorization: Option<&str>, body: &[u8]) -> ApiResponse {
        self.handle(&ApiRequest {
            endpoint: Endpoint::Aggregation,
            authorization: authorization.map(str::to_string),
            body: body.to_vec(),
        })
    }

    fn record<'a>(&self, outcomes: impl Iterator<Item = &'a RuleOutcome>) {
        let (mut applied, mut not_applied) = (0, 0);
        for o in outcomes {
            if o.is_applied() {
                applied += 1;
            } else {
                not_applied += 1;
            }
        }
        self.applied.fetch_add(applied, Ordering::SeqCst);
        self.not_applied.fetch_add(not_applied, Ordering::SeqCst);
    }

    fn validation(&self, body: &[u8]) -> Result<Value, Fault> {
        let value: Value = serde_json::from_slice(body).map_err(|_| Fault::Unparseable)?;
        let items = match value {
            Value::Array(items) => items,
            Value::Object(mut map) => match map.remove(MESSAGES_KEY) {
                Some(Value::Array(items)) => items,
                Some(_) => return Err(Fault::BadShape),
                None => vec![Value::Object(map)],
            },
            _ => return Err(Fault::BadShape),
        };
        let messages = items
            .into_iter()
            .map(CancerMessage::from_json)
            .collect::<Option<Vec<_>>>()
            .ok_or(Fault::BadShape)?;
        for m in &messages {
            check_message(m)?;
        }

        let outcomes: Vec<(usize, String, RuleOutcome)> = messages
            .iter()
            .enumerate()
            .flat_map(|(i, m)| {
                self.rules
                    .validate_message(m)
                    .into_iter()
                    .map(move |(id, o)| (i, id, o))
            })
            .collect();
        self.record(outcomes.iter().map(|(_, _, o)| o));
        let rule_messages: Vec<RuleMessage<'_>> = outcomes
            .iter()
            .map(|(i, id, o)| RuleMessage {
                rule_id: id,
                message_index: Some(*i),
                outcome: o,
                text: o.text(id),
            })
            .collect();
        Ok(json!({
            "ruleMessages": rule_messages,
            "validated": messages.iter().map(CancerMessage::to_json).collect::<Vec<_>>(),
        }))
    }

    fn aggregation(&self, body: &[u8]) -> Result<Value, Fault> {
        let value: Value = serde_json::from_slice(body).map_err(|_| Fault::Unparseable)?;
        let case_value = match value {
            Value::Object(mut map) => match map.remove(CASE_KEY) {
                Some(v) => v,
                None => Value::Object(map),
            },
            _ => return Err(Fault::BadShape),
        };
        let case = CancerCase::from_json(case_value).map_err(|_| Fault::BadShape)?;
        if case.get(DIAGNOSEDATO).is_some_and(|v| !v.is_string()) {
            return Err(Fault::TypeConfusion);
        }
        for m in case.messages() {
            check_message(m)?;
        }
        let (aggregated, outcomes) = self.rules.aggregate_case(&case).map_err(|_| Fault::Aggregation)?;
        self.record(outcomes.iter().map(|(_, o)| o));
        let rule_messages: Vec<RuleMessage<'_>> = outcomes
            .iter()
            .map(|(id, o)| RuleMessage {
                rule_id: id,
                message_index: None,
                outcome: o,
                text: o.text(id),
            })
            .collect();
        Ok(json!({ "ruleMessages": rule_messages, "aggregated": aggregated }))
    }
}

fn check_message(m: &CancerMessage) -> Result<(), Fault> {
    if m.type_confused_field().is_some() {
        return Err(Fault::TypeConfusion);
    }
    if let Some(d) = m.text(DIAGNOSEDATO) {
        match date_status(d) {
            DateStatus::Valid => {}
            _ => return Err(Fault::Date),
        }
    }
    Ok(())
}

/// Opaque, deterministic id for a failed request.
pub fn error_id(body: &[u8]) -> String {
    hex::encode(&Sha256::digest(body)[..8])
}

/// In-process transport.
impl Transport for RegistryService {
    fn send(&self, request: &ApiRequest) -> Result<ApiResponse, TransportError> {
        Ok(self.handle(request))
    }
    fn counters(&self) -> Result<CounterSnapshot, TransportError> {
        Ok(self.snapshot_counters())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::payload::*;

    const TOKEN: &str = "secret";

    fn service() -> RegistryService {
        let catalog = Catalog::generate(0);
        RegistryService::from_catalog(
            ServiceConfig {
                version_id: VersionId::new(1).unwrap(),
                environment: Environment::Dev,
                auth_token: TOKEN.into(),
            },
            &catalog,
        )
    }

    fn auth() -> Option<&'static str> {
        Some("Bearer secret")
    }

    fn breast() -> CancerMessage {
        CancerMessage::new()
            .with(CANCER_TYPE, "Breast")
            .with(DIAGNOSEDATO, "2017-12-01")
            .with(TOPOGRAFI, "509")
            .with(METASTASE, "A")
            .with(MELDINGSTYPE, "K")
            .with(EKSTRALOKALISASJON, "0000")
    }

    fn validation_body(m: &CancerMessage) -> Vec<u8> {
        serde_json::to_vec(&json!({ "cancerMessages": [m.to_json()] })).unwrap()
    }

    #[test]
    fn valid_message_is_200_without_date_notice() {
        let svc = service();
        let r = svc.handle_validation(auth(), &validation_body(&breast()));
        assert_eq!(r.status, 200);
        let msgs = r.body["ruleMessages"].as_array().unwrap();
        assert_eq!(msgs.len(), 30);
        assert!(msgs
            .iter()
            .all(|m| m["text"] != "This rule is not used because of diagnose date"));
        assert_eq!(svc.snapshot_counters().total_hits, 30);
    }

    #[test]
    fn auth_precedes_everything() {
        let svc = service();
        assert_eq!(svc.handle_validation(None, &validation_body(&breast())).status, 302);
        assert_eq!(svc.handle_validation(Some("Bearer nope"), b"{{{").status, 302);
        assert_eq!(svc.handle_aggregation(Some(TOKEN), b"{}").status, 302);
        assert_eq!(svc.snapshot_counters(), CounterSnapshot::default());
    }

    #[test]
    fn server_faults() {
        let svc = service();
        let bad_format = breast().with(DIAGNOSEDATO, "12/2017");
        assert_eq!(svc.handle_validation(auth(), &validation_body(&bad_format)).status, 500);
        let bad_day = breast().with(DIAGNOSEDATO, "2017-02-30");
        assert_eq!(svc.handle_validation(auth(), &validation_body(&bad_day)).status, 500);
        let confused = breast().with(TOPOGRAFI, 509);
        assert_eq!(svc.handle_validation(auth(), &validation_body(&confused)).status, 500);
        let r = svc.handle_validation(auth(), b"not json");
        assert_eq!(r.status, 500);
        assert_eq!(r.body["errorId"], error_id(b"not json"));
        assert_eq!(svc.snapshot_counters().total_hits, 0);
    }

    #[test]
    fn aggregation_statuses() {
        let svc = service();
        let case = CancerCase::new("C1", "2017-01-01").with_message(breast()).with_message(breast());
        let body = serde_json::to_vec(&json!({ "cancerCase": case.to_json() })).unwrap();
        let r = svc.handle_aggregation(auth(), &body);
        assert_eq!(r.status, 200);
        assert_eq!(r.body["ruleMessages"].as_array().unwrap().len(), 32);
        assert_eq!(svc.handle_aggregation(None, &body).status, 302);

        let bad = CancerCase::new("C1", "2017-02-30").with_message(breast());
        let body = serde_json::to_vec(&json!({ "cancerCase": bad.to_json() })).unwrap();
        assert_eq!(svc.handle_aggregation(auth(), &body).status, 500);

        let empty = CancerCase::new("C2", "2017-01-01");
        let body = serde_json::to_vec(&json!({ "cancerCase": empty.to_json() })).unwrap();
        let r = svc.handle_aggregation(auth(), &body);
        assert_eq!(r.status, 200);
        assert_eq!(r.body["ruleMessages"].as_array().unwrap().len(), 32);
    }

    #[test]
    fn counter_identity_under_concurrency() {
        let svc = Arc::new(service());
        std::thread::scope(|s| {
            for t in 0..4 {
                let svc = svc.clone();
                s.spawn(move || {
                    for i in 0..50 {
                        let mut m = breast();
                        if (i + t) % 3 == 0 {
                            m.remove(METASTASE);
                        }
                        svc.handle_validation(auth(), &validation_body(&m));
                    }
                });
            }
        });
        let c = svc.snapshot_counters();
        assert_eq!(c.applied + c.not_applied, c.total_hits);
        assert_eq!(c.total_hits, 4 * 50 * 30);
    }

    #[test]
    fn mismatched_rules_rejected() {
        let catalog = Catalog::generate(0);
        let cfg = ServiceConfig {
            version_id: VersionId::new(2).unwrap(),
            environment: Environment::Dev,
            auth_token: TOKEN.into(),
        };
        let wrong = catalog.get(VersionId::new(1).unwrap(), Environment::Dev).clone();
        assert!(RegistryService::new(cfg, wrong).is_err());
    }
}
