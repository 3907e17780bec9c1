//! Schema-driven random request generation, execution and raw logging.
//!
//! Every request draws from its own ChaCha stream seeded from (seed, index), so
//! request `i` is the same regardless of how many requests precede it.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use chrono::NaiveDate;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::domain::{
    CANCER_TYPES, EKSTRALOKALISASJONER, FIRST_YEAR, LAST_YEAR, MELDINGSTYPER, METASTASER, TOPOGRAFI_PREFIXES,
};
use crate::payload::{
    CANCER_TYPE, CASE_ID, CASE_KEY, DIAGNOSEDATO, EKSTRALOKALISASJON, MELDINGSTYPE, MESSAGES_KEY, METASTASE,
    TOPOGRAFI,
};
use crate::registry::{ApiRequest, Endpoint, Transport, TransportError};
use crate::rules::{Environment, VersionId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "camelCase")]
pub enum FieldType {
    Enum { values: Vec<String> },
    /// A known prefix followed by random digits up to a total length.
    DigitString { prefixes: Vec<String>, min_len: usize, max_len: usize },
    Date { first_year: i32, last_year: i32 },
    Id { prefix: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub name: String,
    #[serde(flatten)]
    pub ty: FieldType,
    /// Probability that a valid payload carries the field at all.
    pub presence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ApiSchema {
    pub message_fields: Vec<FieldSpec>,
    pub case_fields: Vec<FieldSpec>,
    pub auth_required: bool,
}

fn strings(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

impl Default for ApiSchema {
    fn default() -> Self {
        let date = FieldType::Date {
            first_year: FIRST_YEAR,
            last_year: LAST_YEAR,
        };
        let field = |name: &str, ty: FieldType, presence: f64| FieldSpec {
            name: name.into(),
            ty,
            presence,
        };
        Self {
            message_fields: vec![
                field(CANCER_TYPE, FieldType::Enum { values: strings(&CANCER_TYPES) }, 0.97),
                field(MELDINGSTYPE, FieldType::Enum { values: strings(&MELDINGSTYPER) }, 0.95),
                field(
                    TOPOGRAFI,
                    FieldType::DigitString {
                        prefixes: strings(&TOPOGRAFI_PREFIXES),
                        min_len: 3,
                        max_len: 3,
                    },
                    0.95,
                ),
                field(METASTASE, FieldType::Enum { values: strings(&METASTASER) }, 0.93),
                field(EKSTRALOKALISASJON, FieldType::Enum { values: strings(&EKSTRALOKALISASJONER) }, 0.93),
                field(DIAGNOSEDATO, date.clone(), 0.95),
            ],
            case_fields: vec![
                field(CASE_ID, FieldType::Id { prefix: "C".into() }, 1.0),
                field(DIAGNOSEDATO, date, 1.0),
            ],
            auth_required: true,
        }
    }
}

impl ApiSchema {
    pub fn message_field(&self, name: &str) -> Option<&FieldSpec> {
        self.message_fields.iter().find(|f| f.name == name)
    }
}

/// Injected fault classes. At most one per request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Corruption {
    NoAuth,
    FormatInvalidDate,
    CalendarInvalidDate,
    TypeConfusion,
    WrongEnum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorruptionMix {
    pub p_no_auth: f64,
    pub p_format_invalid_date: f64,
    pub p_type_confusion: f64,
    pub p_wrong_enum: f64,
    /// Applied independently to each date field of a request that drew no
    /// other corruption, so requests with more dates fail more often.
    pub p_calendar_invalid: f64,
}

impl Default for CorruptionMix {
    fn default() -> Self {
        Self {
            p_no_auth: 0.0,
            p_format_invalid_date: 0.0,
            p_type_confusion: 0.0,
            p_wrong_enum: 0.0,
            p_calendar_invalid: 0.0,
        }
    }
}

impl CorruptionMix {
    fn exclusive(&self) -> [(Corruption, f64); 4] {
        [
            (Corruption::NoAuth, self.p_no_auth),
            (Corruption::FormatInvalidDate, self.p_format_invalid_date),
            (Corruption::TypeConfusion, self.p_type_confusion),
            (Corruption::WrongEnum, self.p_wrong_enum),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EndpointMix {
    pub corruption: CorruptionMix,
    pub messages_min: usize,
    pub messages_max: usize,
}

impl Default for EndpointMix {
    fn default() -> Self {
        Self {
            corruption: CorruptionMix::default(),
            messages_min: 1,
            messages_max: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub budget: usize,
    pub validation: EndpointMix,
    pub aggregation: EndpointMix,
}

impl Default for GeneratorConfig {
    /// The calibrated mix.
    fn default() -> Self {
        Self {
            seed: 0,
            budget: 15_000,
            validation: EndpointMix {
                corruption: CorruptionMix {
                    p_no_auth: 0.048,
                    p_format_invalid_date: 0.25,
                    p_type_confusion: 0.03,
                    p_wrong_enum: 0.08,
                    p_calendar_invalid: 0.0,
                },
                messages_min: 1,
                messages_max: 2,
            },
            aggregation: EndpointMix {
                corruption: CorruptionMix {
                    p_no_auth: 0.048,
                    p_format_invalid_date: 0.25,
                    p_type_confusion: 0.03,
                    p_wrong_enum: 0.08,
                    p_calendar_invalid: 0.10,
                },
                messages_min: 1,
                messages_max: 3,
            },
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{0} must be in [0, 1], got {1}")]
    Probability(String, f64),
    #[error("{endpoint}: exclusive corruption probabilities sum to {sum} > 1")]
    MixSum { endpoint: Endpoint, sum: f64 },
    #[error("{0}: messages_min must be <= messages_max")]
    MessageRange(Endpoint),
    #[error("budget must be at least 1")]
    Budget,
}

impl GeneratorConfig {
    /// Valid-only configuration: no corruption at all.
    pub fn clean(seed: u64, budget: usize) -> Self {
        let mut cfg = Self {
            seed,
            budget,
            ..Self::default()
        };
        cfg.validation.corruption = CorruptionMix::default();
        cfg.aggregation.corruption = CorruptionMix::default();
        cfg
    }

    pub fn mix(&self, endpoint: Endpoint) -> &EndpointMix {
        match endpoint {
            Endpoint::Validation => &self.validation,
            Endpoint::Aggregation => &self.aggregation,
        }
    }

    pub fn mix_mut(&mut self, endpoint: Endpoint) -> &mut EndpointMix {
        match endpoint {
            Endpoint::Validation => &mut self.validation,
            Endpoint::Aggregation => &mut self.aggregation,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.budget < 1 {
            return Err(ConfigError::Budget);
        }
        for endpoint in Endpoint::ALL {
            let mix = self.mix(endpoint);
            let c = &mix.corruption;
            for (name, p) in [
                ("p_no_auth", c.p_no_auth),
                ("p_format_invalid_date", c.p_format_invalid_date),
                ("p_type_confusion", c.p_type_confusion),
                ("p_wrong_enum", c.p_wrong_enum),
                ("p_calendar_invalid", c.p_calendar_invalid),
            ] {
                if !(0.0..=1.0).contains(&p) {
                    return Err(ConfigError::Probability(format!("{endpoint}.{name}"), p));
                }
            }
            let sum: f64 = c.exclusive().iter().map(|(_, p)| p).sum();
            if sum > 1.0 + 1e-12 {
                return Err(ConfigError::MixSum { endpoint, sum });
            }
            if mix.messages_min > mix.messages_max {
                return Err(ConfigError::MessageRange(endpoint));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedRequest {
    pub index: u64,
    pub endpoint: Endpoint,
    pub authorization: Option<String>,
    pub body: Value,
    pub corruption: Option<Corruption>,
    pub internals: Map<String, Value>,
}

impl GeneratedRequest {
    pub fn to_api_request(&self) -> ApiRequest {
        ApiRequest {
            endpoint: self.endpoint,
            authorization: self.authorization.clone(),
            body: serde_json::to_vec(&self.body).expect("json values serialize"),
        }
    }
}

/// One line of the raw log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RequestRecord {
    pub request_id: u64,
    pub endpoint: Endpoint,
    pub url: String,
    pub method: String,
    pub auth_present: bool,
    pub body: Value,
    pub environment: Environment,
    pub version_id: VersionId,
    pub status_code: u16,
    pub response_body: Value,
    #[serde(default, skip_serializing_if = "Map::is_empty")]
    pub generator_internals: Map<String, Value>,
}

/// SplitMix64 finalizer; decorrelates per-index seeds.
pub fn mix_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const FORMAT_INVALID_DATES: [&str; 5] = ["12/2017", "notadate", "20171201", "", "2017/12/01"];
const WRONG_ENUM_VALUES: [&str; 4] = ["X", "ZZ", "99", "unknown"];

pub struct RequestGenerator {
    schema: ApiSchema,
    config: GeneratorConfig,
    auth_token: String,
}

impl RequestGenerator {
    pub fn new(schema: ApiSchema, config: GeneratorConfig, auth_token: &str) -> Result<Self, ConfigError> {
        config.validate()?;
        Ok(Self {
            schema,
            config,
            auth_token: auth_token.to_string(),
        })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    pub fn schema(&self) -> &ApiSchema {
        &self.schema
    }

    pub fn generate(&self, index: u64) -> GeneratedRequest {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(self.config.seed, index));
        let endpoint = if rng.random_bool(0.5) { Endpoint::Validation } else { Endpoint::Aggregation };
        let mix = self.config.mix(endpoint);
        let n_messages = rng.random_range(mix.messages_min..=mix.messages_max);
        let mut messages: Vec<Map<String, Value>> = (0..n_messages).map(|_| self.message(&mut rng)).collect();
        let mut case = (endpoint == Endpoint::Aggregation).then(|| {
            let mut m = Map::new();
            for f in &self.schema.case_fields {
                if rng.random_bool(f.presence) {
                    m.insert(f.name.clone(), Value::String(value_for(&f.ty, &mut rng, index)));
                }
            }
            m
        });

        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut corruption = None;
        for (c, p) in mix.corruption.exclusive() {
            acc += p;
            if u < acc {
                corruption = Some(c);
                break;
            }
        }
        match corruption {
            Some(Corruption::NoAuth) | None => {}
            Some(Corruption::FormatInvalidDate) => {
                let bad = FORMAT_INVALID_DATES.choose(&mut rng).expect("non-empty");
                *pick_date(&mut messages, case.as_mut(), &mut rng) = Value::String(bad.to_string());
            }
            Some(Corruption::TypeConfusion) => {
                let i = rng.random_range(0..messages.len().max(1));
                if let Some(m) = messages.get_mut(i) {
                    let names: Vec<&String> = self.schema.message_fields.iter().map(|f| &f.name).collect();
                    let name = names.choose(&mut rng).expect("fields");
                    let v = match m.get(name.as_str()).and_then(Value::as_str) {
                        Some(s) if s.chars().all(|c| c.is_ascii_digit()) && !s.is_empty() => {
                            json!(s.parse::<u64>().unwrap_or(0))
                        }
                        _ => json!(rng.random_range(0..1000)),
                    };
                    m.insert(name.to_string(), v);
                }
            }
            Some(Corruption::WrongEnum) => {
                let enums: Vec<&FieldSpec> = self
                    .schema
                    .message_fields
                    .iter()
                    .filter(|f| matches!(f.ty, FieldType::Enum { .. }))
                    .collect();
                let i = rng.random_range(0..messages.len().max(1));
                if let (Some(m), Some(f)) = (messages.get_mut(i), enums.choose(&mut rng)) {
                    let bad = WRONG_ENUM_VALUES.choose(&mut rng).expect("non-empty");
                    m.insert(f.name.clone(), Value::String(bad.to_string()));
                }
            }
            Some(Corruption::CalendarInvalidDate) => unreachable!("not an exclusive class"),
        }
        if corruption.is_none() && mix.corruption.p_calendar_invalid > 0.0 {
            let p = mix.corruption.p_calendar_invalid;
            let mut hit = false;
            let dates = messages
                .iter_mut()
                .chain(case.as_mut())
                .filter_map(|m| m.get_mut(DIAGNOSEDATO));
            for d in dates {
                if rng.random_bool(p) {
                    *d = Value::String(calendar_invalid_date(&mut rng));
                    hit = true;
                }
            }
            if hit {
                corruption = Some(Corruption::CalendarInvalidDate);
            }
        }

        let messages = Value::Array(messages.into_iter().map(Value::Object).collect());
        let body = match case {
            None => json!({ MESSAGES_KEY: messages }),
            Some(mut c) => {
                c.insert(MESSAGES_KEY.into(), messages);
                json!({ CASE_KEY: c })
            }
        };
        let authorization = (corruption != Some(Corruption::NoAuth)).then(|| format!("Bearer {}", self.auth_token));

        // stand-ins for search bookkeeping a real fuzzer would log
        let mut internals = Map::new();
        internals.insert("novelty".into(), json!(round3(rng.random::<f64>())));
        internals.insert("fitness".into(), json!(round3(rng.random::<f64>())));
        internals.insert("coveredTargets".into(), json!(rng.random_range(0..64u32)));
        internals.insert(
            "corruption".into(),
            serde_json::to_value(corruption).expect("serializable"),
        );
        GeneratedRequest {
            index,
            endpoint,
            authorization,
            body,
            corruption,
            internals,
        }
    }

    fn message(&self, rng: &mut ChaCha8Rng) -> Map<String, Value> {
        let mut m = Map::new();
        for f in &self.schema.message_fields {
            if rng.random_bool(f.presence) {
                m.insert(f.name.clone(), Value::String(value_for(&f.ty, rng, 0)));
            }
        }
        m
    }

    pub fn requests(&self) -> impl Iterator<Item = GeneratedRequest> + '_ {
        (0..self.config.budget as u64).map(|i| self.generate(i))
    }
}

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

fn value_for(ty: &FieldType, rng: &mut ChaCha8Rng, index: u64) -> String {
    match ty {
        FieldType::Enum { values } => values.choose(rng).cloned().unwrap_or_default(),
        FieldType::DigitString {
            prefixes,
            min_len,
            max_len,
        } => {
            let mut s = prefixes.choose(rng).cloned().unwrap_or_default();
            let len = rng.random_range(*min_len..=*max_len);
            while s.len() < len {
                s.push(char::from(b'0' + rng.random_range(0..10u8)));
            }
            s
        }
        FieldType::Date { first_year, last_year } => {
            let year = rng.random_range(*first_year..=*last_year);
            let start = NaiveDate::from_ymd_opt(year, 1, 1).expect("valid year");
            let days = if start.leap_year() { 366 } else { 365 };
            let d = start + chrono::Days::new(rng.random_range(0..days));
            d.format("%Y-%m-%d").to_string()
        }
        FieldType::Id { prefix } => format!("{prefix}{index:06}-{:04}", rng.random_range(0..10_000)),
    }
}

/// A string matching `YYYY-MM-DD` that names no real day.
pub fn calendar_invalid_date(rng: &mut impl Rng) -> String {
    let year = rng.random_range(FIRST_YEAR..=LAST_YEAR);
    match rng.random_range(0..4) {
        0 => format!("{year}-02-{}", rng.random_range(30..=31)),
        1 => format!("{year}-{:02}-31", [4, 6, 9, 11].choose(rng).expect("months")),
        2 => format!("{year}-{}-{:02}", rng.random_range(13..=19), rng.random_range(1..=28)),
        _ => format!("{year}-{:02}-00", rng.random_range(1..=12)),
    }
}

fn pick_date<'a>(
    messages: &'a mut [Map<String, Value>],
    case: Option<&'a mut Map<String, Value>>,
    rng: &mut ChaCha8Rng,
) -> &'a mut Value {
    let n = messages.len() + usize::from(case.is_some());
    let i = rng.random_range(0..n.max(1));
    match (i < messages.len(), case) {
        (true, _) => messages[i].entry(DIAGNOSEDATO).or_insert(Value::Null),
        (false, Some(c)) => c.entry(DIAGNOSEDATO).or_insert(Value::Null),
        (false, None) => unreachable!("validation requests carry at least one message"),
    }
}

pub fn execute_request(
    request: &GeneratedRequest,
    transport: &dyn Transport,
    version: VersionId,
    environment: Environment,
) -> Result<RequestRecord, TransportError> {
    let api = request.to_api_request();
    let response = transport.send(&api)?;
    Ok(RequestRecord {
        request_id: request.index,
        endpoint: request.endpoint,
        url: request.endpoint.path().to_string(),
        method: "POST".into(),
        auth_present: request.authorization.is_some(),
        body: request.body.clone(),
        environment,
        version_id: version,
        status_code: response.status,
        response_body: response.body,
        generator_internals: request.internals.clone(),
    })
}

#[derive(Debug, Error)]
pub enum CollectError {
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("writing raw log: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct StatusTally {
    pub ok: usize,
    pub redirect: usize,
    pub server_error: usize,
    pub other: usize,
}

impl StatusTally {
    pub fn add(&mut self, status: u16) {
        match status {
            200 => self.ok += 1,
            302 => self.redirect += 1,
            500 => self.server_error += 1,
            _ => self.other += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.ok + self.redirect + self.server_error + self.other
    }
}

/// Executes `budget` requests, writing one JSON line each. The log is flushed
/// even when a request fails part-way.
pub fn run_collection_to(
    generator: &RequestGenerator,
    transport: &dyn Transport,
    version: VersionId,
    environment: Environment,
    out: &mut dyn Write,
) -> Result<StatusTally, CollectError> {
    let mut tally = StatusTally::default();
    let result = (|| {
        for req in generator.requests() {
            let record = execute_request(&req, transport, version, environment)?;
            tally.add(record.status_code);
            serde_json::to_writer(&mut *out, &record).map_err(io::Error::from)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    })();
    out.flush()?;
    result.map(|()| tally)
}

pub fn run_collection(
    generator: &RequestGenerator,
    transport: &dyn Transport,
    version: VersionId,
    environment: Environment,
    log_path: &Path,
) -> Result<StatusTally, CollectError> {
    let mut out = BufWriter::new(File::create(log_path)?);
    run_collection_to(generator, transport, version, environment, &mut out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::payload::is_calendar_date;
    use crate::registry::{RegistryService, ServiceConfig};
    use crate::rules::Catalog;
    use std::collections::{BTreeMap, BTreeSet};

    fn service() -> RegistryService {
        RegistryService::from_catalog(
            ServiceConfig {
                version_id: VersionId::new(1).unwrap(),
                environment: Environment::Dev,
                auth_token: "t".into(),
            },
            &Catalog::generate(0),
        )
    }

    fn v1() -> VersionId {
        VersionId::new(1).unwrap()
    }

    #[test]
    fn clean_requests_all_succeed() {
        let svc = service();
        let g = RequestGenerator::new(ApiSchema::default(), GeneratorConfig::clean(1, 400), "t").unwrap();
        for r in g.requests() {
            assert!(r.corruption.is_none());
            let rec = execute_request(&r, &svc, v1(), Environment::Dev).unwrap();
            assert_eq!(rec.status_code, 200, "{}", r.body);
        }
    }

    #[test]
    fn no_auth_always_redirects() {
        let svc = service();
        let mut cfg = GeneratorConfig::clean(2, 200);
        cfg.validation.corruption.p_no_auth = 1.0;
        cfg.aggregation.corruption.p_no_auth = 1.0;
        let g = RequestGenerator::new(ApiSchema::default(), cfg, "t").unwrap();
        for r in g.requests() {
            assert_eq!(execute_request(&r, &svc, v1(), Environment::Dev).unwrap().status_code, 302);
        }
    }

    #[test]
    fn corruption_classes_map_to_statuses() {
        let svc = service();
        let g = RequestGenerator::new(ApiSchema::default(), GeneratorConfig { seed: 3, budget: 3000, ..Default::default() }, "t")
            .unwrap();
        let mut seen = BTreeSet::new();
        for r in g.requests() {
            let status = execute_request(&r, &svc, v1(), Environment::Dev).unwrap().status_code;
            let expected = match r.corruption {
                None | Some(Corruption::WrongEnum) => 200,
                Some(Corruption::NoAuth) => 302,
                Some(_) => 500,
            };
            assert_eq!(status, expected, "{:?} {}", r.corruption, r.body);
            seen.insert(format!("{:?}", r.corruption));
        }
        assert_eq!(seen.len(), 6);
    }

    #[test]
    fn deterministic_per_index() {
        let cfg = GeneratorConfig { seed: 9, budget: 50, ..Default::default() };
        let a = RequestGenerator::new(ApiSchema::default(), cfg.clone(), "t").unwrap();
        let b = RequestGenerator::new(ApiSchema::default(), cfg, "t").unwrap();
        assert_eq!(a.requests().collect::<Vec<_>>(), b.requests().collect::<Vec<_>>());
        assert_eq!(a.generate(37), b.generate(37));
        assert_ne!(a.generate(1), a.generate(2));
    }

    #[test]
    fn every_enum_value_appears() {
        let g = RequestGenerator::new(ApiSchema::default(), GeneratorConfig::clean(4, 1000), "t").unwrap();
        let mut seen: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for r in g.requests() {
            let msgs = r.body.pointer("/cancerMessages").or(r.body.pointer("/cancerCase/cancerMessages"));
            for m in msgs.and_then(Value::as_array).unwrap() {
                for (k, v) in m.as_object().unwrap() {
                    seen.entry(k.clone()).or_default().insert(v.as_str().unwrap().to_string());
                }
            }
        }
        for f in &g.schema().message_fields {
            if let FieldType::Enum { values } = &f.ty {
                for v in values {
                    assert!(seen[&f.name].contains(v), "{} never took {v}", f.name);
                }
            }
        }
    }

    #[test]
    fn calendar_invalid_dates_look_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..500 {
            let d = calendar_invalid_date(&mut rng);
            assert!(crate::payload::is_date_format(&d) && !is_calendar_date(&d), "{d}");
        }
    }

    #[test]
    fn rejects_bad_config() {
        let mut cfg = GeneratorConfig::default();
        cfg.validation.corruption.p_no_auth = 1.5;
        assert!(cfg.validate().is_err());
        let mut cfg = GeneratorConfig::default();
        cfg.aggregation.corruption.p_no_auth = 0.9;
        cfg.aggregation.corruption.p_type_confusion = 0.9;
        assert!(cfg.validate().is_err());
        assert!(GeneratorConfig { budget: 0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn collection_logs_one_line_per_request() {
        let svc = service();
        let g = RequestGenerator::new(ApiSchema::default(), GeneratorConfig { seed: 5, budget: 25, ..Default::default() }, "t")
            .unwrap();
        let mut a = Vec::new();
        let tally = run_collection_to(&g, &svc, v1(), Environment::Dev, &mut a).unwrap();
        assert_eq!(tally.total(), 25);
        let text = String::from_utf8(a.clone()).unwrap();
        assert_eq!(text.lines().count(), 25);
        let rec: RequestRecord = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(rec.method, "POST");
        let mut b = Vec::new();
        run_collection_to(&g, &service(), v1(), Environment::Dev, &mut b).unwrap();
        assert_eq!(a, b);
    }
}
