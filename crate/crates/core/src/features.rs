//! Raw log refinement and feature engineering.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{self, BufRead, Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::generator::GeneratedRequest;
use crate::payload::{
    is_date_format, CANCER_TYPE, DIAGNOSEDATO, EKSTRALOKALISASJON, MELDINGSTYPE, MESSAGES_KEY,
    METASTASE, TOPOGRAFI,
};
use crate::rules::{Environment, VersionId};
use crate::scalar::Scalar;

/// Top-level keys that only exist after execution or inside the generator.
pub const POST_EXECUTION_KEYS: [&str; 2] = ["generatorInternals", "responseBody"];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FlatRecord {
    pub fields: BTreeMap<String, Value>,
}

impl FlatRecord {
    pub fn get(&self, key: &str) -> Option<&Value> {
        self.fields.get(key)
    }

    pub fn to_json(&self) -> Value {
        Value::Object(self.fields.iter().map(|(k, v)| (k.clone(), v.clone())).collect())
    }

    pub fn request_id(&self) -> Option<u64> {
        self.get("requestId").and_then(Value::as_u64)
    }

    pub fn status_code(&self) -> Option<u16> {
        self.get("statusCode").and_then(Value::as_u64).and_then(|s| u16::try_from(s).ok())
    }

    /// Pre-execution view of a generated request, as the gate sees it.
    pub fn from_request(req: &GeneratedRequest, environment: Environment, version: VersionId) -> Self {
        let record = serde_json::json!({
            "requestId": req.index,
            "endpoint": req.endpoint,
            "url": req.endpoint.path(),
            "method": "POST",
            "authPresent": req.authorization.is_some(),
            "body": req.body,
            "environment": environment,
            "versionId": version,
        });
        refine_value(record).expect("object")
    }
}

fn flatten_into(prefix: &str, value: Value, out: &mut BTreeMap<String, Value>) {
    let join = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match value {
        Value::Object(map) if !map.is_empty() => {
            for (k, v) in map {
                flatten_into(&join(&k), v, out);
            }
        }
        Value::Array(items) if !items.is_empty() => {
            for (i, v) in items.into_iter().enumerate() {
                flatten_into(&join(&i.to_string()), v, out);
            }
        }
        leaf => {
            out.insert(prefix.to_string(), leaf);
        }
    }
}

fn is_post_execution(key: &str) -> bool {
    POST_EXECUTION_KEYS
        .iter()
        .any(|p| key == *p || key.strip_prefix(p).is_some_and(|rest| rest.starts_with('.')))
}

/// Flattens one record: body fields lose their `body.` prefix, everything
/// else keeps its path; post-execution keys are dropped.
pub fn refine_value(record: Value) -> Option<FlatRecord> {
    let Value::Object(map) = record else { return None };
    let mut fields = BTreeMap::new();
    for (k, v) in map {
        if is_post_execution(&k) {
            continue;
        }
        if k == "body" {
            flatten_into("", v, &mut fields);
        } else {
            flatten_into(&k, v, &mut fields);
        }
    }
    fields.retain(|k, _| !is_post_execution(k));
    Some(FlatRecord { fields })
}

#[derive(Debug, Default)]
pub struct Refined {
    pub records: Vec<FlatRecord>,
    pub skipped: usize,
}

/// Refines a JSON-lines raw log. Malformed lines are skipped and counted.
pub fn refine(reader: impl BufRead) -> io::Result<Refined> {
    let mut out = Refined::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<Value>(&line).ok().and_then(refine_value) {
            Some(r) => out.records.push(r),
            None => {
                log::warn!("raw log line {}: not a JSON object, skipped", i + 1);
                out.skipped += 1;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum EncoderKind {
    Binary,
    Count,
    Label,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub encoder: EncoderKind,
    /// Label table in first-occurrence order; empty for other encoders.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub labels: Vec<String>,
}

pub const MISSING_LABEL: &str = "<missing>";

/// Every feature the pipeline knows how to compute, in default order.
pub const FEATURE_CATALOG: [(&str, EncoderKind); 16] = [
    ("url", EncoderKind::Label),
    ("method", EncoderKind::Label),
    ("environment", EncoderKind::Label),
    ("versionId", EncoderKind::Label),
    ("is_no_auth", EncoderKind::Binary),
    ("cancerMessagesNr", EncoderKind::Count),
    ("cancerTypesNr", EncoderKind::Count),
    ("diagnosedatoMissingNr", EncoderKind::Count),
    ("cancerMessages.diagnosedato_format_valid", EncoderKind::Binary),
    ("cancerCase.diagnosedato_format_valid", EncoderKind::Binary),
    ("cancerType", EncoderKind::Label),
    ("meldingstype", EncoderKind::Label),
    ("topografi", EncoderKind::Label),
    ("metastase", EncoderKind::Label),
    ("ekstralokalisasjon", EncoderKind::Label),
    ("caseIdPresent", EncoderKind::Binary),
];

pub const TARGET_COLUMN: &str = "target";
pub const SCHEMA_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FeatureSchema {
    pub format_version: u32,
    pub features: Vec<FeatureSpec>,
    /// Human-readable target definition.
    pub target: String,
}

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("need at least {needed} rows, have {have}")]
    TooFewRows { needed: usize, have: usize },
    #[error("refusing to drop every feature")]
    WouldDropAll,
    #[error("dataset: {0}")]
    Csv(#[from] csv::Error),
    #[error("dataset column mismatch: {0}")]
    Columns(String),
    #[error("schema file: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Per-record facts shared by several features.
struct Extracted<'a> {
    record: &'a FlatRecord,
    messages: BTreeMap<usize, BTreeMap<&'a str, &'a Value>>,
}

impl<'a> Extracted<'a> {
    fn new(record: &'a FlatRecord) -> Self {
        let mut messages: BTreeMap<usize, BTreeMap<&str, &Value>> = BTreeMap::new();
        for (k, v) in &record.fields {
            let k = k.strip_prefix("cancerCase.").unwrap_or(k);
            let Some(rest) = k.strip_prefix(MESSAGES_KEY).and_then(|r| r.strip_prefix('.')) else {
                continue;
            };
            let (idx, field) = match rest.split_once('.') {
                Some((i, f)) => (i, Some(f)),
                None => (rest, None),
            };
            let Ok(idx) = idx.parse::<usize>() else { continue };
            let entry = messages.entry(idx).or_default();
            if let Some(f) = field {
                entry.insert(f, v);
            }
        }
        Self { record, messages }
    }

    fn first(&self, field: &str) -> Option<&'a Value> {
        self.messages.values().next().and_then(|m| m.get(field).copied())
    }
}

fn label_of(v: Option<&Value>) -> String {
    match v {
        None => MISSING_LABEL.to_string(),
        Some(Value::String(s)) => s.clone(),
        Some(other) => format!("json:{other}"),
    }
}

enum Raw {
    Num(f64),
    Cat(String),
}

fn flag(b: bool) -> Raw {
    Raw::Num(if b { 1.0 } else { 0.0 })
}

fn raw_feature(name: &str, e: &Extracted<'_>) -> Option<Raw> {
    let r = e.record;
    Some(match name {
        "url" | "method" | "environment" | "versionId" => Raw::Cat(label_of(r.get(name))),
        "is_no_auth" => flag(!r.get("authPresent").and_then(Value::as_bool).unwrap_or(false)),
        "cancerMessagesNr" => Raw::Num(e.messages.len() as f64),
        "cancerTypesNr" => {
            let types: BTreeSet<&str> = e
                .messages
                .values()
                .filter_map(|m| m.get(CANCER_TYPE).and_then(|v| v.as_str()))
                .collect();
            Raw::Num(types.len() as f64)
        }
        "diagnosedatoMissingNr" => {
            Raw::Num(e.messages.values().filter(|m| !m.contains_key(DIAGNOSEDATO)).count() as f64)
        }
        "cancerMessages.diagnosedato_format_valid" => flag(e.messages.values().all(|m| {
            m.get(DIAGNOSEDATO)
                .is_none_or(|v| v.as_str().is_some_and(is_date_format))
        })),
        "cancerCase.diagnosedato_format_valid" => flag(
            r.get("cancerCase.diagnosedato")
                .and_then(Value::as_str)
                .is_some_and(is_date_format),
        ),
        "caseIdPresent" => flag(r.get("cancerCase.caseId").is_some()),
        _ => {
            if [CANCER_TYPE, MELDINGSTYPE, TOPOGRAFI, METASTASE, EKSTRALOKALISASJON].contains(&name) {
                return Some(Raw::Cat(label_of(e.first(name))));
            }
            return None;
        }
    })
}

impl FeatureSchema {
    /// Schema over the full feature catalog with empty label tables.
    pub fn catalog() -> Self {
        Self::with_features(FEATURE_CATALOG.iter().map(|(n, _)| *n)).expect("catalog names are known")
    }

    pub fn with_features<'a>(names: impl IntoIterator<Item = &'a str>) -> Result<Self, FeatureError> {
        let features = names
            .into_iter()
            .map(|n| {
                let encoder = FEATURE_CATALOG
                    .iter()
                    .find(|(c, _)| *c == n)
                    .map(|(_, k)| *k)
                    .ok_or_else(|| FeatureError::UnknownFeature(n.to_string()))?;
                Ok(FeatureSpec {
                    name: n.to_string(),
                    encoder,
                    labels: Vec::new(),
                })
            })
            .collect::<Result<_, FeatureError>>()?;
        Ok(Self {
            format_version: SCHEMA_FORMAT_VERSION,
            features,
            target: "statusCode == 200".into(),
        })
    }

    pub fn names(&self) -> Vec<&str> {
        self.features.iter().map(|f| f.name.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// Stable digest of names, encoders and label tables.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_vec(&self.features).expect("serializable");
        hex::encode(&Sha256::digest(&canonical)[..8])
    }

    /// Extends label tables with values seen in `records`, in order.
    pub fn fit(&mut self, records: &[FlatRecord]) {
        for r in records {
            let e = Extracted::new(r);
            for f in &mut self.features {
                if f.encoder != EncoderKind::Label {
                    continue;
                }
                if let Some(Raw::Cat(s)) = raw_feature(&f.name, &e) {
                    if !f.labels.contains(&s) {
                        f.labels.push(s);
                    }
                }
            }
        }
    }

    /// Encodes one record. Unseen labels map to the table length.
    pub fn encode<F: Scalar>(&self, record: &FlatRecord) -> Vec<F> {
        let e = Extracted::new(record);
        self.features
            .iter()
            .map(|f| match raw_feature(&f.name, &e) {
                Some(Raw::Num(x)) => F::of(x),
                Some(Raw::Cat(s)) => {
                    let code = f.labels.iter().position(|l| *l == s).unwrap_or(f.labels.len());
                    F::of_usize(code)
                }
                None => F::zero(),
            })
            .collect()
    }

    pub fn select(&self, keep: &[usize]) -> Self {
        Self {
            format_version: self.format_version,
            features: keep.iter().map(|&i| self.features[i].clone()).collect(),
            target: self.target.clone(),
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    pub fn from_json_str(s: &str) -> Result<Self, FeatureError> {
        Ok(serde_json::from_str(s)?)
    }
}

pub fn target_of(record: &FlatRecord) -> u8 {
    u8::from(record.status_code() == Some(200))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix<F> {
    pub n_rows: usize,
    pub n_cols: usize,
    /// Row-major.
    pub x: Vec<F>,
    pub y: Vec<u8>,
    pub request_ids: Vec<u64>,
}

impl<F: Scalar> FeatureMatrix<F> {
    pub fn new(rows: Vec<Vec<F>>, y: Vec<u8>) -> Self {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        assert_eq!(n_rows, y.len(), "rows and targets differ in length");
        let x: Vec<F> = rows.into_iter().flatten().collect();
        assert_eq!(x.len(), n_rows * n_cols, "ragged rows");
        Self {
            n_rows,
            n_cols,
            x,
            y,
            request_ids: (0..n_rows as u64).collect(),
        }
    }

    pub fn row(&self, i: usize) -> &[F] {
        &self.x[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn get(&self, i: usize, j: usize) -> F {
        self.x[i * self.n_cols + j]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[F]> {
        self.x.chunks(self.n_cols.max(1)).take(self.n_rows)
    }

    pub fn subset_rows(&self, idx: &[usize]) -> Self {
        let mut x = Vec::with_capacity(idx.len() * self.n_cols);
        for &i in idx {
            x.extend_from_slice(self.row(i));
        }
        Self {
            n_rows: idx.len(),
            n_cols: self.n_cols,
            x,
            y: idx.iter().map(|&i| self.y[i]).collect(),
            request_ids: idx.iter().map(|&i| self.request_ids[i]).collect(),
        }
    }

    pub fn select_columns(&self, keep: &[usize]) -> Self {
        let mut x = Vec::with_capacity(self.n_rows * keep.len());
        for r in self.rows() {
            x.extend(keep.iter().map(|&j| r[j]));
        }
        Self {
            n_rows: self.n_rows,
            n_cols: keep.len(),
            x,
            y: self.y.clone(),
            request_ids: self.request_ids.clone(),
        }
    }

    pub fn positives(&self) -> usize {
        self.y.iter().filter(|&&v| v == 1).count()
    }

    pub fn write_csv(&self, schema: &FeatureSchema, out: impl Write) -> Result<(), FeatureError> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<&str> = schema.names();
        header.push(TARGET_COLUMN);
        w.write_record(&header)?;
        for (r, y) in self.rows().zip(&self.y) {
            let mut fields: Vec<String> = r.iter().map(|v| v.to_string()).collect();
            fields.push(y.to_string());
            w.write_record(&fields)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(schema: &FeatureSchema, input: impl Read) -> Result<Self, FeatureError> {
        let mut rd = csv::Reader::from_reader(input);
        let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
        let mut expected: Vec<String> = schema.names().into_iter().map(str::to_string).collect();
        expected.push(TARGET_COLUMN.into());
        if header != expected {
            return Err(FeatureError::Columns(format!("expected {expected:?}, found {header:?}")));
        }
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let parse = |s: &str| s.parse::<f64>().map_err(|e| FeatureError::Columns(format!("`{s}`: {e}")));
            let mut row = Vec::with_capacity(schema.len());
            for s in rec.iter().take(schema.len()) {
                row.push(F::of(parse(s)?));
            }
            let target = parse(rec.get(schema.len()).unwrap_or_default())?;
            rows.push(row);
            y.push(u8::from(target == 1.0));
        }
        if rows.is_empty() {
            return Ok(Self {
                n_rows: 0,
                n_cols: schema.len(),
                x: Vec::new(),
                y: Vec::new(),
                request_ids: Vec::new(),
            });
        }
        Ok(Self::new(rows, y))
    }
}

/// Encodes records. Without a schema, one is fitted over the full catalog.
pub fn build_features<F: Scalar>(
    records: &[FlatRecord],
    schema: Option<&FeatureSchema>,
) -> (FeatureMatrix<F>, FeatureSchema) {
    let schema = match schema {
        Some(s) => s.clone(),
        None => {
            let mut s = FeatureSchema::catalog();
            s.fit(records);
            s
        }
    };
    let x: Vec<F> = records.iter().flat_map(|r| schema.encode::<F>(r)).collect();
    let matrix = FeatureMatrix {
        n_rows: records.len(),
        n_cols: schema.len(),
        x,
        y: records.iter().map(target_of).collect(),
        request_ids: records
            .iter()
            .enumerate()
            .map(|(i, r)| r.request_id().unwrap_or(i as u64))
            .collect(),
    };
    (matrix, schema)
}

/// Drops zero-importance columns. `Ok(None)` when nothing had zero importance.
pub fn drop_zero_importance<F: Scalar>(
    matrix: &FeatureMatrix<F>,
    schema: &FeatureSchema,
    importances: &[F],
) -> Result<Option<(FeatureMatrix<F>, FeatureSchema)>, FeatureError> {
    let keep: Vec<usize> = (0..schema.len()).filter(|&j| importances[j] != F::zero()).collect();
    if keep.len() == schema.len() {
        return Ok(None);
    }
    if keep.is_empty() {
        return Err(FeatureError::WouldDropAll);
    }
    Ok(Some((matrix.select_columns(&keep), schema.select(&keep))))
}

/// Train, score, drop until no feature has zero importance.
pub fn select_features<F: Scalar>(
    matrix: FeatureMatrix<F>,
    schema: FeatureSchema,
    mut importances: impl FnMut(&FeatureMatrix<F>) -> Vec<F>,
) -> Result<(FeatureMatrix<F>, FeatureSchema), FeatureError> {
    let (mut matrix, mut schema) = (matrix, schema);
    loop {
        let imp = importances(&matrix);
        match drop_zero_importance(&matrix, &schema, &imp)? {
            None => return Ok((matrix, schema)),
            Some((m, s)) => {
                log::info!("dropped {} zero-importance features", schema.len() - s.len());
                matrix = m;
                schema = s;
            }
        }
    }
}

/// Shuffled split; the first part has ⌊ratio·n⌋ rows.
pub fn split<F: Scalar>(
    matrix: &FeatureMatrix<F>,
    ratio: f64,
    seed: u64,
) -> Result<(FeatureMatrix<F>, FeatureMatrix<F>), FeatureError> {
    const MIN_ROWS: usize = 5;
    if matrix.n_rows < MIN_ROWS {
        return Err(FeatureError::TooFewRows {
            needed: MIN_ROWS,
            have: matrix.n_rows,
        });
    }
    let mut idx: Vec<usize> = (0..matrix.n_rows).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = split_point(matrix.n_rows, ratio);
    Ok((matrix.subset_rows(&idx[..n_train]), matrix.subset_rows(&idx[n_train..])))
}

pub fn split_point(n: usize, ratio: f64) -> usize {
    // nudge so that e.g. 0.8 * 13985 lands on 11188, not 11187.999...
    (((n as f64) * ratio) + 1e-9).floor() as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn raw(status: u16, auth: bool, body: Value) -> Value {
        json!({
            "requestId": 7,
            "endpoint": "aggregation",
            "url": "/api/messages/aggregation",
            "method": "POST",
            "authPresent": auth,
            "body": body,
            "environment": "dev",
            "versionId": "v1",
            "statusCode": status,
            "responseBody": {"ruleMessages": []},
            "generatorInternals": {"fitness": 0.5, "novelty": 0.1}
        })
    }

    fn case_body(date: &str) -> Value {
        json!({"cancerCase": {"caseId": "C1", "diagnosedato": date, "cancerMessages": [
            {"cancerType": "Breast", "diagnosedato": "2017-12-01", "topografi": "509"},
            {"cancerType": "Lung", "topografi": 340}
        ]}})
    }

    #[test]
    fn refine_flattens_and_cleans() {
        let r = refine_value(raw(200, true, case_body("2017-12-01"))).unwrap();
        assert!(r.fields.keys().all(|k| !k.starts_with("generatorInternals") && !k.starts_with("responseBody")));
        assert_eq!(r.get("cancerCase.diagnosedato"), Some(&json!("2017-12-01")));
        assert_eq!(r.get("cancerCase.cancerMessages.1.topografi"), Some(&json!(340)));
        assert_eq!(r.get("url"), Some(&json!("/api/messages/aggregation")));
        // idempotent on flattened output
        assert_eq!(refine_value(r.to_json()).unwrap(), r);
    }

    #[test]
    fn refine_counts_bad_lines() {
        let log = format!("{}\nnot json\n[1,2]\n\n", raw(200, true, json!({})));
        let out = refine(log.as_bytes()).unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.skipped, 2);
        assert!(refine("".as_bytes()).unwrap().records.is_empty());
    }

    #[test]
    fn features_and_target() {
        let ok = refine_value(raw(200, true, case_body("2017-12-01"))).unwrap();
        let redirect = refine_value(raw(302, false, case_body("12/2017"))).unwrap();
        let (m, schema) = build_features::<f64>(&[ok.clone(), redirect.clone()], None);
        assert_eq!(m.y, vec![1, 0]);
        let col = |name: &str| schema.names().iter().position(|n| *n == name).unwrap();
        assert_eq!(m.get(0, col("is_no_auth")), 0.0);
        assert_eq!(m.get(1, col("is_no_auth")), 1.0);
        assert_eq!(m.get(0, col("cancerCase.diagnosedato_format_valid")), 1.0);
        assert_eq!(m.get(1, col("cancerCase.diagnosedato_format_valid")), 0.0);
        assert_eq!(m.get(0, col("cancerMessagesNr")), 2.0);
        assert_eq!(m.get(0, col("cancerTypesNr")), 2.0);
        assert_eq!(m.get(0, col("diagnosedatoMissingNr")), 1.0);
        // only the first message is label-encoded; the numeric code in the
        // second one leaves no trace
        assert_eq!(schema.features[col("topografi")].labels, ["509"]);
        assert_eq!(m.request_ids, vec![7, 7]);
    }

    #[test]
    fn label_encoding_order_and_sentinel() {
        let recs: Vec<FlatRecord> = ["Breast", "Lung", "Breast", "Prostate", "Colon"]
            .iter()
            .map(|t| {
                refine_value(raw(200, true, json!({"cancerMessages": [{"cancerType": t}]}))).unwrap()
            })
            .collect();
        let (m, schema) = build_features::<f64>(&recs, None);
        let j = schema.names().iter().position(|n| *n == "cancerType").unwrap();
        assert_eq!(schema.features[j].labels, ["Breast", "Lung", "Prostate", "Colon"]);
        let codes: Vec<f64> = (0..5).map(|i| m.get(i, j)).collect();
        assert_eq!(codes, [0.0, 1.0, 0.0, 2.0, 3.0]);
        let unseen = refine_value(raw(200, true, json!({"cancerMessages": [{"cancerType": "Skin"}]}))).unwrap();
        let (m2, _) = build_features::<f64>(&[unseen], Some(&schema));
        assert_eq!(m2.get(0, j), 4.0);
    }

    #[test]
    fn schema_round_trip_is_pure() {
        let recs = vec![refine_value(raw(500, true, case_body("2017-02-30"))).unwrap()];
        let (m, schema) = build_features::<f64>(&recs, None);
        let back = FeatureSchema::from_json_str(&schema.to_json_string()).unwrap();
        assert_eq!(back.fingerprint(), schema.fingerprint());
        let (m2, _) = build_features::<f64>(&recs, Some(&back));
        assert_eq!(m, m2);
    }

    #[test]
    fn csv_round_trip() {
        let recs: Vec<FlatRecord> = (0..6)
            .map(|i| refine_value(raw(if i % 2 == 0 { 200 } else { 500 }, true, case_body("2017-12-01"))).unwrap())
            .collect();
        let (m, schema) = build_features::<f64>(&recs, None);
        let mut buf = Vec::new();
        m.write_csv(&schema, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.lines().next().unwrap().ends_with(",target"));
        let back = FeatureMatrix::<f64>::read_csv(&schema, buf.as_slice()).unwrap();
        assert_eq!(back.x, m.x);
        assert_eq!(back.y, m.y);
    }

    #[test]
    fn split_sizes() {
        let rows = |n: usize| FeatureMatrix::<f64>::new((0..n).map(|i| vec![i as f64]).collect(), vec![0; n]);
        let (a, b) = split(&rows(10), 0.8, 1).unwrap();
        assert_eq!((a.n_rows, b.n_rows), (8, 2));
        let (a, b) = split(&rows(13_985), 0.8, 1).unwrap();
        assert_eq!((a.n_rows, b.n_rows), (11_188, 2_797));
        let (a2, _) = split(&rows(13_985), 0.8, 1).unwrap();
        assert_eq!(a, a2);
        let mut all: Vec<u64> = a.request_ids.iter().chain(&b.request_ids).copied().collect();
        all.sort();
        assert_eq!(all, (0..13_985).collect::<Vec<_>>());
        assert!(split(&rows(4), 0.8, 1).is_err());
    }

    #[test]
    fn zero_importance_dropped_until_fixed_point() {
        let m = FeatureMatrix::<f64>::new(vec![vec![1.0, 0.0, 2.0]; 5], vec![0, 1, 0, 1, 0]);
        let schema = FeatureSchema::with_features(["method", "is_no_auth", "cancerMessagesNr"]).unwrap();
        let mut rounds = 0;
        let (m2, s2) = select_features(m, schema, |mat| {
            rounds += 1;
            // first round: column 0 useless; afterwards everything informative
            if mat.n_cols == 3 { vec![0.0, 0.7, 0.3] } else { vec![0.5; mat.n_cols] }
        })
        .unwrap();
        assert_eq!(s2.names(), ["is_no_auth", "cancerMessagesNr"]);
        assert_eq!(m2.n_cols, 2);
        assert_eq!(rounds, 2);
        let one = FeatureMatrix::<f64>::new(vec![vec![1.0]; 5], vec![0; 5]);
        let s = FeatureSchema::with_features(["method"]).unwrap();
        assert!(matches!(drop_zero_importance(&one, &s, &[0.0]), Err(FeatureError::WouldDropAll)));
    }
}
