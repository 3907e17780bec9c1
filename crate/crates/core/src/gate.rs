//! Predict-before-execute interception of generated requests.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{Classifier, ConfusionCounts};
use crate::features::{FeatureSchema, FlatRecord};
use crate::generator::{execute_request, GeneratedRequest, RequestGenerator, RequestRecord, StatusTally};
use crate::registry::{CounterSnapshot, Transport, TransportError, STATUS_OK};
use crate::rules::{Environment, VersionId};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum GateError {
    #[error("model was trained on feature schema {model}, gate uses {schema}")]
    SchemaMismatch { model: String, schema: String },
    #[error("no requests were generated")]
    ZeroTotal,
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("writing campaign log: {0}")]
    Io(#[from] std::io::Error),
}

/// A model plus the schema its rows must be encoded with.
pub struct GateModel<'a, F> {
    pub model: &'a dyn Classifier<F>,
    pub schema: &'a FeatureSchema,
}

impl<'a, F: Scalar> GateModel<'a, F> {
    /// `model_fingerprint` is the schema the model was trained on, when known.
    pub fn new(
        model: &'a dyn Classifier<F>,
        schema: &'a FeatureSchema,
        model_fingerprint: Option<&str>,
    ) -> Result<Self, GateError> {
        if let Some(fp) = model_fingerprint {
            if fp != schema.fingerprint() {
                return Err(GateError::SchemaMismatch {
                    model: fp.to_string(),
                    schema: schema.fingerprint(),
                });
            }
        }
        Ok(Self { model, schema })
    }

    pub fn score(&self, req: &GeneratedRequest, version: VersionId, env: Environment) -> (Vec<F>, F) {
        let row = self.schema.encode::<F>(&FlatRecord::from_request(req, env, version));
        let p = self.model.predict_proba(&row);
        (row, p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GateDecision<F> {
    Executed(RequestRecord),
    Filtered { row: Vec<F>, p: F },
}

pub fn gated_execute<F: Scalar>(
    req: &GeneratedRequest,
    gate: &GateModel<'_, F>,
    transport: &dyn Transport,
    version: VersionId,
    env: Environment,
) -> Result<GateDecision<F>, GateError> {
    let (row, p) = gate.score(req, version, env);
    if p >= F::half() {
        Ok(GateDecision::Executed(execute_request(req, transport, version, env)?))
    } else {
        Ok(GateDecision::Filtered { row, p })
    }
}

/// True outcome of filtered requests, known only when a shadow service
/// replays them.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ShadowCounts {
    pub filtered_success: u64,
    pub filtered_failure: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct FilterStats {
    pub total_generated: u64,
    pub predicted_success: u64,
    pub predicted_failure: u64,
    pub executed_but_failed: u64,
    pub executed: StatusTally,
    pub shadow: Option<ShadowCounts>,
    /// Rule hits caused by this campaign's executed requests.
    pub hits: CounterSnapshot,
}

pub const COST_TABLE_HEADER: [&str; 9] = [
    "Total Req.",
    "Pred. Success",
    "Pred. Failure",
    "Pred. Succ (F)",
    "Accuracy",
    "Precision",
    "Recall",
    "F1",
    "Cost Reduction",
];

pub fn cost_reduction(total_generated: u64, executed: u64) -> Result<f64, GateError> {
    if total_generated == 0 {
        return Err(GateError::ZeroTotal);
    }
    Ok((total_generated - executed) as f64 / total_generated as f64 * 100.0)
}

pub fn fmt_pct(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{:.2}", x * 100.0))
}

impl FilterStats {
    /// Without a shadow every filtered request counts as a true negative.
    pub fn confusion(&self) -> ConfusionCounts {
        let shadow = self.shadow.unwrap_or(ShadowCounts {
            filtered_success: 0,
            filtered_failure: self.predicted_failure,
        });
        ConfusionCounts::new(
            self.predicted_success - self.executed_but_failed,
            self.executed_but_failed,
            shadow.filtered_failure,
            shadow.filtered_success,
        )
    }

    pub fn cost_reduction(&self) -> Result<f64, GateError> {
        cost_reduction(self.total_generated, self.predicted_success)
    }

    pub fn is_consistent(&self) -> bool {
        self.total_generated == self.predicted_success + self.predicted_failure
            && self.executed_but_failed <= self.predicted_success
            && self.executed.total() as u64 == self.predicted_success
    }

    /// Values in cost table column order.
    pub fn cost_row(&self) -> [String; 9] {
        let c = self.confusion();
        [
            self.total_generated.to_string(),
            self.predicted_success.to_string(),
            self.predicted_failure.to_string(),
            self.executed_but_failed.to_string(),
            fmt_pct(c.accuracy()),
            fmt_pct(c.precision()),
            fmt_pct(c.recall()),
            fmt_pct(c.f1()),
            self.cost_reduction().map_or_else(|_| "NA".into(), |v| format!("{v:.2}")),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct FilteredEntry {
    pub request_id: u64,
    pub p: f64,
}

#[derive(Debug, Clone, Default)]
pub struct CampaignOutcome {
    pub stats: FilterStats,
    pub executed: Vec<RequestRecord>,
    pub filtered: Vec<FilteredEntry>,
}

pub struct CampaignSetup<'a> {
    pub generator: &'a RequestGenerator,
    pub transport: &'a dyn Transport,
    /// Separate service instance used to learn what filtered requests would
    /// have returned. Never the measured one.
    pub shadow: Option<&'a dyn Transport>,
    pub version: VersionId,
    pub environment: Environment,
}

/// Runs one campaign. With `gate = None` every request is executed.
pub fn run_campaign<F: Scalar>(
    setup: &CampaignSetup<'_>,
    gate: Option<&GateModel<'_, F>>,
    mut log: Option<&mut dyn Write>,
) -> Result<CampaignOutcome, GateError> {
    let before = setup.transport.counters()?;
    let mut out = CampaignOutcome::default();
    let mut shadow_counts = setup.shadow.map(|_| ShadowCounts::default());
    for req in setup.generator.requests() {
        out.stats.total_generated += 1;
        let decision = match gate {
            Some(g) => gated_execute(&req, g, setup.transport, setup.version, setup.environment)?,
            None => GateDecision::Executed(execute_request(&req, setup.transport, setup.version, setup.environment)?),
        };
        match decision {
            GateDecision::Executed(record) => {
                out.stats.predicted_success += 1;
                out.stats.executed.add(record.status_code);
                if record.status_code != STATUS_OK {
                    out.stats.executed_but_failed += 1;
                }
                if let Some(w) = log.as_deref_mut() {
                    serde_json::to_writer(&mut *w, &record).map_err(std::io::Error::from)?;
                    w.write_all(b"\n")?;
                }
                out.executed.push(record);
            }
            GateDecision::Filtered { p, .. } => {
                out.stats.predicted_failure += 1;
                if let (Some(shadow), Some(counts)) = (setup.shadow, shadow_counts.as_mut()) {
                    if shadow.send(&req.to_api_request())?.is_success() {
                        counts.filtered_success += 1;
                    } else {
                        counts.filtered_failure += 1;
                    }
                }
                out.filtered.push(FilteredEntry {
                    request_id: req.index,
                    p: p.as_f64(),
                });
            }
        }
    }
    if let Some(w) = log {
        w.flush()?;
    }
    out.stats.shadow = shadow_counts;
    out.stats.hits = setup.transport.counters()?.since(&before);
    Ok(out)
}

pub fn run_filtered_campaign<F: Scalar>(
    setup: &CampaignSetup<'_>,
    gate: &GateModel<'_, F>,
) -> Result<CampaignOutcome, GateError> {
    run_campaign(setup, Some(gate), None)
}

pub fn run_unfiltered_campaign(setup: &CampaignSetup<'_>) -> Result<CampaignOutcome, GateError> {
    run_campaign::<f64>(setup, None, None)
}
