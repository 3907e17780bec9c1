//! End-to-end steps shared by the CLI and the acceptance suite.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{
    evaluate, Baseline, BaselineKind, BaselineParams, ClassifierError, Evaluation, ForestHyperparams, RandomForest,
};
use crate::features::{build_features, refine, select_features, split, FeatureError, FeatureMatrix, FeatureSchema};
use crate::generator::{run_collection_to, ApiSchema, CollectError, GeneratorConfig, RequestGenerator, StatusTally};
use crate::registry::{RegistryService, ServiceConfig};
use crate::rules::Catalog;
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum WorkflowError {
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Collect(#[from] CollectError),
    #[error("generator config: {0}")]
    Config(String),
}

/// Runs a collection against a fresh in-process service and returns the raw
/// JSON-lines log.
pub fn collect_in_memory(
    catalog: &Catalog,
    service: ServiceConfig,
    generator: GeneratorConfig,
) -> Result<(Vec<u8>, StatusTally), WorkflowError> {
    let gen = RequestGenerator::new(ApiSchema::default(), generator, &service.auth_token)
        .map_err(|e| WorkflowError::Config(e.to_string()))?;
    let (version, env) = (service.version_id, service.environment);
    let svc = RegistryService::from_catalog(service, catalog);
    let mut log = Vec::new();
    let tally = run_collection_to(&gen, &svc, version, env, &mut log)?;
    Ok((log, tally))
}

/// Raw log to encoded matrix, fitting a fresh schema.
pub fn prepare<F: Scalar>(raw: &[u8]) -> Result<(FeatureMatrix<F>, FeatureSchema, usize), WorkflowError> {
    let refined = refine(raw).map_err(FeatureError::Io)?;
    if refined.skipped > 0 {
        log::warn!("skipped {} malformed log lines", refined.skipped);
    }
    let (m, s) = build_features(&refined.records, None);
    Ok((m, s, refined.skipped))
}

/// Keeps the columns of `matrix` (encoded with `from`) named in `to`.
pub fn project<F: Scalar>(
    matrix: &FeatureMatrix<F>,
    from: &FeatureSchema,
    to: &FeatureSchema,
) -> Result<FeatureMatrix<F>, FeatureError> {
    let names = from.names();
    let keep = to
        .names()
        .iter()
        .map(|n| {
            names
                .iter()
                .position(|m| m == n)
                .ok_or_else(|| FeatureError::UnknownFeature(n.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(matrix.select_columns(&keep))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct TrainSettings {
    pub hyperparams: ForestHyperparams,
    pub seed: u64,
    pub split_seed: u64,
    pub split_ratio: f64,
    /// Iteratively drop zero-importance features before the final fit.
    pub select: bool,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            hyperparams: ForestHyperparams::default(),
            seed: 0,
            split_seed: 0,
            split_ratio: 0.8,
            select: true,
        }
    }
}

pub struct Trained<F> {
    pub forest: RandomForest<F>,
    pub schema: FeatureSchema,
    pub train: FeatureMatrix<F>,
    pub test: FeatureMatrix<F>,
    pub dropped: Vec<String>,
}

/// Split, optionally select features on the training part, then fit.
pub fn train_model<F: Scalar>(
    matrix: &FeatureMatrix<F>,
    schema: &FeatureSchema,
    settings: &TrainSettings,
) -> Result<Trained<F>, WorkflowError> {
    let (train, test) = split(matrix, settings.split_ratio, settings.split_seed)?;
    let (train, reduced) = if settings.select {
        let mut fit_error = None;
        let (t, s) = select_features(train, schema.clone(), |m| {
            match RandomForest::fit(m, settings.hyperparams, settings.seed, "") {
                Ok(f) => f.feature_importances(),
                Err(e) => {
                    fit_error = Some(e);
                    vec![F::one(); m.n_cols]
                }
            }
        })?;
        if let Some(e) = fit_error {
            return Err(e.into());
        }
        (t, s)
    } else {
        (train, schema.clone())
    };
    let test = project(&test, schema, &reduced)?;
    let dropped = schema
        .names()
        .into_iter()
        .filter(|n| !reduced.names().contains(n))
        .map(str::to_string)
        .collect();
    let forest = RandomForest::fit(&train, settings.hyperparams, settings.seed, &reduced.fingerprint())?;
    Ok(Trained {
        forest,
        schema: reduced,
        train,
        test,
        dropped,
    })
}

/// Forest plus the three baselines, all evaluated on the same test split.
pub fn compare_models<F: Scalar>(
    trained: &Trained<F>,
    params: &BaselineParams,
) -> Result<Vec<(String, Evaluation)>, WorkflowError> {
    let mut out = vec![("random-forest".to_string(), evaluate(&trained.forest, &trained.test))];
    for kind in BaselineKind::ALL {
        let model = Baseline::fit(kind, &trained.train, params)?;
        out.push((kind.to_string(), evaluate(&model, &trained.test)));
    }
    Ok(out)
}
