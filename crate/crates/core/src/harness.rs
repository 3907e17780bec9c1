//! Factorial campaign runner, rule-coverage accounting and report rendering.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::Evaluation;
use crate::gate::{fmt_pct, run_campaign, CampaignSetup, FilterStats, GateModel, ShadowCounts, COST_TABLE_HEADER};
use crate::generator::{mix_seed, ApiSchema, GeneratorConfig, RequestGenerator, StatusTally};
use crate::registry::{CounterSnapshot, RegistryService, ServiceConfig, Transport};
use crate::rules::{Catalog, Environment, VersionId};
use crate::scalar::Scalar;
use crate::stats::{compare, pearson, StatResult};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("no rule hits recorded")]
    ZeroHits,
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error("result store: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Approach {
    Filtered,
    Unfiltered,
}

impl Approach {
    pub const ALL: [Approach; 2] = [Approach::Filtered, Approach::Unfiltered];
}

impl fmt::Display for Approach {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Approach::Filtered => "filtered",
            Approach::Unfiltered => "unfiltered",
        })
    }
}

impl FromStr for Approach {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "filtered" | "on" => Ok(Approach::Filtered),
            "unfiltered" | "off" => Ok(Approach::Unfiltered),
            other => Err(format!("unknown approach `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CoverageReport {
    pub total_hits: u64,
    pub applied: u64,
    pub not_applied: u64,
    /// Percentages.
    pub coverage_applied: f64,
    pub coverage_not_applied: f64,
}

pub fn coverage(applied: u64, not_applied: u64) -> Result<CoverageReport, HarnessError> {
    let total = applied + not_applied;
    if total == 0 {
        return Err(HarnessError::ZeroHits);
    }
    Ok(CoverageReport {
        total_hits: total,
        applied,
        not_applied,
        coverage_applied: applied as f64 / total as f64 * 100.0,
        coverage_not_applied: not_applied as f64 / total as f64 * 100.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct ExperimentConfig {
    pub versions: Vec<VersionId>,
    pub environments: Vec<Environment>,
    pub repetitions: usize,
    pub budget: usize,
    pub master_seed: u64,
    pub approaches: Vec<Approach>,
    /// Both approaches of a repetition replay the same request stream. Off by
    /// default: with a perfect-recall gate the filtered run then sees exactly
    /// the unfiltered run's rule hits and the comparison is vacuous.
    pub paired_seeds: bool,
    /// Replay filtered requests on a side service to count false negatives.
    pub shadow: bool,
    pub auth_token: String,
    /// Corruption mix; seed and budget are set per run.
    pub generator: GeneratorConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            versions: VersionId::all().collect(),
            environments: Environment::ALL.to_vec(),
            repetitions: 10,
            budget: 3_000,
            master_seed: 0,
            approaches: Approach::ALL.to_vec(),
            paired_seeds: false,
            shadow: true,
            auth_token: "harness-token".into(),
            generator: GeneratorConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// 30 repetitions as in a full-scale study.
    pub fn full_scale() -> Self {
        Self {
            repetitions: 30,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.into()));
        if self.repetitions < 1 {
            return bad("repetitions must be >= 1");
        }
        if self.budget < 1 {
            return bad("budget must be >= 1");
        }
        if self.versions.is_empty() || self.environments.is_empty() || self.approaches.is_empty() {
            return bad("versions, environments and approaches must be non-empty");
        }
        self.generator.validate().map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn run_seed(&self, version: VersionId, env: Environment, repetition: usize, approach: Approach) -> u64 {
        let env_idx = Environment::ALL.iter().position(|e| *e == env).expect("known env") as u64;
        let s = mix_seed(self.master_seed, u64::from(version.number()));
        let s = mix_seed(s, env_idx);
        let s = mix_seed(s, repetition as u64);
        if self.paired_seeds {
            s
        } else {
            mix_seed(s, approach as u64 + 1)
        }
    }

    pub fn run_count(&self) -> usize {
        self.versions.len() * self.environments.len() * self.repetitions * self.approaches.len()
    }
}

/// One campaign in the result store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunRow {
    pub version: VersionId,
    pub environment: Environment,
    pub approach: Approach,
    pub repetition: usize,
    pub seed: u64,
    pub total_generated: u64,
    pub predicted_success: u64,
    pub predicted_failure: u64,
    pub executed_but_failed: u64,
    pub status_200: u64,
    pub status_302: u64,
    pub status_500: u64,
    pub status_other: u64,
    pub shadow_filtered_success: Option<u64>,
    pub shadow_filtered_failure: Option<u64>,
    pub total_hits: u64,
    pub applied: u64,
    pub not_applied: u64,
    pub coverage_applied: Option<f64>,
    pub coverage_not_applied: Option<f64>,
    pub error: Option<String>,
}

impl RunRow {
    fn new(version: VersionId, environment: Environment, approach: Approach, repetition: usize, seed: u64) -> Self {
        Self {
            version,
            environment,
            approach,
            repetition,
            seed,
            total_generated: 0,
            predicted_success: 0,
            predicted_failure: 0,
            executed_but_failed: 0,
            status_200: 0,
            status_302: 0,
            status_500: 0,
            status_other: 0,
            shadow_filtered_success: None,
            shadow_filtered_failure: None,
            total_hits: 0,
            applied: 0,
            not_applied: 0,
            coverage_applied: None,
            coverage_not_applied: None,
            error: None,
        }
    }

    fn fill(&mut self, s: &FilterStats) {
        self.total_generated = s.total_generated;
        self.predicted_success = s.predicted_success;
        self.predicted_failure = s.predicted_failure;
        self.executed_but_failed = s.executed_but_failed;
        self.status_200 = s.executed.ok as u64;
        self.status_302 = s.executed.redirect as u64;
        self.status_500 = s.executed.server_error as u64;
        self.status_other = s.executed.other as u64;
        self.shadow_filtered_success = s.shadow.map(|c| c.filtered_success);
        self.shadow_filtered_failure = s.shadow.map(|c| c.filtered_failure);
        self.total_hits = s.hits.total_hits;
        self.applied = s.hits.applied;
        self.not_applied = s.hits.not_applied;
        if let Ok(c) = coverage(s.hits.applied, s.hits.not_applied) {
            self.coverage_applied = Some(c.coverage_applied);
            self.coverage_not_applied = Some(c.coverage_not_applied);
        }
    }

    pub fn filter_stats(&self) -> FilterStats {
        FilterStats {
            total_generated: self.total_generated,
            predicted_success: self.predicted_success,
            predicted_failure: self.predicted_failure,
            executed_but_failed: self.executed_but_failed,
            executed: StatusTally {
                ok: self.status_200 as usize,
                redirect: self.status_302 as usize,
                server_error: self.status_500 as usize,
                other: self.status_other as usize,
            },
            shadow: self
                .shadow_filtered_success
                .zip(self.shadow_filtered_failure)
                .map(|(s, f)| ShadowCounts {
                    filtered_success: s,
                    filtered_failure: f,
                }),
            hits: CounterSnapshot {
                total_hits: self.total_hits,
                applied: self.applied,
                not_applied: self.not_applied,
            },
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultStore {
    pub rows: Vec<RunRow>,
}

impl ResultStore {
    pub fn write_csv(&self, out: impl std::io::Write) -> Result<(), HarnessError> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(input: impl std::io::Read) -> Result<Self, HarnessError> {
        let mut r = csv::Reader::from_reader(input);
        let rows = r.deserialize().collect::<Result<Vec<RunRow>, _>>()?;
        Ok(Self { rows })
    }

    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    /// Rows of one cell and approach, in repetition order, without failed runs.
    pub fn cell(&self, version: VersionId, env: Environment, approach: Approach) -> Vec<&RunRow> {
        self.rows
            .iter()
            .filter(|r| r.version == version && r.environment == env && r.approach == approach && r.error.is_none())
            .collect()
    }

    fn cells(&self) -> Vec<(Environment, VersionId)> {
        let mut keys: Vec<(Environment, VersionId)> = self.rows.iter().map(|r| (r.environment, r.version)).collect();
        keys.sort_by_key(|(e, v)| (Environment::ALL.iter().position(|x| x == e), *v));
        keys.dedup();
        keys
    }
}

/// Runs every (version, environment, repetition, approach) campaign against
/// its own fresh service. `gate` is required when the filtered approach is
/// configured.
pub fn run_experiment<F: Scalar>(
    config: &ExperimentConfig,
    catalog: &Catalog,
    gate: Option<&GateModel<'_, F>>,
) -> Result<ResultStore, HarnessError> {
    config.validate()?;
    if config.approaches.contains(&Approach::Filtered) && gate.is_none() {
        return Err(HarnessError::Config("filtered approach needs a model".into()));
    }
    let mut jobs = Vec::with_capacity(config.run_count());
    for &v in &config.versions {
        for &e in &config.environments {
            for rep in 0..config.repetitions {
                for &a in &config.approaches {
                    jobs.push((v, e, rep, a));
                }
            }
        }
    }
    let rows = jobs
        .into_par_iter()
        .map(|(version, env, rep, approach)| {
            let seed = config.run_seed(version, env, rep, approach);
            let mut row = RunRow::new(version, env, approach, rep, seed);
            match run_one(config, catalog, gate, version, env, approach, seed) {
                Ok(stats) => row.fill(&stats),
                Err(e) => {
                    log::warn!("{version}/{env} rep {rep} {approach}: {e}");
                    row.error = Some(e);
                }
            }
            row
        })
        .collect();
    Ok(ResultStore { rows })
}

fn run_one<F: Scalar>(
    config: &ExperimentConfig,
    catalog: &Catalog,
    gate: Option<&GateModel<'_, F>>,
    version: VersionId,
    env: Environment,
    approach: Approach,
    seed: u64,
) -> Result<FilterStats, String> {
    let service_config = ServiceConfig {
        version_id: version,
        environment: env,
        auth_token: config.auth_token.clone(),
    };
    let service = RegistryService::from_catalog(service_config.clone(), catalog);
    let shadow = (config.shadow && approach == Approach::Filtered)
        .then(|| RegistryService::from_catalog(service_config, catalog));
    let generator = RequestGenerator::new(
        ApiSchema::default(),
        GeneratorConfig {
            seed,
            budget: config.budget,
            ..config.generator.clone()
        },
        &config.auth_token,
    )
    .map_err(|e| e.to_string())?;
    let setup = CampaignSetup {
        generator: &generator,
        transport: &service,
        shadow: shadow.as_ref().map(|s| s as &dyn Transport),
        version,
        environment: env,
    };
    let gate = match approach {
        Approach::Filtered => gate,
        Approach::Unfiltered => None,
    };
    run_campaign(&setup, gate, None).map(|o| o.stats).map_err(|e| e.to_string())
}

fn sum_stats<'a>(rows: impl IntoIterator<Item = &'a RunRow>) -> FilterStats {
    let mut acc = FilterStats::default();
    for (i, r) in rows.into_iter().enumerate() {
        let s = r.filter_stats();
        acc.total_generated += s.total_generated;
        acc.predicted_success += s.predicted_success;
        acc.predicted_failure += s.predicted_failure;
        acc.executed_but_failed += s.executed_but_failed;
        acc.executed.ok += s.executed.ok;
        acc.executed.redirect += s.executed.redirect;
        acc.executed.server_error += s.executed.server_error;
        acc.executed.other += s.executed.other;
        // shadow counts only survive if every run had them
        acc.shadow = match (i, acc.shadow, s.shadow) {
            (0, _, b) => b,
            (_, Some(a), Some(b)) => Some(ShadowCounts {
                filtered_success: a.filtered_success + b.filtered_success,
                filtered_failure: a.filtered_failure + b.filtered_failure,
            }),
            _ => None,
        };
        acc.hits.total_hits += s.hits.total_hits;
        acc.hits.applied += s.hits.applied;
        acc.hits.not_applied += s.hits.not_applied;
    }
    acc
}

fn csv_line(fields: &[String]) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(vec![]);
    w.write_record(fields).expect("in-memory write");
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8")
}

fn fmt2(v: f64) -> String {
    format!("{v:.2}")
}

/// Filtered-approach rows summed over repetitions, cost table column order.
pub fn cost_table_csv(store: &ResultStore) -> String {
    let mut header = vec!["Env".to_string(), "Version".to_string()];
    header.extend(COST_TABLE_HEADER.iter().map(|s| s.to_string()));
    let mut out = csv_line(&header);
    for (env, version) in store.cells() {
        let rows = store.cell(version, env, Approach::Filtered);
        if rows.is_empty() {
            log::warn!("no filtered runs for {env}/{version}; row omitted");
            continue;
        }
        let mut line = vec![env.to_string(), version.to_string()];
        line.extend(sum_stats(rows).cost_row());
        out.push_str(&csv_line(&line));
    }
    out
}

/// Both approaches side by side, counts summed over repetitions.
pub fn coverage_table_csv(store: &ResultStore) -> String {
    let groups = ["Requests", "Rule Hits", "Applied", "Not Applied", "Coverage (Applied)", "Coverage (NotApplied)"];
    let mut header = vec!["Env".to_string(), "Version".to_string()];
    for g in groups {
        for a in Approach::ALL {
            header.push(format!("{g} ({a})"));
        }
    }
    let mut out = csv_line(&header);
    for (env, version) in store.cells() {
        let per: Vec<FilterStats> = Approach::ALL
            .iter()
            .map(|&a| sum_stats(store.cell(version, env, a)))
            .collect();
        let covs: Vec<Option<CoverageReport>> = per.iter().map(|s| coverage(s.hits.applied, s.hits.not_applied).ok()).collect();
        if covs.iter().any(Option::is_none) {
            log::warn!("missing coverage for {env}/{version}; row omitted");
            continue;
        }
        let covs: Vec<CoverageReport> = covs.into_iter().flatten().collect();
        let mut line = vec![env.to_string(), version.to_string()];
        line.extend(per.iter().map(|s| s.predicted_success.to_string()));
        line.extend(per.iter().map(|s| s.hits.total_hits.to_string()));
        line.extend(per.iter().map(|s| s.hits.applied.to_string()));
        line.extend(per.iter().map(|s| s.hits.not_applied.to_string()));
        line.extend(covs.iter().map(|c| fmt2(c.coverage_applied)));
        line.extend(covs.iter().map(|c| fmt2(c.coverage_not_applied)));
        out.push_str(&csv_line(&line));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CellComparison {
    pub environment: Environment,
    pub version: VersionId,
    pub filtered: Vec<f64>,
    pub unfiltered: Vec<f64>,
    pub result: StatResult,
}

/// Mann-Whitney and A12 on per-repetition applied coverage, filtered as the
/// first sample.
pub fn compare_cells(store: &ResultStore) -> Vec<CellComparison> {
    let mut out = Vec::new();
    for (env, version) in store.cells() {
        let cov = |a| -> Vec<f64> {
            store
                .cell(version, env, a)
                .iter()
                .filter_map(|r| r.coverage_applied)
                .collect()
        };
        let (f, u) = (cov(Approach::Filtered), cov(Approach::Unfiltered));
        match compare(&f, &u) {
            Ok(result) => out.push(CellComparison {
                environment: env,
                version,
                filtered: f,
                unfiltered: u,
                result,
            }),
            Err(e) => log::warn!("{env}/{version}: no comparison ({e})"),
        }
    }
    out
}

pub fn stats_summary_csv(store: &ResultStore) -> String {
    let header = [
        "Env",
        "Version",
        "Runs (filtered)",
        "Runs (unfiltered)",
        "Mean Coverage (filtered)",
        "Mean Coverage (unfiltered)",
        "U",
        "p",
        "A12",
    ];
    let mut out = csv_line(&header.map(String::from));
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    for c in compare_cells(store) {
        out.push_str(&csv_line(&[
            c.environment.to_string(),
            c.version.to_string(),
            c.filtered.len().to_string(),
            c.unfiltered.len().to_string(),
            format!("{:.4}", mean(&c.filtered)),
            format!("{:.4}", mean(&c.unfiltered)),
            format!("{}", c.result.mann_whitney_u),
            format!("{:.6}", c.result.p_value),
            format!("{:.4}", c.result.a12),
        ]));
    }
    out
}

/// Pearson r between executed requests and rule hits across an approach's runs.
pub fn hits_request_correlation(store: &ResultStore, approach: Approach) -> Option<f64> {
    let rows: Vec<&RunRow> = store.rows.iter().filter(|r| r.approach == approach && r.error.is_none()).collect();
    let xs: Vec<f64> = rows.iter().map(|r| r.predicted_success as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.total_hits as f64).collect();
    pearson(&xs, &ys).ok()
}

pub fn correlation_csv(store: &ResultStore) -> String {
    let mut out = csv_line(&["Approach".into(), "Pearson r (requests, rule hits)".into()]);
    for a in Approach::ALL {
        let r = hits_request_correlation(store, a).map_or_else(|| "NA".into(), |r| format!("{r:.4}"));
        out.push_str(&csv_line(&[a.to_string(), r]));
    }
    out
}

/// One row per model: accuracy, precision, recall, F1 and AUC as percentages.
pub fn model_comparison_csv(results: &[(String, Evaluation)]) -> String {
    let mut out = csv_line(&["Model", "Accuracy", "Precision", "Recall", "F1", "AUC"].map(String::from));
    for (name, e) in results {
        out.push_str(&csv_line(&[
            name.clone(),
            fmt_pct(e.accuracy),
            fmt_pct(e.precision),
            fmt_pct(e.recall),
            fmt_pct(e.f1),
            fmt_pct(e.auc()),
        ]));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reports {
    pub cost_table: String,
    pub coverage_table: String,
    pub stats_summary: String,
    pub correlation: String,
}

impl Reports {
    pub fn write_dir(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        let files: BTreeMap<&str, &str> = [
            ("cost_reduction.csv", self.cost_table.as_str()),
            ("rule_hits.csv", self.coverage_table.as_str()),
            ("stats_summary.csv", self.stats_summary.as_str()),
            ("correlation.csv", self.correlation.as_str()),
        ]
        .into();
        for (name, body) in files {
            std::fs::write(dir.join(name), body)?;
        }
        Ok(())
    }
}

pub fn render_reports(store: &ResultStore) -> Reports {
    Reports {
        cost_table: cost_table_csv(store),
        coverage_table: coverage_table_csv(store),
        stats_summary: stats_summary_csv(store),
        correlation: correlation_csv(store),
    }
}
