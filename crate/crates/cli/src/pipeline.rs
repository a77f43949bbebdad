//! Pipeline stages. Each stage reads its inputs from the output directory,
//! so stages can be run one at a time or all together.

use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use rashomon_core::attribution::{mean_saliency, FeatureRanking};
use rashomon_core::checker::{check_threshold, max_reach_mdp, TablePolicy, Verdict, DEFAULT_TOLERANCE};
use rashomon_core::cloning::{extract_expert_dataset, train_from_seed, ExpertDataset};
use rashomon_core::explicit::{mdp_fingerprint, read_explicit, write_mdp, ExplicitModel};
use rashomon_core::model::ExplicitMdp;
use rashomon_core::nn::MlpPolicy;
use rashomon_core::prop::{PropertyQuery, QueryMode};
use rashomon_core::rashomon::{build_rashomon_set, partition_classes, shift_eval, Policy, Verifier};
use rashomon_core::taxi::build_taxi;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::CliError;

pub const MODEL_FILE: &str = "model.txt";
pub const MODEL_STATS_FILE: &str = "model_stats.json";
pub const EXPERT_FILE: &str = "expert_policy.txt";
pub const DATASET_FILE: &str = "dataset.csv";
pub const SYNTHESIS_FILE: &str = "synthesis.json";
pub const POLICY_DIR: &str = "policies";
pub const TRAINING_FILE: &str = "training.json";
pub const VERIFY_CSV: &str = "verify.csv";
pub const VERIFY_JSON: &str = "verify.json";
pub const ATTRIBUTION_CSV: &str = "attribution.csv";
pub const ATTRIBUTION_JSON: &str = "attribution.json";
pub const RASHOMON_CSV: &str = "rashomon.csv";
pub const RASHOMON_JSON: &str = "rashomon.json";
pub const SHIFT_CSV: &str = "shift.csv";
pub const SHIFT_JSON: &str = "shift.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_FILE: &str = "config.txt";

/// Outputs and timing of one finished stage.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StageReport {
    pub stage: String,
    /// Paths relative to the output directory.
    pub outputs: Vec<String>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunManifest {
    pub version: String,
    pub config_checksum: String,
    pub config: String,
    pub stages: Vec<StageReport>,
    pub total_seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ModelStats {
    pub config_checksum: String,
    pub states: usize,
    pub transitions: usize,
    pub branching_choices: usize,
    pub actions: Vec<String>,
    pub fingerprint: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SynthesisReport {
    pub config_checksum: String,
    pub property: String,
    pub max_value: f64,
    pub iterations: usize,
    pub residual: f64,
    pub dataset_size: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TrainingRecord {
    pub policy_id: String,
    pub seed: u64,
    pub epochs_run: usize,
    pub initial_accuracy: f64,
    pub final_accuracy: f64,
    pub final_loss: Option<f64>,
    pub checksum: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TrainingReport {
    pub config_checksum: String,
    pub policies: Vec<TrainingRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ClassRecord {
    pub class_id: usize,
    pub size: usize,
    pub mc_value: f64,
    /// Set for threshold properties.
    pub verdict: Option<String>,
    pub induced_states: usize,
    pub members: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct VerifyRecord {
    pub policy_id: String,
    pub seed: u64,
    pub class_id: usize,
    pub mc_value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct VerifyReport {
    pub config_checksum: String,
    pub property: String,
    pub classes: Vec<ClassRecord>,
    pub policies: Vec<VerifyRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AttributionRecord {
    pub policy_id: String,
    pub seed: u64,
    pub class_id: usize,
    pub mc_value: f64,
    pub ranking: Vec<usize>,
    pub mean_saliency: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AttributionReport {
    pub config_checksum: String,
    pub features: Vec<String>,
    pub policies: Vec<AttributionRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RankingGroup {
    pub representative: String,
    pub members: Vec<String>,
    pub ranking: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RashomonReport {
    pub config_checksum: String,
    pub class_id: usize,
    pub class_size: usize,
    pub mc_value: f64,
    pub distinct_rankings: usize,
    pub groups: Vec<RankingGroup>,
    /// Seeds of the Rashomon set, ascending.
    pub members: Vec<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ShiftJson {
    pub config_checksum: String,
    pub jobs: Vec<i64>,
    pub member_ids: Vec<String>,
    pub member_values: Vec<Vec<f64>>,
    pub member_mean: Vec<f64>,
    pub ensemble: Vec<f64>,
    pub permissive_max: Vec<f64>,
    pub permissive_min: Vec<f64>,
    pub optimal: Vec<f64>,
    pub full_states: Vec<usize>,
    pub full_transitions: Vec<usize>,
    pub permissive_states: Vec<usize>,
    pub permissive_transitions: Vec<usize>,
    pub members_diverge: Vec<bool>,
}

pub fn policy_id(seed: u64) -> String {
    format!("pi_{seed}")
}

fn policy_path(seed: u64) -> String {
    format!("{POLICY_DIR}/policy_{seed}.mlp")
}

/// Fixed six decimals keeps reports stable and readable; sidecars carry
/// full precision.
fn fmt_value(v: f64) -> String {
    format!("{v:.6}")
}

fn out_path(cfg: &ExperimentConfig, name: &str) -> PathBuf {
    cfg.output_dir.join(name)
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

fn require(cfg: &ExperimentConfig, name: &str, stage: &'static str) -> Result<PathBuf, CliError> {
    let path = out_path(cfg, name);
    if path.is_file() {
        Ok(path)
    } else {
        Err(CliError::MissingArtifact { path, stage })
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(cfg: &ExperimentConfig, name: &str, stage: &'static str) -> Result<T, CliError> {
    let path = require(cfg, name, stage)?;
    serde_json::from_str(&read_text(&path)?).map_err(|e| CliError::Artifact { path, message: e.to_string() })
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>, CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    Ok(csv::Writer::from_path(path)?)
}

pub fn worker_pool(cfg: &ExperimentConfig) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| CliError::Config(format!("worker pool: {e}")))
}

fn load_model(cfg: &ExperimentConfig) -> Result<ExplicitMdp, CliError> {
    let path = require(cfg, MODEL_FILE, "build")?;
    let file = File::open(&path).map_err(|e| CliError::io(&path, e))?;
    match read_explicit(BufReader::new(file))? {
        ExplicitModel::Mdp(m) => Ok(m),
        ExplicitModel::Dtmc(_) => Err(CliError::Artifact { path, message: "expected an MDP".into() }),
    }
}

fn load_expert(cfg: &ExperimentConfig, m: &ExplicitMdp) -> Result<TablePolicy, CliError> {
    let path = require(cfg, EXPERT_FILE, "synthesize")?;
    let text = read_text(&path)?;
    let malformed = |message: String| CliError::Artifact { path: path.clone(), message };
    let mut actions = vec![usize::MAX; m.num_states()];
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (Some(s), Some(a), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(malformed(format!("line {}: expected `state action`", n + 1)));
        };
        let s: usize = s.parse().map_err(|_| malformed(format!("line {}: bad state index", n + 1)))?;
        let a = m
            .actions()
            .iter()
            .position(|x| x == a)
            .ok_or_else(|| malformed(format!("line {}: unknown action {a:?}", n + 1)))?;
        if s >= actions.len() {
            return Err(malformed(format!("line {}: state {s} out of range", n + 1)));
        }
        actions[s] = a;
    }
    TablePolicy::for_mdp(m, actions).map_err(malformed)
}

fn load_dataset(cfg: &ExperimentConfig) -> Result<(ExplicitMdp, ExpertDataset), CliError> {
    let m = load_model(cfg)?;
    let expert = load_expert(cfg, &m)?;
    let data = extract_expert_dataset(&m, &expert)?;
    Ok((m, data))
}

fn load_policy(cfg: &ExperimentConfig, seed: u64, m: &ExplicitMdp) -> Result<MlpPolicy, CliError> {
    let path = require(cfg, &policy_path(seed), "train")?;
    let policy = MlpPolicy::from_text(&read_text(&path)?)?;
    if !policy.matches_schema(m.schema()) || policy.num_actions() != m.actions().len() {
        return Err(CliError::Artifact { path, message: "policy does not match the model schema".into() });
    }
    Ok(policy)
}

fn load_policies(cfg: &ExperimentConfig, seeds: &[u64], m: &ExplicitMdp) -> Result<Vec<MlpPolicy>, CliError> {
    seeds.iter().map(|&s| load_policy(cfg, s, m)).collect()
}

fn timed<F>(stage: &str, f: F) -> Result<StageReport, CliError>
where
    F: FnOnce() -> Result<Vec<String>, CliError>,
{
    let start = Instant::now();
    let outputs = f()?;
    Ok(StageReport { stage: stage.to_string(), outputs, seconds: start.elapsed().as_secs_f64() })
}

pub fn cmd_build(cfg: &ExperimentConfig) -> Result<StageReport, CliError> {
    timed("build", || {
        let m = build_taxi(&cfg.taxi)?;
        let path = out_path(cfg, MODEL_FILE);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
        let mut writer = std::io::BufWriter::new(file);
        write_mdp(&m, &mut writer)?;
        drop(writer);
        let stats = ModelStats {
            config_checksum: cfg.checksum(),
            states: m.num_states(),
            transitions: m.num_transitions(),
            branching_choices: m.num_branching_choices(),
            actions: m.actions().to_vec(),
            fingerprint: mdp_fingerprint(&m),
        };
        write_json(&out_path(cfg, MODEL_STATS_FILE), &stats)?;
        Ok(vec![MODEL_FILE.into(), MODEL_STATS_FILE.into()])
    })
}

pub fn cmd_synthesize(cfg: &ExperimentConfig) -> Result<StageReport, CliError> {
    timed("synthesize", || {
        let m = load_model(cfg)?;
        let query = cfg.property()?;
        let (result, policy) = max_reach_mdp(&m, &query.target, DEFAULT_TOLERANCE)?;
        let mut text = format!("# expert policy for {query}, config {}\n# state action\n", cfg.checksum());
        for (s, &a) in policy.as_slice().iter().enumerate() {
            text.push_str(&format!("{s} {}\n", m.actions()[a]));
        }
        write_text(&out_path(cfg, EXPERT_FILE), &text)?;
        let data = extract_expert_dataset(&m, &policy)?;
        write_text(&out_path(cfg, DATASET_FILE), &data.to_csv())?;
        let report = SynthesisReport {
            config_checksum: cfg.checksum(),
            property: query.to_string(),
            max_value: result.initial_value,
            iterations: result.iterations,
            residual: result.residual,
            dataset_size: data.len(),
        };
        write_json(&out_path(cfg, SYNTHESIS_FILE), &report)?;
        Ok(vec![EXPERT_FILE.into(), DATASET_FILE.into(), SYNTHESIS_FILE.into()])
    })
}

pub fn cmd_train(cfg: &ExperimentConfig) -> Result<StageReport, CliError> {
    timed("train", || {
        let (_, data) = load_dataset(cfg)?;
        let pool = worker_pool(cfg)?;
        let trained = pool.install(|| {
            cfg.seeds
                .par_iter()
                .map(|&seed| train_from_seed(&data, &cfg.train_config(seed)).map(|r| (seed, r)))
                .collect::<Result<Vec<_>, _>>()
        })?;
        let mut outputs = Vec::new();
        let mut records = Vec::new();
        for (seed, (policy, report)) in trained {
            let rel = policy_path(seed);
            write_text(&out_path(cfg, &rel), &policy.to_text())?;
            outputs.push(rel);
            records.push(TrainingRecord {
                policy_id: policy_id(seed),
                seed,
                epochs_run: report.epochs_run,
                initial_accuracy: report.initial_accuracy,
                final_accuracy: report.final_accuracy,
                final_loss: report.epoch_losses.last().copied(),
                checksum: policy.checksum(),
            });
        }
        write_json(&out_path(cfg, TRAINING_FILE), &TrainingReport { config_checksum: cfg.checksum(), policies: records })?;
        outputs.push(TRAINING_FILE.into());
        Ok(outputs)
    })
}

fn verdict(query: &PropertyQuery, value: f64) -> Result<Option<String>, CliError> {
    match query.mode {
        QueryMode::Query => Ok(None),
        QueryMode::Threshold { .. } => {
            let v = check_threshold(query, value).map_err(|e| CliError::Config(e.to_string()))?;
            Ok(Some(match v {
                Verdict::Satisfied => "satisfied".into(),
                Verdict::Violated => "violated".into(),
            }))
        }
    }
}

/// Builds every policy's induced DTMC and groups equal chains. Writes the
/// class report.
pub fn cmd_verify(cfg: &ExperimentConfig) -> Result<StageReport, CliError> {
    timed("verify", || {
        let m = load_model(cfg)?;
        let policies = load_policies(cfg, &cfg.seeds, &m)?;
        let query = cfg.property()?;
        let verifier = Verifier::new(&m, &query.target)?.with_cap(cfg.taxi.state_cap);
        let ids: Vec<String> = cfg.seeds.iter().map(|&s| policy_id(s)).collect();
        let population: Vec<(String, &dyn Policy)> =
            ids.iter().cloned().zip(policies.iter().map(|p| p as &dyn Policy)).collect();
        let pool = worker_pool(cfg)?;
        let classes = pool.install(|| partition_classes(&verifier, &population))?;
        let class_of = classes.class_of();

        let mut class_records = Vec::new();
        for (k, c) in classes.classes.iter().enumerate() {
            class_records.push(ClassRecord {
                class_id: k + 1,
                size: c.members.len(),
                mc_value: c.value,
                verdict: verdict(&query, c.value)?,
                induced_states: c.representative.num_states(),
                members: c.members.iter().map(|&i| ids[i].clone()).collect(),
            });
        }
        let records: Vec<VerifyRecord> = cfg
            .seeds
            .iter()
            .enumerate()
            .map(|(i, &seed)| VerifyRecord {
                policy_id: ids[i].clone(),
                seed,
                class_id: class_of[i] + 1,
                mc_value: classes.classes[class_of[i]].value,
            })
            .collect();

        let mut w = csv_writer(&out_path(cfg, VERIFY_CSV))?;
        w.write_record(["policy_id", "class_id", "mc_value"])?;
        for r in &records {
            w.write_record([r.policy_id.clone(), r.class_id.to_string(), fmt_value(r.mc_value)])?;
        }
        w.flush().map_err(|e| CliError::io(out_path(cfg, VERIFY_CSV), e))?;
        let report = VerifyReport {
            config_checksum: cfg.checksum(),
            property: query.to_string(),
            classes: class_records,
            policies: records,
        };
        write_json(&out_path(cfg, VERIFY_JSON), &report)?;
        Ok(vec![VERIFY_CSV.into(), VERIFY_JSON.into()])
    })
}

/// Global saliency rankings of every verified policy, grouped by class.
pub fn cmd_attribute(cfg: &ExperimentConfig) -> Result<StageReport, CliError> {
    timed("attribute", || {
        let verified: VerifyReport = read_json(cfg, VERIFY_JSON, "verify")?;
        let (m, data) = load_dataset(cfg)?;
        let seeds: Vec<u64> = verified.policies.iter().map(|r| r.seed).collect();
        let policies = load_policies(cfg, &seeds, &m)?;
        let pool = worker_pool(cfg)?;
        let scores = pool.install(|| {
            policies
                .par_iter()
                .map(|p| mean_saliency(p, &data).map(|s| (FeatureRanking::from_scores(&s), s)))
                .collect::<Result<Vec<_>, _>>()
        })
        .map_err(rashomon_core::error::RashomonError::from)?;

        let mut records: Vec<AttributionRecord> = verified
            .policies
            .iter()
            .zip(scores)
            .map(|(r, (ranking, sal))| AttributionRecord {
                policy_id: r.policy_id.clone(),
                seed: r.seed,
                class_id: r.class_id,
                mc_value: r.mc_value,
                ranking: ranking.0,
                mean_saliency: sal,
            })
            .collect();
        // Stable: seed order is kept within a class.
        records.sort_by_key(|r| r.class_id);

        let features: Vec<String> = m.schema().names().to_vec();
        let mut w = csv_writer(&out_path(cfg, ATTRIBUTION_CSV))?;
        let mut header = vec!["policy_id".to_string()];
        header.extend(features.iter().cloned());
        header.push("mc_value".into());
        w.write_record(&header)?;
        for r in &records {
            let mut row = vec![r.policy_id.clone()];
            row.extend(r.ranking.iter().map(usize::to_string));
            row.push(fmt_value(r.mc_value));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| CliError::io(out_path(cfg, ATTRIBUTION_CSV), e))?;
        let report = AttributionReport { config_checksum: cfg.checksum(), features, policies: records };
        write_json(&out_path(cfg, ATTRIBUTION_JSON), &report)?;
        Ok(vec![ATTRIBUTION_CSV.into(), ATTRIBUTION_JSON.into()])
    })
}

/// Rashomon set of the largest equivalence class: one policy per distinct
/// ranking, the lowest seed of each.
pub fn cmd_rashomon(cfg: &ExperimentConfig) -> Result<StageReport, CliError> {
    timed("rashomon", || {
        let attributed: AttributionReport = read_json(cfg, ATTRIBUTION_JSON, "attribute")?;
        let verified: VerifyReport = read_json(cfg, VERIFY_JSON, "verify")?;
        let largest = verified.classes.first().ok_or_else(|| CliError::Artifact {
            path: out_path(cfg, VERIFY_JSON),
            message: "no equivalence classes".into(),
        })?;
        let members: Vec<&AttributionRecord> =
            attributed.policies.iter().filter(|r| r.class_id == largest.class_id).collect();
        let ranked: Vec<(u64, FeatureRanking)> =
            members.iter().map(|r| (r.seed, FeatureRanking(r.ranking.clone()))).collect();
        let set = build_rashomon_set(&ranked)?;

        let mut groups: Vec<RankingGroup> = Vec::new();
        for r in &members {
            match groups.iter_mut().find(|g| g.ranking == r.ranking) {
                Some(g) => g.members.push(r.policy_id.clone()),
                None => groups.push(RankingGroup {
                    representative: r.policy_id.clone(),
                    members: vec![r.policy_id.clone()],
                    ranking: r.ranking.clone(),
                }),
            }
        }
        for g in &mut groups {
            let lowest = members
                .iter()
                .filter(|r| g.members.contains(&r.policy_id))
                .map(|r| r.seed)
                .min()
                .expect("groups are nonempty");
            g.representative = policy_id(lowest);
        }

        let mut w = csv_writer(&out_path(cfg, RASHOMON_CSV))?;
        let mut header = vec!["policy_id".to_string(), "group_size".to_string()];
        header.extend(attributed.features.iter().cloned());
        header.push("mc_value".into());
        w.write_record(&header)?;
        for &seed in &set {
            let id = policy_id(seed);
            let g = groups.iter().find(|g| g.representative == id).expect("set members represent groups");
            let mut row = vec![id, g.members.len().to_string()];
            row.extend(g.ranking.iter().map(usize::to_string));
            row.push(fmt_value(largest.mc_value));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| CliError::io(out_path(cfg, RASHOMON_CSV), e))?;
        let report = RashomonReport {
            config_checksum: cfg.checksum(),
            class_id: largest.class_id,
            class_size: largest.size,
            mc_value: largest.mc_value,
            distinct_rankings: groups.len(),
            groups,
            members: set,
        };
        write_json(&out_path(cfg, RASHOMON_JSON), &report)?;
        Ok(vec![RASHOMON_CSV.into(), RASHOMON_JSON.into()])
    })
}

/// Evaluates the Rashomon set, its majority ensemble and its permissive
/// union on every job count of the shift range.
pub fn cmd_shift(cfg: &ExperimentConfig) -> Result<StageReport, CliError> {
    timed("shift", || {
        let set: RashomonReport = read_json(cfg, RASHOMON_JSON, "rashomon")?;
        let m = load_model(cfg)?;
        let policies = load_policies(cfg, &set.members, &m)?;
        drop(m);
        let members: Vec<(String, &MlpPolicy)> =
            set.members.iter().map(|&s| policy_id(s)).zip(policies.iter()).collect();
        let pool = worker_pool(cfg)?;
        let report = pool.install(|| shift_eval(&cfg.taxi, cfg.shift_jobs.clone(), &members))?;

        let mut w = csv_writer(&out_path(cfg, SHIFT_CSV))?;
        let mut header = vec!["row".to_string()];
        header.extend(report.jobs.iter().map(|j| format!("J={j}")));
        w.write_record(&header)?;
        let mut row = |label: &str, values: &[f64]| -> Result<(), CliError> {
            let mut r = vec![label.to_string()];
            r.extend(values.iter().map(|&v| fmt_value(v)));
            Ok(w.write_record(&r)?)
        };
        for (id, values) in report.member_ids.iter().zip(&report.member_values) {
            row(id, values)?;
        }
        row("member_mean", &report.member_mean)?;
        row("ensemble", &report.ensemble)?;
        row("permissive_max", &report.permissive_max)?;
        row("permissive_min", &report.permissive_min)?;
        row("optimal", &report.optimal)?;
        w.flush().map_err(|e| CliError::io(out_path(cfg, SHIFT_CSV), e))?;

        let json = ShiftJson {
            config_checksum: cfg.checksum(),
            jobs: report.jobs,
            member_ids: report.member_ids,
            member_values: report.member_values,
            member_mean: report.member_mean,
            ensemble: report.ensemble,
            permissive_max: report.permissive_max,
            permissive_min: report.permissive_min,
            optimal: report.optimal,
            full_states: report.full_states,
            full_transitions: report.full_transitions,
            permissive_states: report.permissive_states,
            permissive_transitions: report.permissive_transitions,
            members_diverge: report.members_diverge,
        };
        write_json(&out_path(cfg, SHIFT_JSON), &json)?;
        Ok(vec![SHIFT_CSV.into(), SHIFT_JSON.into()])
    })
}

/// Runs every stage in order and writes the run manifest. Attribution is
/// reported as part of the verify stage.
pub fn cmd_all(cfg: &ExperimentConfig) -> Result<RunManifest, CliError> {
    cfg.validate()?;
    let start = Instant::now();
    write_text(&out_path(cfg, CONFIG_FILE), &cfg.canonical())?;
    let mut stages = vec![cmd_build(cfg)?, cmd_synthesize(cfg)?, cmd_train(cfg)?];
    let mut verify = cmd_verify(cfg)?;
    let attribute = cmd_attribute(cfg)?;
    verify.outputs.extend(attribute.outputs);
    verify.seconds += attribute.seconds;
    stages.push(verify);
    stages.push(cmd_rashomon(cfg)?);
    stages.push(cmd_shift(cfg)?);
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_checksum: cfg.checksum(),
        config: CONFIG_FILE.into(),
        stages,
        total_seconds: start.elapsed().as_secs_f64(),
    };
    for stage in &manifest.stages {
        for f in &stage.outputs {
            if !out_path(cfg, f).is_file() {
                return Err(CliError::Artifact { path: out_path(cfg, f), message: "listed output was not written".into() });
            }
        }
    }
    write_json(&out_path(cfg, MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}
